use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DirectoryError;
use crate::acl::AgentId;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceDescription {
    pub provider: AgentId,
    pub service_type: String,
    pub service_name: String,
    #[serde(default)]
    pub properties: BTreeMap<String, String>,
}

impl ServiceDescription {
    pub fn new(provider: AgentId, service_type: impl Into<String>, service_name: impl Into<String>) -> Self {
        ServiceDescription {
            provider,
            service_type: service_type.into(),
            service_name: service_name.into(),
            properties: BTreeMap::new(),
        }
    }

    pub fn with_property(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.properties.insert(key.into(), value.into());
        self
    }

    pub fn matches(&self, service_type: &str, service_name: Option<&str>) -> bool {
        self.service_type == service_type && service_name.is_none_or(|n| n == self.service_name)
    }
}

type Key = (AgentId, String, String);

/// In-memory registry. Keys sort by provider canonical form first, which
/// gives search its ordering for free.
#[derive(Debug, Default, Clone)]
pub struct Registry {
    entries: BTreeMap<Key, ServiceDescription>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn register(&mut self, sd: ServiceDescription) -> Result<(), DirectoryError> {
        let key = (sd.provider.clone(), sd.service_type.clone(), sd.service_name.clone());
        match self.entries.get(&key) {
            Some(existing) if existing.properties != sd.properties => Err(DirectoryError::DuplicateRegistration(format!(
                "{} {}/{}",
                sd.provider, sd.service_type, sd.service_name
            ))),
            Some(_) => Ok(()),
            None => {
                self.entries.insert(key, sd);
                Ok(())
            }
        }
    }

    pub fn search(&self, service_type: &str, service_name: Option<&str>) -> Vec<ServiceDescription> {
        self.entries.values().filter(|sd| sd.matches(service_type, service_name)).cloned().collect()
    }

    pub fn deregister(&mut self, provider: &AgentId) -> usize {
        let before = self.entries.len();
        self.entries.retain(|(p, _, _), _| p != provider);
        before - self.entries.len()
    }

    pub fn providers(&self) -> Vec<AgentId> {
        let mut out: Vec<AgentId> = self.entries.keys().map(|(p, _, _)| p.clone()).collect();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acl::parse_aid;

    fn sd(provider: &str, name: &str) -> ServiceDescription {
        ServiceDescription::new(parse_aid(provider).unwrap(), "process-monitoring", name)
    }

    #[test]
    fn three_agents_three_entries() {
        let mut reg = Registry::new();
        reg.register(sd("WinderOpcAgent1@SCADA", "winder")).unwrap();
        reg.register(sd("WrappingOpcAgent1@SCADA", "wrapping")).unwrap();
        reg.register(sd("SalvageOpcAgent1@SCADA", "salvage")).unwrap();
        assert_eq!(reg.len(), 3);
        let all = reg.search("process-monitoring", None);
        let names: Vec<_> = all.iter().map(|s| s.provider.to_string()).collect();
        assert_eq!(names, ["SalvageOpcAgent1@SCADA", "WinderOpcAgent1@SCADA", "WrappingOpcAgent1@SCADA"]);
        assert_eq!(reg.search("process-monitoring", Some("winder")), vec![sd("WinderOpcAgent1@SCADA", "winder")]);
        assert!(reg.search("nonexistent", None).is_empty());
    }

    #[test]
    fn idempotent_and_duplicate() {
        let mut reg = Registry::new();
        reg.register(sd("W@S", "winder")).unwrap();
        reg.register(sd("W@S", "winder")).unwrap();
        assert_eq!(reg.len(), 1);
        let err = reg.register(sd("W@S", "winder").with_property("items", "abc")).unwrap_err();
        assert_eq!(err.name(), "DuplicateRegistration");
    }

    #[test]
    fn deregister_counts() {
        let mut reg = Registry::new();
        reg.register(sd("W@S", "winder")).unwrap();
        assert_eq!(reg.deregister(&parse_aid("W@S").unwrap()), 1);
        assert!(reg.search("process-monitoring", Some("winder")).is_empty());
        assert_eq!(reg.deregister(&parse_aid("X@S").unwrap()), 0);
    }
}
