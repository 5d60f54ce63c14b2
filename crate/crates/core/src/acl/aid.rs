use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::AclError;

/// A platform-wide agent name, canonically written `local@platform`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AgentId {
    local_name: String,
    platform_name: String,
}

fn valid_part(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| !c.is_whitespace() && !c.is_control() && c != '@')
}

impl AgentId {
    pub fn new(local_name: impl Into<String>, platform_name: impl Into<String>) -> Result<Self, AclError> {
        let local_name = local_name.into();
        let platform_name = platform_name.into();
        if !valid_part(&local_name) || !valid_part(&platform_name) {
            return Err(AclError::MalformedAid(format!("{local_name}@{platform_name}")));
        }
        Ok(AgentId { local_name, platform_name })
    }

    pub fn local_name(&self) -> &str {
        &self.local_name
    }

    pub fn platform_name(&self) -> &str {
        &self.platform_name
    }

    fn canonical_bytes(&self) -> impl Iterator<Item = u8> + '_ {
        self.local_name
            .bytes()
            .chain(std::iter::once(b'@'))
            .chain(self.platform_name.bytes())
    }
}

/// Splits `local@platform` into an [`AgentId`].
pub fn parse_aid(text: &str) -> Result<AgentId, AclError> {
    let mut parts = text.split('@');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(local), Some(platform), None) => {
            AgentId::new(local, platform).map_err(|_| AclError::MalformedAid(text.to_string()))
        }
        _ => Err(AclError::MalformedAid(text.to_string())),
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.local_name, self.platform_name)
    }
}

impl FromStr for AgentId {
    type Err = AclError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_aid(s)
    }
}

// Ordered by canonical form, which is what directory searches sort on.
impl Ord for AgentId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.canonical_bytes().cmp(other.canonical_bytes())
    }
}

impl PartialOrd for AgentId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for AgentId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AgentId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_aid(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_platform_names() {
        let aid = parse_aid("H1@SCADA").unwrap();
        assert_eq!(aid.local_name(), "H1");
        assert_eq!(aid.platform_name(), "SCADA");
        let aid = parse_aid("WinderOpcAgent1@SCADA").unwrap();
        assert_eq!(aid.local_name(), "WinderOpcAgent1");
        assert_eq!(aid.to_string(), "WinderOpcAgent1@SCADA");
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["H1@@SCADA", "H1", "@SCADA", "H1@", "H 1@SCADA", "H1@SC\tADA", "", "a@b@c"] {
            assert!(matches!(parse_aid(bad), Err(AclError::MalformedAid(_))), "{bad}");
        }
    }

    #[test]
    fn orders_by_canonical_form() {
        let a = parse_aid("a@X").unwrap();
        let ab = parse_aid("a.b@X").unwrap();
        // '.' < '@' in the canonical string
        assert!(ab < a);
        assert_eq!(ab.to_string().cmp(&a.to_string()), ab.cmp(&a));
    }
}
