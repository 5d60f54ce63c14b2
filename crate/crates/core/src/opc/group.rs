use serde::{Deserialize, Serialize};

use super::OpcError;
use crate::plc::{ItemDefinition, ItemState, Value};

/// A named set of item addresses polled together.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpcGroup {
    pub name: String,
    pub active: bool,
    pub update_rate_ms: u64,
    pub percent_deadband: f64,
    pub items: Vec<String>,
}

impl OpcGroup {
    pub fn new(name: impl Into<String>, active: bool, update_rate_ms: u64, percent_deadband: f64) -> Self {
        OpcGroup { name: name.into(), active, update_rate_ms, percent_deadband, items: Vec::new() }
    }

    pub fn with_item(mut self, address: impl Into<String>) -> Self {
        self.items.push(address.into());
        self
    }

    pub fn validate(&self) -> Result<(), OpcError> {
        if self.name.is_empty() {
            return Err(OpcError::InvalidGroup("name must be non-empty".into()));
        }
        if self.update_rate_ms == 0 {
            return Err(OpcError::InvalidGroup("update_rate must be > 0".into()));
        }
        if !(0.0..=100.0).contains(&self.percent_deadband) {
            return Err(OpcError::InvalidGroup(format!(
                "percent_deadband {} outside 0..=100",
                self.percent_deadband
            )));
        }
        for (i, a) in self.items.iter().enumerate() {
            if self.items[..i].contains(a) {
                return Err(OpcError::InvalidGroup(format!("duplicate item {a:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataChangeEvent {
    pub group_name: String,
    pub changes: Vec<(String, ItemState)>,
    pub sequence_number: u64,
}

/// Whether moving from `last` to `now` must be reported: a quality change,
/// or a value move strictly greater than `percent_deadband`% of the EU range.
pub fn exceeds_deadband(def: &ItemDefinition, percent_deadband: f64, last: &ItemState, now: &ItemState) -> bool {
    if last.quality != now.quality {
        return true;
    }
    match (last.value, now.value) {
        (Value::Bool(a), Value::Bool(b)) => a != b,
        (a, b) => {
            let threshold = percent_deadband / 100.0 * (def.eu_high - def.eu_low);
            (b.as_f64() - a.as_f64()).abs() > threshold
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plc::{DataType, Quality};

    fn def() -> ItemDefinition {
        ItemDefinition {
            address: "a".into(),
            name: "a".into(),
            data_type: DataType::Float64,
            eu_low: 0.0,
            eu_high: 2000.0,
            unit: String::new(),
            writable: false,
        }
    }

    fn st(v: f64, q: Quality) -> ItemState {
        ItemState { value: Value::Float64(v), quality: q, timestamp: 0 }
    }

    #[test]
    fn boundary_is_strict() {
        let d = def();
        assert!(!exceeds_deadband(&d, 1.0, &st(100.0, Quality::Good), &st(120.0, Quality::Good)));
        assert!(exceeds_deadband(&d, 1.0, &st(100.0, Quality::Good), &st(120.5, Quality::Good)));
        assert!(!exceeds_deadband(&d, 1.0, &st(100.0, Quality::Good), &st(80.0, Quality::Good)));
    }

    #[test]
    fn zero_deadband_reports_any_change() {
        let d = def();
        assert!(exceeds_deadband(&d, 0.0, &st(1.0, Quality::Good), &st(1.0 + 1e-12, Quality::Good)));
        assert!(!exceeds_deadband(&d, 0.0, &st(1.0, Quality::Good), &st(1.0, Quality::Good)));
    }

    #[test]
    fn quality_change_always_reports() {
        let d = def();
        assert!(exceeds_deadband(&d, 100.0, &st(1.0, Quality::Good), &st(1.0, Quality::Bad)));
    }

    #[test]
    fn group_validation() {
        assert!(OpcGroup::new("g", true, 0, 0.0).validate().is_err());
        assert!(OpcGroup::new("g", true, 400, 100.5).validate().is_err());
        assert!(OpcGroup::new("g", true, 400, 0.0).with_item("a").with_item("a").validate().is_err());
        assert!(OpcGroup::new("group1", true, 400, 0.0).with_item("a").validate().is_ok());
    }
}
