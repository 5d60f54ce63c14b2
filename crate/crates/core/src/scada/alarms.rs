//! Limit alarms with hysteresis.
//!
//! HIGH raises when a GOOD value goes above `high_limit` and clears once a
//! GOOD value falls below `high_limit - hysteresis`; LOW mirrors it. Samples
//! of other quality leave HIGH and LOW untouched and hold a BAD_QUALITY
//! alarm open until quality returns to GOOD.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::TelemetryPayload;
use crate::plc::Quality;

/// Default hysteresis as a fraction of the item's EU range.
pub const DEFAULT_HYSTERESIS_FRACTION: f64 = 0.005;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlarmRule {
    /// Restricts the rule to one device; `None` matches any.
    #[serde(default)]
    pub device_id: Option<String>,
    pub address: String,
    #[serde(default)]
    pub low_limit: Option<f64>,
    #[serde(default)]
    pub high_limit: Option<f64>,
    /// In engineering units.
    pub hysteresis: f64,
}

impl AlarmRule {
    pub fn high(address: impl Into<String>, high_limit: f64, hysteresis: f64) -> Self {
        AlarmRule { device_id: None, address: address.into(), low_limit: None, high_limit: Some(high_limit), hysteresis }
    }

    pub fn low(address: impl Into<String>, low_limit: f64, hysteresis: f64) -> Self {
        AlarmRule { device_id: None, address: address.into(), low_limit: Some(low_limit), high_limit: None, hysteresis }
    }

    fn applies(&self, device_id: &str, address: &str) -> bool {
        self.address == address && self.device_id.as_deref().is_none_or(|d| d == device_id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlarmKind {
    High,
    Low,
    BadQuality,
}

impl fmt::Display for AlarmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlarmKind::High => "HIGH",
            AlarmKind::Low => "LOW",
            AlarmKind::BadQuality => "BAD_QUALITY",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlarmEvent {
    pub device_id: String,
    pub address: String,
    pub kind: AlarmKind,
    pub onset: u64,
    pub cleared: Option<u64>,
    pub acknowledged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlarmChange {
    Raised,
    Cleared,
    Acknowledged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlarmTransition {
    pub change: AlarmChange,
    pub event: AlarmEvent,
}

type AlarmKey = (String, String, AlarmKind);

/// Open alarms plus a bounded history of cleared ones.
#[derive(Clone, Debug, Default)]
pub struct AlarmState {
    open: BTreeMap<AlarmKey, AlarmEvent>,
    history: Vec<AlarmEvent>,
}

const HISTORY_LIMIT: usize = 1000;

impl AlarmState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_open(&self, device_id: &str, address: &str, kind: AlarmKind) -> bool {
        self.open.contains_key(&(device_id.to_string(), address.to_string(), kind))
    }

    pub fn open_events(&self) -> Vec<AlarmEvent> {
        self.open.values().cloned().collect()
    }

    pub fn history(&self) -> &[AlarmEvent] {
        &self.history
    }

    fn raise(&mut self, device_id: &str, address: &str, kind: AlarmKind, at: u64, out: &mut Vec<AlarmTransition>) {
        let key = (device_id.to_string(), address.to_string(), kind);
        if self.open.contains_key(&key) {
            return;
        }
        let event = AlarmEvent {
            device_id: device_id.to_string(),
            address: address.to_string(),
            kind,
            onset: at,
            cleared: None,
            acknowledged: false,
        };
        self.open.insert(key, event.clone());
        out.push(AlarmTransition { change: AlarmChange::Raised, event });
    }

    fn clear(&mut self, device_id: &str, address: &str, kind: AlarmKind, at: u64, out: &mut Vec<AlarmTransition>) {
        if let Some(mut event) = self.open.remove(&(device_id.to_string(), address.to_string(), kind)) {
            event.cleared = Some(at);
            if self.history.len() == HISTORY_LIMIT {
                self.history.remove(0);
            }
            self.history.push(event.clone());
            out.push(AlarmTransition { change: AlarmChange::Cleared, event });
        }
    }

    /// Marks an open alarm acknowledged. Returns the updated event.
    pub fn acknowledge(&mut self, device_id: &str, address: &str, kind: AlarmKind) -> Option<AlarmEvent> {
        let event = self.open.get_mut(&(device_id.to_string(), address.to_string(), kind))?;
        event.acknowledged = true;
        Some(event.clone())
    }
}

/// Applies one telemetry payload to the alarm state. Returns the raised and
/// cleared events in update order.
pub fn evaluate_alarms(rules: &[AlarmRule], update: &TelemetryPayload, state: &mut AlarmState) -> Vec<AlarmTransition> {
    let mut out = Vec::new();
    let device = update.device_id.as_str();
    for u in &update.updates {
        let at = u.timestamp;
        let mut quality_rule = false;
        for rule in rules.iter().filter(|r| r.applies(device, &u.address)) {
            quality_rule = true;
            if u.quality != Quality::Good {
                continue;
            }
            let v = u.value.as_f64();
            if let Some(high) = rule.high_limit {
                if v > high {
                    state.raise(device, &u.address, AlarmKind::High, at, &mut out);
                } else if v < high - rule.hysteresis {
                    state.clear(device, &u.address, AlarmKind::High, at, &mut out);
                }
            }
            if let Some(low) = rule.low_limit {
                if v < low {
                    state.raise(device, &u.address, AlarmKind::Low, at, &mut out);
                } else if v > low + rule.hysteresis {
                    state.clear(device, &u.address, AlarmKind::Low, at, &mut out);
                }
            }
        }
        if quality_rule {
            if u.quality == Quality::Good {
                state.clear(device, &u.address, AlarmKind::BadQuality, at, &mut out);
            } else {
                state.raise(device, &u.address, AlarmKind::BadQuality, at, &mut out);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plc::Value;
    use crate::scada::TelemetryUpdate;

    fn payload(value: f64, quality: Quality, t: u64) -> TelemetryPayload {
        TelemetryPayload {
            device_id: "winder".into(),
            group: "group1".into(),
            publisher_sequence: t,
            snapshot: false,
            updates: vec![TelemetryUpdate { address: "db1,w0".into(), value: Value::Float64(value), quality, timestamp: t }],
        }
    }

    #[test]
    fn high_with_hysteresis() {
        let rules = [AlarmRule::high("db1,w0", 1800.0, 10.0)];
        let mut st = AlarmState::new();
        let t = evaluate_alarms(&rules, &payload(1900.0, Quality::Good, 1), &mut st);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].change, AlarmChange::Raised);
        assert!(evaluate_alarms(&rules, &payload(1795.0, Quality::Good, 2), &mut st).is_empty());
        assert!(evaluate_alarms(&rules, &payload(1790.0, Quality::Good, 3), &mut st).is_empty());
        assert!(st.is_open("winder", "db1,w0", AlarmKind::High));
        let t = evaluate_alarms(&rules, &payload(1789.0, Quality::Good, 4), &mut st);
        assert_eq!(t[0].change, AlarmChange::Cleared);
        assert_eq!(t[0].event.cleared, Some(4));
        assert!(!st.is_open("winder", "db1,w0", AlarmKind::High));
    }

    #[test]
    fn bad_quality_regardless_of_value() {
        let rules = [AlarmRule::low("db1,w0", 100.0, 5.0)];
        let mut st = AlarmState::new();
        let t = evaluate_alarms(&rules, &payload(50.0, Quality::Bad, 1), &mut st);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].event.kind, AlarmKind::BadQuality);
        assert!(!st.is_open("winder", "db1,w0", AlarmKind::Low));
        let t = evaluate_alarms(&rules, &payload(50.0, Quality::Good, 2), &mut st);
        let kinds: Vec<_> = t.iter().map(|x| (x.change, x.event.kind)).collect();
        assert_eq!(kinds, [(AlarmChange::Raised, AlarmKind::Low), (AlarmChange::Cleared, AlarmKind::BadQuality)]);
    }

    #[test]
    fn acknowledge_open_only() {
        let rules = [AlarmRule::high("db1,w0", 10.0, 1.0)];
        let mut st = AlarmState::new();
        evaluate_alarms(&rules, &payload(20.0, Quality::Good, 1), &mut st);
        assert!(st.acknowledge("winder", "db1,w0", AlarmKind::High).unwrap().acknowledged);
        assert!(st.acknowledge("winder", "db1,w0", AlarmKind::Low).is_none());
    }

    #[test]
    fn device_scoped_rule() {
        let mut rule = AlarmRule::high("db1,w0", 10.0, 1.0);
        rule.device_id = Some("wrapping".into());
        let mut st = AlarmState::new();
        assert!(evaluate_alarms(&[rule], &payload(20.0, Quality::Good, 1), &mut st).is_empty());
    }
}
