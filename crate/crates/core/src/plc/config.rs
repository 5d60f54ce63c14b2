//! Device configuration documents.
//!
//! ```toml
//! [device]
//! id = "winder"
//! server_name = "OPC.SimaticNET.winder"   # optional
//! tick_interval_ms = 100
//! seed = 1
//!
//! [dynamics]
//! noise_percent = 0.25          # uniform noise, +/- this % of the EU range
//! default_tau_ms = 5000
//! lcg_multiplier = 6364136223846793005
//! lcg_increment = 1442695040888963407
//!
//! [[item]]
//! address = "s7:[@LOCALSERVER]db1,w0"
//! name = "speed"
//! data_type = "FLOAT64"         # FLOAT64 | INT32 | BOOL
//! eu_low = 0.0
//! eu_high = 2000.0
//! unit = "m/min"
//! writable = false
//! initial = 1000.0
//! kind = "lag"                  # lag | direct (default)
//! tau_ms = 5000                 # lag only; defaults to [dynamics].default_tau_ms
//! setpoint_item = "s7:[@LOCALSERVER]db1,w10"   # lag target from another item
//! # setpoint = 1000.0           # ...or a fixed internal target
//! ```

use std::collections::HashSet;

use serde::Deserialize;

use super::lcg::{DEFAULT_INCREMENT, DEFAULT_MULTIPLIER};
use super::{DataType, PlcError, Value};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    device: RawDevice,
    #[serde(default)]
    dynamics: RawDynamics,
    #[serde(default)]
    item: Vec<RawItem>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDevice {
    id: String,
    server_name: Option<String>,
    #[serde(default = "default_tick")]
    tick_interval_ms: u64,
    #[serde(default)]
    seed: u64,
}

fn default_tick() -> u64 {
    100
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawDynamics {
    noise_percent: f64,
    default_tau_ms: f64,
    lcg_multiplier: u64,
    lcg_increment: u64,
}

impl Default for RawDynamics {
    fn default() -> Self {
        RawDynamics {
            noise_percent: 0.25,
            default_tau_ms: 5000.0,
            lcg_multiplier: DEFAULT_MULTIPLIER,
            lcg_increment: DEFAULT_INCREMENT,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawItem {
    address: String,
    name: Option<String>,
    data_type: DataType,
    eu_low: Option<f64>,
    eu_high: Option<f64>,
    #[serde(default)]
    unit: String,
    #[serde(default)]
    writable: bool,
    initial: Option<toml::Value>,
    #[serde(default)]
    kind: ItemKind,
    tau_ms: Option<f64>,
    setpoint: Option<f64>,
    setpoint_item: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    #[default]
    Direct,
    Lag,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ItemDefinition {
    pub address: String,
    pub name: String,
    pub data_type: DataType,
    pub eu_low: f64,
    pub eu_high: f64,
    pub unit: String,
    pub writable: bool,
}

impl ItemDefinition {
    pub fn eu_range(&self) -> f64 {
        self.eu_high - self.eu_low
    }

    pub fn in_range(&self, value: &Value) -> bool {
        match value {
            Value::Bool(_) => true,
            v => (self.eu_low..=self.eu_high).contains(&v.as_f64()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LagTarget {
    Fixed(f64),
    Item(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ItemConfig {
    pub definition: ItemDefinition,
    pub initial: Value,
    pub lag: Option<LagConfig>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LagConfig {
    pub tau_ms: f64,
    pub target: LagTarget,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsConfig {
    pub noise_percent: f64,
    pub lcg_multiplier: u64,
    pub lcg_increment: u64,
}

/// A validated device configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceConfig {
    pub device_id: String,
    pub server_name: String,
    pub tick_interval_ms: u64,
    pub seed: u64,
    pub dynamics: DynamicsConfig,
    pub items: Vec<ItemConfig>,
}

fn violation(path: impl Into<String>, message: impl Into<String>) -> PlcError {
    PlcError::SchemaViolation { path: path.into(), message: message.into() }
}

/// Default OPC server name for a device id.
pub fn default_server_name(device_id: &str) -> String {
    format!("OPC.SimaticNET.{device_id}")
}

impl DeviceConfig {
    pub fn parse(document: &str) -> Result<DeviceConfig, PlcError> {
        let raw: RawConfig = toml::from_str(document).map_err(|e| {
            let path = e.span().map(|s| format!("@{}..{}", s.start, s.end)).unwrap_or_default();
            violation(path, e.message().to_string())
        })?;
        validate(raw)
    }

    pub fn item(&self, address: &str) -> Option<&ItemConfig> {
        self.items.iter().find(|i| i.definition.address == address)
    }
}

fn validate(raw: RawConfig) -> Result<DeviceConfig, PlcError> {
    if raw.device.id.trim().is_empty() {
        return Err(violation("device.id", "must be non-empty"));
    }
    if raw.device.tick_interval_ms == 0 {
        return Err(violation("device.tick_interval_ms", "must be > 0"));
    }
    let dyn_ = &raw.dynamics;
    if !(0.0..=100.0).contains(&dyn_.noise_percent) {
        return Err(violation("dynamics.noise_percent", "must be within 0..=100"));
    }
    if !(dyn_.default_tau_ms > 0.0) {
        return Err(violation("dynamics.default_tau_ms", "must be > 0"));
    }
    if raw.item.is_empty() {
        return Err(violation("item", "at least one [[item]] is required"));
    }

    let mut seen = HashSet::new();
    for (i, item) in raw.item.iter().enumerate() {
        if item.address.is_empty() {
            return Err(violation(format!("item[{i}].address"), "must be non-empty"));
        }
        if !seen.insert(item.address.as_str()) {
            return Err(violation(format!("item[{i}].address"), format!("duplicate address {:?}", item.address)));
        }
    }

    let mut items = Vec::with_capacity(raw.item.len());
    for (i, item) in raw.item.iter().enumerate() {
        let path = |field: &str| format!("item[{i}].{field}");
        let (eu_low, eu_high) = match (item.data_type, item.eu_low, item.eu_high) {
            (DataType::Bool, lo, hi) => (lo.unwrap_or(0.0), hi.unwrap_or(1.0)),
            (_, Some(lo), Some(hi)) => (lo, hi),
            (_, None, _) => return Err(violation(path("eu_low"), "required for numeric items")),
            (_, _, None) => return Err(violation(path("eu_high"), "required for numeric items")),
        };
        if !(eu_low < eu_high) {
            return Err(violation(path("eu_low"), format!("eu_low ({eu_low}) must be < eu_high ({eu_high})")));
        }
        let definition = ItemDefinition {
            address: item.address.clone(),
            name: item.name.clone().unwrap_or_else(|| item.address.clone()),
            data_type: item.data_type,
            eu_low,
            eu_high,
            unit: item.unit.clone(),
            writable: item.writable,
        };

        let initial = match &item.initial {
            None => match item.data_type {
                DataType::Bool => Value::Bool(false),
                DataType::Int32 => Value::Int32(eu_low.ceil() as i32),
                DataType::Float64 => Value::Float64(eu_low),
            },
            Some(v) => {
                let json = serde_json::to_value(v).map_err(|e| violation(path("initial"), e.to_string()))?;
                Value::from_json(&json, item.data_type).map_err(|e| violation(path("initial"), e.to_string()))?
            }
        };
        if !definition.in_range(&initial) {
            return Err(violation(path("initial"), "outside [eu_low, eu_high]"));
        }

        let lag = match item.kind {
            ItemKind::Direct => {
                for (field, present) in [
                    ("tau_ms", item.tau_ms.is_some()),
                    ("setpoint", item.setpoint.is_some()),
                    ("setpoint_item", item.setpoint_item.is_some()),
                ] {
                    if present {
                        return Err(violation(path(field), "only valid for kind = \"lag\""));
                    }
                }
                None
            }
            ItemKind::Lag => {
                if item.data_type != DataType::Float64 {
                    return Err(violation(path("kind"), "lag dynamics require FLOAT64"));
                }
                let tau_ms = item.tau_ms.unwrap_or(dyn_.default_tau_ms);
                if !(tau_ms > 0.0) {
                    return Err(violation(path("tau_ms"), "must be > 0"));
                }
                let target = match (&item.setpoint, &item.setpoint_item) {
                    (Some(_), Some(_)) => {
                        return Err(violation(path("setpoint"), "set either setpoint or setpoint_item"))
                    }
                    (Some(sp), None) => {
                        if !(eu_low..=eu_high).contains(sp) {
                            return Err(violation(path("setpoint"), "outside [eu_low, eu_high]"));
                        }
                        LagTarget::Fixed(*sp)
                    }
                    (None, Some(addr)) => {
                        let Some(src) = raw.item.iter().find(|o| &o.address == addr) else {
                            return Err(violation(path("setpoint_item"), format!("unknown address {addr:?}")));
                        };
                        if src.data_type == DataType::Bool || src.kind == ItemKind::Lag || src.address == item.address {
                            return Err(violation(path("setpoint_item"), "must name a numeric direct item"));
                        }
                        LagTarget::Item(addr.clone())
                    }
                    (None, None) => LagTarget::Fixed(initial.as_f64()),
                };
                Some(LagConfig { tau_ms, target })
            }
        };
        items.push(ItemConfig { definition, initial, lag });
    }

    Ok(DeviceConfig {
        server_name: raw.device.server_name.unwrap_or_else(|| default_server_name(&raw.device.id)),
        device_id: raw.device.id,
        tick_interval_ms: raw.device.tick_interval_ms,
        seed: raw.device.seed,
        dynamics: DynamicsConfig {
            noise_percent: dyn_.noise_percent,
            lcg_multiplier: dyn_.lcg_multiplier,
            lcg_increment: dyn_.lcg_increment,
        },
        items,
    })
}

/// Bundled station fixtures. Only the winder's variables come from the
/// mill's documented station; wrapping and salvage are invented.
pub mod fixtures {
    pub const WINDER: &str = include_str!("../../fixtures/winder.toml");
    pub const WRAPPING: &str = include_str!("../../fixtures/wrapping.toml");
    pub const SALVAGE: &str = include_str!("../../fixtures/salvage.toml");

    pub fn all() -> [(&'static str, &'static str); 3] {
        [("winder", WINDER), ("wrapping", WRAPPING), ("salvage", SALVAGE)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(items: &str) -> String {
        format!("[device]\nid = \"t\"\nseed = 3\n\n{items}")
    }

    #[test]
    fn winder_fixture_has_documented_variables() {
        let cfg = DeviceConfig::parse(fixtures::WINDER).unwrap();
        assert_eq!(cfg.device_id, "winder");
        assert_eq!(cfg.server_name, "OPC.SimaticNET.winder");
        let speed = cfg.item("s7:[@LOCALSERVER]db1,w0").unwrap();
        assert_eq!(speed.definition.unit, "m/min");
        assert_eq!((speed.definition.eu_low, speed.definition.eu_high), (0.0, 2000.0));
        let names: Vec<_> = cfg.items.iter().map(|i| i.definition.name.as_str()).collect();
        for n in ["speed", "tension", "drum1_torque", "drum2_torque"] {
            assert!(names.contains(&n), "{n} missing from {names:?}");
        }
        assert_eq!(cfg.item("s7:[@LOCALSERVER]db1,w2").unwrap().definition.unit, "N/m");
    }

    #[test]
    fn three_station_fixtures_have_unique_ids() {
        let ids: HashSet<_> = fixtures::all()
            .iter()
            .map(|(_, d)| DeviceConfig::parse(d).unwrap().device_id)
            .collect();
        assert_eq!(ids.len(), 3);
    }

    #[test]
    fn inverted_eu_range_is_rejected() {
        let d = doc("[[item]]\naddress = \"a\"\ndata_type = \"FLOAT64\"\neu_low = 10.0\neu_high = 10.0\n");
        match DeviceConfig::parse(&d) {
            Err(PlcError::SchemaViolation { path, .. }) => assert_eq!(path, "item[0].eu_low"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_address_is_rejected() {
        let item = "[[item]]\naddress = \"a\"\ndata_type = \"INT32\"\neu_low = 0\neu_high = 10\n";
        let d = doc(&format!("{item}{item}"));
        assert!(matches!(DeviceConfig::parse(&d), Err(PlcError::SchemaViolation { path, .. }) if path == "item[1].address"));
    }

    #[test]
    fn unknown_setpoint_item_is_rejected() {
        let d = doc("[[item]]\naddress = \"a\"\ndata_type = \"FLOAT64\"\neu_low = 0\neu_high = 10\nkind = \"lag\"\nsetpoint_item = \"zz\"\n");
        assert!(matches!(DeviceConfig::parse(&d), Err(PlcError::SchemaViolation { path, .. }) if path == "item[0].setpoint_item"));
    }

    #[test]
    fn unknown_field_is_a_violation() {
        let d = doc("[[item]]\naddress = \"a\"\ndata_type = \"BOOL\"\ncolour = 1\n");
        assert!(matches!(DeviceConfig::parse(&d), Err(PlcError::SchemaViolation { .. })));
    }

    #[test]
    fn missing_device_section() {
        assert!(matches!(DeviceConfig::parse("[[item]]\n"), Err(PlcError::SchemaViolation { .. })));
    }
}
