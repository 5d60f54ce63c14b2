use std::collections::HashMap;

use super::config::{DeviceConfig, ItemConfig, ItemDefinition, LagTarget};
use super::lcg::Lcg;
use super::{ItemState, PlcError, Quality, Value};

#[derive(Clone, Debug)]
enum Target {
    Fixed(f64),
    Item(usize),
}

#[derive(Clone, Debug)]
struct Lag {
    tau_ms: f64,
    target: Target,
    /// Noise-free process level; the served value is this plus noise.
    level: f64,
}

#[derive(Clone, Debug)]
struct Slot {
    definition: ItemDefinition,
    state: ItemState,
    lag: Option<Lag>,
}

/// A simulated PLC station: an addressable item space advanced by
/// first-order lag dynamics with seeded uniform noise.
///
/// The lag acts on a noise-free level; each tick serves that level plus a
/// fresh noise draw, so a served value never strays more than the noise
/// bound from the closed-form response.
///
/// Time is simulated: the device clock starts at `start_ms` and moves only
/// by `tick`, so equal (config, start, writes, tick schedule) give
/// bit-identical states.
#[derive(Clone, Debug)]
pub struct DeviceModel {
    device_id: String,
    server_name: String,
    tick_interval_ms: u64,
    noise_percent: f64,
    slots: Vec<Slot>,
    index: HashMap<String, usize>,
    rng: Lcg,
    clock_ms: u64,
    online: bool,
    ticks: u64,
}

impl DeviceModel {
    pub fn new(config: &DeviceConfig, start_ms: u64) -> DeviceModel {
        let index: HashMap<String, usize> = config
            .items
            .iter()
            .enumerate()
            .map(|(i, c)| (c.definition.address.clone(), i))
            .collect();
        let slots = config
            .items
            .iter()
            .map(|ItemConfig { definition, initial, lag }| Slot {
                definition: definition.clone(),
                state: ItemState { value: *initial, quality: Quality::Good, timestamp: start_ms },
                lag: lag.as_ref().map(|l| Lag {
                    level: initial.as_f64(),
                    tau_ms: l.tau_ms,
                    target: match &l.target {
                        LagTarget::Fixed(v) => Target::Fixed(*v),
                        LagTarget::Item(addr) => Target::Item(index[addr]),
                    },
                }),
            })
            .collect();
        DeviceModel {
            device_id: config.device_id.clone(),
            server_name: config.server_name.clone(),
            tick_interval_ms: config.tick_interval_ms,
            noise_percent: config.dynamics.noise_percent,
            slots,
            index,
            rng: Lcg::new(config.seed, config.dynamics.lcg_multiplier, config.dynamics.lcg_increment),
            clock_ms: start_ms,
            online: true,
            ticks: 0,
        }
    }

    pub fn load(document: &str, start_ms: u64) -> Result<DeviceModel, PlcError> {
        Ok(DeviceModel::new(&DeviceConfig::parse(document)?, start_ms))
    }

    pub fn device_id(&self) -> &str {
        &self.device_id
    }

    pub fn server_name(&self) -> &str {
        &self.server_name
    }

    pub fn tick_interval_ms(&self) -> u64 {
        self.tick_interval_ms
    }

    pub fn clock_ms(&self) -> u64 {
        self.clock_ms
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn is_online(&self) -> bool {
        self.online
    }

    pub fn definitions(&self) -> impl Iterator<Item = &ItemDefinition> {
        self.slots.iter().map(|s| &s.definition)
    }

    pub fn definition(&self, address: &str) -> Result<&ItemDefinition, PlcError> {
        self.slot(address).map(|s| &s.definition)
    }

    fn slot(&self, address: &str) -> Result<&Slot, PlcError> {
        self.index
            .get(address)
            .map(|&i| &self.slots[i])
            .ok_or_else(|| PlcError::UnknownAddress(address.to_string()))
    }

    /// Advances the dynamics by `dt_ms` of simulated time and returns the
    /// items whose state changed.
    pub fn tick(&mut self, dt_ms: u64) -> Vec<(String, ItemState)> {
        let mut changed = Vec::new();
        if dt_ms == 0 {
            return changed;
        }
        self.ticks += 1;
        self.clock_ms += dt_ms;
        if !self.online {
            return changed;
        }
        let now = self.clock_ms;
        for slot in &mut self.slots {
            if slot.state.quality != Quality::Good {
                slot.state.quality = Quality::Good;
                slot.state.timestamp = now;
            }
        }
        for i in 0..self.slots.len() {
            let Some(lag) = self.slots[i].lag.clone() else { continue };
            let setpoint = match lag.target {
                Target::Fixed(v) => v,
                Target::Item(j) => self.slots[j].state.value.as_f64(),
            };
            let slot = &mut self.slots[i];
            let def = &slot.definition;
            let amplitude = self.noise_percent / 100.0 * def.eu_range();
            // Draw even at zero amplitude so the stream position depends only
            // on the tick count.
            let noise = self.rng.next_symmetric() * amplitude;
            let alpha = 1.0 - (-(dt_ms as f64) / lag.tau_ms).exp();
            let level = (lag.level + (setpoint - lag.level) * alpha).clamp(def.eu_low, def.eu_high);
            let next = (level + noise).clamp(def.eu_low, def.eu_high);
            if let Some(l) = slot.lag.as_mut() {
                l.level = level;
            }
            if next.to_bits() != slot.state.value.as_f64().to_bits() {
                slot.state.value = Value::Float64(next);
                slot.state.timestamp = now;
            }
        }
        for slot in &self.slots {
            if slot.state.timestamp == now {
                changed.push((slot.definition.address.clone(), slot.state));
            }
        }
        changed
    }

    /// Current state; never advances the simulation.
    pub fn read_item(&self, address: &str) -> Result<ItemState, PlcError> {
        self.slot(address).map(|s| s.state)
    }

    pub fn write_item(&mut self, address: &str, value: Value) -> Result<(), PlcError> {
        let &i = self
            .index
            .get(address)
            .ok_or_else(|| PlcError::UnknownAddress(address.to_string()))?;
        let now = self.clock_ms;
        let online = self.online;
        let slot = &mut self.slots[i];
        let def = &slot.definition;
        if !def.writable {
            return Err(PlcError::NotWritable(address.to_string()));
        }
        if value.data_type() != def.data_type {
            return Err(PlcError::TypeMismatch { expected: def.data_type, got: value.to_string() });
        }
        if !def.in_range(&value) {
            return Err(PlcError::OutOfRange { address: address.to_string(), value: value.as_f64(), low: def.eu_low, high: def.eu_high });
        }
        if !online {
            return Err(PlcError::DeviceOffline(self.device_id.clone()));
        }
        match &mut slot.lag {
            // A writable lag item takes the write as its new target.
            Some(lag) => lag.target = Target::Fixed(value.as_f64()),
            None => {
                slot.state.value = value;
                slot.state.timestamp = now;
            }
        }
        Ok(())
    }

    /// Offline devices serve BAD quality with the last value; coming back
    /// online restores GOOD on the next tick.
    pub fn set_online(&mut self, online: bool) {
        if self.online == online {
            return;
        }
        self.online = online;
        if !online {
            let now = self.clock_ms;
            for slot in &mut self.slots {
                slot.state.quality = Quality::Bad;
                slot.state.timestamp = now;
            }
        }
    }

    /// Every item's `(address, state)` in configuration order.
    pub fn snapshot(&self) -> Vec<(String, ItemState)> {
        self.slots.iter().map(|s| (s.definition.address.clone(), s.state)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plc::config::fixtures;

    const SPEED: &str = "s7:[@LOCALSERVER]db1,w0";
    const SETPOINT: &str = "s7:[@LOCALSERVER]db1,w10";
    const TENSION: &str = "s7:[@LOCALSERVER]db1,w2";

    fn lag_device(noise: f64, initial: f64, setpoint: f64) -> DeviceModel {
        let doc = format!(
            "[device]\nid = \"lag\"\nseed = 9\n[dynamics]\nnoise_percent = {noise}\n\
             [[item]]\naddress = \"v\"\ndata_type = \"FLOAT64\"\neu_low = 0.0\neu_high = 2000.0\n\
             initial = {initial}\nkind = \"lag\"\ntau_ms = 5000\nsetpoint_item = \"sp\"\n\
             [[item]]\naddress = \"sp\"\ndata_type = \"FLOAT64\"\neu_low = 0.0\neu_high = 2000.0\n\
             writable = true\ninitial = {setpoint}\n"
        );
        DeviceModel::load(&doc, 0).unwrap()
    }

    #[test]
    fn fixed_point_without_noise() {
        let mut dev = lag_device(0.0, 700.0, 700.0);
        let before = dev.read_item("v").unwrap();
        let changed = dev.tick(100);
        assert!(changed.is_empty());
        assert_eq!(dev.read_item("v").unwrap(), before);
    }

    #[test]
    fn one_time_constant_closed_form() {
        let mut dev = lag_device(0.0, 0.0, 1000.0);
        dev.tick(5000);
        let v = dev.read_item("v").unwrap().value.as_f64();
        // 1000 * (1 - e^-1)
        assert!((v - 632.120_558_828_557_7).abs() < 1e-9, "{v}");
        assert_eq!(dev.read_item("v").unwrap().timestamp, 5000);
    }

    #[test]
    fn equal_seeds_equal_states() {
        let mut a = DeviceModel::load(fixtures::WINDER, 0).unwrap();
        let mut b = DeviceModel::load(fixtures::WINDER, 0).unwrap();
        for _ in 0..500 {
            a.tick(100);
            b.tick(100);
        }
        for ((aa, sa), (ba, sb)) in a.snapshot().iter().zip(b.snapshot().iter()) {
            assert_eq!(aa, ba);
            assert!(sa.value.same_bits(&sb.value));
            assert_eq!(sa.timestamp, sb.timestamp);
        }
    }

    #[test]
    fn read_errors_and_purity() {
        let dev = DeviceModel::load(fixtures::WINDER, 0).unwrap();
        assert!(matches!(dev.read_item("db9,w99"), Err(PlcError::UnknownAddress(_))));
        assert_eq!(dev.read_item(SPEED).unwrap(), dev.read_item(SPEED).unwrap());
    }

    #[test]
    fn write_errors() {
        let mut dev = DeviceModel::load(fixtures::WINDER, 0).unwrap();
        assert!(matches!(dev.write_item(TENSION, Value::Float64(1.0)), Err(PlcError::NotWritable(_))));
        assert!(matches!(dev.write_item(SETPOINT, Value::Float64(99999.0)), Err(PlcError::OutOfRange { .. })));
        assert!(matches!(dev.write_item(SETPOINT, Value::Int32(5)), Err(PlcError::TypeMismatch { .. })));
        assert!(matches!(dev.write_item("nope", Value::Int32(5)), Err(PlcError::UnknownAddress(_))));
    }

    #[test]
    fn setpoint_write_converges_within_ten_tau() {
        // Noise-free: the residual after 10 tau is 200 * e^-10.
        let mut dev = lag_device(0.0, 1000.0, 1000.0);
        dev.write_item("sp", Value::Float64(1200.0)).unwrap();
        for _ in 0..500 {
            dev.tick(100);
        }
        let v = dev.read_item("v").unwrap().value.as_f64();
        assert!((v - (1200.0 - 200.0 * (-10.0f64).exp())).abs() < 1e-6, "{v}");

        // With the fixture's noise every served value stays within the
        // noise bound (0.25% of 2000) of the closed form.
        let mut dev = DeviceModel::load(fixtures::WINDER, 0).unwrap();
        dev.write_item(SETPOINT, Value::Float64(1200.0)).unwrap();
        assert_eq!(dev.read_item(SETPOINT).unwrap().value, Value::Float64(1200.0));
        for i in 1..=500 {
            dev.tick(100);
            let v = dev.read_item(SPEED).unwrap().value.as_f64();
            let closed = 1200.0 - 200.0 * (-(i as f64) * 100.0 / 5000.0).exp();
            assert!((v - closed).abs() <= 5.0 + 1e-9, "tick {i}: {v} vs {closed}");
        }
        let v = dev.read_item(SPEED).unwrap().value.as_f64();
        assert!((v - 1200.0).abs() < 0.01 * 2000.0, "{v}");
    }

    #[test]
    fn offline_serves_bad_and_recovers_in_one_tick() {
        let mut dev = DeviceModel::load(fixtures::WINDER, 0).unwrap();
        dev.tick(100);
        let last = dev.read_item(SPEED).unwrap().value;
        dev.set_online(false);
        let s = dev.read_item(SPEED).unwrap();
        assert_eq!(s.quality, Quality::Bad);
        assert_eq!(s.value, last);
        dev.tick(100);
        assert_eq!(dev.read_item(SPEED).unwrap().quality, Quality::Bad);
        assert!(matches!(dev.write_item(SETPOINT, Value::Float64(10.0)), Err(PlcError::DeviceOffline(_))));
        assert_eq!(dev.read_item(SETPOINT).unwrap().value, Value::Float64(1000.0));
        dev.set_online(true);
        dev.tick(100);
        assert!(dev.snapshot().iter().all(|(_, s)| s.quality == Quality::Good));
    }
}
