use std::collections::{BTreeMap, HashMap};

use serde_json::Value as Json;

use super::group::{exceeds_deadband, DataChangeEvent, OpcGroup};
use super::OpcError;
use crate::clock::Clock;
use crate::plc::{ClientLease, DeviceDirectory, DeviceHandle, ItemDefinition, ItemState, PlcError, Quality, Value};

struct GroupState {
    group: OpcGroup,
    definitions: Vec<ItemDefinition>,
    last_reported: HashMap<String, ItemState>,
    next_sequence: u64,
    created_ms: u64,
    last_window: Option<u64>,
}

/// A client session against one device, in the manner of an OPC DA client
/// bound to a server.
pub struct OpcConnection {
    host: String,
    server_name: String,
    prefix: String,
    directory: DeviceDirectory,
    clock: Clock,
    groups: BTreeMap<String, GroupState>,
    last_known: HashMap<String, ItemState>,
    _lease: ClientLease,
}

fn is_local(host: &str) -> bool {
    matches!(host, "" | "localhost" | "127.0.0.1" | "::1")
}

pub fn connect(directory: &DeviceDirectory, host: &str, server_name: &str, prefix: &str) -> Result<OpcConnection, OpcError> {
    connect_with_clock(directory, host, server_name, prefix, Clock::System)
}

pub fn connect_with_clock(
    directory: &DeviceDirectory,
    host: &str,
    server_name: &str,
    prefix: &str,
    clock: Clock,
) -> Result<OpcConnection, OpcError> {
    if !is_local(host) {
        return Err(OpcError::ConnectFailed(format!("no route to OPC host {host:?}")));
    }
    if directory.get(server_name).is_none() {
        return Err(OpcError::ServerNotFound(server_name.to_string()));
    }
    let lease = directory
        .lease(prefix, server_name)
        .ok_or_else(|| OpcError::ConnectFailed(format!("client {prefix:?} already connected to {server_name:?}")))?;
    Ok(OpcConnection {
        host: host.to_string(),
        server_name: server_name.to_string(),
        prefix: prefix.to_string(),
        directory: directory.clone(),
        clock,
        groups: BTreeMap::new(),
        last_known: HashMap::new(),
        _lease: lease,
    })
}

impl OpcConnection {
    pub fn host(&self) -> &str {
        &self.host
    }

    pub fn server_name(&self) -> &str {
        &self.server_name
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    fn device(&self) -> Option<DeviceHandle> {
        self.directory.get(&self.server_name)
    }

    pub fn device_id(&self) -> Option<String> {
        self.device().map(|d| d.device_id())
    }

    pub fn add_group(&mut self, group: OpcGroup) -> Result<(), OpcError> {
        group.validate()?;
        if self.groups.contains_key(&group.name) {
            return Err(OpcError::DuplicateGroupName(group.name));
        }
        let device = self.device().ok_or_else(|| OpcError::ServerNotFound(self.server_name.clone()))?;
        let definitions = device.with(|d| {
            group
                .items
                .iter()
                .map(|a| d.definition(a).cloned())
                .collect::<Result<Vec<_>, PlcError>>()
        })?;
        let state = GroupState {
            definitions,
            last_reported: HashMap::new(),
            next_sequence: 1,
            created_ms: self.clock.now_ms(),
            last_window: None,
            group,
        };
        self.groups.insert(state.group.name.clone(), state);
        Ok(())
    }

    pub fn group(&self, name: &str) -> Result<&OpcGroup, OpcError> {
        self.groups.get(name).map(|g| &g.group).ok_or_else(|| OpcError::UnknownGroup(name.to_string()))
    }

    pub fn set_active(&mut self, name: &str, active: bool) -> Result<(), OpcError> {
        let g = self.groups.get_mut(name).ok_or_else(|| OpcError::UnknownGroup(name.to_string()))?;
        g.group.active = active;
        Ok(())
    }

    /// Item definitions of a group, in group order.
    pub fn definitions(&self, name: &str) -> Result<&[ItemDefinition], OpcError> {
        self.groups
            .get(name)
            .map(|g| g.definitions.as_slice())
            .ok_or_else(|| OpcError::UnknownGroup(name.to_string()))
    }

    /// Last reported state of every item in the group, in group order.
    pub fn reported(&self, name: &str) -> Result<Vec<(String, ItemState)>, OpcError> {
        let g = self.groups.get(name).ok_or_else(|| OpcError::UnknownGroup(name.to_string()))?;
        Ok(g.group
            .items
            .iter()
            .filter_map(|a| g.last_reported.get(a).map(|s| (a.clone(), *s)))
            .collect())
    }

    fn definition(&self, group: &str, address: &str) -> Result<&ItemDefinition, OpcError> {
        let g = self.groups.get(group).ok_or_else(|| OpcError::UnknownGroup(group.to_string()))?;
        g.definitions
            .iter()
            .find(|d| d.address == address)
            .ok_or_else(|| PlcError::UnknownAddress(address.to_string()).into())
    }

    /// Reads from the device, bypassing the deadband cache. An unreachable
    /// device yields BAD quality with the last known value.
    pub fn sync_read_item(&mut self, group: &str, address: &str) -> Result<ItemState, OpcError> {
        let def = self.definition(group, address)?.clone();
        let state = match self.device() {
            Some(d) => d.with(|m| m.read_item(address))?,
            None => {
                let last = self.last_known.get(address).copied();
                ItemState {
                    value: last.map(|s| s.value).unwrap_or(Value::zero(def.data_type)),
                    quality: Quality::Bad,
                    timestamp: last.map(|s| s.timestamp).unwrap_or(0),
                }
            }
        };
        self.last_known.insert(address.to_string(), state);
        Ok(state)
    }

    pub fn sync_write_item(&mut self, group: &str, address: &str, value: Value) -> Result<(), OpcError> {
        self.definition(group, address)?;
        let device = self.device().ok_or_else(|| PlcError::DeviceOffline(self.server_name.clone()))?;
        device.with(|m| m.write_item(address, value))?;
        Ok(())
    }

    /// Like [`sync_write_item`](Self::sync_write_item) but takes a JSON
    /// scalar, converted according to the item's data type.
    pub fn sync_write_json(&mut self, group: &str, address: &str, value: &Json) -> Result<(), OpcError> {
        let data_type = self.definition(group, address)?.data_type;
        let value = Value::from_json(value, data_type)?;
        self.sync_write_item(group, address, value)
    }

    /// One data-change scan. Returns `None` when the group is inactive, when
    /// this update-rate window already produced a scan, or when nothing
    /// moved past the deadband.
    pub fn poll_group(&mut self, name: &str) -> Result<Option<DataChangeEvent>, OpcError> {
        let now = self.clock.now_ms();
        let device = self.device();
        let g = self.groups.get_mut(name).ok_or_else(|| OpcError::UnknownGroup(name.to_string()))?;
        if !g.group.active {
            return Ok(None);
        }
        let window = now.saturating_sub(g.created_ms) / g.group.update_rate_ms;
        if g.last_window.is_some_and(|w| window <= w) {
            return Ok(None);
        }
        g.last_window = Some(window);

        let current: Vec<ItemState> = match &device {
            Some(d) => d.with(|m| {
                g.definitions
                    .iter()
                    .map(|def| m.read_item(&def.address).expect("group items validated at add_group"))
                    .collect()
            }),
            None => g
                .definitions
                .iter()
                .map(|def| {
                    let last = g.last_reported.get(&def.address).or(self.last_known.get(&def.address)).copied();
                    ItemState {
                        value: last.map(|s| s.value).unwrap_or(Value::zero(def.data_type)),
                        quality: Quality::Bad,
                        timestamp: last.map(|s| s.timestamp).unwrap_or(0),
                    }
                })
                .collect(),
        };

        let mut changes = Vec::new();
        for (def, state) in g.definitions.iter().zip(current) {
            self.last_known.insert(def.address.clone(), state);
            let report = match g.last_reported.get(&def.address) {
                None => true,
                Some(last) => exceeds_deadband(def, g.group.percent_deadband, last, &state),
            };
            if report {
                g.last_reported.insert(def.address.clone(), state);
                changes.push((def.address.clone(), state));
            }
        }
        if changes.is_empty() {
            return Ok(None);
        }
        let sequence_number = g.next_sequence;
        g.next_sequence += 1;
        Ok(Some(DataChangeEvent { group_name: name.to_string(), changes, sequence_number }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plc::{config::fixtures, DeviceModel};

    const W0: &str = "s7:[@LOCALSERVER]db1,w0";
    const W2: &str = "s7:[@LOCALSERVER]db1,w2";
    const SP: &str = "s7:[@LOCALSERVER]db1,w10";
    const SERVER: &str = "OPC.SimaticNET.winder";

    fn setup() -> (DeviceDirectory, Clock) {
        let dir = DeviceDirectory::new();
        dir.insert(DeviceHandle::manual(DeviceModel::load(fixtures::WINDER, 0).unwrap()));
        (dir, Clock::manual(0))
    }

    fn group1() -> OpcGroup {
        OpcGroup::new("group1", true, 400, 0.0).with_item(W0).with_item(W2)
    }

    #[test]
    fn connect_errors() {
        let (dir, clock) = setup();
        assert!(matches!(connect(&dir, "localhost", "OPC.Nope", "JOPC1"), Err(OpcError::ServerNotFound(_))));
        assert!(matches!(connect(&dir, "10.0.0.9", SERVER, "JOPC1"), Err(OpcError::ConnectFailed(_))));
        let _c = connect_with_clock(&dir, "localhost", SERVER, "JOPC1", clock.clone()).unwrap();
        assert!(matches!(connect(&dir, "localhost", SERVER, "JOPC1"), Err(OpcError::ConnectFailed(_))));
        drop(_c);
        assert!(connect(&dir, "localhost", SERVER, "JOPC1").is_ok());
    }

    #[test]
    fn first_poll_is_full_snapshot() {
        let (dir, clock) = setup();
        let mut c = connect_with_clock(&dir, "localhost", SERVER, "JOPC1", clock).unwrap();
        c.add_group(group1()).unwrap();
        let ev = c.poll_group("group1").unwrap().unwrap();
        assert_eq!(ev.sequence_number, 1);
        assert_eq!(ev.changes.iter().map(|(a, _)| a.as_str()).collect::<Vec<_>>(), vec![W0, W2]);
    }

    #[test]
    fn add_group_errors() {
        let (dir, clock) = setup();
        let mut c = connect_with_clock(&dir, "localhost", SERVER, "JOPC1", clock).unwrap();
        c.add_group(group1()).unwrap();
        assert!(matches!(c.add_group(group1()), Err(OpcError::DuplicateGroupName(_))));
        let bad = OpcGroup::new("g2", true, 400, 0.0).with_item("db9,w9");
        assert!(matches!(c.add_group(bad), Err(OpcError::Device(PlcError::UnknownAddress(_)))));
    }

    #[test]
    fn inactive_group_is_silent_until_activated() {
        let (dir, clock) = setup();
        let mut c = connect_with_clock(&dir, "localhost", SERVER, "JOPC1", clock.clone()).unwrap();
        c.add_group(OpcGroup { active: false, ..group1() }).unwrap();
        assert!(c.poll_group("group1").unwrap().is_none());
        clock.advance(400);
        assert!(c.poll_group("group1").unwrap().is_none());
        c.set_active("group1", true).unwrap();
        assert!(c.poll_group("group1").unwrap().is_some());
    }

    #[test]
    fn one_scan_per_window_and_no_event_without_change() {
        let (dir, clock) = setup();
        let mut c = connect_with_clock(&dir, "localhost", SERVER, "JOPC1", clock.clone()).unwrap();
        c.add_group(group1()).unwrap();
        assert!(c.poll_group("group1").unwrap().is_some());
        // Same window: suppressed even after the device moved.
        dir.get(SERVER).unwrap().with(|d| d.tick(100));
        assert!(c.poll_group("group1").unwrap().is_none());
        clock.advance(400);
        let ev = c.poll_group("group1").unwrap().unwrap();
        assert_eq!(ev.sequence_number, 2);
        clock.advance(400);
        assert!(c.poll_group("group1").unwrap().is_none(), "no device change, no event");
    }

    #[test]
    fn read_write_and_offline() {
        let (dir, clock) = setup();
        let mut c = connect_with_clock(&dir, "localhost", SERVER, "JOPC1", clock).unwrap();
        c.add_group(group1().with_item(SP)).unwrap();
        assert_eq!(c.sync_read_item("group1", W0).unwrap().quality, Quality::Good);
        assert!(matches!(c.sync_read_item("nogroup", W0), Err(OpcError::UnknownGroup(_))));
        c.sync_write_item("group1", SP, Value::Float64(800.0)).unwrap();
        assert_eq!(c.sync_read_item("group1", SP).unwrap().value, Value::Float64(800.0));
        assert_eq!(
            c.sync_write_item("group1", W2, Value::Float64(1.0)).unwrap_err().name(),
            "NotWritable"
        );

        let dev = dir.get(SERVER).unwrap();
        let before = c.sync_read_item("group1", W0).unwrap();
        dev.with(|d| d.set_online(false));
        let off = c.sync_read_item("group1", W0).unwrap();
        assert_eq!(off.quality, Quality::Bad);
        assert_eq!(off.value, before.value);
        assert_eq!(c.sync_write_item("group1", SP, Value::Float64(900.0)).unwrap_err().name(), "DeviceOffline");
        assert_eq!(dev.with(|d| d.read_item(SP).unwrap().value), Value::Float64(800.0));
    }

    #[test]
    fn restart_keeps_groups_and_sequence() {
        let (dir, clock) = setup();
        let mut c = connect_with_clock(&dir, "localhost", SERVER, "JOPC1", clock.clone()).unwrap();
        c.add_group(group1()).unwrap();
        assert_eq!(c.poll_group("group1").unwrap().unwrap().sequence_number, 1);

        dir.remove(SERVER);
        clock.advance(400);
        let down = c.poll_group("group1").unwrap().unwrap();
        assert_eq!(down.sequence_number, 2);
        assert!(down.changes.iter().all(|(_, s)| s.quality == Quality::Bad));

        dir.insert(DeviceHandle::manual(DeviceModel::load(fixtures::WINDER, 0).unwrap()));
        clock.advance(400);
        let up = c.poll_group("group1").unwrap().unwrap();
        assert_eq!(up.sequence_number, 3);
        assert!(up.changes.iter().all(|(_, s)| s.quality == Quality::Good));
    }
}
