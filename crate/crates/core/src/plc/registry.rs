use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::{Mutex, RwLock};
use tokio::task::JoinHandle;

use super::DeviceModel;

/// Shared handle to a running device. All reads, writes and ticks go
/// through one lock, so they are applied one at a time.
#[derive(Clone)]
pub struct DeviceHandle {
    model: Arc<Mutex<DeviceModel>>,
    ticker: Arc<Mutex<Option<JoinHandle<()>>>>,
}

impl DeviceHandle {
    /// A handle with no tick loop; the caller drives `tick`.
    pub fn manual(model: DeviceModel) -> DeviceHandle {
        DeviceHandle { model: Arc::new(Mutex::new(model)), ticker: Arc::new(Mutex::new(None)) }
    }

    /// Starts a tick loop on the current tokio runtime at the device's
    /// configured interval. Each tick advances simulated time by exactly
    /// that interval.
    pub fn spawn(model: DeviceModel) -> DeviceHandle {
        let handle = DeviceHandle::manual(model);
        let interval = handle.model.lock().tick_interval_ms();
        let model = Arc::clone(&handle.model);
        let task = tokio::spawn(async move {
            let mut timer = tokio::time::interval(Duration::from_millis(interval));
            timer.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
            timer.tick().await;
            loop {
                timer.tick().await;
                model.lock().tick(interval);
            }
        });
        *handle.ticker.lock() = Some(task);
        handle
    }

    pub fn with<R>(&self, f: impl FnOnce(&mut DeviceModel) -> R) -> R {
        f(&mut self.model.lock())
    }

    pub fn device_id(&self) -> String {
        self.model.lock().device_id().to_string()
    }

    pub fn server_name(&self) -> String {
        self.model.lock().server_name().to_string()
    }

    pub fn stop(&self) {
        if let Some(task) = self.ticker.lock().take() {
            task.abort();
        }
    }
}

/// Maps OPC server names to devices; the stand-in for an OPC server host.
#[derive(Clone, Default)]
pub struct DeviceDirectory {
    devices: Arc<RwLock<BTreeMap<String, DeviceHandle>>>,
    leases: Arc<Mutex<HashSet<(String, String)>>>,
}

/// Held by a client connection; released on drop.
pub struct ClientLease {
    key: (String, String),
    leases: Arc<Mutex<HashSet<(String, String)>>>,
}

impl Drop for ClientLease {
    fn drop(&mut self) {
        self.leases.lock().remove(&self.key);
    }
}

impl DeviceDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Claims the single connection slot for `(client, server_name)`.
    pub fn lease(&self, client: &str, server_name: &str) -> Option<ClientLease> {
        let key = (client.to_string(), server_name.to_string());
        self.leases
            .lock()
            .insert(key.clone())
            .then(|| ClientLease { key, leases: Arc::clone(&self.leases) })
    }

    /// Registers a device under its server name, replacing (and stopping)
    /// any previous device with that name.
    pub fn insert(&self, handle: DeviceHandle) {
        let name = handle.server_name();
        if let Some(old) = self.devices.write().insert(name, handle) {
            old.stop();
        }
    }

    pub fn get(&self, server_name: &str) -> Option<DeviceHandle> {
        self.devices.read().get(server_name).cloned()
    }

    /// Looks a device up by server name or by device id.
    pub fn find(&self, name: &str) -> Option<DeviceHandle> {
        if let Some(h) = self.get(name) {
            return Some(h);
        }
        self.devices.read().values().find(|h| h.device_id() == name).cloned()
    }

    pub fn remove(&self, server_name: &str) -> Option<DeviceHandle> {
        let removed = self.devices.write().remove(server_name);
        if let Some(h) = &removed {
            h.stop();
        }
        removed
    }

    pub fn server_names(&self) -> Vec<String> {
        self.devices.read().keys().cloned().collect()
    }

    pub fn stop_all(&self) {
        for h in self.devices.read().values() {
            h.stop();
        }
    }
}
