//! OPC-DA-style client access to simulated devices.
//!
//! A connection owns named [`OpcGroup`]s. Data-change notification is done by
//! polling: each [`OpcConnection::poll_group`] call at the group's update rate
//! compares the device's current values against what was last reported and
//! emits a [`DataChangeEvent`] for the items that moved past the deadband.

mod connection;
mod group;

pub use connection::{connect, connect_with_clock, OpcConnection};
pub use group::{exceeds_deadband, DataChangeEvent, OpcGroup};

use thiserror::Error;

use crate::plc::PlcError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpcError {
    #[error("ServerNotFound: {0:?}")]
    ServerNotFound(String),
    #[error("ConnectFailed: {0}")]
    ConnectFailed(String),
    #[error("DuplicateGroupName: {0:?}")]
    DuplicateGroupName(String),
    #[error("UnknownGroup: {0:?}")]
    UnknownGroup(String),
    #[error("InvalidGroup: {0}")]
    InvalidGroup(String),
    #[error(transparent)]
    Device(#[from] PlcError),
}

impl OpcError {
    pub fn name(&self) -> &'static str {
        match self {
            OpcError::ServerNotFound(_) => "ServerNotFound",
            OpcError::ConnectFailed(_) => "ConnectFailed",
            OpcError::DuplicateGroupName(_) => "DuplicateGroupName",
            OpcError::UnknownGroup(_) => "UnknownGroup",
            OpcError::InvalidGroup(_) => "InvalidGroup",
            OpcError::Device(e) => e.name(),
        }
    }
}
