//! Agent platform runtime.
//!
//! A platform is one main container plus any number of joined containers,
//! connected in a star over TCP links that carry ACL frames. Each container
//! hosts agents; every agent owns a bounded mailbox and runs its behaviours
//! serially on one task. The main container keeps the authoritative route
//! table (agent name to container) and replicates it to the others.
//!
//! Platform management traffic (container registration, agent
//! registration, heartbeats, route updates, `ps`) rides the same frame
//! format under the `platform-mgmt` ontology.

mod agent;
mod container;
mod endpoint;
mod link;

pub use agent::{Agent, AgentContext, TickerId};
pub use container::{
    join_container, join_container_with, start_main_container, start_main_container_with, AgentArgs,
    AgentFactory, Container, ContainerConfig, RouteEntry,
};
pub use endpoint::Endpoint;
pub use link::query_ps;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acl::AgentId;

pub const MGMT_ONTOLOGY: &str = "platform-mgmt";
pub const AMS_NAME: &str = "ams";
pub const DF_NAME: &str = "df";
pub const DEFAULT_HEARTBEAT_MS: u64 = 2000;
/// Missed heartbeats after which a container is declared dead.
pub const HEARTBEAT_MISSES: u32 = 3;
pub const DEFAULT_MAILBOX_CAPACITY: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DeliveryStatus {
    Delivered,
    UnknownAgent,
    Unreachable,
}

impl fmt::Display for DeliveryStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeliveryStatus::Delivered => "DELIVERED",
            DeliveryStatus::UnknownAgent => "UNKNOWN_AGENT",
            DeliveryStatus::Unreachable => "UNREACHABLE",
        })
    }
}

/// Per-receiver outcome of one send.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DeliveryReport {
    pub statuses: Vec<(AgentId, DeliveryStatus)>,
}

impl DeliveryReport {
    pub fn status(&self, receiver: &AgentId) -> Option<DeliveryStatus> {
        self.statuses.iter().find(|(r, _)| r == receiver).map(|(_, s)| *s)
    }

    pub fn all_delivered(&self) -> bool {
        self.statuses.iter().all(|(_, s)| *s == DeliveryStatus::Delivered)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("AddressInUse: {0}")]
    AddressInUse(String),
    #[error("MainUnreachable: {0}")]
    MainUnreachable(String),
    #[error("DuplicateContainerId: {0:?}")]
    DuplicateContainerId(String),
    #[error("DuplicateAgentName: {0:?}")]
    DuplicateAgentName(String),
    #[error("UnknownAgentKind: {0:?}")]
    UnknownAgentKind(String),
    #[error("UnknownAgent: {0}")]
    UnknownAgent(String),
    #[error("InvalidArguments: {0}")]
    InvalidArguments(String),
    #[error("PlatformMismatch: {0}")]
    PlatformMismatch(String),
    #[error("AlreadyCapturing")]
    AlreadyCapturing,
    #[error("Timeout: {0}")]
    Timeout(String),
    #[error("Io: {0}")]
    Io(String),
    #[error("Protocol: {0}")]
    Protocol(String),
}

impl RuntimeError {
    pub fn name(&self) -> &'static str {
        match self {
            RuntimeError::AddressInUse(_) => "AddressInUse",
            RuntimeError::MainUnreachable(_) => "MainUnreachable",
            RuntimeError::DuplicateContainerId(_) => "DuplicateContainerId",
            RuntimeError::DuplicateAgentName(_) => "DuplicateAgentName",
            RuntimeError::UnknownAgentKind(_) => "UnknownAgentKind",
            RuntimeError::UnknownAgent(_) => "UnknownAgent",
            RuntimeError::InvalidArguments(_) => "InvalidArguments",
            RuntimeError::PlatformMismatch(_) => "PlatformMismatch",
            RuntimeError::AlreadyCapturing => "AlreadyCapturing",
            RuntimeError::Timeout(_) => "Timeout",
            RuntimeError::Io(_) => "Io",
            RuntimeError::Protocol(_) => "Protocol",
        }
    }

    fn from_name(name: &str, detail: String) -> RuntimeError {
        match name {
            "DuplicateContainerId" => RuntimeError::DuplicateContainerId(detail),
            "DuplicateAgentName" => RuntimeError::DuplicateAgentName(detail),
            "UnknownAgent" => RuntimeError::UnknownAgent(detail),
            "PlatformMismatch" => RuntimeError::PlatformMismatch(detail),
            _ => RuntimeError::Protocol(format!("{name}: {detail}")),
        }
    }
}
