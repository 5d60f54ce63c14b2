//! Yellow-page directory: service descriptions and the `df` agent that
//! serves them.

mod agent;
mod registry;

pub use agent::{discover, parse_results, search_request, DfAgent, DF_ONTOLOGY, DISCOVER_RETRY_MS};
pub use registry::{Registry, ServiceDescription};

use thiserror::Error;

use crate::runtime::RuntimeError;

/// Service type announced by OPC-Agents.
pub const PROCESS_MONITORING: &str = "process-monitoring";

/// How often providers re-announce themselves.
pub const REANNOUNCE_MS: u64 = 30_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DirectoryError {
    #[error("DuplicateRegistration: {0}")]
    DuplicateRegistration(String),
    #[error("ProviderNotLive: {0}")]
    ProviderNotLive(String),
    #[error("DiscoveryTimeout: no {service_type}/{service_name} after {waited_ms} ms")]
    DiscoveryTimeout { service_type: String, service_name: String, waited_ms: u64 },
    #[error("MalformedRequest: {0}")]
    MalformedRequest(String),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

impl DirectoryError {
    pub fn name(&self) -> &'static str {
        match self {
            DirectoryError::DuplicateRegistration(_) => "DuplicateRegistration",
            DirectoryError::ProviderNotLive(_) => "ProviderNotLive",
            DirectoryError::DiscoveryTimeout { .. } => "DiscoveryTimeout",
            DirectoryError::MalformedRequest(_) => "MalformedRequest",
            DirectoryError::Runtime(e) => e.name(),
        }
    }
}
