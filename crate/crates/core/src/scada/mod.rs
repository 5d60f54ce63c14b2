//! The SCADA agents: OPC-Agents that publish one device each, operator
//! agents that subscribe to them, and the HTTP gateway.
//!
//! Subscription conversation, ontology `scada-telemetry`:
//!
//! ```text
//! operator            OPC-Agent
//!    | REQUEST subscribe   |
//!    |-------------------->|
//!    |   AGREE (catalog)   |
//!    |<--------------------|
//!    |   INFORM snapshot   |
//!    |<--------------------|
//!    |   INFORM delta ...  |
//!    |<--------------------|
//!    | CANCEL              |
//!    |-------------------->|
//!    |   INFORM cancelled  |
//!    |<--------------------|
//! ```
//!
//! Writes use ontology `scada-command` and require an active subscription.

pub mod alarms;
pub mod gateway;
mod opc_agent;
mod operator;
mod telemetry;
pub mod trend;

pub use alarms::{evaluate_alarms, AlarmChange, AlarmEvent, AlarmKind, AlarmRule, AlarmState, AlarmTransition};
pub use gateway::GatewayEvent;
pub use opc_agent::{OpcAgent, OpcAgentConfig};
pub use operator::{AlarmRuleSpec, OperatorAgent, OperatorConfig, Target};
pub use telemetry::{
    cancel_request, command_result, send_write_command, subscribe_request, write_request, CatalogItem, CommandError,
    Subscription, SubscriptionState, TelemetryPayload, TelemetryUpdate,
};
pub use trend::{TrendSample, TrendSeries};

use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::plc::DeviceDirectory;
use crate::runtime::{AgentArgs, Container};

pub const TELEMETRY_ONTOLOGY: &str = "scada-telemetry";
pub const COMMAND_ONTOLOGY: &str = "scada-command";
pub const GATEWAY_ONTOLOGY: &str = "scada-gateway";
pub const DEFAULT_GROUP: &str = "group1";
pub const DEFAULT_UPDATE_RATE_MS: u64 = 400;
pub const CONNECT_RETRY_MS: u64 = 2000;
/// Consecutive UNREACHABLE deliveries before a subscription fails.
pub const DELIVERY_FAILURE_LIMIT: u32 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScadaError {
    #[error("AddressInUse: {0}")]
    AddressInUse(String),
    #[error("InvalidArguments: {0}")]
    InvalidArguments(String),
}

/// Registers the `opc-agent` and `operator` kinds on a container.
pub fn register_kinds(container: &Container, devices: &DeviceDirectory) {
    let devices = devices.clone();
    container.register_kind(
        "opc-agent",
        Arc::new(move |args, _| {
            let config = OpcAgentConfig::from_args(args)?;
            Ok(Box::new(OpcAgent::new(config, devices.clone())))
        }),
    );
    container.register_kind(
        "operator",
        Arc::new(|args, _| {
            let config = OperatorConfig::from_args(args)?;
            let agent = OperatorAgent::new(config).map_err(|e| e.to_string())?;
            Ok(Box::new(agent))
        }),
    );
}

/// A `|`-separated argument as a list; empty when absent.
pub(crate) fn arg_list(args: &AgentArgs, key: &str) -> Vec<String> {
    args.get(key)
        .map(|v| v.split('|').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect())
        .unwrap_or_default()
}

pub(crate) fn parse_arg<T: FromStr>(args: &AgentArgs, key: &str) -> Result<Option<T>, String> {
    args.get(key)
        .map(|v| v.parse::<T>().map_err(|_| format!("argument {key}={v:?} is not valid")))
        .transpose()
}
