use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::{COMMAND_ONTOLOGY, TELEMETRY_ONTOLOGY};
use crate::acl::{AclMessage, AgentId, Performative};
use crate::plc::{ItemState, Quality, Value};
use crate::runtime::{Endpoint, RuntimeError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelemetryUpdate {
    pub address: String,
    pub value: Value,
    pub quality: Quality,
    pub timestamp: u64,
}

impl TelemetryUpdate {
    pub fn new(address: impl Into<String>, state: ItemState) -> Self {
        TelemetryUpdate { address: address.into(), value: state.value, quality: state.quality, timestamp: state.timestamp }
    }
}

/// Body of every subscription INFORM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelemetryPayload {
    pub device_id: String,
    pub group: String,
    pub publisher_sequence: u64,
    /// True for the first INFORM of a subscription, which carries every
    /// subscribed item; later INFORMs carry only changes.
    pub snapshot: bool,
    pub updates: Vec<TelemetryUpdate>,
}

impl TelemetryPayload {
    pub fn from_message(msg: &AclMessage) -> Option<TelemetryPayload> {
        serde_json::from_value(msg.content.clone()).ok()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SubscriptionState {
    Pending,
    Active,
    Cancelled,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subscription {
    pub subscriber: AgentId,
    pub publisher: AgentId,
    pub conversation_id: String,
    pub group_name: String,
    pub item_filter: Option<Vec<String>>,
    pub state: SubscriptionState,
    pub informs_sent: u64,
}

impl Subscription {
    pub fn wants(&self, address: &str) -> bool {
        self.item_filter.as_ref().is_none_or(|f| f.iter().any(|a| a == address))
    }
}

/// Item metadata sent in the AGREE of a subscription.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogItem {
    pub address: String,
    pub name: String,
    pub data_type: crate::plc::DataType,
    pub eu_low: f64,
    pub eu_high: f64,
    pub unit: String,
    pub writable: bool,
}

impl From<&crate::plc::ItemDefinition> for CatalogItem {
    fn from(d: &crate::plc::ItemDefinition) -> Self {
        CatalogItem {
            address: d.address.clone(),
            name: d.name.clone(),
            data_type: d.data_type,
            eu_low: d.eu_low,
            eu_high: d.eu_high,
            unit: d.unit.clone(),
            writable: d.writable,
        }
    }
}

pub fn subscribe_request(
    subscriber: &AgentId,
    publisher: &AgentId,
    conversation_id: &str,
    items: Option<&[String]>,
) -> AclMessage {
    let mut content = json!({"action": "subscribe"});
    if let Some(items) = items {
        content["items"] = json!(items);
    }
    AclMessage::new(Performative::Request, subscriber.clone())
        .to(publisher.clone())
        .ontology(TELEMETRY_ONTOLOGY)
        .conversation(conversation_id)
        .reply_with(conversation_id)
        .content(content)
}

pub fn cancel_request(subscriber: &AgentId, publisher: &AgentId, conversation_id: &str) -> AclMessage {
    AclMessage::new(Performative::Cancel, subscriber.clone())
        .to(publisher.clone())
        .ontology(TELEMETRY_ONTOLOGY)
        .conversation(conversation_id)
        .content(json!({"action": "cancel"}))
}

pub fn write_request(sender: &AgentId, publisher: &AgentId, conversation_id: &str, address: &str, value: Json) -> AclMessage {
    AclMessage::new(Performative::Request, sender.clone())
        .to(publisher.clone())
        .ontology(COMMAND_ONTOLOGY)
        .conversation(conversation_id)
        .reply_with(conversation_id)
        .content(json!({"action": "write", "address": address, "value": value}))
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CommandError {
    /// The publisher declined: no active subscription, unknown item, etc.
    #[error("Refused: {0}")]
    Refused(String),
    /// The write reached the device layer and failed; carries the error name.
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

impl CommandError {
    pub fn name(&self) -> &str {
        match self {
            CommandError::Refused(_) => "Refused",
            CommandError::Failed(name) => name,
            CommandError::Runtime(e) => e.name(),
        }
    }
}

/// Interprets the publisher's answer to a write.
pub fn command_result(reply: &AclMessage) -> Result<(), CommandError> {
    match reply.performative {
        Performative::Inform => Ok(()),
        Performative::Refuse => Err(CommandError::Refused(reply.content_str("reason").unwrap_or("refused").to_string())),
        _ => Err(CommandError::Failed(reply.content_str("error").unwrap_or("Failure").to_string())),
    }
}

/// Writes one item through an OPC-Agent. The endpoint must hold an active
/// subscription to `publisher`.
pub async fn send_write_command(
    endpoint: &mut Endpoint,
    publisher: &AgentId,
    address: &str,
    value: Json,
    timeout: Duration,
) -> Result<(), CommandError> {
    let conv = endpoint.new_conversation_id("write");
    let req = write_request(endpoint.aid(), publisher, &conv, address, value);
    let reply = endpoint.request(req, timeout).await?;
    command_result(&reply)
}
