use std::time::Duration;

use serde_json::{json, Value};
use tokio::time::Instant;
use tracing::{debug, info};

use super::{DirectoryError, Registry, ServiceDescription};
use crate::acl::{AclMessage, AgentId, Performative};
use crate::runtime::{Agent, AgentContext, Endpoint, TickerId};

pub const DF_ONTOLOGY: &str = "fipa-df-like";
pub const DISCOVER_RETRY_MS: u64 = 500;

const PURGE_PERIOD: Duration = Duration::from_secs(1);

/// The directory facilitator. Answers register/search/deregister requests
/// one at a time.
#[derive(Default)]
pub struct DfAgent {
    registry: Registry,
}

impl DfAgent {
    pub fn new() -> Self {
        Self::default()
    }

    fn handle(&mut self, ctx: &AgentContext, msg: &AclMessage) -> Result<Value, DirectoryError> {
        let sd = msg.content.get("sd").cloned().unwrap_or(Value::Null);
        match msg.content_str("action") {
            Some("register") => {
                let sd: ServiceDescription =
                    serde_json::from_value(sd).map_err(|e| DirectoryError::MalformedRequest(e.to_string()))?;
                if ctx.container().resolve(&sd.provider).is_none() {
                    return Err(DirectoryError::ProviderNotLive(sd.provider.to_string()));
                }
                self.registry.register(sd.clone())?;
                debug!(provider = %sd.provider, service = %sd.service_name, "registered");
                Ok(json!({"status": "ok", "results": [sd]}))
            }
            Some("search") => {
                let service_type = sd
                    .get("service_type")
                    .and_then(Value::as_str)
                    .ok_or_else(|| DirectoryError::MalformedRequest("sd.service_type missing".into()))?;
                let service_name = sd.get("service_name").and_then(Value::as_str);
                Ok(json!({"status": "ok", "results": self.registry.search(service_type, service_name)}))
            }
            Some("deregister") => {
                let provider: AgentId = sd
                    .get("provider")
                    .cloned()
                    .and_then(|p| serde_json::from_value(p).ok())
                    .ok_or_else(|| DirectoryError::MalformedRequest("sd.provider missing".into()))?;
                let removed = self.registry.deregister(&provider);
                if removed > 0 {
                    debug!(%provider, removed, "deregistered");
                }
                Ok(json!({"status": "ok", "removed": removed, "results": []}))
            }
            other => Err(DirectoryError::MalformedRequest(format!("unknown action {other:?}"))),
        }
    }
}

impl Agent for DfAgent {
    fn setup(&mut self, ctx: &mut AgentContext) {
        ctx.add_ticker(PURGE_PERIOD);
        info!(df = %ctx.aid(), "directory facilitator ready");
    }

    fn on_message(&mut self, ctx: &mut AgentContext, msg: AclMessage) {
        if msg.performative != Performative::Request || msg.ontology != DF_ONTOLOGY {
            return;
        }
        let reply = match self.handle(ctx, &msg) {
            Ok(content) => msg.reply(Performative::Inform, ctx.aid().clone()).content(content),
            Err(e) => msg
                .reply(Performative::Failure, ctx.aid().clone())
                .content(json!({"status": "error", "error": e.name(), "detail": e.to_string()})),
        };
        ctx.send(reply);
    }

    fn on_tick(&mut self, ctx: &mut AgentContext, _ticker: TickerId) {
        // Backstop for providers whose container vanished without a purge.
        for provider in self.registry.providers() {
            if ctx.container().resolve(&provider).is_none() {
                self.registry.deregister(&provider);
            }
        }
    }
}

/// A search request addressed to `df`.
pub fn search_request(requester: &AgentId, df: &AgentId, service_type: &str, service_name: Option<&str>) -> AclMessage {
    let mut sd = json!({"service_type": service_type});
    if let Some(name) = service_name {
        sd["service_name"] = json!(name);
    }
    AclMessage::new(Performative::Request, requester.clone())
        .to(df.clone())
        .ontology(DF_ONTOLOGY)
        .content(json!({"action": "search", "sd": sd}))
}

/// Parses the `results` of a directory reply.
pub fn parse_results(msg: &AclMessage) -> Vec<ServiceDescription> {
    msg.content
        .get("results")
        .cloned()
        .and_then(|r| serde_json::from_value(r).ok())
        .unwrap_or_default()
}

/// Searches every retry interval until a provider appears. Returns the
/// first match in provider order.
pub async fn discover(
    endpoint: &mut Endpoint,
    service_type: &str,
    service_name: &str,
    timeout: Duration,
) -> Result<ServiceDescription, DirectoryError> {
    if timeout.is_zero() {
        return Err(DirectoryError::MalformedRequest("timeout must be positive".into()));
    }
    let started = Instant::now();
    let deadline = started + timeout;
    let df = endpoint.container().aid(crate::runtime::DF_NAME)?;
    loop {
        let remaining = deadline.saturating_duration_since(Instant::now());
        let req = search_request(endpoint.aid(), &df, service_type, Some(service_name));
        if let Ok(reply) = endpoint.request(req, remaining.max(Duration::from_millis(1))).await {
            if let Some(first) = parse_results(&reply).into_iter().next() {
                return Ok(first);
            }
        }
        let next = Instant::now() + Duration::from_millis(DISCOVER_RETRY_MS);
        if next >= deadline {
            tokio::time::sleep_until(deadline).await;
            return Err(DirectoryError::DiscoveryTimeout {
                service_type: service_type.to_string(),
                service_name: service_name.to_string(),
                waited_ms: started.elapsed().as_millis() as u64,
            });
        }
        tokio::time::sleep_until(next).await;
    }
}
