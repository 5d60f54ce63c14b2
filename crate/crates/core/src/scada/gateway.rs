//! HTTP gateway onto one operator agent (schema `gateway-v1`).
//!
//! `GET /v1/events` is a server-sent event stream; every event's data is a
//! JSON object with `schema` and `type` (`telemetry`, `alarm`,
//! `subscription_state`). Request endpoints are relayed to the operator as
//! ACL requests, so the gateway never touches operator state directly.

use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{broadcast, oneshot, Mutex};
use tracing::warn;

use super::alarms::{AlarmChange, AlarmEvent};
use super::telemetry::{SubscriptionState, TelemetryPayload};
use super::{ScadaError, GATEWAY_ONTOLOGY};
use crate::acl::{AclMessage, AgentId, Performative};
use crate::runtime::{Container, Endpoint};

pub const SCHEMA: &str = "gateway-v1";

const REQUEST_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GatewayEvent {
    Telemetry {
        operator: AgentId,
        publisher: AgentId,
        #[serde(flatten)]
        payload: TelemetryPayload,
    },
    Alarm {
        operator: AgentId,
        change: AlarmChange,
        event: AlarmEvent,
    },
    SubscriptionState {
        operator: AgentId,
        service_name: String,
        publisher: Option<AgentId>,
        conversation_id: Option<String>,
        state: SubscriptionState,
    },
}

impl GatewayEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            GatewayEvent::Telemetry { .. } => "telemetry",
            GatewayEvent::Alarm { .. } => "alarm",
            GatewayEvent::SubscriptionState { .. } => "subscription_state",
        }
    }

    /// Wire form: the event with `schema` added.
    pub fn to_json(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("gateway event serializes");
        v["schema"] = json!(SCHEMA);
        v
    }
}

pub(crate) fn bind(addr: &str) -> Result<std::net::TcpListener, ScadaError> {
    let addr = if addr.starts_with(':') { format!("0.0.0.0{addr}") } else { addr.to_string() };
    let listener = std::net::TcpListener::bind(&addr).map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => ScadaError::AddressInUse(addr.clone()),
        _ => ScadaError::InvalidArguments(format!("gateway {addr}: {e}")),
    })?;
    listener.set_nonblocking(true).map_err(|e| ScadaError::InvalidArguments(e.to_string()))?;
    Ok(listener)
}

struct GatewayState {
    operator: AgentId,
    endpoint: Mutex<Endpoint>,
    events: broadcast::Sender<GatewayEvent>,
}

type Reply = (StatusCode, Json<Value>);

impl GatewayState {
    async fn ask(&self, content: Value) -> Reply {
        let mut ep = self.endpoint.lock().await;
        let conv = ep.new_conversation_id("gw");
        let req = AclMessage::new(Performative::Request, ep.aid().clone())
            .to(self.operator.clone())
            .ontology(GATEWAY_ONTOLOGY)
            .conversation(&conv)
            .reply_with(&conv)
            .content(content);
        match ep.request(req, REQUEST_TIMEOUT).await {
            Ok(reply) if reply.performative == Performative::Inform => (StatusCode::OK, Json(reply.content)),
            Ok(reply) => {
                let status = match reply.content_str("error") {
                    Some("UnknownItem" | "UnknownAlarm") => StatusCode::NOT_FOUND,
                    Some("MalformedRequest" | "AmbiguousAddress") => StatusCode::BAD_REQUEST,
                    Some("NotSubscribed" | "Refused") => StatusCode::FORBIDDEN,
                    _ => StatusCode::UNPROCESSABLE_ENTITY,
                };
                (status, Json(reply.content))
            }
            Err(e) => (
                StatusCode::GATEWAY_TIMEOUT,
                Json(json!({"status": "error", "error": e.name(), "detail": e.to_string()})),
            ),
        }
    }
}

#[derive(Deserialize)]
struct TrendQuery {
    address: String,
    device_id: Option<String>,
    from: Option<u64>,
    to: Option<u64>,
}

#[derive(Deserialize, Serialize)]
struct AckBody {
    address: String,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    device_id: Option<String>,
}

#[derive(Deserialize, Serialize)]
struct WriteBody {
    address: String,
    value: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    device_id: Option<String>,
}

async fn get_items(State(s): State<Arc<GatewayState>>) -> Reply {
    s.ask(json!({"action": "items"})).await
}

async fn get_state(State(s): State<Arc<GatewayState>>) -> Reply {
    s.ask(json!({"action": "state"})).await
}

async fn get_alarms(State(s): State<Arc<GatewayState>>) -> Reply {
    s.ask(json!({"action": "alarms"})).await
}

async fn get_trend(State(s): State<Arc<GatewayState>>, Query(q): Query<TrendQuery>) -> Reply {
    s.ask(json!({"action": "trend", "address": q.address, "device_id": q.device_id, "from": q.from, "to": q.to}))
        .await
}

async fn post_ack(State(s): State<Arc<GatewayState>>, Json(body): Json<AckBody>) -> Reply {
    let mut content = serde_json::to_value(body).expect("ack body serializes");
    content["action"] = json!("ack");
    s.ask(content).await
}

async fn post_write(State(s): State<Arc<GatewayState>>, Json(body): Json<WriteBody>) -> Reply {
    let mut content = serde_json::to_value(body).expect("write body serializes");
    content["action"] = json!("write");
    s.ask(content).await
}

async fn get_events(State(s): State<Arc<GatewayState>>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = s.events.subscribe();
    let hello = Event::default().event("hello").data(json!({"schema": SCHEMA, "operator": s.operator}).to_string());
    let live = stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(ev) => {
                    let event = Event::default().event(ev.kind()).data(ev.to_json().to_string());
                    return Some((Ok(event), rx));
                }
                Err(broadcast::error::RecvError::Lagged(n)) => warn!(skipped = n, "event stream lagging"),
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(stream::StreamExt::chain(stream::once(async { Ok(hello) }), live)).keep_alive(KeepAlive::default())
}

pub fn router(operator: AgentId, endpoint: Endpoint, events: broadcast::Sender<GatewayEvent>) -> Router {
    let state = Arc::new(GatewayState { operator, endpoint: Mutex::new(endpoint), events });
    Router::new()
        .route("/v1/events", get(get_events))
        .route("/v1/items", get(get_items))
        .route("/v1/state", get(get_state))
        .route("/v1/alarms", get(get_alarms))
        .route("/v1/trend", get(get_trend))
        .route("/v1/alarms/ack", post(post_ack))
        .route("/v1/write", post(post_write))
        .with_state(state)
}

pub(crate) async fn serve(
    container: Container,
    operator: AgentId,
    listener: std::net::TcpListener,
    events: broadcast::Sender<GatewayEvent>,
    stop: oneshot::Receiver<()>,
) {
    let name = format!("{}.gateway", operator.local_name());
    let endpoint = match container.endpoint(&name).await {
        Ok(ep) => ep,
        Err(e) => {
            warn!(error = %e, "gateway endpoint unavailable");
            return;
        }
    };
    let listener = match tokio::net::TcpListener::from_std(listener) {
        Ok(l) => l,
        Err(e) => {
            warn!(error = %e, "gateway listener unusable");
            return;
        }
    };
    let addr: Option<SocketAddr> = listener.local_addr().ok();
    let app = router(operator, endpoint, events);
    let result = axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = stop.await;
        })
        .await;
    if let Err(e) = result {
        warn!(?addr, error = %e, "gateway stopped");
    }
}
