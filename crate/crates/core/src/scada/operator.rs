use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use tokio::sync::{broadcast, oneshot};
use tokio::time::Instant;
use tracing::{debug, info, warn};

use super::alarms::{evaluate_alarms, AlarmChange, AlarmKind, AlarmRule, AlarmState, DEFAULT_HYSTERESIS_FRACTION};
use super::gateway::{self, GatewayEvent};
use super::telemetry::{subscribe_request, write_request, CatalogItem, SubscriptionState, TelemetryPayload, TelemetryUpdate};
use super::trend::{TrendSample, TrendSeries, DEFAULT_TREND_CAPACITY};
use super::{arg_list, parse_arg, ScadaError, COMMAND_ONTOLOGY, GATEWAY_ONTOLOGY, TELEMETRY_ONTOLOGY};
use crate::acl::{AclMessage, AgentId, Performative};
use crate::directory::{parse_results, search_request, DF_ONTOLOGY, DISCOVER_RETRY_MS, PROCESS_MONITORING};
use crate::runtime::{Agent, AgentArgs, AgentContext, TickerId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub service_type: String,
    pub service_name: String,
}

impl Target {
    pub fn monitoring(service_name: impl Into<String>) -> Self {
        Target { service_type: PROCESS_MONITORING.into(), service_name: service_name.into() }
    }
}

/// An alarm rule as configured; the hysteresis defaults from the item's EU
/// range once the publisher's catalog is known.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlarmRuleSpec {
    pub device_id: Option<String>,
    pub address: String,
    pub low_limit: Option<f64>,
    pub high_limit: Option<f64>,
    pub hysteresis: Option<f64>,
}

impl AlarmRuleSpec {
    /// `[device/]address:low:high[:hysteresis]`, with `-` or nothing for an
    /// absent limit. Addresses may contain `:`; the limits are taken from
    /// the right.
    pub fn parse(text: &str) -> Result<Self, String> {
        let bad = || format!("alarm rule {text:?}: expected address:low:high[:hysteresis]");
        let is_limit = |s: &str| matches!(s.trim(), "" | "-") || s.trim().parse::<f64>().is_ok();
        let parts: Vec<&str> = text.split(':').collect();
        let trailing = parts.iter().rev().take_while(|p| is_limit(p)).count().min(3);
        if trailing < 2 || trailing >= parts.len() {
            return Err(bad());
        }
        let (head, limits) = parts.split_at(parts.len() - trailing);
        let num = |s: &str| -> Option<f64> { s.trim().parse().ok() };
        let head = head.join(":");
        let (device_id, address) = match head.split_once('/') {
            Some((d, a)) => (Some(d.to_string()), a.to_string()),
            None => (None, head),
        };
        if address.is_empty() {
            return Err(bad());
        }
        Ok(AlarmRuleSpec {
            device_id,
            address,
            low_limit: num(limits[0]),
            high_limit: num(limits[1]),
            hysteresis: limits.get(2).and_then(|h| num(h)),
        })
    }
}

#[derive(Clone, Debug)]
pub struct OperatorConfig {
    pub targets: Vec<Target>,
    pub alarm_rules: Vec<AlarmRuleSpec>,
    pub trend_capacity: usize,
    /// How long discovery waits before warning; it keeps retrying after.
    pub discovery_timeout: Duration,
    /// Restricts every subscription to these addresses.
    pub items: Option<Vec<String>>,
    /// Where to serve the HTTP gateway, if anywhere.
    pub gateway: Option<String>,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig {
            targets: Vec::new(),
            alarm_rules: Vec::new(),
            trend_capacity: DEFAULT_TREND_CAPACITY,
            discovery_timeout: Duration::from_secs(10),
            items: None,
            gateway: None,
        }
    }
}

impl OperatorConfig {
    pub fn new(targets: Vec<Target>) -> Self {
        OperatorConfig { targets, ..Self::default() }
    }

    /// Keys: `target` (`|`-separated service names), `service_type`,
    /// `alarm` (`|`-separated rules), `trend`, `discovery_timeout_ms`,
    /// `items`, `gateway`.
    pub fn from_args(args: &AgentArgs) -> Result<Self, String> {
        let service_type = args.get("service_type").cloned().unwrap_or(PROCESS_MONITORING.into());
        let targets: Vec<Target> = arg_list(args, "target")
            .into_iter()
            .map(|n| Target { service_type: service_type.clone(), service_name: n })
            .collect();
        let mut c = OperatorConfig::new(targets);
        c.alarm_rules = arg_list(args, "alarm").iter().map(|r| AlarmRuleSpec::parse(r)).collect::<Result<_, _>>()?;
        if let Some(n) = parse_arg::<usize>(args, "trend")? {
            c.trend_capacity = n.max(1);
        }
        if let Some(ms) = parse_arg::<u64>(args, "discovery_timeout_ms")? {
            c.discovery_timeout = Duration::from_millis(ms.max(1));
        }
        let items = arg_list(args, "items");
        c.items = (!items.is_empty()).then_some(items);
        c.gateway = args.get("gateway").cloned();
        Ok(c)
    }
}

enum Phase {
    Discovering { since: Instant, warned: bool, search: Option<(String, Instant)>, next_try: Instant },
    Subscribing { publisher: AgentId, conversation: String },
    Active { publisher: AgentId, conversation: String },
}

struct Slot {
    target: Target,
    phase: Phase,
    requests_sent: u64,
    informs_received: u64,
    gaps: u64,
    last_sequence: Option<u64>,
    device_id: Option<String>,
    catalog: Vec<CatalogItem>,
}

impl Slot {
    fn discovering(now: Instant) -> Phase {
        Phase::Discovering { since: now, warned: false, search: None, next_try: now }
    }

    fn conversation(&self) -> Option<&str> {
        match &self.phase {
            Phase::Subscribing { conversation, .. } | Phase::Active { conversation, .. } => Some(conversation),
            Phase::Discovering { .. } => None,
        }
    }

    fn publisher(&self) -> Option<&AgentId> {
        match &self.phase {
            Phase::Subscribing { publisher, .. } | Phase::Active { publisher, .. } => Some(publisher),
            Phase::Discovering { .. } => None,
        }
    }

    fn state(&self) -> SubscriptionState {
        match self.phase {
            Phase::Discovering { .. } | Phase::Subscribing { .. } => SubscriptionState::Pending,
            Phase::Active { .. } => SubscriptionState::Active,
        }
    }
}

type ItemKey = (String, String);

/// Discovers its targets, subscribes once to each, and keeps latest
/// values, alarms and trends. Optionally serves the HTTP gateway.
pub struct OperatorAgent {
    config: OperatorConfig,
    slots: Vec<Slot>,
    latest: BTreeMap<ItemKey, TelemetryUpdate>,
    trends: BTreeMap<ItemKey, TrendSeries>,
    rules: Vec<AlarmRule>,
    alarms: AlarmState,
    pending_writes: HashMap<String, AclMessage>,
    events: broadcast::Sender<GatewayEvent>,
    gateway_listener: Option<std::net::TcpListener>,
    gateway_addr: Option<SocketAddr>,
    gateway_stop: Option<oneshot::Sender<()>>,
    discovery_ticker: Option<TickerId>,
}

impl OperatorAgent {
    pub fn new(config: OperatorConfig) -> Result<Self, ScadaError> {
        let (events, _) = broadcast::channel(4096);
        let mut gateway_listener = None;
        let mut gateway_addr = None;
        if let Some(addr) = &config.gateway {
            let l = gateway::bind(addr)?;
            gateway_addr = l.local_addr().ok();
            gateway_listener = Some(l);
        }
        Ok(OperatorAgent {
            config,
            slots: Vec::new(),
            latest: BTreeMap::new(),
            trends: BTreeMap::new(),
            rules: Vec::new(),
            alarms: AlarmState::new(),
            pending_writes: HashMap::new(),
            events,
            gateway_listener,
            gateway_addr,
            gateway_stop: None,
            discovery_ticker: None,
        })
    }

    /// Live gateway events. Subscribe before spawning to see the first ones.
    pub fn subscribe_events(&self) -> broadcast::Receiver<GatewayEvent> {
        self.events.subscribe()
    }

    pub fn gateway_addr(&self) -> Option<SocketAddr> {
        self.gateway_addr
    }

    fn publish(&self, event: GatewayEvent) {
        let _ = self.events.send(event);
    }

    fn publish_state(&self, ctx: &AgentContext, slot: &Slot) {
        self.publish(GatewayEvent::SubscriptionState {
            operator: ctx.aid().clone(),
            service_name: slot.target.service_name.clone(),
            publisher: slot.publisher().cloned(),
            conversation_id: slot.conversation().map(str::to_string),
            state: slot.state(),
        });
    }

    fn drive_discovery(&mut self, ctx: &mut AgentContext) {
        let now = Instant::now();
        let df = ctx.df();
        let retry = Duration::from_millis(DISCOVER_RETRY_MS);
        let timeout = self.config.discovery_timeout;
        let mut lost = Vec::new();
        for (i, slot) in self.slots.iter_mut().enumerate() {
            match &mut slot.phase {
                Phase::Discovering { since, warned, search, next_try } => {
                    if !*warned && now.duration_since(*since) >= timeout {
                        warn!(
                            agent = %ctx.aid(),
                            service = %slot.target.service_name,
                            "DiscoveryTimeout: no provider after {} ms, still retrying",
                            timeout.as_millis()
                        );
                        *warned = true;
                    }
                    let outstanding = search.as_ref().is_some_and(|(_, at)| now.duration_since(*at) < Duration::from_secs(5));
                    if outstanding || now < *next_try {
                        continue;
                    }
                    let conv = ctx.new_conversation_id("df-search");
                    let req = search_request(ctx.aid(), &df, &slot.target.service_type, Some(&slot.target.service_name))
                        .conversation(&conv)
                        .reply_with(&conv);
                    ctx.send(req);
                    *search = Some((conv, now));
                    *next_try = now + retry;
                }
                Phase::Subscribing { publisher, .. } | Phase::Active { publisher, .. } => {
                    if ctx.container().resolve(publisher).is_none() {
                        lost.push(i);
                    }
                }
            }
        }
        for i in lost {
            warn!(agent = %ctx.aid(), service = %self.slots[i].target.service_name, "publisher left the platform, rediscovering");
            self.reset_slot(ctx, i, now);
        }
    }

    fn reset_slot(&mut self, ctx: &AgentContext, i: usize, now: Instant) {
        self.slots[i].phase = Slot::discovering(now);
        self.slots[i].last_sequence = None;
        self.publish_state(ctx, &self.slots[i]);
    }

    fn handle_search_reply(&mut self, ctx: &mut AgentContext, msg: &AclMessage) {
        let Some(i) = self.slots.iter().position(|s| {
            matches!(&s.phase, Phase::Discovering { search: Some((c, _)), .. } if *c == msg.conversation_id)
        }) else {
            return;
        };
        let found = parse_results(msg).into_iter().next();
        let Some(sd) = found else {
            if let Phase::Discovering { search, .. } = &mut self.slots[i].phase {
                *search = None;
            }
            return;
        };
        let conv = ctx.new_conversation_id("sub");
        let req = subscribe_request(ctx.aid(), &sd.provider, &conv, self.config.items.as_deref());
        let slot = &mut self.slots[i];
        slot.requests_sent += 1;
        slot.phase = Phase::Subscribing { publisher: sd.provider.clone(), conversation: conv };
        info!(agent = %ctx.aid(), publisher = %sd.provider, service = %slot.target.service_name, "subscribing");
        ctx.send(req);
    }

    fn slot_for(&self, conversation: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.conversation() == Some(conversation))
    }

    fn handle_telemetry(&mut self, ctx: &mut AgentContext, msg: AclMessage) {
        let Some(i) = self.slot_for(&msg.conversation_id) else {
            debug!(agent = %ctx.aid(), conv = %msg.conversation_id, "telemetry for unknown conversation");
            return;
        };
        match msg.performative {
            Performative::Agree => {
                let catalog: Vec<CatalogItem> =
                    msg.content.get("items").and_then(|v| serde_json::from_value(v.clone()).ok()).unwrap_or_default();
                let slot = &mut self.slots[i];
                slot.device_id = msg.content_str("device_id").map(str::to_string);
                slot.catalog = catalog;
                if let Phase::Subscribing { publisher, conversation } = &slot.phase {
                    slot.phase = Phase::Active { publisher: publisher.clone(), conversation: conversation.clone() };
                }
                self.resolve_rules();
                self.publish_state(ctx, &self.slots[i]);
            }
            Performative::Inform => {
                let Some(payload) = TelemetryPayload::from_message(&msg) else { return };
                let slot = &mut self.slots[i];
                if let Phase::Subscribing { publisher, conversation } = &slot.phase {
                    slot.phase = Phase::Active { publisher: publisher.clone(), conversation: conversation.clone() };
                }
                slot.informs_received += 1;
                let seq = payload.publisher_sequence;
                if let Some(last) = slot.last_sequence {
                    if seq > last + 1 {
                        slot.gaps += seq - last - 1;
                        warn!(agent = %ctx.aid(), expected = last + 1, got = seq, "telemetry sequence gap");
                    }
                }
                slot.last_sequence = Some(slot.last_sequence.map_or(seq, |l| l.max(seq)));
                self.ingest(ctx, &msg.sender, payload);
            }
            Performative::Refuse | Performative::Failure => {
                warn!(
                    agent = %ctx.aid(),
                    publisher = %msg.sender,
                    reason = msg.content_str("reason").or(msg.content_str("error")).unwrap_or("?"),
                    "subscription ended by publisher"
                );
                let now = Instant::now();
                self.reset_slot(ctx, i, now);
                if let Phase::Discovering { next_try, .. } = &mut self.slots[i].phase {
                    *next_try = now + Duration::from_secs(2);
                }
            }
            _ => {}
        }
    }

    fn resolve_rules(&mut self) {
        let mut rules = Vec::new();
        for slot in &self.slots {
            let Some(device) = &slot.device_id else { continue };
            for spec in &self.config.alarm_rules {
                if spec.device_id.as_ref().is_some_and(|d| d != device) {
                    continue;
                }
                let Some(item) = slot.catalog.iter().find(|c| c.address == spec.address) else { continue };
                rules.push(AlarmRule {
                    device_id: Some(device.clone()),
                    address: spec.address.clone(),
                    low_limit: spec.low_limit,
                    high_limit: spec.high_limit,
                    hysteresis: spec
                        .hysteresis
                        .unwrap_or((item.eu_high - item.eu_low) * DEFAULT_HYSTERESIS_FRACTION),
                });
            }
        }
        self.rules = rules;
    }

    fn ingest(&mut self, ctx: &AgentContext, publisher: &AgentId, payload: TelemetryPayload) {
        for u in &payload.updates {
            let key = (payload.device_id.clone(), u.address.clone());
            let capacity = self.config.trend_capacity;
            self.trends
                .entry(key.clone())
                .or_insert_with(|| TrendSeries::new(u.address.clone(), capacity))
                .append(TrendSample { timestamp: u.timestamp, value: u.value.as_f64(), quality: u.quality });
            self.latest.insert(key, u.clone());
        }
        let transitions = evaluate_alarms(&self.rules, &payload, &mut self.alarms);
        self.publish(GatewayEvent::Telemetry { operator: ctx.aid().clone(), publisher: publisher.clone(), payload });
        for t in transitions {
            info!(agent = %ctx.aid(), kind = %t.event.kind, address = %t.event.address, change = ?t.change, "alarm");
            self.publish(GatewayEvent::Alarm { operator: ctx.aid().clone(), change: t.change, event: t.event });
        }
    }

    fn catalog_item(&self, device_id: &str, address: &str) -> Option<&CatalogItem> {
        self.slots
            .iter()
            .filter(|s| s.device_id.as_deref() == Some(device_id))
            .flat_map(|s| s.catalog.iter())
            .find(|c| c.address == address)
    }

    /// Finds the device for an address when the request did not name one.
    fn device_for(&self, device_id: Option<&str>, address: &str) -> Result<String, &'static str> {
        if let Some(d) = device_id {
            return Ok(d.to_string());
        }
        let mut owners = self
            .slots
            .iter()
            .filter(|s| s.catalog.iter().any(|c| c.address == address))
            .filter_map(|s| s.device_id.clone());
        match (owners.next(), owners.next()) {
            (Some(d), None) => Ok(d),
            (Some(_), Some(_)) => Err("AmbiguousAddress"),
            (None, _) => Err("UnknownItem"),
        }
    }

    fn state_json(&self, ctx: &AgentContext) -> Json {
        let subs: Vec<Json> = self
            .slots
            .iter()
            .map(|s| {
                json!({
                    "service_type": s.target.service_type,
                    "service_name": s.target.service_name,
                    "publisher": s.publisher(),
                    "conversation_id": s.conversation(),
                    "state": s.state(),
                    "device_id": s.device_id,
                    "requests_sent": s.requests_sent,
                    "informs_received": s.informs_received,
                    "gaps": s.gaps,
                    "last_sequence": s.last_sequence,
                })
            })
            .collect();
        json!({
            "status": "ok",
            "operator": ctx.aid(),
            "subscriptions": subs,
            "open_alarms": self.alarms.open_events().len(),
            "gateway": self.gateway_addr.map(|a| a.to_string()),
        })
    }

    fn items_json(&self) -> Json {
        let mut items = Vec::new();
        for slot in &self.slots {
            let Some(device) = &slot.device_id else { continue };
            for c in &slot.catalog {
                let latest = self.latest.get(&(device.clone(), c.address.clone()));
                items.push(json!({
                    "device_id": device,
                    "address": c.address,
                    "name": c.name,
                    "unit": c.unit,
                    "data_type": c.data_type,
                    "eu_low": c.eu_low,
                    "eu_high": c.eu_high,
                    "writable": c.writable,
                    "value": latest.map(|u| u.value),
                    "quality": latest.map(|u| u.quality),
                    "timestamp": latest.map(|u| u.timestamp),
                }));
            }
        }
        json!({"status": "ok", "items": items})
    }

    fn handle_gateway(&mut self, ctx: &mut AgentContext, msg: AclMessage) {
        let c = &msg.content;
        let device_arg = c.get("device_id").and_then(Json::as_str);
        let address = c.get("address").and_then(Json::as_str).unwrap_or_default().to_string();
        let result: Result<Json, (&str, String)> = match msg.content_str("action") {
            Some("state") => Ok(self.state_json(ctx)),
            Some("items") => Ok(self.items_json()),
            Some("alarms") => Ok(json!({"status": "ok", "open": self.alarms.open_events(), "history": self.alarms.history()})),
            Some("trend") => self.device_for(device_arg, &address).map_err(|e| (e, address.clone())).map(|device| {
                let from = c.get("from").and_then(Json::as_u64).unwrap_or(0);
                let to = c.get("to").and_then(Json::as_u64).unwrap_or(u64::MAX);
                let series = self.trends.get(&(device.clone(), address.clone()));
                json!({
                    "status": "ok",
                    "device_id": device,
                    "address": address,
                    "samples": series.map(|s| s.window(from, to)).unwrap_or_default(),
                    "dropped": series.map_or(0, TrendSeries::dropped),
                })
            }),
            Some("ack") => {
                let kind: Option<AlarmKind> = c.get("kind").and_then(|k| serde_json::from_value(k.clone()).ok());
                match (self.device_for(device_arg, &address), kind) {
                    (Ok(device), Some(kind)) => match self.alarms.acknowledge(&device, &address, kind) {
                        Some(event) => {
                            self.publish(GatewayEvent::Alarm {
                                operator: ctx.aid().clone(),
                                change: AlarmChange::Acknowledged,
                                event: event.clone(),
                            });
                            Ok(json!({"status": "ok", "event": event}))
                        }
                        None => Err(("UnknownAlarm", format!("no open {kind} alarm on {device} {address}"))),
                    },
                    (Err(e), _) => Err((e, address.clone())),
                    (_, None) => Err(("MalformedRequest", "kind must be HIGH, LOW or BAD_QUALITY".into())),
                }
            }
            Some("write") => {
                self.forward_write(ctx, msg);
                return;
            }
            other => Err(("MalformedRequest", format!("unknown action {other:?}"))),
        };
        let reply = match result {
            Ok(content) => msg.reply(Performative::Inform, ctx.aid().clone()).content(content),
            Err((name, detail)) => msg
                .reply(Performative::Failure, ctx.aid().clone())
                .content(json!({"status": "error", "error": name, "detail": detail})),
        };
        ctx.send(reply);
    }

    fn forward_write(&mut self, ctx: &mut AgentContext, msg: AclMessage) {
        let address = msg.content_str("address").unwrap_or_default().to_string();
        let value = msg.content.get("value").cloned().unwrap_or(Json::Null);
        let fail = |ctx: &mut AgentContext, name: &str, detail: String| {
            ctx.send(
                msg.reply(Performative::Failure, ctx.aid().clone())
                    .content(json!({"status": "error", "error": name, "detail": detail})),
            );
        };
        let device = match self.device_for(msg.content_str("device_id"), &address) {
            Ok(d) => d,
            Err(e) => return fail(ctx, e, address),
        };
        let publisher = self.slots.iter().find_map(|s| match &s.phase {
            Phase::Active { publisher, .. } if s.device_id.as_deref() == Some(device.as_str()) => Some(publisher.clone()),
            _ => None,
        });
        let Some(publisher) = publisher else {
            return fail(ctx, "NotSubscribed", format!("no active subscription for {device}"));
        };
        if self.catalog_item(&device, &address).is_some_and(|c| !c.writable) {
            // Still forwarded: the publisher's answer is authoritative.
            debug!(agent = %ctx.aid(), address, "write to read-only item");
        }
        let conv = ctx.new_conversation_id("write");
        let req = write_request(ctx.aid(), &publisher, &conv, &address, value);
        self.pending_writes.insert(conv, msg);
        ctx.send(req);
    }

    fn handle_command_reply(&mut self, ctx: &mut AgentContext, msg: AclMessage) {
        let Some(original) = self.pending_writes.remove(&msg.conversation_id) else { return };
        let content = match msg.performative {
            Performative::Inform => json!({"status": "ok"}),
            Performative::Refuse => json!({
                "status": "error",
                "error": "Refused",
                "detail": msg.content_str("reason").unwrap_or("refused"),
            }),
            _ => json!({
                "status": "error",
                "error": msg.content_str("error").unwrap_or("Failure"),
                "detail": msg.content_str("detail").unwrap_or(""),
            }),
        };
        let performative = if msg.performative == Performative::Inform { Performative::Inform } else { Performative::Failure };
        ctx.send(original.reply(performative, ctx.aid().clone()).content(content));
    }
}

impl Agent for OperatorAgent {
    fn setup(&mut self, ctx: &mut AgentContext) {
        let now = Instant::now();
        self.slots = self
            .config
            .targets
            .iter()
            .map(|t| Slot {
                target: t.clone(),
                phase: Slot::discovering(now),
                requests_sent: 0,
                informs_received: 0,
                gaps: 0,
                last_sequence: None,
                device_id: None,
                catalog: Vec::new(),
            })
            .collect();
        self.discovery_ticker = Some(ctx.add_ticker(Duration::from_millis(DISCOVER_RETRY_MS)));
        self.drive_discovery(ctx);
        if let Some(listener) = self.gateway_listener.take() {
            let (stop, stopped) = oneshot::channel();
            self.gateway_stop = Some(stop);
            let addr = self.gateway_addr.expect("bound listener has an address");
            info!(agent = %ctx.aid(), %addr, "gateway listening");
            println!("gateway {} http://{}/v1/", ctx.aid().local_name(), addr);
            tokio::spawn(gateway::serve(ctx.container().clone(), ctx.aid().clone(), listener, self.events.clone(), stopped));
        }
    }

    fn on_message(&mut self, ctx: &mut AgentContext, msg: AclMessage) {
        match msg.ontology.as_str() {
            DF_ONTOLOGY => self.handle_search_reply(ctx, &msg),
            TELEMETRY_ONTOLOGY => self.handle_telemetry(ctx, msg),
            COMMAND_ONTOLOGY => self.handle_command_reply(ctx, msg),
            GATEWAY_ONTOLOGY if msg.performative == Performative::Request => self.handle_gateway(ctx, msg),
            _ => {}
        }
    }

    fn on_tick(&mut self, ctx: &mut AgentContext, ticker: TickerId) {
        if Some(ticker) == self.discovery_ticker {
            self.drive_discovery(ctx);
        }
    }

    fn take_down(&mut self, ctx: &mut AgentContext) {
        for slot in &self.slots {
            if let Phase::Active { publisher, conversation } = &slot.phase {
                ctx.send(super::telemetry::cancel_request(ctx.aid(), publisher, conversation));
            }
        }
        if let Some(stop) = self.gateway_stop.take() {
            let _ = stop.send(());
        }
    }
}
