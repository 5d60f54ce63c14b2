use std::collections::BTreeMap;
use std::time::Duration;

use serde_json::json;
use tracing::{debug, error, info, warn};

use super::telemetry::{CatalogItem, Subscription, SubscriptionState, TelemetryPayload, TelemetryUpdate};
use super::{arg_list, parse_arg, COMMAND_ONTOLOGY, CONNECT_RETRY_MS, DEFAULT_GROUP, DEFAULT_UPDATE_RATE_MS, DELIVERY_FAILURE_LIMIT, TELEMETRY_ONTOLOGY};
use crate::acl::{AclMessage, Performative};
use crate::clock::Clock;
use crate::directory::{ServiceDescription, DF_ONTOLOGY, PROCESS_MONITORING, REANNOUNCE_MS};
use crate::opc::{connect_with_clock, OpcConnection, OpcGroup};
use crate::plc::{DeviceDirectory, ItemDefinition};
use crate::runtime::{Agent, AgentArgs, AgentContext, DeliveryStatus, TickerId};
use crate::sniffer::content_digest;

#[derive(Clone, Debug)]
pub struct OpcAgentConfig {
    /// Device id or OPC server name.
    pub device: String,
    pub host: String,
    pub service_type: String,
    pub service_name: String,
    /// A group with no items covers every item of the device.
    pub group: OpcGroup,
    pub clock: Clock,
}

impl OpcAgentConfig {
    pub fn new(device: impl Into<String>) -> Self {
        let device = device.into();
        OpcAgentConfig {
            service_name: device.clone(),
            device,
            host: "localhost".into(),
            service_type: PROCESS_MONITORING.into(),
            group: OpcGroup::new(DEFAULT_GROUP, true, DEFAULT_UPDATE_RATE_MS, 0.0),
            clock: Clock::System,
        }
    }

    /// Keys: `device` (required), `service`, `service_type`, `host`,
    /// `group`, `rate`, `deadband`, `items` (`|`-separated).
    pub fn from_args(args: &AgentArgs) -> Result<Self, String> {
        let device = args.get("device").ok_or("missing argument device=<device id or server name>")?;
        let mut c = OpcAgentConfig::new(device.as_str());
        if let Some(s) = args.get("service") {
            c.service_name = s.clone();
        }
        if let Some(s) = args.get("service_type") {
            c.service_type = s.clone();
        }
        if let Some(h) = args.get("host") {
            c.host = h.clone();
        }
        if let Some(g) = args.get("group") {
            c.group.name = g.clone();
        }
        if let Some(r) = parse_arg::<u64>(args, "rate")? {
            c.group.update_rate_ms = r;
        }
        if let Some(d) = parse_arg::<f64>(args, "deadband")? {
            c.group.percent_deadband = d;
        }
        c.group.items = arg_list(args, "items");
        c.group.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }
}

struct Published {
    sub: Subscription,
    in_reply_to: Option<String>,
    snapshot_due: bool,
    next_sequence: u64,
    failures: u32,
}

/// Bridges one device into the platform and streams its group to
/// subscribers.
pub struct OpcAgent {
    config: OpcAgentConfig,
    devices: DeviceDirectory,
    conn: Option<OpcConnection>,
    catalog: Vec<ItemDefinition>,
    device_id: String,
    connect_ticker: Option<TickerId>,
    poll_ticker: Option<TickerId>,
    announce_ticker: Option<TickerId>,
    announce_conv: Option<String>,
    registered: bool,
    subs: BTreeMap<String, Published>,
}

impl OpcAgent {
    pub fn new(config: OpcAgentConfig, devices: DeviceDirectory) -> Self {
        OpcAgent {
            device_id: config.device.clone(),
            config,
            devices,
            conn: None,
            catalog: Vec::new(),
            connect_ticker: None,
            poll_ticker: None,
            announce_ticker: None,
            announce_conv: None,
            registered: false,
            subs: BTreeMap::new(),
        }
    }

    fn try_connect(&mut self, ctx: &mut AgentContext) -> bool {
        let server = self.devices.find(&self.config.device).map(|h| h.server_name()).unwrap_or(self.config.device.clone());
        let attempt = connect_with_clock(&self.devices, &self.config.host, &server, ctx.aid().local_name(), self.config.clock.clone())
            .and_then(|mut conn| {
                let mut group = self.config.group.clone();
                if group.items.is_empty() {
                    if let Some(h) = self.devices.get(&server) {
                        group.items = h.with(|m| m.definitions().map(|d| d.address.clone()).collect());
                    }
                }
                conn.add_group(group)?;
                Ok(conn)
            });
        match attempt {
            Ok(conn) => {
                self.catalog = conn.definitions(&self.config.group.name).map(<[_]>::to_vec).unwrap_or_default();
                self.device_id = conn.device_id().unwrap_or(self.config.device.clone());
                self.conn = Some(conn);
                info!(agent = %ctx.aid(), server, group = %self.config.group.name, "connected");
                true
            }
            Err(e) => {
                warn!(agent = %ctx.aid(), error = %e, "connect failed, retrying in {} ms", CONNECT_RETRY_MS);
                false
            }
        }
    }

    fn on_connected(&mut self, ctx: &mut AgentContext) {
        if let Some(t) = self.connect_ticker.take() {
            ctx.remove_ticker(t);
        }
        // Polled several times per window so scan jitter stays well under
        // one update period; poll_group itself allows one scan per window.
        let period = (self.config.group.update_rate_ms / 4).max(5);
        self.poll_ticker = Some(ctx.add_ticker(Duration::from_millis(period)));
        self.announce_ticker = Some(ctx.add_ticker(Duration::from_millis(REANNOUNCE_MS)));
        self.announce(ctx);
    }

    fn description(&self, ctx: &AgentContext) -> ServiceDescription {
        let catalog: Vec<CatalogItem> = self.catalog.iter().map(CatalogItem::from).collect();
        ServiceDescription::new(ctx.aid().clone(), &self.config.service_type, &self.config.service_name)
            .with_property("device_id", &self.device_id)
            .with_property("group", &self.config.group.name)
            .with_property("items_digest", content_digest(&json!(catalog)))
    }

    fn announce(&mut self, ctx: &mut AgentContext) {
        let conv = ctx.new_conversation_id("df-register");
        let msg = AclMessage::new(Performative::Request, ctx.aid().clone())
            .to(ctx.df())
            .ontology(DF_ONTOLOGY)
            .conversation(&conv)
            .reply_with(&conv)
            .content(json!({"action": "register", "sd": self.description(ctx)}));
        self.announce_conv = Some(conv);
        if !ctx.send(msg).all_delivered() {
            warn!(agent = %ctx.aid(), "directory unreachable, will re-announce");
        }
    }

    fn handle_df_reply(&mut self, ctx: &mut AgentContext, msg: &AclMessage) {
        if self.announce_conv.as_deref() != Some(msg.conversation_id.as_str()) {
            return;
        }
        if msg.performative == Performative::Inform {
            if !self.registered {
                info!(agent = %ctx.aid(), service = %self.config.service_name, "registered with directory");
            }
            self.registered = true;
        } else {
            error!(
                agent = %ctx.aid(),
                error = msg.content_str("error").unwrap_or("unknown"),
                "FAILURE: directory registration rejected, terminating"
            );
            ctx.stop();
        }
    }

    fn handle_subscribe(&mut self, ctx: &mut AgentContext, msg: AclMessage) {
        let Some(conn) = &self.conn else {
            ctx.send(msg.reply(Performative::Refuse, ctx.aid().clone()).content(json!({"reason": "NotConnected"})));
            return;
        };
        let filter: Option<Vec<String>> = msg
            .content
            .get("items")
            .and_then(|v| serde_json::from_value(v.clone()).ok());
        if let Some(f) = &filter {
            let unknown: Vec<&String> = f.iter().filter(|a| !self.catalog.iter().any(|d| &d.address == *a)).collect();
            if !unknown.is_empty() || f.is_empty() {
                ctx.send(
                    msg.reply(Performative::Refuse, ctx.aid().clone())
                        .content(json!({"reason": "UnknownItem", "items": unknown})),
                );
                return;
            }
        }
        if self.subs.contains_key(&msg.conversation_id) {
            ctx.send(msg.reply(Performative::Refuse, ctx.aid().clone()).content(json!({"reason": "DuplicateConversation"})));
            return;
        }
        // One active subscription per subscriber and group: a new request
        // replaces the old one.
        for p in self.subs.values_mut() {
            if p.sub.subscriber == msg.sender && p.sub.state == SubscriptionState::Active {
                p.sub.state = SubscriptionState::Cancelled;
            }
        }
        let group = self.config.group.name.clone();
        let catalog: Vec<CatalogItem> = self
            .catalog
            .iter()
            .filter(|d| filter.as_ref().is_none_or(|f| f.contains(&d.address)))
            .map(CatalogItem::from)
            .collect();
        let update_rate = conn.group(&group).map(|g| g.update_rate_ms).unwrap_or(self.config.group.update_rate_ms);
        let agree = msg.reply(Performative::Agree, ctx.aid().clone()).content(json!({
            "status": "ok",
            "device_id": self.device_id,
            "group": group,
            "update_rate_ms": update_rate,
            "items": catalog,
        }));
        if ctx.send(agree).status(&msg.sender) != Some(DeliveryStatus::Delivered) {
            return;
        }
        debug!(agent = %ctx.aid(), subscriber = %msg.sender, conv = %msg.conversation_id, "subscription active");
        self.subs.insert(
            msg.conversation_id.clone(),
            Published {
                sub: Subscription {
                    subscriber: msg.sender.clone(),
                    publisher: ctx.aid().clone(),
                    conversation_id: msg.conversation_id.clone(),
                    group_name: group,
                    item_filter: filter,
                    state: SubscriptionState::Active,
                    informs_sent: 0,
                },
                in_reply_to: msg.reply_with.clone(),
                snapshot_due: true,
                next_sequence: 1,
                failures: 0,
            },
        );
    }

    fn handle_cancel(&mut self, ctx: &mut AgentContext, msg: AclMessage) {
        let reply = match self.subs.get_mut(&msg.conversation_id) {
            Some(p) if p.sub.subscriber == msg.sender && p.sub.state == SubscriptionState::Active => {
                p.sub.state = SubscriptionState::Cancelled;
                msg.reply(Performative::Inform, ctx.aid().clone())
                    .content(json!({"status": "cancelled", "informs_sent": p.sub.informs_sent}))
            }
            _ => msg.reply(Performative::Refuse, ctx.aid().clone()).content(json!({"reason": "UnknownSubscription"})),
        };
        ctx.send(reply);
    }

    fn handle_write(&mut self, ctx: &mut AgentContext, msg: AclMessage) {
        let authorized = self
            .subs
            .values()
            .any(|p| p.sub.subscriber == msg.sender && p.sub.state == SubscriptionState::Active);
        if !authorized {
            ctx.send(msg.reply(Performative::Refuse, ctx.aid().clone()).content(json!({"reason": "NotSubscribed"})));
            return;
        }
        let (Some(address), Some(value)) = (msg.content_str("address").map(str::to_string), msg.content.get("value").cloned())
        else {
            ctx.send(msg.reply(Performative::Refuse, ctx.aid().clone()).content(json!({"reason": "MalformedCommand"})));
            return;
        };
        let group = self.config.group.name.clone();
        let result = match self.conn.as_mut() {
            Some(conn) => conn.sync_write_json(&group, &address, &value),
            None => Err(crate::opc::OpcError::ServerNotFound(self.config.device.clone())),
        };
        let reply = match result {
            Ok(()) => {
                info!(agent = %ctx.aid(), by = %msg.sender, address, %value, "write applied");
                msg.reply(Performative::Inform, ctx.aid().clone()).content(json!({"status": "ok"}))
            }
            Err(e) => msg
                .reply(Performative::Failure, ctx.aid().clone())
                .content(json!({"status": "error", "error": e.name(), "detail": e.to_string()})),
        };
        ctx.send(reply);
    }

    fn poll(&mut self, ctx: &mut AgentContext) {
        let group = self.config.group.name.clone();
        let Some(conn) = self.conn.as_mut() else { return };
        let event = match conn.poll_group(&group) {
            Ok(e) => e,
            Err(e) => {
                warn!(agent = %ctx.aid(), error = %e, "poll failed");
                return;
            }
        };
        let scanned = event.is_some();
        let reported = if self.subs.values().any(|p| p.snapshot_due && p.sub.state == SubscriptionState::Active) {
            conn.reported(&group).unwrap_or_default()
        } else {
            Vec::new()
        };
        for p in self.subs.values_mut().filter(|p| p.sub.state == SubscriptionState::Active) {
            let source: Vec<(String, crate::plc::ItemState)> = if p.snapshot_due {
                reported.clone()
            } else if scanned {
                event.as_ref().map(|e| e.changes.clone()).unwrap_or_default()
            } else {
                continue;
            };
            let updates: Vec<TelemetryUpdate> = source
                .into_iter()
                .filter(|(a, _)| p.sub.wants(a))
                .map(|(a, s)| TelemetryUpdate::new(a, s))
                .collect();
            if updates.is_empty() {
                continue;
            }
            let payload = TelemetryPayload {
                device_id: self.device_id.clone(),
                group: group.clone(),
                publisher_sequence: p.next_sequence,
                snapshot: p.snapshot_due,
                updates,
            };
            let mut inform = AclMessage::new(Performative::Inform, ctx.aid().clone())
                .to(p.sub.subscriber.clone())
                .ontology(TELEMETRY_ONTOLOGY)
                .conversation(&p.sub.conversation_id)
                .content(serde_json::to_value(&payload).expect("payload serializes"));
            inform.in_reply_to = p.in_reply_to.clone();
            match ctx.send(inform).status(&p.sub.subscriber) {
                Some(DeliveryStatus::Delivered) => {
                    p.next_sequence += 1;
                    p.sub.informs_sent += 1;
                    p.snapshot_due = false;
                    p.failures = 0;
                }
                Some(DeliveryStatus::UnknownAgent) | None => {
                    info!(agent = %ctx.aid(), subscriber = %p.sub.subscriber, "subscriber gone, cancelling");
                    p.sub.state = SubscriptionState::Cancelled;
                }
                Some(DeliveryStatus::Unreachable) => {
                    p.failures += 1;
                    if p.failures >= DELIVERY_FAILURE_LIMIT {
                        warn!(agent = %ctx.aid(), subscriber = %p.sub.subscriber, "subscriber unreachable, subscription failed");
                        p.sub.state = SubscriptionState::Failed;
                        let failure = AclMessage::new(Performative::Failure, ctx.aid().clone())
                            .to(p.sub.subscriber.clone())
                            .ontology(TELEMETRY_ONTOLOGY)
                            .conversation(&p.sub.conversation_id)
                            .content(json!({"status": "error", "error": "Unreachable"}));
                        ctx.send(failure);
                    }
                }
            }
        }
    }

    /// Subscriptions in conversation order, for introspection.
    pub fn subscriptions(&self) -> Vec<Subscription> {
        self.subs.values().map(|p| p.sub.clone()).collect()
    }
}

impl Agent for OpcAgent {
    fn setup(&mut self, ctx: &mut AgentContext) {
        if self.try_connect(ctx) {
            self.on_connected(ctx);
        } else {
            self.connect_ticker = Some(ctx.add_ticker(Duration::from_millis(CONNECT_RETRY_MS)));
        }
    }

    fn on_message(&mut self, ctx: &mut AgentContext, msg: AclMessage) {
        match (msg.ontology.as_str(), msg.performative) {
            (DF_ONTOLOGY, _) => self.handle_df_reply(ctx, &msg),
            (TELEMETRY_ONTOLOGY, Performative::Request) if msg.content_str("action") == Some("subscribe") => {
                self.handle_subscribe(ctx, msg)
            }
            (TELEMETRY_ONTOLOGY, Performative::Cancel) => self.handle_cancel(ctx, msg),
            (COMMAND_ONTOLOGY, Performative::Request) if msg.content_str("action") == Some("write") => {
                self.handle_write(ctx, msg)
            }
            (_, Performative::Request) => {
                ctx.send(msg.reply(Performative::Refuse, ctx.aid().clone()).content(json!({"reason": "UnsupportedRequest"})));
            }
            _ => debug!(agent = %ctx.aid(), from = %msg.sender, performative = %msg.performative, "ignored"),
        }
    }

    fn on_tick(&mut self, ctx: &mut AgentContext, ticker: TickerId) {
        if Some(ticker) == self.connect_ticker {
            if self.try_connect(ctx) {
                self.on_connected(ctx);
            }
        } else if Some(ticker) == self.poll_ticker {
            self.poll(ctx);
        } else if Some(ticker) == self.announce_ticker {
            self.announce(ctx);
        }
    }

    fn take_down(&mut self, ctx: &mut AgentContext) {
        for p in self.subs.values_mut().filter(|p| p.sub.state == SubscriptionState::Active) {
            p.sub.state = SubscriptionState::Cancelled;
            let failure = AclMessage::new(Performative::Failure, ctx.aid().clone())
                .to(p.sub.subscriber.clone())
                .ontology(TELEMETRY_ONTOLOGY)
                .conversation(&p.sub.conversation_id)
                .content(json!({"status": "error", "error": "PublisherStopped"}));
            ctx.send(failure);
        }
        self.conn = None;
    }
}
