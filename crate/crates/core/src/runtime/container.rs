use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tokio::time::Instant;
use tracing::{debug, info, warn};

use super::agent::{run_agent, Agent, AgentContext};
use super::endpoint::Endpoint;
use super::link::{connect, peer_label, read_frame, write_frame, FrameReadError, LinkSender};
use super::{
    DeliveryReport, DeliveryStatus, RuntimeError, AMS_NAME, DEFAULT_HEARTBEAT_MS, DEFAULT_MAILBOX_CAPACITY, DF_NAME,
    HEARTBEAT_MISSES, MGMT_ONTOLOGY,
};
use crate::acl::{AclMessage, AgentId, Performative};
use crate::clock::unix_ms;
use crate::directory::{DfAgent, DF_ONTOLOGY};
use crate::sniffer::CaptureSession;

pub type AgentArgs = BTreeMap<String, String>;

/// Builds an agent of one kind from its launch arguments.
pub type AgentFactory = Arc<dyn Fn(&AgentArgs, &Container) -> Result<Box<dyn Agent>, String> + Send + Sync>;

const MAIN_LINK: &str = "main";
const MAIN_ID: &str = "main";

#[derive(Clone, Debug)]
pub struct ContainerConfig {
    pub heartbeat: Duration,
    pub mailbox_capacity: usize,
    pub request_timeout: Duration,
}

impl Default for ContainerConfig {
    fn default() -> Self {
        ContainerConfig {
            heartbeat: Duration::from_millis(DEFAULT_HEARTBEAT_MS),
            mailbox_capacity: DEFAULT_MAILBOX_CAPACITY,
            request_timeout: Duration::from_secs(5),
        }
    }
}

/// One row of the platform route table, as listed by `ps`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteEntry {
    pub local_name: String,
    pub kind: String,
    pub container: String,
    pub state: String,
}

impl RouteEntry {
    fn active(local_name: &str, kind: &str, container: &str) -> Self {
        RouteEntry {
            local_name: local_name.to_string(),
            kind: kind.to_string(),
            container: container.to_string(),
            state: "active".to_string(),
        }
    }
}

struct LocalAgent {
    tx: mpsc::Sender<AclMessage>,
    kill: Option<oneshot::Sender<()>>,
    done: Option<JoinHandle<()>>,
}

#[derive(Clone, PartialEq)]
enum Origin {
    Local,
    Link(String),
}

#[derive(Clone, Copy, PartialEq)]
enum Outcome {
    Status(DeliveryStatus),
    /// Not this container's to deliver (relayed traffic).
    Skip,
}

struct Inner {
    platform: String,
    id: String,
    is_main: bool,
    address: SocketAddr,
    config: ContainerConfig,
    ams: AgentId,
    routes: RwLock<BTreeMap<String, RouteEntry>>,
    local: RwLock<HashMap<String, LocalAgent>>,
    links: RwLock<HashMap<String, LinkSender>>,
    last_seen: Mutex<HashMap<String, Instant>>,
    kinds: RwLock<HashMap<String, AgentFactory>>,
    pending: Mutex<HashMap<String, oneshot::Sender<AclMessage>>>,
    capture: RwLock<Option<Arc<CaptureSession>>>,
    delivered: AtomicU64,
    dropped: AtomicU64,
    next_request: AtomicU64,
    tasks: Mutex<Vec<JoinHandle<()>>>,
    shutdown: watch::Sender<bool>,
}

/// A handle on one container of the platform. Cheap to clone.
#[derive(Clone)]
pub struct Container {
    inner: Arc<Inner>,
}

fn normalize_listen(listen: &str) -> String {
    if listen.starts_with(':') {
        format!("0.0.0.0{listen}")
    } else {
        listen.to_string()
    }
}

fn mgmt(sender: &AgentId, receiver: &AgentId, performative: Performative, content: Value) -> AclMessage {
    let mut msg = AclMessage::new(performative, sender.clone())
        .to(receiver.clone())
        .ontology(MGMT_ONTOLOGY)
        .content(content);
    msg.timestamp = unix_ms();
    msg
}

fn mgmt_reply(req: &AclMessage, sender: &AgentId, performative: Performative, content: Value) -> AclMessage {
    let mut msg = req.reply(performative, sender.clone()).content(content);
    msg.timestamp = unix_ms();
    msg
}

fn mgmt_error(req: &AclMessage, sender: &AgentId, err: &RuntimeError) -> AclMessage {
    mgmt_reply(req, sender, Performative::Failure, json!({"status": "error", "error": err.name(), "detail": err.to_string()}))
}

pub async fn start_main_container(platform: &str, listen: &str) -> Result<Container, RuntimeError> {
    start_main_container_with(platform, listen, ContainerConfig::default()).await
}

/// Boots the main container: binds the platform port, initialises the route
/// table and starts the directory facilitator as `df@<platform>`.
pub async fn start_main_container_with(platform: &str, listen: &str, config: ContainerConfig) -> Result<Container, RuntimeError> {
    let ams = AgentId::new(AMS_NAME, platform).map_err(|e| RuntimeError::InvalidArguments(e.to_string()))?;
    let listener = TcpListener::bind(normalize_listen(listen)).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => RuntimeError::AddressInUse(listen.to_string()),
        _ => RuntimeError::Io(format!("{listen}: {e}")),
    })?;
    let address = listener.local_addr().map_err(|e| RuntimeError::Io(e.to_string()))?;
    let container = Container::build(platform, MAIN_ID, true, address, config, ams);

    let accept = tokio::spawn(accept_loop(container.clone(), listener));
    let watchdog = tokio::spawn(watchdog_loop(container.clone()));
    container.inner.tasks.lock().extend([accept, watchdog]);

    container.spawn_boxed(DF_NAME, "df", Box::new(DfAgent::new())).await?;
    info!(platform, %address, "main container up");
    Ok(container)
}

pub async fn join_container(main: &str, container_id: &str, platform: &str) -> Result<Container, RuntimeError> {
    join_container_with(main, container_id, platform, ContainerConfig::default()).await
}

/// Connects a new container to a running platform.
pub async fn join_container_with(
    main: &str,
    container_id: &str,
    platform: &str,
    config: ContainerConfig,
) -> Result<Container, RuntimeError> {
    let ams = AgentId::new(format!("{AMS_NAME}.{container_id}"), platform)
        .map_err(|e| RuntimeError::InvalidArguments(e.to_string()))?;
    let main_ams = AgentId::new(AMS_NAME, platform).expect("validated platform");
    let mut stream = connect(main, Duration::from_secs(3)).await?;
    let address = stream.local_addr().map_err(|e| RuntimeError::Io(e.to_string()))?;

    let hello = mgmt(&ams, &main_ams, Performative::Request, json!({"action": "register-container", "container_id": container_id}))
        .conversation(format!("join-{container_id}"));
    write_frame(&mut stream, &hello).await.map_err(|e| RuntimeError::MainUnreachable(e.to_string()))?;
    let reply = tokio::time::timeout(config.request_timeout, read_frame(&mut stream))
        .await
        .map_err(|_| RuntimeError::MainUnreachable(format!("{main}: no registration reply")))?
        .map_err(|e| RuntimeError::MainUnreachable(format!("{main}: {e:?}")))?
        .ok_or_else(|| RuntimeError::MainUnreachable(format!("{main}: closed during registration")))?;
    if reply.performative != Performative::Inform {
        let name = reply.content_str("error").unwrap_or("Protocol");
        return Err(RuntimeError::from_name(name, reply.content_str("detail").unwrap_or(container_id).to_string()));
    }

    let container = Container::build(platform, container_id, false, address, config, ams);
    container.apply_routes(&reply.content);
    let (read_half, write_half) = stream.into_split();
    let link = LinkSender::spawn(write_half, format!("main@{main}"));
    container.inner.links.write().insert(MAIN_LINK.to_string(), link);
    let reader = tokio::spawn(secondary_reader(container.clone(), read_half));
    let heartbeat = tokio::spawn(heartbeat_loop(container.clone()));
    container.inner.tasks.lock().extend([reader, heartbeat]);
    info!(platform, container_id, main, "joined platform");
    Ok(container)
}

async fn accept_loop(container: Container, listener: TcpListener) {
    let mut shutdown = container.inner.shutdown.subscribe();
    loop {
        tokio::select! {
            _ = shutdown.changed() => break,
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    let _ = stream.set_nodelay(true);
                    tokio::spawn(handshake(container.clone(), stream, Some(peer)));
                }
                Err(e) => warn!(error = %e, "accept failed"),
            }
        }
    }
}

/// First frame on a fresh connection decides what it is: a container
/// registration or a one-shot `ps` query.
async fn handshake(container: Container, mut stream: TcpStream, peer: Option<SocketAddr>) {
    let inner = &container.inner;
    let first = match tokio::time::timeout(inner.config.request_timeout, read_frame(&mut stream)).await {
        Ok(Ok(Some(msg))) => msg,
        _ => return,
    };
    if first.ontology != MGMT_ONTOLOGY {
        debug!(peer = %peer_label(peer), "non-management first frame, closing");
        return;
    }
    match first.content_str("action") {
        Some("ps") => {
            let reply = mgmt_reply(&first, &inner.ams, Performative::Inform, json!({"status": "ok", "agents": container.routes()}));
            let _ = write_frame(&mut stream, &reply).await;
        }
        Some("register-container") => {
            let id = first.content_str("container_id").unwrap_or_default().to_string();
            let refusal = if first.sender.platform_name() != inner.platform {
                Some(RuntimeError::PlatformMismatch(format!(
                    "container is for {:?}, platform is {:?}",
                    first.sender.platform_name(),
                    inner.platform
                )))
            } else if id.is_empty() || id == inner.id || inner.links.read().contains_key(&id) {
                Some(RuntimeError::DuplicateContainerId(id.clone()))
            } else {
                None
            };
            if let Some(err) = refusal {
                let _ = write_frame(&mut stream, &mgmt_error(&first, &inner.ams, &err)).await;
                return;
            }
            let (read_half, write_half) = stream.into_split();
            let link = LinkSender::spawn(write_half, format!("{id}@{}", peer_label(peer)));
            {
                let mut links = inner.links.write();
                if links.contains_key(&id) {
                    let _ = link.send(&mgmt_error(&first, &inner.ams, &RuntimeError::DuplicateContainerId(id.clone())));
                    return;
                }
                links.insert(id.clone(), link.clone());
            }
            inner.last_seen.lock().insert(id.clone(), Instant::now());
            let reply = mgmt_reply(&first, &inner.ams, Performative::Inform, json!({"status": "ok", "routes": container.routes()}));
            link.send(&reply);
            info!(container = %id, peer = %peer_label(peer), "container joined");
            main_reader(container.clone(), id, read_half).await;
        }
        _ => {}
    }
}

async fn main_reader(container: Container, id: String, mut reader: tokio::net::tcp::OwnedReadHalf) {
    let mut shutdown = container.inner.shutdown.subscribe();
    loop {
        let frame = tokio::select! {
            _ = shutdown.changed() => break,
            f = read_frame(&mut reader) => f,
        };
        match frame {
            Ok(Some(msg)) => {
                container.inner.last_seen.lock().insert(id.clone(), Instant::now());
                if msg.ontology == MGMT_ONTOLOGY {
                    container.handle_container_mgmt(&id, msg);
                } else {
                    container.route(msg, Origin::Link(id.clone()));
                }
            }
            Ok(None) => break,
            Err(FrameReadError::Io(e)) => {
                debug!(container = %id, error = %e, "link read failed");
                break;
            }
            Err(FrameReadError::Fatal(e)) => {
                warn!(container = %id, error = %e, "link desynchronised");
                break;
            }
            Err(FrameReadError::Skipped(e)) => warn!(container = %id, error = %e, "skipping undecodable frame"),
        }
    }
    container.drop_container(&id, "link closed");
}

async fn secondary_reader(container: Container, mut reader: tokio::net::tcp::OwnedReadHalf) {
    let mut shutdown = container.inner.shutdown.subscribe();
    loop {
        let frame = tokio::select! {
            _ = shutdown.changed() => return,
            f = read_frame(&mut reader) => f,
        };
        match frame {
            Ok(Some(msg)) => {
                if msg.ontology == MGMT_ONTOLOGY {
                    if msg.content_str("action") == Some("routes") {
                        container.apply_routes(&msg.content);
                    } else {
                        container.fulfil(msg);
                    }
                } else {
                    container.route(msg, Origin::Link(MAIN_LINK.to_string()));
                }
            }
            Ok(None) => break,
            Err(FrameReadError::Io(e)) => {
                debug!(error = %e, "link read failed");
                break;
            }
            Err(FrameReadError::Fatal(e)) => {
                warn!(error = %e, "link desynchronised");
                break;
            }
            Err(FrameReadError::Skipped(e)) => warn!(error = %e, "skipping undecodable frame"),
        }
    }
    warn!(container = %container.inner.id, "lost connection to main container");
    container.inner.links.write().remove(MAIN_LINK);
}

async fn heartbeat_loop(container: Container) {
    let inner = &container.inner;
    let main_ams = AgentId::new(AMS_NAME, &inner.platform).expect("validated platform");
    let mut shutdown = inner.shutdown.subscribe();
    let mut timer = tokio::time::interval(inner.config.heartbeat);
    loop {
        tokio::select! {
            _ = shutdown.changed() => return,
            _ = timer.tick() => {
                let link = inner.links.read().get(MAIN_LINK).cloned();
                let Some(link) = link else { return };
                link.send(&mgmt(&inner.ams, &main_ams, Performative::Inform, json!({"action": "heartbeat", "container_id": inner.id})));
            }
        }
    }
}

async fn watchdog_loop(container: Container) {
    let inner = &container.inner;
    let mut shutdown = inner.shutdown.subscribe();
    let mut timer = tokio::time::interval(inner.config.heartbeat);
    let limit = inner.config.heartbeat * HEARTBEAT_MISSES;
    loop {
        tokio::select! {
            _ = shutdown.changed() => return,
            _ = timer.tick() => {
                let now = Instant::now();
                let dead: Vec<String> = inner
                    .last_seen
                    .lock()
                    .iter()
                    .filter(|(_, seen)| now.duration_since(**seen) > limit)
                    .map(|(id, _)| id.clone())
                    .collect();
                for id in dead {
                    container.drop_container(&id, "heartbeat timeout");
                }
            }
        }
    }
}

impl Container {
    fn build(platform: &str, id: &str, is_main: bool, address: SocketAddr, config: ContainerConfig, ams: AgentId) -> Container {
        let (shutdown, _) = watch::channel(false);
        Container {
            inner: Arc::new(Inner {
                platform: platform.to_string(),
                id: id.to_string(),
                is_main,
                address,
                config,
                ams,
                routes: RwLock::new(BTreeMap::new()),
                local: RwLock::new(HashMap::new()),
                links: RwLock::new(HashMap::new()),
                last_seen: Mutex::new(HashMap::new()),
                kinds: RwLock::new(HashMap::new()),
                pending: Mutex::new(HashMap::new()),
                capture: RwLock::new(None),
                delivered: AtomicU64::new(0),
                dropped: AtomicU64::new(0),
                next_request: AtomicU64::new(0),
                tasks: Mutex::new(Vec::new()),
                shutdown,
            }),
        }
    }

    pub fn platform(&self) -> &str {
        &self.inner.platform
    }

    pub fn id(&self) -> &str {
        &self.inner.id
    }

    pub fn is_main(&self) -> bool {
        self.inner.is_main
    }

    /// The main container's listen address, or a joined container's local
    /// end of its link.
    pub fn listen_address(&self) -> SocketAddr {
        self.inner.address
    }

    pub fn config(&self) -> &ContainerConfig {
        &self.inner.config
    }

    /// An id on this platform.
    pub fn aid(&self, local_name: &str) -> Result<AgentId, RuntimeError> {
        AgentId::new(local_name, &self.inner.platform).map_err(|e| RuntimeError::InvalidArguments(e.to_string()))
    }

    pub fn register_kind(&self, kind: &str, factory: AgentFactory) {
        self.inner.kinds.write().insert(kind.to_string(), factory);
    }

    pub fn has_kind(&self, kind: &str) -> bool {
        self.inner.kinds.read().contains_key(kind)
    }

    /// Current route table, sorted by agent name.
    pub fn routes(&self) -> Vec<RouteEntry> {
        self.inner.routes.read().values().cloned().collect()
    }

    /// Where an agent lives, if the platform knows it.
    pub fn resolve(&self, aid: &AgentId) -> Option<RouteEntry> {
        if aid.platform_name() != self.inner.platform {
            return None;
        }
        self.inner.routes.read().get(aid.local_name()).cloned()
    }

    pub fn is_local(&self, local_name: &str) -> bool {
        self.inner.local.read().contains_key(local_name)
    }

    pub fn local_agents(&self) -> Vec<String> {
        let mut names: Vec<_> = self.inner.local.read().keys().cloned().collect();
        names.sort();
        names
    }

    /// Messages handed to a mailbox or a link (management traffic excluded).
    pub fn delivered_count(&self) -> u64 {
        self.inner.delivered.load(Ordering::SeqCst)
    }

    /// Messages discarded because a mailbox was full.
    pub fn dropped_count(&self) -> u64 {
        self.inner.dropped.load(Ordering::SeqCst)
    }

    pub fn start_capture(&self, filter: Option<Vec<AgentId>>) -> Result<Arc<CaptureSession>, RuntimeError> {
        let mut slot = self.inner.capture.write();
        if slot.is_some() {
            return Err(RuntimeError::AlreadyCapturing);
        }
        let session = Arc::new(CaptureSession::new(filter));
        *slot = Some(Arc::clone(&session));
        Ok(session)
    }

    pub fn stop_capture(&self) -> Option<Arc<CaptureSession>> {
        self.inner.capture.write().take()
    }

    pub async fn spawn_agent(&self, local_name: &str, kind: &str, args: &AgentArgs) -> Result<AgentId, RuntimeError> {
        let factory = self
            .inner
            .kinds
            .read()
            .get(kind)
            .cloned()
            .ok_or_else(|| RuntimeError::UnknownAgentKind(kind.to_string()))?;
        let agent = factory(args, self).map_err(RuntimeError::InvalidArguments)?;
        self.spawn_boxed(local_name, kind, agent).await
    }

    /// Starts an already-built agent. The mailbox exists before `setup`
    /// runs, so messages sent right after this returns are queued.
    pub async fn spawn_boxed(&self, local_name: &str, kind: &str, agent: Box<dyn Agent>) -> Result<AgentId, RuntimeError> {
        let aid = self.aid(local_name)?;
        let (tx, rx) = mpsc::channel(self.inner.config.mailbox_capacity);
        let (kill_tx, kill_rx) = oneshot::channel();
        self.reserve_local(local_name, LocalAgent { tx, kill: Some(kill_tx), done: None })?;
        if let Err(e) = self.claim(local_name, kind).await {
            self.inner.local.write().remove(local_name);
            return Err(e);
        }
        let ctx = AgentContext::new(aid.clone(), self.clone());
        let container = self.clone();
        let name = local_name.to_string();
        let task = tokio::spawn(async move {
            run_agent(agent, ctx, rx, kill_rx).await;
            container.retire(&name).await;
        });
        if let Some(entry) = self.inner.local.write().get_mut(local_name) {
            entry.done = Some(task);
        }
        debug!(agent = %aid, kind, "spawned");
        Ok(aid)
    }

    /// Registers a mailbox driven by async code rather than behaviours.
    pub async fn endpoint(&self, local_name: &str) -> Result<Endpoint, RuntimeError> {
        let aid = self.aid(local_name)?;
        let (tx, rx) = mpsc::channel(self.inner.config.mailbox_capacity);
        self.reserve_local(local_name, LocalAgent { tx, kill: None, done: None })?;
        if let Err(e) = self.claim(local_name, "endpoint").await {
            self.inner.local.write().remove(local_name);
            return Err(e);
        }
        Ok(Endpoint::new(self.clone(), aid, rx))
    }

    fn reserve_local(&self, local_name: &str, entry: LocalAgent) -> Result<(), RuntimeError> {
        if local_name == AMS_NAME || local_name.starts_with("ams.") {
            return Err(RuntimeError::DuplicateAgentName(local_name.to_string()));
        }
        let mut local = self.inner.local.write();
        if local.contains_key(local_name) {
            return Err(RuntimeError::DuplicateAgentName(local_name.to_string()));
        }
        local.insert(local_name.to_string(), entry);
        Ok(())
    }

    async fn claim(&self, local_name: &str, kind: &str) -> Result<(), RuntimeError> {
        if self.inner.is_main {
            {
                let mut routes = self.inner.routes.write();
                if routes.contains_key(local_name) {
                    return Err(RuntimeError::DuplicateAgentName(local_name.to_string()));
                }
                routes.insert(local_name.to_string(), RouteEntry::active(local_name, kind, &self.inner.id));
            }
            self.broadcast_routes();
            return Ok(());
        }
        if self.inner.routes.read().contains_key(local_name) {
            return Err(RuntimeError::DuplicateAgentName(local_name.to_string()));
        }
        let reply = self
            .mgmt_request(json!({"action": "register-agent", "local_name": local_name, "kind": kind}))
            .await?;
        if reply.performative != Performative::Inform {
            let name = reply.content_str("error").unwrap_or("Protocol");
            return Err(RuntimeError::from_name(name, local_name.to_string()));
        }
        self.inner
            .routes
            .write()
            .insert(local_name.to_string(), RouteEntry::active(local_name, kind, &self.inner.id));
        Ok(())
    }

    /// Stops a local agent and removes it from the platform, including its
    /// directory registrations.
    pub async fn kill_agent(&self, aid: &AgentId) -> Result<(), RuntimeError> {
        if aid.platform_name() != self.inner.platform {
            return Err(RuntimeError::UnknownAgent(aid.to_string()));
        }
        let entry = self
            .inner
            .local
            .write()
            .remove(aid.local_name())
            .ok_or_else(|| RuntimeError::UnknownAgent(aid.to_string()))?;
        match (entry.kill, entry.done) {
            (Some(kill), Some(done)) => {
                let _ = kill.send(());
                let _ = done.await;
            }
            _ => self.retire(aid.local_name()).await,
        }
        Ok(())
    }

    pub(crate) async fn retire(&self, local_name: &str) {
        self.inner.local.write().remove(local_name);
        if self.inner.is_main {
            self.retire_route(local_name).await;
        } else {
            self.inner.routes.write().remove(local_name);
            if let Err(e) = self.mgmt_request(json!({"action": "deregister-agent", "local_name": local_name})).await {
                debug!(agent = local_name, error = %e, "deregistration with main failed");
            }
        }
    }

    pub(crate) fn retire_detached(&self, local_name: &str) {
        let container = self.clone();
        let name = local_name.to_string();
        if let Ok(handle) = tokio::runtime::Handle::try_current() {
            handle.spawn(async move { container.retire(&name).await });
        }
    }

    /// Main only: forget an agent platform-wide and purge its directory
    /// entries.
    async fn retire_route(&self, local_name: &str) {
        if self.inner.routes.write().remove(local_name).is_none() {
            return;
        }
        self.broadcast_routes();
        if local_name == DF_NAME {
            return;
        }
        let Ok(provider) = self.aid(local_name) else { return };
        let df = self.aid(DF_NAME).expect("df name");
        let conv = format!("purge-{}", self.inner.next_request.fetch_add(1, Ordering::SeqCst));
        let mut req = AclMessage::new(Performative::Request, self.inner.ams.clone())
            .to(df)
            .ontology(DF_ONTOLOGY)
            .conversation(conv.clone())
            .reply_with(conv.clone())
            .content(json!({"action": "deregister", "sd": {"provider": provider}}));
        req.timestamp = unix_ms();
        let rx = self.await_reply(&conv);
        let report = self.route(req, Origin::Local);
        if !report.all_delivered() {
            self.inner.pending.lock().remove(&conv);
            return;
        }
        if tokio::time::timeout(self.inner.config.request_timeout, rx).await.is_err() {
            self.inner.pending.lock().remove(&conv);
            warn!(agent = local_name, "directory purge timed out");
        }
    }

    fn drop_container(&self, id: &str, reason: &str) {
        self.inner.last_seen.lock().remove(id);
        let had_link = self.inner.links.write().remove(id).is_some();
        let names: Vec<String> = self
            .inner
            .routes
            .read()
            .values()
            .filter(|e| e.container == id)
            .map(|e| e.local_name.clone())
            .collect();
        if !had_link && names.is_empty() {
            return;
        }
        warn!(container = id, reason, agents = names.len(), "container removed");
        let container = self.clone();
        tokio::spawn(async move {
            for name in names {
                container.retire_route(&name).await;
            }
        });
    }

    fn handle_container_mgmt(&self, from: &str, msg: AclMessage) {
        let inner = &self.inner;
        let Some(link) = inner.links.read().get(from).cloned() else { return };
        match msg.content_str("action") {
            Some("heartbeat") => {}
            Some("register-agent") => {
                let name = msg.content_str("local_name").unwrap_or_default().to_string();
                let kind = msg.content_str("kind").unwrap_or("unknown").to_string();
                let accepted = {
                    let mut routes = inner.routes.write();
                    if name.is_empty() || name == AMS_NAME || routes.contains_key(&name) {
                        false
                    } else {
                        routes.insert(name.clone(), RouteEntry::active(&name, &kind, from));
                        true
                    }
                };
                if accepted {
                    self.broadcast_routes();
                    link.send(&mgmt_reply(&msg, &inner.ams, Performative::Inform, json!({"status": "ok"})));
                } else {
                    link.send(&mgmt_error(&msg, &inner.ams, &RuntimeError::DuplicateAgentName(name)));
                }
            }
            Some("deregister-agent") => {
                let name = msg.content_str("local_name").unwrap_or_default().to_string();
                let container = self.clone();
                tokio::spawn(async move {
                    let owned = container.inner.routes.read().get(&name).is_some_and(|e| e.container == from_id(&msg));
                    if owned {
                        container.retire_route(&name).await;
                    }
                    link.send(&mgmt_reply(&msg, &container.inner.ams, Performative::Inform, json!({"status": "ok"})));
                });
            }
            Some("ps") => {
                link.send(&mgmt_reply(&msg, &inner.ams, Performative::Inform, json!({"status": "ok", "agents": self.routes()})));
            }
            other => debug!(?other, "ignoring management message"),
        }
    }

    fn broadcast_routes(&self) {
        if !self.inner.is_main {
            return;
        }
        let entries = self.routes();
        let links: Vec<(String, LinkSender)> =
            self.inner.links.read().iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        for (id, link) in links {
            let Ok(to) = self.aid(&format!("{AMS_NAME}.{id}")) else { continue };
            link.send(&mgmt(&self.inner.ams, &to, Performative::Inform, json!({"action": "routes", "entries": entries})));
        }
    }

    fn apply_routes(&self, content: &Value) {
        let entries = content.get("entries").or_else(|| content.get("routes")).cloned().unwrap_or_default();
        let Ok(entries) = serde_json::from_value::<Vec<RouteEntry>>(entries) else { return };
        let mut routes = self.inner.routes.write();
        routes.clear();
        for e in entries {
            routes.insert(e.local_name.clone(), e);
        }
    }

    fn await_reply(&self, conversation: &str) -> oneshot::Receiver<AclMessage> {
        let (tx, rx) = oneshot::channel();
        self.inner.pending.lock().insert(conversation.to_string(), tx);
        rx
    }

    fn fulfil(&self, msg: AclMessage) {
        let key = msg.in_reply_to.clone().unwrap_or_else(|| msg.conversation_id.clone());
        if let Some(tx) = self.inner.pending.lock().remove(&key) {
            let _ = tx.send(msg);
        }
    }

    /// Non-main only: a request to the main container over the link.
    async fn mgmt_request(&self, content: Value) -> Result<AclMessage, RuntimeError> {
        let conv = format!("mgmt-{}-{}", self.inner.id, self.inner.next_request.fetch_add(1, Ordering::SeqCst));
        let main_ams = self.aid(AMS_NAME)?;
        let req = mgmt(&self.inner.ams, &main_ams, Performative::Request, content)
            .conversation(conv.clone())
            .reply_with(conv.clone());
        let link = self
            .inner
            .links
            .read()
            .get(MAIN_LINK)
            .cloned()
            .ok_or_else(|| RuntimeError::MainUnreachable("no link to main".into()))?;
        let rx = self.await_reply(&conv);
        if !link.send(&req) {
            self.inner.pending.lock().remove(&conv);
            return Err(RuntimeError::MainUnreachable("link closed".into()));
        }
        match tokio::time::timeout(self.inner.config.request_timeout, rx).await {
            Ok(Ok(reply)) => Ok(reply),
            _ => {
                self.inner.pending.lock().remove(&conv);
                Err(RuntimeError::Timeout(format!("management request {conv}")))
            }
        }
    }

    pub(crate) fn route_local(&self, msg: AclMessage) -> DeliveryReport {
        self.route(msg, Origin::Local)
    }

    fn route(&self, msg: AclMessage, origin: Origin) -> DeliveryReport {
        let inner = &self.inner;
        let mut outcomes: Vec<(AgentId, Outcome, Option<String>)> = Vec::with_capacity(msg.receivers.len());
        let mut remote: BTreeSet<String> = BTreeSet::new();

        for r in &msg.receivers {
            let (outcome, via) = self.resolve_one(r, &msg, &origin);
            if let Some(link) = &via {
                remote.insert(link.clone());
            }
            outcomes.push((r.clone(), outcome, via));
        }

        if !remote.is_empty() {
            let links = inner.links.read();
            for key in &remote {
                let ok = links.get(key).is_some_and(|l| !l.is_closed() && l.send(&msg));
                if !ok {
                    for (_, outcome, via) in outcomes.iter_mut() {
                        if via.as_deref() == Some(key.as_str()) {
                            *outcome = Outcome::Status(DeliveryStatus::Unreachable);
                        }
                    }
                }
            }
        }

        if msg.ontology != MGMT_ONTOLOGY {
            let capture = inner.capture.read().clone();
            for (r, outcome, _) in &outcomes {
                if *outcome == Outcome::Status(DeliveryStatus::Delivered) {
                    inner.delivered.fetch_add(1, Ordering::SeqCst);
                    if let Some(c) = &capture {
                        c.record(&msg, r);
                    }
                }
            }
        }

        DeliveryReport {
            statuses: outcomes
                .into_iter()
                .filter_map(|(r, o, _)| match o {
                    Outcome::Status(s) => Some((r, s)),
                    Outcome::Skip => None,
                })
                .collect(),
        }
    }

    /// Decides one receiver. Returns the link to forward on, when remote.
    fn resolve_one(&self, r: &AgentId, msg: &AclMessage, origin: &Origin) -> (Outcome, Option<String>) {
        use DeliveryStatus::*;
        let inner = &self.inner;
        if r.platform_name() != inner.platform {
            return (Outcome::Status(UnknownAgent), None);
        }
        if r == &inner.ams {
            self.fulfil(msg.clone());
            return (Outcome::Status(Delivered), None);
        }
        if let Some(agent) = inner.local.read().get(r.local_name()) {
            return match agent.tx.try_send(msg.clone()) {
                Ok(()) => (Outcome::Status(Delivered), None),
                Err(mpsc::error::TrySendError::Full(_)) => {
                    inner.dropped.fetch_add(1, Ordering::SeqCst);
                    (Outcome::Status(Delivered), None)
                }
                Err(mpsc::error::TrySendError::Closed(_)) => (Outcome::Status(UnknownAgent), None),
            };
        }
        let from_link = match origin {
            Origin::Local => None,
            Origin::Link(id) => Some(id.as_str()),
        };
        if from_link.is_some() && !inner.is_main {
            return (Outcome::Skip, None);
        }
        let entry = inner.routes.read().get(r.local_name()).cloned();
        match entry {
            None if from_link.is_some() => (Outcome::Skip, None),
            None => (Outcome::Status(UnknownAgent), None),
            Some(e) if e.container == inner.id => (Outcome::Status(UnknownAgent), None),
            Some(e) if Some(e.container.as_str()) == from_link => (Outcome::Skip, None),
            Some(e) => {
                let key = if inner.is_main { e.container } else { MAIN_LINK.to_string() };
                (Outcome::Status(Delivered), Some(key))
            }
        }
    }

    /// Stops every local agent and closes all links.
    pub async fn shutdown(&self) {
        let names = self.local_agents();
        for name in names {
            if let Ok(aid) = self.aid(&name) {
                let _ = self.kill_agent(&aid).await;
            }
        }
        let _ = self.inner.shutdown.send(true);
        self.inner.links.write().clear();
        for task in self.inner.tasks.lock().drain(..) {
            task.abort();
        }
    }
}

fn from_id(msg: &AclMessage) -> String {
    msg.sender.local_name().strip_prefix("ams.").unwrap_or_default().to_string()
}
