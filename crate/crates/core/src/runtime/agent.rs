use std::time::Duration;

use tokio::sync::{mpsc, oneshot};
use tokio::time::Instant;

use super::{Container, DeliveryReport, DF_NAME};
use crate::acl::{AclMessage, AgentId};
use crate::clock::unix_ms;

/// An agent's behaviours.
///
/// `on_message` is the cyclic behaviour: it runs once per delivered
/// message. Tickers registered with [`AgentContext::add_ticker`] call
/// `on_tick`. All callbacks of one agent run on one task, one at a time.
pub trait Agent: Send + 'static {
    fn setup(&mut self, _ctx: &mut AgentContext) {}

    fn on_message(&mut self, ctx: &mut AgentContext, msg: AclMessage);

    fn on_tick(&mut self, _ctx: &mut AgentContext, _ticker: TickerId) {}

    fn take_down(&mut self, _ctx: &mut AgentContext) {}
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TickerId(u32);

struct Ticker {
    id: TickerId,
    period: Duration,
    next: Instant,
}

/// The agent's handle on its platform while a behaviour runs.
pub struct AgentContext {
    aid: AgentId,
    container: Container,
    tickers: Vec<Ticker>,
    next_ticker: u32,
    next_conversation: u64,
    last_timestamp: u64,
    stop: bool,
}

impl AgentContext {
    pub(crate) fn new(aid: AgentId, container: Container) -> Self {
        AgentContext {
            aid,
            container,
            tickers: Vec::new(),
            next_ticker: 0,
            next_conversation: 0,
            last_timestamp: 0,
            stop: false,
        }
    }

    pub fn aid(&self) -> &AgentId {
        &self.aid
    }

    pub fn container(&self) -> &Container {
        &self.container
    }

    /// The platform's directory facilitator.
    pub fn df(&self) -> AgentId {
        AgentId::new(DF_NAME, self.aid.platform_name()).expect("valid platform name")
    }

    /// Builds an id on this agent's platform.
    pub fn platform_aid(&self, local_name: &str) -> Option<AgentId> {
        AgentId::new(local_name, self.aid.platform_name()).ok()
    }

    /// Sends as this agent. The sender is overwritten with this agent's id
    /// and the timestamp is stamped non-decreasing.
    pub fn send(&mut self, mut msg: AclMessage) -> DeliveryReport {
        msg.sender = self.aid.clone();
        self.last_timestamp = self.last_timestamp.max(unix_ms());
        msg.timestamp = self.last_timestamp;
        self.container.route_local(msg)
    }

    /// Fires roughly every `period`, at most once per period.
    pub fn add_ticker(&mut self, period: Duration) -> TickerId {
        let id = TickerId(self.next_ticker);
        self.next_ticker += 1;
        let period = period.max(Duration::from_millis(1));
        self.tickers.push(Ticker { id, period, next: Instant::now() + period });
        id
    }

    pub fn remove_ticker(&mut self, id: TickerId) {
        self.tickers.retain(|t| t.id != id);
    }

    /// Terminates the agent after the current behaviour returns.
    pub fn stop(&mut self) {
        self.stop = true;
    }

    /// A conversation id unique to this agent instance.
    pub fn new_conversation_id(&mut self, prefix: &str) -> String {
        self.next_conversation += 1;
        format!("{prefix}-{}-{}", self.aid.local_name(), self.next_conversation)
    }

    fn next_deadline(&self) -> Option<Instant> {
        self.tickers.iter().map(|t| t.next).min()
    }

    fn due_tickers(&mut self, now: Instant) -> Vec<TickerId> {
        let mut due = Vec::new();
        for t in &mut self.tickers {
            if t.next <= now {
                due.push(t.id);
                t.next += t.period;
                if t.next <= now {
                    // Missed periods are skipped, not replayed.
                    t.next = now + t.period;
                }
            }
        }
        due
    }
}

pub(crate) async fn run_agent(
    mut agent: Box<dyn Agent>,
    mut ctx: AgentContext,
    mut mailbox: mpsc::Receiver<AclMessage>,
    mut kill: oneshot::Receiver<()>,
) {
    agent.setup(&mut ctx);
    while !ctx.stop {
        let deadline = ctx.next_deadline();
        tokio::select! {
            biased;
            _ = &mut kill => break,
            _ = async { tokio::time::sleep_until(deadline.unwrap()).await }, if deadline.is_some() => {
                for id in ctx.due_tickers(Instant::now()) {
                    agent.on_tick(&mut ctx, id);
                    if ctx.stop {
                        break;
                    }
                }
            }
            msg = mailbox.recv() => match msg {
                Some(msg) => agent.on_message(&mut ctx, msg),
                None => break,
            },
        }
    }
    agent.take_down(&mut ctx);
}
