use std::collections::VecDeque;
use std::time::Duration;

use tokio::sync::mpsc;
use tokio::time::Instant;

use super::{Container, DeliveryReport, RuntimeError};
use crate::acl::{AclMessage, AgentId};
use crate::clock::unix_ms;

/// A named mailbox on the platform driven from ordinary async code.
///
/// Used by the gateway, the CLI and tests. The name is retired when the
/// endpoint is dropped.
pub struct Endpoint {
    container: Container,
    aid: AgentId,
    mailbox: mpsc::Receiver<AclMessage>,
    stash: VecDeque<AclMessage>,
    next_conversation: u64,
}

impl Endpoint {
    pub(crate) fn new(container: Container, aid: AgentId, mailbox: mpsc::Receiver<AclMessage>) -> Self {
        Endpoint { container, aid, mailbox, stash: VecDeque::new(), next_conversation: 0 }
    }

    pub fn aid(&self) -> &AgentId {
        &self.aid
    }

    pub fn container(&self) -> &Container {
        &self.container
    }

    pub fn new_conversation_id(&mut self, prefix: &str) -> String {
        self.next_conversation += 1;
        format!("{prefix}-{}-{}", self.aid.local_name(), self.next_conversation)
    }

    pub fn send(&self, mut msg: AclMessage) -> DeliveryReport {
        msg.sender = self.aid.clone();
        msg.timestamp = unix_ms();
        self.container.route_local(msg)
    }

    /// Next message, or `None` once the endpoint has been retired.
    pub async fn recv(&mut self) -> Option<AclMessage> {
        if let Some(msg) = self.stash.pop_front() {
            return Some(msg);
        }
        self.mailbox.recv().await
    }

    pub async fn recv_timeout(&mut self, timeout: Duration) -> Option<AclMessage> {
        tokio::time::timeout(timeout, self.recv()).await.ok().flatten()
    }

    /// Sends `msg` and waits for the first reply in its conversation.
    /// Unrelated messages received meanwhile are kept for `recv`.
    pub async fn request(&mut self, mut msg: AclMessage, timeout: Duration) -> Result<AclMessage, RuntimeError> {
        if msg.conversation_id.is_empty() {
            msg.conversation_id = self.new_conversation_id("req");
        }
        if msg.reply_with.is_none() {
            msg.reply_with = Some(msg.conversation_id.clone());
        }
        let conv = msg.conversation_id.clone();
        let tag = msg.reply_with.clone();
        let report = self.send(msg);
        if let Some((to, status)) = report.statuses.iter().find(|(_, s)| *s != super::DeliveryStatus::Delivered) {
            return Err(match status {
                super::DeliveryStatus::UnknownAgent => RuntimeError::UnknownAgent(to.to_string()),
                _ => RuntimeError::Io(format!("{to} unreachable")),
            });
        }
        let deadline = Instant::now() + timeout;
        let mut held = Vec::new();
        let result = loop {
            let next = match tokio::time::timeout_at(deadline, self.mailbox.recv()).await {
                Ok(Some(m)) => m,
                Ok(None) => break Err(RuntimeError::Io("endpoint closed".into())),
                Err(_) => break Err(RuntimeError::Timeout(format!("reply to {conv}"))),
            };
            if next.in_reply_to.is_some() && next.in_reply_to == tag || next.conversation_id == conv {
                break Ok(next);
            }
            held.push(next);
        };
        self.stash.extend(held);
        result
    }
}

impl Drop for Endpoint {
    fn drop(&mut self) {
        if self.container.is_local(self.aid.local_name()) {
            self.container.retire_detached(self.aid.local_name());
        }
    }
}
