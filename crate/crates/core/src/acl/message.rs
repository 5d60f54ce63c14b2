use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AclError, AgentId};

pub const DEFAULT_LANGUAGE: &str = "scada-json";

/// Speech-act type of a message. The set is closed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Performative {
    Request,
    Inform,
    Agree,
    Refuse,
    Failure,
    Cancel,
}

impl Performative {
    pub const ALL: [Performative; 6] = [
        Performative::Request,
        Performative::Inform,
        Performative::Agree,
        Performative::Refuse,
        Performative::Failure,
        Performative::Cancel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Performative::Request => "REQUEST",
            Performative::Inform => "INFORM",
            Performative::Agree => "AGREE",
            Performative::Refuse => "REFUSE",
            Performative::Failure => "FAILURE",
            Performative::Cancel => "CANCEL",
        }
    }
}

impl fmt::Display for Performative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Performative {
    type Err = AclError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Performative::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| AclError::UnknownPerformative(s.to_string()))
    }
}

/// The message envelope exchanged between agents.
#[derive(Clone, Debug, PartialEq)]
pub struct AclMessage {
    pub performative: Performative,
    pub sender: AgentId,
    pub receivers: Vec<AgentId>,
    pub content: Value,
    pub language: String,
    pub ontology: String,
    pub conversation_id: String,
    pub reply_with: Option<String>,
    pub in_reply_to: Option<String>,
    /// Milliseconds since the Unix epoch; stamped by the runtime on send.
    pub timestamp: u64,
}

impl AclMessage {
    pub fn new(performative: Performative, sender: AgentId) -> Self {
        AclMessage {
            performative,
            sender,
            receivers: Vec::new(),
            content: Value::Null,
            language: DEFAULT_LANGUAGE.to_string(),
            ontology: String::new(),
            conversation_id: String::new(),
            reply_with: None,
            in_reply_to: None,
            timestamp: 0,
        }
    }

    pub fn to(mut self, receiver: AgentId) -> Self {
        self.receivers.push(receiver);
        self
    }

    pub fn content(mut self, content: Value) -> Self {
        self.content = content;
        self
    }

    pub fn ontology(mut self, ontology: impl Into<String>) -> Self {
        self.ontology = ontology.into();
        self
    }

    pub fn conversation(mut self, id: impl Into<String>) -> Self {
        self.conversation_id = id.into();
        self
    }

    pub fn reply_with(mut self, token: impl Into<String>) -> Self {
        self.reply_with = Some(token.into());
        self
    }

    /// Builds a reply addressed to this message's sender, in the same
    /// conversation and ontology.
    pub fn reply(&self, performative: Performative, sender: AgentId) -> AclMessage {
        AclMessage {
            performative,
            sender,
            receivers: vec![self.sender.clone()],
            content: Value::Null,
            language: self.language.clone(),
            ontology: self.ontology.clone(),
            conversation_id: self.conversation_id.clone(),
            reply_with: None,
            in_reply_to: self.reply_with.clone(),
            timestamp: 0,
        }
    }

    /// String field of an object content, if present.
    pub fn content_str(&self, key: &str) -> Option<&str> {
        self.content.get(key).and_then(Value::as_str)
    }

    pub fn validate(&self) -> Result<(), AclError> {
        if self.receivers.is_empty() {
            return Err(AclError::InvalidMessage("receivers is empty".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acl::parse_aid;

    #[test]
    fn performative_tokens_are_closed() {
        for p in Performative::ALL {
            assert_eq!(p.as_str().parse::<Performative>().unwrap(), p);
        }
        assert!(matches!("SHOUT".parse::<Performative>(), Err(AclError::UnknownPerformative(_))));
        assert!("inform".parse::<Performative>().is_err());
    }

    #[test]
    fn reply_threads_the_conversation() {
        let r1 = parse_aid("R1@SCADA").unwrap();
        let h1 = parse_aid("H1@SCADA").unwrap();
        let req = AclMessage::new(Performative::Request, r1.clone())
            .to(h1.clone())
            .ontology("scada-telemetry")
            .conversation("sub-1")
            .reply_with("r-1");
        let agree = req.reply(Performative::Agree, h1);
        assert_eq!(agree.receivers, vec![r1]);
        assert_eq!(agree.conversation_id, "sub-1");
        assert_eq!(agree.in_reply_to.as_deref(), Some("r-1"));
        assert_eq!(agree.ontology, "scada-telemetry");
    }
}
