//! Agent identities, the ACL message envelope and its wire framing.
//!
//! Every exchange between agents, containers and platform services is an
//! [`AclMessage`] carried in a length-prefixed JSON frame (see [`frame`]).

mod aid;
pub mod frame;
mod message;

pub use aid::{parse_aid, AgentId};
pub use frame::{decode_frame, encode_frame, FRAME_HEADER_LEN, MAX_FRAME_LEN};
pub use message::{AclMessage, Performative, DEFAULT_LANGUAGE};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AclError {
    #[error("MalformedAid: {0:?}")]
    MalformedAid(String),
    #[error("EncodeError: {0}")]
    Encode(String),
    #[error("FrameTooLarge: {0} bytes exceeds the 16 MiB cap")]
    FrameTooLarge(usize),
    #[error("TruncatedFrame: need {needed} bytes, {available} available")]
    TruncatedFrame { needed: usize, available: usize },
    #[error("MalformedJson: {0}")]
    MalformedJson(String),
    #[error("UnknownPerformative: {0:?}")]
    UnknownPerformative(String),
    #[error("InvalidMessage: {0}")]
    InvalidMessage(String),
}

impl AclError {
    /// Stable error name, as used on the wire and on stderr.
    pub fn name(&self) -> &'static str {
        match self {
            AclError::MalformedAid(_) => "MalformedAid",
            AclError::Encode(_) => "EncodeError",
            AclError::FrameTooLarge(_) => "EncodeError",
            AclError::TruncatedFrame { .. } => "TruncatedFrame",
            AclError::MalformedJson(_) => "MalformedJson",
            AclError::UnknownPerformative(_) => "UnknownPerformative",
            AclError::InvalidMessage(_) => "InvalidMessage",
        }
    }
}
