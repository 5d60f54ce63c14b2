//! Length-prefixed frame codec.
//!
//! A frame is a 4-byte big-endian unsigned length `N` followed by exactly `N`
//! bytes of UTF-8 JSON. Object keys are emitted in sorted order and absent
//! optionals are omitted, so the encoding of a message is unique.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{parse_aid, AclError, AclMessage, Performative};

pub const FRAME_HEADER_LEN: usize = 4;
pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;

// Field declaration order is alphabetical: serde emits struct fields in
// declaration order, and the wire format wants sorted keys.
#[derive(Serialize, Deserialize)]
struct WireMessage {
    content: Value,
    conversation_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    in_reply_to: Option<String>,
    language: String,
    ontology: String,
    performative: String,
    receivers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reply_with: Option<String>,
    sender: String,
    timestamp: u64,
}

/// Encodes only the JSON body of a frame.
pub fn encode_body(msg: &AclMessage) -> Result<Vec<u8>, AclError> {
    msg.validate()?;
    let wire = WireMessage {
        content: msg.content.clone(),
        conversation_id: msg.conversation_id.clone(),
        in_reply_to: msg.in_reply_to.clone(),
        language: msg.language.clone(),
        ontology: msg.ontology.clone(),
        performative: msg.performative.as_str().to_string(),
        receivers: msg.receivers.iter().map(ToString::to_string).collect(),
        reply_with: msg.reply_with.clone(),
        sender: msg.sender.to_string(),
        timestamp: msg.timestamp,
    };
    serde_json::to_vec(&wire).map_err(|e| AclError::Encode(e.to_string()))
}

/// The 4-byte big-endian prefix for a body of `len` bytes.
pub fn encode_header(len: usize) -> Result<[u8; FRAME_HEADER_LEN], AclError> {
    if len > MAX_FRAME_LEN {
        return Err(AclError::FrameTooLarge(len));
    }
    Ok((len as u32).to_be_bytes())
}

pub fn encode_frame(msg: &AclMessage) -> Result<Vec<u8>, AclError> {
    let body = encode_body(msg)?;
    let header = encode_header(body.len())?;
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + body.len());
    out.extend_from_slice(&header);
    out.extend_from_slice(&body);
    Ok(out)
}

/// Reads the announced body length from a frame header.
pub fn frame_len(header: [u8; FRAME_HEADER_LEN]) -> Result<usize, AclError> {
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME_LEN {
        return Err(AclError::FrameTooLarge(len));
    }
    Ok(len)
}

/// Decodes a JSON frame body.
pub fn decode_body(body: &[u8]) -> Result<AclMessage, AclError> {
    let wire: WireMessage =
        serde_json::from_slice(body).map_err(|e| AclError::MalformedJson(e.to_string()))?;
    let performative: Performative = wire.performative.parse()?;
    let sender = parse_aid(&wire.sender)?;
    let receivers = wire
        .receivers
        .iter()
        .map(|r| parse_aid(r))
        .collect::<Result<Vec<_>, _>>()?;
    let msg = AclMessage {
        performative,
        sender,
        receivers,
        content: wire.content,
        language: wire.language,
        ontology: wire.ontology,
        conversation_id: wire.conversation_id,
        reply_with: wire.reply_with,
        in_reply_to: wire.in_reply_to,
        timestamp: wire.timestamp,
    };
    msg.validate()?;
    Ok(msg)
}

/// Decodes the first frame in `bytes`, returning the message and the number
/// of bytes consumed. Bytes after the announced length are never inspected.
pub fn decode_frame(bytes: &[u8]) -> Result<(AclMessage, usize), AclError> {
    if bytes.len() < FRAME_HEADER_LEN {
        return Err(AclError::TruncatedFrame { needed: FRAME_HEADER_LEN, available: bytes.len() });
    }
    let header: [u8; FRAME_HEADER_LEN] = bytes[..FRAME_HEADER_LEN].try_into().expect("4 bytes");
    let len = frame_len(header)?;
    let end = FRAME_HEADER_LEN + len;
    if bytes.len() < end {
        return Err(AclError::TruncatedFrame { needed: end, available: bytes.len() });
    }
    let msg = decode_body(&bytes[FRAME_HEADER_LEN..end])?;
    Ok((msg, end))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> AclMessage {
        AclMessage::new(Performative::Request, parse_aid("R1@SCADA").unwrap())
            .to(parse_aid("WinderOpcAgent1@SCADA").unwrap())
            .ontology("scada-telemetry")
            .conversation("sub-R1-1")
            .content(json!({"action": "subscribe"}))
    }

    #[test]
    fn prefix_is_big_endian_body_length() {
        let frame = encode_frame(&sample()).unwrap();
        let n = frame.len() - 4;
        assert_eq!(&frame[..4], &(n as u32).to_be_bytes());
    }

    #[test]
    fn length_123_prefix_bytes() {
        // The smallest valid message body is longer than 123 bytes, so the
        // header arithmetic is checked directly.
        assert_eq!(encode_header(123).unwrap(), [0x00, 0x00, 0x00, 0x7B]);
        assert_eq!(frame_len([0x00, 0x00, 0x00, 0x7B]).unwrap(), 123);
        assert!(encode_header(MAX_FRAME_LEN + 1).is_err());
    }

    #[test]
    fn omits_absent_optionals() {
        let body = String::from_utf8(encode_body(&sample()).unwrap()).unwrap();
        assert!(!body.contains("reply_with"));
        assert!(!body.contains("in_reply_to"));
        assert!(!body.contains("null"));
    }

    #[test]
    fn truncated_frame() {
        let mut bytes = vec![0, 0, 0, 100];
        bytes.extend([b' '; 40]);
        assert_eq!(
            decode_frame(&bytes).unwrap_err(),
            AclError::TruncatedFrame { needed: 104, available: 44 }
        );
        assert!(matches!(decode_frame(&[0, 0]), Err(AclError::TruncatedFrame { .. })));
    }

    #[test]
    fn unknown_performative() {
        let body = String::from_utf8(encode_body(&sample()).unwrap())
            .unwrap()
            .replace("\"REQUEST\"", "\"SHOUT\"");
        let mut frame = (body.len() as u32).to_be_bytes().to_vec();
        frame.extend_from_slice(body.as_bytes());
        assert_eq!(
            decode_frame(&frame).unwrap_err(),
            AclError::UnknownPerformative("SHOUT".into())
        );
    }

    #[test]
    fn malformed_json() {
        let frame = [0, 0, 0, 3, b'{', b'x', b'}'];
        assert!(matches!(decode_frame(&frame), Err(AclError::MalformedJson(_))));
    }

    #[test]
    fn oversize_announcement_rejected_without_allocation() {
        let frame = [0x01, 0x00, 0x00, 0x01];
        assert!(matches!(decode_frame(&frame), Err(AclError::FrameTooLarge(_))));
    }

    #[test]
    fn empty_receivers_do_not_encode() {
        let msg = AclMessage::new(Performative::Inform, parse_aid("H1@SCADA").unwrap());
        assert!(matches!(encode_frame(&msg), Err(AclError::InvalidMessage(_))));
    }

    #[test]
    fn trailing_bytes_left_unconsumed() {
        let mut bytes = encode_frame(&sample()).unwrap();
        let n = bytes.len();
        bytes.extend_from_slice(b"garbage");
        let (msg, used) = decode_frame(&bytes).unwrap();
        assert_eq!(used, n);
        assert_eq!(msg, sample());
    }
}
