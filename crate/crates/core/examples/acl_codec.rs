//! Encode an ACL message as a length-prefixed frame and decode it back.

use agent_scada::acl::{decode_frame, encode_frame, AclMessage, AgentId, Performative, FRAME_HEADER_LEN};
use serde_json::json;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let operator = AgentId::new("WinderRemoteAgent1", "SCADA")?;
    let publisher = AgentId::new("WinderOpcAgent1", "SCADA")?;
    let msg = AclMessage::new(Performative::Request, operator)
        .to(publisher)
        .ontology("scada-telemetry")
        .conversation("sub-1")
        .reply_with("sub-1")
        .content(json!({"action": "subscribe", "group": "group1"}));

    let frame = encode_frame(&msg)?;
    let len = u32::from_be_bytes(frame[..FRAME_HEADER_LEN].try_into()?);
    println!("frame: {} bytes, header says {len}", frame.len());
    println!("body:  {}", String::from_utf8_lossy(&frame[FRAME_HEADER_LEN..]));

    let (decoded, used) = decode_frame(&frame)?;
    assert_eq!(used, frame.len());
    assert_eq!(decoded, msg);
    println!("round trip ok: {} {}", decoded.performative, decoded.conversation_id);

    let mut truncated = frame.clone();
    truncated.truncate(frame.len() - 3);
    match decode_frame(&truncated) {
        Err(e) => println!("truncated frame rejected: {}", e.name()),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
