//! Wire bytes pinned against a frame produced by an independent sorted-key JSON encoder.

use agent_scada::acl::{decode_frame, encode_frame, AclMessage, AgentId, Performative};
use serde_json::json;

const GOLDEN: &str = include_str!("golden/inform_frame.hex");

fn aid(s: &str) -> AgentId {
    agent_scada::acl::parse_aid(s).unwrap()
}

fn reference() -> AclMessage {
    // keys deliberately out of order; the encoder must sort them
    let content = json!({
        "snapshot": false,
        "publisher_sequence": 2,
        "group": "group1",
        "device_id": "winder",
        "updates": [
            {"timestamp": 1700000000400u64, "quality": "GOOD", "value": 1203.5, "address": "s7:[@LOCALSERVER]db1,w0"},
            {"timestamp": 1700000000300u64, "quality": "BAD", "value": true, "address": "s7:[@LOCALSERVER]db1,x20.0"}
        ],
        "note": "Wickler-Geschwindigkeit über Soll\nzeile 2",
        "limits": {"high": 1800, "low": -0.25, "hysteresis": null}
    });
    let mut m = AclMessage::new(Performative::Inform, aid("WinderOpcAgent1@SCADA"))
        .to(aid("WinderRemoteAgent1@SCADA"))
        .to(aid("WinderRemoteAgent2@SCADA"))
        .ontology("scada-telemetry")
        .conversation("sub-WinderRemoteAgent1-1")
        .content(content);
    m.language = "scada-json".into();
    m.in_reply_to = Some("sub-WinderRemoteAgent1-1".into());
    m.timestamp = 1700000000400;
    m
}

#[test]
fn encoder_matches_golden_bytes() {
    let expected = hex::decode(GOLDEN.trim()).unwrap();
    let got = encode_frame(&reference()).unwrap();
    assert_eq!(got.len(), 4 + 691);
    assert_eq!(String::from_utf8_lossy(&got[4..]), String::from_utf8_lossy(&expected[4..]));
    assert_eq!(got, expected);
}

#[test]
fn golden_bytes_decode_to_reference() {
    let bytes = hex::decode(GOLDEN.trim()).unwrap();
    let (m, used) = decode_frame(&bytes).unwrap();
    assert_eq!(used, bytes.len());
    assert_eq!(m, reference());
}
