use std::time::Duration;

use agent_scada::acl::{AclMessage, AgentId, Performative};
use agent_scada::clock::unix_ms;
use agent_scada::directory::discover;
use agent_scada::plc::config::fixtures;
use agent_scada::plc::{DeviceDirectory, DeviceHandle, DeviceModel};
use agent_scada::runtime::{start_main_container_with, Container, ContainerConfig, Endpoint};
use agent_scada::scada::{
    cancel_request, send_write_command, subscribe_request, AlarmRuleSpec, GatewayEvent, OpcAgent, OpcAgentConfig,
    OperatorAgent, OperatorConfig, Target, TelemetryPayload, GATEWAY_ONTOLOGY,
};
use serde_json::json;

async fn platform() -> (Container, DeviceDirectory) {
    let config = ContainerConfig { heartbeat: Duration::from_millis(200), ..ContainerConfig::default() };
    let main = start_main_container_with("SCADA", "127.0.0.1:0", config).await.unwrap();
    let devices = DeviceDirectory::new();
    for (_, doc) in fixtures::all() {
        devices.insert(DeviceHandle::spawn(DeviceModel::load(doc, unix_ms()).unwrap()));
    }
    (main, devices)
}

async fn opc_agent(main: &Container, devices: &DeviceDirectory, name: &str, device: &str) -> AgentId {
    let aid = main
        .spawn_boxed(name, "opc-agent", Box::new(OpcAgent::new(OpcAgentConfig::new(device), devices.clone())))
        .await
        .unwrap();
    let mut probe = main.endpoint(&format!("probe-{name}")).await.unwrap();
    discover(&mut probe, "process-monitoring", device, Duration::from_secs(3)).await.unwrap();
    aid
}

async fn subscribe(ep: &mut Endpoint, publisher: &AgentId, items: Option<&[String]>) -> AclMessage {
    let conv = ep.new_conversation_id("sub");
    ep.request(subscribe_request(ep.aid(), publisher, &conv, items), Duration::from_secs(2)).await.unwrap()
}

async fn next_inform(ep: &mut Endpoint, within: Duration) -> Option<TelemetryPayload> {
    let deadline = tokio::time::Instant::now() + within;
    loop {
        let left = deadline.saturating_duration_since(tokio::time::Instant::now());
        let msg = ep.recv_timeout(left).await?;
        if msg.performative == Performative::Inform {
            if let Some(p) = TelemetryPayload::from_message(&msg) {
                return Some(p);
            }
        }
    }
}

#[tokio::test]
async fn subscribe_snapshot_then_deltas_then_cancel() {
    let (main, devices) = platform().await;
    let winder = opc_agent(&main, &devices, "WinderOpcAgent1", "winder").await;
    let mut r1 = main.endpoint("R1").await.unwrap();
    let agree = subscribe(&mut r1, &winder, None).await;
    assert_eq!(agree.performative, Performative::Agree);
    assert_eq!(agree.content["items"].as_array().unwrap().len(), 6);
    assert_eq!(agree.content["update_rate_ms"], json!(400));
    let conv = agree.conversation_id.clone();

    let first = next_inform(&mut r1, Duration::from_secs(2)).await.unwrap();
    assert!(first.snapshot);
    assert_eq!(first.publisher_sequence, 1);
    assert_eq!(first.updates.len(), 6);
    for n in 2..=4 {
        let p = next_inform(&mut r1, Duration::from_secs(2)).await.unwrap();
        assert!(!p.snapshot);
        assert_eq!(p.publisher_sequence, n);
    }

    let ack = r1.request(cancel_request(r1.aid(), &winder, &conv), Duration::from_secs(1)).await.unwrap();
    assert_eq!(ack.performative, Performative::Inform);
    // Anything still in flight arrived before the acknowledgment.
    assert!(next_inform(&mut r1, Duration::from_millis(900)).await.is_none());
    let again = r1.request(cancel_request(r1.aid(), &winder, &conv), Duration::from_secs(1)).await.unwrap();
    assert_eq!(again.performative, Performative::Refuse);
    let unknown = r1.request(cancel_request(r1.aid(), &winder, "nope"), Duration::from_secs(1)).await.unwrap();
    assert_eq!(unknown.performative, Performative::Refuse);
    main.shutdown().await;
}

#[tokio::test]
async fn unknown_item_refused_and_filter_applies() {
    let (main, devices) = platform().await;
    let winder = opc_agent(&main, &devices, "WinderOpcAgent1", "winder").await;
    let mut r1 = main.endpoint("R1").await.unwrap();
    let refuse = subscribe(&mut r1, &winder, Some(&["db9,w9".to_string()])).await;
    assert_eq!(refuse.performative, Performative::Refuse);
    assert_eq!(refuse.content_str("reason"), Some("UnknownItem"));

    let agree = subscribe(&mut r1, &winder, Some(&["s7:[@LOCALSERVER]db1,w0".to_string()])).await;
    assert_eq!(agree.performative, Performative::Agree);
    for _ in 0..3 {
        let p = next_inform(&mut r1, Duration::from_secs(2)).await.unwrap();
        assert!(p.updates.iter().all(|u| u.address == "s7:[@LOCALSERVER]db1,w0"));
    }
    main.shutdown().await;
}

#[tokio::test]
async fn write_authorization_and_errors() {
    let (main, devices) = platform().await;
    let winder = opc_agent(&main, &devices, "WinderOpcAgent1", "winder").await;
    let mut r1 = main.endpoint("R1").await.unwrap();
    let t = Duration::from_secs(1);
    let err = send_write_command(&mut r1, &winder, "s7:[@LOCALSERVER]db1,w10", json!(1200), t).await.unwrap_err();
    assert_eq!(err.name(), "Refused");

    subscribe(&mut r1, &winder, None).await;
    send_write_command(&mut r1, &winder, "s7:[@LOCALSERVER]db1,w10", json!(1200), t).await.unwrap();
    let err = send_write_command(&mut r1, &winder, "s7:[@LOCALSERVER]db1,w2", json!(10.0), t).await.unwrap_err();
    assert_eq!(err.name(), "NotWritable");
    let err = send_write_command(&mut r1, &winder, "s7:[@LOCALSERVER]db1,w10", json!(99999), t).await.unwrap_err();
    assert_eq!(err.name(), "OutOfRange");
    let err = send_write_command(&mut r1, &winder, "s7:[@LOCALSERVER]db1,w10", json!("fast"), t).await.unwrap_err();
    assert_eq!(err.name(), "TypeMismatch");

    // The new setpoint shows up in telemetry.
    let mut seen = false;
    for _ in 0..10 {
        let Some(p) = next_inform(&mut r1, Duration::from_secs(2)).await else { break };
        if p.updates.iter().any(|u| u.address == "s7:[@LOCALSERVER]db1,w10" && u.value.as_f64() == 1200.0) {
            seen = true;
            break;
        }
    }
    assert!(seen);
    main.shutdown().await;
}

#[tokio::test]
async fn killed_subscriber_is_dropped_by_publisher() {
    let (main, devices) = platform().await;
    let winder = opc_agent(&main, &devices, "WinderOpcAgent1", "winder").await;
    let session = main.start_capture(None).unwrap();
    let mut r1 = main.endpoint("R1").await.unwrap();
    subscribe(&mut r1, &winder, None).await;
    next_inform(&mut r1, Duration::from_secs(2)).await.unwrap();
    let r1_aid = r1.aid().clone();
    main.kill_agent(&r1_aid).await.unwrap();
    drop(r1);
    let before = session.records().iter().filter(|r| r.receiver == r1_aid).count();
    tokio::time::sleep(Duration::from_millis(1500)).await;
    let after = session.records().iter().filter(|r| r.receiver == r1_aid).count();
    assert_eq!(before, after);
    main.shutdown().await;
}

#[tokio::test]
async fn opc_agent_waits_for_device() {
    let config = ContainerConfig { heartbeat: Duration::from_millis(200), ..ContainerConfig::default() };
    let main = start_main_container_with("SCADA", "127.0.0.1:0", config).await.unwrap();
    let devices = DeviceDirectory::new();
    main.spawn_boxed("WinderOpcAgent1", "opc-agent", Box::new(OpcAgent::new(OpcAgentConfig::new("winder"), devices.clone())))
        .await
        .unwrap();
    let mut probe = main.endpoint("probe").await.unwrap();
    let err = discover(&mut probe, "process-monitoring", "winder", Duration::from_millis(1200)).await.unwrap_err();
    assert_eq!(err.name(), "DiscoveryTimeout");
    devices.insert(DeviceHandle::spawn(DeviceModel::load(fixtures::WINDER, unix_ms()).unwrap()));
    let sd = discover(&mut probe, "process-monitoring", "winder", Duration::from_secs(4)).await.unwrap();
    assert_eq!(sd.provider.local_name(), "WinderOpcAgent1");
    assert_eq!(sd.properties.get("device_id").map(String::as_str), Some("winder"));
    main.shutdown().await;
}

async fn gateway_request(ep: &mut Endpoint, op: &AgentId, content: serde_json::Value) -> AclMessage {
    let req = AclMessage::new(Performative::Request, ep.aid().clone()).to(op.clone()).ontology(GATEWAY_ONTOLOGY).content(content);
    ep.request(req, Duration::from_secs(2)).await.unwrap()
}

#[tokio::test]
async fn operator_monitors_two_publishers() {
    let (main, devices) = platform().await;
    opc_agent(&main, &devices, "WinderOpcAgent1", "winder").await;
    opc_agent(&main, &devices, "WrappingOpcAgent1", "wrapping").await;
    let mut config = OperatorConfig::new(vec![Target::monitoring("winder"), Target::monitoring("wrapping")]);
    config.alarm_rules = vec![AlarmRuleSpec::parse("winder/s7:[@LOCALSERVER]db1,w10:-:1100:10").unwrap()];
    let op = OperatorAgent::new(config).unwrap();
    let mut events = op.subscribe_events();
    let op_aid = main.spawn_boxed("R1", "operator", Box::new(op)).await.unwrap();

    let mut client = main.endpoint("client").await.unwrap();
    let mut active = 0;
    for _ in 0..40 {
        tokio::time::sleep(Duration::from_millis(100)).await;
        let state = gateway_request(&mut client, &op_aid, json!({"action": "state"})).await;
        active = state.content["subscriptions"].as_array().unwrap().iter().filter(|s| s["state"] == "ACTIVE").count();
        if active == 2 {
            break;
        }
    }
    assert_eq!(active, 2);

    // Raise the setpoint past the alarm limit through the operator.
    let w = gateway_request(&mut client, &op_aid, json!({"action": "write", "address": "s7:[@LOCALSERVER]db1,w10", "value": 1200})).await;
    assert_eq!(w.performative, Performative::Inform, "{:?}", w.content);
    let w = gateway_request(&mut client, &op_aid, json!({"action": "write", "address": "s7:[@LOCALSERVER]db1,w2", "value": 1})).await;
    assert_eq!(w.content_str("error"), Some("NotWritable"));

    let mut raised = None;
    let deadline = tokio::time::Instant::now() + Duration::from_secs(3);
    while raised.is_none() && tokio::time::Instant::now() < deadline {
        if let Ok(Ok(GatewayEvent::Alarm { event, .. })) = tokio::time::timeout(Duration::from_millis(500), events.recv()).await {
            raised = Some(event);
        }
    }
    let raised = raised.expect("HIGH alarm on setpoint");
    assert_eq!(raised.address, "s7:[@LOCALSERVER]db1,w10");

    let ack = gateway_request(
        &mut client,
        &op_aid,
        json!({"action": "ack", "address": "s7:[@LOCALSERVER]db1,w10", "kind": "HIGH"}),
    )
    .await;
    assert_eq!(ack.content["event"]["acknowledged"], json!(true));

    let items = gateway_request(&mut client, &op_aid, json!({"action": "items"})).await;
    assert_eq!(items.content["items"].as_array().unwrap().len(), 11);
    let trend = gateway_request(&mut client, &op_aid, json!({"action": "trend", "address": "s7:[@LOCALSERVER]db2,w0"})).await;
    assert!(!trend.content["samples"].as_array().unwrap().is_empty());
    main.shutdown().await;
}
