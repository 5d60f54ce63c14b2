//! Serve an operator agent's state over HTTP and read it like the console
//! does: JSON snapshots plus a server-sent event stream.

use std::time::Duration;

use agent_scada::clock::unix_ms;
use agent_scada::plc::config::fixtures;
use agent_scada::plc::{DeviceDirectory, DeviceHandle, DeviceModel};
use agent_scada::runtime::start_main_container;
use agent_scada::scada::{AlarmRuleSpec, OpcAgent, OpcAgentConfig, OperatorAgent, OperatorConfig, Target};
use futures::StreamExt;
use serde_json::{json, Value};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let main = start_main_container("SCADA", "127.0.0.1:0").await?;
    let devices = DeviceDirectory::new();
    devices.insert(DeviceHandle::spawn(DeviceModel::load(fixtures::WINDER, unix_ms())?));
    main.spawn_boxed("WinderOpcAgent1", "opc-agent", Box::new(OpcAgent::new(OpcAgentConfig::new("winder"), devices.clone())))
        .await?;

    let mut config = OperatorConfig::new(vec![Target::monitoring("winder")]);
    config.gateway = Some("127.0.0.1:0".into());
    config.alarm_rules = vec![AlarmRuleSpec::parse("s7:[@LOCALSERVER]db1,w10:-:1100")?];
    let operator = OperatorAgent::new(config)?;
    let base = format!("http://{}/v1", operator.gateway_addr().expect("gateway configured"));
    main.spawn_boxed("WinderRemoteAgent1", "operator", Box::new(operator)).await?;
    tokio::time::sleep(Duration::from_secs(1)).await;

    let http = reqwest::Client::new();
    let state: Value = http.get(format!("{base}/state")).send().await?.json().await?;
    println!("state: {}", state["subscriptions"][0]["state"]);
    let items: Value = http.get(format!("{base}/items")).send().await?.json().await?;
    println!("items: {}", items["items"].as_array().map_or(0, Vec::len));

    let write = http
        .post(format!("{base}/write"))
        .json(&json!({"address": "s7:[@LOCALSERVER]db1,w10", "value": 1200}))
        .send()
        .await?;
    println!("write setpoint: HTTP {}", write.status());

    let mut events = http.get(format!("{base}/events")).send().await?.bytes_stream();
    let mut shown = 0;
    let mut buf = String::new();
    while shown < 6 {
        let Ok(Some(chunk)) = tokio::time::timeout(Duration::from_secs(3), events.next()).await else { break };
        buf.push_str(&String::from_utf8_lossy(&chunk?));
        while let Some(end) = buf.find("\n\n") {
            let frame: String = buf.drain(..end + 2).collect();
            if let Some(data) = frame.lines().find_map(|l| l.strip_prefix("data: ")) {
                let v: Value = serde_json::from_str(data)?;
                println!("event {} {}", v["type"].as_str().unwrap_or("hello"), v.get("publisher_sequence").or(v.get("change")).unwrap_or(&Value::Null));
                shown += 1;
            }
        }
    }

    let alarms: Value = http.get(format!("{base}/alarms")).send().await?.json().await?;
    println!("open alarms: {}", alarms["open"]);
    main.shutdown().await;
    devices.stop_all();
    Ok(())
}
