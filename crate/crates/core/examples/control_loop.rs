//! Closed loop through the platform: an operator writes the winder speed
//! setpoint and follows the speed as it settles.

use std::time::Duration;

use agent_scada::acl::Performative;
use agent_scada::clock::unix_ms;
use agent_scada::directory::discover;
use agent_scada::plc::config::fixtures;
use agent_scada::plc::{DeviceDirectory, DeviceHandle, DeviceModel};
use agent_scada::runtime::start_main_container;
use agent_scada::scada::{send_write_command, subscribe_request, OpcAgent, OpcAgentConfig, TelemetryPayload};
use serde_json::json;

const SPEED: &str = "s7:[@LOCALSERVER]db1,w0";
const SETPOINT: &str = "s7:[@LOCALSERVER]db1,w10";

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    // The bundled winder has a 5 s speed lag; shorten it so this settles quickly.
    let doc = fixtures::WINDER.replace("tau_ms = 5000\nsetpoint_item", "tau_ms = 1000\nsetpoint_item");
    let main = start_main_container("SCADA", "127.0.0.1:0").await?;
    let devices = DeviceDirectory::new();
    devices.insert(DeviceHandle::spawn(DeviceModel::load(&doc, unix_ms())?));
    main.spawn_boxed("WinderOpcAgent1", "opc-agent", Box::new(OpcAgent::new(OpcAgentConfig::new("winder"), devices.clone())))
        .await?;

    let mut op = main.endpoint("WinderRemoteAgent1").await?;
    let publisher = discover(&mut op, "process-monitoring", "winder", Duration::from_secs(5)).await?.provider;
    let conv = op.new_conversation_id("sub");
    let items = vec![SPEED.to_string(), SETPOINT.to_string()];
    op.request(subscribe_request(op.aid(), &publisher, &conv, Some(&items)), Duration::from_secs(2)).await?;

    send_write_command(&mut op, &publisher, SETPOINT, json!(1200.0), Duration::from_secs(2)).await?;
    println!("setpoint -> 1200 m/min");
    let start = tokio::time::Instant::now();
    while start.elapsed() < Duration::from_secs(6) {
        let Some(msg) = op.recv_timeout(Duration::from_secs(1)).await else { continue };
        if msg.performative != Performative::Inform {
            continue;
        }
        if let Some(p) = TelemetryPayload::from_message(&msg) {
            if let Some(u) = p.updates.iter().find(|u| u.address == SPEED) {
                println!("{:>5} ms speed {:8.2}", start.elapsed().as_millis(), u.value.as_f64());
            }
        }
    }
    main.shutdown().await;
    devices.stop_all();
    Ok(())
}
