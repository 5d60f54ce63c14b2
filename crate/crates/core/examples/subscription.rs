//! Subscribe once to an OPC-Agent and receive telemetry: the AGREE carries
//! the item catalog, the first INFORM is a full snapshot, later ones carry
//! changes only.

use std::time::Duration;

use agent_scada::acl::Performative;
use agent_scada::clock::unix_ms;
use agent_scada::directory::discover;
use agent_scada::plc::config::fixtures;
use agent_scada::plc::{DeviceDirectory, DeviceHandle, DeviceModel};
use agent_scada::runtime::start_main_container;
use agent_scada::scada::{cancel_request, subscribe_request, OpcAgent, OpcAgentConfig, TelemetryPayload};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let main = start_main_container("SCADA", "127.0.0.1:0").await?;
    let devices = DeviceDirectory::new();
    devices.insert(DeviceHandle::spawn(DeviceModel::load(fixtures::WINDER, unix_ms())?));
    main.spawn_boxed("WinderOpcAgent1", "opc-agent", Box::new(OpcAgent::new(OpcAgentConfig::new("winder"), devices.clone())))
        .await?;

    let mut operator = main.endpoint("WinderRemoteAgent1").await?;
    let sd = discover(&mut operator, "process-monitoring", "winder", Duration::from_secs(5)).await?;
    println!("discovered {} ({:?})", sd.provider, sd.properties);

    let conv = operator.new_conversation_id("sub");
    let agree = operator.request(subscribe_request(operator.aid(), &sd.provider, &conv, None), Duration::from_secs(2)).await?;
    println!("{} at {} ms, {} items", agree.performative, agree.content["update_rate_ms"], agree.content["items"].as_array().map_or(0, Vec::len));

    let mut informs = 0;
    while informs < 8 {
        let Some(msg) = operator.recv_timeout(Duration::from_secs(2)).await else { break };
        if msg.performative != Performative::Inform {
            continue;
        }
        let Some(p) = TelemetryPayload::from_message(&msg) else { continue };
        informs += 1;
        let speed = p.updates.iter().find(|u| u.address.ends_with("db1,w0")).map(|u| u.value.as_f64());
        println!(
            "#{} snapshot={} {} update(s) speed={}",
            p.publisher_sequence,
            p.snapshot,
            p.updates.len(),
            speed.map_or("-".into(), |v| format!("{v:.2}"))
        );
    }

    let done = operator.request(cancel_request(operator.aid(), &sd.provider, &conv), Duration::from_secs(2)).await?;
    println!("cancel -> {} {}", done.performative, done.content["status"]);
    main.shutdown().await;
    devices.stop_all();
    Ok(())
}
