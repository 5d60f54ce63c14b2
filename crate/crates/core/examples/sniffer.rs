//! Capture inter-agent traffic while an operator subscribes to the winder,
//! then print the sequence log and a per-conversation summary.

use std::time::Duration;

use agent_scada::clock::unix_ms;
use agent_scada::plc::config::fixtures;
use agent_scada::plc::{DeviceDirectory, DeviceHandle, DeviceModel};
use agent_scada::runtime::start_main_container;
use agent_scada::scada::{OpcAgent, OpcAgentConfig, OperatorAgent, OperatorConfig, Target};
use agent_scada::sniffer::{conversations, ExportFormat};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let main = start_main_container("SCADA", "127.0.0.1:0").await?;
    let devices = DeviceDirectory::new();
    devices.insert(DeviceHandle::spawn(DeviceModel::load(fixtures::WINDER, unix_ms())?));

    let session = main.start_capture(None)?;
    main.spawn_boxed("WinderOpcAgent1", "opc-agent", Box::new(OpcAgent::new(OpcAgentConfig::new("winder"), devices.clone())))
        .await?;
    let operator = OperatorAgent::new(OperatorConfig::new(vec![Target::monitoring("winder")]))?;
    main.spawn_boxed("WinderRemoteAgent1", "operator", Box::new(operator)).await?;
    tokio::time::sleep(Duration::from_secs(2)).await;
    main.stop_capture();

    print!("{}", session.export(ExportFormat::Text));
    for c in conversations(&session.records()) {
        let perfs: Vec<String> = c.performatives.iter().map(|p| p.to_string()).collect();
        println!("{} {} -> {} [{}]: {}", c.ontology, c.initiator, c.responder, c.conversation_id, perfs.join(" "));
    }

    let dir = std::env::temp_dir().join("agent-scada-sniffer");
    for path in session.write_files(&dir, "example")? {
        println!("wrote {}", path.display());
    }
    main.shutdown().await;
    devices.stop_all();
    Ok(())
}
