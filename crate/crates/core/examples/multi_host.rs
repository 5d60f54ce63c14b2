//! Two containers on one platform over TCP: the OPC-Agent lives on the
//! main container, the operator on a joined one. Stopping the joined
//! container removes its agents from the platform.

use std::time::Duration;

use agent_scada::clock::unix_ms;
use agent_scada::plc::config::fixtures;
use agent_scada::plc::{DeviceDirectory, DeviceHandle, DeviceModel};
use agent_scada::runtime::{join_container, query_ps, start_main_container};
use agent_scada::scada::{GatewayEvent, OpcAgent, OpcAgentConfig, OperatorAgent, OperatorConfig, Target};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let host1 = start_main_container("SCADA", "127.0.0.1:0").await?;
    let addr = host1.listen_address().to_string();
    let devices = DeviceDirectory::new();
    devices.insert(DeviceHandle::spawn(DeviceModel::load(fixtures::WINDER, unix_ms())?));
    host1
        .spawn_boxed("WinderOpcAgent1", "opc-agent", Box::new(OpcAgent::new(OpcAgentConfig::new("winder"), devices.clone())))
        .await?;

    let host2 = join_container(&addr, "host2", "SCADA").await?;
    let operator = OperatorAgent::new(OperatorConfig::new(vec![Target::monitoring("winder")]))?;
    let mut events = operator.subscribe_events();
    host2.spawn_boxed("WinderRemoteAgent1", "operator", Box::new(operator)).await?;

    for row in query_ps(&addr, "SCADA").await? {
        println!("{:<20} {:<10} {}", row.local_name, row.kind, row.container);
    }

    let mut seen = 0;
    while seen < 5 {
        match tokio::time::timeout(Duration::from_secs(3), events.recv()).await {
            Ok(Ok(GatewayEvent::Telemetry { publisher, payload, .. })) => {
                println!("host2 got #{} from {publisher}", payload.publisher_sequence);
                seen += 1;
            }
            Ok(Ok(_)) => {}
            _ => break,
        }
    }

    host2.shutdown().await;
    tokio::time::sleep(Duration::from_millis(500)).await;
    let left: Vec<String> = query_ps(&addr, "SCADA").await?.into_iter().map(|r| r.local_name).collect();
    println!("after host2 left: {}", left.join(", "));
    host1.shutdown().await;
    devices.stop_all();
    Ok(())
}
