//! Register a service with the platform directory and find it again, both
//! through the in-memory registry and over the platform.

use std::time::Duration;

use agent_scada::acl::{AclMessage, Performative};
use agent_scada::directory::{discover, parse_results, search_request, Registry, ServiceDescription, DF_ONTOLOGY};
use agent_scada::runtime::start_main_container;
use serde_json::json;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let main = start_main_container("SCADA", "127.0.0.1:0").await?;

    // A plain registry, no platform involved.
    let mut registry = Registry::new();
    let sd = ServiceDescription::new(main.aid("WinderOpcAgent1")?, "process-monitoring", "winder")
        .with_property("device_id", "winder");
    registry.register(sd.clone())?;
    registry.register(sd.clone())?;
    println!("registry holds {} entry after a repeated register", registry.len());

    // The same over the directory facilitator.
    let mut provider = main.endpoint("WinderOpcAgent1").await?;
    let df = main.aid("df")?;
    let register = AclMessage::new(Performative::Request, provider.aid().clone())
        .to(df.clone())
        .ontology(DF_ONTOLOGY)
        .content(json!({"action": "register", "sd": sd}));
    let reply = provider.request(register, Duration::from_secs(2)).await?;
    println!("register -> {} {}", reply.performative, reply.content["status"]);

    let mut client = main.endpoint("client").await?;
    let reply = client.request(search_request(client.aid(), &df, "process-monitoring", None), Duration::from_secs(2)).await?;
    for found in parse_results(&reply) {
        println!("found {} {} at {}", found.service_type, found.service_name, found.provider);
    }

    let found = discover(&mut client, "process-monitoring", "wrapping", Duration::from_millis(1200)).await;
    match found {
        Ok(sd) => println!("wrapping at {}", sd.provider),
        Err(e) => println!("wrapping: {}", e.name()),
    }

    drop(provider);
    tokio::time::sleep(Duration::from_millis(300)).await;
    let reply = client.request(search_request(client.aid(), &df, "process-monitoring", None), Duration::from_secs(2)).await?;
    println!("after the provider left: {} result(s)", parse_results(&reply).len());
    main.shutdown().await;
    Ok(())
}
