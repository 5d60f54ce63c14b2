//! OPC-style access to a station: connect, add a group with a deadband, and
//! poll it on a manual clock so every scan is reproducible.

use agent_scada::clock::Clock;
use agent_scada::opc::{connect_with_clock, OpcGroup};
use agent_scada::plc::config::fixtures;
use agent_scada::plc::{DeviceDirectory, DeviceHandle, DeviceModel};
use serde_json::json;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let devices = DeviceDirectory::new();
    let winder = DeviceHandle::manual(DeviceModel::load(fixtures::WINDER, 0)?);
    devices.insert(winder.clone());

    let clock = Clock::manual(0);
    let mut conn = connect_with_clock(&devices, "localhost", &winder.server_name(), "example", clock.clone())?;
    let group = OpcGroup::new("group1", true, 400, 1.0)
        .with_item("s7:[@LOCALSERVER]db1,w0")
        .with_item("s7:[@LOCALSERVER]db1,w2")
        .with_item("s7:[@LOCALSERVER]db1,w10");
    conn.add_group(group)?;

    conn.sync_write_json("group1", "s7:[@LOCALSERVER]db1,w10", &json!(1500.0))?;
    for _ in 0..20 {
        for _ in 0..4 {
            winder.with(|m| m.tick(100));
        }
        clock.advance(400);
        match conn.poll_group("group1")? {
            Some(ev) => {
                let moved: Vec<String> =
                    ev.changes.iter().map(|(a, s)| format!("{a}={:.1}", s.value.as_f64())).collect();
                println!("scan #{:<2} {}", ev.sequence_number, moved.join(" "));
            }
            None => println!("scan     nothing past the 1% deadband"),
        }
    }

    match conn.sync_write_json("group1", "s7:[@LOCALSERVER]db1,w2", &json!(1.0)) {
        Err(e) => println!("tension write: {}", e.name()),
        Ok(()) => unreachable!(),
    }
    Ok(())
}
