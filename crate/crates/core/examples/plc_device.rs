//! Step a simulated winder station by hand: raise the speed setpoint and
//! watch the lagged speed follow it.

use agent_scada::plc::config::fixtures;
use agent_scada::plc::{DeviceModel, Value};

const SPEED: &str = "s7:[@LOCALSERVER]db1,w0";
const SETPOINT: &str = "s7:[@LOCALSERVER]db1,w10";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut winder = DeviceModel::load(fixtures::WINDER, 0)?;
    println!("{} ({})", winder.device_id(), winder.server_name());
    for def in winder.definitions() {
        println!("  {:<28} {:<14} {:?} writable={}", def.address, def.name, def.data_type, def.writable);
    }

    winder.write_item(SETPOINT, Value::Float64(1200.0))?;
    let dt = winder.tick_interval_ms();
    for step in 0..=100 {
        if step % 10 == 0 {
            let s = winder.read_item(SPEED)?;
            println!("t={:>6} ms speed={:>8.2} {:?}", winder.clock_ms(), s.value.as_f64(), s.quality);
        }
        winder.tick(dt);
    }

    match winder.write_item(SPEED, Value::Float64(0.0)) {
        Err(e) => println!("write to speed refused: {e}"),
        Ok(()) => unreachable!(),
    }
    Ok(())
}
