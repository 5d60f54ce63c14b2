//! Run the alarm automaton and a trend buffer over a synthetic speed ramp.

use agent_scada::plc::{Quality, Value};
use agent_scada::scada::{evaluate_alarms, AlarmKind, AlarmRule, AlarmState, TelemetryPayload, TelemetryUpdate, TrendSample, TrendSeries};

const SPEED: &str = "s7:[@LOCALSERVER]db1,w0";

fn main() {
    // HIGH above 1800 m/min, clearing only once back under 1790.
    let rules = vec![AlarmRule::high(SPEED, 1800.0, 10.0)];
    let mut alarms = AlarmState::new();
    let mut trend = TrendSeries::new(SPEED, 16);

    let ramp = [1700.0, 1780.0, 1805.0, 1850.0, 1795.0, 1791.0, 1789.0, 1750.0];
    for (i, v) in ramp.into_iter().enumerate() {
        let t = 1_000 + i as u64 * 400;
        let quality = if i == 7 { Quality::Bad } else { Quality::Good };
        let payload = TelemetryPayload {
            device_id: "winder".into(),
            group: "group1".into(),
            publisher_sequence: i as u64 + 1,
            snapshot: i == 0,
            updates: vec![TelemetryUpdate { address: SPEED.into(), value: Value::Float64(v), quality, timestamp: t }],
        };
        trend.append(TrendSample { timestamp: t, value: v, quality });
        for tr in evaluate_alarms(&rules, &payload, &mut alarms) {
            println!("t={t} v={v}: {:?} {}", tr.change, tr.event.kind);
        }
    }
    println!("HIGH open: {}", alarms.is_open("winder", SPEED, AlarmKind::High));
    if let Some(ev) = alarms.acknowledge("winder", SPEED, AlarmKind::BadQuality) {
        println!("acknowledged {} since {}", ev.kind, ev.onset);
    }

    let window = trend.window(1_800, 2_600);
    println!("trend window 1800..=2600: {:?}", window.iter().map(|s| s.value).collect::<Vec<_>>());
    let stale = trend.append(TrendSample { timestamp: 1_000, value: 0.0, quality: Quality::Good });
    println!("stale sample kept: {stale}, dropped so far: {}", trend.dropped());
}
