//! Invariants checked with randomized inputs.

use agent_scada::acl::{decode_frame, encode_frame, parse_aid, AclMessage, AgentId, Performative};
use agent_scada::clock::Clock;
use agent_scada::directory::{Registry, ServiceDescription};
use agent_scada::opc::{connect_with_clock, exceeds_deadband, OpcGroup};
use agent_scada::plc::config::fixtures;
use agent_scada::plc::{DeviceDirectory, DeviceHandle, DeviceModel, ItemState, Quality, Value};
use agent_scada::scada::{
    evaluate_alarms, AlarmKind, AlarmRule, AlarmState, TelemetryPayload, TelemetryUpdate, TrendSample, TrendSeries,
};
use agent_scada::sniffer::{export_sequence_log, parse_json_lines, CaptureSession, ExportFormat};
use proptest::prelude::*;
use serde_json::json;

fn part() -> impl Strategy<Value = String> {
    "[^@\\s\\p{C}]{1,10}"
}

fn aid() -> impl Strategy<Value = AgentId> {
    (part(), part()).prop_map(|(l, p)| AgentId::new(l, p).unwrap())
}

fn message() -> impl Strategy<Value = AclMessage> {
    (
        prop::sample::select(Performative::ALL.to_vec()),
        aid(),
        prop::collection::vec(aid(), 1..3),
        "[a-z-]{0,12}",
        "[a-zA-Z0-9-]{0,16}",
        any::<u64>(),
        prop::collection::btree_map("[a-z]{1,6}", any::<i32>(), 0..4),
    )
        .prop_map(|(p, s, r, ont, conv, ts, body)| {
            let mut m = AclMessage::new(p, s).ontology(ont).conversation(conv).content(json!(body));
            m.receivers = r;
            m.timestamp = ts;
            m
        })
}

proptest! {
    #[test]
    fn aid_canonical_form_round_trips(a in aid()) {
        let text = a.to_string();
        prop_assert_eq!(parse_aid(&text).unwrap().to_string(), text);
    }

    #[test]
    fn aid_rejects_whitespace_and_separator(l in part(), bad in prop::sample::select(vec![" ", "\t", "@", "\n"])) {
        let local = format!("{l}{bad}");
        prop_assert!(AgentId::new(local, "SCADA").is_err());
    }

    #[test]
    fn only_the_closed_performative_set_decodes(token in "[A-Z_]{1,12}") {
        let known = Performative::ALL.iter().any(|p| p.as_str() == token);
        prop_assert_eq!(token.parse::<Performative>().is_ok(), known);
    }

    #[test]
    fn concatenated_frames_decode_in_order(msgs in prop::collection::vec(message(), 1..8)) {
        let mut stream = Vec::new();
        for m in &msgs {
            stream.extend(encode_frame(m).unwrap());
        }
        let mut at = 0;
        let mut out = Vec::new();
        while at < stream.len() {
            let (m, used) = decode_frame(&stream[at..]).unwrap();
            out.push(m);
            at += used;
        }
        prop_assert_eq!(out, msgs);
    }

    #[test]
    fn registry_keys_are_unique_and_searches_are_exact(
        entries in prop::collection::vec((0..4usize, 0..2usize, 0..3usize), 0..30),
    ) {
        let mut reg = Registry::new();
        for (p, t, n) in &entries {
            let sd = ServiceDescription::new(
                AgentId::new(format!("P{p}"), "SCADA").unwrap(),
                ["process-monitoring", "trend"][*t],
                ["winder", "wrapping", "salvage"][*n],
            );
            reg.register(sd).unwrap();
        }
        let all = reg.search("process-monitoring", None);
        for (i, sd) in all.iter().enumerate() {
            prop_assert_eq!(sd.service_type.as_str(), "process-monitoring");
            prop_assert!(!all[..i].contains(sd), "duplicate {:?}", sd);
        }
        let expected: std::collections::BTreeSet<_> =
            entries.iter().filter(|(_, t, _)| *t == 0).map(|(p, _, n)| (*p, *n)).collect();
        prop_assert_eq!(all.len(), expected.len());
    }

    #[test]
    fn good_float_items_stay_in_range(writes in prop::collection::vec((0..2000u32, 1..20u64), 1..30)) {
        let mut m = DeviceModel::load(fixtures::WINDER, 0).unwrap();
        for (sp, ticks) in writes {
            m.write_item("s7:[@LOCALSERVER]db1,w10", Value::Float64(sp as f64)).unwrap();
            for _ in 0..ticks {
                m.tick(100);
            }
            for def in m.definitions() {
                let s = m.read_item(&def.address).unwrap();
                if let (Quality::Good, Value::Float64(v)) = (s.quality, s.value) {
                    prop_assert!(def.eu_low <= v && v <= def.eu_high, "{} = {}", def.address, v);
                }
                prop_assert!(s.timestamp <= m.clock_ms());
            }
        }
    }

    #[test]
    fn group_validation(rate in 0..2000u64, deadband in -10.0..110.0f64, dup in any::<bool>()) {
        let mut g = OpcGroup::new("g", true, rate, deadband).with_item("a").with_item("b");
        if dup {
            g = g.with_item("a");
        }
        let ok = rate > 0 && (0.0..=100.0).contains(&deadband) && !dup;
        prop_assert_eq!(g.validate().is_ok(), ok);
    }

    #[test]
    fn scans_are_gapless_and_only_report_deadband_moves(
        deadband in prop::sample::select(vec![0.0, 0.5, 1.0, 5.0]),
        steps in prop::collection::vec((0..8u64, prop::option::of(0..2000u32)), 1..60),
    ) {
        let devices = DeviceDirectory::new();
        let model = DeviceModel::load(fixtures::WINDER, 0).unwrap();
        let defs: Vec<_> = model.definitions().cloned().collect();
        let handle = DeviceHandle::manual(model);
        devices.insert(handle.clone());
        let clock = Clock::manual(0);
        let mut conn = connect_with_clock(&devices, "localhost", &handle.server_name(), "p", clock.clone()).unwrap();
        let mut group = OpcGroup::new("g", true, 400, deadband);
        for d in &defs {
            group = group.with_item(d.address.clone());
        }
        conn.add_group(group).unwrap();
        let mut last: std::collections::HashMap<String, ItemState> = Default::default();
        let mut next_seq = None;
        for (ticks, write) in steps {
            if let Some(sp) = write {
                handle.with(|m| m.write_item("s7:[@LOCALSERVER]db1,w10", Value::Float64(sp as f64))).unwrap();
            }
            for _ in 0..ticks {
                handle.with(|m| m.tick(100));
            }
            clock.advance(400);
            if let Some(ev) = conn.poll_group("g").unwrap() {
                if let Some(n) = next_seq {
                    prop_assert_eq!(ev.sequence_number, n);
                }
                next_seq = Some(ev.sequence_number + 1);
                for (addr, state) in &ev.changes {
                    let def = defs.iter().find(|d| &d.address == addr).unwrap();
                    if let Some(prev) = last.get(addr) {
                        prop_assert!(exceeds_deadband(def, deadband, prev, state));
                    }
                    last.insert(addr.clone(), *state);
                }
            }
        }
    }

    #[test]
    fn trend_is_bounded_fifo_with_increasing_timestamps(
        capacity in 1..20usize,
        stamps in prop::collection::vec(0..200u64, 0..100),
    ) {
        let mut series = TrendSeries::new("a", capacity);
        let mut kept = Vec::new();
        for t in stamps {
            if series.append(TrendSample { timestamp: t, value: t as f64, quality: Quality::Good }) {
                kept.push(t);
            }
        }
        let got: Vec<u64> = series.samples().map(|s| s.timestamp).collect();
        prop_assert!(got.len() <= capacity);
        prop_assert!(got.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(&got[..], &kept[kept.len().saturating_sub(capacity)..]);
    }

    #[test]
    fn high_alarm_is_open_iff_hysteresis_says_so(
        values in prop::collection::vec((1700.0..1900.0f64, prop::sample::select(vec![Quality::Good, Quality::Good, Quality::Bad])), 1..80),
    ) {
        let rules = vec![AlarmRule::high("a", 1800.0, 10.0)];
        let mut state = AlarmState::new();
        let mut open = false;
        for (i, (v, q)) in values.into_iter().enumerate() {
            let p = TelemetryPayload {
                device_id: "d".into(),
                group: "g".into(),
                publisher_sequence: i as u64 + 1,
                snapshot: false,
                updates: vec![TelemetryUpdate { address: "a".into(), value: Value::Float64(v), quality: q, timestamp: i as u64 }],
            };
            evaluate_alarms(&rules, &p, &mut state);
            if q == Quality::Good {
                if v > 1800.0 {
                    open = true;
                } else if v < 1790.0 {
                    open = false;
                }
            }
            prop_assert_eq!(state.is_open("d", "a", AlarmKind::High), open);
            prop_assert_eq!(state.is_open("d", "a", AlarmKind::BadQuality), q != Quality::Good);
            let per_kind = state.open_events().iter().filter(|e| e.kind == AlarmKind::High).count();
            prop_assert!(per_kind <= 1);
        }
    }

    #[test]
    fn capture_sequence_is_gapless_and_exports_losslessly(msgs in prop::collection::vec(message(), 0..20)) {
        let session = CaptureSession::new(None);
        for m in &msgs {
            for r in &m.receivers {
                session.record(m, r);
            }
        }
        let records = session.records();
        let receivers: usize = msgs.iter().map(|m| m.receivers.len()).sum();
        prop_assert_eq!(records.len(), receivers);
        for (i, r) in records.iter().enumerate() {
            prop_assert_eq!(r.seq, i as u64 + 1);
        }
        let back = parse_json_lines(&export_sequence_log(&records, ExportFormat::JsonLines)).unwrap();
        prop_assert_eq!(back, records);
    }
}
