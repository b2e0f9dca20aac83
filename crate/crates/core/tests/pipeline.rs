//! Simulator → telemetry file → tailing gateway, all through the public API.

use std::sync::Arc;

use wsn_core::{parse_run_config, parse_telemetry, run_simulation, Gateway, SimEvent, Snapshot, TelemetryTail, TelemetryWriter};

const CONFIG: &str = "\
radio 30 0.1
cluster N1 1.1 1.2
cluster N2 2.1 2.2
seed 3
env TEMP_C 21 walk 0.1
env CH4_PPM 9000 walk 400
rounds 60
fail BS N2 5 9
alert ch4-high CH4_PPM GT 10000 DANGER
";

#[test]
fn file_written_by_simulator_is_followed_by_gateway() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.log");
    let cfg = parse_run_config(CONFIG).unwrap();

    let mut writer = TelemetryWriter::create(&path, &cfg.sim.topology).unwrap();
    let gateway = Arc::new(
        Gateway::new(cfg.sim.topology.clone(), cfg.rules.clone(), Box::new(TelemetryTail::new(&path))).unwrap(),
    );
    let mut seen = Vec::new();
    let mut sink = |s: &Snapshot, _: &[SimEvent]| -> Result<(), wsn_core::netsim::SinkError> {
        writer.append(s)?;
        gateway.refresh()?;
        seen.push(gateway.view().latest.as_ref().map(|l| l.round));
        Ok(())
    };
    let summary = run_simulation(&cfg.sim, &mut sink).unwrap();
    assert_eq!(summary.rounds_run, 60);

    // The gateway saw every round as soon as it was written.
    let expected: Vec<Option<u64>> = (0..60).map(Some).collect();
    assert_eq!(seen, expected);

    let parsed = parse_telemetry(&std::fs::read(&path).unwrap()).unwrap();
    assert!(parsed.partial.is_none());
    let snapshots = parsed.require_complete().unwrap();
    assert_eq!(snapshots.len(), 60);
    for s in &snapshots[5..=9] {
        for node in ["N2", "2.1", "2.2"] {
            assert!(!s.readings.iter().find(|r| r.node == *node).unwrap().is_ok());
        }
    }
    assert_eq!(gateway.view().latest.as_ref().unwrap(), snapshots.last().unwrap());
}

#[test]
fn gateway_rejects_log_of_another_topology() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("other.log");
    let other = parse_run_config("radio 30 0\ncluster A x\n").unwrap();
    let cfg = parse_run_config(CONFIG).unwrap();
    TelemetryWriter::create(&path, &other.sim.topology).unwrap();
    let gateway = Gateway::new(cfg.sim.topology.clone(), vec![], Box::new(TelemetryTail::new(&path))).unwrap();
    let err = gateway.refresh().unwrap_err();
    assert!(err.to_string().contains("does not match"), "{err}");
}
