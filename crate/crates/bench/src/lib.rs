//! Fixtures shared by the benchmarks.

use wsn_core::netsim::SinkError;
use wsn_core::{parse_run_config, run_simulation, RunConfig, SimEvent, Snapshot};

/// The six-node lab layout with all gas channels and some link loss.
pub fn lab_config(rounds: u64) -> RunConfig {
    config(2, 2, rounds)
}

/// `heads` clusters of `leaflets` each, all channels equipped.
pub fn config(heads: usize, leaflets: usize, rounds: u64) -> RunConfig {
    let mut text = format!(
        "radio 30 0.05\nseed 9\nrounds {rounds}\n\
         env TEMP_C 25 walk 0.1\nenv LIGHT_RAW 500 walk 5\n\
         env CH4_PPM 9500 walk 300\nenv CO_PPM 45 walk 3\nenv O2_PCT 20 walk 0.4\n\
         alert ch4-high CH4_PPM GT 10000 DANGER\n\
         alert co-high CO_PPM GT 50 DANGER\n\
         alert o2-low O2_PCT LT 19.5 WARN\n"
    );
    for h in 1..=heads {
        text.push_str(&format!("cluster N{h}"));
        for l in 1..=leaflets {
            text.push_str(&format!(" {h}.{l}"));
        }
        text.push('\n');
    }
    parse_run_config(&text).expect("fixture config is valid")
}

/// Every snapshot of a full run of `cfg`.
pub fn snapshots(cfg: &RunConfig) -> Vec<Snapshot> {
    let mut out = Vec::new();
    let mut sink = |s: &Snapshot, _: &[SimEvent]| -> Result<(), SinkError> {
        out.push(s.clone());
        Ok(())
    };
    run_simulation(&cfg.sim, &mut sink).expect("fixture run succeeds");
    out
}
