//! Checks simulated state transitions against the generator and prints
//! the first few lines of the trace.

use stubborn_mining::chain::{build_generator, enumerate_states};
use stubborn_mining::sim::{run_audited, Policy, SimConfig};
use stubborn_mining::{validate_params, RawParams, StrategyFlags};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let flags = StrategyFlags::LFT;
    let params = validate_params(&RawParams::new(0.3, 0.1))?;
    let edges = build_generator(&params, flags, &enumerate_states(flags, params.delta_max)?)?.edge_set();
    let config = SimConfig::new(params.clone(), Policy::Strategy(flags));

    let mut trace = Vec::new();
    let report = run_audited(&config, 0, 50_000, &edges, params.delta_max, Some(&mut trace))?;
    for line in String::from_utf8(trace)?.lines().take(12) {
        println!("{line}");
    }
    println!(
        "{} events, {} distinct transitions, none outside the generator",
        report.events, report.distinct_transitions
    );
    Ok(())
}
