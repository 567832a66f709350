//! Runs both engines on a small grid and reports the largest gaps.

use stubborn_mining::harness::{cross_validate, run_sweep, Engine, SweepSpec};
use stubborn_mining::sim::Policy;
use stubborn_mining::StrategyFlags;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SweepSpec {
        strategies: [StrategyFlags::S, StrategyFlags::LF, StrategyFlags::LFT].map(Policy::Strategy).to_vec(),
        alphas: vec![0.2, 0.35],
        thetas: vec![0.01, 0.2],
        engine: Engine::Both,
        blocks_per_round: 200_000,
        rounds: 6,
        ..SweepSpec::default()
    };
    let rows = run_sweep(&spec)?;
    let report = cross_validate(&rows, 0.005)?;
    print!("{report}");
    Ok(())
}
