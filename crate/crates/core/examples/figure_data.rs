//! Plot-ready columns for the LFT revenue and throughput curves.
//!
//! Writes `fig5.csv` and `fig6.csv` into the directory given as the first
//! argument (default: the current directory).

use std::fs::File;
use std::path::PathBuf;

use stubborn_mining::harness::{emit_plot_data, run_sweep, Figure, SweepSpec};
use stubborn_mining::sim::Policy;
use stubborn_mining::StrategyFlags;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    let rows = run_sweep(&SweepSpec {
        strategies: vec![Policy::Strategy(StrategyFlags::LFT)],
        ..SweepSpec::default()
    })?;
    for fig in [Figure::Fig5, Figure::Fig6] {
        let path = dir.join(format!("{fig}.csv"));
        emit_plot_data(&rows, fig, File::create(&path)?)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
