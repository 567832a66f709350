//! Smallest grid alpha at which each strategy out-earns its fair share.

use stubborn_mining::harness::{find_threshold, run_sweep, SweepSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rows = run_sweep(&SweepSpec::default())?;
    for t in find_threshold(&rows) {
        let a = t.alpha.map_or("never".to_string(), |a| format!("{a:.2}"));
        println!("{:<4} theta={:<5} {a}", t.strategy, t.theta);
    }
    Ok(())
}
