//! Ranks the eight strategies by relative revenue at a few attacker sizes.

use stubborn_mining::{metrics, validate_params, RawParams, StrategyFlags};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let theta = 0.01;
    for alpha in [0.1, 0.25, 0.35, 0.45] {
        let params = validate_params(&RawParams::new(alpha, theta))?;
        let mut ranked = StrategyFlags::all()
            .into_iter()
            .map(|f| Ok((f, metrics::report(&params, f)?.revenue.rr_m)))
            .collect::<stubborn_mining::Result<Vec<_>>>()?;
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        let line: Vec<String> = ranked.iter().map(|(f, rr)| format!("{f}={rr:.4}")).collect();
        println!("alpha {alpha:<4} {}", line.join("  "));
    }
    Ok(())
}
