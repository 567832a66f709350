//! Monte Carlo estimate next to the analytic value.

use stubborn_mining::sim::{simulate, Policy, Probe, SimConfig};
use stubborn_mining::{metrics, validate_params, RawParams, StrategyFlags};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let flags = StrategyFlags::FT;
    let params = validate_params(&RawParams::new(0.4, 0.2))?;
    let analytic = metrics::report(&params, flags)?;

    let config = SimConfig::new(params, Policy::Strategy(flags)).blocks(200_000).rounds(8);
    let sim = simulate(&config)?;

    println!("rr_m  analytic {:.5}  simulated {:.5} +- {:.5}", analytic.revenue.rr_m, sim.rr_m.mean, sim.rr_m.ci95);
    println!("tps   analytic {:.5}  simulated {:.5} +- {:.5}", analytic.revenue.tps, sim.tps.mean, sim.tps.ci95);
    if let Some(w) = sim.probe_win_rate(Probe::WithheldAtTie) {
        println!("withheld tie block wins: analytic {:.4}, observed {w:.4}", analytic.pf.pf);
    }
    let stale = sim.stale_total as f64 / (sim.stale_total + sim.consensus_total) as f64;
    println!("stale fraction {stale:.4}");
    Ok(())
}
