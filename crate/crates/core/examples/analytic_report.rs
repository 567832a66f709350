//! Analytic metrics for one strategy at one parameter point.
//!
//! `cargo run --example analytic_report -- LFT 0.35 0.05`

use stubborn_mining::{metrics, validate_params, RawParams, StrategyFlags};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let flags: StrategyFlags = args.first().map_or("LFT", String::as_str).parse()?;
    let alpha: f64 = args.get(1).map_or(Ok(0.35), |s| s.parse())?;
    let theta: f64 = args.get(2).map_or(Ok(0.05), |s| s.parse())?;

    let params = validate_params(&RawParams::new(alpha, theta))?;
    let r = metrics::report(&params, flags)?;

    println!("{flags} at alpha={alpha}, theta={theta} over {} states", r.states);
    println!("  relative revenue  {:.6}  (fair share {alpha})", r.revenue.rr_m);
    println!("  throughput        {:.6}  consensus blocks per unit time", r.revenue.tps);
    println!("  tie lost, N=2/3   {:.6} / {:.6}", r.ph.ph_tie(2), r.ph.ph_tie(3));
    println!("  withheld tie block wins {:.6}", r.pf.pf);
    for len in 1..=4 {
        println!("  lead {len}: newest private block orphaned {:.6}", r.ph.ph_lead(len, 1));
    }
    if r.tail_warning() {
        println!("  truncation tail mass {:.2e} is above the warning level", r.tail_mass);
    }
    Ok(())
}
