//! Short-horizon tie approximations against the exact block-fate values.

use stubborn_mining::{closed_form, metrics, validate_params, RawParams, StrategyFlags};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("strategy alpha  exact(0',2)  approx(0',2)  exact P_F  approx P_F");
    for flags in [StrategyFlags::S, StrategyFlags::F, StrategyFlags::LF, StrategyFlags::LFT] {
        for alpha in [0.2, 0.4] {
            let params = validate_params(&RawParams::new(alpha, 0.1))?;
            let exact = metrics::report(&params, flags)?;
            let tie = closed_form::tie_loss(&params, flags)?;
            let pf = closed_form::withheld_win(&params, flags, tie);
            println!(
                "{flags:<8} {alpha:<5}  {:.6}     {:.6}      {:.6}   {:.6}",
                exact.ph.ph_tie(2),
                tie[0],
                exact.pf.pf,
                pf
            );
        }
    }
    Ok(())
}
