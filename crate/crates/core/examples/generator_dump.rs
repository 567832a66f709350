//! Prints the reachable states of a strategy and its generator edge list.

use std::io::stdout;

use stubborn_mining::chain::{build_generator, enumerate_states, solve_steady_state};
use stubborn_mining::{validate_params, RawParams, StrategyFlags};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let flags = StrategyFlags::LT;
    let delta_max = 6;
    let params = validate_params(&RawParams::new(0.3, 0.1).delta_max(delta_max))?;
    let space = enumerate_states(flags, delta_max)?;
    let q = build_generator(&params, flags, &space)?;
    let dist = solve_steady_state(&q)?;

    for s in space.states() {
        println!("{s:>8}  pi = {:.6}", dist.prob(&space, s));
    }
    println!();
    q.write_edge_list(stdout().lock())?;
    Ok(())
}
