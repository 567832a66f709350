//! Branch-win probabilities, pool revenues, relative revenue and throughput.
//!
//! Revenue is the stationary rate of blocks that end up on the main chain:
//! every event in state `s` creates one or two blocks, each credited with the
//! probability (from the [`FateChain`]) that it becomes a consensus block.

use serde::Serialize;

use crate::chain::frontier::{successors, Frontier, NEW_FIRST, NEW_SECOND};
use crate::chain::{
    build_generator, enumerate_states, event_rates, solve_steady_state, truncation_tail_mass, StateSpace,
    SteadyStateDistribution,
};
use crate::error::Result;
use crate::fate::{FateChain, FateKey};
use crate::model::{Event, ModelParams, StrategyFlags};

/// Tail-mass level above which a truncation depth is flagged as too shallow.
pub const TAIL_MASS_WARNING: f64 = 1e-6;

/// Probabilities that the public side wins a race, by situation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchWinProbabilities {
    /// Attacker one block behind.
    pub ph_minus1: f64,
    /// All-honest tie after a trailing catch-up.
    pub ph_tie_allhonest: f64,
    /// Published tie with N = 2, 3 leaves.
    pub ph_tie: [f64; 2],
    /// `ph_lead[len - 1][n - 1]`: the top private block of a lead `len` is orphaned.
    ph_lead: Vec<[f64; 3]>,
}

impl BranchWinProbabilities {
    pub fn ph_tie(&self, n: usize) -> f64 {
        self.ph_tie[n - 2]
    }

    /// Probability that the newest private block of a lead of `len` is orphaned.
    ///
    /// Beyond the truncation depth the value at the boundary is returned.
    pub fn ph_lead(&self, len: u32, n: usize) -> f64 {
        assert!(len >= 1, "leads start at 1");
        let i = (len as usize - 1).min(self.ph_lead.len() - 1);
        self.ph_lead[i][n - 1]
    }

    pub fn max_lead(&self) -> u32 {
        self.ph_lead.len() as u32
    }

    fn from_fate(params: &ModelParams, fate: &FateChain) -> Self {
        let (ph_minus1, ph_tie_allhonest) = compute_ph_boundary(params);
        let lose = |key: &FateKey| fate.win(key).map(|w| 1.0 - w);
        let ph_tie = [2u8, 3].map(|n| lose(&FateKey::tie_aligned(n)).expect("probe positions are seeded"));
        let ph_lead = (1..=params.delta_max)
            .map(|len| [1u8, 2, 3].map(|n| lose(&FateKey::private_top(len, n)).expect("probe positions are seeded")))
            .collect();
        Self {
            ph_minus1,
            ph_tie_allhonest,
            ph_tie,
            ph_lead,
        }
    }
}

/// Seeds for every position [`BranchWinProbabilities`] reads.
fn probe_seeds(params: &ModelParams) -> Vec<FateKey> {
    let mut seeds = vec![FateKey::tie_aligned(2), FateKey::tie_aligned(3)];
    for len in 1..=params.delta_max {
        for n in 1..=3 {
            seeds.push(FateKey::private_top(len, n));
        }
    }
    seeds
}

/// Closed-form trailing race: `(P_H(-1), P_H(0''))`.
pub fn compute_ph_boundary(params: &ModelParams) -> (f64, f64) {
    let (a, b) = (params.alpha, params.beta);
    let denom = 1.0 - a * b;
    (b / denom, b * b / denom)
}

/// Branch-win probabilities from a solved fate chain.
pub fn solve_ph_tie(params: &ModelParams, flags: StrategyFlags) -> Result<BranchWinProbabilities> {
    let space = enumerate_states(flags, params.delta_max)?;
    let fate = FateChain::solve(params, flags, &space, &probe_seeds(params))?;
    Ok(BranchWinProbabilities::from_fate(params, &fate))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForkWinProbability {
    /// A block found and withheld during a published tie becomes a consensus block.
    pub pf: f64,
}

/// Fate of the attacker's withheld tie-breaking block, read at N = 2.
///
/// Only strategies with `fork` ever withhold it; for the others the value is
/// still defined (the block is simply never held).
pub fn compute_pf(ph: &BranchWinProbabilities) -> ForkWinProbability {
    ForkWinProbability {
        pf: 1.0 - ph.ph_lead(1, 2),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RevenueReport {
    pub e_m: f64,
    pub e_h: f64,
    pub rr_m: f64,
    pub rr_h: f64,
    pub tps: f64,
}

impl RevenueReport {
    fn new(e_m: f64, e_h: f64) -> Self {
        let tps = e_m + e_h;
        Self {
            e_m,
            e_h,
            rr_m: e_m / tps,
            rr_h: e_h / tps,
            tps,
        }
    }
}

/// Stationary revenue rates of both sides.
pub fn compute_revenues(
    dist: &SteadyStateDistribution,
    space: &StateSpace,
    params: &ModelParams,
    flags: StrategyFlags,
    fate: &FateChain,
) -> Result<RevenueReport> {
    let mut e_m = 0.0;
    let mut e_h = 0.0;
    for (&state, &pi) in space.states().iter().zip(&dist.pi) {
        if pi == 0.0 {
            continue;
        }
        for (event, rate) in event_rates(params) {
            if rate == 0.0 {
                continue;
            }
            let mut expected = 0.0;
            for (p, next) in successors(flags, params, &Frontier::blank(state), event)? {
                let mut w = fate.win_of(&next, NEW_FIRST);
                if event == Event::HpFork {
                    w += fate.win_of(&next, NEW_SECOND);
                }
                expected += p * w;
            }
            match event {
                Event::MpBlock => e_m += pi * rate * expected,
                Event::HpBlock | Event::HpFork => e_h += pi * rate * expected,
            }
        }
    }
    Ok(RevenueReport::new(e_m, e_h))
}

/// Everything the analytic engine reports for one parameter point.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub strategy: String,
    pub alpha: f64,
    pub theta: f64,
    pub delta_max: u32,
    pub revenue: RevenueReport,
    pub ph: BranchWinProbabilities,
    pub pf: ForkWinProbability,
    pub tail_mass: f64,
    pub residual: f64,
    pub states: usize,
    pub fate_positions: usize,
}

impl MetricsReport {
    pub fn tail_warning(&self) -> bool {
        self.tail_mass > TAIL_MASS_WARNING
    }
}

/// Full analytic pipeline for one point.
pub fn report(params: &ModelParams, flags: StrategyFlags) -> Result<MetricsReport> {
    let space = enumerate_states(flags, params.delta_max)?;
    let generator = build_generator(params, flags, &space)?;
    let dist = solve_steady_state(&generator)?;
    let fate = FateChain::solve(params, flags, &space, &probe_seeds(params))?;
    let ph = BranchWinProbabilities::from_fate(params, &fate);
    let pf = compute_pf(&ph);
    let revenue = compute_revenues(&dist, &space, params, flags, &fate)?;
    Ok(MetricsReport {
        strategy: flags.name().to_string(),
        alpha: params.alpha,
        theta: params.theta,
        delta_max: params.delta_max,
        revenue,
        ph,
        pf,
        tail_mass: truncation_tail_mass(&dist, &space),
        residual: dist.residual,
        states: space.len(),
        fate_positions: fate.len(),
    })
}

