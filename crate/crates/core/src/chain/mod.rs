//! The `(Δ, N)` continuous-time chain: state enumeration, generator and
//! stationary distribution.

pub(crate) mod frontier;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{validate_params, Delta, Event, MarkovState, ModelParams, RawParams, StrategyFlags};
use frontier::{successors, Frontier};

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub flags: StrategyFlags,
    pub delta_max: u32,
    states: Vec<MarkovState>,
    index: HashMap<MarkovState, usize>,
}

impl StateSpace {
    pub fn states(&self) -> &[MarkovState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, state: &MarkovState) -> Option<usize> {
        self.index.get(state).copied()
    }

    pub fn contains(&self, state: &MarkovState) -> bool {
        self.index.contains_key(state)
    }
}

/// Reachability closure from `(0, 1)` under the strategy's transition rules.
///
/// Reachability is structural: every event kind and every leaf placement is
/// considered possible, so the space does not depend on rates.
pub fn enumerate_states(flags: StrategyFlags, delta_max: u32) -> Result<StateSpace> {
    let structural = validate_params(&RawParams::new(0.25, 0.5).delta_max(delta_max))?;
    let mut seen = HashSet::new();
    let mut queue = VecDeque::from([MarkovState::INITIAL]);
    seen.insert(MarkovState::INITIAL);
    while let Some(state) = queue.pop_front() {
        for event in Event::ALL {
            for (_, next) in successors(flags, &structural, &Frontier::blank(state), event)? {
                let s = next.state();
                if seen.insert(s) {
                    queue.push_back(s);
                }
            }
        }
    }
    let mut states: Vec<MarkovState> = seen.into_iter().collect();
    states.sort();
    let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    Ok(StateSpace {
        flags,
        delta_max,
        states,
        index,
    })
}

/// One aggregated edge of the chain; self-loops are kept here but vanish from `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub from: MarkovState,
    pub to: MarkovState,
    pub rate: f64,
    pub event: Event,
}

#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    pub q: DMatrix<f64>,
    pub transitions: Vec<Transition>,
}

impl GeneratorMatrix {
    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// Largest absolute row sum.
    pub fn max_row_sum(&self) -> f64 {
        self.q
            .row_iter()
            .map(|r| r.sum().abs())
            .fold(0.0, f64::max)
    }

    /// `(from, to)` pairs present in the edge list, self-loops included.
    pub fn edge_set(&self) -> HashSet<(MarkovState, MarkovState)> {
        self.transitions.iter().map(|t| (t.from, t.to)).collect()
    }

    /// Plain-text edge list: `from  to  rate  event`, one edge per line.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for t in &self.transitions {
            writeln!(out, "{}  {}  {}  {}", t.from, t.to, t.rate, t.event.label())?;
        }
        Ok(())
    }
}

pub fn build_generator(params: &ModelParams, flags: StrategyFlags, space: &StateSpace) -> Result<GeneratorMatrix> {
    let n = space.len();
    let mut q = DMatrix::zeros(n, n);
    let mut transitions = Vec::new();
    for (i, &state) in space.states().iter().enumerate() {
        let mut edges: BTreeMap<(Event, MarkovState), f64> = BTreeMap::new();
        for (event, rate) in event_rates(params) {
            if rate == 0.0 {
                continue;
            }
            for (p, next) in successors(flags, params, &Frontier::blank(state), event)? {
                *edges.entry((event, next.state())).or_default() += rate * p;
            }
        }
        for ((event, to), rate) in edges {
            let j = space.index_of(&to).ok_or(Error::InconsistentSpace(to))?;
            if i != j {
                q[(i, j)] += rate;
            }
            transitions.push(Transition {
                from: state,
                to,
                rate,
                event,
            });
        }
        let out: f64 = (0..n).filter(|&j| j != i).map(|j| q[(i, j)]).sum();
        q[(i, i)] = -out;
    }
    Ok(GeneratorMatrix { q, transitions })
}

pub(crate) fn event_rates(params: &ModelParams) -> [(Event, f64); 3] {
    [
        (Event::MpBlock, params.alpha),
        (Event::HpBlock, params.p_beta1),
        (Event::HpFork, params.beta2),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateDistribution {
    pub pi: Vec<f64>,
    /// Max-norm of `π·Q`.
    pub residual: f64,
}

impl SteadyStateDistribution {
    pub fn prob(&self, space: &StateSpace, state: &MarkovState) -> f64 {
        space.index_of(state).map_or(0.0, |i| self.pi[i])
    }
}

/// Solves `π·Q = 0, Σπ = 1` by dense LU with the last balance equation
/// replaced by the normalisation.
pub fn solve_steady_state(q: &GeneratorMatrix) -> Result<SteadyStateDistribution> {
    let n = q.dim();
    if n == 0 {
        return Err(Error::SingularSystem);
    }
    let mut a = q.q.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let pi = a.lu().solve(&b).ok_or(Error::SingularSystem)?;
    if pi.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let pi: Vec<f64> = pi.iter().map(|&v| if v < 0.0 && v > -1e-14 { 0.0 } else { v }).collect();
    let residual = (DVector::from_row_slice(&pi).transpose() * &q.q)
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(SteadyStateDistribution { pi, residual })
}

/// Stationary mass on the truncation boundary `Lead(delta_max)`.
pub fn truncation_tail_mass(dist: &SteadyStateDistribution, space: &StateSpace) -> f64 {
    space
        .states()
        .iter()
        .zip(&dist.pi)
        .filter(|(s, _)| s.delta == Delta::Lead(space.delta_max))
        .map(|(_, p)| p)
        .sum()
}
