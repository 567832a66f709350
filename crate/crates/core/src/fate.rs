//! Block-fate chain: the probability that a given block ends up on the main chain.
//!
//! A block's fate depends only on the chain state and on which of the live
//! tips descend from it, so tracking one tagged block through the
//! [`Frontier`] transitions gives a finite absorbing chain. Absorption in
//! `Win` (every live tip descends from the block) or `Lose` (none does) is
//! solved by Gauss-Seidel sweeps.

use std::collections::{HashMap, VecDeque};

use crate::chain::frontier::{successors, Frontier, NEW_FIRST, NEW_SECOND, TAGGED};
use crate::chain::{event_rates, StateSpace};
use crate::error::{Error, Result};
use crate::model::{decide_mp_action, Delta, Event, MarkovState, ModelParams, StrategyFlags};

const SWEEP_TOLERANCE: f64 = 1e-15;
const MAX_SWEEPS: usize = 5_000_000;

/// Canonical position of a tagged block relative to the live tips.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FateKey {
    pub delta: Delta,
    pub leaves: Vec<bool>,
    pub private: Vec<bool>,
    pub mp_tip: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Fate {
    Win,
    Lose,
    Open(usize),
}

impl FateKey {
    fn project(f: &Frontier, bit: u8) -> Self {
        let mut leaves: Vec<bool> = f.leaves.iter().map(|m| m & bit != 0).collect();
        // honest leaves are exchangeable; the aligned leaf keeps its slot
        let skip = usize::from(f.has_aligned_leaf());
        leaves[skip..].sort_unstable_by(|a, b| b.cmp(a));
        Self {
            delta: f.delta,
            leaves,
            private: f.private.iter().map(|m| m & bit != 0).collect(),
            mp_tip: matches!(f.delta, Delta::TieAllHonest | Delta::TrailMinusOne) && f.mp_tip & bit != 0,
        }
    }

    fn to_frontier(&self) -> Frontier {
        let mask = |b: bool| if b { TAGGED } else { 0 };
        Frontier {
            delta: self.delta,
            leaves: self.leaves.iter().map(|&b| mask(b)).collect(),
            private: self.private.iter().map(|&b| mask(b)).collect(),
            mp_tip: mask(self.mp_tip),
        }
    }

    fn live_tips(&self) -> impl Iterator<Item = bool> + '_ {
        let tip = match self.delta {
            Delta::Lead(_) => self.private.last().copied(),
            Delta::TiePublished => None,
            Delta::TieAllHonest | Delta::TrailMinusOne => Some(self.mp_tip),
        };
        self.leaves.iter().copied().chain(tip)
    }

    pub fn state(&self) -> MarkovState {
        MarkovState::new(self.delta, self.leaves.len() as u8)
    }

    /// The aligned leaf of a published tie (the attacker's contested block).
    pub fn tie_aligned(n: u8) -> Self {
        let mut leaves = vec![false; n as usize];
        leaves[0] = true;
        Self {
            delta: Delta::TiePublished,
            leaves,
            private: Vec::new(),
            mp_tip: false,
        }
    }

    /// The attacker's published tip while trailing or in the all-honest tie.
    pub fn trailing_tip(delta: Delta, n: u8) -> Self {
        Self {
            delta,
            leaves: vec![false; n as usize],
            private: Vec::new(),
            mp_tip: true,
        }
    }

    /// The topmost private block of a lead of `len`.
    pub fn private_top(len: u32, n: u8) -> Self {
        let mut private = vec![false; len as usize];
        if let Some(top) = private.last_mut() {
            *top = true;
        }
        Self {
            delta: Delta::Lead(len),
            leaves: vec![false; n as usize],
            private,
            mp_tip: false,
        }
    }
}

/// Solved win probabilities for every reachable tagged position.
#[derive(Debug, Clone)]
pub struct FateChain {
    index: HashMap<FateKey, usize>,
    win: Vec<f64>,
    pub sweeps: usize,
}

impl FateChain {
    /// Explores every position reachable from the blocks created by any event
    /// in any state of `space`, plus `extra` seeds whose state the strategy
    /// can act in (reachable or not), and solves the chain.
    pub fn solve(params: &ModelParams, flags: StrategyFlags, space: &StateSpace, extra: &[FateKey]) -> Result<Self> {
        let mut keys: Vec<FateKey> = Vec::new();
        let mut index: HashMap<FateKey, usize> = HashMap::new();
        let mut queue = VecDeque::new();
        let mut intern = |key: FateKey, keys: &mut Vec<FateKey>, queue: &mut VecDeque<usize>| -> Fate {
            let tips: Vec<bool> = key.live_tips().collect();
            if tips.iter().all(|&t| t) {
                return Fate::Win;
            }
            if !tips.iter().any(|&t| t) {
                return Fate::Lose;
            }
            if let Some(&i) = index.get(&key) {
                return Fate::Open(i);
            }
            let i = keys.len();
            index.insert(key.clone(), i);
            keys.push(key);
            queue.push_back(i);
            Fate::Open(i)
        };

        for &state in space.states() {
            for (event, rate) in event_rates(params) {
                if rate == 0.0 {
                    continue;
                }
                for (_, next) in successors(flags, params, &Frontier::blank(state), event)? {
                    intern(FateKey::project(&next, NEW_FIRST), &mut keys, &mut queue);
                    if event == Event::HpFork {
                        intern(FateKey::project(&next, NEW_SECOND), &mut keys, &mut queue);
                    }
                }
            }
        }
        for key in extra {
            let state = key.state();
            if Event::ALL.iter().all(|&e| decide_mp_action(flags, state, e).is_ok()) {
                intern(key.clone(), &mut keys, &mut queue);
            }
        }

        // rows: constant (mass into Win), self-loop mass, off-diagonal entries
        let mut rows: Vec<(f64, f64, Vec<(usize, f64)>)> = Vec::new();
        while let Some(i) = queue.pop_front() {
            let from = keys[i].to_frontier();
            let mut win_mass = 0.0;
            let mut self_mass = 0.0;
            let mut entries: HashMap<usize, f64> = HashMap::new();
            for (event, rate) in event_rates(params) {
                if rate == 0.0 {
                    continue;
                }
                for (p, next) in successors(flags, params, &from, event)? {
                    match intern(FateKey::project(&next, TAGGED), &mut keys, &mut queue) {
                        Fate::Win => win_mass += rate * p,
                        Fate::Lose => {}
                        Fate::Open(j) if j == i => self_mass += rate * p,
                        Fate::Open(j) => *entries.entry(j).or_default() += rate * p,
                    }
                }
            }
            if rows.len() <= i {
                rows.resize(i + 1, (0.0, 0.0, Vec::new()));
            }
            let mut entries: Vec<(usize, f64)> = entries.into_iter().collect();
            entries.sort_unstable_by_key(|e| e.0);
            rows[i] = (win_mass, self_mass, entries);
        }

        let mut win = vec![0.0; keys.len()];
        let mut sweeps = 0;
        loop {
            sweeps += 1;
            let mut change = 0.0f64;
            for (i, (b, diag, entries)) in rows.iter().enumerate() {
                let acc: f64 = entries.iter().map(|&(j, p)| p * win[j]).sum::<f64>() + b;
                let next = acc / (1.0 - diag);
                change = change.max((next - win[i]).abs());
                win[i] = next;
            }
            if change < SWEEP_TOLERANCE {
                break;
            }
            if sweeps >= MAX_SWEEPS {
                return Err(Error::FateNotConverged(sweeps));
            }
        }
        Ok(Self { index, win, sweeps })
    }

    pub fn len(&self) -> usize {
        self.win.len()
    }

    pub fn is_empty(&self) -> bool {
        self.win.is_empty()
    }

    /// Probability that the tagged block becomes a consensus block.
    pub fn win(&self, key: &FateKey) -> Option<f64> {
        let tips: Vec<bool> = key.live_tips().collect();
        if tips.iter().all(|&t| t) {
            return Some(1.0);
        }
        if !tips.iter().any(|&t| t) {
            return Some(0.0);
        }
        let mut canonical = key.clone();
        let f = canonical.to_frontier();
        canonical = FateKey::project(&f, TAGGED);
        self.index.get(&canonical).map(|&i| self.win[i])
    }

    pub(crate) fn win_of(&self, f: &Frontier, bit: u8) -> f64 {
        self.win(&FateKey::project(f, bit))
            .expect("new-block positions are seeded")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::enumerate_states;
    use crate::model::{validate_params, RawParams};

    fn chain(flags: StrategyFlags, alpha: f64, theta: f64, extra: &[FateKey]) -> FateChain {
        let p = validate_params(&RawParams::new(alpha, theta).delta_max(30)).unwrap();
        let space = enumerate_states(flags, 30).unwrap();
        FateChain::solve(&p, flags, &space, extra).unwrap()
    }

    #[test]
    fn trailing_race_matches_closed_form() {
        for alpha in [0.1, 0.3, 0.45] {
            let beta = 1.0 - alpha;
            let seeds = [
                FateKey::trailing_tip(Delta::TrailMinusOne, 1),
                FateKey::trailing_tip(Delta::TieAllHonest, 2),
            ];
            let c = chain(StrategyFlags::T1, alpha, 0.1, &seeds);
            let lose_trail = 1.0 - c.win(&seeds[0]).unwrap();
            let lose_tie = 1.0 - c.win(&seeds[1]).unwrap();
            assert!((lose_trail - beta / (1.0 - alpha * beta)).abs() < 1e-13);
            assert!((lose_tie - beta * beta / (1.0 - alpha * beta)).abs() < 1e-13);
        }
    }

    #[test]
    fn selfish_private_blocks_above_lead_one_always_win() {
        let seeds: Vec<FateKey> = (2..10).map(|len| FateKey::private_top(len, 1)).collect();
        let c = chain(StrategyFlags::S, 0.35, 0.05, &seeds);
        for key in &seeds {
            assert!((c.win(key).unwrap() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn absorbing_positions_short_circuit() {
        let c = chain(StrategyFlags::S, 0.2, 0.05, &[]);
        let settled = FateKey {
            delta: Delta::Lead(0),
            leaves: vec![true],
            private: vec![],
            mp_tip: false,
        };
        assert_eq!(c.win(&settled), Some(1.0));
        let orphan = FateKey {
            delta: Delta::Lead(1),
            leaves: vec![false, false],
            private: vec![false],
            mp_tip: false,
        };
        assert_eq!(c.win(&orphan), Some(0.0));
    }

    #[test]
    fn win_probabilities_are_probabilities() {
        for flags in StrategyFlags::all() {
            let c = chain(flags, 0.4, 0.2, &[]);
            assert!(c.win.iter().all(|&w| (-1e-15..=1.0 + 1e-12).contains(&w)));
        }
    }
}
