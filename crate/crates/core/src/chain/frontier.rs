//! Local block configuration behind a chain state.
//!
//! A [`Frontier`] is the smallest piece of the block tree that decides what
//! happens next: the public leaves honest pools may extend, the attacker's
//! private blocks, and (when trailing) the attacker's tip. Every block carries
//! a bit mask recording which tracked blocks it descends from, so one
//! transition function serves both the generator (masks ignored) and the
//! block-fate chain (masks projected onto one tracked block).

use crate::error::Result;
use crate::model::{decide_mp_action, Delta, Event, MarkovState, ModelParams, MpAction, StrategyFlags};

/// Mask bit of a block tracked across transitions.
pub(crate) const TAGGED: u8 = 0b001;
/// Mask bit of the (first) block created by the event being expanded.
pub(crate) const NEW_FIRST: u8 = 0b010;
/// Mask bit of the second block of an honest fork.
pub(crate) const NEW_SECOND: u8 = 0b100;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) struct Frontier {
    pub delta: Delta,
    /// Public leaves honest pools mine on. In `Lead` and `TiePublished`
    /// states `leaves[0]` is the leaf on the attacker's branch.
    pub leaves: Vec<u8>,
    /// Private blocks above the aligned leaf, lowest first (`Lead` only).
    pub private: Vec<u8>,
    /// Published attacker tip while trailing or in the all-honest tie.
    pub mp_tip: u8,
}

impl Frontier {
    /// Untagged configuration with the shape of `state`.
    pub fn blank(state: MarkovState) -> Self {
        let k = match state.delta {
            Delta::Lead(k) => k as usize,
            _ => 0,
        };
        Self {
            delta: state.delta,
            leaves: vec![0; state.n_leaves as usize],
            private: vec![0; k],
            mp_tip: 0,
        }
    }

    pub fn state(&self) -> MarkovState {
        MarkovState::new(self.delta, self.leaves.len() as u8)
    }

    /// Whether one public leaf lies on the attacker's branch.
    pub fn has_aligned_leaf(&self) -> bool {
        matches!(self.delta, Delta::Lead(_) | Delta::TiePublished)
    }

    pub fn attacker_tip(&self) -> u8 {
        match self.delta {
            Delta::Lead(_) => self.private.last().copied().unwrap_or(self.leaves[0]),
            Delta::TiePublished => self.leaves[0],
            Delta::TieAllHonest | Delta::TrailMinusOne => self.mp_tip,
        }
    }

    fn lead_from_tip(tip: u8) -> Self {
        Self {
            delta: Delta::Lead(0),
            leaves: vec![tip],
            private: Vec::new(),
            mp_tip: 0,
        }
    }

    fn adopt(first: u8, second: u8) -> Self {
        Self {
            delta: Delta::Lead(0),
            leaves: vec![first, second],
            private: Vec::new(),
            mp_tip: 0,
        }
    }

    fn trailing(tip: u8, leaves: Vec<u8>) -> Self {
        Self {
            delta: Delta::TrailMinusOne,
            leaves,
            private: Vec::new(),
            mp_tip: tip,
        }
    }
}

fn single_placements(params: &ModelParams, f: &Frontier) -> Vec<(f64, usize)> {
    let n = f.leaves.len();
    if !f.has_aligned_leaf() {
        return (0..n).map(|i| (1.0 / n as f64, i)).collect();
    }
    if n == 1 {
        return vec![(1.0, 0)];
    }
    let gamma = params.gamma(n);
    let mut out = vec![(gamma, 0)];
    out.extend((1..n).map(|i| ((1.0 - gamma) / (n - 1) as f64, i)));
    out
}

fn fork_placements(params: &ModelParams, f: &Frontier) -> Vec<(f64, usize, usize)> {
    let n = f.leaves.len();
    if !f.has_aligned_leaf() {
        let p = 1.0 / (n * n) as f64;
        return (0..n)
            .flat_map(|i| (0..n).map(move |j| (p, i, j)))
            .collect();
    }
    if n == 1 {
        return vec![(1.0, 0, 0)];
    }
    let others = (n - 1) as f64;
    let mut out = vec![(params.g_a(n), 0, 0)];
    out.extend((1..n).map(|i| (params.g_ah(n) / others, 0, i)));
    for i in 1..n {
        for j in 1..n {
            out.push((params.g_h(n) / (others * others), i, j));
        }
    }
    out
}

/// Outcomes of `event` from `f`, with probabilities conditional on the event.
///
/// New blocks carry [`NEW_FIRST`] / [`NEW_SECOND`] on top of their parent's mask.
pub(crate) fn successors(
    flags: StrategyFlags,
    params: &ModelParams,
    f: &Frontier,
    event: Event,
) -> Result<Vec<(f64, Frontier)>> {
    let action = decide_mp_action(flags, f.state(), event)?;
    let mut out = Vec::new();
    match event {
        Event::MpBlock => {
            let block = f.attacker_tip() | NEW_FIRST;
            let next = match (f.delta, action) {
                (Delta::Lead(k), MpAction::Hold) => {
                    let mut g = f.clone();
                    if k >= params.delta_max {
                        // truncation: the lead stays put and the new block shares the top slot
                        *g.private.last_mut().expect("boundary lead has private blocks") |= NEW_FIRST;
                    } else {
                        g.private.push(block);
                        g.delta = Delta::Lead(k + 1);
                    }
                    g
                }
                (Delta::TiePublished, MpAction::Hold) => Frontier {
                    delta: Delta::Lead(1),
                    leaves: f.leaves.clone(),
                    private: vec![block],
                    mp_tip: 0,
                },
                (Delta::TiePublished | Delta::TieAllHonest, MpAction::Publish) => Frontier::lead_from_tip(block),
                (Delta::TrailMinusOne, MpAction::Publish) => Frontier {
                    delta: Delta::TieAllHonest,
                    leaves: f.leaves.clone(),
                    private: Vec::new(),
                    mp_tip: block,
                },
                _ => unreachable!("attacker block handled by the decision table"),
            };
            out.push((1.0, next));
        }
        Event::HpBlock => {
            for (p, i) in single_placements(params, f) {
                if p == 0.0 {
                    continue;
                }
                let b = f.leaves[i] | NEW_FIRST;
                let next = match action {
                    MpAction::PublishOne => publish_one(f, vec![b]),
                    MpAction::PublishAll => Frontier::lead_from_tip(f.attacker_tip()),
                    MpAction::AdoptPublic => Frontier::lead_from_tip(b),
                    MpAction::MineOnNewPrivate => {
                        if i == 0 || !flags.trail {
                            Frontier::lead_from_tip(b)
                        } else {
                            Frontier::trailing(f.leaves[0], vec![b])
                        }
                    }
                    MpAction::MineOnPrivate => Frontier::trailing(f.mp_tip, vec![b]),
                    MpAction::Hold | MpAction::Publish => unreachable!("not an honest-event action"),
                };
                out.push((p, next));
            }
        }
        Event::HpFork => {
            for (p, i, j) in fork_placements(params, f) {
                if p == 0.0 {
                    continue;
                }
                let b1 = f.leaves[i] | NEW_FIRST;
                let b2 = f.leaves[j] | NEW_SECOND;
                match action {
                    MpAction::PublishOne => out.push((p, publish_one(f, vec![b1, b2]))),
                    MpAction::PublishAll => out.push((p, Frontier::lead_from_tip(f.attacker_tip()))),
                    MpAction::AdoptPublic => {
                        out.push((p / 2.0, Frontier::adopt(b1, b2)));
                        out.push((p / 2.0, Frontier::adopt(b2, b1)));
                    }
                    MpAction::MineOnNewPrivate => match (i == 0, j == 0) {
                        (true, false) => out.push((p, tie(b1, b2))),
                        (false, true) => out.push((p, tie(b2, b1))),
                        (false, false) if flags.trail => {
                            out.push((p, Frontier::trailing(f.leaves[0], vec![b1, b2])))
                        }
                        _ => {
                            out.push((p / 2.0, Frontier::adopt(b1, b2)));
                            out.push((p / 2.0, Frontier::adopt(b2, b1)));
                        }
                    },
                    MpAction::MineOnPrivate => out.push((p, Frontier::trailing(f.mp_tip, vec![b1, b2]))),
                    MpAction::Hold | MpAction::Publish => unreachable!("not an honest-event action"),
                }
            }
        }
    }
    Ok(out)
}

fn tie(aligned: u8, other: u8) -> Frontier {
    Frontier {
        delta: Delta::TiePublished,
        leaves: vec![aligned, other],
        private: Vec::new(),
        mp_tip: 0,
    }
}

/// The attacker reveals its lowest private block to match the new honest block(s).
fn publish_one(f: &Frontier, new_blocks: Vec<u8>) -> Frontier {
    let k = match f.delta {
        Delta::Lead(k) => k,
        _ => unreachable!("publish-one only from a lead"),
    };
    let mut leaves = vec![f.private[0]];
    leaves.extend(new_blocks);
    Frontier {
        delta: if k == 1 { Delta::TiePublished } else { Delta::Lead(k - 1) },
        leaves,
        private: f.private[1..].to_vec(),
        mp_tip: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_params, RawParams};

    fn params(alpha: f64, theta: f64) -> ModelParams {
        validate_params(&RawParams::new(alpha, theta).delta_max(10)).unwrap()
    }

    #[test]
    fn outcome_probabilities_sum_to_one() {
        let p = params(0.3, 0.2);
        let shapes = [
            MarkovState::lead(0, 1),
            MarkovState::lead(0, 2),
            MarkovState::lead(1, 3),
            MarkovState::lead(2, 2),
            MarkovState::lead(10, 3),
            MarkovState::new(Delta::TiePublished, 3),
            MarkovState::new(Delta::TieAllHonest, 2),
            MarkovState::new(Delta::TrailMinusOne, 2),
        ];
        for flags in [StrategyFlags::LFT, StrategyFlags::FT] {
            for s in shapes {
                for e in Event::ALL {
                    let total: f64 = successors(flags, &p, &Frontier::blank(s), e)
                        .unwrap()
                        .iter()
                        .map(|(q, _)| q)
                        .sum();
                    assert!((total - 1.0).abs() < 1e-14, "{s} {e:?} {total}");
                }
            }
        }
    }

    #[test]
    fn lead_two_resolution_depends_on_lead_flag() {
        let p = params(0.3, 0.1);
        let f = Frontier::blank(MarkovState::lead(2, 3));
        let s = successors(StrategyFlags::S, &p, &f, Event::HpBlock).unwrap();
        assert!(s.iter().all(|(_, g)| g.state() == MarkovState::lead(0, 1)));
        let l = successors(StrategyFlags::L, &p, &f, Event::HpBlock).unwrap();
        assert!(l.iter().all(|(_, g)| g.state() == MarkovState::lead(1, 2)));
        let lf = successors(StrategyFlags::L, &p, &f, Event::HpFork).unwrap();
        assert!(lf.iter().all(|(_, g)| g.state() == MarkovState::lead(1, 3)));
    }

    #[test]
    fn attacker_block_extends_lead() {
        let p = params(0.3, 0.1);
        for k in 0..5 {
            let f = Frontier::blank(MarkovState::lead(k, 2));
            let s = successors(StrategyFlags::LFT, &p, &f, Event::MpBlock).unwrap();
            assert_eq!(s.len(), 1);
            assert_eq!(s[0].1.state(), MarkovState::lead(k + 1, 2));
            assert_eq!(*s[0].1.private.last().unwrap(), NEW_FIRST);
        }
        let top = Frontier::blank(MarkovState::lead(10, 1));
        let s = successors(StrategyFlags::S, &p, &top, Event::MpBlock).unwrap();
        assert_eq!(s[0].1.state(), MarkovState::lead(10, 1));
    }

    #[test]
    fn tie_with_trail_moves_behind() {
        let p = params(0.3, 0.0);
        let mut f = Frontier::blank(MarkovState::new(Delta::TiePublished, 2));
        f.leaves[0] = TAGGED;
        let s = successors(StrategyFlags::T1, &p, &f, Event::HpBlock).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].1, Frontier::lead_from_tip(TAGGED | NEW_FIRST));
        assert_eq!(s[1].1.delta, Delta::TrailMinusOne);
        assert_eq!(s[1].1.mp_tip, TAGGED);
        assert_eq!(s[1].1.leaves, vec![NEW_FIRST]);
    }
}
