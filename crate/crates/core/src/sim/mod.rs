//! Discrete-event Monte Carlo simulation over an explicit block tree.
//!
//! Honest pools mine on the longest published branch; the attacker follows
//! [`decide_mp_action`] on the `(Δ, N)` state it observes. A block becomes a
//! consensus block once every live tip (honest leaves plus the attacker's
//! tip) descends from it, and stale once none does.

mod tree;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

pub use tree::{BlockNode, BlockTree, Owner, Probe, Tally};

use crate::error::{Error, Result};
use crate::model::{decide_mp_action, Delta, Event, MarkovState, ModelParams, MpAction, StrategyFlags};

/// Events allowed per target consensus block before a round is declared stuck.
pub const EVENT_BUDGET_FACTOR: u64 = 50;

/// How the attacking pool behaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Policy {
    Strategy(StrategyFlags),
    /// The pool publishes every block at once and mines like an honest pool.
    Honest,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Strategy(flags) => flags.fmt(f),
            Policy::Honest => f.write_str("honest"),
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("honest") {
            Ok(Policy::Honest)
        } else {
            s.parse().map(Policy::Strategy)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub params: ModelParams,
    pub policy: Policy,
    /// Consensus blocks to reach before a round stops.
    pub blocks_per_round: u64,
    pub rounds: u32,
    pub base_seed: u64,
}

impl SimConfig {
    pub fn new(params: ModelParams, policy: Policy) -> Self {
        Self {
            params,
            policy,
            blocks_per_round: 1_000_000,
            rounds: 30,
            base_seed: 42,
        }
    }

    pub fn blocks(mut self, blocks_per_round: u64) -> Self {
        self.blocks_per_round = blocks_per_round;
        self
    }

    pub fn rounds(mut self, rounds: u32) -> Self {
        self.rounds = rounds;
        self
    }

    pub fn seed(mut self, base_seed: u64) -> Self {
        self.base_seed = base_seed;
        self
    }

    fn check(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidSimConfig("rounds must be at least 1".into()));
        }
        if self.blocks_per_round == 0 {
            return Err(Error::InvalidSimConfig("blocks_per_round must be at least 1".into()));
        }
        Ok(())
    }

    /// Independent generator for one round.
    pub fn rng(&self, round_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream(round_index);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundStats {
    pub consensus_total: u64,
    pub consensus_mp: u64,
    pub stale_total: u64,
    /// Unsettled blocks dropped at the end of the round.
    pub discarded: u64,
    pub created: u64,
    pub events: u64,
    pub sim_time: f64,
    pub rr_m_hat: f64,
    pub tps_hat: f64,
    /// Time spent in each observed state.
    pub state_time: BTreeMap<MarkovState, f64>,
    /// `[won, lost]` per [`Probe`].
    pub probes: [[u64; 2]; 2],
}

/// One step of a round as seen through the state abstraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub event: Event,
    pub before: MarkovState,
    pub after: MarkovState,
    pub dt: f64,
}

/// Live simulation of one round.
#[derive(Debug, Clone)]
pub struct Round {
    params: ModelParams,
    policy: Policy,
    rng: ChaCha8Rng,
    tree: BlockTree,
    /// Block the attacker mines on.
    tip: usize,
    /// The attacker's branch is published and contested by an honest branch.
    contesting: bool,
    /// The attacker's published tip arrived after honest pools chose their branch.
    tip_ignored: bool,
    leaves: Vec<usize>,
    live: Vec<usize>,
    tally: Tally,
    events: u64,
    sim_time: f64,
    state_time: Vec<f64>,
}

fn state_slot(s: MarkovState) -> usize {
    let d = match s.delta {
        Delta::TrailMinusOne => 0,
        Delta::TieAllHonest => 1,
        Delta::TiePublished => 2,
        Delta::Lead(k) => 3 + k as usize,
    };
    d * 3 + s.n_leaves as usize - 1
}

fn slot_state(i: usize) -> MarkovState {
    let n = (i % 3 + 1) as u8;
    let delta = match i / 3 {
        0 => Delta::TrailMinusOne,
        1 => Delta::TieAllHonest,
        2 => Delta::TiePublished,
        d => Delta::Lead((d - 3) as u32),
    };
    MarkovState::new(delta, n)
}

impl Round {
    pub fn new(config: &SimConfig, round_index: u64) -> Self {
        let mut round = Self {
            params: config.params.clone(),
            policy: config.policy,
            rng: config.rng(round_index),
            tree: BlockTree::new(),
            tip: 0,
            contesting: false,
            tip_ignored: false,
            leaves: vec![0],
            live: Vec::new(),
            tally: Tally::default(),
            events: 0,
            sim_time: 0.0,
            state_time: Vec::new(),
        };
        round.refresh_leaves();
        round
    }

    pub fn tree(&self) -> &BlockTree {
        &self.tree
    }

    pub fn tally(&self) -> &Tally {
        &self.tally
    }

    fn refresh_leaves(&mut self) {
        let hidden = self.tip_ignored.then_some(self.tip);
        self.tree.longest_published(hidden, &mut self.leaves);
    }

    /// The leaf honest pools share with the attacker's branch, if any.
    fn aligned(&self) -> Option<usize> {
        if self.tip_ignored || matches!(self.policy, Policy::Honest) {
            return None;
        }
        let h = self.tree.node(self.leaves[0]).height;
        let a = self.tree.ancestor_at(self.tip, h)?;
        self.leaves.iter().position(|&l| l == a)
    }

    /// Maps the tree and the attacker's memory to a chain state.
    pub fn observe(&self) -> Result<MarkovState> {
        let n = self.leaves.len();
        if !(1..=3).contains(&n) {
            return Err(Error::UnmappableTree(format!("{n} longest public leaves")));
        }
        if matches!(self.policy, Policy::Honest) {
            return Ok(MarkovState::new(Delta::Lead(0), n as u8));
        }
        let h = self.tree.node(self.leaves[0]).height as i64;
        let d = self.tree.node(self.tip).height as i64 - h;
        let delta = match d {
            1.. => Delta::Lead(d as u32),
            0 if self.tip_ignored => Delta::TieAllHonest,
            0 if self.contesting => Delta::TiePublished,
            0 => Delta::Lead(0),
            -1 => Delta::TrailMinusOne,
            _ => return Err(Error::UnmappableTree(format!("attacker {d} blocks behind"))),
        };
        Ok(MarkovState::new(delta, n as u8))
    }

    fn draw_event(&mut self) -> Event {
        let u: f64 = self.rng.random();
        if u < self.params.alpha {
            Event::MpBlock
        } else if u < self.params.alpha + self.params.p_beta1 {
            Event::HpBlock
        } else {
            Event::HpFork
        }
    }

    fn uniform(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Leaf index for one honest block.
    fn place_single(&mut self, aligned: Option<usize>) -> usize {
        let n = self.leaves.len();
        match aligned {
            Some(a) if n > 1 => {
                if self.rng.random::<f64>() < self.params.gamma(n) {
                    a
                } else {
                    self.other_than(a)
                }
            }
            Some(a) => a,
            None => self.uniform(n),
        }
    }

    fn other_than(&mut self, a: usize) -> usize {
        let i = self.uniform(self.leaves.len() - 1);
        if i >= a {
            i + 1
        } else {
            i
        }
    }

    /// Leaf indices for the two blocks of an honest fork.
    fn place_fork(&mut self, aligned: Option<usize>) -> (usize, usize) {
        let n = self.leaves.len();
        match aligned {
            Some(a) if n > 1 => {
                let u: f64 = self.rng.random();
                if u < self.params.g_a(n) {
                    (a, a)
                } else if u < self.params.g_a(n) + self.params.g_ah(n) {
                    (a, self.other_than(a))
                } else {
                    (self.other_than(a), self.other_than(a))
                }
            }
            Some(a) => (a, a),
            None => (self.uniform(n), self.uniform(n)),
        }
    }

    fn adopt_any(&mut self) {
        let i = self.uniform(self.leaves.len());
        self.tip = self.leaves[i];
        self.contesting = false;
        self.tip_ignored = false;
    }

    /// Lowest unpublished block on the attacker's branch.
    fn lowest_private(&self) -> Option<usize> {
        let mut i = self.tip;
        let mut lowest = None;
        while !self.tree.node(i).published {
            lowest = Some(i);
            i = self.tree.node(i).parent.expect("private blocks sit above the root") as usize;
        }
        lowest
    }

    fn publish_through(&mut self, top: usize) {
        let mut i = top;
        while !self.tree.node(i).published {
            self.tree.publish(i);
            i = self.tree.node(i).parent.expect("private blocks sit above the root") as usize;
        }
    }

    fn honest_step(&mut self, event: Event) {
        let n = self.leaves.len();
        match event {
            Event::MpBlock => {
                let i = self.uniform(n);
                let p = self.leaves[i];
                self.tip = self.tree.push(p, Owner::Mp, true);
            }
            Event::HpBlock => {
                let i = self.uniform(n);
                let p = self.leaves[i];
                self.tree.push(p, Owner::Hp, true);
            }
            Event::HpFork => {
                let (i, j) = (self.uniform(n), self.uniform(n));
                let (p, q) = (self.leaves[i], self.leaves[j]);
                self.tree.push(p, Owner::Hp, true);
                self.tree.push(q, Owner::Hp, true);
            }
        }
        self.refresh_leaves();
        self.tip = self.leaves[0];
    }

    fn attacker_block(&mut self, flags: StrategyFlags, before: MarkovState) -> Result<()> {
        let action = decide_mp_action(flags, before, Event::MpBlock)?;
        let published = action == MpAction::Publish;
        let b = self.tree.push(self.tip, Owner::Mp, published);
        self.tip = b;
        match (before.delta, action) {
            (Delta::TrailMinusOne, MpAction::Publish) => {
                self.tip_ignored = true;
                self.contesting = false;
            }
            (_, MpAction::Publish) => {
                self.tip_ignored = false;
                self.contesting = false;
            }
            (Delta::TiePublished, MpAction::Hold) if before.n_leaves == 2 => {
                self.tree.set_probe(b, Probe::WithheldAtTie);
            }
            _ => {}
        }
        self.refresh_leaves();
        Ok(())
    }

    fn honest_blocks(&mut self, flags: StrategyFlags, before: MarkovState, event: Event) -> Result<()> {
        let action = decide_mp_action(flags, before, event)?;
        let aligned = self.aligned();
        let (first, second) = match event {
            Event::HpBlock => (self.place_single(aligned), None),
            _ => {
                let (i, j) = self.place_fork(aligned);
                (i, Some(j))
            }
        };
        let on_aligned = |i: usize| Some(i) == aligned;
        let b1 = self.tree.push(self.leaves[first], Owner::Hp, true);
        let b2 = second.map(|j| self.tree.push(self.leaves[j], Owner::Hp, true));
        let hits = usize::from(on_aligned(first)) + usize::from(second.is_some_and(on_aligned));
        let hit = if on_aligned(first) { b1 } else { b2.unwrap_or(b1) };

        match action {
            MpAction::PublishOne => {
                let p = self.lowest_private().ok_or_else(|| Error::UnmappableTree("no private block".into()))?;
                self.tree.publish(p);
                self.contesting = true;
                self.tip_ignored = false;
                self.refresh_leaves();
                if before.delta == Delta::Lead(1) && self.leaves.len() == 2 {
                    self.tree.set_probe(p, Probe::TieEntry);
                }
            }
            MpAction::PublishAll => {
                self.publish_through(self.tip);
                self.contesting = false;
                self.refresh_leaves();
            }
            MpAction::AdoptPublic => {
                self.refresh_leaves();
                self.adopt_any();
            }
            MpAction::MineOnPrivate => self.refresh_leaves(),
            MpAction::MineOnNewPrivate => {
                self.refresh_leaves();
                match (hits, b2.is_some()) {
                    (1, false) => {
                        self.tip = hit;
                        self.contesting = false;
                    }
                    (1, true) => self.tip = hit,
                    (0, _) if flags.trail => self.contesting = false,
                    _ => self.adopt_any(),
                }
            }
            MpAction::Hold | MpAction::Publish => unreachable!("attacker-only actions"),
        }
        Ok(())
    }

    /// Advances the round by one event.
    pub fn step(&mut self) -> Result<Step> {
        let before = self.observe()?;
        let dt: f64 = self.rng.sample(Exp1);
        self.sim_time += dt;
        let slot = state_slot(before);
        if self.state_time.len() <= slot {
            self.state_time.resize(slot + 1, 0.0);
        }
        self.state_time[slot] += dt;

        let event = self.draw_event();
        match self.policy {
            Policy::Honest => self.honest_step(event),
            Policy::Strategy(flags) => match event {
                Event::MpBlock => self.attacker_block(flags, before)?,
                _ => self.honest_blocks(flags, before, event)?,
            },
        }
        self.events += 1;

        self.live.clear();
        self.live.extend_from_slice(&self.leaves);
        self.live.push(self.tip);
        self.tree.settle(&mut self.live, &mut self.tally);
        let n = self.leaves.len();
        self.leaves.copy_from_slice(&self.live[..n]);
        self.tip = self.live[n];

        let after = self.observe()?;
        Ok(Step {
            event,
            before,
            after,
            dt,
        })
    }

    /// Closes the round, discarding unsettled blocks.
    pub fn finish(self) -> RoundStats {
        let t = self.tally;
        let created = self.tree.created();
        let discarded = self.tree.len() as u64 - 1;
        debug_assert_eq!(created, t.consensus_total + t.stale_total + discarded);
        let state_time = self
            .state_time
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, &w)| (slot_state(i), w))
            .collect();
        RoundStats {
            consensus_total: t.consensus_total,
            consensus_mp: t.consensus_mp,
            stale_total: t.stale_total,
            discarded,
            created,
            events: self.events,
            sim_time: self.sim_time,
            rr_m_hat: t.consensus_mp as f64 / t.consensus_total as f64,
            tps_hat: t.consensus_total as f64 / self.sim_time,
            state_time,
            probes: t.probes,
        }
    }
}

/// Simulates one round until `blocks_per_round` consensus blocks exist.
pub fn run_round(config: &SimConfig, round_index: u64) -> Result<RoundStats> {
    config.check()?;
    let budget = EVENT_BUDGET_FACTOR * config.blocks_per_round;
    let mut round = Round::new(config, round_index);
    while round.tally.consensus_total < config.blocks_per_round {
        if round.events >= budget {
            return Err(Error::NonTermination(round.events));
        }
        round.step()?;
    }
    Ok(round.finish())
}

/// Result of an audited run.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub events: u64,
    /// Steps skipped because a lead exceeded the truncation depth.
    pub beyond_truncation: u64,
    pub distinct_transitions: usize,
}

/// Runs `events` steps and checks every observed transition against `edges`.
///
/// Steps touching a lead deeper than `delta_max` are not checked. When
/// `trace` is given, each step is written as
/// `event_index  kind  state_before  state_after`.
pub fn run_audited(
    config: &SimConfig,
    round_index: u64,
    events: u64,
    edges: &HashSet<(MarkovState, MarkovState)>,
    delta_max: u32,
    mut trace: Option<&mut dyn Write>,
) -> Result<AuditReport> {
    let mut round = Round::new(config, round_index);
    let mut seen = HashSet::new();
    let mut beyond = 0;
    let deep = |s: MarkovState| matches!(s.delta, Delta::Lead(k) if k > delta_max);
    for i in 0..events {
        let step = round.step()?;
        debug_assert!(round.tree.is_well_formed());
        if let Some(out) = trace.as_mut() {
            writeln!(out, "{i}  {}  {}  {}", step.event.label(), step.before, step.after)?;
        }
        if deep(step.before) || deep(step.after) {
            beyond += 1;
            continue;
        }
        let edge = (step.before, step.after);
        if !edges.contains(&edge) {
            return Err(Error::UnseenTransition {
                from: step.before,
                to: step.after,
            });
        }
        seen.insert(edge);
    }
    Ok(AuditReport {
        events,
        beyond_truncation: beyond,
        distinct_transitions: seen.len(),
    })
}

/// Mean, sample standard deviation and 95% half-width over rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub sd: f64,
    pub ci95: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            sd,
            ci95: 1.96 * sd / n.sqrt(),
        }
    }

    pub fn covers(&self, x: f64) -> bool {
        (x - self.mean).abs() <= self.ci95
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub rounds: usize,
    pub rr_m: Estimate,
    pub tps: Estimate,
    /// Pooled fraction of time spent in each state.
    pub state_freq: BTreeMap<MarkovState, f64>,
    /// Pooled `[won, lost]` per [`Probe`].
    pub probes: [[u64; 2]; 2],
    pub consensus_total: u64,
    pub stale_total: u64,
}

impl SimReport {
    /// Fraction of probed blocks of `kind` that became consensus blocks.
    pub fn probe_win_rate(&self, kind: Probe) -> Option<f64> {
        let [won, lost] = self.probes[kind.slot()];
        (won + lost > 0).then(|| won as f64 / (won + lost) as f64)
    }
}

pub fn aggregate_rounds(stats: &[RoundStats]) -> Result<SimReport> {
    if stats.is_empty() {
        return Err(Error::InvalidSimConfig("no rounds to aggregate".into()));
    }
    let rr: Vec<f64> = stats.iter().map(|s| s.rr_m_hat).collect();
    let tps: Vec<f64> = stats.iter().map(|s| s.tps_hat).collect();
    let mut state_freq = BTreeMap::new();
    let mut probes = [[0u64; 2]; 2];
    let total_time: f64 = stats.iter().map(|s| s.sim_time).sum();
    for s in stats {
        for (&state, &t) in &s.state_time {
            *state_freq.entry(state).or_insert(0.0) += t / total_time;
        }
        for (acc, p) in probes.iter_mut().zip(&s.probes) {
            acc[0] += p[0];
            acc[1] += p[1];
        }
    }
    Ok(SimReport {
        rounds: stats.len(),
        rr_m: Estimate::from_samples(&rr),
        tps: Estimate::from_samples(&tps),
        state_freq,
        probes,
        consensus_total: stats.iter().map(|s| s.consensus_total).sum(),
        stale_total: stats.iter().map(|s| s.stale_total).sum(),
    })
}

/// Runs every round (in parallel on the current rayon pool) and aggregates.
pub fn simulate(config: &SimConfig) -> Result<SimReport> {
    config.check()?;
    let stats = (0..u64::from(config.rounds))
        .into_par_iter()
        .map(|r| run_round(config, r))
        .collect::<Result<Vec<_>>>()?;
    aggregate_rounds(&stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_generator, enumerate_states};
    use crate::model::{validate_params, RawParams};

    fn config(flags: StrategyFlags, alpha: f64, theta: f64) -> SimConfig {
        let p = validate_params(&RawParams::new(alpha, theta)).unwrap();
        SimConfig::new(p, Policy::Strategy(flags)).blocks(20_000).rounds(2)
    }

    #[test]
    fn fresh_round_starts_at_the_initial_state() {
        let r = Round::new(&config(StrategyFlags::LFT, 0.3, 0.1), 0);
        assert_eq!(r.observe().unwrap(), MarkovState::INITIAL);
    }

    #[test]
    fn private_blocks_raise_the_lead() {
        let mut r = Round::new(&config(StrategyFlags::S, 0.3, 0.1), 0);
        let a = r.tree.push(0, Owner::Mp, false);
        r.tip = r.tree.push(a, Owner::Mp, false);
        r.refresh_leaves();
        assert_eq!(r.observe().unwrap(), MarkovState::lead(2, 1));
    }

    #[test]
    fn catching_up_from_behind_is_an_all_honest_tie() {
        let mut r = Round::new(&config(StrategyFlags::T1, 0.3, 0.1), 0);
        let h = r.tree.push(0, Owner::Hp, true);
        r.refresh_leaves();
        assert_eq!(r.observe().unwrap(), MarkovState::new(Delta::TrailMinusOne, 1));
        let _ = h;
        r.attacker_block(StrategyFlags::T1, MarkovState::new(Delta::TrailMinusOne, 1))
            .unwrap();
        assert_eq!(r.observe().unwrap(), MarkovState::new(Delta::TieAllHonest, 1));
        assert!(r.tree.node(r.tip).published);
    }

    #[test]
    fn conservation_and_determinism() {
        let c = config(StrategyFlags::LFT, 0.35, 0.2);
        let a = run_round(&c, 3).unwrap();
        let b = run_round(&c, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.created, a.consensus_total + a.stale_total + a.discarded);
        assert!(a.consensus_mp <= a.consensus_total);
        assert_ne!(run_round(&c, 4).unwrap(), a);
    }

    #[test]
    fn identical_rounds_have_zero_spread() {
        let stats = vec![run_round(&config(StrategyFlags::F, 0.2, 0.05), 0).unwrap(); 5];
        let r = aggregate_rounds(&stats).unwrap();
        assert_eq!(r.rr_m.sd, 0.0);
        assert!((r.state_freq.values().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn audited_run_stays_on_generator_edges() {
        for flags in StrategyFlags::all() {
            let c = config(flags, 0.3, 0.2);
            let space = enumerate_states(flags, 30).unwrap();
            let q = build_generator(&c.params, flags, &space).unwrap();
            let report = run_audited(&c, 0, 20_000, &q.edge_set(), 30, None).unwrap();
            assert!(report.distinct_transitions > 5, "{flags}");
        }
    }

    #[test]
    fn trace_lines_have_four_fields() {
        let c = config(StrategyFlags::LF, 0.3, 0.2);
        let space = enumerate_states(StrategyFlags::LF, 30).unwrap();
        let q = build_generator(&c.params, StrategyFlags::LF, &space).unwrap();
        let mut buf = Vec::new();
        run_audited(&c, 0, 50, &q.edge_set(), 30, Some(&mut buf)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 50);
        for line in text.lines() {
            let fields: Vec<&str> = line.split("  ").collect();
            assert_eq!(fields.len(), 4, "{line}");
            fields[2].parse::<MarkovState>().unwrap();
            fields[3].parse::<MarkovState>().unwrap();
        }
    }

    #[test]
    fn zero_rounds_rejected() {
        let c = config(StrategyFlags::S, 0.3, 0.1).rounds(0);
        assert!(matches!(simulate(&c), Err(Error::InvalidSimConfig(_))));
    }

    #[test]
    fn policy_names_parse() {
        assert_eq!("honest".parse::<Policy>().unwrap(), Policy::Honest);
        assert_eq!("LFT".parse::<Policy>().unwrap(), Policy::Strategy(StrategyFlags::LFT));
        assert!("X".parse::<Policy>().is_err());
    }
}
