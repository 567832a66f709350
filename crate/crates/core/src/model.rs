//! Shared domain types: strategy flags, validated parameters, the `(Δ, N)`
//! state label and the attacker's decision table.
//!
//! Both the analytic chain and the simulator call [`decide_mp_action`], so the
//! two engines cannot drift apart on what a strategy does.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on each fork-placement row sum.
pub const FORK_ROW_TOLERANCE: f64 = 1e-12;

/// Default truncation depth of the lead dimension.
pub const DEFAULT_DELTA_MAX: u32 = 30;

/// Which stubborn deviations the malicious pool applies on top of selfish mining.
///
/// `(false, false, false)` is plain selfish mining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StrategyFlags {
    /// Lead-stubborn: at lead 2, reveal only one block when honest pools find one.
    pub lead: bool,
    /// Equal-fork-stubborn: keep a block found during a published tie private.
    pub fork: bool,
    /// Trail-1-stubborn: keep mining one block behind, and race from the all-honest tie.
    pub trail: bool,
}

impl StrategyFlags {
    pub const S: Self = Self::new(false, false, false);
    pub const L: Self = Self::new(true, false, false);
    pub const F: Self = Self::new(false, true, false);
    pub const T1: Self = Self::new(false, false, true);
    pub const LF: Self = Self::new(true, true, false);
    pub const LT: Self = Self::new(true, false, true);
    pub const FT: Self = Self::new(false, true, true);
    pub const LFT: Self = Self::new(true, true, true);

    pub const fn new(lead: bool, fork: bool, trail: bool) -> Self {
        Self { lead, fork, trail }
    }

    /// All eight strategies in the conventional reporting order.
    pub const fn all() -> [Self; 8] {
        [
            Self::S,
            Self::L,
            Self::F,
            Self::T1,
            Self::LF,
            Self::LT,
            Self::FT,
            Self::LFT,
        ]
    }

    pub fn name(&self) -> &'static str {
        match (self.lead, self.fork, self.trail) {
            (false, false, false) => "S",
            (true, false, false) => "L",
            (false, true, false) => "F",
            (false, false, true) => "T1",
            (true, true, false) => "LF",
            (true, false, true) => "LT",
            (false, true, true) => "FT",
            (true, true, true) => "LFT",
        }
    }

    /// Flag as a 0/1 multiplier.
    pub(crate) fn ind(flag: bool) -> f64 {
        if flag {
            1.0
        } else {
            0.0
        }
    }
}

impl fmt::Display for StrategyFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyFlags {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let found = match upper.as_str() {
            "T" => Some(Self::T1),
            other => Self::all().into_iter().find(|f| f.name() == other),
        };
        found.ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

/// Unvalidated inputs for [`validate_params`].
#[derive(Debug, Clone, PartialEq)]
pub struct RawParams {
    pub alpha: f64,
    pub theta: f64,
    /// `gamma(N)` for N = 1, 2, 3; defaults to `1/N`.
    pub gamma: Option<[f64; 3]>,
    /// Fork placement rows `(g_A, g_AH, g_H)` for N = 1, 2, 3; defaults derive from gamma.
    pub fork_table: Option<[[f64; 3]; 3]>,
    pub delta_max: u32,
}

impl RawParams {
    pub fn new(alpha: f64, theta: f64) -> Self {
        Self {
            alpha,
            theta,
            gamma: None,
            fork_table: None,
            delta_max: DEFAULT_DELTA_MAX,
        }
    }

    pub fn delta_max(mut self, delta_max: u32) -> Self {
        self.delta_max = delta_max;
        self
    }

    pub fn gamma(mut self, gamma: [f64; 3]) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn fork_table(mut self, table: [[f64; 3]; 3]) -> Self {
        self.fork_table = Some(table);
        self
    }
}

/// Validated model parameters with every derived rate.
///
/// Event rates are normalised so that `alpha + p_beta1 + beta2 = 1`: honest
/// pools produce an event at rate `beta`, which is a two-block fork with
/// probability `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub p_beta1: f64,
    pub beta2: f64,
    gamma: [f64; 3],
    g_a: [f64; 3],
    g_ah: [f64; 3],
    g_h: [f64; 3],
    pub delta_max: u32,
}

impl ModelParams {
    /// Probability that a single honest block extends the attacker-aligned leaf.
    pub fn gamma(&self, n: usize) -> f64 {
        self.gamma[n - 1]
    }

    /// Both fork blocks on the attacker-aligned leaf.
    pub fn g_a(&self, n: usize) -> f64 {
        self.g_a[n - 1]
    }

    /// One fork block on the aligned leaf, one on an honest leaf.
    pub fn g_ah(&self, n: usize) -> f64 {
        self.g_ah[n - 1]
    }

    /// Both fork blocks on honest leaves.
    pub fn g_h(&self, n: usize) -> f64 {
        self.g_h[n - 1]
    }

    /// Same parameters with a different truncation depth.
    pub fn with_delta_max(&self, delta_max: u32) -> Result<Self> {
        if delta_max < 3 {
            return Err(Error::DeltaMaxTooSmall(delta_max));
        }
        Ok(Self {
            delta_max,
            ..self.clone()
        })
    }
}

pub fn validate_params(raw: &RawParams) -> Result<ModelParams> {
    if !raw.alpha.is_finite() {
        return Err(Error::NonFinite("alpha"));
    }
    if !raw.theta.is_finite() {
        return Err(Error::NonFinite("theta"));
    }
    if !(raw.alpha > 0.0 && raw.alpha < 0.5) {
        return Err(Error::AlphaOutOfRange(raw.alpha));
    }
    if !(raw.theta >= 0.0 && raw.theta < 1.0) {
        return Err(Error::ThetaOutOfRange(raw.theta));
    }
    if raw.delta_max < 3 {
        return Err(Error::DeltaMaxTooSmall(raw.delta_max));
    }
    let gamma = raw.gamma.unwrap_or([1.0, 0.5, 1.0 / 3.0]);
    for (i, &value) in gamma.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite("gamma"));
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::GammaOutOfRange { n: i + 1, value });
        }
    }
    let table = raw.fork_table.unwrap_or_else(|| {
        gamma.map(|g| [g * g, 2.0 * g * (1.0 - g), (1.0 - g) * (1.0 - g)])
    });
    for (i, row) in table.iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("fork_table"));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > FORK_ROW_TOLERANCE || row.iter().any(|&v| v < 0.0) {
            return Err(Error::InconsistentForkTable { n: i + 1, sum });
        }
    }

    let alpha = raw.alpha;
    let beta = 1.0 - alpha;
    Ok(ModelParams {
        alpha,
        beta,
        theta: raw.theta,
        p_beta1: beta * (1.0 - raw.theta),
        beta2: beta * raw.theta,
        gamma,
        g_a: table.map(|r| r[0]),
        g_ah: table.map(|r| r[1]),
        g_h: table.map(|r| r[2]),
        delta_max: raw.delta_max,
    })
}

/// The length-difference component of a chain state.
///
/// Variant order is the enumeration order of the state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Delta {
    /// Private branch one block behind the public one (trail strategies only).
    TrailMinusOne,
    /// Equal lengths after a trailing catch-up; every honest pool stays on the public side.
    TieAllHonest,
    /// Equal lengths with the attacker's contested block published; honest pools split.
    TiePublished,
    /// Private branch `k` blocks ahead (`k = 0`: no attacker block at stake).
    Lead(u32),
}

impl fmt::Display for Delta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Delta::TrailMinusOne => f.write_str("-1"),
            Delta::TieAllHonest => f.write_str("0''"),
            Delta::TiePublished => f.write_str("0'"),
            Delta::Lead(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MarkovState {
    pub delta: Delta,
    /// Number of public leaves honest pools may extend, in `1..=3`.
    pub n_leaves: u8,
}

impl MarkovState {
    pub const INITIAL: Self = Self {
        delta: Delta::Lead(0),
        n_leaves: 1,
    };

    pub const fn new(delta: Delta, n_leaves: u8) -> Self {
        Self { delta, n_leaves }
    }

    pub fn lead(k: u32, n: u8) -> Self {
        Self::new(Delta::Lead(k), n)
    }

    /// Structural validity, independent of strategy.
    pub fn is_well_formed(&self) -> bool {
        match self.delta {
            Delta::TiePublished => (2..=3).contains(&self.n_leaves),
            _ => (1..=3).contains(&self.n_leaves),
        }
    }
}

impl fmt::Display for MarkovState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.delta, self.n_leaves)
    }
}

impl FromStr for MarkovState {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| format!("malformed state `{s}`"))?;
        let (d, n) = inner
            .rsplit_once(',')
            .ok_or_else(|| format!("malformed state `{s}`"))?;
        let delta = match d {
            "-1" => Delta::TrailMinusOne,
            "0''" => Delta::TieAllHonest,
            "0'" => Delta::TiePublished,
            k => Delta::Lead(k.parse().map_err(|_| format!("bad delta `{k}`"))?),
        };
        let n_leaves = n.parse().map_err(|_| format!("bad leaf count `{n}`"))?;
        Ok(Self { delta, n_leaves })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Event {
    MpBlock,
    HpBlock,
    HpFork,
}

impl Event {
    pub const ALL: [Event; 3] = [Event::MpBlock, Event::HpBlock, Event::HpFork];

    pub fn label(&self) -> &'static str {
        match self {
            Event::MpBlock => "mp_block",
            Event::HpBlock => "hp_block",
            Event::HpFork => "hp_fork",
        }
    }
}

/// What the malicious pool does in response to an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MpAction {
    /// Keep the new block private.
    Hold,
    /// Reveal the lowest private block.
    PublishOne,
    /// Reveal the whole private branch.
    PublishAll,
    /// Reveal the block just found.
    Publish,
    /// Keep mining on the private branch although it trails.
    MineOnPrivate,
    /// Switch to one of the new public blocks.
    AdoptPublic,
    /// Move onto a new block that extends the private branch if there is one;
    /// otherwise trail (with T) or adopt a new public block.
    MineOnNewPrivate,
}

/// The attacker decision table.
///
/// Selfish mining is the default column; `lead`, `fork` and `trail` each
/// override disjoint cells.
pub fn decide_mp_action(flags: StrategyFlags, state: MarkovState, event: Event) -> Result<MpAction> {
    let unreachable = || Error::UnreachableState {
        strategy: flags.name().to_string(),
        state,
        event,
    };
    if !state.is_well_formed() {
        return Err(unreachable());
    }
    let action = match (state.delta, event) {
        (Delta::Lead(_), Event::MpBlock) => MpAction::Hold,
        (Delta::TiePublished, Event::MpBlock) if flags.fork => MpAction::Hold,
        (Delta::TiePublished, Event::MpBlock) => MpAction::Publish,
        (Delta::TieAllHonest | Delta::TrailMinusOne, _) if !flags.trail => return Err(unreachable()),
        (Delta::TieAllHonest, Event::MpBlock) => MpAction::Publish,
        (Delta::TrailMinusOne, Event::MpBlock) => MpAction::Publish,
        (Delta::Lead(0), _) => MpAction::AdoptPublic,
        (Delta::Lead(2), _) if flags.lead => MpAction::PublishOne,
        (Delta::Lead(2), _) => MpAction::PublishAll,
        (Delta::Lead(_), _) => MpAction::PublishOne,
        (Delta::TiePublished, _) => MpAction::MineOnNewPrivate,
        (Delta::TieAllHonest, _) => MpAction::MineOnPrivate,
        (Delta::TrailMinusOne, _) => MpAction::AdoptPublic,
    };
    Ok(action)
}
