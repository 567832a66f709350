use thiserror::Error;

use crate::model::{Event, MarkovState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("alpha {0} outside (0, 0.5)")]
    AlphaOutOfRange(f64),
    #[error("theta {0} outside [0, 1)")]
    ThetaOutOfRange(f64),
    #[error("gamma({n}) = {value} outside [0, 1]")]
    GammaOutOfRange { n: usize, value: f64 },
    #[error("fork placement row for N={n} sums to {sum}, expected 1")]
    InconsistentForkTable { n: usize, sum: f64 },
    #[error("delta_max {0} below the minimum of 3")]
    DeltaMaxTooSmall(u32),
    #[error("non-finite parameter `{0}`")]
    NonFinite(&'static str),
    #[error("state {state} cannot see event {event:?} under strategy {strategy}")]
    UnreachableState {
        strategy: String,
        state: MarkovState,
        event: Event,
    },
    #[error("transition target {0} is not in the state space")]
    InconsistentSpace(MarkovState),
    #[error("balance system is singular")]
    SingularSystem,
    #[error("tie race system is singular")]
    SingularTieSystem,
    #[error("fate chain did not converge after {0} sweeps")]
    FateNotConverged(usize),
    #[error("simulation exceeded {0} events without reaching its block target")]
    NonTermination(u64),
    #[error("unmappable block tree: {0}")]
    UnmappableTree(String),
    #[error("simulated transition {from} -> {to} is absent from the generator")]
    UnseenTransition { from: MarkovState, to: MarkovState },
    #[error("row for {0} lacks analytic or simulated data")]
    MissingEngineData(String),
    #[error("figure {0} slice is not covered by the rows")]
    IncompleteSlice(String),
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(String),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("io: {0}")]
    Io(String),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
