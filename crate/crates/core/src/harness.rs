//! Parameter sweeps, cross-validation between engines, CSV and plot data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{validate_params, RawParams, StrategyFlags};
use crate::sim::{simulate, Policy, SimConfig};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "SML_THREADS";

pub const DEFAULT_ALPHAS: [f64; 9] = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45];
pub const DEFAULT_THETAS: [f64; 4] = [0.01, 0.05, 0.10, 0.20];
pub const DEFAULT_DELTA_MAX: u32 = 30;
pub const DEFAULT_ROUNDS: u32 = 30;
pub const DEFAULT_BLOCKS: u64 = 1_000_000;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Engine {
    Analytic,
    Simulate,
    Both,
}

impl Engine {
    fn analytic(self) -> bool {
        matches!(self, Engine::Analytic | Engine::Both)
    }

    fn simulated(self) -> bool {
        matches!(self, Engine::Simulate | Engine::Both)
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Engine::Analytic),
            "simulate" | "sim" => Ok(Engine::Simulate),
            "both" => Ok(Engine::Both),
            _ => Err(Error::InvalidSweep(format!("unknown engine `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub strategies: Vec<Policy>,
    pub alphas: Vec<f64>,
    pub thetas: Vec<f64>,
    pub engine: Engine,
    pub delta_max: u32,
    pub rounds: u32,
    pub blocks_per_round: u64,
    pub seed: u64,
}

impl Default for SweepSpec {
    /// Eight strategies over the default grid, analytic only.
    fn default() -> Self {
        Self {
            strategies: StrategyFlags::all().map(Policy::Strategy).to_vec(),
            alphas: DEFAULT_ALPHAS.to_vec(),
            thetas: DEFAULT_THETAS.to_vec(),
            engine: Engine::Analytic,
            delta_max: DEFAULT_DELTA_MAX,
            rounds: DEFAULT_ROUNDS,
            blocks_per_round: DEFAULT_BLOCKS,
            seed: DEFAULT_SEED,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() || self.alphas.is_empty() || self.thetas.is_empty() {
            return Err(Error::InvalidSweep("strategy, alpha and theta lists must be non-empty".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 0.5)) {
            return Err(Error::AlphaOutOfRange(*a));
        }
        if let Some(t) = self.thetas.iter().find(|t| !(**t >= 0.0 && **t < 1.0)) {
            return Err(Error::ThetaOutOfRange(*t));
        }
        Ok(())
    }

    /// Grid points in output order: strategy, then alpha, then theta.
    pub fn points(&self) -> Vec<(Policy, f64, f64)> {
        let mut out = Vec::with_capacity(self.strategies.len() * self.alphas.len() * self.thetas.len());
        for &s in &self.strategies {
            for &a in &self.alphas {
                for &t in &self.thetas {
                    out.push((s, a, t));
                }
            }
        }
        out
    }
}

/// One grid point. Engine-specific fields are empty when that engine did not run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub strategy: String,
    pub alpha: f64,
    pub theta: f64,
    pub rr_m_analytic: Option<f64>,
    pub tps_analytic: Option<f64>,
    pub tail_mass: Option<f64>,
    pub rr_m_sim: Option<f64>,
    pub rr_m_sim_ci95: Option<f64>,
    pub tps_sim: Option<f64>,
    pub rounds: Option<u32>,
    pub blocks_per_round: Option<u64>,
    pub seed: Option<u64>,
    pub error: Option<String>,
}

impl SweepRow {
    fn blank(policy: Policy, alpha: f64, theta: f64) -> Self {
        Self {
            strategy: policy.to_string(),
            alpha,
            theta,
            rr_m_analytic: None,
            tps_analytic: None,
            tail_mass: None,
            rr_m_sim: None,
            rr_m_sim_ci95: None,
            tps_sim: None,
            rounds: None,
            blocks_per_round: None,
            seed: None,
            error: None,
        }
    }

    /// Relative revenue, preferring the analytic value.
    pub fn rr_m(&self) -> Option<f64> {
        self.rr_m_analytic.or(self.rr_m_sim)
    }

    /// Throughput, preferring the analytic value.
    pub fn tps(&self) -> Option<f64> {
        self.tps_analytic.or(self.tps_sim)
    }

    fn label(&self) -> String {
        format!("{} alpha={} theta={}", self.strategy, self.alpha, self.theta)
    }
}

/// Worker pool honouring [`THREADS_ENV`].
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidSweep(format!("{THREADS_ENV}={v} is not a positive integer")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder.build().map_err(|e| Error::InvalidSweep(e.to_string()))
}

fn run_point(spec: &SweepSpec, policy: Policy, alpha: f64, theta: f64) -> Result<SweepRow> {
    let params = validate_params(&RawParams::new(alpha, theta).delta_max(spec.delta_max))?;
    let mut row = SweepRow::blank(policy, alpha, theta);
    if spec.engine.analytic() {
        match policy {
            Policy::Strategy(flags) => {
                let r = metrics::report(&params, flags)?;
                row.rr_m_analytic = Some(r.revenue.rr_m);
                row.tps_analytic = Some(r.revenue.tps);
                row.tail_mass = Some(r.tail_mass);
            }
            Policy::Honest => {
                row.rr_m_analytic = Some(alpha);
                row.tps_analytic = Some(1.0);
                row.tail_mass = Some(0.0);
            }
        }
    }
    if spec.engine.simulated() {
        let config = SimConfig::new(params, policy)
            .blocks(spec.blocks_per_round)
            .rounds(spec.rounds)
            .seed(spec.seed);
        let s = simulate(&config)?;
        row.rr_m_sim = Some(s.rr_m.mean);
        row.rr_m_sim_ci95 = Some(s.rr_m.ci95);
        row.tps_sim = Some(s.tps.mean);
        row.rounds = Some(spec.rounds);
        row.blocks_per_round = Some(spec.blocks_per_round);
        row.seed = Some(spec.seed);
    }
    Ok(row)
}

/// Evaluates every grid point; a failing point yields a row carrying its error.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let pool = worker_pool()?;
    let rows = pool.install(|| {
        spec.points()
            .into_par_iter()
            .map(|(policy, a, t)| {
                run_point(spec, policy, a, t).unwrap_or_else(|e| SweepRow {
                    error: Some(e.to_string()),
                    ..SweepRow::blank(policy, a, t)
                })
            })
            .collect()
    });
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub row: String,
    pub rr_gap: f64,
    pub tps_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub tolerance: f64,
    pub rows: usize,
    pub max_rr_gap: f64,
    pub mean_rr_gap: f64,
    pub max_tps_gap: f64,
    pub mean_tps_gap: f64,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rows checked      {}", self.rows)?;
        writeln!(f, "tolerance         {}", self.tolerance)?;
        writeln!(f, "rr_m gap max/mean {:.6} / {:.6}", self.max_rr_gap, self.mean_rr_gap)?;
        writeln!(f, "tps gap max/mean  {:.6} / {:.6}", self.max_tps_gap, self.mean_tps_gap)?;
        writeln!(f, "violations        {}", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  {}  rr_gap={:.6}  tps_gap={:.6}", v.row, v.rr_gap, v.tps_gap)?;
        }
        Ok(())
    }
}

/// Compares analytic and simulated values row by row.
pub fn cross_validate(rows: &[SweepRow], tolerance: f64) -> Result<ValidationReport> {
    let mut gaps = Vec::with_capacity(rows.len());
    for row in rows {
        let pair = |a: Option<f64>, s: Option<f64>| a.zip(s).map(|(a, s)| (a - s).abs());
        match (pair(row.rr_m_analytic, row.rr_m_sim), pair(row.tps_analytic, row.tps_sim)) {
            (Some(rr), Some(tps)) => gaps.push((row, rr, tps)),
            _ => return Err(Error::MissingEngineData(row.label())),
        }
    }
    let n = gaps.len().max(1) as f64;
    Ok(ValidationReport {
        tolerance,
        rows: gaps.len(),
        max_rr_gap: gaps.iter().map(|g| g.1).fold(0.0, f64::max),
        mean_rr_gap: gaps.iter().map(|g| g.1).sum::<f64>() / n,
        max_tps_gap: gaps.iter().map(|g| g.2).fold(0.0, f64::max),
        mean_tps_gap: gaps.iter().map(|g| g.2).sum::<f64>() / n,
        violations: gaps
            .iter()
            .filter(|g| g.1 > tolerance || g.2 > tolerance)
            .map(|&(row, rr_gap, tps_gap)| Violation {
                row: row.label(),
                rr_gap,
                tps_gap,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Threshold {
    pub strategy: String,
    pub theta: f64,
    /// Smallest grid alpha with `rr_m > alpha`; `None` if the attack never pays.
    pub alpha: Option<f64>,
}

/// Smallest profitable grid alpha per `(strategy, theta)`, in first-seen order.
pub fn find_threshold(rows: &[SweepRow]) -> Vec<Threshold> {
    let mut order: Vec<(String, u64)> = Vec::new();
    let mut best: BTreeMap<(String, u64), Option<f64>> = BTreeMap::new();
    for row in rows {
        let key = (row.strategy.clone(), row.theta.to_bits());
        let slot = best.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            None
        });
        if let Some(rr) = row.rr_m() {
            if rr > row.alpha && slot.is_none_or(|a| row.alpha < a) {
                *slot = Some(row.alpha);
            }
        }
    }
    order
        .into_iter()
        .map(|key| Threshold {
            alpha: best[&key],
            strategy: key.0,
            theta: f64::from_bits(key.1),
        })
        .collect()
}

/// Strategies whose threshold rises somewhere as theta grows.
///
/// A missing threshold counts as above every grid alpha.
pub fn threshold_increases(table: &[Threshold]) -> Vec<String> {
    let mut by_strategy: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for t in table {
        by_strategy
            .entry(&t.strategy)
            .or_default()
            .push((t.theta, t.alpha.unwrap_or(f64::INFINITY)));
    }
    by_strategy
        .into_iter()
        .filter_map(|(s, mut v)| {
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            v.windows(2).any(|w| w[1].1 > w[0].1).then(|| s.to_string())
        })
        .collect()
}

pub fn emit_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(CSV_HEADER)?;
    }
    w.flush()?;
    Ok(())
}

pub const CSV_HEADER: [&str; 13] = [
    "strategy",
    "alpha",
    "theta",
    "rr_m_analytic",
    "tps_analytic",
    "tail_mass",
    "rr_m_sim",
    "rr_m_sim_ci95",
    "tps_sim",
    "rounds",
    "blocks_per_round",
    "seed",
    "error",
];

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Analytic against simulated relative revenue under LFT at theta = 0.01.
    Fig3,
    /// Relative revenue of every strategy at theta = 0.01.
    Fig4,
    /// Relative revenue under LFT, one series per theta.
    Fig5,
    /// Throughput under LFT, one series per theta.
    Fig6,
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig3" => Ok(Figure::Fig3),
            "fig4" => Ok(Figure::Fig4),
            "fig5" => Ok(Figure::Fig5),
            "fig6" => Ok(Figure::Fig6),
            _ => Err(Error::InvalidSweep(format!("unknown figure `{s}`"))),
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
        };
        f.write_str(name)
    }
}

const FIG_THETA: f64 = 0.01;

type Series<'a> = (String, Box<dyn Fn(&SweepRow) -> Option<f64> + 'a>, Box<dyn Fn(&SweepRow) -> bool + 'a>);

/// Plot-ready columns: `alpha` first, then one column per series.
pub fn emit_plot_data<W: Write>(rows: &[SweepRow], figure: Figure, out: W) -> Result<()> {
    let lft = StrategyFlags::LFT.name();
    let incomplete = || Error::IncompleteSlice(figure.to_string());
    let thetas_of = |name: &str| -> Vec<f64> {
        let set: BTreeSet<u64> = rows.iter().filter(|r| r.strategy == name).map(|r| r.theta.to_bits()).collect();
        let mut v: Vec<f64> = set.into_iter().map(f64::from_bits).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let at = |name: &'static str, theta: f64| move |r: &SweepRow| r.strategy == name && r.theta == theta;

    let series: Vec<Series> = match figure {
        Figure::Fig3 => vec![
            ("analytic".into(), Box::new(|r: &SweepRow| r.rr_m_analytic), Box::new(at(lft, FIG_THETA))),
            ("simulated".into(), Box::new(|r: &SweepRow| r.rr_m_sim), Box::new(at(lft, FIG_THETA))),
            ("ci95".into(), Box::new(|r: &SweepRow| r.rr_m_sim_ci95), Box::new(at(lft, FIG_THETA))),
        ],
        Figure::Fig4 => StrategyFlags::all()
            .into_iter()
            .map(|f| -> Series { (f.name().into(), Box::new(SweepRow::rr_m), Box::new(at(f.name(), FIG_THETA))) })
            .collect(),
        Figure::Fig5 | Figure::Fig6 => {
            let value: fn(&SweepRow) -> Option<f64> = if figure == Figure::Fig5 { SweepRow::rr_m } else { SweepRow::tps };
            thetas_of(lft)
                .into_iter()
                .map(|t| -> Series { (format!("theta={t}"), Box::new(value), Box::new(at(lft, t))) })
                .collect()
        }
    };

    let mut alphas: Vec<f64> = rows
        .iter()
        .filter(|r| series.iter().any(|s| (s.2)(r)))
        .map(|r| r.alpha)
        .collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    if series.is_empty() || alphas.is_empty() {
        return Err(incomplete());
    }

    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header = vec!["alpha".to_string()];
    header.extend(series.iter().map(|s| s.0.clone()));
    w.write_record(&header)?;
    for a in alphas {
        let mut record = vec![a.to_string()];
        for (_, value, select) in &series {
            let v = rows
                .iter()
                .find(|r| r.alpha == a && select(r))
                .and_then(value)
                .ok_or_else(incomplete)?;
            record.push(v.to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `key = value` lines; `#` starts a comment. Keys are normalised to
/// use `-` instead of `_`.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidSweep(format!("config line {}: expected key=value", i + 1)))?;
        out.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(out)
}

/// Parses a comma-separated list of numbers.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::InvalidSweep(format!("cannot parse `{}`", x.trim())))
        })
        .collect()
}
