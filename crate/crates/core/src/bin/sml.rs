use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stubborn_mining::chain::{build_generator, enumerate_states};
use stubborn_mining::harness::{
    self, cross_validate, emit_csv, emit_plot_data, find_threshold, parse_config, parse_csv, parse_list, run_sweep,
    threshold_increases, Engine, Figure, SweepSpec,
};
use stubborn_mining::sim::{run_audited, simulate, Policy, Probe, SimConfig};
use stubborn_mining::{closed_form, metrics, validate_params, Error, RawParams};

/// Stubborn mining analytics and simulation.
#[derive(Parser)]
#[command(name = "sml", version)]
struct Cli {
    /// key=value file supplying defaults for any flag below
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic metrics for one point (or a list of points)
    Analytic(Opts),
    /// Monte Carlo estimate for one point (or a list of points)
    Simulate(Opts),
    /// Sweep a grid and write CSV or plot data
    Sweep(Opts),
    /// Cross-validate the engines; exit 2 on any gap above the tolerance
    Validate(Opts),
    /// Smallest profitable alpha per strategy and theta; exit 2 if it rises with theta
    Threshold(Opts),
}

#[derive(Args, Default)]
struct Opts {
    /// S, L, F, T1, LF, LT, FT, LFT or honest (comma-separated)
    #[arg(long)]
    strategy: Option<String>,
    /// attacker power (comma-separated)
    #[arg(long)]
    alpha: Option<String>,
    /// fork probability (comma-separated)
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    delta_max: Option<String>,
    #[arg(long)]
    rounds: Option<String>,
    #[arg(long)]
    blocks: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tolerance: Option<String>,
    /// fig3, fig4, fig5 or fig6
    #[arg(long)]
    figure: Option<String>,
    /// analytic, simulate or both (sweep only)
    #[arg(long)]
    engine: Option<String>,
    /// read rows from a CSV instead of computing them (validate, threshold)
    #[arg(long)]
    rows: Option<PathBuf>,
    /// write the generator edge list (analytic)
    #[arg(long)]
    dump_generator: Option<PathBuf>,
    /// run an audited simulation and write its state trace (simulate)
    #[arg(long)]
    trace: Option<PathBuf>,
    /// events in the audited run
    #[arg(long)]
    events: Option<String>,
}

enum Failure {
    Usage(String),
    Violation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::UnseenTransition { .. } => Failure::Violation(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

/// Flag values with the config file underneath.
struct Settings {
    cli: BTreeMap<&'static str, String>,
    file: BTreeMap<String, String>,
    out: Option<PathBuf>,
    rows: Option<PathBuf>,
    dump_generator: Option<PathBuf>,
    trace: Option<PathBuf>,
}

impl Settings {
    fn new(opts: Opts, config: Option<PathBuf>) -> Result<Self, Failure> {
        let file = match config {
            Some(path) => parse_config(&std::fs::read_to_string(&path)?)?,
            None => BTreeMap::new(),
        };
        let mut cli = BTreeMap::new();
        for (k, v) in [
            ("strategy", opts.strategy),
            ("alpha", opts.alpha),
            ("theta", opts.theta),
            ("delta-max", opts.delta_max),
            ("rounds", opts.rounds),
            ("blocks", opts.blocks),
            ("seed", opts.seed),
            ("tolerance", opts.tolerance),
            ("figure", opts.figure),
            ("engine", opts.engine),
            ("events", opts.events),
        ] {
            if let Some(v) = v {
                cli.insert(k, v);
            }
        }
        let path = |flag: Option<PathBuf>, key: &str| flag.or_else(|| file.get(key).map(PathBuf::from));
        Ok(Self {
            out: path(opts.out, "out"),
            rows: path(opts.rows, "rows"),
            dump_generator: path(opts.dump_generator, "dump-generator"),
            trace: path(opts.trace, "trace"),
            cli,
            file,
        })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.cli.get(key).or_else(|| self.file.get(key)).map(String::as_str)
    }

    fn one<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, Failure> {
        match self.raw(key) {
            Some(v) => v.trim().parse().map_err(|_| Failure::Usage(format!("--{key}: cannot parse `{v}`"))),
            None => Ok(default),
        }
    }

    fn list<T: std::str::FromStr + Clone>(&self, key: &str, default: &[T]) -> Result<Vec<T>, Failure> {
        match self.raw(key) {
            Some(v) => Ok(parse_list(v)?),
            None => Ok(default.to_vec()),
        }
    }

    fn strategies(&self, default: &[Policy]) -> Result<Vec<Policy>, Failure> {
        match self.raw("strategy") {
            Some(v) => v.split(',').map(|s| s.trim().parse().map_err(Failure::from)).collect(),
            None => Ok(default.to_vec()),
        }
    }

    fn spec(&self, engine: Engine, strategies: &[Policy], alphas: &[f64], thetas: &[f64]) -> Result<SweepSpec, Failure> {
        Ok(SweepSpec {
            strategies: self.strategies(strategies)?,
            alphas: self.list("alpha", alphas)?,
            thetas: self.list("theta", thetas)?,
            engine,
            delta_max: self.one("delta-max", harness::DEFAULT_DELTA_MAX)?,
            rounds: self.one("rounds", harness::DEFAULT_ROUNDS)?,
            blocks_per_round: self.one("blocks", harness::DEFAULT_BLOCKS)?,
            seed: self.one("seed", harness::DEFAULT_SEED)?,
        })
    }

    fn output(&self) -> Result<Box<dyn Write>, Failure> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(io::stdout().lock()),
        })
    }
}

const LFT: Policy = Policy::Strategy(stubborn_mining::StrategyFlags::LFT);
const POINT_ALPHA: [f64; 1] = [0.3];
const POINT_THETA: [f64; 1] = [0.01];

fn all_strategies() -> Vec<Policy> {
    stubborn_mining::StrategyFlags::all().map(Policy::Strategy).to_vec()
}

fn analytic(s: &Settings) -> Result<(), Failure> {
    let spec = s.spec(Engine::Analytic, &[LFT], &POINT_ALPHA, &POINT_THETA)?;
    let single = spec.points().len() == 1;
    if let (true, Policy::Strategy(flags)) = (single, spec.strategies[0]) {
        let params = validate_params(&RawParams::new(spec.alphas[0], spec.thetas[0]).delta_max(spec.delta_max))?;
        let r = metrics::report(&params, flags)?;
        println!("strategy           {}", r.strategy);
        println!("alpha theta        {} {}", r.alpha, r.theta);
        println!("states             {} (fate positions {})", r.states, r.fate_positions);
        println!("rr_m  rr_h         {:.8}  {:.8}", r.revenue.rr_m, r.revenue.rr_h);
        println!("e_m   e_h   tps    {:.8}  {:.8}  {:.8}", r.revenue.e_m, r.revenue.e_h, r.revenue.tps);
        println!("P_H(-1) P_H(0'')   {:.8}  {:.8}", r.ph.ph_minus1, r.ph.ph_tie_allhonest);
        println!("P_H(0',2) (0',3)   {:.8}  {:.8}", r.ph.ph_tie(2), r.ph.ph_tie(3));
        println!("P_F                {:.8}", r.pf.pf);
        if let Ok(tie) = closed_form::tie_loss(&params, flags) {
            let pf = closed_form::withheld_win(&params, flags, tie);
            println!("closed-form ties   {:.8}  {:.8}  P_F {:.8}", tie[0], tie[1], pf);
        }
        println!("residual  tail     {:.3e}  {:.3e}", r.residual, r.tail_mass);
        if r.tail_warning() {
            eprintln!("warning: tail mass {:.3e} above {:e}; raise --delta-max", r.tail_mass, metrics::TAIL_MASS_WARNING);
        }
        if let Some(path) = &s.dump_generator {
            let space = enumerate_states(flags, spec.delta_max)?;
            build_generator(&params, flags, &space)?.write_edge_list(BufWriter::new(File::create(path)?))?;
        }
        if s.out.is_some() {
            emit_csv(&run_sweep(&spec)?, s.output()?)?;
        }
        return Ok(());
    }
    emit_csv(&run_sweep(&spec)?, s.output()?)?;
    Ok(())
}

fn simulate_cmd(s: &Settings) -> Result<(), Failure> {
    let spec = s.spec(Engine::Simulate, &[LFT], &POINT_ALPHA, &POINT_THETA)?;
    if let Some(path) = &s.trace {
        let Policy::Strategy(flags) = spec.strategies[0] else {
            return Err(Failure::Usage("tracing needs an attacking strategy".into()));
        };
        let params = validate_params(&RawParams::new(spec.alphas[0], spec.thetas[0]).delta_max(spec.delta_max))?;
        let edges = build_generator(&params, flags, &enumerate_states(flags, spec.delta_max)?)?.edge_set();
        let config = SimConfig::new(params, spec.strategies[0]).seed(spec.seed);
        let mut out = BufWriter::new(File::create(path)?);
        let events = s.one("events", 100_000u64)?;
        let report = run_audited(&config, 0, events, &edges, spec.delta_max, Some(&mut out))?;
        out.flush()?;
        println!(
            "audited {} events: {} distinct transitions, all on generator edges ({} beyond truncation)",
            report.events, report.distinct_transitions, report.beyond_truncation
        );
        return Ok(());
    }
    if spec.points().len() == 1 {
        let params = validate_params(&RawParams::new(spec.alphas[0], spec.thetas[0]).delta_max(spec.delta_max))?;
        let config = SimConfig::new(params, spec.strategies[0])
            .blocks(spec.blocks_per_round)
            .rounds(spec.rounds)
            .seed(spec.seed);
        let r = simulate(&config)?;
        println!("strategy           {}", spec.strategies[0]);
        println!("alpha theta        {} {}", spec.alphas[0], spec.thetas[0]);
        println!("rounds x blocks    {} x {}", r.rounds, spec.blocks_per_round);
        println!("rr_m               {:.6} +- {:.6} (sd {:.6})", r.rr_m.mean, r.rr_m.ci95, r.rr_m.sd);
        println!("tps                {:.6} +- {:.6}", r.tps.mean, r.tps.ci95);
        println!("stale fraction     {:.6}", r.stale_total as f64 / (r.stale_total + r.consensus_total) as f64);
        if let Some(w) = r.probe_win_rate(Probe::TieEntry) {
            println!("P_H(0',2) observed {:.6}", 1.0 - w);
        }
        if let Some(w) = r.probe_win_rate(Probe::WithheldAtTie) {
            println!("P_F observed       {:.6}", w);
        }
        if s.out.is_some() {
            emit_csv(&run_sweep(&spec)?, s.output()?)?;
        }
        return Ok(());
    }
    emit_csv(&run_sweep(&spec)?, s.output()?)?;
    Ok(())
}

fn sweep(s: &Settings) -> Result<(), Failure> {
    let engine: Engine = s.one("engine", Engine::Analytic)?;
    let spec = s.spec(engine, &all_strategies(), &harness::DEFAULT_ALPHAS, &harness::DEFAULT_THETAS)?;
    let rows = run_sweep(&spec)?;
    match s.raw("figure") {
        Some(f) => emit_plot_data(&rows, f.parse::<Figure>()?, s.output()?)?,
        None => emit_csv(&rows, s.output()?)?,
    }
    Ok(())
}

fn rows_or_sweep(s: &Settings, engine: Engine, strategies: &[Policy]) -> Result<Vec<harness::SweepRow>, Failure> {
    match &s.rows {
        Some(path) => Ok(parse_csv(File::open(path)?)?),
        None => {
            let spec = s.spec(engine, strategies, &harness::DEFAULT_ALPHAS, &harness::DEFAULT_THETAS)?;
            let rows = run_sweep(&spec)?;
            if s.out.is_some() {
                emit_csv(&rows, s.output()?)?;
            }
            Ok(rows)
        }
    }
}

fn validate(s: &Settings) -> Result<(), Failure> {
    let tolerance = s.one("tolerance", harness::DEFAULT_TOLERANCE)?;
    let rows = rows_or_sweep(s, Engine::Both, &all_strategies())?;
    let report = cross_validate(&rows, tolerance)?;
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Violation(format!("{} rows exceed tolerance {tolerance}", report.violations.len())))
    }
}

fn threshold(s: &Settings) -> Result<(), Failure> {
    let rows = rows_or_sweep(s, Engine::Analytic, &[LFT])?;
    let table = find_threshold(&rows);
    println!("strategy  theta  threshold");
    for t in &table {
        let a = t.alpha.map_or("none".to_string(), |a| a.to_string());
        println!("{:<8}  {:<5}  {a}", t.strategy, t.theta);
    }
    let rising = threshold_increases(&table);
    if rising.is_empty() {
        Ok(())
    } else {
        Err(Failure::Violation(format!("threshold rises with theta for {}", rising.join(", "))))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (run, opts): (fn(&Settings) -> Result<(), Failure>, Opts) = match cli.command {
        Command::Analytic(o) => (analytic, o),
        Command::Simulate(o) => (simulate_cmd, o),
        Command::Sweep(o) => (sweep, o),
        Command::Validate(o) => (validate, o),
        Command::Threshold(o) => (threshold, o),
    };
    let result = Settings::new(opts, cli.config).and_then(|s| run(&s));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Violation(msg)) => {
            eprintln!("violation: {msg}");
            ExitCode::from(2)
        }
    }
}
