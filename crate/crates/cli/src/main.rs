use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tandem_core::analytic::AnalyticError;
use tandem_core::experiments::{
    self, Axis, ExperimentError, GridKind, Range, RuleChoice, SweepSpec, SynergyRange, Table,
};
use tandem_core::mdp::MdpError;
use tandem_core::sim::{GeneralistPolicy, Horizon, SimConfig, SimError};
use tandem_core::{canonicalize, Action, GeneralistParams, ModelError, SystemParams};

/// Throughput-optimal server assignment for tandem lines with
/// collaborating servers and impatient customers.
#[derive(Parser)]
#[command(name = "tandem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal threshold, gains, bounds and certificate for one instance.
    Policy(InstanceArgs),
    /// Gain of every threshold rule d_n.
    GnCurve(InstanceArgs),
    /// Optimal threshold over a (gamma, theta) or (gamma1, gamma2) grid.
    Grid(GridArgs),
    /// Histogram of the optimal threshold over random draws.
    Sweep(SweepArgs),
    /// Expedite-vs-optimal throughput ratios over rate blocks and gammas.
    Ratio(RatioArgs),
    /// Optimality certificate of d_N on random draws.
    Certify(SweepArgs),
    /// Simulate the two-station line or a generalist line.
    Simulate(SimulateArgs),
}

#[derive(Args, Clone)]
struct ParamArgs {
    /// Rates mu11,mu12,mu21,mu22 (server i at station j).
    #[arg(long, value_parser = parse_list::<f64, 4>)]
    mu: [f64; 4],
    /// Synergy factor for both stations.
    #[arg(long, conflicts_with_all = ["gamma1", "gamma2"])]
    gamma: Option<f64>,
    /// Synergy factor at station 1.
    #[arg(long, requires = "gamma2")]
    gamma1: Option<f64>,
    /// Synergy factor at station 2.
    #[arg(long, requires = "gamma1")]
    gamma2: Option<f64>,
    /// Abandonment rate per waiting customer.
    #[arg(long)]
    theta: f64,
    /// Buffer size between the stations.
    #[arg(long)]
    buffer: usize,
}

impl ParamArgs {
    fn params(&self) -> Result<SystemParams, ModelError> {
        let (g1, g2) = match (self.gamma, self.gamma1, self.gamma2) {
            (Some(g), _, _) => (g, g),
            (None, Some(a), Some(b)) => (a, b),
            _ => (1.0, 1.0),
        };
        let m = &self.mu;
        canonicalize([[m[0], m[1]], [m[2], m[3]]], g1, g2, self.theta, self.buffer)
    }
}

#[derive(Args)]
struct InstanceArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridChoice {
    GammaTheta,
    Gamma1Gamma2,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, value_parser = parse_list::<f64, 4>, default_value = "10,2,2,13")]
    mu: [f64; 4],
    #[arg(long, default_value_t = 12)]
    buffer: usize,
    #[arg(long, value_enum, default_value = "gamma-theta")]
    kind: GridChoice,
    /// Range of the first axis (gamma or gamma1).
    #[arg(long, value_parser = parse_list::<f64, 2>, default_value = "1,2")]
    x: [f64; 2],
    /// Range of the second axis (theta or gamma2). Defaults to 0,2 for theta and 1,2 for gamma2.
    #[arg(long, value_parser = parse_list::<f64, 2>)]
    y: Option<[f64; 2]>,
    /// Grid points per axis.
    #[arg(long, default_value_t = 50)]
    points: usize,
    /// Abandonment rate for the (gamma1, gamma2) grid.
    #[arg(long, default_value_t = 2.0)]
    theta: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// One synergy factor in [1, 2].
    Wide,
    /// Independent station synergy factors in [1, 2].
    TaskDependent,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum, default_value = "wide")]
    preset: Preset,
    /// Number of draws.
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Override the abandonment range lo,hi.
    #[arg(long, value_parser = parse_list::<f64, 2>)]
    theta_range: Option<[f64; 2]>,
    /// Override the buffer range lo,hi.
    #[arg(long, value_parser = parse_list::<usize, 2>)]
    buffer_range: Option<[usize; 2]>,
    /// Override the (single) synergy range lo,hi.
    #[arg(long, value_parser = parse_list::<f64, 2>)]
    gamma_range: Option<[f64; 2]>,
    /// Summary CSV (histogram or certificates) goes here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-draw log (sweep only).
    #[arg(long)]
    draws_out: Option<PathBuf>,
}

impl SweepArgs {
    fn spec(&self) -> SweepSpec {
        let mut spec = match self.preset {
            Preset::Wide => SweepSpec::wide(self.reps, self.seed),
            Preset::TaskDependent => SweepSpec::wide_task_dependent(self.reps, self.seed),
        };
        if let Some(t) = &self.theta_range {
            spec = spec.with_theta(Range::new(t[0], t[1]));
        }
        if let Some(b) = &self.buffer_range {
            spec = spec.with_buffer(b[0], b[1]);
        }
        if let Some(g) = &self.gamma_range {
            spec = spec.with_synergy(SynergyRange::Uniform(Range::new(g[0], g[1])));
        }
        spec
    }
}

#[derive(Args)]
struct RatioArgs {
    /// Draws per cell.
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Synergy grid (default 1.0, 1.1, ..., 2.0).
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Args)]
struct SimulateArgs {
    /// Two-station rates mu11,mu12,mu21,mu22.
    #[arg(long, value_parser = parse_list::<f64, 4>, conflicts_with = "servers")]
    mu: Option<[f64; 4]>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, requires = "gamma2")]
    gamma1: Option<f64>,
    #[arg(long, requires = "gamma1")]
    gamma2: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    #[arg(long, default_value_t = 0)]
    buffer: usize,
    /// Two-station rule: optimal, n=<N>, or a constant action a11|a12|a21|a22.
    #[arg(long, default_value = "optimal")]
    rule: String,
    /// Generalist server speeds.
    #[arg(long, value_delimiter = ',')]
    servers: Option<Vec<f64>>,
    /// Generalist station easiness values.
    #[arg(long, value_delimiter = ',', requires = "servers")]
    delta: Option<Vec<f64>>,
    /// Generalist per-station synergy factors.
    #[arg(long, value_delimiter = ',', requires = "servers")]
    gammas: Option<Vec<f64>>,
    /// Generalist buffer sizes.
    #[arg(long, value_delimiter = ',', requires = "servers")]
    buffers: Option<Vec<usize>>,
    /// Generalist policy: expedite, or static:<station of server 1>,<...>.
    #[arg(long, default_value = "expedite")]
    policy: String,
    /// Horizon in events.
    #[arg(long, conflicts_with = "time")]
    events: Option<u64>,
    /// Horizon in simulated time.
    #[arg(long)]
    time: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    warmup: f64,
    #[arg(long, default_value_t = 20)]
    batches: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    reps: u64,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Outcome classes mapped to exit codes.
enum Failure {
    Usage(anyhow::Error),
    Check(anyhow::Error),
    Numerical(anyhow::Error),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match &e {
            ExperimentError::Spec(_) | ExperimentError::Refused(_) | ExperimentError::Model(_) => Failure::Usage(e.into()),
            ExperimentError::Sim(SimError::Config(_) | SimError::Schedule(_) | SimError::RuleLength { .. }) => {
                Failure::Usage(e.into())
            }
            ExperimentError::Analytic(AnalyticError::OutOfRange { .. }) => Failure::Usage(e.into()),
            ExperimentError::Mdp(MdpError::NoAbandonment(_) | MdpError::RateBound { .. }) => Failure::Usage(e.into()),
            _ => Failure::Numerical(e.into()),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::Usage(e.into())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(anyhow!(e))
    }
}

fn write_table(table: &Table, out: Option<&PathBuf>) -> Result<(), Failure> {
    let sink: Box<dyn Write> = match out {
        Some(path) => Box::new(File::create(path).with_context(|| format!("cannot create {}", path.display())).map_err(Failure::Usage)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
    let csv_err = |e: csv::Error| Failure::Usage(anyhow!(e));
    w.write_record(&table.header).map_err(csv_err)?;
    for row in &table.rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses exactly `K` comma-separated values.
fn parse_list<T: std::str::FromStr, const K: usize>(s: &str) -> Result<[T; K], String>
where
    T::Err: std::fmt::Display,
{
    let items = s.split(',').map(|x| x.trim().parse::<T>().map_err(|e| format!("{x:?}: {e}"))).collect::<Result<Vec<_>, _>>()?;
    let n = items.len();
    items.try_into().map_err(|_| format!("expected {K} comma-separated values, got {n}"))
}

fn parse_rule(s: &str) -> anyhow::Result<RuleChoice> {
    Ok(match s {
        "optimal" => RuleChoice::Optimal,
        "a11" => RuleChoice::Constant(Action::A11),
        "a12" => RuleChoice::Constant(Action::A12),
        "a21" => RuleChoice::Constant(Action::A21),
        "a22" => RuleChoice::Constant(Action::A22),
        _ => match s.strip_prefix("n=") {
            Some(n) => RuleChoice::Threshold(n.parse().context("threshold must be an integer")?),
            None => bail!("unknown rule {s:?}"),
        },
    })
}

fn parse_policy(s: &str) -> anyhow::Result<GeneralistPolicy> {
    if s == "expedite" {
        return Ok(GeneralistPolicy::Expedite);
    }
    let Some(list) = s.strip_prefix("static:") else { bail!("unknown policy {s:?}") };
    let stations = list
        .split(',')
        .map(|x| x.trim().parse::<usize>().map(|j| j.wrapping_sub(1)))
        .collect::<Result<Vec<_>, _>>()
        .context("static schedule must list 1-based station numbers")?;
    Ok(GeneralistPolicy::Static(stations))
}

fn policy(args: &InstanceArgs) -> Result<(), Failure> {
    let report = experiments::policy_report(&args.params.params()?)?;
    write_table(&report.table(), args.out.as_ref())
}

fn gn_curve(args: &InstanceArgs) -> Result<(), Failure> {
    write_table(&experiments::gn_curve(&args.params.params()?), args.out.as_ref())
}

fn grid(args: &GridArgs) -> Result<(), Failure> {
    let m = &args.mu;
    let base = canonicalize([[m[0], m[1]], [m[2], m[3]]], 1.0, 1.0, args.theta, args.buffer)?;
    let (kind, y_default) = match args.kind {
        GridChoice::GammaTheta => (GridKind::GammaTheta, [0.0, 2.0]),
        GridChoice::Gamma1Gamma2 => (GridKind::Gamma1Gamma2, [1.0, 2.0]),
    };
    let y_range = args.y.unwrap_or(y_default);
    let x = Axis::new(args.x[0], args.x[1], args.points);
    let y = Axis::new(y_range[0], y_range[1], args.points);
    let result = experiments::threshold_grid(&base, kind, x, y)?;
    write_table(&result.table(), args.out.as_ref())?;
    if !result.monotone() {
        let detail = result.violations.join("\n");
        return Err(Failure::Check(anyhow!("threshold is not monotone on the grid:\n{detail}")));
    }
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    let result = experiments::sweep(&args.spec())?;
    write_table(&result.histogram_table(), args.out.as_ref())?;
    if let Some(path) = &args.draws_out {
        write_table(&result.draws_table(), Some(path))?;
    }
    eprintln!("fraction with N=1: {}", experiments::fmt_num(result.fraction(1)));
    Ok(())
}

fn ratio(args: &RatioArgs) -> Result<(), Failure> {
    let gammas = args.gammas.clone().unwrap_or_else(experiments::ratio_gamma_grid);
    let report = experiments::ratio_study(&gammas, args.reps, args.seed)?;
    write_table(&report.table(), args.out.as_ref())
}

fn certify(args: &SweepArgs) -> Result<(), Failure> {
    let report = experiments::certify_campaign(&args.spec())?;
    write_table(&report.table(), args.out.as_ref())?;
    eprintln!(
        "certified {}/{}; global min Gamma/(S1+S2) = {}",
        report.rows.len() - report.failures().count(),
        report.rows.len(),
        experiments::fmt_num(report.global_relative_min())
    );
    if !report.all_certified() {
        for (k, row) in report.failures() {
            eprintln!("uncertified draw {k}: {} N={} min Gamma={}", row.params, row.threshold, row.min_gamma);
        }
        return Err(Failure::Check(anyhow!("some draws are not certified")));
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let horizon = match (args.events, args.time) {
        (_, Some(t)) => Horizon::Time(t),
        (Some(n), None) => Horizon::Events(n),
        (None, None) => Horizon::Events(1_000_000),
    };
    let cfg = SimConfig { horizon, warmup: args.warmup, seed: args.seed, stream: 0, batches: args.batches };
    let report = if let Some(servers) = &args.servers {
        let stations = args.delta.clone().unwrap_or_else(|| vec![1.0]);
        let gp = GeneralistParams::new(
            servers.clone(),
            stations.clone(),
            args.gammas.clone().unwrap_or_else(|| vec![1.0; stations.len()]),
            args.buffers.clone().unwrap_or_else(|| vec![0; stations.len().saturating_sub(1)]),
            args.theta,
        )?;
        let policy = parse_policy(&args.policy).map_err(Failure::Usage)?;
        experiments::simulate_generalist(&gp, &policy, &cfg, args.reps)?
    } else {
        let Some(m) = &args.mu else {
            return Err(Failure::Usage(anyhow!("give --mu for the two-station line or --servers for a generalist line")));
        };
        let (g1, g2) = match (args.gamma, args.gamma1, args.gamma2) {
            (Some(g), _, _) => (g, g),
            (None, Some(a), Some(b)) => (a, b),
            _ => (1.0, 1.0),
        };
        let params = canonicalize([[m[0], m[1]], [m[2], m[3]]], g1, g2, args.theta, args.buffer)?;
        let rule = parse_rule(&args.rule).map_err(Failure::Usage)?;
        experiments::simulate_two_station(&params, &rule, &cfg, args.reps)?
    };
    match args.format {
        Format::Csv => write_table(&report.table(), args.out.as_ref()),
        Format::Jsonl => {
            let mut sink: Box<dyn Write> = match &args.out {
                Some(path) => Box::new(File::create(path)?),
                None => Box::new(io::stdout().lock()),
            };
            for run in &report.runs {
                let mut line = serde_json::to_value(run).map_err(|e| Failure::Numerical(e.into()))?;
                line["analytic"] = report.analytic.into();
                writeln!(sink, "{line}")?;
            }
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Policy(a) => policy(a),
        Command::GnCurve(a) => gn_curve(a),
        Command::Grid(a) => grid(a),
        Command::Sweep(a) => sweep(a),
        Command::Ratio(a) => ratio(a),
        Command::Certify(a) => certify(a),
        Command::Simulate(a) => simulate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Check(e)) => {
            eprintln!("check failed: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("numerical failure: {e:#}");
            ExitCode::from(3)
        }
    }
}
