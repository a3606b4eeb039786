//! `fsrdp`: per-client Rényi-DP accounting and federated simulation.
//!
//! Exit status: 0 success, 1 usage, 2 numerical failure, 3 I/O.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use fsrdp::accountant::AccountantError;
use fsrdp::math::{renyi_step_bound, MechanismParams, RenyiOrder, TaylorOrder};
use fsrdp::oracle::{mc_moment, oracle_renyi};
use fsrdp::sim::{self, format_sig12, Sampler, SimConfig, SimError};
use fsrdp::{
    rdp_to_dp, Accountant, MathError, ParticipationLedger, PrivacyBudget, RdpCurve, Real, Wide, DEFAULT_ALPHAS,
    DEFAULT_DELTA,
};

/// Dominance violations smaller than this are treated as rounding.
const DOMINANCE_TOL: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "fsrdp", version, about = "Rényi-DP accounting for federated learning with fixed-size minibatches")]
struct Cli {
    /// Output format for tabular results.
    #[arg(long, value_enum, global = true, default_value_t = Format::Csv)]
    format: Format,
    /// Write tabular results here instead of stdout.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SamplerArg {
    Fixed,
    Poisson,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One-step divergence bound, checked against the quadrature oracle.
    Bound {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        sigma: f64,
        /// Taylor order; chosen adaptively when omitted.
        #[arg(long)]
        m: Option<u32>,
    },
    /// Quadrature value of the one-step divergence, or a Monte-Carlo moment
    /// estimate with `--moment`.
    Oracle {
        #[arg(long, required_unless_present = "moment")]
        alpha: Option<f64>,
        #[arg(long, required_unless_present = "moment")]
        q: Option<f64>,
        #[arg(long)]
        sigma: f64,
        /// Estimate E[(L−1)^k] for this k instead.
        #[arg(long)]
        moment: Option<u32>,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Composed RDP curve per client of a ledger, or of `steps` identical
    /// steps (reported as client 0).
    Compose {
        #[arg(long, conflicts_with_all = ["q", "sigma", "steps"])]
        ledger: Option<PathBuf>,
        #[arg(long)]
        client: Option<u64>,
        #[arg(long, requires_all = ["sigma", "steps"])]
        q: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        steps: Option<u64>,
        /// Comma-separated Rényi orders.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// (ε, δ) per client, from a ledger or from a curve written by `compose`.
    Convert {
        #[arg(long, conflicts_with = "curve", required_unless_present = "curve")]
        ledger: Option<PathBuf>,
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long)]
        client: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_DELTA)]
        delta: f64,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Smallest σ meeting (ε, δ) after `steps` identical steps.
    Calibrate {
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = DEFAULT_DELTA)]
        delta: f64,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        steps: u64,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Run a simulation and write model, round records, per-client ε and the
    /// participation ledger into `--out`.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Per-round batch sizes of the configured client sampler.
    Trace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        sampler: SamplerArg,
        /// Defaults to the config's round count.
        #[arg(long)]
        rounds: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) | Failure::Io(m) => m,
        }
    }
}

impl From<MathError> for Failure {
    fn from(e: MathError) -> Self {
        match e {
            MathError::InvalidParameter { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<AccountantError> for Failure {
    fn from(e: AccountantError) -> Self {
        let msg = e.to_string();
        match e {
            AccountantError::Math(inner) | AccountantError::Step { source: inner, .. } => match Failure::from(inner) {
                Failure::Usage(_) => Failure::Usage(msg),
                _ => Failure::Numerical(msg),
            },
            AccountantError::BracketExhausted { .. } => Failure::Numerical(msg),
            AccountantError::Parse { .. } | AccountantError::OutOfOrder { .. } => Failure::Io(msg),
            _ => Failure::Usage(msg),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Accountant(inner) => inner.into(),
            SimError::Io { .. } => Failure::Io(e.to_string()),
            SimError::Config(_) | SimError::Batch { .. } | SimError::Selection { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

/// Rows of one table, rendered as CSV or JSON lines.
struct Table {
    columns: &'static [&'static str],
    rows: Vec<Vec<Cell>>,
}

enum Cell {
    Int(u64),
    Real(f64),
    /// Preformatted number (e.g. beyond f64 range).
    Raw(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Real(v) => format_sig12(*v),
            Cell::Raw(s) => s.clone(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Real(v) if v.is_finite() => json!(v),
            Cell::Real(v) => json!(v.to_string()),
            Cell::Raw(s) => json!(s),
        }
    }
}

impl Table {
    fn render(&self, format: Format) -> String {
        let mut out = String::new();
        match format {
            Format::Csv => {
                out.push_str(&self.columns.join(","));
                out.push('\n');
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
            }
            Format::Jsonl => {
                for row in &self.rows {
                    let obj: serde_json::Map<String, serde_json::Value> =
                        self.columns.iter().zip(row).map(|(c, v)| (c.to_string(), v.json())).collect();
                    let _ = writeln!(out, "{}", serde_json::Value::Object(obj));
                }
            }
        }
        out
    }
}

fn wide_cell(w: Wide) -> Cell {
    let v = w.to_f64();
    if v.is_finite() && (v == 0.0 || v.abs() > 1e-300) {
        Cell::Real(v)
    } else {
        Cell::Raw(format!("{w:.11}"))
    }
}

fn emit(table: &Table, cli: &Cli) -> Result<(), Failure> {
    let text = table.render(cli.format);
    match &cli.output {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn orders(alphas: &Option<Vec<f64>>) -> Result<Vec<RenyiOrder>, Failure> {
    let raw: Vec<f64> = alphas.clone().unwrap_or_else(|| DEFAULT_ALPHAS.to_vec());
    raw.into_iter().map(|a| RenyiOrder::new(a).map_err(Failure::from)).collect()
}

fn read_ledger(path: &Path) -> Result<ParticipationLedger, Failure> {
    Ok(ParticipationLedger::from_text(&read_text(path)?)?)
}

fn selected_clients(ledger: &ParticipationLedger, client: Option<u64>) -> Result<Vec<u64>, Failure> {
    match client {
        Some(c) if ledger.contains(c) => Ok(vec![c]),
        Some(c) => Err(AccountantError::UnknownClient(c).into()),
        None => Ok(ledger.clients().collect()),
    }
}

fn cmd_bound(cli: &Cli, alpha: f64, q: f64, sigma: f64, m: Option<u32>) -> Result<(), Failure> {
    let order = m.map_or(TaylorOrder::Adaptive, TaylorOrder::Fixed);
    let alpha = RenyiOrder::new(alpha)?;
    let params = MechanismParams::new(q, sigma, order)?;
    let bound = renyi_step_bound::<Wide>(alpha, &params)?;
    let oracle = oracle_renyi(alpha, q, sigma)?;
    // H_bound − H_oracle, formed relative to H_oracle so it stays finite
    let scale = alpha.value() - 1.0;
    let gap = Wide::exp_of(scale * oracle) * Wide::from_f64((scale * (bound.bound - oracle)).exp_m1());
    let table = Table {
        columns: &["alpha", "q", "sigma", "m", "bound", "oracle", "remainder", "gap"],
        rows: vec![vec![
            Cell::Real(alpha.value()),
            Cell::Real(q),
            Cell::Real(sigma),
            Cell::Int(bound.order as u64),
            Cell::Real(bound.bound),
            Cell::Real(oracle),
            wide_cell(bound.remainder),
            wide_cell(gap),
        ]],
    };
    emit(&table, cli)?;
    if bound.bound < oracle - DOMINANCE_TOL {
        return Err(Failure::Numerical(format!(
            "bound {} is below the oracle {} by more than {DOMINANCE_TOL:e}",
            bound.bound, oracle
        )));
    }
    Ok(())
}

fn cmd_oracle(cli: &Cli, alpha: Option<f64>, q: Option<f64>, sigma: f64, moment: Option<u32>, samples: u64, seed: u64) -> Result<(), Failure> {
    let table = if let Some(k) = moment {
        let est = mc_moment(sigma, k, samples, seed)?;
        Table {
            columns: &["sigma", "k", "samples", "seed", "mean", "std_err"],
            rows: vec![vec![
                Cell::Real(sigma),
                Cell::Int(k as u64),
                Cell::Int(est.samples),
                Cell::Int(seed),
                Cell::Real(est.mean),
                Cell::Real(est.std_err),
            ]],
        }
    } else {
        let (alpha, q) = (alpha.expect("required by clap"), q.expect("required by clap"));
        let value = oracle_renyi(RenyiOrder::new(alpha)?, q, sigma)?;
        Table {
            columns: &["alpha", "q", "sigma", "oracle"],
            rows: vec![vec![Cell::Real(alpha), Cell::Real(q), Cell::Real(sigma), Cell::Real(value)]],
        }
    };
    emit(&table, cli)
}

fn curve_rows(client: u64, curve: &RdpCurve) -> impl Iterator<Item = Vec<Cell>> + '_ {
    curve.points().map(move |(a, v)| vec![Cell::Int(client), Cell::Real(a.value()), Cell::Real(v)])
}

struct ComposeArgs<'a> {
    ledger: &'a Option<PathBuf>,
    client: Option<u64>,
    q: Option<f64>,
    sigma: Option<f64>,
    steps: Option<u64>,
    alphas: &'a Option<Vec<f64>>,
}

fn cmd_compose(cli: &Cli, args: ComposeArgs<'_>) -> Result<(), Failure> {
    let accountant = Accountant::with_orders(orders(args.alphas)?)?;
    let mut rows = Vec::new();
    if let Some(path) = args.ledger {
        let ledger = read_ledger(path)?;
        for client in selected_clients(&ledger, args.client)? {
            let curve = accountant.compose_client_rdp(&ledger, client)?;
            rows.extend(curve_rows(client, &curve));
        }
    } else {
        let (Some(q), Some(sigma), Some(steps)) = (args.q, args.sigma, args.steps) else {
            return Err(Failure::Usage("compose needs either --ledger or all of --q, --sigma, --steps".into()));
        };
        let mut ledger = ParticipationLedger::new();
        let params = fsrdp::StepParams::new(q, sigma, 1.0, 1)?;
        for t in 0..steps {
            ledger.record_participation(0, t, params)?;
        }
        ledger.add_client(0);
        let curve = accountant.compose_client_rdp(&ledger, 0)?;
        rows.extend(curve_rows(0, &curve));
    }
    emit(&Table { columns: &["client_id", "alpha", "rdp"], rows }, cli)
}

/// Parses `client_id,alpha,rdp` rows as written by `compose --format csv`.
fn read_curves(path: &Path) -> Result<Vec<(u64, RdpCurve)>, Failure> {
    let text = read_text(path)?;
    let bad = |line: usize, what: &str| Failure::Io(format!("{}:{line}: {what}", path.display()));
    let mut grouped: Vec<(u64, Vec<(RenyiOrder, f64)>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 && line.starts_with("client_id") || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(bad(i + 1, "expected client_id,alpha,rdp"));
        }
        let client: u64 = f[0].trim().parse().map_err(|_| bad(i + 1, "bad client_id"))?;
        let alpha: f64 = f[1].trim().parse().map_err(|_| bad(i + 1, "bad alpha"))?;
        let rdp: f64 = f[2].trim().parse().map_err(|_| bad(i + 1, "bad rdp"))?;
        let alpha = RenyiOrder::new(alpha).map_err(|e| bad(i + 1, &e.to_string()))?;
        match grouped.last_mut() {
            Some((c, points)) if *c == client => points.push((alpha, rdp)),
            _ => grouped.push((client, vec![(alpha, rdp)])),
        }
    }
    grouped
        .into_iter()
        .map(|(c, points)| Ok((c, RdpCurve::from_points(points).map_err(|e| Failure::Io(format!("{}: client {c}: {e}", path.display())))?)))
        .collect()
}

fn cmd_convert(
    cli: &Cli,
    ledger: &Option<PathBuf>,
    curve: &Option<PathBuf>,
    client: Option<u64>,
    delta: f64,
    alphas: &Option<Vec<f64>>,
) -> Result<(), Failure> {
    let mut rows = Vec::new();
    if let Some(path) = ledger {
        let ledger = read_ledger(path)?;
        let accountant = Accountant::with_orders(orders(alphas)?)?;
        for c in selected_clients(&ledger, client)? {
            let (budget, alpha) = accountant.client_epsilon(&ledger, c, delta)?;
            rows.push(vec![
                Cell::Int(c),
                Cell::Int(ledger.participation_count(c) as u64),
                Cell::Real(budget.epsilon),
                Cell::Real(budget.delta),
                Cell::Real(alpha.value()),
            ]);
        }
        return emit(&Table { columns: &["client_id", "participations", "epsilon", "delta", "alpha"], rows }, cli);
    }
    let path = curve.as_ref().expect("required by clap");
    for (c, curve) in read_curves(path)? {
        if client.is_some_and(|want| want != c) {
            continue;
        }
        let (budget, alpha) = rdp_to_dp(&curve, delta)?;
        rows.push(vec![Cell::Int(c), Cell::Real(budget.epsilon), Cell::Real(budget.delta), Cell::Real(alpha.value())]);
    }
    emit(&Table { columns: &["client_id", "epsilon", "delta", "alpha"], rows }, cli)
}

fn cmd_calibrate(cli: &Cli, epsilon: f64, delta: f64, q: f64, steps: u64, alphas: &Option<Vec<f64>>) -> Result<(), Failure> {
    let accountant = Accountant::with_orders(orders(alphas)?)?;
    let target = PrivacyBudget::new(epsilon, delta)?;
    let sigma = accountant.calibrate_sigma(target, q, steps)?;
    let achieved = accountant.epsilon_for(q, sigma, steps, delta)?;
    let table = Table {
        columns: &["target_epsilon", "delta", "q", "steps", "sigma", "epsilon"],
        rows: vec![vec![
            Cell::Real(epsilon),
            Cell::Real(delta),
            Cell::Real(q),
            Cell::Int(steps),
            Cell::Real(sigma),
            Cell::Real(achieved),
        ]],
    };
    emit(&table, cli)
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<SimConfig, Failure> {
    let mut config = SimConfig::from_path(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn cmd_simulate(cli: &Cli, config: &Path, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let config = load_config(config, seed)?;
    let run = sim::simulate(&config)?;
    sim::write_outputs(&run, out)?;
    let min_eps = run.epsilons.iter().map(|e| e.epsilon).fold(f64::INFINITY, f64::min);
    let max_eps = run.epsilons.iter().map(|e| e.epsilon).fold(0.0, f64::max);
    let table = Table {
        columns: &["seed", "rounds", "sigma", "accuracy", "min_epsilon", "max_epsilon"],
        rows: vec![vec![
            Cell::Int(config.seed),
            Cell::Int(config.rounds),
            Cell::Real(run.sigma),
            Cell::Real(run.accuracy),
            Cell::Real(min_eps),
            Cell::Real(max_eps),
        ]],
    };
    emit(&table, cli)
}

fn cmd_trace(cli: &Cli, config: &Path, sampler: SamplerArg, rounds: Option<u64>, seed: Option<u64>) -> Result<(), Failure> {
    let config = load_config(config, seed)?;
    let sampler = match sampler {
        SamplerArg::Fixed => Sampler::Fixed,
        SamplerArg::Poisson => Sampler::Poisson,
    };
    let trace = sim::batch_size_trace(&config, sampler, rounds.unwrap_or(config.rounds))?;
    let rows = trace
        .iter()
        .enumerate()
        .map(|(t, &b)| vec![Cell::Int(t as u64), Cell::Int(b as u64)])
        .collect();
    emit(&Table { columns: &["round", "batch_size"], rows }, cli)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Bound { alpha, q, sigma, m } => cmd_bound(cli, *alpha, *q, *sigma, *m),
        Command::Oracle { alpha, q, sigma, moment, samples, seed } => cmd_oracle(cli, *alpha, *q, *sigma, *moment, *samples, *seed),
        Command::Compose { ledger, client, q, sigma, steps, alphas } => cmd_compose(
            cli,
            ComposeArgs { ledger, client: *client, q: *q, sigma: *sigma, steps: *steps, alphas },
        ),
        Command::Convert { ledger, curve, client, delta, alphas } => cmd_convert(cli, ledger, curve, *client, *delta, alphas),
        Command::Calibrate { epsilon, delta, q, steps, alphas } => cmd_calibrate(cli, *epsilon, *delta, *q, *steps, alphas),
        Command::Simulate { config, out, seed } => cmd_simulate(cli, config, out, *seed),
        Command::Trace { config, sampler, rounds, seed } => cmd_trace(cli, config, *sampler, *rounds, *seed),
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
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
