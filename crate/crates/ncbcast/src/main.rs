//! Thin command-line front end over the ncbcast library: single runs,
//! analytic tables, sweeps, CSV comparison, figure reproduction.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ncbcast::analytic::{self, ChainParams, DelayDenominator};
use ncbcast::experiment::{
    self, compare_tables, fmt_f64, parse_coding, parse_delivery_mode, parse_rate_kind, FigureId,
    RateKind, ReproduceOptions, SweepSpec, Table,
};
use ncbcast::ratectrl::RateControlScheme;
use ncbcast::sim::{self, SimConfig};

#[derive(Parser)]
#[command(name = "ncbcast", about = "Network-coded broadcast simulator and analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and print its metrics.
    Simulate(SimulateArgs),
    /// Evaluate analytic formulas into a CSV table.
    Analyze(AnalyzeArgs),
    /// Run a parameter sweep from a config file and/or flags.
    Sweep(SweepArgs),
    /// Compare a numeric column of two CSV files point by point.
    Compare(CompareArgs),
    /// Regenerate the CSV tables behind one of the standard figures.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct SchemeArgs {
    #[arg(long, default_value_t = 4)]
    receivers: usize,
    #[arg(long, default_value_t = 0.8)]
    mu: f64,
    /// Coding scheme: a | b | rlnc.
    #[arg(long, default_value = "b")]
    coding: String,
    /// Rate control: baseline | threshold | dynamic.
    #[arg(long, default_value = "baseline")]
    rate: String,
    /// Baseline addition rate.
    #[arg(long, default_value_t = 0.7)]
    lambda: f64,
    /// Delay-threshold age limit T_D in slots.
    #[arg(long, default_value_t = 10)]
    td: u64,
    /// Dynamic-scheme throughput weighting factor.
    #[arg(long, default_value_t = 100.0)]
    f: f64,
    /// Field exponent m (field order 2^m); default: smallest field
    /// with order >= receivers.
    #[arg(long)]
    field_exp: Option<u32>,
    #[arg(long, default_value_t = 100_000)]
    horizon: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Delivery accounting: full | zero | zero-leader.
    #[arg(long, default_value = "full")]
    delivery_mode: String,
}

impl SchemeArgs {
    fn to_config(&self) -> Result<SimConfig, String> {
        let coding = parse_coding(&self.coding).ok_or("--coding must be a|b|rlnc")?;
        let rate = match parse_rate_kind(&self.rate).ok_or("--rate must be baseline|threshold|dynamic")? {
            RateKind::Baseline => RateControlScheme::Baseline { lambda: self.lambda },
            RateKind::Threshold => RateControlScheme::DelayThreshold { t_d: self.td },
            RateKind::Dynamic => RateControlScheme::Dynamic { f: self.f, epsilon: 1e-4 },
        };
        let mode = parse_delivery_mode(&self.delivery_mode)
            .ok_or("--delivery-mode must be full|zero|zero-leader")?;
        let mut cfg = SimConfig::new(self.receivers, self.mu, coding, rate)
            .horizon(self.horizon)
            .seed(self.seed)
            .delivery_mode(mode);
        cfg.field_exp = self.field_exp;
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Write a metrics CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a per-slot trace CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// cycle-dist | cycle-mass | stationary | zero-delay | leader | rlnc-delivery.
    #[arg(long)]
    what: String,
    #[arg(long, default_value_t = 0.7)]
    lambda: f64,
    #[arg(long, default_value_t = 0.8)]
    mu: f64,
    #[arg(long, default_value_t = 4)]
    receivers: u32,
    /// Truncation horizon for cycle sums.
    #[arg(long, default_value_t = 1000)]
    t_max: u64,
    /// Field order M for rlnc-delivery.
    #[arg(long, default_value_t = 4)]
    field_order: u32,
    /// Largest state k to tabulate.
    #[arg(long, default_value_t = 12)]
    k_max: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// key=value config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    coding: Option<String>,
    #[arg(long)]
    rate: Option<String>,
    /// Baseline rate grid (repeatable).
    #[arg(long)]
    lambda: Vec<f64>,
    /// Threshold grid (repeatable).
    #[arg(long)]
    td: Vec<u64>,
    /// Weighting-factor grid (repeatable).
    #[arg(long)]
    f: Vec<f64>,
    /// Receiver-count grid (repeatable).
    #[arg(long)]
    receivers: Vec<usize>,
    /// Channel-rate grid (repeatable).
    #[arg(long)]
    mu: Vec<f64>,
    #[arg(long)]
    field_exp: Option<u32>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<u64>,
    #[arg(long)]
    delivery_mode: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    left: PathBuf,
    right: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
    /// Column to compare; defaults to the left table's last column.
    #[arg(long)]
    value_col: Option<String>,
}

#[derive(Args)]
struct ReproduceArgs {
    /// fig2 | fig3 | fig5 | fig6 | fig7 | fig8 | fig9 | fig10 | fig11.
    figure: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Analyze(args) => analyze(args),
        Command::Sweep(args) => sweep(args),
        Command::Compare(args) => compare(args),
        Command::Reproduce(args) => reproduce(args),
    }
}

fn simulate(args: SimulateArgs) -> Result<ExitCode, String> {
    let cfg = args.scheme.to_config()?;
    let metrics = match &args.trace {
        Some(path) => experiment::write_trace(&cfg, path).map_err(|e| e.to_string())?,
        None => sim::run(&cfg).map_err(|e| e.to_string())?,
    };
    println!("slots                {}", metrics.slots);
    println!("packets queued       {}", metrics.adds);
    println!("realized add rate    {:.6}", metrics.realized_addition_rate());
    println!("throughput           {:.6}", metrics.throughput());
    match metrics.mean_delay() {
        Some(d) => println!("mean delivery delay  {d:.6}"),
        None => println!("mean delivery delay  n/a (nothing delivered)"),
    }
    if let Some(u) = metrics.uncoded_fraction() {
        println!("uncoded fraction     {u:.6}");
    }
    println!(
        "deliveries by class  zero={} leader={} coefficient={}",
        metrics.delivery_packets[0], metrics.delivery_packets[1], metrics.delivery_packets[2]
    );
    if let Some(range) = metrics.lambda_last_half_range() {
        println!("lambda_est range     {range:.6} (second half)");
    }
    if let Some(path) = args.out {
        let mut t = Table::new(
            path.file_stem().map(|s| s.to_string_lossy().into_owned()).as_deref().unwrap_or("metrics"),
            &["metric", "value"],
        );
        t.push(vec!["slots".into(), metrics.slots.to_string()]);
        t.push(vec!["adds".into(), metrics.adds.to_string()]);
        t.push(vec!["throughput".into(), fmt_f64(metrics.throughput())]);
        t.push(vec![
            "delay".into(),
            fmt_f64(metrics.mean_delay().unwrap_or(f64::NAN)),
        ]);
        t.push(vec![
            "realized_rate".into(),
            fmt_f64(metrics.realized_addition_rate()),
        ]);
        std::fs::write(&path, t.to_csv()).map_err(|e| e.to_string())?;
        println!("metrics written to {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn analyze(args: AnalyzeArgs) -> Result<ExitCode, String> {
    let params = ChainParams::new(args.lambda, args.mu).map_err(|e| e.to_string())?;
    let table = match args.what.as_str() {
        "cycle-dist" => {
            let mut t = Table::new("cycle_dist", &["t", "probability", "cumulative"]);
            let probs = analytic::cycle_probabilities(&params, args.t_max);
            let mut acc = 0.0;
            for cycle in 1..=args.t_max as usize {
                acc += probs[cycle];
                t.push(vec![cycle.to_string(), fmt_f64(probs[cycle]), fmt_f64(acc)]);
            }
            t
        }
        "cycle-mass" => {
            let mut t = Table::new("cycle_mass", &["t_max", "mass"]);
            t.push(vec![
                args.t_max.to_string(),
                fmt_f64(analytic::expected_cycle_mass(&params, args.t_max)),
            ]);
            t
        }
        "stationary" => {
            let mut t = Table::new("stationary", &["k", "probability"]);
            for k in 0..=args.k_max {
                t.push(vec![
                    k.to_string(),
                    fmt_f64(analytic::stationary(&params, k).map_err(|e| e.to_string())?),
                ]);
            }
            t
        }
        "zero-delay" => {
            let mut t = Table::new("zero_delay", &["variant", "estimate"]);
            t.push(vec![
                "as_printed".into(),
                fmt_f64(
                    analytic::zero_state_delay_estimate(&params, args.t_max, DelayDenominator::AsPrinted)
                        .map_err(|e| e.to_string())?,
                ),
            ]);
            t.push(vec![
                "consistent".into(),
                fmt_f64(
                    analytic::zero_state_delay_estimate(&params, args.t_max, DelayDenominator::SelfConsistent)
                        .map_err(|e| e.to_string())?,
                ),
            ]);
            t
        }
        "leader" => {
            let mut t = Table::new("leader", &["k", "probability"]);
            for k in 0..=args.k_max {
                t.push(vec![
                    k.to_string(),
                    fmt_f64(
                        analytic::leader_state_model(&params, args.receivers, k)
                            .map_err(|e| e.to_string())?,
                    ),
                ]);
            }
            t
        }
        "rlnc-delivery" => {
            let mut t = Table::new("rlnc_delivery", &["s_star", "probability"]);
            for s in 1..=args.k_max.max(1) {
                t.push(vec![
                    s.to_string(),
                    fmt_f64(analytic::rlnc_delivery_probability(args.field_order, s)),
                ]);
            }
            t
        }
        other => return Err(format!("unknown analysis '{other}'")),
    };
    emit(table, args.out)
}

fn sweep(args: SweepArgs) -> Result<ExitCode, String> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
            experiment::parse_sweep_config(&text).map_err(|e| e.to_string())?
        }
        None => SweepSpec::default(),
    };
    if let Some(c) = &args.coding {
        spec.coding = parse_coding(c).ok_or("--coding must be a|b|rlnc")?;
    }
    if let Some(r) = &args.rate {
        spec.rate_kind = parse_rate_kind(r).ok_or("--rate must be baseline|threshold|dynamic")?;
    }
    if !args.lambda.is_empty() {
        spec.lambdas = args.lambda.clone();
    }
    if !args.td.is_empty() {
        spec.thresholds = args.td.clone();
    }
    if !args.f.is_empty() {
        spec.weights = args.f.clone();
    }
    if !args.receivers.is_empty() {
        spec.receiver_counts = args.receivers.clone();
    }
    if !args.mu.is_empty() {
        spec.mus = args.mu.clone();
    }
    if let Some(m) = args.field_exp {
        spec.field_exp = Some(m);
    }
    if let Some(h) = args.horizon {
        spec.horizon = h;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(r) = args.reps {
        spec.reps = r;
    }
    if let Some(mode) = &args.delivery_mode {
        spec.delivery_mode =
            parse_delivery_mode(mode).ok_or("--delivery-mode must be full|zero|zero-leader")?;
    }
    let table = experiment::run_sweep(&spec).map_err(|e| e.to_string())?;
    emit(table, args.out)
}

fn compare(args: CompareArgs) -> Result<ExitCode, String> {
    let left = Table::read(&args.left).map_err(|e| e.to_string())?;
    let right = Table::read(&args.right).map_err(|e| e.to_string())?;
    let report = compare_tables(&left, &right, args.tolerance, args.value_col.as_deref())
        .map_err(|e| e.to_string())?;
    for p in &report.points {
        println!(
            "[{}] {} {}: {} vs {} (rel err {:.4e})",
            if p.pass { "pass" } else { "FAIL" },
            p.key,
            report.value_column,
            p.left,
            p.right,
            p.relative_error
        );
    }
    let failures = report.points.iter().filter(|p| !p.pass).count();
    println!(
        "{} points, {} failures, tolerance {}",
        report.points.len(),
        failures,
        report.tolerance
    );
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn reproduce(args: ReproduceArgs) -> Result<ExitCode, String> {
    let fig: FigureId = args.figure.parse().map_err(|e: experiment::ExperimentError| e.to_string())?;
    let opts = ReproduceOptions { seed: args.seed, horizon: args.horizon };
    let tables = experiment::reproduce(fig, &opts).map_err(|e| e.to_string())?;
    for table in tables {
        let path = table.write_to(&args.out).map_err(|e| e.to_string())?;
        println!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn emit(table: Table, out: Option<PathBuf>) -> Result<ExitCode, String> {
    match out {
        Some(path) => {
            std::fs::write(&path, table.to_csv()).map_err(|e| e.to_string())?;
            println!("wrote {}", path.display());
        }
        None => print!("{}", table.to_csv()),
    }
    Ok(ExitCode::SUCCESS)
}
