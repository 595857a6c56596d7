//! Experiment harness: parameter sweeps, figure-reproduction recipes, CSV
//! emission and the sim-vs-analytic comparison tool.
//!
//! Everything here is deterministic given the spec seed. Sweep points run on
//! a worker pool (size from the `NCBCAST_WORKERS` environment variable when
//! set) and results are collected in grid order, so output files are
//! byte-identical across runs and thread counts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::analytic::{self, ChainParams, DelayDenominator};
use crate::coding::CodingScheme;
use crate::ratectrl::RateControlScheme;
use crate::rng::child_seed;
use crate::sim::{self, DeliveryMode, Metrics, SimConfig};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("simulation error: {0}")]
    Sim(#[from] sim::SimError),
    #[error("analysis error: {0}")]
    Analytic(#[from] analytic::AnalyticError),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed CSV {path}: {reason}")]
    MalformedCsv { path: String, reason: String },
    #[error("comparison key mismatch: {0}")]
    KeyMismatch(String),
    #[error("unknown figure '{0}'")]
    UnknownFigure(String),
    #[error("bad config line {line}: {reason}")]
    BadConfig { line: usize, reason: String },
    #[error("empty parameter grid '{0}'")]
    EmptyGrid(&'static str),
}

/// A named CSV table: header plus string-formatted rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn write_to(&self, dir: &Path) -> Result<PathBuf, ExperimentError> {
        let path = dir.join(format!("{}.csv", self.name));
        fs::create_dir_all(dir).map_err(|source| ExperimentError::Io { path: dir.into(), source })?;
        fs::write(&path, self.to_csv())
            .map_err(|source| ExperimentError::Io { path: path.clone(), source })?;
        Ok(path)
    }

    pub fn from_csv(name: &str, text: &str) -> Result<Self, ExperimentError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| ExperimentError::MalformedCsv {
            path: name.to_string(),
            reason: "missing header".into(),
        })?;
        let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
            if cells.len() != columns.len() {
                return Err(ExperimentError::MalformedCsv {
                    path: name.to_string(),
                    reason: format!("row {} has {} cells, expected {}", i + 2, cells.len(), columns.len()),
                });
            }
            rows.push(cells);
        }
        Ok(Table { name: name.to_string(), columns, rows })
    }

    pub fn read(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path)
            .map_err(|source| ExperimentError::Io { path: path.into(), source })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "table".into());
        Table::from_csv(&name, &text)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Format a float for CSV. `Display` on f64 prints the shortest decimal that
/// parses back to the identical bits, so emit/parse round-trips exactly and
/// no locale formatting is involved.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// The standard figure recipes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FigureId {
    Fig2,
    Fig3,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
    Fig9,
    Fig10,
    Fig11,
}

impl FigureId {
    pub const ALL: [FigureId; 9] = [
        FigureId::Fig2,
        FigureId::Fig3,
        FigureId::Fig5,
        FigureId::Fig6,
        FigureId::Fig7,
        FigureId::Fig8,
        FigureId::Fig9,
        FigureId::Fig10,
        FigureId::Fig11,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
            FigureId::Fig5 => "fig5",
            FigureId::Fig6 => "fig6",
            FigureId::Fig7 => "fig7",
            FigureId::Fig8 => "fig8",
            FigureId::Fig9 => "fig9",
            FigureId::Fig10 => "fig10",
            FigureId::Fig11 => "fig11",
        }
    }

    fn default_horizon(self) -> u64 {
        match self {
            FigureId::Fig2 => 0, // analytic only
            FigureId::Fig11 => 100_000,
            FigureId::Fig10 => 500_000,
            _ => 1_000_000,
        }
    }
}

impl FromStr for FigureId {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FigureId::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| ExperimentError::UnknownFigure(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReproduceOptions {
    pub seed: u64,
    pub horizon: Option<u64>,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        ReproduceOptions { seed: 1, horizon: None }
    }
}

/// Produce the tables behind one figure.
pub fn reproduce(fig: FigureId, opts: &ReproduceOptions) -> Result<Vec<Table>, ExperimentError> {
    let horizon = opts.horizon.unwrap_or(fig.default_horizon());
    let seed = opts.seed;
    match fig {
        FigureId::Fig2 => fig2(),
        FigureId::Fig3 => fig3(horizon, seed),
        FigureId::Fig5 => fig5(horizon, seed),
        FigureId::Fig6 => fig6(horizon, seed),
        FigureId::Fig7 => fig7(horizon, seed),
        FigureId::Fig8 => fig8(horizon, seed),
        FigureId::Fig9 => fig9(horizon, seed),
        FigureId::Fig10 => fig10(horizon, seed),
        FigureId::Fig11 => fig11(horizon, seed),
    }
}

/// Install a rayon pool honoring NCBCAST_WORKERS, then run the closure in it.
pub fn with_worker_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let workers = std::env::var("NCBCAST_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0);
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("worker pool")
            .install(f),
        None => f(),
    }
}

fn run_all(configs: Vec<SimConfig>) -> Result<Vec<Metrics>, ExperimentError> {
    with_worker_pool(|| {
        configs
            .par_iter()
            .map(|cfg| sim::run(cfg).map_err(ExperimentError::from))
            .collect()
    })
}

// Cumulative delivery-cycle length probabilities, a pure formula table.
fn fig2() -> Result<Vec<Table>, ExperimentError> {
    let mut t = Table::new("fig2", &["lambda", "mu", "t", "cumulative_probability"]);
    for (lambda, mu) in [(0.3, 0.8), (0.5, 0.8), (0.7, 0.8), (0.6, 0.7)] {
        let params = ChainParams::new(lambda, mu)?;
        let probs = analytic::cycle_probabilities(&params, 200);
        let mut acc = 0.0;
        for cycle in 1..=200usize {
            acc += probs[cycle];
            t.push(vec![
                fmt_f64(lambda),
                fmt_f64(mu),
                cycle.to_string(),
                fmt_f64(acc),
            ]);
        }
    }
    Ok(vec![t])
}

const LAMBDA_GRID: [f64; 6] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75];

// Zero-state delivery delay: simulation against the truncated estimate.
fn fig3(horizon: u64, seed: u64) -> Result<Vec<Table>, ExperimentError> {
    let mu = 0.8;
    let configs: Vec<SimConfig> = LAMBDA_GRID
        .iter()
        .enumerate()
        .map(|(g, &lambda)| {
            SimConfig::new(
                1,
                mu,
                CodingScheme::SchemeB,
                RateControlScheme::Baseline { lambda },
            )
            .horizon(horizon)
            .seed(child_seed(seed, g as u64, 0))
            .delivery_mode(DeliveryMode::ZeroStateOnly)
        })
        .collect();
    let metrics = run_all(configs)?;
    let mut t = Table::new(
        "fig3",
        &["lambda", "mu", "simulated_delay", "estimate_as_printed", "estimate_consistent"],
    );
    for (&lambda, m) in LAMBDA_GRID.iter().zip(&metrics) {
        let params = ChainParams::new(lambda, mu)?;
        t.push(vec![
            fmt_f64(lambda),
            fmt_f64(mu),
            fmt_f64(m.mean_delay().unwrap_or(f64::NAN)),
            fmt_f64(analytic::zero_state_delay_estimate(&params, 1000, DelayDenominator::AsPrinted)?),
            fmt_f64(analytic::zero_state_delay_estimate(&params, 1000, DelayDenominator::SelfConsistent)?),
        ]);
    }
    Ok(vec![t])
}

// Leader-state occupancy against the independent-receiver model.
fn fig5(horizon: u64, seed: u64) -> Result<Vec<Table>, ExperimentError> {
    let (lambda, mu, receivers) = (0.7, 0.8, 4);
    let cfg = SimConfig::new(
        receivers,
        mu,
        CodingScheme::SchemeB,
        RateControlScheme::Baseline { lambda },
    )
    .horizon(horizon)
    .seed(child_seed(seed, 0, 0));
    let m = sim::run(&cfg)?;
    let params = ChainParams::new(lambda, mu)?;
    let mut t = Table::new("fig5", &["k", "independent_model", "simulated"]);
    for k in 0..=12u32 {
        t.push(vec![
            k.to_string(),
            fmt_f64(analytic::leader_state_model(&params, receivers as u32, k)?),
            fmt_f64(m.leader_fraction(k as usize)),
        ]);
    }
    Ok(vec![t])
}

// Zero and leader state delivery delays for growing receiver populations.
fn fig6(horizon: u64, seed: u64) -> Result<Vec<Table>, ExperimentError> {
    let mu = 0.8;
    let receiver_counts = [1usize, 4, 10];
    let mut configs = Vec::new();
    for (i, &r) in receiver_counts.iter().enumerate() {
        for (g, &lambda) in LAMBDA_GRID.iter().enumerate() {
            let base = SimConfig::new(
                r,
                mu,
                CodingScheme::SchemeB,
                RateControlScheme::Baseline { lambda },
            )
            .horizon(horizon)
            .seed(child_seed(seed, (i * LAMBDA_GRID.len() + g) as u64, 0));
            configs.push(base.clone().delivery_mode(DeliveryMode::ZeroAndLeaderOnly));
            configs.push(base.delivery_mode(DeliveryMode::ZeroStateOnly));
        }
    }
    let metrics = run_all(configs)?;
    let mut t = Table::new("fig6", &["receivers", "lambda", "leader_delay", "zero_delay"]);
    let mut it = metrics.iter();
    for &r in &receiver_counts {
        for &lambda in &LAMBDA_GRID {
            let leader = it.next().unwrap().mean_delay().unwrap_or(f64::NAN);
            let zero = it.next().unwrap().mean_delay().unwrap_or(f64::NAN);
            t.push(vec![r.to_string(), fmt_f64(lambda), fmt_f64(leader), fmt_f64(zero)]);
        }
    }
    Ok(vec![t])
}

// Coefficient-based delivery probability per effective Markov state.
fn fig7(horizon: u64, seed: u64) -> Result<Vec<Table>, ExperimentError> {
    let (lambda, mu) = (0.7, 0.8);
    // (scheme, receivers, field exponent); field order M = R for the
    // multi-receiver runs, plus single-receiver RLNC references at M = 2, 4.
    let cases: Vec<(CodingScheme, usize, u32)> = vec![
        (CodingScheme::SchemeA, 4, 2),
        (CodingScheme::SchemeA, 8, 3),
        (CodingScheme::SchemeB, 4, 2),
        (CodingScheme::SchemeB, 8, 3),
        (CodingScheme::Rlnc, 4, 2),
        (CodingScheme::Rlnc, 8, 3),
        (CodingScheme::Rlnc, 1, 1),
        (CodingScheme::Rlnc, 1, 2),
    ];
    let configs: Vec<SimConfig> = cases
        .iter()
        .enumerate()
        .map(|(g, &(scheme, r, m))| {
            SimConfig::new(r, mu, scheme, RateControlScheme::Baseline { lambda })
                .horizon(horizon)
                .seed(child_seed(seed, g as u64, 0))
                .field_exp(m)
        })
        .collect();
    let metrics = run_all(configs)?;
    let mut t = Table::new(
        "fig7",
        &["scheme", "receivers", "field_order", "s_star", "delivery_probability", "deliverable_slots"],
    );
    for (&(scheme, r, m), met) in cases.iter().zip(&metrics) {
        for (s, p) in met.coefficient_delivery_profile() {
            t.push(vec![
                scheme.label().to_string(),
                r.to_string(),
                (1u32 << m).to_string(),
                s.to_string(),
                fmt_f64(p),
                met.deliverable_slots_by_state[s].to_string(),
            ]);
        }
    }
    Ok(vec![t])
}

// Average delivery delay of the three coding schemes, with the zero-state
// and zero+leader masks for comparison.
fn fig8(horizon: u64, seed: u64) -> Result<Vec<Table>, ExperimentError> {
    let (mu, receivers) = (0.8, 4usize);
    let mut labels = Vec::new();
    let mut configs = Vec::new();
    for (g, &lambda) in LAMBDA_GRID.iter().enumerate() {
        let seed = child_seed(seed, g as u64, 0);
        let base = |scheme| {
            SimConfig::new(receivers, mu, scheme, RateControlScheme::Baseline { lambda })
                .horizon(horizon)
                .seed(seed)
        };
        for scheme in [CodingScheme::SchemeA, CodingScheme::SchemeB, CodingScheme::Rlnc] {
            labels.push((scheme.label().to_string(), lambda));
            configs.push(base(scheme));
        }
        labels.push(("zero_leader".to_string(), lambda));
        configs.push(base(CodingScheme::SchemeB).delivery_mode(DeliveryMode::ZeroAndLeaderOnly));
        labels.push(("zero_state".to_string(), lambda));
        configs.push(base(CodingScheme::SchemeB).delivery_mode(DeliveryMode::ZeroStateOnly));
    }
    let metrics = run_all(configs)?;
    let mut t = Table::new("fig8", &["curve", "lambda", "delay"]);
    for ((label, lambda), m) in labels.iter().zip(&metrics) {
        t.push(vec![
            label.clone(),
            fmt_f64(*lambda),
            fmt_f64(m.mean_delay().unwrap_or(f64::NAN)),
        ]);
    }
    Ok(vec![t])
}

// Distribution of the number of packets coded per transmission (scheme B).
fn fig9(horizon: u64, seed: u64) -> Result<Vec<Table>, ExperimentError> {
    let (lambda, mu) = (0.7, 0.8);
    let configs: Vec<SimConfig> = [4usize, 8]
        .iter()
        .enumerate()
        .map(|(g, &r)| {
            SimConfig::new(r, mu, CodingScheme::SchemeB, RateControlScheme::Baseline { lambda })
                .horizon(horizon)
                .seed(child_seed(seed, g as u64, 0))
        })
        .collect();
    let metrics = run_all(configs)?;
    let mut t = Table::new("fig9", &["receivers", "coded_packets", "fraction"]);
    for (&r, m) in [4usize, 8].iter().zip(&metrics) {
        let total: u64 = m.coded_count_hist.iter().sum();
        for (n, &count) in m.coded_count_hist.iter().enumerate() {
            if count > 0 {
                t.push(vec![
                    r.to_string(),
                    n.to_string(),
                    fmt_f64(count as f64 / total as f64),
                ]);
            }
        }
    }
    Ok(vec![t])
}

pub const FIG10_LAMBDAS: [f64; 6] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75];
pub const FIG10_THRESHOLDS: [u64; 9] = [2, 3, 5, 8, 12, 20, 35, 60, 100];
pub const FIG10_WEIGHTS: [f64; 8] = [2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0];

/// The throughput-delay sweep behind the rate-control comparison: scheme B
/// under baseline, delay-threshold and dynamic control.
pub fn fig10_sweep(
    receivers: usize,
    mu: f64,
    horizon: u64,
    seed: u64,
) -> Result<Table, ExperimentError> {
    let mut rows_meta: Vec<(String, String)> = Vec::new();
    let mut configs = Vec::new();
    // One child seed per receiver count, shared across every grid point so
    // the three rate-control curves see common channel randomness.
    let run_seed = child_seed(seed, receivers as u64, 0);
    let mut push = |rate: RateControlScheme, label: String, param: String| {
        configs.push(
            SimConfig::new(receivers, mu, CodingScheme::SchemeB, rate)
                .horizon(horizon)
                .seed(run_seed),
        );
        rows_meta.push((label, param));
    };
    for &lambda in &FIG10_LAMBDAS {
        push(RateControlScheme::Baseline { lambda }, "baseline".into(), fmt_f64(lambda));
    }
    for &t_d in &FIG10_THRESHOLDS {
        push(RateControlScheme::DelayThreshold { t_d }, "threshold".into(), t_d.to_string());
    }
    for &f in &FIG10_WEIGHTS {
        push(
            RateControlScheme::Dynamic { f, epsilon: 1e-4 },
            "dynamic".into(),
            fmt_f64(f),
        );
    }
    let metrics = run_all(configs)?;
    let mut t = Table::new(
        "fig10",
        &["scheme", "param", "receivers", "throughput", "delay"],
    );
    for ((label, param), m) in rows_meta.iter().zip(&metrics) {
        t.push(vec![
            label.clone(),
            param.clone(),
            receivers.to_string(),
            fmt_f64(m.throughput()),
            fmt_f64(m.mean_delay().unwrap_or(f64::NAN)),
        ]);
    }
    Ok(t)
}

fn fig10(horizon: u64, seed: u64) -> Result<Vec<Table>, ExperimentError> {
    let mut four = fig10_sweep(4, 0.8, horizon, seed)?;
    let eight = fig10_sweep(8, 0.8, horizon, seed)?;
    four.rows.extend(eight.rows);
    Ok(vec![four])
}

// lambda_est trajectory of the dynamic scheme for several weighting factors.
fn fig11(horizon: u64, seed: u64) -> Result<Vec<Table>, ExperimentError> {
    let (receivers, mu) = (4usize, 0.8);
    let weights = [2.0, 10.0, 100.0, 500.0];
    let configs: Vec<SimConfig> = weights
        .iter()
        .enumerate()
        .map(|(g, &f)| {
            SimConfig::new(
                receivers,
                mu,
                CodingScheme::SchemeB,
                RateControlScheme::Dynamic { f, epsilon: 1e-4 },
            )
            .horizon(horizon)
            .seed(child_seed(seed, g as u64, 0))
        })
        .collect();
    let metrics = run_all(configs)?;
    let mut t = Table::new("fig11", &["f", "slot", "lambda_est"]);
    for (&f, m) in weights.iter().zip(&metrics) {
        for &(slot, est) in &m.lambda_series {
            t.push(vec![fmt_f64(f), slot.to_string(), fmt_f64(est)]);
        }
    }
    Ok(vec![t])
}

/// A custom sweep: the cartesian product of the parameter grids, `reps`
/// repetitions each, one row per run.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub coding: CodingScheme,
    pub rate_kind: RateKind,
    pub lambdas: Vec<f64>,
    pub thresholds: Vec<u64>,
    pub weights: Vec<f64>,
    pub receiver_counts: Vec<usize>,
    pub mus: Vec<f64>,
    pub field_exp: Option<u32>,
    pub horizon: u64,
    pub seed: u64,
    pub reps: u64,
    pub delivery_mode: DeliveryMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    Baseline,
    Threshold,
    Dynamic,
}

impl RateKind {
    pub fn label(self) -> &'static str {
        match self {
            RateKind::Baseline => "baseline",
            RateKind::Threshold => "threshold",
            RateKind::Dynamic => "dynamic",
        }
    }
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            coding: CodingScheme::SchemeB,
            rate_kind: RateKind::Baseline,
            lambdas: vec![0.7],
            thresholds: vec![10],
            weights: vec![100.0],
            receiver_counts: vec![4],
            mus: vec![0.8],
            field_exp: None,
            horizon: 100_000,
            seed: 1,
            reps: 1,
            delivery_mode: DeliveryMode::Full,
        }
    }
}

impl SweepSpec {
    /// Per-scheme rate parameters actually swept.
    fn rate_params(&self) -> Result<Vec<(RateControlScheme, String)>, ExperimentError> {
        let out: Vec<(RateControlScheme, String)> = match self.rate_kind {
            RateKind::Baseline => self
                .lambdas
                .iter()
                .map(|&l| (RateControlScheme::Baseline { lambda: l }, fmt_f64(l)))
                .collect(),
            RateKind::Threshold => self
                .thresholds
                .iter()
                .map(|&t| (RateControlScheme::DelayThreshold { t_d: t }, t.to_string()))
                .collect(),
            RateKind::Dynamic => self
                .weights
                .iter()
                .map(|&f| (RateControlScheme::Dynamic { f, epsilon: 1e-4 }, fmt_f64(f)))
                .collect(),
        };
        if out.is_empty() {
            return Err(ExperimentError::EmptyGrid(match self.rate_kind {
                RateKind::Baseline => "lambda",
                RateKind::Threshold => "td",
                RateKind::Dynamic => "f",
            }));
        }
        Ok(out)
    }

    pub fn expand(&self) -> Result<Vec<(SimConfig, Vec<String>)>, ExperimentError> {
        if self.receiver_counts.is_empty() {
            return Err(ExperimentError::EmptyGrid("receivers"));
        }
        if self.mus.is_empty() {
            return Err(ExperimentError::EmptyGrid("mu"));
        }
        let rates = self.rate_params()?;
        let mut out = Vec::new();
        let mut grid_index = 0u64;
        for &r in &self.receiver_counts {
            for &mu in &self.mus {
                for (rate, param) in &rates {
                    for rep in 0..self.reps {
                        let mut cfg = SimConfig::new(r, mu, self.coding, *rate)
                            .horizon(self.horizon)
                            .seed(child_seed(self.seed, grid_index, rep))
                            .delivery_mode(self.delivery_mode);
                        cfg.field_exp = self.field_exp;
                        let meta = vec![
                            self.coding.label().to_string(),
                            self.rate_kind.label().to_string(),
                            param.clone(),
                            r.to_string(),
                            fmt_f64(mu),
                            rep.to_string(),
                        ];
                        out.push((cfg, meta));
                    }
                    grid_index += 1;
                }
            }
        }
        Ok(out)
    }
}

pub const SWEEP_COLUMNS: [&str; 12] = [
    "coding",
    "rate",
    "param",
    "receivers",
    "mu",
    "rep",
    "throughput",
    "delay",
    "realized_rate",
    "uncoded_fraction",
    "adds",
    "delivered_pairs",
];

pub fn run_sweep(spec: &SweepSpec) -> Result<Table, ExperimentError> {
    let points = spec.expand()?;
    let metrics = run_all(points.iter().map(|(cfg, _)| cfg.clone()).collect())?;
    let mut t = Table::new("sweep", &SWEEP_COLUMNS);
    for ((_, meta), m) in points.iter().zip(&metrics) {
        let mut row = meta.clone();
        row.push(fmt_f64(m.throughput()));
        row.push(fmt_f64(m.mean_delay().unwrap_or(f64::NAN)));
        row.push(fmt_f64(m.realized_addition_rate()));
        row.push(fmt_f64(m.uncoded_fraction().unwrap_or(f64::NAN)));
        row.push(m.adds.to_string());
        row.push(m.delivered_pairs.to_string());
        t.push(row);
    }
    Ok(t)
}

/// Flat key=value config files; repeated keys build grids. `#` starts a
/// comment. Keys: coding, rate, lambda, td, f, receivers, mu, field_exp,
/// horizon, seed, reps, delivery_mode.
pub fn parse_sweep_config(text: &str) -> Result<SweepSpec, ExperimentError> {
    let mut spec = SweepSpec::default();
    let mut lambdas = Vec::new();
    let mut thresholds = Vec::new();
    let mut weights = Vec::new();
    let mut receivers = Vec::new();
    let mut mus = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |reason: &str| ExperimentError::BadConfig {
            line: idx + 1,
            reason: reason.to_string(),
        };
        let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key=value"))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "coding" => {
                spec.coding = parse_coding(value).ok_or_else(|| bad("coding must be a|b|rlnc"))?
            }
            "rate" => {
                spec.rate_kind =
                    parse_rate_kind(value).ok_or_else(|| bad("rate must be baseline|threshold|dynamic"))?
            }
            "lambda" => lambdas.push(value.parse().map_err(|_| bad("bad lambda"))?),
            "td" => thresholds.push(value.parse().map_err(|_| bad("bad td"))?),
            "f" => weights.push(value.parse().map_err(|_| bad("bad f"))?),
            "receivers" => receivers.push(value.parse().map_err(|_| bad("bad receivers"))?),
            "mu" => mus.push(value.parse().map_err(|_| bad("bad mu"))?),
            "field_exp" => spec.field_exp = Some(value.parse().map_err(|_| bad("bad field_exp"))?),
            "horizon" => spec.horizon = value.parse().map_err(|_| bad("bad horizon"))?,
            "seed" => spec.seed = value.parse().map_err(|_| bad("bad seed"))?,
            "reps" => spec.reps = value.parse().map_err(|_| bad("bad reps"))?,
            "delivery_mode" => {
                spec.delivery_mode =
                    parse_delivery_mode(value).ok_or_else(|| bad("delivery_mode must be full|zero|zero-leader"))?
            }
            other => return Err(bad(&format!("unknown key '{other}'"))),
        }
    }
    if !lambdas.is_empty() {
        spec.lambdas = lambdas;
    }
    if !thresholds.is_empty() {
        spec.thresholds = thresholds;
    }
    if !weights.is_empty() {
        spec.weights = weights;
    }
    if !receivers.is_empty() {
        spec.receiver_counts = receivers;
    }
    if !mus.is_empty() {
        spec.mus = mus;
    }
    Ok(spec)
}

pub fn parse_coding(s: &str) -> Option<CodingScheme> {
    match s {
        "a" | "scheme_a" => Some(CodingScheme::SchemeA),
        "b" | "scheme_b" => Some(CodingScheme::SchemeB),
        "rlnc" => Some(CodingScheme::Rlnc),
        _ => None,
    }
}

pub fn parse_rate_kind(s: &str) -> Option<RateKind> {
    match s {
        "baseline" => Some(RateKind::Baseline),
        "threshold" => Some(RateKind::Threshold),
        "dynamic" => Some(RateKind::Dynamic),
        _ => None,
    }
}

pub fn parse_delivery_mode(s: &str) -> Option<DeliveryMode> {
    match s {
        "full" => Some(DeliveryMode::Full),
        "zero" => Some(DeliveryMode::ZeroStateOnly),
        "zero-leader" => Some(DeliveryMode::ZeroAndLeaderOnly),
        _ => None,
    }
}

#[derive(Debug, Clone)]
pub struct ComparePoint {
    pub key: String,
    pub left: f64,
    pub right: f64,
    pub relative_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub tolerance: f64,
    pub value_column: String,
    pub points: Vec<ComparePoint>,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        self.points.iter().all(|p| p.pass)
    }
}

/// Compare one numeric column of two tables row by row. Rows are matched by
/// the remaining shared columns; missing or duplicated keys are errors.
pub fn compare_tables(
    left: &Table,
    right: &Table,
    tolerance: f64,
    value_column: Option<&str>,
) -> Result<CompareReport, ExperimentError> {
    let value_col = match value_column {
        Some(c) => c.to_string(),
        None => left
            .columns
            .last()
            .cloned()
            .ok_or_else(|| ExperimentError::KeyMismatch("left table has no columns".into()))?,
    };
    let li = left
        .column_index(&value_col)
        .ok_or_else(|| ExperimentError::KeyMismatch(format!("left table lacks column {value_col}")))?;
    let ri = right
        .column_index(&value_col)
        .ok_or_else(|| ExperimentError::KeyMismatch(format!("right table lacks column {value_col}")))?;

    let key_cols: Vec<String> = left
        .columns
        .iter()
        .filter(|c| **c != value_col && right.column_index(c).is_some())
        .cloned()
        .collect();
    if key_cols.is_empty() {
        return Err(ExperimentError::KeyMismatch("no shared key columns".into()));
    }
    let key_of = |table: &Table, row: &[String]| -> String {
        key_cols
            .iter()
            .map(|c| row[table.column_index(c).unwrap()].clone())
            .collect::<Vec<_>>()
            .join("|")
    };

    let mut right_map = std::collections::BTreeMap::new();
    for row in &right.rows {
        let key = key_of(right, row);
        if right_map.insert(key.clone(), row[ri].clone()).is_some() {
            return Err(ExperimentError::KeyMismatch(format!("duplicate key {key} on the right")));
        }
    }

    let mut points = Vec::new();
    for row in &left.rows {
        let key = key_of(left, row);
        let rval = right_map
            .remove(&key)
            .ok_or_else(|| ExperimentError::KeyMismatch(format!("key {key} missing on the right")))?;
        let a: f64 = row[li]
            .parse()
            .map_err(|_| ExperimentError::KeyMismatch(format!("non-numeric value at {key}")))?;
        let b: f64 = rval
            .parse()
            .map_err(|_| ExperimentError::KeyMismatch(format!("non-numeric value at {key}")))?;
        let relative_error = if b == 0.0 {
            if a == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            ((a - b) / b).abs()
        };
        points.push(ComparePoint { key, left: a, right: b, relative_error, pass: relative_error <= tolerance });
    }
    if let Some((key, _)) = right_map.into_iter().next() {
        return Err(ExperimentError::KeyMismatch(format!("key {key} missing on the left")));
    }
    Ok(CompareReport { tolerance, value_column: value_col, points })
}

/// Interpolate the delay of a throughput-delay curve at a target throughput.
/// Points are sorted by throughput; returns None outside the covered range.
pub fn interpolate_delay(curve: &[(f64, f64)], throughput: f64) -> Option<f64> {
    if curve.is_empty() {
        return None;
    }
    let mut sorted: Vec<(f64, f64)> = curve.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if throughput < sorted[0].0 || throughput > sorted[sorted.len() - 1].0 {
        return None;
    }
    for pair in sorted.windows(2) {
        let (x0, y0) = pair[0];
        let (x1, y1) = pair[1];
        if (x0..=x1).contains(&throughput) {
            if x1 == x0 {
                return Some(y0.max(y1));
            }
            let w = (throughput - x0) / (x1 - x0);
            return Some(y0 + w * (y1 - y0));
        }
    }
    None
}

/// Write one trace CSV row per slot of a single simulation run.
pub fn write_trace(cfg: &SimConfig, path: &Path) -> Result<Metrics, ExperimentError> {
    let mut out = String::from(
        "slot,added,stop_mode,coded_packets,effective_list_size,vector,received,deliveries\n",
    );
    let metrics = sim::run_with(cfg, |trace| {
        let vector = trace
            .vector
            .as_ref()
            .map(|v| {
                v.support()
                    .map(|(i, c)| format!("{i}:{}", c.value()))
                    .collect::<Vec<_>>()
                    .join(";")
            })
            .unwrap_or_default();
        let received: String = trace
            .received
            .iter()
            .map(|&b| if b { '1' } else { '0' })
            .collect();
        let deliveries = trace
            .deliveries
            .iter()
            .enumerate()
            .filter_map(|(r, d)| {
                d.map(|ev| format!("{r}:{}-{}:{}", ev.first, ev.last, ev.tag.label()))
            })
            .collect::<Vec<_>>()
            .join(";");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            trace.slot,
            u8::from(trace.added),
            u8::from(trace.stop_mode),
            trace.coded_packet_count,
            trace.effective_list_size,
            vector,
            received,
            deliveries
        );
    })?;
    fs::write(path, out).map_err(|source| ExperimentError::Io { path: path.into(), source })?;
    Ok(metrics)
}
