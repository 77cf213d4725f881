//! Simulation bench comparing the AIC-type selector against cross-validation.
//!
//! Regressors are drawn from `N(0, Σ)` with `Σ_ij = 0.5^{|i−j|}`, and the
//! true coefficients are `(β₁·1_k, β₂·1_k, 0_{p−2k})`. Each replication
//! selects λ on the default grid with every requested selector and records
//! the KL metric, false positives and false negatives at `λ̂`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::{mean_sd, select, SelectOptions, Selector, DEFAULT_FOLDS, DEFAULT_MC_SAMPLES};
use crate::error::{Error, Result};
use crate::family::{sigmoid, Dataset, Family};
use crate::fitter::{default_lambda_grid, FitConfig};
use crate::partinfo::{cholesky_jittered, standard_normal_matrix};
use crate::penalty::{PenaltyKind, DEFAULT_MCP_R, DEFAULT_SCAD_R};
use crate::rng::RngStream;

pub const DEFAULT_KL_COPIES: usize = 500;
pub const DEFAULT_GRID_LEN: usize = 50;
pub const DEFAULT_GRID_RATIO: f64 = 1e-3;
pub const DESIGN_CORRELATION: f64 = 0.5;

/// Fixed sub-stream indices under each replication's stream.
const STREAM_DATA: u64 = 0;
const STREAM_KL: u64 = 1;
const STREAM_SELECTOR_BASE: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub beta1: f64,
    pub beta2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Design {
    pub p: usize,
    pub k: usize,
    pub n: usize,
}

/// How the KL metric's evaluation copies are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KlDesign {
    /// New regressors for every copy.
    #[default]
    Fresh,
    /// Reuse the replication's regressors; only responses are redrawn.
    Fixed,
}

fn default_kl_copies() -> usize {
    DEFAULT_KL_COPIES
}
fn default_selectors() -> Vec<Selector> {
    vec![Selector::Aic, Selector::Cv]
}
fn default_folds() -> usize {
    DEFAULT_FOLDS
}
fn default_mc_samples() -> usize {
    DEFAULT_MC_SAMPLES
}
fn default_grid_len() -> usize {
    DEFAULT_GRID_LEN
}
fn default_grid_ratio() -> f64 {
    DEFAULT_GRID_RATIO
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub model: Family,
    pub penalty: PenaltyKind,
    pub case: Case,
    pub design: Design,
    pub reps: usize,
    #[serde(default = "default_kl_copies")]
    pub kl_copies: usize,
    #[serde(default = "default_selectors")]
    pub selectors: Vec<Selector>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default = "default_grid_len")]
    pub grid_len: usize,
    #[serde(default = "default_grid_ratio")]
    pub grid_ratio: f64,
    #[serde(default)]
    pub kl_design: KlDesign,
}

impl SimulationConfig {
    pub fn new(model: Family, penalty: PenaltyKind, case: Case, design: Design, reps: usize) -> Self {
        Self {
            model,
            penalty,
            case,
            design,
            reps,
            kl_copies: DEFAULT_KL_COPIES,
            selectors: default_selectors(),
            seed: 0,
            folds: DEFAULT_FOLDS,
            mc_samples: DEFAULT_MC_SAMPLES,
            grid_len: DEFAULT_GRID_LEN,
            grid_ratio: DEFAULT_GRID_RATIO,
            kl_design: KlDesign::Fresh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.design;
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if d.p == 0 || d.n == 0 {
            return bad("design.p and design.n must be positive".into());
        }
        if d.p < 2 * d.k {
            return bad(format!("design.p ({}) must be at least 2·design.k ({})", d.p, 2 * d.k));
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.kl_copies == 0 {
            return bad("kl_copies must be at least 1".into());
        }
        if self.selectors.is_empty() {
            return bad("selectors must not be empty".into());
        }
        if self.selectors.contains(&Selector::Cv) && (self.folds < 2 || self.folds > d.n) {
            return bad(format!("folds must lie in [2, n] = [2, {}]", d.n));
        }
        if self.selectors.contains(&Selector::Aic) && self.penalty.q_type() == 1.0 && self.mc_samples < 2 {
            return bad("mc_samples must be at least 2".into());
        }
        if self.grid_len == 0 || !(self.grid_ratio > 0.0 && self.grid_ratio < 1.0) {
            return bad("grid_len must be positive and grid_ratio must lie in (0,1)".into());
        }
        if !(self.case.beta1.is_finite() && self.case.beta2.is_finite()) {
            return bad("case coefficients must be finite".into());
        }
        self.penalty.validate()
    }

    /// `case1`/`case2` for the standard coefficient pairs, otherwise the values.
    pub fn case_label(&self) -> String {
        let pairs = standard_cases(self.model);
        match pairs.iter().position(|c| *c == self.case) {
            Some(i) => format!("case{}", i + 1),
            None => format!("b1={};b2={}", self.case.beta1, self.case.beta2),
        }
    }

    pub fn beta_star(&self) -> Result<DVector<f64>> {
        true_beta(self.design.p, self.design.k, self.case.beta1, self.case.beta2)
    }
}

pub fn penalty_label(kind: &PenaltyKind) -> String {
    match *kind {
        PenaltyKind::Bridge { q } => format!("bridge(q={q})"),
        PenaltyKind::Scad { r } => format!("scad(r={r})"),
        PenaltyKind::Mcp { r } => format!("mcp(r={r})"),
    }
}

/// The two coefficient pairs used for each model.
pub fn standard_cases(model: Family) -> [Case; 2] {
    match model {
        Family::GaussianLinear => [
            Case { beta1: 0.1, beta2: 0.5 },
            Case { beta1: 0.2, beta2: 1.0 },
        ],
        Family::Logistic => [
            Case { beta1: 0.5, beta2: 1.5 },
            Case { beta1: 1.0, beta2: 2.0 },
        ],
    }
}

/// The seven `(p, k, n)` designs.
pub const STANDARD_DESIGNS: [Design; 7] = [
    Design { p: 8, k: 2, n: 50 },
    Design { p: 8, k: 2, n: 100 },
    Design { p: 8, k: 2, n: 150 },
    Design { p: 8, k: 1, n: 100 },
    Design { p: 8, k: 3, n: 100 },
    Design { p: 12, k: 3, n: 100 },
    Design { p: 16, k: 4, n: 100 },
];

fn design_label(d: &Design) -> String {
    if d.p == 8 && d.k == 2 {
        format!("n{}", d.n)
    } else {
        format!("p{}k{}n{}", d.p, d.k, d.n)
    }
}

/// All named presets: `table{1,2,3}-{linear,logistic}-case{1,2}-<design>`
/// where table 1 is bridge (q = 0.2), 2 is SCAD and 3 is MCP, and the design
/// is `n50`, `n100`, `n150` for `p = 8, k = 2`, or `p{p}k{k}n{n}` otherwise.
pub fn presets() -> Vec<(String, SimulationConfig)> {
    let penalties = [
        (1, PenaltyKind::Bridge { q: 0.2 }),
        (2, PenaltyKind::Scad { r: DEFAULT_SCAD_R }),
        (3, PenaltyKind::Mcp { r: DEFAULT_MCP_R }),
    ];
    let mut out = Vec::new();
    for (table, penalty) in penalties {
        for model in [Family::GaussianLinear, Family::Logistic] {
            for (ci, case) in standard_cases(model).into_iter().enumerate() {
                for design in STANDARD_DESIGNS {
                    let name = format!(
                        "table{table}-{}-case{}-{}",
                        model.name(),
                        ci + 1,
                        design_label(&design)
                    );
                    out.push((name, SimulationConfig::new(model, penalty, case, design, 50)));
                }
            }
        }
    }
    out
}

pub fn preset(name: &str) -> Option<SimulationConfig> {
    presets().into_iter().find(|(n, _)| n == name).map(|(_, c)| c)
}

/// `Σ_ij = 0.5^{|i−j|}`.
pub fn design_covariance(p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| DESIGN_CORRELATION.powi(i.abs_diff(j) as i32))
}

/// `n` rows drawn i.i.d. from `N(0, Σ)`.
pub fn generate_design(p: usize, n: usize, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    let l = cholesky_jittered(&design_covariance(p))?;
    Ok(standard_normal_matrix(n, p, rng) * l.transpose())
}

/// `(β₁·1_k, β₂·1_k, 0_{p−2k})`.
pub fn true_beta(p: usize, k: usize, beta1: f64, beta2: f64) -> Result<DVector<f64>> {
    if p < 2 * k {
        return Err(Error::InvalidConfig(format!("p ({p}) must be at least 2k ({})", 2 * k)));
    }
    Ok(DVector::from_fn(p, |j, _| {
        if j < k {
            beta1
        } else if j < 2 * k {
            beta2
        } else {
            0.0
        }
    }))
}

pub fn generate_response(
    model: Family,
    x: &DMatrix<f64>,
    beta_star: &DVector<f64>,
    rng: &mut RngStream,
) -> DVector<f64> {
    let eta = x * beta_star;
    eta.map(|theta| draw_response(model, theta, rng))
}

fn draw_response(model: Family, theta: f64, rng: &mut RngStream) -> f64 {
    match model {
        Family::GaussianLinear => {
            let e: f64 = StandardNormal.sample(rng);
            theta + e
        }
        Family::Logistic => {
            let u: f64 = rng.random();
            if u < sigmoid(theta) {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Per-observation KL metric `−(1/(copies·n)) Σ_copies Σ_i g̃_i(β̂)` over
/// freshly generated evaluation data.
pub fn kl_metric(
    beta_hat: &DVector<f64>,
    config: &SimulationConfig,
    fixed_design: Option<&DMatrix<f64>>,
    rng: &mut RngStream,
) -> Result<f64> {
    let Design { p, n, .. } = config.design;
    if beta_hat.len() != p {
        return Err(Error::DimensionMismatch {
            context: "kl coefficients",
            expected: p,
            found: beta_hat.len(),
        });
    }
    if beta_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kl coefficients"));
    }
    let beta_star = config.beta_star()?;
    let model = config.model;
    let l = cholesky_jittered(&design_covariance(p))?;
    let mut total = 0.0;
    for _ in 0..config.kl_copies {
        let owned;
        let x = match (config.kl_design, fixed_design) {
            (KlDesign::Fixed, Some(x)) => x,
            _ => {
                owned = standard_normal_matrix(n, p, rng) * l.transpose();
                &owned
            }
        };
        let eta_star = x * &beta_star;
        let eta_hat = x * beta_hat;
        for (&ts, &th) in eta_star.iter().zip(eta_hat.iter()) {
            let y = draw_response(model, ts, rng);
            total += model.log_density(y, th);
        }
    }
    Ok(-total / (config.kl_copies as f64 * n as f64))
}

/// `(FP, FN)` of an estimate against the truth.
pub fn false_positives_negatives(beta_hat: &[f64], beta_star: &[f64]) -> (usize, usize) {
    beta_hat
        .iter()
        .zip(beta_star)
        .fold((0, 0), |(fp, fn_), (&b, &s)| {
            (
                fp + usize::from(b != 0.0 && s == 0.0),
                fn_ + usize::from(b == 0.0 && s != 0.0),
            )
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRow {
    pub selector: Selector,
    pub rep: usize,
    pub lambda_hat: f64,
    pub kl: f64,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub selector: Selector,
    pub kl_mean: f64,
    pub kl_sd: f64,
    pub fp_mean: f64,
    pub fn_mean: f64,
    pub lambda_hat: Vec<f64>,
    pub reps_ok: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<RepRow>,
    pub reports: Vec<MetricsReport>,
    /// Replications excluded because a fit failed, with the error message.
    pub failures: Vec<(usize, String)>,
}

/// One replication: returns a row per selector, in `config.selectors` order.
pub fn run_replication(config: &SimulationConfig, rep: usize) -> Result<Vec<RepRow>> {
    let stream = RngStream::new(config.seed).split(rep as u64);
    let model = config.model;
    let Design { p, n, .. } = config.design;
    let beta_star = config.beta_star()?;

    let mut data_rng = stream.split(STREAM_DATA);
    let x = generate_design(p, n, &mut data_rng)?;
    let y = generate_response(model, &x, &beta_star, &mut data_rng);
    let data = Dataset::new(model, x, y)?;

    let grid = default_lambda_grid(model, &data, config.penalty, config.grid_len, config.grid_ratio);
    let fit_config = FitConfig::default();
    let options = SelectOptions {
        mc_samples: config.mc_samples,
        folds: config.folds,
    };
    let mut rows = Vec::with_capacity(config.selectors.len());
    for &selector in &config.selectors {
        let sel_rng = stream.split(STREAM_SELECTOR_BASE + selector as u64);
        let selection = select(selector, model, &data, config.penalty, &grid, &fit_config, &options, &sel_rng)?;
        let fit = selection.chosen_fit();
        // same evaluation data for every selector
        let mut kl_rng = stream.split(STREAM_KL);
        let kl = kl_metric(&fit.beta(), config, Some(data.x()), &mut kl_rng)?;
        let (fp, fn_) = false_positives_negatives(&fit.beta_hat, beta_star.as_slice());
        rows.push(RepRow {
            selector,
            rep,
            lambda_hat: selection.lambda_hat(),
            kl,
            fp,
            fn_,
        });
    }
    Ok(rows)
}

/// Runs every replication (in parallel on the current rayon pool) and
/// aggregates per selector. Output depends only on `config`.
pub fn run_experiment(config: &SimulationConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let results: Vec<Result<Vec<RepRow>>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| run_replication(config, rep))
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (rep, r) in results.into_iter().enumerate() {
        match r {
            Ok(rs) => rows.extend(rs),
            Err(e) => failures.push((rep, e.to_string())),
        }
    }
    if failures.len() * 10 > config.reps {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total: config.reps,
        });
    }
    let reports = config
        .selectors
        .iter()
        .map(|&selector| {
            let mine: Vec<&RepRow> = rows.iter().filter(|r| r.selector == selector).collect();
            let kls: Vec<f64> = mine.iter().map(|r| r.kl).collect();
            let (kl_mean, kl_sd) = mean_sd(&kls);
            let count = mine.len() as f64;
            MetricsReport {
                selector,
                kl_mean,
                kl_sd,
                fp_mean: mine.iter().map(|r| r.fp as f64).sum::<f64>() / count,
                fn_mean: mine.iter().map(|r| r.fn_ as f64).sum::<f64>() / count,
                lambda_hat: mine.iter().map(|r| r.lambda_hat).collect(),
                reps_ok: mine.len(),
                failures: failures.len(),
            }
        })
        .collect();
    Ok(ExperimentOutput {
        rows,
        reports,
        failures,
    })
}
