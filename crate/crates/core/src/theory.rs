//! Quantities of the oracle inequality and Monte Carlo checks of the
//! concentration bounds behind it.
//!
//! The bounds are stated for dictionaries whose atoms have squared norm `n`,
//! i.e. `X^T X / n` has a unit diagonal. Our dictionaries have unit-norm atoms,
//! so the diagnostics work in rescaled coordinates: atoms are multiplied by
//! `sqrt(n)` and coefficients divided by it. A solver penalty `lambda` then
//! corresponds to `sqrt(n) lambda` in the bounds.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{apply_design, mixed_norm, GroupedDesign, ThetaEstimate};
use crate::solver::{fit_group_lasso, FitConfig, FitResult};
use crate::synthetic::{generate_replication, ScenarioConfig, ScenarioDataset};

/// The three penalty levels of the oracle inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lambda0 {
    pub alpha: f64,
    pub beta: f64,
    /// `max(alpha, beta / sqrt(K))`.
    pub lambda0: f64,
}

/// Outcome of one diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub check: String,
    pub x: f64,
    pub sigma: f64,
    pub lambda0_alpha: f64,
    pub lambda0_beta: f64,
    pub lambda0: f64,
    /// `4 lambda^2 G* |S0| / phi^2`; only set by the oracle check.
    pub oracle_bound: Option<f64>,
    /// Left-hand side of the oracle inequality; only set by the oracle check.
    pub oracle_lhs: Option<f64>,
    pub trials: usize,
    pub empirical_probability: f64,
    pub nominal_probability: f64,
    /// Mean of `K v_1^2 / sigma^2` and its standard error (second proposition).
    pub chi_square_mean: Option<f64>,
    pub chi_square_se: Option<f64>,
}

impl TheoryReport {
    fn new(check: &str, x: f64, sigma: f64, l0: Lambda0, nominal: f64) -> Self {
        Self {
            check: check.to_string(),
            x,
            sigma,
            lambda0_alpha: l0.alpha,
            lambda0_beta: l0.beta,
            lambda0: l0.lambda0,
            oracle_bound: None,
            oracle_lhs: None,
            trials: 0,
            empirical_probability: 0.0,
            nominal_probability: nominal,
            chi_square_mean: None,
            chi_square_se: None,
        }
    }

    /// `3 sqrt(p (1 - p) / trials)` at the nominal probability, clamped to
    /// `[0, 1]` since a negative bound is vacuous.
    pub fn monte_carlo_slack(&self) -> f64 {
        let p = self.nominal_probability.clamp(0.0, 1.0);
        3.0 * (p * (1.0 - p) / self.trials.max(1) as f64).sqrt()
    }

    /// Whether the empirical frequency reaches the nominal bound up to
    /// Monte Carlo slack.
    pub fn meets_nominal(&self) -> bool {
        self.empirical_probability >= self.nominal_probability - self.monte_carlo_slack()
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameters(format!("{name} must be positive, got {v}")))
    }
}

pub fn lambda0(x: f64, sigma: f64, n: usize, k: usize, d1: usize, d2: usize) -> Result<Lambda0> {
    positive("x", x)?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameters(format!(
            "sigma must be nonnegative, got {sigma}"
        )));
    }
    for (name, v) in [("n", n), ("K", k), ("d1", d1), ("d2", d2)] {
        if v == 0 {
            return Err(Error::InvalidParameters(format!("{name} must be positive")));
        }
    }
    let kf = k as f64;
    let scale = 2.0 * sigma / ((n * k) as f64).sqrt();
    let alpha = scale * (x * x + 2.0 * (d1 as f64).ln()).sqrt();
    let t = (4.0 * x + 4.0 * (d2 as f64).ln()) / kf;
    let beta = scale * (1.0 + t.sqrt() + t);
    Ok(Lambda0 {
        alpha,
        beta,
        lambda0: alpha.max(beta / kf.sqrt()),
    })
}

/// Penalty levels for a design.
pub fn design_lambda0(design: &GroupedDesign, x: f64, sigma: f64) -> Result<Lambda0> {
    lambda0(x, sigma, design.n(), design.channels(), design.d1(), design.d2())
}

/// Solver penalty corresponding to `lambda` in the rescaled coordinates.
pub fn solver_lambda(design: &GroupedDesign, lambda: f64) -> f64 {
    lambda / (design.n() as f64).sqrt()
}

/// The concentration statements that can be simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Proposition {
    /// `max_j 2 |u_j| <= sqrt(nK) lambda0_alpha`.
    SharedMaximum,
    /// `max_j 2 v_j <= sqrt(nK) lambda0_beta`.
    GroupMaximum,
    /// `2 eps^T X theta / (nK) <= lambda0 sqrt(G*) ||theta||_{2,1}` at a random `theta`.
    Bilinear,
}

impl Proposition {
    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            1 => Ok(Self::SharedMaximum),
            2 => Ok(Self::GroupMaximum),
            3 => Ok(Self::Bilinear),
            _ => Err(Error::InvalidParameters(format!(
                "proposition must be 1, 2 or 3, got {i}"
            ))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Self::SharedMaximum => 1,
            Self::GroupMaximum => 2,
            Self::Bilinear => 3,
        }
    }

    pub fn nominal(self, x: f64) -> f64 {
        let gauss = 2.0 * (-x * x / 2.0).exp();
        let chi = (-x).exp();
        match self {
            Self::SharedMaximum => 1.0 - gauss,
            Self::GroupMaximum => 1.0 - chi,
            Self::Bilinear => 1.0 - gauss - chi,
        }
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sd: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

/// Outcome of one simulated noise draw.
struct TrialOutcome {
    holds: bool,
    chi_square: f64,
}

/// Simulates `trials` noise matrices `eps ~ N(0, sigma^2 I)` of shape `n x K`
/// against the design and reports how often the chosen event holds.
///
/// `u_j` and `v_j` are computed literally from the stacked columns with atoms
/// rescaled to squared norm `n`, so `u_j ~ N(0, sigma^2)` and
/// `K v_j^2 / sigma^2 ~ chi^2(K)`. Trial `t` draws from its own stream of
/// `seed`, so the result does not depend on scheduling.
pub fn check_proposition(
    which: Proposition,
    design: &GroupedDesign,
    sigma: f64,
    x: f64,
    trials: usize,
    seed: u64,
) -> Result<TheoryReport> {
    if trials < 1000 {
        return Err(Error::InvalidParameters(format!(
            "at least 1000 trials are needed, got {trials}"
        )));
    }
    let l0 = design_lambda0(design, x, sigma)?;
    let (n, k) = (design.n(), design.channels());
    let sqrt_n = (n as f64).sqrt();
    let sqrt_k = (k as f64).sqrt();
    let nk = (n * k) as f64;
    let alpha_limit = nk.sqrt() * l0.alpha;
    let beta_limit = nk.sqrt() * l0.beta;

    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let eps = gaussian_matrix(&mut rng, n, k, sigma);
            // eps^T X^(j) for the rescaled atoms.
            let psi_corr = design.psi().tr_mul(&eps) * sqrt_n;
            let phi_corr = design.phi().tr_mul(&eps) * sqrt_n;
            let chi_square = if phi_corr.nrows() > 0 && sigma > 0.0 {
                phi_corr.row(0).norm_squared() / nk * k as f64 / (sigma * sigma)
            } else {
                0.0
            };
            let holds = match which {
                Proposition::SharedMaximum => {
                    let max_u = psi_corr
                        .row_iter()
                        .map(|r| r.sum().abs() / nk.sqrt())
                        .fold(0.0, f64::max);
                    2.0 * max_u <= alpha_limit
                }
                Proposition::GroupMaximum => {
                    let max_v = phi_corr
                        .row_iter()
                        .map(|r| r.norm() / nk.sqrt())
                        .fold(0.0, f64::max);
                    2.0 * max_v <= beta_limit
                }
                Proposition::Bilinear => {
                    let alpha = DVector::from_fn(design.d1(), |_, _| {
                        rng.sample::<f64, _>(StandardNormal)
                    });
                    let beta = gaussian_matrix(&mut rng, design.d2(), k, 1.0);
                    let shared: f64 = psi_corr
                        .row_iter()
                        .zip(alpha.iter())
                        .map(|(r, a)| r.sum() * a)
                        .sum();
                    let grouped = phi_corr.dot(&beta);
                    let lhs = 2.0 * (shared + grouped) / nk;
                    let l1: f64 = alpha.iter().map(|v| v.abs()).sum();
                    let l2: f64 = beta.row_iter().map(|r| r.norm()).sum();
                    // sqrt(G*) ||theta||_{2,1} = ||alpha||_1 + sqrt(K) sum ||beta_j||.
                    let rhs = l0.lambda0 * (l1 + sqrt_k * l2);
                    lhs <= rhs
                }
            };
            TrialOutcome { holds, chi_square }
        })
        .collect();

    let label = format!("proposition-{}", which.index());
    let mut report = TheoryReport::new(&label, x, sigma, l0, which.nominal(x));
    report.trials = trials;
    report.empirical_probability =
        outcomes.iter().filter(|o| o.holds).count() as f64 / trials as f64;
    if which == Proposition::GroupMaximum && sigma > 0.0 && design.d2() > 0 {
        let values: Vec<f64> = outcomes.iter().map(|o| o.chi_square).collect();
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
        report.chi_square_mean = Some(mean);
        report.chi_square_se = Some((var / m).sqrt());
    }
    Ok(report)
}

/// Active group set: `alpha` indices and `beta` row indices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupSet {
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
}

impl GroupSet {
    pub fn len(&self) -> usize {
        self.alpha.len() + self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, design: &GroupedDesign) -> Result<()> {
        if self.alpha.iter().any(|&g| g >= design.d1()) || self.beta.iter().any(|&j| j >= design.d2())
        {
            return Err(Error::InvalidParameters("group index out of range".into()));
        }
        Ok(())
    }

    /// Groups of the true parameter of a synthetic dataset.
    pub fn truth(dataset: &ScenarioDataset) -> Self {
        Self {
            alpha: dataset.support_alpha.clone(),
            beta: dataset.support_beta.clone(),
        }
    }
}

/// Coefficients in the rescaled coordinates of the bounds: a shared atom
/// becomes the unit-norm stacked column times `sqrt(n)`, a grouped atom
/// `sqrt(n)` times itself.
fn rescaled(theta: &ThetaEstimate, design: &GroupedDesign) -> ThetaEstimate {
    let sqrt_n = (design.n() as f64).sqrt();
    let sqrt_k = (design.channels() as f64).sqrt();
    ThetaEstimate {
        alpha: &theta.alpha * (sqrt_k / sqrt_n),
        beta: &theta.beta / sqrt_n,
    }
}

/// Model coefficients from rescaled ones.
fn model_units(theta: &ThetaEstimate, design: &GroupedDesign) -> ThetaEstimate {
    let sqrt_n = (design.n() as f64).sqrt();
    let sqrt_k = (design.channels() as f64).sqrt();
    ThetaEstimate {
        alpha: &theta.alpha * (sqrt_n / sqrt_k),
        beta: &theta.beta * sqrt_n,
    }
}

fn restricted_norm(theta: &ThetaEstimate, design: &GroupedDesign, set: &GroupSet) -> Result<f64> {
    let mut part = ThetaEstimate::zeros(design);
    for &g in &set.alpha {
        part.alpha[g] = theta.alpha[g];
    }
    for &j in &set.beta {
        part.beta.set_row(j, &theta.beta.row(j));
    }
    mixed_norm(&part, design)
}

/// The compatibility ratio of a direction given in rescaled coordinates.
fn compatibility_ratio(theta: &ThetaEstimate, design: &GroupedDesign, s0: &GroupSet) -> Result<f64> {
    let on = restricted_norm(theta, design, s0)?;
    if on <= 0.0 {
        return Err(Error::InvalidParameters("direction vanishes on S0".into()));
    }
    let fitted = apply_design(&model_units(theta, design), design)?;
    let nk = (design.n() * design.channels()) as f64;
    let g = design.g_star();
    Ok((g * s0.len() as f64 / nk).sqrt() * fitted.norm() / (g.sqrt() * on))
}

/// Randomized search for the compatibility constant of `s0`.
///
/// Directions are drawn in the cone `||theta(S0^c)||_{2,1} <= 3 ||theta(S0)||_{2,1}`:
/// a Gaussian part on `S0` plus an off-support part of random size that is
/// either random or aimed at cancelling the on-support fit. The running
/// minimum of the ratio is returned. It bounds the true constant from above,
/// so it is a heuristic diagnostic and never a certificate. Sample `i`
/// depends only on `(seed, i)`, so more samples can only lower the estimate.
pub fn estimate_phi(design: &GroupedDesign, s0: &GroupSet, samples: usize, seed: u64) -> Result<f64> {
    if s0.is_empty() {
        return Err(Error::InvalidParameters("S0 must be nonempty".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidParameters("samples must be positive".into()));
    }
    s0.check(design)?;
    let (d1, d2, k) = (design.d1(), design.d2(), design.channels());
    let off_alpha: Vec<usize> = (0..d1).filter(|g| !s0.alpha.contains(g)).collect();
    let off_beta: Vec<usize> = (0..d2).filter(|j| !s0.beta.contains(j)).collect();
    let off_count = off_alpha.len() + off_beta.len();

    let ratios: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = trial_rng(seed, i);
            loop {
                let mut theta = ThetaEstimate::zeros(design);
                for &g in &s0.alpha {
                    theta.alpha[g] = rng.sample(StandardNormal);
                }
                for &j in &s0.beta {
                    for ch in 0..k {
                        theta.beta[(j, ch)] = rng.sample(StandardNormal);
                    }
                }
                let on = restricted_norm(&theta, design, s0)?;
                if on <= 1e-12 {
                    continue;
                }
                // The first sample stays on the support.
                if i == 0 || off_count == 0 {
                    return compatibility_ratio(&theta, design, s0);
                }
                let mut off = ThetaEstimate::zeros(design);
                let width = rng.random_range(1..=off_count.min(4 * s0.len()).max(1));
                let picks = sample(&mut rng, off_count, width);
                let aim = rng.random_bool(0.5);
                let fit = if aim {
                    Some(apply_design(&model_units(&theta, design), design)?)
                } else {
                    None
                };
                for p in picks.iter() {
                    if p < off_alpha.len() {
                        let g = off_alpha[p];
                        off.alpha[g] = match &fit {
                            Some(f) => -f.tr_mul(&design.psi().column(g).into_owned()).sum(),
                            None => rng.sample(StandardNormal),
                        };
                    } else {
                        let j = off_beta[p - off_alpha.len()];
                        for ch in 0..k {
                            off.beta[(j, ch)] = match &fit {
                                Some(f) => -design.phi().column(j).dot(&f.column(ch)),
                                None => rng.sample(StandardNormal),
                            };
                        }
                    }
                }
                let off_norm = mixed_norm(&off, design)?;
                if off_norm > 1e-12 {
                    let t: f64 = rng.random_range(0.0..=1.0);
                    let scale = t * 3.0 * on / off_norm;
                    theta.alpha += &off.alpha * scale;
                    theta.beta += &off.beta * scale;
                }
                return compatibility_ratio(&theta, design, s0);
            }
        })
        .collect::<Result<_>>()?;
    Ok(ratios.into_iter().fold(f64::INFINITY, f64::min))
}

/// Evaluates the oracle inequality for a fit against the truth of a
/// synthetic dataset.
///
/// The fit's penalty must satisfy `sqrt(n) lambda >= 2 lambda0` at the
/// dataset's noise level (non-strict, up to rounding). With
/// `delta = theta_hat - theta0`, the left side is
/// `(1/(nK)) ||X delta||^2 + sqrt(n) lambda sqrt(G*) ||delta||_{2,1}` in rescaled
/// coordinates and the bound is `4 n lambda^2 G* |S0| / phi^2`.
pub fn check_oracle(
    dataset: &ScenarioDataset,
    design: &GroupedDesign,
    fit: &FitResult,
    x: f64,
    phi_lower_bound: f64,
) -> Result<TheoryReport> {
    positive("phi", phi_lower_bound)?;
    let l0 = design_lambda0(design, x, dataset.sigma)?;
    let lambda = (design.n() as f64).sqrt() * fit.lambda;
    if lambda < 2.0 * l0.lambda0 * (1.0 - 1e-12) {
        return Err(Error::InvalidParameters(format!(
            "penalty {lambda} (rescaled) is below 2 lambda0 = {}",
            2.0 * l0.lambda0
        )));
    }
    let delta = ThetaEstimate {
        alpha: &fit.theta.alpha - &dataset.theta0.alpha,
        beta: &fit.theta.beta - &dataset.theta0.beta,
    };
    let nk = (design.n() * design.channels()) as f64;
    let prediction = apply_design(&delta, design)?.norm_squared() / nk;
    let lhs = prediction + lambda * design.g_star().sqrt() * mixed_norm(&rescaled(&delta, design), design)?;
    let s0 = GroupSet::truth(dataset);
    let bound =
        4.0 * lambda * lambda * design.g_star() * s0.len() as f64 / (phi_lower_bound * phi_lower_bound);
    let mut report = TheoryReport::new(
        "oracle",
        x,
        dataset.sigma,
        l0,
        Proposition::Bilinear.nominal(x),
    );
    report.trials = 1;
    report.oracle_lhs = Some(lhs);
    report.oracle_bound = Some(bound);
    report.empirical_probability = if lhs <= bound { 1.0 } else { 0.0 };
    Ok(report)
}

/// Combines single-dataset oracle reports into one frequency.
pub fn oracle_frequency(reports: &[TheoryReport]) -> Result<TheoryReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidParameters("no oracle reports".into()))?;
    let mut out = first.clone();
    out.trials = reports.iter().map(|r| r.trials).sum();
    out.empirical_probability = reports
        .iter()
        .map(|r| r.empirical_probability * r.trials as f64)
        .sum::<f64>()
        / out.trials as f64;
    out.oracle_lhs = None;
    out.oracle_bound = None;
    Ok(out)
}

/// One replication of [`oracle_study`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRun {
    pub replication: usize,
    /// Solver penalty, `2 lambda0 / sqrt(n)`.
    pub lambda: f64,
    pub phi: f64,
    pub lhs: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleStudy {
    pub summary: TheoryReport,
    pub runs: Vec<OracleRun>,
}

/// Fits every replication of `config` at the smallest admissible penalty,
/// `2 lambda0` in rescaled units, and checks the oracle inequality with the
/// estimated compatibility constant of the true support. Estimates are
/// cached per support, so a fixed signal costs one search.
pub fn oracle_study(
    config: &ScenarioConfig,
    design: &GroupedDesign,
    fit: &FitConfig,
    x: f64,
    phi_samples: usize,
) -> Result<OracleStudy> {
    config.validate()?;
    let mut phis: Vec<(GroupSet, f64)> = Vec::new();
    let mut reports = Vec::with_capacity(config.replications);
    let mut runs = Vec::with_capacity(config.replications);
    for r in 0..config.replications {
        let ds = generate_replication(config, design, r)?;
        let s0 = GroupSet::truth(&ds);
        let phi = match phis.iter().find(|(s, _)| *s == s0) {
            Some(&(_, v)) => v,
            None => {
                let v = estimate_phi(design, &s0, phi_samples, config.seed)?;
                phis.push((s0, v));
                v
            }
        };
        let l0 = design_lambda0(design, x, ds.sigma)?;
        let lambda = solver_lambda(design, 2.0 * l0.lambda0);
        let fitted = fit_group_lasso(&ds.data, design, &FitConfig { lambda, ..fit.clone() })?;
        let report = check_oracle(&ds, design, &fitted, x, phi)?;
        let (lhs, bound) = (report.oracle_lhs.unwrap_or(f64::NAN), report.oracle_bound.unwrap_or(f64::NAN));
        runs.push(OracleRun {
            replication: r,
            lambda,
            phi,
            lhs,
            bound,
            holds: lhs <= bound,
        });
        reports.push(report);
    }
    Ok(OracleStudy {
        summary: oracle_frequency(&reports)?,
        runs,
    })
}
