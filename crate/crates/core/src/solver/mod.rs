//! Group-lasso fits of the multichannel model, the per-channel lasso baseline,
//! regularization paths and cross-validated penalty selection.

mod cv;
pub(crate) mod engine;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{apply_design, mixed_norm, GroupedDesign, MultichannelData, ThetaEstimate};
use engine::{Grams, Penalty, Problem, Solution, StopRule};

pub use cv::{make_folds, CvPlan, CvSelection};

/// How rows are assigned to cross-validation folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FoldScheme {
    /// Fold `v` is a block of consecutive rows.
    Contiguous,
    /// Row `i` goes to fold `i mod V`.
    #[default]
    Interleaved,
    /// Rows are shuffled with the configured seed, then interleaved.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub lambda: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub lambda_grid_size: usize,
    pub lambda_min_ratio: f64,
    pub cv_folds: usize,
    pub fold_scheme: FoldScheme,
    /// Grid points without improvement after which cross-validation stops
    /// walking down the path; 0 evaluates the whole grid.
    pub cv_patience: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            max_iterations: 10_000,
            tolerance: 1e-6,
            lambda_grid_size: 100,
            lambda_min_ratio: 1e-3,
            cv_folds: 5,
            fold_scheme: FoldScheme::Interleaved,
            cv_patience: 20,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameters(msg));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return bad(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if self.lambda_grid_size == 0 {
            return bad("lambda_grid_size must be positive".into());
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return bad(format!(
                "lambda_min_ratio must lie in (0, 1), got {}",
                self.lambda_min_ratio
            ));
        }
        if self.cv_folds < 2 {
            return bad(format!("cv_folds must be at least 2, got {}", self.cv_folds));
        }
        Ok(())
    }

    pub(crate) fn stop_rule(&self) -> StopRule {
        StopRule {
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
        }
    }
}

/// A fitted model together with its reconstructions `c_hat = Psi alpha` and
/// `u_hat(k) = Phi beta(k)`.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta: ThetaEstimate,
    pub lambda: f64,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub c_hat: DVector<f64>,
    pub u_hat: DMatrix<f64>,
}

impl FitResult {
    pub(crate) fn from_solution(design: &GroupedDesign, lambda: f64, sol: Solution) -> Self {
        let c_hat = design.psi() * &sol.theta.alpha;
        let u_hat = design.phi() * &sol.theta.beta;
        Self {
            theta: sol.theta,
            lambda,
            objective_trace: sol.objective_trace,
            iterations: sol.iterations,
            converged: sol.converged,
            c_hat,
            u_hat,
        }
    }

    /// `c_hat + u_hat(k)` for every channel.
    pub fn fitted(&self) -> DMatrix<f64> {
        let mut f = self.u_hat.clone();
        for mut col in f.column_iter_mut() {
            col += &self.c_hat;
        }
        f
    }
}

/// `(1/(nK)) ||Y - X theta||^2 + lambda sqrt(K) (sum |alpha_g| + sum ||beta_j||_2)`,
/// evaluated directly.
///
/// In the stacked design a shared atom's column has norm `sqrt(K)`. Writing
/// the problem in the coordinates `sqrt(K) alpha` of the unit-norm column,
/// the penalty is `lambda sqrt(G*) ||.||_{2,1}` with every group orthonormal.
pub fn objective(
    data: &MultichannelData,
    design: &GroupedDesign,
    theta: &ThetaEstimate,
    lambda: f64,
) -> Result<f64> {
    data.check(design)?;
    let resid = data.y() - apply_design(theta, design)?;
    let nk = (design.n() * design.channels()) as f64;
    Ok(resid.norm_squared() / nk + lambda * penalty_norm(theta, design)?)
}

/// `sqrt(K) (sum |alpha_g| + sum ||beta_j||_2)`, which equals
/// `sqrt(G*) ||(sqrt(K) alpha, beta)||_{2,1}`.
pub fn penalty_norm(theta: &ThetaEstimate, design: &GroupedDesign) -> Result<f64> {
    let scaled = ThetaEstimate {
        alpha: &theta.alpha * (design.channels() as f64).sqrt(),
        beta: theta.beta.clone(),
    };
    Ok(design.g_star().sqrt() * mixed_norm(&scaled, design)?)
}

/// Largest violation of the optimality conditions at `theta`, measured on the
/// gradient scale `2/(nK) X^T (Y - X theta)`.
///
/// With `t = lambda sqrt(K)`, an active singleton must have gradient
/// `t sign(alpha_g)` and an inactive one gradient at most `t`; a `Phi` group
/// has gradient `t beta_j / ||beta_j||` when active and norm at most `t`
/// otherwise.
pub fn kkt_violation(
    data: &MultichannelData,
    design: &GroupedDesign,
    theta: &ThetaEstimate,
    lambda: f64,
) -> Result<f64> {
    data.check(design)?;
    let resid = data.y() - apply_design(theta, design)?;
    let nk = (design.n() * design.channels()) as f64;
    let corr = crate::model::group_correlations(&resid, design)?;
    let t = lambda * (design.channels() as f64).sqrt();
    let mut worst: f64 = 0.0;
    for (g, &z) in corr.alpha.iter().enumerate() {
        let grad = 2.0 * z / nk;
        let a = theta.alpha[g];
        let v = if a != 0.0 {
            (grad - t * a.signum()).abs()
        } else {
            (grad.abs() - t).max(0.0)
        };
        worst = worst.max(v);
    }
    for j in 0..design.d2() {
        let grad = corr.beta.row(j) * (2.0 / nk);
        let b = theta.beta.row(j);
        let bn = b.norm();
        let v = if bn > 0.0 {
            (grad - b * (t / bn)).norm()
        } else {
            (grad.norm() - t).max(0.0)
        };
        worst = worst.max(v);
    }
    Ok(worst)
}

fn prepare(design: &GroupedDesign) -> Grams {
    Grams::new(design.psi(), design.phi())
}

/// Multichannel group-lasso fit at `config.lambda`.
pub fn fit_group_lasso(
    data: &MultichannelData,
    design: &GroupedDesign,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    data.check(design)?;
    let grams = prepare(design);
    let penalty = Penalty::multichannel(design.n(), design.channels());
    let problem = Problem::new(&grams, design.psi(), design.phi(), data.y(), penalty);
    let sol = problem.solve(config.lambda, problem.zeros(), config.stop_rule());
    Ok(FitResult::from_solution(design, config.lambda, sol))
}

pub(crate) fn log_grid(lambda_max: f64, size: usize, min_ratio: f64) -> Vec<f64> {
    if lambda_max <= 0.0 {
        return vec![0.0];
    }
    if size == 1 {
        return vec![lambda_max];
    }
    let step = min_ratio.ln() / (size - 1) as f64;
    (0..size)
        .map(|i| lambda_max * (step * i as f64).exp())
        .collect()
}

/// Smallest `lambda` for which the multichannel fit is identically zero.
pub fn lambda_max(data: &MultichannelData, design: &GroupedDesign) -> Result<f64> {
    data.check(design)?;
    let corr = crate::model::group_correlations(data.y(), design)?;
    let penalty = Penalty::multichannel(design.n(), design.channels());
    Ok(engine::null_threshold(&corr.alpha, &corr.beta, penalty))
}

/// Decreasing, log-spaced grid from `lambda_max` down to
/// `lambda_min_ratio * lambda_max`; `{0}` when the data are identically zero.
pub fn lambda_path(
    data: &MultichannelData,
    design: &GroupedDesign,
    config: &FitConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    Ok(log_grid(
        lambda_max(data, design)?,
        config.lambda_grid_size,
        config.lambda_min_ratio,
    ))
}

/// Multichannel fits along the grid, each warm-started from the previous one.
pub fn fit_path(
    data: &MultichannelData,
    design: &GroupedDesign,
    config: &FitConfig,
) -> Result<Vec<FitResult>> {
    let lambdas = lambda_path(data, design, config)?;
    let grams = prepare(design);
    let penalty = Penalty::multichannel(design.n(), design.channels());
    let problem = Problem::new(&grams, design.psi(), design.phi(), data.y(), penalty);
    let mut start = problem.zeros();
    let mut out = Vec::with_capacity(lambdas.len());
    for lambda in lambdas {
        let sol = problem.solve(lambda, start, config.stop_rule());
        start = sol.theta.clone();
        out.push(FitResult::from_solution(design, lambda, sol));
    }
    Ok(out)
}

/// V-fold cross-validation over the multichannel path, followed by a refit on
/// all rows at the selected penalty.
pub fn cv_select(
    data: &MultichannelData,
    design: &GroupedDesign,
    config: &FitConfig,
) -> Result<CvSelection> {
    let plan = CvPlan::for_design(design, config)?;
    plan.select(data, design, config)
}

/// Per-channel lasso on `[Psi Phi]`, each channel with its own
/// cross-validated penalty.
pub fn fit_single_channel(
    data: &MultichannelData,
    design: &GroupedDesign,
    config: &FitConfig,
) -> Result<Vec<FitResult>> {
    let plan = CvPlan::for_design(design, config)?;
    Ok(plan
        .select_single(data, design, config)?
        .into_iter()
        .map(|s| s.fit)
        .collect())
}

/// Per-channel lasso at the fixed penalty `config.lambda`, minimizing
/// `(1/n) ||y(k) - Psi a - Phi b||^2 + lambda (||a||_1 + ||b||_1)`.
pub fn fit_single_channel_fixed(
    data: &MultichannelData,
    design: &GroupedDesign,
    config: &FitConfig,
) -> Result<Vec<FitResult>> {
    config.validate()?;
    data.check(design)?;
    let grams = prepare(design);
    let single = design.with_channels(1)?;
    (0..data.channels())
        .map(|k| {
            let y = data.y().columns(k, 1).into_owned();
            let penalty = Penalty::multichannel(design.n(), 1);
            let problem = Problem::new(&grams, design.psi(), design.phi(), &y, penalty);
            let sol = problem.solve(config.lambda, problem.zeros(), config.stop_rule());
            Ok(FitResult::from_solution(&single, config.lambda, sol))
        })
        .collect()
}
