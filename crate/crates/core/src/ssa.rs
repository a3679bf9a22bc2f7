//! Simultaneous sparse approximation baselines for `S = Omega C + noise`:
//! greedy SOMP and the l1/l2-penalized relaxation solved by block coordinate
//! descent over the rows of `C`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::solver::engine::{Grams, Penalty, Problem};
use crate::solver::{make_folds, CvPlan, FitConfig};

#[derive(Debug, Clone)]
pub struct SsaProblem {
    s: DMatrix<f64>,
    omega: DMatrix<f64>,
}

impl SsaProblem {
    /// `omega` must have unit-norm columns (within 1e-10).
    pub fn new(s: DMatrix<f64>, omega: DMatrix<f64>) -> Result<Self> {
        if s.nrows() != omega.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "signals have {} rows, dictionary has {}",
                s.nrows(),
                omega.nrows()
            )));
        }
        if let Some(i) = omega
            .column_iter()
            .position(|c| (c.norm() - 1.0).abs() > 1e-10)
        {
            return Err(Error::InvalidParameters(format!(
                "dictionary column {i} does not have unit norm"
            )));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite signal value".into()));
        }
        Ok(Self { s, omega })
    }

    pub fn signals(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn dictionary(&self) -> &DMatrix<f64> {
        &self.omega
    }
}

#[derive(Debug, Clone)]
pub struct SompResult {
    /// `m x K` coefficients, nonzero only on the selected rows.
    pub coefficients: DMatrix<f64>,
    /// Selected atoms in selection order.
    pub selected: Vec<usize>,
    /// `sum_k ||R(k)||^2` before the first and after every selection.
    pub residual_norms: Vec<f64>,
    /// Set when a selected atom was numerically in the span of earlier ones.
    pub rank_deficient: bool,
}

/// Incremental greedy state over a (possibly row-restricted) dictionary.
struct Greedy<'a> {
    omega: &'a DMatrix<f64>,
    norms: Vec<f64>,
    q: Vec<DVector<f64>>,
    /// Gram-Schmidt coefficients: atom `selected[t] = sum_{i<=t} r[t][i] q_i`.
    r: Vec<Vec<f64>>,
    /// `Q^T S`, one row per selected atom.
    qts: Vec<DVector<f64>>,
    residual: DMatrix<f64>,
    selected: Vec<usize>,
    rank_deficient: bool,
    signal_sq: f64,
}

impl<'a> Greedy<'a> {
    fn new(omega: &'a DMatrix<f64>, s: &DMatrix<f64>) -> Self {
        Self {
            norms: omega.column_iter().map(|c| c.norm()).collect(),
            omega,
            q: Vec::new(),
            r: Vec::new(),
            qts: Vec::new(),
            residual: s.clone(),
            selected: Vec::new(),
            rank_deficient: false,
            signal_sq: s.norm_squared(),
        }
    }

    /// Adds one atom; false when nothing more can be explained.
    fn step(&mut self) -> bool {
        // A residual at rounding level carries no signal left to select.
        if self.residual.norm_squared() <= 1e-24 * self.signal_sq {
            return false;
        }
        let corr = self.omega.tr_mul(&self.residual);
        let mut best = None;
        let mut best_score = 0.0;
        for i in 0..corr.nrows() {
            if self.norms[i] == 0.0 || self.selected.contains(&i) {
                continue;
            }
            let score = corr.row(i).iter().map(|v| v.abs()).sum::<f64>() / self.norms[i];
            if score > best_score {
                best_score = score;
                best = Some(i);
            }
        }
        let Some(i) = best else {
            return false;
        };
        // Modified Gram-Schmidt against the current basis.
        let mut v = self.omega.column(i).into_owned();
        let mut coef = Vec::with_capacity(self.q.len() + 1);
        for q in &self.q {
            let c = q.dot(&v);
            v.axpy(-c, q, 1.0);
            coef.push(c);
        }
        let norm = v.norm();
        if norm <= 1e-10 * self.norms[i] {
            self.rank_deficient = true;
            return false;
        }
        v /= norm;
        coef.push(norm);
        let proj = v.tr_mul(&self.residual).transpose();
        for (k, mut col) in self.residual.column_iter_mut().enumerate() {
            col.axpy(-proj[k], &v, 1.0);
        }
        // Q^T S for the new direction equals its projection of the residual.
        self.qts.push(DVector::from_column_slice(proj.as_slice()));
        self.q.push(v);
        self.r.push(coef);
        self.selected.push(i);
        true
    }

    /// Least-squares coefficients of the first `t` selected atoms (`t x K`).
    fn coefficients(&self, t: usize) -> DMatrix<f64> {
        let k = self.residual.ncols();
        let mut c = DMatrix::zeros(t, k);
        for ch in 0..k {
            // Back substitution with the triangular factor.
            for row in (0..t).rev() {
                let mut acc = self.qts[row][ch];
                for later in row + 1..t {
                    acc -= self.r[later][row] * c[(later, ch)];
                }
                c[(row, ch)] = acc / self.r[row][row];
            }
        }
        c
    }
}

/// Simultaneous orthogonal matching pursuit with least-squares refits.
pub fn somp(problem: &SsaProblem, t: usize) -> Result<SompResult> {
    let (n, m) = problem.omega.shape();
    if t == 0 || t > n.min(m) {
        return Err(Error::InvalidParameters(format!(
            "sparsity budget {t} outside 1..={}",
            n.min(m)
        )));
    }
    let mut g = Greedy::new(&problem.omega, &problem.s);
    let mut residual_norms = vec![g.residual.norm_squared()];
    while g.selected.len() < t && g.step() {
        residual_norms.push(g.residual.norm_squared());
    }
    let sel = g.coefficients(g.selected.len());
    let mut coefficients = DMatrix::zeros(m, problem.s.ncols());
    for (row, &atom) in g.selected.iter().enumerate() {
        coefficients.row_mut(atom).copy_from(&sel.row(row));
    }
    Ok(SompResult {
        coefficients,
        selected: g.selected,
        residual_norms,
        rank_deficient: g.rank_deficient,
    })
}

/// SOMP with the number of selections chosen by V-fold cross-validation.
#[derive(Debug, Clone)]
pub struct SompCv {
    pub result: SompResult,
    /// Held-out squared error for budgets `1..=cv_error.len()`, over `n K`.
    pub cv_error: Vec<f64>,
    pub budget: usize,
}

pub fn somp_cv(problem: &SsaProblem, max_budget: usize, config: &FitConfig) -> Result<SompCv> {
    config.validate()?;
    let (n, m) = problem.omega.shape();
    let assignment = make_folds(n, config.cv_folds, config.fold_scheme, config.seed)?;
    let smallest_train = (0..config.cv_folds)
        .map(|v| assignment.iter().filter(|&&f| f != v).count())
        .min()
        .unwrap_or(0);
    let t_max = max_budget.min(smallest_train).min(m);
    if t_max == 0 {
        return Err(Error::InvalidParameters("sparsity budget must be positive".into()));
    }
    let per_fold: Vec<Vec<f64>> = (0..config.cv_folds)
        .into_par_iter()
        .map(|v| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..n).partition(|&i| assignment[i] == v);
            let omega_train = problem.omega.select_rows(&train);
            let omega_test = problem.omega.select_rows(&test);
            let s_test = problem.s.select_rows(&test);
            let mut g = Greedy::new(&omega_train, &problem.s.select_rows(&train));
            let mut errs = Vec::with_capacity(t_max);
            for t in 1..=t_max {
                if g.selected.len() == t - 1 && !g.step() {
                    // Nothing left to add: larger budgets repeat the last fit.
                    let last = errs.last().copied().unwrap_or_else(|| s_test.norm_squared());
                    errs.resize(t_max, last);
                    break;
                }
                let c = g.coefficients(t);
                let pred = omega_test.select_columns(&g.selected[..t]) * c;
                errs.push((&s_test - pred).norm_squared());
            }
            errs
        })
        .collect();
    let scale = (n * problem.s.ncols()) as f64;
    let cv_error: Vec<f64> = (0..t_max)
        .map(|i| per_fold.iter().map(|f| f[i]).sum::<f64>() / scale)
        .collect();
    let mut best = 0;
    for (i, &e) in cv_error.iter().enumerate() {
        if e < cv_error[best] {
            best = i;
        }
    }
    let budget = best + 1;
    Ok(SompCv {
        result: somp(problem, budget)?,
        cv_error,
        budget,
    })
}

#[derive(Debug, Clone)]
pub struct BcdResult {
    /// `m x K`; every row is either zero or nonzero as a whole.
    pub coefficients: DMatrix<f64>,
    pub lambda: f64,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `(1/2) ||S - Omega C||_F^2 + lambda sum_i ||C_i.||_2`.
pub fn bcd_objective(problem: &SsaProblem, c: &DMatrix<f64>, lambda: f64) -> f64 {
    let resid = &problem.s - &problem.omega * c;
    0.5 * resid.norm_squared() + lambda * c.row_iter().map(|r| r.norm()).sum::<f64>()
}

/// Smallest `lambda` for which `C = 0` solves the relaxation: `max_i ||omega_i^T S||`.
pub fn bcd_lambda_max(problem: &SsaProblem) -> f64 {
    let corr = problem.omega.tr_mul(&problem.s);
    crate::solver::engine::null_threshold(
        &DVector::zeros(0),
        &corr,
        Penalty::half_squared(),
    )
}

/// Row-wise block coordinate descent at a fixed `lambda`.
pub fn bcd_l1l2(problem: &SsaProblem, lambda: f64, config: &FitConfig) -> Result<BcdResult> {
    config.validate()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameters(format!("lambda must be >= 0, got {lambda}")));
    }
    let empty = DMatrix::zeros(problem.s.nrows(), 0);
    let grams = Grams::new(&empty, &problem.omega);
    let p = Problem::new(&grams, &empty, &problem.omega, &problem.s, Penalty::half_squared());
    let sol = p.solve(lambda, p.zeros(), config.stop_rule());
    Ok(BcdResult {
        coefficients: sol.theta.beta,
        lambda,
        objective_trace: sol.objective_trace,
        iterations: sol.iterations,
        converged: sol.converged,
    })
}

#[derive(Debug, Clone)]
pub struct BcdCv {
    pub result: BcdResult,
    pub lambdas: Vec<f64>,
    pub cv_error: Vec<f64>,
    pub index: usize,
}

/// Prepared folds for repeated cross-validated BCD fits on one dictionary.
#[derive(Debug)]
pub struct BcdPlan {
    plan: CvPlan,
}

impl BcdPlan {
    pub fn new(omega: &DMatrix<f64>, config: &FitConfig) -> Result<Self> {
        Ok(Self {
            plan: CvPlan::for_dictionary(omega, config)?,
        })
    }

    pub fn select(&self, s: &DMatrix<f64>, config: &FitConfig) -> Result<BcdCv> {
        config.validate()?;
        let n = self.plan.n();
        if s.nrows() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: s.nrows(),
            });
        }
        // The half-squared loss is not averaged over rows, so training fits on
        // a fraction of the rows are rescaled to keep lambda comparable.
        let run = self.plan.run(
            s,
            |rows| Penalty {
                loss_scale: 0.5 * n as f64 / rows as f64,
                ..Penalty::half_squared()
            },
            config,
        );
        let lambda = run.lambdas[run.index];
        Ok(BcdCv {
            result: BcdResult {
                coefficients: run.solution.theta.beta,
                lambda,
                objective_trace: run.solution.objective_trace,
                iterations: run.solution.iterations,
                converged: run.solution.converged,
            },
            lambdas: run.lambdas,
            cv_error: run.errors,
            index: run.index,
        })
    }
}

/// BCD with `lambda` chosen by V-fold cross-validation.
pub fn bcd_cv(problem: &SsaProblem, config: &FitConfig) -> Result<BcdCv> {
    BcdPlan::new(&problem.omega, config)?.select(&problem.s, config)
}
