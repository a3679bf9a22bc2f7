use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::engine::{Grams, Penalty, Problem, Solution};
use super::{log_grid, FitConfig, FitResult, FoldScheme};
use crate::error::{Error, Result};
use crate::model::{GroupedDesign, MultichannelData, ThetaEstimate};

/// Fold index of every row.
pub fn make_folds(n: usize, folds: usize, scheme: FoldScheme, seed: u64) -> Result<Vec<usize>> {
    if folds > n {
        return Err(Error::TooManyFolds { folds, rows: n });
    }
    if folds < 2 {
        return Err(Error::InvalidParameters(format!("need at least 2 folds, got {folds}")));
    }
    Ok(match scheme {
        FoldScheme::Contiguous => (0..n).map(|i| i * folds / n).collect(),
        FoldScheme::Interleaved => (0..n).map(|i| i % folds).collect(),
        FoldScheme::Random => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut assignment = vec![0; n];
            for (pos, &row) in order.iter().enumerate() {
                assignment[row] = pos % folds;
            }
            assignment
        }
    })
}

#[derive(Debug)]
struct Fold {
    train: Vec<usize>,
    test: Vec<usize>,
    a_train: DMatrix<f64>,
    b_train: DMatrix<f64>,
    a_test: DMatrix<f64>,
    b_test: DMatrix<f64>,
    grams: Grams,
}

/// Row folds and the Gram matrices of every training subset, reusable for any
/// number of datasets over the same dictionaries.
#[derive(Debug)]
pub struct CvPlan {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    full: Grams,
    folds: Vec<Fold>,
}

/// Outcome of cross-validated penalty selection.
#[derive(Debug, Clone)]
pub struct CvSelection {
    /// The decreasing penalty grid, up to the last point evaluated.
    pub lambdas: Vec<f64>,
    /// Held-out squared error per grid point, summed over folds and divided
    /// by `n K`.
    pub cv_error: Vec<f64>,
    pub lambda_star: f64,
    pub index: usize,
    /// Refit on all rows at `lambda_star`.
    pub fit: FitResult,
}

pub(crate) struct CvRun {
    pub lambdas: Vec<f64>,
    pub errors: Vec<f64>,
    pub index: usize,
    pub solution: Solution,
}

impl CvPlan {
    pub fn for_design(design: &GroupedDesign, config: &FitConfig) -> Result<Self> {
        Self::new(design.psi().clone(), design.phi().clone(), config)
    }

    /// A plan whose atoms are all per-channel (no shared block).
    pub(crate) fn for_dictionary(omega: &DMatrix<f64>, config: &FitConfig) -> Result<Self> {
        Self::new(DMatrix::zeros(omega.nrows(), 0), omega.clone(), config)
    }

    fn new(a: DMatrix<f64>, b: DMatrix<f64>, config: &FitConfig) -> Result<Self> {
        config.validate()?;
        let n = a.nrows();
        let assignment = make_folds(n, config.cv_folds, config.fold_scheme, config.seed)?;
        let folds = (0..config.cv_folds)
            .into_par_iter()
            .map(|v| {
                let (test, train): (Vec<usize>, Vec<usize>) =
                    (0..n).partition(|&i| assignment[i] == v);
                let a_train = a.select_rows(&train);
                let b_train = b.select_rows(&train);
                let grams = Grams::new(&a_train, &b_train);
                Fold {
                    a_test: a.select_rows(&test),
                    b_test: b.select_rows(&test),
                    train,
                    test,
                    a_train,
                    b_train,
                    grams,
                }
            })
            .collect();
        Ok(Self {
            full: Grams::new(&a, &b),
            a,
            b,
            folds,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn fold_count(&self) -> usize {
        self.folds.len()
    }

    fn check(&self, design: &GroupedDesign) -> Result<()> {
        if design.n() != self.n() || design.d1() != self.a.ncols() || design.d2() != self.b.ncols() {
            return Err(Error::DimensionMismatch(
                "cross-validation plan was built for a different design".into(),
            ));
        }
        Ok(())
    }

    fn test_sse(fold: &Fold, theta: &ThetaEstimate, y_test: &DMatrix<f64>) -> f64 {
        let shared = &fold.a_test * &theta.alpha;
        let mut resid = y_test - &fold.b_test * &theta.beta;
        for mut col in resid.column_iter_mut() {
            col -= &shared;
        }
        resid.norm_squared()
    }

    /// Cross-validates the penalty for the loss `penalty(rows)` and refits on
    /// all rows. Training fits reuse the full-data grid. The folds walk the
    /// grid together so the walk can stop once `cv_patience` consecutive
    /// points have failed to improve on the best error.
    pub(crate) fn run<P>(&self, y: &DMatrix<f64>, penalty: P, config: &FitConfig) -> CvRun
    where
        P: Fn(usize) -> Penalty + Sync,
    {
        let n = self.n();
        let stop = config.stop_rule();
        let full = Problem::new(&self.full, &self.a, &self.b, y, penalty(n));
        let lambdas = log_grid(
            full.lambda_max(),
            config.lambda_grid_size,
            config.lambda_min_ratio,
        );
        struct FoldRun<'f> {
            fold: &'f Fold,
            problem: Problem<'f>,
            y_test: DMatrix<f64>,
            start: ThetaEstimate,
        }
        let mut runs: Vec<FoldRun> = self
            .folds
            .iter()
            .map(|fold| {
                let problem = Problem::new(
                    &fold.grams,
                    &fold.a_train,
                    &fold.b_train,
                    &y.select_rows(&fold.train),
                    penalty(fold.train.len()),
                );
                FoldRun {
                    start: problem.zeros(),
                    problem,
                    y_test: y.select_rows(&fold.test),
                    fold,
                }
            })
            .collect();
        let scale = (n * y.ncols()) as f64;
        let mut errors = Vec::with_capacity(lambdas.len());
        // First minimizer on a decreasing grid, i.e. the largest lambda among ties.
        let mut index = 0;
        for (i, &lambda) in lambdas.iter().enumerate() {
            let sse: f64 = runs
                .par_iter_mut()
                .map(|run| {
                    let sol = run.problem.solve(lambda, run.start.clone(), stop);
                    let sse = Self::test_sse(run.fold, &sol.theta, &run.y_test);
                    run.start = sol.theta;
                    sse
                })
                .collect::<Vec<f64>>()
                .iter()
                .sum();
            errors.push(sse / scale);
            if errors[i] < errors[index] {
                index = i;
            }
            if config.cv_patience > 0 && i - index >= config.cv_patience {
                break;
            }
        }
        let mut lambdas = lambdas;
        lambdas.truncate(errors.len());
        let mut start = full.zeros();
        let mut solution = None;
        for &lambda in &lambdas[..=index] {
            let sol = full.solve(lambda, start, stop);
            start = sol.theta.clone();
            solution = Some(sol);
        }
        CvRun {
            lambdas,
            errors,
            index,
            solution: solution.expect("grid is never empty"),
        }
    }

    /// Multichannel group lasso with the penalty chosen by cross-validation.
    pub fn select(
        &self,
        data: &MultichannelData,
        design: &GroupedDesign,
        config: &FitConfig,
    ) -> Result<CvSelection> {
        self.check(design)?;
        data.check(design)?;
        let k = design.channels();
        let run = self.run(data.y(), |rows| Penalty::multichannel(rows, k), config);
        Ok(Self::selection(design, run))
    }

    /// Per-channel lasso fits, each with its own cross-validated penalty.
    pub fn select_single(
        &self,
        data: &MultichannelData,
        design: &GroupedDesign,
        config: &FitConfig,
    ) -> Result<Vec<CvSelection>> {
        self.check(design)?;
        data.check(design)?;
        let single = design.with_channels(1)?;
        Ok((0..data.channels())
            .map(|k| {
                let y = data.y().columns(k, 1).into_owned();
                let run = self.run(&y, |rows| Penalty::multichannel(rows, 1), config);
                Self::selection(&single, run)
            })
            .collect())
    }

    fn selection(design: &GroupedDesign, run: CvRun) -> CvSelection {
        let lambda_star = run.lambdas[run.index];
        CvSelection {
            fit: FitResult::from_solution(design, lambda_star, run.solution),
            lambda_star,
            index: run.index,
            lambdas: run.lambdas,
            cv_error: run.errors,
        }
    }
}
