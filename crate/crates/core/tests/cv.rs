mod common;

use common::reference;
use mcdecomp_core::solver::make_folds;
use mcdecomp_core::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn design(seed: u64, n: usize, k: usize, d1: usize, d2: usize) -> GroupedDesign {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi = reference::unit_columns(n, d1, &mut rng);
    let phi = reference::unit_columns(n, d2, &mut rng);
    GroupedDesign::from_matrices(psi, phi, k).unwrap()
}

fn sparse_signal(design: &GroupedDesign, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = ThetaEstimate::zeros(design);
    theta.alpha[1] = 2.0;
    theta.alpha[4] = -1.5;
    for ch in 0..design.channels() {
        theta.beta[(2, ch)] = rng.random_range(1.0..2.0);
        theta.beta[(7, ch)] = rng.random_range(-2.0..-1.0);
    }
    apply_design(&theta, design).unwrap()
}

fn noisy(y: &DMatrix<f64>, sd: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    y.map(|v| v + sd * rng.random_range(-1.0..1.0))
}

#[test]
fn folds_partition_rows() {
    for scheme in [FoldScheme::Contiguous, FoldScheme::Interleaved, FoldScheme::Random] {
        let f = make_folds(23, 5, scheme, 3).unwrap();
        assert_eq!(f.len(), 23);
        for v in 0..5 {
            let size = f.iter().filter(|&&x| x == v).count();
            assert!((4..=5).contains(&size), "{scheme:?} fold {v} has {size} rows");
        }
    }
    assert_eq!(make_folds(7, 3, FoldScheme::Interleaved, 0).unwrap(), vec![0, 1, 2, 0, 1, 2, 0]);
}

#[test]
fn curve_covers_the_whole_path_without_patience() {
    let d = design(1, 40, 2, 10, 12);
    let data = MultichannelData::new(noisy(&sparse_signal(&d, 2), 0.1, 3)).unwrap();
    let config = FitConfig { cv_patience: 0, lambda_grid_size: 40, ..Default::default() };
    let sel = cv_select(&data, &d, &config).unwrap();
    assert_eq!(sel.cv_error.len(), 40);
    assert_eq!(sel.lambdas, lambda_path(&data, &d, &config).unwrap());
    let best = sel.cv_error.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(sel.cv_error[sel.index], best);
    // Ties go to the largest penalty.
    assert!(sel.cv_error[..sel.index].iter().all(|&e| e > best));
    assert_eq!(sel.lambda_star, sel.lambdas[sel.index]);
    let refit = fit_group_lasso(&data, &d, &FitConfig { lambda: sel.lambda_star, ..Default::default() }).unwrap();
    let a = objective(&data, &d, &sel.fit.theta, sel.lambda_star).unwrap();
    let b = objective(&data, &d, &refit.theta, sel.lambda_star).unwrap();
    assert!((a - b).abs() < 1e-7);
}

#[test]
fn patience_truncates_after_the_minimum() {
    let d = design(4, 40, 3, 10, 12);
    let data = MultichannelData::new(noisy(&sparse_signal(&d, 5), 0.3, 6)).unwrap();
    let full = cv_select(&data, &d, &FitConfig { cv_patience: 0, ..Default::default() }).unwrap();
    let early = cv_select(&data, &d, &FitConfig { cv_patience: 10, ..Default::default() }).unwrap();
    let m = early.cv_error.len();
    assert!(m <= early.index + 11);
    assert_eq!(&full.cv_error[..m], &early.cv_error[..]);
    if full.index < m {
        assert_eq!(full.index, early.index);
    }
}

/// Held-out error by direct refits on each training set, sharing nothing with
/// the library's cross-validation code.
fn direct_cv_curve(data: &MultichannelData, d: &GroupedDesign, config: &FitConfig) -> Vec<f64> {
    let lambdas = lambda_path(data, d, config).unwrap();
    let folds = make_folds(d.n(), config.cv_folds, config.fold_scheme, config.seed).unwrap();
    let (n, k) = (d.n(), d.channels());
    let mut errors = vec![0.0; lambdas.len()];
    for v in 0..config.cv_folds {
        let train: Vec<usize> = (0..n).filter(|&i| folds[i] != v).collect();
        let test: Vec<usize> = (0..n).filter(|&i| folds[i] == v).collect();
        let dt = d.select_rows(&train);
        let yt = data.select_rows(&train);
        for (e, &lambda) in errors.iter_mut().zip(&lambdas) {
            let fit = fit_group_lasso(&yt, &dt, &FitConfig { lambda, ..config.clone() }).unwrap();
            let pred = apply_design(&fit.theta, &d.select_rows(&test)).unwrap();
            *e += (data.y().select_rows(&test) - pred).norm_squared() / (n * k) as f64;
        }
    }
    errors
}

#[test]
fn curve_matches_direct_refits() {
    let d = design(7, 30, 2, 6, 8);
    let data = MultichannelData::new(noisy(&sparse_signal(&d, 8), 0.2, 9)).unwrap();
    let config = FitConfig { cv_patience: 0, lambda_grid_size: 15, tolerance: 1e-10, ..Default::default() };
    let sel = cv_select(&data, &d, &config).unwrap();
    let direct = direct_cv_curve(&data, &d, &config);
    for (a, b) in sel.cv_error.iter().zip(&direct) {
        assert!((a - b).abs() < 1e-6 * b.max(1e-3), "{a} vs {b}");
    }
}

#[test]
fn stacked_copies_select_the_same_penalty() {
    let d = design(10, 40, 2, 10, 12);
    let y = noisy(&sparse_signal(&d, 11), 0.3, 12);
    let data = MultichannelData::new(y.clone()).unwrap();
    let config = FitConfig { cv_patience: 0, ..Default::default() };
    let sel = cv_select(&data, &d, &config).unwrap();

    // Stack [Y; Y] on [Psi; Psi], [Phi; Phi]. With n divisible by V, rows i
    // and n + i land in the same interleaved fold.
    let stack = |m: &DMatrix<f64>| {
        let mut out = DMatrix::zeros(2 * m.nrows(), m.ncols());
        out.rows_mut(0, m.nrows()).copy_from(m);
        out.rows_mut(m.nrows(), m.nrows()).copy_from(m);
        out
    };
    let d2 = GroupedDesign::from_matrices(stack(d.psi()), stack(d.phi()), 2).unwrap();
    let data2 = MultichannelData::new(stack(&y)).unwrap();
    let sel2 = cv_select(&data2, &d2, &config).unwrap();
    assert_eq!(sel.index, sel2.index);
    assert!((sel.lambda_star - sel2.lambda_star).abs() < 1e-12 * sel.lambda_star);
    for (a, b) in sel.cv_error.iter().zip(&sel2.cv_error) {
        assert!((a - b).abs() < 1e-8 * a.max(1e-6));
    }
}

#[test]
fn noiseless_selection_beats_the_null_model() {
    for seed in 0..5 {
        let d = design(20 + seed, 48, 3, 12, 16);
        let truth = sparse_signal(&d, seed);
        let data = MultichannelData::new(truth.clone()).unwrap();
        let sel = cv_select(&data, &d, &FitConfig::default()).unwrap();
        let at_selected = (sel.fit.fitted() - &truth).norm();
        let at_max = truth.norm();
        assert!(at_selected <= at_max);
    }
}

#[test]
fn single_channel_selection_fits_each_channel_alone() {
    let d = design(30, 40, 3, 10, 12);
    let y = noisy(&sparse_signal(&d, 31), 0.2, 32);
    let data = MultichannelData::new(y.clone()).unwrap();
    let fits = fit_single_channel(&data, &d, &FitConfig::default()).unwrap();
    assert_eq!(fits.len(), 3);
    let one = d.with_channels(1).unwrap();
    for (k, fit) in fits.iter().enumerate() {
        let yk = data.channel(k).unwrap();
        let alone = fit_single_channel(&yk, &one, &FitConfig::default()).unwrap();
        assert_eq!(alone[0].lambda, fit.lambda);
        assert_eq!(alone[0].theta, fit.theta);
    }
    let zero = MultichannelData::new(DMatrix::zeros(40, 3)).unwrap();
    for fit in fit_single_channel(&zero, &d, &FitConfig::default()).unwrap() {
        assert!(fit.theta.is_zero());
    }
}

#[test]
fn too_many_folds_is_an_error() {
    let d = design(40, 4, 1, 2, 2);
    let data = MultichannelData::new(DMatrix::from_element(4, 1, 1.0)).unwrap();
    let config = FitConfig { cv_folds: 5, ..Default::default() };
    assert!(cv_select(&data, &d, &config).is_err());
}
