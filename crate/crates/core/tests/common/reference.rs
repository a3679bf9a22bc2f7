//! Reference solvers that share no code with the library: accelerated
//! proximal gradient on an explicitly materialized design.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// `loss ||y - X theta||^2 + lambda sum_g w_g ||theta_g||_2`.
pub struct GroupProblem {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub loss: f64,
    pub groups: Vec<(Vec<usize>, f64)>,
}

impl GroupProblem {
    pub fn objective(&self, theta: &DVector<f64>, lambda: f64) -> f64 {
        let r = &self.y - &self.x * theta;
        let pen: f64 = self
            .groups
            .iter()
            .map(|(idx, w)| w * idx.iter().map(|&i| theta[i] * theta[i]).sum::<f64>().sqrt())
            .sum();
        self.loss * r.norm_squared() + lambda * pen
    }

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.x.tr_mul(&(&self.x * theta - &self.y)) * (2.0 * self.loss)
    }

    fn prox(&self, v: &DVector<f64>, t: f64) -> DVector<f64> {
        let mut out = v.clone();
        for (idx, w) in &self.groups {
            let norm = idx.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt();
            let shrink = if norm > t * w { 1.0 - t * w / norm } else { 0.0 };
            for &i in idx {
                out[i] = shrink * v[i];
            }
        }
        out
    }

    /// FISTA with gradient-based restarts and step `1 / Lipschitz`.
    pub fn solve(&self, lambda: f64, iterations: usize) -> DVector<f64> {
        let sv = self.x.clone().singular_values();
        let lip = 2.0 * self.loss * sv.max().powi(2);
        let step = 1.0 / lip;
        let p = self.x.ncols();
        let mut theta = DVector::zeros(p);
        let mut z = theta.clone();
        let mut t = 1.0f64;
        for _ in 0..iterations {
            let g = self.gradient(&z);
            let next = self.prox(&(&z - g * step), step * lambda);
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            // Restart the momentum when it points uphill.
            if (&z - &next).dot(&(&next - &theta)) > 0.0 {
                z = next.clone();
                t = 1.0;
            } else {
                z = &next + (&next - &theta) * ((t - 1.0) / t_next);
                t = t_next;
            }
            theta = next;
        }
        theta
    }

    /// Largest violation of the subgradient optimality conditions.
    pub fn kkt(&self, theta: &DVector<f64>, lambda: f64) -> f64 {
        let g = self.gradient(theta);
        let mut worst: f64 = 0.0;
        for (idx, w) in &self.groups {
            let norm = idx.iter().map(|&i| theta[i] * theta[i]).sum::<f64>().sqrt();
            let v = if norm > 0.0 {
                idx.iter()
                    .map(|&i| (g[i] + lambda * w * theta[i] / norm).powi(2))
                    .sum::<f64>()
                    .sqrt()
            } else {
                (idx.iter().map(|&i| g[i] * g[i]).sum::<f64>().sqrt() - lambda * w).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }
}

/// The multichannel problem written on the stacked design with unit-norm
/// columns: a shared atom's column is `(psi, ..., psi) / sqrt(K)` and the
/// penalty is `lambda sqrt(G*) ||theta||_{2,1}`, whose group weights reduce
/// to 1 for singletons and `sqrt(K)` for the `K`-groups. Coefficients are
/// ordered `(alpha~, beta(1), ..., beta(K))` with `alpha~ = sqrt(K) alpha`.
pub fn multichannel(psi: &DMatrix<f64>, phi: &DMatrix<f64>, y: &DMatrix<f64>) -> GroupProblem {
    let (n, d1, d2, k) = (psi.nrows(), psi.ncols(), phi.ncols(), y.ncols());
    let kf = k as f64;
    let mut x = DMatrix::zeros(n * k, d1 + k * d2);
    for ch in 0..k {
        for g in 0..d1 {
            for i in 0..n {
                x[(ch * n + i, g)] = psi[(i, g)] / kf.sqrt();
            }
        }
        for j in 0..d2 {
            for i in 0..n {
                x[(ch * n + i, d1 + ch * d2 + j)] = phi[(i, j)];
            }
        }
    }
    let g_star = (d1 + k * d2) as f64 / (d1 + d2) as f64;
    let mut groups = Vec::new();
    for g in 0..d1 {
        groups.push((vec![g], g_star.sqrt() * (1.0 / g_star).sqrt()));
    }
    for j in 0..d2 {
        let idx = (0..k).map(|ch| d1 + ch * d2 + j).collect();
        groups.push((idx, g_star.sqrt() * (kf / g_star).sqrt()));
    }
    GroupProblem {
        x,
        y: DVector::from_column_slice(y.as_slice()),
        loss: 1.0 / (n * k) as f64,
        groups,
    }
}

/// Splits a multichannel reference solution into `(alpha, beta)` in model units.
pub fn split_multichannel(theta: &DVector<f64>, d1: usize, d2: usize, k: usize) -> (DVector<f64>, DMatrix<f64>) {
    let alpha = theta.rows(0, d1) / (k as f64).sqrt();
    let beta = DMatrix::from_fn(d2, k, |j, ch| theta[d1 + ch * d2 + j]);
    (alpha, beta)
}

/// `(1/n) ||y - [Psi Phi] b||^2 + lambda ||b||_1`.
pub fn single_channel(psi: &DMatrix<f64>, phi: &DMatrix<f64>, y: &DVector<f64>) -> GroupProblem {
    let (n, d1, d2) = (psi.nrows(), psi.ncols(), phi.ncols());
    let mut x = DMatrix::zeros(n, d1 + d2);
    x.columns_mut(0, d1).copy_from(psi);
    x.columns_mut(d1, d2).copy_from(phi);
    GroupProblem {
        x,
        y: y.clone(),
        loss: 1.0 / n as f64,
        groups: (0..d1 + d2).map(|i| (vec![i], 1.0)).collect(),
    }
}

/// `(1/2) ||S - Omega C||_F^2 + lambda sum_i ||C_i.||`, with `C` vectorized
/// column by column.
pub fn row_sparse(omega: &DMatrix<f64>, s: &DMatrix<f64>) -> GroupProblem {
    let (n, m, k) = (omega.nrows(), omega.ncols(), s.ncols());
    let mut x = DMatrix::zeros(n * k, m * k);
    for ch in 0..k {
        x.view_mut((ch * n, ch * m), (n, m)).copy_from(omega);
    }
    GroupProblem {
        x,
        y: DVector::from_column_slice(s.as_slice()),
        loss: 0.5,
        groups: (0..m).map(|i| ((0..k).map(|ch| ch * m + i).collect(), 1.0)).collect(),
    }
}

/// Exact lasso minimum by enumerating sign patterns: for signs `s` on a
/// support `S`, stationarity gives `b_S = (X_S^T X_S)^{-1} (X_S^T y - (lambda / (2 loss)) s)`,
/// kept when its signs agree with `s`.
pub fn lasso_brute_force(x: &DMatrix<f64>, y: &DVector<f64>, loss: f64, lambda: f64) -> f64 {
    let p = x.ncols();
    let mut best = loss * y.norm_squared();
    let patterns = 3usize.pow(p as u32);
    for code in 1..patterns {
        let mut c = code;
        let mut support = Vec::new();
        let mut signs = Vec::new();
        for i in 0..p {
            match c % 3 {
                1 => {
                    support.push(i);
                    signs.push(1.0);
                }
                2 => {
                    support.push(i);
                    signs.push(-1.0);
                }
                _ => {}
            }
            c /= 3;
        }
        let xs = x.select_columns(&support);
        let gram = xs.tr_mul(&xs);
        let rhs = xs.tr_mul(y) - DVector::from_vec(signs.clone()) * (lambda / (2.0 * loss));
        let Some(b) = gram.lu().solve(&rhs) else { continue };
        if b.iter().zip(&signs).all(|(v, s)| v * s > 0.0) {
            let r = y - &xs * &b;
            let obj = loss * r.norm_squared() + lambda * b.iter().map(|v| v.abs()).sum::<f64>();
            best = best.min(obj);
        }
    }
    best
}

/// Random matrix with unit-norm Gaussian columns.
pub fn unit_columns(rows: usize, cols: usize, rng: &mut impl rand::Rng) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    for mut c in m.column_iter_mut() {
        let norm = c.norm();
        c /= norm;
    }
    m
}
