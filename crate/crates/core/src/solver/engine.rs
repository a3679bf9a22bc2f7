//! Block coordinate descent on
//!
//! ```text
//! L ||Y - A a 1^T - B C||_F^2 + lambda (w_a sum_g |a_g| + w_b sum_j ||C_j.||_2)
//! ```
//!
//! where `A` holds atoms shared by all `K` channels and row `j` of `C` is a
//! group spanning the channels. Every block update is an exact minimization;
//! correlations with the residual are maintained through precomputed Gram
//! matrices, so checking a zero group costs `O(K)`.

use nalgebra::{DMatrix, DVector};

use crate::model::ThetaEstimate;

/// Gram matrices of one pair of dictionaries restricted to a set of rows.
#[derive(Debug, Clone)]
pub(crate) struct Grams {
    aa: DMatrix<f64>,
    bb: DMatrix<f64>,
    ba: DMatrix<f64>,
    ab: DMatrix<f64>,
}

impl Grams {
    pub(crate) fn new(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Self {
        let ab = a.tr_mul(b);
        Self {
            aa: a.tr_mul(a),
            bb: b.tr_mul(b),
            ba: ab.transpose(),
            ab,
        }
    }

    fn d1(&self) -> usize {
        self.aa.nrows()
    }

    fn d2(&self) -> usize {
        self.bb.nrows()
    }
}

/// Loss scale `L` and the per-block penalty multipliers.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Penalty {
    pub loss_scale: f64,
    pub alpha_weight: f64,
    pub beta_weight: f64,
}

impl Penalty {
    /// `(1/(nK)) ||.||^2 + lambda sqrt(K) (sum |alpha_g| + sum ||beta_j||)`.
    ///
    /// A shared atom appears once per channel in the stacked design, so its
    /// column there has norm `sqrt(K)`; weighting it by `sqrt(K)` is the same
    /// as penalizing the coefficient of the unit-norm stacked column by
    /// `lambda`, which makes every group orthonormal.
    pub(crate) fn multichannel(n: usize, k: usize) -> Self {
        Self {
            loss_scale: 1.0 / (n * k) as f64,
            alpha_weight: (k as f64).sqrt(),
            beta_weight: (k as f64).sqrt(),
        }
    }

    /// `(1/2) ||.||_F^2 + lambda sum ||C_i.||`.
    pub(crate) fn half_squared() -> Self {
        Self {
            loss_scale: 0.5,
            alpha_weight: 1.0,
            beta_weight: 1.0,
        }
    }
}

/// One regression problem: Grams plus data-dependent correlations.
pub(crate) struct Problem<'a> {
    grams: &'a Grams,
    aty: DVector<f64>,
    bty: DMatrix<f64>,
    y_sq: f64,
    k: usize,
    penalty: Penalty,
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub theta: ThetaEstimate,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct StopRule {
    pub max_iterations: usize,
    pub tolerance: f64,
}

struct State<'p, 'a> {
    p: &'p Problem<'a>,
    alpha: DVector<f64>,
    beta: DMatrix<f64>,
    corr_a: DVector<f64>,
    corr_b: DMatrix<f64>,
    t_alpha: f64,
    t_beta: f64,
    lambda: f64,
    scratch: Vec<f64>,
    /// Active `alpha` and `beta` indices while only their correlations are
    /// maintained.
    restricted: Option<(Vec<usize>, Vec<usize>)>,
}

impl<'a> Problem<'a> {
    pub(crate) fn new(
        grams: &'a Grams,
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        y: &DMatrix<f64>,
        penalty: Penalty,
    ) -> Self {
        let aty = DVector::from_iterator(
            a.ncols(),
            a.tr_mul(y).row_iter().map(|r| r.sum()),
        );
        Self {
            grams,
            aty,
            bty: b.tr_mul(y),
            y_sq: y.norm_squared(),
            k: y.ncols(),
            penalty,
        }
    }

    /// Smallest penalty level at which the zero vector is optimal.
    pub(crate) fn lambda_max(&self) -> f64 {
        null_threshold(&self.aty, &self.bty, self.penalty)
    }

    pub(crate) fn zeros(&self) -> ThetaEstimate {
        ThetaEstimate {
            alpha: DVector::zeros(self.grams.d1()),
            beta: DMatrix::zeros(self.grams.d2(), self.k),
        }
    }

    pub(crate) fn solve(&self, lambda: f64, start: ThetaEstimate, stop: StopRule) -> Solution {
        let mut st = State::new(self, lambda, start);
        let mut trace = Vec::new();
        let mut iterations = 0;
        let mut converged = false;
        let all: Vec<usize> = (0..self.grams.d1() + self.grams.d2()).collect();

        while iterations < stop.max_iterations {
            let full_ok = st.sweep(&all, stop.tolerance);
            iterations += 1;
            trace.push(st.objective());
            if full_ok {
                // Clear drift from incremental updates before confirming.
                st.refresh();
                let ok = st.sweep(&all, stop.tolerance);
                iterations += 1;
                trace.push(st.objective());
                if ok {
                    converged = true;
                    break;
                }
                continue;
            }
            // Sweep the nonzero groups until they settle, keeping only their
            // correlations current; the others are recomputed afterwards.
            st.restrict_to_active();
            let active = st.active_list();
            while iterations < stop.max_iterations {
                let ok = st.sweep(&active, stop.tolerance);
                iterations += 1;
                trace.push(st.objective());
                if ok {
                    break;
                }
            }
            st.refresh();
        }

        Solution {
            theta: ThetaEstimate {
                alpha: st.alpha,
                beta: st.beta,
            },
            objective_trace: trace,
            iterations,
            converged,
        }
    }
}

pub(crate) fn null_threshold(aty: &DVector<f64>, bty: &DMatrix<f64>, penalty: Penalty) -> f64 {
    let scale = 2.0 * penalty.loss_scale;
    let a = aty
        .iter()
        .map(|v| scale * v.abs() / penalty.alpha_weight)
        .fold(0.0, f64::max);
    let b = bty
        .row_iter()
        .map(|r| scale * r.norm() / penalty.beta_weight)
        .fold(0.0, f64::max);
    // Nudge upwards so that rounding in the thresholds cannot leave a
    // coefficient of order 1e-17 alive at lambda_max itself.
    a.max(b) * (1.0 + 1e-12)
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

impl<'p, 'a> State<'p, 'a> {
    fn new(p: &'p Problem<'a>, lambda: f64, start: ThetaEstimate) -> Self {
        let scale = 2.0 * p.penalty.loss_scale;
        let mut st = Self {
            p,
            alpha: start.alpha,
            beta: start.beta,
            corr_a: DVector::zeros(0),
            corr_b: DMatrix::zeros(0, 0),
            t_alpha: lambda * p.penalty.alpha_weight / scale,
            t_beta: lambda * p.penalty.beta_weight / scale,
            lambda,
            scratch: Vec::new(),
            restricted: None,
        };
        st.refresh();
        st
    }

    /// Recomputes all residual correlations from the current coefficients and
    /// leaves restricted mode.
    fn refresh(&mut self) {
        let g = self.p.grams;
        let k = self.p.k as f64;
        let beta_sum = DVector::from_iterator(
            self.beta.nrows(),
            self.beta.row_iter().map(|r| r.sum()),
        );
        self.corr_a = &self.p.aty - &g.aa * &self.alpha * k - &g.ab * &beta_sum;
        let shared = &g.ba * &self.alpha;
        let mut corr_b = &self.p.bty - &g.bb * &self.beta;
        for mut col in corr_b.column_iter_mut() {
            col -= &shared;
        }
        self.corr_b = corr_b;
        self.restricted = None;
    }

    fn restrict_to_active(&mut self) {
        let alpha: Vec<usize> = (0..self.alpha.len()).filter(|&g| self.alpha[g] != 0.0).collect();
        let beta: Vec<usize> = (0..self.beta.nrows())
            .filter(|&j| self.beta.row(j).iter().any(|&v| v != 0.0))
            .collect();
        self.restricted = Some((alpha, beta));
    }

    fn active_list(&self) -> Vec<usize> {
        let d1 = self.alpha.len();
        match &self.restricted {
            Some((a, b)) => a.iter().copied().chain(b.iter().map(|j| d1 + j)).collect(),
            None => Vec::new(),
        }
    }

    /// One pass over `groups`; true when the relative change is below `tol`.
    fn sweep(&mut self, groups: &[usize], tol: f64) -> bool {
        let d1 = self.alpha.len();
        let mut change = 0.0;
        for &g in groups {
            change += if g < d1 {
                self.update_alpha(g)
            } else {
                self.update_beta(g - d1)
            };
        }
        let size = self.alpha.norm_squared() + self.beta.norm_squared();
        change <= tol * tol * size
    }

    fn update_alpha(&mut self, g: usize) -> f64 {
        let grams = self.p.grams;
        let k = self.p.k as f64;
        let c = k * grams.aa[(g, g)];
        let old = self.alpha[g];
        let new = soft(self.corr_a[g] + c * old, self.t_alpha) / c;
        let delta = new - old;
        if delta == 0.0 {
            return 0.0;
        }
        self.alpha[g] = new;
        let aa = grams.aa.column(g);
        let ba = grams.ba.column(g);
        match &self.restricted {
            None => {
                self.corr_a.axpy(-k * delta, &aa, 1.0);
                for mut cb in self.corr_b.column_iter_mut() {
                    cb.axpy(-delta, &ba, 1.0);
                }
            }
            Some((act_a, act_b)) => {
                for &i in act_a {
                    self.corr_a[i] -= k * delta * aa[i];
                }
                for ch in 0..self.p.k {
                    let mut cb = self.corr_b.column_mut(ch);
                    for &j in act_b {
                        cb[j] -= delta * ba[j];
                    }
                }
            }
        }
        delta * delta
    }

    fn update_beta(&mut self, j: usize) -> f64 {
        let grams = self.p.grams;
        let kk = self.p.k;
        let c = grams.bb[(j, j)];
        let mut z = std::mem::take(&mut self.scratch);
        z.resize(kk, 0.0);
        let mut norm_sq = 0.0;
        let mut was_zero = true;
        for (k, zk) in z.iter_mut().enumerate() {
            let b = self.beta[(j, k)];
            was_zero &= b == 0.0;
            *zk = self.corr_b[(j, k)] + c * b;
            norm_sq += *zk * *zk;
        }
        let norm = norm_sq.sqrt();
        let shrink = if norm > self.t_beta {
            1.0 - self.t_beta / norm
        } else {
            0.0
        };
        if shrink == 0.0 && was_zero {
            self.scratch = z;
            return 0.0;
        }
        let mut change = 0.0;
        let mut delta_sum = 0.0;
        let bb = grams.bb.column(j);
        for (k, &zk) in z.iter().enumerate() {
            let new = shrink * zk / c;
            let delta = new - self.beta[(j, k)];
            if delta != 0.0 {
                self.beta[(j, k)] = new;
                let mut cb = self.corr_b.column_mut(k);
                match &self.restricted {
                    None => cb.axpy(-delta, &bb, 1.0),
                    Some((_, act_b)) => {
                        for &i in act_b {
                            cb[i] -= delta * bb[i];
                        }
                    }
                }
                change += delta * delta;
                delta_sum += delta;
            }
        }
        if delta_sum != 0.0 {
            let ab = grams.ab.column(j);
            match &self.restricted {
                None => self.corr_a.axpy(-delta_sum, &ab, 1.0),
                Some((act_a, _)) => {
                    for &i in act_a {
                        self.corr_a[i] -= delta_sum * ab[i];
                    }
                }
            }
        }
        self.scratch = z;
        change
    }

    fn objective(&self) -> f64 {
        // ||Y - X theta||^2 = ||Y||^2 - <theta, X^T Y> - <theta, corr>; only
        // correlations of nonzero coefficients enter, and those are current
        // in restricted mode too.
        let ip = self.alpha.dot(&self.p.aty)
            + self.alpha.dot(&self.corr_a)
            + self.beta.dot(&self.p.bty)
            + self.beta.dot(&self.corr_b);
        let rss = (self.p.y_sq - ip).max(0.0);
        let pen = self.p.penalty;
        let l1: f64 = self.alpha.iter().map(|v| v.abs()).sum();
        let l2: f64 = self.beta.row_iter().map(|r| r.norm()).sum();
        pen.loss_scale * rss + self.lambda * (pen.alpha_weight * l1 + pen.beta_weight * l2)
    }
}
