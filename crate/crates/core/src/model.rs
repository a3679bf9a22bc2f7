//! Grouped multichannel design: a shared dictionary `Psi` whose coefficients
//! are common to all channels and a dictionary `Phi` whose coefficients form
//! one group of size `K` per atom.

use nalgebra::{DMatrix, DVector};
use crate::error::{Error, Result};
use crate::frame::{DictionaryMatrix, FrameSpec};

/// The two dictionaries together with the channel count.
///
/// In the flattened coefficient vector `theta = (alpha, beta(1), ..., beta(K))`
/// the first `d1` entries are singleton groups and group `d1 + j` collects
/// `beta(1)_j, ..., beta(K)_j`.
#[derive(Debug, Clone)]
pub struct GroupedDesign {
    psi: DMatrix<f64>,
    phi: DMatrix<f64>,
    channels: usize,
    psi_spec: Option<FrameSpec>,
    phi_spec: Option<FrameSpec>,
}

impl GroupedDesign {
    pub fn new(psi: &DictionaryMatrix, phi: &DictionaryMatrix, channels: usize) -> Result<Self> {
        let mut design = Self::from_matrices(psi.matrix().clone(), phi.matrix().clone(), channels)?;
        design.psi_spec = psi.spec().cloned();
        design.phi_spec = phi.spec().cloned();
        Ok(design)
    }

    /// Builds a design from raw matrices without requiring unit-norm columns.
    /// Columns must still be nonzero.
    pub fn from_matrices(psi: DMatrix<f64>, phi: DMatrix<f64>, channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidParameters("K must be at least 1".into()));
        }
        if psi.nrows() != phi.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "Psi has {} rows, Phi has {}",
                psi.nrows(),
                phi.nrows()
            )));
        }
        if psi.nrows() == 0 || psi.ncols() + phi.ncols() == 0 {
            return Err(Error::DimensionMismatch("empty design".into()));
        }
        for (name, m) in [("Psi", &psi), ("Phi", &phi)] {
            if let Some(g) = m.column_iter().position(|c| c.norm_squared() == 0.0) {
                return Err(Error::InvalidParameters(format!("{name} column {g} is zero")));
            }
        }
        Ok(Self {
            psi,
            phi,
            channels,
            psi_spec: None,
            phi_spec: None,
        })
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn psi_spec(&self) -> Option<&FrameSpec> {
        self.psi_spec.as_ref()
    }

    pub fn phi_spec(&self) -> Option<&FrameSpec> {
        self.phi_spec.as_ref()
    }

    pub fn n(&self) -> usize {
        self.psi.nrows()
    }

    pub fn d1(&self) -> usize {
        self.psi.ncols()
    }

    pub fn d2(&self) -> usize {
        self.phi.ncols()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of groups, `d1 + d2`.
    pub fn group_count(&self) -> usize {
        self.d1() + self.d2()
    }

    /// Length of the flattened coefficient vector, `d1 + K d2`.
    pub fn theta_len(&self) -> usize {
        self.d1() + self.channels * self.d2()
    }

    /// Average group size `G* = (d1 + K d2) / (d1 + d2)`.
    pub fn g_star(&self) -> f64 {
        self.theta_len() as f64 / self.group_count() as f64
    }

    /// Flattened positions of group `g` (0-based).
    pub fn group_indices(&self, g: usize) -> Vec<usize> {
        let (d1, d2) = (self.d1(), self.d2());
        if g < d1 {
            vec![g]
        } else {
            let j = g - d1;
            (0..self.channels).map(|k| d1 + j + k * d2).collect()
        }
    }

    /// Gram matrix of the design columns belonging to group `g`.
    ///
    /// A `Phi` group has Gram `||phi_j||^2 I_K`. A `Psi` singleton repeats
    /// `psi_g` in every channel, so its Gram is `K ||psi_g||^2`.
    pub fn group_gram(&self, g: usize) -> DMatrix<f64> {
        let d1 = self.d1();
        if g < d1 {
            DMatrix::from_element(1, 1, self.channels as f64 * self.psi.column(g).norm_squared())
        } else {
            let s = self.phi.column(g - d1).norm_squared();
            DMatrix::identity(self.channels, self.channels) * s
        }
    }

    /// Restricts both dictionaries to the given rows, keeping column scales.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            psi: self.psi.select_rows(rows),
            phi: self.phi.select_rows(rows),
            channels: self.channels,
            psi_spec: None,
            phi_spec: None,
        }
    }

    /// The same dictionaries with a different channel count.
    pub fn with_channels(&self, channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidParameters("K must be at least 1".into()));
        }
        Ok(Self {
            channels,
            ..self.clone()
        })
    }

    /// The concatenated dictionary `[Psi Phi]`.
    pub fn concatenated(&self) -> DMatrix<f64> {
        let (n, d1, d2) = (self.n(), self.d1(), self.d2());
        let mut omega = DMatrix::zeros(n, d1 + d2);
        omega.columns_mut(0, d1).copy_from(&self.psi);
        omega.columns_mut(d1, d2).copy_from(&self.phi);
        omega
    }

    fn check_theta(&self, theta: &ThetaEstimate) -> Result<()> {
        if theta.alpha.len() != self.d1()
            || theta.beta.nrows() != self.d2()
            || theta.beta.ncols() != self.channels
        {
            return Err(Error::DimensionMismatch(format!(
                "theta is ({}, {}x{}), design expects ({}, {}x{})",
                theta.alpha.len(),
                theta.beta.nrows(),
                theta.beta.ncols(),
                self.d1(),
                self.d2(),
                self.channels
            )));
        }
        Ok(())
    }

    fn check_residual(&self, r: &DMatrix<f64>) -> Result<()> {
        if r.nrows() != self.n() || r.ncols() != self.channels {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{}, design expects {}x{}",
                r.nrows(),
                r.ncols(),
                self.n(),
                self.channels
            )));
        }
        Ok(())
    }
}

/// Coefficients `alpha` (length `d1`) and `beta` (`d2 x K`, column `k` is `beta(k)`).
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaEstimate {
    pub alpha: DVector<f64>,
    pub beta: DMatrix<f64>,
}

impl ThetaEstimate {
    pub fn zeros(design: &GroupedDesign) -> Self {
        Self {
            alpha: DVector::zeros(design.d1()),
            beta: DMatrix::zeros(design.d2(), design.channels()),
        }
    }

    pub fn len(&self) -> usize {
        self.alpha.len() + self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(alpha, beta(1), ..., beta(K))` concatenated.
    pub fn flatten(&self) -> Vec<f64> {
        self.alpha.iter().chain(self.beta.iter()).copied().collect()
    }

    pub fn from_flat(design: &GroupedDesign, flat: &[f64]) -> Result<Self> {
        if flat.len() != design.theta_len() {
            return Err(Error::LengthMismatch {
                expected: design.theta_len(),
                found: flat.len(),
            });
        }
        let d1 = design.d1();
        Ok(Self {
            alpha: DVector::from_column_slice(&flat[..d1]),
            beta: DMatrix::from_column_slice(design.d2(), design.channels(), &flat[d1..]),
        })
    }

    /// Indices of nonzero entries of `alpha`.
    pub fn active_alpha(&self) -> Vec<usize> {
        (0..self.alpha.len()).filter(|&i| self.alpha[i] != 0.0).collect()
    }

    /// Indices `j` whose group `beta_j` has any nonzero entry.
    pub fn active_beta(&self) -> Vec<usize> {
        (0..self.beta.nrows())
            .filter(|&j| self.beta.row(j).iter().any(|&v| v != 0.0))
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.alpha.iter().chain(self.beta.iter()).all(|&v| v == 0.0)
    }
}

/// Observations: column `k` of `y` is channel `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelData {
    y: DMatrix<f64>,
}

impl MultichannelData {
    pub fn new(y: DMatrix<f64>) -> Result<Self> {
        if y.nrows() == 0 || y.ncols() == 0 {
            return Err(Error::Input("empty observation matrix".into()));
        }
        if let Some(pos) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite value at row {}, column {}",
                pos % y.nrows(),
                pos / y.nrows()
            )));
        }
        Ok(Self { y })
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn channels(&self) -> usize {
        self.y.ncols()
    }

    pub fn channel(&self, k: usize) -> Result<Self> {
        Self::new(self.y.columns(k, 1).into_owned())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            y: self.y.select_rows(rows),
        }
    }

    pub(crate) fn check(&self, design: &GroupedDesign) -> Result<()> {
        design.check_residual(&self.y)
    }
}

/// The mixed norm `sqrt(1/G*) sum |alpha_j| + sqrt(K/G*) sum ||beta_j||_2`.
pub fn mixed_norm(theta: &ThetaEstimate, design: &GroupedDesign) -> Result<f64> {
    design.check_theta(theta)?;
    let g = design.g_star();
    let k = design.channels() as f64;
    let l1: f64 = theta.alpha.iter().map(|v| v.abs()).sum();
    let l2: f64 = theta.beta.row_iter().map(|r| r.norm()).sum();
    Ok((1.0 / g).sqrt() * l1 + (k / g).sqrt() * l2)
}

/// Fitted values: column `k` is `Psi alpha + Phi beta(k)`.
pub fn apply_design(theta: &ThetaEstimate, design: &GroupedDesign) -> Result<DMatrix<f64>> {
    design.check_theta(theta)?;
    let shared = design.psi() * &theta.alpha;
    let mut fitted = design.phi() * &theta.beta;
    for mut col in fitted.column_iter_mut() {
        col += &shared;
    }
    Ok(fitted)
}

/// Correlations of a residual with every group's design columns.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCorrelations {
    /// `sum_k <psi_g, r(k)>` for each singleton group.
    pub alpha: DVector<f64>,
    /// Row `j` is `(<phi_j, r(1)>, ..., <phi_j, r(K)>)`.
    pub beta: DMatrix<f64>,
}

pub fn group_correlations(
    residual: &DMatrix<f64>,
    design: &GroupedDesign,
) -> Result<GroupCorrelations> {
    design.check_residual(residual)?;
    let per_channel = design.psi().tr_mul(residual);
    let alpha = DVector::from_iterator(
        per_channel.nrows(),
        per_channel.row_iter().map(|r| r.sum()),
    );
    let beta = design.phi().tr_mul(residual);
    Ok(GroupCorrelations { alpha, beta })
}

/// Per-channel split of a fitted signal into its two components, the common
/// currency for scoring every method.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// `d1 x K`; identical columns for the multichannel estimator.
    pub alpha: DMatrix<f64>,
    /// `d2 x K`.
    pub beta: DMatrix<f64>,
    /// `n x K` low-resonance reconstructions.
    pub low: DMatrix<f64>,
    /// `n x K` high-resonance reconstructions.
    pub high: DMatrix<f64>,
}

impl Decomposition {
    pub fn from_coefficients(
        design: &GroupedDesign,
        alpha: DMatrix<f64>,
        beta: DMatrix<f64>,
    ) -> Result<Self> {
        let k = design.channels();
        if alpha.shape() != (design.d1(), k) || beta.shape() != (design.d2(), k) {
            return Err(Error::DimensionMismatch(format!(
                "coefficients {:?} and {:?} for d1 = {}, d2 = {}, K = {k}",
                alpha.shape(),
                beta.shape(),
                design.d1(),
                design.d2()
            )));
        }
        let low = design.psi() * &alpha;
        let high = design.phi() * &beta;
        Ok(Self {
            alpha,
            beta,
            low,
            high,
        })
    }

    pub fn from_theta(design: &GroupedDesign, theta: &ThetaEstimate) -> Result<Self> {
        design.check_theta(theta)?;
        let k = design.channels();
        let alpha = DMatrix::from_fn(design.d1(), k, |i, _| theta.alpha[i]);
        Self::from_coefficients(design, alpha, theta.beta.clone())
    }

    pub fn fitted(&self) -> DMatrix<f64> {
        &self.low + &self.high
    }

    pub fn channels(&self) -> usize {
        self.low.ncols()
    }
}
