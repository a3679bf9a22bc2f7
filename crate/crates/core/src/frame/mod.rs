//! Rational-dilation wavelet frames.
//!
//! A [`FrameSpec`] `(p, q, s, J, n)` describes a `J`-level filter bank whose
//! low-pass branch resamples by `p/q` and whose high-pass branch resamples by
//! `p/(q s)`. Each level is built in the frequency domain: the input's real
//! Fourier components are routed to the low-pass output (same frequency) and to
//! the high-pass output (frequency shifted down so that the top of the band lands
//! on the output's Nyquist), with weights `H0² + H1² = 1`. Because every route
//! maps orthonormal coefficients into orthonormal coefficients, the analysis
//! operator is an isometry and synthesis is its transpose.
//!
//! Band sizes are rounded up, so levels whose ideal size is fractional carry one
//! extra coefficient; the resulting frame stays tight, only marginally more
//! redundant than `p / (s (q - p))`.

mod fourier;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use fourier::{frequency, kind, slot, RealFourier};

/// Parameters of a rational-dilation wavelet frame, with the derived band sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub p: u32,
    pub q: u32,
    pub s: u32,
    pub levels: u32,
    pub n: usize,
    wavelet_counts: Vec<usize>,
    scaling_count: usize,
}

fn ceil_ratio(n: usize, num: u128, den: u128) -> usize {
    let top = n as u128 * num;
    top.div_ceil(den) as usize
}

impl FrameSpec {
    pub fn new(p: u32, q: u32, s: u32, levels: u32, n: usize) -> Result<Self> {
        if p == 0 || q <= p {
            return Err(Error::InvalidParameters(format!(
                "need q > p >= 1, got p = {p}, q = {q}"
            )));
        }
        if s == 0 || levels == 0 {
            return Err(Error::InvalidParameters(format!(
                "need s >= 1 and J >= 1, got s = {s}, J = {levels}"
            )));
        }
        if n < q as usize {
            return Err(Error::InvalidParameters(format!(
                "signal length {n} is shorter than q = {q}"
            )));
        }
        // The low- and high-pass bands must jointly cover the spectrum,
        // i.e. p/q + p/(q s) >= 1.
        if (p as u64) * (s as u64 + 1) < (q as u64) * (s as u64) {
            return Err(Error::InvalidParameters(format!(
                "p(s + 1) < q s for (p, q, s) = ({p}, {q}, {s}): bands cannot form a tight frame"
            )));
        }
        let overflow = || Error::InvalidParameters("resampling ratio overflows".into());
        let mut wavelet_counts = Vec::with_capacity(levels as usize);
        for j in 1..=levels {
            let num = (p as u128).checked_pow(j).ok_or_else(overflow)?;
            let den = (q as u128)
                .checked_pow(j)
                .and_then(|v| v.checked_mul(s as u128))
                .ok_or_else(overflow)?;
            wavelet_counts.push(ceil_ratio(n, num, den));
        }
        let scaling_count = ceil_ratio(
            n,
            (p as u128).pow(levels),
            (q as u128).checked_pow(levels).ok_or_else(overflow)?,
        );
        if scaling_count == 0 || wavelet_counts.contains(&0) {
            return Err(Error::InvalidParameters("empty coefficient band".into()));
        }
        Ok(Self {
            p,
            q,
            s,
            levels,
            n,
            wavelet_counts,
            scaling_count,
        })
    }

    /// Wavelet coefficient count of levels `1..=J`.
    pub fn wavelet_counts(&self) -> &[usize] {
        &self.wavelet_counts
    }

    pub fn scaling_count(&self) -> usize {
        self.scaling_count
    }

    /// Total coefficient count `d`.
    pub fn total_count(&self) -> usize {
        self.scaling_count + self.wavelet_counts.iter().sum::<usize>()
    }

    /// Length of the low-pass signal after `j` levels (`j = 0` is the input).
    pub fn lowpass_len(&self, j: u32) -> usize {
        if j == 0 {
            self.n
        } else {
            ceil_ratio(self.n, (self.p as u128).pow(j), (self.q as u128).pow(j))
        }
    }

    pub fn redundancy(&self) -> f64 {
        self.total_count() as f64 / self.n as f64
    }
}

/// Frame coefficients: wavelet blocks for levels `1..=J`, then the scaling block.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    data: Vec<f64>,
    offsets: Vec<usize>,
}

impl CoefficientVector {
    fn layout(spec: &FrameSpec) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(spec.wavelet_counts.len() + 2);
        let mut at = 0;
        offsets.push(0);
        for &c in &spec.wavelet_counts {
            at += c;
            offsets.push(at);
        }
        offsets.push(at + spec.scaling_count);
        offsets
    }

    pub fn zeros(spec: &FrameSpec) -> Self {
        Self {
            data: vec![0.0; spec.total_count()],
            offsets: Self::layout(spec),
        }
    }

    pub fn from_vec(spec: &FrameSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != spec.total_count() {
            return Err(Error::LayoutMismatch(format!(
                "{} coefficients for a frame with d = {}",
                data.len(),
                spec.total_count()
            )));
        }
        Ok(Self {
            data,
            offsets: Self::layout(spec),
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn levels(&self) -> usize {
        self.offsets.len() - 2
    }

    /// Wavelet block of level `j` (1-based).
    pub fn wavelet(&self, j: usize) -> &[f64] {
        &self.data[self.offsets[j - 1]..self.offsets[j]]
    }

    fn wavelet_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[self.offsets[j - 1]..self.offsets[j]]
    }

    pub fn scaling(&self) -> &[f64] {
        let l = self.offsets.len();
        &self.data[self.offsets[l - 2]..self.offsets[l - 1]]
    }

    fn scaling_mut(&mut self) -> &mut [f64] {
        let l = self.offsets.len();
        &mut self.data[self.offsets[l - 2]..self.offsets[l - 1]]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    fn matches(&self, spec: &FrameSpec) -> bool {
        self.offsets == Self::layout(spec)
    }
}

#[derive(Debug, Clone, Copy)]
struct Route {
    input: usize,
    output: usize,
    weight: f64,
}

#[derive(Debug)]
struct Level {
    input_len: usize,
    low_len: usize,
    high_len: usize,
    low: Vec<Route>,
    high: Vec<Route>,
}

/// Transition profile with `theta(w)^2 + theta(pi - w)^2 = 1`, `theta(0) = 1`,
/// `theta(pi) = 0`, flat to second order at both ends.
fn transition(w: f64) -> f64 {
    0.5 * (1.0 + w.cos()) * (2.0 - w.cos()).sqrt()
}

impl Level {
    fn new(input_len: usize, low_len: usize, high_len: usize) -> Result<Self> {
        debug_assert!(low_len <= input_len && high_len <= input_len);
        let shift = (input_len - high_len).div_ceil(2);
        let low_slot = |i: usize| slot(low_len, frequency(i), kind(i));
        let high_slot = |i: usize| {
            frequency(i)
                .checked_sub(shift)
                .and_then(|f| slot(high_len, f, kind(i)))
        };

        let top = input_len / 2;
        let comps = |f: usize| -> Vec<usize> {
            [fourier::Kind::Cos, fourier::Kind::Sin]
                .into_iter()
                .filter_map(|k| slot(input_len, f, k))
                .collect()
        };
        let low_full = |f: usize| comps(f).into_iter().all(|i| low_slot(i).is_some());
        let high_full = |f: usize| comps(f).into_iter().all(|i| high_slot(i).is_some());

        let both: Vec<usize> = (0..=top).filter(|&f| low_full(f) && high_full(f)).collect();
        let (edge_lo, edge_hi) = match (both.first(), both.last()) {
            (Some(&a), Some(&b)) => (a as f64 - 1.0, b as f64 + 1.0),
            _ => (0.0, 0.0),
        };

        let mut low = Vec::new();
        let mut high = Vec::new();
        let mut used_low = vec![false; low_len];
        let mut used_high = vec![false; high_len];
        let mut leftover = Vec::new();

        for f in 0..=top {
            let in_both = low_full(f) && high_full(f);
            for i in comps(f) {
                if in_both {
                    let t = (f as f64 - edge_lo) / (edge_hi - edge_lo);
                    let (o_lo, o_hi) = (low_slot(i).unwrap(), high_slot(i).unwrap());
                    let w0 = transition(std::f64::consts::PI * t);
                    let w1 = transition(std::f64::consts::PI * (1.0 - t));
                    low.push(Route { input: i, output: o_lo, weight: w0 });
                    high.push(Route { input: i, output: o_hi, weight: w1 });
                    used_low[o_lo] = true;
                    used_high[o_hi] = true;
                } else if let Some(o) = low_slot(i).filter(|&o| !used_low[o]) {
                    low.push(Route { input: i, output: o, weight: 1.0 });
                    used_low[o] = true;
                } else if let Some(o) = high_slot(i).filter(|&o| !used_high[o]) {
                    high.push(Route { input: i, output: o, weight: 1.0 });
                    used_high[o] = true;
                } else {
                    leftover.push(i);
                }
            }
        }

        // Parity mismatches between band sizes can leave a component at the
        // band edge without a same-kind slot; give it the nearest free one.
        for i in leftover {
            let f = frequency(i) as f64;
            let best_low = (0..low_len)
                .filter(|&o| !used_low[o])
                .map(|o| ((frequency(o) as f64 - f).abs(), o))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            let best_high = (0..high_len)
                .filter(|&o| !used_high[o])
                .map(|o| (((frequency(o) + shift) as f64 - f).abs(), o))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            match (best_low, best_high) {
                (Some((dl, o)), Some((dh, _))) if dl <= dh => {
                    low.push(Route { input: i, output: o, weight: 1.0 });
                    used_low[o] = true;
                }
                (_, Some((_, o))) => {
                    high.push(Route { input: i, output: o, weight: 1.0 });
                    used_high[o] = true;
                }
                (Some((_, o)), None) => {
                    low.push(Route { input: i, output: o, weight: 1.0 });
                    used_low[o] = true;
                }
                (None, None) => {
                    return Err(Error::InvalidParameters(format!(
                        "level {input_len} -> ({low_len}, {high_len}) cannot hold every frequency"
                    )))
                }
            }
        }

        Ok(Self {
            input_len,
            low_len,
            high_len,
            low,
            high,
        })
    }
}

/// Prepared analysis/synthesis operators for one [`FrameSpec`].
#[derive(Debug)]
pub struct Radwt {
    spec: FrameSpec,
    levels: Vec<Level>,
    fourier: BTreeMap<usize, RealFourier>,
}

impl Radwt {
    pub fn new(spec: &FrameSpec) -> Result<Self> {
        let mut levels = Vec::with_capacity(spec.levels as usize);
        for j in 1..=spec.levels {
            levels.push(Level::new(
                spec.lowpass_len(j - 1),
                spec.lowpass_len(j),
                spec.wavelet_counts[j as usize - 1],
            )?);
        }
        let mut planner = FftPlanner::new();
        let mut fourier = BTreeMap::new();
        for level in &levels {
            for len in [level.input_len, level.low_len, level.high_len] {
                fourier
                    .entry(len)
                    .or_insert_with(|| RealFourier::new(len, &mut planner));
            }
        }
        Ok(Self {
            spec: spec.clone(),
            levels,
            fourier,
        })
    }

    pub fn spec(&self) -> &FrameSpec {
        &self.spec
    }

    fn basis(&self, len: usize) -> &RealFourier {
        &self.fourier[&len]
    }

    pub fn analyze(&self, signal: &[f64]) -> Result<CoefficientVector> {
        if signal.len() != self.spec.n {
            return Err(Error::LengthMismatch {
                expected: self.spec.n,
                found: signal.len(),
            });
        }
        let mut out = CoefficientVector::zeros(&self.spec);
        let mut current = signal.to_vec();
        for (j, level) in self.levels.iter().enumerate() {
            let spectrum = self.basis(level.input_len).analyze(&current);
            let mut low = vec![0.0; level.low_len];
            let mut high = vec![0.0; level.high_len];
            for r in &level.low {
                low[r.output] += r.weight * spectrum[r.input];
            }
            for r in &level.high {
                high[r.output] += r.weight * spectrum[r.input];
            }
            let band = self.basis(level.high_len).synthesize(&high);
            out.wavelet_mut(j + 1).copy_from_slice(&band);
            current = self.basis(level.low_len).synthesize(&low);
        }
        out.scaling_mut().copy_from_slice(&current);
        Ok(out)
    }

    pub fn synthesize(&self, coeffs: &CoefficientVector) -> Result<Vec<f64>> {
        if !coeffs.matches(&self.spec) {
            return Err(Error::LayoutMismatch(format!(
                "{} coefficients in {} levels, frame expects d = {} in {} levels",
                coeffs.len(),
                coeffs.levels(),
                self.spec.total_count(),
                self.spec.levels
            )));
        }
        let mut current = coeffs.scaling().to_vec();
        for (j, level) in self.levels.iter().enumerate().rev() {
            let low = self.basis(level.low_len).analyze(&current);
            let high = self.basis(level.high_len).analyze(coeffs.wavelet(j + 1));
            let mut spectrum = vec![0.0; level.input_len];
            for r in &level.low {
                spectrum[r.input] += r.weight * low[r.output];
            }
            for r in &level.high {
                spectrum[r.input] += r.weight * high[r.output];
            }
            current = self.basis(level.input_len).synthesize(&spectrum);
        }
        Ok(current)
    }
}

/// Frame analysis with periodic boundary handling.
pub fn analyze(signal: &[f64], spec: &FrameSpec) -> Result<CoefficientVector> {
    Radwt::new(spec)?.analyze(signal)
}

/// Frame synthesis, the transpose of [`analyze`].
pub fn synthesize(coeffs: &CoefficientVector, spec: &FrameSpec) -> Result<Vec<f64>> {
    Radwt::new(spec)?.synthesize(coeffs)
}

/// An `n x d` dictionary whose columns have unit Euclidean norm.
#[derive(Debug, Clone)]
pub struct DictionaryMatrix {
    matrix: DMatrix<f64>,
    spec: Option<FrameSpec>,
    norms: Vec<f64>,
}

impl DictionaryMatrix {
    /// Rescales every column of `raw` to unit norm, remembering the factors.
    pub fn from_raw(raw: DMatrix<f64>) -> Result<Self> {
        let mut matrix = raw;
        let mut norms = Vec::with_capacity(matrix.ncols());
        for (g, mut col) in matrix.column_iter_mut().enumerate() {
            let norm = col.norm();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::InvalidParameters(format!(
                    "dictionary column {g} has norm {norm}"
                )));
            }
            col /= norm;
            norms.push(norm);
        }
        Ok(Self {
            matrix,
            spec: None,
            norms,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn spec(&self) -> Option<&FrameSpec> {
        self.spec.as_ref()
    }

    /// Norms of the raw columns before rescaling.
    pub fn normalization(&self) -> &[f64] {
        &self.norms
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }
}

/// Materializes the synthesis operator of `spec` column by column and rescales
/// each column to unit norm.
pub fn frame_matrix(spec: &FrameSpec) -> Result<DictionaryMatrix> {
    let radwt = Radwt::new(spec)?;
    let d = spec.total_count();
    let columns: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|g| {
            let mut e = CoefficientVector::zeros(spec);
            e.as_mut_slice()[g] = 1.0;
            radwt.synthesize(&e)
        })
        .collect::<Result<_>>()?;
    let raw = DMatrix::from_fn(spec.n, d, |i, g| columns[g][i]);
    let mut dict = DictionaryMatrix::from_raw(raw)?;
    dict.spec = Some(spec.clone());
    Ok(dict)
}
