//! Orthonormal real Fourier basis of `R^n`.
//!
//! Components are ordered by frequency: `[dc, cos_1, sin_1, cos_2, sin_2, ...]`,
//! followed by the Nyquist component when `n` is even. Component `i` sits at
//! frequency `(i + 1) / 2`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Kind {
    /// Cosine-like: DC, cosine, or the Nyquist alternating sequence.
    Cos,
    Sin,
}

pub(crate) fn frequency(i: usize) -> usize {
    (i + 1) / 2
}

pub(crate) fn kind(i: usize) -> Kind {
    if i == 0 || i % 2 == 1 {
        Kind::Cos
    } else {
        Kind::Sin
    }
}

/// Index of the component `(freq, kind)` in a length-`n` basis, if it exists.
pub(crate) fn slot(n: usize, freq: usize, kind: Kind) -> Option<usize> {
    if freq == 0 {
        return (kind == Kind::Cos).then_some(0);
    }
    if 2 * freq < n {
        return Some(match kind {
            Kind::Cos => 2 * freq - 1,
            Kind::Sin => 2 * freq,
        });
    }
    if 2 * freq == n && kind == Kind::Cos {
        return Some(n - 1);
    }
    None
}

pub(crate) struct RealFourier {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RealFourier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RealFourier").field("n", &self.n).finish()
    }
}

impl RealFourier {
    pub(crate) fn new(n: usize, planner: &mut FftPlanner<f64>) -> Self {
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    /// Coefficients of `x` in the orthonormal basis.
    pub(crate) fn analyze(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);

        let root_n = (n as f64).sqrt();
        let root_2n = (2.0 / n as f64).sqrt();
        let mut out = vec![0.0; n];
        out[0] = buf[0].re / root_n;
        let mut f = 1;
        while 2 * f < n {
            out[2 * f - 1] = root_2n * buf[f].re;
            out[2 * f] = -root_2n * buf[f].im;
            f += 1;
        }
        if n % 2 == 0 && n > 1 {
            out[n - 1] = buf[n / 2].re / root_n;
        }
        out
    }

    /// Inverse of [`RealFourier::analyze`] (and its transpose).
    pub(crate) fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = self.n;
        debug_assert_eq!(coeffs.len(), n);
        let root_n = (n as f64).sqrt();
        let half = (n as f64 / 2.0).sqrt();
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[0] = Complex64::new(coeffs[0] * root_n, 0.0);
        let mut f = 1;
        while 2 * f < n {
            let z = Complex64::new(coeffs[2 * f - 1], -coeffs[2 * f]) * half;
            buf[f] = z;
            buf[n - f] = z.conj();
            f += 1;
        }
        if n % 2 == 0 && n > 1 {
            buf[n / 2] = Complex64::new(coeffs[n - 1] * root_n, 0.0);
        }
        self.inverse.process(&mut buf);
        buf.iter().map(|z| z.re / n as f64).collect()
    }
}
