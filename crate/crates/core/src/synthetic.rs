//! Synthetic multichannel scenarios with known ground truth, the performance
//! indicators used to compare estimators, and a replicated benchmark driver.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{frame_matrix, FrameSpec};
use crate::model::{Decomposition, GroupedDesign, MultichannelData, ThetaEstimate};
use crate::solver::{CvPlan, FitConfig};
use crate::ssa::{somp_cv, BcdPlan, SsaProblem};

/// Low-resonance dictionary parameters `(p, q, s, J)`.
pub const LOW_PARAMS: (u32, u32, u32, u32) = (1, 2, 1, 4);
/// High-resonance dictionary parameters `(p, q, s, J)`.
pub const HIGH_PARAMS: (u32, u32, u32, u32) = (8, 9, 3, 10);

/// The two frame parameter sets used by the synthetic scenarios.
pub fn standard_specs(n: usize) -> Result<(FrameSpec, FrameSpec)> {
    let (p, q, s, j) = LOW_PARAMS;
    let low = FrameSpec::new(p, q, s, j, n)?;
    let (p, q, s, j) = HIGH_PARAMS;
    let high = FrameSpec::new(p, q, s, j, n)?;
    Ok((low, high))
}

/// Builds `Psi` and `Phi` from the standard frame parameters.
pub fn standard_design(n: usize, channels: usize) -> Result<GroupedDesign> {
    let (low, high) = standard_specs(n)?;
    GroupedDesign::new(&frame_matrix(&low)?, &frame_matrix(&high)?, channels)
}

/// Whether the noiseless signal is shared by all replications or redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SignalMode {
    #[default]
    Fixed,
    Redraw,
}

mod snr_format {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub scenario: u8,
    /// Ratio of mean noiseless channel variance to noise variance; `inf`
    /// gives noiseless data.
    #[serde(with = "snr_format")]
    pub snr: f64,
    pub channels: usize,
    pub n: usize,
    pub seed: u64,
    /// Forces the high-resonance coefficients of the third channel to zero.
    pub zero_third_channel: bool,
    pub replications: usize,
    pub signal_mode: SignalMode,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: 1,
            snr: 1.5,
            channels: 3,
            n: 256,
            seed: 0,
            zero_third_channel: false,
            replications: 100,
            signal_mode: SignalMode::Fixed,
        }
    }
}

impl ScenarioConfig {
    /// `|S_alpha| = |S_beta|` for the configured scenario.
    pub fn support_size(&self) -> Result<usize> {
        match self.scenario {
            1 => Ok(24),
            2 => Ok(12),
            3 => Ok(6),
            other => Err(Error::InvalidScenario(other)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.support_size()?;
        if !(self.snr > 0.0) {
            return Err(Error::InvalidParameters(format!("SNR must be positive, got {}", self.snr)));
        }
        if self.channels == 0 || self.replications == 0 {
            return Err(Error::InvalidParameters(
                "channels and replications must be positive".into(),
            ));
        }
        if self.zero_third_channel && self.channels < 3 {
            return Err(Error::InvalidParameters(
                "zero_third_channel needs at least 3 channels".into(),
            ));
        }
        Ok(())
    }
}

/// Observations together with every ground-truth quantity behind them.
#[derive(Debug, Clone)]
pub struct ScenarioDataset {
    pub data: MultichannelData,
    pub c_true: DVector<f64>,
    pub u_true: DMatrix<f64>,
    pub theta0: ThetaEstimate,
    pub support_alpha: Vec<usize>,
    pub support_beta: Vec<usize>,
    /// Channels whose high-resonance part is identically zero.
    pub zero_channels: Vec<usize>,
    pub sigma: f64,
    /// Upper end of the uniform law of the high-resonance coefficients.
    pub beta_scale: f64,
}

impl ScenarioDataset {
    /// `c + u(k)` for every channel.
    pub fn signal(&self) -> DMatrix<f64> {
        let mut f = self.u_true.clone();
        for mut col in f.column_iter_mut() {
            col += &self.c_true;
        }
        f
    }
}

struct Signal {
    c: DVector<f64>,
    u: DMatrix<f64>,
    theta0: ThetaEstimate,
    support_alpha: Vec<usize>,
    support_beta: Vec<usize>,
    zero_channels: Vec<usize>,
    beta_scale: f64,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn draw_signal(config: &ScenarioConfig, design: &GroupedDesign, rng: &mut ChaCha8Rng) -> Result<Signal> {
    let size = config.support_size()?;
    let (d1, d2, k) = (design.d1(), design.d2(), design.channels());
    if size > d1 || size > d2 {
        return Err(Error::InvalidParameters(format!(
            "support size {size} exceeds dictionary size ({d1}, {d2})"
        )));
    }
    let mut support_alpha = sample(rng, d1, size).into_vec();
    support_alpha.sort_unstable();
    let mut support_beta = sample(rng, d2, size).into_vec();
    support_beta.sort_unstable();

    let mut alpha = DVector::zeros(d1);
    for &j in &support_alpha {
        alpha[j] = 1.0;
    }
    let c = design.psi() * &alpha;
    let c_max = c.amax();
    // Largest absolute entry of the selected atoms.
    let phi_norm = design.phi().select_columns(&support_beta).amax();
    let beta_scale = c_max / phi_norm;
    let zero_channels: Vec<usize> = if config.zero_third_channel { vec![2] } else { vec![] };

    let mut beta = DMatrix::zeros(d2, k);
    let law = Uniform::new(0.0, beta_scale).map_err(|e| Error::InvalidParameters(e.to_string()))?;
    for ch in 0..k {
        for &j in &support_beta {
            let v = law.sample(rng);
            if !zero_channels.contains(&ch) {
                beta[(j, ch)] = v;
            }
        }
    }
    let u = design.phi() * &beta;
    Ok(Signal {
        c,
        u,
        theta0: ThetaEstimate { alpha, beta },
        support_alpha,
        support_beta,
        zero_channels,
        beta_scale,
    })
}

fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Mean over channels of the empirical variance of `signal` columns divided by
/// `sigma^2`.
pub fn empirical_snr(signal: &DMatrix<f64>, sigma: f64) -> f64 {
    let k = signal.ncols() as f64;
    let mean_var = signal
        .column_iter()
        .map(|c| sample_variance(c.as_slice()))
        .sum::<f64>()
        / k;
    mean_var / (sigma * sigma)
}

/// Dataset of replication 0.
pub fn generate(config: &ScenarioConfig, design: &GroupedDesign) -> Result<ScenarioDataset> {
    generate_replication(config, design, 0)
}

/// Dataset of replication `r`. The noise always comes from a stream owned by
/// `(seed, r)`; the noiseless signal does too in [`SignalMode::Redraw`] and is
/// shared by all replications otherwise.
pub fn generate_replication(
    config: &ScenarioConfig,
    design: &GroupedDesign,
    r: usize,
) -> Result<ScenarioDataset> {
    config.validate()?;
    if design.n() != config.n || design.channels() != config.channels {
        return Err(Error::DimensionMismatch(format!(
            "design is n = {}, K = {}; scenario asks for n = {}, K = {}",
            design.n(),
            design.channels(),
            config.n,
            config.channels
        )));
    }
    let signal_stream = match config.signal_mode {
        SignalMode::Fixed => 0,
        SignalMode::Redraw => 2 * r as u64 + 2,
    };
    let sig = draw_signal(config, design, &mut stream(config.seed, signal_stream))?;
    let mut f = sig.u.clone();
    for mut col in f.column_iter_mut() {
        col += &sig.c;
    }
    let sigma = if config.snr.is_infinite() {
        0.0
    } else {
        let k = f.ncols() as f64;
        let mean_var = f
            .column_iter()
            .map(|c| sample_variance(c.as_slice()))
            .sum::<f64>()
            / k;
        (mean_var / config.snr).sqrt()
    };
    let mut y = f;
    if sigma > 0.0 {
        let mut rng = stream(config.seed, 2 * r as u64 + 1);
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameters(e.to_string()))?;
        for v in y.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(ScenarioDataset {
        data: MultichannelData::new(y)?,
        c_true: sig.c,
        u_true: sig.u,
        theta0: sig.theta0,
        support_alpha: sig.support_alpha,
        support_beta: sig.support_beta,
        zero_channels: sig.zero_channels,
        sigma,
        beta_scale: sig.beta_scale,
    })
}

/// Indicators of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub rmse: f64,
    pub rmse_low: f64,
    pub rmse_high: f64,
    pub tp_low: usize,
    pub fn_low: usize,
    /// `None` for a channel whose true high-resonance part is zero.
    pub tp_high: Option<usize>,
    pub fn_high: Option<usize>,
    /// Nonzero high-resonance coefficients of a channel whose truth is zero.
    pub fp_high: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub channels: Vec<ChannelMetrics>,
    pub support_alpha: usize,
    pub support_beta: usize,
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn score(estimate: &Decomposition, truth: &ScenarioDataset) -> Result<MetricsReport> {
    let (n, k) = truth.u_true.shape();
    if estimate.low.shape() != (n, k)
        || estimate.alpha.nrows() != truth.theta0.alpha.len()
        || estimate.beta.nrows() != truth.theta0.beta.nrows()
    {
        return Err(Error::DimensionMismatch(format!(
            "estimate has {:?} reconstructions, truth is {n}x{k}",
            estimate.low.shape()
        )));
    }
    let f_true = truth.signal();
    let f_hat = estimate.fitted();
    let channels = (0..k)
        .map(|ch| {
            let alpha = estimate.alpha.column(ch);
            let beta = estimate.beta.column(ch);
            let tp_low = truth.support_alpha.iter().filter(|&&j| alpha[j] != 0.0).count();
            let is_zero = truth.zero_channels.contains(&ch);
            let (tp_high, fn_high, fp_high) = if is_zero {
                (None, None, Some(beta.iter().filter(|&&v| v != 0.0).count()))
            } else {
                let tp = truth.support_beta.iter().filter(|&&j| beta[j] != 0.0).count();
                (Some(tp), Some(truth.support_beta.len() - tp), None)
            };
            ChannelMetrics {
                rmse: rmse(f_hat.column(ch).as_slice(), f_true.column(ch).as_slice()),
                rmse_low: rmse(estimate.low.column(ch).as_slice(), truth.c_true.as_slice()),
                rmse_high: rmse(
                    estimate.high.column(ch).as_slice(),
                    truth.u_true.column(ch).as_slice(),
                ),
                tp_low,
                fn_low: truth.support_alpha.len() - tp_low,
                tp_high,
                fn_high,
                fp_high,
            }
        })
        .collect();
    Ok(MetricsReport {
        channels,
        support_alpha: truth.support_alpha.len(),
        support_beta: truth.support_beta.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SingleC,
    MultiC,
    Bcd,
    Somp,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::SingleC, Method::MultiC, Method::Bcd, Method::Somp];

    pub fn name(self) -> &'static str {
        match self {
            Method::SingleC => "single-c",
            Method::MultiC => "multi-c",
            Method::Bcd => "bcd",
            Method::Somp => "somp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameters(format!("unknown method '{s}'")))
    }
}

/// Settings shared by every replication of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkOptions {
    pub methods: Vec<Method>,
    pub fit: FitConfig,
    /// Largest SOMP budget considered by cross-validation.
    pub somp_max_budget: usize,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            methods: vec![Method::SingleC, Method::MultiC],
            fit: FitConfig::default(),
            somp_max_budget: 100,
        }
    }
}

/// Reusable fitting machinery for one design.
pub struct Estimators {
    design: GroupedDesign,
    grouped: CvPlan,
    bcd: Option<BcdPlan>,
    omega: DMatrix<f64>,
    options: BenchmarkOptions,
}

impl Estimators {
    pub fn new(design: &GroupedDesign, options: &BenchmarkOptions) -> Result<Self> {
        options.fit.validate()?;
        let omega = design.concatenated();
        let bcd = if options.methods.contains(&Method::Bcd) {
            Some(BcdPlan::new(&omega, &options.fit)?)
        } else {
            None
        };
        Ok(Self {
            design: design.clone(),
            grouped: CvPlan::for_design(design, &options.fit)?,
            bcd,
            omega,
            options: options.clone(),
        })
    }

    pub fn design(&self) -> &GroupedDesign {
        &self.design
    }

    /// Cross-validated fit of `method`; the flag reports convergence.
    pub fn fit(&self, method: Method, data: &MultichannelData) -> Result<(Decomposition, bool)> {
        let design = &self.design;
        let fit = &self.options.fit;
        let (d1, d2) = (design.d1(), design.d2());
        let split = |c: &DMatrix<f64>| {
            Decomposition::from_coefficients(
                design,
                c.rows(0, d1).into_owned(),
                c.rows(d1, d2).into_owned(),
            )
        };
        match method {
            Method::MultiC => {
                let sel = self.grouped.select(data, design, fit)?;
                Ok((Decomposition::from_theta(design, &sel.fit.theta)?, sel.fit.converged))
            }
            Method::SingleC => {
                let fits = self.grouped.select_single(data, design, fit)?;
                let k = fits.len();
                let alpha = DMatrix::from_fn(d1, k, |i, ch| fits[ch].fit.theta.alpha[i]);
                let beta = DMatrix::from_fn(d2, k, |i, ch| fits[ch].fit.theta.beta[(i, 0)]);
                let converged = fits.iter().all(|s| s.fit.converged);
                Ok((Decomposition::from_coefficients(design, alpha, beta)?, converged))
            }
            Method::Bcd => {
                let plan = match &self.bcd {
                    Some(p) => p,
                    None => &BcdPlan::new(&self.omega, fit)?,
                };
                let cv = plan.select(data.y(), fit)?;
                Ok((split(&cv.result.coefficients)?, cv.result.converged))
            }
            Method::Somp => {
                let problem = SsaProblem::new(data.y().clone(), self.omega.clone())?;
                let cv = somp_cv(&problem, self.options.somp_max_budget, fit)?;
                Ok((split(&cv.result.coefficients)?, !cv.result.rank_deficient))
            }
        }
    }
}

/// One indicator of one channel in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub method: Method,
    pub channel: usize,
    pub indicator: String,
    pub value: f64,
    pub converged: bool,
}

/// Mean and standard deviation of an indicator over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub channel: usize,
    pub indicator: String,
    pub mean: f64,
    pub sd: f64,
    pub nonconverged: usize,
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub config: ScenarioConfig,
    pub options: BenchmarkOptions,
    pub records: Vec<ReplicationRecord>,
    pub summary: Vec<SummaryRow>,
}

pub const RMSE_INDICATORS: [&str; 3] = ["rmse", "rmse_low", "rmse_high"];
pub const SELECTION_INDICATORS: [&str; 5] = ["tp_low", "fn_low", "tp_high", "fn_high", "fp_high"];

/// Indicator values of one report in table units: RMSEs, support fractions
/// `TP/|S0|` and `FN/|S0|`, and the raw false-positive count.
pub fn indicator_values(report: &MetricsReport, channel: usize) -> Vec<(&'static str, f64)> {
    let m = &report.channels[channel];
    let frac = |v: usize, total: usize| if total == 0 { 0.0 } else { v as f64 / total as f64 };
    let mut out = vec![
        ("rmse", m.rmse),
        ("rmse_low", m.rmse_low),
        ("rmse_high", m.rmse_high),
        ("tp_low", frac(m.tp_low, report.support_alpha)),
        ("fn_low", frac(m.fn_low, report.support_alpha)),
    ];
    if let (Some(tp), Some(fneg)) = (m.tp_high, m.fn_high) {
        out.push(("tp_high", frac(tp, report.support_beta)));
        out.push(("fn_high", frac(fneg, report.support_beta)));
    }
    if let Some(fp) = m.fp_high {
        out.push(("fp_high", fp as f64));
    }
    out
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Summarizes replication records per (method, channel, indicator).
pub fn summarize(records: &[ReplicationRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Method, usize, String)> = Vec::new();
    for r in records {
        let key = (r.method, r.channel, r.indicator.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(method, channel, indicator)| {
            let rows: Vec<&ReplicationRecord> = records
                .iter()
                .filter(|r| r.method == method && r.channel == channel && r.indicator == indicator)
                .collect();
            let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
            let (mean, sd) = mean_sd(&values);
            SummaryRow {
                method,
                channel,
                indicator,
                mean,
                sd,
                nonconverged: rows.iter().filter(|r| !r.converged).count(),
            }
        })
        .collect()
}

/// Runs every method on every replication and aggregates the indicators.
pub fn run_benchmark(
    config: &ScenarioConfig,
    options: &BenchmarkOptions,
    design: &GroupedDesign,
) -> Result<BenchmarkReport> {
    config.validate()?;
    if options.methods.is_empty() {
        return Err(Error::InvalidParameters("no methods requested".into()));
    }
    let estimators = Estimators::new(design, options)?;
    let per_rep: Vec<Vec<ReplicationRecord>> = (0..config.replications)
        .into_par_iter()
        .map(|r| -> Result<Vec<ReplicationRecord>> {
            let dataset = generate_replication(config, design, r)?;
            let mut out = Vec::new();
            for &method in &options.methods {
                let (dec, converged) = estimators.fit(method, &dataset.data)?;
                let report = score(&dec, &dataset)?;
                for ch in 0..config.channels {
                    for (indicator, value) in indicator_values(&report, ch) {
                        out.push(ReplicationRecord {
                            replication: r,
                            method,
                            channel: ch + 1,
                            indicator: indicator.to_string(),
                            value,
                            converged,
                        });
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let records: Vec<ReplicationRecord> = per_rep.into_iter().flatten().collect();
    let summary = summarize(&records);
    Ok(BenchmarkReport {
        config: config.clone(),
        options: options.clone(),
        records,
        summary,
    })
}
