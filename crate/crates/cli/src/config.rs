//! Run configuration: a JSON file with every field optional, overridden by
//! command-line flags.

use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use mcdecomp_core::synthetic::{HIGH_PARAMS, LOW_PARAMS};
use mcdecomp_core::{FitConfig, FoldScheme, FrameSpec, Method, ScenarioConfig, SignalMode};
use serde::{Deserialize, Serialize};

/// Frame parameters without the signal length, which comes from the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameParams {
    pub p: u32,
    pub q: u32,
    pub s: u32,
    pub levels: u32,
}

impl FrameParams {
    pub fn spec(&self, n: usize) -> mcdecomp_core::Result<FrameSpec> {
        FrameSpec::new(self.p, self.q, self.s, self.levels, n)
    }
}

impl From<(u32, u32, u32, u32)> for FrameParams {
    fn from((p, q, s, levels): (u32, u32, u32, u32)) -> Self {
        Self { p, q, s, levels }
    }
}

/// Parses `p,q,s,J`.
impl FromStr for FrameParams {
    type Err = String;

    fn from_str(text: &str) -> std::result::Result<Self, String> {
        let parts: Vec<u32> = text
            .split(',')
            .map(|v| v.trim().parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format!("expected p,q,s,J: {e}"))?;
        match parts[..] {
            [p, q, s, levels] => Ok(Self { p, q, s, levels }),
            _ => Err(format!("expected 4 comma-separated integers, got {}", parts.len())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoryParams {
    pub x: f64,
    pub sigma: f64,
    pub trials: usize,
    pub phi_samples: usize,
}

impl Default for TheoryParams {
    fn default() -> Self {
        Self {
            x: 2.0,
            sigma: 1.0,
            trials: 10_000,
            phi_samples: 2000,
        }
    }
}

/// Everything a command may need. `seed` is the single source of randomness:
/// it replaces the seeds inside `fit` and `scenario`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub low: FrameParams,
    pub high: FrameParams,
    pub fit: FitConfig,
    pub scenario: ScenarioConfig,
    pub methods: Vec<Method>,
    pub somp_max_budget: usize,
    pub theory: TheoryParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            low: LOW_PARAMS.into(),
            high: HIGH_PARAMS.into(),
            fit: FitConfig::default(),
            scenario: ScenarioConfig::default(),
            methods: vec![Method::SingleC, Method::MultiC],
            somp_max_budget: 100,
            theory: TheoryParams::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Propagates the seed and checks every section.
    pub fn finish(mut self) -> Result<Self> {
        self.fit.seed = self.seed;
        self.scenario.seed = self.seed;
        self.fit.validate()?;
        if self.somp_max_budget == 0 {
            bail!("somp_max_budget must be positive");
        }
        let t = &self.theory;
        if !(t.x > 0.0 && t.x.is_finite()) || !(t.sigma >= 0.0 && t.sigma.is_finite()) {
            bail!("theory needs x > 0 and sigma >= 0");
        }
        Ok(self)
    }
}

pub fn parse_fold_scheme(text: &str) -> std::result::Result<FoldScheme, String> {
    serde_json::from_value(serde_json::Value::String(text.into()))
        .map_err(|_| "expected contiguous, interleaved or random".to_string())
}

pub fn parse_signal_mode(text: &str) -> std::result::Result<SignalMode, String> {
    serde_json::from_value(serde_json::Value::String(text.into()))
        .map_err(|_| "expected fixed or redraw".to_string())
}

pub fn parse_method(text: &str) -> std::result::Result<Method, String> {
    text.parse::<Method>().map_err(|e| e.to_string())
}

pub fn parse_snr(text: &str) -> std::result::Result<f64, String> {
    let v: f64 = text.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err("SNR must be positive".into())
    }
}
