//! Environment selection.
//!
//! The error buffer tracks a smoothed error magnitude per parameter setting
//! and a smoothed rate of error reduction between fixed step intervals. The
//! samplers turn those into environment choices: the two weighted variants
//! normalize the buffer and draw from a Boltzmann distribution mixed with
//! domain randomisation, and the remaining strategies are the fixed
//! baselines.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::env::{EnvironmentFamily, ThetaId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// DR share used by the GE and RW baselines.
const BASELINE_DR_MIX: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "waker-m")]
    WakerM,
    #[serde(rename = "waker-r")]
    WakerR,
    #[serde(rename = "dr")]
    Dr,
    #[serde(rename = "ge")]
    Ge,
    #[serde(rename = "he-oracle")]
    HeOracle,
    #[serde(rename = "rw-oracle")]
    RwOracle,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::WakerM,
        Strategy::WakerR,
        Strategy::Dr,
        Strategy::Ge,
        Strategy::HeOracle,
        Strategy::RwOracle,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::WakerM => "waker-m",
            Strategy::WakerR => "waker-r",
            Strategy::Dr => "dr",
            Strategy::Ge => "ge",
            Strategy::HeOracle => "he-oracle",
            Strategy::RwOracle => "rw-oracle",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .iter()
            .copied()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy '{s}'")))
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub strategy: Strategy,
    /// Probability of sampling from the DR distribution instead of the
    /// weighted Boltzmann draw.
    pub p_dr: f64,
    /// Boltzmann temperature. When unset, the per-strategy default applies
    /// (1.0 for the magnitude variant, 0.5 for the rate variant).
    pub eta: Option<f64>,
    pub ema_alpha: f64,
    pub delta_alpha: f64,
    /// Environment steps between rate checkpoints.
    pub rate_interval: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::WakerM,
            p_dr: 0.2,
            eta: None,
            ema_alpha: 0.99,
            delta_alpha: 0.95,
            rate_interval: 200,
        }
    }
}

impl SamplerConfig {
    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or(match self.strategy {
            Strategy::WakerR => 0.5,
            _ => 1.0,
        })
    }

    pub fn with_strategy(&self, strategy: Strategy) -> Self {
        Self {
            strategy,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_dr) {
            return Err(Error::InvalidConfig("p_dr must lie in [0, 1]".into()));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) {
                return Err(Error::InvalidConfig("eta must be positive".into()));
            }
        }
        for (name, a) in [("ema_alpha", self.ema_alpha), ("delta_alpha", self.delta_alpha)] {
            if !(0.0..1.0).contains(&a) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1)")));
            }
        }
        if self.rate_interval == 0 {
            return Err(Error::InvalidConfig("rate_interval must be positive".into()));
        }
        Ok(())
    }
}

/// Per-parameter smoothed error magnitudes and reduction rates.
///
/// Contains entries only for parameter settings that have been recorded at
/// least once; single-writer, snapshot reads.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBuffer {
    ema_alpha: f64,
    delta_alpha: f64,
    ema: BTreeMap<ThetaId, f64>,
    prev_ema: BTreeMap<ThetaId, f64>,
    delta_ema: BTreeMap<ThetaId, f64>,
}

impl ErrorBuffer {
    pub fn new(ema_alpha: f64, delta_alpha: f64) -> Self {
        Self {
            ema_alpha,
            delta_alpha,
            ema: BTreeMap::new(),
            prev_ema: BTreeMap::new(),
            delta_ema: BTreeMap::new(),
        }
    }

    pub fn from_parts(
        ema_alpha: f64,
        delta_alpha: f64,
        ema: BTreeMap<ThetaId, f64>,
        prev_ema: BTreeMap<ThetaId, f64>,
        delta_ema: BTreeMap<ThetaId, f64>,
    ) -> Self {
        Self {
            ema_alpha,
            delta_alpha,
            ema,
            prev_ema,
            delta_ema,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.ema.is_empty()
    }

    pub fn contains(&self, theta: ThetaId) -> bool {
        self.ema.contains_key(&theta)
    }

    pub fn support(&self) -> impl Iterator<Item = ThetaId> + '_ {
        self.ema.keys().copied()
    }

    pub fn ema(&self) -> &BTreeMap<ThetaId, f64> {
        &self.ema
    }

    pub fn prev_ema(&self) -> &BTreeMap<ThetaId, f64> {
        &self.prev_ema
    }

    pub fn delta_ema(&self) -> &BTreeMap<ThetaId, f64> {
        &self.delta_ema
    }

    pub fn ema_alpha(&self) -> f64 {
        self.ema_alpha
    }

    pub fn delta_alpha(&self) -> f64 {
        self.delta_alpha
    }

    /// Folds a fresh error estimate into the smoothed magnitude for `theta`.
    /// The first observation initializes the average.
    pub fn record_error(&mut self, theta: ThetaId, delta: f64) -> Result<()> {
        if !(delta >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "error estimate must be nonnegative, got {delta}"
            )));
        }
        match self.ema.get_mut(&theta) {
            Some(v) => *v = self.ema_alpha * *v + (1.0 - self.ema_alpha) * delta,
            None => {
                self.ema.insert(theta, delta);
                self.prev_ema.insert(theta, delta);
            }
        }
        Ok(())
    }

    /// Closes a rate interval: records the reduction of each smoothed
    /// magnitude since the previous checkpoint and resets the reference.
    pub fn checkpoint_rates(&mut self) {
        for (&theta, &current) in &self.ema {
            let old = *self.prev_ema.get(&theta).unwrap_or(&current);
            let delta = old - current;
            match self.delta_ema.get_mut(&theta) {
                Some(v) => *v = self.delta_alpha * *v + (1.0 - self.delta_alpha) * delta,
                None => {
                    self.delta_ema.insert(theta, delta);
                }
            }
            self.prev_ema.insert(theta, current);
        }
    }
}

/// Z-score normalization (population standard deviation). Zero spread maps
/// everything to zero so the downstream Boltzmann draw is uniform.
pub fn normalize_m<S: Scalar>(values: &BTreeMap<ThetaId, S>) -> Result<BTreeMap<ThetaId, S>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("normalize_m".into()));
    }
    let n = S::from_f64_lossy(values.len() as f64);
    let mean = values.values().fold(S::zero(), |a, &v| a + v) / n;
    let var = values
        .values()
        .fold(S::zero(), |a, &v| a + (v - mean) * (v - mean))
        / n;
    let std = var.sqrt();
    let tiny = S::from_f64_lossy(1e-12);
    Ok(values
        .iter()
        .map(|(&t, &v)| {
            let z = if std < tiny { S::zero() } else { (v - mean) / std };
            (t, z)
        })
        .collect())
}

/// Mean-absolute-value normalization. A near-zero mean magnitude maps
/// everything to zero.
pub fn normalize_r<S: Scalar>(values: &BTreeMap<ThetaId, S>) -> Result<BTreeMap<ThetaId, S>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("normalize_r".into()));
    }
    let n = S::from_f64_lossy(values.len() as f64);
    let mean_abs = values.values().fold(S::zero(), |a, &v| a + v.abs()) / n;
    let tiny = S::from_f64_lossy(1e-12);
    Ok(values
        .iter()
        .map(|(&t, &v)| {
            let r = if mean_abs < tiny { S::zero() } else { v / mean_abs };
            (t, r)
        })
        .collect())
}

/// Boltzmann distribution over the map's keys: `p ∝ exp(value / eta)`.
pub fn boltzmann_probs(
    normalized: &BTreeMap<ThetaId, f64>,
    eta: f64,
) -> Result<BTreeMap<ThetaId, f64>> {
    if normalized.is_empty() {
        return Err(Error::EmptyInput("boltzmann_probs".into()));
    }
    let max = normalized.values().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let mut probs: BTreeMap<ThetaId, f64> = normalized
        .iter()
        .map(|(&t, &v)| (t, ((v - max) / eta).exp()))
        .collect();
    let total: f64 = probs.values().sum();
    for p in probs.values_mut() {
        *p /= total;
    }
    Ok(probs)
}

fn sample_from_probs<R: Rng>(probs: &BTreeMap<ThetaId, f64>, rng: &mut R) -> ThetaId {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = ThetaId(0);
    for (&t, &p) in probs {
        acc += p;
        last = t;
        if u < acc {
            return t;
        }
    }
    last
}

/// Draws the next environment to collect data from.
pub fn sample_env<R: Rng>(
    config: &SamplerConfig,
    buffer: &ErrorBuffer,
    family: &EnvironmentFamily,
    rng: &mut R,
) -> Result<ThetaId> {
    match config.strategy {
        Strategy::Dr => Ok(family.dr_sample(rng)),
        Strategy::HeOracle => Ok(family.hardest()),
        Strategy::RwOracle => {
            if rng.gen::<f64>() < BASELINE_DR_MIX || family.complex_subset().is_empty() {
                Ok(family.dr_sample(rng))
            } else {
                let subset = family.complex_subset();
                Ok(subset[rng.gen_range(0..subset.len())])
            }
        }
        Strategy::Ge => {
            let seen: Vec<ThetaId> = buffer.support().collect();
            if rng.gen::<f64>() < BASELINE_DR_MIX || seen.is_empty() {
                return Ok(family.dr_sample(rng));
            }
            let box_ids = parameter_box(family, &seen);
            Ok(box_ids[rng.gen_range(0..box_ids.len())])
        }
        Strategy::WakerM | Strategy::WakerR => {
            let weights = match config.strategy {
                Strategy::WakerM => buffer.ema(),
                _ => buffer.delta_ema(),
            };
            if weights.is_empty() || rng.gen::<f64>() < config.p_dr {
                return Ok(family.dr_sample(rng));
            }
            let normalized = match config.strategy {
                Strategy::WakerM => normalize_m(weights)?,
                _ => normalize_r(weights)?,
            };
            let probs = boltzmann_probs(&normalized, config.eta())?;
            Ok(sample_from_probs(&probs, rng))
        }
    }
}

/// Grid settings inside the axis-aligned parameter box spanned by `seen`.
fn parameter_box(family: &EnvironmentFamily, seen: &[ThetaId]) -> Vec<ThetaId> {
    let sizes: Vec<u32> = seen.iter().map(|&t| family.params(t).size).collect();
    let slips: Vec<f64> = seen.iter().map(|&t| family.params(t).slip).collect();
    let (size_lo, size_hi) = (
        *sizes.iter().min().unwrap(),
        *sizes.iter().max().unwrap(),
    );
    let slip_lo = slips.iter().cloned().fold(f64::INFINITY, f64::min);
    let slip_hi = slips.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    family
        .grid_ids()
        .filter(|&t| {
            let p = family.params(t);
            p.size >= size_lo && p.size <= size_hi && p.slip >= slip_lo && p.slip <= slip_hi
        })
        .collect()
}
