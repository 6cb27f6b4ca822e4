//! Quantization-error-aware gradient scaling.
//!
//! The straight-through estimator passes gradients through the rounding step
//! unchanged. Here each coordinate is additionally scaled by
//! 1 + delta * sign(g) * (x_n - x_q): gradients pointing "with" the rounding
//! error get amplified, those pointing against it get damped. The strength
//! delta is driven by curvature — the average diagonal of the ranking-loss
//! Hessian, estimated by Rademacher probes — normalized by the mean gradient
//! magnitude, smoothed, and clamped so the multiplier can never flip sign.

use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

/// Floor applied to the gradient-magnitude normalizer.
pub const GRAD_MAG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorMode {
    /// Plain straight-through: gradients pass the rounding step unchanged.
    Ste,
    /// Error-scaled pass-through with curvature-driven delta.
    Gste,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsteConfig {
    pub mode: EstimatorMode,
    /// Rademacher probes per batch for the trace estimate.
    pub probes_per_batch: usize,
    /// EMA decay for the trace and gradient-magnitude statistics.
    pub delta_decay: f64,
    /// Admissible delta interval; must sit inside [0, 2] so the scaling
    /// multiplier stays non-negative for rounding errors up to 1/2.
    pub delta_clamp: (f64, f64),
}

impl Default for GsteConfig {
    fn default() -> Self {
        GsteConfig {
            mode: EstimatorMode::Gste,
            probes_per_batch: 1,
            delta_decay: 0.9,
            delta_clamp: (0.0, 2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfigError(pub &'static str);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid estimator config: {}", self.0)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ConfigError {}

impl GsteConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.probes_per_batch < 1 {
            return Err(ConfigError("probes_per_batch must be at least 1"));
        }
        if !(self.delta_decay > 0.0 && self.delta_decay < 1.0) {
            return Err(ConfigError("delta_decay must lie in (0, 1)"));
        }
        let (lo, hi) = self.delta_clamp;
        if !(lo >= 0.0 && hi <= 2.0 && lo <= hi) {
            return Err(ConfigError("delta_clamp must satisfy 0 <= lo <= hi <= 2"));
        }
        Ok(())
    }
}

/// Running statistics behind the delta scaling factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaState {
    pub delta: f64,
    pub trace_ema: f64,
    pub grad_mag_ema: f64,
    /// Diagonal size N of the most recent batch Hessian.
    pub n_diag: usize,
    initialized: bool,
}

impl DeltaState {
    /// Fresh state: delta 0, so the first batch behaves as plain STE.
    pub fn new() -> Self {
        DeltaState {
            delta: 0.0,
            trace_ema: 0.0,
            grad_mag_ema: 0.0,
            n_diag: 0,
            initialized: false,
        }
    }
}

impl Default for DeltaState {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeMismatch {
    pub grad: usize,
    pub coords: usize,
}

impl fmt::Display for ShapeMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "gradient has {} elements but coordinates have {}",
            self.grad, self.coords
        )
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ShapeMismatch {}

fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Scale a rounding-step gradient by the quantization error.
///
/// g_n[k] = g_q[k] * (1 + delta * sign(g_q[k]) * (x_n[k] - x_q[k])), with
/// sign(0) = +1. With delta = 0 the output is bit-identical to the input.
pub fn adjust_gradient(
    g_q: &[f64],
    x_n: &[f64],
    x_q: &[f64],
    delta: f64,
) -> Result<Vec<f64>, ShapeMismatch> {
    if g_q.len() != x_n.len() || g_q.len() != x_q.len() {
        return Err(ShapeMismatch {
            grad: g_q.len(),
            coords: x_n.len().min(x_q.len()),
        });
    }
    let mut out = Vec::with_capacity(g_q.len());
    for k in 0..g_q.len() {
        let err = x_n[k] - x_q[k];
        debug_assert!(err.abs() <= 0.5 + 1e-9, "rounding error {err} out of range");
        let mult = 1.0 + delta * sign(g_q[k]) * err;
        debug_assert!(mult >= 0.0, "scaling multiplier {mult} went negative");
        out.push(g_q[k] * mult);
    }
    Ok(out)
}

/// Stochastic trace estimate: mean of v^T (H v) over m Rademacher probes.
///
/// Exact for diagonal H regardless of m, since every probe coordinate
/// squares to one.
pub fn hutchinson_trace<R, F>(mut hvp: F, dim: usize, m: usize, rng: &mut R) -> f64
where
    R: Rng,
    F: FnMut(&[f64]) -> Vec<f64>,
{
    assert!(m >= 1, "at least one probe required");
    let mut acc = 0.0;
    let mut v = alloc::vec![0.0; dim];
    for _ in 0..m {
        for x in v.iter_mut() {
            *x = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        let hv = hvp(&v);
        debug_assert_eq!(hv.len(), dim);
        acc += crate::linalg::dot(&v, &hv);
    }
    acc / m as f64
}

/// Fold one batch's trace estimate and gradient into the running state and
/// return the clamped delta for the next batch.
///
/// raw delta = (trace / N) / G with N the number of gradient coordinates and
/// G their mean absolute value (floored to avoid division blowup); both
/// statistics are EMA-smoothed, with the first observation adopted directly.
pub fn update_delta(
    state: &mut DeltaState,
    trace_estimate: f64,
    grad: &[f64],
    config: &GsteConfig,
) -> f64 {
    assert!(!grad.is_empty(), "gradient must be non-empty");
    let n = grad.len();
    let g_mean = grad.iter().map(|g| g.abs()).sum::<f64>() / n as f64;
    if state.initialized {
        let d = config.delta_decay;
        state.trace_ema = d * state.trace_ema + (1.0 - d) * trace_estimate;
        state.grad_mag_ema = d * state.grad_mag_ema + (1.0 - d) * g_mean;
    } else {
        state.trace_ema = trace_estimate;
        state.grad_mag_ema = g_mean;
        state.initialized = true;
    }
    state.n_diag = n;
    let raw = (state.trace_ema / n as f64) / state.grad_mag_ema.max(GRAD_MAG_FLOOR);
    let (lo, hi) = config.delta_clamp;
    state.delta = raw.max(lo).min(hi);
    state.delta
}
