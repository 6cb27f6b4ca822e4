//! Uniform b-bit quantization with per-tensor thresholds.
//!
//! A tensor is clipped to [l, u], mapped affinely onto the integer grid
//! 0..=2^b-1, and rounded to the nearest level (ties away from zero).
//! Thresholds track the running value range with an exponential moving
//! average so they adapt during training without storing batch history.

use alloc::vec::Vec;
use core::fmt;

use crate::linalg::Matrix;
use crate::math;

pub const MIN_BITS: u8 = 1;
pub const MAX_BITS: u8 = 16;

/// Width of the degenerate-range nudge: when a tracked tensor is constant,
/// the upper threshold is lifted this far above the lower one so the grid
/// spacing stays positive.
pub const RANGE_NUDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuantError {
    /// Bit width outside the supported 1..=16 range.
    BadBits(u8),
    /// Thresholds not finite or not strictly ordered.
    BadRange { l: f64, u: f64 },
}

impl fmt::Display for QuantError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuantError::BadBits(b) => {
                write!(f, "bit width {b} outside supported range {MIN_BITS}..={MAX_BITS}")
            }
            QuantError::BadRange { l, u } => {
                write!(f, "invalid quantization range [{l}, {u}]")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for QuantError {}

/// Dequantization convention: `Affine` restores the offset (x_q * delta + l),
/// `Literal` keeps the raw scaled code (x_q * delta).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DequantMode {
    #[default]
    Affine,
    Literal,
}

/// Per-tensor quantization parameters: clip thresholds and bit width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    pub l: f64,
    pub u: f64,
    pub b: u8,
}

impl QuantParams {
    pub fn new(l: f64, u: f64, b: u8) -> Result<Self, QuantError> {
        if !(MIN_BITS..=MAX_BITS).contains(&b) {
            return Err(QuantError::BadBits(b));
        }
        if !l.is_finite() || !u.is_finite() || l >= u {
            return Err(QuantError::BadRange { l, u });
        }
        Ok(QuantParams { l, u, b })
    }

    /// Number of the highest level: 2^b - 1.
    pub fn levels(&self) -> u32 {
        (1u32 << self.b) - 1
    }

    /// Grid spacing (u - l) / (2^b - 1).
    pub fn delta(&self) -> f64 {
        (self.u - self.l) / self.levels() as f64
    }

    pub fn clip(&self, x: f64) -> f64 {
        x.max(self.l).min(self.u)
    }

    /// Clipped value mapped to grid coordinates, in [0, 2^b - 1].
    pub fn normalize(&self, x: f64) -> f64 {
        (self.clip(x) - self.l) / self.delta()
    }

    /// Nearest integer level for x, as a float.
    pub fn quantize(&self, x: f64) -> f64 {
        math::round(self.normalize(x))
    }

    /// Nearest integer level for x, as a code.
    pub fn code(&self, x: f64) -> u16 {
        self.quantize(x) as u16
    }

    pub fn dequantize(&self, code: f64, mode: DequantMode) -> f64 {
        match mode {
            DequantMode::Affine => code * self.delta() + self.l,
            DequantMode::Literal => code * self.delta(),
        }
    }
}

/// EMA range tracker feeding a tensor's quantization thresholds.
///
/// The first observation adopts the batch extrema directly; later ones blend
/// with weight `decay` on the running value. A collapsed range is widened by
/// `RANGE_NUDGE` so downstream grids never divide by zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdTracker {
    l: f64,
    u: f64,
    decay: f64,
    initialized: bool,
}

impl ThresholdTracker {
    pub fn new(decay: f64) -> Self {
        assert!((0.0..1.0).contains(&decay), "decay must be in [0, 1)");
        ThresholdTracker {
            l: 0.0,
            u: 0.0,
            decay,
            initialized: false,
        }
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Fold one tensor's extrema into the running thresholds. Empty input
    /// leaves the state untouched.
    pub fn observe(&mut self, values: &[f64]) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() || !hi.is_finite() {
            return;
        }
        if self.initialized {
            self.l = self.decay * self.l + (1.0 - self.decay) * lo;
            self.u = self.decay * self.u + (1.0 - self.decay) * hi;
        } else {
            self.l = lo;
            self.u = hi;
            self.initialized = true;
        }
        if self.u <= self.l {
            self.u = self.l + RANGE_NUDGE;
        }
    }

    pub fn thresholds(&self) -> (f64, f64) {
        (self.l, self.u)
    }

    pub fn params(&self, b: u8) -> Result<QuantParams, QuantError> {
        QuantParams::new(self.l, self.u, b)
    }

    /// Restore a tracker from saved thresholds.
    pub fn from_thresholds(l: f64, u: f64, decay: f64) -> Self {
        ThresholdTracker {
            l,
            u,
            decay,
            initialized: true,
        }
    }
}

/// Normalized coordinates and rounded levels for a whole matrix.
pub fn quantize_matrix(m: &Matrix, p: &QuantParams) -> (Matrix, Matrix) {
    let mut xn = Matrix::zeros(m.rows(), m.cols());
    let mut xq = Matrix::zeros(m.rows(), m.cols());
    for ((n, q), &x) in xn
        .as_mut_slice()
        .iter_mut()
        .zip(xq.as_mut_slice())
        .zip(m.iter())
    {
        *n = p.normalize(x);
        *q = math::round(*n);
    }
    (xn, xq)
}

pub fn dequantize_matrix(xq: &Matrix, p: &QuantParams, mode: DequantMode) -> Matrix {
    let mut out = Matrix::zeros(xq.rows(), xq.cols());
    for (o, &q) in out.as_mut_slice().iter_mut().zip(xq.iter()) {
        *o = p.dequantize(q, mode);
    }
    out
}

/// Integer codes for one tensor, plus the parameters that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTable {
    codes: Vec<u16>,
    rows: usize,
    cols: usize,
    pub params: QuantParams,
}

impl QuantizedTable {
    /// Quantize a float matrix directly into codes.
    pub fn from_matrix(m: &Matrix, params: QuantParams) -> Self {
        let codes = m.iter().map(|&x| params.code(x)).collect();
        QuantizedTable {
            codes,
            rows: m.rows(),
            cols: m.cols(),
            params,
        }
    }

    /// Wrap precomputed codes (e.g. read back from storage).
    pub fn from_codes(codes: Vec<u16>, rows: usize, cols: usize, params: QuantParams) -> Self {
        assert_eq!(codes.len(), rows * cols);
        debug_assert!(codes.iter().all(|&c| (c as u32) <= params.levels()));
        QuantizedTable {
            codes,
            rows,
            cols,
            params,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[u16] {
        &self.codes[r * self.cols..(r + 1) * self.cols]
    }

    pub fn codes(&self) -> &[u16] {
        &self.codes
    }

    /// Reconstruct the float matrix this table represents.
    pub fn dequantize(&self, mode: DequantMode) -> Matrix {
        let data: Vec<f64> = self
            .codes
            .iter()
            .map(|&c| self.params.dequantize(c as f64, mode))
            .collect();
        Matrix::from_vec(self.rows, self.cols, data)
    }
}
