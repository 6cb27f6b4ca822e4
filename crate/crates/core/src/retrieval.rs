//! Integer-only candidate scoring over exported code tables.
//!
//! Scores are computed from integer codes plus an affine correction built
//! from the quantization params and per-row code sums, so the result equals
//! the inner product of the dequantized float vectors without touching any
//! float embedding. One-bit codes additionally get a bit-packed kernel where
//! the integer dot product is a popcount over ANDed words.

use alloc::vec::Vec;
use core::fmt;

use crate::quantizer::{QuantParams, QuantizedTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexError {
    /// Query row length differs from the index dimension.
    DimensionMismatch { expected: usize, got: usize },
    /// Stored row sums disagree with the codes they describe.
    RowSumMismatch { row: usize, expected: u32, got: u32 },
}

impl fmt::Display for IndexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexError::DimensionMismatch { expected, got } => {
                write!(f, "query has {got} codes, index dimension is {expected}")
            }
            IndexError::RowSumMismatch { row, expected, got } => {
                write!(f, "row {row}: stored sum {got} but codes sum to {expected}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for IndexError {}

fn code_sum(row: &[u16]) -> u32 {
    row.iter().map(|&c| c as u32).sum()
}

/// Pack a row of 0/1 codes into 64-bit words, lowest dimension in bit 0.
fn pack_row(row: &[u16], words: usize) -> Vec<u64> {
    let mut out = alloc::vec![0u64; words];
    for (k, &c) in row.iter().enumerate() {
        debug_assert!(c <= 1);
        if c == 1 {
            out[k / 64] |= 1u64 << (k % 64);
        }
    }
    out
}

/// Immutable item-side search structure.
#[derive(Debug, Clone)]
pub struct CodeIndex {
    item_codes: QuantizedTable,
    params_u: QuantParams,
    row_sums: Vec<u32>,
    /// Bit-packed rows, populated only for b = 1.
    packed: Option<Vec<u64>>,
    words_per_row: usize,
}

impl CodeIndex {
    /// Build an index from item codes, computing row sums internally.
    pub fn new(item_codes: QuantizedTable, params_u: QuantParams) -> Self {
        let row_sums = (0..item_codes.rows())
            .map(|r| code_sum(item_codes.row(r)))
            .collect();
        Self::assemble(item_codes, params_u, row_sums)
    }

    /// Build an index from stored parts, re-validating the row sums.
    pub fn from_parts(
        item_codes: QuantizedTable,
        params_u: QuantParams,
        row_sums: Vec<u32>,
    ) -> Result<Self, IndexError> {
        if row_sums.len() != item_codes.rows() {
            return Err(IndexError::DimensionMismatch {
                expected: item_codes.rows(),
                got: row_sums.len(),
            });
        }
        for r in 0..item_codes.rows() {
            let expected = code_sum(item_codes.row(r));
            if row_sums[r] != expected {
                return Err(IndexError::RowSumMismatch {
                    row: r,
                    expected,
                    got: row_sums[r],
                });
            }
        }
        Ok(Self::assemble(item_codes, params_u, row_sums))
    }

    fn assemble(item_codes: QuantizedTable, params_u: QuantParams, row_sums: Vec<u32>) -> Self {
        let d = item_codes.cols();
        let words_per_row = d.div_ceil(64);
        let packed = (item_codes.params.b == 1).then(|| {
            let mut words = Vec::with_capacity(item_codes.rows() * words_per_row);
            for r in 0..item_codes.rows() {
                words.extend(pack_row(item_codes.row(r), words_per_row));
            }
            words
        });
        CodeIndex {
            item_codes,
            params_u,
            row_sums,
            packed,
            words_per_row,
        }
    }

    pub fn num_items(&self) -> usize {
        self.item_codes.rows()
    }

    pub fn d(&self) -> usize {
        self.item_codes.cols()
    }

    pub fn params_u(&self) -> QuantParams {
        self.params_u
    }

    pub fn params_i(&self) -> QuantParams {
        self.item_codes.params
    }

    pub fn item_codes(&self) -> &QuantizedTable {
        &self.item_codes
    }

    pub fn row_sums(&self) -> &[u32] {
        &self.row_sums
    }
}

fn int_dot(a: &[u16], b: &[u16]) -> u64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| x as u64 * y as u64)
        .sum()
}

/// Inner-product scores of one user code row against every indexed item.
///
/// Equals dot(dequantize(user), dequantize(item)) for each item: the integer
/// dot is scaled by both grid spacings and corrected by the code sums and
/// the d * l_u * l_i constant so the affine offsets are accounted for
/// exactly.
pub fn score_all(
    user_codes: &[u16],
    user_sum: u32,
    index: &CodeIndex,
) -> Result<Vec<f64>, IndexError> {
    let d = index.d();
    if user_codes.len() != d {
        return Err(IndexError::DimensionMismatch {
            expected: d,
            got: user_codes.len(),
        });
    }
    debug_assert_eq!(code_sum(user_codes), user_sum);

    let pu = index.params_u;
    let pi = index.item_codes.params;
    let (du, di) = (pu.delta(), pi.delta());
    // score = du*di*<qu,qi> + lu*di*sum(qi) + li*du*sum(qu) + d*lu*li
    let user_term = pi.l * du * user_sum as f64 + d as f64 * pu.l * pi.l;
    let scale = du * di;
    let sum_coef = pu.l * di;

    let mut scores = Vec::with_capacity(index.num_items());
    match &index.packed {
        Some(words) => {
            let wpr = index.words_per_row;
            let packed_user = pack_row(user_codes, wpr);
            for r in 0..index.num_items() {
                let row = &words[r * wpr..(r + 1) * wpr];
                let dot: u32 = row
                    .iter()
                    .zip(&packed_user)
                    .map(|(a, b)| (a & b).count_ones())
                    .sum();
                scores.push(scale * dot as f64 + sum_coef * index.row_sums[r] as f64 + user_term);
            }
        }
        None => {
            for r in 0..index.num_items() {
                let dot = int_dot(user_codes, index.item_codes.row(r));
                scores.push(scale * dot as f64 + sum_coef * index.row_sums[r] as f64 + user_term);
            }
        }
    }
    Ok(scores)
}

/// Ranked top-k selection.
#[derive(Debug, Clone, PartialEq)]
pub struct TopK {
    /// (item id, score), best first; ties broken by ascending item id.
    pub items: Vec<(u32, f64)>,
    /// Set when fewer than k unmasked items existed; `items` then holds all
    /// of them.
    pub truncated: bool,
}

/// Select the k highest-scoring items, skipping `mask` (a sorted id list).
pub fn topk(scores: &[f64], k: usize, mask: &[u32]) -> TopK {
    debug_assert!(mask.windows(2).all(|w| w[0] < w[1]), "mask must be sorted");
    let mut candidates: Vec<(u32, f64)> = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| mask.binary_search(&(*i as u32)).is_err())
        .map(|(i, &s)| (i as u32, s))
        .collect();
    candidates.sort_unstable_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("scores must not be NaN")
            .then(a.0.cmp(&b.0))
    });
    let truncated = candidates.len() < k;
    candidates.truncate(k);
    TopK {
        items: candidates,
        truncated,
    }
}
