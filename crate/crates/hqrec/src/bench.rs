//! Retrieval latency benchmark: a correctness gate comparing the integer
//! scoring path against the float-dequantized reference, then per-query
//! latency percentiles for both paths.

use std::fmt::Write as _;
use std::time::Instant;

use hqrec_core::linalg::dot;
use hqrec_core::quantizer::{DequantMode, QuantizedTable};
use hqrec_core::retrieval::{score_all, topk, CodeIndex, TopK};
use hqrec_core::Matrix;

use crate::CliError;

/// Integer-path scores define the reference ranking. Two top-k lists are
/// equivalent when they agree position by position on the reference score
/// to within `tolerance` — the float-rounding slack of the affine-corrected
/// dot. Within such a tie the float path may order (or, at the truncation
/// boundary, select) members differently; the id tie rule applies per path.
pub fn topk_equivalent(
    int_scores: &[f64],
    int_list: &TopK,
    float_list: &TopK,
    tolerance: f64,
) -> bool {
    if int_list.items.len() != float_list.items.len()
        || int_list.truncated != float_list.truncated
    {
        return false;
    }
    int_list
        .items
        .iter()
        .zip(&float_list.items)
        .all(|(&(ia, _), &(ib, _))| {
            (int_scores[ia as usize] - int_scores[ib as usize]).abs() <= tolerance
        })
}

/// Float reference scores for one dequantized user row against the
/// dequantized item table.
pub fn float_scores(user_vec: &[f64], items: &Matrix) -> Vec<f64> {
    (0..items.rows()).map(|i| dot(user_vec, items.row(i))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Percentiles {
    pub p50: u64,
    pub p90: u64,
    pub p99: u64,
}

/// Nearest-rank percentiles of raw nanosecond samples.
pub fn percentiles(samples: &mut [u64]) -> Percentiles {
    assert!(!samples.is_empty());
    samples.sort_unstable();
    let pick = |p: f64| {
        let idx = ((p / 100.0) * samples.len() as f64).ceil() as usize;
        samples[idx.clamp(1, samples.len()) - 1]
    };
    Percentiles {
        p50: pick(50.0),
        p90: pick(90.0),
        p99: pick(99.0),
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub queries: usize,
    pub reps: usize,
    pub k: usize,
    pub int_ns: Option<Percentiles>,
    pub float_ns: Option<Percentiles>,
}

impl BenchReport {
    /// Stable text rendering; an empty run prints the header line only.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "queries={} reps={} k={}", self.queries, self.reps, self.k);
        if let (Some(int), Some(float)) = (&self.int_ns, &self.float_ns) {
            let _ = writeln!(s, "gate=ok");
            let _ = writeln!(
                s,
                "path=int p50_ns={} p90_ns={} p99_ns={}",
                int.p50, int.p90, int.p99
            );
            let _ = writeln!(
                s,
                "path=float p50_ns={} p90_ns={} p99_ns={}",
                float.p50, float.p90, float.p99
            );
        }
        s
    }
}

/// Run the correctness gate and, when `reps > 0`, time both paths over
/// every user row `reps` times. `reps == 0` produces an empty report.
pub fn run_bench(
    user_codes: &QuantizedTable,
    index: &CodeIndex,
    k: usize,
    reps: usize,
) -> Result<BenchReport, CliError> {
    let queries = user_codes.rows();
    let mut report = BenchReport {
        queries,
        reps,
        k,
        int_ns: None,
        float_ns: None,
    };
    if reps == 0 {
        return Ok(report);
    }

    let d = user_codes.cols();
    let mode = DequantMode::Affine;
    let user_vecs = user_codes.dequantize(mode);
    let item_vecs = index.item_codes().dequantize(mode);
    let tolerance = 1e-9 * d as f64;

    for q in 0..queries {
        let row = user_codes.row(q);
        let sum: u32 = row.iter().map(|&c| c as u32).sum();
        let int_scores = score_all(row, sum, index)
            .map_err(|e| CliError::usage(format!("query {q}: {e}")))?;
        let f_scores = float_scores(user_vecs.row(q), &item_vecs);
        let drift = int_scores
            .iter()
            .zip(&f_scores)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if drift > tolerance {
            return Err(CliError::Numerical(format!(
                "query {q}: integer and float scores differ by {drift:e}"
            )));
        }
        let int_list = topk(&int_scores, k, &[]);
        let float_list = topk(&f_scores, k, &[]);
        if !topk_equivalent(&int_scores, &int_list, &float_list, tolerance) {
            return Err(CliError::Numerical(format!(
                "query {q}: integer and float top-{k} lists disagree"
            )));
        }
    }

    let mut int_samples = Vec::with_capacity(queries * reps);
    let mut float_samples = Vec::with_capacity(queries * reps);
    for _ in 0..reps {
        for q in 0..queries {
            let row = user_codes.row(q);
            let sum: u32 = row.iter().map(|&c| c as u32).sum();
            let t = Instant::now();
            let scores = score_all(row, sum, index).expect("validated above");
            let list = topk(&scores, k, &[]);
            int_samples.push(t.elapsed().as_nanos() as u64);
            std::hint::black_box(list);
        }
        for q in 0..queries {
            let t = Instant::now();
            let scores = float_scores(user_vecs.row(q), &item_vecs);
            let list = topk(&scores, k, &[]);
            float_samples.push(t.elapsed().as_nanos() as u64);
            std::hint::black_box(list);
        }
    }
    report.int_ns = Some(percentiles(&mut int_samples));
    report.float_ns = Some(percentiles(&mut float_samples));
    Ok(report)
}
