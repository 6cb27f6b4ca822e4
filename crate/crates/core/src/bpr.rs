//! Pairwise ranking loss over user/item embeddings, with analytic gradient
//! and analytic Hessian-vector product.
//!
//! The loss for a batch of (user, positive, negative) triples is
//! sum of -ln sigmoid(s) with s = <q_u, q_i> - <q_u, q_j>, plus an L2 term
//! on the layer-0 parameters. The HVP is exact (not finite-differenced) and
//! costs the same as one gradient pass, which is what makes trace probing
//! affordable inside the training loop.

use alloc::vec::Vec;
use core::fmt;

use crate::encoder::EmbeddingTable;
use crate::linalg::{dot, Matrix};
use crate::math::{sigmoid, softplus};

/// One ranking comparison: user prefers `pos` over `neg`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triple {
    pub user: u32,
    pub pos: u32,
    pub neg: u32,
}

/// A training batch is an ordered list of triples; summation follows input
/// order so repeated runs are bit-reproducible.
pub type TripletBatch = Vec<Triple>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub bpr: f64,
    pub reg: f64,
    pub total: f64,
}

/// Inner-product preference score.
pub fn score(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "score: dimension mismatch");
    dot(x, y)
}

fn triple_score(users: &Matrix, items: &Matrix, t: &Triple) -> f64 {
    let qu = users.row(t.user as usize);
    let qi = items.row(t.pos as usize);
    let qj = items.row(t.neg as usize);
    dot(qu, qi) - dot(qu, qj)
}

/// Batch ranking loss plus parameter regularization.
///
/// `users`/`items` are the embeddings the scores are computed from (usually
/// the dequantized pooled tables); `theta` is the layer-0 parameter table the
/// L2 penalty applies to.
pub fn bpr_loss(
    triples: &[Triple],
    users: &Matrix,
    items: &Matrix,
    theta: &EmbeddingTable,
    alpha: f64,
) -> LossReport {
    debug_assert!(alpha >= 0.0);
    let mut bpr = 0.0;
    for t in triples {
        // -ln sigmoid(s) == softplus(-s), stable for any |s|
        bpr += softplus(-triple_score(users, items, t));
    }
    let reg = alpha * theta.frob_sq();
    LossReport {
        bpr,
        reg,
        total: bpr + reg,
    }
}

/// Gradient of the batch ranking term with respect to `users` and `items`.
///
/// Returns dense tables matching the input shapes; rows not touched by the
/// batch stay zero. The regularization gradient (2 * alpha * theta) is the
/// trainer's responsibility because it acts on layer-0 parameters, not on
/// the scored embeddings.
pub fn bpr_grad(triples: &[Triple], users: &Matrix, items: &Matrix) -> (Matrix, Matrix) {
    let mut du = Matrix::zeros(users.rows(), users.cols());
    let mut di = Matrix::zeros(items.rows(), items.cols());
    for t in triples {
        let s = triple_score(users, items, t);
        let c = sigmoid(s) - 1.0;
        let (u, i, j) = (t.user as usize, t.pos as usize, t.neg as usize);
        for k in 0..users.cols() {
            let qu = users.row(u)[k];
            let diff = items.row(i)[k] - items.row(j)[k];
            du.row_mut(u)[k] += c * diff;
            di.row_mut(i)[k] += c * qu;
            di.row_mut(j)[k] -= c * qu;
        }
    }
    (du, di)
}

/// The distinct user and item rows a batch touches, in sorted order.
///
/// Flat vectors over a batch lay out one d-slice per slot, users first:
/// coordinate (slot, k) lives at slot * d + k.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchSlots {
    pub users: Vec<u32>,
    pub items: Vec<u32>,
}

impl BatchSlots {
    pub fn from_triples(triples: &[Triple]) -> Self {
        let mut users: Vec<u32> = triples.iter().map(|t| t.user).collect();
        let mut items: Vec<u32> = triples.iter().flat_map(|t| [t.pos, t.neg]).collect();
        users.sort_unstable();
        users.dedup();
        items.sort_unstable();
        items.dedup();
        BatchSlots { users, items }
    }

    pub fn num_slots(&self) -> usize {
        self.users.len() + self.items.len()
    }

    pub fn flat_len(&self, d: usize) -> usize {
        self.num_slots() * d
    }

    pub fn user_slot(&self, user: u32) -> usize {
        self.users.binary_search(&user).expect("user not in batch")
    }

    pub fn item_slot(&self, item: u32) -> usize {
        self.users.len() + self.items.binary_search(&item).expect("item not in batch")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotMismatch {
    pub expected: usize,
    pub got: usize,
}

impl fmt::Display for SlotMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "direction vector has length {}, batch slots need {}",
            self.got, self.expected
        )
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SlotMismatch {}

/// Exact Hessian-vector product of the batch ranking term.
///
/// `v` is a flat direction over the batch's slots (see [`BatchSlots`]);
/// the result uses the same layout. Per triple, with w = sigmoid(s) *
/// (1 - sigmoid(s)) and the score gradient g_s stacked over (u, i, j), the
/// contribution is w * <g_s, v> * g_s plus the curvature of the bilinear
/// score itself: c * (v_i - v_j) into the u block and +/- c * v_u into the
/// item blocks.
pub fn bpr_hvp(
    triples: &[Triple],
    users: &Matrix,
    items: &Matrix,
    slots: &BatchSlots,
    v: &[f64],
) -> Result<Vec<f64>, SlotMismatch> {
    let d = users.cols();
    let expected = slots.flat_len(d);
    if v.len() != expected {
        return Err(SlotMismatch {
            expected,
            got: v.len(),
        });
    }
    let mut out = alloc::vec![0.0; expected];
    for t in triples {
        let s = triple_score(users, items, t);
        let sig = sigmoid(s);
        let c = sig - 1.0;
        let w = sig * (1.0 - sig);

        let su = slots.user_slot(t.user) * d;
        let si = slots.item_slot(t.pos) * d;
        let sj = slots.item_slot(t.neg) * d;
        let qu = users.row(t.user as usize);
        let qi = items.row(t.pos as usize);
        let qj = items.row(t.neg as usize);

        // <g_s, v> over the triple's three slots
        let mut gdotv = 0.0;
        for k in 0..d {
            gdotv += (qi[k] - qj[k]) * v[su + k] + qu[k] * (v[si + k] - v[sj + k]);
        }
        for k in 0..d {
            let diff = qi[k] - qj[k];
            out[su + k] += w * gdotv * diff + c * (v[si + k] - v[sj + k]);
            out[si + k] += w * gdotv * qu[k] + c * v[su + k];
            out[sj + k] += -w * gdotv * qu[k] - c * v[su + k];
        }
    }
    Ok(out)
}
