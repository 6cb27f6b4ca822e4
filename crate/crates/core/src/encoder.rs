//! Weight-free graph encoder: linear propagation of embeddings over the
//! normalized bipartite graph, mean pooling over layers, and the exact
//! adjoint of the pooled propagation used by the backward pass.

use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::graph::BipartiteGraph;
use crate::linalg::Matrix;
use crate::rng::{stream_rng, Stream};

/// Layer-0 user/item embedding matrices, the model's only parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub users: Matrix,
    pub items: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DimensionMismatch {
    pub expected: usize,
    pub got: usize,
}

impl fmt::Display for DimensionMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "dimension mismatch: expected {}, got {}",
            self.expected, self.got
        )
    }
}

#[cfg(feature = "std")]
impl std::error::Error for DimensionMismatch {}

impl EmbeddingTable {
    pub fn zeros(num_users: usize, num_items: usize, d: usize) -> Self {
        EmbeddingTable {
            users: Matrix::zeros(num_users, d),
            items: Matrix::zeros(num_items, d),
        }
    }

    /// Seeded i.i.d. normal initialization, mean 0, std 0.1.
    pub fn init(num_users: usize, num_items: usize, d: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, Stream::Init);
        let normal = Normal::new(0.0, 0.1).unwrap();
        let mut fill = |rows: usize| {
            let mut m = Matrix::zeros(rows, d);
            for v in m.as_mut_slice() {
                *v = normal.sample(&mut rng);
            }
            m
        };
        let users = fill(num_users);
        let items = fill(num_items);
        EmbeddingTable { users, items }
    }

    pub fn dim(&self) -> usize {
        self.users.cols()
    }

    pub fn all_finite(&self) -> bool {
        self.users.all_finite() && self.items.all_finite()
    }

    /// ||users||_F^2 + ||items||_F^2
    pub fn frob_sq(&self) -> f64 {
        self.users.frob_sq() + self.items.frob_sq()
    }

    fn check_graph(&self, graph: &BipartiteGraph) -> Result<(), DimensionMismatch> {
        if self.users.rows() != graph.num_users() {
            return Err(DimensionMismatch {
                expected: graph.num_users(),
                got: self.users.rows(),
            });
        }
        if self.items.rows() != graph.num_items() {
            return Err(DimensionMismatch {
                expected: graph.num_items(),
                got: self.items.rows(),
            });
        }
        if self.users.cols() != self.items.cols() {
            return Err(DimensionMismatch {
                expected: self.users.cols(),
                got: self.items.cols(),
            });
        }
        Ok(())
    }
}

/// Per-layer embeddings for layers 0..=L; layer 0 is the input table.
#[derive(Debug, Clone)]
pub struct LayerStack {
    pub layers: Vec<EmbeddingTable>,
}

impl LayerStack {
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }
}

/// One propagation step: users gather from item neighbors and vice versa,
/// weighted by the symmetric-normalized edge weights. Aggregation over an
/// empty neighbor set yields the zero vector.
fn propagate_step(graph: &BipartiteGraph, table: &EmbeddingTable) -> EmbeddingTable {
    let d = table.dim();
    let mut users = Matrix::zeros(graph.num_users(), d);
    let mut items = Matrix::zeros(graph.num_items(), d);
    for u in 0..graph.num_users() {
        for (i, w) in graph.user_adj.row(u) {
            users.axpy_row(u, w, table.items.row(i as usize));
        }
    }
    for i in 0..graph.num_items() {
        for (u, w) in graph.item_adj.row(i) {
            items.axpy_row(i, w, table.users.row(u as usize));
        }
    }
    EmbeddingTable { users, items }
}

/// Propagate embeddings for `layers` steps, returning all intermediate layers.
pub fn propagate(
    graph: &BipartiteGraph,
    table: &EmbeddingTable,
    layers: usize,
) -> Result<LayerStack, DimensionMismatch> {
    table.check_graph(graph)?;
    let mut stack = Vec::with_capacity(layers + 1);
    stack.push(table.clone());
    for _ in 0..layers {
        let next = propagate_step(graph, stack.last().unwrap());
        stack.push(next);
    }
    Ok(LayerStack { layers: stack })
}

/// Arithmetic mean over layers 0..=L.
pub fn pool(stack: &LayerStack) -> EmbeddingTable {
    let first = &stack.layers[0];
    let mut users = first.users.clone();
    let mut items = first.items.clone();
    for layer in &stack.layers[1..] {
        users.axpy(1.0, &layer.users);
        items.axpy(1.0, &layer.items);
    }
    let inv = 1.0 / stack.layers.len() as f64;
    users.scale(inv);
    items.scale(inv);
    EmbeddingTable { users, items }
}

/// Adjoint of pool(propagate(.)) with respect to the layer-0 table.
///
/// Propagation with symmetric normalization is a self-adjoint linear map on
/// the stacked user/item space, so the adjoint is (1/(L+1)) * sum_{l=0..L}
/// P^l applied to the incoming gradient.
pub fn pool_adjoint(
    graph: &BipartiteGraph,
    grad_final: &EmbeddingTable,
    layers: usize,
) -> Result<EmbeddingTable, DimensionMismatch> {
    grad_final.check_graph(graph)?;
    let mut acc = grad_final.clone();
    let mut current = grad_final.clone();
    for _ in 0..layers {
        current = propagate_step(graph, &current);
        acc.users.axpy(1.0, &current.users);
        acc.items.axpy(1.0, &current.items);
    }
    let inv = 1.0 / (layers + 1) as f64;
    acc.users.scale(inv);
    acc.items.scale(inv);
    Ok(acc)
}

/// Fill a table with seeded uniform values in [-1, 1); test scaffolding for
/// callers that need arbitrary non-degenerate inputs.
pub fn random_table(num_users: usize, num_items: usize, d: usize, seed: u64) -> EmbeddingTable {
    let mut rng = stream_rng(seed, Stream::Data);
    let mut table = EmbeddingTable::zeros(num_users, num_items, d);
    for v in table.users.as_mut_slice() {
        *v = rng.random_range(-1.0..1.0);
    }
    for v in table.items.as_mut_slice() {
        *v = rng.random_range(-1.0..1.0);
    }
    table
}
