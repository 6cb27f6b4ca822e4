//! Quantization-aware training of graph recommendation embeddings.
//!
//! The pipeline: a weight-free graph encoder propagates user/item embeddings
//! over a normalized bipartite interaction graph, a uniform b-bit quantizer
//! compresses the pooled embeddings, and a pairwise ranking loss trains the
//! layer-0 embeddings through the quantizer with an error-scaled
//! straight-through gradient whose scaling factor is driven by a stochastic
//! Hessian-trace estimate. Quantized code tables support exact integer-only
//! top-k scoring for deployment.
//!
//! This crate is the algorithmic core: pure, deterministic, `no_std`-capable
//! (with `alloc`). File formats, the CLI, and benchmarking live in the
//! companion `hqrec` crate.

#![cfg_attr(not(feature = "std"), no_std)]

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("hqrec-core requires either the `std` or the `libm` feature");

extern crate alloc;

pub mod bpr;
pub mod encoder;
pub mod evalrank;
pub mod graph;
pub mod gste;
pub mod linalg;
pub mod quantizer;
pub mod retrieval;
pub mod rng;
pub mod trainer;

mod math;

pub use linalg::Matrix;
