//! The training loop: propagate and pool embeddings, quantize, score the
//! batch with the ranking loss, push gradients back through the quantizer
//! (optionally error-scaled), and apply plain SGD to the layer-0 table.
//!
//! All randomness flows from one master seed through separate named streams
//! (init / shuffling / negative sampling / trace probes), so enabling the
//! curvature probes cannot shift the data or sampling draws.

use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::bpr::{bpr_grad, bpr_hvp, bpr_loss, BatchSlots, LossReport, Triple, TripletBatch};
use crate::encoder::{pool, pool_adjoint, propagate, EmbeddingTable};
use crate::evalrank::{evaluate, RankingResult};
use crate::graph::{build_graph, BipartiteGraph, InteractionSet};
use crate::gste::{
    adjust_gradient, hutchinson_trace, update_delta, DeltaState, EstimatorMode, GsteConfig,
};
use crate::linalg::{dot, Matrix};
use crate::quantizer::{
    dequantize_matrix, quantize_matrix, DequantMode, QuantParams, QuantizedTable,
    ThresholdTracker,
};
use crate::retrieval::{score_all, CodeIndex};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub d: usize,
    pub layers: usize,
    pub bits: u8,
    pub alpha: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without a validation-recall improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub estimator: GsteConfig,
    /// Threshold-tracker decay.
    pub ema_decay: f64,
    pub k_eval: usize,
    /// When false, train on the pooled float embeddings directly (the
    /// full-precision reference); the quantizer and estimator are bypassed.
    pub quantize: bool,
    pub dequant: DequantMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 64,
            layers: 2,
            bits: 8,
            alpha: 1e-4,
            lr: 0.01,
            batch_size: 1024,
            epochs: 200,
            patience: 20,
            seed: 42,
            estimator: GsteConfig::default(),
            ema_decay: 0.99,
            k_eval: 50,
            quantize: true,
            dequant: DequantMode::Affine,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |msg| Err(TrainError::BadConfig(msg));
        if self.d == 0 {
            return fail("embedding dimension must be positive");
        }
        if self.layers == 0 {
            return fail("layer count must be positive");
        }
        if !(1..=16).contains(&self.bits) {
            return fail("bit width must lie in 1..=16");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("learning rate must be positive");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail("regularization weight must be non-negative");
        }
        if self.batch_size == 0 {
            return fail("batch size must be positive");
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return fail("threshold decay must lie in (0, 1)");
        }
        if self.k_eval == 0 {
            return fail("evaluation cutoff must be positive");
        }
        if self.estimator.validate().is_err() {
            return fail("estimator config invalid");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainError {
    BadConfig(&'static str),
    /// A user interacts with every item; negatives cannot be sampled.
    Saturated { user: u32 },
    /// Non-finite loss or parameters at the given global step.
    Divergence { step: usize },
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::BadConfig(msg) => write!(f, "bad training config: {msg}"),
            TrainError::Saturated { user } => {
                write!(f, "user {user} interacts with every item; no negatives exist")
            }
            TrainError::Divergence { step } => {
                write!(f, "training diverged at step {step} (non-finite values)")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TrainError {}

/// Per-epoch history line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean ranking loss per triple plus the epoch-mean regularization
    /// value — comparable across epochs even when the last batch is short.
    pub train_loss: f64,
    pub val_recall: f64,
    pub val_ndcg: f64,
    pub delta: f64,
}

/// Per-batch delta-maintenance line (written only on the error-scaled path).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub delta: f64,
    pub trace: f64,
    pub grad_mag: f64,
}

/// Best-validation snapshot: the layer-0 table plus the frozen quantizer
/// thresholds that were active when it was taken.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub table: EmbeddingTable,
    pub user_params: Option<QuantParams>,
    pub item_params: Option<QuantParams>,
    pub epoch: usize,
    pub val_recall: f64,
    pub val_ndcg: f64,
    pub delta: f64,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub table: EmbeddingTable,
    pub user_q: ThresholdTracker,
    pub item_q: ThresholdTracker,
    pub delta: DeltaState,
    pub epoch: usize,
    pub step_count: usize,
    pub history: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
    pub best: Option<Checkpoint>,
}

impl TrainState {
    pub fn new(config: &TrainConfig, num_users: usize, num_items: usize) -> Self {
        TrainState {
            table: EmbeddingTable::init(num_users, num_items, config.d, config.seed),
            user_q: ThresholdTracker::new(config.ema_decay),
            item_q: ThresholdTracker::new(config.ema_decay),
            delta: DeltaState::new(),
            epoch: 0,
            step_count: 0,
            history: Vec::new(),
            steps: Vec::new(),
            best: None,
        }
    }
}

/// Uniform negative sampling with rejection against the training set.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    items_by_user: Vec<Vec<u32>>,
    num_items: usize,
}

impl NegativeSampler {
    pub fn new(train: &InteractionSet) -> Result<Self, TrainError> {
        let items_by_user = train.by_user_sorted();
        for (user, items) in items_by_user.iter().enumerate() {
            if items.len() >= train.num_items {
                return Err(TrainError::Saturated { user: user as u32 });
            }
        }
        Ok(NegativeSampler {
            items_by_user,
            num_items: train.num_items,
        })
    }

    /// Draw one negative per positive: j uniform over items, redrawn while
    /// (u, j) is a training interaction.
    pub fn sample<R: Rng>(&self, positives: &[(u32, u32)], rng: &mut R) -> TripletBatch {
        let mut batch = Vec::with_capacity(positives.len());
        for &(user, pos) in positives {
            let owned = &self.items_by_user[user as usize];
            let neg = loop {
                let j = rng.random_range(0..self.num_items as u32);
                if owned.binary_search(&j).is_err() {
                    break j;
                }
            };
            batch.push(Triple { user, pos, neg });
        }
        batch
    }
}

/// Spec-shaped convenience over [`NegativeSampler`].
pub fn sample_negatives<R: Rng>(
    train: &InteractionSet,
    positives: &[(u32, u32)],
    rng: &mut R,
) -> Result<TripletBatch, TrainError> {
    Ok(NegativeSampler::new(train)?.sample(positives, rng))
}

/// Backward pass of normalize-then-round under pass-through rounding:
/// divide by the grid spacing and zero every coordinate the forward clip
/// saturated.
pub fn quantizer_backward(g_n: &Matrix, pooled: &Matrix, p: &QuantParams) -> Matrix {
    let inv = 1.0 / p.delta();
    let mut out = Matrix::zeros(g_n.rows(), g_n.cols());
    for ((o, &g), &x) in out
        .as_mut_slice()
        .iter_mut()
        .zip(g_n.iter())
        .zip(pooled.iter())
    {
        if x >= p.l && x <= p.u {
            *o = g * inv;
        }
    }
    out
}

fn flat_slot_view(slots: &BatchSlots, gu: &Matrix, gi: &Matrix, d: usize) -> Vec<f64> {
    let mut flat = Vec::with_capacity(slots.flat_len(d));
    for &u in &slots.users {
        flat.extend_from_slice(gu.row(u as usize));
    }
    for &i in &slots.items {
        flat.extend_from_slice(gi.row(i as usize));
    }
    flat
}

/// One SGD step over one triple batch. See the module doc for the chain;
/// the probe generator is consumed only on the error-scaled path.
pub fn train_step<R: Rng>(
    state: &mut TrainState,
    graph: &BipartiteGraph,
    batch: &[Triple],
    config: &TrainConfig,
    probes_rng: &mut R,
) -> Result<LossReport, TrainError> {
    state.step_count += 1;
    let step = state.step_count;

    let stack = propagate(graph, &state.table, config.layers)
        .map_err(|_| TrainError::BadConfig("table shape does not match graph"))?;
    let pooled = pool(&stack);
    if !pooled.all_finite() {
        return Err(TrainError::Divergence { step });
    }

    let (report, grad_pooled) = if config.quantize {
        state.user_q.observe(pooled.users.as_slice());
        state.item_q.observe(pooled.items.as_slice());
        let pu = state.user_q.params(config.bits).expect("tracker range is valid");
        let pi = state.item_q.params(config.bits).expect("tracker range is valid");

        let (xn_u, xq_u) = quantize_matrix(&pooled.users, &pu);
        let (xn_i, xq_i) = quantize_matrix(&pooled.items, &pi);
        let q_u = dequantize_matrix(&xq_u, &pu, config.dequant);
        let q_i = dequantize_matrix(&xq_i, &pi, config.dequant);

        let report = bpr_loss(batch, &q_u, &q_i, &state.table, config.alpha);

        // loss gradient onto the integer levels: scale by the grid spacing
        let (mut g_xqu, mut g_xqi) = bpr_grad(batch, &q_u, &q_i);
        g_xqu.scale(pu.delta());
        g_xqi.scale(pi.delta());

        let gste = config.estimator.mode == EstimatorMode::Gste;
        let (g_nu, g_ni) = if gste {
            let delta_now = state.delta.delta;
            if !batch.is_empty() {
                // curvature bookkeeping for the *next* batch's delta
                let slots = BatchSlots::from_triples(batch);
                let n = slots.flat_len(config.d);
                let slot_grad = flat_slot_view(&slots, &g_xqu, &g_xqi, config.d);
                let nu_block = slots.users.len() * config.d;
                let hvp = |v: &[f64]| -> Vec<f64> {
                    let mut w = v.to_vec();
                    for (k, x) in w.iter_mut().enumerate() {
                        *x *= if k < nu_block { pu.delta() } else { pi.delta() };
                    }
                    let mut hv =
                        bpr_hvp(batch, &q_u, &q_i, &slots, &w).expect("slot layout is consistent");
                    for (k, x) in hv.iter_mut().enumerate() {
                        *x *= if k < nu_block { pu.delta() } else { pi.delta() };
                    }
                    hv
                };
                let trace = hutchinson_trace(
                    hvp,
                    n,
                    config.estimator.probes_per_batch,
                    probes_rng,
                );
                let grad_mag =
                    slot_grad.iter().map(|g| g.abs()).sum::<f64>() / slot_grad.len() as f64;
                let next_delta = update_delta(&mut state.delta, trace, &slot_grad, &config.estimator);
                state.steps.push(StepRecord {
                    step,
                    delta: next_delta,
                    trace,
                    grad_mag,
                });
            }
            let au = adjust_gradient(g_xqu.as_slice(), xn_u.as_slice(), xq_u.as_slice(), delta_now)
                .expect("gradient and coordinate shapes match");
            let ai = adjust_gradient(g_xqi.as_slice(), xn_i.as_slice(), xq_i.as_slice(), delta_now)
                .expect("gradient and coordinate shapes match");
            (
                Matrix::from_vec(g_xqu.rows(), g_xqu.cols(), au),
                Matrix::from_vec(g_xqi.rows(), g_xqi.cols(), ai),
            )
        } else {
            (g_xqu, g_xqi)
        };

        let g_eu = quantizer_backward(&g_nu, &pooled.users, &pu);
        let g_ei = quantizer_backward(&g_ni, &pooled.items, &pi);
        (
            report,
            EmbeddingTable {
                users: g_eu,
                items: g_ei,
            },
        )
    } else {
        let report = bpr_loss(batch, &pooled.users, &pooled.items, &state.table, config.alpha);
        let (gu, gi) = bpr_grad(batch, &pooled.users, &pooled.items);
        (
            report,
            EmbeddingTable {
                users: gu,
                items: gi,
            },
        )
    };

    if !report.total.is_finite() {
        return Err(TrainError::Divergence { step });
    }

    let grad0 = pool_adjoint(graph, &grad_pooled, config.layers)
        .expect("gradient table matches graph");
    let two_alpha = 2.0 * config.alpha;
    for (theta, &g) in state
        .table
        .users
        .as_mut_slice()
        .iter_mut()
        .zip(grad0.users.iter())
    {
        *theta -= config.lr * (g + two_alpha * *theta);
    }
    for (theta, &g) in state
        .table
        .items
        .as_mut_slice()
        .iter_mut()
        .zip(grad0.items.iter())
    {
        *theta -= config.lr * (g + two_alpha * *theta);
    }
    if !state.table.all_finite() {
        return Err(TrainError::Divergence { step });
    }
    Ok(report)
}

/// Pooled embeddings of the current parameters.
pub fn pooled_embeddings(
    table: &EmbeddingTable,
    graph: &BipartiteGraph,
    layers: usize,
) -> EmbeddingTable {
    pool(&propagate(graph, table, layers).expect("table matches graph"))
}

/// Quantize the pooled tables into integer codes under frozen params.
pub fn export_codes(
    table: &EmbeddingTable,
    graph: &BipartiteGraph,
    layers: usize,
    user_params: QuantParams,
    item_params: QuantParams,
) -> (QuantizedTable, QuantizedTable) {
    let pooled = pooled_embeddings(table, graph, layers);
    (
        QuantizedTable::from_matrix(&pooled.users, user_params),
        QuantizedTable::from_matrix(&pooled.items, item_params),
    )
}

/// Rank all items for every evaluation user against `eval_set`, scoring on
/// the integer-code path under the given frozen params.
pub fn evaluate_quantized(
    table: &EmbeddingTable,
    graph: &BipartiteGraph,
    layers: usize,
    user_params: QuantParams,
    item_params: QuantParams,
    eval_set: &InteractionSet,
    train_set: &InteractionSet,
    k: usize,
) -> RankingResult {
    let (user_codes, item_codes) = export_codes(table, graph, layers, user_params, item_params);
    let index = CodeIndex::new(item_codes, user_params);
    evaluate(
        |u| {
            let row = user_codes.row(u as usize);
            let sum = row.iter().map(|&c| c as u32).sum();
            score_all(row, sum, &index).expect("query dimension matches index")
        },
        eval_set,
        train_set,
        k,
    )
}

/// Rank all items per user on pooled float embeddings (the full-precision
/// reference path).
pub fn evaluate_float(
    table: &EmbeddingTable,
    graph: &BipartiteGraph,
    layers: usize,
    eval_set: &InteractionSet,
    train_set: &InteractionSet,
    k: usize,
) -> RankingResult {
    let pooled = pooled_embeddings(table, graph, layers);
    evaluate(
        |u| {
            (0..pooled.items.rows())
                .map(|i| dot(pooled.users.row(u as usize), pooled.items.row(i)))
                .collect()
        },
        eval_set,
        train_set,
        k,
    )
}

fn eval_current(
    state: &TrainState,
    graph: &BipartiteGraph,
    val_set: &InteractionSet,
    train_set: &InteractionSet,
    config: &TrainConfig,
) -> (f64, f64, Option<(QuantParams, QuantParams)>) {
    if config.quantize {
        let pu = state.user_q.params(config.bits).expect("tracker initialized");
        let pi = state.item_q.params(config.bits).expect("tracker initialized");
        let result = evaluate_quantized(
            &state.table,
            graph,
            config.layers,
            pu,
            pi,
            val_set,
            train_set,
            config.k_eval,
        );
        (result.mean_recall, result.mean_ndcg, Some((pu, pi)))
    } else {
        let result = evaluate_float(
            &state.table,
            graph,
            config.layers,
            val_set,
            train_set,
            config.k_eval,
        );
        (result.mean_recall, result.mean_ndcg, None)
    }
}

/// Full training run: per-epoch shuffled passes over the positives,
/// validation ranking after each epoch, best-checkpoint retention, early
/// stop on stale validation recall.
pub fn train(
    train_set: &InteractionSet,
    val_set: &InteractionSet,
    config: &TrainConfig,
) -> Result<TrainState, TrainError> {
    config.validate()?;
    let graph = build_graph(train_set);
    let mut state = TrainState::new(config, train_set.num_users, train_set.num_items);
    if config.epochs == 0 {
        return Ok(state);
    }
    let sampler = NegativeSampler::new(train_set)?;
    let mut shuffle_rng = stream_rng(config.seed, Stream::Data);
    let mut neg_rng = stream_rng(config.seed, Stream::Negatives);
    let mut probes_rng = stream_rng(config.seed, Stream::Probes);

    let mut positives: Vec<(u32, u32)> = train_set
        .interactions
        .iter()
        .map(|x| (x.user, x.item))
        .collect();

    let mut best_recall = f64::NEG_INFINITY;
    let mut stale = 0usize;
    for epoch in 1..=config.epochs {
        positives.shuffle(&mut shuffle_rng);
        let mut bpr_sum = 0.0;
        let mut reg_sum = 0.0;
        let mut batches = 0usize;
        for chunk in positives.chunks(config.batch_size) {
            let batch = sampler.sample(chunk, &mut neg_rng);
            let report = train_step(&mut state, &graph, &batch, config, &mut probes_rng)?;
            bpr_sum += report.bpr;
            reg_sum += report.reg;
            batches += 1;
        }
        state.epoch = epoch;

        let (val_recall, val_ndcg, params) = eval_current(&state, &graph, val_set, train_set, config);
        state.history.push(EpochRecord {
            epoch,
            train_loss: bpr_sum / positives.len().max(1) as f64 + reg_sum / batches.max(1) as f64,
            val_recall,
            val_ndcg,
            delta: state.delta.delta,
        });

        if val_recall > best_recall {
            best_recall = val_recall;
            stale = 0;
            state.best = Some(Checkpoint {
                table: state.table.clone(),
                user_params: params.map(|(pu, _)| pu),
                item_params: params.map(|(_, pi)| pi),
                epoch,
                val_recall,
                val_ndcg,
                delta: state.delta.delta,
            });
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    Ok(state)
}
