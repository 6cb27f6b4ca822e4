//! Top-k ranking metrics over held-out interactions.

use alloc::vec::Vec;

use crate::graph::InteractionSet;
use crate::math;
use crate::retrieval::topk;

/// Fraction of a user's relevant items that appear in the top k of `ranked`.
/// `relevant` must be sorted ascending.
pub fn recall_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|item| relevant.binary_search(item).is_ok())
        .count();
    hits as f64 / relevant.len() as f64
}

/// Position-discounted hit quality: DCG with binary gains and 1/log2(pos+1)
/// discounts (positions 1-indexed), normalized by the best achievable DCG
/// for min(|relevant|, k) hits. `relevant` must be sorted ascending.
pub fn ndcg_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let mut dcg = 0.0;
    for (pos0, item) in ranked.iter().take(k).enumerate() {
        if relevant.binary_search(item).is_ok() {
            dcg += 1.0 / math::log2((pos0 + 2) as f64);
        }
    }
    let ideal_hits = relevant.len().min(k);
    let idcg: f64 = (0..ideal_hits).map(|p| 1.0 / math::log2((p + 2) as f64)).sum();
    dcg / idcg
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserMetrics {
    pub user: u32,
    pub recall: f64,
    pub ndcg: f64,
}

/// Aggregated ranking quality. Users without test interactions are skipped
/// entirely — they appear in neither `per_user` nor the means.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    pub per_user: Vec<UserMetrics>,
    pub mean_recall: f64,
    pub mean_ndcg: f64,
}

impl RankingResult {
    pub fn evaluated_users(&self) -> usize {
        self.per_user.len()
    }
}

/// Rank every item for each test user and score the ranking.
///
/// `score_all` maps a user id to one score per item (the caller picks the
/// scoring path — integer codes or float embeddings). Each user's training
/// items are masked out of the candidate list before ranking; ties are
/// broken by ascending item id.
pub fn evaluate<S>(
    mut score_all: S,
    test: &InteractionSet,
    train: &InteractionSet,
    k: usize,
) -> RankingResult
where
    S: FnMut(u32) -> Vec<f64>,
{
    debug_assert_eq!(test.num_users, train.num_users);
    debug_assert_eq!(test.num_items, train.num_items);
    let test_items = test.by_user_sorted();
    let train_items = train.by_user_sorted();

    let mut per_user = Vec::new();
    let mut recall_sum = 0.0;
    let mut ndcg_sum = 0.0;
    for user in 0..test.num_users {
        let relevant = &test_items[user];
        if relevant.is_empty() {
            continue;
        }
        let scores = score_all(user as u32);
        debug_assert_eq!(scores.len(), test.num_items);
        let top = topk(&scores, k, &train_items[user]);
        let ranked: Vec<u32> = top.items.iter().map(|&(item, _)| item).collect();
        let recall = recall_at_k(&ranked, relevant, k);
        let ndcg = ndcg_at_k(&ranked, relevant, k);
        recall_sum += recall;
        ndcg_sum += ndcg;
        per_user.push(UserMetrics {
            user: user as u32,
            recall,
            ndcg,
        });
    }
    let n = per_user.len().max(1) as f64;
    RankingResult {
        mean_recall: recall_sum / n,
        mean_ndcg: ndcg_sum / n,
        per_user,
    }
}
