//! Deterministic clustered interaction generator for tests, benchmarks,
//! and the bundled toy dataset.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use hqrec_core::graph::{Interaction, InteractionSet};
use hqrec_core::rng::{stream_rng, Stream};
use rand::Rng;

/// Shape of a synthetic dataset: users and items are assigned to clusters
/// round-robin, and each user draws `per_user` distinct items, in-cluster
/// with probability `affinity`.
#[derive(Debug, Clone, Copy)]
pub struct SynthSpec {
    pub num_users: usize,
    pub num_items: usize,
    pub per_user: usize,
    pub clusters: usize,
    pub affinity: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_users: 500,
            num_items: 800,
            per_user: 24,
            clusters: 8,
            affinity: 0.8,
            seed: 1,
        }
    }
}

/// Items in cluster `c` are `c, c+clusters, c+2*clusters, ...`.
fn cluster_size(num_items: usize, clusters: usize, c: usize) -> usize {
    (num_items - c).div_ceil(clusters)
}

/// Generate the clustered interaction set.
pub fn clustered(spec: &SynthSpec) -> InteractionSet {
    assert!(spec.clusters > 0 && spec.clusters <= spec.num_items);
    assert!((0.0..=1.0).contains(&spec.affinity));
    let mut rng = stream_rng(spec.seed, Stream::Data);
    let mut interactions = Vec::new();
    for user in 0..spec.num_users {
        let c = user % spec.clusters;
        let in_cluster = cluster_size(spec.num_items, spec.clusters, c);
        let target = spec.per_user.min(spec.num_items);
        let mut chosen = BTreeSet::new();
        while chosen.len() < target {
            let item = if rng.random::<f64>() < spec.affinity {
                c + spec.clusters * rng.random_range(0..in_cluster)
            } else {
                rng.random_range(0..spec.num_items)
            };
            chosen.insert(item as u32);
        }
        for item in chosen {
            interactions.push(Interaction {
                user: user as u32,
                item,
            });
        }
    }
    InteractionSet::new(interactions, spec.num_users, spec.num_items).expect("ids in range")
}

/// The same dataset as tab-separated "u<N>\ti<N>" lines.
pub fn clustered_tsv(spec: &SynthSpec) -> String {
    let set = clustered(spec);
    let mut s = String::new();
    for it in &set.interactions {
        let _ = writeln!(s, "u{}\ti{}", it.user, it.item);
    }
    s
}
