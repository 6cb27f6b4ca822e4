//! Interaction data and the normalized bipartite user-item graph.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;

use crate::math;
use crate::rng::{stream_rng, Stream};

/// One observed user-item interaction (implicit feedback).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
}

/// A deduplicated set of interactions over dense 0-based ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionSet {
    pub interactions: Vec<Interaction>,
    pub num_users: usize,
    pub num_items: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphError {
    /// A line that is not "<user>\t<item>"; carries the 1-based line number.
    MalformedLine(usize),
    NoInteractions,
    BadFraction { name: &'static str, value: f64 },
    IdOutOfRange,
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::MalformedLine(n) => write!(f, "malformed interaction line {n}"),
            GraphError::NoInteractions => write!(f, "no interactions"),
            GraphError::BadFraction { name, value } => {
                write!(f, "fraction {name}={value} outside [0,1]")
            }
            GraphError::IdOutOfRange => write!(f, "interaction id out of range"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for GraphError {}

impl InteractionSet {
    pub fn new(
        interactions: Vec<Interaction>,
        num_users: usize,
        num_items: usize,
    ) -> Result<Self, GraphError> {
        for it in &interactions {
            if it.user as usize >= num_users || it.item as usize >= num_items {
                return Err(GraphError::IdOutOfRange);
            }
        }
        Ok(InteractionSet {
            interactions,
            num_users,
            num_items,
        })
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    /// Interactions grouped per user, item ids in input order.
    pub fn by_user(&self) -> Vec<Vec<u32>> {
        let mut per_user = vec![Vec::new(); self.num_users];
        for it in &self.interactions {
            per_user[it.user as usize].push(it.item);
        }
        per_user
    }

    /// Per-user item lists sorted ascending, for membership tests.
    pub fn by_user_sorted(&self) -> Vec<Vec<u32>> {
        let mut per_user = self.by_user();
        for items in &mut per_user {
            items.sort_unstable();
        }
        per_user
    }
}

/// Result of parsing raw interaction text: the dense set plus the raw-id
/// mapping (index = dense id) retained for export.
#[derive(Debug, Clone)]
pub struct ParsedInteractions {
    pub set: InteractionSet,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
}

/// Parse tab-separated "user<TAB>item" lines. Raw ids are arbitrary strings,
/// densely re-mapped to 0-based integers in first-appearance order. Lines
/// starting with '#' and empty lines are ignored; duplicate pairs are
/// deduplicated (first occurrence kept).
pub fn parse_interactions(text: &str) -> Result<ParsedInteractions, GraphError> {
    let mut user_ids: Vec<String> = Vec::new();
    let mut item_ids: Vec<String> = Vec::new();
    // Linear scans would be quadratic; keep side lookup tables.
    let mut user_lookup: alloc::collections::BTreeMap<&str, u32> = alloc::collections::BTreeMap::new();
    let mut item_lookup: alloc::collections::BTreeMap<&str, u32> = alloc::collections::BTreeMap::new();
    let mut seen: BTreeSet<(u32, u32)> = BTreeSet::new();
    let mut interactions = Vec::new();

    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let (user_raw, item_raw) = match (fields.next(), fields.next()) {
            (Some(u), Some(i)) if !u.is_empty() && !i.is_empty() => (u, i),
            _ => return Err(GraphError::MalformedLine(idx + 1)),
        };
        if fields.next().is_some() {
            return Err(GraphError::MalformedLine(idx + 1));
        }
        let user = *user_lookup.entry(user_raw).or_insert_with(|| {
            let u = user_ids.len() as u32;
            user_ids.push(String::from(user_raw));
            u
        });
        let item = *item_lookup.entry(item_raw).or_insert_with(|| {
            let i = item_ids.len() as u32;
            item_ids.push(String::from(item_raw));
            i
        });
        if seen.insert((user, item)) {
            interactions.push(Interaction { user, item });
        }
    }

    if interactions.is_empty() {
        return Err(GraphError::NoInteractions);
    }
    let num_users = user_ids.len();
    let num_items = item_ids.len();
    Ok(ParsedInteractions {
        set: InteractionSet {
            interactions,
            num_users,
            num_items,
        },
        user_ids,
        item_ids,
    })
}

/// Per-user train/validation/test split.
///
/// For a user with n interactions, the train portion gets floor(train_frac*n)
/// of them after a seeded shuffle; the validation set is floor(val_frac*n)
/// interactions carved out of that train portion; the remainder is test.
pub fn split(
    set: &InteractionSet,
    train_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<(InteractionSet, InteractionSet, InteractionSet), GraphError> {
    for (name, value) in [("train_frac", train_frac), ("val_frac", val_frac)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(GraphError::BadFraction { name, value });
        }
    }
    if train_frac + val_frac > 1.0 {
        return Err(GraphError::BadFraction {
            name: "train_frac+val_frac",
            value: train_frac + val_frac,
        });
    }

    let mut rng = stream_rng(seed, Stream::Split);
    let per_user = set.by_user();
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();

    for (user, items) in per_user.iter().enumerate() {
        let user = user as u32;
        let n = items.len();
        if n == 0 {
            continue;
        }
        let mut shuffled = items.clone();
        shuffled.shuffle(&mut rng);
        let n_train_portion = math::floor(train_frac * n as f64) as usize;
        let n_val = (math::floor(val_frac * n as f64) as usize).min(n_train_portion);
        for (pos, &item) in shuffled.iter().enumerate() {
            let dst = if pos < n_train_portion {
                // validation is carved from the front of the train portion
                if pos < n_val {
                    &mut val
                } else {
                    &mut train
                }
            } else {
                &mut test
            };
            dst.push(Interaction { user, item });
        }
    }

    let mk = |interactions: Vec<Interaction>| InteractionSet {
        interactions,
        num_users: set.num_users,
        num_items: set.num_items,
    };
    Ok((mk(train), mk(val), mk(test)))
}

/// One row-compressed half of the bipartite adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    indptr: Vec<usize>,
    indices: Vec<u32>,
    weights: Vec<f64>,
}

impl SparseRows {
    pub fn num_rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[span].iter().copied())
    }

    pub fn row_len(&self, r: usize) -> usize {
        self.indptr[r + 1] - self.indptr[r]
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

/// Bipartite user-item graph with symmetric-normalized edge weights
/// 1/sqrt(deg_u * deg_i). Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    pub user_adj: SparseRows,
    pub item_adj: SparseRows,
    pub user_deg: Vec<u32>,
    pub item_deg: Vec<u32>,
}

impl BipartiteGraph {
    pub fn num_users(&self) -> usize {
        self.user_deg.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_deg.len()
    }
}

/// Build the normalized adjacency from training interactions only.
/// Isolated nodes get empty rows.
pub fn build_graph(train: &InteractionSet) -> BipartiteGraph {
    let nu = train.num_users;
    let ni = train.num_items;
    let mut user_deg = vec![0u32; nu];
    let mut item_deg = vec![0u32; ni];
    for it in &train.interactions {
        user_deg[it.user as usize] += 1;
        item_deg[it.item as usize] += 1;
    }

    let build = |rows: usize, deg: &[u32], edges: &mut dyn Iterator<Item = (u32, u32, f64)>| {
        let mut indptr = vec![0usize; rows + 1];
        for r in 0..rows {
            indptr[r + 1] = indptr[r] + deg[r] as usize;
        }
        let nnz = indptr[rows];
        let mut fill = indptr.clone();
        let mut indices = vec![0u32; nnz];
        let mut weights = vec![0.0f64; nnz];
        for (row, col, w) in edges {
            let at = fill[row as usize];
            indices[at] = col;
            weights[at] = w;
            fill[row as usize] += 1;
        }
        SparseRows {
            indptr,
            indices,
            weights,
        }
    };

    let weight_of = |it: &Interaction| {
        1.0 / math::sqrt(user_deg[it.user as usize] as f64 * item_deg[it.item as usize] as f64)
    };

    let user_adj = build(
        nu,
        &user_deg,
        &mut train
            .interactions
            .iter()
            .map(|it| (it.user, it.item, weight_of(it))),
    );
    let item_adj = build(
        ni,
        &item_deg,
        &mut train
            .interactions
            .iter()
            .map(|it| (it.item, it.user, weight_of(it))),
    );

    BipartiteGraph {
        user_adj,
        item_adj,
        user_deg,
        item_deg,
    }
}
