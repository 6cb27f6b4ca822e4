//! Checkpoint directory layout: the layer-0 embedding tables in "HQEM"
//! files plus a metadata file echoing the run configuration, the stopping
//! epoch, delta, and the frozen quantizer thresholds.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use hqrec_core::encoder::EmbeddingTable;
use hqrec_core::quantizer::QuantParams;

use crate::config::{dequant_name, estimator_name, RunConfig};
use crate::formats::{read_embeddings, write_embeddings};
use crate::CliError;

pub const USER_EMB_FILE: &str = "user_emb.hqem";
pub const ITEM_EMB_FILE: &str = "item_emb.hqem";
pub const META_FILE: &str = "meta.txt";
pub const USER_CODES_FILE: &str = "users.hqcd";
pub const ITEM_CODES_FILE: &str = "items.hqcd";
pub const META_VERSION: u32 = 1;

/// Everything cmd_eval and cmd_export need beyond the embedding tables.
#[derive(Debug, Clone)]
pub struct Meta {
    pub config: RunConfig,
    pub num_users: usize,
    pub num_items: usize,
    pub epoch: usize,
    pub val_recall: f64,
    pub val_ndcg: f64,
    pub delta: f64,
    /// Frozen clip thresholds, present on quantized runs.
    pub user_range: Option<(f64, f64)>,
    pub item_range: Option<(f64, f64)>,
}

impl Meta {
    /// Frozen user/item quantizer params, if this was a quantized run.
    pub fn quant_params(&self) -> Result<Option<(QuantParams, QuantParams)>, CliError> {
        match (self.user_range, self.item_range) {
            (Some((ul, uu)), Some((il, iu))) => {
                let b = self.config.train.bits;
                let mk = |l, u| {
                    QuantParams::new(l, u, b)
                        .map_err(|e| CliError::usage(format!("checkpoint thresholds: {e}")))
                };
                Ok(Some((mk(ul, uu)?, mk(il, iu)?)))
            }
            (None, None) => Ok(None),
            _ => Err(CliError::usage(
                "checkpoint metadata has thresholds for only one table",
            )),
        }
    }
}

fn meta_text(meta: &Meta) -> String {
    let c = &meta.config;
    let t = &c.train;
    let mut s = String::new();
    let _ = writeln!(s, "meta_version={META_VERSION}");
    if let Some(data) = &c.data {
        let _ = writeln!(s, "data={}", data.display());
    }
    let _ = writeln!(s, "dim={}", t.d);
    let _ = writeln!(s, "layers={}", t.layers);
    let _ = writeln!(s, "bits={}", t.bits);
    let _ = writeln!(s, "lr={}", t.lr);
    let _ = writeln!(s, "alpha={}", t.alpha);
    let _ = writeln!(s, "batch_size={}", t.batch_size);
    let _ = writeln!(s, "epochs={}", t.epochs);
    let _ = writeln!(s, "patience={}", t.patience);
    let _ = writeln!(s, "seed={}", t.seed);
    let _ = writeln!(s, "estimator={}", estimator_name(t.estimator.mode));
    let _ = writeln!(s, "probes={}", t.estimator.probes_per_batch);
    let _ = writeln!(s, "delta_decay={}", t.estimator.delta_decay);
    let _ = writeln!(s, "delta_clamp_lo={}", t.estimator.delta_clamp.0);
    let _ = writeln!(s, "delta_clamp_hi={}", t.estimator.delta_clamp.1);
    let _ = writeln!(s, "ema_decay={}", t.ema_decay);
    let _ = writeln!(s, "k={}", t.k_eval);
    let _ = writeln!(s, "quantize={}", t.quantize);
    let _ = writeln!(s, "dequant={}", dequant_name(t.dequant));
    let _ = writeln!(s, "train_frac={}", c.train_frac);
    let _ = writeln!(s, "val_frac={}", c.val_frac);
    let _ = writeln!(s, "threads={}", c.threads);
    let _ = writeln!(s, "num_users={}", meta.num_users);
    let _ = writeln!(s, "num_items={}", meta.num_items);
    let _ = writeln!(s, "epoch={}", meta.epoch);
    let _ = writeln!(s, "val_recall={}", meta.val_recall);
    let _ = writeln!(s, "val_ndcg={}", meta.val_ndcg);
    let _ = writeln!(s, "delta={}", meta.delta);
    if let Some((l, u)) = meta.user_range {
        let _ = writeln!(s, "user_l={l}");
        let _ = writeln!(s, "user_u={u}");
    }
    if let Some((l, u)) = meta.item_range {
        let _ = writeln!(s, "item_l={l}");
        let _ = writeln!(s, "item_u={u}");
    }
    s
}

/// Write the embedding tables and metadata into `dir` (created if absent).
pub fn save(dir: &Path, table: &EmbeddingTable, meta: &Meta) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
    write_embeddings(&dir.join(USER_EMB_FILE), &table.users)
        .map_err(|e| CliError::usage(format!("writing {USER_EMB_FILE}: {e}")))?;
    write_embeddings(&dir.join(ITEM_EMB_FILE), &table.items)
        .map_err(|e| CliError::usage(format!("writing {ITEM_EMB_FILE}: {e}")))?;
    fs::write(dir.join(META_FILE), meta_text(meta))
        .map_err(|e| CliError::usage(format!("writing {META_FILE}: {e}")))?;
    Ok(())
}

fn parse_meta(text: &str) -> Result<Meta, CliError> {
    let mut config = RunConfig::default();
    let mut version = None;
    let mut fields: std::collections::HashMap<&str, &str> = Default::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::usage(format!("metadata line {}: expected key=value", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "meta_version" => version = Some(value.parse::<u32>().ok()),
            "num_users" | "num_items" | "epoch" | "val_recall" | "val_ndcg" | "delta"
            | "user_l" | "user_u" | "item_l" | "item_u" => {
                fields.insert(key, value);
            }
            _ => config.apply(key, value)?,
        }
    }
    match version {
        Some(Some(META_VERSION)) => {}
        Some(_) => return Err(CliError::usage("unsupported checkpoint metadata version")),
        None => return Err(CliError::usage("checkpoint metadata missing meta_version")),
    }

    fn req<T: std::str::FromStr>(
        fields: &std::collections::HashMap<&str, &str>,
        key: &str,
    ) -> Result<T, CliError> {
        fields
            .get(key)
            .ok_or_else(|| CliError::usage(format!("checkpoint metadata missing {key}")))?
            .parse()
            .map_err(|_| CliError::usage(format!("checkpoint metadata: bad value for {key}")))
    }
    fn opt_range(
        fields: &std::collections::HashMap<&str, &str>,
        lo: &str,
        hi: &str,
    ) -> Result<Option<(f64, f64)>, CliError> {
        match (fields.contains_key(lo), fields.contains_key(hi)) {
            (true, true) => Ok(Some((req(fields, lo)?, req(fields, hi)?))),
            (false, false) => Ok(None),
            _ => Err(CliError::usage(format!(
                "checkpoint metadata has {lo} without {hi} (or vice versa)"
            ))),
        }
    }

    Ok(Meta {
        num_users: req(&fields, "num_users")?,
        num_items: req(&fields, "num_items")?,
        epoch: req(&fields, "epoch")?,
        val_recall: req(&fields, "val_recall")?,
        val_ndcg: req(&fields, "val_ndcg")?,
        delta: req(&fields, "delta")?,
        user_range: opt_range(&fields, "user_l", "user_u")?,
        item_range: opt_range(&fields, "item_l", "item_u")?,
        config,
    })
}

/// Load a checkpoint directory back into memory, validating table shapes
/// against the metadata.
pub fn load(dir: &Path) -> Result<(EmbeddingTable, Meta), CliError> {
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", meta_path.display())))?;
    let meta = parse_meta(&text)?;
    let users = read_embeddings(&dir.join(USER_EMB_FILE))?;
    let items = read_embeddings(&dir.join(ITEM_EMB_FILE))?;
    if users.rows() != meta.num_users || items.rows() != meta.num_items {
        return Err(CliError::usage("embedding tables do not match metadata counts"));
    }
    if users.cols() != meta.config.train.d || items.cols() != meta.config.train.d {
        return Err(CliError::usage("embedding width does not match metadata dim"));
    }
    Ok((EmbeddingTable { users, items }, meta))
}
