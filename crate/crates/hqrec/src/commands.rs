//! The five CLI operations: train, eval, export, retrieve, bench.
//! Each returns the text destined for standard output; warnings go to
//! standard error and exit codes are derived from `CliError`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use hqrec_core::evalrank::{evaluate, RankingResult};
use hqrec_core::graph::{build_graph, parse_interactions, split, InteractionSet, ParsedInteractions};
use hqrec_core::quantizer::QuantizedTable;
use hqrec_core::retrieval::{score_all, topk, CodeIndex};
use hqrec_core::trainer::{evaluate_float, evaluate_quantized, export_codes, train, Checkpoint};

use crate::checkpoint::{
    self, Meta, ITEM_CODES_FILE, ITEM_EMB_FILE, META_FILE, USER_CODES_FILE, USER_EMB_FILE,
};
use crate::config::{estimator_name, RunConfig};
use crate::formats::{read_codes, write_codes};
use crate::reports::{history_csv, metrics_csv, steps_csv, summary_json, JsonValue};
use crate::{bench, CliError};

/// Load and densely re-map a tab-separated interaction file.
fn load_data(path: &Path) -> Result<ParsedInteractions, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read data file {}: {e}", path.display())))?;
    let parsed = parse_interactions(&text)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    log::info!(
        "{}: {} interactions, {} users, {} items",
        path.display(),
        parsed.set.len(),
        parsed.set.num_users,
        parsed.set.num_items
    );
    Ok(parsed)
}

/// Union of two splits over the same id space, used to mask known
/// positives during test-set ranking.
fn merged(a: &InteractionSet, b: &InteractionSet) -> InteractionSet {
    let mut interactions = a.interactions.clone();
    interactions.extend(b.interactions.iter().copied());
    InteractionSet::new(interactions, a.num_users, a.num_items).expect("ids already validated")
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

/// Resolve the run configuration, train, and write every artifact into the
/// output directory: checkpoint, code tables, history/step CSVs, per-user
/// metrics, and the JSON summary.
pub fn cmd_train(
    config_file: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<String, CliError> {
    let mut config = RunConfig::default();
    if let Some(path) = config_file {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::usage(format!("cannot read config file {}: {e}", path.display()))
        })?;
        config.apply_file_text(&text)?;
    }
    for (key, value) in overrides {
        config.apply(key, value)?;
    }
    config.validate()?;
    if config.train.epochs == 0 {
        return Err(CliError::usage("epochs must be >= 1 to produce a checkpoint"));
    }
    let data_path = config
        .data
        .clone()
        .ok_or_else(|| CliError::usage("no data file given (--data or data= in config)"))?;
    let out_dir = config
        .out
        .clone()
        .ok_or_else(|| CliError::usage("no output directory given (--out or out= in config)"))?;
    if config.threads > 1 {
        log::info!("threads={} requested; scoring runs single-threaded", config.threads);
    }

    let parsed = load_data(&data_path)?;
    let (train_set, val_set, test_set) =
        split(&parsed.set, config.train_frac, config.val_frac, config.train.seed)?;
    log::info!(
        "split sizes: train={} val={} test={}",
        train_set.len(),
        val_set.len(),
        test_set.len()
    );

    let state = train(&train_set, &val_set, &config.train)?;
    let best: Checkpoint = state.best.clone().ok_or_else(|| {
        CliError::usage("training retained no checkpoint (no validation evaluations ran)")
    })?;
    log::info!(
        "finished after epoch {} (best epoch {}, val recall {})",
        state.epoch,
        best.epoch,
        best.val_recall
    );

    let graph = build_graph(&train_set);
    let mask = merged(&train_set, &val_set);
    let k = config.train.k_eval;
    let quant = best.user_params.zip(best.item_params);
    let result = match quant {
        Some((pu, pi)) => evaluate_quantized(
            &best.table,
            &graph,
            config.train.layers,
            pu,
            pi,
            &test_set,
            &mask,
            k,
        ),
        None => evaluate_float(&best.table, &graph, config.train.layers, &test_set, &mask, k),
    };

    let meta = Meta {
        config: config.clone(),
        num_users: parsed.set.num_users,
        num_items: parsed.set.num_items,
        epoch: best.epoch,
        val_recall: best.val_recall,
        val_ndcg: best.val_ndcg,
        delta: best.delta,
        user_range: best.user_params.map(|p| (p.l, p.u)),
        item_range: best.item_params.map(|p| (p.l, p.u)),
    };
    checkpoint::save(&out_dir, &best.table, &meta)?;
    if let Some((pu, pi)) = quant {
        let (user_codes, item_codes) =
            export_codes(&best.table, &graph, config.train.layers, pu, pi);
        write_codes(&out_dir.join(USER_CODES_FILE), &user_codes)
            .map_err(|e| CliError::usage(format!("writing {USER_CODES_FILE}: {e}")))?;
        write_codes(&out_dir.join(ITEM_CODES_FILE), &item_codes)
            .map_err(|e| CliError::usage(format!("writing {ITEM_CODES_FILE}: {e}")))?;
    }
    write_text(&out_dir.join("history.csv"), &history_csv(&state.history))?;
    write_text(&out_dir.join("steps.csv"), &steps_csv(&state.steps))?;
    write_text(
        &out_dir.join("metrics.csv"),
        &metrics_csv(&result, Some(&parsed.user_ids)),
    )?;
    let summary = summary_json(&[
        ("k", JsonValue::Int(k as u64)),
        ("evaluated_users", JsonValue::Int(result.evaluated_users() as u64)),
        ("test_recall", JsonValue::Num(result.mean_recall)),
        ("test_ndcg", JsonValue::Num(result.mean_ndcg)),
        ("val_recall", JsonValue::Num(best.val_recall)),
        ("val_ndcg", JsonValue::Num(best.val_ndcg)),
        ("best_epoch", JsonValue::Int(best.epoch as u64)),
        ("epochs_run", JsonValue::Int(state.epoch as u64)),
        ("delta", JsonValue::Num(best.delta)),
        ("seed", JsonValue::Int(config.train.seed)),
        ("dim", JsonValue::Int(config.train.d as u64)),
        ("layers", JsonValue::Int(config.train.layers as u64)),
        ("bits", JsonValue::Int(config.train.bits as u64)),
        ("estimator", JsonValue::Str(estimator_name(config.train.estimator.mode).into())),
        ("quantize", JsonValue::Bool(config.train.quantize)),
    ]);
    write_text(&out_dir.join("summary.json"), &summary)?;

    let mut out = String::new();
    let _ = writeln!(out, "out={}", out_dir.display());
    let _ = writeln!(out, "best_epoch={}", best.epoch);
    let _ = writeln!(out, "val_recall@{k}={}", best.val_recall);
    let _ = writeln!(out, "val_ndcg@{k}={}", best.val_ndcg);
    let _ = writeln!(out, "test_recall@{k}={}", result.mean_recall);
    let _ = writeln!(out, "test_ndcg@{k}={}", result.mean_ndcg);
    Ok(out)
}

fn load_code_file(path: &Path) -> Result<(QuantizedTable, Vec<u32>), CliError> {
    read_codes(path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Check that a code table carries exactly the frozen thresholds recorded
/// in the checkpoint metadata.
fn check_code_params(
    table: &QuantizedTable,
    expected: hqrec_core::quantizer::QuantParams,
    name: &str,
) -> Result<(), CliError> {
    let p = table.params;
    if p.b != expected.b
        || p.l.to_bits() != expected.l.to_bits()
        || p.u.to_bits() != expected.u.to_bits()
    {
        return Err(CliError::usage(format!(
            "{name}: quantizer params do not match the checkpoint metadata"
        )));
    }
    Ok(())
}

/// Evaluate a checkpoint on the held-out test split, scoring quantized
/// checkpoints on the integer path from the stored code tables.
pub fn cmd_eval(
    checkpoint_dir: &Path,
    data: Option<&Path>,
    k_flag: Option<usize>,
) -> Result<String, CliError> {
    let (table, meta) = checkpoint::load(checkpoint_dir)?;
    let k = k_flag.unwrap_or(meta.config.train.k_eval);
    if k == 0 {
        return Err(CliError::usage("k must be >= 1"));
    }
    let data_path = data
        .map(Path::to_path_buf)
        .or_else(|| meta.config.data.clone())
        .ok_or_else(|| CliError::usage("no data file given and none recorded in checkpoint"))?;
    let parsed = load_data(&data_path)?;
    if parsed.set.num_users != meta.num_users || parsed.set.num_items != meta.num_items {
        return Err(CliError::usage(format!(
            "data file has {} users / {} items but the checkpoint was trained on {} / {}",
            parsed.set.num_users, parsed.set.num_items, meta.num_users, meta.num_items
        )));
    }
    if k > meta.num_items {
        eprintln!(
            "warning: k={k} exceeds the item count {}; ranking all items",
            meta.num_items
        );
    }
    let (train_set, val_set, test_set) = split(
        &parsed.set,
        meta.config.train_frac,
        meta.config.val_frac,
        meta.config.train.seed,
    )?;
    let mask = merged(&train_set, &val_set);

    let result: RankingResult = match meta.quant_params()? {
        Some((pu, pi)) => {
            let (user_codes, _) = load_code_file(&checkpoint_dir.join(USER_CODES_FILE))?;
            let (item_codes, item_sums) = load_code_file(&checkpoint_dir.join(ITEM_CODES_FILE))?;
            check_code_params(&user_codes, pu, USER_CODES_FILE)?;
            check_code_params(&item_codes, pi, ITEM_CODES_FILE)?;
            if user_codes.rows() != meta.num_users || item_codes.rows() != meta.num_items {
                return Err(CliError::usage("code tables do not match checkpoint counts"));
            }
            if user_codes.cols() != meta.config.train.d || item_codes.cols() != meta.config.train.d
            {
                return Err(CliError::usage("code tables do not match checkpoint dim"));
            }
            let index = CodeIndex::from_parts(item_codes, pu, item_sums)
                .map_err(|e| CliError::usage(format!("{ITEM_CODES_FILE}: {e}")))?;
            evaluate(
                |u| {
                    let row = user_codes.row(u as usize);
                    let sum = row.iter().map(|&c| c as u32).sum();
                    score_all(row, sum, &index).expect("dims validated")
                },
                &test_set,
                &mask,
                k,
            )
        }
        None => {
            let graph = build_graph(&train_set);
            evaluate_float(&table, &graph, meta.config.train.layers, &test_set, &mask, k)
        }
    };

    let mut out = String::new();
    let _ = writeln!(out, "recall@{k}={}", result.mean_recall);
    let _ = writeln!(out, "ndcg@{k}={}", result.mean_ndcg);
    let _ = writeln!(out, "users={}", result.evaluated_users());
    Ok(out)
}

/// Re-materialize the integer code tables from a checkpoint under its
/// frozen quantizer thresholds.
pub fn cmd_export(
    checkpoint_dir: &Path,
    bits: Option<u8>,
    out_dir: &Path,
    data: Option<&Path>,
) -> Result<String, CliError> {
    let (table, meta) = checkpoint::load(checkpoint_dir)?;
    if let Some(b) = bits {
        if b != meta.config.train.bits {
            return Err(CliError::usage(format!(
                "requested bit width {b} does not match checkpoint bit width {}",
                meta.config.train.bits
            )));
        }
    }
    let (pu, pi) = meta.quant_params()?.ok_or_else(|| {
        CliError::usage("checkpoint was trained without quantization; nothing to export")
    })?;
    let data_path = data
        .map(Path::to_path_buf)
        .or_else(|| meta.config.data.clone())
        .ok_or_else(|| CliError::usage("no data file given and none recorded in checkpoint"))?;
    let parsed = load_data(&data_path)?;
    if parsed.set.num_users != meta.num_users || parsed.set.num_items != meta.num_items {
        return Err(CliError::usage("data file does not match checkpoint counts"));
    }
    let (train_set, _, _) = split(
        &parsed.set,
        meta.config.train_frac,
        meta.config.val_frac,
        meta.config.train.seed,
    )?;
    let graph = build_graph(&train_set);
    let (user_codes, item_codes) =
        export_codes(&table, &graph, meta.config.train.layers, pu, pi);
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::usage(format!("cannot create {}: {e}", out_dir.display())))?;
    write_codes(&out_dir.join(USER_CODES_FILE), &user_codes)
        .map_err(|e| CliError::usage(format!("writing {USER_CODES_FILE}: {e}")))?;
    write_codes(&out_dir.join(ITEM_CODES_FILE), &item_codes)
        .map_err(|e| CliError::usage(format!("writing {ITEM_CODES_FILE}: {e}")))?;
    Ok(format!(
        "out={}\nusers={}\nitems={}\nbits={}\n",
        out_dir.display(),
        user_codes.rows(),
        item_codes.rows(),
        meta.config.train.bits
    ))
}

/// A retrieval query: a row of the stored user code table, or a raw code
/// vector supplied on the command line.
#[derive(Debug, Clone)]
pub enum RetrieveQuery {
    User(usize),
    CodeRow(Vec<u16>),
}

/// Rank items for one query on the integer path and print the top k.
pub fn cmd_retrieve(codes_dir: &Path, query: &RetrieveQuery, k: usize) -> Result<String, CliError> {
    if k == 0 {
        return Err(CliError::usage("k must be >= 1"));
    }
    let (user_codes, _) = load_code_file(&codes_dir.join(USER_CODES_FILE))?;
    let (item_codes, item_sums) = load_code_file(&codes_dir.join(ITEM_CODES_FILE))?;
    if user_codes.cols() != item_codes.cols() {
        return Err(CliError::usage("user and item code tables disagree on dim"));
    }
    let params_u = user_codes.params;
    let row: Vec<u16> = match query {
        RetrieveQuery::User(id) => {
            if *id >= user_codes.rows() {
                return Err(CliError::usage(format!(
                    "unknown user id {id} (user table has {} rows)",
                    user_codes.rows()
                )));
            }
            user_codes.row(*id).to_vec()
        }
        RetrieveQuery::CodeRow(codes) => {
            if codes.len() != item_codes.cols() {
                return Err(CliError::usage(format!(
                    "code row has {} entries but the index dim is {}",
                    codes.len(),
                    item_codes.cols()
                )));
            }
            let top = params_u.levels();
            if let Some(bad) = codes.iter().find(|&&c| c as u32 > top) {
                return Err(CliError::usage(format!(
                    "code {bad} out of range for {} bits",
                    params_u.b
                )));
            }
            codes.clone()
        }
    };
    let index = CodeIndex::from_parts(item_codes, params_u, item_sums)
        .map_err(|e| CliError::usage(format!("{ITEM_CODES_FILE}: {e}")))?;
    let sum = row.iter().map(|&c| c as u32).sum();
    let scores = score_all(&row, sum, &index).expect("dims validated");
    let list = topk(&scores, k, &[]);
    let mut out = String::new();
    for (item, score) in &list.items {
        let _ = writeln!(out, "{item}\t{score}");
    }
    Ok(out)
}

/// Correctness-gated latency comparison of the two scoring paths.
pub fn cmd_bench(codes_dir: &Path, k: usize, reps: usize) -> Result<String, CliError> {
    if k == 0 {
        return Err(CliError::usage("k must be >= 1"));
    }
    let (user_codes, _) = load_code_file(&codes_dir.join(USER_CODES_FILE))?;
    let (item_codes, item_sums) = load_code_file(&codes_dir.join(ITEM_CODES_FILE))?;
    if user_codes.cols() != item_codes.cols() {
        return Err(CliError::usage("user and item code tables disagree on dim"));
    }
    let index = CodeIndex::from_parts(item_codes, user_codes.params, item_sums)
        .map_err(|e| CliError::usage(format!("{ITEM_CODES_FILE}: {e}")))?;
    let report = bench::run_bench(&user_codes, &index, k, reps)?;
    Ok(report.render())
}

/// Names of every artifact cmd_train writes, for tests and docs.
pub fn artifact_names(quantized: bool) -> Vec<&'static str> {
    let mut names = vec![
        USER_EMB_FILE,
        ITEM_EMB_FILE,
        META_FILE,
        "history.csv",
        "steps.csv",
        "metrics.csv",
        "summary.json",
    ];
    if quantized {
        names.push(USER_CODES_FILE);
        names.push(ITEM_CODES_FILE);
    }
    names
}
