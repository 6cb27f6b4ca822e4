//! Text artifacts of a run: history and step CSVs, the per-user metrics
//! CSV, and a flat JSON summary. Floats are written with Rust's shortest
//! round-trip formatting, so identical runs produce identical bytes.

use std::fmt::Write as _;

use hqrec_core::evalrank::RankingResult;
use hqrec_core::trainer::{EpochRecord, StepRecord};

/// One line per epoch: epoch, train_loss, val_recall, val_ndcg, delta.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_recall,val_ndcg,delta\n");
    for r in history {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.epoch, r.train_loss, r.val_recall, r.val_ndcg, r.delta
        );
    }
    s
}

/// One line per delta-maintenance step: step, delta, trace, grad_mag.
pub fn steps_csv(steps: &[StepRecord]) -> String {
    let mut s = String::from("step,delta,trace,grad_mag\n");
    for r in steps {
        let _ = writeln!(s, "{},{},{},{}", r.step, r.delta, r.trace, r.grad_mag);
    }
    s
}

/// One line per evaluated user: user_id, recall, ndcg. When raw string ids
/// are available they replace the dense ids.
pub fn metrics_csv(result: &RankingResult, user_ids: Option<&[String]>) -> String {
    let mut s = String::from("user_id,recall,ndcg\n");
    for m in &result.per_user {
        match user_ids {
            Some(ids) => {
                let _ = writeln!(s, "{},{},{}", ids[m.user as usize], m.recall, m.ndcg);
            }
            None => {
                let _ = writeln!(s, "{},{},{}", m.user, m.recall, m.ndcg);
            }
        }
    }
    s
}

/// A flat JSON value; enough for the summary file.
#[derive(Debug, Clone)]
pub enum JsonValue {
    Num(f64),
    Int(u64),
    Str(String),
    Bool(bool),
}

impl std::fmt::Display for JsonValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            JsonValue::Num(x) if x.is_finite() => write!(f, "{x}"),
            JsonValue::Num(x) => write!(f, "\"{x}\""),
            JsonValue::Int(x) => write!(f, "{x}"),
            JsonValue::Str(x) => {
                write!(f, "\"")?;
                for c in x.chars() {
                    match c {
                        '"' => write!(f, "\\\"")?,
                        '\\' => write!(f, "\\\\")?,
                        c if (c as u32) < 0x20 => write!(f, "\\u{:04x}", c as u32)?,
                        c => write!(f, "{c}")?,
                    }
                }
                write!(f, "\"")
            }
            JsonValue::Bool(x) => write!(f, "{x}"),
        }
    }
}

/// A flat JSON object with keys in the given order.
pub fn summary_json(entries: &[(&str, JsonValue)]) -> String {
    let mut s = String::from("{\n");
    for (i, (key, value)) in entries.iter().enumerate() {
        let comma = if i + 1 < entries.len() { "," } else { "" };
        let _ = writeln!(s, "  \"{key}\": {value}{comma}");
    }
    s.push_str("}\n");
    s
}
