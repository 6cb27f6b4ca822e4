//! Run configuration: documented defaults, a flat key=value file format,
//! and flag overrides layered on top (flags > file > defaults).

use std::path::PathBuf;

use hqrec_core::gste::EstimatorMode;
use hqrec_core::quantizer::DequantMode;
use hqrec_core::trainer::TrainConfig;

use crate::CliError;

/// Every key accepted in a config file, with its default noted next to the
/// field it sets.
pub const KNOWN_KEYS: &[&str] = &[
    "data",
    "out",
    "dim",
    "layers",
    "bits",
    "lr",
    "alpha",
    "batch_size",
    "epochs",
    "patience",
    "seed",
    "estimator",
    "probes",
    "delta_decay",
    "delta_clamp_lo",
    "delta_clamp_hi",
    "ema_decay",
    "k",
    "quantize",
    "dequant",
    "train_frac",
    "val_frac",
    "threads",
];

/// A full run description: trainer hyperparameters plus file locations,
/// split fractions, and the worker cap.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub train_frac: f64,
    pub val_frac: f64,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            data: None,
            out: None,
            train_frac: 0.7,
            val_frac: 0.1,
            threads: 1,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("invalid value {value:?} for key {key:?}")))
}

impl RunConfig {
    /// Apply one key=value pair; unknown keys are rejected by name.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "data" => self.data = Some(PathBuf::from(value.trim())),
            "out" => self.out = Some(PathBuf::from(value.trim())),
            "dim" => self.train.d = parse(key, value)?,
            "layers" => self.train.layers = parse(key, value)?,
            "bits" => self.train.bits = parse(key, value)?,
            "lr" => self.train.lr = parse(key, value)?,
            "alpha" => self.train.alpha = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "epochs" => self.train.epochs = parse(key, value)?,
            "patience" => self.train.patience = parse(key, value)?,
            "seed" => self.train.seed = parse(key, value)?,
            "estimator" => self.train.estimator.mode = parse_estimator(value)?,
            "probes" => self.train.estimator.probes_per_batch = parse(key, value)?,
            "delta_decay" => self.train.estimator.delta_decay = parse(key, value)?,
            "delta_clamp_lo" => self.train.estimator.delta_clamp.0 = parse(key, value)?,
            "delta_clamp_hi" => self.train.estimator.delta_clamp.1 = parse(key, value)?,
            "ema_decay" => self.train.ema_decay = parse(key, value)?,
            "k" => self.train.k_eval = parse(key, value)?,
            "quantize" => self.train.quantize = parse(key, value)?,
            "dequant" => self.train.dequant = parse_dequant(value)?,
            "train_frac" => self.train_frac = parse(key, value)?,
            "val_frac" => self.val_frac = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            _ => {
                return Err(CliError::usage(format!("unknown config key {key:?}")));
            }
        }
        Ok(())
    }

    /// Apply a config file body: one key=value per line, '#' comments and
    /// blank lines ignored.
    pub fn apply_file_text(&mut self, text: &str) -> Result<(), CliError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::usage(format!("config line {}: expected key=value", lineno + 1))
            })?;
            self.apply(key.trim(), value)?;
        }
        Ok(())
    }

    /// Validate fields the trainer does not own.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.threads == 0 {
            return Err(CliError::usage("threads must be >= 1"));
        }
        for (name, value) in [("train_frac", self.train_frac), ("val_frac", self.val_frac)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(CliError::usage(format!("{name}={value} outside [0,1]")));
            }
        }
        if self.train_frac + self.val_frac > 1.0 {
            return Err(CliError::usage("train_frac + val_frac exceeds 1"));
        }
        Ok(())
    }
}

pub fn parse_estimator(value: &str) -> Result<EstimatorMode, CliError> {
    match value.trim() {
        "ste" => Ok(EstimatorMode::Ste),
        "gste" => Ok(EstimatorMode::Gste),
        other => Err(CliError::usage(format!(
            "estimator must be \"ste\" or \"gste\", got {other:?}"
        ))),
    }
}

pub fn estimator_name(mode: EstimatorMode) -> &'static str {
    match mode {
        EstimatorMode::Ste => "ste",
        EstimatorMode::Gste => "gste",
    }
}

pub fn parse_dequant(value: &str) -> Result<DequantMode, CliError> {
    match value.trim() {
        "affine" => Ok(DequantMode::Affine),
        "literal" => Ok(DequantMode::Literal),
        other => Err(CliError::usage(format!(
            "dequant must be \"affine\" or \"literal\", got {other:?}"
        ))),
    }
}

pub fn dequant_name(mode: DequantMode) -> &'static str {
    match mode {
        DequantMode::Affine => "affine",
        DequantMode::Literal => "literal",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_trainer_defaults() {
        let c = RunConfig::default();
        assert_eq!(c.train.d, 64);
        assert_eq!(c.train.bits, 8);
        assert_eq!(c.train_frac, 0.7);
        assert_eq!(c.threads, 1);
        assert!(c.data.is_none());
    }

    #[test]
    fn file_then_flag_precedence() {
        let mut c = RunConfig::default();
        c.apply_file_text("# comment\n\nbits = 4\nlr=0.5\n  epochs =  3\n")
            .unwrap();
        assert_eq!(c.train.bits, 4);
        assert_eq!(c.train.lr, 0.5);
        assert_eq!(c.train.epochs, 3);
        // a later flag-layer apply overrides the file value
        c.apply("bits", "2").unwrap();
        assert_eq!(c.train.bits, 2);
    }

    #[test]
    fn unknown_key_is_named() {
        let mut c = RunConfig::default();
        let err = c.apply_file_text("bitz=4\n").unwrap_err();
        assert!(err.to_string().contains("bitz"), "{err}");
    }

    #[test]
    fn malformed_line_is_located() {
        let mut c = RunConfig::default();
        let err = c.apply_file_text("bits=4\nnonsense\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn estimator_and_dequant_values() {
        let mut c = RunConfig::default();
        c.apply("estimator", "ste").unwrap();
        assert_eq!(c.train.estimator.mode, EstimatorMode::Ste);
        c.apply("dequant", "literal").unwrap();
        assert_eq!(c.train.dequant, DequantMode::Literal);
        assert!(c.apply("estimator", "magic").is_err());
    }

    #[test]
    fn bad_numeric_value_is_reported() {
        let mut c = RunConfig::default();
        let err = c.apply("lr", "fast").unwrap_err();
        assert!(err.to_string().contains("lr"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn split_fractions_are_validated() {
        let mut c = RunConfig::default();
        c.apply("train_frac", "0.9").unwrap();
        c.apply("val_frac", "0.3").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn known_keys_list_is_in_sync() {
        let mut c = RunConfig::default();
        for key in KNOWN_KEYS {
            let value = match *key {
                "data" | "out" => "path",
                "estimator" => "ste",
                "dequant" => "affine",
                "quantize" => "true",
                _ => "1",
            };
            c.apply(key, value)
                .unwrap_or_else(|e| panic!("key {key}: {e}"));
        }
    }
}
