use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Value};

use crate::error::{FgpError, Result};
use crate::gcn::GcnConfig;
use crate::semantic::CalibrationTarget;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalMode {
    /// Unseen classes only.
    #[default]
    Zsl,
    /// Seen and unseen classes together.
    Gzsl,
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Zsl => "zsl",
            EvalMode::Gzsl => "gzsl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zsl" => Ok(EvalMode::Zsl),
            "gzsl" => Ok(EvalMode::Gzsl),
            other => Err(FgpError::validation(format!(
                "unknown evaluation mode {other:?}; expected zsl or gzsl"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticSettings {
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seen_only: bool,
    pub target: CalibrationTarget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Config {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub skip: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Config {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub train_attention: bool,
    pub skip: bool,
}

/// Every knob of a run. Serialised as a flat object with dotted keys.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub k: usize,
    pub lambda: f64,
    pub use_global: bool,
    pub seed: u64,
    pub semantic: SemanticSettings,
    pub stage1: Stage1Config,
    /// `gcn.seed` is derived from `seed` and not read from the file.
    pub gcn: GcnConfig,
    pub stage2: Stage2Config,
    pub eval_mode: EvalMode,
    pub topk: Vec<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 3,
            lambda: 1.0,
            use_global: true,
            seed: 0,
            semantic: SemanticSettings {
                restarts: 5,
                max_iters: 300,
                tol: 1e-9,
                seen_only: true,
                target: CalibrationTarget::Distance,
            },
            stage1: Stage1Config {
                epochs: 80,
                lr: 1e-3,
                batch_size: 16,
                skip: false,
            },
            gcn: GcnConfig::default(),
            stage2: Stage2Config {
                epochs: 20,
                lr: 1e-4,
                momentum: 0.9,
                train_attention: true,
                skip: false,
            },
            eval_mode: EvalMode::Zsl,
            topk: vec![1, 2, 5, 10, 20],
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "k",
    "lambda",
    "use_global",
    "seed",
    "semantic.restarts",
    "semantic.max_iters",
    "semantic.tol",
    "semantic.seen_only",
    "semantic.target",
    "stage1.epochs",
    "stage1.lr",
    "stage1.batch_size",
    "stage1.skip",
    "gcn.layers",
    "gcn.hidden",
    "gcn.epochs",
    "gcn.lr",
    "gcn.weight_decay",
    "gcn.dropout",
    "gcn.slope",
    "stage2.epochs",
    "stage2.lr",
    "stage2.momentum",
    "stage2.train_attention",
    "stage2.skip",
    "eval.mode",
    "eval.topk",
];

fn bad(key: &str, want: &str, got: &Value) -> FgpError {
    FgpError::validation(format!("config key {key:?}: expected {want}, got {got}"))
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| bad(key, "a non-negative integer", v))
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    v.as_f64().ok_or_else(|| bad(key, "a number", v))
}

fn as_bool(key: &str, v: &Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| bad(key, "true or false", v))
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| bad(key, "a string", v))
}

/// Accepts `[1, 2, 5]` or `"1,2,5"`.
pub fn parse_topk(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| FgpError::validation(format!("bad k {s:?} in top-k list")))
        })
        .collect()
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        match key {
            "k" => self.k = as_usize(key, v)?,
            "lambda" => self.lambda = as_f64(key, v)?,
            "use_global" => self.use_global = as_bool(key, v)?,
            "seed" => {
                self.seed = v
                    .as_u64()
                    .ok_or_else(|| bad(key, "a non-negative integer", v))?
            }
            "semantic.restarts" => self.semantic.restarts = as_usize(key, v)?,
            "semantic.max_iters" => self.semantic.max_iters = as_usize(key, v)?,
            "semantic.tol" => self.semantic.tol = as_f64(key, v)?,
            "semantic.seen_only" => self.semantic.seen_only = as_bool(key, v)?,
            "semantic.target" => {
                self.semantic.target = match as_str(key, v)? {
                    "distance" => CalibrationTarget::Distance,
                    "similarity" => CalibrationTarget::Similarity,
                    _ => return Err(bad(key, "\"distance\" or \"similarity\"", v)),
                }
            }
            "stage1.epochs" => self.stage1.epochs = as_usize(key, v)?,
            "stage1.lr" => self.stage1.lr = as_f64(key, v)?,
            "stage1.batch_size" => self.stage1.batch_size = as_usize(key, v)?,
            "stage1.skip" => self.stage1.skip = as_bool(key, v)?,
            "gcn.layers" => self.gcn.layers = as_usize(key, v)?,
            "gcn.hidden" => self.gcn.hidden = as_usize(key, v)?,
            "gcn.epochs" => self.gcn.epochs = as_usize(key, v)?,
            "gcn.lr" => self.gcn.lr = as_f64(key, v)?,
            "gcn.weight_decay" => self.gcn.weight_decay = as_f64(key, v)?,
            "gcn.dropout" => self.gcn.dropout = as_f64(key, v)?,
            "gcn.slope" => self.gcn.slope = as_f64(key, v)?,
            "stage2.epochs" => self.stage2.epochs = as_usize(key, v)?,
            "stage2.lr" => self.stage2.lr = as_f64(key, v)?,
            "stage2.momentum" => self.stage2.momentum = as_f64(key, v)?,
            "stage2.train_attention" => self.stage2.train_attention = as_bool(key, v)?,
            "stage2.skip" => self.stage2.skip = as_bool(key, v)?,
            "eval.mode" => self.eval_mode = EvalMode::parse(as_str(key, v)?)?,
            "eval.topk" => {
                self.topk = match v {
                    Value::String(s) => parse_topk(s)?,
                    Value::Array(items) => items
                        .iter()
                        .map(|x| as_usize(key, x))
                        .collect::<Result<_>>()?,
                    _ => return Err(bad(key, "a list of integers", v)),
                }
            }
            other => {
                return Err(FgpError::validation(format!(
                    "unknown config key {other:?}"
                )))
            }
        }
        Ok(())
    }

    /// Applies a flat JSON object on top of `self`, then validates.
    pub fn apply_json(&mut self, text: &str) -> Result<()> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| FgpError::validation(format!("config is not valid JSON: {e}")))?;
        let Value::Object(map) = value else {
            return Err(FgpError::validation("config must be a JSON object"));
        };
        for (k, v) in &map {
            self.set(k, v)?;
        }
        self.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_json(text)?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| FgpError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("stage1.lr", self.stage1.lr),
            ("gcn.lr", self.gcn.lr),
            ("stage2.lr", self.stage2.lr),
            ("gcn.slope", self.gcn.slope),
            ("semantic.tol", self.semantic.tol),
        ];
        for (key, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(FgpError::validation(format!(
                    "{key} must be positive, got {x}"
                )));
            }
        }
        let unit = [
            ("gcn.dropout", self.gcn.dropout),
            ("stage2.momentum", self.stage2.momentum),
        ];
        for (key, x) in unit {
            if !(0.0..1.0).contains(&x) {
                return Err(FgpError::validation(format!(
                    "{key} must lie in [0, 1), got {x}"
                )));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(FgpError::validation(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.gcn.weight_decay >= 0.0) {
            return Err(FgpError::validation("gcn.weight_decay must be >= 0"));
        }
        if self.gcn.layers == 0 {
            return Err(FgpError::validation("gcn.layers must be at least 1"));
        }
        if self.gcn.hidden == 0 || self.stage1.batch_size == 0 || self.semantic.restarts == 0 {
            return Err(FgpError::validation(
                "gcn.hidden, stage1.batch_size and semantic.restarts must be positive",
            ));
        }
        if self.k == 0 && !self.use_global {
            return Err(FgpError::validation(
                "k = 0 without the global channel leaves no classifier",
            ));
        }
        if self.topk.is_empty() || self.topk.contains(&0) {
            return Err(FgpError::validation(
                "eval.topk must list positive integers",
            ));
        }
        Ok(())
    }

    /// Flat dotted-key view, in key order.
    pub fn to_flat(&self) -> BTreeMap<String, Value> {
        let target = match self.semantic.target {
            CalibrationTarget::Distance => "distance",
            CalibrationTarget::Similarity => "similarity",
        };
        let pairs = [
            ("k", json!(self.k)),
            ("lambda", json!(self.lambda)),
            ("use_global", json!(self.use_global)),
            ("seed", json!(self.seed)),
            ("semantic.restarts", json!(self.semantic.restarts)),
            ("semantic.max_iters", json!(self.semantic.max_iters)),
            ("semantic.tol", json!(self.semantic.tol)),
            ("semantic.seen_only", json!(self.semantic.seen_only)),
            ("semantic.target", json!(target)),
            ("stage1.epochs", json!(self.stage1.epochs)),
            ("stage1.lr", json!(self.stage1.lr)),
            ("stage1.batch_size", json!(self.stage1.batch_size)),
            ("stage1.skip", json!(self.stage1.skip)),
            ("gcn.layers", json!(self.gcn.layers)),
            ("gcn.hidden", json!(self.gcn.hidden)),
            ("gcn.epochs", json!(self.gcn.epochs)),
            ("gcn.lr", json!(self.gcn.lr)),
            ("gcn.weight_decay", json!(self.gcn.weight_decay)),
            ("gcn.dropout", json!(self.gcn.dropout)),
            ("gcn.slope", json!(self.gcn.slope)),
            ("stage2.epochs", json!(self.stage2.epochs)),
            ("stage2.lr", json!(self.stage2.lr)),
            ("stage2.momentum", json!(self.stage2.momentum)),
            ("stage2.train_attention", json!(self.stage2.train_attention)),
            ("stage2.skip", json!(self.stage2.skip)),
            ("eval.mode", json!(self.eval_mode.as_str())),
            ("eval.topk", json!(self.topk)),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_flat()).expect("plain values serialise")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_round_trip() {
        let mut c = PipelineConfig::default();
        c.k = 5;
        c.eval_mode = EvalMode::Gzsl;
        c.topk = vec![1, 3];
        c.semantic.target = CalibrationTarget::Similarity;
        let back = PipelineConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn every_key_is_settable_and_echoed() {
        let flat = PipelineConfig::default().to_flat();
        let keys: Vec<&str> = flat.keys().map(String::as_str).collect();
        let mut expected = CONFIG_KEYS.to_vec();
        expected.sort_unstable();
        assert_eq!(keys, expected);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = PipelineConfig::from_json(r#"{"gcn.epochz": 3}"#).unwrap_err();
        assert!(matches!(err, FgpError::Validation(_)));
        assert!(err.to_string().contains("gcn.epochz"));
    }

    #[test]
    fn invariants() {
        assert!(PipelineConfig::from_json(r#"{"gcn.layers": 0}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"stage2.lr": 0.0}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"k": 0, "use_global": false}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"k": 0}"#).is_ok());
        assert_eq!(
            PipelineConfig::from_json(r#"{"eval.topk": "1, 2,5"}"#)
                .unwrap()
                .topk,
            vec![1, 2, 5]
        );
    }
}
