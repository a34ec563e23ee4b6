//! Typed views of the sections of a run config file.
//!
//! A config is flat `key = value` text. Top-level `seed`, then sections
//! `generate.*` (generator parameters), `split.test_fraction`, `train.*`
//! and `eval.*`. Scientific parameters have no defaults; only the Adam
//! constants and the attention-freeze switch do.

use attest::embedder::{Optimizer, PositiveMode, TrainConfig};
use attest::eval::EvalConfig;
use attest::io::{config_from_kv, config_to_kv};
use attest::kv::{fmt_f64, KeyValues};
use attest::types::GeneratorConfig;
use attest::Error;

use crate::error::Result;

pub const TRAIN_KEYS: [&str; 13] = [
    "learning_rate",
    "epochs",
    "negatives_per_positive",
    "positive_mode",
    "walk_length",
    "walks_per_node",
    "positives_per_anchor",
    "batch_size",
    "optimizer",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "freeze_attention",
];

pub const EVAL_KEYS: [&str; 4] = ["k", "reformulations", "oracle_candidates", "hash_buckets"];

const SECTIONS: [&str; 4] = ["generate.", "split.", "train.", "eval."];

/// One config file may carry every section; anything else is a typo.
pub fn check_top_level(config: &KeyValues) -> Result<()> {
    for key in config.keys() {
        if key != "seed" && !SECTIONS.iter().any(|p| key.starts_with(p)) {
            return Err(Error::InvalidConfig(format!("unknown config key `{key}`")).into());
        }
    }
    Ok(())
}

/// `--seed` when given, else the config's top-level `seed`.
pub fn resolve_seed(config: &KeyValues, flag: Option<u64>) -> Result<u64> {
    match flag {
        Some(s) => Ok(s),
        None => Ok(config.require("seed")?),
    }
}

pub fn generator(config: &KeyValues, seed: u64) -> Result<GeneratorConfig> {
    let mut section = config.section("generate");
    if section.get("seed").is_some() {
        return Err(Error::InvalidConfig("put `seed` at top level, not in generate.*".into()).into());
    }
    section.set("seed", seed);
    Ok(config_from_kv(&section)?)
}

pub fn test_fraction(config: &KeyValues) -> Result<f64> {
    let split = config.section("split");
    split.reject_unknown(&["test_fraction"])?;
    Ok(split.require("test_fraction")?)
}

pub fn train(config: &KeyValues, seed: u64) -> Result<TrainConfig> {
    let s = config.section("train");
    s.reject_unknown(&TRAIN_KEYS)?;
    let positive_mode = match s.require::<String>("positive_mode")?.as_str() {
        "walks" => PositiveMode::Walks {
            walk_length: s.require("walk_length")?,
            walks_per_node: s.require("walks_per_node")?,
        },
        "uniform" => PositiveMode::Uniform {
            count: s.require("positives_per_anchor")?,
        },
        other => {
            return Err(Error::InvalidConfig(format!(
                "positive_mode must be `walks` or `uniform`, got `{other}`"
            ))
            .into())
        }
    };
    let optimizer = match s.require::<String>("optimizer")?.as_str() {
        "sgd" => Optimizer::Sgd,
        "adam" => Optimizer::Adam {
            beta1: s.get_or("adam_beta1", 0.9)?,
            beta2: s.get_or("adam_beta2", 0.999)?,
            eps: s.get_or("adam_eps", 1e-8)?,
        },
        other => {
            return Err(Error::InvalidConfig(format!(
                "optimizer must be `sgd` or `adam`, got `{other}`"
            ))
            .into())
        }
    };
    let tc = TrainConfig {
        learning_rate: s.require("learning_rate")?,
        epochs: s.require("epochs")?,
        negatives_per_positive: s.require("negatives_per_positive")?,
        positive_mode,
        batch_size: s.require("batch_size")?,
        seed,
        optimizer,
        freeze_attention: s.get_or("freeze_attention", false)?,
    };
    tc.validate()?;
    Ok(tc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub eval: EvalConfig,
    pub hash_buckets: usize,
}

pub fn eval(config: &KeyValues) -> Result<EvalSettings> {
    let s = config.section("eval");
    s.reject_unknown(&EVAL_KEYS)?;
    let settings = EvalSettings {
        eval: EvalConfig {
            k: s.require("k")?,
            count: s.require("reformulations")?,
            oracle_candidates: s.require("oracle_candidates")?,
        },
        hash_buckets: s.require("hash_buckets")?,
    };
    if settings.eval.k == 0 || settings.eval.count == 0 || settings.hash_buckets == 0 {
        return Err(Error::InvalidConfig("eval sizes must be positive".into()).into());
    }
    Ok(settings)
}

/// Resolved `generate.*` section as written to manifests.
pub fn generator_kv(config: &GeneratorConfig) -> KeyValues {
    let mut out = KeyValues::new();
    for (k, v) in config_to_kv(config).iter() {
        out.set(&format!("generate.{k}"), v);
    }
    out
}

pub fn train_kv(tc: &TrainConfig, test_fraction: f64) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.set("seed", tc.seed);
    kv.set("split.test_fraction", fmt_f64(test_fraction));
    kv.set("train.learning_rate", fmt_f64(tc.learning_rate));
    kv.set("train.epochs", tc.epochs);
    kv.set("train.negatives_per_positive", tc.negatives_per_positive);
    match tc.positive_mode {
        PositiveMode::Walks {
            walk_length,
            walks_per_node,
        } => {
            kv.set("train.positive_mode", "walks");
            kv.set("train.walk_length", walk_length);
            kv.set("train.walks_per_node", walks_per_node);
        }
        PositiveMode::Uniform { count } => {
            kv.set("train.positive_mode", "uniform");
            kv.set("train.positives_per_anchor", count);
        }
    }
    kv.set("train.batch_size", tc.batch_size);
    match tc.optimizer {
        Optimizer::Sgd => kv.set("train.optimizer", "sgd"),
        Optimizer::Adam { beta1, beta2, eps } => {
            kv.set("train.optimizer", "adam");
            kv.set("train.adam_beta1", fmt_f64(beta1));
            kv.set("train.adam_beta2", fmt_f64(beta2));
            kv.set("train.adam_eps", fmt_f64(eps));
        }
    }
    kv.set("train.freeze_attention", tc.freeze_attention);
    kv
}

pub fn eval_kv(s: &EvalSettings, test_fraction: f64) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.set("split.test_fraction", fmt_f64(test_fraction));
    kv.set("eval.k", s.eval.k);
    kv.set("eval.reformulations", s.eval.count);
    kv.set("eval.oracle_candidates", s.eval.oracle_candidates);
    kv.set("eval.hash_buckets", s.hash_buckets);
    kv
}
