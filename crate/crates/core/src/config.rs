//! Flat `key = value` configuration: parsing config files, applying
//! overrides to a [`TrainConfig`], and echoing the resolved values.
//!
//! Keys accept `-` or `_` interchangeably. Lines starting with `#` are comments.

use std::fmt::Write as _;

use crate::error::{MidamError, Result};
use crate::optim::OptimizerKind;
use crate::trainer::{Method, TrainConfig, FULL_BAG};

/// Every key understood by [`apply_train_key`], in echo order.
pub const TRAIN_KEYS: &[&str] = &[
    "method",
    "pool",
    "s_pos",
    "s_neg",
    "b",
    "eta",
    "eta_prime",
    "beta1",
    "gamma0",
    "epochs",
    "lr_decay_epochs",
    "lr_decay_factor",
    "mom_gamma_decay_factor",
    "weight_decay",
    "margin",
    "omega_upper",
    "optimizer",
    "adam_eps",
    "adam_beta2",
    "seed",
    "init_scale",
    "att_dim",
    "diag_every",
];

pub fn normalize_key(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('-', "_")
}

/// Parses `key = value` lines. Later duplicates win.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| MidamError::Parse {
            line: i as u64 + 1,
            msg: format!("expected key = value, got {line:?}"),
        })?;
        out.push((normalize_key(k), v.trim().to_string()));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| MidamError::Config(format!("{key}: cannot parse {value:?}")))
}

/// Applies one key to `cfg`. Returns `Ok(false)` when the key is not a
/// training key, so callers can handle their own keys.
pub fn apply_train_key(cfg: &mut TrainConfig, key: &str, value: &str) -> Result<bool> {
    let key = normalize_key(key);
    match key.as_str() {
        "method" => {
            // switching method resets method-specific defaults first
            let m: Method = value.parse()?;
            if m != cfg.method {
                let kept = cfg.clone();
                *cfg = TrainConfig {
                    kind: kept.kind,
                    seed: kept.seed,
                    epochs: kept.epochs,
                    s_pos: kept.s_pos,
                    s_neg: kept.s_neg,
                    ..TrainConfig::for_method(m)
                };
            }
        }
        "pool" | "kind" => cfg.kind = value.parse()?,
        "s_pos" => cfg.s_pos = num(&key, value)?,
        "s_neg" => cfg.s_neg = num(&key, value)?,
        "b" => cfg.b = if value == "full" { FULL_BAG } else { num(&key, value)? },
        "eta" | "lr" => cfg.eta = num(&key, value)?,
        "eta_prime" => cfg.eta_prime = num(&key, value)?,
        "beta1" => cfg.beta1 = num(&key, value)?,
        "gamma0" => cfg.gamma0 = num(&key, value)?,
        "epochs" => cfg.epochs = num(&key, value)?,
        "lr_decay_epochs" => {
            cfg.lr_decay_epochs = value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| num(&key, s))
                .collect::<Result<_>>()?
        }
        "lr_decay_factor" => cfg.lr_decay_factor = num(&key, value)?,
        "mom_gamma_decay_factor" => cfg.mom_gamma_decay_factor = num(&key, value)?,
        "weight_decay" => cfg.weight_decay = num(&key, value)?,
        "margin" => cfg.margin_cfg.margin = num(&key, value)?,
        "omega_upper" => cfg.margin_cfg.omega_upper = num(&key, value)?,
        "optimizer" => {
            cfg.optimizer = match value {
                "momentum" => OptimizerKind::Momentum,
                "adam" => OptimizerKind::Adam,
                other => return Err(MidamError::Config(format!("optimizer: unknown value {other:?}"))),
            }
        }
        "adam_eps" => cfg.adam_eps = num(&key, value)?,
        "adam_beta2" => cfg.adam_beta2 = num(&key, value)?,
        "seed" => cfg.seed = num(&key, value)?,
        "init_scale" => cfg.init_scale = num(&key, value)?,
        "att_dim" => cfg.att_dim = if value == "auto" { None } else { Some(num(&key, value)?) },
        "diag_every" => cfg.diag_every = num(&key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn train_value(cfg: &TrainConfig, key: &str) -> String {
    match key {
        "method" => cfg.method.to_string(),
        "pool" => cfg.kind.to_string(),
        "s_pos" => cfg.s_pos.to_string(),
        "s_neg" => cfg.s_neg.to_string(),
        "b" if cfg.b == FULL_BAG => "full".into(),
        "b" => cfg.b.to_string(),
        "eta" => cfg.eta.to_string(),
        "eta_prime" => cfg.eta_prime.to_string(),
        "beta1" => cfg.beta1.to_string(),
        "gamma0" => cfg.gamma0.to_string(),
        "epochs" => cfg.epochs.to_string(),
        "lr_decay_epochs" => cfg.lr_decay_epochs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(","),
        "lr_decay_factor" => cfg.lr_decay_factor.to_string(),
        "mom_gamma_decay_factor" => cfg.mom_gamma_decay_factor.to_string(),
        "weight_decay" => cfg.weight_decay.to_string(),
        "margin" => cfg.margin_cfg.margin.to_string(),
        "omega_upper" => cfg.margin_cfg.omega_upper.to_string(),
        "optimizer" => match cfg.optimizer {
            OptimizerKind::Momentum => "momentum".into(),
            OptimizerKind::Adam => "adam".into(),
        },
        "adam_eps" => cfg.adam_eps.to_string(),
        "adam_beta2" => cfg.adam_beta2.to_string(),
        "seed" => cfg.seed.to_string(),
        "init_scale" => cfg.init_scale.to_string(),
        "att_dim" => cfg.att_dim.map_or("auto".into(), |m| m.to_string()),
        "diag_every" => cfg.diag_every.to_string(),
        _ => unreachable!("unknown train key {key}"),
    }
}

/// Fully resolved training keys, one `key = value` per line. Feeding the
/// output back through [`parse_kv`] and [`apply_train_key`] reproduces `cfg`.
pub fn render_train_config(cfg: &TrainConfig) -> String {
    let mut out = String::new();
    for key in TRAIN_KEYS {
        let _ = writeln!(out, "{key} = {}", train_value(cfg, key));
    }
    out
}

/// Builds a config from `(key, value)` pairs, starting from the defaults of
/// the method named in the pairs (or MIDAM). Unknown keys are rejected.
pub fn train_config_from_pairs(pairs: &[(String, String)]) -> Result<TrainConfig> {
    let method = pairs.iter().rev().find(|(k, _)| normalize_key(k) == "method").map(|(_, v)| v.parse()).transpose()?;
    let mut cfg = TrainConfig::for_method(method.unwrap_or(Method::Midam));
    for (k, v) in pairs {
        if normalize_key(k) == "method" {
            continue;
        }
        if !apply_train_key(&mut cfg, k, v)? {
            return Err(MidamError::Config(format!("unknown key {k:?}")));
        }
    }
    Ok(cfg)
}
