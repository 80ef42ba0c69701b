//! Flat `key = value` configuration.
//!
//! Blank lines and `#` comments are ignored. Every key maps onto one field
//! of [`ExperimentPlan`] or its scenario template; unknown keys are errors.

use crate::error::{Error, Result};
use crate::harness::ExperimentPlan;
use crate::sim::LedgerScope;
use crate::trust::Algorithm;

/// Split a config file into `(line, key, value)` triples.
pub fn parse_pairs(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::MalformedConfig {
            line: i + 1,
            text: raw.to_string(),
        })?;
        out.push((i + 1, key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> Error {
    Error::InvalidValue {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| invalid(key, value, "not a number"))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(invalid(key, value, "expected true or false")),
    }
}

/// Every recognised key.
pub const KEYS: &[&str] = &[
    "algorithms",
    "q",
    "qf",
    "replications",
    "duration_s",
    "base_seed",
    "p",
    "v_max",
    "noise_m",
    "collusion",
    "sybil_v_min",
    "sybil_v_max",
    "sybil_max_lifetime_s",
    "alpha",
    "beta",
    "eps_x",
    "eps_v",
    "delta_s",
    "range_m",
    "v_free",
    "h_min",
    "tau",
    "trust_init",
    "trust_min",
    "trust_max",
    "ledger_scope",
    "min_green_s",
    "intergreen_s",
    "max_red_s",
    "pressure_horizon_m",
    "stopped_weight",
    "hysteresis",
    "stopped_speed_mps",
];

impl ExperimentPlan {
    /// Set one configuration key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.scenario;
        match key {
            "algorithms" => {
                self.algorithms = list::<u8>(key, value)?
                    .into_iter()
                    .map(Algorithm::new)
                    .collect::<Result<_>>()?
            }
            "q" => self.q = list(key, value)?,
            "qf" => self.q_f = list(key, value)?,
            "replications" => self.replications = num(key, value)?,
            "duration_s" => self.duration_s = num(key, value)?,
            "base_seed" => self.base_seed = num(key, value)?,
            "p" => s.sim.p = num(key, value)?,
            "v_max" => s.sim.v_max = num(key, value)?,
            "noise_m" => s.noise_m = num(key, value)?,
            "collusion" => s.attack.collusion = boolean(key, value)?,
            "sybil_v_min" => s.attack.velocity_range.0 = num(key, value)?,
            "sybil_v_max" => s.attack.velocity_range.1 = num(key, value)?,
            "sybil_max_lifetime_s" => s.attack.max_lifetime_s = num(key, value)?,
            "alpha" => s.detection.alpha = num(key, value)?,
            "beta" => s.detection.beta = num(key, value)?,
            "eps_x" => s.detection.eps_x = num(key, value)?,
            "eps_v" => s.detection.eps_v = num(key, value)?,
            "delta_s" => s.detection.delta_s = num(key, value)?,
            "range_m" => s.detection.range_m = num(key, value)?,
            "v_free" => s.detection.v_free = num(key, value)?,
            "h_min" => s.detection.h_min = num(key, value)?,
            "tau" => s.detection.tau = num(key, value)?,
            "trust_init" => s.detection.trust_init = num(key, value)?,
            "trust_min" => s.detection.trust_min = num(key, value)?,
            "trust_max" => s.detection.trust_max = num(key, value)?,
            "ledger_scope" => {
                s.ledger_scope = match value {
                    "shared" => LedgerScope::Shared,
                    "per_node" => LedgerScope::PerNode,
                    _ => return Err(invalid(key, value, "expected shared or per_node")),
                }
            }
            "min_green_s" => s.controller.min_green_s = num(key, value)?,
            "intergreen_s" => s.controller.intergreen_s = num(key, value)?,
            "max_red_s" => s.controller.max_red_s = num(key, value)?,
            "pressure_horizon_m" => s.controller.pressure_horizon_m = num(key, value)?,
            "stopped_weight" => s.controller.stopped_weight = num(key, value)?,
            "hysteresis" => s.controller.hysteresis = num(key, value)?,
            "stopped_speed_mps" => s.controller.stopped_speed_mps = num(key, value)?,
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Apply a whole config file on top of the current values.
    pub fn apply_config(&mut self, text: &str) -> Result<()> {
        for (_, key, value) in parse_pairs(text)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }
}
