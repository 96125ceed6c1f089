//! Experiment configuration files.
//!
//! ```toml
//! schema_version = 1
//! experiment = "kac-doubling"
//! seed = 7
//!
//! [params]
//! samples = 100000
//!
//! [tolerances]
//! kac_integral = 0.01
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::MassSpec;

pub const SCHEMA_VERSION: u32 = 1;

/// TOML integers are signed 64-bit.
pub const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub samples: Option<u64>,
    pub horizon: Option<u64>,
    pub depth: Option<u64>,
    pub orbits: Option<u64>,
    pub max_shift: Option<u64>,
    pub threshold: Option<u64>,
    pub p: Option<f64>,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub mass: Option<MassSpec>,
}

impl Params {
    /// Names of the keys that are set.
    pub fn set_keys(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        macro_rules! key {
            ($($f:ident),*) => {$(if self.$f.is_some() { out.push(stringify!($f)); })*};
        }
        key!(samples, horizon, depth, orbits, max_shift, threshold, p, alpha, epsilon, gamma, lambda, mass);
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    #[serde(default)]
    pub params: Params,
    /// Per-quantity tolerance overrides.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn new(experiment: &str, seed: u64) -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            seed,
            params: Params::default(),
            tolerances: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.seed > MAX_SEED {
            return Err(Error::Config(format!("seed must be at most {MAX_SEED}")));
        }
        let p = &self.params;
        for (name, v) in [
            ("samples", p.samples),
            ("horizon", p.horizon),
            ("depth", p.depth),
            ("orbits", p.orbits),
            ("threshold", p.threshold),
        ] {
            if v == Some(0) {
                return Err(Error::Config(format!("params.{name} must be positive")));
            }
        }
        for (name, v) in [
            ("p", p.p),
            ("alpha", p.alpha),
            ("epsilon", p.epsilon),
            ("gamma", p.gamma),
            ("lambda", p.lambda),
        ] {
            if v.is_some_and(|x| !x.is_finite()) {
                return Err(Error::Config(format!("params.{name} must be finite")));
            }
        }
        for (q, t) in &self.tolerances {
            if !(t.is_finite() && *t >= 0.0) {
                return Err(Error::Config(format!("tolerance for {q} must be a non-negative number")));
            }
        }
        Ok(())
    }

    /// Panics on integers outside the TOML range; validated configs are inside it.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
