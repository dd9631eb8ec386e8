//! TOML experiment configuration. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recurrence::Paradigm;
use crate::schedule::{read_schedule_csv, ErrorSchedule};

/// TOML integers are signed 64-bit; seeds recorded in configs stay below this.
pub const TOML_INT_MAX: u64 = i64::MAX as u64;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lab: Option<LabConfig>,
}

impl ConfigFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {}", e.message())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParadigmName {
    Replace,
    Accumulate,
}

fn paradigm_from(name: ParadigmName, k: Option<f64>) -> Result<Paradigm> {
    match (name, k) {
        (ParadigmName::Replace, None) => Ok(Paradigm::Replace),
        (ParadigmName::Replace, Some(_)) => {
            Err(Error::Config("`k` is only valid with paradigm = \"accumulate\"".into()))
        }
        (ParadigmName::Accumulate, k) => Paradigm::accumulate(k.unwrap_or(1.0)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    Constant {
        c: Vec<f64>,
    },
    PowerDecay {
        c: Vec<f64>,
        exponent: f64,
    },
    RandomUniform {
        lo: Vec<f64>,
        hi: Vec<f64>,
        /// Defaults to the run seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Explicit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rows: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
    },
    Empirical {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rows: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
    },
}

impl ScheduleConfig {
    /// Makes file references absolute and pins the random seed.
    fn resolve(&mut self, base: &Path, seed: u64) {
        match self {
            ScheduleConfig::RandomUniform { seed: s, .. } => {
                s.get_or_insert(seed);
            }
            ScheduleConfig::Explicit { path: Some(p), .. }
            | ScheduleConfig::Empirical { path: Some(p), .. } => {
                *p = absolute(base, p);
            }
            _ => {}
        }
    }

    pub fn input_path(&self) -> Option<&Path> {
        match self {
            ScheduleConfig::Explicit { path, .. } | ScheduleConfig::Empirical { path, .. } => {
                path.as_deref()
            }
            _ => None,
        }
    }

    pub fn build(&self, seed: u64) -> Result<ErrorSchedule> {
        let table = |rows: &Option<Vec<Vec<f64>>>, path: &Option<PathBuf>, empirical: bool| {
            match (rows, path) {
                (Some(rows), None) if empirical => ErrorSchedule::empirical(rows.clone()),
                (Some(rows), None) => ErrorSchedule::explicit(rows.clone()),
                (None, Some(path)) => read_schedule_csv(path, empirical),
                _ => Err(Error::Config(
                    "table schedules need exactly one of `rows` or `path`".into(),
                )),
            }
        };
        match self {
            ScheduleConfig::Constant { c } => ErrorSchedule::constant(c.clone()),
            ScheduleConfig::PowerDecay { c, exponent } => {
                ErrorSchedule::power_decay(c.clone(), *exponent)
            }
            ScheduleConfig::RandomUniform { lo, hi, seed: s } => {
                ErrorSchedule::random_uniform(lo.clone(), hi.clone(), s.unwrap_or(seed))
            }
            ScheduleConfig::Explicit { rows, path } => table(rows, path, false),
            ScheduleConfig::Empirical { rows, path } => table(rows, path, true),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub paradigm: ParadigmName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    /// Initial per-token counts `N_i` of the tracked context.
    pub counts: Vec<f64>,
    pub n_max: u64,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    pub schedule: ScheduleConfig,
}

impl SimulateConfig {
    pub fn paradigm(&self) -> Result<Paradigm> {
        paradigm_from(self.paradigm, self.k)
    }

    pub fn resolve(&mut self, base: &Path, seed: u64) {
        self.schedule.resolve(base, seed);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub inject_fault: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabConfig {
    pub paradigm: ParadigmName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    pub generations: usize,
    pub order: usize,
    pub smoothing: f64,
    pub window: usize,
    /// Length of every generated sequence.
    pub seq_length: usize,
    pub eval_holdout_fraction: f64,
    /// Write every generation's training corpus under `corpora/`.
    pub persist_corpora: bool,
    pub initial: InitialConfig,
    pub probes: Vec<ProbeConfig>,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            paradigm: ParadigmName::Replace,
            k: None,
            generations: 40,
            order: 1,
            smoothing: 0.01,
            window: 64,
            seq_length: 64,
            eval_holdout_fraction: 0.05,
            persist_corpora: true,
            initial: InitialConfig::default(),
            probes: Vec::new(),
        }
    }
}

impl LabConfig {
    pub fn paradigm(&self) -> Result<Paradigm> {
        paradigm_from(self.paradigm, self.k)
    }

    pub fn resolve(&mut self, base: &Path, seed: u64) {
        if let Some(p) = &mut self.initial.corpus {
            *p = absolute(base, p);
        } else {
            self.initial
                .chain_seed
                .get_or_insert(crate::lab::derive_seed(seed, 10, 0) & TOML_INT_MAX);
        }
    }
}

/// Where the initial corpus comes from: a text file, or a random chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    pub tokens: usize,
    pub num_sequences: usize,
    pub seq_length: usize,
    /// Seeds the chain's transition matrix; defaults to a value derived
    /// from the run seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain_seed: Option<u64>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            tokens: 30,
            num_sequences: 2000,
            seq_length: 64,
            chain_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// Space-separated token labels.
    pub context: String,
    pub token: String,
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
