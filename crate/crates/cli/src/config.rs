//! Flat `section.key = value` experiment settings.
//!
//! A config file is plain text:
//!
//! ```text
//! # comment
//! [train]
//! episodes = 500
//! learning_rate = 3e-4
//! ```
//!
//! Keys outside any section must be written in full (`train.episodes`).
//! Every key can be overridden on the command line as `--train.episodes 800`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use driftloc::embed::EmbedMode;
use driftloc::nets::{Activation, OptimizerKind};
use driftloc::{
    Bm25Params, EmbedderConfig, EnvConfig, Granularity, LearnerKind, NetConfig, SelectionConfig,
    SynthConfig, TrainConfig, VTraceConfig,
};

use crate::CliError;

/// Every recognised key with its default. Defaults follow the library except
/// for the desk-scale episode count and training without re-selection.
const DEFAULTS: &[(&str, &str)] = &[
    ("paths.corpus", "corpus.json"),
    ("paths.out", ""),
    ("paths.embeddings", ""),
    ("paths.factor_model", ""),
    ("paths.repo", ""),
    ("paths.reports", ""),
    ("experiment.granularity", "file"),
    ("experiment.learner", "clear"),
    ("experiment.regression", "off"),
    ("experiment.seeds", "0,1,2,3,4"),
    ("env.k", "31"),
    ("env.reward_scale", "3"),
    ("env.gamma", "0.99"),
    ("env.max_steps", "auto"),
    ("env.allow_reselect", "false"),
    ("env.query_title", "false"),
    ("env.index_paths", "true"),
    ("net.hidden", "128,64"),
    ("net.activation", "tanh"),
    ("net.init_scale", "1"),
    ("train.episodes", "500"),
    ("train.cycles", "2"),
    ("train.segment_length", "16"),
    ("train.batch_size", "8"),
    ("train.replay_ratio", "0.5"),
    ("train.buffer_capacity", "5000"),
    ("train.value_coef", "0.5"),
    ("train.entropy_coef", "0.01"),
    ("train.clone_policy_coef", "0.01"),
    ("train.clone_value_coef", "0.005"),
    ("train.ewc_lambda", "100"),
    ("train.fisher_episodes", "10"),
    ("train.probe_bugs", "20"),
    ("train.learning_rate", "1e-3"),
    ("train.max_grad_norm", "40"),
    ("train.reward_clip", "none"),
    ("train.optimizer", "sgd"),
    ("train.rms_decay", "0.99"),
    ("train.rms_epsilon", "1e-5"),
    ("vtrace.rho_bar", "1"),
    ("vtrace.c_bar", "1"),
    ("selection.p_threshold", "0.05"),
    ("selection.vif_max", "2.5"),
    ("selection.standardize", "true"),
    ("embed.dim", "32"),
    ("embed.mode", "hashed"),
    ("bm25.k1", "1.2"),
    ("bm25.b", "0.75"),
    ("synth.bugs", "50"),
    ("synth.files", "60"),
    ("synth.vocab_size", "3000"),
    ("synth.signal", "0.9"),
    ("synth.drift", "0.3"),
    ("synth.planted_per_bug", "6"),
    ("synth.description_noise", "8"),
    ("synth.lines_per_file", "30"),
    ("synth.max_window_versions", "3"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

/// `(line, key, value)` triples of a config file, keys fully qualified.
pub fn parse_config_text(text: &str) -> Result<Vec<(usize, String, String)>, CliError> {
    let mut section: Option<String> = None;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .map(str::trim)
                .filter(|n| !n.is_empty() && !n.contains(char::is_whitespace))
                .ok_or_else(|| CliError::Config(format!("line {line_no}: malformed section header `{line}`")))?;
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {line_no}: expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(CliError::Config(format!("line {line_no}: empty key")));
        }
        let full = match &section {
            Some(s) => format!("{s}.{key}"),
            None => key.to_string(),
        };
        out.push((line_no, full, unquote(value.trim()).to_string()));
    }
    Ok(out)
}

fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v)
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("`{key}` expects a boolean, got `{v}`"))),
    }
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::default();
        for (line, key, value) in parse_config_text(text)? {
            cfg.set(&key, &value)
                .map_err(|e| CliError::Config(format!("line {line}: {e}")))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(CliError::Config(format!("unknown setting `{key}`"))),
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("no setting `{key}`"))
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key);
        v.parse().map_err(|e| CliError::Config(format!("`{key}` = `{v}`: {e}")))
    }

    fn flag(&self, key: &str) -> Result<bool, CliError> {
        parse_bool(key, self.get(key))
    }

    /// `None` for an empty path setting.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.get(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    /// Every setting except filesystem paths, for run provenance.
    pub fn provenance(&self) -> BTreeMap<String, String> {
        self.values
            .iter()
            .filter(|(k, _)| !k.starts_with("paths."))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    pub fn granularity(&self) -> Result<Granularity, CliError> {
        match self.get("experiment.granularity") {
            "file" | "changeset_file" => Ok(Granularity::ChangesetFile),
            "hunk" => Ok(Granularity::Hunk),
            v => Err(CliError::Config(format!("unknown granularity `{v}` (file, hunk)"))),
        }
    }

    pub fn learner(&self) -> Result<LearnerKind, CliError> {
        Ok(self.get("experiment.learner").parse()?)
    }

    pub fn regression(&self) -> Result<bool, CliError> {
        self.flag("experiment.regression")
    }

    pub fn seeds(&self) -> Result<Vec<u64>, CliError> {
        let seeds = self
            .get("experiment.seeds")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| CliError::Config(format!("seed `{s}`: {e}"))))
            .collect::<Result<Vec<u64>, _>>()?;
        if seeds.is_empty() {
            return Err(CliError::Config("experiment.seeds is empty".into()));
        }
        Ok(seeds)
    }

    /// Environment settings without the regression bonus, which needs a
    /// fitted model.
    pub fn env(&self) -> Result<EnvConfig, CliError> {
        let max_steps = match self.get("env.max_steps") {
            "auto" => None,
            _ => Some(self.parse("env.max_steps")?),
        };
        let cfg = EnvConfig {
            k: self.parse("env.k")?,
            reward_scale: self.parse("env.reward_scale")?,
            gamma: self.parse("env.gamma")?,
            max_steps,
            allow_reselect: self.flag("env.allow_reselect")?,
            regression_bonus: None,
            query_title: self.flag("env.query_title")?,
            index_paths: self.flag("env.index_paths")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn net(&self, input_dim: usize, n_actions: usize, seed: u64) -> Result<NetConfig, CliError> {
        let hidden = self
            .get("net.hidden")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| CliError::Config(format!("net.hidden `{s}`: {e}"))))
            .collect::<Result<Vec<usize>, _>>()?;
        let activation = match self.get("net.activation") {
            "tanh" => Activation::Tanh,
            "relu" => Activation::Relu,
            v => return Err(CliError::Config(format!("unknown activation `{v}` (tanh, relu)"))),
        };
        Ok(NetConfig {
            input_dim,
            hidden,
            activation,
            n_actions,
            init_seed: seed,
            init_scale: self.parse("net.init_scale")?,
        })
    }

    pub fn train(&self, seed: u64) -> Result<TrainConfig, CliError> {
        let optimizer = match self.get("train.optimizer") {
            "sgd" => OptimizerKind::Sgd,
            "rmsprop" => OptimizerKind::RmsProp {
                decay: self.parse("train.rms_decay")?,
                epsilon: self.parse("train.rms_epsilon")?,
            },
            v => return Err(CliError::Config(format!("unknown optimizer `{v}` (sgd, rmsprop)"))),
        };
        let reward_clip = match self.get("train.reward_clip") {
            "none" | "" => None,
            _ => Some(self.parse("train.reward_clip")?),
        };
        let cfg = TrainConfig {
            learner: self.learner()?,
            episodes_per_task: self.parse("train.episodes")?,
            cycles: self.parse("train.cycles")?,
            segment_length: self.parse("train.segment_length")?,
            batch_size: self.parse("train.batch_size")?,
            replay_ratio: self.parse("train.replay_ratio")?,
            buffer_capacity: self.parse("train.buffer_capacity")?,
            value_coef: self.parse("train.value_coef")?,
            entropy_coef: self.parse("train.entropy_coef")?,
            clone_policy_coef: self.parse("train.clone_policy_coef")?,
            clone_value_coef: self.parse("train.clone_value_coef")?,
            ewc_lambda: self.parse("train.ewc_lambda")?,
            fisher_episodes: self.parse("train.fisher_episodes")?,
            probe_bugs: self.parse("train.probe_bugs")?,
            learning_rate: self.parse("train.learning_rate")?,
            max_grad_norm: self.parse("train.max_grad_norm")?,
            reward_clip,
            optimizer,
            vtrace: VTraceConfig {
                gamma: self.parse("env.gamma")?,
                rho_bar: self.parse("vtrace.rho_bar")?,
                c_bar: self.parse("vtrace.c_bar")?,
            },
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn selection(&self) -> Result<SelectionConfig, CliError> {
        let cfg = SelectionConfig {
            p_threshold: self.parse("selection.p_threshold")?,
            vif_max: self.parse("selection.vif_max")?,
            standardize: self.flag("selection.standardize")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn embedder(&self) -> Result<EmbedderConfig, CliError> {
        let mode = match self.get("embed.mode") {
            "hashed" => EmbedMode::HashedTfidf,
            "external" => EmbedMode::External,
            v => return Err(CliError::Config(format!("unknown embedding mode `{v}` (hashed, external)"))),
        };
        Ok(EmbedderConfig {
            dim: self.parse("embed.dim")?,
            mode,
            external_path: self.path("paths.embeddings"),
        })
    }

    pub fn bm25(&self) -> Result<Bm25Params, CliError> {
        Ok(Bm25Params { k1: self.parse("bm25.k1")?, b: self.parse("bm25.b")? })
    }

    pub fn synth(&self) -> Result<SynthConfig, CliError> {
        Ok(SynthConfig {
            n_bugs: self.parse("synth.bugs")?,
            n_files: self.parse("synth.files")?,
            vocab_size: self.parse("synth.vocab_size")?,
            signal: self.parse("synth.signal")?,
            drift: self.parse("synth.drift")?,
            planted_per_bug: self.parse("synth.planted_per_bug")?,
            description_noise: self.parse("synth.description_noise")?,
            lines_per_file: self.parse("synth.lines_per_file")?,
            max_window_versions: self.parse("synth.max_window_versions")?,
        })
    }
}
