//! Flat `key = value` run configuration.
//!
//! Blank lines and text after `#` are ignored. Unknown keys are errors.
//! `RunConfig::to_text` lists every key with its current value.

use std::path::{Path, PathBuf};

use crate::exec::{ExecConfig, PlannerKind};
use crate::high::HighConfig;
use crate::latent::{OracleMode, HISTORY_LEN, LATENT_DIM};
use crate::lowlevel::LowLevelConfig;
use crate::policy::PolicyConfig;
use crate::search::SearchConfig;
use crate::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    Oracle,
    Learned,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Oracle => "oracle",
            EncoderKind::Learned => "learned",
        }
    }

    pub fn parse(s: &str) -> Option<EncoderKind> {
        [EncoderKind::Oracle, EncoderKind::Learned].into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// `desk` or `shortcut`.
    pub maze: String,
    pub encoder: EncoderKind,
    pub oracle_mode: OracleMode,
    pub planner: PlannerKind,
    pub epsilon: f64,
    pub latent_dim: usize,
    pub history_len: usize,
    pub low: LowLevelConfig,
    /// Train the learned encoder on at most this many demonstrations
    /// (0 means all).
    pub low_max_trajectories: usize,
    pub high: HighConfig,
    pub policy: PolicyConfig,
    pub search: SearchConfig,
    pub exec: ExecConfig,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            maze: "desk".into(),
            encoder: EncoderKind::Oracle,
            oracle_mode: OracleMode::Full,
            planner: PlannerKind::HighModel,
            epsilon: 0.001,
            latent_dim: LATENT_DIM,
            history_len: HISTORY_LEN,
            low: LowLevelConfig::default(),
            low_max_trajectories: 0,
            high: HighConfig::default(),
            policy: PolicyConfig::default(),
            search: SearchConfig::default(),
            exec: ExecConfig::default(),
            out: PathBuf::from("runs/default"),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| CoreError::Config(format!("{key}: cannot parse {v:?}")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CoreError::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CoreError::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CoreError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = num(key, v)?,
            "maze" => self.maze = v.to_string(),
            "encoder" => {
                self.encoder = EncoderKind::parse(v).ok_or_else(|| CoreError::Config(format!("encoder: unknown {v:?}")))?
            }
            "oracle_mode" => {
                self.oracle_mode =
                    OracleMode::parse(v).ok_or_else(|| CoreError::Config(format!("oracle_mode: unknown {v:?}")))?
            }
            "planner" => {
                self.planner = PlannerKind::parse(v).ok_or_else(|| CoreError::Config(format!("planner: unknown {v:?}")))?
            }
            "epsilon" => self.epsilon = num(key, v)?,
            "latent_dim" => self.latent_dim = num(key, v)?,
            "history_len" => self.history_len = num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "low.hidden" => self.low.hidden = num(key, v)?,
            "low.memory" => self.low.memory = flag(key, v)?,
            "low.lr" => self.low.lr = num(key, v)?,
            "low.epochs" => self.low.epochs = num(key, v)?,
            "low.w_z" => self.low.w_z = num(key, v)?,
            "low.w_vis" => self.low.w_vis = num(key, v)?,
            "low.w_barrel" => self.low.w_barrel = num(key, v)?,
            "low.w_terminal" => self.low.w_terminal = num(key, v)?,
            "low.object_weight" => self.low.object_weight = num(key, v)?,
            "low.max_trajectories" => self.low_max_trajectories = num(key, v)?,
            "high.embed_dim" => self.high.embed_dim = num(key, v)?,
            "high.hidden" => self.high.hidden = num(key, v)?,
            "high.lr" => self.high.lr = num(key, v)?,
            "high.pretrain_traversals" => self.high.pretrain_traversals = num(key, v)?,
            "high.pretrain_max_len" => self.high.pretrain_max_len = num(key, v)?,
            "high.epochs" => self.high.epochs = num(key, v)?,
            "policy.obs_hidden" => self.policy.obs_hidden = num(key, v)?,
            "policy.memory" => self.policy.memory = num(key, v)?,
            "policy.lr" => self.policy.lr = num(key, v)?,
            "policy.epochs" => self.policy.epochs = num(key, v)?,
            "policy.patience" => self.policy.patience = num(key, v)?,
            "policy.min_delta" => self.policy.min_delta = num(key, v)?,
            "policy.converged_gap" => self.policy.converged_gap = num(key, v)?,
            "policy.noise" => self.policy.noise = num(key, v)?,
            "policy.smoothing" => self.policy.smoothing = num(key, v)?,
            "policy.p_canonical" => self.policy.p_canonical = num(key, v)?,
            "policy.p_truncated" => self.policy.p_truncated = num(key, v)?,
            "policy.p_preroll" => self.policy.p_preroll = num(key, v)?,
            "policy.max_perturb" => self.policy.max_perturb = num(key, v)?,
            "search.p_min" => self.search.p_min = num(key, v)?,
            "search.eta" => self.search.eta = num(key, v)?,
            "search.max_depth" => self.search.max_depth = num(key, v)?,
            "search.max_expansions" => self.search.max_expansions = num(key, v)?,
            "search.match_tolerance" => {
                self.search.match_tolerance = if v == "epsilon" { None } else { Some(num(key, v)?) }
            }
            "exec.budget_factor" => self.exec.budget_factor = num(key, v)?,
            "exec.min_budget" => self.exec.min_budget = num(key, v)?,
            _ => return Err(CoreError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::Config(m));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.latent_dim == 0 || self.history_len == 0 {
            return bad("latent_dim and history_len must be positive".into());
        }
        if self.encoder == EncoderKind::Oracle && self.latent_dim < 11 {
            return bad(format!("the oracle needs latent_dim >= 11, got {}", self.latent_dim));
        }
        if !["desk", "shortcut"].contains(&self.maze.as_str()) {
            return bad(format!("maze: unknown {:?}", self.maze));
        }
        if !(self.low.lr > 0.0 && self.high.lr > 0.0) || self.low.hidden == 0 || self.high.embed_dim == 0 || self.high.hidden == 0 {
            return bad("learning rates and layer sizes must be positive".into());
        }
        if self.exec.budget_factor == 0 || self.exec.min_budget == 0 {
            return bad("execution budgets must be positive".into());
        }
        self.policy.validate()?;
        self.search.validate()
    }

    /// Every key with its value, in a stable order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let tol = self.search.match_tolerance.map_or("epsilon".to_string(), |t| t.to_string());
        vec![
            ("seed", self.seed.to_string()),
            ("maze", self.maze.clone()),
            ("encoder", self.encoder.name().into()),
            ("oracle_mode", self.oracle_mode.name().into()),
            ("planner", self.planner.name().into()),
            ("epsilon", self.epsilon.to_string()),
            ("latent_dim", self.latent_dim.to_string()),
            ("history_len", self.history_len.to_string()),
            ("low.hidden", self.low.hidden.to_string()),
            ("low.memory", self.low.memory.to_string()),
            ("low.lr", self.low.lr.to_string()),
            ("low.epochs", self.low.epochs.to_string()),
            ("low.w_z", self.low.w_z.to_string()),
            ("low.w_vis", self.low.w_vis.to_string()),
            ("low.w_barrel", self.low.w_barrel.to_string()),
            ("low.w_terminal", self.low.w_terminal.to_string()),
            ("low.object_weight", self.low.object_weight.to_string()),
            ("low.max_trajectories", self.low_max_trajectories.to_string()),
            ("high.embed_dim", self.high.embed_dim.to_string()),
            ("high.hidden", self.high.hidden.to_string()),
            ("high.lr", self.high.lr.to_string()),
            ("high.pretrain_traversals", self.high.pretrain_traversals.to_string()),
            ("high.pretrain_max_len", self.high.pretrain_max_len.to_string()),
            ("high.epochs", self.high.epochs.to_string()),
            ("policy.obs_hidden", self.policy.obs_hidden.to_string()),
            ("policy.memory", self.policy.memory.to_string()),
            ("policy.lr", self.policy.lr.to_string()),
            ("policy.epochs", self.policy.epochs.to_string()),
            ("policy.patience", self.policy.patience.to_string()),
            ("policy.min_delta", self.policy.min_delta.to_string()),
            ("policy.converged_gap", self.policy.converged_gap.to_string()),
            ("policy.noise", self.policy.noise.to_string()),
            ("policy.smoothing", self.policy.smoothing.to_string()),
            ("policy.p_canonical", self.policy.p_canonical.to_string()),
            ("policy.p_truncated", self.policy.p_truncated.to_string()),
            ("policy.p_preroll", self.policy.p_preroll.to_string()),
            ("policy.max_perturb", self.policy.max_perturb.to_string()),
            ("search.p_min", self.search.p_min.to_string()),
            ("search.eta", self.search.eta.to_string()),
            ("search.max_depth", self.search.max_depth.to_string()),
            ("search.max_expansions", self.search.max_expansions.to_string()),
            ("search.match_tolerance", tol),
            ("exec.budget_factor", self.exec.budget_factor.to_string()),
            ("exec.min_budget", self.exec.min_budget.to_string()),
            ("out", self.out.display().to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Checksum of the keys accepted by `select`, used to tell whether a
    /// stored stage artifact was built with the current settings.
    pub fn fingerprint(&self, select: impl Fn(&str) -> bool) -> u32 {
        let text: String = self
            .pairs()
            .into_iter()
            .filter(|(k, _)| select(k))
            .map(|(k, v)| format!("{k}={v};"))
            .collect();
        crc32fast::hash(text.as_bytes())
    }

    pub fn low_config(&self) -> LowLevelConfig {
        LowLevelConfig { latent_dim: self.latent_dim, window: self.history_len, seed: self.seed, ..self.low.clone() }
    }

    pub fn high_config(&self) -> HighConfig {
        HighConfig { seed: self.seed, ..self.high.clone() }
    }

    pub fn policy_config(&self) -> PolicyConfig {
        PolicyConfig { seed: self.seed, ..self.policy }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.set("policy.noise", "0.02").unwrap();
        cfg.set("search.match_tolerance", "0.003").unwrap();
        cfg.set("planner", "bfs").unwrap();
        cfg.set("low.memory", "false").unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn comments_and_errors() {
        let cfg = RunConfig::parse("# profile\nseed = 7  # trailing\n\nencoder = learned\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.encoder, EncoderKind::Learned);
        assert!(RunConfig::parse("nonsense = 1").is_err());
        assert!(RunConfig::parse("seed 1").is_err());
        assert!(RunConfig::parse("epsilon = -1").is_err());
        assert!(RunConfig::parse("policy.p_canonical = 0.5").is_err());
        assert!(RunConfig::parse("planner = dfs").is_err());
    }

    #[test]
    fn fingerprints_track_selected_keys() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.search.eta = 0.5;
        let search = |k: &str| k.starts_with("search.");
        let high = |k: &str| k.starts_with("high.");
        assert_ne!(a.fingerprint(search), b.fingerprint(search));
        assert_eq!(a.fingerprint(high), b.fingerprint(high));
    }
}
