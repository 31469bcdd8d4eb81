//! Loop configuration and its flat `key = value` file form.

use std::fmt::Write as _;
use std::ops::Deref;

use thiserror::Error;

use crate::embedding::{SignMode, DEFAULT_DIM};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("alpha + beta + gamma_weight = {0}, must be 1")]
    Simplex(f64),
    #[error("`{key}` = {value} is outside {range}")]
    Range { key: &'static str, value: f64, range: &'static str },
    #[error("config line {line}: {reason}")]
    Syntax { line: usize, reason: String },
}

/// Every tunable of a session. Build a [`LoopConfig`] from it to validate.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopSettings {
    pub alpha: f64,
    pub beta: f64,
    pub gamma_weight: f64,
    pub lambda: f64,
    pub discount0: f64,
    pub discount_decay: f64,
    pub sign_mode: SignMode,
    pub accept_threshold: f64,
    pub phase2_trigger_count: usize,
    pub stagnation_window: usize,
    pub trajectory_length: usize,
    pub reward_l2: f64,

    pub dim: usize,
    pub prompt: Vec<String>,
    pub score_length: usize,
    pub guidance_weight: f64,
    pub corpus_size: usize,
    pub corpus_noise: f64,
    pub alignment_steps: usize,
    pub alignment_step_size: f64,
    pub composer_steps: usize,
    pub composer_step_size: f64,
    pub phase1_steps: usize,
    pub phase1_step_size: f64,
    pub phase2_steps: usize,
    pub phase2_step_size: f64,
    /// Most distinct scores kept in the reward-learning toy space.
    pub phase2_states: usize,
}

impl Default for LoopSettings {
    fn default() -> Self {
        LoopSettings {
            alpha: 0.4,
            beta: 0.3,
            gamma_weight: 0.3,
            lambda: 0.1,
            discount0: 1.0,
            discount_decay: 0.9,
            sign_mode: SignMode::Penalty,
            accept_threshold: 0.95,
            phase2_trigger_count: 3,
            stagnation_window: 4,
            trajectory_length: 3,
            reward_l2: 0.01,
            dim: DEFAULT_DIM,
            prompt: ["lift", "arm_l", "step", "leg_r", "slowly"].map(String::from).to_vec(),
            score_length: 8,
            guidance_weight: 4.0,
            corpus_size: 120,
            corpus_noise: 0.1,
            alignment_steps: 20,
            alignment_step_size: 0.05,
            composer_steps: 100,
            composer_step_size: 5.0,
            phase1_steps: 5,
            phase1_step_size: 0.02,
            phase2_steps: 40,
            phase2_step_size: 0.5,
            phase2_states: 6,
        }
    }
}

/// Validated [`LoopSettings`]; only constructible through [`LoopConfig::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig(LoopSettings);

impl Deref for LoopConfig {
    type Target = LoopSettings;

    fn deref(&self) -> &LoopSettings {
        &self.0
    }
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig::new(LoopSettings::default()).expect("defaults are valid")
    }
}

fn check(key: &'static str, value: f64, ok: bool, range: &'static str) -> Result<(), ConfigError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::Range { key, value, range })
    }
}

fn unit(key: &'static str, v: f64) -> Result<(), ConfigError> {
    check(key, v, (0.0..=1.0).contains(&v), "[0, 1]")
}

fn half_open_unit(key: &'static str, v: f64) -> Result<(), ConfigError> {
    check(key, v, v > 0.0 && v <= 1.0, "(0, 1]")
}

fn positive(key: &'static str, v: f64) -> Result<(), ConfigError> {
    check(key, v, v > 0.0, "(0, inf)")
}

fn nonnegative(key: &'static str, v: f64) -> Result<(), ConfigError> {
    check(key, v, v >= 0.0, "[0, inf)")
}

fn at_least_one(key: &'static str, v: usize) -> Result<(), ConfigError> {
    check(key, v as f64, v >= 1, "[1, inf)")
}

impl LoopConfig {
    pub fn new(s: LoopSettings) -> Result<Self, ConfigError> {
        unit("alpha", s.alpha)?;
        unit("beta", s.beta)?;
        unit("gamma_weight", s.gamma_weight)?;
        let sum = s.alpha + s.beta + s.gamma_weight;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ConfigError::Simplex(sum));
        }
        unit("lambda", s.lambda)?;
        half_open_unit("discount0", s.discount0)?;
        half_open_unit("discount_decay", s.discount_decay)?;
        nonnegative("accept_threshold", s.accept_threshold)?;
        at_least_one("phase2_trigger_count", s.phase2_trigger_count)?;
        at_least_one("stagnation_window", s.stagnation_window)?;
        at_least_one("trajectory_length", s.trajectory_length)?;
        nonnegative("reward_l2", s.reward_l2)?;
        at_least_one("dim", s.dim)?;
        nonnegative("guidance_weight", s.guidance_weight)?;
        check("corpus_noise", s.corpus_noise, (0.0..=1.0).contains(&s.corpus_noise), "[0, 1]")?;
        check("corpus_size", s.corpus_size as f64, s.corpus_size >= 2, "[2, inf)")?;
        positive("alignment_step_size", s.alignment_step_size)?;
        positive("composer_step_size", s.composer_step_size)?;
        positive("phase1_step_size", s.phase1_step_size)?;
        positive("phase2_step_size", s.phase2_step_size)?;
        check("phase2_states", s.phase2_states as f64, s.phase2_states >= 2, "[2, inf)")?;
        Ok(LoopConfig(s))
    }

    pub fn settings(&self) -> &LoopSettings {
        &self.0
    }

    /// γ_t = discount0 · discount_decay^t.
    pub fn discount(&self, t: usize) -> f64 {
        self.discount0 * self.discount_decay.powi(t as i32)
    }

    pub fn to_text(&self) -> String {
        let s = &self.0;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("alpha", s.alpha.to_string());
        kv("beta", s.beta.to_string());
        kv("gamma_weight", s.gamma_weight.to_string());
        kv("lambda", s.lambda.to_string());
        kv("discount0", s.discount0.to_string());
        kv("discount_decay", s.discount_decay.to_string());
        kv("sign_mode", s.sign_mode.name().to_string());
        kv("accept_threshold", s.accept_threshold.to_string());
        kv("phase2_trigger_count", s.phase2_trigger_count.to_string());
        kv("stagnation_window", s.stagnation_window.to_string());
        kv("trajectory_length", s.trajectory_length.to_string());
        kv("reward_l2", s.reward_l2.to_string());
        kv("dim", s.dim.to_string());
        kv("prompt", s.prompt.join(" "));
        kv("score_length", s.score_length.to_string());
        kv("guidance_weight", s.guidance_weight.to_string());
        kv("corpus_size", s.corpus_size.to_string());
        kv("corpus_noise", s.corpus_noise.to_string());
        kv("alignment_steps", s.alignment_steps.to_string());
        kv("alignment_step_size", s.alignment_step_size.to_string());
        kv("composer_steps", s.composer_steps.to_string());
        kv("composer_step_size", s.composer_step_size.to_string());
        kv("phase1_steps", s.phase1_steps.to_string());
        kv("phase1_step_size", s.phase1_step_size.to_string());
        kv("phase2_steps", s.phase2_steps.to_string());
        kv("phase2_step_size", s.phase2_step_size.to_string());
        kv("phase2_states", s.phase2_states.to_string());
        out
    }

    /// Parses `key = value` lines over the defaults; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut s = LoopSettings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |reason: String| ConfigError::Syntax { line: i + 1, reason };
            let (key, value) = line.split_once('=').ok_or_else(|| syntax("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let float = || value.parse::<f64>().map_err(|_| syntax(format!("`{key}` needs a number")));
            let count = || value.parse::<usize>().map_err(|_| syntax(format!("`{key}` needs a count")));
            match key {
                "alpha" => s.alpha = float()?,
                "beta" => s.beta = float()?,
                "gamma_weight" => s.gamma_weight = float()?,
                "lambda" => s.lambda = float()?,
                "discount0" => s.discount0 = float()?,
                "discount_decay" => s.discount_decay = float()?,
                "sign_mode" => {
                    s.sign_mode = SignMode::from_name(value).ok_or_else(|| syntax(format!("unknown sign_mode `{value}`")))?
                }
                "accept_threshold" => s.accept_threshold = float()?,
                "phase2_trigger_count" => s.phase2_trigger_count = count()?,
                "stagnation_window" => s.stagnation_window = count()?,
                "trajectory_length" => s.trajectory_length = count()?,
                "reward_l2" => s.reward_l2 = float()?,
                "dim" => s.dim = count()?,
                "prompt" => s.prompt = value.split_whitespace().map(String::from).collect(),
                "score_length" => s.score_length = count()?,
                "guidance_weight" => s.guidance_weight = float()?,
                "corpus_size" => s.corpus_size = count()?,
                "corpus_noise" => s.corpus_noise = float()?,
                "alignment_steps" => s.alignment_steps = count()?,
                "alignment_step_size" => s.alignment_step_size = float()?,
                "composer_steps" => s.composer_steps = count()?,
                "composer_step_size" => s.composer_step_size = float()?,
                "phase1_steps" => s.phase1_steps = count()?,
                "phase1_step_size" => s.phase1_step_size = float()?,
                "phase2_steps" => s.phase2_steps = count()?,
                "phase2_step_size" => s.phase2_step_size = float()?,
                "phase2_states" => s.phase2_states = count()?,
                other => return Err(syntax(format!("unknown key `{other}`"))),
            }
        }
        LoopConfig::new(s)
    }
}
