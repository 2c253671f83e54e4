//! Single JSON configuration document shared by all subcommands.
//! Precedence is flag > config file > default; merging happens in the CLI.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::render::{DEFAULT_PROMPT, SIZE_MAX, SIZE_MIN};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Unreadable { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub vq_ratio: f64,
    pub fixed_style: bool,
    pub prompt: String,
    pub fonts_dir: String,
    pub size_min: u32,
    pub size_max: u32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            vq_ratio: 1.0,
            fixed_style: false,
            prompt: DEFAULT_PROMPT.to_string(),
            fonts_dir: "assets/fonts".to_string(),
            size_min: SIZE_MIN,
            size_max: SIZE_MAX,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub guard_eps: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig { group_size: 6, clip_eps: 0.2, kl_beta: 0.01, guard_eps: 1e-6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    pub n1: usize,
    pub n2: usize,
    pub temperature: f64,
    pub lr: f64,
    pub steps: usize,
    pub num_questions: usize,
    pub num_actions: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            n1: 3,
            n2: 3,
            temperature: 1.0,
            lr: 0.1,
            steps: 300,
            num_questions: 8,
            num_actions: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeConfig {
    pub rel_tol: f64,
    pub fallback_on_mismatch: bool,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub timeout_s: u64,
    pub max_retries: u32,
    pub concurrency: usize,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            rel_tol: 0.01,
            fallback_on_mismatch: false,
            endpoint: None,
            model: None,
            timeout_s: 30,
            max_retries: 3,
            concurrency: 4,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub render: RenderConfig,
    pub grpo: GrpoConfig,
    pub rollout: RolloutConfig,
    pub judge: JudgeConfig,
    pub seed: u64,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: Config =
            serde_json::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.render.size_min > self.render.size_max {
            return Err(ConfigError::Invalid(format!(
                "render.size_min {} > render.size_max {}",
                self.render.size_min, self.render.size_max
            )));
        }
        if !(0.0..=1.0).contains(&self.render.vq_ratio) {
            return Err(ConfigError::Invalid(format!(
                "render.vq_ratio {} outside [0, 1]",
                self.render.vq_ratio
            )));
        }
        if self.grpo.group_size < 2 {
            return Err(ConfigError::Invalid(format!(
                "grpo.group_size {} < 2",
                self.grpo.group_size
            )));
        }
        if !(0.0..1.0).contains(&self.grpo.clip_eps) || self.grpo.clip_eps == 0.0 {
            return Err(ConfigError::Invalid(format!(
                "grpo.clip_eps {} outside (0, 1)",
                self.grpo.clip_eps
            )));
        }
        if self.grpo.kl_beta < 0.0 || self.grpo.guard_eps < 0.0 {
            return Err(ConfigError::Invalid("grpo.kl_beta and grpo.guard_eps must be >= 0".into()));
        }
        if self.rollout.temperature <= 0.0 {
            return Err(ConfigError::Invalid(format!(
                "rollout.temperature {} must be > 0",
                self.rollout.temperature
            )));
        }
        if self.judge.rel_tol < 0.0 {
            return Err(ConfigError::Invalid(format!(
                "judge.rel_tol {} must be >= 0",
                self.judge.rel_tol
            )));
        }
        Ok(())
    }

    /// Stable fingerprint of the effective configuration, embedded in
    /// manifest and trace headers.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialization");
        // FNV-1a, hex; stability matters here, cryptographic strength does not
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in canonical.as_bytes() {
            hash ^= *byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{hash:016x}")
    }
}
