//! Training configuration and ablation switches.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Which parts of the learner are active. The ablations mirror the loss and
/// sharing variants compared in training runs; exactly one is in effect.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Full method: role machinery plus both regularizers.
    Roma,
    /// Role machinery kept, both regularizer weights zeroed.
    TdOnly,
    /// Role machinery kept, specialization loss off.
    TdPlusLi,
    /// Role machinery kept, identifiability loss off.
    TdPlusLd,
    /// No role machinery; one learned utility head shared by all agents.
    Qmix,
    /// No role machinery; fully independent utility networks per agent.
    QmixNps,
}

impl Ablation {
    pub fn uses_roles(&self) -> bool {
        matches!(self, Ablation::Roma | Ablation::TdOnly | Ablation::TdPlusLi | Ablation::TdPlusLd)
    }

    pub fn uses_identifiability_loss(&self) -> bool {
        matches!(self, Ablation::Roma | Ablation::TdPlusLi)
    }

    pub fn uses_specialization_loss(&self) -> bool {
        matches!(self, Ablation::Roma | Ablation::TdPlusLd)
    }

    pub fn shares_parameters(&self) -> bool {
        !matches!(self, Ablation::QmixNps)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Ablation::Roma => "roma",
            Ablation::TdOnly => "td_only",
            Ablation::TdPlusLi => "td_plus_li",
            Ablation::TdPlusLd => "td_plus_ld",
            Ablation::Qmix => "qmix",
            Ablation::QmixNps => "qmix_nps",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "roma" => Ok(Ablation::Roma),
            "td_only" => Ok(Ablation::TdOnly),
            "td_plus_li" => Ok(Ablation::TdPlusLi),
            "td_plus_ld" => Ok(Ablation::TdPlusLd),
            "qmix" => Ok(Ablation::Qmix),
            "qmix_nps" => Ok(Ablation::QmixNps),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown ablation {other:?}"
            ))),
        }
    }
}

/// Hyperparameters of a training run. `Default` is the reference setting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gamma: f64,
    pub lr: f64,
    pub rms_alpha: f64,
    pub rms_eps: f64,
    pub lambda_i: f64,
    pub lambda_d: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_anneal_steps: u64,
    pub n_parallel: usize,
    pub batch_episodes: usize,
    pub buffer_capacity: usize,
    /// Updates between hard target-network copies.
    pub target_interval: u64,
    pub role_dim: usize,
    pub ablation: Ablation,
    pub seed: u64,
    /// Stop once this many environment steps have been collected.
    pub max_env_steps: u64,
    /// Updates between greedy evaluations (metrics carry the last values in
    /// between).
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// Feed the previous action (one-hot) into the utility network.
    pub input_last_action: bool,
    /// Feed the agent id (one-hot) into the utility network.
    pub input_agent_id: bool,
    /// Collapse rollout workers into a deterministic sequential loop.
    pub single_thread: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            lr: 5e-4,
            rms_alpha: 0.99,
            rms_eps: 1e-5,
            lambda_i: 1e-4,
            lambda_d: 1e-2,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_anneal_steps: 50_000,
            n_parallel: 8,
            batch_episodes: 32,
            buffer_capacity: 2000,
            target_interval: 200,
            role_dim: crate::roles::ROLE_DIM,
            ablation: Ablation::Roma,
            seed: 0,
            max_env_steps: 200_000,
            eval_interval: 50,
            eval_episodes: 32,
            input_last_action: true,
            input_agent_id: true,
            single_thread: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma", self.gamma),
            ("lr", self.lr),
            ("rms_alpha", self.rms_alpha),
            ("rms_eps", self.rms_eps),
            ("eps_start", self.eps_start),
            ("eps_end", self.eps_end),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CoreError::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.lambda_i < 0.0 || self.lambda_d < 0.0 {
            return Err(CoreError::InvalidArgument(
                "loss coefficients must be non-negative".to_string(),
            ));
        }
        if self.gamma >= 1.0 {
            return Err(CoreError::InvalidArgument(format!(
                "gamma must be < 1, got {}",
                self.gamma
            )));
        }
        if self.eps_end > self.eps_start {
            return Err(CoreError::InvalidArgument(
                "eps_end must not exceed eps_start".to_string(),
            ));
        }
        let counts = [
            ("n_parallel", self.n_parallel),
            ("batch_episodes", self.batch_episodes),
            ("buffer_capacity", self.buffer_capacity),
            ("eval_episodes", self.eval_episodes),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(CoreError::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        if self.eps_anneal_steps == 0 || self.target_interval == 0 || self.eval_interval == 0 {
            return Err(CoreError::InvalidArgument(
                "step intervals must be >= 1".to_string(),
            ));
        }
        if self.role_dim != crate::roles::ROLE_DIM {
            return Err(CoreError::InvalidArgument(format!(
                "role_dim is fixed at {} in this build",
                crate::roles::ROLE_DIM
            )));
        }
        if self.buffer_capacity < self.batch_episodes {
            return Err(CoreError::InvalidArgument(
                "buffer_capacity must be >= batch_episodes".to_string(),
            ));
        }
        Ok(())
    }

    /// Linearly annealed exploration rate after `t` environment steps.
    pub fn epsilon(&self, t: u64) -> f64 {
        let frac = t as f64 / self.eps_anneal_steps as f64;
        (self.eps_start - (self.eps_start - self.eps_end) * frac).max(self.eps_end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_schedule_hand_values() {
        let c = TrainConfig::default();
        assert_eq!(c.epsilon(0), 1.0);
        assert_eq!(c.epsilon(50_000), 0.05);
        assert_eq!(c.epsilon(1_000_000), 0.05);
        assert!((c.epsilon(25_000) - 0.525).abs() < 1e-12);
    }

    #[test]
    fn default_config_is_valid() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = TrainConfig::default();
        c.gamma = 1.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.batch_episodes = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.buffer_capacity = 8;
        assert!(c.validate().is_err());
    }

    #[test]
    fn ablation_names_round_trip() {
        for a in [
            Ablation::Roma,
            Ablation::TdOnly,
            Ablation::TdPlusLi,
            Ablation::TdPlusLd,
            Ablation::Qmix,
            Ablation::QmixNps,
        ] {
            assert_eq!(Ablation::parse(a.name()).unwrap(), a);
        }
        assert!(Ablation::parse("vdn").is_err());
    }

    #[test]
    fn ablation_switch_semantics() {
        assert!(Ablation::Roma.uses_identifiability_loss());
        assert!(Ablation::Roma.uses_specialization_loss());
        assert!(!Ablation::TdOnly.uses_identifiability_loss());
        assert!(!Ablation::TdOnly.uses_specialization_loss());
        assert!(Ablation::TdOnly.uses_roles());
        assert!(Ablation::TdPlusLi.uses_identifiability_loss());
        assert!(!Ablation::TdPlusLi.uses_specialization_loss());
        assert!(!Ablation::TdPlusLd.uses_identifiability_loss());
        assert!(Ablation::TdPlusLd.uses_specialization_loss());
        assert!(!Ablation::Qmix.uses_roles());
        assert!(Ablation::Qmix.shares_parameters());
        assert!(!Ablation::QmixNps.shares_parameters());
    }
}
