//! Toy Dec-POMDP environments.
//!
//! Three deterministic cooperative tasks, each engineered so that a high
//! return requires an asymmetric division of labor that is measurable
//! against a known duty partition:
//!
//! * `formation` — six agents spread out to six target slots on a line;
//! * `sacrifice` — a pressure plate holds a gate open, so one agent must
//!   give up reaching the goal for the other three;
//! * `harvest` — two agent classes pick class-matched resources on opposite
//!   sides of a grid.
//!
//! All three share the reward across agents, expose partial radius-limited
//! observations, and are bit-deterministic given the action sequence.

mod formation;
mod harvest;
pub mod oracles;
mod sacrifice;

pub use formation::FormationEnv;
pub use harvest::HarvestEnv;
pub use sacrifice::SacrificeEnv;

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

/// Environment selector, also the config-file vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Formation,
    Sacrifice,
    Harvest,
}

impl EnvKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "formation" => Ok(EnvKind::Formation),
            "sacrifice" => Ok(EnvKind::Sacrifice),
            "harvest" => Ok(EnvKind::Harvest),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown env kind {other:?} (expected formation|sacrifice|harvest)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvKind::Formation => "formation",
            EnvKind::Sacrifice => "sacrifice",
            EnvKind::Harvest => "harvest",
        }
    }
}

/// Static interface data for one environment kind.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvContract {
    pub kind: EnvKind,
    pub n_agents: usize,
    pub obs_dim: usize,
    pub state_dim: usize,
    pub n_actions: usize,
    pub horizon: usize,
}

/// Result of a reset or step: per-agent observations, the global state, the
/// shared reward earned by the transition (0 on reset), and the done flag.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub obs: Vec<Vec<f64>>,
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// A duty label from the ground-truth partition, used only for evaluation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DutyLabel {
    pub id: u32,
    pub name: String,
}

pub trait ToyEnv: Send {
    fn contract(&self) -> &EnvContract;

    /// Deterministic initial configuration. The seed is accepted for
    /// interface uniformity; none of the toy dynamics are stochastic.
    fn reset(&mut self, seed: u64) -> StepResult;

    /// Advance one step with a joint action (one action index per agent).
    fn step(&mut self, actions: &[usize]) -> Result<StepResult>;

    /// Env-specific success condition, valid once done is reached.
    fn success(&self) -> bool;
}

pub fn make_env(kind: EnvKind) -> Box<dyn ToyEnv> {
    match kind {
        EnvKind::Formation => Box::new(FormationEnv::new()),
        EnvKind::Sacrifice => Box::new(SacrificeEnv::new()),
        EnvKind::Harvest => Box::new(HarvestEnv::new()),
    }
}

pub fn contract(kind: EnvKind) -> EnvContract {
    match kind {
        EnvKind::Formation => FormationEnv::contract_static(),
        EnvKind::Sacrifice => SacrificeEnv::contract_static(),
        EnvKind::Harvest => HarvestEnv::contract_static(),
    }
}

/// Ground-truth duty partition of a completed episode, reconstructed from the
/// recorded global states (`states` are the decision-time states, `final_state`
/// the post-terminal one).
pub fn ground_truth_partition(
    kind: EnvKind,
    states: &[Vec<f64>],
    final_state: &[f64],
) -> Vec<DutyLabel> {
    match kind {
        EnvKind::Formation => formation::duty_partition(final_state),
        EnvKind::Sacrifice => sacrifice::duty_partition(states),
        EnvKind::Harvest => harvest::duty_partition(),
    }
}

fn validate_actions(actions: &[usize], n_agents: usize, n_actions: usize) -> Result<()> {
    if actions.len() != n_agents {
        return Err(CoreError::InvalidArgument(format!(
            "expected {n_agents} actions, got {}",
            actions.len()
        )));
    }
    if let Some(a) = actions.iter().find(|a| **a >= n_actions) {
        return Err(CoreError::InvalidArgument(format!(
            "action index {a} out of range (n_actions = {n_actions})"
        )));
    }
    Ok(())
}

/// Count of agents on each cell of `window` around `pos`, over n agents.
fn occupancy_window(positions: &[usize], pos: i64, radius: i64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity((2 * radius + 1) as usize);
    for d in -radius..=radius {
        let cell = pos + d;
        let count = positions.iter().filter(|p| **p as i64 == cell).count();
        out.push(count as f64 / n as f64);
    }
    out
}
