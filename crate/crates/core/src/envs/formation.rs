//! Line-formation task: six agents on a 12-cell line, reward for the number
//! of distinct target slots {1,3,5,7,9,11} occupied each step, minus a small
//! step cost. Optimal play spreads the team over all six slots as fast as
//! the collision-free assignment allows.

use super::{occupancy_window, validate_actions, DutyLabel, EnvContract, EnvKind, StepResult};
use crate::error::Result;

pub const LINE_LEN: usize = 12;
pub const TARGET_SLOTS: [usize; 6] = [1, 3, 5, 7, 9, 11];
pub const START_POSITIONS: [usize; 6] = [5, 6, 5, 6, 5, 6];
pub const HORIZON: usize = 20;
pub const STEP_COST: f64 = 0.01;

const N: usize = 6;
const ACTIONS: usize = 3; // left, right, stay
const OBS_RADIUS: i64 = 2;

#[derive(Clone, Debug)]
pub struct FormationEnv {
    contract: EnvContract,
    positions: Vec<usize>,
    t: usize,
}

impl Default for FormationEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl FormationEnv {
    pub fn new() -> Self {
        FormationEnv {
            contract: Self::contract_static(),
            positions: START_POSITIONS.to_vec(),
            t: 0,
        }
    }

    pub fn contract_static() -> EnvContract {
        EnvContract {
            kind: EnvKind::Formation,
            n_agents: N,
            // own position, t/T, occupancy of 5 cells
            obs_dim: 2 + (2 * OBS_RADIUS as usize + 1),
            state_dim: N + 1,
            n_actions: ACTIONS,
            horizon: HORIZON,
        }
    }

    pub fn slot_reward(positions: &[usize]) -> f64 {
        let occupied = TARGET_SLOTS
            .iter()
            .filter(|s| positions.contains(s))
            .count();
        occupied as f64 / TARGET_SLOTS.len() as f64 - STEP_COST
    }

    fn observe(&self) -> Vec<Vec<f64>> {
        (0..N)
            .map(|i| {
                let mut o = Vec::with_capacity(self.contract.obs_dim);
                o.push(self.positions[i] as f64 / (LINE_LEN - 1) as f64);
                o.push(self.t as f64 / HORIZON as f64);
                o.extend(occupancy_window(
                    &self.positions,
                    self.positions[i] as i64,
                    OBS_RADIUS,
                    N,
                ));
                o
            })
            .collect()
    }

    fn state(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self
            .positions
            .iter()
            .map(|p| *p as f64 / (LINE_LEN - 1) as f64)
            .collect();
        s.push(self.t as f64 / HORIZON as f64);
        s
    }
}

impl super::ToyEnv for FormationEnv {
    fn contract(&self) -> &EnvContract {
        &self.contract
    }

    fn reset(&mut self, _seed: u64) -> StepResult {
        self.positions = START_POSITIONS.to_vec();
        self.t = 0;
        StepResult {
            obs: self.observe(),
            state: self.state(),
            reward: 0.0,
            done: false,
        }
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        validate_actions(actions, N, ACTIONS)?;
        for (p, a) in self.positions.iter_mut().zip(actions) {
            *p = match a {
                0 => p.saturating_sub(1),
                1 => (*p + 1).min(LINE_LEN - 1),
                _ => *p,
            };
        }
        self.t += 1;
        Ok(StepResult {
            obs: self.observe(),
            state: self.state(),
            reward: Self::slot_reward(&self.positions),
            done: self.t >= HORIZON,
        })
    }

    fn success(&self) -> bool {
        TARGET_SLOTS.iter().all(|s| self.positions.contains(s))
    }
}

/// Positions are stored normalized in the global state; recover them exactly.
pub(super) fn positions_from_state(state: &[f64]) -> Vec<usize> {
    state[..N]
        .iter()
        .map(|v| (v * (LINE_LEN - 1) as f64).round() as usize)
        .collect()
}

/// Duty = the nearest target slot at the final step (ties to the lower slot).
pub(super) fn duty_partition(final_state: &[f64]) -> Vec<DutyLabel> {
    positions_from_state(final_state)
        .iter()
        .map(|&p| {
            let slot_idx = TARGET_SLOTS
                .iter()
                .enumerate()
                .min_by_key(|(_, s)| (p as i64 - **s as i64).abs())
                .map(|(i, _)| i)
                .unwrap();
            DutyLabel {
                id: slot_idx as u32,
                name: format!("slot{}", TARGET_SLOTS[slot_idx]),
            }
        })
        .collect()
}
