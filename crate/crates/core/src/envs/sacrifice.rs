//! Pressure-plate corridor: the gate between cells 4 and 5 is passable only
//! while some agent stands on the plate (cell 2). Reward is terminal only,
//! 0.25 per agent on the goal cell 7 at the horizon. The horizon is tight
//! enough that whoever holds the plate cannot reach the goal afterwards, so
//! the return-maximal strategy sacrifices exactly one agent.

use super::{occupancy_window, validate_actions, DutyLabel, EnvContract, EnvKind, StepResult};
use crate::error::Result;

pub const CORRIDOR_LEN: usize = 8;
pub const PLATE_CELL: usize = 2;
/// The gate sits between `GATE_LEFT` and `GATE_LEFT + 1`.
pub const GATE_LEFT: usize = 4;
pub const GOAL_CELL: usize = 7;
pub const HORIZON: usize = 10;
pub const GOAL_REWARD_PER_AGENT: f64 = 0.25;

const N: usize = 4;
const ACTIONS: usize = 3; // left, right, stay
const OBS_RADIUS: i64 = 2;

#[derive(Clone, Debug)]
pub struct SacrificeEnv {
    contract: EnvContract,
    positions: Vec<usize>,
    t: usize,
}

impl Default for SacrificeEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl SacrificeEnv {
    pub fn new() -> Self {
        SacrificeEnv {
            contract: Self::contract_static(),
            positions: vec![0; N],
            t: 0,
        }
    }

    pub fn contract_static() -> EnvContract {
        EnvContract {
            kind: EnvKind::Sacrifice,
            n_agents: N,
            // own position, past-gate flag, plate-occupied flag, occupancy window
            obs_dim: 3 + (2 * OBS_RADIUS as usize + 1),
            // positions, plate flag, fraction past gate, t/T
            state_dim: N + 3,
            n_actions: ACTIONS,
            horizon: HORIZON,
        }
    }

    fn plate_occupied(&self) -> bool {
        self.positions.iter().any(|&p| p == PLATE_CELL)
    }

    fn observe(&self) -> Vec<Vec<f64>> {
        let plate = self.plate_occupied();
        (0..N)
            .map(|i| {
                let mut o = Vec::with_capacity(self.contract.obs_dim);
                o.push(self.positions[i] as f64 / (CORRIDOR_LEN - 1) as f64);
                o.push(if self.positions[i] > GATE_LEFT { 1.0 } else { 0.0 });
                o.push(if plate { 1.0 } else { 0.0 });
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
            .map(|p| *p as f64 / (CORRIDOR_LEN - 1) as f64)
            .collect();
        s.push(if self.plate_occupied() { 1.0 } else { 0.0 });
        s.push(self.positions.iter().filter(|p| **p > GATE_LEFT).count() as f64 / N as f64);
        s.push(self.t as f64 / HORIZON as f64);
        s
    }

    fn goal_count(&self) -> usize {
        self.positions.iter().filter(|p| **p == GOAL_CELL).count()
    }
}

/// One agent's movement under the gate rule. `gate_open` is sampled at the
/// start of the step, before anyone moves.
pub(super) fn move_one(pos: usize, action: usize, gate_open: bool) -> usize {
    match action {
        0 => {
            // crossing right-to-left through the gate also needs it open
            if pos == GATE_LEFT + 1 && !gate_open {
                pos
            } else {
                pos.saturating_sub(1)
            }
        }
        1 => {
            if pos == GATE_LEFT && !gate_open {
                pos
            } else {
                (pos + 1).min(CORRIDOR_LEN - 1)
            }
        }
        _ => pos,
    }
}

impl super::ToyEnv for SacrificeEnv {
    fn contract(&self) -> &EnvContract {
        &self.contract
    }

    fn reset(&mut self, _seed: u64) -> StepResult {
        self.positions = vec![0; N];
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
        let gate_open = self.plate_occupied();
        for (p, a) in self.positions.iter_mut().zip(actions) {
            *p = move_one(*p, *a, gate_open);
        }
        self.t += 1;
        let done = self.t >= HORIZON;
        let reward = if done {
            GOAL_REWARD_PER_AGENT * self.goal_count() as f64
        } else {
            0.0
        };
        Ok(StepResult {
            obs: self.observe(),
            state: self.state(),
            reward,
            done,
        })
    }

    fn success(&self) -> bool {
        self.goal_count() >= 3
    }
}

pub(super) fn positions_from_state(state: &[f64]) -> Vec<usize> {
    state[..N]
        .iter()
        .map(|v| (v * (CORRIDOR_LEN - 1) as f64).round() as usize)
        .collect()
}

/// Duty = plate-holder (most decision steps spent on the plate, ties to the
/// lowest agent index) vs runner.
pub(super) fn duty_partition(states: &[Vec<f64>]) -> Vec<DutyLabel> {
    let mut plate_steps = vec![0usize; N];
    for s in states {
        for (i, p) in positions_from_state(s).iter().enumerate() {
            if *p == PLATE_CELL {
                plate_steps[i] += 1;
            }
        }
    }
    let holder = plate_steps
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.cmp(b).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    (0..N)
        .map(|i| {
            if i == holder {
                DutyLabel {
                    id: 0,
                    name: "holder".to_string(),
                }
            } else {
                DutyLabel {
                    id: 1,
                    name: "runner".to_string(),
                }
            }
        })
        .collect()
}
