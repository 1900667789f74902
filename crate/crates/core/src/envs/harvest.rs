//! Class-matched harvesting on a 5x5 grid. Two type-a resource cells sit on
//! the west column, two type-b on the east. Picking yields +1 when the
//! agent's class matches the resource type and +0.25 otherwise; a picked
//! resource respawns two steps later. Classes are fixed [A, A, B, B] and
//! serve as the ground-truth duty partition.

use super::{validate_actions, DutyLabel, EnvContract, EnvKind, StepResult};
use crate::error::Result;

pub const GRID: usize = 5;
pub const HORIZON: usize = 15;
pub const RESPAWN_STEPS: u8 = 2;
pub const MATCH_REWARD: f64 = 1.0;
pub const MISMATCH_REWARD: f64 = 0.25;

/// (x, y, is_type_b)
pub const RESOURCES: [(usize, usize, bool); 4] = [
    (0, 1, false),
    (0, 3, false),
    (4, 1, true),
    (4, 3, true),
];

/// false = class A (matches type-a), true = class B.
pub const AGENT_CLASSES: [bool; 4] = [false, false, true, true];

const N: usize = 4;
const ACTIONS: usize = 5; // up, down, left, right, pick
const START: (usize, usize) = (2, 2);

#[derive(Clone, Debug)]
pub struct HarvestEnv {
    contract: EnvContract,
    positions: Vec<(usize, usize)>,
    timers: [u8; 4],
    t: usize,
}

impl Default for HarvestEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl HarvestEnv {
    pub fn new() -> Self {
        HarvestEnv {
            contract: Self::contract_static(),
            positions: vec![START; N],
            timers: [0; 4],
            t: 0,
        }
    }

    pub fn contract_static() -> EnvContract {
        EnvContract {
            kind: EnvKind::Harvest,
            n_agents: N,
            // x, y, class flag, 3x3 resource map
            obs_dim: 3 + 9,
            // positions (8), timers (4), t/T
            state_dim: 2 * N + 4 + 1,
            n_actions: ACTIONS,
            horizon: HORIZON,
        }
    }

    fn resource_at(&self, x: usize, y: usize) -> Option<usize> {
        RESOURCES
            .iter()
            .position(|(rx, ry, _)| *rx == x && *ry == y)
    }

    fn observe(&self) -> Vec<Vec<f64>> {
        (0..N)
            .map(|i| {
                let (x, y) = self.positions[i];
                let mut o = Vec::with_capacity(self.contract.obs_dim);
                o.push(x as f64 / (GRID - 1) as f64);
                o.push(y as f64 / (GRID - 1) as f64);
                o.push(if AGENT_CLASSES[i] { 1.0 } else { 0.0 });
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (cx, cy) = (x as i64 + dx, y as i64 + dy);
                        let mut v = 0.0;
                        if (0..GRID as i64).contains(&cx) && (0..GRID as i64).contains(&cy) {
                            if let Some(r) = self.resource_at(cx as usize, cy as usize) {
                                if self.timers[r] == 0 {
                                    v = if RESOURCES[r].2 { -1.0 } else { 1.0 };
                                }
                            }
                        }
                        o.push(v);
                    }
                }
                o
            })
            .collect()
    }

    fn state(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.contract.state_dim);
        for (x, y) in &self.positions {
            s.push(*x as f64 / (GRID - 1) as f64);
            s.push(*y as f64 / (GRID - 1) as f64);
        }
        for timer in self.timers {
            s.push(timer as f64 / RESPAWN_STEPS as f64);
        }
        s.push(self.t as f64 / HORIZON as f64);
        s
    }
}

impl super::ToyEnv for HarvestEnv {
    fn contract(&self) -> &EnvContract {
        &self.contract
    }

    fn reset(&mut self, _seed: u64) -> StepResult {
        self.positions = vec![START; N];
        self.timers = [0; 4];
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
        for timer in self.timers.iter_mut() {
            *timer = timer.saturating_sub(1);
        }
        for (pos, a) in self.positions.iter_mut().zip(actions) {
            let (x, y) = *pos;
            *pos = match a {
                0 => (x, y.saturating_sub(1)),
                1 => (x, (y + 1).min(GRID - 1)),
                2 => (x.saturating_sub(1), y),
                3 => ((x + 1).min(GRID - 1), y),
                _ => (x, y), // pick: no movement
            };
        }
        // picks resolve in agent-index order; a respawning resource is inert
        let mut reward = 0.0;
        for i in 0..N {
            if actions[i] != 4 {
                continue;
            }
            let (x, y) = self.positions[i];
            if let Some(r) = self.resource_at(x, y) {
                if self.timers[r] == 0 {
                    reward += if RESOURCES[r].2 == AGENT_CLASSES[i] {
                        MATCH_REWARD
                    } else {
                        MISMATCH_REWARD
                    };
                    self.timers[r] = RESPAWN_STEPS;
                }
            }
        }
        self.t += 1;
        Ok(StepResult {
            obs: self.observe(),
            state: self.state(),
            reward,
            done: self.t >= HORIZON,
        })
    }

    fn success(&self) -> bool {
        // no binary success condition for this task
        false
    }
}

/// Static class partition.
pub(super) fn duty_partition() -> Vec<DutyLabel> {
    AGENT_CLASSES
        .iter()
        .map(|b| {
            if *b {
                DutyLabel {
                    id: 1,
                    name: "B".to_string(),
                }
            } else {
                DutyLabel {
                    id: 0,
                    name: "A".to_string(),
                }
            }
        })
        .collect()
}
