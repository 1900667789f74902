//! Episodes, padded batches, and the FIFO replay buffer.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::envs::EnvKind;
use crate::error::{CoreError, Result};
use crate::roles::ROLE_DIM;

/// One fully unrolled episode. Observations, states and actions are the
/// decision-time records for t = 0..len; `final_state` is the post-terminal
/// global state (used by duty partitions, never by TD targets).
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub kind: EnvKind,
    pub len: usize,
    pub n_agents: usize,
    /// `[t][agent][obs_dim]`
    pub obs: Vec<Vec<Vec<f64>>>,
    /// `[t][state_dim]`
    pub states: Vec<Vec<f64>>,
    /// `[t][agent]`
    pub actions: Vec<Vec<usize>>,
    /// `[t]` shared rewards
    pub rewards: Vec<f64>,
    /// `[t][agent][ROLE_DIM]` frozen role-sampling noise
    pub noise: Vec<Vec<Vec<f64>>>,
    pub final_state: Vec<f64>,
    pub success: bool,
    pub episode_return: f64,
}

/// Padded training batch: `mask[b][t]` is 1 for valid steps and forms a
/// prefix (episodes never resume after terminating).
#[derive(Clone, Debug)]
pub struct EpisodeBatch {
    pub kind: EnvKind,
    pub b: usize,
    pub t_max: usize,
    pub n_agents: usize,
    pub obs_dim: usize,
    pub state_dim: usize,
    pub episodes: Vec<Episode>,
}

impl EpisodeBatch {
    pub fn from_episodes(episodes: Vec<Episode>) -> Result<Self> {
        let first = episodes
            .first()
            .ok_or_else(|| CoreError::InvalidArgument("empty batch".to_string()))?;
        let kind = first.kind;
        let n_agents = first.n_agents;
        let obs_dim = first.obs[0][0].len();
        let state_dim = first.states[0].len();
        let t_max = episodes.iter().map(|e| e.len).max().unwrap();
        for e in &episodes {
            if e.kind != kind || e.n_agents != n_agents {
                return Err(CoreError::InvalidArgument(
                    "mixed-environment batch".to_string(),
                ));
            }
        }
        Ok(EpisodeBatch {
            kind,
            b: episodes.len(),
            t_max,
            n_agents,
            obs_dim,
            state_dim,
            episodes,
        })
    }

    pub fn mask(&self, b: usize, t: usize) -> f64 {
        if t < self.episodes[b].len {
            1.0
        } else {
            0.0
        }
    }

    pub fn valid_steps(&self) -> usize {
        self.episodes.iter().map(|e| e.len).sum()
    }

    /// Observation block for one timestep of one episode, padded with zeros.
    pub fn obs_at(&self, b: usize, t: usize) -> Vec<f64> {
        let e = &self.episodes[b];
        if t < e.len {
            e.obs[t].concat()
        } else {
            vec![0.0; self.n_agents * self.obs_dim]
        }
    }

    pub fn state_at(&self, b: usize, t: usize) -> Vec<f64> {
        let e = &self.episodes[b];
        if t < e.len {
            e.states[t].clone()
        } else {
            vec![0.0; self.state_dim]
        }
    }

    pub fn action_at(&self, b: usize, t: usize, agent: usize) -> usize {
        let e = &self.episodes[b];
        if t < e.len {
            e.actions[t][agent]
        } else {
            0
        }
    }

    pub fn noise_at(&self, b: usize, t: usize, agent: usize) -> &[f64] {
        const ZERO: [f64; ROLE_DIM] = [0.0; ROLE_DIM];
        let e = &self.episodes[b];
        if t < e.len {
            &e.noise[t][agent]
        } else {
            &ZERO
        }
    }

    pub fn reward_at(&self, b: usize, t: usize) -> f64 {
        let e = &self.episodes[b];
        if t < e.len {
            e.rewards[t]
        } else {
            0.0
        }
    }

    /// True when (b, t) is the last valid step of episode b.
    pub fn is_terminal(&self, b: usize, t: usize) -> bool {
        t + 1 == self.episodes[b].len
    }
}

/// FIFO ring of episodes with uniform without-replacement sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    episodes: VecDeque<Episode>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            episodes: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, episode: Episode) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn get(&self, i: usize) -> &Episode {
        &self.episodes[i]
    }

    /// Uniform sample of `k` distinct episodes (partial Fisher-Yates over
    /// indices, so the rng consumption is deterministic).
    pub fn sample(&self, k: usize, rng: &mut ChaCha20Rng) -> Result<Vec<Episode>> {
        if k > self.episodes.len() {
            return Err(CoreError::InvalidArgument(format!(
                "asked for {k} episodes, buffer holds {}",
                self.episodes.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.episodes.len()).collect();
        for i in 0..k {
            let j = rng.random_range(i..idx.len());
            idx.swap(i, j);
        }
        Ok(idx[..k].iter().map(|&i| self.episodes[i].clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, stream};

    fn toy_episode(tag: f64, len: usize) -> Episode {
        Episode {
            kind: EnvKind::Sacrifice,
            len,
            n_agents: 2,
            obs: (0..len)
                .map(|t| vec![vec![tag + t as f64, 0.5]; 2])
                .collect(),
            states: (0..len).map(|t| vec![tag, t as f64]).collect(),
            actions: (0..len).map(|t| vec![t % 3, (t + 1) % 3]).collect(),
            rewards: (0..len).map(|t| tag * t as f64).collect(),
            noise: (0..len)
                .map(|t| vec![vec![tag + 0.1 * t as f64; ROLE_DIM]; 2])
                .collect(),
            final_state: vec![tag, 99.0],
            success: false,
            episode_return: 0.0,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(toy_episode(i as f64, 2));
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.get(0).states[0][0], 2.0);
        assert_eq!(buf.get(2).states[0][0], 4.0);
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let e = toy_episode(0.123456789, 4);
        let mut buf = ReplayBuffer::new(4);
        buf.push(e.clone());
        let mut rng = derive_rng(0, stream::SAMPLER, 0);
        let out = buf.sample(1, &mut rng).unwrap();
        assert_eq!(out[0], e);
    }

    #[test]
    fn sampling_is_without_replacement_and_deterministic() {
        let mut buf = ReplayBuffer::new(16);
        for i in 0..16 {
            buf.push(toy_episode(i as f64, 2));
        }
        let draw = |seed| {
            let mut rng = derive_rng(seed, stream::SAMPLER, 0);
            let eps = buf.sample(8, &mut rng).unwrap();
            let tags: Vec<u64> = eps.iter().map(|e| e.states[0][0] as u64).collect();
            tags
        };
        let a = draw(1);
        let b = draw(1);
        assert_eq!(a, b);
        let mut uniq = a.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), 8, "duplicate episode in draw: {a:?}");
        assert!(buf.sample(17, &mut derive_rng(0, stream::SAMPLER, 0)).is_err());
    }

    #[test]
    fn batch_padding_and_masks() {
        let batch =
            EpisodeBatch::from_episodes(vec![toy_episode(1.0, 3), toy_episode(2.0, 5)]).unwrap();
        assert_eq!(batch.t_max, 5);
        assert_eq!(batch.mask(0, 2), 1.0);
        assert_eq!(batch.mask(0, 3), 0.0);
        assert_eq!(batch.mask(1, 4), 1.0);
        assert!(batch.is_terminal(0, 2));
        assert!(!batch.is_terminal(0, 1));
        assert_eq!(batch.valid_steps(), 8);
        assert_eq!(batch.obs_at(0, 4), vec![0.0; 4]);
        assert_eq!(batch.noise_at(0, 4, 1), &[0.0; ROLE_DIM]);
    }
}
