//! Network assembly for one environment contract and ablation.
//!
//! Role-based ablations share one utility trunk across agents and generate
//! the utility head from the sampled role; the `qmix` ablation replaces the
//! generated head with a single learned one; `qmix_nps` gives every agent an
//! independent trunk and head and drops the role machinery entirely.

use rand_chacha::ChaCha20Rng;

use crate::autodiff::{NodeId, Tape, TapeBinding};
use crate::config::{Ablation, TrainConfig};
use crate::envs::EnvContract;
use crate::error::Result;
use crate::mixing::{MixerNets, UtilityNet};
use crate::nn::GRU_HIDDEN_DEFAULT;
use crate::rng::{derive_rng, stream};
use crate::roles::{RoleNets, ROLE_DIM};
use crate::tensor::{ParamSet, Shape, Tensor};

#[derive(Clone, Debug)]
pub struct Model {
    pub contract: EnvContract,
    pub ablation: Ablation,
    pub hidden: usize,
    pub input_last_action: bool,
    pub input_agent_id: bool,
    /// One entry under parameter sharing, `n_agents` entries for `qmix_nps`.
    utilities: Vec<UtilityNet>,
    pub roles: Option<RoleNets>,
    pub mixer: MixerNets,
}

impl Model {
    pub fn new(contract: EnvContract, config: &TrainConfig) -> Self {
        let hidden = GRU_HIDDEN_DEFAULT;
        let input_dim = contract.obs_dim
            + if config.input_last_action {
                contract.n_actions
            } else {
                0
            }
            + if config.input_agent_id {
                contract.n_agents
            } else {
                0
            };
        let utilities = if config.ablation.shares_parameters() {
            vec![UtilityNet::new(
                "utility",
                input_dim,
                hidden,
                contract.n_actions,
            )]
        } else {
            (0..contract.n_agents)
                .map(|i| {
                    UtilityNet::new(&format!("utility_{i}"), input_dim, hidden, contract.n_actions)
                })
                .collect()
        };
        let roles = config
            .ablation
            .uses_roles()
            .then(|| RoleNets::new(contract.obs_dim, contract.n_actions, hidden));
        let mixer = MixerNets::new(contract.state_dim, contract.n_agents);
        Model {
            contract,
            ablation: config.ablation,
            hidden,
            input_last_action: config.input_last_action,
            input_agent_id: config.input_agent_id,
            utilities,
            roles,
            mixer,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.utilities[0].fc1.in_dim()
    }

    pub fn head_len(&self) -> usize {
        self.hidden * self.contract.n_actions + self.contract.n_actions
    }

    pub fn utility(&self, agent: usize) -> &UtilityNet {
        if self.utilities.len() == 1 {
            &self.utilities[0]
        } else {
            &self.utilities[agent]
        }
    }

    fn plain_head_name(&self, agent: usize) -> String {
        if self.ablation.shares_parameters() {
            "utility/head".to_string()
        } else {
            format!("utility_{agent}/head")
        }
    }

    /// Initialize every parameter tensor, in a fixed traversal order.
    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut rng = derive_rng(seed, stream::INIT, 0);
        let mut params = ParamSet::new();
        for u in &self.utilities {
            u.init_params(&mut params, &mut rng);
        }
        if let Some(roles) = &self.roles {
            roles.init_params(&mut params, &mut rng);
        } else {
            // plain learned head(s), same fan-in-bounded init as a dense layer
            let bound = 1.0 / (self.hidden as f64).sqrt();
            let heads = if self.ablation.shares_parameters() {
                1
            } else {
                self.contract.n_agents
            };
            for agent in 0..heads {
                let l = self.head_len();
                let weights: Vec<f64> = (0..self.hidden * self.contract.n_actions)
                    .map(|_| rand::Rng::random_range(&mut rng, -bound..bound))
                    .collect();
                let mut data = weights;
                data.extend(std::iter::repeat_n(0.0, self.contract.n_actions));
                debug_assert_eq!(data.len(), l);
                params.insert(
                    self.plain_head_name(agent),
                    Tensor::matrix(1, l, data).expect("sized"),
                );
            }
        }
        self.mixer.init_params(&mut params, &mut rng);
        params
    }

    /// Head node for one agent: decoded from the role sample when the role
    /// machinery is on (caller passes `rho`), otherwise the learned head
    /// tiled over the batch rows.
    pub fn head_node(
        &self,
        tape: &mut Tape,
        binding: &TapeBinding,
        agent: usize,
        rho: Option<NodeId>,
        rows: usize,
    ) -> Result<NodeId> {
        match (&self.roles, rho) {
            (Some(roles), Some(rho)) => roles.decode(tape, binding, rho),
            _ => {
                let head = binding.id(&self.plain_head_name(agent))?;
                if rows == 1 {
                    Ok(head)
                } else {
                    let ones = tape.full_const(Shape::new(&[rows, 1])?, 1.0);
                    tape.matmul(ones, head)
                }
            }
        }
    }

    /// Utility-network input for one agent: observation, then optionally the
    /// previous action one-hot and the agent id one-hot.
    pub fn assemble_input(
        &self,
        obs: &[f64],
        last_action: Option<usize>,
        agent: usize,
    ) -> Vec<f64> {
        let c = &self.contract;
        let mut x = Vec::with_capacity(self.input_dim());
        x.extend_from_slice(obs);
        if self.input_last_action {
            let mut onehot = vec![0.0; c.n_actions];
            if let Some(a) = last_action {
                onehot[a] = 1.0;
            }
            x.extend_from_slice(&onehot);
        }
        if self.input_agent_id {
            let mut onehot = vec![0.0; c.n_agents];
            onehot[agent] = 1.0;
            x.extend_from_slice(&onehot);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs;

    fn model_for(ablation: Ablation) -> Model {
        let mut config = TrainConfig::default();
        config.ablation = ablation;
        Model::new(envs::contract(envs::EnvKind::Sacrifice), &config)
    }

    #[test]
    fn role_model_has_shared_trunk_and_role_nets() {
        let m = model_for(Ablation::Roma);
        let p = m.init_params(0);
        assert!(p.contains("utility/fc1/fc0/W"));
        assert!(p.contains("role_enc/fc0/W"));
        assert!(p.contains("mixer/hyper_w1/fc0/W"));
        assert!(!p.contains("utility/head"));
        // input: obs 8 + actions 3 + agents 4
        assert_eq!(m.input_dim(), 15);
    }

    #[test]
    fn qmix_model_swaps_roles_for_plain_head() {
        let m = model_for(Ablation::Qmix);
        let p = m.init_params(0);
        assert!(p.contains("utility/head"));
        assert!(!p.contains("role_enc/fc0/W"));
        assert_eq!(
            p.get("utility/head").unwrap().shape().dims(),
            &[1, 64 * 3 + 3]
        );
        // biases (tail) start at zero
        let head = p.get("utility/head").unwrap();
        assert!(head.data()[64 * 3..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn qmix_nps_has_independent_networks_per_agent() {
        let m = model_for(Ablation::QmixNps);
        let p = m.init_params(0);
        for i in 0..4 {
            assert!(p.contains(&format!("utility_{i}/fc1/fc0/W")));
            assert!(p.contains(&format!("utility_{i}/head")));
        }
        assert!(!p.contains("utility/fc1/fc0/W"));
        // independent nets differ after init
        let a = p.get("utility_0/fc1/fc0/W").unwrap().data();
        let b = p.get("utility_1/fc1/fc0/W").unwrap().data();
        assert_ne!(a, b);
    }

    #[test]
    fn input_assembly_layout() {
        let m = model_for(Ablation::Roma);
        let obs = vec![0.5; 8];
        let x = m.assemble_input(&obs, Some(1), 2);
        assert_eq!(x.len(), 15);
        assert_eq!(&x[8..11], &[0.0, 1.0, 0.0]);
        assert_eq!(&x[11..15], &[0.0, 0.0, 1.0, 0.0]);
        let x0 = m.assemble_input(&obs, None, 0);
        assert_eq!(&x0[8..11], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let m = model_for(Ablation::Roma);
        assert_eq!(m.init_params(5).checksum(), m.init_params(5).checksum());
        assert_ne!(m.init_params(5).checksum(), m.init_params(6).checksum());
    }
}
