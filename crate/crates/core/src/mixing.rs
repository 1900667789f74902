//! Local utility networks and the monotonic mixing network.
//!
//! Each agent's utility is FC -> GRU -> generated head. Local q-values are
//! combined into a global estimate by a two-layer mixer whose weights are
//! emitted by state-conditioned hypernetworks and passed through absolute
//! value, which is what makes the mixer monotone in every local utility.

use rand_chacha::ChaCha20Rng;

use crate::autodiff::{NodeId, Tape, TapeBinding};
use crate::error::Result;
use crate::nn::{Activation, Gru, GruSpec, LayerSpec, Mlp};
use crate::roles::apply_generated_head;
use crate::tensor::ParamSet;

pub const MIX_EMBED: usize = 32;

/// Shared recurrent trunk of a local utility function.
#[derive(Clone, Debug)]
pub struct UtilityNet {
    pub fc1: Mlp,
    pub gru: Gru,
    pub hidden: usize,
    pub n_actions: usize,
}

impl UtilityNet {
    pub fn new(prefix: &str, input_dim: usize, hidden: usize, n_actions: usize) -> Self {
        UtilityNet {
            fc1: Mlp::new(
                format!("{prefix}/fc1"),
                vec![LayerSpec::new(input_dim, hidden, Activation::Relu)],
            ),
            gru: Gru::new(prefix.to_string(), GruSpec::new(hidden, hidden)),
            hidden,
            n_actions,
        }
    }

    pub fn init_params(&self, params: &mut ParamSet, rng: &mut ChaCha20Rng) {
        self.fc1.init_params(params, rng);
        self.gru.init_params(params, rng);
    }

    /// One recurrent step. `head` is a `[rows, hidden*|A| + |A|]` node
    /// (generated by the role decoder, or a broadcast plain head).
    /// Returns `(q_values [rows, |A|], h_t [rows, hidden])`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        binding: &TapeBinding,
        input: NodeId,
        h_prev: NodeId,
        head: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let x = self.fc1.forward(tape, binding, input)?;
        let h_t = self.gru.cell(tape, binding, x, h_prev)?;
        let q = apply_generated_head(tape, head, h_t, self.hidden, self.n_actions)?;
        Ok((q, h_t))
    }
}

/// Mixing parameters for a batch of states, already constrained:
/// `w1`, `w2` are elementwise non-negative.
#[derive(Clone, Copy, Debug)]
pub struct MixingParamNodes {
    /// `[rows, n*MIX_EMBED]`, agent-major: agent i occupies columns
    /// `[i*MIX_EMBED, (i+1)*MIX_EMBED)`.
    pub w1: NodeId,
    /// `[rows, MIX_EMBED]`
    pub b1: NodeId,
    /// `[rows, MIX_EMBED]`
    pub w2: NodeId,
    /// `[rows, 1]`
    pub b2: NodeId,
}

/// State-conditioned hypernetworks that generate the mixer.
#[derive(Clone, Debug)]
pub struct MixerNets {
    pub hyper_w1: Mlp,
    pub hyper_b1: Mlp,
    pub hyper_w2: Mlp,
    pub hyper_b2: Mlp,
    pub n_agents: usize,
}

impl MixerNets {
    pub fn new(state_dim: usize, n_agents: usize) -> Self {
        MixerNets {
            hyper_w1: Mlp::two_layer("mixer/hyper_w1", state_dim, MIX_EMBED, n_agents * MIX_EMBED),
            hyper_b1: Mlp::new(
                "mixer/hyper_b1",
                vec![LayerSpec::new(state_dim, MIX_EMBED, Activation::None)],
            ),
            hyper_w2: Mlp::two_layer("mixer/hyper_w2", state_dim, MIX_EMBED, MIX_EMBED),
            hyper_b2: Mlp::two_layer("mixer/hyper_b2", state_dim, MIX_EMBED, 1),
            n_agents,
        }
    }

    pub fn init_params(&self, params: &mut ParamSet, rng: &mut ChaCha20Rng) {
        self.hyper_w1.init_params(params, rng);
        self.hyper_b1.init_params(params, rng);
        self.hyper_w2.init_params(params, rng);
        self.hyper_b2.init_params(params, rng);
    }

    /// Generate mixing parameters from global states `[rows, state_dim]`.
    pub fn hypernet(
        &self,
        tape: &mut Tape,
        binding: &TapeBinding,
        state: NodeId,
    ) -> Result<MixingParamNodes> {
        let w1_raw = self.hyper_w1.forward(tape, binding, state)?;
        let w1 = tape.abs(w1_raw)?;
        let b1 = self.hyper_b1.forward(tape, binding, state)?;
        let w2_raw = self.hyper_w2.forward(tape, binding, state)?;
        let w2 = tape.abs(w2_raw)?;
        let b2 = self.hyper_b2.forward(tape, binding, state)?;
        Ok(MixingParamNodes { w1, b1, w2, b2 })
    }

    /// Mix local utilities `q_locals [rows, n]` into `q_tot [rows, 1]`.
    pub fn mix(&self, tape: &mut Tape, mp: MixingParamNodes, q_locals: NodeId) -> Result<NodeId> {
        mix_with_params(tape, mp, q_locals, self.n_agents)
    }
}

/// `q_tot = relu(q . W1 + b1) . W2 + b2` with per-row generated parameters.
pub fn mix_with_params(
    tape: &mut Tape,
    mp: MixingParamNodes,
    q_locals: NodeId,
    n_agents: usize,
) -> Result<NodeId> {
    // hidden_e = sum_i q_i * W1[i, e], assembled agent by agent
    let mut acc: Option<NodeId> = None;
    for i in 0..n_agents {
        let w1_i = tape.slice(mp.w1, i * MIX_EMBED, MIX_EMBED)?;
        let q_i = tape.slice(q_locals, i, 1)?;
        let q_tiled = tape.tile_col(q_i, MIX_EMBED)?;
        let term = tape.mul(q_tiled, w1_i)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, term)?,
            None => term,
        });
    }
    let pre = tape.add(acc.expect("n_agents >= 1"), mp.b1)?;
    let hidden = tape.relu(pre)?;
    let weighted = tape.mul(hidden, mp.w2)?;
    let summed = tape.row_sum(weighted)?;
    tape.add(summed, mp.b2)
}
