//! Network building blocks: fully-connected stacks and a GRU cell.
//!
//! Parameters are initialized into a [`ParamSet`] under
//! `"<net>/<layer>/<W|b>"` names and bound onto a tape per forward pass.
//! Weights draw from Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); biases start
//! at zero. All forwards are pure functions of the tape inputs.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::autodiff::{NodeId, Tape, TapeBinding};
use crate::error::{CoreError, Result};
use crate::tensor::{ParamSet, Shape, Tensor};

pub const GRU_HIDDEN_DEFAULT: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

/// One fully-connected layer.
#[derive(Clone, Debug)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        assert!(in_dim > 0 && out_dim > 0, "layer dims must be positive");
        LayerSpec {
            in_dim,
            out_dim,
            activation,
        }
    }
}

/// Gated recurrent cell dimensions.
#[derive(Clone, Debug)]
pub struct GruSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruSpec {
    pub fn new(input_dim: usize, hidden_dim: usize) -> Self {
        assert!(input_dim > 0 && hidden_dim > 0);
        GruSpec {
            input_dim,
            hidden_dim,
        }
    }
}

fn uniform_tensor(rng: &mut ChaCha20Rng, rows: usize, cols: usize, bound: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::matrix(rows, cols, data).expect("sized correctly")
}

/// A named stack of fully-connected layers.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub prefix: String,
    pub layers: Vec<LayerSpec>,
}

impl Mlp {
    pub fn new(prefix: impl Into<String>, layers: Vec<LayerSpec>) -> Self {
        assert!(!layers.is_empty());
        Mlp {
            prefix: prefix.into(),
            layers,
        }
    }

    /// Convenience constructor for the ubiquitous `in -> hidden(relu) -> out`.
    pub fn two_layer(prefix: impl Into<String>, in_dim: usize, hidden: usize, out: usize) -> Self {
        Mlp::new(
            prefix,
            vec![
                LayerSpec::new(in_dim, hidden, Activation::Relu),
                LayerSpec::new(hidden, out, Activation::None),
            ],
        )
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn init_params(&self, params: &mut ParamSet, rng: &mut ChaCha20Rng) {
        for (i, layer) in self.layers.iter().enumerate() {
            let bound = 1.0 / (layer.in_dim as f64).sqrt();
            params.insert(
                format!("{}/fc{}/W", self.prefix, i),
                uniform_tensor(rng, layer.in_dim, layer.out_dim, bound),
            );
            params.insert(
                format!("{}/fc{}/b", self.prefix, i),
                Tensor::zeros(Shape::new(&[layer.out_dim]).unwrap()),
            );
        }
    }

    /// Forward `x: [rows, in_dim]` through the stack.
    pub fn forward(&self, tape: &mut Tape, binding: &TapeBinding, x: NodeId) -> Result<NodeId> {
        if tape.shape(x).last() != self.in_dim() {
            return Err(CoreError::ShapeMismatch {
                op: "mlp_forward",
                left: tape.shape(x).clone(),
                right: Shape::new(&[1, self.in_dim()])?,
            });
        }
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = binding.id(&format!("{}/fc{}/W", self.prefix, i))?;
            let b = binding.id(&format!("{}/fc{}/b", self.prefix, i))?;
            let z = tape.matmul(h, w)?;
            h = tape.add(z, b)?;
            if layer.activation == Activation::Relu {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }
}

/// A named GRU cell.
///
/// Gate equations (fixed, so checkpoints are portable):
/// `r = sigma(x W_r + h U_r + b_r)`, `z = sigma(x W_z + h U_z + b_z)`,
/// `c = tanh(x W_h + (r . h) U_h + b_h)`, `h' = (1 - z) . h + z . c`.
#[derive(Clone, Debug)]
pub struct Gru {
    pub prefix: String,
    pub spec: GruSpec,
}

const GRU_GATES: [&str; 3] = ["r", "z", "h"];

impl Gru {
    pub fn new(prefix: impl Into<String>, spec: GruSpec) -> Self {
        Gru {
            prefix: prefix.into(),
            spec,
        }
    }

    pub fn init_params(&self, params: &mut ParamSet, rng: &mut ChaCha20Rng) {
        let (ind, hid) = (self.spec.input_dim, self.spec.hidden_dim);
        for gate in GRU_GATES {
            let wb = 1.0 / (ind as f64).sqrt();
            params.insert(
                format!("{}/gru/W_{gate}", self.prefix),
                uniform_tensor(rng, ind, hid, wb),
            );
            let ub = 1.0 / (hid as f64).sqrt();
            params.insert(
                format!("{}/gru/U_{gate}", self.prefix),
                uniform_tensor(rng, hid, hid, ub),
            );
            params.insert(
                format!("{}/gru/b_{gate}", self.prefix),
                Tensor::zeros(Shape::new(&[hid]).unwrap()),
            );
        }
    }

    fn gate(
        &self,
        tape: &mut Tape,
        binding: &TapeBinding,
        name: &str,
        x: NodeId,
        h: NodeId,
    ) -> Result<NodeId> {
        let w = binding.id(&format!("{}/gru/W_{name}", self.prefix))?;
        let u = binding.id(&format!("{}/gru/U_{name}", self.prefix))?;
        let b = binding.id(&format!("{}/gru/b_{name}", self.prefix))?;
        let xw = tape.matmul(x, w)?;
        let hu = tape.matmul(h, u)?;
        let s = tape.add(xw, hu)?;
        tape.add(s, b)
    }

    /// One step: `x_t: [rows, input_dim]`, `h_prev: [rows, hidden_dim]`.
    pub fn cell(
        &self,
        tape: &mut Tape,
        binding: &TapeBinding,
        x_t: NodeId,
        h_prev: NodeId,
    ) -> Result<NodeId> {
        if tape.shape(h_prev).last() != self.spec.hidden_dim {
            return Err(CoreError::ShapeMismatch {
                op: "gru_cell",
                left: tape.shape(h_prev).clone(),
                right: Shape::new(&[1, self.spec.hidden_dim])?,
            });
        }
        let pre_r = self.gate(tape, binding, "r", x_t, h_prev)?;
        let r = tape.sigmoid(pre_r)?;
        let pre_z = self.gate(tape, binding, "z", x_t, h_prev)?;
        let z = tape.sigmoid(pre_z)?;

        let w = binding.id(&format!("{}/gru/W_h", self.prefix))?;
        let u = binding.id(&format!("{}/gru/U_h", self.prefix))?;
        let b = binding.id(&format!("{}/gru/b_h", self.prefix))?;
        let xw = tape.matmul(x_t, w)?;
        let rh = tape.mul(r, h_prev)?;
        let rhu = tape.matmul(rh, u)?;
        let s = tape.add(xw, rhu)?;
        let pre_c = tape.add(s, b)?;
        let cand = tape.tanh(pre_c)?;

        let keep = tape.one_minus(z)?;
        let a = tape.mul(keep, h_prev)?;
        let bterm = tape.mul(z, cand)?;
        tape.add(a, bterm)
    }

    /// Unroll over a sequence, returning every hidden state.
    pub fn unroll(
        &self,
        tape: &mut Tape,
        binding: &TapeBinding,
        xs: &[NodeId],
        h0: NodeId,
    ) -> Result<Vec<NodeId>> {
        if xs.is_empty() {
            return Err(CoreError::InvalidArgument(
                "gru_unroll: empty sequence".to_string(),
            ));
        }
        let mut h = h0;
        let mut out = Vec::with_capacity(xs.len());
        for &x in xs {
            h = self.cell(tape, binding, x, h)?;
            out.push(h);
        }
        Ok(out)
    }
}
