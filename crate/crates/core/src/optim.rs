//! RMSprop with a second-moment accumulator only (no momentum, no weight
//! decay): `v <- alpha v + (1-alpha) g^2`, `theta <- theta - lr g / (sqrt(v) + eps)`.

use std::collections::BTreeMap;

use crate::error::{CoreError, Result};
use crate::tensor::ParamSet;

#[derive(Clone, Debug)]
pub struct RmsProp {
    pub lr: f64,
    pub alpha: f64,
    pub eps: f64,
    /// Per-parameter accumulators, all elements >= 0.
    v: BTreeMap<String, Vec<f64>>,
}

/// What a step did: applied, or skipped because a gradient was non-finite.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    SkippedNonFinite { param: String },
}

impl RmsProp {
    pub fn new(lr: f64, alpha: f64, eps: f64) -> Self {
        RmsProp {
            lr,
            alpha,
            eps,
            v: BTreeMap::new(),
        }
    }

    pub fn accumulators(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.v
    }

    /// Restore accumulators (checkpoint load).
    pub fn set_accumulators(&mut self, v: BTreeMap<String, Vec<f64>>) {
        self.v = v;
    }

    /// Apply one update. If any gradient element is non-finite the whole
    /// update is skipped and parameters/accumulators are left untouched.
    pub fn step(
        &mut self,
        params: &mut ParamSet,
        grads: &BTreeMap<String, Vec<f64>>,
    ) -> Result<StepOutcome> {
        for (name, g) in grads {
            if g.iter().any(|v| !v.is_finite()) {
                return Ok(StepOutcome::SkippedNonFinite {
                    param: name.clone(),
                });
            }
        }
        for (name, g) in grads {
            let tensor = params.get_mut(name)?;
            if tensor.numel() != g.len() {
                return Err(CoreError::InvalidArgument(format!(
                    "gradient for {name} has {} elements, parameter has {}",
                    g.len(),
                    tensor.numel()
                )));
            }
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; g.len()]);
            for ((th, vv), gg) in tensor.data_mut().iter_mut().zip(v.iter_mut()).zip(g) {
                *vv = self.alpha * *vv + (1.0 - self.alpha) * gg * gg;
                *th -= self.lr * gg / (vv.sqrt() + self.eps);
            }
        }
        Ok(StepOutcome::Applied)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn one_param(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::from_vec(vec![v]));
        p
    }

    fn grad(name: &str, g: Vec<f64>) -> BTreeMap<String, Vec<f64>> {
        BTreeMap::from([(name.to_string(), g)])
    }

    #[test]
    fn first_step_hand_value() {
        let mut opt = RmsProp::new(5e-4, 0.99, 1e-5);
        let mut p = one_param(0.0);
        opt.step(&mut p, &grad("w", vec![1.0])).unwrap();
        // v = 0.01, delta = -5e-4 / (0.1 + 1e-5)
        let want = -5e-4 / (0.1 + 1e-5);
        assert!((p.get("w").unwrap().data()[0] - want).abs() < 1e-18);
    }

    #[test]
    fn zero_gradient_decays_accumulator_only() {
        let mut opt = RmsProp::new(5e-4, 0.99, 1e-5);
        let mut p = one_param(0.7);
        opt.step(&mut p, &grad("w", vec![1.0])).unwrap();
        let v1 = opt.v["w"][0];
        let th1 = p.get("w").unwrap().data()[0];
        opt.step(&mut p, &grad("w", vec![0.0])).unwrap();
        assert_eq!(p.get("w").unwrap().data()[0], th1);
        assert!((opt.v["w"][0] - 0.99 * v1).abs() < 1e-18);
    }

    #[test]
    fn two_steps_match_hand_unroll() {
        let (lr, alpha, eps) = (5e-4, 0.99, 1e-5);
        let g = 0.37;
        let mut opt = RmsProp::new(lr, alpha, eps);
        let mut p = one_param(1.0);
        opt.step(&mut p, &grad("w", vec![g])).unwrap();
        opt.step(&mut p, &grad("w", vec![g])).unwrap();

        let mut v = 0.0;
        let mut th = 1.0;
        for _ in 0..2 {
            v = alpha * v + (1.0 - alpha) * g * g;
            th -= lr * g / (v.sqrt() + eps);
        }
        assert!((p.get("w").unwrap().data()[0] - th).abs() < 1e-15);
        assert!(opt.v["w"][0] >= 0.0);
    }

    #[test]
    fn non_finite_gradient_skips_whole_update() {
        let mut opt = RmsProp::new(5e-4, 0.99, 1e-5);
        let mut p = ParamSet::new();
        p.insert("a", Tensor::from_vec(vec![1.0]));
        p.insert("b", Tensor::from_vec(vec![2.0]));
        let mut g = BTreeMap::new();
        g.insert("a".to_string(), vec![0.5]);
        g.insert("b".to_string(), vec![f64::NAN]);
        let out = opt.step(&mut p, &g).unwrap();
        assert!(matches!(out, StepOutcome::SkippedNonFinite { .. }));
        assert_eq!(p.get("a").unwrap().data()[0], 1.0);
        assert_eq!(p.get("b").unwrap().data()[0], 2.0);
        assert!(opt.v.is_empty());
    }
}
