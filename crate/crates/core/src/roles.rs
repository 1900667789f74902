//! The role machinery.
//!
//! Each agent's role is a 3-d diagonal Gaussian produced from its current
//! observation by the role encoder. A reparameterized sample of that role is
//! fed to the role decoder, a hypernetwork that emits the agent's utility
//! head. The trajectory encoder is a variational posterior over roles given
//! the agent's history (summarized by the utility GRU hidden state), and the
//! dissimilarity model scores trajectory pairs.
//!
//! Variances are squared then clamped at [`SIGMA2_FLOOR`], so every emitted
//! distribution has entropy bounded away from zero.

use crate::autodiff::{NodeId, Tape, TapeBinding};
use crate::error::{CoreError, Result};
use crate::nn::Mlp;
use crate::tensor::ParamSet;
use rand_chacha::ChaCha20Rng;

pub const ROLE_DIM: usize = 3;
/// Variance floor for role distributions.
pub const SIGMA2_FLOOR: f64 = 0.1;
/// Hidden width of the role-space MLPs.
pub const ROLE_MLP_HIDDEN: usize = 12;

const LN_2PI: f64 = 1.8378770664093453;

/// Diagonal Gaussian over the role space (plain data form, used outside the
/// tape: evaluation records, oracles, tests).
#[derive(Clone, Debug, PartialEq)]
pub struct RoleDistribution {
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
}

impl RoleDistribution {
    pub fn new(mu: Vec<f64>, sigma2: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma2.len() {
            return Err(CoreError::InvalidArgument(format!(
                "mu has {} dims, sigma2 has {}",
                mu.len(),
                sigma2.len()
            )));
        }
        if sigma2.iter().any(|v| !v.is_finite() || *v < SIGMA2_FLOOR) {
            return Err(CoreError::InvalidArgument(format!(
                "variances must be finite and >= {SIGMA2_FLOOR}, got {sigma2:?}"
            )));
        }
        Ok(RoleDistribution { mu, sigma2 })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// log N(x; mu, diag sigma2)
    pub fn log_prob(&self, x: &[f64]) -> f64 {
        self.mu
            .iter()
            .zip(&self.sigma2)
            .zip(x)
            .map(|((m, s2), xv)| -0.5 * (LN_2PI + s2.ln()) - (xv - m).powi(2) / (2.0 * s2))
            .sum()
    }

    /// KL(self || q), closed form for diagonal Gaussians.
    pub fn kl(&self, q: &RoleDistribution) -> f64 {
        self.mu
            .iter()
            .zip(&self.sigma2)
            .zip(q.mu.iter().zip(&q.sigma2))
            .map(|((pm, ps2), (qm, qs2))| {
                0.5 * (qs2 / ps2).ln() + (ps2 + (pm - qm).powi(2)) / (2.0 * qs2) - 0.5
            })
            .sum()
    }

    /// Differential entropy, strictly positive under the variance floor.
    pub fn entropy(&self) -> f64 {
        self.sigma2
            .iter()
            .map(|s2| 0.5 * (LN_2PI + 1.0 + s2.ln()))
            .sum()
    }

    /// Reparameterized sample: `mu + sqrt(sigma2) . noise`.
    pub fn sample(&self, noise: &[f64]) -> RoleSample {
        let rho = self
            .mu
            .iter()
            .zip(&self.sigma2)
            .zip(noise)
            .map(|((m, s2), n)| m + s2.sqrt() * n)
            .collect();
        RoleSample {
            rho,
            noise: noise.to_vec(),
        }
    }
}

/// A drawn role with the standard-normal noise that produced it, retained so
/// replays are exact.
#[derive(Clone, Debug, PartialEq)]
pub struct RoleSample {
    pub rho: Vec<f64>,
    pub noise: Vec<f64>,
}

/// A batch of role distributions on the tape: `mu`, `sigma2` are
/// `[rows, ROLE_DIM]` nodes.
#[derive(Clone, Copy, Debug)]
pub struct RoleDistNodes {
    pub mu: NodeId,
    pub sigma2: NodeId,
}

/// Variance head: square the raw output, clamp at the floor.
fn variance_head(tape: &mut Tape, raw: NodeId) -> Result<NodeId> {
    let sq = tape.square(raw)?;
    tape.clamp_min(sq, SIGMA2_FLOOR)
}

fn split_dist(tape: &mut Tape, out: NodeId) -> Result<RoleDistNodes> {
    let mu = tape.slice(out, 0, ROLE_DIM)?;
    let raw = tape.slice(out, ROLE_DIM, ROLE_DIM)?;
    let sigma2 = variance_head(tape, raw)?;
    Ok(RoleDistNodes { mu, sigma2 })
}

/// Reparameterized sample on the tape; gradients flow into mu and sigma2.
pub fn role_sample(tape: &mut Tape, dist: RoleDistNodes, noise: NodeId) -> Result<NodeId> {
    let sd = tape.sqrt(dist.sigma2)?;
    let scaled = tape.mul(sd, noise)?;
    tape.add(dist.mu, scaled)
}

/// Per-row log density `[rows, 1]` of `x` under `dist`.
pub fn gaussian_log_prob(tape: &mut Tape, dist: RoleDistNodes, x: NodeId) -> Result<NodeId> {
    let lv = tape.log(dist.sigma2)?;
    let lv_shift = tape.add_scalar(lv, LN_2PI)?;
    let term1 = tape.scale(lv_shift, -0.5)?;
    let diff = tape.sub(x, dist.mu)?;
    let dsq = tape.square(diff)?;
    let neg_lv = tape.neg(lv)?;
    let inv_s2 = tape.exp(neg_lv)?;
    let quad = tape.mul(dsq, inv_s2)?;
    let term2 = tape.scale(quad, -0.5)?;
    let per_dim = tape.add(term1, term2)?;
    tape.row_sum(per_dim)
}

/// Per-row KL(p || q) `[rows, 1]`, closed form.
pub fn gaussian_kl(tape: &mut Tape, p: RoleDistNodes, q: RoleDistNodes) -> Result<NodeId> {
    let lp = tape.log(p.sigma2)?;
    let lq = tape.log(q.sigma2)?;
    let ratio = tape.sub(lq, lp)?;
    let half_ratio = tape.scale(ratio, 0.5)?;

    let mu_diff = tape.sub(p.mu, q.mu)?;
    let mu_sq = tape.square(mu_diff)?;
    let num = tape.add(p.sigma2, mu_sq)?;
    let neg_lq = tape.neg(lq)?;
    let inv_q = tape.exp(neg_lq)?;
    let frac = tape.mul(num, inv_q)?;
    let half_frac = tape.scale(frac, 0.5)?;

    let s = tape.add(half_ratio, half_frac)?;
    let per_dim = tape.add_scalar(s, -0.5)?;
    tape.row_sum(per_dim)
}

/// Per-row differential entropy `[rows, 1]`.
pub fn gaussian_entropy(tape: &mut Tape, dist: RoleDistNodes) -> Result<NodeId> {
    let lv = tape.log(dist.sigma2)?;
    let shifted = tape.add_scalar(lv, LN_2PI + 1.0)?;
    let half = tape.scale(shifted, 0.5)?;
    tape.row_sum(half)
}

/// All role-space networks for one environment contract.
#[derive(Clone, Debug)]
pub struct RoleNets {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub posterior: Mlp,
    pub dissim: Mlp,
    pub n_actions: usize,
    pub utility_hidden: usize,
}

impl RoleNets {
    pub fn new(obs_dim: usize, n_actions: usize, utility_hidden: usize) -> Self {
        let head_len = utility_hidden * n_actions + n_actions;
        RoleNets {
            encoder: Mlp::two_layer("role_enc", obs_dim, ROLE_MLP_HIDDEN, 2 * ROLE_DIM),
            decoder: Mlp::two_layer("role_dec", ROLE_DIM, ROLE_MLP_HIDDEN, head_len),
            posterior: Mlp::two_layer(
                "traj_enc",
                utility_hidden + obs_dim,
                ROLE_MLP_HIDDEN,
                2 * ROLE_DIM,
            ),
            dissim: Mlp::two_layer("dissim", 2 * utility_hidden, ROLE_MLP_HIDDEN, 1),
            n_actions,
            utility_hidden,
        }
    }

    pub fn init_params(&self, params: &mut ParamSet, rng: &mut ChaCha20Rng) {
        self.encoder.init_params(params, rng);
        self.decoder.init_params(params, rng);
        self.posterior.init_params(params, rng);
        self.dissim.init_params(params, rng);
    }

    /// Role encoder: observation rows -> role distribution.
    pub fn encode(
        &self,
        tape: &mut Tape,
        binding: &TapeBinding,
        obs: NodeId,
    ) -> Result<RoleDistNodes> {
        let out = self.encoder.forward(tape, binding, obs)?;
        split_dist(tape, out)
    }

    /// Trajectory posterior q(rho | tau, o): conditions on the utility GRU
    /// summary `h` (rows) concatenated with the current observation.
    pub fn trajectory_posterior(
        &self,
        tape: &mut Tape,
        binding: &TapeBinding,
        h: NodeId,
        obs: NodeId,
    ) -> Result<RoleDistNodes> {
        let joint = tape.concat(&[h, obs])?;
        let out = self.posterior.forward(tape, binding, joint)?;
        split_dist(tape, out)
    }

    /// Symmetrized trajectory dissimilarity `[rows, 1]`.
    pub fn dissimilarity(
        &self,
        tape: &mut Tape,
        binding: &TapeBinding,
        h_i: NodeId,
        h_j: NodeId,
    ) -> Result<NodeId> {
        let ij = tape.concat(&[h_i, h_j])?;
        let raw_ij = self.dissim.forward(tape, binding, ij)?;
        let ji = tape.concat(&[h_j, h_i])?;
        let raw_ji = self.dissim.forward(tape, binding, ji)?;
        let s = tape.add(raw_ij, raw_ji)?;
        tape.scale(s, 0.5)
    }

    /// Role decoder: `rho [rows, ROLE_DIM]` -> flattened utility head
    /// `[rows, hidden*|A| + |A|]`. Layout: the per-action weight vectors
    /// (each `hidden` long) back to back, then the `|A|` biases.
    pub fn decode(&self, tape: &mut Tape, binding: &TapeBinding, rho: NodeId) -> Result<NodeId> {
        self.decoder.forward(tape, binding, rho)
    }

    /// Apply a decoded head to GRU outputs: `q[r, a] = h[r] . w_a[r] + b_a[r]`.
    pub fn apply_head(&self, tape: &mut Tape, decoded: NodeId, h: NodeId) -> Result<NodeId> {
        apply_generated_head(tape, decoded, h, self.utility_hidden, self.n_actions)
    }
}

/// Shared by the hypernetwork path and the plain-head ablations.
pub fn apply_generated_head(
    tape: &mut Tape,
    decoded: NodeId,
    h: NodeId,
    hidden: usize,
    n_actions: usize,
) -> Result<NodeId> {
    let want = hidden * n_actions + n_actions;
    if tape.shape(decoded).last() != want {
        return Err(CoreError::ShapeMismatch {
            op: "apply_generated_head",
            left: tape.shape(decoded).clone(),
            right: crate::tensor::Shape::new(&[1, want])?,
        });
    }
    let mut cols = Vec::with_capacity(n_actions);
    for a in 0..n_actions {
        let w_a = tape.slice(decoded, a * hidden, hidden)?;
        let prod = tape.mul(h, w_a)?;
        cols.push(tape.row_sum(prod)?);
    }
    let q = tape.concat(&cols)?;
    let b = tape.slice(decoded, n_actions * hidden, n_actions)?;
    tape.add(q, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_diff_check;
    use crate::rng::{derive_rng, stream};
    use crate::tensor::{Shape, Tensor};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn zeroed(nets: &RoleNets, seed: u64) -> ParamSet {
        let mut params = ParamSet::new();
        nets.init_params(&mut params, &mut derive_rng(seed, stream::INIT, 0));
        params
    }

    fn zero_all(params: &mut ParamSet) {
        for name in params.names().cloned().collect::<Vec<_>>() {
            params.get_mut(&name).unwrap().data_mut().fill(0.0);
        }
    }

    #[test]
    fn zero_encoder_gives_zero_mean_and_clamped_variance() {
        let nets = RoleNets::new(5, 3, 64);
        let mut params = zeroed(&nets, 0);
        zero_all(&mut params);
        let mut tape = Tape::new();
        let binding = TapeBinding::bind(&mut tape, &params, false);
        let obs = tape
            .constant(Shape::new(&[2, 5]).unwrap(), vec![0.4; 10])
            .unwrap();
        let dist = nets.encode(&mut tape, &binding, obs).unwrap();
        assert_eq!(tape.data(dist.mu), &[0.0; 6]);
        assert_eq!(tape.data(dist.sigma2), &[SIGMA2_FLOOR; 6]);
    }

    #[test]
    fn variance_floor_holds_for_random_parameters() {
        let nets = RoleNets::new(6, 3, 64);
        let mut rng = derive_rng(7, stream::INIT, 1);
        for trial in 0..50 {
            let params = zeroed(&nets, trial);
            let mut tape = Tape::new();
            let binding = TapeBinding::bind(&mut tape, &params, false);
            let data: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            let obs = tape.constant(Shape::new(&[1, 6]).unwrap(), data).unwrap();
            let dist = nets.encode(&mut tape, &binding, obs).unwrap();
            assert!(tape.data(dist.sigma2).iter().all(|&v| v >= SIGMA2_FLOOR));
        }
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let nets = RoleNets::new(4, 3, 64);
        let params = zeroed(&nets, 3);
        let report = finite_diff_check(
            |tape, binding| {
                let obs = tape.constant(
                    Shape::new(&[2, 4]).unwrap(),
                    vec![0.7, -0.4, 1.3, 0.2, -0.9, 0.6, 0.1, -1.2],
                )?;
                let d = nets.encode(tape, binding, obs)?;
                let sm = tape.sum(d.mu)?;
                let ss = tape.sum(d.sigma2)?;
                tape.add(sm, ss)
            },
            &params,
            |n| n.starts_with("role_enc/"),
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-5, "err {}", report.max_rel_err);
    }

    #[test]
    fn sample_with_zero_noise_is_mu_and_hand_case() {
        let d = RoleDistribution::new(vec![0.3, -0.7, 1.1], vec![0.5, 0.2, 0.9]).unwrap();
        assert_eq!(d.sample(&[0.0, 0.0, 0.0]).rho, d.mu);

        let d = RoleDistribution::new(vec![0.0; 3], vec![1.0; 3]).unwrap();
        assert_eq!(d.sample(&[1.0, -1.0, 2.0]).rho, vec![1.0, -1.0, 2.0]);
    }

    #[test]
    fn tape_sample_matches_plain_and_flows_gradients() {
        let mut tape = Tape::new();
        let mu_t = Tensor::matrix(1, 3, vec![0.5, 0.0, -0.25]).unwrap();
        let s2_t = Tensor::matrix(1, 3, vec![0.1, 0.2, 0.4]).unwrap();
        let mu = tape.leaf(&mu_t, true);
        let sigma2 = tape.leaf(&s2_t, true);
        let noise = tape
            .constant(Shape::new(&[1, 3]).unwrap(), vec![0.3, -1.2, 0.9])
            .unwrap();
        let rho = role_sample(&mut tape, RoleDistNodes { mu, sigma2 }, noise).unwrap();
        let plain = RoleDistribution::new(vec![0.5, 0.0, -0.25], vec![0.1, 0.2, 0.4])
            .unwrap()
            .sample(&[0.3, -1.2, 0.9]);
        assert_eq!(tape.data(rho), plain.rho.as_slice());
        let l = tape.sum(rho).unwrap();
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(mu), &[1.0, 1.0, 1.0]);
        assert!(tape.grad(sigma2).iter().all(|&g| g != 0.0));
    }

    #[test]
    fn sample_moments_match_statistical_oracle() {
        let d = RoleDistribution::new(vec![0.5, 0.0, 0.0], vec![0.1, 0.2, 0.4]).unwrap();
        let mut rng = derive_rng(2024, stream::INIT, 5);
        let n = 1_000_000usize;
        let mut sum = [0.0f64; 3];
        let mut sumsq = [0.0f64; 3];
        for _ in 0..n {
            let noise: Vec<f64> = (0..3)
                .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect();
            let s = d.sample(&noise);
            for k in 0..3 {
                sum[k] += s.rho[k];
                sumsq[k] += s.rho[k] * s.rho[k];
            }
        }
        for k in 0..3 {
            let mean = sum[k] / n as f64;
            let var = sumsq[k] / n as f64 - mean * mean;
            let tol = 4.0 * d.sigma2[k].sqrt() / (n as f64).sqrt();
            assert!(
                (mean - d.mu[k]).abs() < tol,
                "dim {k}: mean {mean} vs {} (tol {tol})",
                d.mu[k]
            );
            assert!(
                (var - d.sigma2[k]).abs() < 0.05 * d.sigma2[k],
                "dim {k}: var {var} vs {}",
                d.sigma2[k]
            );
        }
    }

    #[test]
    fn log_prob_hand_values() {
        let std3 = RoleDistribution::new(vec![0.0; 3], vec![1.0; 3]).unwrap();
        let lp = std3.log_prob(&[0.0, 0.0, 0.0]);
        assert!((lp - (-2.756815599614018)).abs() < 1e-12);

        // x = mu maximizes log density
        let d = RoleDistribution::new(vec![0.4, -0.2, 1.0], vec![0.3, 0.9, 0.15]).unwrap();
        let at_mu = d.log_prob(&d.mu.clone());
        let expect = -0.5
            * d.sigma2
                .iter()
                .map(|s| (2.0 * std::f64::consts::PI * s).ln())
                .sum::<f64>();
        assert!((at_mu - expect).abs() < 1e-12);
    }

    #[test]
    fn log_prob_shift_identity_property() {
        let mut rng = derive_rng(5, stream::INIT, 2);
        for _ in 0..200 {
            let mu: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let s2: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..3.0)).collect();
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-4.0..4.0)).collect();
            let d = RoleDistribution::new(mu.clone(), s2.clone()).unwrap();
            let lhs = d.log_prob(&x) - d.log_prob(&mu);
            let rhs: f64 = -(0..3)
                .map(|k| (x[k] - mu[k]).powi(2) / (2.0 * s2[k]))
                .sum::<f64>();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_closed_form_hand_values() {
        let p = RoleDistribution::new(vec![1.0; 3], vec![1.0; 3]).unwrap();
        let q = RoleDistribution::new(vec![0.0; 3], vec![1.0; 3]).unwrap();
        assert!((p.kl(&q) - 1.5).abs() < 1e-12); // 0.5 per dim

        let p = RoleDistribution::new(vec![0.0], vec![0.1]).unwrap();
        let q = RoleDistribution::new(vec![0.0], vec![1.0]).unwrap();
        assert!((p.kl(&q) - 0.701292546497023).abs() < 1e-12);

        let d = RoleDistribution::new(vec![0.2, -0.8, 0.5], vec![0.4, 0.1, 2.0]).unwrap();
        assert_eq!(d.kl(&d), 0.0);
    }

    #[test]
    fn kl_non_negative_and_zero_iff_equal() {
        let mut rng = derive_rng(17, stream::INIT, 3);
        for _ in 0..500 {
            let p = RoleDistribution::new(
                (0..3).map(|_| rng.random_range(-2.0..2.0)).collect(),
                (0..3).map(|_| rng.random_range(0.1..4.0)).collect(),
            )
            .unwrap();
            let q = RoleDistribution::new(
                (0..3).map(|_| rng.random_range(-2.0..2.0)).collect(),
                (0..3).map(|_| rng.random_range(0.1..4.0)).collect(),
            )
            .unwrap();
            assert!(p.kl(&q) >= 0.0);
            assert!(p.kl(&p).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_values_and_floor() {
        let floor = RoleDistribution::new(vec![0.0; 3], vec![SIGMA2_FLOOR; 3]).unwrap();
        // 3 * 0.5*ln(2*pi*e*0.1)
        assert!((floor.entropy() - 0.8029379601229495).abs() < 1e-12);
        assert!(floor.entropy() > 0.0);

        let mut wider = floor.clone();
        wider.sigma2[1] *= 2.0;
        assert!((wider.entropy() - floor.entropy() - 0.34657359027997264).abs() < 1e-12);
    }

    #[test]
    fn density_integrates_to_one_by_quadrature() {
        // Simpson's rule over [-10s, 10s] on a 1-d marginal.
        let (mu, s2) = (0.37, 0.55);
        let d = RoleDistribution::new(vec![mu], vec![s2]).unwrap();
        let s = s2.sqrt();
        let (a, b) = (mu - 10.0 * s, mu + 10.0 * s);
        let n = 20_000usize; // even
        let h = (b - a) / n as f64;
        let f = |x: f64| d.log_prob(&[x]).exp();
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + i as f64 * h);
        }
        let integral = acc * h / 3.0;
        assert!((integral - 1.0).abs() < 1e-6, "integral {integral}");
    }

    #[test]
    fn tape_gaussian_ops_match_plain_forms() {
        let mut rng = derive_rng(23, stream::INIT, 4);
        for _ in 0..50 {
            let p = RoleDistribution::new(
                (0..3).map(|_| rng.random_range(-2.0..2.0)).collect(),
                (0..3).map(|_| rng.random_range(0.1..4.0)).collect(),
            )
            .unwrap();
            let q = RoleDistribution::new(
                (0..3).map(|_| rng.random_range(-2.0..2.0)).collect(),
                (0..3).map(|_| rng.random_range(0.1..4.0)).collect(),
            )
            .unwrap();
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();

            let mut tape = Tape::new();
            let pn = RoleDistNodes {
                mu: tape
                    .constant(Shape::new(&[1, 3]).unwrap(), p.mu.clone())
                    .unwrap(),
                sigma2: tape
                    .constant(Shape::new(&[1, 3]).unwrap(), p.sigma2.clone())
                    .unwrap(),
            };
            let qn = RoleDistNodes {
                mu: tape
                    .constant(Shape::new(&[1, 3]).unwrap(), q.mu.clone())
                    .unwrap(),
                sigma2: tape
                    .constant(Shape::new(&[1, 3]).unwrap(), q.sigma2.clone())
                    .unwrap(),
            };
            let xn = tape
                .constant(Shape::new(&[1, 3]).unwrap(), x.clone())
                .unwrap();

            let lp = gaussian_log_prob(&mut tape, qn, xn).unwrap();
            let kl = gaussian_kl(&mut tape, pn, qn).unwrap();
            let ent = gaussian_entropy(&mut tape, pn).unwrap();
            assert!((tape.data(lp)[0] - q.log_prob(&x)).abs() < 1e-12);
            assert!((tape.data(kl)[0] - p.kl(&q)).abs() < 1e-12);
            assert!((tape.data(ent)[0] - p.entropy()).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_zero_params_give_floor_distribution() {
        let nets = RoleNets::new(5, 3, 8);
        let mut params = zeroed(&nets, 1);
        zero_all(&mut params);
        let mut tape = Tape::new();
        let binding = TapeBinding::bind(&mut tape, &params, false);
        let h = tape
            .constant(Shape::new(&[1, 8]).unwrap(), vec![0.5; 8])
            .unwrap();
        let obs = tape
            .constant(Shape::new(&[1, 5]).unwrap(), vec![-0.3; 5])
            .unwrap();
        let d = nets
            .trajectory_posterior(&mut tape, &binding, h, obs)
            .unwrap();
        assert_eq!(tape.data(d.mu), &[0.0; 3]);
        assert_eq!(tape.data(d.sigma2), &[SIGMA2_FLOOR; 3]);
    }

    #[test]
    fn kl_of_encoder_vs_posterior_gradcheck() {
        let nets = RoleNets::new(4, 3, 8);
        let params = zeroed(&nets, 12);
        let report = finite_diff_check(
            |tape, binding| {
                let obs = tape.constant(
                    Shape::new(&[2, 4]).unwrap(),
                    vec![0.6, -0.3, 0.8, 0.2, -0.5, 1.0, -0.9, 0.4],
                )?;
                let h = tape.constant(
                    Shape::new(&[2, 8]).unwrap(),
                    (0..16).map(|i| (i as f64) * 0.1 - 0.8).collect(),
                )?;
                let p = nets.encode(tape, binding, obs)?;
                let q = nets.trajectory_posterior(tape, binding, h, obs)?;
                let kl = gaussian_kl(tape, p, q)?;
                tape.sum(kl)
            },
            &params,
            |n| n.starts_with("role_enc/") || n.starts_with("traj_enc/"),
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "err {}", report.max_rel_err);
    }

    #[test]
    fn dissimilarity_is_symmetric_zero_params_zero_output() {
        let nets = RoleNets::new(4, 3, 8);
        let params = zeroed(&nets, 6);
        let mut rng = derive_rng(6, stream::INIT, 9);
        for _ in 0..20 {
            let hi_data: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let hj_data: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut tape = Tape::new();
            let binding = TapeBinding::bind(&mut tape, &params, false);
            let hi = tape
                .constant(Shape::new(&[1, 8]).unwrap(), hi_data.clone())
                .unwrap();
            let hj = tape
                .constant(Shape::new(&[1, 8]).unwrap(), hj_data.clone())
                .unwrap();
            let dij = nets.dissimilarity(&mut tape, &binding, hi, hj).unwrap();
            let dji = nets.dissimilarity(&mut tape, &binding, hj, hi).unwrap();
            assert_eq!(tape.data(dij), tape.data(dji));
        }

        // d(h, h) equals the raw network output on equal arguments
        let mut tape = Tape::new();
        let binding = TapeBinding::bind(&mut tape, &params, false);
        let h = tape
            .constant(Shape::new(&[1, 8]).unwrap(), vec![0.25; 8])
            .unwrap();
        let d_hh = nets.dissimilarity(&mut tape, &binding, h, h).unwrap();
        let hh = tape.concat(&[h, h]).unwrap();
        let raw = nets.dissim.forward(&mut tape, &binding, hh).unwrap();
        assert_eq!(tape.data(d_hh), tape.data(raw));

        let mut zp = zeroed(&nets, 6);
        zero_all(&mut zp);
        let mut tape = Tape::new();
        let binding = TapeBinding::bind(&mut tape, &zp, false);
        let hi = tape
            .constant(Shape::new(&[1, 8]).unwrap(), vec![1.0; 8])
            .unwrap();
        let hj = tape
            .constant(Shape::new(&[1, 8]).unwrap(), vec![-1.0; 8])
            .unwrap();
        let d = nets.dissimilarity(&mut tape, &binding, hi, hj).unwrap();
        assert_eq!(tape.data(d), &[0.0]);
    }

    #[test]
    fn decode_census_and_zero_head() {
        let nets = RoleNets::new(4, 3, 64);
        assert_eq!(nets.decoder.out_dim(), 64 * 3 + 3); // 195

        let mut params = zeroed(&nets, 2);
        zero_all(&mut params);
        let mut tape = Tape::new();
        let binding = TapeBinding::bind(&mut tape, &params, false);
        let rho = tape
            .constant(Shape::new(&[2, 3]).unwrap(), vec![0.9; 6])
            .unwrap();
        let decoded = nets.decode(&mut tape, &binding, rho).unwrap();
        assert_eq!(tape.shape(decoded).dims(), &[2, 195]);
        let h = tape
            .constant(Shape::new(&[2, 64]).unwrap(), vec![0.33; 128])
            .unwrap();
        let q = nets.apply_head(&mut tape, decoded, h).unwrap();
        assert!(tape.data(q).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reparameterization_pathway_gradcheck() {
        // gradient of sum(q) w.r.t. encoder params flows through
        // decode(sample(encode(o))) with frozen noise; seeds whose forward
        // pass lands inside the epsilon-ball of a kink are skipped
        let mut checked = 0;
        for seed in 31..41 {
            let nets = RoleNets::new(4, 3, 8);
            let params = zeroed(&nets, seed);
            let report = finite_diff_check(
                |tape, binding| {
                    let obs = tape.constant(
                        Shape::new(&[2, 4]).unwrap(),
                        vec![0.9, -0.2, 0.5, -0.7, 0.3, 1.1, -0.4, 0.6],
                    )?;
                    let noise = tape.constant(
                        Shape::new(&[2, 3]).unwrap(),
                        vec![0.7, -1.1, 0.4, -0.2, 0.9, 1.3],
                    )?;
                    let h = tape.constant(
                        Shape::new(&[2, 8]).unwrap(),
                        (0..16).map(|i| ((i * 7) % 5) as f64 * 0.2 - 0.4).collect(),
                    )?;
                    let dist = nets.encode(tape, binding, obs)?;
                    let rho = role_sample(tape, dist, noise)?;
                    let decoded = nets.decode(tape, binding, rho)?;
                    let q = nets.apply_head(tape, decoded, h)?;
                    tape.sum(q)
                },
                &params,
                |n| n.starts_with("role_enc/") || n.starts_with("role_dec/"),
                1e-5,
            )
            .unwrap();
            if report.kink_margin < 1e-4 {
                continue;
            }
            checked += 1;
            assert!(
                report.max_rel_err < 1e-4,
                "seed {seed}: err {}",
                report.max_rel_err
            );
        }
        assert!(checked >= 5, "only {checked} seeds clear of kinks");
    }
}
