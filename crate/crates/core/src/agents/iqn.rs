use alloc::vec::Vec;

use super::dqn::check_weights;
use super::{argmax, body_layers, IqnConfig, LossOutput, ValueHead};
use crate::net::{quantile_huber, Activation, Dense, Mlp, MlpTape, ParameterSet, Tensor};
use crate::replay::ReplayBatch;
use crate::rng::Stream;
use crate::Result;

/// Implicit quantile network.
///
/// State features ψ come from `fc1 → fc2`; the quantile embedding
/// φ(τ) = ReLU(embed(cos(π i τ)), i = 0..d_e−1) is merged as ψ ⊙ φ and fed
/// through `fc3 → out[num_actions]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileHead {
    trunk: Mlp,
    embed: Mlp,
    head: Mlp,
    cfg: IqnConfig,
}

/// Quantile fractions for one minibatch, row-major per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TauSamples {
    /// `[batch, N]` online-side τ.
    pub online: Vec<f64>,
    /// `[batch, N′]` target-side τ′.
    pub target: Vec<f64>,
    /// `[batch, K]` fractions for the target-side greedy action.
    pub selection: Vec<f64>,
}

impl TauSamples {
    /// Draws online, target and selection fractions in that order.
    pub fn draw(batch: usize, cfg: &IqnConfig, rng: &mut Stream) -> Self {
        let mut take = |n: usize| (0..batch * n).map(|_| rng.uniform()).collect();
        let online = take(cfg.num_tau_samples);
        let target = take(cfg.num_tau_prime_samples);
        let selection = take(cfg.num_quantile_samples);
        Self { online, target, selection }
    }
}

/// `[taus.len(), dim]` cosine features cos(π i τ), i = 0..dim−1.
pub fn quantile_features(taus: &[f64], dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(taus.len() * dim);
    for &tau in taus {
        out.extend((0..dim).map(|i| libm::cos(core::f64::consts::PI * i as f64 * tau)));
    }
    out
}

struct QuantileTape {
    trunk: MlpTape,
    embed: MlpTape,
    head: MlpTape,
    psi: Tensor,
    phi: Tensor,
    per_row: usize,
}

impl QuantileHead {
    pub fn new(input_dim: usize, hidden: usize, num_actions: usize, cfg: IqnConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            trunk: Mlp::new(body_layers(input_dim, hidden))?,
            embed: Mlp::new(alloc::vec![Dense::new("embed", cfg.embedding_dim, hidden, Activation::Relu)])?,
            head: Mlp::new(alloc::vec![
                Dense::new("fc3", hidden, hidden, Activation::Relu),
                Dense::new("out", hidden, num_actions, Activation::Identity),
            ])?,
            cfg,
        })
    }

    pub fn config(&self) -> &IqnConfig {
        &self.cfg
    }

    pub fn num_actions(&self) -> usize {
        self.head.output_dim()
    }

    fn merge(psi: &Tensor, phi: &Tensor, per_row: usize) -> Tensor {
        let mut merged = phi.clone();
        for r in 0..merged.rows() {
            for (m, p) in merged.row_mut(r).iter_mut().zip(psi.row(r / per_row)) {
                *m *= p;
            }
        }
        merged
    }

    fn split_states(&self, states: &[f64]) -> Result<Tensor> {
        let dim = self.trunk.input_dim();
        Tensor::matrix(states.len() / dim, dim, states.to_vec())
    }

    /// `[batch · M, num_actions]` quantile values Z_τ(s, ·), with `M = taus.len() / batch`.
    pub fn quantile_values(&self, params: &ParameterSet, states: &[f64], taus: &[f64]) -> Result<Tensor> {
        let input = self.split_states(states)?;
        let per_row = self.per_row(input.rows(), taus.len())?;
        let psi = self.trunk.infer(params, &input)?;
        let features = Tensor::matrix(taus.len(), self.cfg.embedding_dim, quantile_features(taus, self.cfg.embedding_dim))?;
        let phi = self.embed.infer(params, &features)?;
        self.head.infer(params, &Self::merge(&psi, &phi, per_row))
    }

    fn forward(&self, params: &ParameterSet, states: &[f64], taus: &[f64]) -> Result<(Tensor, QuantileTape)> {
        let input = self.split_states(states)?;
        let per_row = self.per_row(input.rows(), taus.len())?;
        let (psi, trunk) = self.trunk.forward(params, &input)?;
        let features = Tensor::matrix(taus.len(), self.cfg.embedding_dim, quantile_features(taus, self.cfg.embedding_dim))?;
        let (phi, embed) = self.embed.forward(params, &features)?;
        let (out, head) = self.head.forward(params, &Self::merge(&psi, &phi, per_row))?;
        Ok((out, QuantileTape { trunk, embed, head, psi, phi, per_row }))
    }

    fn backward(&self, params: &ParameterSet, tape: &QuantileTape, grad_out: Tensor, grads: &mut ParameterSet) -> Result<()> {
        let grad_merged = self.head.backward(params, &tape.head, grad_out, grads, true)?.expect("input gradient requested");
        let mut grad_phi = grad_merged.clone();
        let mut grad_psi = Tensor::zeros(tape.psi.shape().to_vec());
        for r in 0..grad_merged.rows() {
            let b = r / tape.per_row;
            for (g, p) in grad_phi.row_mut(r).iter_mut().zip(tape.psi.row(b)) {
                *g *= p;
            }
            let (gm, phi) = (grad_merged.row(r), tape.phi.row(r));
            for ((d, g), f) in grad_psi.row_mut(b).iter_mut().zip(gm).zip(phi) {
                *d += g * f;
            }
        }
        self.embed.backward(params, &tape.embed, grad_phi, grads, false)?;
        self.trunk.backward(params, &tape.trunk, grad_psi, grads, false)?;
        Ok(())
    }

    fn per_row(&self, rows: usize, taus: usize) -> Result<usize> {
        if rows == 0 || taus == 0 || taus % rows != 0 {
            return Err(crate::error::contract(alloc::format!("{taus} quantile fractions for {rows} states")));
        }
        Ok(taus / rows)
    }

    /// Mean over `K` quantile samples per action.
    fn mean_values(&self, params: &ParameterSet, states: &[f64], taus: &[f64]) -> Result<Tensor> {
        let z = self.quantile_values(params, states, taus)?;
        let a = self.num_actions();
        let rows = states.len() / self.trunk.input_dim();
        let k = taus.len() / rows;
        let mut means = Tensor::zeros(alloc::vec![rows, a]);
        for r in 0..z.rows() {
            for (m, v) in means.row_mut(r / k).iter_mut().zip(z.row(r)) {
                *m += v / k as f64;
            }
        }
        Ok(means)
    }
}

/// Quantile-Huber loss with fractions drawn from `rng`.
pub fn iqn_loss(
    head: &QuantileHead,
    online: &ParameterSet,
    target: &ParameterSet,
    batch: &ReplayBatch,
    weights: &[f64],
    rng: &mut Stream,
) -> Result<LossOutput> {
    let taus = TauSamples::draw(batch.len(), &head.cfg, rng);
    iqn_loss_with_taus(head, online, target, batch, weights, &taus)
}

/// Per sample: mean over all (τ_i, τ′_j) pairs of ρ^κ_{τ_i}(y_j − Z_{τ_i}(s, a)),
/// where y_j = R_n + γ^m (1 − terminal) Z′_{τ′_j}(s′, a*) and a* maximizes the
/// target network's mean over the selection fractions.
pub fn iqn_loss_with_taus(
    head: &QuantileHead,
    online: &ParameterSet,
    target: &ParameterSet,
    batch: &ReplayBatch,
    weights: &[f64],
    taus: &TauSamples,
) -> Result<LossOutput> {
    check_weights(batch, weights)?;
    let b = batch.len();
    let (n, n_prime) = (head.cfg.num_tau_samples, head.cfg.num_tau_prime_samples);
    if taus.online.len() != b * n || taus.target.len() != b * n_prime || taus.selection.is_empty() {
        return Err(crate::error::contract("quantile fractions do not match the batch and configuration"));
    }
    let selection = head.mean_values(target, &batch.next_states, &taus.selection)?;
    let next_z = head.quantile_values(target, &batch.next_states, &taus.target)?;
    let (z, tape) = head.forward(online, &batch.states, &taus.online)?;
    let kappa = head.cfg.kappa;
    let pairs = (n * n_prime) as f64;
    let mut grad_z = Tensor::zeros(alloc::vec![b * n, head.num_actions()]);
    let mut per_sample = Vec::with_capacity(b);
    let mut batch_loss = 0.0;
    for s in 0..b {
        let a_star = argmax(selection.row(s));
        let discount = batch.bootstrap_discounts[s];
        let targets: Vec<f64> = (0..n_prime)
            .map(|j| {
                let bootstrap = if discount == 0.0 { 0.0 } else { discount * next_z.row(s * n_prime + j)[a_star] };
                batch.n_step_returns[s] + bootstrap
            })
            .collect();
        let action = batch.actions[s];
        let mut loss = 0.0;
        for i in 0..n {
            let row = s * n + i;
            let (tau, zi) = (taus.online[row], z.row(row)[action]);
            let mut dz = 0.0;
            for &y in &targets {
                let (rho, drho) = quantile_huber(y - zi, tau, kappa);
                loss += rho;
                dz -= drho;
            }
            grad_z.row_mut(row)[action] = weights[s] * dz / (pairs * b as f64);
        }
        loss /= pairs;
        per_sample.push(loss);
        batch_loss += weights[s] * loss / b as f64;
    }
    let mut grads = online.zeros_like();
    head.backward(online, &tape, grad_z, &mut grads)?;
    Ok(LossOutput { per_sample, batch_loss, grads })
}

impl ValueHead for QuantileHead {
    fn init_params(&self, rng: &mut Stream) -> Result<ParameterSet> {
        let mut params = ParameterSet::new(0);
        self.trunk.init(&mut params, rng)?;
        self.embed.init(&mut params, rng)?;
        self.head.init(&mut params, rng)?;
        Ok(params)
    }

    /// Mean of `K` sampled quantiles per action.
    fn action_values(&self, params: &ParameterSet, states: &[f64], rng: &mut Stream) -> Result<Vec<f64>> {
        let rows = states.len() / self.trunk.input_dim();
        let taus: Vec<f64> = (0..rows * self.cfg.num_quantile_samples).map(|_| rng.uniform()).collect();
        Ok(self.mean_values(params, states, &taus)?.into_data())
    }

    fn loss(
        &self,
        online: &ParameterSet,
        target: &ParameterSet,
        batch: &ReplayBatch,
        weights: &[f64],
        rng: &mut Stream,
    ) -> Result<LossOutput> {
        iqn_loss(self, online, target, batch, weights, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::testing::{random_batch, randomize_biases};
    use crate::net::finite_difference_check;

    fn cfg() -> IqnConfig {
        IqnConfig { num_tau_samples: 3, num_tau_prime_samples: 4, num_quantile_samples: 5, embedding_dim: 6, kappa: 1.0 }
    }

    fn head() -> QuantileHead {
        QuantileHead::new(4, 5, 3, cfg()).unwrap()
    }

    fn setup(seed: u64) -> (ParameterSet, ParameterSet, ReplayBatch, Vec<f64>, TauSamples) {
        let h = head();
        let mut rng = Stream::derive(seed, "iqn");
        let online = randomize_biases(h.init_params(&mut rng).unwrap(), &mut rng);
        let target = randomize_biases(h.init_params(&mut rng).unwrap(), &mut rng);
        let batch = random_batch(4, 4, 3, &mut rng);
        let w: Vec<f64> = (0..4).map(|_| 0.2 + rng.uniform()).collect();
        let taus = TauSamples::draw(4, &cfg(), &mut rng);
        (online, target, batch, w, taus)
    }

    #[test]
    fn cosine_features_start_at_one() {
        let f = quantile_features(&[0.25, 0.0], 3);
        assert_eq!(f[0], 1.0);
        assert!((f[1] - libm::cos(core::f64::consts::PI * 0.25)).abs() < 1e-15);
        assert!((f[2] - libm::cos(core::f64::consts::PI * 0.5)).abs() < 1e-15);
        assert_eq!(&f[3..], &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_residual_gives_zero_loss() {
        // Online and target identical, all-zero rewards and discounts, and an
        // output layer that ignores τ: every residual is zero.
        let h = head();
        let (mut online, _, mut batch, w, taus) = setup(1);
        online.get_mut("out.weight").unwrap().fill(0.0);
        online.get_mut("out.bias").unwrap().fill(0.0);
        batch.n_step_returns.iter_mut().for_each(|r| *r = 0.0);
        let out = iqn_loss_with_taus(&h, &online, &online, &batch, &w, &taus).unwrap();
        assert!(out.per_sample.iter().all(|&l| l == 0.0));
        assert_eq!(out.batch_loss, 0.0);
    }

    #[test]
    fn median_regression_limit() {
        for u in [-2.0, -0.3, 0.7, 5.0] {
            let kappa = 1e-9;
            let (rho, _) = quantile_huber(u, 0.5, kappa);
            assert!((rho - 0.5 * libm::fabs(u)).abs() < 1e-8, "u={u}: {rho}");
        }
    }

    /// Independent reimplementation: explicit per-sample network evaluation
    /// and the quantile-Huber formula written out.
    fn oracle(h: &QuantileHead, online: &ParameterSet, target: &ParameterSet, batch: &ReplayBatch, w: &[f64], t: &TauSamples) -> (Vec<f64>, f64) {
        let c = cfg();
        let z_of = |p: &ParameterSet, s: &[f64], tau: f64| -> Vec<f64> {
            h.quantile_values(p, s, &[tau]).unwrap().into_data()
        };
        let mut per = Vec::new();
        let mut total = 0.0;
        for s in 0..batch.len() {
            let mut means = [0.0; 3];
            for k in 0..c.num_quantile_samples {
                let z = z_of(target, batch.next_state(s), t.selection[s * c.num_quantile_samples + k]);
                for a in 0..3 {
                    means[a] += z[a];
                }
            }
            let mut a_star = 0;
            for a in 1..3 {
                if means[a] > means[a_star] {
                    a_star = a;
                }
            }
            let mut loss = 0.0;
            for i in 0..c.num_tau_samples {
                let tau = t.online[s * c.num_tau_samples + i];
                let zi = z_of(online, batch.state(s), tau)[batch.actions[s]];
                for j in 0..c.num_tau_prime_samples {
                    let zj = z_of(target, batch.next_state(s), t.target[s * c.num_tau_prime_samples + j])[a_star];
                    let y = batch.n_step_returns[s] + batch.bootstrap_discounts[s] * zj;
                    let u = y - zi;
                    let huber = if u.abs() <= c.kappa { 0.5 * u * u } else { c.kappa * (u.abs() - 0.5 * c.kappa) };
                    let indicator = if u < 0.0 { 1.0 } else { 0.0 };
                    loss += (tau - indicator).abs() * huber / c.kappa;
                }
            }
            loss /= (c.num_tau_samples * c.num_tau_prime_samples) as f64;
            per.push(loss);
            total += w[s] * loss;
        }
        (per, total / batch.len() as f64)
    }

    #[test]
    fn matches_straight_line_oracle() {
        let h = head();
        for seed in 0..20 {
            let (online, target, batch, w, taus) = setup(100 + seed);
            let out = iqn_loss_with_taus(&h, &online, &target, &batch, &w, &taus).unwrap();
            let (per, total) = oracle(&h, &online, &target, &batch, &w, &taus);
            for (a, b) in out.per_sample.iter().zip(&per) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
            assert!((out.batch_loss - total).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = head();
        for seed in 0..20 {
            let (online, target, batch, w, taus) = setup(200 + seed);
            let out = iqn_loss_with_taus(&h, &online, &target, &batch, &w, &taus).unwrap();
            let report = finite_difference_check(&online, &out.grads, 1e-6, |p| {
                iqn_loss_with_taus(&h, p, &target, &batch, &w, &taus).unwrap().batch_loss
            });
            assert!(report.relative_error < 1e-5, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn rng_variant_draws_documented_order() {
        let h = head();
        let (online, target, batch, w, _) = setup(3);
        let mut a = Stream::derive(9, "tau");
        let mut b = a.clone();
        let drawn = iqn_loss(&h, &online, &target, &batch, &w, &mut a).unwrap();
        let taus = TauSamples::draw(batch.len(), &cfg(), &mut b);
        let explicit = iqn_loss_with_taus(&h, &online, &target, &batch, &w, &taus).unwrap();
        assert_eq!(drawn, explicit);
    }
}
