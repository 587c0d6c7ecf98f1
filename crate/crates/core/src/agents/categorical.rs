use alloc::vec::Vec;

use super::dqn::check_weights;
use super::{argmax, body_layers, CategoricalConfig, DqnConfig, LossOutput, ValueHead};
use crate::net::{softmax, softmax_cross_entropy, Activation, Dense, Mlp, ParameterSet, Tensor, NORMALIZATION_TOLERANCE};
use crate::replay::{ReplayBatch, ReplayScheme};
use crate::rng::Stream;
use crate::Result;

/// Distributional head: `fc1 → fc2 → out[num_actions · num_atoms]` logits,
/// softmax per action over a fixed support.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalHead {
    net: Mlp,
    num_actions: usize,
    cfg: CategoricalConfig,
    support: Vec<f64>,
}

impl CategoricalHead {
    pub fn new(input_dim: usize, hidden: usize, num_actions: usize, cfg: CategoricalConfig) -> Result<Self> {
        cfg.validate()?;
        let mut layers = body_layers(input_dim, hidden);
        layers.push(Dense::new("out", hidden, num_actions * cfg.num_atoms, Activation::Identity));
        Ok(Self { net: Mlp::new(layers)?, num_actions, support: cfg.support(), cfg })
    }

    pub fn config(&self) -> &CategoricalConfig {
        &self.cfg
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    fn logits(&self, params: &ParameterSet, states: &[f64]) -> Result<Tensor> {
        let rows = states.len() / self.net.input_dim();
        self.net.infer(params, &Tensor::matrix(rows, self.net.input_dim(), states.to_vec())?)
    }

    /// Per-action probabilities for one row of logits.
    fn distributions(&self, logits: &[f64]) -> Vec<Vec<f64>> {
        logits.chunks_exact(self.cfg.num_atoms).map(softmax).collect()
    }

    fn expected(&self, probs: &[f64]) -> f64 {
        probs.iter().zip(&self.support).map(|(p, z)| p * z).sum()
    }
}

/// Projects the distribution `probs` over the support, shifted to
/// `R_n + γ_eff z`, back onto the support. Each shifted atom is clamped to
/// `[v_min, v_max]` and its mass split linearly between its two neighbours.
pub fn categorical_projection(cfg: &CategoricalConfig, probs: &[f64], reward: f64, gamma_eff: f64) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = cfg.num_atoms;
    if probs.len() != n {
        return Err(crate::error::contract(alloc::format!("{} probabilities for {n} atoms", probs.len())));
    }
    let mass: f64 = probs.iter().sum();
    if libm::fabs(mass - 1.0) > NORMALIZATION_TOLERANCE || probs.iter().any(|&p| !(p >= 0.0)) {
        return Err(crate::error::contract(alloc::format!("target distribution is not normalized (sums to {mass})")));
    }
    let delta = cfg.delta();
    let mut out = alloc::vec![0.0; n];
    for (j, &p) in probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let z = cfg.v_min + j as f64 * delta;
        let tz = (reward + gamma_eff * z).clamp(cfg.v_min, cfg.v_max);
        let b = ((tz - cfg.v_min) / delta).clamp(0.0, (n - 1) as f64);
        let lower = libm::floor(b) as usize;
        let upper = libm::ceil(b) as usize;
        if lower == upper {
            out[lower] += p;
        } else {
            out[lower] += p * (upper as f64 - b);
            out[upper] += p * (b - lower as f64);
        }
    }
    Ok(out)
}

/// Cross-entropy between the projected target distribution, taken at the
/// target network's greedy action, and the online distribution of the taken
/// action. No double estimation.
pub fn rainbow_loss(
    head: &CategoricalHead,
    online: &ParameterSet,
    target: &ParameterSet,
    batch: &ReplayBatch,
    weights: &[f64],
) -> Result<LossOutput> {
    check_weights(batch, weights)?;
    let b = batch.len();
    let atoms = head.cfg.num_atoms;
    let next_logits = head.logits(target, &batch.next_states)?;
    let input = Tensor::matrix(b, batch.state_len, batch.states.clone())?;
    let (logits, tape) = head.net.forward(online, &input)?;
    let mut grad_logits = Tensor::zeros(alloc::vec![b, head.num_actions * atoms]);
    let mut per_sample = Vec::with_capacity(b);
    let mut batch_loss = 0.0;
    for i in 0..b {
        let next = head.distributions(next_logits.row(i));
        let values: Vec<f64> = next.iter().map(|p| head.expected(p)).collect();
        let target_probs =
            categorical_projection(&head.cfg, &next[argmax(&values)], batch.n_step_returns[i], batch.bootstrap_discounts[i])?;
        let a = batch.actions[i];
        let (loss, grad) = softmax_cross_entropy(&logits.row(i)[a * atoms..(a + 1) * atoms], &target_probs)?;
        per_sample.push(loss);
        batch_loss += weights[i] * loss / b as f64;
        let scale = weights[i] / b as f64;
        for (g, d) in grad_logits.row_mut(i)[a * atoms..(a + 1) * atoms].iter_mut().zip(grad) {
            *g = scale * d;
        }
    }
    let mut grads = online.zeros_like();
    head.net.backward(online, &tape, grad_logits, &mut grads, false)?;
    Ok(LossOutput { per_sample, batch_loss, grads })
}

/// C51 is the distributional agent with single-step returns and uniform
/// sampling; everything else runs the same code path.
pub fn c51_parametrize(rainbow: DqnConfig) -> DqnConfig {
    DqnConfig { update_horizon: 1, replay_scheme: ReplayScheme::Uniform, ..rainbow }
}

impl ValueHead for CategoricalHead {
    fn init_params(&self, rng: &mut Stream) -> Result<ParameterSet> {
        let mut params = ParameterSet::new(0);
        self.net.init(&mut params, rng)?;
        Ok(params)
    }

    /// Expected values Σ z_i p_i(a).
    fn action_values(&self, params: &ParameterSet, states: &[f64], _rng: &mut Stream) -> Result<Vec<f64>> {
        let logits = self.logits(params, states)?;
        let mut values = Vec::with_capacity(logits.rows() * self.num_actions);
        for r in 0..logits.rows() {
            values.extend(self.distributions(logits.row(r)).iter().map(|p| self.expected(p)));
        }
        Ok(values)
    }

    fn loss(
        &self,
        online: &ParameterSet,
        target: &ParameterSet,
        batch: &ReplayBatch,
        weights: &[f64],
        _rng: &mut Stream,
    ) -> Result<LossOutput> {
        rainbow_loss(self, online, target, batch, weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::testing::{random_batch, randomize_biases};
    use crate::net::finite_difference_check;

    fn cfg(n: usize, lo: f64, hi: f64) -> CategoricalConfig {
        CategoricalConfig { num_atoms: n, v_min: lo, v_max: hi }
    }

    fn random_probs(n: usize, rng: &mut Stream) -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|_| if rng.uniform() < 0.2 { 0.0 } else { rng.uniform() }).collect();
        let total: f64 = raw.iter().sum();
        if total == 0.0 {
            let mut v = alloc::vec![0.0; n];
            v[0] = 1.0;
            return v;
        }
        raw.iter().map(|p| p / total).collect()
    }

    /// Per-output-atom formula: m_i = Σ_j [1 − |T̂z_j − z_i| / Δz]₀¹ p_j.
    fn brute_force(c: &CategoricalConfig, probs: &[f64], r: f64, g: f64) -> Vec<f64> {
        let z = c.support();
        let dz = c.delta();
        z.iter()
            .map(|zi| {
                probs
                    .iter()
                    .zip(&z)
                    .map(|(p, zj)| {
                        let tz = (r + g * zj).max(c.v_min).min(c.v_max);
                        p * (1.0 - (tz - zi).abs() / dz).max(0.0).min(1.0)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn identity_when_support_unmoved() {
        let c = cfg(5, -2.0, 2.0);
        let p = [0.1, 0.2, 0.3, 0.25, 0.15];
        let out = categorical_projection(&c, &p, 0.0, 1.0).unwrap();
        for (a, b) in out.iter().zip(p) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn two_atom_split() {
        let out = categorical_projection(&cfg(2, 0.0, 1.0), &[0.5, 0.5], 0.5, 0.5).unwrap();
        assert!((out[0] - 0.25).abs() < 1e-15 && (out[1] - 0.75).abs() < 1e-15, "{out:?}");
    }

    #[test]
    fn clamps_beyond_support() {
        let c = cfg(5, -1.0, 1.0);
        let out = categorical_projection(&c, &[0.2; 5], 3.0, 0.99).unwrap();
        assert_eq!(out, alloc::vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        let out = categorical_projection(&c, &[0.2; 5], -3.0, 0.5).unwrap();
        assert_eq!(out, alloc::vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_unnormalized_and_degenerate_support() {
        let c = cfg(3, -1.0, 1.0);
        assert!(categorical_projection(&c, &[0.5, 0.5, 0.1], 0.0, 1.0).is_err());
        assert!(categorical_projection(&c, &[0.5, 0.5, 1e-10], 0.0, 1.0).is_ok());
        assert!(categorical_projection(&cfg(1, -1.0, 1.0), &[1.0], 0.0, 1.0).is_err());
        assert!(CategoricalHead::new(2, 2, 2, cfg(1, -1.0, 1.0)).is_err());
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = Stream::derive(7, "projection");
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let n = 2 + rng.below(6);
            let lo = rng.uniform() * 4.0 - 3.0;
            let c = cfg(n, lo, lo + 0.1 + rng.uniform() * 4.0);
            let p = random_probs(n, &mut rng);
            let r = rng.uniform() * 6.0 - 3.0;
            let g = if rng.uniform() < 0.1 { 0.0 } else { rng.uniform() };
            let out = categorical_projection(&c, &p, r, g).unwrap();
            let oracle = brute_force(&c, &p, r, g);
            for (a, b) in out.iter().zip(&oracle) {
                worst = worst.max((a - b).abs());
            }
            assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(worst < 1e-12, "max abs diff {worst}");
    }

    /// Reindexing atoms i ↦ N−1−i (mirroring the support and the reward)
    /// mirrors the projection.
    #[test]
    fn mirror_reindexing_commutes() {
        let mut rng = Stream::derive(8, "mirror");
        for _ in 0..200 {
            let n = 2 + rng.below(6);
            let c = cfg(n, -1.5, 2.0);
            let m = cfg(n, -2.0, 1.5);
            let p = random_probs(n, &mut rng);
            let r = rng.uniform() * 4.0 - 2.0;
            let g = rng.uniform();
            let out = categorical_projection(&c, &p, r, g).unwrap();
            let rev: Vec<f64> = p.iter().rev().cloned().collect();
            let mirrored = categorical_projection(&m, &rev, -r, g).unwrap();
            for (a, b) in out.iter().zip(mirrored.iter().rev()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    fn head() -> CategoricalHead {
        CategoricalHead::new(4, 5, 3, cfg(5, -1.0, 1.0)).unwrap()
    }

    /// Straight-line reimplementation: explicit loops, no shared helpers
    /// besides the network forward pass.
    fn oracle_loss(h: &CategoricalHead, online: &ParameterSet, target: &ParameterSet, batch: &ReplayBatch, w: &[f64]) -> (Vec<f64>, f64) {
        let (na, nz) = (3usize, 5usize);
        let z: Vec<f64> = (0..nz).map(|i| -1.0 + 0.5 * i as f64).collect();
        let mut per = Vec::new();
        let mut total = 0.0;
        for i in 0..batch.len() {
            let next = h.network().infer(target, &Tensor::matrix(1, 4, batch.next_state(i).to_vec()).unwrap()).unwrap();
            let cur = h.network().infer(online, &Tensor::matrix(1, 4, batch.state(i).to_vec()).unwrap()).unwrap();
            let mut best = (f64::NEG_INFINITY, 0usize, Vec::new());
            for a in 0..na {
                let l = &next.data()[a * nz..(a + 1) * nz];
                let mx = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = l.iter().map(|v| (v - mx).exp()).collect();
                let s: f64 = e.iter().sum();
                let p: Vec<f64> = e.iter().map(|v| v / s).collect();
                let q: f64 = p.iter().zip(&z).map(|(a, b)| a * b).sum();
                if q > best.0 {
                    best = (q, a, p);
                }
            }
            let mut m = alloc::vec![0.0; nz];
            for j in 0..nz {
                let tz = (batch.n_step_returns[i] + batch.bootstrap_discounts[i] * z[j]).max(-1.0).min(1.0);
                for k in 0..nz {
                    m[k] += best.2[j] * (1.0 - (tz - z[k]).abs() / 0.5).max(0.0);
                }
            }
            let a = batch.actions[i];
            let l = &cur.data()[a * nz..(a + 1) * nz];
            let mx = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + l.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            let ce: f64 = -(0..nz).map(|k| m[k] * (l[k] - lse)).sum::<f64>();
            per.push(ce);
            total += w[i] * ce;
        }
        (per, total / batch.len() as f64)
    }

    #[test]
    fn loss_matches_straight_line_oracle() {
        let h = head();
        for seed in 0..20 {
            let mut rng = Stream::derive(seed, "rainbow-oracle");
            let online = randomize_biases(h.init_params(&mut rng).unwrap(), &mut rng);
            let target = randomize_biases(h.init_params(&mut rng).unwrap(), &mut rng);
            let batch = random_batch(6, 4, 3, &mut rng);
            let w: Vec<f64> = (0..6).map(|_| rng.uniform()).collect();
            let out = rainbow_loss(&h, &online, &target, &batch, &w).unwrap();
            let (per, total) = oracle_loss(&h, &online, &target, &batch, &w);
            for (a, b) in out.per_sample.iter().zip(&per) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
            assert!((out.batch_loss - total).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_at_target_equals_its_entropy() {
        // A single-layer-output network whose logits equal log target: the
        // cross-entropy is then the entropy of the target.
        let target = [0.1, 0.2, 0.3, 0.4];
        let logits: Vec<f64> = target.iter().map(|p: &f64| p.ln()).collect();
        let (ce, grad) = softmax_cross_entropy(&logits, &target).unwrap();
        let entropy: f64 = -target.iter().map(|p| p * p.ln()).sum::<f64>();
        assert!((ce - entropy).abs() < 1e-12);
        assert!(grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = head();
        for seed in 0..20 {
            let mut rng = Stream::derive(seed, "rainbow-grad");
            let online = randomize_biases(h.init_params(&mut rng).unwrap(), &mut rng);
            let target = randomize_biases(h.init_params(&mut rng).unwrap(), &mut rng);
            let batch = random_batch(5, 4, 3, &mut rng);
            let w: Vec<f64> = (0..5).map(|_| 0.2 + rng.uniform()).collect();
            let out = rainbow_loss(&h, &online, &target, &batch, &w).unwrap();
            let report = finite_difference_check(&online, &out.grads, 1e-6, |p| {
                rainbow_loss(&h, p, &target, &batch, &w).unwrap().batch_loss
            });
            assert!(report.relative_error < 1e-5, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn all_mass_on_one_atom_selects_that_action() {
        // Output bias puts (near) all mass of action 2 on the top atom and of
        // the others on the bottom atom.
        let h = CategoricalHead::new(2, 3, 3, cfg(3, -1.0, 1.0)).unwrap();
        let mut rng = Stream::derive(3, "init");
        let mut p = h.init_params(&mut rng).unwrap();
        p.get_mut("out.weight").unwrap().fill(0.0);
        let bias = p.get_mut("out.bias").unwrap().data_mut();
        bias.copy_from_slice(&[50.0, 0.0, 0.0, 50.0, 0.0, 0.0, 0.0, 0.0, 50.0]);
        let values = h.action_values(&p, &[0.3, 0.7], &mut rng).unwrap();
        assert_eq!(argmax(&values), 2);
        assert!((values[2] - 1.0).abs() < 1e-12 && (values[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn c51_is_single_step_uniform() {
        let rainbow = DqnConfig { update_horizon: 3, replay_scheme: ReplayScheme::Prioritized, ..DqnConfig::default() };
        let c51 = c51_parametrize(rainbow);
        assert_eq!(c51.update_horizon, 1);
        assert_eq!(c51.replay_scheme, ReplayScheme::Uniform);
        assert_eq!(DqnConfig { update_horizon: 3, replay_scheme: ReplayScheme::Prioritized, ..c51 }, rainbow);
    }
}
