use alloc::vec::Vec;

use super::{argmax, body_layers, LossOutput, ValueHead};
use crate::net::{huber_grad, huber_loss, Activation, Dense, Mlp, ParameterSet, Tensor};
use crate::replay::ReplayBatch;
use crate::rng::Stream;
use crate::Result;

/// Huber threshold of the TD loss.
const TD_KAPPA: f64 = 1.0;

/// Scalar Q-value network: `fc1 → fc2 → out[num_actions]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DqnHead {
    net: Mlp,
}

impl DqnHead {
    pub fn new(input_dim: usize, hidden: usize, num_actions: usize) -> Result<Self> {
        let mut layers = body_layers(input_dim, hidden);
        layers.push(Dense::new("out", hidden, num_actions, Activation::Identity));
        Ok(Self { net: Mlp::new(layers)? })
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn num_actions(&self) -> usize {
        self.net.output_dim()
    }

    fn q_values(&self, params: &ParameterSet, states: &[f64]) -> Result<Tensor> {
        let rows = states.len() / self.net.input_dim();
        self.net.infer(params, &Tensor::matrix(rows, self.net.input_dim(), states.to_vec())?)
    }
}

/// y = R_n + γ^m (1 − terminal) max_a Q_target(s′, a). Targets are constants.
pub fn dqn_target(head: &DqnHead, batch: &ReplayBatch, target: &ParameterSet) -> Result<Vec<f64>> {
    let q_next = head.q_values(target, &batch.next_states)?;
    Ok((0..batch.len())
        .map(|i| {
            let discount = batch.bootstrap_discounts[i];
            if discount == 0.0 {
                return batch.n_step_returns[i];
            }
            let row = q_next.row(i);
            batch.n_step_returns[i] + discount * row[argmax(row)]
        })
        .collect())
}

/// Huber TD loss at the taken action, importance weighted and batch averaged.
pub fn dqn_loss(
    head: &DqnHead,
    online: &ParameterSet,
    target: &ParameterSet,
    batch: &ReplayBatch,
    weights: &[f64],
) -> Result<LossOutput> {
    check_weights(batch, weights)?;
    let targets = dqn_target(head, batch, target)?;
    let b = batch.len();
    let input = Tensor::matrix(b, batch.state_len, batch.states.clone())?;
    let (q, tape) = head.net.forward(online, &input)?;
    let a = head.num_actions();
    let mut per_sample = Vec::with_capacity(b);
    let mut grad_q = Tensor::zeros(alloc::vec![b, a]);
    let mut batch_loss = 0.0;
    for i in 0..b {
        let action = batch.actions[i];
        let u = targets[i] - q.row(i)[action];
        let loss = huber_loss(u, TD_KAPPA);
        per_sample.push(loss);
        batch_loss += weights[i] * loss / b as f64;
        grad_q.row_mut(i)[action] = -weights[i] * huber_grad(u, TD_KAPPA) / b as f64;
    }
    let mut grads = online.zeros_like();
    head.net.backward(online, &tape, grad_q, &mut grads, false)?;
    Ok(LossOutput { per_sample, batch_loss, grads })
}

pub(crate) fn check_weights(batch: &ReplayBatch, weights: &[f64]) -> Result<()> {
    if weights.len() != batch.len() || batch.is_empty() {
        return Err(crate::error::contract(alloc::format!(
            "{} importance weights for a batch of {}",
            weights.len(),
            batch.len()
        )));
    }
    Ok(())
}

impl ValueHead for DqnHead {
    fn init_params(&self, rng: &mut Stream) -> Result<ParameterSet> {
        let mut params = ParameterSet::new(0);
        self.net.init(&mut params, rng)?;
        Ok(params)
    }

    fn action_values(&self, params: &ParameterSet, states: &[f64], _rng: &mut Stream) -> Result<Vec<f64>> {
        Ok(self.q_values(params, states)?.into_data())
    }

    fn loss(
        &self,
        online: &ParameterSet,
        target: &ParameterSet,
        batch: &ReplayBatch,
        weights: &[f64],
        _rng: &mut Stream,
    ) -> Result<LossOutput> {
        dqn_loss(self, online, target, batch, weights)
    }
}
