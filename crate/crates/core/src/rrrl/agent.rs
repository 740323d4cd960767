use super::network::{argmax, Adam, QNetwork};
use super::replay::Transition;
use crate::error::RlError;

#[derive(Debug, Clone, PartialEq)]
pub struct TdOutcome {
    /// Weighted squared TD loss before the update.
    pub loss: f64,
    /// `|td| + 1e-3` per sample, for the replay memory.
    pub priorities: Vec<f64>,
}

/// Double-DQN targets: the online net picks the next action, the target net
/// values it.
pub fn td_targets(
    net: &QNetwork,
    target: &QNetwork,
    batch: &[Transition],
    discount: f64,
) -> Result<Vec<f64>, RlError> {
    batch
        .iter()
        .map(|t| {
            if t.terminal {
                return Ok(t.r);
            }
            let a_next = argmax(&net.forward(&t.s_next)?);
            Ok(t.r + discount * target.forward(&t.s_next)?[a_next])
        })
        .collect()
}

/// One importance-weighted gradient step on `0.5 * mean(w * td^2)`.
pub fn td_update(
    net: &mut QNetwork,
    target: &QNetwork,
    batch: &[Transition],
    weights: &[f64],
    discount: f64,
    opt: &mut Adam,
) -> Result<TdOutcome, RlError> {
    let y = td_targets(net, target, batch, discount)?;
    let n = batch.len() as f64;
    let mut grads = QNetwork::zeros(&net.layer_sizes);
    let mut loss = 0.0;
    let mut max_td: f64 = 0.0;
    let mut max_q: f64 = 0.0;
    let mut priorities = Vec::with_capacity(batch.len());
    for ((t, y), w) in batch.iter().zip(&y).zip(weights) {
        if t.a >= net.output_size() {
            return Err(RlError::ActionOutOfRange {
                index: t.a,
                size: net.output_size(),
            });
        }
        let cache = net.forward_cached(&t.s)?;
        let q = cache.output()[t.a];
        let td = y - q;
        loss += 0.5 * w * td * td / n;
        max_td = max_td.max(td.abs());
        max_q = max_q.max(q.abs());
        priorities.push(td.abs() + 1e-3);
        let mut d_out = vec![0.0; net.output_size()];
        d_out[t.a] = -w * td / n;
        net.backward(&cache, &d_out, &mut grads);
    }
    if !loss.is_finite() || !grads.is_finite() {
        return Err(RlError::NonFiniteLoss { loss, max_td, max_q });
    }
    opt.step(net, &grads);
    Ok(TdOutcome { loss, priorities })
}
