use super::{max_next_q, pairwise_rows, QNet, QNetMode, Transition};
use crate::numkit::{GradCheck, GradCheckReport, Mat};
use crate::{Error, Result};

/// `y = r + gamma * max Q(s', a')` per sample, with the max term dropped at
/// terminals. `net` is the network used for the bootstrap.
pub fn bellman_targets(net: &QNet, batch: &[&Transition], gamma: f64) -> Result<Vec<f64>> {
    batch
        .iter()
        .map(|t| Ok(t.reward + gamma * max_next_q(net, t)?))
        .collect()
}

/// Input rows and, for vanilla networks, the output column of each sample.
fn batch_inputs(net: &QNet, batch: &[&Transition]) -> Result<(Mat, Vec<usize>)> {
    let mode = net.mode();
    let mut x = Mat::zeros(batch.len(), mode.input_dim());
    let mut cols = Vec::with_capacity(batch.len());
    for (i, t) in batch.iter().enumerate() {
        if t.state.len() != mode.state_dim() {
            return Err(Error::Dimension {
                op: "train batch state",
                left: (1, t.state.len()),
                right: (1, mode.state_dim()),
            });
        }
        match mode {
            QNetMode::Pairwise { .. } => {
                let a = t
                    .action_vec
                    .as_ref()
                    .ok_or_else(|| Error::ActionSpace("pairwise transition lacks an action embedding".into()))?;
                let row = pairwise_rows(&t.state, &Mat::row_vector(a));
                if row.cols() != x.cols() {
                    return Err(Error::Dimension {
                        op: "train batch action",
                        left: row.shape(),
                        right: (1, x.cols()),
                    });
                }
                x.row_mut(i).copy_from_slice(row.row(0));
                cols.push(0);
            }
            QNetMode::Vanilla { actions, .. } => {
                if t.action >= actions {
                    return Err(Error::ActionSpace(format!(
                        "action {} outside a space of {actions}",
                        t.action
                    )));
                }
                x.row_mut(i).copy_from_slice(&t.state);
                cols.push(t.action);
            }
        }
    }
    Ok((x, cols))
}

/// Mean squared Bellman error against fixed targets.
pub fn loss_given_targets(net: &QNet, batch: &[&Transition], targets: &[f64]) -> Result<f64> {
    let (x, cols) = batch_inputs(net, batch)?;
    let out = net.predict(&x)?;
    let n = batch.len() as f64;
    Ok(cols
        .iter()
        .enumerate()
        .map(|(i, &c)| (targets[i] - out.get(i, c)).powi(2))
        .sum::<f64>()
        / n)
}

/// Accumulates gradients of the loss against fixed targets. Returns the loss
/// and `dL/ds` summed over the batch.
pub(crate) fn accumulate(net: &mut QNet, batch: &[&Transition], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (x, cols) = batch_inputs(net, batch)?;
    let (out, trace) = net.forward(&x)?;
    let n = batch.len() as f64;
    let mut d_out = Mat::zeros(out.rows(), out.cols());
    let mut loss = 0.0;
    for (i, &c) in cols.iter().enumerate() {
        let diff = out.get(i, c) - targets[i];
        loss += diff * diff / n;
        d_out.set(i, c, 2.0 * diff / n);
    }
    let dx = net.backward(&trace, &d_out)?;
    let sd = net.mode().state_dim();
    let mut ds = vec![0.0; sd];
    for r in 0..dx.rows() {
        ds.iter_mut().zip(&dx.row(r)[..sd]).for_each(|(a, g)| *a += g);
    }
    Ok((loss, ds))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    /// Gradient of the loss with respect to the state input, summed over the batch.
    pub state_grad: Vec<f64>,
}

/// One SGD step on the mean squared Bellman error. Targets come from
/// `target` when given, else from `net` before the update.
pub fn train_step(
    net: &mut QNet,
    target: Option<&QNet>,
    batch: &[&Transition],
    gamma: f64,
    lr: f64,
) -> Result<StepOutcome> {
    if batch.is_empty() {
        return Err(Error::Training {
            location: "q-network step".into(),
            detail: "empty batch".into(),
        });
    }
    let targets = bellman_targets(target.unwrap_or(net), batch, gamma)?;
    net.store_mut().zero_grads();
    let (loss, state_grad) = accumulate(net, batch, &targets)?;
    if !loss.is_finite() {
        net.store_mut().zero_grads();
        return Err(Error::training("q-network step", format!("non-finite loss {loss}")));
    }
    net.store_mut().sgd_step(lr)?;
    Ok(StepOutcome { loss, state_grad })
}

/// Compares the Bellman-loss gradient for every layer with central
/// differences. Targets are held fixed at their value under `net`.
pub fn check_bellman_gradients(
    net: &QNet,
    batch: &[&Transition],
    gamma: f64,
    check: &GradCheck,
) -> Result<GradCheckReport> {
    let targets = bellman_targets(net, batch, gamma)?;
    let mut n = net.clone();
    n.store_mut().zero_grads();
    accumulate(&mut n, batch, &targets)?;
    let mut store = n.store().clone();
    Ok(check.run(&mut store, |s| {
        let mut p = net.clone();
        p.replace_store(s.clone());
        loss_given_targets(&p, batch, &targets).unwrap_or(f64::NAN)
    }))
}
