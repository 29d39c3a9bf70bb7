//! Adam and the denoising training loop.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::Mode;
use super::{Gradients, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Validation("epochs and batch_size must be at least 1".into()));
        }
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(self.beta1) || !open(self.beta2) {
            return Err(Error::Validation("Adam betas must lie in (0, 1)".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || !(self.epsilon > 0.0) {
            return Err(Error::Validation("learning rate and epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        let zeros: Vec<Vec<f64>> = net.params().iter().map(|p| vec![0.0; p.len()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

pub fn adam_step(net: &mut Network, grads: &Gradients, state: &mut AdamState, config: &TrainConfig) -> Result<()> {
    let shapes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
    let matches =
        |blocks: &[Vec<f64>]| blocks.len() == shapes.len() && blocks.iter().zip(&shapes).all(|(b, n)| b.len() == *n);
    if !matches(&grads.blocks) || !matches(&state.m) || !matches(&state.v) {
        return Err(Error::shape(
            "gradient blocks matching the parameters",
            "different block shapes",
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for (((p, g), m), v) in net
        .params_mut()
        .into_iter()
        .zip(&grads.blocks)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for i in 0..p.len() {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}

/// Mean over all elements, and its gradient with respect to `pred`.
pub fn mse_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    if pred.dim() != target.dim() {
        return Err(Error::shape(format!("{:?}", target.dim()), format!("{:?}", pred.dim())));
    }
    let n = pred.len().max(1) as f64;
    let diff = &pred - &target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff * (2.0 / n)))
}

fn eval_loss(net: &Network, inputs: ArrayView2<f64>, targets: ArrayView2<f64>, batch: usize) -> Result<f64> {
    let mut total = 0.0;
    for start in (0..inputs.nrows()).step_by(batch) {
        let end = (start + batch).min(inputs.nrows());
        let pred = net.reconstruct(inputs.slice(ndarray::s![start..end, ..]))?;
        let (loss, _) = mse_loss(pred.view(), targets.slice(ndarray::s![start..end, ..]))?;
        total += loss * (end - start) as f64;
    }
    Ok(total / inputs.nrows().max(1) as f64)
}

/// Minimizes MSE(net(noisy), clean) with Adam over shuffled mini-batches.
/// The final partial batch is kept. Validation loss is measured in eval
/// mode after each epoch; the last epoch's parameters are kept.
pub fn train_denoising(
    net: &mut Network,
    train: (ArrayView2<f64>, ArrayView2<f64>),
    val: (ArrayView2<f64>, ArrayView2<f64>),
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    let (x, y) = train;
    let (vx, vy) = val;
    if x.dim() != y.dim() || vx.dim() != vy.dim() {
        return Err(Error::shape("matching noisy/clean shapes", "different shapes"));
    }
    if x.nrows() == 0 {
        return Err(Error::EmptySplit("train"));
    }
    let mut state = AdamState::new(net);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            let bx = x.select(Axis(0), idx);
            let by = y.select(Axis(0), idx);
            let (pred, cache) = net.forward(bx.view(), Mode::Train).map_err(|e| match e {
                Error::NonFiniteActivation { .. } => Error::Diverged {
                    epoch,
                    batch: bi,
                    loss: f64::NAN,
                },
                e => e,
            })?;
            let (loss, grad) = mse_loss(pred.view(), by.view())?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: bi, loss });
            }
            let grads = net.backward(&cache, grad.view())?;
            adam_step(net, &grads, &mut state, config)?;
            sum += loss * idx.len() as f64;
        }
        history.train_loss.push(sum / x.nrows() as f64);
        let vloss = if vx.nrows() > 0 {
            eval_loss(net, vx, vy, config.batch_size.max(256))?
        } else {
            f64::NAN
        };
        history.val_loss.push(vloss);
        log::debug!("epoch {epoch}: train {:.6e} val {:.6e}", sum / x.nrows() as f64, vloss);
    }
    Ok(history)
}
