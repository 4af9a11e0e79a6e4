//! Per-channel batch normalization over `[N, C, ...]` tensors.

use super::autograd::{Function, Var};
use super::{Real, Tensor};
use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchNormMode {
    /// Normalize with the statistics of the current batch.
    Train,
    /// Normalize with the running statistics.
    Eval,
}

/// Running per-channel mean and variance.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<R> {
    pub mean: Vec<R>,
    pub var: Vec<R>,
}

/// Statistics of one training batch, used to update [`RunningStats`].
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<R> {
    pub mean: Vec<R>,
    /// Biased (population) variance.
    pub var: Vec<R>,
    /// Elements per channel.
    pub count: usize,
}

impl<R: Real> RunningStats<R> {
    /// Mean 0, variance 1.
    pub fn new(channels: usize) -> Self {
        RunningStats { mean: vec![R::ZERO; channels], var: vec![R::ONE; channels] }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Exponential moving average with momentum [`BN_MOMENTUM`]; the variance
    /// enters in its unbiased form.
    pub fn update(&mut self, batch: &BatchStats<R>) {
        let m = R::from_f64(BN_MOMENTUM);
        let keep = R::ONE - m;
        let correction = R::from_usize(batch.count) / R::from_usize(batch.count - 1);
        for c in 0..self.mean.len() {
            self.mean[c] = keep * self.mean[c] + m * batch.mean[c];
            self.var[c] = keep * self.var[c] + m * batch.var[c] * correction;
        }
    }
}

struct BatchNormFn<R: Real> {
    inputs: [Var<R>; 3],
    normalized: Vec<R>,
    inv_std: Vec<R>,
    channels: usize,
    spatial: usize,
    mode: BatchNormMode,
}

impl<R: Real> Function<R> for BatchNormFn<R> {
    fn name(&self) -> &'static str {
        "batch_norm"
    }
    fn inputs(&self) -> &[Var<R>] {
        &self.inputs
    }
    fn backward(&self, _: &Tensor<R>, grad: &[R], needs: &[bool]) -> Vec<Option<Vec<R>>> {
        let (c_n, s) = (self.channels, self.spatial);
        let batch = grad.len() / (c_n * s);
        let gamma = self.inputs[1].data();
        let mut sum_g = vec![R::ZERO; c_n];
        let mut sum_gx = vec![R::ZERO; c_n];
        for n in 0..batch {
            for c in 0..c_n {
                let base = (n * c_n + c) * s;
                for i in base..base + s {
                    sum_g[c] += grad[i];
                    sum_gx[c] += grad[i] * self.normalized[i];
                }
            }
        }
        let grad_x = needs[0].then(|| {
            let mut gx = vec![R::ZERO; grad.len()];
            let count = R::from_usize(batch * s);
            for n in 0..batch {
                for c in 0..c_n {
                    let base = (n * c_n + c) * s;
                    let scale = gamma[c] * self.inv_std[c];
                    for i in base..base + s {
                        gx[i] = match self.mode {
                            BatchNormMode::Eval => grad[i] * scale,
                            BatchNormMode::Train => {
                                scale / count * (count * grad[i] - sum_g[c] - self.normalized[i] * sum_gx[c])
                            }
                        };
                    }
                }
            }
            gx
        });
        vec![grad_x, needs[1].then_some(sum_gx), needs[2].then_some(sum_g)]
    }
}

impl<R: Real> Var<R> {
    /// Normalizes each channel of a `[N, C, ...]` tensor, then applies the
    /// affine `gamma * x + beta`.
    ///
    /// In train mode the batch statistics are returned so the caller can fold
    /// them into its running statistics; `stats` is never modified here.
    pub fn batch_norm(
        &self,
        gamma: &Var<R>,
        beta: &Var<R>,
        stats: &RunningStats<R>,
        mode: BatchNormMode,
    ) -> Result<(Var<R>, Option<BatchStats<R>>)> {
        let shape = self.shape();
        if shape.len() < 2 {
            return Err(Error::shape("batch_norm", format!("expected [N,C,...], got {shape:?}")));
        }
        let (batch, c_n) = (shape[0], shape[1]);
        let spatial: usize = shape[2..].iter().product();
        for (what, s) in [("gamma", gamma.shape()), ("beta", beta.shape())] {
            if s != [c_n] {
                return Err(Error::shape("batch_norm", format!("{what} shape {s:?} does not match {c_n} channels")));
            }
        }
        if stats.channels() != c_n {
            return Err(Error::shape(
                "batch_norm",
                format!("running statistics have {} channels, input has {c_n}", stats.channels()),
            ));
        }
        let count = batch * spatial;
        let x = self.data();
        let channel_iter = |c: usize| {
            (0..batch).flat_map(move |n| {
                let base = (n * c_n + c) * spatial;
                base..base + spatial
            })
        };
        let (mean, var, batch_stats) = match mode {
            BatchNormMode::Train => {
                if count < 2 {
                    return Err(Error::degenerate(
                        "batch_norm",
                        "train mode needs more than one element per channel",
                    ));
                }
                let denom = R::from_usize(count);
                let mean: Vec<R> = (0..c_n).map(|c| channel_iter(c).map(|i| x[i]).sum::<R>() / denom).collect();
                let var: Vec<R> = (0..c_n)
                    .map(|c| {
                        channel_iter(c)
                            .map(|i| {
                                let d = x[i] - mean[c];
                                d * d
                            })
                            .sum::<R>()
                            / denom
                    })
                    .collect();
                let bs = BatchStats { mean: mean.clone(), var: var.clone(), count };
                (mean, var, Some(bs))
            }
            BatchNormMode::Eval => (stats.mean.clone(), stats.var.clone(), None),
        };
        let eps = R::from_f64(BN_EPSILON);
        let inv_std: Vec<R> = var.iter().map(|&v| R::ONE / (v + eps).sqrt()).collect();
        let (g, b) = (gamma.data(), beta.data());
        let mut normalized = vec![R::ZERO; x.len()];
        let mut out = vec![R::ZERO; x.len()];
        for n in 0..batch {
            for c in 0..c_n {
                let base = (n * c_n + c) * spatial;
                for i in base..base + spatial {
                    normalized[i] = (x[i] - mean[c]) * inv_std[c];
                    out[i] = g[c] * normalized[i] + b[c];
                }
            }
        }
        let value = Tensor::from_vec(shape.to_vec(), out)?;
        let f = BatchNormFn {
            inputs: [self.clone(), gamma.clone(), beta.clone()],
            normalized,
            inv_std,
            channels: c_n,
            spatial,
            mode,
        };
        Ok((Var::from_op(value, Box::new(f)), batch_stats))
    }
}
