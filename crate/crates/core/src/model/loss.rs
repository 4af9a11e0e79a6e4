//! Training objective: KL divergence plus negated Pearson correlation, each
//! averaged over the batch.
//!
//! Both terms take `target` and `pred` of identical shape `[N, ...]`; every
//! leading index is one map. The KL term normalizes both maps to unit mass.

use crate::error::{Error, Result};
use crate::metrics::{kl_divergence_values, pearson_values, KL_EPSILON};
use crate::tensor::{Function, Real, Tensor, Var};

fn batch_layout<R: Real>(op: &'static str, target: &Tensor<R>, pred: &Var<R>) -> Result<(usize, usize)> {
    if target.shape() != pred.shape() {
        return Err(Error::shape(op, format!("target {:?} vs prediction {:?}", target.shape(), pred.shape())));
    }
    if target.rank() < 2 {
        return Err(Error::shape(op, format!("expected [N, ...] maps, got {:?}", target.shape())));
    }
    let n = target.shape()[0];
    Ok((n, target.len() / n))
}

fn to_f64<R: Real>(v: &[R]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64()).collect()
}

/// Mean-over-batch scalar whose gradient was computed eagerly.
struct BatchLossFn<R: Real> {
    name: &'static str,
    input: [Var<R>; 1],
    /// d(loss)/d(pred), already divided by the batch size.
    grad: Vec<f64>,
}

impl<R: Real> Function<R> for BatchLossFn<R> {
    fn name(&self) -> &'static str {
        self.name
    }
    fn inputs(&self) -> &[Var<R>] {
        &self.input
    }
    fn backward(&self, _: &Tensor<R>, grad: &[R], _: &[bool]) -> Vec<Option<Vec<R>>> {
        let g = grad[0].to_f64();
        vec![Some(self.grad.iter().map(|&d| R::from_f64(g * d)).collect())]
    }
}

fn batch_loss<R: Real>(
    name: &'static str,
    target: &Tensor<R>,
    pred: &Var<R>,
    per_map: impl Fn(&[f64], &[f64]) -> Result<(f64, Vec<f64>)>,
) -> Result<Var<R>> {
    let (n, m) = batch_layout(name, target, pred)?;
    let (y, yhat) = (to_f64(target.data()), to_f64(pred.data()));
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(n * m);
    for k in 0..n {
        let (value, g) = per_map(&y[k * m..(k + 1) * m], &yhat[k * m..(k + 1) * m])?;
        total += value;
        grad.extend(g.into_iter().map(|d| d / n as f64));
    }
    let value = Tensor::scalar(R::from_f64(total / n as f64));
    Ok(Var::from_op(value, Box::new(BatchLossFn { name, input: [pred.clone()], grad })))
}

/// KL divergence of the unit-mass prediction from the unit-mass target.
pub fn kl_loss<R: Real>(target: &Tensor<R>, pred: &Var<R>) -> Result<Var<R>> {
    batch_loss("kl_loss", target, pred, |y, yhat| {
        let value = kl_divergence_values(y, yhat)?;
        let (sy, s): (f64, f64) = (y.iter().sum(), yhat.iter().sum());
        let eps = KL_EPSILON;
        let q: Vec<f64> = yhat.iter().map(|v| v / s).collect();
        let dq: Vec<f64> = y
            .iter()
            .zip(&q)
            .map(|(&yi, &qi)| {
                let p = yi / sy;
                -p * p / ((eps + qi) * (eps * (eps + qi) + p))
            })
            .collect();
        let weighted: f64 = dq.iter().zip(&q).map(|(g, q)| g * q).sum();
        Ok((value, dq.iter().map(|g| (g - weighted) / s).collect()))
    })
}

/// Negated Pearson correlation between target and prediction.
pub fn cc_loss<R: Real>(target: &Tensor<R>, pred: &Var<R>) -> Result<Var<R>> {
    batch_loss("cc_loss", target, pred, |y, yhat| {
        let r = pearson_values(y, yhat)?;
        let centred = |v: &[f64]| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| x - mean).collect::<Vec<f64>>()
        };
        let (a, b) = (centred(yhat), centred(y));
        let aa: f64 = a.iter().map(|x| x * x).sum();
        let bb: f64 = b.iter().map(|x| x * x).sum();
        let norm = (aa * bb).sqrt();
        Ok((-r, a.iter().zip(&b).map(|(ai, bi)| -(bi / norm - r * ai / aa)).collect()))
    })
}

/// Loss value with its two components.
#[derive(Clone, Debug)]
pub struct LossTerms<R: Real> {
    pub total: Var<R>,
    pub kl: f64,
    pub cc: f64,
}

pub fn total_loss<R: Real>(target: &Tensor<R>, pred: &Var<R>) -> Result<LossTerms<R>> {
    let kl = kl_loss(target, pred)?;
    let cc = cc_loss(target, pred)?;
    let (kl_value, cc_value) = (kl.value().item()?.to_f64(), cc.value().item()?.to_f64());
    Ok(LossTerms { total: kl.add(&cc)?, kl: kl_value, cc: cc_value })
}
