//! Adam with bias correction, one moment pair per named parameter.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::Module;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug)]
struct Moments<R> {
    first: Vec<R>,
    second: Vec<R>,
}

#[derive(Clone, Debug)]
pub struct Adam<R> {
    cfg: AdamConfig,
    step: u64,
    moments: BTreeMap<String, Moments<R>>,
}

impl<R: Real> Adam<R> {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam { cfg, step: 0, moments: BTreeMap::new() }
    }

    /// Completed steps.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// First and second moments of `name`, if it has been updated.
    pub fn moments(&self, name: &str) -> Option<(&[R], &[R])> {
        self.moments.get(name).map(|m| (m.first.as_slice(), m.second.as_slice()))
    }

    /// One update of every trainable parameter of `module`. Fails before
    /// touching anything if a gradient is missing or misshapen.
    pub fn step(&mut self, module: &mut impl Module<R>, grads: &BTreeMap<String, Tensor<R>>) -> Result<()> {
        let mut params: Vec<_> = module.params_mut().into_iter().filter(|p| p.trainable()).collect();
        for p in &params {
            let g = grads
                .get(p.name())
                .ok_or_else(|| Error::invalid("adam", format!("no gradient for {}", p.name())))?;
            if g.shape() != p.value.shape() {
                return Err(Error::shape(
                    "adam",
                    format!("{}: gradient {:?} vs parameter {:?}", p.name(), g.shape(), p.value.shape()),
                ));
            }
            if let Some(m) = self.moments.get(p.name()) {
                if m.first.len() != p.value.len() {
                    return Err(Error::shape("adam", format!("{}: moment size changed", p.name())));
                }
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c = self.cfg;
        let (b1, b2) = (R::from_f64(c.beta1), R::from_f64(c.beta2));
        let correction1 = R::from_f64(1.0 - c.beta1.powi(t));
        let correction2 = R::from_f64(1.0 - c.beta2.powi(t));
        let (lr, eps) = (R::from_f64(c.learning_rate), R::from_f64(c.eps));
        for p in params.iter_mut() {
            let g = &grads[p.name()];
            let n = p.value.len();
            let m = self
                .moments
                .entry(p.name().to_string())
                .or_insert_with(|| Moments { first: vec![R::ZERO; n], second: vec![R::ZERO; n] });
            for (((w, &g), m1), m2) in
                p.value.data_mut().iter_mut().zip(g.data()).zip(&mut m.first).zip(&mut m.second)
            {
                *m1 = b1 * *m1 + (R::ONE - b1) * g;
                *m2 = b2 * *m2 + (R::ONE - b2) * g * g;
                let mhat = *m1 / correction1;
                let vhat = *m2 / correction2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
