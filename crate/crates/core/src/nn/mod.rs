//! Parameterized layers: 3D encoder path, convolutional LSTM cell, decoder,
//! plus parameter binding and the binary checkpoint format.

pub mod checkpoint;
mod convlstm;
mod decoder;
mod layers;
mod m3de;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use convlstm::{ConvLstmCell, GateValues, LstmState};
pub use decoder::Decoder;
pub use layers::{BatchNorm, Conv2d, Conv3d};
pub use m3de::{EncoderPath, STAGE_COUNT};

use crate::error::{Error, Result};
use crate::tensor::{BatchNormMode, BatchStats, Real, Tensor, Var};

/// A named parameter tensor. Non-trainable entries (running statistics) are
/// checkpointed but never receive gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<R> {
    name: String,
    pub value: Tensor<R>,
    trainable: bool,
}

impl<R: Real> Param<R> {
    pub fn new(name: impl Into<String>, value: Tensor<R>, trainable: bool) -> Self {
        Param { name: name.into(), value, trainable }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }
}

/// Anything that owns parameters.
pub trait Module<R: Real> {
    fn params(&self) -> Vec<&Param<R>>;
    fn params_mut(&mut self) -> Vec<&mut Param<R>>;

    fn num_trainable(&self) -> usize {
        self.params().iter().filter(|p| p.trainable()).map(|p| p.value.len()).sum()
    }
}

/// Seeded weight initializer: uniform in `±1/sqrt(fan_in)`.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Init { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Fan-in is the product of every extent after the first.
    pub fn fan_in_uniform<R: Real>(&mut self, shape: &[usize]) -> Tensor<R> {
        let fan_in: usize = shape[1..].iter().product();
        let bound = 1.0 / (fan_in as f64).sqrt();
        let rng = &mut self.rng;
        Tensor::from_fn(shape.to_vec(), |_| R::from_f64(rng.gen_range(-bound..bound))).expect("positive extents")
    }
}

/// State of one forward pass: parameter bindings, normalization mode and the
/// batch statistics observed along the way.
pub struct ForwardCtx<R: Real> {
    mode: BatchNormMode,
    record: bool,
    bound: BTreeMap<String, Var<R>>,
    batch_stats: Vec<(String, BatchStats<R>)>,
}

impl<R: Real> ForwardCtx<R> {
    /// `record` makes trainable parameters gradient-tracking leaves.
    pub fn new(mode: BatchNormMode, record: bool) -> Self {
        ForwardCtx { mode, record, bound: BTreeMap::new(), batch_stats: Vec::new() }
    }

    pub fn train() -> Self {
        Self::new(BatchNormMode::Train, true)
    }

    /// Inference: running statistics, nothing recorded.
    pub fn eval() -> Self {
        Self::new(BatchNormMode::Eval, false)
    }

    /// Uses `var` wherever the parameter called `name` is requested.
    pub fn with_binding(mut self, name: impl Into<String>, var: Var<R>) -> Self {
        self.bound.insert(name.into(), var);
        self
    }

    pub fn mode(&self) -> BatchNormMode {
        self.mode
    }

    /// The graph value for `param`; repeated requests share one leaf so that
    /// gradients from every use accumulate.
    pub fn bind(&mut self, param: &Param<R>) -> Var<R> {
        let record = self.record;
        self.bound
            .entry(param.name.clone())
            .or_insert_with(|| Var::leaf(param.value.clone(), record && param.trainable))
            .clone()
    }

    pub(crate) fn push_batch_stats(&mut self, layer: &str, stats: BatchStats<R>) {
        self.batch_stats.push((layer.to_string(), stats));
    }

    pub fn batch_stats(&self) -> &[(String, BatchStats<R>)] {
        &self.batch_stats
    }

    /// Gradients of every trainable parameter of `module`, keyed by name.
    pub fn gradients(&self, module: &impl Module<R>) -> Result<BTreeMap<String, Tensor<R>>> {
        let mut out = BTreeMap::new();
        for p in module.params().into_iter().filter(|p| p.trainable) {
            let grad = self.bound.get(&p.name).and_then(Var::grad).ok_or_else(|| {
                Error::Backward(format!("parameter {} received no gradient", p.name))
            })?;
            out.insert(p.name.clone(), grad);
        }
        Ok(out)
    }
}

/// Folds the batch statistics of a training pass into the running statistics.
pub fn apply_batch_stats<R: Real>(module: &mut impl Module<R>, stats: &[(String, BatchStats<R>)]) -> Result<()> {
    let mut by_name: BTreeMap<String, &mut Param<R>> =
        module.params_mut().into_iter().map(|p| (p.name.clone(), p)).collect();
    for (layer, bs) in stats {
        let mut running = crate::tensor::RunningStats::new(bs.mean.len());
        for (suffix, slot) in [("running_mean", 0), ("running_var", 1)] {
            let p = by_name
                .get(format!("{layer}.{suffix}").as_str())
                .ok_or_else(|| Error::invalid("apply_batch_stats", format!("unknown normalization layer {layer}")))?;
            let target = if slot == 0 { &mut running.mean } else { &mut running.var };
            target.copy_from_slice(p.value.data());
        }
        running.update(bs);
        for (suffix, values) in [("running_mean", running.mean), ("running_var", running.var)] {
            let p = by_name.get_mut(format!("{layer}.{suffix}").as_str()).expect("checked above");
            p.value.data_mut().copy_from_slice(&values);
        }
    }
    Ok(())
}

/// Joins a parameter prefix and a leaf name with a dot.
pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
