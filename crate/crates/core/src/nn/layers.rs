use super::{join, ForwardCtx, Init, Module, Param};
use crate::error::Result;
use crate::tensor::{BatchNormMode, ConvGeometry, RunningStats, Tensor, Var, Real};

/// 3x3x3 convolution with unit stride and same padding.
#[derive(Clone, Debug)]
pub struct Conv3d<R> {
    pub weight: Param<R>,
    pub bias: Param<R>,
}

impl<R: Real> Conv3d<R> {
    pub fn new(prefix: &str, in_channels: usize, out_channels: usize, init: &mut Init) -> Self {
        let weight = init.fan_in_uniform(&[out_channels, in_channels, 3, 3, 3]);
        Conv3d {
            weight: Param::new(join(prefix, "weight"), weight, true),
            bias: Param::new(join(prefix, "bias"), Tensor::zeros([out_channels]).expect("positive"), true),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn forward(&self, ctx: &mut ForwardCtx<R>, x: &Var<R>) -> Result<Var<R>> {
        x.conv3d(&ctx.bind(&self.weight), &ctx.bind(&self.bias), ConvGeometry::SAME_3D)
    }
}

impl<R: Real> Module<R> for Conv3d<R> {
    fn params(&self) -> Vec<&Param<R>> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<R>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// 3x3 convolution with padding 1.
#[derive(Clone, Debug)]
pub struct Conv2d<R> {
    pub weight: Param<R>,
    pub bias: Param<R>,
}

impl<R: Real> Conv2d<R> {
    pub fn new(prefix: &str, in_channels: usize, out_channels: usize, init: &mut Init) -> Self {
        let weight = init.fan_in_uniform(&[out_channels, in_channels, 3, 3]);
        Conv2d {
            weight: Param::new(join(prefix, "weight"), weight, true),
            bias: Param::new(join(prefix, "bias"), Tensor::zeros([out_channels]).expect("positive"), true),
        }
    }

    /// Every bias starts at `value` instead of zero.
    pub fn with_bias(mut self, value: f64) -> Self {
        self.bias.value = self.bias.value.map(|_| R::from_f64(value));
        self
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn forward(&self, ctx: &mut ForwardCtx<R>, x: &Var<R>) -> Result<Var<R>> {
        x.conv2d(&ctx.bind(&self.weight), &ctx.bind(&self.bias), (1, 1))
    }
}

impl<R: Real> Module<R> for Conv2d<R> {
    fn params(&self) -> Vec<&Param<R>> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<R>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Batch normalization over `[N,C,...]` with learned scale/shift and running statistics.
#[derive(Clone, Debug)]
pub struct BatchNorm<R> {
    name: String,
    pub gamma: Param<R>,
    pub beta: Param<R>,
    pub running_mean: Param<R>,
    pub running_var: Param<R>,
}

impl<R: Real> BatchNorm<R> {
    pub fn new(prefix: &str, channels: usize) -> Self {
        let stats = RunningStats::<R>::new(channels);
        let vector = |v: Vec<R>| Tensor::from_vec([channels], v).expect("positive");
        BatchNorm {
            name: prefix.to_string(),
            gamma: Param::new(join(prefix, "gamma"), Tensor::ones([channels]).expect("positive"), true),
            beta: Param::new(join(prefix, "beta"), Tensor::zeros([channels]).expect("positive"), true),
            running_mean: Param::new(join(prefix, "running_mean"), vector(stats.mean), false),
            running_var: Param::new(join(prefix, "running_var"), vector(stats.var), false),
        }
    }

    pub fn forward(&self, ctx: &mut ForwardCtx<R>, x: &Var<R>) -> Result<Var<R>> {
        let stats = RunningStats {
            mean: self.running_mean.value.data().to_vec(),
            var: self.running_var.value.data().to_vec(),
        };
        let (gamma, beta) = (ctx.bind(&self.gamma), ctx.bind(&self.beta));
        let (y, batch) = x.batch_norm(&gamma, &beta, &stats, ctx.mode())?;
        if let (BatchNormMode::Train, Some(b)) = (ctx.mode(), batch) {
            ctx.push_batch_stats(&self.name, b);
        }
        Ok(y)
    }
}

impl<R: Real> Module<R> for BatchNorm<R> {
    fn params(&self) -> Vec<&Param<R>> {
        vec![&self.gamma, &self.beta, &self.running_mean, &self.running_var]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<R>> {
        vec![&mut self.gamma, &mut self.beta, &mut self.running_mean, &mut self.running_var]
    }
}
