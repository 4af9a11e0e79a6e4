//! Attention-map decoder: three x2 upsampling stages ending in a sigmoid.
//!
//! up, conv, relu, norm, up, conv, relu, norm, up, conv(1), sigmoid.

use super::layers::{BatchNorm, Conv2d};
use super::{join, ForwardCtx, Init, Module, Param};
use crate::error::{Error, Result};
use crate::tensor::{Real, Var};

#[derive(Clone, Debug)]
pub struct Decoder<R> {
    in_channels: usize,
    conv1: Conv2d<R>,
    norm1: BatchNorm<R>,
    conv2: Conv2d<R>,
    norm2: BatchNorm<R>,
    conv3: Conv2d<R>,
}

impl<R: Real> Decoder<R> {
    pub const SCALE: usize = 8;
    /// Initial output bias: maps start near sigmoid(-4), mostly background.
    pub const OUTPUT_BIAS: f64 = -4.0;

    pub fn new(prefix: &str, in_channels: usize, widths: [usize; 2], init: &mut Init) -> Self {
        Decoder {
            in_channels,
            conv1: Conv2d::new(&join(prefix, "conv1"), in_channels, widths[0], init),
            norm1: BatchNorm::new(&join(prefix, "norm1"), widths[0]),
            conv2: Conv2d::new(&join(prefix, "conv2"), widths[0], widths[1], init),
            norm2: BatchNorm::new(&join(prefix, "norm2"), widths[1]),
            conv3: Conv2d::new(&join(prefix, "conv3"), widths[1], 1, init).with_bias(Self::OUTPUT_BIAS),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn widths(&self) -> [usize; 2] {
        [self.conv1.out_channels(), self.conv2.out_channels()]
    }

    /// `[N, in, h, w]` to `[N, 1, 8h, 8w]` with values in (0, 1).
    pub fn forward(&self, ctx: &mut ForwardCtx<R>, x: &Var<R>) -> Result<Var<R>> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.in_channels {
            return Err(Error::shape("decoder", format!("expected [N,{},h,w], got {s:?}", self.in_channels)));
        }
        let x = self.conv1.forward(ctx, &x.upsample2x()?)?.relu();
        let x = self.norm1.forward(ctx, &x)?;
        let x = self.conv2.forward(ctx, &x.upsample2x()?)?.relu();
        let x = self.norm2.forward(ctx, &x)?;
        Ok(self.conv3.forward(ctx, &x.upsample2x()?)?.sigmoid())
    }
}

impl<R: Real> Module<R> for Decoder<R> {
    fn params(&self) -> Vec<&Param<R>> {
        let mut out = self.conv1.params();
        out.extend(self.norm1.params());
        out.extend(self.conv2.params());
        out.extend(self.norm2.params());
        out.extend(self.conv3.params());
        out
    }
    fn params_mut(&mut self) -> Vec<&mut Param<R>> {
        let mut out = self.conv1.params_mut();
        out.extend(self.norm1.params_mut());
        out.extend(self.conv2.params_mut());
        out.extend(self.norm2.params_mut());
        out.extend(self.conv3.params_mut());
        out
    }
}
