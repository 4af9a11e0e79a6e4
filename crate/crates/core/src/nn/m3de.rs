//! Multi-stage 3D convolutional encoder for one input stream.
//!
//! Stages 1-3: conv, norm, relu, conv, norm, relu, 1x2x2 max pool.
//! Stage 4: conv, norm, relu, conv, relu.
//! That is 18 blocks (convs, norms and pools) and a spatial reduction of 8.

use super::layers::{BatchNorm, Conv3d};
use super::{join, ForwardCtx, Init, Module, Param};
use crate::error::{Error, Result};
use crate::tensor::{Real, Var};

pub const STAGE_COUNT: usize = 4;

#[derive(Clone, Debug)]
struct Stage<R> {
    conv1: Conv3d<R>,
    norm1: BatchNorm<R>,
    conv2: Conv3d<R>,
    /// Absent in the last stage.
    norm2: Option<BatchNorm<R>>,
    pool: bool,
}

#[derive(Clone, Debug)]
pub struct EncoderPath<R> {
    in_channels: usize,
    stages: Vec<Stage<R>>,
}

impl<R: Real> EncoderPath<R> {
    /// `widths[k]` is the channel count of both convolutions of stage `k`.
    pub fn new(prefix: &str, in_channels: usize, widths: [usize; STAGE_COUNT], init: &mut Init) -> Self {
        let mut stages = Vec::with_capacity(STAGE_COUNT);
        let mut cin = in_channels;
        for (k, &w) in widths.iter().enumerate() {
            let p = join(prefix, &format!("stage{}", k + 1));
            let last = k + 1 == STAGE_COUNT;
            stages.push(Stage {
                conv1: Conv3d::new(&join(&p, "conv1"), cin, w, init),
                norm1: BatchNorm::new(&join(&p, "norm1"), w),
                conv2: Conv3d::new(&join(&p, "conv2"), w, w, init),
                norm2: (!last).then(|| BatchNorm::new(&join(&p, "norm2"), w)),
                pool: !last,
            });
            cin = w;
        }
        EncoderPath { in_channels, stages }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn widths(&self) -> [usize; STAGE_COUNT] {
        std::array::from_fn(|k| self.stages[k].conv1.out_channels())
    }

    pub fn out_channels(&self) -> usize {
        self.widths()[STAGE_COUNT - 1]
    }

    /// Number of conv, norm and pool blocks.
    pub fn block_count(&self) -> usize {
        self.stages.iter().map(|s| 3 + usize::from(s.norm2.is_some()) + usize::from(s.pool)).sum()
    }

    pub fn pool_count(&self) -> usize {
        self.stages.iter().filter(|s| s.pool).count()
    }

    /// `[N,Cin,T,H,W]` to time-major features `[N,T,C,H/8,W/8]`.
    pub fn forward(&self, ctx: &mut ForwardCtx<R>, clip: &Var<R>) -> Result<Var<R>> {
        let s = clip.shape();
        if s.len() != 5 || s[1] != self.in_channels {
            return Err(Error::shape(
                "encoder",
                format!("expected [N,{},T,H,W] clip, got {s:?}", self.in_channels),
            ));
        }
        let factor = 1 << self.pool_count();
        if s[3] % factor != 0 || s[4] % factor != 0 {
            return Err(Error::shape(
                "encoder",
                format!(
                    "spatial size {}x{} must be a multiple of {factor} (e.g. 256x256 or 64x64)",
                    s[3], s[4]
                ),
            ));
        }
        let mut x = clip.clone();
        for st in &self.stages {
            x = st.conv1.forward(ctx, &x)?;
            x = st.norm1.forward(ctx, &x)?.relu();
            x = st.conv2.forward(ctx, &x)?;
            if let Some(norm) = &st.norm2 {
                x = norm.forward(ctx, &x)?;
            }
            x = x.relu();
            if st.pool {
                x = x.maxpool3d()?;
            }
        }
        x.swap_axes12()
    }
}

impl<R: Real> Module<R> for EncoderPath<R> {
    fn params(&self) -> Vec<&Param<R>> {
        let mut out = Vec::new();
        for s in &self.stages {
            out.extend(s.conv1.params());
            out.extend(s.norm1.params());
            out.extend(s.conv2.params());
            if let Some(n) = &s.norm2 {
                out.extend(n.params());
            }
        }
        out
    }
    fn params_mut(&mut self) -> Vec<&mut Param<R>> {
        let mut out = Vec::new();
        for s in &mut self.stages {
            out.extend(s.conv1.params_mut());
            out.extend(s.norm1.params_mut());
            out.extend(s.conv2.params_mut());
            if let Some(n) = &mut s.norm2 {
                out.extend(n.params_mut());
            }
        }
        out
    }
}
