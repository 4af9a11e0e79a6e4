//! Spatial 2x max pooling and nearest-neighbour 2x upsampling.

use super::autograd::{Function, Var};
use super::{ensure_rank, Real, Tensor};
use crate::error::{Error, Result};

struct MaxPoolFn<R: Real> {
    input: [Var<R>; 1],
    /// Flat input index of the selected element for each output element.
    argmax: Vec<usize>,
}

impl<R: Real> Function<R> for MaxPoolFn<R> {
    fn name(&self) -> &'static str {
        "maxpool3d"
    }
    fn inputs(&self) -> &[Var<R>] {
        &self.input
    }
    fn backward(&self, _: &Tensor<R>, grad: &[R], _: &[bool]) -> Vec<Option<Vec<R>>> {
        let mut gx = vec![R::ZERO; self.input[0].value().len()];
        for (&src, &g) in self.argmax.iter().zip(grad) {
            gx[src] += g;
        }
        vec![Some(gx)]
    }
}

struct UpsampleFn<R: Real> {
    input: [Var<R>; 1],
}

impl<R: Real> Function<R> for UpsampleFn<R> {
    fn name(&self) -> &'static str {
        "upsample2x"
    }
    fn inputs(&self) -> &[Var<R>] {
        &self.input
    }
    fn backward(&self, _: &Tensor<R>, grad: &[R], _: &[bool]) -> Vec<Option<Vec<R>>> {
        let s = self.input[0].shape();
        let (h, w) = (s[2], s[3]);
        let planes = s[0] * s[1];
        let mut gx = vec![R::ZERO; planes * h * w];
        for p in 0..planes {
            for y in 0..2 * h {
                for x in 0..2 * w {
                    gx[(p * h + y / 2) * w + x / 2] += grad[(p * 2 * h + y) * 2 * w + x];
                }
            }
        }
        vec![Some(gx)]
    }
}

impl<R: Real> Var<R> {
    /// Max over non-overlapping 1x2x2 windows of `[N,C,T,H,W]`; ties go to the
    /// first element in raster order.
    pub fn maxpool3d(&self) -> Result<Var<R>> {
        ensure_rank("maxpool3d", self.shape(), 5, "[N,C,T,H,W]")?;
        let s = self.shape();
        let (h, w) = (s[3], s[4]);
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape("maxpool3d", format!("height {h} and width {w} must both be even")));
        }
        let rows = s[0] * s[1] * s[2];
        let (ho, wo) = (h / 2, w / 2);
        let x = self.data();
        let mut out = Vec::with_capacity(rows * ho * wo);
        let mut argmax = Vec::with_capacity(rows * ho * wo);
        for r in 0..rows {
            for oy in 0..ho {
                for ox in 0..wo {
                    let top = (r * h + 2 * oy) * w + 2 * ox;
                    let mut best = top;
                    for cand in [top + 1, top + w, top + w + 1] {
                        if x[cand] > x[best] {
                            best = cand;
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::from_vec(vec![s[0], s[1], s[2], ho, wo], out)?;
        Ok(Var::from_op(value, Box::new(MaxPoolFn { input: [self.clone()], argmax })))
    }

    /// Nearest-neighbour 2x upsampling of `[N,C,H,W]`.
    pub fn upsample2x(&self) -> Result<Var<R>> {
        ensure_rank("upsample2x", self.shape(), 4, "[N,C,H,W]")?;
        let s = self.shape();
        let (h, w) = (s[2], s[3]);
        let x = self.data();
        let mut out = Vec::with_capacity(x.len() * 4);
        for p in 0..s[0] * s[1] {
            for y in 0..2 * h {
                let row = &x[(p * h + y / 2) * w..(p * h + y / 2 + 1) * w];
                for &v in row {
                    out.push(v);
                    out.push(v);
                }
            }
        }
        let value = Tensor::from_vec(vec![s[0], s[1], 2 * h, 2 * w], out)?;
        Ok(Var::from_op(value, Box::new(UpsampleFn { input: [self.clone()] })))
    }
}
