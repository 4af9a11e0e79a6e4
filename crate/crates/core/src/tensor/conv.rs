//! Direct 3D/2D convolution (cross-correlation) with bias.
//!
//! Inputs are gathered into patch matrices one tile of output rows at a time.
//! Every output element is accumulated as `bias + sum_c sum_dt sum_dy sum_dx w * x`
//! in exactly that order, so results match a naive nested loop bit-for-bit
//! (padded taps contribute an exact zero). Samples are processed in parallel,
//! each by one worker, and per-sample weight gradients are summed in sample
//! order, so results do not depend on the thread count.

use rayon::prelude::*;

use super::autograd::{Function, Var};
use super::{ensure_rank, Real, Tensor};
use crate::error::{Error, Result};

/// Kernel extent, stride and zero padding along (time, height, width).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

impl ConvGeometry {
    /// 3x3x3 kernel, unit stride, "same" padding.
    pub const SAME_3D: ConvGeometry = ConvGeometry { kernel: [3; 3], stride: [1; 3], pad: [1; 3] };

    pub fn output_len(&self, axis: usize, input: usize) -> Option<usize> {
        let padded = input + 2 * self.pad[axis];
        (padded >= self.kernel[axis]).then(|| (padded - self.kernel[axis]) / self.stride[axis] + 1)
    }
}

#[derive(Clone, Copy, Debug)]
struct Dims {
    n: usize,
    c: usize,
    k: usize,
    input: [usize; 3],
    output: [usize; 3],
    g: ConvGeometry,
}

impl Dims {
    fn in_plane(&self) -> usize {
        self.input.iter().product()
    }
    fn out_plane(&self) -> usize {
        self.output.iter().product()
    }
    fn taps(&self) -> usize {
        self.g.kernel.iter().product()
    }
}

/// Output indices `o` in `[0, out_len)` with `0 <= o * stride + offset < in_len`.
#[inline]
fn valid_range(out_len: usize, stride: usize, offset: isize, in_len: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { ((-offset) + s - 1) / s };
    let last = in_len as isize - 1 - offset;
    let hi = if last < 0 { 0 } else { (last / s + 1).min(out_len as isize) };
    (lo as usize, (hi.max(lo)) as usize)
}

/// Input coordinate for output coordinate `o` and kernel tap `tap` along `axis`.
#[inline]
fn source_index(d: &Dims, axis: usize, o: usize, tap: usize) -> Option<usize> {
    let i = (o * d.g.stride[axis] + tap) as isize - d.g.pad[axis] as isize;
    (i >= 0 && (i as usize) < d.input[axis]).then_some(i as usize)
}

/// Output positions are processed in tiles of whole output rows of about this many elements.
const TILE: usize = 256;

/// A run of output rows `rows.start..rows.end` (row = `(t, y)` pair).
struct Tile {
    rows: std::ops::Range<usize>,
    width: usize,
}

impl Tile {
    fn len(&self) -> usize {
        self.rows.len() * self.width
    }
    fn positions(&self) -> std::ops::Range<usize> {
        self.rows.start * self.width..self.rows.end * self.width
    }
}

fn tiles(d: &Dims) -> impl Iterator<Item = Tile> {
    let [to, ho, wo] = d.output;
    let per = (TILE / wo).max(1);
    let total = to * ho;
    (0..total.div_ceil(per)).map(move |i| Tile { rows: i * per..((i + 1) * per).min(total), width: wo })
}

/// Calls `f(j, dst_row, src)` for every (kernel tap `j`, output row) of the
/// tile, where `src` is the matching input row and `offset` its column shift;
/// `None` when the row lies in the padding.
fn for_each_patch_row(
    d: &Dims,
    tile: &Tile,
    mut f: impl FnMut(usize, usize, Option<usize>, isize),
) {
    let [_, h, wi] = d.input;
    let [kt, kh, kw] = d.g.kernel;
    let ho = d.output[1];
    for c in 0..d.c {
        for dt in 0..kt {
            for dy in 0..kh {
                for dx in 0..kw {
                    let j = ((c * kt + dt) * kh + dy) * kw + dx;
                    let offset = dx as isize - d.g.pad[2] as isize;
                    for (r_local, r) in tile.rows.clone().enumerate() {
                        let src = source_index(d, 0, r / ho, dt)
                            .zip(source_index(d, 1, r % ho, dy))
                            .map(|(it, iy)| ((c * d.input[0] + it) * h + iy) * wi);
                        f(j, r_local, src, offset);
                    }
                }
            }
        }
    }
}

/// Patch matrix `[taps * C][tile]` of one sample; padding reads as zero.
fn im2col<R: Real>(d: &Dims, xn: &[R], tile: &Tile, col: &mut [R]) {
    let (tp, wo, wi, stride) = (tile.len(), tile.width, d.input[2], d.g.stride[2]);
    for_each_patch_row(d, tile, |j, r, src, offset| {
        let dst = &mut col[j * tp + r * wo..j * tp + (r + 1) * wo];
        let Some(base) = src else {
            dst.fill(R::ZERO);
            return;
        };
        let row = &xn[base..base + wi];
        let (lo, hi) = valid_range(wo, stride, offset, wi);
        dst[..lo].fill(R::ZERO);
        dst[hi..].fill(R::ZERO);
        if stride == 1 {
            let start = (lo as isize + offset) as usize;
            dst[lo..hi].copy_from_slice(&row[start..start + (hi - lo)]);
        } else {
            for o in lo..hi {
                dst[o] = row[(o as isize * stride as isize + offset) as usize];
            }
        }
    });
}

/// Adds a patch matrix back onto the input positions it was gathered from.
fn col2im<R: Real>(d: &Dims, col: &[R], tile: &Tile, gxn: &mut [R]) {
    let (tp, wo, wi, stride) = (tile.len(), tile.width, d.input[2], d.g.stride[2]);
    for_each_patch_row(d, tile, |j, r, src, offset| {
        let Some(base) = src else { return };
        let g = &col[j * tp + r * wo..j * tp + (r + 1) * wo];
        let row = &mut gxn[base..base + wi];
        let (lo, hi) = valid_range(wo, stride, offset, wi);
        if stride == 1 {
            let start = (lo as isize + offset) as usize;
            for (x, &v) in row[start..start + (hi - lo)].iter_mut().zip(&g[lo..hi]) {
                *x += v;
            }
        } else {
            for o in lo..hi {
                row[(o as isize * stride as isize + offset) as usize] += g[o];
            }
        }
    });
}

/// `dst[r] += weights[r] * src` for up to four rows at once.
#[inline]
fn accumulate_rows<R: Real>(dst: &mut [R], len: usize, weights: &[R], src: &[R]) {
    if weights.len() == 4 {
        let (a0, rest) = dst.split_at_mut(len);
        let (a1, rest) = rest.split_at_mut(len);
        let (a2, a3) = rest.split_at_mut(len);
        let (w0, w1, w2, w3) = (weights[0], weights[1], weights[2], weights[3]);
        for ((((&v, o0), o1), o2), o3) in
            src[..len].iter().zip(a0.iter_mut()).zip(a1.iter_mut()).zip(a2.iter_mut()).zip(a3[..len].iter_mut())
        {
            *o0 += w0 * v;
            *o1 += w1 * v;
            *o2 += w2 * v;
            *o3 += w3 * v;
        }
    } else {
        for (r, &w) in weights.iter().enumerate() {
            for (o, &v) in dst[r * len..(r + 1) * len].iter_mut().zip(&src[..len]) {
                *o += w * v;
            }
        }
    }
}

/// Dot product with eight interleaved partial sums combined in a fixed order.
#[inline]
fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    let mut acc = [R::ZERO; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = R::ZERO;
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

const ROW_BLOCK: usize = 4;

fn forward<R: Real>(d: &Dims, x: &[R], w: &[R], b: &[R]) -> Vec<R> {
    let (p_len, j_len) = (d.out_plane(), d.c * d.taps());
    let mut out = vec![R::ZERO; d.n * d.k * p_len];
    out.par_chunks_mut(d.k * p_len).enumerate().for_each(|(n, out_n)| {
        let xn = &x[n * d.c * d.in_plane()..(n + 1) * d.c * d.in_plane()];
        let mut col = vec![R::ZERO; j_len * TILE.max(d.output[2])];
        let mut acc = vec![R::ZERO; ROW_BLOCK * TILE.max(d.output[2])];
        let mut wcol = vec![R::ZERO; ROW_BLOCK];
        for tile in tiles(d) {
            let tp = tile.len();
            im2col(d, xn, &tile, &mut col);
            for k0 in (0..d.k).step_by(ROW_BLOCK) {
                let kb = ROW_BLOCK.min(d.k - k0);
                for r in 0..kb {
                    acc[r * tp..(r + 1) * tp].fill(b[k0 + r]);
                }
                for j in 0..j_len {
                    for r in 0..kb {
                        wcol[r] = w[(k0 + r) * j_len + j];
                    }
                    accumulate_rows(&mut acc[..kb * tp], tp, &wcol[..kb], &col[j * tp..(j + 1) * tp]);
                }
                for r in 0..kb {
                    out_n[(k0 + r) * p_len..][tile.positions()].copy_from_slice(&acc[r * tp..(r + 1) * tp]);
                }
            }
        }
    });
    out
}

fn grad_input<R: Real>(d: &Dims, w: &[R], gout: &[R]) -> Vec<R> {
    let (p_len, j_len) = (d.out_plane(), d.c * d.taps());
    let mut gin = vec![R::ZERO; d.n * d.c * d.in_plane()];
    gin.par_chunks_mut(d.c * d.in_plane()).enumerate().for_each(|(n, gin_n)| {
        let gn = &gout[n * d.k * p_len..(n + 1) * d.k * p_len];
        let mut gcol = vec![R::ZERO; j_len * TILE.max(d.output[2])];
        let mut grow = vec![R::ZERO; TILE.max(d.output[2])];
        let mut wrow = vec![R::ZERO; ROW_BLOCK];
        for tile in tiles(d) {
            let tp = tile.len();
            gcol[..j_len * tp].fill(R::ZERO);
            for j0 in (0..j_len).step_by(ROW_BLOCK) {
                let jb = ROW_BLOCK.min(j_len - j0);
                let dst = &mut gcol[j0 * tp..(j0 + jb) * tp];
                for k in 0..d.k {
                    grow[..tp].copy_from_slice(&gn[k * p_len..][tile.positions()]);
                    wrow[..jb].copy_from_slice(&w[k * j_len + j0..k * j_len + j0 + jb]);
                    accumulate_rows(dst, tp, &wrow[..jb], &grow[..tp]);
                }
            }
            col2im(d, &gcol, &tile, gin_n);
        }
    });
    gin
}

fn grad_weight<R: Real>(d: &Dims, x: &[R], gout: &[R]) -> Vec<R> {
    let (p_len, j_len) = (d.out_plane(), d.c * d.taps());
    let partial: Vec<Vec<R>> = (0..d.n)
        .into_par_iter()
        .map(|n| {
            let xn = &x[n * d.c * d.in_plane()..(n + 1) * d.c * d.in_plane()];
            let gn = &gout[n * d.k * p_len..(n + 1) * d.k * p_len];
            let mut gw = vec![R::ZERO; d.k * j_len];
            let mut col = vec![R::ZERO; j_len * TILE.max(d.output[2])];
            for tile in tiles(d) {
                let tp = tile.len();
                im2col(d, xn, &tile, &mut col);
                for k in 0..d.k {
                    let g = &gn[k * p_len..][tile.positions()];
                    for (j, slot) in gw[k * j_len..(k + 1) * j_len].iter_mut().enumerate() {
                        *slot += dot(g, &col[j * tp..(j + 1) * tp]);
                    }
                }
            }
            gw
        })
        .collect();
    let mut total = vec![R::ZERO; d.k * j_len];
    for gw in partial {
        for (t, v) in total.iter_mut().zip(gw) {
            *t += v;
        }
    }
    total
}

fn grad_bias<R: Real>(d: &Dims, gout: &[R]) -> Vec<R> {
    (0..d.k)
        .map(|k| {
            (0..d.n)
                .map(|n| gout[(n * d.k + k) * d.out_plane()..(n * d.k + k + 1) * d.out_plane()].iter().copied().sum::<R>())
                .sum()
        })
        .collect()
}

struct ConvFn<R: Real> {
    inputs: [Var<R>; 3],
    dims: Dims,
}

impl<R: Real> Function<R> for ConvFn<R> {
    fn name(&self) -> &'static str {
        "conv"
    }
    fn inputs(&self) -> &[Var<R>] {
        &self.inputs
    }
    fn backward(&self, _: &Tensor<R>, grad: &[R], needs: &[bool]) -> Vec<Option<Vec<R>>> {
        let [x, w, _] = &self.inputs;
        vec![
            needs[0].then(|| grad_input(&self.dims, w.data(), grad)),
            needs[1].then(|| grad_weight(&self.dims, x.data(), grad)),
            needs[2].then(|| grad_bias(&self.dims, grad)),
        ]
    }
}

fn conv_dims(
    op: &'static str,
    x: &[usize],
    w: &[usize],
    b: &[usize],
    g: ConvGeometry,
) -> Result<Dims> {
    let (n, c, input) = (x[0], x[1], [x[2], x[3], x[4]]);
    let k = w[0];
    if w[1] != c {
        return Err(Error::shape(op, format!("input has {c} channels but weight expects {}", w[1])));
    }
    if [w[2], w[3], w[4]] != g.kernel {
        return Err(Error::shape(op, format!("weight kernel {:?} does not match geometry {:?}", &w[2..], g.kernel)));
    }
    if b != [k] {
        return Err(Error::shape(op, format!("bias shape {b:?} does not match {k} output channels")));
    }
    if g.stride.contains(&0) {
        return Err(Error::invalid(op, "stride must be positive"));
    }
    let mut output = [0; 3];
    for axis in 0..3 {
        output[axis] = g.output_len(axis, input[axis]).ok_or_else(|| {
            Error::shape(
                op,
                format!("input extent {} on axis {axis} too small for kernel {} with padding {}", input[axis], g.kernel[axis], g.pad[axis]),
            )
        })?;
    }
    Ok(Dims { n, c, k, input, output, g })
}

impl<R: Real> Var<R> {
    /// 3D convolution of `[N,C,T,H,W]` with weights `[K,C,kt,kh,kw]` and bias `[K]`.
    pub fn conv3d(&self, weight: &Var<R>, bias: &Var<R>, geometry: ConvGeometry) -> Result<Var<R>> {
        ensure_rank("conv3d", self.shape(), 5, "[N,C,T,H,W]")?;
        ensure_rank("conv3d", weight.shape(), 5, "[K,C,kt,kh,kw]")?;
        let d = conv_dims("conv3d", self.shape(), weight.shape(), bias.shape(), geometry)?;
        let out = forward(&d, self.data(), weight.data(), bias.data());
        let shape = vec![d.n, d.k, d.output[0], d.output[1], d.output[2]];
        Ok(Var::from_op(
            Tensor::from_vec(shape, out)?,
            Box::new(ConvFn { inputs: [self.clone(), weight.clone(), bias.clone()], dims: d }),
        ))
    }

    /// Unit-stride 2D convolution of `[N,C,H,W]` with weights `[K,C,kh,kw]`.
    pub fn conv2d(&self, weight: &Var<R>, bias: &Var<R>, pad: (usize, usize)) -> Result<Var<R>> {
        ensure_rank("conv2d", self.shape(), 4, "[N,C,H,W]")?;
        ensure_rank("conv2d", weight.shape(), 4, "[K,C,kh,kw]")?;
        let xs = self.shape();
        let ws = weight.shape();
        let g = ConvGeometry { kernel: [1, ws[2], ws[3]], stride: [1; 3], pad: [0, pad.0, pad.1] };
        let d = conv_dims("conv2d", &[xs[0], xs[1], 1, xs[2], xs[3]], &[ws[0], ws[1], 1, ws[2], ws[3]], bias.shape(), g)?;
        let out = forward(&d, self.data(), weight.data(), bias.data());
        let shape = vec![d.n, d.k, d.output[1], d.output[2]];
        Ok(Var::from_op(
            Tensor::from_vec(shape, out)?,
            Box::new(ConvFn { inputs: [self.clone(), weight.clone(), bias.clone()], dims: d }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradients, random_tensor};

    /// Independent scalar loop: out[n,k,t,y,x] = b[k] + sum over c, dt, dy, dx.
    #[allow(clippy::too_many_arguments)]
    fn naive_conv3d(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, g: ConvGeometry) -> Tensor<f64> {
        let [n, c, t, h, wd] = <[usize; 5]>::try_from(x.shape()).unwrap();
        let k = w.shape()[0];
        let [kt, kh, kw] = g.kernel;
        let out_len = |i: usize, a: usize| (i + 2 * g.pad[a] - g.kernel[a]) / g.stride[a] + 1;
        let (to, ho, wo) = (out_len(t, 0), out_len(h, 1), out_len(wd, 2));
        let xi = |nn: usize, cc: usize, tt: isize, yy: isize, xx: isize| -> Option<f64> {
            if tt < 0 || yy < 0 || xx < 0 || tt >= t as isize || yy >= h as isize || xx >= wd as isize {
                return None;
            }
            Some(x.data()[(((nn * c + cc) * t + tt as usize) * h + yy as usize) * wd + xx as usize])
        };
        let mut out = Vec::new();
        for nn in 0..n {
            for kk in 0..k {
                for ot in 0..to {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let mut acc = b.data()[kk];
                            for cc in 0..c {
                                for dt in 0..kt {
                                    for dy in 0..kh {
                                        for dx in 0..kw {
                                            let ti = (ot * g.stride[0] + dt) as isize - g.pad[0] as isize;
                                            let yi = (oy * g.stride[1] + dy) as isize - g.pad[1] as isize;
                                            let xj = (ox * g.stride[2] + dx) as isize - g.pad[2] as isize;
                                            if let Some(v) = xi(nn, cc, ti, yi, xj) {
                                                acc += w.data()[(((kk * c + cc) * kt + dt) * kh + dy) * kw + dx] * v;
                                            }
                                        }
                                    }
                                }
                            }
                            out.push(acc);
                        }
                    }
                }
            }
        }
        Tensor::from_vec([n, k, to, ho, wo], out).unwrap()
    }

    fn run3d(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, g: ConvGeometry) -> Tensor<f64> {
        Var::constant(x.clone())
            .conv3d(&Var::constant(w.clone()), &Var::constant(b.clone()), g)
            .unwrap()
            .value()
            .clone()
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let x = Tensor::zeros([1, 2, 3, 4, 4]).unwrap();
        let w = random_tensor(&[3, 2, 3, 3, 3], 1, -1.0, 1.0);
        let b = Tensor::zeros([3]).unwrap();
        assert!(run3d(&x, &w, &b, ConvGeometry::SAME_3D).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_hot_center_with_ones_kernel() {
        let mut x = Tensor::zeros([1, 1, 3, 3, 3]).unwrap();
        x.data_mut()[13] = 1.0;
        let w = Tensor::ones([1, 1, 3, 3, 3]).unwrap();
        let b = Tensor::zeros([1]).unwrap();
        let out = run3d(&x, &w, &b, ConvGeometry::SAME_3D);
        assert_eq!(out.shape(), &[1, 1, 3, 3, 3]);
        assert_eq!(out.data()[13], 1.0);
        // The centred impulse reaches every output position exactly once.
        assert_eq!(out.sum(), 27.0);
        assert_eq!(out, naive_conv3d(&x, &w, &b, ConvGeometry::SAME_3D));
    }

    #[test]
    fn bit_identical_to_naive_loop() {
        let geoms = [
            ConvGeometry::SAME_3D,
            ConvGeometry { kernel: [3; 3], stride: [1, 2, 2], pad: [1, 1, 1] },
            ConvGeometry { kernel: [3; 3], stride: [2, 1, 3], pad: [0, 1, 2] },
        ];
        for (i, g) in geoms.into_iter().enumerate() {
            let x = random_tensor(&[2, 3, 5, 7, 8], 10 + i as u64, -1.0, 1.0);
            let w = random_tensor(&[4, 3, 3, 3, 3], 20 + i as u64, -1.0, 1.0);
            let b = random_tensor(&[4], 30 + i as u64, -1.0, 1.0);
            assert_eq!(run3d(&x, &w, &b, g), naive_conv3d(&x, &w, &b, g), "geometry {g:?}");
        }
    }

    #[test]
    fn conv2d_ones_kernel_counts_neighbours() {
        let x = Var::constant(Tensor::<f64>::ones([1, 1, 3, 3]).unwrap());
        let w = Var::constant(Tensor::ones([1, 1, 3, 3]).unwrap());
        let b = Var::constant(Tensor::zeros([1]).unwrap());
        let out = x.conv2d(&w, &b, (1, 1)).unwrap();
        assert_eq!(out.shape(), &[1, 1, 3, 3]);
        assert_eq!(out.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn shape_errors() {
        let x = Var::constant(Tensor::<f32>::zeros([1, 2, 3, 4, 4]).unwrap());
        let w = Var::constant(Tensor::zeros([3, 1, 3, 3, 3]).unwrap());
        let b = Var::constant(Tensor::zeros([3]).unwrap());
        assert!(matches!(x.conv3d(&w, &b, ConvGeometry::SAME_3D), Err(Error::Shape { .. })));
        let small = Var::constant(Tensor::<f32>::zeros([1, 1, 1, 1, 1]).unwrap());
        let w1 = Var::constant(Tensor::zeros([3, 1, 3, 3, 3]).unwrap());
        let no_pad = ConvGeometry { pad: [0; 3], ..ConvGeometry::SAME_3D };
        assert!(small.conv3d(&w1, &b, no_pad).is_err());
    }

    #[test]
    fn conv3d_gradients_match_finite_differences() {
        let x = random_tensor(&[1, 2, 4, 5, 5], 1, -1.0, 1.0);
        let w = random_tensor(&[3, 2, 3, 3, 3], 2, -0.5, 0.5);
        let b = random_tensor(&[3], 3, -0.5, 0.5);
        for g in [ConvGeometry::SAME_3D, ConvGeometry { kernel: [3; 3], stride: [1, 2, 2], pad: [0, 1, 1] }] {
            let r = check_gradients(&[x.clone(), w.clone(), b.clone()], 4, |v| v[0].conv3d(&v[1], &v[2], g)).unwrap();
            assert!(r.max_rel < 1e-6, "{g:?}: {r:?}");
        }
    }

    #[test]
    fn conv2d_gradients_match_finite_differences() {
        let x = random_tensor(&[2, 3, 5, 6], 5, -1.0, 1.0);
        let w = random_tensor(&[4, 3, 3, 3], 6, -0.5, 0.5);
        let b = random_tensor(&[4], 7, -0.5, 0.5);
        let r = check_gradients(&[x, w, b], 8, |v| v[0].conv2d(&v[1], &v[2], (1, 1))).unwrap();
        assert!(r.max_rel < 1e-6, "{r:?}");
    }
}
