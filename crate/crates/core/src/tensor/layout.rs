//! Data movement: axis swap, slicing along axis 1, reshape.

use super::autograd::{Function, Var};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Permutes `[A, B, C, rest]` to `[A, C, B, rest]`.
fn swap12<R: Real>(data: &[R], a: usize, b: usize, c: usize, rest: usize) -> Vec<R> {
    let mut out = Vec::with_capacity(data.len());
    for i in 0..a {
        for k in 0..c {
            for j in 0..b {
                let src = ((i * b + j) * c + k) * rest;
                out.extend_from_slice(&data[src..src + rest]);
            }
        }
    }
    out
}

struct SwapFn<R: Real> {
    input: [Var<R>; 1],
}

impl<R: Real> Function<R> for SwapFn<R> {
    fn name(&self) -> &'static str {
        "swap_axes12"
    }
    fn inputs(&self) -> &[Var<R>] {
        &self.input
    }
    fn backward(&self, _: &Tensor<R>, grad: &[R], _: &[bool]) -> Vec<Option<Vec<R>>> {
        let s = self.input[0].shape();
        let rest = s[3..].iter().product();
        vec![Some(swap12(grad, s[0], s[2], s[1], rest))]
    }
}

struct SelectFn<R: Real> {
    input: [Var<R>; 1],
    index: usize,
}

impl<R: Real> Function<R> for SelectFn<R> {
    fn name(&self) -> &'static str {
        "select"
    }
    fn inputs(&self) -> &[Var<R>] {
        &self.input
    }
    fn backward(&self, _: &Tensor<R>, grad: &[R], _: &[bool]) -> Vec<Option<Vec<R>>> {
        let s = self.input[0].shape();
        let rest: usize = s[2..].iter().product();
        let mut gx = vec![R::ZERO; self.input[0].value().len()];
        for i in 0..s[0] {
            let dst = (i * s[1] + self.index) * rest;
            gx[dst..dst + rest].copy_from_slice(&grad[i * rest..(i + 1) * rest]);
        }
        vec![Some(gx)]
    }
}

struct ReshapeFn<R: Real> {
    input: [Var<R>; 1],
}

impl<R: Real> Function<R> for ReshapeFn<R> {
    fn name(&self) -> &'static str {
        "reshape"
    }
    fn inputs(&self) -> &[Var<R>] {
        &self.input
    }
    fn backward(&self, _: &Tensor<R>, grad: &[R], _: &[bool]) -> Vec<Option<Vec<R>>> {
        vec![Some(grad.to_vec())]
    }
}

impl<R: Real> Var<R> {
    /// `[A, B, C, ...]` to `[A, C, B, ...]`, e.g. channel-major to time-major video features.
    pub fn swap_axes12(&self) -> Result<Var<R>> {
        let s = self.shape();
        if s.len() < 3 {
            return Err(Error::shape("swap_axes12", format!("need rank >= 3, got {s:?}")));
        }
        let rest = s[3..].iter().product();
        let data = swap12(self.data(), s[0], s[1], s[2], rest);
        let mut shape = s.to_vec();
        shape.swap(1, 2);
        Ok(Var::from_op(Tensor::from_vec(shape, data)?, Box::new(SwapFn { input: [self.clone()] })))
    }

    /// Slice `index` of axis 1: `[A, B, rest]` to `[A, rest]`.
    pub fn select_axis1(&self, index: usize) -> Result<Var<R>> {
        let s = self.shape();
        if s.len() < 3 {
            return Err(Error::shape("select_axis1", format!("need rank >= 3, got {s:?}")));
        }
        if index >= s[1] {
            return Err(Error::invalid("select_axis1", format!("index {index} out of range for extent {}", s[1])));
        }
        let rest: usize = s[2..].iter().product();
        let mut data = Vec::with_capacity(s[0] * rest);
        for i in 0..s[0] {
            let src = (i * s[1] + index) * rest;
            data.extend_from_slice(&self.data()[src..src + rest]);
        }
        let mut shape = vec![s[0]];
        shape.extend_from_slice(&s[2..]);
        Ok(Var::from_op(Tensor::from_vec(shape, data)?, Box::new(SelectFn { input: [self.clone()], index })))
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Var<R>> {
        let value = self.value().clone().reshape(shape)?;
        Ok(Var::from_op(value, Box::new(ReshapeFn { input: [self.clone()] })))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradients, random_tensor};

    #[test]
    fn swap_moves_elements() {
        let x = Var::constant(Tensor::<f64>::from_fn([2, 3, 4, 5], |i| i as f64).unwrap());
        let y = x.swap_axes12().unwrap();
        assert_eq!(y.shape(), &[2, 4, 3, 5]);
        for a in 0..2 {
            for b in 0..3 {
                for c in 0..4 {
                    for r in 0..5 {
                        assert_eq!(y.data()[((a * 4 + c) * 3 + b) * 5 + r], x.data()[((a * 3 + b) * 4 + c) * 5 + r]);
                    }
                }
            }
        }
        assert_eq!(y.swap_axes12().unwrap().data(), x.data());
    }

    #[test]
    fn select_picks_slice() {
        let x = Var::constant(Tensor::<f64>::from_fn([2, 3, 2], |i| i as f64).unwrap());
        let y = x.select_axis1(1).unwrap();
        assert_eq!(y.shape(), &[2, 2]);
        assert_eq!(y.data(), &[2.0, 3.0, 8.0, 9.0]);
        assert!(x.select_axis1(3).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let t = random_tensor(&[2, 3, 4, 2], 1, -1.0, 1.0);
        let r = check_gradients(&[t.clone()], 2, |v| v[0].swap_axes12()).unwrap();
        assert!(r.max_rel < 1e-5);
        let r = check_gradients(&[t.clone()], 3, |v| v[0].select_axis1(2)).unwrap();
        assert!(r.max_rel < 1e-5);
        let r = check_gradients(&[t], 4, |v| v[0].reshape([6, 8])).unwrap();
        assert!(r.max_rel < 1e-5);
    }
}
