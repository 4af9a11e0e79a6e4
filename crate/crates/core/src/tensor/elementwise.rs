//! Shape-preserving element-wise operations and full reductions.

use super::autograd::{Function, Var};
use super::{ensure_same_shape, Real, Tensor};
use crate::error::Result;

fn with_data<R: Real>(like: &Tensor<R>, data: Vec<R>) -> Tensor<R> {
    Tensor::from_vec(like.shape().to_vec(), data).expect("shape preserved")
}

struct AddFn<R: Real>([Var<R>; 2]);

impl<R: Real> Function<R> for AddFn<R> {
    fn name(&self) -> &'static str {
        "add"
    }
    fn inputs(&self) -> &[Var<R>] {
        &self.0
    }
    fn backward(&self, _: &Tensor<R>, grad: &[R], needs: &[bool]) -> Vec<Option<Vec<R>>> {
        needs.iter().map(|&n| n.then(|| grad.to_vec())).collect()
    }
}

struct HadamardFn<R: Real>([Var<R>; 2]);

impl<R: Real> Function<R> for HadamardFn<R> {
    fn name(&self) -> &'static str {
        "hadamard"
    }
    fn inputs(&self) -> &[Var<R>] {
        &self.0
    }
    fn backward(&self, _: &Tensor<R>, grad: &[R], needs: &[bool]) -> Vec<Option<Vec<R>>> {
        let [a, b] = &self.0;
        let times = |other: &Var<R>| grad.iter().zip(other.data()).map(|(&g, &o)| g * o).collect();
        vec![needs[0].then(|| times(b)), needs[1].then(|| times(a))]
    }
}

/// Unary op whose derivative is expressed through input and output values.
struct UnaryFn<R: Real> {
    name: &'static str,
    input: [Var<R>; 1],
    derivative: fn(x: R, y: R) -> R,
}

impl<R: Real> Function<R> for UnaryFn<R> {
    fn name(&self) -> &'static str {
        self.name
    }
    fn inputs(&self) -> &[Var<R>] {
        &self.input
    }
    fn backward(&self, output: &Tensor<R>, grad: &[R], _: &[bool]) -> Vec<Option<Vec<R>>> {
        let d = self.derivative;
        let g = grad
            .iter()
            .zip(self.input[0].data())
            .zip(output.data())
            .map(|((&g, &x), &y)| g * d(x, y))
            .collect();
        vec![Some(g)]
    }
}

struct SumFn<R: Real> {
    input: [Var<R>; 1],
    scale: R,
}

impl<R: Real> Function<R> for SumFn<R> {
    fn name(&self) -> &'static str {
        "sum"
    }
    fn inputs(&self) -> &[Var<R>] {
        &self.input
    }
    fn backward(&self, _: &Tensor<R>, grad: &[R], _: &[bool]) -> Vec<Option<Vec<R>>> {
        vec![Some(vec![grad[0] * self.scale; self.input[0].value().len()])]
    }
}

impl<R: Real> Var<R> {
    fn unary(&self, name: &'static str, f: impl Fn(R) -> R, derivative: fn(R, R) -> R) -> Var<R> {
        let value = self.value().map(f);
        Var::from_op(value, Box::new(UnaryFn { name, input: [self.clone()], derivative }))
    }

    pub fn add(&self, other: &Var<R>) -> Result<Var<R>> {
        ensure_same_shape("add", self.shape(), other.shape())?;
        let data = self.data().iter().zip(other.data()).map(|(&a, &b)| a + b).collect();
        Ok(Var::from_op(with_data(self.value(), data), Box::new(AddFn([self.clone(), other.clone()]))))
    }

    /// Element-wise product.
    pub fn hadamard(&self, other: &Var<R>) -> Result<Var<R>> {
        ensure_same_shape("hadamard", self.shape(), other.shape())?;
        let data = self.data().iter().zip(other.data()).map(|(&a, &b)| a * b).collect();
        Ok(Var::from_op(
            with_data(self.value(), data),
            Box::new(HadamardFn([self.clone(), other.clone()])),
        ))
    }

    pub fn scalar_add(&self, c: R) -> Var<R> {
        self.unary("scalar_add", move |x| x + c, |_, _| R::ONE)
    }

    pub fn scale(&self, c: R) -> Var<R> {
        let value = self.value().map(|x| x * c);
        Var::from_op(value, Box::new(ScaleFn { input: [self.clone()], factor: c }))
    }

    /// Rectifier; the subgradient at zero is taken as zero.
    pub fn relu(&self) -> Var<R> {
        self.unary("relu", |x| if x > R::ZERO { x } else { R::ZERO }, |x, _| {
            if x > R::ZERO {
                R::ONE
            } else {
                R::ZERO
            }
        })
    }

    pub fn sigmoid(&self) -> Var<R> {
        self.unary("sigmoid", R::sigmoid, |_, y| y * (R::ONE - y))
    }

    pub fn tanh(&self) -> Var<R> {
        self.unary("tanh", R::tanh, |_, y| R::ONE - y * y)
    }

    pub fn sum(&self) -> Var<R> {
        let total = self.value().sum();
        Var::from_op(Tensor::scalar(total), Box::new(SumFn { input: [self.clone()], scale: R::ONE }))
    }

    pub fn mean(&self) -> Var<R> {
        let n = R::from_usize(self.value().len());
        let total = self.value().sum() / n;
        Var::from_op(Tensor::scalar(total), Box::new(SumFn { input: [self.clone()], scale: R::ONE / n }))
    }
}

struct ScaleFn<R: Real> {
    input: [Var<R>; 1],
    factor: R,
}

impl<R: Real> Function<R> for ScaleFn<R> {
    fn name(&self) -> &'static str {
        "scale"
    }
    fn inputs(&self) -> &[Var<R>] {
        &self.input
    }
    fn backward(&self, _: &Tensor<R>, grad: &[R], _: &[bool]) -> Vec<Option<Vec<R>>> {
        vec![Some(grad.iter().map(|&g| g * self.factor).collect())]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradients, random_tensor};

    fn leaf(shape: &[usize], seed: u64) -> Tensor<f64> {
        random_tensor(shape, seed, -2.0, 2.0)
    }

    #[test]
    fn fixed_points() {
        let z = Var::constant(Tensor::<f64>::zeros([1]).unwrap());
        assert_eq!(z.sigmoid().data(), &[0.5]);
        assert_eq!(z.tanh().data(), &[0.0]);
        assert_eq!(z.relu().data(), &[0.0]);
    }

    #[test]
    fn hadamard_with_ones_is_identity() {
        let x = Var::constant(leaf(&[3, 4], 1));
        let ones = Var::constant(Tensor::ones([3, 4]).unwrap());
        assert_eq!(x.hadamard(&ones).unwrap().data(), x.data());
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let a = Var::constant(Tensor::<f32>::ones([2, 3]).unwrap());
        let b = Var::constant(Tensor::<f32>::ones([3, 2]).unwrap());
        assert!(a.add(&b).is_err());
        assert!(a.hadamard(&b).is_err());
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let x = Var::leaf(Tensor::<f64>::from_vec([3], vec![-1.0, 0.0, 2.0]).unwrap(), true);
        x.relu().sum().backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let shape = [2, 3, 4];
        let unary: [(&str, fn(&Var<f64>) -> Var<f64>); 5] = [
            ("sigmoid", |x| x.sigmoid()),
            ("tanh", |x| x.tanh()),
            ("relu", |x| x.relu()),
            ("scalar_add", |x| x.scalar_add(1.5)),
            ("scale", |x| x.scale(-0.75)),
        ];
        for (name, op) in unary {
            let err = check_gradients(&[leaf(&shape, 3)], 7, |v| Ok(op(&v[0]))).unwrap();
            assert!(err.max_rel < 1e-5, "{name}: {err:?}");
        }
        let err = check_gradients(&[leaf(&shape, 4), leaf(&shape, 5)], 8, |v| v[0].add(&v[1])).unwrap();
        assert!(err.max_rel < 1e-5, "add: {err:?}");
        let err = check_gradients(&[leaf(&shape, 4), leaf(&shape, 5)], 9, |v| v[0].hadamard(&v[1])).unwrap();
        assert!(err.max_rel < 1e-5, "hadamard: {err:?}");
        let err = check_gradients(&[leaf(&shape, 6)], 10, |v| Ok(v[0].mean())).unwrap();
        assert!(err.max_rel < 1e-5, "mean: {err:?}");
    }
}
