//! Central finite-difference gradient checking.
//!
//! The checked function's output is projected onto a fixed random direction,
//! giving a scalar whose analytic gradient (from [`Var::backward`]) is compared
//! against `(L(x + h) - L(x - h)) / 2h` per input element. The numeric side
//! only ever evaluates forward passes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{Tensor, Var};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Denominator floor for the relative error.
    pub abs_floor: f64,
    /// Check at most this many randomly chosen elements per input.
    pub max_elements_per_input: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-4, abs_floor: 1e-8, max_elements_per_input: None, seed: 0 }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel: f64,
    pub max_abs: f64,
    pub checked: usize,
    /// (input index, element index, analytic, numeric) of the worst element.
    pub worst: Option<(usize, usize, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Uniform random tensor from a seeded stream.
pub fn random_tensor(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(lo..hi)).expect("valid shape")
}

/// Checks every element of every input with the default configuration.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], seed: u64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&[Var<f64>]) -> Result<Var<f64>>,
{
    check_gradients_with(&GradCheckConfig { seed, ..Default::default() }, inputs, f)
}

pub fn check_gradients_with<F>(
    cfg: &GradCheckConfig,
    inputs: &[Tensor<f64>],
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&[Var<f64>]) -> Result<Var<f64>>,
{
    let vars: Vec<Var<f64>> = inputs.iter().map(|t| Var::leaf(t.clone(), true)).collect();
    let out = f(&vars)?;
    let projection = random_tensor(out.shape(), cfg.seed ^ 0x9e37_79b9, -1.0, 1.0);
    let project = |y: &Var<f64>| -> Result<Var<f64>> {
        Ok(y.hadamard(&Var::constant(projection.clone()))?.sum())
    };
    project(&out)?.backward()?;

    let eval = |point: &[Tensor<f64>]| -> Result<f64> {
        let consts: Vec<Var<f64>> = point.iter().map(|t| Var::constant(t.clone())).collect();
        project(&f(&consts)?)?.value().item()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport::default();
    let mut point: Vec<Tensor<f64>> = inputs.to_vec();
    for (which, var) in vars.iter().enumerate() {
        let analytic = var.grad().map(Tensor::into_data).unwrap_or_else(|| vec![0.0; var.value().len()]);
        let n = analytic.len();
        let elements: Vec<usize> = match cfg.max_elements_per_input {
            Some(k) if k < n => rand::seq::index::sample(&mut rng, n, k).into_vec(),
            _ => (0..n).collect(),
        };
        for i in elements {
            let original = point[which].data()[i];
            point[which].data_mut()[i] = original + cfg.step;
            let plus = eval(&point)?;
            point[which].data_mut()[i] = original - cfg.step;
            let minus = eval(&point)?;
            point[which].data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let rel = relative_error(analytic[i], numeric, cfg.abs_floor);
            report.checked += 1;
            report.max_abs = report.max_abs.max((analytic[i] - numeric).abs());
            if rel > report.max_rel || report.worst.is_none() {
                report.max_rel = report.max_rel.max(rel);
                report.worst = Some((which, i, analytic[i], numeric));
            }
        }
    }
    Ok(report)
}
