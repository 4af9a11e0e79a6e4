//! Seeded inputs shared by the benchmarks.

use msafnet_core::gradcheck::random_tensor;
use msafnet_core::metrics::{extract_fixations, Point, SaliencyMap};
use msafnet_core::Tensor;

/// Uniform single-precision tensor in `[lo, hi)`.
pub fn tensor_f32(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f32> {
    random_tensor(shape, seed, lo, hi).cast()
}

/// A ground-truth map with three Gaussian blobs, a noisy prediction of it,
/// the ground-truth fixations and a pool of other fixations.
pub struct MetricCase {
    pub truth: SaliencyMap,
    pub prediction: SaliencyMap,
    pub fixations: Vec<Point>,
    pub pool: Vec<Point>,
}

impl MetricCase {
    pub fn new(size: usize, seed: u64) -> Self {
        let blob = |x: usize, y: usize, cx: f64, cy: f64| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            (-(dx * dx + dy * dy) / (size as f64)).exp()
        };
        let s = size as f64;
        let truth = SaliencyMap::from_fn(size, size, |x, y| {
            blob(x, y, 0.25 * s, 0.4 * s) + 0.7 * blob(x, y, 0.7 * s, 0.5 * s) + 0.4 * blob(x, y, 0.5 * s, 0.8 * s)
        })
        .expect("valid map");
        let noise = random_tensor(&[size * size], seed, 0.0, 0.3);
        let prediction = SaliencyMap::new(size, size, truth.values().iter().zip(noise.data()).map(|(a, b)| a + b).collect())
            .expect("valid map");
        let fixations = extract_fixations(&truth).expect("fixations");
        let coords = random_tensor(&[64, 2], seed ^ 1, 0.0, s);
        let pool = coords.data().chunks(2).map(|c| Point::new(c[0] as usize, c[1] as usize)).collect();
        MetricCase { truth, prediction, fixations, pool }
    }
}
