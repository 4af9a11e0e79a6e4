//! Saliency evaluation: map type, fixation extraction, the six scores and
//! run-level aggregation.

mod auc;
mod fixations;
pub mod report;
mod scores;

pub use auc::{auc_judd, auc_shuffled, roc_area, SHUFFLED_SPLITS};
pub use fixations::{extract_fixations, nms_radius, MAX_FIXATIONS, MIN_FIXATIONS};
pub use report::{evaluate_run, EvalOptions, FrameMetrics, MetricReport, METRIC_NAMES};
pub use scores::{cc, kl_divergence, kl_divergence_values, nss, pearson_values, sim, KL_EPSILON};

use crate::error::{Error, Result};

/// Row-major grid of real values, `values[y * width + x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

/// Integer pixel coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    pub x: usize,
    pub y: usize,
}

impl Point {
    pub fn new(x: usize, y: usize) -> Self {
        Point { x, y }
    }
}

impl SaliencyMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::shape("saliency map", "width and height must be positive"));
        }
        if values.len() != width * height {
            return Err(Error::shape(
                "saliency map",
                format!("{width}x{height} map needs {} values, got {}", width * height, values.len()),
            ));
        }
        Ok(SaliencyMap { width, height, values })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let values = (0..width * height).map(|i| f(i % width, i / width)).collect();
        Self::new(width, height, values)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, p: Point) -> f64 {
        self.values[p.y * self.width + p.x]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        SaliencyMap { width: self.width, height: self.height, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x < self.width && p.y < self.height
    }
}

pub(crate) fn ensure_same_size(op: &'static str, a: &SaliencyMap, b: &SaliencyMap) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::shape(
            op,
            format!("map sizes differ: {}x{} vs {}x{}", a.width, a.height, b.width, b.height),
        ));
    }
    Ok(())
}

pub(crate) fn ensure_points_inside(op: &'static str, map: &SaliencyMap, points: &[Point]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::invalid(op, "fixation set is empty"));
    }
    if let Some(p) = points.iter().find(|p| !map.contains(**p)) {
        return Err(Error::invalid(
            op,
            format!("fixation ({}, {}) outside {}x{} map", p.x, p.y, map.width, map.height),
        ));
    }
    Ok(())
}
