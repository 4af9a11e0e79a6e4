use super::{ensure_points_inside, ensure_same_size, Point, SaliencyMap};
use crate::error::{Error, Result};

/// Stabilizer inside the KL logarithm and denominator.
pub const KL_EPSILON: f64 = 1e-7;

fn normalized(op: &'static str, what: &str, values: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::invalid(op, format!("{what} map has negative or non-finite values")));
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Err(Error::degenerate(op, format!("{what} map sums to zero")));
    }
    Ok(values.iter().map(|&v| v / total).collect())
}

/// `sum_i P_i ln(eps + P_i / (eps + Q_i))` with `P`, `Q` the sum-normalized
/// ground truth and prediction.
pub fn kl_divergence_values(gt: &[f64], pred: &[f64]) -> Result<f64> {
    if gt.len() != pred.len() {
        return Err(Error::shape("kldiv", format!("lengths differ: {} vs {}", gt.len(), pred.len())));
    }
    let p = normalized("kldiv", "ground-truth", gt)?;
    let q = normalized("kldiv", "predicted", pred)?;
    Ok(p.iter().zip(&q).map(|(&p, &q)| p * (KL_EPSILON + p / (KL_EPSILON + q)).ln()).sum())
}

/// Pearson correlation of two equally long sequences.
pub fn pearson_values(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("cc", format!("lengths differ: {} vs {}", a.len(), b.len())));
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        ab += dx * dy;
        aa += dx * dx;
        bb += dy * dy;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::degenerate("cc", "a map has zero variance"));
    }
    Ok(ab / (aa * bb).sqrt())
}

pub fn kl_divergence(gt: &SaliencyMap, pred: &SaliencyMap) -> Result<f64> {
    ensure_same_size("kldiv", gt, pred)?;
    kl_divergence_values(gt.values(), pred.values())
}

pub fn cc(gt: &SaliencyMap, pred: &SaliencyMap) -> Result<f64> {
    ensure_same_size("cc", gt, pred)?;
    pearson_values(gt.values(), pred.values())
}

/// Histogram intersection of the sum-normalized maps.
pub fn sim(gt: &SaliencyMap, pred: &SaliencyMap) -> Result<f64> {
    ensure_same_size("sim", gt, pred)?;
    let p = normalized("sim", "ground-truth", gt.values())?;
    let q = normalized("sim", "predicted", pred.values())?;
    Ok(p.iter().zip(&q).map(|(&a, &b)| a.min(b)).sum())
}

/// Mean z-score of the prediction at the fixations (population standard
/// deviation). A constant prediction scores 0.
pub fn nss(fixations: &[Point], pred: &SaliencyMap) -> Result<f64> {
    ensure_points_inside("nss", pred, fixations)?;
    let v = pred.values();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    if std == 0.0 {
        return Ok(0.0);
    }
    Ok(fixations.iter().map(|&p| (pred.at(p) - mean) / std).sum::<f64>() / fixations.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(w: usize, v: &[f64]) -> SaliencyMap {
        SaliencyMap::new(w, v.len() / w, v.to_vec()).unwrap()
    }

    #[test]
    fn kl_one_hot_vs_uniform() {
        let gt = map(2, &[1.0, 0.0, 0.0, 0.0]);
        let pred = map(2, &[1.0; 4]);
        let expect = (KL_EPSILON + 1.0 / (KL_EPSILON + 0.25)).ln();
        assert!((kl_divergence(&gt, &pred).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 4f64.ln()).abs() < 1e-5);
    }

    #[test]
    fn kl_is_asymmetric() {
        let a = map(2, &[0.7, 0.1, 0.1, 0.1]);
        let b = map(2, &[0.25, 0.25, 0.4, 0.1]);
        let (ab, ba) = (kl_divergence(&a, &b).unwrap(), kl_divergence(&b, &a).unwrap());
        assert!((ab - ba).abs() > 1e-3);
    }

    #[test]
    fn kl_identical_is_near_zero_and_zero_map_errors() {
        let a = map(3, &[0.2, 0.5, 0.1, 0.9, 0.3, 0.4]);
        assert!(kl_divergence(&a, &a).unwrap().abs() < 1e-5);
        assert!(kl_divergence(&a, &map(3, &[0.0; 6])).is_err());
    }

    #[test]
    fn nss_hand_case() {
        let pred = map(2, &[1.0, 0.0, 0.0, 0.0]);
        let v = nss(&[Point::new(0, 0)], &pred).unwrap();
        // (1 - 0.25) / sqrt(0.1875)
        assert!((v - 3f64.sqrt()).abs() < 1e-12);
        assert!((v - 1.732).abs() < 1e-3);
        assert_eq!(nss(&[Point::new(1, 1)], &map(2, &[3.0; 4])).unwrap(), 0.0);
        assert!(nss(&[], &pred).is_err());
    }

    #[test]
    fn sim_cases() {
        let a = map(2, &[1.0, 1.0, 0.0, 0.0]);
        let b = map(2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(sim(&a, &b).unwrap(), 0.5);
        assert_eq!(sim(&a, &a).unwrap(), 1.0);
        assert_eq!(sim(&a, &map(2, &[0.0, 0.0, 1.0, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn cc_cases() {
        let a = map(3, &[0.2, 0.5, 0.1, 0.9, 0.3, 0.4]);
        assert!((cc(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((cc(&a, &a.map(|v| 2.0 - v)).unwrap() + 1.0).abs() < 1e-12);
        assert!(cc(&a, &map(3, &[1.0; 6])).is_err());
    }
}
