use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ensure_points_inside, Point, SaliencyMap};
use crate::error::{Error, Result};

pub const SHUFFLED_SPLITS: usize = 100;

/// ROC area with positives as the threshold source.
///
/// Thresholds are the distinct positive scores in descending order. At each,
/// the true-positive rate is the fraction of positives at or above it and the
/// false-positive rate the fraction of negatives at or above it. The curve
/// runs from (0,0) through those points to (1,1) and is integrated with the
/// trapezoid rule.
pub fn roc_area(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::degenerate("auc", "need at least one positive and one negative"));
    }
    let mut neg = negatives.to_vec();
    neg.sort_by(|a, b| b.total_cmp(a));
    let mut pos = positives.to_vec();
    pos.sort_by(|a, b| b.total_cmp(a));
    let mut thresholds = pos.clone();
    thresholds.dedup();
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let (mut tp_count, mut fp_count) = (0usize, 0usize);
    let (mut prev_tp, mut prev_fp) = (0.0, 0.0);
    let mut area = 0.0;
    for &t in &thresholds {
        while tp_count < pos.len() && pos[tp_count] >= t {
            tp_count += 1;
        }
        while fp_count < neg.len() && neg[fp_count] >= t {
            fp_count += 1;
        }
        let (tp, fp) = (tp_count as f64 / np, fp_count as f64 / nn);
        area += (fp - prev_fp) * (tp + prev_tp) / 2.0;
        (prev_tp, prev_fp) = (tp, fp);
    }
    area += (1.0 - prev_fp) * (1.0 + prev_tp) / 2.0;
    Ok(area)
}

/// AUC with every non-fixated pixel as a negative.
pub fn auc_judd(fixations: &[Point], pred: &SaliencyMap) -> Result<f64> {
    ensure_points_inside("auc_judd", pred, fixations)?;
    let fixated: BTreeSet<usize> = fixations.iter().map(|p| p.y * pred.width() + p.x).collect();
    let positives: Vec<f64> = fixated.iter().map(|&i| pred.values()[i]).collect();
    let negatives: Vec<f64> = pred
        .values()
        .iter()
        .enumerate()
        .filter(|(i, _)| !fixated.contains(i))
        .map(|(_, &v)| v)
        .collect();
    roc_area(&positives, &negatives)
}

/// Shuffled AUC: negatives are fixation locations from other videos.
///
/// Each of `splits` rounds draws as many negatives as there are fixations
/// from `negative_pool` (without replacement when the pool is large enough)
/// and the areas are averaged.
pub fn auc_shuffled(
    fixations: &[Point],
    pred: &SaliencyMap,
    negative_pool: &[Point],
    splits: usize,
    seed: u64,
) -> Result<f64> {
    ensure_points_inside("auc_shuffled", pred, fixations)?;
    if negative_pool.is_empty() {
        return Err(Error::invalid("auc_shuffled", "negative pool is empty"));
    }
    if let Some(p) = negative_pool.iter().find(|p| !pred.contains(**p)) {
        return Err(Error::invalid("auc_shuffled", format!("pool point ({}, {}) outside map", p.x, p.y)));
    }
    if splits == 0 {
        return Err(Error::invalid("auc_shuffled", "need at least one split"));
    }
    let positives: Vec<f64> = fixations.iter().map(|&p| pred.at(p)).collect();
    let k = fixations.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..splits {
        let negatives: Vec<f64> = if negative_pool.len() >= k {
            sample(&mut rng, negative_pool.len(), k).into_iter().map(|i| pred.at(negative_pool[i])).collect()
        } else {
            (0..k).map(|_| pred.at(negative_pool[rng.gen_range(0..negative_pool.len())])).collect()
        };
        total += roc_area(&positives, &negatives)?;
    }
    Ok(total / splits as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct sweep: for each threshold count by scanning, no sorting tricks.
    fn sweep(pos: &[f64], neg: &[f64]) -> f64 {
        let mut ts: Vec<f64> = pos.to_vec();
        ts.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ts.dedup();
        let mut pts = vec![(0.0, 0.0)];
        for t in ts {
            let tp = pos.iter().filter(|&&v| v >= t).count() as f64 / pos.len() as f64;
            let fp = neg.iter().filter(|&&v| v >= t).count() as f64 / neg.len() as f64;
            pts.push((fp, tp));
        }
        pts.push((1.0, 1.0));
        pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
    }

    #[test]
    fn constant_prediction_is_half() {
        let m = SaliencyMap::constant(8, 8, 0.3).unwrap();
        assert_eq!(auc_judd(&[Point::new(1, 1), Point::new(5, 2)], &m).unwrap(), 0.5);
    }

    #[test]
    fn perfect_prediction_near_one() {
        let fix: Vec<Point> = (0..5).map(|k| Point::new(5 + 10 * k, 7 + 9 * k)).collect();
        let m = SaliencyMap::from_fn(64, 64, |x, y| if fix.contains(&Point::new(x, y)) { 1.0 } else { 0.1 }).unwrap();
        assert!(auc_judd(&fix, &m).unwrap() >= 0.99);
    }

    #[test]
    fn matches_sweep() {
        let pos = [0.9, 0.3, 0.3, 0.7, 0.1];
        let neg = [0.5, 0.3, 0.05, 0.95, 0.2, 0.7, 0.7];
        assert_eq!(roc_area(&pos, &neg).unwrap(), sweep(&pos, &neg));
    }

    #[test]
    fn shuffled_with_positive_negatives_is_half() {
        let m = SaliencyMap::from_fn(16, 16, |x, y| (x * 16 + y) as f64).unwrap();
        let fix = [Point::new(1, 2), Point::new(7, 9), Point::new(12, 3)];
        assert_eq!(auc_shuffled(&fix, &m, &fix, 10, 1).unwrap(), 0.5);
        assert!(auc_shuffled(&fix, &m, &[], 10, 1).is_err());
    }
}
