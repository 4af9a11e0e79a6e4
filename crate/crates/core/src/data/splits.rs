//! Category-stratified train/validation/test partition at a 3:1:1 ratio.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SplitCatalog {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitCatalog {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

/// `round(n / 5)` with halves rounded up.
fn fifth(n: usize) -> usize {
    (2 * n + 5) / 10
}

/// (train, val, test) counts for a category of `n` videos.
///
/// A lone video goes to test. Otherwise test takes a fifth (at least one),
/// validation a fifth of what is available, train the rest.
pub fn category_split_sizes(n: usize) -> (usize, usize, usize) {
    if n <= 1 {
        return (0, 0, n);
    }
    let test = fifth(n).max(1);
    let val = fifth(n).min(n - test);
    (n - test - val, val, test)
}

/// Partitions `(video_id, category_id)` pairs. Within each category the
/// videos are ordered by id, shuffled with a generator seeded from `seed` and
/// the category, and cut into test, validation and train in that order.
/// Output lists are sorted by id.
pub fn make_splits(catalog: &[(String, u32)], seed: u64) -> Result<SplitCatalog> {
    if catalog.is_empty() {
        return Err(Error::invalid("make_splits", "catalog is empty"));
    }
    let mut by_category: BTreeMap<u32, Vec<&str>> = BTreeMap::new();
    for (id, cat) in catalog {
        by_category.entry(*cat).or_default().push(id);
    }
    let mut out = SplitCatalog::default();
    for (cat, mut ids) in by_category {
        ids.sort_unstable();
        let before = ids.len();
        ids.dedup();
        if ids.len() != before {
            return Err(Error::invalid("make_splits", format!("duplicate video id in category {cat}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(cat) << 32));
        ids.shuffle(&mut rng);
        let (_, val, test) = category_split_sizes(ids.len());
        out.test.extend(ids[..test].iter().map(|s| s.to_string()));
        out.val.extend(ids[test..test + val].iter().map(|s| s.to_string()));
        out.train.extend(ids[test + val..].iter().map(|s| s.to_string()));
    }
    out.train.sort();
    out.val.sort();
    out.test.sort();
    Ok(out)
}
