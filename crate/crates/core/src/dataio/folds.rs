use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Sample};

pub const FOLD_COUNT: usize = 3;

/// Assignment of products to cross-validation folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub fold_count: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, product_id: &str) -> Option<usize> {
        self.assignment.get(product_id).copied()
    }

    /// `(train, test)` for held-out fold `fold`. Samples of unknown products
    /// are an error.
    pub fn split<'a>(
        &self,
        samples: &'a [Sample],
        fold: usize,
    ) -> Result<(Vec<&'a Sample>, Vec<&'a Sample>), DataError> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for s in samples {
            let f = self
                .fold_of(&s.product_id)
                .ok_or_else(|| DataError::Invalid(format!("product `{}` has no fold", s.product_id)))?;
            if f == fold {
                test.push(s);
            } else {
                train.push(s);
            }
        }
        Ok((train, test))
    }

    /// A plan with every product in fold 0.
    pub fn single(samples: &[Sample]) -> Self {
        Self {
            fold_count: 1,
            assignment: samples.iter().map(|s| (s.product_id.clone(), 0)).collect(),
        }
    }
}

/// Split products into [`FOLD_COUNT`] folds. Products with at least one
/// defective image are shuffled and dealt round-robin, so defective-product
/// counts differ by at most one; the remaining products then go one at a time
/// to the fold holding the fewest images.
pub fn make_folds(samples: &[Sample], seed: u64) -> Result<FoldPlan, DataError> {
    let mut images: BTreeMap<&str, usize> = BTreeMap::new();
    let mut defective: BTreeSet<&str> = BTreeSet::new();
    for s in samples {
        *images.entry(&s.product_id).or_default() += 1;
        if s.is_defective() {
            defective.insert(&s.product_id);
        }
    }
    if images.len() < FOLD_COUNT {
        return Err(DataError::Invalid(format!(
            "{} products cannot be split into {FOLD_COUNT} folds",
            images.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<&str> = defective.iter().copied().collect();
    let mut neg: Vec<&str> = images.keys().copied().filter(|p| !defective.contains(p)).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut load = [0usize; FOLD_COUNT];
    let mut assignment = BTreeMap::new();
    for (i, p) in pos.into_iter().enumerate() {
        let f = i % FOLD_COUNT;
        load[f] += images[p];
        assignment.insert(p.to_string(), f);
    }
    for p in neg {
        let f = (0..FOLD_COUNT).min_by_key(|&f| (load[f], f)).unwrap();
        load[f] += images[p];
        assignment.insert(p.to_string(), f);
    }
    Ok(FoldPlan {
        fold_count: FOLD_COUNT,
        assignment,
    })
}

/// Keep `n` randomly chosen defective samples and every non-defective one,
/// preserving order. The choice depends only on `seed` and the input order.
pub fn subsample_positives<'a>(train: &[&'a Sample], n: usize, seed: u64) -> Result<Vec<&'a Sample>, DataError> {
    let positives: Vec<usize> = (0..train.len()).filter(|&i| train[i].is_defective()).collect();
    if n > positives.len() {
        return Err(DataError::Invalid(format!(
            "cannot keep {n} positives, only {} available",
            positives.len()
        )));
    }
    let mut chosen = positives;
    chosen.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let keep: BTreeSet<usize> = chosen.into_iter().take(n).collect();
    Ok(train
        .iter()
        .enumerate()
        .filter(|(i, s)| !s.is_defective() || keep.contains(i))
        .map(|(_, s)| *s)
        .collect())
}
