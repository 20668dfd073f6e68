//! Two-level split: the dataset is cut into D_train / D_test, and D_test is
//! halved into D′_train / D′_test for the estimator.

use serde::{Deserialize, Serialize};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

/// Row indices of the four disjoint splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    /// `[train, test]` fractions of the full dataset.
    pub fractions: [f64; 2],
    #[serde(skip)]
    pub d_train: Vec<usize>,
    #[serde(skip)]
    pub d_test: Vec<usize>,
    #[serde(skip)]
    pub d_prime_train: Vec<usize>,
    #[serde(skip)]
    pub d_prime_test: Vec<usize>,
    pub sizes: SplitSizes,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitSizes {
    pub d_train: usize,
    pub d_test: usize,
    pub d_prime_train: usize,
    pub d_prime_test: usize,
}

/// Seeded shuffle, contiguous cut at `fractions[0]`, then the test part is
/// halved (the estimator-training half gets the smaller share when odd).
pub fn split(n: usize, plan_seed: u64, fractions: [f64; 2]) -> Result<SplitPlan> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions[0] + fractions[1] - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!("fractions {fractions:?} must be in [0, 1] and sum to 1")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(plan_seed, "split")));
    let n_train = (n as f64 * fractions[0]).round() as usize;
    let d_test = order.split_off(n_train.min(n));
    let d_train = order;
    let half = d_test.len() / 2;
    let d_prime_train = d_test[..half].to_vec();
    let d_prime_test = d_test[half..].to_vec();
    for (name, set) in [
        ("D_train", &d_train),
        ("D'_train", &d_prime_train),
        ("D'_test", &d_prime_test),
    ] {
        if set.is_empty() {
            return Err(Error::Split(format!("{name} is empty for n = {n}, fractions {fractions:?}")));
        }
    }
    let sizes = SplitSizes {
        d_train: d_train.len(),
        d_test: d_test.len(),
        d_prime_train: d_prime_train.len(),
        d_prime_test: d_prime_test.len(),
    };
    Ok(SplitPlan {
        seed: plan_seed,
        fractions,
        d_train,
        d_test,
        d_prime_train,
        d_prime_test,
        sizes,
    })
}

impl SplitPlan {
    /// Recomputes the membership of a deserialized plan.
    pub fn rederive(&self, n: usize) -> Result<Self> {
        let plan = split(n, self.seed, self.fractions)?;
        if plan.sizes != self.sizes {
            return Err(Error::Split(format!(
                "plan sizes {:?} do not match a dataset of {n} examples",
                self.sizes
            )));
        }
        Ok(plan)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
