use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{EncodedExample, RawExample};
use crate::error::DataError;
use crate::rng::{self, Stream};

/// Train / validation / test proportions.
pub const DEFAULT_RATIOS: [f64; 3] = [0.7, 0.1, 0.2];

pub trait Labeled {
    fn label(&self) -> usize;
}

impl Labeled for RawExample {
    fn label(&self) -> usize {
        self.label
    }
}

impl Labeled for EncodedExample {
    fn label(&self) -> usize {
        self.label
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
}

pub type DatasetSplit = Split<EncodedExample>;

impl<T> Split<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&[T]) -> Vec<U>) -> Split<U> {
        Split {
            train: f(&self.train),
            validation: f(&self.validation),
            test: f(&self.test),
        }
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.validation.len(), self.test.len()]
    }

    pub fn iter_all(&self) -> impl Iterator<Item = &T> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }
}

fn largest_remainder(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, q) in counts.iter_mut().zip(&quotas) {
        *c = q.floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    // stable sort keeps lower split index first on equal remainders
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    // every split gets at least one example of the class
    for i in 0..3 {
        if counts[i] == 0 {
            let donor = (0..3).max_by_key(|&j| (counts[j], std::cmp::Reverse(j))).unwrap();
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    counts
}

/// Per-class seeded shuffle followed by largest-remainder apportioning.
///
/// Within each split, examples keep their original relative order.
pub fn stratified_split<T: Labeled + Clone>(
    items: &[T],
    ratios: [f64; 3],
    seed: u64,
) -> Result<Split<T>, DataError> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(DataError::BadRatios(ratios));
    }

    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        by_class.entry(item.label()).or_default().push(i);
    }

    let mut rng = rng::stream(seed, Stream::Split, 0);
    let mut assignment: Vec<[Vec<usize>; 3]> = Vec::new();
    for (&class, indices) in &by_class {
        if indices.len() < 3 {
            return Err(DataError::ClassTooSmall {
                class,
                count: indices.len(),
            });
        }
        let mut shuffled = indices.clone();
        shuffled.shuffle(&mut rng);
        let [n_train, n_val, _] = largest_remainder(shuffled.len(), &ratios);
        let test = shuffled.split_off(n_train + n_val);
        let val = shuffled.split_off(n_train);
        assignment.push([shuffled, val, test]);
    }

    let mut parts: [Vec<usize>; 3] = Default::default();
    for class_parts in assignment {
        for (dst, src) in parts.iter_mut().zip(class_parts) {
            dst.extend(src);
        }
    }
    let [mut train, mut val, mut test] = parts;
    let gather = |idx: &mut Vec<usize>| -> Vec<T> {
        idx.sort_unstable();
        idx.iter().map(|&i| items[i].clone()).collect()
    };
    Ok(Split {
        train: gather(&mut train),
        validation: gather(&mut val),
        test: gather(&mut test),
    })
}
