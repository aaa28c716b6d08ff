//! Ranking and classification metrics plus seeded fold plans.

use std::collections::HashMap;
use std::hash::Hash;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

fn dcg<I: Iterator<Item = u32>>(grades: I, depth: usize) -> f64 {
    grades
        .take(depth)
        .enumerate()
        .map(|(r, g)| (2f64.powi(g as i32) - 1.0) / ((r + 2) as f64).log2())
        .sum()
}

/// nDCG at `depth` with gain `2^rel - 1` and a `log2(rank + 1)` discount.
/// Unjudged documents have grade 0; the ideal ordering uses every judged
/// grade. Returns 0 when no judged document is relevant.
pub fn ndcg_at<K: Eq + Hash>(ranking: &[K], relevance: &HashMap<K, u32>, depth: usize) -> f64 {
    if depth == 0 {
        return 0.0;
    }
    let mut ideal: Vec<u32> = relevance.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(ideal.into_iter(), depth);
    if idcg == 0.0 {
        return 0.0;
    }
    dcg(
        ranking
            .iter()
            .map(|d| relevance.get(d).copied().unwrap_or(0)),
        depth,
    ) / idcg
}

fn confusion(preds: &[u8], labels: &[u8], positive: u8) -> Result<(usize, usize, usize)> {
    if preds.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            got: preds.len(),
        });
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for (&p, &l) in preds.iter().zip(labels) {
        match (p == positive, l == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Ok((tp, fp, fn_))
}

fn f1_from(tp: usize, fp: usize, fn_: usize) -> f64 {
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Binary F1 of the positive class (label 1).
pub fn f1(preds: &[u8], labels: &[u8]) -> Result<f64> {
    let (tp, fp, fn_) = confusion(preds, labels, 1)?;
    Ok(f1_from(tp, fp, fn_))
}

/// Unweighted mean of the per-class F1 scores for classes 0 and 1.
pub fn macro_f1(preds: &[u8], labels: &[u8]) -> Result<f64> {
    let (a, b, c) = confusion(preds, labels, 0)?;
    let (d, e, f) = confusion(preds, labels, 1)?;
    Ok(0.5 * (f1_from(a, b, c) + f1_from(d, e, f)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    /// Fold id of each record.
    pub folds: Vec<usize>,
    pub n_folds: usize,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len())
            .filter(|&i| self.folds[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len())
            .filter(|&i| self.folds[i] != fold)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.folds {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffle `0..n` with `seed` and deal positions round-robin into `n_folds`
/// folds, so sizes differ by at most one and lower fold ids take the remainder.
pub fn make_folds(n: usize, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds == 0 || n_folds > n {
        return Err(Error::InvalidParameter(format!(
            "cannot split {n} records into {n_folds} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "folds", 0));
    let mut folds = vec![0; n];
    for (pos, &record) in order.iter().enumerate() {
        folds[record] = pos % n_folds;
    }
    Ok(FoldPlan {
        folds,
        n_folds,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(pairs: &[(&'static str, u32)]) -> HashMap<&'static str, u32> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn ndcg_examples() {
        let r = rel(&[("a", 3), ("b", 2), ("c", 0), ("d", 1)]);
        assert_eq!(ndcg_at(&["a", "b", "d", "c"], &r, 10), 1.0);
        assert_eq!(ndcg_at(&["a", "b"], &rel(&[("a", 0), ("b", 0)]), 10), 0.0);
        let r = rel(&[("a", 0), ("b", 1)]);
        let v = ndcg_at(&["a", "b"], &r, 10);
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn ndcg_truncates_at_depth() {
        let r = rel(&[("a", 1), ("b", 1)]);
        // Only the top document counts at depth 1; the ideal has a relevant one there.
        assert_eq!(ndcg_at(&["c", "a", "b"], &r, 1), 0.0);
        assert_eq!(ndcg_at(&["a", "c", "b"], &r, 1), 1.0);
    }

    #[test]
    fn ndcg_swapping_equal_grades_is_neutral() {
        let r = rel(&[("a", 2), ("b", 2), ("c", 1)]);
        assert_eq!(
            ndcg_at(&["c", "a", "b"], &r, 10),
            ndcg_at(&["c", "b", "a"], &r, 10)
        );
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        assert_eq!(f1(&[0, 0, 0], &[1, 0, 1]).unwrap(), 0.0);
        // TP = 2, FP = 1, FN = 1
        let v = f1(&[1, 1, 1, 0, 0], &[1, 1, 0, 1, 0]).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
        assert!(f1(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn macro_f1_averages_both_classes() {
        // class 1: tp=1 fp=1 fn=0 -> 2/3; class 0: tp=1 fp=0 fn=1 -> 2/3
        let v = macro_f1(&[1, 1, 0], &[1, 0, 0]).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn fold_examples() {
        let plan = make_folds(10, 5, 1).unwrap();
        assert_eq!(plan.sizes(), vec![2; 5]);
        assert_eq!(plan, make_folds(10, 5, 1).unwrap());
        assert_eq!(make_folds(10, 3, 9).unwrap().sizes(), vec![4, 3, 3]);
        assert!(make_folds(3, 4, 0).is_err());
    }

    #[test]
    fn folds_partition_the_records() {
        let plan = make_folds(23, 4, 77).unwrap();
        let mut all: Vec<usize> = (0..4).flat_map(|f| plan.test_indices(f)).collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        for f in 0..4 {
            let test = plan.test_indices(f);
            assert!(!test.is_empty());
            assert!(plan.train_indices(f).iter().all(|i| !test.contains(i)));
        }
    }
}
