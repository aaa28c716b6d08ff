//! Seeded synthetic datasets for tests, demos and the acceptance harness.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::EmbeddingCorpus;
use crate::features::RankingDataset;
use crate::rng;

fn normal(r: &mut impl Rng) -> f64 {
    StandardNormal.sample(r)
}

/// Columns of [`feature_dataset`].
pub const INFORMATIVE: [usize; 4] = [0, 1, 2, 3];

/// Twelve features over `n_queries * docs_per_query` rows. Four hidden bits
/// set the grade (`sum b_i 2^i`). Columns 0..4 are the bits plus noise,
/// columns 4..8 noisier copies of columns 0..4, columns 8..12 pure noise.
pub fn feature_dataset(n_queries: usize, docs_per_query: usize, seed: u64) -> RankingDataset {
    let mut r = rng::stream(seed, "synth-features", 0);
    let n = n_queries * docs_per_query;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut qids = Vec::with_capacity(n);
    for row in 0..n {
        let bits: [u32; 4] = std::array::from_fn(|_| r.gen_range(0..2));
        let informative: Vec<f64> = bits
            .iter()
            .map(|&b| f64::from(b) + 0.3 * normal(&mut r))
            .collect();
        let copies: Vec<f64> = informative
            .iter()
            .map(|v| v + 0.4 * normal(&mut r))
            .collect();
        let noise: Vec<f64> = (0..4).map(|_| normal(&mut r)).collect();
        rows.push([informative, copies, noise].concat());
        labels.push(bits.iter().enumerate().map(|(i, &b)| b << i).sum());
        qids.push(format!("q{}", row / docs_per_query));
    }
    RankingDataset::new(rows, labels, qids).expect("well-formed synthetic data")
}

/// Isotropic Gaussian blobs with unit spread around centers drawn in
/// `[-10, 10]^dim`. Returns the points and the blob of each.
pub fn blobs(n: usize, centers: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut r = rng::stream(seed, "synth-blobs", 0);
    let c: Vec<Vec<f64>> = (0..centers)
        .map(|_| (0..dim).map(|_| r.gen_range(-10.0..10.0)).collect())
        .collect();
    let mut points = Vec::with_capacity(n);
    let mut member = Vec::with_capacity(n);
    for i in 0..n {
        let b = i % centers;
        points.push(c[b].iter().map(|m| m + normal(&mut r)).collect());
        member.push(b);
    }
    (points, member)
}

/// Blobs whose centers sit on a ring of radius `radius`, so separation is
/// controlled exactly.
pub fn ring_blobs(n: usize, centers: usize, radius: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut r = rng::stream(seed, "synth-ring", 0);
    let mut points = Vec::with_capacity(n);
    let mut member = Vec::with_capacity(n);
    for i in 0..n {
        let b = i % centers;
        let angle = std::f64::consts::TAU * b as f64 / centers as f64;
        points.push(vec![
            radius * angle.cos() + normal(&mut r),
            radius * angle.sin() + normal(&mut r),
        ]);
        member.push(b);
    }
    (points, member)
}

fn labeled(n: usize, dim: usize, seed: u64, tag: &str, gap: f64, flip: f64) -> EmbeddingCorpus {
    let mut r = rng::stream(seed, tag, 0);
    let direction: Vec<f64> = {
        let v: Vec<f64> = (0..dim).map(|_| normal(&mut r)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect()
    };
    let mut vectors = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while vectors.len() < n {
        let v: Vec<f64> = (0..dim).map(|_| normal(&mut r) + 0.5).collect();
        let s: f64 = v.iter().zip(&direction).map(|(a, b)| a * b).sum::<f64>()
            - 0.5 * direction.iter().sum::<f64>();
        if s.abs() < gap {
            continue;
        }
        let mut label = u8::from(s > 0.0);
        if r.gen_bool(flip) {
            label = 1 - label;
        }
        vectors.push(v);
        labels.push(label);
    }
    EmbeddingCorpus::from_vectors(vectors, Some(labels)).expect("well-formed synthetic data")
}

/// Two classes split by a hyperplane with a margin of 0.5 on each side.
pub fn separable_corpus(n: usize, dim: usize, seed: u64) -> EmbeddingCorpus {
    labeled(n, dim, seed, "synth-separable", 0.5, 0.0)
}

/// Two classes split by a hyperplane with 15% of the labels flipped.
pub fn overlapping_corpus(n: usize, dim: usize, seed: u64) -> EmbeddingCorpus {
    labeled(n, dim, seed, "synth-overlapping", 0.0, 0.15)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_seeded() {
        assert_eq!(feature_dataset(3, 5, 1), feature_dataset(3, 5, 1));
        assert_eq!(blobs(10, 2, 3, 4), blobs(10, 2, 3, 4));
        assert_ne!(blobs(10, 2, 3, 4).0, blobs(10, 2, 3, 5).0);
        let c = separable_corpus(50, 3, 2);
        assert_eq!(c.len(), 50);
        let ones = c.labels().unwrap().iter().filter(|&&l| l == 1).count();
        assert!(ones > 5 && ones < 45);
    }
}
