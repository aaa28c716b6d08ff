//! Two-stage medoid clustering: classical k-medoids proposes an overcomplete
//! candidate pool, then a constrained QUBO picks exactly `k` of them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::ops::RangeInclusive;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::anneal::{solve_k_hot, AnnealConfig};
use crate::error::{Error, Result};
use crate::instances::cosine;
use crate::metrics::ndcg_at;
use crate::qubo::{BinaryQuadraticProblem, ConstrainedQubo};
use crate::timing::Stopwatch;

/// Weight of the fixed-`k` part of the medoid objective.
pub const GAMMA: f64 = 2.0;
pub const KMEDOIDS_MAX_ITER: usize = 100;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let d = points.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
    for p in points {
        if p.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point"));
        }
    }
    Ok(d)
}

/// Pairwise squared Euclidean distances.
pub fn squared_distances(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let row = |i: usize| -> Vec<f64> { points.iter().map(|q| sq_dist(&points[i], q)).collect() };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..points.len()).into_par_iter().map(row).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..points.len()).map(row).collect()
    }
}

fn euclidean_distances(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut d = squared_distances(points);
    d.iter_mut().flatten().for_each(|v| *v = v.sqrt());
    d
}

fn nearest(dist: &[Vec<f64>], medoids: &[usize]) -> Vec<usize> {
    (0..dist.len())
        .map(|i| {
            let mut best = medoids[0];
            for &m in &medoids[1..] {
                if dist[i][m] < dist[i][best] {
                    best = m;
                }
            }
            best
        })
        .collect()
}

fn total_cost(dist: &[Vec<f64>], medoids: &[usize]) -> f64 {
    (0..dist.len())
        .map(|i| {
            medoids
                .iter()
                .map(|&m| dist[i][m])
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

fn kmedoids_on(dist: &[Vec<f64>], k: usize, max_iter: usize) -> Vec<usize> {
    let n = dist.len();
    let costs: Vec<f64> = dist.iter().map(|r| r.iter().sum()).collect();
    let first = (0..n)
        .min_by(|&a, &b| costs[a].total_cmp(&costs[b]))
        .expect("nonempty");
    let mut medoids = vec![first];
    let mut gap: Vec<f64> = dist[first].clone();
    while medoids.len() < k {
        let next = (0..n)
            .filter(|i| !medoids.contains(i))
            .max_by(|&a, &b| gap[a].total_cmp(&gap[b]).then(b.cmp(&a)))
            .expect("k <= n");
        medoids.push(next);
        for i in 0..n {
            gap[i] = gap[i].min(dist[i][next]);
        }
    }
    let mut cost = total_cost(dist, &medoids);
    for _ in 0..max_iter {
        let mut best: Option<(f64, usize, usize)> = None;
        for slot in 0..k {
            for o in 0..n {
                if medoids.contains(&o) {
                    continue;
                }
                let mut trial = medoids.clone();
                trial[slot] = o;
                let c = total_cost(dist, &trial);
                if c < cost - 1e-12 * cost.abs().max(1.0) && best.map_or(true, |(bc, _, _)| c < bc)
                {
                    best = Some((c, slot, o));
                }
            }
        }
        match best {
            Some((c, slot, o)) => {
                medoids[slot] = o;
                cost = c;
            }
            None => break,
        }
    }
    medoids.sort_unstable();
    medoids
}

/// PAM: greedy build (the point of least total distance, then repeatedly the
/// point farthest from its nearest medoid) followed by best-improvement swaps
/// until none helps or `max_iter` swaps. Returns sorted point indices.
pub fn kmedoids(points: &[Vec<f64>], k: usize, max_iter: usize) -> Result<Vec<usize>> {
    check_points(points)?;
    if k == 0 || k > points.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} must lie in 1..={}",
            points.len()
        )));
    }
    Ok(kmedoids_on(&euclidean_distances(points), k, max_iter))
}

/// Mean silhouette over points; points in singleton clusters score 0.
pub fn silhouette(dist: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = dist.len();
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    if members.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = &members[&labels[i]];
        if own.len() == 1 {
            continue;
        }
        let a = own.iter().map(|&j| dist[i][j]).sum::<f64>() / (own.len() - 1) as f64;
        let b = members
            .iter()
            .filter(|(&l, _)| l != labels[i])
            .map(|(_, m)| m.iter().map(|&j| dist[i][j]).sum::<f64>() / m.len() as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

/// Davies-Bouldin index of the partition given by `labels` (any ids).
pub fn davies_bouldin(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let d = check_points(points)?;
    if labels.len() != points.len() {
        return Err(Error::Dimension {
            expected: points.len(),
            got: labels.len(),
        });
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    if members.len() < 2 {
        return Err(Error::InvalidParameter(
            "the index needs at least 2 clusters".into(),
        ));
    }
    let ids: Vec<usize> = members.keys().copied().collect();
    let centroids: Vec<Vec<f64>> = members
        .values()
        .map(|m| {
            let mut c = vec![0.0; d];
            for &i in m {
                c.iter_mut().zip(&points[i]).for_each(|(a, v)| *a += v);
            }
            c.iter_mut().for_each(|a| *a /= m.len() as f64);
            c
        })
        .collect();
    let spread: Vec<f64> = members
        .values()
        .zip(&centroids)
        .map(|(m, c)| {
            m.iter()
                .map(|&i| sq_dist(&points[i], c).sqrt())
                .sum::<f64>()
                / m.len() as f64
        })
        .collect();
    let c = ids.len();
    let mut total = 0.0;
    for i in 0..c {
        let mut worst = 0.0f64;
        for j in 0..c {
            if i == j {
                continue;
            }
            let sep = sq_dist(&centroids[i], &centroids[j]).sqrt();
            if sep == 0.0 {
                return Err(Error::UndefinedSeparation(
                    ids[i].min(ids[j]),
                    ids[i].max(ids[j]),
                ));
            }
            worst = worst.max((spread[i] + spread[j]) / sep);
        }
        total += worst;
    }
    Ok(total / c as f64)
}

/// Pick `k` from `range` maximizing silhouette minus DBI scaled by the
/// largest DBI over the range; ties go to the smaller `k`.
pub fn auto_k(points: &[Vec<f64>], range: RangeInclusive<usize>, max_iter: usize) -> Result<usize> {
    check_points(points)?;
    let n = points.len();
    if range.is_empty() {
        return Err(Error::InvalidParameter("empty k range".into()));
    }
    if *range.start() < 2 || *range.end() > n.saturating_sub(1) {
        return Err(Error::InvalidParameter(format!(
            "k range must lie within 2..={}",
            n.saturating_sub(1)
        )));
    }
    if range.start() == range.end() {
        return Ok(*range.start());
    }
    let dist = euclidean_distances(points);
    let mut scored = Vec::new();
    for k in range {
        let medoids = kmedoids_on(&dist, k, max_iter);
        let labels = nearest(&dist, &medoids);
        let dbi = davies_bouldin(points, &labels).unwrap_or(f64::INFINITY);
        scored.push((k, silhouette(&dist, &labels), dbi));
    }
    let max_dbi = scored
        .iter()
        .map(|s| s.2)
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let mut best = (scored[0].0, f64::NEG_INFINITY);
    for (k, sil, dbi) in scored {
        let norm = if max_dbi > 0.0 { dbi / max_dbi } else { 0.0 };
        let score = sil - norm;
        if score > best.1 {
            best = (k, score);
        }
    }
    Ok(best.0)
}

/// Largest double below 1; the transform saturates here instead of at 1.
pub const WELSCH_CEILING: f64 = 1.0 - f64::EPSILON / 2.0;

/// Robust dissimilarity `1 - exp(-D/2)` of squared distances.
pub fn welsch_dissimilarity(d: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = d.len();
    for (i, row) in d.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Shape(format!("distance matrix must be {n} x {n}")));
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidDistance(format!("entry ({i}, {j}) is {v}")));
            }
            if (v - d[j][i]).abs() > 1e-12 * v.abs().max(1.0) {
                return Err(Error::InvalidDistance(format!("asymmetric at ({i}, {j})")));
            }
        }
        if row[i] != 0.0 {
            return Err(Error::InvalidDistance(format!("nonzero diagonal at {i}")));
        }
    }
    Ok(d.iter()
        .map(|r| {
            r.iter()
                .map(|&v| (-(-0.5 * v).exp_m1()).min(WELSCH_CEILING))
                .collect()
        })
        .collect())
}

/// The medoid objective
/// `x^T (g 11^T - (a/2) D) x + x^T (b D 1 - 2 g k 1)` with `a = 1/k`,
/// `b = 1/n`, `g = GAMMA`, expanded onto linear and pair coefficients.
pub fn medoid_objective(delta: &[Vec<f64>], k: usize) -> Result<BinaryQuadraticProblem> {
    let n = delta.len();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "k = {k} must lie in 1..={n}"
        )));
    }
    if delta.iter().any(|r| r.len() != n) {
        return Err(Error::Shape(format!(
            "dissimilarity matrix must be {n} x {n}"
        )));
    }
    let alpha = 1.0 / k as f64;
    let beta = 1.0 / n as f64;
    let linear = (0..n)
        .map(|i| {
            let m_ii = GAMMA - 0.5 * alpha * delta[i][i];
            m_ii + beta * delta[i].iter().sum::<f64>() - 2.0 * GAMMA * k as f64
        })
        .collect();
    let pairs = (0..n).flat_map(|i| {
        (i + 1..n).map(move |j| {
            (
                i,
                j,
                2.0 * GAMMA - 0.5 * alpha * (delta[i][j] + delta[j][i]),
            )
        })
    });
    BinaryQuadraticProblem::from_parts(linear, pairs, 0.0)
}

/// Medoid objective plus an exactly-`k` penalty at twice its energy-delta bound.
pub fn build_medoid_qubo(delta: &[Vec<f64>], k: usize) -> Result<ConstrainedQubo> {
    ConstrainedQubo::new(medoid_objective(delta, k)?, k, None)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedoidCandidates {
    pub indices: Vec<usize>,
    pub source_k: usize,
}

/// Size of the classical pool for a target `k`: `min(4k, n/2)`, at least `k`.
pub fn candidate_pool_size(n: usize, k: usize) -> usize {
    (4 * k).min(n / 2).max(k).min(n)
}

pub fn candidate_pool(points: &[Vec<f64>], k: usize, max_iter: usize) -> Result<MedoidCandidates> {
    let source_k = candidate_pool_size(points.len(), k);
    Ok(MedoidCandidates {
        indices: kmedoids(points, source_k, max_iter)?,
        source_k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    /// Sorted point indices.
    pub medoids: Vec<usize>,
    pub energy: f64,
    pub feasible: bool,
    pub repaired: bool,
}

/// Squared distances among `indices`, divided by their median off-diagonal value.
pub fn scaled_squared_distances(points: &[Vec<f64>], indices: &[usize]) -> Vec<Vec<f64>> {
    let sub: Vec<Vec<f64>> = indices.iter().map(|&i| points[i].clone()).collect();
    let mut d = squared_distances(&sub);
    let mut off: Vec<f64> = (0..d.len())
        .flat_map(|i| (i + 1..d.len()).map(move |j| (i, j)))
        .map(|(i, j)| d[i][j])
        .collect();
    off.sort_by(f64::total_cmp);
    let median = match off.len() {
        0 => 0.0,
        m if m % 2 == 1 => off[m / 2],
        m => 0.5 * (off[m / 2 - 1] + off[m / 2]),
    };
    if median > 0.0 {
        d.iter_mut().flatten().for_each(|v| *v /= median);
    }
    d
}

/// Select exactly `k` of the candidates by annealing the medoid QUBO.
pub fn refine_medoids(
    points: &[Vec<f64>],
    candidates: &MedoidCandidates,
    k: usize,
    cfg: &AnnealConfig,
) -> Result<Refinement> {
    check_points(points)?;
    let idx = &candidates.indices;
    if let Some(&i) = idx.iter().find(|&&i| i >= points.len()) {
        return Err(Error::IndexOutOfRange {
            index: i,
            n: points.len(),
        });
    }
    if idx.iter().collect::<HashSet<_>>().len() != idx.len() {
        return Err(Error::InvalidParameter(
            "candidate indices must be unique".into(),
        ));
    }
    if idx.len() < k {
        return Err(Error::InvalidParameter(format!(
            "{} candidates cannot yield {k} medoids",
            idx.len()
        )));
    }
    let delta = welsch_dissimilarity(&scaled_squared_distances(points, idx))?;
    let q = build_medoid_qubo(&delta, k)?;
    let sol = solve_k_hot(&q, cfg, true)?;
    let mut medoids: Vec<usize> = sol.bits.support().into_iter().map(|p| idx[p]).collect();
    medoids.sort_unstable();
    Ok(Refinement {
        medoids,
        energy: sol.energy,
        feasible: sol.feasible,
        repaired: sol.repaired,
    })
}

/// Nearest medoid (by Euclidean distance) for every point; ties go to the
/// lowest medoid index.
pub fn assign_to_medoids(points: &[Vec<f64>], medoids: &[usize]) -> Result<Vec<usize>> {
    check_points(points)?;
    if medoids.is_empty() {
        return Err(Error::InvalidParameter("no medoids".into()));
    }
    if let Some(&m) = medoids.iter().find(|&&m| m >= points.len()) {
        return Err(Error::IndexOutOfRange {
            index: m,
            n: points.len(),
        });
    }
    let mut sorted = medoids.to_vec();
    sorted.sort_unstable();
    Ok(points
        .iter()
        .map(|p| {
            let mut best = sorted[0];
            let mut best_d = sq_dist(p, &points[best]);
            for &m in &sorted[1..] {
                let d = sq_dist(p, &points[m]);
                if d < best_d {
                    best = m;
                    best_d = d;
                }
            }
            best
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub k: usize,
    pub medoids: Vec<usize>,
    /// Medoid index of every point.
    pub assignments: Vec<usize>,
    pub dbi: f64,
    /// Whether some read was exactly `k`-hot, so no repair was needed.
    pub feasible: bool,
    pub candidates: MedoidCandidates,
    pub energy: f64,
    #[serde(skip)]
    pub build_ms: f64,
    #[serde(skip)]
    pub solve_ms: f64,
}

/// Candidate pool, refinement, reassignment over all points, DBI.
/// `k` is chosen by [`auto_k`] over `k_range` when not given.
pub fn cluster(
    points: &[Vec<f64>],
    k: Option<usize>,
    k_range: RangeInclusive<usize>,
    cfg: &AnnealConfig,
) -> Result<ClusteringResult> {
    check_points(points)?;
    let build = Stopwatch::start();
    let k = match k {
        Some(k) => k,
        None => auto_k(points, k_range, KMEDOIDS_MAX_ITER)?,
    };
    if k < 2 || k > points.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} must lie in 2..={}",
            points.len()
        )));
    }
    let candidates = candidate_pool(points, k, KMEDOIDS_MAX_ITER)?;
    let build_ms = build.elapsed_ms();
    let solve = Stopwatch::start();
    let refined = refine_medoids(points, &candidates, k, cfg)?;
    let solve_ms = solve.elapsed_ms();
    let assignments = assign_to_medoids(points, &refined.medoids)?;
    let dbi = davies_bouldin(points, &assignments)?;
    Ok(ClusteringResult {
        k,
        medoids: refined.medoids,
        assignments,
        dbi,
        feasible: refined.feasible,
        candidates,
        energy: refined.energy,
        build_ms,
        solve_ms,
    })
}

/// For each query, the documents of the cluster whose medoid is most
/// cosine-similar, ranked by descending cosine and cut at `depth`. Ties go
/// to the lower index.
pub fn retrieve(
    queries: &[Vec<f64>],
    docs: &[Vec<f64>],
    medoids: &[usize],
    assignments: &[usize],
    depth: usize,
) -> Result<Vec<Vec<usize>>> {
    check_points(docs)?;
    if assignments.len() != docs.len() {
        return Err(Error::Dimension {
            expected: docs.len(),
            got: assignments.len(),
        });
    }
    if medoids.is_empty() {
        return Err(Error::InvalidParameter("no medoids".into()));
    }
    let mut sorted = medoids.to_vec();
    sorted.sort_unstable();
    let mut members: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, &m) in assignments.iter().enumerate() {
        members.entry(m).or_default().push(i);
    }
    queries
        .iter()
        .map(|q| {
            let mut best = (sorted[0], f64::NEG_INFINITY);
            for &m in &sorted {
                let c = cosine(q, &docs[m])?;
                if c > best.1 {
                    best = (m, c);
                }
            }
            let pool = members.get(&best.0).cloned().unwrap_or_default();
            let mut scored = pool
                .into_iter()
                .map(|d| Ok((d, cosine(q, &docs[d])?)))
                .collect::<Result<Vec<_>>>()?;
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            Ok(scored.into_iter().take(depth).map(|(d, _)| d).collect())
        })
        .collect()
}

/// Mean binary-relevance nDCG@`depth` of `rankings` against `relevant` sets.
pub fn mean_ndcg(rankings: &[Vec<usize>], relevant: &[Vec<usize>], depth: usize) -> Result<f64> {
    if rankings.len() != relevant.len() {
        return Err(Error::Dimension {
            expected: relevant.len(),
            got: rankings.len(),
        });
    }
    if rankings.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = rankings
        .iter()
        .zip(relevant)
        .map(|(r, rel)| {
            let grades: HashMap<usize, u32> = rel.iter().map(|&d| (d, 1)).collect();
            ndcg_at(r, &grades, depth)
        })
        .sum();
    Ok(total / rankings.len() as f64)
}

/// Coordinates on the first two principal components, for plotting. Each
/// axis is signed so its largest-magnitude loading is positive.
pub fn project_2d(points: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let d = check_points(points)?;
    let n = points.len();
    let mean: Vec<f64> = (0..d)
        .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, d, |i, j| points[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let axes: Vec<Vec<f64>> = (0..2)
        .map(|a| {
            if a >= d {
                return vec![0.0; d];
            }
            let v: Vec<f64> = eig.eigenvectors.column(order[a]).iter().copied().collect();
            let pivot = v
                .iter()
                .cloned()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if pivot < 0.0 {
                v.into_iter().map(|x| -x).collect()
            } else {
                v
            }
        })
        .collect();
    Ok((0..n)
        .map(|i| {
            let row = centered.row(i);
            let c = |a: usize| {
                axes[a]
                    .iter()
                    .zip(row.iter())
                    .map(|(x, y)| x * y)
                    .sum::<f64>()
            };
            [c(0), c(1)]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anneal::brute_force_solve;
    use crate::qubo::Assignment;
    use crate::synth;

    fn line(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn kmedoids_examples() {
        let p = line(&[3.0, 1.0, 4.0]);
        assert_eq!(kmedoids(&p, 3, 10).unwrap(), vec![0, 1, 2]);
        let p = line(&[0.0, 1.0, 2.0, 10.0, 11.0]);
        let m = kmedoids(&p, 2, 10).unwrap();
        let dist = euclidean_distances(&p);
        let best = (0..5)
            .flat_map(|a| (a + 1..5).map(move |b| vec![a, b]))
            .map(|s| total_cost(&dist, &s))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(total_cost(&dist, &m), best);
        assert!(m == vec![1, 3] || m == vec![1, 4]);
        assert!(kmedoids(&p, 6, 10).is_err());
    }

    #[test]
    fn kmedoids_splits_two_blobs() {
        let (p, member) = synth::blobs(60, 2, 2, 3);
        let m = kmedoids(&p, 2, 50).unwrap();
        assert_ne!(member[m[0]], member[m[1]]);
    }

    #[test]
    fn auto_k_examples() {
        let (p, _) = synth::ring_blobs(90, 3, 12.0, 1);
        assert_eq!(auto_k(&p, 2..=6, 50).unwrap(), 3);
        let scaled: Vec<Vec<f64>> = p
            .iter()
            .map(|r| r.iter().map(|v| 2.0 * v).collect())
            .collect();
        assert_eq!(auto_k(&scaled, 2..=6, 50).unwrap(), 3);
        assert_eq!(auto_k(&p, 4..=4, 50).unwrap(), 4);
        #[allow(clippy::reversed_empty_ranges)]
        let empty = 5..=4;
        assert!(auto_k(&p, empty, 50).is_err());
    }

    #[test]
    fn welsch_examples() {
        let d = welsch_dissimilarity(&[vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(d[0][0], 0.0);
        assert!((d[0][1] - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        let far = welsch_dissimilarity(&[vec![0.0, 1e6], vec![1e6, 0.0]]).unwrap();
        assert!(far[0][1] < 1.0);
        let big = welsch_dissimilarity(&[vec![0.0, 60.0], vec![60.0, 0.0]]).unwrap();
        assert!(big[0][1] < 1.0);
        assert!(matches!(
            welsch_dissimilarity(&[vec![0.0, -1.0], vec![-1.0, 0.0]]),
            Err(Error::InvalidDistance(_))
        ));
    }

    #[test]
    fn medoid_objective_examples() {
        let zero = vec![vec![0.0; 2]; 2];
        let f = medoid_objective(&zero, 1).unwrap();
        assert_eq!(
            f.energy(&Assignment::new(vec![1, 0]).unwrap()).unwrap(),
            -2.0
        );
        let zero = vec![vec![0.0; 5]; 5];
        let f = medoid_objective(&zero, 3).unwrap();
        for pop in 0..=5usize {
            let energies: Vec<f64> = (0..32u64)
                .map(|i| Assignment::from_index(5, i))
                .filter(|x| x.popcount() == pop)
                .map(|x| f.energy(&x).unwrap())
                .collect();
            assert!(energies.iter().all(|&e| (e - energies[0]).abs() < 1e-12));
        }
    }

    fn random_delta(n: usize, seed: u64) -> Vec<Vec<f64>> {
        use rand::Rng;
        let mut r = crate::rng::stream(seed, "test", 0);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![r.gen_range(0.0..2.0), r.gen_range(0.0..2.0)])
            .collect();
        welsch_dissimilarity(&squared_distances(&pts)).unwrap()
    }

    #[test]
    fn penalized_ground_state_is_k_hot() {
        let q = build_medoid_qubo(&random_delta(6, 1), 2).unwrap();
        assert_eq!(brute_force_solve(&q.problem).unwrap().0.popcount(), 2);
    }

    #[test]
    fn refinement_rejects_near_duplicates() {
        let p = vec![
            vec![0.0, 0.0],
            vec![0.01, 0.0],
            vec![5.0, 0.0],
            vec![5.0, 0.01],
            vec![2.5, 6.0],
        ];
        let cands = MedoidCandidates {
            indices: vec![0, 1, 2, 3, 4],
            source_k: 5,
        };
        let delta = welsch_dissimilarity(&scaled_squared_distances(&p, &cands.indices)).unwrap();
        let (x, _) = brute_force_solve(&build_medoid_qubo(&delta, 3).unwrap().problem).unwrap();
        let s = x.support();
        assert!(s.contains(&4) && s.iter().filter(|&&i| i < 2).count() == 1);
        let r = refine_medoids(&p, &cands, 3, &AnnealConfig::with_seed(2)).unwrap();
        assert_eq!(r.medoids, s);
        assert_eq!(
            r,
            refine_medoids(&p, &cands, 3, &AnnealConfig::with_seed(2)).unwrap()
        );

        let all = MedoidCandidates {
            indices: vec![4, 0, 2],
            source_k: 3,
        };
        assert_eq!(
            refine_medoids(&p, &all, 3, &AnnealConfig::with_seed(0))
                .unwrap()
                .medoids,
            vec![0, 2, 4]
        );
        assert!(refine_medoids(&p, &all, 4, &AnnealConfig::default()).is_err());
    }

    #[test]
    fn assignment_examples() {
        let p = line(&[0.0, 4.0, 2.0, 9.0, 6.0, 4.0]);
        let a = assign_to_medoids(&p, &[5, 2]).unwrap();
        assert_eq!(a[2], 2);
        assert_eq!(a[5], 5);
        // Point 0 is at distance 2 from medoid 2 and 4 from 5; point 1 coincides with 5.
        let p = line(&[0.0, 1.0, 3.0, 5.0, 6.0, 7.0]);
        let a = assign_to_medoids(&p, &[5, 2]).unwrap();
        assert_eq!(a[3], 2);
        let (pts, member) = synth::blobs(40, 2, 2, 9);
        let m0 = 0;
        let m1 = 1;
        let a = assign_to_medoids(&pts, &[m0, m1]).unwrap();
        for i in 0..40 {
            assert_eq!(a[i], if member[i] == member[m0] { m0 } else { m1 });
        }
        let medoids: Vec<usize> = a
            .iter()
            .copied()
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        let again = assign_to_medoids(&pts, &medoids).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn dbi_examples() {
        assert_eq!(davies_bouldin(&line(&[0.0, 5.0]), &[0, 1]).unwrap(), 0.0);
        let v = davies_bouldin(&line(&[0.0, 1.0, 10.0, 11.0]), &[0, 0, 1, 1]).unwrap();
        assert!((v - 0.1).abs() < 1e-12);
        let scaled = davies_bouldin(&line(&[0.0, 3.0, 30.0, 33.0]), &[0, 0, 1, 1]).unwrap();
        assert!((scaled - v).abs() < 1e-12);
        assert!(matches!(
            davies_bouldin(&line(&[0.0, 2.0, 1.0, 1.0]), &[0, 0, 1, 1]),
            Err(Error::UndefinedSeparation(0, 1))
        ));
    }

    #[test]
    fn dbi_drops_as_blobs_separate() {
        let mut last = f64::INFINITY;
        for radius in [3.0, 6.0, 12.0, 24.0] {
            let (p, member) = synth::ring_blobs(80, 2, radius, 4);
            let v = davies_bouldin(&p, &member).unwrap();
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn retrieval_examples() {
        let docs = vec![
            vec![1.0, 0.0],
            vec![0.9, 0.1],
            vec![0.0, 1.0],
            vec![0.1, 0.9],
            vec![0.2, 1.0],
        ];
        let assignments = vec![0, 0, 2, 2, 2];
        let r = retrieve(
            &[vec![0.1, 0.9], vec![1.0, 0.05]],
            &docs,
            &[0, 2],
            &assignments,
            10,
        )
        .unwrap();
        assert_eq!(r[0][0], 3);
        assert_eq!(r[0].len(), 3);
        assert_eq!(r[1], vec![0, 1]);
        let top1 = retrieve(&[vec![0.1, 0.9]], &docs, &[0, 2], &assignments, 1).unwrap();
        assert_eq!(top1, vec![vec![3]]);
        // Relevant docs {2, 4} for the first query; ranking is [3, 4, 2].
        assert_eq!(r[0], vec![3, 4, 2]);
        let got = mean_ndcg(&r[..1], &[vec![2, 4]], 10).unwrap();
        let dcg = 1.0 / 3f64.log2() + 1.0 / 4f64.log2();
        let idcg = 1.0 + 1.0 / 3f64.log2();
        assert!((got - dcg / idcg).abs() < 1e-12);
        assert!(retrieve(&[vec![1.0]], &docs, &[0], &assignments, 10).is_err());
    }

    #[test]
    fn pipeline_on_blobs() {
        let (p, _) = synth::blobs(120, 4, 3, 2);
        let cfg = AnnealConfig {
            reads: 30,
            sweeps: 300,
            ..AnnealConfig::with_seed(1)
        };
        let r = cluster(&p, Some(4), 2..=8, &cfg).unwrap();
        assert_eq!(r.medoids.len(), 4);
        assert!(r.medoids.iter().all(|m| r.assignments[*m] == *m));
        assert!(r.assignments.iter().all(|a| r.medoids.contains(a)));
        assert_eq!(r.candidates.source_k, 16);
        let again = cluster(&p, Some(4), 2..=8, &cfg).unwrap();
        assert_eq!((r.medoids, r.dbi), (again.medoids, again.dbi));
    }

    #[test]
    fn projection_is_centered() {
        let (p, _) = synth::blobs(50, 3, 4, 1);
        let xy = project_2d(&p).unwrap();
        let mx: f64 = xy.iter().map(|v| v[0]).sum::<f64>() / 50.0;
        assert!(mx.abs() < 1e-9);
        let var = |a: usize| xy.iter().map(|v| v[a] * v[a]).sum::<f64>();
        assert!(var(0) >= var(1));
    }
}
