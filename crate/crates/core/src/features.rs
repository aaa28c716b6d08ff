//! Feature selection as a QUBO: per-feature importance on the diagonal,
//! pairwise redundancy off the diagonal, and an exactly-`k` penalty.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::anneal::{solve_k_hot, AnnealConfig};
use crate::error::{Error, Result};
use crate::learners::{fit_ridge, LinearModel};
use crate::metrics::ndcg_at;
use crate::normalize::min_max;
use crate::qubo::{BinaryQuadraticProblem, ConstrainedQubo};
use crate::rng;
use crate::timing::Stopwatch;

/// Query-grouped feature vectors with graded relevance labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingDataset {
    rows: Vec<Vec<f64>>,
    labels: Vec<u32>,
    query_ids: Vec<String>,
}

impl RankingDataset {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<u32>, query_ids: Vec<String>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if labels.len() != rows.len() {
            return Err(Error::Dimension {
                expected: rows.len(),
                got: labels.len(),
            });
        }
        if query_ids.len() != rows.len() {
            return Err(Error::Dimension {
                expected: rows.len(),
                got: query_ids.len(),
            });
        }
        let width = rows[0].len();
        if width < 2 {
            return Err(Error::Shape(format!(
                "need at least 2 features, got {width}"
            )));
        }
        for row in &rows {
            if row.len() != width {
                return Err(Error::Dimension {
                    expected: width,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("feature value"));
            }
        }
        Ok(Self {
            rows,
            labels,
            query_ids,
        })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn query_ids(&self) -> &[String] {
        &self.query_ids
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.rows[0].len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    fn label_codes(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| l as usize).collect()
    }
}

/// Equal-frequency binning by rank. Each value takes the bin of the first
/// sorted position holding an equal value, so ties share the lower bin.
pub fn discretize(column: &[f64], bins: usize) -> Result<Vec<usize>> {
    if bins < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 bins, got {bins}"
        )));
    }
    if column.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("column"));
    }
    let n = column.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]));
    let mut codes = vec![0; n];
    let mut first = 0;
    for pos in 0..n {
        if pos > 0 && column[order[pos]] != column[order[pos - 1]] {
            first = pos;
        }
        codes[order[pos]] = first * bins / n;
    }
    Ok(codes)
}

/// Sum after sorting, so the result depends only on the multiset of terms.
fn ordered_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

fn counts<K: std::hash::Hash + Eq>(keys: impl Iterator<Item = K>) -> HashMap<K, usize> {
    let mut m = HashMap::new();
    for k in keys {
        *m.entry(k).or_insert(0) += 1;
    }
    m
}

/// Plug-in entropy in nats.
pub fn entropy(x: &[usize]) -> f64 {
    let n = x.len() as f64;
    ordered_sum(
        counts(x.iter().copied())
            .into_values()
            .map(|c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .collect(),
    )
}

/// Plug-in mutual information in nats over the observed cells.
pub fn mutual_information(x: &[usize], y: &[usize]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = x.len();
    let cx = counts(x.iter().copied());
    let cy = counts(y.iter().copied());
    let joint = counts(x.iter().copied().zip(y.iter().copied()));
    let terms = joint
        .into_iter()
        .map(|((a, b), c)| {
            let ratio = (c * n) as f64 / (cx[&a] * cy[&b]) as f64;
            c as f64 / n as f64 * ratio.ln()
        })
        .collect();
    Ok(ordered_sum(terms).max(0.0))
}

/// Plug-in conditional mutual information `I(xi; xj | y)` in nats.
pub fn conditional_mutual_information(xi: &[usize], xj: &[usize], y: &[usize]) -> Result<f64> {
    if xi.len() != y.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            got: xi.len(),
        });
    }
    if xj.len() != y.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            got: xj.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = y.len() as f64;
    let cz = counts(y.iter().copied());
    let ciz = counts(xi.iter().copied().zip(y.iter().copied()));
    let cjz = counts(xj.iter().copied().zip(y.iter().copied()));
    let cijz = counts((0..y.len()).map(|r| (xi[r], xj[r], y[r])));
    let terms = cijz
        .into_iter()
        .map(|((a, b, z), c)| {
            let ratio = (c * cz[&z]) as f64 / (ciz[&(a, z)] * cjz[&(b, z)]) as f64;
            c as f64 / n * ratio.ln()
        })
        .collect();
    Ok(ordered_sum(terms).max(0.0))
}

/// Settings for permutation importance: a ridge model scoring relevance
/// grades, fit on a seeded train split and evaluated by mean squared error
/// on the held-out rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationSpec {
    pub l2: f64,
    pub holdout_fraction: f64,
    pub repeats: usize,
}

impl Default for PermutationSpec {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            holdout_fraction: 0.25,
            repeats: 5,
        }
    }
}

/// A fitted scorer, its held-out rows and one row permutation per repeat.
/// Permutations depend only on the seed and the repeat index, so every
/// feature (and feature pair) is scored against the same shuffles.
pub struct PermutationContext {
    model: LinearModel,
    eval_rows: Vec<Vec<f64>>,
    eval_targets: Vec<f64>,
    baseline: f64,
    permutations: Vec<Vec<usize>>,
    n_features: usize,
}

fn mse(model: &LinearModel, rows: &[Vec<f64>], targets: &[f64]) -> Result<f64> {
    let pred = model.predict(rows)?;
    Ok(pred
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / targets.len() as f64)
}

impl PermutationContext {
    pub fn new(ds: &RankingDataset, spec: &PermutationSpec, seed: u64) -> Result<Self> {
        if !(spec.l2 > 0.0 && spec.l2.is_finite()) {
            return Err(Error::InvalidParameter(
                "permutation model needs l2 > 0".into(),
            ));
        }
        if !(spec.holdout_fraction > 0.0 && spec.holdout_fraction < 1.0) {
            return Err(Error::InvalidParameter(
                "holdout fraction must lie in (0, 1)".into(),
            ));
        }
        if spec.repeats == 0 {
            return Err(Error::InvalidParameter("repeats must be at least 1".into()));
        }
        let n = ds.len();
        if n < 2 {
            return Err(Error::InvalidParameter(
                "permutation importance needs at least 2 rows".into(),
            ));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(seed, "pfi-split", 0));
        let n_eval = ((n as f64 * spec.holdout_fraction).round() as usize).clamp(1, n - 1);
        let (eval, train) = order.split_at(n_eval);
        let mut eval = eval.to_vec();
        eval.sort_unstable();

        let train_rows: Vec<Vec<f64>> = train.iter().map(|&i| ds.rows[i].clone()).collect();
        let train_targets: Vec<f64> = train.iter().map(|&i| f64::from(ds.labels[i])).collect();
        let model = fit_ridge(&train_rows, &train_targets, spec.l2)?;
        let eval_rows: Vec<Vec<f64>> = eval.iter().map(|&i| ds.rows[i].clone()).collect();
        let eval_targets: Vec<f64> = eval.iter().map(|&i| f64::from(ds.labels[i])).collect();
        let baseline = mse(&model, &eval_rows, &eval_targets)?;
        let permutations = (0..spec.repeats)
            .map(|r| {
                let mut p: Vec<usize> = (0..n_eval).collect();
                p.shuffle(&mut rng::stream(seed, "pfi-permutation", r as u64));
                p
            })
            .collect();
        Ok(Self {
            model,
            eval_rows,
            eval_targets,
            baseline,
            permutations,
            n_features: ds.n_features(),
        })
    }

    fn mean_increase(&self, columns: &[usize]) -> Result<f64> {
        for &c in columns {
            if c >= self.n_features {
                return Err(Error::IndexOutOfRange {
                    index: c,
                    n: self.n_features,
                });
            }
        }
        let mut total = 0.0;
        for perm in &self.permutations {
            let rows: Vec<Vec<f64>> = (0..self.eval_rows.len())
                .map(|r| {
                    let mut row = self.eval_rows[r].clone();
                    for &c in columns {
                        row[c] = self.eval_rows[perm[r]][c];
                    }
                    row
                })
                .collect();
            total += mse(&self.model, &rows, &self.eval_targets)? - self.baseline;
        }
        Ok(total / self.permutations.len() as f64)
    }

    /// Mean error increase after permuting feature `j`.
    pub fn importance(&self, j: usize) -> Result<f64> {
        self.mean_increase(&[j])
    }

    /// Mean error increase after permuting features `i` and `j` with the same shuffle.
    pub fn joint_importance(&self, i: usize, j: usize) -> Result<f64> {
        if i == j {
            return Err(Error::InvalidParameter(format!(
                "feature pair ({i}, {j}) is not a pair"
            )));
        }
        self.mean_increase(&[i, j])
    }
}

pub fn permutation_importance(
    ds: &RankingDataset,
    feature: usize,
    spec: &PermutationSpec,
    seed: u64,
) -> Result<f64> {
    PermutationContext::new(ds, spec, seed)?.importance(feature)
}

pub fn conditional_permutation_importance(
    ds: &RankingDataset,
    i: usize,
    j: usize,
    spec: &PermutationSpec,
    seed: u64,
) -> Result<f64> {
    PermutationContext::new(ds, spec, seed)?.joint_importance(i, j)
}

/// Evaluate `f(i, j)` for every unordered pair and return the symmetric
/// matrix with a zero diagonal.
fn pairwise<F>(n: usize, f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    #[cfg(feature = "parallel")]
    let values: Vec<f64> = {
        use rayon::prelude::*;
        pairs
            .par_iter()
            .map(|&(i, j)| f(i, j))
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let values: Vec<f64> = pairs.iter().map(|&(i, j)| f(i, j)).collect::<Result<_>>()?;
    let mut m = vec![vec![0.0; n]; n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        m[i][j] = v;
        m[j][i] = v;
    }
    Ok(m)
}

/// Importance measure for the diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Importance {
    Mi,
    Pfi,
}

/// Redundancy measure for the off-diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Redundancy {
    Cmi,
    Cpfi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureQuboSpec {
    pub importance: Importance,
    pub redundancy: Redundancy,
    pub k: usize,
    /// Penalty strength; twice the objective's energy-delta bound when unset.
    pub lambda: Option<f64>,
    pub bins: usize,
    /// Multiplier on the normalized redundancy terms.
    pub redundancy_weight: f64,
    pub permutation: PermutationSpec,
}

impl FeatureQuboSpec {
    pub fn new(importance: Importance, redundancy: Redundancy, k: usize) -> Self {
        Self {
            importance,
            redundancy,
            k,
            lambda: None,
            bins: 10,
            redundancy_weight: 1.0,
            permutation: PermutationSpec::default(),
        }
    }

    pub fn method(&self) -> String {
        let i = match self.importance {
            Importance::Mi => "mi",
            Importance::Pfi => "pfi",
        };
        let r = match self.redundancy {
            Redundancy::Cmi => "cmi",
            Redundancy::Cpfi => "cpfi",
        };
        format!("{i}+{r}")
    }

    fn validate(&self, n_features: usize) -> Result<()> {
        if self.k == 0 || self.k > n_features {
            return Err(Error::InvalidParameter(format!(
                "k = {} must lie in 1..={n_features}",
                self.k
            )));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "lambda must be positive, got {l}"
                )));
            }
        }
        if self.bins < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 bins, got {}",
                self.bins
            )));
        }
        if !(self.redundancy_weight >= 0.0 && self.redundancy_weight.is_finite()) {
            return Err(Error::InvalidParameter(
                "redundancy weight must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Build the penalized feature QUBO. Importance and the off-diagonal
/// redundancy entries are each min-max normalized; the diagonal carries the
/// negated importance (the sampler minimizes) and each pair the normalized
/// redundancy times `redundancy_weight`.
pub fn build_feature_qubo(
    importance: &[f64],
    redundancy: &[Vec<f64>],
    k: usize,
    lambda: Option<f64>,
    redundancy_weight: f64,
) -> Result<ConstrainedQubo> {
    let n = importance.len();
    if redundancy.len() != n || redundancy.iter().any(|r| r.len() != n) {
        return Err(Error::Shape(format!("redundancy must be {n} x {n}")));
    }
    if importance
        .iter()
        .chain(redundancy.iter().flatten())
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite("feature measures"));
    }
    for i in 0..n {
        if redundancy[i][i] != 0.0 {
            return Err(Error::Shape(format!(
                "redundancy diagonal entry {i} is nonzero"
            )));
        }
        for j in i + 1..n {
            let (a, b) = (redundancy[i][j], redundancy[j][i]);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                return Err(Error::Shape(format!(
                    "redundancy is asymmetric at ({i}, {j})"
                )));
            }
        }
    }
    let imp = min_max(importance);
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let red = min_max(
        &pairs
            .iter()
            .map(|&(i, j)| redundancy[i][j])
            .collect::<Vec<_>>(),
    );
    let objective = BinaryQuadraticProblem::from_parts(
        imp.iter().map(|v| -v).collect(),
        pairs
            .iter()
            .zip(red)
            .map(|(&(i, j), r)| (i, j, redundancy_weight * r)),
        0.0,
    )?;
    ConstrainedQubo::new(objective, k, lambda)
}

/// Importance vector and redundancy matrix for `spec` on `ds`.
pub fn feature_measures(
    ds: &RankingDataset,
    spec: &FeatureQuboSpec,
    seed: u64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let d = ds.n_features();
    let needs_codes = spec.importance == Importance::Mi || spec.redundancy == Redundancy::Cmi;
    let needs_perm = spec.importance == Importance::Pfi || spec.redundancy == Redundancy::Cpfi;
    let codes = if needs_codes {
        (0..d)
            .map(|j| discretize(&ds.column(j), spec.bins))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let target = ds.label_codes();
    let perm = if needs_perm {
        Some(PermutationContext::new(
            ds,
            &spec.permutation,
            rng::derive_seed(seed, "pfi", 0),
        )?)
    } else {
        None
    };
    let importance = match spec.importance {
        Importance::Mi => codes
            .iter()
            .map(|c| mutual_information(c, &target))
            .collect::<Result<Vec<_>>>()?,
        Importance::Pfi => {
            let ctx = perm.as_ref().expect("context built for pfi");
            (0..d)
                .map(|j| ctx.importance(j))
                .collect::<Result<Vec<_>>>()?
        }
    };
    let redundancy = match spec.redundancy {
        Redundancy::Cmi => pairwise(d, |i, j| {
            conditional_mutual_information(&codes[i], &codes[j], &target)
        })?,
        Redundancy::Cpfi => {
            let ctx = perm.as_ref().expect("context built for cpfi");
            pairwise(d, |i, j| ctx.joint_importance(i, j))?
        }
    };
    Ok((importance, redundancy))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    /// Selected 0-based column indices, ascending.
    pub selected: Vec<usize>,
    pub k: usize,
    pub method: String,
    pub energy: f64,
    pub lambda: f64,
    pub feasible: bool,
    pub repaired: bool,
    pub importance: Vec<f64>,
    pub redundancy: Vec<Vec<f64>>,
    #[serde(skip)]
    pub build_ms: f64,
    #[serde(skip)]
    pub solve_ms: f64,
}

/// Compute the measures, build the QUBO and anneal it.
pub fn select_features(
    ds: &RankingDataset,
    spec: &FeatureQuboSpec,
    cfg: &AnnealConfig,
) -> Result<FeatureSelection> {
    spec.validate(ds.n_features())?;
    let build = Stopwatch::start();
    let (importance, redundancy) = feature_measures(ds, spec, cfg.seed)?;
    let qubo = build_feature_qubo(
        &importance,
        &redundancy,
        spec.k,
        spec.lambda,
        spec.redundancy_weight,
    )?;
    let build_ms = build.elapsed_ms();
    let solve = Stopwatch::start();
    let sol = solve_k_hot(&qubo, cfg, true)?;
    let solve_ms = solve.elapsed_ms();
    Ok(FeatureSelection {
        selected: sol.bits.support(),
        k: spec.k,
        method: spec.method(),
        energy: sol.energy,
        lambda: qubo.penalty_strength,
        feasible: sol.feasible,
        repaired: sol.repaired,
        importance,
        redundancy,
        build_ms,
        solve_ms,
    })
}

/// Mean per-query nDCG@`depth` of a ridge scorer trained on `train` using
/// only `columns`, evaluated on `valid`.
pub fn validation_ndcg(
    train: &RankingDataset,
    valid: &RankingDataset,
    columns: &[usize],
    l2: f64,
    depth: usize,
) -> Result<f64> {
    if columns.is_empty() {
        return Err(Error::InvalidParameter(
            "no feature columns selected".into(),
        ));
    }
    for ds in [train, valid] {
        if let Some(&c) = columns.iter().find(|&&c| c >= ds.n_features()) {
            return Err(Error::IndexOutOfRange {
                index: c,
                n: ds.n_features(),
            });
        }
    }
    let project = |ds: &RankingDataset| -> Vec<Vec<f64>> {
        ds.rows
            .iter()
            .map(|r| columns.iter().map(|&c| r[c]).collect())
            .collect()
    };
    let targets: Vec<f64> = train.labels.iter().map(|&l| f64::from(l)).collect();
    let model = fit_ridge(&project(train), &targets, l2)?;
    let scores = model.predict(&project(valid))?;

    let mut groups: Vec<(&str, Vec<usize>)> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (row, q) in valid.query_ids.iter().enumerate() {
        let g = *index.entry(q.as_str()).or_insert_with(|| {
            groups.push((q.as_str(), Vec::new()));
            groups.len() - 1
        });
        groups[g].1.push(row);
    }
    let mut total = 0.0;
    for (_, rows) in &groups {
        let mut ranked = rows.clone();
        ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let relevance: HashMap<usize, u32> = rows.iter().map(|&r| (r, valid.labels[r])).collect();
        total += ndcg_at(&ranked, &relevance, depth);
    }
    Ok(total / groups.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubo::Assignment;

    fn ground_states(p: &BinaryQuadraticProblem) -> Vec<Vec<usize>> {
        let n = p.num_variables();
        let energies: Vec<f64> = (0..1u64 << n)
            .map(|i| p.energy(&Assignment::from_index(n, i)).unwrap())
            .collect();
        let best = energies.iter().cloned().fold(f64::INFINITY, f64::min);
        (0..1u64 << n)
            .filter(|&i| (energies[i as usize] - best).abs() < 1e-9)
            .map(|i| Assignment::from_index(n, i).support())
            .collect()
    }

    #[test]
    fn discretize_examples() {
        assert_eq!(discretize(&[3.0; 5], 4).unwrap(), vec![0; 5]);
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(
            discretize(&v, 2).unwrap(),
            vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]
        );
        assert_eq!(
            discretize(&[1.0, 1.0, 2.0, 3.0], 2).unwrap(),
            vec![0, 0, 1, 1]
        );
        assert_eq!(
            discretize(&[3.0, 1.0, 2.0, 1.0], 2).unwrap(),
            vec![1, 0, 1, 0]
        );
        assert!(discretize(&[1.0], 1).is_err());
    }

    #[test]
    fn mi_examples() {
        assert_eq!(
            mutual_information(&[0, 0, 0, 0], &[0, 1, 0, 1]).unwrap(),
            0.0
        );
        let v = mutual_information(&[0, 1, 0, 1], &[0, 1, 0, 1]).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-12);
        // Joint counts [[4,1],[1,4]] over 10 samples.
        let x = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let y = [0, 0, 0, 0, 1, 0, 1, 1, 1, 1];
        let expected = 0.8 * (1.6f64).ln() + 0.2 * (0.4f64).ln();
        let v = mutual_information(&x, &y).unwrap();
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.1927).abs() < 5e-5);
        assert!(mutual_information(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn cmi_examples() {
        let y = [0, 0, 1, 1, 0, 1];
        assert_eq!(
            conditional_mutual_information(&[2; 6], &[0, 1, 0, 1, 1, 0], &y).unwrap(),
            0.0
        );
        let x = [0, 1, 0, 1];
        let v = conditional_mutual_information(&x, &x, &[0; 4]).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-12);
        // Within each stratum the (xi, xj) table is a full product.
        let mut xi = Vec::new();
        let mut xj = Vec::new();
        let mut z = Vec::new();
        for stratum in 0..3usize {
            for a in 0..2 {
                for b in 0..3 {
                    for _ in 0..(1 + stratum) * (1 + a) {
                        xi.push(a);
                        xj.push(b);
                        z.push(stratum);
                    }
                }
            }
        }
        assert!(conditional_mutual_information(&xi, &xj, &z).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mi_is_symmetric_and_bounded_by_entropy() {
        let mut r = rng::stream(1, "test", 0);
        use rand::Rng;
        for _ in 0..20 {
            let x: Vec<usize> = (0..50).map(|_| r.gen_range(0..4)).collect();
            let y: Vec<usize> = (0..50).map(|_| r.gen_range(0..3)).collect();
            let z: Vec<usize> = (0..50).map(|_| r.gen_range(0..2)).collect();
            assert_eq!(
                mutual_information(&x, &y).unwrap(),
                mutual_information(&y, &x).unwrap()
            );
            assert!((mutual_information(&x, &x).unwrap() - entropy(&x)).abs() < 1e-12);
            assert_eq!(
                conditional_mutual_information(&x, &y, &z).unwrap(),
                conditional_mutual_information(&y, &x, &z).unwrap()
            );
        }
    }

    fn ranking(rows: Vec<Vec<f64>>, labels: Vec<u32>) -> RankingDataset {
        let q = (0..rows.len()).map(|i| format!("{}", i / 10)).collect();
        RankingDataset::new(rows, labels, q).unwrap()
    }

    fn linear_target_dataset() -> RankingDataset {
        use rand::Rng;
        let mut r = rng::stream(4, "test", 0);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..200 {
            let informative: f64 = r.gen_range(0.0..4.0);
            rows.push(vec![
                r.gen_range(0.0..1.0),
                informative,
                7.0,
                informative,
                r.gen_range(0.0..1.0),
            ]);
            labels.push(informative.floor() as u32);
        }
        ranking(rows, labels)
    }

    #[test]
    fn permutation_importance_examples() {
        let ds = linear_target_dataset();
        let spec = PermutationSpec::default();
        assert!(permutation_importance(&ds, 2, &spec, 3).unwrap().abs() < 1e-12);
        let ctx = PermutationContext::new(&ds, &spec, 3).unwrap();
        assert!(ctx.importance(1).unwrap() > 0.1);
        assert!(ctx.importance(0).unwrap().abs() < 0.01);
        assert_eq!(
            permutation_importance(&ds, 1, &spec, 3).unwrap(),
            permutation_importance(&ds, 1, &spec, 3).unwrap()
        );
        assert!(matches!(
            ctx.importance(9),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn joint_permutation_importance_examples() {
        let ds = linear_target_dataset();
        let spec = PermutationSpec::default();
        let ctx = PermutationContext::new(&ds, &spec, 11).unwrap();
        // Column 2 is constant.
        assert!((ctx.joint_importance(1, 2).unwrap() - ctx.importance(1).unwrap()).abs() < 1e-9);
        // Columns 1 and 3 duplicate the signal.
        assert!(ctx.joint_importance(1, 3).unwrap() > ctx.importance(1).unwrap());
        assert!(matches!(
            ctx.joint_importance(1, 1),
            Err(Error::InvalidParameter(_))
        ));

        let constant = ranking(vec![vec![1.0, 2.0]; 20], (0..20).map(|i| i % 3).collect());
        let ctx = PermutationContext::new(&constant, &spec, 1).unwrap();
        assert_eq!(ctx.joint_importance(0, 1).unwrap(), 0.0);
    }

    #[test]
    fn feature_qubo_equal_importance_picks_any_pair() {
        let q = build_feature_qubo(&[0.5; 3], &vec![vec![0.0; 3]; 3], 2, None, 1.0).unwrap();
        assert_eq!(
            ground_states(&q.problem),
            vec![vec![0, 1], vec![0, 2], vec![1, 2]]
        );
    }

    #[test]
    fn feature_qubo_dominant_feature() {
        let q = build_feature_qubo(&[0.1, 0.9, 0.2, 0.1], &vec![vec![0.0; 4]; 4], 1, None, 1.0)
            .unwrap();
        assert_eq!(ground_states(&q.problem), vec![vec![1]]);
    }

    #[test]
    fn feature_qubo_avoids_duplicates() {
        // Features 0 and 1 duplicate each other; 2 is independent.
        let red = vec![
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ];
        let q = build_feature_qubo(&[1.0, 1.0, 1.0], &red, 2, None, 1.0).unwrap();
        assert_eq!(ground_states(&q.problem), vec![vec![0, 2], vec![1, 2]]);
    }

    #[test]
    fn feature_qubo_rejects_bad_redundancy() {
        let asym = vec![vec![0.0, 1.0], vec![0.5, 0.0]];
        assert!(matches!(
            build_feature_qubo(&[1.0, 1.0], &asym, 1, None, 1.0),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            build_feature_qubo(&[1.0, 1.0], &[vec![0.0; 2]], 1, None, 1.0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn affine_rescaled_importance_keeps_the_ground_state() {
        use rand::Rng;
        let mut r = rng::stream(8, "test", 0);
        for _ in 0..10 {
            let n = 8;
            let imp: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..1.0)).collect();
            let mut red = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i + 1..n {
                    red[i][j] = r.gen_range(0.0..1.0);
                    red[j][i] = red[i][j];
                }
            }
            let scaled: Vec<f64> = imp.iter().map(|v| 3.5 * v - 2.0).collect();
            let a = build_feature_qubo(&imp, &red, 3, None, 1.0).unwrap();
            let b = build_feature_qubo(&scaled, &red, 3, None, 1.0).unwrap();
            let ga = ground_states(&a.problem);
            assert_eq!(ga, ground_states(&b.problem));
            assert!(ga.iter().all(|s| s.len() == 3));
        }
    }

    #[test]
    fn selecting_every_feature() {
        let ds = linear_target_dataset();
        let spec = FeatureQuboSpec::new(Importance::Mi, Redundancy::Cmi, 5);
        let sel = select_features(
            &ds,
            &spec,
            &AnnealConfig {
                reads: 10,
                sweeps: 100,
                ..AnnealConfig::default()
            },
        )
        .unwrap();
        assert_eq!(sel.selected, vec![0, 1, 2, 3, 4]);
        let bad = FeatureQuboSpec::new(Importance::Mi, Redundancy::Cmi, 6);
        assert!(select_features(&ds, &bad, &AnnealConfig::default()).is_err());
    }

    #[test]
    fn synthetic_informative_features_win() {
        let ds = crate::synth::feature_dataset(80, 20, 1);
        let spec = FeatureQuboSpec::new(Importance::Mi, Redundancy::Cmi, 4);
        let (imp, red) = feature_measures(&ds, &spec, 0).unwrap();
        let q = build_feature_qubo(&imp, &red, 4, None, 1.0).unwrap();
        let (x, _) = crate::anneal::brute_force_solve(&q.problem).unwrap();
        assert_eq!(x.support(), crate::synth::INFORMATIVE);
        let cfg = AnnealConfig::with_seed(5);
        let a = select_features(&ds, &spec, &cfg).unwrap();
        assert_eq!(a.selected, crate::synth::INFORMATIVE);
        assert_eq!(
            a.selected,
            select_features(&ds, &spec, &cfg).unwrap().selected
        );
    }

    #[test]
    fn validation_ndcg_rewards_the_informative_column() {
        let ds = linear_target_dataset();
        let good = validation_ndcg(&ds, &ds, &[1], 1e-3, 10).unwrap();
        let bad = validation_ndcg(&ds, &ds, &[0], 1e-3, 10).unwrap();
        assert!(good > 0.99);
        assert!(bad < good);
    }

    #[test]
    fn dataset_validation() {
        assert!(RankingDataset::new(vec![], vec![], vec![]).is_err());
        assert!(RankingDataset::new(vec![vec![1.0]], vec![0], vec!["q".into()]).is_err());
        assert!(RankingDataset::new(
            vec![vec![1.0, 2.0], vec![1.0]],
            vec![0, 0],
            vec!["q".into(); 2]
        )
        .is_err());
    }
}
