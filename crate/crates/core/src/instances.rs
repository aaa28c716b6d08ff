//! Instance selection as per-batch QUBOs. Signed cosine similarities sit off
//! the diagonal, an optional importance score on the diagonal, and each batch
//! keeps exactly `round(fraction * n_b)` records.

use std::ops::Range;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::anneal::{solve_k_hot, AnnealConfig};
use crate::corpus::EmbeddingCorpus;
use crate::error::{Error, Result};
use crate::learners::{fit_linear_margin, fit_logistic, LinearModel};
use crate::metrics::{f1, make_folds};
use crate::normalize::min_max;
use crate::qubo::{BinaryQuadraticProblem, ConstrainedQubo};
use crate::rng;
use crate::timing::Stopwatch;

/// Offset added to margin distances before inverting.
pub const MARGIN_EPSILON: f64 = 1e-12;
/// Ridge strength of the logistic fits behind deletion influence.
pub const INFLUENCE_L2: f64 = 0.01;
pub const INFLUENCE_EPOCHS: usize = 2000;
/// Regularization and epochs of the linear margin classifier.
pub const MARGIN_C: f64 = 1.0;
pub const MARGIN_EPOCHS: usize = 20;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Pair coefficients over `batch` (positions into the corpus): `+cos` for
/// same-label pairs, `-cos` otherwise. Returned as a symmetric matrix with a
/// zero diagonal, indexed by batch position.
pub fn bcos_offdiagonals(corpus: &EmbeddingCorpus, batch: &[usize]) -> Result<Vec<Vec<f64>>> {
    let labels = corpus.require_labels("bcos")?;
    if batch.len() < 2 {
        return Err(Error::InvalidParameter(
            "a batch needs at least 2 records".into(),
        ));
    }
    if let Some(&i) = batch.iter().find(|&&i| i >= corpus.len()) {
        return Err(Error::IndexOutOfRange {
            index: i,
            n: corpus.len(),
        });
    }
    let v = corpus.vectors();
    let m = batch.len();
    let mut out = vec![vec![0.0; m]; m];
    for a in 0..m {
        for b in a + 1..m {
            let c = cosine(&v[batch[a]], &v[batch[b]])?;
            let s = if labels[batch[a]] == labels[batch[b]] {
                c
            } else {
                -c
            };
            out[a][b] = s;
            out[b][a] = s;
        }
    }
    Ok(out)
}

/// Negated, batch-normalized inverse margin distances.
pub fn margin_diagonals(distances: &[f64]) -> Result<Vec<f64>> {
    if distances.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::InvalidParameter(
            "margin distances must be finite and nonnegative".into(),
        ));
    }
    let raw: Vec<f64> = distances
        .iter()
        .map(|d| 1.0 / (d + MARGIN_EPSILON))
        .collect();
    Ok(min_max(&raw).into_iter().map(|v| -v).collect())
}

/// Fit the margin classifier on the whole fold.
pub fn fit_fold_margin_model(fold: &EmbeddingCorpus, seed: u64) -> Result<LinearModel> {
    let labels = fold.require_labels("svc")?;
    fit_linear_margin(
        fold.vectors(),
        labels,
        MARGIN_C,
        MARGIN_EPOCHS,
        rng::derive_seed(seed, "svc", 0),
    )
}

/// Margin diagonals for `batch` under a model fit once on the fold.
pub fn svc_diagonals_with(
    model: &LinearModel,
    fold: &EmbeddingCorpus,
    batch: &[usize],
) -> Result<Vec<f64>> {
    let v = fold.vectors();
    let d = batch
        .iter()
        .map(|&i| {
            let row = v.get(i).ok_or(Error::IndexOutOfRange {
                index: i,
                n: fold.len(),
            })?;
            model.margin_distance(row)
        })
        .collect::<Result<Vec<_>>>()?;
    margin_diagonals(&d)
}

pub fn svc_diagonals(fold: &EmbeddingCorpus, batch: &[usize], seed: u64) -> Result<Vec<f64>> {
    let model = fit_fold_margin_model(fold, seed)?;
    svc_diagonals_with(&model, fold, batch)
}

/// Mean absolute change of the batch's predicted probabilities when each
/// member is left out of the logistic fit. A member whose removal leaves a
/// single class gets the largest influence seen in the batch.
pub fn deletion_influence(corpus: &EmbeddingCorpus, batch: &[usize]) -> Result<Vec<f64>> {
    let labels = corpus.require_labels("instance deletion")?;
    if batch.len() < 3 {
        return Err(Error::InvalidParameter(
            "deletion influence needs at least 3 records".into(),
        ));
    }
    let sub = corpus.subset(batch)?;
    let x = sub.vectors();
    let y: Vec<u8> = batch.iter().map(|&i| labels[i]).collect();
    let base = fit_logistic(x, &y, INFLUENCE_L2, INFLUENCE_EPOCHS)?.predict_proba(x)?;
    let m = batch.len();
    let one = |i: usize| -> Result<Option<f64>> {
        let keep: Vec<usize> = (0..m).filter(|&r| r != i).collect();
        let xr: Vec<Vec<f64>> = keep.iter().map(|&r| x[r].clone()).collect();
        let yr: Vec<u8> = keep.iter().map(|&r| y[r]).collect();
        // Same penalty relative to the summed loss as the full fit.
        let l2 = INFLUENCE_L2 * m as f64 / (m - 1) as f64;
        match fit_logistic(&xr, &yr, l2, INFLUENCE_EPOCHS) {
            Ok(model) => {
                let p = model.predict_proba(x)?;
                Ok(Some(
                    p.iter().zip(&base).map(|(a, b)| (a - b).abs()).sum::<f64>() / m as f64,
                ))
            }
            Err(Error::DegenerateLabels) => Ok(None),
            Err(e) => Err(e),
        }
    };
    #[cfg(feature = "parallel")]
    let values: Vec<Option<f64>> = {
        use rayon::prelude::*;
        (0..m).into_par_iter().map(one).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let values: Vec<Option<f64>> = (0..m).map(one).collect::<Result<_>>()?;
    let max = values.iter().flatten().cloned().fold(0.0, f64::max);
    Ok(values.into_iter().map(|v| v.unwrap_or(max)).collect())
}

pub fn deletion_influence_diagonals(corpus: &EmbeddingCorpus, batch: &[usize]) -> Result<Vec<f64>> {
    Ok(min_max(&deletion_influence(corpus, batch)?)
        .into_iter()
        .map(|v| -v)
        .collect())
}

/// Contiguous chunks of `batch_size` in corpus order; the last may be shorter.
pub fn batch_partition(n: usize, batch_size: usize) -> Result<Vec<Range<usize>>> {
    if batch_size == 0 {
        return Err(Error::InvalidParameter(
            "batch size must be positive".into(),
        ));
    }
    Ok((0..n)
        .step_by(batch_size)
        .map(|s| s..(s + batch_size).min(n))
        .collect())
}

/// Records kept in a batch of `n_b`: `round(fraction * n_b)`, ties to even.
pub fn retained_count(n_b: usize, fraction: f64) -> usize {
    (fraction * n_b as f64).round_ties_even() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceMethod {
    Bcos,
    Svc,
    InstanceDeletion,
}

impl InstanceMethod {
    pub const ALL: [InstanceMethod; 3] = [Self::Bcos, Self::Svc, Self::InstanceDeletion];

    pub fn name(self) -> &'static str {
        match self {
            Self::Bcos => "bcos",
            Self::Svc => "svc",
            Self::InstanceDeletion => "instance_deletion",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub method: InstanceMethod,
    pub retain_fraction: f64,
    pub batch_size: usize,
    /// Penalty strength; twice the data term's energy-delta bound when unset.
    pub penalty: Option<f64>,
    /// Greedily repair batches where no read is exactly `k_b`-hot.
    pub repair: bool,
}

impl InstanceSpec {
    pub fn new(method: InstanceMethod) -> Self {
        Self {
            method,
            retain_fraction: 0.75,
            batch_size: 80,
            penalty: None,
            repair: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.retain_fraction > 0.0 && self.retain_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "retain fraction must lie in (0, 1], got {}",
                self.retain_fraction
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidParameter(
                "batch size must be at least 2".into(),
            ));
        }
        if let Some(p) = self.penalty {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "penalty must be positive, got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Data term of a batch: `diagonal` on the linear terms and the matrix
/// `offdiagonal` on the pairs.
pub fn instance_data_term(
    offdiagonal: &[Vec<f64>],
    diagonal: &[f64],
) -> Result<BinaryQuadraticProblem> {
    let m = diagonal.len();
    if offdiagonal.len() != m || offdiagonal.iter().any(|r| r.len() != m) {
        return Err(Error::Shape(format!(
            "off-diagonal matrix must be {m} x {m}"
        )));
    }
    BinaryQuadraticProblem::from_parts(
        diagonal.to_vec(),
        (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j, offdiagonal[i][j]))),
        0.0,
    )
}

/// Per-fold state shared by the batches: the margin model for `svc`.
struct Prepared {
    margin: Option<LinearModel>,
}

impl Prepared {
    fn new(corpus: &EmbeddingCorpus, spec: &InstanceSpec, seed: u64) -> Result<Self> {
        corpus.require_labels(spec.method.name())?;
        let margin = match spec.method {
            InstanceMethod::Svc => Some(fit_fold_margin_model(corpus, seed)?),
            _ => None,
        };
        Ok(Self { margin })
    }

    fn qubo(
        &self,
        corpus: &EmbeddingCorpus,
        batch: &[usize],
        spec: &InstanceSpec,
    ) -> Result<ConstrainedQubo> {
        let k_b = retained_count(batch.len(), spec.retain_fraction);
        if k_b == 0 {
            return Err(Error::EmptyRetention {
                n_b: batch.len(),
                fraction: spec.retain_fraction,
            });
        }
        let off = bcos_offdiagonals(corpus, batch)?;
        let diag = match spec.method {
            InstanceMethod::Bcos => vec![0.0; batch.len()],
            InstanceMethod::Svc => {
                svc_diagonals_with(self.margin.as_ref().expect("svc model"), corpus, batch)?
            }
            InstanceMethod::InstanceDeletion => deletion_influence_diagonals(corpus, batch)?,
        };
        ConstrainedQubo::new(instance_data_term(&off, &diag)?, k_b, spec.penalty)
    }
}

/// Penalized QUBO for one batch. `corpus` plays the role of the fold for the
/// `svc` margin model.
pub fn build_instance_qubo(
    corpus: &EmbeddingCorpus,
    batch: &[usize],
    spec: &InstanceSpec,
    seed: u64,
) -> Result<ConstrainedQubo> {
    spec.validate()?;
    Prepared::new(corpus, spec, seed)?.qubo(corpus, batch, spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub k_b: usize,
    pub energy: f64,
    pub feasible: bool,
    pub repaired: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSelection {
    /// Kept positions, ascending.
    pub kept: Vec<usize>,
    pub method: String,
    pub target_fraction: f64,
    pub achieved_fraction: f64,
    pub per_batch: Vec<BatchReport>,
    #[serde(skip)]
    pub build_ms: f64,
    #[serde(skip)]
    pub solve_ms: f64,
}

/// Solve every batch and union the kept records. Batches with a single
/// record skip the solver and keep `round(fraction)` of it.
pub fn select_instances(
    corpus: &EmbeddingCorpus,
    spec: &InstanceSpec,
    cfg: &AnnealConfig,
) -> Result<InstanceSelection> {
    spec.validate()?;
    cfg.validate()?;
    let build = Stopwatch::start();
    let prepared = Prepared::new(corpus, spec, cfg.seed)?;
    let mut build_ms = build.elapsed_ms();
    let mut solve_ms = 0.0;
    let mut kept = Vec::new();
    let mut per_batch = Vec::new();
    for (b, range) in batch_partition(corpus.len(), spec.batch_size)?
        .into_iter()
        .enumerate()
    {
        let batch: Vec<usize> = range.collect();
        if batch.len() == 1 {
            let k_b = retained_count(1, spec.retain_fraction);
            if k_b == 1 {
                kept.push(batch[0]);
            }
            per_batch.push(BatchReport {
                k_b,
                energy: 0.0,
                feasible: true,
                repaired: false,
            });
            continue;
        }
        let clock = Stopwatch::start();
        let q = prepared.qubo(corpus, &batch, spec)?;
        build_ms += clock.elapsed_ms();
        let batch_cfg = AnnealConfig {
            seed: rng::derive_seed(cfg.seed, "instance-batch", b as u64),
            ..cfg.clone()
        };
        let clock = Stopwatch::start();
        let sol = solve_k_hot(&q, &batch_cfg, spec.repair)?;
        solve_ms += clock.elapsed_ms();
        kept.extend(sol.bits.support().into_iter().map(|p| batch[p]));
        per_batch.push(BatchReport {
            k_b: q.k,
            energy: sol.energy,
            feasible: sol.feasible,
            repaired: sol.repaired,
        });
    }
    Ok(InstanceSelection {
        achieved_fraction: kept.len() as f64 / corpus.len() as f64,
        kept,
        method: spec.method.name().to_string(),
        target_fraction: spec.retain_fraction,
        per_batch,
        build_ms,
        solve_ms,
    })
}

/// Seeded random baseline: keep `round(fraction * n_b)` uniformly chosen
/// records of every batch.
pub fn random_selection(
    n: usize,
    fraction: f64,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let mut kept = Vec::new();
    for (b, range) in batch_partition(n, batch_size)?.into_iter().enumerate() {
        let k_b = retained_count(range.len(), fraction);
        let mut r = rng::stream(seed, "random-baseline", b as u64);
        let mut chosen = sample(&mut r, range.len(), k_b).into_vec();
        chosen.sort_unstable();
        kept.extend(chosen.into_iter().map(|i| range.start + i));
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub method: String,
    pub f1_mean: f64,
    pub f1_std: f64,
}

/// Settings of the evaluation model trained on the kept records.
pub const EVAL_L2: f64 = 1e-3;
pub const EVAL_EPOCHS: usize = 2000;

/// For each fraction and each method plus the `random` baseline: select
/// within every training fold, fit logistic regression on the kept records
/// and score F1 on the test fold. Reports mean and sample standard deviation
/// over folds.
pub fn reduction_sweep(
    corpus: &EmbeddingCorpus,
    methods: &[InstanceMethod],
    fractions: &[f64],
    n_folds: usize,
    base: &InstanceSpec,
    cfg: &AnnealConfig,
) -> Result<Vec<SweepRow>> {
    let labels = corpus.require_labels("reduction sweep")?;
    if n_folds < 2 {
        return Err(Error::InvalidParameter(
            "a sweep needs at least 2 folds".into(),
        ));
    }
    for &f in fractions {
        InstanceSpec {
            retain_fraction: f,
            ..base.clone()
        }
        .validate()?;
    }
    let plan = make_folds(
        corpus.len(),
        n_folds,
        rng::derive_seed(cfg.seed, "sweep-folds", 0),
    )?;
    let folds: Vec<(EmbeddingCorpus, EmbeddingCorpus)> = (0..n_folds)
        .map(|f| {
            Ok((
                corpus.subset(&plan.train_indices(f))?,
                corpus.subset(&plan.test_indices(f))?,
            ))
        })
        .collect::<Result<_>>()?;

    let evaluate =
        |train: &EmbeddingCorpus, kept: &[usize], test: &EmbeddingCorpus| -> Result<f64> {
            let sub = train.subset(kept)?;
            let model = fit_logistic(
                sub.vectors(),
                sub.labels().expect("labeled"),
                EVAL_L2,
                EVAL_EPOCHS,
            )?;
            f1(
                &model.predict_labels(test.vectors())?,
                test.labels().expect("labeled"),
            )
        };
    let summarize = |fraction: f64, method: &str, scores: Vec<f64>| {
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
        SweepRow {
            fraction,
            method: method.to_string(),
            f1_mean: mean,
            f1_std: var.sqrt(),
        }
    };
    debug_assert!(labels.len() == corpus.len());

    let mut rows = Vec::new();
    for &fraction in fractions {
        for &method in methods {
            let spec = InstanceSpec {
                method,
                retain_fraction: fraction,
                ..base.clone()
            };
            let scores = folds
                .iter()
                .enumerate()
                .map(|(f, (train, test))| {
                    let fold_cfg = AnnealConfig {
                        seed: rng::derive_seed(cfg.seed, "sweep-fold", f as u64),
                        ..cfg.clone()
                    };
                    let sel = select_instances(train, &spec, &fold_cfg)?;
                    evaluate(train, &sel.kept, test)
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(summarize(fraction, method.name(), scores));
        }
        let scores = folds
            .iter()
            .enumerate()
            .map(|(f, (train, test))| {
                let seed = rng::derive_seed(cfg.seed, "sweep-random", f as u64);
                let kept = random_selection(train.len(), fraction, base.batch_size, seed)?;
                evaluate(train, &kept, test)
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(summarize(fraction, "random", scores));
    }
    Ok(rows)
}
