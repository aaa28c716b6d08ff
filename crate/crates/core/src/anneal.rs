//! Simulated annealing and the exhaustive reference solver.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubo::{repair_to_popcount, Assignment, BinaryQuadraticProblem, ConstrainedQubo};
use crate::rng;
use crate::timing::Stopwatch;

/// Largest problem `brute_force_solve` accepts.
pub const BRUTE_FORCE_MAX_VARIABLES: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealConfig {
    pub reads: usize,
    pub sweeps: usize,
    /// Inverse temperature of the first sweep; derived from the problem when unset.
    pub beta_hot: Option<f64>,
    /// Inverse temperature of the last sweep; derived from the problem when unset.
    pub beta_cold: Option<f64>,
    pub seed: u64,
    /// Finish every read with a zero-temperature descent over single flips
    /// and one-in/one-out exchanges.
    pub polish: bool,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            reads: 100,
            sweeps: 1000,
            beta_hot: None,
            beta_cold: None,
            seed: 0,
            polish: true,
        }
    }
}

impl AnnealConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reads == 0 {
            return Err(Error::InvalidParameter("reads must be at least 1".into()));
        }
        if self.sweeps == 0 {
            return Err(Error::InvalidParameter("sweeps must be at least 1".into()));
        }
        for beta in [self.beta_hot, self.beta_cold].into_iter().flatten() {
            if !(beta.is_finite() && beta > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "inverse temperature must be positive, got {beta}"
                )));
            }
        }
        if let (Some(hot), Some(cold)) = (self.beta_hot, self.beta_cold) {
            if hot >= cold {
                return Err(Error::InvalidParameter(format!(
                    "beta_hot ({hot}) must be below beta_cold ({cold})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub bits: Assignment,
    pub energy: f64,
    pub occurrences: usize,
}

/// Distinct final states of all reads, ascending by energy (ties by bit
/// pattern). Occurrence counts sum to the number of reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
    #[serde(rename = "solve_time_ms")]
    pub solve_time_ms: f64,
}

impl SampleSet {
    pub fn lowest(&self) -> &Sample {
        &self.samples[0]
    }

    /// Lowest-energy sample with exactly `k` variables set.
    pub fn lowest_with_popcount(&self, k: usize) -> Option<&Sample> {
        self.samples.iter().find(|s| s.bits.popcount() == k)
    }

    pub fn total_reads(&self) -> usize {
        self.samples.iter().map(|s| s.occurrences).sum()
    }

    /// Same samples, timing ignored.
    pub fn same_samples(&self, other: &Self) -> bool {
        self.samples == other.samples
    }
}

/// Default inverse-temperature range: `ln 2 / max_delta` to `ln 100 / min_delta`,
/// where `max_delta` is the largest single-flip change any variable can see
/// (`|h_i| + sum_j |J_ij|`) and `min_delta` the smallest nonzero coefficient
/// magnitude.
pub fn default_beta_range(p: &BinaryQuadraticProblem) -> (f64, f64) {
    let mut row = p.linear().iter().map(|v| v.abs()).collect::<Vec<_>>();
    for (&(i, j), &v) in p.quadratic() {
        row[i] += v.abs();
        row[j] += v.abs();
    }
    let max_delta = row.iter().cloned().fold(0.0, f64::max);
    let min_delta = p
        .linear()
        .iter()
        .chain(p.quadratic().values())
        .map(|v| v.abs())
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    if max_delta == 0.0 || !min_delta.is_finite() {
        // Flat landscape: every assignment is optimal.
        return (0.1, 1.0);
    }
    (2f64.ln() / max_delta, 100f64.ln() / min_delta)
}

fn schedule(cfg: &AnnealConfig, p: &BinaryQuadraticProblem) -> Vec<f64> {
    let (auto_hot, auto_cold) = default_beta_range(p);
    let mut hot = cfg.beta_hot.unwrap_or(auto_hot);
    let mut cold = cfg.beta_cold.unwrap_or(auto_cold);
    if hot > cold {
        // Only one endpoint was pinned and it crossed the derived one.
        if cfg.beta_hot.is_some() {
            cold = hot;
        } else {
            hot = cold;
        }
    }
    let sweeps = cfg.sweeps;
    if sweeps == 1 {
        return vec![cold];
    }
    let ratio = cold / hot;
    (0..sweeps)
        .map(|s| hot * ratio.powf(s as f64 / (sweeps - 1) as f64))
        .collect()
}

/// Pair couplings for the polish step: dense when small enough, else a map lookup.
struct Couplings<'a> {
    problem: &'a BinaryQuadraticProblem,
    dense: Option<Vec<f64>>,
}

impl<'a> Couplings<'a> {
    const DENSE_LIMIT: usize = 2048;

    fn new(problem: &'a BinaryQuadraticProblem) -> Self {
        let n = problem.num_variables();
        let dense = (n <= Self::DENSE_LIMIT).then(|| {
            let mut m = vec![0.0; n * n];
            for (&(i, j), &v) in problem.quadratic() {
                m[i * n + j] = v;
                m[j * n + i] = v;
            }
            m
        });
        Self { problem, dense }
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        match &self.dense {
            Some(m) => m[i * self.problem.num_variables() + j],
            None => self.problem.quadratic_coefficient(i, j),
        }
    }
}

/// Steepest descent from `bits` until no single flip and no exchange of a set
/// bit with a clear bit lowers the energy.
///
/// Under a heavy cardinality penalty every single flip out of a feasible
/// state costs roughly the penalty strength, so single-flip annealing freezes
/// on whichever feasible subset it first reaches. Exchanges keep the count and
/// see only the objective.
pub fn polish(p: &BinaryQuadraticProblem, bits: &mut [u8]) -> Result<()> {
    if bits.len() != p.num_variables() {
        return Err(Error::Dimension {
            expected: p.num_variables(),
            got: bits.len(),
        });
    }
    polish_with(p, &p.adjacency(), &Couplings::new(p), bits);
    Ok(())
}

fn polish_with(
    p: &BinaryQuadraticProblem,
    adj: &[Vec<(usize, f64)>],
    couplings: &Couplings<'_>,
    bits: &mut [u8],
) {
    let n = p.num_variables();
    let tol = 1e-12 * (1.0 + p.energy_delta_bound());
    let mut field = p.linear().to_vec();
    for i in 0..n {
        if bits[i] == 1 {
            for &(j, w) in &adj[i] {
                field[j] += w;
            }
        }
    }
    let flip = |bits: &mut [u8], field: &mut [f64], i: usize| {
        bits[i] ^= 1;
        let sign = if bits[i] == 1 { 1.0 } else { -1.0 };
        for &(j, w) in &adj[i] {
            field[j] += sign * w;
        }
    };
    loop {
        let mut best = (-tol, None, None);
        for i in 0..n {
            let d = if bits[i] == 1 { -field[i] } else { field[i] };
            if d < best.0 {
                best = (d, Some(i), None);
            }
        }
        for i in (0..n).filter(|&i| bits[i] == 1) {
            for j in (0..n).filter(|&j| bits[j] == 0) {
                let d = field[j] - field[i] - couplings.get(i, j);
                if d < best.0 {
                    best = (d, Some(i), Some(j));
                }
            }
        }
        match best {
            (_, Some(i), None) => flip(bits, &mut field, i),
            (_, Some(i), Some(j)) => {
                flip(bits, &mut field, i);
                flip(bits, &mut field, j);
            }
            _ => return,
        }
    }
}

fn anneal_read(
    n: usize,
    linear: &[f64],
    adj: &[Vec<(usize, f64)>],
    betas: &[f64],
    seed: u64,
    read: usize,
) -> Vec<u8> {
    let mut rng = rng::stream(seed, "anneal-read", read as u64);
    let mut bits: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1u8)).collect();
    let mut field = linear.to_vec();
    for i in 0..n {
        if bits[i] == 1 {
            for &(j, w) in &adj[i] {
                field[j] += w;
            }
        }
    }
    for &beta in betas {
        for i in 0..n {
            let delta = if bits[i] == 1 { -field[i] } else { field[i] };
            let accept = delta <= 0.0 || rng.gen::<f64>() < (-beta * delta).exp();
            if accept {
                bits[i] ^= 1;
                let sign = if bits[i] == 1 { 1.0 } else { -1.0 };
                for &(j, w) in &adj[i] {
                    field[j] += sign * w;
                }
            }
        }
    }
    bits
}

/// Metropolis single-flip annealing, `cfg.reads` independent restarts.
pub fn simulated_anneal(p: &BinaryQuadraticProblem, cfg: &AnnealConfig) -> Result<SampleSet> {
    cfg.validate()?;
    let n = p.num_variables();
    if n == 0 {
        return Err(Error::EmptyProblem);
    }
    let clock = Stopwatch::start();
    let betas = schedule(cfg, p);
    let adj = p.adjacency();
    let couplings = cfg.polish.then(|| Couplings::new(p));
    let run = |read: usize| {
        let mut bits = anneal_read(n, p.linear(), &adj, &betas, cfg.seed, read);
        if let Some(c) = &couplings {
            polish_with(p, &adj, c, &mut bits);
        }
        bits
    };

    #[cfg(feature = "parallel")]
    let finals: Vec<Vec<u8>> = {
        use rayon::prelude::*;
        (0..cfg.reads).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let finals: Vec<Vec<u8>> = (0..cfg.reads).map(run).collect();

    let mut counts: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
    for bits in finals {
        *counts.entry(bits).or_insert(0) += 1;
    }
    let mut samples = counts
        .into_iter()
        .map(|(bits, occurrences)| {
            let energy = p.energy_bits(&bits)?;
            Ok(Sample {
                bits: Assignment::from_bits_unchecked(bits),
                energy,
                occurrences,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    samples.sort_by(|a, b| {
        a.energy
            .total_cmp(&b.energy)
            .then_with(|| a.bits.cmp(&b.bits))
    });
    Ok(SampleSet {
        samples,
        solve_time_ms: clock.elapsed_ms(),
    })
}

/// Outcome of solving a [`ConstrainedQubo`] with the annealer.
#[derive(Debug, Clone, PartialEq)]
pub struct KHotSolution {
    pub bits: Assignment,
    /// Energy of `bits` under the full penalized problem.
    pub energy: f64,
    /// Whether some read ended exactly `k`-hot.
    pub feasible: bool,
    /// Whether greedy repair was applied to reach `k` ones.
    pub repaired: bool,
    pub samples: SampleSet,
}

/// Anneal `q.problem` and keep the lowest-energy sample with exactly `q.k`
/// ones. If no read is feasible, the lowest sample is greedily repaired
/// when `repair` is set and returned as is otherwise.
pub fn solve_k_hot(q: &ConstrainedQubo, cfg: &AnnealConfig, repair: bool) -> Result<KHotSolution> {
    let samples = simulated_anneal(&q.problem, cfg)?;
    if let Some(s) = samples.lowest_with_popcount(q.k) {
        return Ok(KHotSolution {
            bits: s.bits.clone(),
            energy: s.energy,
            feasible: true,
            repaired: false,
            samples,
        });
    }
    let mut bits = samples.lowest().bits.bits().to_vec();
    let repaired = repair && repair_to_popcount(&q.problem, &mut bits, q.k)?;
    let energy = q.problem.energy_bits(&bits)?;
    Ok(KHotSolution {
        bits: Assignment::from_bits_unchecked(bits),
        energy,
        feasible: false,
        repaired,
        samples,
    })
}

/// Exhaustive minimum. Among equal energies the assignment with the lowest
/// integer value (variable 0 least significant) wins.
pub fn brute_force_solve(p: &BinaryQuadraticProblem) -> Result<(Assignment, f64)> {
    let n = p.num_variables();
    if n > BRUTE_FORCE_MAX_VARIABLES {
        return Err(Error::TooLarge {
            n,
            max: BRUTE_FORCE_MAX_VARIABLES,
        });
    }
    // Walk the Gray code so each step is a single flip; incremental energies
    // drift by rounding, so ties are judged with a small tolerance and the
    // winner is re-evaluated exactly.
    let adj = p.adjacency();
    let tol = 1e-12 * (1.0 + p.energy_delta_bound());
    let mut bits = vec![0u8; n];
    let mut field = p.linear().to_vec();
    let mut energy = p.offset();
    let mut best_index = 0u64;
    let mut best_energy = energy;
    for step in 1..(1u64 << n) {
        let i = step.trailing_zeros() as usize;
        if bits[i] == 1 {
            energy -= field[i];
            bits[i] = 0;
            for &(j, w) in &adj[i] {
                field[j] -= w;
            }
        } else {
            energy += field[i];
            bits[i] = 1;
            for &(j, w) in &adj[i] {
                field[j] += w;
            }
        }
        let index = step ^ (step >> 1);
        if energy < best_energy - tol || (energy <= best_energy + tol && index < best_index) {
            best_energy = energy;
            best_index = index;
        }
    }
    let best = Assignment::from_index(n, best_index);
    let exact = p.energy(&best)?;
    Ok((best, exact))
}
