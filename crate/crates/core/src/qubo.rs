//! Binary quadratic problems over `{0,1}^n`.
//!
//! A problem is stored as linear coefficients (the diagonal of Q), one
//! coefficient per unordered variable pair `i < j` (the two off-diagonal
//! entries collapsed), and a constant offset:
//!
//! ```text
//! E(x) = offset + sum_i h_i x_i + sum_{i<j} J_ij x_i x_j
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A binary vector; every entry is 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Assignment(Vec<u8>);

impl Assignment {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(bad) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidAssignment(format!(
                "entry {bad} is not binary"
            )));
        }
        Ok(Self(bits))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    /// Assignment whose bit `i` is bit `i` of `index` (variable 0 least significant).
    pub fn from_index(n: usize, index: u64) -> Self {
        Self((0..n).map(|i| ((index >> i) & 1) as u8).collect())
    }

    /// Set the listed variables to 1.
    pub fn from_support(n: usize, support: &[usize]) -> Result<Self> {
        let mut bits = vec![0; n];
        for &i in support {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, n });
            }
            bits[i] = 1;
        }
        Ok(Self(bits))
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn popcount(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    /// Indices of the variables set to 1, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| (b == 1).then_some(i))
            .collect()
    }

    pub(crate) fn from_bits_unchecked(bits: Vec<u8>) -> Self {
        Self(bits)
    }

    pub fn into_bits(self) -> Vec<u8> {
        self.0
    }
}

impl<'de> Deserialize<'de> for Assignment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let bits = Vec::<u8>::deserialize(d)?;
        Assignment::new(bits).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryQuadraticProblem {
    n: usize,
    linear: Vec<f64>,
    quadratic: BTreeMap<(usize, usize), f64>,
    offset: f64,
}

impl BinaryQuadraticProblem {
    /// The zero problem on `n` variables.
    pub fn new(n: usize) -> Self {
        Self {
            n,
            linear: vec![0.0; n],
            quadratic: BTreeMap::new(),
            offset: 0.0,
        }
    }

    /// Build from a linear vector, `(i, j, value)` triplets and an offset.
    ///
    /// Triplets may use either triangle and may repeat a pair; repeated
    /// pairs are summed and `i == j` entries fold into the linear term.
    pub fn from_parts(
        linear: Vec<f64>,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
        offset: f64,
    ) -> Result<Self> {
        let mut p = Self::new(linear.len());
        for (i, &v) in linear.iter().enumerate() {
            p.add_linear(i, v)?;
        }
        for (i, j, v) in triplets {
            p.add_quadratic(i, j, v)?;
        }
        p.add_offset(offset)?;
        Ok(p)
    }

    /// Build from a dense `n x n` matrix under `E(x) = x^T Q x`.
    pub fn from_dense(q: &[Vec<f64>]) -> Result<Self> {
        let n = q.len();
        let mut p = Self::new(n);
        for (i, row) in q.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                p.add_quadratic(i, j, v)?;
            }
        }
        Ok(p)
    }

    pub fn num_variables(&self) -> usize {
        self.n
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    /// Pair coefficients keyed by `(i, j)` with `i < j`.
    pub fn quadratic(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.quadratic
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n {
            Err(Error::IndexOutOfRange {
                index: i,
                n: self.n,
            })
        } else {
            Ok(())
        }
    }

    pub fn add_linear(&mut self, i: usize, v: f64) -> Result<()> {
        self.check_index(i)?;
        if !v.is_finite() {
            return Err(Error::NonFinite("linear coefficient"));
        }
        self.linear[i] += v;
        Ok(())
    }

    pub fn add_quadratic(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        self.check_index(i)?;
        self.check_index(j)?;
        if !v.is_finite() {
            return Err(Error::NonFinite("quadratic coefficient"));
        }
        if i == j {
            // x_i^2 = x_i
            self.linear[i] += v;
        } else {
            *self.quadratic.entry((i.min(j), i.max(j))).or_insert(0.0) += v;
        }
        Ok(())
    }

    pub fn add_offset(&mut self, v: f64) -> Result<()> {
        if !v.is_finite() {
            return Err(Error::NonFinite("offset"));
        }
        self.offset += v;
        Ok(())
    }

    pub fn quadratic_coefficient(&self, i: usize, j: usize) -> f64 {
        self.quadratic
            .get(&(i.min(j), i.max(j)))
            .copied()
            .unwrap_or(0.0)
    }

    /// Energy of `x`; errors when the length differs from the variable count.
    pub fn energy(&self, x: &Assignment) -> Result<f64> {
        self.energy_bits(x.bits())
    }

    pub fn energy_bits(&self, bits: &[u8]) -> Result<f64> {
        if bits.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: bits.len(),
            });
        }
        let mut e = self.offset;
        for (h, &b) in self.linear.iter().zip(bits) {
            if b == 1 {
                e += h;
            }
        }
        for (&(i, j), &v) in &self.quadratic {
            if bits[i] == 1 && bits[j] == 1 {
                e += v;
            }
        }
        Ok(e)
    }

    /// Coefficient-wise sum; energies add pointwise.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: other.n,
            });
        }
        let mut out = self.clone();
        for (a, b) in out.linear.iter_mut().zip(&other.linear) {
            *a += b;
        }
        for (&key, &v) in &other.quadratic {
            *out.quadratic.entry(key).or_insert(0.0) += v;
        }
        out.offset += other.offset;
        Ok(out)
    }

    /// Multiply every coefficient (and the offset) by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !factor.is_finite() {
            return Err(Error::NonFinite("scale factor"));
        }
        let mut out = self.clone();
        out.linear.iter_mut().for_each(|v| *v *= factor);
        out.quadratic.values_mut().for_each(|v| *v *= factor);
        out.offset *= factor;
        Ok(out)
    }

    /// `sum |h_i| + sum |J_ij|`, an upper bound on `max E - min E`.
    pub fn energy_delta_bound(&self) -> f64 {
        self.linear.iter().map(|v| v.abs()).sum::<f64>()
            + self.quadratic.values().map(|v| v.abs()).sum::<f64>()
    }

    /// Per-variable neighbour lists `(j, J_ij)`, both directions, zero couplings dropped.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for (&(i, j), &v) in &self.quadratic {
            if v != 0.0 {
                adj[i].push((j, v));
                adj[j].push((i, v));
            }
        }
        adj
    }

    /// Energy change of flipping each variable of `bits`.
    pub fn flip_deltas(&self, bits: &[u8]) -> Result<Vec<f64>> {
        if bits.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: bits.len(),
            });
        }
        let mut field = self.linear.clone();
        for (&(i, j), &v) in &self.quadratic {
            if bits[j] == 1 {
                field[i] += v;
            }
            if bits[i] == 1 {
                field[j] += v;
            }
        }
        Ok(field
            .into_iter()
            .zip(bits)
            .map(|(f, &b)| if b == 1 { -f } else { f })
            .collect())
    }
}

/// `strength * (sum_i x_i - k)^2` over `n` variables.
pub fn k_hot_constraint(n: usize, k: usize, strength: f64) -> Result<BinaryQuadraticProblem> {
    if k > n {
        return Err(Error::InvalidConstraint(format!("k = {k} exceeds n = {n}")));
    }
    if !(strength.is_finite() && strength > 0.0) {
        return Err(Error::InvalidConstraint(format!(
            "strength must be positive and finite, got {strength}"
        )));
    }
    let kf = k as f64;
    let mut p = BinaryQuadraticProblem::new(n);
    p.linear = vec![strength * (1.0 - 2.0 * kf); n];
    for i in 0..n {
        for j in i + 1..n {
            p.quadratic.insert((i, j), 2.0 * strength);
        }
    }
    p.offset = strength * kf * kf;
    Ok(p)
}

/// Greedily flip bits of `bits` until exactly `k` are set, each step taking
/// the admissible flip with the lowest energy change (ties to the lower
/// index). Returns whether any bit changed.
pub fn repair_to_popcount(p: &BinaryQuadraticProblem, bits: &mut [u8], k: usize) -> Result<bool> {
    if k > p.num_variables() {
        return Err(Error::InvalidConstraint(format!(
            "k = {k} exceeds n = {}",
            p.num_variables()
        )));
    }
    let mut changed = false;
    loop {
        let count = bits.iter().filter(|&&b| b == 1).count();
        if count == k {
            return Ok(changed);
        }
        let from = if count > k { 1 } else { 0 };
        let deltas = p.flip_deltas(bits)?;
        let best = deltas
            .iter()
            .enumerate()
            .filter(|&(i, _)| bits[i] == from)
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
            .expect("a flippable bit exists while popcount differs from k");
        bits[best] ^= 1;
        changed = true;
    }
}

/// An objective composed with an exactly-`k` penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedQubo {
    /// The data term alone.
    pub objective: BinaryQuadraticProblem,
    pub k: usize,
    pub penalty_strength: f64,
    /// `objective + penalty_strength * (sum x - k)^2`.
    pub problem: BinaryQuadraticProblem,
}

impl ConstrainedQubo {
    /// Compose `objective` with a `k`-hot penalty. Without an explicit
    /// strength the penalty is twice the objective's energy-delta bound, which
    /// makes every infeasible assignment cost more than any feasible one; a
    /// constant objective falls back to strength 1.
    pub fn new(objective: BinaryQuadraticProblem, k: usize, strength: Option<f64>) -> Result<Self> {
        let penalty_strength = match strength {
            Some(s) => s,
            None => {
                let bound = objective.energy_delta_bound();
                if bound > 0.0 {
                    2.0 * bound
                } else {
                    1.0
                }
            }
        };
        let penalty = k_hot_constraint(objective.num_variables(), k, penalty_strength)?;
        let problem = objective.compose(&penalty)?;
        Ok(Self {
            objective,
            k,
            penalty_strength,
            problem,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ProblemJson {
    n: usize,
    linear: Vec<f64>,
    quadratic: Vec<(usize, usize, f64)>,
    offset: f64,
}

impl Serialize for BinaryQuadraticProblem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ProblemJson {
            n: self.n,
            linear: self.linear.clone(),
            quadratic: self
                .quadratic
                .iter()
                .map(|(&(i, j), &v)| (i, j, v))
                .collect(),
            offset: self.offset,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BinaryQuadraticProblem {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = ProblemJson::deserialize(d)?;
        if raw.linear.len() != raw.n {
            return Err(D::Error::custom(format!(
                "linear has {} entries for n = {}",
                raw.linear.len(),
                raw.n
            )));
        }
        BinaryQuadraticProblem::from_parts(raw.linear, raw.quadratic, raw.offset)
            .map_err(D::Error::custom)
    }
}
