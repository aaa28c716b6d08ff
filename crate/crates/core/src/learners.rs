//! Small linear models used by the formulations: logistic regression for the
//! deletion-influence diagonal and the F1 evaluation, a linear large-margin
//! classifier for the margin-distance diagonal, and a ridge regressor that
//! scores relevance grades for permutation importance.
//!
//! Classifiers standardize features with the training statistics before
//! fitting and fold the scaling back into the returned weights, so every
//! model acts on raw features.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Hinge,
    Ridge,
}

impl ModelKind {
    fn name(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Hinge => "hinge",
            ModelKind::Ridge => "ridge",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub kind: ModelKind,
}

/// Gradient-norm tolerance for the logistic fit.
pub const LOGISTIC_TOLERANCE: f64 = 1e-6;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, bias: f64, kind: ModelKind) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(Self {
            weights,
            bias,
            kind,
        })
    }

    fn check_width(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.weights.len() {
            return Err(Error::Dimension {
                expected: self.weights.len(),
                got: row.len(),
            });
        }
        Ok(())
    }

    fn require(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::ModelKind {
                expected: kind.name(),
                got: self.kind.name(),
            });
        }
        Ok(())
    }

    /// `w . x + b` for one row.
    pub fn decision(&self, row: &[f64]) -> Result<f64> {
        self.check_width(row)?;
        Ok(dot(&self.weights, row) + self.bias)
    }

    /// Raw linear output per row (the predicted target for ridge models).
    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.decision(r)).collect()
    }

    /// Positive-class probabilities of a logistic model.
    pub fn predict_proba(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.require(ModelKind::Logistic)?;
        rows.iter().map(|r| self.decision(r).map(sigmoid)).collect()
    }

    /// Hard labels: 1 where the decision value is positive.
    pub fn predict_labels(&self, rows: &[Vec<f64>]) -> Result<Vec<u8>> {
        rows.iter()
            .map(|r| self.decision(r).map(|d| u8::from(d > 0.0)))
            .collect()
    }

    /// Distance from `row` to the separating hyperplane, `|w.x + b| / ||w||`.
    pub fn margin_distance(&self, row: &[f64]) -> Result<f64> {
        self.require(ModelKind::Hinge)?;
        let norm = dot(&self.weights, &self.weights).sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateModel);
        }
        Ok(self.decision(row)?.abs() / norm)
    }
}

fn check_matrix(x: &[Vec<f64>]) -> Result<usize> {
    let d = x.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
    for row in x {
        if row.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
    }
    Ok(d)
}

fn check_binary(x: &[Vec<f64>], y: &[u8]) -> Result<usize> {
    let d = check_matrix(x)?;
    if y.len() != x.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::InvalidParameter("labels must be 0 or 1".into()));
    }
    let positives = y.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::DegenerateLabels);
    }
    Ok(d)
}

/// Column means and scales; constant columns get scale 1 so they standardize to 0.
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &[Vec<f64>], d: usize) -> Self {
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x {
            for j in 0..d {
                let c = row[j] - mean[j];
                var[j] += c * c;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn transform(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter()
            .map(|row| {
                row.iter()
                    .zip(self.mean.iter().zip(&self.scale))
                    .map(|(v, (m, s))| (v - m) / s)
                    .collect()
            })
            .collect()
    }

    /// Map standardized-space parameters back to raw features.
    fn to_raw(&self, w: &[f64], b: f64, kind: ModelKind) -> LinearModel {
        let weights: Vec<f64> = w.iter().zip(&self.scale).map(|(w, s)| w / s).collect();
        let bias = b - dot(&weights, &self.mean);
        LinearModel {
            weights,
            bias,
            kind,
        }
    }
}

/// Mean log loss plus `l2/2 ||w||^2` and its gradient `(dw, db)`.
pub fn log_loss_gradient(
    weights: &[f64],
    bias: f64,
    x: &[Vec<f64>],
    y: &[u8],
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let z = dot(weights, row) + bias;
        let t = f64::from(label);
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        for (g, v) in gw.iter_mut().zip(row) {
            *g += r * v;
        }
        gb += r;
    }
    loss /= n;
    gb /= n;
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    loss += 0.5 * l2 * dot(weights, weights);
    (loss, gw, gb)
}

/// L2-regularized logistic regression by full-batch accelerated gradient
/// descent from zero, stopping when the gradient's largest component drops
/// below [`LOGISTIC_TOLERANCE`] or after `max_epochs`.
pub fn fit_logistic(x: &[Vec<f64>], y: &[u8], l2: f64, max_epochs: usize) -> Result<LinearModel> {
    if !(l2.is_finite() && l2 >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "l2 must be nonnegative, got {l2}"
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidParameter(
            "logistic regression needs at least 2 rows".into(),
        ));
    }
    let d = check_binary(x, y)?;
    let std = Standardizer::fit(x, d);
    let z = std.transform(x);
    let active = (0..d)
        .filter(|&j| z.iter().any(|row| row[j] != 0.0))
        .count();
    // Lipschitz bound of the gradient: trace of the augmented Gram matrix / n.
    let step = 1.0 / (0.25 * (1.0 + active as f64) + l2);

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut w_prev = w.clone();
    let mut b_prev = b;
    let mut since_restart = 0usize;
    for _ in 0..max_epochs {
        let momentum = since_restart as f64 / (since_restart as f64 + 3.0);
        let yw: Vec<f64> = w
            .iter()
            .zip(&w_prev)
            .map(|(a, p)| a + momentum * (a - p))
            .collect();
        let yb = b + momentum * (b - b_prev);
        let (_, gw, gb) = log_loss_gradient(&yw, yb, &z, y, l2);
        let gmax = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if gmax < LOGISTIC_TOLERANCE {
            w = yw;
            b = yb;
            break;
        }
        let nw: Vec<f64> = yw.iter().zip(&gw).map(|(v, g)| v - step * g).collect();
        let nb = yb - step * gb;
        // Restart the momentum whenever the step points uphill.
        let uphill = gw
            .iter()
            .zip(nw.iter().zip(&w))
            .map(|(g, (n, o))| g * (n - o))
            .sum::<f64>()
            + gb * (nb - b)
            > 0.0;
        if uphill {
            since_restart = 0;
            w_prev = nw.clone();
            b_prev = nb;
        } else {
            since_restart += 1;
            w_prev = std::mem::take(&mut w);
            b_prev = b;
        }
        w = nw;
        b = nb;
    }
    Ok(std.to_raw(&w, b, ModelKind::Logistic))
}

/// Linear soft-margin classifier trained by Pegasos-style stochastic
/// subgradient descent on `1/2 ||w||^2 + c * sum hinge`, i.e. regularization
/// `1 / (c n)`. The bias rides along as a constant feature. Returns the
/// average of the second half of the iterates.
pub fn fit_linear_margin(
    x: &[Vec<f64>],
    y: &[u8],
    c: f64,
    epochs: usize,
    seed: u64,
) -> Result<LinearModel> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "c must be positive, got {c}"
        )));
    }
    if epochs == 0 {
        return Err(Error::InvalidParameter("epochs must be at least 1".into()));
    }
    let d = check_binary(x, y)?;
    let std = Standardizer::fit(x, d);
    let mut z = std.transform(x);
    z.iter_mut().for_each(|row| row.push(1.0));
    let signs: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();

    let n = z.len();
    let lambda = 1.0 / (c * n as f64);
    let radius = 1.0 / lambda.sqrt();
    let total = epochs * n;
    let average_from = total / 2;
    let mut rng = rng::stream(seed, "pegasos", 0);
    let mut w = vec![0.0; d + 1];
    let mut avg = vec![0.0; d + 1];
    let mut averaged = 0usize;
    for t in 1..=total {
        let i = rng.gen_range(0..n);
        let eta = 1.0 / (lambda * t as f64);
        let violated = signs[i] * dot(&w, &z[i]) < 1.0;
        let shrink = 1.0 - eta * lambda;
        for (wj, zj) in w.iter_mut().zip(&z[i]) {
            *wj *= shrink;
            if violated {
                *wj += eta * signs[i] * zj;
            }
        }
        let norm = dot(&w, &w).sqrt();
        if norm > radius {
            let f = radius / norm;
            w.iter_mut().for_each(|v| *v *= f);
        }
        if t > average_from {
            averaged += 1;
            for (a, v) in avg.iter_mut().zip(&w) {
                *a += v;
            }
        }
    }
    avg.iter_mut().for_each(|a| *a /= averaged as f64);
    let b = avg.pop().expect("bias slot");
    Ok(std.to_raw(&avg, b, ModelKind::Hinge))
}

/// Ridge regression in closed form on raw features: the bias is the
/// unpenalized intercept, `w = (Xc^T Xc + l2 I)^-1 Xc^T yc` on centered data.
pub fn fit_ridge(x: &[Vec<f64>], y: &[f64], l2: f64) -> Result<LinearModel> {
    if !(l2.is_finite() && l2 >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "l2 must be nonnegative, got {l2}"
        )));
    }
    let d = check_matrix(x)?;
    if y.len() != x.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("targets"));
    }
    let n = x.len();
    let mean_x: Vec<f64> = (0..d)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, d, |i, j| x[i][j] - mean_x[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - mean_y));
    let gram = xc.transpose() * &xc + DMatrix::identity(d, d) * l2;
    let rhs = xc.transpose() * yc;
    let w = gram.lu().solve(&rhs).ok_or(Error::Singular)?;
    let weights: Vec<f64> = w.iter().copied().collect();
    if weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    let bias = mean_y - dot(&weights, &mean_x);
    Ok(LinearModel {
        weights,
        bias,
        kind: ModelKind::Ridge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_separable_1d() {
        let x = vec![vec![-1.0], vec![1.0]];
        let m = fit_logistic(&x, &[0, 1], 1e-2, 5000).unwrap();
        let p = m.predict_proba(&x).unwrap();
        assert!(p[0] < 0.5 && p[1] > 0.5);
    }

    #[test]
    fn logistic_row_order_does_not_matter() {
        let x = vec![
            vec![0.1, 2.0],
            vec![1.5, -0.3],
            vec![-0.7, 0.4],
            vec![2.2, 1.1],
            vec![-1.0, -2.0],
        ];
        let y = [0, 1, 0, 1, 1];
        let a = fit_logistic(&x, &y, 0.1, 5000).unwrap();
        let order = [3, 0, 4, 2, 1];
        let xp: Vec<_> = order.iter().map(|&i| x[i].clone()).collect();
        let yp: Vec<_> = order.iter().map(|&i| y[i]).collect();
        let b = fit_logistic(&xp, &yp, 0.1, 5000).unwrap();
        for (u, v) in a.weights.iter().zip(&b.weights) {
            assert!((u - v).abs() < 1e-9);
        }
        assert!((a.bias - b.bias).abs() < 1e-9);
    }

    #[test]
    fn logistic_uninformative_features_give_prior_logit() {
        // Constant features: the optimum has w = 0 and b = logit(3/10).
        let x = vec![vec![1.0, -2.0]; 10];
        let y = [1, 0, 0, 1, 0, 0, 0, 1, 0, 0];
        let m = fit_logistic(&x, &y, 0.5, 5000).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-9));
        assert!((m.bias - (0.3f64 / 0.7).ln()).abs() < 1e-3);
    }

    #[test]
    fn logistic_rejects_single_class() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            fit_logistic(&x, &[1, 1], 0.1, 10),
            Err(Error::DegenerateLabels)
        ));
    }

    #[test]
    fn predict_proba_examples() {
        let m = LinearModel::new(vec![0.0], 0.0, ModelKind::Logistic).unwrap();
        assert_eq!(m.predict_proba(&[vec![3.0]]).unwrap(), vec![0.5]);
        let m = LinearModel::new(vec![1.0], 0.0, ModelKind::Logistic).unwrap();
        assert_eq!(m.predict_proba(&[vec![0.0]]).unwrap(), vec![0.5]);
        let p = m.predict_proba(&[vec![3f64.ln()]]).unwrap()[0];
        assert!((p - 0.75).abs() < 1e-15);
        assert!(matches!(
            m.predict_proba(&[vec![1.0, 2.0]]),
            Err(Error::Dimension { .. })
        ));
        let r = LinearModel::new(vec![1.0], 0.0, ModelKind::Ridge).unwrap();
        assert!(matches!(
            r.predict_proba(&[vec![1.0]]),
            Err(Error::ModelKind { .. })
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = rng::stream(3, "test", 0);
        for _ in 0..10 {
            let x: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let y: Vec<u8> = (0..6).map(|i| (i % 2) as u8).collect();
            let w: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = rng.gen_range(-1.0..1.0);
            let l2 = 0.3;
            let (_, gw, gb) = log_loss_gradient(&w, b, &x, &y, l2);
            let h = 1e-5;
            let rel = |a: f64, e: f64| (a - e).abs() / e.abs().max(1e-3);
            for j in 0..3 {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[j] += h;
                wm[j] -= h;
                let fd = (log_loss_gradient(&wp, b, &x, &y, l2).0
                    - log_loss_gradient(&wm, b, &x, &y, l2).0)
                    / (2.0 * h);
                assert!(rel(gw[j], fd) < 1e-6, "dw{j}: {} vs {}", gw[j], fd);
            }
            let fd = (log_loss_gradient(&w, b + h, &x, &y, l2).0
                - log_loss_gradient(&w, b - h, &x, &y, l2).0)
                / (2.0 * h);
            assert!(rel(gb, fd) < 1e-6);
        }
    }

    fn two_blobs() -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = rng::stream(9, "test", 1);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let c = if i % 2 == 0 { (-3.0, -3.0) } else { (3.0, 3.0) };
            x.push(vec![
                c.0 + rng.gen_range(-1.0..1.0),
                c.1 + rng.gen_range(-1.0..1.0),
            ]);
            y.push((i % 2) as u8);
        }
        (x, y)
    }

    #[test]
    fn margin_classifier_separates_blobs() {
        let (x, y) = two_blobs();
        let m = fit_linear_margin(&x, &y, 1.0, 50, 4).unwrap();
        assert_eq!(m.predict_labels(&x).unwrap(), y);
    }

    #[test]
    fn margin_classifier_label_flip_negates() {
        let (x, y) = two_blobs();
        let flipped: Vec<u8> = y.iter().map(|v| 1 - v).collect();
        let a = fit_linear_margin(&x, &y, 1.0, 20, 8).unwrap();
        let b = fit_linear_margin(&x, &flipped, 1.0, 20, 8).unwrap();
        for (u, v) in a.weights.iter().zip(&b.weights) {
            assert!((u + v).abs() < 1e-3);
        }
        assert!((a.bias + b.bias).abs() < 1e-3);
    }

    #[test]
    fn margin_classifier_cannot_fit_xor() {
        let x = vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ];
        let y = [0, 0, 1, 1];
        let m = fit_linear_margin(&x, &y, 1.0, 200, 2).unwrap();
        let pred = m.predict_labels(&x).unwrap();
        let acc = pred.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / 4.0;
        assert!(acc <= 0.75);
    }

    #[test]
    fn margin_distance_examples() {
        let m = LinearModel::new(vec![1.0, 0.0], 0.0, ModelKind::Hinge).unwrap();
        assert_eq!(m.margin_distance(&[0.0, 3.0]).unwrap(), 0.0);
        assert_eq!(m.margin_distance(&[2.0, 5.0]).unwrap(), 2.0);
        let m = LinearModel::new(vec![3.0, 4.0], 0.0, ModelKind::Hinge).unwrap();
        assert!((m.margin_distance(&[1.0, 1.0]).unwrap() - 1.4).abs() < 1e-15);
        let z = LinearModel::new(vec![0.0, 0.0], 1.0, ModelKind::Hinge).unwrap();
        assert!(matches!(
            z.margin_distance(&[1.0, 1.0]),
            Err(Error::DegenerateModel)
        ));
    }

    #[test]
    fn margin_distance_is_scale_invariant() {
        let m = LinearModel::new(vec![0.7, -1.3], 0.4, ModelKind::Hinge).unwrap();
        let x = [2.0, 0.5];
        let base = m.margin_distance(&x).unwrap();
        for s in [0.5, 2.0, 10.0] {
            let w: Vec<f64> = m.weights.iter().map(|v| v * s).collect();
            let scaled = LinearModel::new(w, m.bias * s, ModelKind::Hinge).unwrap();
            assert!((scaled.margin_distance(&x).unwrap() - base).abs() < 1e-12);
        }
    }

    #[test]
    fn ridge_examples() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..5).map(|i| 2.0 * i as f64).collect();
        let m = fit_ridge(&x, &y, 1e-12).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 1e-6);

        let m = fit_ridge(&x, &[4.0; 5], 0.1).unwrap();
        assert!(m.weights[0].abs() < 1e-12);
        assert!((m.bias - 4.0).abs() < 1e-12);

        // Two points (0,1), (1,3): the exact line y = 2x + 1.
        let m = fit_ridge(&[vec![0.0], vec![1.0]], &[1.0, 3.0], 0.0).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 1e-12);
        assert!((m.bias - 1.0).abs() < 1e-12);

        assert!(matches!(
            fit_ridge(&[vec![1.0], vec![1.0]], &[0.0, 1.0], 0.0),
            Err(Error::Singular)
        ));
    }

    #[test]
    fn ridge_residuals_are_orthogonal_up_to_penalty() {
        let mut rng = rng::stream(5, "test", 2);
        let x: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| r[0] - 2.0 * r[2] + rng.gen_range(-0.5..0.5))
            .collect();
        let l2 = 0.7;
        let m = fit_ridge(&x, &y, l2).unwrap();
        let pred = m.predict(&x).unwrap();
        for j in 0..4 {
            let xr: f64 = x
                .iter()
                .zip(y.iter().zip(&pred))
                .map(|(r, (t, p))| r[j] * (t - p))
                .sum();
            assert!((xr - l2 * m.weights[j]).abs() < 1e-6, "column {j}");
        }
    }
}
