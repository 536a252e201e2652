//! Neural-collapse measurements on penultimate features.
//!
//! Normalisations: `tr Σ_W = (1/N) Σᵢ ‖hᵢ − μ_{c(i)}‖²`,
//! `tr Σ_B = (1/K) Σ_c ‖μ_c − μ_G‖²`, with `μ_G` the sample-weighted mean.
//! NC2 averages over ordered pairs `i ≠ j`.

use std::fmt;

use crate::error::{Error, Result};
use crate::numcore::{Matrix, Scalar};

/// Denominators at or below this are degenerate.
pub const DEGENERATE_FLOOR: f64 = 1e-12;

/// A metric value, or a marker that its denominator vanished.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Metric {
    Value(f64),
    Degenerate,
}

impl Metric {
    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(v),
            Metric::Degenerate => None,
        }
    }

    fn from_finite(v: f64) -> Self {
        if v.is_finite() {
            Metric::Value(v)
        } else {
            Metric::Degenerate
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Value(v) => write!(f, "{v}"),
            Metric::Degenerate => f.write_str("degenerate"),
        }
    }
}

/// One-pass accumulator of class-conditional first and second moments.
///
/// Uses Welford's vector update per class, so the full feature matrix never
/// has to be held at once.
#[derive(Clone, Debug)]
pub struct FeatureAccumulator {
    dim: usize,
    counts: Vec<usize>,
    means: Vec<Vec<f64>>,
    /// Σ ‖h − μ_c‖² per class.
    m2: Vec<f64>,
    norm_sum: f64,
}

impl FeatureAccumulator {
    pub fn new(num_classes: usize, dim: usize) -> Self {
        Self {
            dim,
            counts: vec![0; num_classes],
            means: vec![vec![0.0; dim]; num_classes],
            m2: vec![0.0; num_classes],
            norm_sum: 0.0,
        }
    }

    pub fn push<T: Scalar>(&mut self, h: &[T], label: usize) -> Result<()> {
        if h.len() != self.dim {
            return Err(Error::arg(format!("feature length {} != {}", h.len(), self.dim)));
        }
        if label >= self.counts.len() {
            return Err(Error::Label {
                label,
                classes: self.counts.len(),
            });
        }
        self.counts[label] += 1;
        let n = self.counts[label] as f64;
        let mean = &mut self.means[label];
        let mut m2 = 0.0;
        let mut sq = 0.0;
        for (mu, &v) in mean.iter_mut().zip(h) {
            let v = v.as_f64();
            let delta = v - *mu;
            *mu += delta / n;
            m2 += delta * (v - *mu);
            sq += v * v;
        }
        self.m2[label] += m2;
        self.norm_sum += sq.sqrt();
        Ok(())
    }

    pub fn push_batch<T: Scalar>(&mut self, h: &Matrix<T>, labels: &[usize]) -> Result<()> {
        if h.rows() != labels.len() {
            return Err(Error::arg("feature rows and labels differ in length"));
        }
        for (row, &y) in h.row_iter().zip(labels) {
            self.push(row, y)?;
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Mean feature norm of everything pushed so far.
    pub fn mean_norm(&self) -> f64 {
        self.norm_sum / self.total().max(1) as f64
    }

    pub fn finish(&self) -> Result<FeatureStats> {
        if let Some(c) = self.counts.iter().position(|&n| n == 0) {
            return Err(Error::Metric(format!("class {c} has no samples")));
        }
        let n = self.total() as f64;
        let k = self.counts.len();
        let mut global = vec![0.0; self.dim];
        for (mu, &cnt) in self.means.iter().zip(&self.counts) {
            for (g, &m) in global.iter_mut().zip(mu) {
                *g += cnt as f64 * m;
            }
        }
        global.iter_mut().for_each(|g| *g /= n);
        let centered: Vec<Vec<f64>> = self
            .means
            .iter()
            .map(|mu| mu.iter().zip(&global).map(|(a, b)| a - b).collect())
            .collect();
        let tr_within = self.m2.iter().sum::<f64>() / n;
        let tr_between = centered.iter().map(|m| sq_norm(m)).sum::<f64>() / k as f64;
        Ok(FeatureStats {
            class_means: self.means.clone(),
            global_mean: global,
            centered_means: centered,
            tr_within,
            tr_between,
            counts: self.counts.clone(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats {
    pub class_means: Vec<Vec<f64>>,
    pub global_mean: Vec<f64>,
    /// `m_c = μ_c − μ_G`.
    pub centered_means: Vec<Vec<f64>>,
    pub tr_within: f64,
    pub tr_between: f64,
    pub counts: Vec<usize>,
}

pub fn feature_stats<T: Scalar>(h: &Matrix<T>, labels: &[usize], num_classes: usize) -> Result<FeatureStats> {
    let mut acc = FeatureAccumulator::new(num_classes, h.cols());
    acc.push_batch(h, labels)?;
    acc.finish()
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (sq_norm(a).sqrt() * sq_norm(b).sqrt())
}

/// `tr Σ_W / tr Σ_B`.
pub fn nc1(stats: &FeatureStats) -> Metric {
    if stats.tr_between <= DEGENERATE_FLOOR {
        return Metric::Degenerate;
    }
    Metric::from_finite(stats.tr_within / stats.tr_between)
}

/// Mean over ordered pairs of `|cos(m_i, m_j) + 1/(K−1)|`.
pub fn nc2(stats: &FeatureStats) -> Metric {
    let m = &stats.centered_means;
    let k = m.len();
    if k < 2 || m.iter().any(|v| sq_norm(v).sqrt() <= DEGENERATE_FLOOR) {
        return Metric::Degenerate;
    }
    let target = 1.0 / (k as f64 - 1.0);
    let mut sum = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i != j {
                sum += (cosine(&m[i], &m[j]) + target).abs();
            }
        }
    }
    Metric::from_finite(sum / (k * (k - 1)) as f64)
}

/// `1 − (1/K) Σ_c cos(w_c, m_c)` for head rows `w_c`.
pub fn nc3<T: Scalar>(stats: &FeatureStats, head: &Matrix<T>) -> Result<Metric> {
    let m = &stats.centered_means;
    if head.rows() != m.len() || head.cols() != stats.global_mean.len() {
        return Err(Error::Shape {
            op: "nc3",
            left: head.shape(),
            right: (m.len(), stats.global_mean.len()),
        });
    }
    let rows: Vec<Vec<f64>> = head.row_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect();
    let degenerate = |v: &[f64]| sq_norm(v).sqrt() <= DEGENERATE_FLOOR;
    if rows.iter().any(|r| degenerate(r)) || m.iter().any(|v| degenerate(v)) {
        return Ok(Metric::Degenerate);
    }
    let mean_cos = rows.iter().zip(m).map(|(w, mc)| cosine(w, mc)).sum::<f64>() / m.len() as f64;
    Ok(Metric::from_finite(1.0 - mean_cos))
}

/// `(1/N) Σᵢ ‖hᵢ‖₂`.
pub fn mean_feature_norm<T: Scalar>(h: &Matrix<T>) -> Result<f64> {
    if h.rows() == 0 {
        return Err(Error::Metric("mean feature norm of an empty matrix".into()));
    }
    let total: f64 = h
        .row_iter()
        .map(|r| r.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt())
        .sum();
    Ok(total / h.rows() as f64)
}

/// One row of a run log.
#[derive(Clone, Debug, PartialEq)]
pub struct NcSnapshot {
    /// Global epoch, 1-based across both phases.
    pub epoch: usize,
    pub phase: u8,
    pub lr: f64,
    pub loss: f64,
    pub train_acc: f64,
    pub nc1: Metric,
    pub nc2: Metric,
    pub nc3: Metric,
    pub fn_: f64,
}

/// Metrics for one full pass, before epoch/phase bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NcMeasurement {
    pub nc1: Metric,
    pub nc2: Metric,
    pub nc3: Metric,
    pub fn_: f64,
}

impl NcMeasurement {
    pub fn from_accumulator<T: Scalar>(acc: &FeatureAccumulator, head: &Matrix<T>) -> Self {
        let fn_ = acc.mean_norm();
        match acc.finish() {
            Ok(stats) => Self {
                nc1: nc1(&stats),
                nc2: nc2(&stats),
                nc3: nc3(&stats, head).unwrap_or(Metric::Degenerate),
                fn_,
            },
            Err(_) => Self {
                nc1: Metric::Degenerate,
                nc2: Metric::Degenerate,
                nc3: Metric::Degenerate,
                fn_,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn identical_samples_have_zero_scatter() {
        let h = m(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
        let s = feature_stats(&h, &[0, 1, 0, 1], 2).unwrap();
        assert_eq!(s.tr_within, 0.0);
        assert_eq!(s.tr_between, 0.0);
        assert_eq!(nc1(&s), Metric::Degenerate);
    }

    #[test]
    fn one_dimensional_hand_example() {
        let h = m(&[&[0.0], &[2.0], &[10.0], &[12.0]]);
        let s = feature_stats(&h, &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(s.class_means, vec![vec![1.0], vec![11.0]]);
        assert_eq!(s.global_mean, vec![6.0]);
        assert!((s.tr_within - 1.0).abs() < 1e-15);
        assert!((s.tr_between - 25.0).abs() < 1e-15);
        assert!((nc1(&s).value().unwrap() - 0.04).abs() < 1e-15);
    }

    #[test]
    fn permutation_does_not_change_stats() {
        let h = m(&[&[0.0, 1.0], &[2.0, -1.0], &[10.0, 3.0], &[12.0, 0.5], &[4.0, 4.0]]);
        let a = feature_stats(&h, &[0, 0, 1, 1, 0], 2).unwrap();
        let hp = h.select_rows(&[4, 2, 0, 3, 1]);
        let b = feature_stats(&hp, &[0, 1, 0, 1, 0], 2).unwrap();
        assert!((a.tr_within - b.tr_within).abs() < 1e-12);
        assert!((a.tr_between - b.tr_between).abs() < 1e-12);
    }

    #[test]
    fn empty_class_is_metric_error() {
        let h = m(&[&[0.0], &[1.0]]);
        assert!(matches!(feature_stats(&h, &[0, 0], 2), Err(Error::Metric(_))));
    }

    #[test]
    fn zero_within_scatter_gives_zero_nc1() {
        let h = m(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[0.0, 1.0]]);
        let s = feature_stats(&h, &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(nc1(&s), Metric::Value(0.0));
    }

    fn stats_from_centered(means: Vec<Vec<f64>>) -> FeatureStats {
        let d = means[0].len();
        FeatureStats {
            class_means: means.clone(),
            global_mean: vec![0.0; d],
            centered_means: means,
            tr_within: 0.0,
            tr_between: 1.0,
            counts: vec![1; d],
        }
    }

    #[test]
    fn simplex_in_plane_is_etf() {
        let a = std::f64::consts::TAU / 3.0;
        let s = stats_from_centered((0..3).map(|i| vec![(a * i as f64).cos(), (a * i as f64).sin()]).collect());
        assert!(nc2(&s).value().unwrap() < 1e-12);
    }

    #[test]
    fn orthogonal_means_give_one_over_k_minus_one() {
        let k = 10;
        let means = (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let v = nc2(&stats_from_centered(means)).value().unwrap();
        assert!((v - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn antipodal_pair() {
        let s = stats_from_centered(vec![vec![2.0, 1.0], vec![-2.0, -1.0]]);
        assert!(nc2(&s).value().unwrap() < 1e-15);
    }

    #[test]
    fn nc3_alignment_cases() {
        let means = vec![vec![1.0, 2.0, 0.0], vec![-1.0, 0.5, 3.0]];
        let s = stats_from_centered(means.clone());
        let scaled = Matrix::from_rows(&means.iter().map(|r| r.iter().map(|v| 7.0 * v).collect()).collect::<Vec<_>>()).unwrap();
        assert!(nc3(&s, &scaled).unwrap().value().unwrap().abs() < 1e-15);
        let neg = scaled.map(|v| -v);
        assert!((nc3(&s, &neg).unwrap().value().unwrap() - 2.0).abs() < 1e-15);
        // rows orthogonal to their class means
        let perp = m(&[&[2.0, -1.0, 0.0], &[0.5, 1.0, 0.0]]);
        assert!((nc3(&s, &perp).unwrap().value().unwrap() - 1.0).abs() < 1e-15);
        let zero = Matrix::<f64>::zeros(2, 3);
        assert_eq!(nc3(&s, &zero).unwrap(), Metric::Degenerate);
    }

    #[test]
    fn mean_norm_cases() {
        assert_eq!(mean_feature_norm(&m(&[&[3.0, 4.0], &[0.0, 0.0]])).unwrap(), 2.5);
        assert_eq!(mean_feature_norm(&m(&[&[1.0, 0.0], &[0.0, -1.0]])).unwrap(), 1.0);
        let h = m(&[&[3.0, 1.0], &[-2.0, 0.5]]);
        let alpha = 3.3;
        let a = mean_feature_norm(&h).unwrap();
        let b = mean_feature_norm(&h.map(|v| v * alpha)).unwrap();
        assert!((b - alpha * a).abs() < 1e-14);
        assert!(mean_feature_norm(&Matrix::<f64>::zeros(0, 2)).is_err());
    }

    #[test]
    fn degenerate_displays_token() {
        assert_eq!(Metric::Degenerate.to_string(), "degenerate");
        assert_eq!(Metric::Value(0.25).to_string(), "0.25");
    }
}
