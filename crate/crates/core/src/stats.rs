//! Sample statistics for run cohorts: summaries, confidence intervals,
//! ANOVA, Welch t-tests, correlation and log-log regression.
//!
//! Everything here works in `f64`; inputs are per-run scalars, not tensors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::RngState;
use crate::special::{f_sf, student_t_quantile, student_t_two_sided};

/// Smallest p-value ever reported; exact separations underflow to this.
pub const P_FLOOR: f64 = 1e-300;

pub const DEFAULT_RESAMPLES: usize = 10_000;

fn floor_p(p: f64) -> f64 {
    p.clamp(P_FLOOR, 1.0)
}

fn check_finite(xs: &[f64], what: &str) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Stats(format!("{what} contains non-finite values")))
    }
}

pub fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Stats("mean of an empty sample".into()));
    }
    check_finite(xs, "sample")?;
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation (denominator n − 1).
pub fn sample_std(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::Stats(format!("std needs n >= 2, got {}", xs.len())));
    }
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Ok((ss / (xs.len() - 1) as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    /// `None` for a single observation.
    pub std: Option<f64>,
    /// `std / mean`; `None` without a std or when the mean is zero.
    pub cv: Option<f64>,
}

pub fn summarize(xs: &[f64]) -> Result<SampleSummary> {
    let mean = mean(xs)?;
    let std = if xs.len() >= 2 { Some(sample_std(xs)?) } else { None };
    let cv = std.filter(|_| mean != 0.0).map(|s| s / mean);
    Ok(SampleSummary {
        n: xs.len(),
        mean,
        std,
        cv,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CiMethod {
    BootstrapPercentile { resamples: usize },
    StudentT,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CiResult {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub method: CiMethod,
}

impl CiResult {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn overlaps(&self, other: &CiResult) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::Stats(format!("confidence level must lie in (0, 1), got {level}")))
    }
}

/// `mean ± t_{(1+level)/2, n−1} · s / √n`.
pub fn t_ci(xs: &[f64], level: f64) -> Result<CiResult> {
    t_ci_from_summary(xs.len(), mean(xs)?, sample_std(xs)?, level)
}

/// Student-t interval from a printed `(n, mean, std)` triple.
pub fn t_ci_from_summary(n: usize, m: f64, s: f64, level: f64) -> Result<CiResult> {
    check_level(level)?;
    if n < 2 {
        return Err(Error::Stats(format!("t interval needs n >= 2, got {n}")));
    }
    if !(m.is_finite() && s.is_finite() && s >= 0.0) {
        return Err(Error::Stats("t interval needs a finite mean and std".into()));
    }
    let n = n as f64;
    let half = student_t_quantile((1.0 + level) / 2.0, n - 1.0) * s / n.sqrt();
    Ok(CiResult {
        lo: m - half,
        hi: m + half,
        level,
        method: CiMethod::StudentT,
    })
}

/// Linear-interpolation quantile of sorted data (h = (n−1)p).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap of the mean. Each resample draws `n` indices with
/// `rng.below(n)` in order, so a fixed stream gives a fixed interval.
pub fn bootstrap_ci(xs: &[f64], rng: &mut RngState, resamples: usize, level: f64) -> Result<CiResult> {
    check_level(level)?;
    if xs.len() < 2 {
        return Err(Error::Stats(format!("bootstrap needs n >= 2, got {}", xs.len())));
    }
    if resamples == 0 {
        return Err(Error::Stats("bootstrap needs at least one resample".into()));
    }
    check_finite(xs, "sample")?;
    let n = xs.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| xs[rng.below(n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(CiResult {
        lo: quantile_sorted(&means, tail),
        hi: quantile_sorted(&means, 1.0 - tail),
        level,
        method: CiMethod::BootstrapPercentile { resamples },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p: f64,
}

/// Per-group `(n, mean, sample std)`, as printed in result tables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<AnovaResult> {
    let mut summaries = Vec::with_capacity(groups.len());
    for (i, g) in groups.iter().enumerate() {
        if g.is_empty() {
            return Err(Error::Stats(format!("group {i} is empty")));
        }
        let m = mean(g)?;
        let ss: f64 = g.iter().map(|x| (x - m) * (x - m)).sum();
        summaries.push((g.len(), m, ss));
    }
    anova_core(&summaries)
}

/// One-way ANOVA reconstructed from group sizes, means and sample stds.
pub fn anova_from_summaries(groups: &[GroupSummary]) -> Result<AnovaResult> {
    let mut parts = Vec::with_capacity(groups.len());
    for (i, g) in groups.iter().enumerate() {
        if g.n == 0 {
            return Err(Error::Stats(format!("group {i} is empty")));
        }
        if !(g.mean.is_finite() && g.std.is_finite() && g.std >= 0.0) {
            return Err(Error::Stats(format!("group {i} has an invalid mean or std")));
        }
        let ss = if g.n > 1 { g.std * g.std * (g.n - 1) as f64 } else { 0.0 };
        parts.push((g.n, g.mean, ss));
    }
    anova_core(&parts)
}

// (n, mean, within sum of squares) per group
fn anova_core(groups: &[(usize, f64, f64)]) -> Result<AnovaResult> {
    let g = groups.len();
    if g < 2 {
        return Err(Error::Stats(format!("ANOVA needs at least 2 groups, got {g}")));
    }
    let n: usize = groups.iter().map(|t| t.0).sum();
    if n <= g {
        return Err(Error::Stats(format!("ANOVA needs N > groups, got N={n} with {g} groups")));
    }
    let grand = groups.iter().map(|&(k, m, _)| k as f64 * m).sum::<f64>() / n as f64;
    let ss_between: f64 = groups.iter().map(|&(k, m, _)| k as f64 * (m - grand) * (m - grand)).sum();
    let ss_within: f64 = groups.iter().map(|t| t.2).sum();
    let df_between = g - 1;
    let df_within = n - g;
    let (f, p) = if ss_within == 0.0 {
        if ss_between == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, P_FLOOR)
        }
    } else {
        let f = (ss_between / df_between as f64) / (ss_within / df_within as f64);
        (f, floor_p(f_sf(f, df_between as f64, df_within as f64)))
    };
    Ok(AnovaResult {
        f,
        df_between,
        df_within,
        p,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Welch's unequal-variance t-test, two-sided.
pub fn t_test_two_sample(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Stats(format!(
            "t-test needs n >= 2 per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (ma, mb) = (mean(a)?, mean(b)?);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let va = sample_std(a)?.powi(2) / na;
    let vb = sample_std(b)?.powi(2) / nb;
    let se2 = va + vb;
    if se2 == 0.0 {
        let df = na + nb - 2.0;
        return Ok(if ma == mb {
            TTestResult { t: 0.0, df, p: 1.0 }
        } else {
            TTestResult {
                t: if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY },
                df,
                p: P_FLOOR,
            }
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(TTestResult {
        t,
        df,
        p: floor_p(student_t_two_sided(t, df)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub p: f64,
    pub n: usize,
}

fn centered_moments(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64, f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::Stats(format!("paired samples differ in length: {} vs {}", xs.len(), ys.len())));
    }
    let (mx, my) = (mean(xs)?, mean(ys)?);
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    Ok((mx, my, sxx, syy, sxy))
}

/// Pearson r with the two-sided p from `t = r √((n−2)/(1−r²))`.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    if xs.len() < 3 {
        return Err(Error::Stats(format!("correlation needs n >= 3, got {}", xs.len())));
    }
    let (_, _, sxx, syy, sxy) = centered_moments(xs, ys)?;
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Stats("correlation undefined for a zero-variance sample".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (xs.len() - 2) as f64;
    let p = if r.abs() == 1.0 {
        P_FLOOR
    } else {
        floor_p(student_t_two_sided(r * (df / (1.0 - r * r)).sqrt(), df))
    };
    Ok(Correlation { r, p, n: xs.len() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Two-sided t-test of slope = 0 with n − 2 degrees of freedom.
    pub p_slope: f64,
    pub n: usize,
}

/// Ordinary least squares `y = intercept + slope·x`. A constant response
/// gives slope 0, r² 0 and p 1.
pub fn linear_regress(xs: &[f64], ys: &[f64]) -> Result<RegressionResult> {
    if xs.len() < 3 {
        return Err(Error::Stats(format!("regression needs n >= 3, got {}", xs.len())));
    }
    let (mx, my, sxx, syy, sxy) = centered_moments(xs, ys)?;
    if sxx == 0.0 {
        return Err(Error::Stats("regression needs at least two distinct x values".into()));
    }
    let n = xs.len();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    if syy == 0.0 {
        return Ok(RegressionResult {
            slope: 0.0,
            intercept: my,
            r2: 0.0,
            p_slope: 1.0,
            n,
        });
    }
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - intercept - slope * x;
            e * e
        })
        .sum();
    let r2 = (1.0 - ss_res / syy).clamp(0.0, 1.0);
    let df = (n - 2) as f64;
    let se = (ss_res / df / sxx).sqrt();
    let p_slope = if se == 0.0 {
        P_FLOOR
    } else {
        floor_p(student_t_two_sided(slope / se, df))
    };
    Ok(RegressionResult {
        slope,
        intercept,
        r2,
        p_slope,
        n,
    })
}

/// OLS on `(ln x, ln y)`; the slope is the power-law exponent.
pub fn loglog_regress(xs: &[f64], ys: &[f64]) -> Result<RegressionResult> {
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::Stats("log-log regression needs strictly positive inputs".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    linear_regress(&lx, &ly)
}

/// `fn*` at the looser threshold over `fn*` at the stricter one.
pub fn robustness_ratio(fn_star_loose: f64, fn_star_strict: f64) -> Result<f64> {
    if !(fn_star_loose > 0.0 && fn_star_strict > 0.0) {
        return Err(Error::Stats(format!(
            "robustness ratio needs positive inputs, got {fn_star_loose} / {fn_star_strict}"
        )));
    }
    Ok(fn_star_loose / fn_star_strict)
}

/// Mean ± std of the ratios over a cohort of `(loose, strict)` pairs.
pub fn robustness_summary(pairs: &[(f64, f64)]) -> Result<SampleSummary> {
    let ratios = pairs
        .iter()
        .map(|&(a, b)| robustness_ratio(a, b))
        .collect::<Result<Vec<_>>>()?;
    summarize(&ratios)
}

/// Conditional effects in a 2×2 grid `cells[row][col]` of positive means.
///
/// Effects are relative changes (`0.5` = +50%). The held-out corner is
/// `cells[1][0]`, predicted by the log-additive model as
/// `cells[0][0] · cells[1][1] / cells[0][1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEffects {
    /// Moving from row 0 to row 1 within column 0.
    pub row_effect_col0: f64,
    pub row_effect_col1: f64,
    /// Moving from column 0 to column 1 within row 0.
    pub col_effect_row0: f64,
    pub col_effect_row1: f64,
    pub held_out_predicted: f64,
    pub held_out_actual: f64,
    /// `(actual − predicted) / predicted`.
    pub under_prediction: f64,
    /// `ln actual − ln predicted`; zero for an exactly multiplicative grid.
    pub log_residual: f64,
}

pub fn grid_effects(cells: [[f64; 2]; 2]) -> Result<GridEffects> {
    if cells.iter().flatten().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Stats("grid cells must be positive and finite".into()));
    }
    let [[a, c], [b, d]] = cells;
    let predicted = a * d / c;
    Ok(GridEffects {
        row_effect_col0: b / a - 1.0,
        row_effect_col1: d / c - 1.0,
        col_effect_row0: c / a - 1.0,
        col_effect_row1: d / b - 1.0,
        held_out_predicted: predicted,
        held_out_actual: b,
        under_prediction: (b - predicted) / predicted,
        log_residual: b.ln() - predicted.ln(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FN_A: [f64; 3] = [5.858, 5.905, 5.837];
    const FN_B: [f64; 3] = [1.521, 1.517, 1.506];

    #[test]
    fn summary_of_three_seeds() {
        let s = summarize(&FN_A).unwrap();
        assert_eq!(s.n, 3);
        assert!((s.mean - 5.867).abs() < 0.001);
        assert!((s.std.unwrap() - 0.034).abs() < 0.001);
        assert!((s.cv.unwrap() * 100.0 - 0.6).abs() < 0.1);
        let s = summarize(&FN_B).unwrap();
        assert!((s.mean - 1.515).abs() < 0.001);
        assert!((s.std.unwrap() - 0.007).abs() < 0.001);
        assert!((s.cv.unwrap() * 100.0 - 0.5).abs() < 0.1);
    }

    #[test]
    fn constant_and_single_samples() {
        let s = summarize(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!((s.std, s.cv), (Some(0.0), Some(0.0)));
        let s = summarize(&[4.0]).unwrap();
        assert_eq!((s.std, s.cv), (None, None));
        assert!(summarize(&[]).is_err());
        assert!(sample_std(&[1.0]).is_err());
    }

    #[test]
    fn t_intervals_for_seed_triples() {
        let ci = t_ci(&FN_A, 0.95).unwrap();
        assert!((ci.lo - 5.781).abs() < 0.002 && (ci.hi - 5.952).abs() < 0.002, "{ci:?}");
        let ci = t_ci(&FN_B, 0.95).unwrap();
        assert!((ci.lo - 1.494).abs() < 0.002 && (ci.hi - 1.535).abs() < 0.002, "{ci:?}");
        let ci = t_ci(&[3.0, 3.0], 0.95).unwrap();
        assert_eq!((ci.lo, ci.hi), (3.0, 3.0));
        assert!(t_ci(&[1.0], 0.95).is_err());
    }

    #[test]
    fn bootstrap_basics() {
        let ci = bootstrap_ci(&[7.0; 5], &mut RngState::new(0), 500, 0.95).unwrap();
        assert_eq!((ci.lo, ci.hi), (7.0, 7.0));
        let xs = [1.0, 4.0, 2.5, 9.0, 3.3];
        let a = bootstrap_ci(&xs, &mut RngState::new(3), 2000, 0.95).unwrap();
        let b = bootstrap_ci(&xs, &mut RngState::new(3), 2000, 0.95).unwrap();
        assert_eq!(a, b);
        assert!(a.contains(mean(&xs).unwrap()));
        let wide = bootstrap_ci(&xs, &mut RngState::new(3), 2000, 0.99).unwrap();
        assert!(wide.lo <= a.lo && wide.hi >= a.hi);
        assert!(bootstrap_ci(&[1.0], &mut RngState::new(0), 10, 0.95).is_err());
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 4.0);
        assert!((quantile_sorted(&xs, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile_sorted(&xs, 0.1) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn anova_edge_cases() {
        let g = vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]];
        let r = anova_oneway(&g).unwrap();
        assert_eq!((r.f, r.p, r.df_between, r.df_within), (0.0, 1.0, 1, 4));
        let r = anova_oneway(&[vec![0.0; 3], vec![1.0; 3]]).unwrap();
        assert_eq!((r.f, r.p), (f64::INFINITY, P_FLOOR));
        let r = anova_oneway(&[vec![0.0, 1e-9, -1e-9], vec![1.0, 1.0 + 1e-9, 1.0 - 1e-9]]).unwrap();
        assert!(r.f > 1e15 && r.p <= 1e-20);
        assert!(anova_oneway(&[vec![1.0]]).is_err());
        assert!(anova_oneway(&[vec![1.0], vec![2.0]]).is_err());
        assert!(anova_oneway(&[vec![1.0, 2.0], vec![]]).is_err());
    }

    #[test]
    fn anova_from_summaries_matches_raw() {
        let groups = vec![vec![1.0, 2.0, 4.0], vec![2.0, 3.5, 3.0, 5.0], vec![7.0, 6.0]];
        let raw = anova_oneway(&groups).unwrap();
        let sums: Vec<GroupSummary> = groups
            .iter()
            .map(|g| GroupSummary {
                n: g.len(),
                mean: mean(g).unwrap(),
                std: sample_std(g).unwrap(),
            })
            .collect();
        let rebuilt = anova_from_summaries(&sums).unwrap();
        assert!((raw.f - rebuilt.f).abs() < 1e-10 * raw.f);
        assert!((raw.p - rebuilt.p).abs() < 1e-12);
    }

    #[test]
    fn welch_limits() {
        let r = t_test_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
        let r = t_test_two_sample(&[0.0, 0.0, 0.0], &[10.0, 10.1, 9.9]).unwrap();
        assert!(r.p < 0.001);
        let r = t_test_two_sample(&[2.0, 2.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(r.p, 1.0);
        assert!(t_test_two_sample(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pearson_limits() {
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[8.0, 6.0, 4.0, 2.0]).unwrap();
        assert_eq!(r.r, -1.0);
        let r = pearson(&[-1.0, 0.0, 1.0, 0.0], &[0.0, 1.0, 0.0, -1.0]).unwrap();
        assert!(r.r.abs() < 1e-15 && (r.p - 1.0).abs() < 1e-12);
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn width_table_trends() {
        let widths = [128.0, 256.0, 512.0, 1024.0];
        let t_nc = [383.0, 327.0, 310.0, 257.0];
        let fns = [1.241, 1.125, 1.096, 1.080];
        let r = pearson(&widths, &t_nc).unwrap();
        assert!((r.r + 0.94).abs() < 0.02, "{r:?}");
        let reg = loglog_regress(&widths, &fns).unwrap();
        assert!((reg.slope + 0.064).abs() < 0.005, "{reg:?}");
        assert!((reg.r2 - 0.84).abs() < 0.05, "{reg:?}");
    }

    #[test]
    fn regression_limits() {
        let xs = [1.0, 4.0, 9.0, 16.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| x.powf(-0.5)).collect();
        let r = loglog_regress(&xs, &ys).unwrap();
        assert!((r.slope + 0.5).abs() < 1e-12 && (r.r2 - 1.0).abs() < 1e-12);
        let r = loglog_regress(&xs, &[2.0; 4]).unwrap();
        assert_eq!((r.slope, r.r2, r.p_slope), (0.0, 0.0, 1.0));
        assert!(loglog_regress(&[1.0, 0.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn ratios() {
        assert!((robustness_ratio(1.373, 1.077).unwrap() - 1.27).abs() < 0.005);
        assert!((robustness_ratio(0.953, 1.112).unwrap() - 0.86).abs() < 0.005);
        assert_eq!(robustness_ratio(2.0, 2.0).unwrap(), 1.0);
        assert!(robustness_ratio(1.0, 0.0).is_err());
        let s = robustness_summary(&[(2.0, 2.0), (3.0, 2.0)]).unwrap();
        assert!((s.mean - 1.25).abs() < 1e-15);
    }

    #[test]
    fn grid_conditional_effects() {
        let e = grid_effects([[1.052, 0.901], [5.867, 1.515]]).unwrap();
        assert!((e.row_effect_col0 * 100.0 - 458.0).abs() < 1.0, "{e:?}");
        assert!((e.row_effect_col1 * 100.0 - 68.0).abs() < 1.0);
        assert!((e.col_effect_row0 * 100.0 + 14.0).abs() < 1.0);
        assert!((e.col_effect_row1 * 100.0 + 74.0).abs() < 1.0);
        assert!((e.under_prediction * 100.0 - 232.0).abs() < 1.0, "{e:?}");
        let m = grid_effects([[2.0, 3.0], [4.0, 6.0]]).unwrap();
        assert!(m.log_residual.abs() < 1e-15 && m.under_prediction.abs() < 1e-15);
        assert!(grid_effects([[1.0, 0.0], [1.0, 1.0]]).is_err());
    }
}
