//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nclab::numcore::{Matrix, RngState};

pub struct Instance {
    pub h: Matrix<f64>,
    pub labels: Vec<usize>,
    pub k: usize,
    pub head: Matrix<f64>,
}

/// Random features with every class present at least twice.
pub fn random_instance(rng: &mut RngState) -> Instance {
    let k = 2 + rng.below(4);
    let d = 2 + rng.below(7);
    let n = (2 * k + rng.below(50 - 2 * k + 1)).min(50);
    let mut labels: Vec<usize> = (0..n).map(|i| if i < 2 * k { i % k } else { rng.below(k) }).collect();
    rng.shuffle(&mut labels);
    let centers: Vec<Vec<f64>> = (0..k).map(|_| rng.gaussian(d).iter().map(|v| 3.0 * v).collect()).collect();
    let spread = 0.1 + 2.0 * rng.uniform();
    let rows: Vec<Vec<f64>> = labels
        .iter()
        .map(|&c| centers[c].iter().zip(rng.gaussian(d)).map(|(m, z)| m + spread * z).collect())
        .collect();
    let head = Matrix::from_vec(k, d, rng.gaussian(k * d)).unwrap();
    Instance {
        h: Matrix::from_rows(&rows).unwrap(),
        labels,
        k,
        head,
    }
}

pub struct Oracle {
    pub nc1: f64,
    pub nc2: f64,
    pub nc3: f64,
    pub fn_: f64,
}

fn outer_trace(vs: &[Vec<f64>], weight: f64) -> f64 {
    // trace of weight · Σ v vᵀ, built as the full matrix first
    let d = vs[0].len();
    let mut m = vec![vec![0.0; d]; d];
    for v in vs {
        for i in 0..d {
            for j in 0..d {
                m[i][j] += weight * v[i] * v[j];
            }
        }
    }
    (0..d).map(|i| m[i][i]).sum()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Two-pass textbook computation with explicit covariance matrices.
pub fn brute_force(inst: &Instance) -> Oracle {
    let (n, d) = inst.h.shape();
    let k = inst.k;
    let mut means = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (i, &c) in inst.labels.iter().enumerate() {
        counts[c] += 1;
        for j in 0..d {
            means[c][j] += inst.h.row(i)[j];
        }
    }
    for c in 0..k {
        for j in 0..d {
            means[c][j] /= counts[c] as f64;
        }
    }
    let global: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| inst.h.row(i)[j]).sum::<f64>() / n as f64)
        .collect();
    let within: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..d).map(|j| inst.h.row(i)[j] - means[inst.labels[i]][j]).collect())
        .collect();
    let centered: Vec<Vec<f64>> = means.iter().map(|m| m.iter().zip(&global).map(|(a, b)| a - b).collect()).collect();
    let tr_w = outer_trace(&within, 1.0 / n as f64);
    let tr_b = outer_trace(&centered, 1.0 / k as f64);
    let mut nc2 = 0.0;
    for a in 0..k {
        for b in 0..k {
            if a != b {
                nc2 += (cos(&centered[a], &centered[b]) + 1.0 / (k as f64 - 1.0)).abs();
            }
        }
    }
    let nc3 = 1.0 - (0..k).map(|c| cos(inst.head.row(c), &centered[c])).sum::<f64>() / k as f64;
    let fn_ = (0..n).map(|i| inst.h.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()).sum::<f64>() / n as f64;
    Oracle {
        nc1: tr_w / tr_b,
        nc2: nc2 / (k * (k - 1)) as f64,
        nc3,
        fn_,
    }
}

/// Random orthogonal matrix from Gram-Schmidt on Gaussian columns.
pub fn random_rotation(d: usize, rng: &mut RngState) -> Matrix<f64> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < d {
        let mut v = rng.gaussian(d);
        for u in &q {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= p * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            q.push(v.iter().map(|x| x / norm).collect());
        }
    }
    Matrix::from_rows(&q).unwrap()
}

/// Percentile bootstrap written from scratch: resample with replacement,
/// sort the means, interpolate linearly between order statistics.
pub fn bootstrap_reference(xs: &[f64], rng: &mut RngState, resamples: usize, level: f64) -> (f64, f64) {
    let n = xs.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| xs[rng.below(n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = (resamples - 1) as f64 * p;
        let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
        means[lo] + (h - lo as f64) * (means[hi] - means[lo])
    };
    let tail = (1.0 - level) / 2.0;
    (q(tail), q(1.0 - tail))
}

/// Adaptive Simpson quadrature to an absolute tolerance.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64, m: f64, fm: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1) + rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, m, fm, whole, tol, 50)
}

/// Student-t density from `libm::lgamma`.
pub fn t_pdf(x: f64, df: f64) -> f64 {
    let ln_c = libm::lgamma((df + 1.0) / 2.0) - libm::lgamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp()
}

/// Two-sided tail `2·∫_{|t|}^∞ pdf` computed as `1 − 2·∫_0^{|t|} pdf`.
pub fn t_two_sided_reference(t: f64, df: f64) -> f64 {
    1.0 - 2.0 * integrate(&|x| t_pdf(x, df), 0.0, t.abs(), 1e-13)
}

/// F density from `libm::lgamma`.
pub fn f_pdf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let ln_b = libm::lgamma(d1 / 2.0) + libm::lgamma(d2 / 2.0) - libm::lgamma((d1 + d2) / 2.0);
    let ln = 0.5 * d1 * (d1 / d2).ln() + (0.5 * d1 - 1.0) * x.ln() - 0.5 * (d1 + d2) * (1.0 + d1 * x / d2).ln() - ln_b;
    ln.exp()
}
