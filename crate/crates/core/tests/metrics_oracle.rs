mod common;

use common::{brute_force, random_instance, random_rotation};
use nclab::ncmetrics::{feature_stats, mean_feature_norm, nc1, nc2, nc3, FeatureAccumulator, FeatureStats, Metric};
use nclab::numcore::{Matrix, RngState};

const TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL * (1.0 + b.abs())
}

fn val(m: Metric) -> f64 {
    m.value().expect("non-degenerate")
}

#[test]
fn random_instances_match_brute_force() {
    let mut rng = RngState::new(2024);
    for case in 0..40 {
        let inst = random_instance(&mut rng);
        let want = brute_force(&inst);
        let s = feature_stats(&inst.h, &inst.labels, inst.k).unwrap();
        let got = [
            val(nc1(&s)),
            val(nc2(&s)),
            val(nc3(&s, &inst.head).unwrap()),
            mean_feature_norm(&inst.h).unwrap(),
        ];
        let exp = [want.nc1, want.nc2, want.nc3, want.fn_];
        for (g, e) in got.iter().zip(exp) {
            assert!(close(*g, e), "case {case}: {got:?} vs {exp:?}");
        }
    }
}

#[test]
fn hand_computed_two_class_line() {
    // class 0 at {0, 2}, class 1 at {4, 6}: tr_W = 1, tr_B = 4
    let h = Matrix::from_rows(&[vec![0.0], vec![4.0], vec![2.0], vec![6.0]]).unwrap();
    let labels = [0, 1, 0, 1];
    let s = feature_stats(&h, &labels, 2).unwrap();
    assert!(close(s.tr_within, 1.0) && close(s.tr_between, 4.0));
    assert!(close(val(nc1(&s)), 0.25));
    assert!(val(nc2(&s)).abs() < TOL);
    let head = Matrix::from_rows(&[vec![-1.0], vec![1.0]]).unwrap();
    assert!(val(nc3(&s, &head).unwrap()).abs() < TOL);
    assert!(close(mean_feature_norm(&h).unwrap(), 3.0));
}

#[test]
fn hand_computed_unbalanced_plane() {
    // class 0: (0,0),(2,0),(1,3); class 1: (5,1). μ_G = (2, 1).
    let h = Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 3.0], vec![5.0, 1.0]]).unwrap();
    let s = feature_stats(&h, &[0, 0, 0, 1], 2).unwrap();
    // μ_0 = (1,1); within: 2 + 2 + 4 = 8 over N = 4
    assert!(close(s.tr_within, 2.0));
    // centered: (−1,0) and (3,0), averaged over K = 2
    assert!(close(s.tr_between, 5.0));
    assert!(close(val(nc1(&s)), 0.4));
    let fn_ = (0.0 + 2.0 + 10f64.sqrt() + 26f64.sqrt()) / 4.0;
    assert!(close(mean_feature_norm(&h).unwrap(), fn_));
}

fn simplex(k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| (0..k).map(|j| if i == j { 1.0 - 1.0 / k as f64 } else { -1.0 / k as f64 }).collect())
        .collect()
}

#[test]
fn etf_fixture_has_zero_nc2() {
    for k in 2..=6 {
        let vertices = simplex(k);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..3 {
            for (c, v) in vertices.iter().enumerate() {
                rows.push(v.iter().map(|x| 2.5 * x).collect::<Vec<f64>>());
                labels.push(c);
            }
        }
        let s = feature_stats(&Matrix::from_rows(&rows).unwrap(), &labels, k).unwrap();
        assert!(val(nc2(&s)) < 1e-10, "k={k}");
        assert!(val(nc1(&s)) < 1e-20);
    }
}

fn stats_from_centered(centered: Vec<Vec<f64>>) -> FeatureStats {
    let d = centered[0].len();
    FeatureStats {
        class_means: centered.clone(),
        global_mean: vec![0.0; d],
        counts: vec![1; centered.len()],
        centered_means: centered,
        tr_within: 0.0,
        tr_between: 1.0,
    }
}

#[test]
fn orthogonal_means_fixture() {
    for k in 2..=10 {
        let means = (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 + i as f64 } else { 0.0 }).collect()).collect();
        let v = val(nc2(&stats_from_centered(means)));
        assert!((v - 1.0 / (k as f64 - 1.0)).abs() < 1e-12, "k={k}: {v}");
    }
}

#[test]
fn streaming_matches_batch_and_is_order_free() {
    let mut rng = RngState::new(7);
    for _ in 0..20 {
        let inst = random_instance(&mut rng);
        let want = brute_force(&inst);
        let mut acc = FeatureAccumulator::new(inst.k, inst.h.cols());
        let mut order: Vec<usize> = (0..inst.labels.len()).collect();
        rng.shuffle(&mut order);
        for &i in &order {
            acc.push(inst.h.row(i), inst.labels[i]).unwrap();
        }
        let s = acc.finish().unwrap();
        assert!(close(val(nc1(&s)), want.nc1));
        assert!(close(val(nc2(&s)), want.nc2));
        assert!(close(acc.mean_norm(), want.fn_));
    }
}

#[test]
fn nc1_is_rotation_invariant() {
    let mut rng = RngState::new(11);
    for _ in 0..20 {
        let inst = random_instance(&mut rng);
        let q = random_rotation(inst.h.cols(), &mut rng);
        let rotated = inst.h.matmul_nt(&q).unwrap();
        let a = val(nc1(&feature_stats(&inst.h, &inst.labels, inst.k).unwrap()));
        let b = val(nc1(&feature_stats(&rotated, &inst.labels, inst.k).unwrap()));
        assert!(close(a, b), "{a} vs {b}");
    }
}

#[test]
fn degenerate_inputs_are_marked() {
    let h = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let s = feature_stats(&h, &[0, 1, 0], 2).unwrap();
    assert_eq!(nc1(&s), Metric::Degenerate);
    assert_eq!(nc2(&s), Metric::Degenerate);
}
