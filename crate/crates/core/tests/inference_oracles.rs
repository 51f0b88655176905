mod common;

use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdpg_isomap::curve::ParametricCurve;
use rdpg_isomap::inference::*;

#[test]
fn mde_matches_dense_grid() {
    let c = ParametricCurve::hardy_weinberg();
    let id = MetricMatrix::identity(3);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let tau: f64 = rng.gen();
        let mut y = c.evaluate(tau).unwrap();
        for v in y.iter_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
        let fit = mde_fit(&c, y.as_slice(), &id).unwrap();
        let oracle = common::grid_oracle(&c, y.as_slice(), 1_000_001);
        assert!((fit - oracle).abs() <= 1e-5, "fit {fit} oracle {oracle}");
    }
}

#[test]
fn mde_small_perturbation() {
    let c = ParametricCurve::hardy_weinberg();
    let y = c.evaluate(0.3).unwrap() + DVector::from_vec(vec![0.004, -0.002, 0.001]);
    let fit = mde_fit(&c, y.as_slice(), &MetricMatrix::identity(3)).unwrap();
    assert_abs_diff_eq!(fit, common::grid_oracle(&c, y.as_slice(), 1_000_001), epsilon = 1e-5);
}

#[test]
fn mde_uses_inverse_metric() {
    // a straight segment and a target off its end: the weighting decides
    // which coordinate matters
    let c = ParametricCurve::polynomial(vec![vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
    let y = [0.2, 0.6];
    let plain = mde_fit(&c, &y, &MetricMatrix::identity(2)).unwrap();
    assert_abs_diff_eq!(plain, 0.4, epsilon = 1e-7);
    // M^-1 = diag(1, 1/9) trusts the first coordinate more: (0.2 + 0.6/9) / (1 + 1/9)
    let m = MetricMatrix::diagonal(&[1.0, 9.0]).unwrap();
    assert_abs_diff_eq!(mde_fit(&c, &y, &m).unwrap(), 0.24, epsilon = 1e-7);
}

#[test]
fn clean_null_gives_zero_statistics() {
    let c = ParametricCurve::hardy_weinberg();
    let p0 = c.evaluate(0.3).unwrap();
    let s = 5;
    let aux = 400;
    let mut est = DMatrix::zeros(s + aux, 3);
    for i in 0..s {
        est.row_mut(i).copy_from(&p0.transpose());
    }
    for i in 0..aux {
        est.row_mut(s + i).copy_from(&c.evaluate(i as f64 / (aux - 1) as f64).unwrap().transpose());
    }
    let id = MetricMatrix::identity(3);
    let community = est.rows(0, s).into_owned();
    assert!(t_unrestricted(&community, &p0, &id).unwrap().value <= 1e-12);
    assert!(t_true_manifold(&c, &community, 0.3, &id).unwrap().value <= 1e-6);
    assert!(t_learnt_manifold(&p0, &est, s, &LearntParams::default()).unwrap().value <= 1e-6);
}

/// Independent pipeline: Floyd-Warshall on the radius graph, dense CMDS
/// start, plain Guttman iterations until the relative stress decrease drops
/// below `tol`. Returns the line coordinates.
fn naive_line_embedding(points: &DMatrix<f64>, radius: f64, tol: f64) -> Vec<f64> {
    let n = points.nrows();
    let mut d = DMatrix::from_element(n, n, f64::INFINITY);
    for i in 0..n {
        for j in 0..n {
            let e = (points.row(i) - points.row(j)).norm();
            if i == j {
                d[(i, j)] = 0.0;
            } else if e <= radius {
                d[(i, j)] = e;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[(i, k)] + d[(k, j)];
                if via < d[(i, j)] {
                    d[(i, j)] = via;
                }
            }
        }
    }
    let sq = d.map(|v| v * v);
    let row_means = sq.row_mean();
    let grand = row_means.mean();
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand));
    let eig = b.symmetric_eigen();
    let top = eig.eigenvalues.imax();
    let mut z: Vec<f64> = eig.eigenvectors.column(top).iter().map(|v| v * eig.eigenvalues[top].sqrt()).collect();
    let stress = |z: &[f64]| {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += ((z[i] - z[j]).abs() - d[(i, j)]).powi(2);
            }
        }
        s
    };
    let mut current = stress(&z);
    for _ in 0..200 {
        let next: Vec<f64> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i && (z[i] - z[j]).abs() > 1e-12)
                    .map(|j| d[(i, j)] * (z[i] - z[j]).signum())
                    .sum::<f64>()
                    / n as f64
            })
            .collect();
        let s = stress(&next);
        let done = current - s <= tol * current;
        z = next;
        current = s;
        if done {
            break;
        }
    }
    z
}

fn clean_sample(m: usize, seed: u64) -> (ParametricCurve, DVector<f64>, DMatrix<f64>) {
    let c = ParametricCurve::hardy_weinberg();
    let p0 = c.evaluate(0.3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let community_tau = [0.33, 0.34, 0.35, 0.36, 0.37];
    let s = community_tau.len();
    let mut est = DMatrix::zeros(s + m, 3);
    for (i, &tau) in community_tau.iter().enumerate() {
        est.row_mut(i).copy_from(&c.evaluate(tau).unwrap().transpose());
    }
    for i in 0..m {
        est.row_mut(s + i).copy_from(&c.evaluate(rng.gen()).unwrap().transpose());
    }
    (c, p0, est)
}

#[test]
fn learnt_matches_independent_pipeline_at_unit_radius() {
    let (_, p0, est) = clean_sample(300, 5);
    let learnt = t_learnt_manifold(&p0, &est, 5, &LearntParams::default()).unwrap().value;
    let mut points = DMatrix::zeros(est.nrows() + 1, 3);
    points.row_mut(0).copy_from(&p0.transpose());
    points.rows_mut(1, est.nrows()).copy_from(&est);
    let z = naive_line_embedding(&points, 1.0, 1e-8);
    let oracle = ((z[1..=5].iter().sum::<f64>() / 5.0) - z[0]).abs();
    assert!((learnt - oracle).abs() <= 1e-6 * oracle, "learnt {learnt} oracle {oracle}");
}

#[test]
fn learnt_tracks_true_on_clean_data() {
    let (c, p0, est) = clean_sample(1000, 5);
    let id = MetricMatrix::identity(3);
    let truth = t_true_manifold(&c, &est.rows(0, 5).into_owned(), 0.3, &id).unwrap().value;
    // with a local radius shortest paths follow the curve
    let local = LearntParams {
        radius: 0.1,
        ..LearntParams::default()
    };
    let learnt = t_learnt_manifold(&p0, &est, 5, &local).unwrap().value;
    assert!((learnt - truth).abs() <= 0.02 * truth, "learnt {learnt} true {truth}");
    // radius 1 joins most pairs by chords, which shortens the line
    let wide = t_learnt_manifold(&p0, &est, 5, &LearntParams::default()).unwrap().value;
    assert!(wide < truth, "wide {wide} true {truth}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mde_returns_a_nearest_point(tau in 0.0..1.0f64, dx in -0.2..0.2f64, dy in -0.2..0.2f64, dz in -0.2..0.2f64) {
        let c = ParametricCurve::hardy_weinberg();
        let y = c.evaluate(tau).unwrap() + DVector::from_vec(vec![dx, dy, dz]);
        let fit = mde_fit(&c, y.as_slice(), &MetricMatrix::identity(3)).unwrap();
        let best = (c.evaluate(fit).unwrap() - &y).norm();
        for i in 0..=512 {
            let g = i as f64 / 512.0;
            prop_assert!(best <= (c.evaluate(g).unwrap() - &y).norm() + 1e-6);
        }
    }

    #[test]
    fn unrestricted_identity_is_euclidean(rows in prop::collection::vec(prop::array::uniform3(-1.0..1.0f64), 1..8)) {
        let x = DMatrix::from_fn(rows.len(), 3, |i, j| rows[i][j]);
        let p0 = DVector::from_vec(vec![0.2, 0.3, 0.4]);
        let out = t_unrestricted(&x, &p0, &MetricMatrix::identity(3)).unwrap();
        let direct = (x.row_mean().transpose() - &p0).norm();
        prop_assert!((out.value - direct).abs() <= 1e-14);
    }

    #[test]
    fn true_manifold_is_reparametrization_free(
        rows in prop::collection::vec((0.05..0.95f64, prop::array::uniform3(-0.03..0.03f64)), 1..6),
        tau0 in 0.0..1.0f64,
    ) {
        let hw = ParametricCurve::hardy_weinberg();
        // hw(phi(tau)) with phi(tau) = (tau + tau^2) / 2
        let composed = ParametricCurve::polynomial(vec![
            vec![0.0, 0.0, 0.25, 0.5, 0.25],
            vec![0.0, 1.0, 0.5, -1.0, -0.5],
            vec![1.0, -1.0, -0.75, 0.5, 0.25],
        ]).unwrap();
        let phi_inv = |u: f64| (-1.0 + (1.0 + 8.0 * u).sqrt()) / 2.0;
        let x = DMatrix::from_fn(rows.len(), 3, |i, j| hw.evaluate(rows[i].0).unwrap()[j] + rows[i].1[j]);
        let id = MetricMatrix::identity(3);
        let a = t_true_manifold(&hw, &x, tau0, &id).unwrap().value;
        let b = t_true_manifold(&composed, &x, phi_inv(tau0), &id).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }
}
