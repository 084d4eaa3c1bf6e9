mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use semrom::pod::{pod, pod_decay_report, retained_modes};

/// One-sided Jacobi SVD: rotates column pairs until all are orthogonal; the
/// column norms are then the singular values.
fn jacobi_singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut u = a.clone();
    let n = u.ncols();
    for _sweep in 0..60 {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = u.column(p).norm_squared();
                let beta = u.column(q).norm_squared();
                let gamma = u.column(p).dot(&u.column(q));
                if gamma.abs() <= 1e-300 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..u.nrows() {
                    let (x, y) = (u[(i, p)], u[(i, q)]);
                    u[(i, p)] = c * x - s * y;
                    u[(i, q)] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut s: Vec<f64> = (0..n).map(|j| u.column(j).norm()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn test_matrix(m: usize, n: usize, decay: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |i, j| common::hash_unit(i, j) * decay.powi(j as i32))
}

#[test]
fn spectrum_matches_jacobi_oracle() {
    let s = test_matrix(200, 20, 0.6);
    let basis = pod(&s, 0.9999).unwrap();
    let oracle = jacobi_singular_values(&s);
    let s1 = oracle[0];
    for (a, b) in basis.singular_values.iter().zip(&oracle) {
        assert!((a - b).abs() <= 1e-10 * s1, "{a} vs {b}");
    }
    // retained count from the oracle spectrum
    let total: f64 = oracle.iter().map(|v| v * v).sum();
    let mut acc = 0.0;
    let mut n = 0;
    for (k, v) in oracle.iter().enumerate() {
        acc += v * v;
        if acc >= 0.9999 * total {
            n = k + 1;
            break;
        }
    }
    assert_eq!(basis.n, n);
}

fn matrix_strategy() -> impl Strategy<Value = DMatrix<f64>> {
    (3usize..40, 1usize..9).prop_flat_map(|(m, n)| {
        proptest::collection::vec(-1.0f64..1.0, m * n).prop_map(move |v| DMatrix::from_vec(m, n, v))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eckart_young_identity(s in matrix_strategy(), frac in 0.5f64..1.0) {
        prop_assume!(s.norm() > 1e-6);
        let b = pod(&s, frac).unwrap();
        let resid = (&s - &b.u * (b.u.transpose() * &s)).norm_squared();
        let tail: f64 = b.singular_values[b.n..].iter().map(|v| v * v).sum();
        prop_assert!((resid - tail).abs() <= 1e-10 * s.norm_squared());
    }

    #[test]
    fn basis_is_orthonormal(s in matrix_strategy()) {
        prop_assume!(s.norm() > 1e-6);
        let b = pod(&s, 1.0).unwrap();
        let g = b.u.transpose() * &b.u;
        prop_assert!((g - DMatrix::identity(b.n, b.n)).abs().max() <= 1e-12);
    }

    #[test]
    fn energy_rule_is_minimal(s in matrix_strategy(), frac in 0.3f64..0.99999) {
        prop_assume!(s.norm() > 1e-6);
        let b = pod(&s, frac).unwrap();
        let sig = &b.singular_values;
        let total: f64 = sig.iter().map(|v| v * v).sum();
        let kept: f64 = sig[..b.n].iter().map(|v| v * v).sum();
        let dropped: f64 = sig[..b.n - 1].iter().map(|v| v * v).sum();
        prop_assert!(kept >= frac * total);
        prop_assert!(dropped < frac * total);
    }

    #[test]
    fn scaling_leaves_modes_unchanged(s in matrix_strategy(), alpha in 0.01f64..100.0) {
        prop_assume!(s.norm() > 1e-6);
        let a = pod(&s, 0.999).unwrap();
        let b = pod(&(&s * alpha), 0.999).unwrap();
        let gap_ok = a.singular_values.windows(2).all(|w| w[0] - w[1] > 1e-6 * a.singular_values[0]);
        prop_assume!(gap_ok);
        prop_assert_eq!(a.n, b.n);
        for (x, y) in a.singular_values.iter().zip(&b.singular_values) {
            prop_assert!((alpha * x - y).abs() <= 1e-10 * alpha * a.singular_values[0]);
        }
        for j in 0..a.n {
            let d = a.u.column(j).dot(&b.u.column(j)).abs();
            prop_assert!((d - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn pod_beats_random_projections(s in matrix_strategy(), k in 1usize..4, seed in 0usize..1000) {
        prop_assume!(s.norm() > 1e-6 && s.nrows() <= 50);
        let k = k.min(s.ncols()).min(s.nrows());
        let (u, sig) = semrom::pod::thin_svd(&s);
        let uk = u.columns(0, k);
        let best = (&s - uk * (uk.transpose() * &s)).norm();
        let tail: f64 = sig[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((best - tail).abs() <= 1e-9 * s.norm());
        for trial in 0..100 {
            let r = DMatrix::from_fn(s.nrows(), k, |i, j| common::hash_unit(i + 97 * trial + seed, j + 31 * trial));
            let q = r.qr().q();
            let err = (&s - &q * (q.transpose() * &s)).norm();
            prop_assert!(best <= err + 1e-12);
        }
    }
}

#[test]
fn decay_report_is_monotone_and_ends_at_one() {
    let s = test_matrix(60, 12, 0.4);
    let b = pod(&s, 0.9999).unwrap();
    let rows = pod_decay_report(&b);
    assert_eq!(rows.len(), 12);
    assert!(rows.windows(2).all(|w| w[0].sigma >= w[1].sigma && w[0].cumulative_energy <= w[1].cumulative_energy));
    assert_eq!(rows.last().unwrap().cumulative_energy, 1.0);
    assert_eq!(rows[0].mode, 1);
}

#[test]
fn full_retention_counts_numerical_rank() {
    let sigma = [3.0, 1.0, 1e-9, 1e-13];
    assert_eq!(retained_modes(&sigma, 1.0), 3);
    assert_eq!(retained_modes(&sigma, 0.5), 1);
}

#[test]
fn invalid_energy_fraction_is_rejected() {
    let s = test_matrix(10, 3, 1.0);
    assert!(pod(&s, 0.0).is_err());
    assert!(pod(&s, 1.5).is_err());
}
