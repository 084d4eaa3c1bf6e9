//! Proper orthogonal decomposition of snapshot matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orthonormal reduced basis with the full singular-value spectrum of the
/// snapshot matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    /// `n_rows x n` with orthonormal columns.
    pub u: DMatrix<f64>,
    /// Singular values in non-increasing order (`min(n_rows, n_cols)` of them).
    pub singular_values: Vec<f64>,
    pub n: usize,
    pub energy_fraction: f64,
}

impl ReducedBasis {
    /// Basis restricted to its leading `n` modes.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.clamp(1, self.u.ncols());
        Self {
            u: self.u.columns(0, n).into_owned(),
            singular_values: self.singular_values.clone(),
            n,
            energy_fraction: self.energy_fraction,
        }
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }
}

/// Smallest `k` whose cumulative `sigma^2` share reaches `fraction`.
/// With `fraction = 1` this is the numerical rank (`sigma_i > 1e-12 sigma_1`).
pub fn retained_modes(sigma: &[f64], fraction: f64) -> usize {
    if fraction >= 1.0 {
        let s1 = sigma.first().copied().unwrap_or(0.0);
        return sigma.iter().filter(|&&s| s > 1e-12 * s1).count().max(1);
    }
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    let mut acc = 0.0;
    for (k, s) in sigma.iter().enumerate() {
        acc += s * s;
        if acc >= fraction * total {
            return k + 1;
        }
    }
    sigma.len()
}

/// Thin SVD of a tall matrix by Householder QR followed by an SVD of the
/// small triangular factor. Returns left singular vectors and values,
/// sorted by decreasing value.
pub fn thin_svd(s: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let (m, n) = s.shape();
    if m < n {
        let svd = s.clone().svd(true, false);
        return sorted(svd.u.expect("requested u"), svd.singular_values.as_slice());
    }
    let qr = s.clone().qr();
    let (q, r) = qr.unpack();
    let svd = r.svd(true, false);
    let (ur, sigma) = sorted(svd.u.expect("requested u"), svd.singular_values.as_slice());
    (q * ur, sigma)
}

fn sorted(u: DMatrix<f64>, sigma: &[f64]) -> (DMatrix<f64>, Vec<f64>) {
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
    let mut out = DMatrix::zeros(u.nrows(), order.len());
    for (k, &i) in order.iter().enumerate() {
        out.set_column(k, &u.column(i));
    }
    (out, order.iter().map(|&i| sigma[i]).collect())
}

/// POD of the columns of `snapshots` keeping the leading modes that carry
/// `energy_fraction` of the squared singular values.
pub fn pod(snapshots: &DMatrix<f64>, energy_fraction: f64) -> Result<ReducedBasis> {
    if snapshots.ncols() == 0 || snapshots.nrows() == 0 {
        return Err(Error::Degenerate("no snapshots".into()));
    }
    if !(energy_fraction > 0.0 && energy_fraction <= 1.0) {
        return Err(Error::Config(format!("energy fraction {energy_fraction} outside (0, 1]")));
    }
    if snapshots.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("snapshot matrix is identically zero".into()));
    }
    let (u, sigma) = thin_svd(snapshots);
    let n = retained_modes(&sigma, energy_fraction);
    Ok(ReducedBasis {
        u: u.columns(0, n).into_owned(),
        singular_values: sigma,
        n,
        energy_fraction,
    })
}

/// Builds the snapshot matrix from column vectors.
pub fn snapshot_matrix(columns: &[&[f64]]) -> Result<DMatrix<f64>> {
    let Some(first) = columns.first() else {
        return Err(Error::Degenerate("no snapshots".into()));
    };
    let m = first.len();
    if columns.iter().any(|c| c.len() != m) {
        return Err(Error::Dimension("snapshots differ in length".into()));
    }
    let mut s = DMatrix::zeros(m, columns.len());
    for (j, c) in columns.iter().enumerate() {
        s.column_mut(j).copy_from_slice(c);
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub mode: usize,
    pub sigma: f64,
    pub cumulative_energy: f64,
}

/// Singular values with their cumulative energy share (1-based modes).
pub fn pod_decay_report(basis: &ReducedBasis) -> Vec<DecayRow> {
    let sigma = &basis.singular_values;
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    let mut acc = 0.0;
    sigma
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            acc += s * s;
            DecayRow {
                mode: k + 1,
                sigma: s,
                cumulative_energy: if k + 1 == sigma.len() { 1.0 } else { acc / total },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_input() {
        let col: Vec<f64> = (0..30).map(|i| (i as f64 * 0.3).sin() + 0.1).collect();
        let s = snapshot_matrix(&[&col, &col, &col, &col]).unwrap();
        let b = pod(&s, 0.9999).unwrap();
        assert_eq!(b.n, 1);
        assert!(b.singular_values[1..].iter().all(|&v| v < 1e-12 * b.singular_values[0]));
        let rows = pod_decay_report(&b);
        assert_eq!(rows.last().unwrap().cumulative_energy, 1.0);
        assert!((rows[0].cumulative_energy - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        let s = DMatrix::zeros(5, 3);
        assert!(matches!(pod(&s, 0.9999), Err(Error::Degenerate(_))));
    }

    #[test]
    fn full_retention_is_numerical_rank() {
        let a: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..20).map(|i| (i * i) as f64).collect();
        let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - y).collect();
        let s = snapshot_matrix(&[&a, &b, &c]).unwrap();
        assert_eq!(pod(&s, 1.0).unwrap().n, 2);
    }

    #[test]
    fn wide_matrix_supported() {
        let s = DMatrix::from_fn(3, 7, |i, j| ((i + 1) * (j + 2)) as f64 + if i == j { 1.0 } else { 0.0 });
        let b = pod(&s, 1.0).unwrap();
        assert_eq!(b.singular_values.len(), 3);
        let g = b.u.transpose() * &b.u;
        assert!((g - DMatrix::identity(b.n, b.n)).abs().max() < 1e-12);
    }
}
