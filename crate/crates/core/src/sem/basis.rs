//! Modal (hierarchical) Legendre bases on the reference square.
//!
//! One-dimensional velocity modes of order `p`: mode `0` is `(1 - x)/2`,
//! mode `p` is `(1 + x)/2`, and modes `1..p` are the bubbles
//! `(1 - x)(1 + x)/4 * P_{m-1}^{(1,1)}(x)`. Pressure uses plain Legendre
//! polynomials up to order `p - 2`, discontinuous across elements.

use super::quadrature::{jacobi, jacobi_derivative, legendre};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Basis1D {
    pub order: usize,
}

impl Basis1D {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1);
        Self { order }
    }

    pub fn len(&self) -> usize {
        self.order + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_interior(&self, m: usize) -> bool {
        m != 0 && m != self.order
    }

    /// Value and derivative of mode `m` at `x`.
    pub fn eval(&self, m: usize, x: f64) -> (f64, f64) {
        let p = self.order;
        assert!(m <= p, "mode {m} exceeds order {p}");
        if m == 0 {
            (0.5 * (1.0 - x), -0.5)
        } else if m == p {
            (0.5 * (1.0 + x), 0.5)
        } else {
            let bubble = 0.25 * (1.0 - x) * (1.0 + x);
            let dbubble = -0.5 * x;
            let j = jacobi(m - 1, 1.0, 1.0, x);
            let dj = jacobi_derivative(m - 1, 1.0, 1.0, x);
            (bubble * j, dbubble * j + bubble * dj)
        }
    }
}

/// Value and derivative of mode `m` of an order-`p` velocity basis.
pub fn eval_basis(basis: &Basis1D, m: usize, x: f64) -> (f64, f64) {
    basis.eval(m, x)
}

/// Legendre pressure mode `k` (value, derivative).
pub fn pressure_mode(k: usize, x: f64) -> (f64, f64) {
    legendre(k, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_modes_and_bubbles() {
        let b = Basis1D::new(8);
        assert_eq!(b.eval(0, -1.0).0, 1.0);
        assert_eq!(b.eval(0, 1.0).0, 0.0);
        for m in 1..8 {
            assert_eq!(b.eval(m, -1.0).0, 0.0);
            assert_eq!(b.eval(m, 1.0).0, 0.0);
        }
        for &x in &[-0.3, 0.0, 0.77] {
            assert!((b.eval(0, x).0 + b.eval(8, x).0 - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let b = Basis1D::new(8);
        let h = 1e-6;
        let mut err: f64 = 0.0;
        // fixed low-discrepancy sample of 20 points inside [-1, 1]
        for i in 0..20 {
            let x = -0.99 + 1.98 * ((i as f64 * 0.618_033_988_749_895) % 1.0);
            for m in 0..=8 {
                let fd = (b.eval(m, x + h).0 - b.eval(m, x - h).0) / (2.0 * h);
                err = err.max((fd - b.eval(m, x).1).abs());
            }
        }
        assert!(err <= 1e-7, "max fd error {err}");
    }
}
