//! Gauss-Lobatto-Legendre quadrature and the orthogonal polynomials behind it.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Jacobi polynomial `P_n^{(a,b)}(x)` by the three-term recurrence.
pub fn jacobi(n: usize, a: f64, b: f64, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut p0 = 1.0;
    let mut p1 = 0.5 * ((a + b + 2.0) * x + (a - b));
    for k in 2..=n {
        let k = k as f64;
        let s = 2.0 * k + a + b;
        let c1 = 2.0 * k * (k + a + b) * (s - 2.0);
        let c2 = (s - 1.0) * (s * (s - 2.0) * x + a * a - b * b);
        let c3 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * s;
        let p2 = (c2 * p1 - c3 * p0) / c1;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Derivative of `P_n^{(a,b)}`.
pub fn jacobi_derivative(n: usize, a: f64, b: f64, x: f64) -> f64 {
    if n == 0 {
        0.0
    } else {
        0.5 * (n as f64 + a + b + 1.0) * jacobi(n - 1, a + 1.0, b + 1.0, x)
    }
}

/// Legendre polynomial `P_n(x)` and its derivative.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    (jacobi(n, 0.0, 0.0, x), jacobi_derivative(n, 0.0, 0.0, x))
}

/// `q`-point Gauss-Lobatto-Legendre rule: nodes are the roots of
/// `(1 - x^2) P'_{q-1}(x)`, weights `2 / (q (q - 1) P_{q-1}(x)^2)`.
pub fn gll_rule(q: usize) -> QuadratureRule {
    assert!(q >= 2, "Gauss-Lobatto rules need at least two points");
    let n = q - 1;
    // Newton iteration on the Legendre-Vandermonde recurrence, seeded with
    // Chebyshev-Gauss-Lobatto points
    let mut x: Vec<f64> = (0..q).map(|k| -(std::f64::consts::PI * k as f64 / n as f64).cos()).collect();
    let mut pn = vec![0.0; q];
    for xi in x.iter_mut() {
        for _ in 0..100 {
            let (mut p_prev, mut p) = (1.0, *xi);
            for k in 2..=n {
                let kf = k as f64;
                let next = ((2.0 * kf - 1.0) * *xi * p - (kf - 1.0) * p_prev) / kf;
                p_prev = p;
                p = next;
            }
            let step = (*xi * p - p_prev) / (q as f64 * p);
            *xi -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
    }
    // enforce exact endpoints and symmetry
    x[0] = -1.0;
    x[n] = 1.0;
    for k in 0..q / 2 {
        let s = 0.5 * (x[n - k] - x[k]);
        x[k] = -s;
        x[n - k] = s;
    }
    if q % 2 == 1 {
        x[n / 2] = 0.0;
    }
    for (k, &xi) in x.iter().enumerate() {
        pn[k] = legendre(n, xi).0;
    }
    let weights = pn.iter().map(|p| 2.0 / (q as f64 * n as f64 * p * p)).collect();
    QuadratureRule { nodes: x, weights }
}
