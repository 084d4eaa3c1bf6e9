//! Per-element geometric factors and the element integrals that make up the
//! Oseen operator.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{Element, Point};

use super::reference::ReferenceElement;

/// Quadrature-point data of one mapped element.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    /// Physical quadrature points.
    pub points: Vec<Point>,
    /// Quadrature weight times Jacobian determinant.
    pub wdet: Vec<f64>,
    /// Physical gradients of the velocity modes (`n_qp x n_modes`).
    pub gx: DMatrix<f64>,
    pub gy: DMatrix<f64>,
}

impl ElementGeometry {
    pub fn new(id: usize, element: &Element, reference: &ReferenceElement) -> Result<Self> {
        let nq = reference.n_qp();
        let nm = reference.n_modes();
        let mut points = Vec::with_capacity(nq);
        let mut wdet = Vec::with_capacity(nq);
        let mut gx = DMatrix::zeros(nq, nm);
        let mut gy = DMatrix::zeros(nq, nm);
        for (r, &(xi, eta)) in reference.points.iter().enumerate() {
            let m = element.map(xi, eta);
            if !(m.det_j > 0.0) {
                return Err(Error::MeshQuality { element: id, det_j: m.det_j });
            }
            let [[x_xi, x_eta], [y_xi, y_eta]] = m.jac;
            let inv = 1.0 / m.det_j;
            let (xi_x, xi_y) = (y_eta * inv, -x_eta * inv);
            let (eta_x, eta_y) = (-y_xi * inv, x_xi * inv);
            for l in 0..nm {
                let (a, b) = (reference.phi_xi[(r, l)], reference.phi_eta[(r, l)]);
                gx[(r, l)] = a * xi_x + b * eta_x;
                gy[(r, l)] = a * xi_y + b * eta_y;
            }
            points.push(m.x);
            wdet.push(reference.weights[r] * m.det_j);
        }
        Ok(Self { points, wdet, gx, gy })
    }

    pub fn area(&self) -> f64 {
        self.wdet.iter().sum()
    }

    fn weighted(&self, m: &DMatrix<f64>, w: impl Fn(usize) -> f64) -> DMatrix<f64> {
        let mut out = m.clone();
        for (r, mut row) in out.row_iter_mut().enumerate() {
            row *= self.wdet[r] * w(r);
        }
        out
    }

    /// Scalar stiffness `int grad(phi_i) . grad(phi_j)`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        self.gx.transpose() * self.weighted(&self.gx, |_| 1.0) + self.gy.transpose() * self.weighted(&self.gy, |_| 1.0)
    }

    /// Scalar mass `int phi_i phi_j`.
    pub fn mass(&self, reference: &ReferenceElement) -> DMatrix<f64> {
        reference.phi.transpose() * self.weighted(&reference.phi, |_| 1.0)
    }

    /// Pressure-velocity coupling `-int psi_k div(phi)`, columns ordered
    /// `[x-component modes, y-component modes]`.
    pub fn divergence(&self, reference: &ReferenceElement) -> DMatrix<f64> {
        let nm = reference.n_modes();
        let psi_w = self.weighted(&reference.psi, |_| 1.0);
        let mut d = DMatrix::zeros(reference.n_pmodes(), 2 * nm);
        d.columns_mut(0, nm).copy_from(&(psi_w.transpose() * &self.gx));
        d.columns_mut(nm, nm).copy_from(&(psi_w.transpose() * &self.gy));
        d.neg_mut();
        d
    }

    /// Scalar advection `int phi_i (w . grad phi_j)` for a velocity field `w`
    /// sampled at the quadrature points.
    pub fn advection(&self, reference: &ReferenceElement, wx: &[f64], wy: &[f64]) -> DMatrix<f64> {
        let mut m = self.weighted(&self.gx, |r| wx[r]);
        m += self.weighted(&self.gy, |r| wy[r]);
        reference.phi.transpose() * m
    }

    /// Load vector `int phi_i f` for both components (`2 n_modes`).
    pub fn load(&self, reference: &ReferenceElement, force: &dyn Fn(Point) -> [f64; 2]) -> DVector<f64> {
        let nm = reference.n_modes();
        let mut out = DVector::zeros(2 * nm);
        for (r, &x) in self.points.iter().enumerate() {
            let f = force(x);
            if f == [0.0, 0.0] {
                continue;
            }
            let w = self.wdet[r];
            for l in 0..nm {
                let v = w * reference.phi[(r, l)];
                out[l] += v * f[0];
                out[nm + l] += v * f[1];
            }
        }
        out
    }
}

/// Velocity field of local coefficients (`2 n_modes`, component-major) at
/// the quadrature points.
pub fn velocity_at_qp(reference: &ReferenceElement, coef: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let nm = reference.n_modes();
    let cx = DVector::from_column_slice(&coef[..nm]);
    let cy = DVector::from_column_slice(&coef[nm..2 * nm]);
    let wx = &reference.phi * cx;
    let wy = &reference.phi * cy;
    (wx.as_slice().to_vec(), wy.as_slice().to_vec())
}

/// Load contribution of a boundary traction `t` on local edge `edge` of an
/// element (`2 n_modes`). The integral uses the quadrature points that lie
/// on the edge, which exist because the rule is Gauss-Lobatto.
pub fn edge_traction(
    element: &Element,
    reference: &ReferenceElement,
    edge: usize,
    traction: &dyn Fn(Point) -> [f64; 2],
) -> DVector<f64> {
    let q = reference.rule.len();
    let nm = reference.n_modes();
    let mut out = DVector::zeros(2 * nm);
    let curve = element.edge(edge);
    for k in 0..q {
        let (i, j) = match edge {
            crate::geometry::BOTTOM => (k, 0),
            crate::geometry::TOP => (k, q - 1),
            crate::geometry::LEFT => (0, k),
            _ => (q - 1, k),
        };
        let r = j * q + i;
        let s = reference.rule.nodes[k];
        let d = curve.derivative(s);
        let ds = (d.x * d.x + d.y * d.y).sqrt() * reference.rule.weights[k];
        let t = traction(curve.eval(s));
        for l in 0..nm {
            let v = ds * reference.phi[(r, l)];
            out[l] += v * t[0];
            out[nm + l] += v * t[1];
        }
    }
    out
}
