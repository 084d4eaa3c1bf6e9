//! Tabulated modal bases on the reference square `[-1, 1]^2`.

use nalgebra::DMatrix;

use super::basis::{pressure_mode, Basis1D};
use super::quadrature::{gll_rule, QuadratureRule};

/// Where a local boundary mode lives on the element boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundarySlot {
    /// Vertex mode, local vertex index (SW, SE, NW, NE).
    Vertex(usize),
    /// Edge mode `m in 1..p` on local edge (bottom, top, left, right).
    Edge(usize, usize),
}

/// Reference element of velocity order `p` with `q = p + 2` GLL points per
/// direction. Local velocity modes are ordered boundary-first.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub order: usize,
    pub basis: Basis1D,
    pub rule: QuadratureRule,
    /// Local velocity modes as tensor indices `(a, b)`; the first `n_bnd` are boundary modes.
    pub modes: Vec<(usize, usize)>,
    pub slots: Vec<BoundarySlot>,
    pub n_bnd: usize,
    /// Pressure modes `(k, l)` of order `p - 2`.
    pub pmodes: Vec<(usize, usize)>,
    /// Quadrature points `(xi, eta)`, xi fastest.
    pub points: Vec<(f64, f64)>,
    /// Tensor weights `w_i w_j`.
    pub weights: Vec<f64>,
    /// `n_qp x n_modes` tables of values and reference derivatives.
    pub phi: DMatrix<f64>,
    pub phi_xi: DMatrix<f64>,
    pub phi_eta: DMatrix<f64>,
    /// `n_qp x n_pmodes` pressure values.
    pub psi: DMatrix<f64>,
}

impl ReferenceElement {
    pub fn new(order: usize) -> Self {
        assert!(order >= 3, "velocity order must be at least 3");
        let p = order;
        let basis = Basis1D::new(p);
        let rule = gll_rule(p + 2);

        let mut modes = vec![(0, 0), (p, 0), (0, p), (p, p)];
        let mut slots: Vec<BoundarySlot> = (0..4).map(BoundarySlot::Vertex).collect();
        for edge in 0..4 {
            for m in 1..p {
                modes.push(match edge {
                    0 => (m, 0),
                    1 => (m, p),
                    2 => (0, m),
                    _ => (p, m),
                });
                slots.push(BoundarySlot::Edge(edge, m));
            }
        }
        let n_bnd = modes.len();
        for b in 1..p {
            for a in 1..p {
                modes.push((a, b));
            }
        }
        let pmodes: Vec<(usize, usize)> = (0..=p - 2).flat_map(|l| (0..=p - 2).map(move |k| (k, l))).collect();

        let nq = rule.len();
        let mut points = Vec::with_capacity(nq * nq);
        let mut weights = Vec::with_capacity(nq * nq);
        for j in 0..nq {
            for i in 0..nq {
                points.push((rule.nodes[i], rule.nodes[j]));
                weights.push(rule.weights[i] * rule.weights[j]);
            }
        }
        let tab: Vec<Vec<(f64, f64)>> = (0..=p)
            .map(|m| rule.nodes.iter().map(|&x| basis.eval(m, x)).collect())
            .collect();
        let ptab: Vec<Vec<f64>> = (0..=p - 2)
            .map(|k| rule.nodes.iter().map(|&x| pressure_mode(k, x).0).collect())
            .collect();
        let nm = modes.len();
        let mut phi = DMatrix::zeros(nq * nq, nm);
        let mut phi_xi = DMatrix::zeros(nq * nq, nm);
        let mut phi_eta = DMatrix::zeros(nq * nq, nm);
        let mut psi = DMatrix::zeros(nq * nq, pmodes.len());
        for j in 0..nq {
            for i in 0..nq {
                let r = j * nq + i;
                for (l, &(a, b)) in modes.iter().enumerate() {
                    let (va, da) = tab[a][i];
                    let (vb, db) = tab[b][j];
                    phi[(r, l)] = va * vb;
                    phi_xi[(r, l)] = da * vb;
                    phi_eta[(r, l)] = va * db;
                }
                for (l, &(k, kk)) in pmodes.iter().enumerate() {
                    psi[(r, l)] = ptab[k][i] * ptab[kk][j];
                }
            }
        }
        Self {
            order,
            basis,
            rule,
            modes,
            slots,
            n_bnd,
            pmodes,
            points,
            weights,
            phi,
            phi_xi,
            phi_eta,
            psi,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn n_int(&self) -> usize {
        self.modes.len() - self.n_bnd
    }

    pub fn n_pmodes(&self) -> usize {
        self.pmodes.len()
    }

    pub fn n_qp(&self) -> usize {
        self.points.len()
    }

    /// Velocity mode values and reference derivatives at an arbitrary point.
    pub fn eval_modes(&self, xi: f64, eta: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let p = self.order;
        let ex: Vec<(f64, f64)> = (0..=p).map(|m| self.basis.eval(m, xi)).collect();
        let ey: Vec<(f64, f64)> = (0..=p).map(|m| self.basis.eval(m, eta)).collect();
        let mut v = Vec::with_capacity(self.n_modes());
        let mut dx = Vec::with_capacity(self.n_modes());
        let mut dy = Vec::with_capacity(self.n_modes());
        for &(a, b) in &self.modes {
            v.push(ex[a].0 * ey[b].0);
            dx.push(ex[a].1 * ey[b].0);
            dy.push(ex[a].0 * ey[b].1);
        }
        (v, dx, dy)
    }

    pub fn eval_pressure_modes(&self, xi: f64, eta: f64) -> Vec<f64> {
        let p = self.order;
        let ex: Vec<f64> = (0..=p - 2).map(|k| pressure_mode(k, xi).0).collect();
        let ey: Vec<f64> = (0..=p - 2).map(|k| pressure_mode(k, eta).0).collect();
        self.pmodes.iter().map(|&(k, l)| ex[k] * ey[l]).collect()
    }
}
