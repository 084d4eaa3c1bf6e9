//! Discrete flow states and their pointwise and integral evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Element, Mesh, Point};

use super::assembly::Discretization;
use super::layout::DofLayout;

/// Coefficients of velocity and pressure over the free unknowns of a
/// [`DofLayout`], ordered `(v_bnd, p, v_int)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub coefficients: Vec<f64>,
}

impl FlowState {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    pub fn zeros(n: usize) -> Self {
        Self { coefficients: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.coefficients.iter().all(|v| v.is_finite())
    }

    pub fn v_bnd<'a>(&'a self, layout: &DofLayout) -> &'a [f64] {
        &self.coefficients[..layout.pressure_offset()]
    }

    pub fn pressure<'a>(&'a self, layout: &DofLayout) -> &'a [f64] {
        &self.coefficients[layout.pressure_offset()..layout.interior_offset(0)]
    }

    pub fn v_int<'a>(&'a self, layout: &DofLayout) -> &'a [f64] {
        &self.coefficients[layout.interior_offset(0)..]
    }
}

/// Reference coordinates of a physical point inside one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLocation {
    pub element: usize,
    pub xi: f64,
    pub eta: f64,
}

/// Inverts the element map at `target` by damped Newton iteration.
/// Returns `None` if the iteration fails or the preimage lies outside the
/// reference square.
pub fn invert_mapping(element: &Element, target: Point) -> Option<(f64, f64)> {
    let (mut xi, mut eta) = (0.0, 0.0);
    let residual = |xi: f64, eta: f64| {
        let m = element.map(xi, eta);
        (m.x.x - target.x, m.x.y - target.y, m)
    };
    let (mut rx, mut ry, mut m) = residual(xi, eta);
    for _ in 0..60 {
        let norm = rx.hypot(ry);
        if norm <= 1e-13 {
            break;
        }
        let [[a, b], [c, d]] = m.jac;
        let det = a * d - b * c;
        if det.abs() < 1e-300 {
            return None;
        }
        let dxi = -(d * rx - b * ry) / det;
        let deta = -(-c * rx + a * ry) / det;
        let mut t = 1.0;
        loop {
            let (nxi, neta) = (xi + t * dxi, eta + t * deta);
            let (nrx, nry, nm) = residual(nxi, neta);
            if nrx.hypot(nry) < norm || t < 1e-6 {
                xi = nxi;
                eta = neta;
                rx = nrx;
                ry = nry;
                m = nm;
                break;
            }
            t *= 0.5;
        }
        if xi.abs() > 3.0 || eta.abs() > 3.0 {
            return None;
        }
    }
    let tol = 1e-12 * (1.0 + target.x.abs().max(target.y.abs()));
    if rx.hypot(ry) > tol {
        return None;
    }
    let slack = 1.0 + 1e-10;
    (xi.abs() <= slack && eta.abs() <= slack).then_some((xi.clamp(-1.0, 1.0), eta.clamp(-1.0, 1.0)))
}

/// All elements containing `point`, in element order.
pub fn locate_all(mesh: &Mesh, point: Point) -> Vec<PointLocation> {
    let mut out = Vec::new();
    for (e, el) in mesh.elements.iter().enumerate() {
        let (lo, hi) = el.bounding_box();
        if point.x < lo.x || point.x > hi.x || point.y < lo.y || point.y > hi.y {
            continue;
        }
        if let Some((xi, eta)) = invert_mapping(el, point) {
            out.push(PointLocation { element: e, xi, eta });
        }
    }
    out
}

/// The first element (lowest index) containing `point`.
pub fn locate(mesh: &Mesh, point: Point) -> Result<PointLocation> {
    locate_all(mesh, point)
        .into_iter()
        .next()
        .ok_or(Error::PointLookup { x: point.x, y: point.y })
}

/// `(u_x, u_y, p)` of the state at a physical point.
pub fn evaluate_solution(disc: &Discretization, state: &FlowState, point: Point) -> Result<[f64; 3]> {
    let loc = locate(&disc.mesh, point)?;
    Ok(evaluate_at(disc, state, loc))
}

/// `(u_x, u_y, p)` at a known location.
pub fn evaluate_at(disc: &Discretization, state: &FlowState, loc: PointLocation) -> [f64; 3] {
    let nm = disc.layout.n_modes;
    let coef = disc.local_velocity(loc.element, &state.coefficients, true);
    let (phi, _, _) = disc.reference.eval_modes(loc.xi, loc.eta);
    let ux: f64 = phi.iter().zip(&coef[..nm]).map(|(a, b)| a * b).sum();
    let uy: f64 = phi.iter().zip(&coef[nm..]).map(|(a, b)| a * b).sum();
    let psi = disc.reference.eval_pressure_modes(loc.xi, loc.eta);
    let p: f64 = psi
        .iter()
        .enumerate()
        .map(|(k, v)| v * state.coefficients[disc.layout.pressure_index(loc.element, k)])
        .sum();
    [ux, uy, p]
}

/// A velocity component at a fixed point written as an affine functional of
/// the free coefficients: `value = constant + sum w_i x_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFunctional {
    pub weights: Vec<(usize, f64)>,
    pub constant: f64,
}

impl PointFunctional {
    pub fn new(disc: &Discretization, point: Point, comp: usize) -> Result<Self> {
        let loc = locate(&disc.mesh, point)?;
        let (phi, _, _) = disc.reference.eval_modes(loc.xi, loc.eta);
        let mut weights = Vec::new();
        let mut constant = 0.0;
        for (l, &v) in phi.iter().enumerate() {
            match disc.layout.velocity_index(loc.element, comp, l) {
                Some(g) => weights.push((g, v)),
                None => constant += v * disc.layout.local_dirichlet(loc.element, comp, l),
            }
        }
        Ok(Self { weights, constant })
    }

    pub fn apply(&self, x: &[f64]) -> f64 {
        self.constant + self.weights.iter().map(|&(g, w)| w * x[g]).sum::<f64>()
    }
}

/// Mass-weighted L2 norm of the velocity of a free vector; Dirichlet data is
/// included when `with_dirichlet` is set.
pub fn velocity_l2_norm(disc: &Discretization, x: &[f64], with_dirichlet: bool) -> f64 {
    let nm = disc.layout.n_modes;
    let mut total = 0.0;
    for e in 0..disc.mesh.elements.len() {
        let c = disc.local_velocity(e, x, with_dirichlet);
        let m = &disc.mass[e];
        for comp in 0..2 {
            let v = nalgebra::DVectorView::from_slice(&c[comp * nm..(comp + 1) * nm], nm);
            total += v.dot(&(m * v));
        }
    }
    total.max(0.0).sqrt()
}

/// Mass-weighted L2 norm of the velocity difference of two free vectors.
pub fn velocity_l2_distance(disc: &Discretization, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    velocity_l2_norm(disc, &d, false)
}

/// Euclidean norm of the discrete divergence `D v` over all pressure modes,
/// including the Dirichlet lift.
pub fn divergence_residual(disc: &Discretization, x: &[f64]) -> f64 {
    let mut total = 0.0;
    for e in 0..disc.mesh.elements.len() {
        let c = nalgebra::DVector::from_vec(disc.local_velocity(e, x, true));
        let r = &disc.divergence[e] * c;
        total += r.norm_squared();
    }
    total.sqrt()
}

/// Euclidean norm of the velocity part of a free vector.
pub fn velocity_coefficient_norm(layout: &DofLayout, x: &[f64]) -> f64 {
    let vb = &x[..layout.pressure_offset()];
    let vi = &x[layout.interior_offset(0)..];
    vb.iter().chain(vi).map(|v| v * v).sum::<f64>().sqrt()
}
