//! Evaluation of single entries of the gathered operator and right-hand side
//! by integrating only over the elements that support them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::Mesh;

use super::assembly::Discretization;
use super::element::{velocity_at_qp, ElementGeometry};
use super::layout::{DofKind, DofLayout};
use super::reference::ReferenceElement;

/// Element-local contributions `(element, local row, local column)` that sum
/// to one global entry. Local indices follow the element system order
/// `[x modes, y modes, pressure modes]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryStencil {
    pub terms: Vec<(usize, usize, usize)>,
}

impl EntryStencil {
    /// Stencil of global entry `(row, col)`. Empty when the supports are disjoint.
    pub fn new(layout: &DofLayout, row: usize, col: usize) -> Self {
        let rows = local_support(layout, row);
        let cols = local_support(layout, col);
        let mut terms = Vec::new();
        for &(e, a) in &rows {
            for &(f, b) in &cols {
                if e == f {
                    terms.push((e, a, b));
                }
            }
        }
        Self { terms }
    }

    /// Stencil of right-hand side entry `row`; the column slot is unused.
    pub fn rhs(layout: &DofLayout, row: usize) -> Self {
        Self {
            terms: local_support(layout, row).into_iter().map(|(e, a)| (e, a, 0)).collect(),
        }
    }

    pub fn elements(&self) -> impl Iterator<Item = usize> + '_ {
        self.terms.iter().map(|t| t.0)
    }
}

/// `(element, local index)` pairs of a global free unknown.
pub fn local_support(layout: &DofLayout, index: usize) -> Vec<(usize, usize)> {
    let nm = layout.n_modes;
    match layout.classify(index) {
        DofKind::VelBnd { comp, scalar } => layout.bnd_support[scalar].iter().map(|&(e, l)| (e, comp * nm + l)).collect(),
        DofKind::Pressure { element, mode } => vec![(element, 2 * nm + mode)],
        DofKind::VelInt { comp, element, mode } => vec![(element, comp * nm + mode)],
    }
}

#[derive(Debug, Clone)]
struct LocalElement {
    geometry: ElementGeometry,
    lift: Vec<f64>,
    wx: Vec<f64>,
    wy: Vec<f64>,
}

/// Entry evaluation restricted to a fixed set of elements. Geometry is
/// computed once; the advecting field is updated per iterate from
/// element-local coefficients.
#[derive(Debug, Clone)]
pub struct EntryEvaluator<'a> {
    reference: &'a ReferenceElement,
    elements: BTreeMap<usize, LocalElement>,
}

impl<'a> EntryEvaluator<'a> {
    /// `lift(e)` returns the element's Dirichlet coefficients (`2 n_modes`).
    pub fn new(
        reference: &'a ReferenceElement,
        mesh: &Mesh,
        elements: impl IntoIterator<Item = usize>,
        lift: &dyn Fn(usize) -> Vec<f64>,
    ) -> Result<Self> {
        let nq = reference.n_qp();
        let mut map = BTreeMap::new();
        for e in elements {
            if map.contains_key(&e) {
                continue;
            }
            let geometry = ElementGeometry::new(e, &mesh.elements[e], reference)?;
            map.insert(e, LocalElement { geometry, lift: lift(e), wx: vec![0.0; nq], wy: vec![0.0; nq] });
        }
        Ok(Self { reference, elements: map })
    }

    /// Evaluator over the elements of `stencils`, reusing the discretization's geometry.
    pub fn from_discretization(disc: &'a Discretization, stencils: &[&EntryStencil]) -> Self {
        let nq = disc.reference.n_qp();
        let mut map = BTreeMap::new();
        for s in stencils {
            for e in s.elements() {
                map.entry(e).or_insert_with(|| LocalElement {
                    geometry: disc.geometry[e].clone(),
                    lift: disc.layout.element_dirichlet(e),
                    wx: vec![0.0; nq],
                    wy: vec![0.0; nq],
                });
            }
        }
        Self { reference: &disc.reference, elements: map }
    }

    pub fn element_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.elements.keys().copied()
    }

    /// Sets the advecting field on element `e` from its local coefficients
    /// (`2 n_modes`, Dirichlet data included).
    pub fn set_velocity(&mut self, e: usize, coef: &[f64]) {
        let (wx, wy) = velocity_at_qp(self.reference, coef);
        let el = self.elements.get_mut(&e).expect("element registered with the evaluator");
        el.wx = wx;
        el.wy = wy;
    }

    /// Zero advecting field (Stokes operator).
    pub fn clear_velocity(&mut self) {
        for el in self.elements.values_mut() {
            el.wx.iter_mut().for_each(|v| *v = 0.0);
            el.wy.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn lift(&self, e: usize) -> &[f64] {
        &self.elements[&e].lift
    }

    /// Entry `(a, b)` of the element system matrix.
    pub fn local_entry(&self, e: usize, nu: f64, a: usize, b: usize) -> f64 {
        let el = &self.elements[&e];
        let r = self.reference;
        let nm = r.n_modes();
        let g = &el.geometry;
        match (a < 2 * nm, b < 2 * nm) {
            (true, true) => {
                if a / nm != b / nm {
                    return 0.0;
                }
                let (i, j) = (a % nm, b % nm);
                let mut sum = 0.0;
                for q in 0..r.n_qp() {
                    let (gxj, gyj) = (g.gx[(q, j)], g.gy[(q, j)]);
                    let visc = nu * (g.gx[(q, i)] * gxj + g.gy[(q, i)] * gyj);
                    let adv = r.phi[(q, i)] * (el.wx[q] * gxj + el.wy[q] * gyj);
                    sum += g.wdet[q] * (visc + adv);
                }
                sum
            }
            (false, true) => div_entry(r, g, a - 2 * nm, b),
            (true, false) => div_entry(r, g, b - 2 * nm, a),
            (false, false) => 0.0,
        }
    }

    /// Entry `a` of the element right-hand side `-K d` (no body force or traction).
    pub fn local_rhs(&self, e: usize, nu: f64, a: usize) -> f64 {
        let lift = &self.elements[&e].lift;
        let mut sum = 0.0;
        for (b, &d) in lift.iter().enumerate() {
            if d != 0.0 {
                sum -= self.local_entry(e, nu, a, b) * d;
            }
        }
        sum
    }

    pub fn entry(&self, nu: f64, stencil: &EntryStencil) -> f64 {
        stencil.terms.iter().map(|&(e, a, b)| self.local_entry(e, nu, a, b)).sum()
    }

    pub fn rhs_entry(&self, nu: f64, stencil: &EntryStencil) -> f64 {
        stencil.terms.iter().map(|&(e, a, _)| self.local_rhs(e, nu, a)).sum()
    }
}

fn div_entry(r: &ReferenceElement, g: &ElementGeometry, k: usize, b: usize) -> f64 {
    let nm = r.n_modes();
    let grad = if b < nm { &g.gx } else { &g.gy };
    let j = b % nm;
    let mut sum = 0.0;
    for q in 0..r.n_qp() {
        sum += g.wdet[q] * r.psi[(q, k)] * grad[(q, j)];
    }
    -sum
}

fn evaluator_with_state<'a>(
    disc: &'a Discretization,
    stencil: &EntryStencil,
    advection: Option<&[f64]>,
) -> EntryEvaluator<'a> {
    let mut ev = EntryEvaluator::from_discretization(disc, &[stencil]);
    if let Some(w) = advection {
        let ids: Vec<usize> = ev.element_ids().collect();
        for e in ids {
            ev.set_velocity(e, &disc.local_velocity(e, w, true));
        }
    }
    ev
}

/// Entry `(row, col)` of the gathered Oseen operator at viscosity `nu` and
/// advecting field `advection` (a free vector; Stokes when `None`),
/// integrated only over the elements supporting both unknowns.
pub fn evaluate_entry(disc: &Discretization, nu: f64, advection: Option<&[f64]>, row: usize, col: usize) -> f64 {
    let stencil = EntryStencil::new(&disc.layout, row, col);
    if stencil.terms.is_empty() {
        return 0.0;
    }
    evaluator_with_state(disc, &stencil, advection).entry(nu, &stencil)
}

/// Entry `row` of the Dirichlet-lifted right-hand side with zero forcing.
pub fn evaluate_rhs_entry(disc: &Discretization, nu: f64, advection: Option<&[f64]>, row: usize) -> f64 {
    let stencil = EntryStencil::rhs(&disc.layout, row);
    evaluator_with_state(disc, &stencil, advection).rhs_entry(nu, &stencil)
}
