//! Matrix discrete empirical interpolation of the parameter-dependent
//! operator blocks and the lifted right-hand side.

use std::collections::BTreeSet;

use log::info;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pod::{retained_modes, thin_svd};
use crate::sem::entry::EntryStencil;
use crate::sem::{DofLayout, GlobalSystem, SparseStructure};

/// Sub-blocks of the gathered operator that are interpolated separately.
/// Velocity blocks are stored for the x component only: both components
/// share the same scalar operator. The pressure couplings appear twice in
/// the operator (as `D` and `D^T`) and are stored once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    A,
    B,
    BTilde,
    C,
    DBnd,
    DInt,
    Rhs,
}

impl Role {
    pub const ALL: [Role; 7] = [Role::A, Role::B, Role::BTilde, Role::C, Role::DBnd, Role::DInt, Role::Rhs];
    pub const MATRICES: [Role; 6] = [Role::A, Role::B, Role::BTilde, Role::C, Role::DBnd, Role::DInt];

    pub fn name(self) -> &'static str {
        match self {
            Role::A => "A",
            Role::B => "B",
            Role::BTilde => "B_tilde",
            Role::C => "C",
            Role::DBnd => "D_bnd",
            Role::DInt => "D_int",
            Role::Rhs => "rhs",
        }
    }

    pub fn from_name(name: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.name() == name)
    }

    pub fn is_vector(self) -> bool {
        self == Role::Rhs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Bnd0,
    Bnd1,
    Pressure,
    Int0,
    Int1,
}

fn class(layout: &DofLayout, i: usize) -> Class {
    let nb = layout.n_bnd_free();
    if i < nb {
        Class::Bnd0
    } else if i < 2 * nb {
        Class::Bnd1
    } else if i < layout.interior_offset(0) {
        Class::Pressure
    } else if i < layout.interior_offset(1) {
        Class::Int0
    } else {
        Class::Int1
    }
}

fn role_of(layout: &DofLayout, row: usize, col: usize) -> Option<Role> {
    use Class::*;
    match (class(layout, row), class(layout, col)) {
        (Bnd0, Bnd0) => Some(Role::A),
        (Bnd0, Int0) => Some(Role::B),
        (Int0, Bnd0) => Some(Role::BTilde),
        (Int0, Int0) => Some(Role::C),
        (Pressure, Bnd0 | Bnd1) => Some(Role::DBnd),
        (Pressure, Int0 | Int1) => Some(Role::DInt),
        _ => None,
    }
}

/// Where each role's entries live in the gathered operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolePattern {
    pub role: Role,
    /// Sorted unique `(row, col)` pairs (for the right-hand side, `col = 0`).
    pub entries: Vec<(usize, usize)>,
    /// Position of each entry in the operator value array (unused for the right-hand side).
    pub positions: Vec<usize>,
}

impl RolePattern {
    pub fn new(role: Role, layout: &DofLayout, structure: &SparseStructure) -> Self {
        if role.is_vector() {
            return Self { role, entries: (0..structure.n).map(|i| (i, 0)).collect(), positions: Vec::new() };
        }
        let mut pairs: Vec<((usize, usize), usize)> = structure
            .entries()
            .enumerate()
            .filter(|(_, (r, c))| role_of(layout, *r, *c) == Some(role))
            .map(|(k, rc)| (rc, k))
            .collect();
        pairs.sort_unstable();
        Self {
            role,
            entries: pairs.iter().map(|p| p.0).collect(),
            positions: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Values of this role in a gathered system.
    pub fn extract(&self, sys: &GlobalSystem) -> Vec<f64> {
        if self.role.is_vector() {
            sys.rhs.clone()
        } else {
            self.positions.iter().map(|&k| sys.values[k]).collect()
        }
    }
}

/// Every place a role entry `(row, col)` occupies in the gathered operator.
pub fn embed(layout: &DofLayout, role: Role, row: usize, col: usize) -> Vec<(usize, usize)> {
    let nb = layout.n_bnd_free();
    let ni = layout.n_interior();
    match role {
        Role::A => vec![(row, col), (row + nb, col + nb)],
        Role::B => vec![(row, col), (row + nb, col + ni)],
        Role::BTilde => vec![(row, col), (row + ni, col + nb)],
        Role::C => vec![(row, col), (row + ni, col + ni)],
        Role::DBnd | Role::DInt => vec![(row, col), (col, row)],
        Role::Rhs => vec![(row, 0)],
    }
}

/// Vectorized matrices of one role collected at converged states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSnapshotSet {
    pub role: Role,
    pub pattern: Vec<(usize, usize)>,
    pub vectors: Vec<Vec<f64>>,
}

impl MatrixSnapshotSet {
    pub fn new(role: Role, pattern: Vec<(usize, usize)>) -> Self {
        Self { role, pattern, vectors: Vec::new() }
    }

    pub fn push(&mut self, v: Vec<f64>) -> Result<()> {
        if v.len() != self.pattern.len() {
            return Err(Error::Dimension(format!(
                "{} snapshot has {} values, pattern has {}",
                self.role.name(),
                v.len(),
                self.pattern.len()
            )));
        }
        self.vectors.push(v);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    fn matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.pattern.len(), self.vectors.len());
        for (j, v) in self.vectors.iter().enumerate() {
            m.column_mut(j).copy_from_slice(v);
        }
        m
    }
}

/// Collector that accumulates all roles from gathered systems.
#[derive(Debug, Clone)]
pub struct Collector {
    pub patterns: Vec<RolePattern>,
    pub sets: Vec<MatrixSnapshotSet>,
}

impl Collector {
    pub fn new(layout: &DofLayout, structure: &SparseStructure) -> Self {
        let patterns: Vec<RolePattern> = Role::ALL.iter().map(|&r| RolePattern::new(r, layout, structure)).collect();
        let sets = patterns.iter().map(|p| MatrixSnapshotSet::new(p.role, p.entries.clone())).collect();
        Self { patterns, sets }
    }

    pub fn push(&mut self, sys: &GlobalSystem) -> Result<()> {
        for (p, s) in self.patterns.iter().zip(&mut self.sets) {
            s.push(p.extract(sys))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sets.first().map_or(0, |s| s.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Affine approximation `A(mu) ~ sum_i tau_i(mu) A_i` of one role.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpansion {
    pub role: Role,
    pub q: usize,
    /// `pattern_len x Q` basis of vectorized matrices.
    pub basis_vectors: DMatrix<f64>,
    pub pattern: Vec<(usize, usize)>,
    /// Pattern positions selected by the greedy procedure.
    pub interp_positions: Vec<usize>,
    /// Global `(row, col)` of the selected positions.
    pub interp_entries: Vec<(usize, usize)>,
    /// Rows of the basis at the selected positions (`Q x Q`).
    pub interp_matrix: DMatrix<f64>,
    pub condition_number: f64,
    pub singular_values: Vec<f64>,
    pub energy_captured: f64,
    /// Element-local contributions of each interpolation entry.
    pub stencils: Vec<EntryStencil>,
}

impl AffineExpansion {
    /// Elements touched by any interpolation entry.
    pub fn element_support(&self) -> BTreeSet<usize> {
        self.stencils.iter().flat_map(|s| s.elements()).collect()
    }

    /// Pattern vector `sum_i tau_i V_i`.
    pub fn reconstruct(&self, tau: &[f64]) -> Vec<f64> {
        let t = DVector::from_column_slice(tau);
        (&self.basis_vectors * t).as_slice().to_vec()
    }
}

/// Greedy interpolation points of the columns of `v`: each new point is the
/// argmax of the residual of interpolating the next column at the points
/// chosen so far; ties go to the lowest index.
pub fn deim_points(v: &DMatrix<f64>) -> Result<Vec<usize>> {
    let q = v.ncols();
    let mut points: Vec<usize> = Vec::with_capacity(q);
    for k in 0..q {
        let col = v.column(k);
        let residual: DVector<f64> = if k == 0 {
            col.into_owned()
        } else {
            let p = DMatrix::from_fn(k, k, |i, j| v[(points[i], j)]);
            let rhs = DVector::from_fn(k, |i, _| v[(points[i], k)]);
            let c = p
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::SingularInterpolation(format!("interpolation matrix of size {k} is singular")))?;
            col - v.columns(0, k) * c
        };
        let idx = argmax_abs(residual.as_slice());
        if points.contains(&idx) {
            return Err(Error::SingularInterpolation(format!("greedy step {k} repeated entry {idx}")));
        }
        points.push(idx);
    }
    Ok(points)
}

/// Index of the largest magnitude, lowest index on ties.
pub fn argmax_abs(v: &[f64]) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_val {
            best_val = x.abs();
            best = i;
        }
    }
    best
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = m.clone().singular_values();
    let max = s.max();
    let min = s.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// POD of the collected matrices followed by greedy entry selection.
pub fn build(set: &MatrixSnapshotSet, energy_fraction: f64, layout: &DofLayout) -> Result<AffineExpansion> {
    if set.is_empty() {
        return Err(Error::Degenerate(format!("no {} matrices collected", set.role.name())));
    }
    let s = set.matrix();
    let (u, sigma) = thin_svd(&s);
    let s1 = sigma.first().copied().unwrap_or(0.0);
    if !(s1 > 0.0) {
        return Err(Error::Degenerate(format!("{} snapshots are all zero", set.role.name())));
    }
    // modes below round-off cannot be interpolated reliably
    let rank = sigma.iter().filter(|&&v| v > 1e-13 * s1).count().max(1);
    let q = retained_modes(&sigma, energy_fraction).min(rank);
    let total: f64 = sigma.iter().map(|v| v * v).sum();
    let kept: f64 = sigma[..q].iter().map(|v| v * v).sum();
    let v = u.columns(0, q).into_owned();
    let points = deim_points(&v)?;
    let interp_matrix = DMatrix::from_fn(q, q, |i, j| v[(points[i], j)]);
    let cond = condition_number(&interp_matrix);
    if !cond.is_finite() {
        return Err(Error::SingularInterpolation(format!("{} interpolation matrix", set.role.name())));
    }
    let interp_entries: Vec<(usize, usize)> = points.iter().map(|&k| set.pattern[k]).collect();
    let stencils = interp_entries
        .iter()
        .map(|&(r, c)| if set.role.is_vector() { EntryStencil::rhs(layout, r) } else { EntryStencil::new(layout, r, c) })
        .collect();
    info!("{}: Q = {q}, condition {cond:.3e}, energy {:.8}", set.role.name(), kept / total);
    Ok(AffineExpansion {
        role: set.role,
        q,
        basis_vectors: v,
        pattern: set.pattern.clone(),
        interp_positions: points,
        interp_entries,
        interp_matrix,
        condition_number: cond,
        singular_values: sigma,
        energy_captured: kept / total,
        stencils,
    })
}

/// Solves the interpolation system for `tau` from the true values of the
/// interpolation entries (`entry_eval(k)` for the `k`-th entry).
pub fn coefficients(interp_matrix: &DMatrix<f64>, entry_eval: &mut dyn FnMut(usize) -> Result<f64>) -> Result<Vec<f64>> {
    let q = interp_matrix.nrows();
    let mut rhs = DVector::zeros(q);
    for k in 0..q {
        rhs[k] = entry_eval(k)?;
    }
    let tau = interp_matrix
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularInterpolation("interpolation matrix".into()))?;
    Ok(tau.as_slice().to_vec())
}

/// `sum_i tau_i P_i` for precomputed reduced matrices `P_i`.
pub fn assemble_reduced(tau: &[f64], projected: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    if tau.len() != projected.len() {
        return Err(Error::Dimension(format!("{} coefficients for {} matrices", tau.len(), projected.len())));
    }
    let Some(first) = projected.first() else {
        return Err(Error::Dimension("no projected matrices".into()));
    };
    let mut out = DMatrix::zeros(first.nrows(), first.ncols());
    for (t, p) in tau.iter().zip(projected) {
        if p.shape() != first.shape() {
            return Err(Error::Dimension("projected matrices differ in shape".into()));
        }
        out += p * *t;
    }
    Ok(out)
}

/// `U^T E(V_i) U` for every basis vector of a matrix role, where `E` places
/// the role entries at all their positions in the gathered operator.
pub fn project_matrix_role(exp: &AffineExpansion, layout: &DofLayout, u: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let n = u.ncols();
    let places: Vec<Vec<(usize, usize)>> = exp.pattern.iter().map(|&(r, c)| embed(layout, exp.role, r, c)).collect();
    (0..exp.q)
        .map(|i| {
            // W = E(V_i) U, then U^T W
            let mut w = DMatrix::<f64>::zeros(u.nrows(), n);
            for (k, pl) in places.iter().enumerate() {
                let val = exp.basis_vectors[(k, i)];
                if val == 0.0 {
                    continue;
                }
                for &(r, c) in pl {
                    for j in 0..n {
                        w[(r, j)] += val * u[(c, j)];
                    }
                }
            }
            u.transpose() * w
        })
        .collect()
}

/// `U^T V_i` for every basis vector of the right-hand-side role.
pub fn project_vector_role(exp: &AffineExpansion, u: &DMatrix<f64>) -> Vec<DVector<f64>> {
    (0..exp.q).map(|i| u.transpose() * exp.basis_vectors.column(i)).collect()
}
