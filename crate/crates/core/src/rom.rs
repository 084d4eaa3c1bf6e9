//! Reduced Oseen model: offline projection of the affine expansions and the
//! online fixed-point solver whose cost does not depend on the full-order size.

use std::collections::BTreeSet;
use std::time::Instant;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ParameterPoint;
use crate::mdeim::{coefficients, project_matrix_role, project_vector_role, AffineExpansion, Role};
use crate::pod::ReducedBasis;
use crate::sem::entry::{EntryEvaluator, EntryStencil};
use crate::sem::{Discretization, FlowState, ReferenceElement};
use crate::steady::{FlowProblem, ModelSetup, OseenConfig, ParameterGrid, SnapshotSet};

/// Online data of one role: the interpolation system, the element
/// stencils of its entries, and the projected basis terms.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineRole {
    pub role: Role,
    pub interp_matrix: DMatrix<f64>,
    pub stencils: Vec<EntryStencil>,
    /// `U^T A_i U` for matrix roles (`N x N` each).
    pub matrices: Vec<DMatrix<f64>>,
    /// `U^T f_i` for the right-hand-side role.
    pub vectors: Vec<DVector<f64>>,
}

impl OnlineRole {
    pub fn q(&self) -> usize {
        self.interp_matrix.nrows()
    }
}

/// Everything the online phase needs. No array here scales with the number
/// of full-order unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct RomArtifacts {
    pub setup: ModelSetup,
    pub fingerprint: String,
    pub config_hash: String,
    /// Parameter box used to normalize distances to training points.
    pub nu_range: (f64, f64),
    pub c_range: (f64, f64),
    pub roles: Vec<OnlineRole>,
    /// Elements touched by any interpolation entry.
    pub support: Vec<usize>,
    /// Per support element, rows of `U` for its local velocity modes
    /// (`2 n_modes x N`, zero rows for prescribed modes).
    pub element_basis: Vec<DMatrix<f64>>,
    /// Per support element, the Dirichlet coefficients (`2 n_modes`).
    pub element_lift: Vec<Vec<f64>>,
    /// Observable as `probe . x_N + probe_constant`.
    pub probe: DVector<f64>,
    pub probe_constant: f64,
    pub training_params: Vec<ParameterPoint>,
    /// Reduced coordinates `U^T x` of the training snapshots (rows).
    pub training_coords: DMatrix<f64>,
}

/// Outcome of one reduced solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RomSolveResult {
    pub x_n: DVector<f64>,
    pub observable: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    /// Wall time per reduced iteration (seconds).
    pub iteration_seconds: Vec<f64>,
    /// Wall time of the whole online query (seconds).
    pub total_seconds: f64,
}

/// Full-order state `U x_N`.
pub fn reconstruct(basis: &ReducedBasis, x_n: &DVector<f64>) -> FlowState {
    let k = x_n.len();
    FlowState::new((basis.u.columns(0, k) * x_n).as_slice().to_vec())
}

impl RomArtifacts {
    /// Projects the expansions onto the basis and extracts the element data
    /// the online phase needs.
    pub fn offline(
        setup: &ModelSetup,
        problem: &FlowProblem,
        snapshots: &SnapshotSet,
        basis: &ReducedBasis,
        expansions: &[AffineExpansion],
        config_hash: &str,
    ) -> Result<Self> {
        let disc = &problem.disc;
        let layout = &disc.layout;
        if basis.dim() != layout.n_free() {
            return Err(Error::Provenance(format!(
                "basis has {} rows but the mesh has {} free unknowns",
                basis.dim(),
                layout.n_free()
            )));
        }
        if snapshots.states.iter().any(|s| s.len() != basis.dim()) {
            return Err(Error::Provenance("snapshot length differs from basis length".into()));
        }
        let u = &basis.u;
        let n = basis.n;
        let mut roles = Vec::new();
        for exp in expansions {
            let (matrices, vectors) = if exp.role.is_vector() {
                (Vec::new(), project_vector_role(exp, u))
            } else {
                (project_matrix_role(exp, layout, u), Vec::new())
            };
            roles.push(OnlineRole {
                role: exp.role,
                interp_matrix: exp.interp_matrix.clone(),
                stencils: exp.stencils.clone(),
                matrices,
                vectors,
            });
        }
        let support: BTreeSet<usize> = expansions.iter().flat_map(|e| e.element_support()).collect();
        let support: Vec<usize> = support.into_iter().collect();
        let nm = layout.n_modes;
        let mut element_basis = Vec::with_capacity(support.len());
        let mut element_lift = Vec::with_capacity(support.len());
        for &e in &support {
            let mut m = DMatrix::zeros(2 * nm, n);
            for comp in 0..2 {
                for l in 0..nm {
                    if let Some(g) = layout.velocity_index(e, comp, l) {
                        m.row_mut(comp * nm + l).copy_from(&u.row(g));
                    }
                }
            }
            element_basis.push(m);
            element_lift.push(layout.element_dirichlet(e));
        }
        let mut probe = DVector::zeros(n);
        for &(g, w) in &problem.probe.weights {
            probe += u.row(g).transpose() * w;
        }
        let mut training_coords = DMatrix::zeros(snapshots.len(), n);
        for (i, s) in snapshots.states.iter().enumerate() {
            let x = DVector::from_column_slice(&s.coefficients);
            training_coords.row_mut(i).copy_from(&(u.transpose() * x).transpose());
        }
        let range = |v: Vec<f64>| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        };
        Ok(Self {
            setup: setup.clone(),
            fingerprint: layout.fingerprint(),
            config_hash: config_hash.to_string(),
            nu_range: range(snapshots.params.iter().map(|p| p.nu).collect()),
            c_range: range(snapshots.params.iter().map(|p| p.curvature).collect()),
            roles,
            support,
            element_basis,
            element_lift,
            probe,
            probe_constant: problem.probe.constant,
            training_params: snapshots.params.clone(),
            training_coords,
        })
    }

    /// Full basis size.
    pub fn n(&self) -> usize {
        self.probe.len()
    }

    pub fn role(&self, role: Role) -> Option<&OnlineRole> {
        self.roles.iter().find(|r| r.role == role)
    }

    /// Number of stored floating-point values used online.
    pub fn online_footprint(&self) -> usize {
        let roles: usize = self
            .roles
            .iter()
            .map(|r| {
                r.interp_matrix.len()
                    + r.matrices.iter().map(|m| m.len()).sum::<usize>()
                    + r.vectors.iter().map(|v| v.len()).sum::<usize>()
            })
            .sum();
        roles
            + self.element_basis.iter().map(|m| m.len()).sum::<usize>()
            + self.element_lift.iter().map(|v| v.len()).sum::<usize>()
            + self.probe.len()
            + self.training_coords.len()
    }

    /// Index of the training point nearest to `mu` in the normalized box.
    pub fn nearest_training(&self, mu: ParameterPoint) -> usize {
        let scale = |v: f64, (lo, hi): (f64, f64)| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
        let mut best = (0, f64::INFINITY);
        for (i, p) in self.training_params.iter().enumerate() {
            let dn = scale(mu.nu, self.nu_range) - scale(p.nu, self.nu_range);
            let dc = scale(mu.curvature, self.c_range) - scale(p.curvature, self.c_range);
            let d = dn * dn + dc * dc;
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    /// Reduced Oseen iteration at `mu` with the leading `n_modes` basis
    /// vectors (all when `None`).
    pub fn online_solve(&self, mu: ParameterPoint, config: &OseenConfig, n_modes: Option<usize>) -> Result<RomSolveResult> {
        let start = Instant::now();
        mu.validate(&self.setup.channel)?;
        let n = n_modes.unwrap_or(self.n()).clamp(1, self.n());
        let reference = ReferenceElement::new(self.setup.order);
        let mesh = self.setup.mesh(mu.curvature)?;
        let lift_of = |e: usize| {
            let k = self.support.binary_search(&e).expect("support element");
            self.element_lift[k].clone()
        };
        let mut ev = EntryEvaluator::new(&reference, &mesh, self.support.iter().copied(), &lift_of)?;

        let mut x = self.training_coords.row(self.nearest_training(mu)).transpose().rows(0, n).into_owned();
        let basis: Vec<DMatrix<f64>> = self.element_basis.iter().map(|m| m.columns(0, n).into_owned()).collect();
        let lead = |m: &DMatrix<f64>| m.view((0, 0), (n, n)).into_owned();

        // the pressure couplings depend on geometry only
        let mut fixed = DMatrix::zeros(n, n);
        for r in self.roles.iter().filter(|r| matches!(r.role, Role::DBnd | Role::DInt)) {
            let tau = coefficients(&r.interp_matrix, &mut |k| Ok(ev.entry(mu.nu, &r.stencils[k])))?;
            for (t, m) in tau.iter().zip(&r.matrices) {
                fixed += lead(m) * *t;
            }
        }

        let mut history = Vec::new();
        let mut timings = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        for k in 1..=config.max_iter {
            let t0 = Instant::now();
            for (i, &e) in self.support.iter().enumerate() {
                let mut coef = &basis[i] * &x;
                for (c, l) in coef.iter_mut().zip(&self.element_lift[i]) {
                    *c += l;
                }
                ev.set_velocity(e, coef.as_slice());
            }
            let mut a = fixed.clone();
            let mut f = DVector::zeros(n);
            for r in &self.roles {
                match r.role {
                    Role::DBnd | Role::DInt => {}
                    Role::Rhs => {
                        let tau = coefficients(&r.interp_matrix, &mut |j| Ok(ev.rhs_entry(mu.nu, &r.stencils[j])))?;
                        for (t, v) in tau.iter().zip(&r.vectors) {
                            f += v.rows(0, n) * *t;
                        }
                    }
                    _ => {
                        let tau = coefficients(&r.interp_matrix, &mut |j| Ok(ev.entry(mu.nu, &r.stencils[j])))?;
                        for (t, m) in tau.iter().zip(&r.matrices) {
                            a += m.view((0, 0), (n, n)) * *t;
                        }
                    }
                }
            }
            let next = a
                .lu()
                .solve(&f)
                .filter(|v| v.iter().all(|x| x.is_finite()))
                .ok_or_else(|| Error::Solver { nu: mu.nu, iteration: k, reason: "singular reduced system".into() })?;
            let diff = (&next - &x).norm();
            let size = next.norm();
            let rel = if size > 0.0 { diff / size } else { diff };
            x = next;
            history.push(rel);
            timings.push(t0.elapsed().as_secs_f64());
            iterations = k;
            if rel <= config.rel_tol {
                converged = true;
                break;
            }
        }
        if !converged {
            warn!(
                "reduced solve at nu = {}, c = {} did not converge (last difference {:.3e})",
                mu.nu,
                mu.curvature,
                history.last().copied().unwrap_or(f64::NAN)
            );
        }
        let observable = self.probe.rows(0, n).dot(&x) + self.probe_constant;
        debug!("reduced solve nu = {} c = {}: v = {observable:+.6}, {iterations} iterations", mu.nu, mu.curvature);
        Ok(RomSolveResult {
            x_n: x,
            observable,
            converged,
            iterations,
            residual_history: history,
            iteration_seconds: timings,
            total_seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// One row of a reduced bifurcation table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RomRow {
    pub nu: f64,
    pub curvature: f64,
    pub v_obs: f64,
    pub converged: bool,
    pub iterations: usize,
    pub online_ms: f64,
}

/// Reduced solves over a grid. Failures are logged and recorded as
/// non-converged rows with a NaN observable.
pub fn rom_sweep(artifacts: &RomArtifacts, grid: &ParameterGrid, config: &OseenConfig, n_modes: Option<usize>) -> Vec<RomRow> {
    grid.points()
        .into_iter()
        .map(|p| match artifacts.online_solve(p, config, n_modes) {
            Ok(r) => RomRow {
                nu: p.nu,
                curvature: p.curvature,
                v_obs: r.observable,
                converged: r.converged,
                iterations: r.iterations,
                online_ms: r.total_seconds * 1e3,
            },
            Err(e) => {
                warn!("reduced solve at nu = {}, c = {} failed: {e}", p.nu, p.curvature);
                RomRow { nu: p.nu, curvature: p.curvature, v_obs: f64::NAN, converged: false, iterations: 0, online_ms: 0.0 }
            }
        })
        .collect()
}

/// Galerkin projection with the exact operator at every iterate: the full
/// system is assembled and projected with `U`. Used to separate projection
/// error from interpolation error.
pub fn galerkin_solve(
    disc: &Discretization,
    u: &DMatrix<f64>,
    nu: f64,
    x0: DVector<f64>,
    config: &OseenConfig,
) -> Result<(DVector<f64>, bool, usize)> {
    let st = &disc.structure;
    let mut x = x0;
    for k in 1..=config.max_iter {
        let full = u * &x;
        let blocks = disc.assemble_blocks(nu, Some(full.as_slice()), &Default::default());
        let sys = disc.gather_globalize(&blocks);
        // K U column by column
        let mut ku = DMatrix::zeros(st.n, u.ncols());
        for j in 0..u.ncols() {
            let col = sys.matvec(st, u.column(j).as_slice());
            ku.column_mut(j).copy_from_slice(&col);
        }
        let a = u.transpose() * ku;
        let f = u.transpose() * DVector::from_column_slice(&sys.rhs);
        let next = a
            .lu()
            .solve(&f)
            .ok_or_else(|| Error::Solver { nu, iteration: k, reason: "singular projected system".into() })?;
        let rel = (&next - &x).norm() / next.norm().max(f64::MIN_POSITIVE);
        x = next;
        if rel <= config.rel_tol {
            return Ok((x, true, k));
        }
    }
    Ok((x, false, config.max_iter))
}
