//! Steady Navier-Stokes states by Oseen fixed-point iteration with
//! viscosity continuation and deterministic branch selection.

use std::sync::Arc;
use std::time::Instant;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{generate_mesh, ChannelSpec, Mesh, ParameterPoint, Point, Refinement};
use crate::sem::field::{velocity_l2_distance, velocity_l2_norm};
use crate::sem::{Discretization, Forcing, PointFunctional};

pub use crate::sem::FlowState;

/// Point where the vertical velocity is monitored.
pub const OBSERVATION_POINT: Point = Point::new(2.0, 1.5);

/// Characteristic scales for reporting Reynolds numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReynoldsConvention {
    /// Peak inflow speed, the maximum of `y (3 - y)`.
    pub u_char: f64,
    /// Orifice height.
    pub l_char: f64,
}

impl Default for ReynoldsConvention {
    fn default() -> Self {
        Self { u_char: 2.25, l_char: 1.0 }
    }
}

impl ReynoldsConvention {
    pub fn re(&self, nu: f64) -> f64 {
        self.u_char * self.l_char / nu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConvergenceNorm {
    L2,
    H1Seminorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OseenConfig {
    /// Relative difference between successive iterates that ends the final stage.
    pub rel_tol: f64,
    /// Looser tolerance for intermediate continuation stages.
    pub stage_tol: f64,
    pub max_iter: usize,
    pub norm: ConvergenceNorm,
    /// Amplitude of the branch-selecting body force; zero disables it.
    pub perturb_force: f64,
    /// Sign of the vertical force: `-1` pushes the jet towards the bottom wall.
    pub perturb_direction: f64,
    /// Number of leading iterations of a stage that carry the force.
    pub perturb_iterations: usize,
    /// A stage whose starting observable is below this magnitude counts as
    /// symmetric and receives the force.
    pub symmetry_tol: f64,
    /// First viscosity of the continuation ladder.
    pub continuation_start: f64,
    pub continuation_step: f64,
}

impl Default for OseenConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            stage_tol: 1e-4,
            max_iter: 100,
            norm: ConvergenceNorm::L2,
            perturb_force: 0.1,
            perturb_direction: -1.0,
            perturb_iterations: 5,
            symmetry_tol: 1e-4,
            continuation_start: 0.2,
            continuation_step: 0.005,
        }
    }
}

impl OseenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.stage_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.perturb_iterations >= self.max_iter {
            return Err(Error::Config("perturbation iterations must be fewer than max_iter".into()));
        }
        if !(self.continuation_step > 0.0) {
            return Err(Error::Config("continuation step must be positive".into()));
        }
        Ok(())
    }

    pub fn without_perturbation(mut self) -> Self {
        self.perturb_force = 0.0;
        self
    }

    /// Viscosities visited on the way to `target`, ending with `target`.
    pub fn ladder(&self, target: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0;
        loop {
            let nu = self.continuation_start - k as f64 * self.continuation_step;
            if nu <= target + 1e-12 {
                break;
            }
            out.push(nu);
            k += 1;
        }
        out.push(target);
        out
    }
}

/// Vertical body-force profile used for branch selection: `sin^2` bump on
/// `x in [1, 5]`, spanning the jet region just downstream of the orifice.
pub fn perturbation_profile(x: f64) -> f64 {
    if (1.0..=5.0).contains(&x) {
        let s = (std::f64::consts::PI * (x - 1.0) / 4.0).sin();
        s * s
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyResult {
    pub state: FlowState,
    pub converged: bool,
    /// Oseen iterations of the final stage.
    pub iterations: usize,
    /// Iterations over all continuation stages.
    pub total_iterations: usize,
    /// Relative differences of the final stage, one per iteration.
    pub residual_history: Vec<f64>,
    /// Wall time per Oseen iteration (seconds), all stages.
    pub iteration_seconds: Vec<f64>,
}

/// Discretization at one curvature together with the observation functional.
pub struct FlowProblem {
    pub disc: Discretization,
    pub probe: PointFunctional,
}

impl std::fmt::Debug for FlowProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlowProblem").field("disc", &self.disc).finish()
    }
}

impl FlowProblem {
    pub fn new(disc: Discretization) -> Result<Self> {
        let probe = PointFunctional::new(&disc, OBSERVATION_POINT, 1)?;
        Ok(Self { disc, probe })
    }

    pub fn from_mesh(mesh: Mesh) -> Result<Self> {
        Self::new(Discretization::new(mesh)?)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.disc.mesh
    }

    /// Vertical velocity at the observation point.
    pub fn observable(&self, state: &FlowState) -> f64 {
        self.probe.apply(&state.coefficients)
    }

    fn norm_of(&self, config: &OseenConfig, a: &[f64], b: Option<&[f64]>) -> f64 {
        match config.norm {
            ConvergenceNorm::L2 => match b {
                Some(b) => velocity_l2_distance(&self.disc, a, b),
                None => velocity_l2_norm(&self.disc, a, true),
            },
            ConvergenceNorm::H1Seminorm => {
                let d: Vec<f64> = match b {
                    Some(b) => a.iter().zip(b).map(|(x, y)| x - y).collect(),
                    None => a.to_vec(),
                };
                h1_seminorm(&self.disc, &d, b.is_none())
            }
        }
    }

    /// One linearized solve: advection frozen at `u_k` (Stokes when `None`).
    pub fn oseen_step(
        &self,
        nu: f64,
        u_k: Option<&FlowState>,
        force: Option<&dyn Fn(Point) -> [f64; 2]>,
        iteration: usize,
    ) -> Result<FlowState> {
        let forcing = Forcing { body: force, traction: None };
        let blocks = self.disc.assemble_blocks(nu, u_k.map(|s| s.coefficients.as_slice()), &forcing);
        let sys = self.disc.gather_globalize(&blocks);
        let x = self.disc.solve_checked(&sys, nu, iteration)?;
        Ok(FlowState::new(x))
    }

    /// Runs one continuation stage at fixed `nu` until the relative
    /// difference drops below `tol` or `max_iter` is reached.
    fn stage(
        &self,
        nu: f64,
        start: Option<FlowState>,
        tol: f64,
        config: &OseenConfig,
        timings: &mut Vec<f64>,
    ) -> Result<(FlowState, bool, usize, Vec<f64>)> {
        let started = start.is_some();
        let mut x = match start {
            Some(s) => s,
            None => {
                let t = Instant::now();
                let s = self.oseen_step(nu, None, None, 0)?;
                timings.push(t.elapsed().as_secs_f64());
                s
            }
        };
        let kick = config.perturb_force != 0.0 && self.observable(&x).abs() < config.symmetry_tol;
        let amp = config.perturb_force * config.perturb_direction;
        let force = move |p: Point| [0.0, amp * perturbation_profile(p.x)];
        // a given start gets one unforced step first, so a start that is
        // already a fixed point is accepted without being kicked off it
        let probe = kick && started;
        let (k_first, k0) = match (kick, probe) {
            (false, _) => (1, 0),
            (true, false) => (1, config.perturb_iterations),
            (true, true) => (2, config.perturb_iterations + 1),
        };
        if kick {
            debug!("nu = {nu}: symmetric start, applying branch-selection force for {} iterations", config.perturb_iterations);
        }
        let mut history = Vec::new();
        for k in 1..=config.max_iter {
            let t = Instant::now();
            let forced = kick && (k_first..=k0).contains(&k);
            let f: Option<&dyn Fn(Point) -> [f64; 2]> = if forced { Some(&force) } else { None };
            let next = self.oseen_step(nu, Some(&x), f, k)?;
            let diff = self.norm_of(config, &next.coefficients, Some(&x.coefficients));
            let size = self.norm_of(config, &next.coefficients, None);
            let rel = if size > 0.0 { diff / size } else { diff };
            timings.push(t.elapsed().as_secs_f64());
            history.push(rel);
            x = next;
            if !x.is_finite() {
                return Err(Error::Solver { nu, iteration: k, reason: "iterate is not finite".into() });
            }
            if ((probe && k == 1) || k > k0) && rel <= tol {
                return Ok((x, true, k, history));
            }
        }
        Ok((x, false, config.max_iter, history))
    }

    /// Steady state at viscosity `nu`. Without a warm start the viscosity is
    /// lowered along the continuation ladder starting from a Stokes solve.
    pub fn solve_steady(&self, nu: f64, config: &OseenConfig, warm_start: Option<&FlowState>) -> Result<SteadyResult> {
        config.validate()?;
        if !(nu > 0.0) {
            return Err(Error::ParameterDomain(format!("viscosity must be positive, got {nu}")));
        }
        let ladder = match warm_start {
            Some(_) => vec![nu],
            None => config.ladder(nu),
        };
        let mut state = warm_start.cloned();
        let mut timings = Vec::new();
        let mut total = 0;
        let last = ladder.len() - 1;
        for (i, &stage_nu) in ladder.iter().enumerate() {
            let tol = if i == last { config.rel_tol } else { config.stage_tol.max(config.rel_tol) };
            let (x, converged, iters, history) = self.stage(stage_nu, state.take(), tol, config, &mut timings)?;
            total += iters;
            if i == last {
                if !converged {
                    warn!("nu = {nu}: no convergence after {iters} iterations (last difference {:.3e})", history.last().copied().unwrap_or(f64::NAN));
                }
                return Ok(SteadyResult {
                    state: x,
                    converged,
                    iterations: iters,
                    total_iterations: total,
                    residual_history: history,
                    iteration_seconds: timings,
                });
            }
            if !converged {
                debug!("continuation stage nu = {stage_nu} stopped at max_iter");
            }
            state = Some(x);
        }
        unreachable!("ladder is never empty")
    }
}

/// `H^1` seminorm of the velocity of a free vector.
pub fn h1_seminorm(disc: &Discretization, x: &[f64], with_dirichlet: bool) -> f64 {
    let nm = disc.layout.n_modes;
    let mut total = 0.0;
    for e in 0..disc.mesh.elements.len() {
        let c = disc.local_velocity(e, x, with_dirichlet);
        for comp in 0..2 {
            let v = nalgebra::DVectorView::from_slice(&c[comp * nm..(comp + 1) * nm], nm);
            total += v.dot(&(&disc.laplacian[e] * v));
        }
    }
    total.max(0.0).sqrt()
}

/// Channel geometry and discretization order shared by all parameter points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSetup {
    pub channel: ChannelSpec,
    pub refinement: Refinement,
    pub order: usize,
}

impl Default for ModelSetup {
    fn default() -> Self {
        Self { channel: ChannelSpec::default(), refinement: Refinement::default(), order: 8 }
    }
}

impl ModelSetup {
    pub fn mesh(&self, curvature: f64) -> Result<Mesh> {
        generate_mesh(&self.channel, curvature, &self.refinement, self.order)
    }

    pub fn problem(&self, curvature: f64) -> Result<FlowProblem> {
        FlowProblem::from_mesh(self.mesh(curvature)?)
    }

    /// Solves at one parameter point from scratch.
    pub fn solve_steady(&self, params: ParameterPoint, config: &OseenConfig, warm_start: Option<&FlowState>) -> Result<(FlowProblem, SteadyResult)> {
        params.validate(&self.channel)?;
        let problem = self.problem(params.curvature)?;
        let result = problem.solve_steady(params.nu, config, warm_start)?;
        Ok((problem, result))
    }
}

/// Tensor grid of parameter points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterGrid {
    pub nu: Vec<f64>,
    pub curvature: Vec<f64>,
}

impl ParameterGrid {
    /// `n_nu x n_c` uniform grid over the box, endpoints included.
    pub fn uniform(nu_range: (f64, f64), n_nu: usize, c_range: (f64, f64), n_c: usize) -> Self {
        Self { nu: linspace(nu_range.0, nu_range.1, n_nu), curvature: linspace(c_range.0, c_range.1, n_c) }
    }

    pub fn len(&self) -> usize {
        self.nu.len() * self.curvature.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points in sweep order: curvature outer, viscosity descending inner.
    pub fn points(&self) -> Vec<ParameterPoint> {
        let mut nus = self.nu.clone();
        nus.sort_by(|a, b| b.total_cmp(a));
        self.curvature
            .iter()
            .flat_map(|&c| nus.iter().map(move |&nu| ParameterPoint { nu, curvature: c }))
            .collect()
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Full-order solutions over a parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSet {
    pub params: Vec<ParameterPoint>,
    pub states: Vec<FlowState>,
    pub observables: Vec<f64>,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
    /// Median wall time of one Oseen iteration over the sweep (seconds).
    pub median_iteration_seconds: f64,
}

impl SnapshotSet {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn converged_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.converged[i]).collect()
    }
}

/// Solves every grid point, warm-starting along descending viscosity at
/// each curvature. Non-converged points are recorded and the sweep goes on.
/// `on_point` sees each finished point (for progress logging or collection).
pub fn snapshot_sweep(
    setup: &ModelSetup,
    grid: &ParameterGrid,
    config: &OseenConfig,
    on_point: &mut dyn FnMut(&FlowProblem, ParameterPoint, &SteadyResult),
) -> Result<SnapshotSet> {
    if grid.is_empty() {
        return Err(Error::Degenerate("empty parameter grid".into()));
    }
    let mut set = SnapshotSet {
        params: Vec::new(),
        states: Vec::new(),
        observables: Vec::new(),
        converged: Vec::new(),
        iterations: Vec::new(),
        median_iteration_seconds: 0.0,
    };
    let mut timings = Vec::new();
    let points = grid.points();
    let mut current: Option<(f64, Arc<FlowProblem>)> = None;
    let mut warm: Option<FlowState> = None;
    for p in points {
        p.validate(&setup.channel)?;
        let problem = match &current {
            Some((c, pr)) if *c == p.curvature => pr.clone(),
            _ => {
                warm = None;
                let pr = Arc::new(setup.problem(p.curvature)?);
                current = Some((p.curvature, pr.clone()));
                pr
            }
        };
        let result = problem.solve_steady(p.nu, config, warm.as_ref())?;
        let obs = problem.observable(&result.state);
        info!(
            "nu = {:.5} c = {:.3}: v = {:+.6} converged = {} iterations = {}",
            p.nu, p.curvature, obs, result.converged, result.iterations
        );
        on_point(&problem, p, &result);
        timings.extend_from_slice(&result.iteration_seconds);
        warm = Some(result.state.clone());
        set.params.push(p);
        set.observables.push(obs);
        set.converged.push(result.converged);
        set.iterations.push(result.iterations);
        set.states.push(result.state);
    }
    set.median_iteration_seconds = median(&mut timings);
    Ok(set)
}

pub fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
