//! Offline and online workflows on top of the artifact store.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::ParameterPoint;
use crate::mdeim::{self, AffineExpansion, MatrixSnapshotSet, Role, RolePattern};
use crate::plot::{line_plot, Series};
use crate::pod::{pod, pod_decay_report, snapshot_matrix, DecayRow, ReducedBasis};
use crate::rom::{rom_sweep, OnlineRole, RomArtifacts, RomRow};
use crate::sem::entry::EntryStencil;
use crate::sem::{FlowState, Forcing, ReferenceElement};
use crate::steady::{median, snapshot_sweep, ModelSetup, OseenConfig, ParameterGrid, SnapshotSet};
use crate::store::{Array, ArtifactStore, Meta, StageStatus};

pub const STAGES: [&str; 4] = ["snapshots", "basis", "mdeim", "rom"];

pub const BIFURCATION_HEADER: &str = "nu,curvature,v_obs,converged,iterations,online_ms";
pub const ERROR_HEADER: &str = "nu,curvature,v_fom,v_rom,abs_err";
pub const DECAY_HEADER: &str = "mode,sigma,cumulative_energy";
pub const MDEIM_HEADER: &str = "role,Q,condition_number,energy_captured";
pub const TIMING_HEADER: &str = "quantity,value";

/// Everything that determines the offline artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub nu_range: (f64, f64),
    pub curvature_range: (f64, f64),
    /// Snapshot grid resolution in viscosity and curvature.
    pub grid: (usize, usize),
    pub setup: ModelSetup,
    pub pod_energy: f64,
    pub mdeim_energy: f64,
    pub oseen: OseenConfig,
    /// Store directory. Not part of the configuration hash.
    pub output_dir: PathBuf,
    /// Every stage is deterministic; kept in the file for the record.
    pub rng_free: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            nu_range: (0.15, 0.2),
            curvature_range: (0.0, 0.4),
            grid: (8, 9),
            setup: ModelSetup::default(),
            pod_energy: 0.9999,
            mdeim_energy: 0.9999,
            oseen: OseenConfig::default(),
            output_dir: PathBuf::from("semrom-store"),
            rng_free: true,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.nu_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!("viscosity range ({lo}, {hi}) must satisfy 0 < lo <= hi")));
        }
        let (c0, c1) = self.curvature_range;
        for c in [c0, c1] {
            ParameterPoint { nu: lo, curvature: c }.validate(&self.setup.channel)?;
        }
        if c0 > c1 {
            return Err(Error::Config(format!("curvature range ({c0}, {c1}) is reversed")));
        }
        if self.grid.0 == 0 || self.grid.1 == 0 {
            return Err(Error::Config("snapshot grid needs at least one point per axis".into()));
        }
        if self.setup.order < 2 {
            return Err(Error::Config("polynomial order must be at least 2".into()));
        }
        for (name, e) in [("pod_energy", self.pod_energy), ("mdeim_energy", self.mdeim_energy)] {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::Config(format!("{name} = {e} outside (0, 1]")));
            }
        }
        if !self.rng_free {
            return Err(Error::Config("rng_free must be true: no stage uses randomness".into()));
        }
        self.setup.channel.validate()?;
        self.oseen.validate()
    }

    pub fn snapshot_grid(&self) -> ParameterGrid {
        ParameterGrid::uniform(self.nu_range, self.grid.0, self.curvature_range, self.grid.1)
    }

    /// Configuration as JSON without the output location.
    pub fn hashed_value(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("output_dir");
        }
        v
    }

    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(&self.hashed_value()).expect("json").as_bytes())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Keys whose values differ between two JSON documents.
pub fn json_diff(a: &serde_json::Value, b: &serde_json::Value) -> Vec<String> {
    fn walk(prefix: &str, a: &serde_json::Value, b: &serde_json::Value, out: &mut Vec<String>) {
        use serde_json::Value::Object;
        match (a, b) {
            (Object(x), Object(y)) => {
                let keys: std::collections::BTreeSet<&String> = x.keys().chain(y.keys()).collect();
                for k in keys {
                    let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    match (x.get(k), y.get(k)) {
                        (Some(u), Some(v)) => walk(&p, u, v, out),
                        (u, v) => out.push(format!("{p}: {} -> {}", show(u), show(v))),
                    }
                }
            }
            _ if a != b => out.push(format!("{prefix}: {a} -> {b}")),
            _ => {}
        }
    }
    fn show(v: Option<&serde_json::Value>) -> String {
        v.map_or("(absent)".into(), |v| v.to_string())
    }
    let mut out = Vec::new();
    walk("", a, b, &mut out);
    out
}

/// Identifies the discretization at one curvature: topology plus geometry.
pub fn mesh_fingerprint(setup: &ModelSetup, curvature: f64) -> Result<String> {
    let mesh = setup.mesh(curvature)?;
    let reference = ReferenceElement::new(setup.order);
    let layout = crate::sem::DofLayout::new(&mesh, &reference);
    let digest = sha256_hex(mesh.to_text().as_bytes());
    Ok(format!("{}-{}", layout.fingerprint(), &digest[..16]))
}

fn curvature_key(c: f64) -> String {
    format!("{c}")
}

// ---------------------------------------------------------------------------
// persistence of the stage outputs

pub fn save_snapshots(store: &ArtifactStore, set: &SnapshotSet) -> Result<()> {
    let n = set.len();
    let dim = set.states.first().map_or(0, |s| s.len());
    let params: Vec<f64> = set.params.iter().flat_map(|p| [p.nu, p.curvature]).collect();
    store.write_array("snapshots/params.bin", &Array::new(vec![n, 2], params)?)?;
    let states: Vec<f64> = set.states.iter().flat_map(|s| s.coefficients.iter().copied()).collect();
    store.write_array("snapshots/states.bin", &Array::new(vec![n, dim], states)?)?;
    store.write_array("snapshots/observables.bin", &Array::vector(&set.observables))?;
    let conv: Vec<f64> = set.converged.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
    store.write_array("snapshots/converged.bin", &Array::vector(&conv))?;
    let its: Vec<f64> = set.iterations.iter().map(|&k| k as f64).collect();
    store.write_array("snapshots/iterations.bin", &Array::vector(&its))?;
    store.write_array("snapshots/median_iteration_seconds.bin", &Array::vector(&[set.median_iteration_seconds]))
}

pub fn load_snapshots(store: &ArtifactStore) -> Result<SnapshotSet> {
    let params = store.read_array("snapshots/params.bin")?;
    let states = store.read_array("snapshots/states.bin")?;
    let n = params.shape[0];
    let dim = states.shape.get(1).copied().unwrap_or(0);
    if states.shape[0] != n {
        return Err(Error::Store("snapshot states and parameters differ in count".into()));
    }
    let vec = |name: &str| -> Result<Vec<f64>> {
        let a = store.read_array(&format!("snapshots/{name}.bin"))?;
        if a.data.len() != n {
            return Err(Error::Store(format!("snapshots/{name}.bin has {} entries, expected {n}", a.data.len())));
        }
        Ok(a.data)
    };
    let median_s = store.read_array("snapshots/median_iteration_seconds.bin")?;
    Ok(SnapshotSet {
        params: (0..n).map(|i| ParameterPoint { nu: params.data[2 * i], curvature: params.data[2 * i + 1] }).collect(),
        states: (0..n).map(|i| FlowState::new(states.data[i * dim..(i + 1) * dim].to_vec())).collect(),
        observables: vec("observables")?,
        converged: vec("converged")?.into_iter().map(|v| v != 0.0).collect(),
        iterations: vec("iterations")?.into_iter().map(|v| v as usize).collect(),
        median_iteration_seconds: median_s.data.first().copied().unwrap_or(f64::NAN),
    })
}

/// The converged part of a snapshot set.
pub fn converged_subset(set: &SnapshotSet) -> SnapshotSet {
    let idx = set.converged_indices();
    SnapshotSet {
        params: idx.iter().map(|&i| set.params[i]).collect(),
        states: idx.iter().map(|&i| set.states[i].clone()).collect(),
        observables: idx.iter().map(|&i| set.observables[i]).collect(),
        converged: vec![true; idx.len()],
        iterations: idx.iter().map(|&i| set.iterations[i]).collect(),
        median_iteration_seconds: set.median_iteration_seconds,
    }
}

#[derive(Serialize, Deserialize)]
struct BasisInfo {
    n: usize,
    energy_fraction: f64,
}

pub fn save_basis(store: &ArtifactStore, basis: &ReducedBasis) -> Result<()> {
    store.write_array("basis/u.bin", &Array::from_matrix(&basis.u))?;
    store.write_array("basis/singular_values.bin", &Array::vector(&basis.singular_values))?;
    store.write_json("basis/info.json", &BasisInfo { n: basis.n, energy_fraction: basis.energy_fraction })
}

pub fn load_basis(store: &ArtifactStore) -> Result<ReducedBasis> {
    let info: BasisInfo = store.read_json("basis/info.json")?;
    let u = store.read_array("basis/u.bin")?.to_matrix()?;
    if u.ncols() != info.n {
        return Err(Error::Store(format!("basis has {} columns, info says {}", u.ncols(), info.n)));
    }
    Ok(ReducedBasis {
        u,
        singular_values: store.read_array("basis/singular_values.bin")?.data,
        n: info.n,
        energy_fraction: info.energy_fraction,
    })
}

#[derive(Serialize, Deserialize)]
struct ExpansionInfo {
    role: Role,
    q: usize,
    condition_number: f64,
    energy_captured: f64,
    interp_positions: Vec<usize>,
    interp_entries: Vec<(usize, usize)>,
    stencils: Vec<EntryStencil>,
}

fn pattern_array(pattern: &[(usize, usize)]) -> Result<Array> {
    Array::new(vec![pattern.len(), 2], pattern.iter().flat_map(|&(r, c)| [r as f64, c as f64]).collect())
}

pub fn save_expansion(store: &ArtifactStore, exp: &AffineExpansion) -> Result<()> {
    let dir = format!("mdeim/{}", exp.role.name());
    store.write_array(&format!("{dir}/basis_vectors.bin"), &Array::from_matrix(&exp.basis_vectors))?;
    store.write_array(&format!("{dir}/pattern.bin"), &pattern_array(&exp.pattern)?)?;
    store.write_array(&format!("{dir}/interp_matrix.bin"), &Array::from_matrix(&exp.interp_matrix))?;
    store.write_array(&format!("{dir}/singular_values.bin"), &Array::vector(&exp.singular_values))?;
    store.write_json(
        &format!("{dir}/info.json"),
        &ExpansionInfo {
            role: exp.role,
            q: exp.q,
            condition_number: exp.condition_number,
            energy_captured: exp.energy_captured,
            interp_positions: exp.interp_positions.clone(),
            interp_entries: exp.interp_entries.clone(),
            stencils: exp.stencils.clone(),
        },
    )
}

pub fn load_expansion(store: &ArtifactStore, role: Role) -> Result<AffineExpansion> {
    let dir = format!("mdeim/{}", role.name());
    let info: ExpansionInfo = store.read_json(&format!("{dir}/info.json"))?;
    let pattern = store.read_array(&format!("{dir}/pattern.bin"))?;
    Ok(AffineExpansion {
        role: info.role,
        q: info.q,
        basis_vectors: store.read_array(&format!("{dir}/basis_vectors.bin"))?.to_matrix()?,
        pattern: pattern.data.chunks_exact(2).map(|p| (p[0] as usize, p[1] as usize)).collect(),
        interp_positions: info.interp_positions,
        interp_entries: info.interp_entries,
        interp_matrix: store.read_array(&format!("{dir}/interp_matrix.bin"))?.to_matrix()?,
        condition_number: info.condition_number,
        singular_values: store.read_array(&format!("{dir}/singular_values.bin"))?.data,
        energy_captured: info.energy_captured,
        stencils: info.stencils,
    })
}

#[derive(Serialize, Deserialize)]
struct RomInfo {
    setup: ModelSetup,
    fingerprint: String,
    config_hash: String,
    nu_range: (f64, f64),
    c_range: (f64, f64),
    support: Vec<usize>,
    probe_constant: f64,
    training_params: Vec<ParameterPoint>,
    roles: Vec<Role>,
}

pub fn save_rom(store: &ArtifactStore, rom: &RomArtifacts) -> Result<()> {
    let n = rom.n();
    for r in &rom.roles {
        let dir = format!("rom/{}", r.role.name());
        store.write_array(&format!("{dir}/interp_matrix.bin"), &Array::from_matrix(&r.interp_matrix))?;
        if r.role.is_vector() {
            store.write_array(&format!("{dir}/vectors.bin"), &Array::from_vectors(&r.vectors, n))?;
        } else {
            store.write_array(&format!("{dir}/matrices.bin"), &Array::from_matrices(&r.matrices, n, n))?;
        }
        store.write_json(&format!("{dir}/stencils.json"), &r.stencils)?;
    }
    let rows = rom.element_basis.first().map_or(0, |m| m.nrows());
    store.write_array("rom/element_basis.bin", &Array::from_matrices(&rom.element_basis, rows, n))?;
    let lifts: Vec<DVector<f64>> = rom.element_lift.iter().map(|v| DVector::from_column_slice(v)).collect();
    store.write_array("rom/element_lift.bin", &Array::from_vectors(&lifts, rows))?;
    store.write_array("rom/probe.bin", &Array::vector(rom.probe.as_slice()))?;
    store.write_array("rom/training_coords.bin", &Array::from_matrix(&rom.training_coords))?;
    store.write_json(
        "rom/info.json",
        &RomInfo {
            setup: rom.setup.clone(),
            fingerprint: rom.fingerprint.clone(),
            config_hash: rom.config_hash.clone(),
            nu_range: rom.nu_range,
            c_range: rom.c_range,
            support: rom.support.clone(),
            probe_constant: rom.probe_constant,
            training_params: rom.training_params.clone(),
            roles: rom.roles.iter().map(|r| r.role).collect(),
        },
    )
}

pub fn load_rom(store: &ArtifactStore) -> Result<RomArtifacts> {
    let info: RomInfo = store.read_json("rom/info.json")?;
    let mut roles = Vec::new();
    for role in info.roles {
        let dir = format!("rom/{}", role.name());
        let (matrices, vectors) = if role.is_vector() {
            (Vec::new(), store.read_array(&format!("{dir}/vectors.bin"))?.to_vectors()?)
        } else {
            (store.read_array(&format!("{dir}/matrices.bin"))?.to_matrices()?, Vec::new())
        };
        roles.push(OnlineRole {
            role,
            interp_matrix: store.read_array(&format!("{dir}/interp_matrix.bin"))?.to_matrix()?,
            stencils: store.read_json(&format!("{dir}/stencils.json"))?,
            matrices,
            vectors,
        });
    }
    let lifts = store.read_array("rom/element_lift.bin")?.to_vectors()?;
    let rom = RomArtifacts {
        setup: info.setup,
        fingerprint: info.fingerprint,
        config_hash: info.config_hash,
        nu_range: info.nu_range,
        c_range: info.c_range,
        roles,
        support: info.support,
        element_basis: store.read_array("rom/element_basis.bin")?.to_matrices()?,
        element_lift: lifts.into_iter().map(|v| v.as_slice().to_vec()).collect(),
        probe: DVector::from_vec(store.read_array("rom/probe.bin")?.data),
        probe_constant: info.probe_constant,
        training_params: info.training_params,
        training_coords: store.read_array("rom/training_coords.bin")?.to_matrix()?,
    };
    let n = rom.n();
    let consistent = rom.element_basis.len() == rom.support.len()
        && rom.element_lift.len() == rom.support.len()
        && rom.element_basis.iter().all(|m| m.ncols() == n)
        && rom.training_coords.ncols() == n
        && rom.training_coords.nrows() == rom.training_params.len()
        && rom.roles.iter().all(|r| {
            let q = r.q();
            r.stencils.len() == q
                && if r.role.is_vector() {
                    r.vectors.len() == q && r.vectors.iter().all(|v| v.len() == n)
                } else {
                    r.matrices.len() == q && r.matrices.iter().all(|m| m.shape() == (n, n))
                }
        });
    if !consistent {
        return Err(Error::Store("reduced model arrays have inconsistent dimensions".into()));
    }
    Ok(rom)
}

/// Matrices of one role at every converged snapshot, rebuilt from the
/// stored states.
pub fn collect_role(setup: &ModelSetup, snapshots: &SnapshotSet, role: Role) -> Result<MatrixSnapshotSet> {
    let mut set: Option<MatrixSnapshotSet> = None;
    let mut pattern: Option<RolePattern> = None;
    let mut current: Option<(f64, crate::steady::FlowProblem)> = None;
    for i in snapshots.converged_indices() {
        let p = snapshots.params[i];
        if current.as_ref().map(|(c, _)| *c) != Some(p.curvature) {
            current = Some((p.curvature, setup.problem(p.curvature)?));
        }
        let disc = &current.as_ref().expect("problem").1.disc;
        let pat = pattern.get_or_insert_with(|| RolePattern::new(role, &disc.layout, &disc.structure));
        let s = set.get_or_insert_with(|| MatrixSnapshotSet::new(role, pat.entries.clone()));
        let blocks = disc.assemble_blocks(p.nu, Some(&snapshots.states[i].coefficients), &Forcing::default());
        let sys = disc.gather_globalize(&blocks);
        s.push(pat.extract(&sys))?;
    }
    set.ok_or_else(|| Error::Degenerate("no converged snapshots to collect matrices from".into()))
}

// ---------------------------------------------------------------------------
// offline

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineSummary {
    pub store: PathBuf,
    pub snapshots: usize,
    pub converged: usize,
    pub n: usize,
    pub q: Vec<(Role, usize)>,
    /// Stages computed in this run (empty when everything was reused).
    pub computed: Vec<String>,
}

fn fresh_meta(config: &RunConfig) -> Meta {
    Meta {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.hash(),
        config: config.hashed_value(),
        fingerprints: BTreeMap::new(),
        stages: BTreeMap::new(),
    }
}

/// Checks a store against `config`; refuses with the list of differing keys.
pub fn check_provenance(meta: &Meta, config: &RunConfig) -> Result<()> {
    let hash = config.hash();
    if meta.config_hash != hash {
        let diff = json_diff(&meta.config, &config.hashed_value());
        return Err(Error::Provenance(format!(
            "store was built with a different configuration (hash {} vs {hash}); differing keys: {}",
            meta.config_hash,
            if diff.is_empty() { "(none found in stored copy)".to_string() } else { diff.join("; ") }
        )));
    }
    Ok(())
}

fn run_stage<T>(
    store: &ArtifactStore,
    meta: &mut Meta,
    name: &str,
    computed: &mut Vec<String>,
    load: impl FnOnce() -> Result<T>,
    compute: impl FnOnce() -> Result<T>,
) -> Result<T> {
    if meta.stages.get(name) == Some(&StageStatus::Complete) {
        info!("stage {name}: reusing stored result");
        return load();
    }
    info!("stage {name}: computing");
    match compute() {
        Ok(v) => {
            meta.stages.insert(name.to_string(), StageStatus::Complete);
            store.write_meta(meta)?;
            computed.push(name.to_string());
            Ok(v)
        }
        Err(e) => {
            meta.stages.insert(name.to_string(), StageStatus::Failed { message: e.to_string() });
            store.write_meta(meta)?;
            Err(e)
        }
    }
}

/// Runs the offline stages that the store does not already hold.
pub fn cmd_offline(config: &RunConfig) -> Result<OfflineSummary> {
    config.validate()?;
    let store = ArtifactStore::new(&config.output_dir);
    let mut meta = match store.read_meta()? {
        Some(m) => {
            check_provenance(&m, config)?;
            m
        }
        None => fresh_meta(config),
    };
    let grid = config.snapshot_grid();
    for &c in &grid.curvature {
        let fp = mesh_fingerprint(&config.setup, c)?;
        match meta.fingerprints.get(&curvature_key(c)) {
            Some(old) if *old != fp => {
                return Err(Error::Provenance(format!("mesh at curvature {c} changed: stored {old}, current {fp}")));
            }
            _ => {
                meta.fingerprints.insert(curvature_key(c), fp);
            }
        }
    }
    store.write_meta(&meta)?;
    let mut computed = Vec::new();

    let snapshots = run_stage(&store, &mut meta, "snapshots", &mut computed, || load_snapshots(&store), || {
        let set = snapshot_sweep(&config.setup, &grid, &config.oseen, &mut |_, _, _| {})?;
        save_snapshots(&store, &set)?;
        Ok(set)
    })?;
    let training = converged_subset(&snapshots);
    if training.is_empty() {
        return Err(Error::Degenerate("no snapshot converged".into()));
    }

    let basis = run_stage(&store, &mut meta, "basis", &mut computed, || load_basis(&store), || {
        let cols: Vec<&[f64]> = training.states.iter().map(|s| s.coefficients.as_slice()).collect();
        let basis = pod(&snapshot_matrix(&cols)?, config.pod_energy)?;
        info!("POD keeps N = {} of {} modes", basis.n, basis.singular_values.len());
        save_basis(&store, &basis)?;
        Ok(basis)
    })?;

    let expansions = run_stage(
        &store,
        &mut meta,
        "mdeim",
        &mut computed,
        || Role::ALL.iter().map(|&r| load_expansion(&store, r)).collect::<Result<Vec<_>>>(),
        || {
            let reference = ReferenceElement::new(config.setup.order);
            let mesh = config.setup.mesh(training.params[0].curvature)?;
            let layout = crate::sem::DofLayout::new(&mesh, &reference);
            let mut out = Vec::new();
            for role in Role::ALL {
                let set = collect_role(&config.setup, &training, role)?;
                let exp = mdeim::build(&set, config.mdeim_energy, &layout)?;
                drop(set);
                save_expansion(&store, &exp)?;
                out.push(exp);
            }
            store.write_text("mdeim/diagnostic.csv", &mdeim_csv(&out))?;
            Ok(out)
        },
    )?;

    let hash = meta.config_hash.clone();
    let rom = run_stage(&store, &mut meta, "rom", &mut computed, || load_rom(&store), || {
        let problem = config.setup.problem(training.params[0].curvature)?;
        let rom = RomArtifacts::offline(&config.setup, &problem, &training, &basis, &expansions, &hash)?;
        save_rom(&store, &rom)?;
        Ok(rom)
    })?;

    Ok(OfflineSummary {
        store: config.output_dir.clone(),
        snapshots: snapshots.len(),
        converged: training.len(),
        n: rom.n(),
        q: rom.roles.iter().map(|r| (r.role, r.q())).collect(),
        computed,
    })
}

// ---------------------------------------------------------------------------
// online and reports

/// Where the online phase evaluates the reduced model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OnlineTarget {
    /// The snapshot grid.
    Training,
    /// `n_nu x n_c` uniform grid over the parameter box.
    Grid(usize, usize),
    Point(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub nu: f64,
    pub curvature: f64,
    pub v_fom: f64,
    pub v_rom: f64,
    pub abs_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineSummary {
    pub n: usize,
    pub rows: Vec<RomRow>,
    pub errors: Vec<ErrorRow>,
    pub below_001: usize,
    pub below_01: usize,
    pub fom_median_iteration_s: f64,
    pub rom_median_iteration_s: f64,
    pub files: Vec<PathBuf>,
}

impl OnlineSummary {
    pub fn speedup(&self) -> f64 {
        self.fom_median_iteration_s / self.rom_median_iteration_s
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn bifurcation_csv(rows: &[RomRow]) -> String {
    let mut s = format!("{BIFURCATION_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            num(r.nu),
            num(r.curvature),
            num(r.v_obs),
            r.converged,
            r.iterations,
            format_args!("{:.3}", r.online_ms)
        ));
    }
    s
}

pub fn error_csv(rows: &[ErrorRow]) -> String {
    let mut s = format!("{ERROR_HEADER}\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", num(r.nu), num(r.curvature), num(r.v_fom), num(r.v_rom), num(r.abs_err)));
    }
    s
}

pub fn decay_csv(rows: &[DecayRow]) -> String {
    let mut s = format!("{DECAY_HEADER}\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.mode, num(r.sigma), num(r.cumulative_energy)));
    }
    s
}

pub fn mdeim_csv(expansions: &[AffineExpansion]) -> String {
    let mut s = format!("{MDEIM_HEADER}\n");
    for e in expansions {
        s.push_str(&format!("{},{},{},{}\n", e.role.name(), e.q, num(e.condition_number), num(e.energy_captured)));
    }
    s
}

pub fn bifurcation_svg(rows: &[RomRow], title: &str) -> String {
    let mut by_c: BTreeMap<u64, Series> = BTreeMap::new();
    let mut order: Vec<u64> = Vec::new();
    for r in rows {
        let key = r.curvature.to_bits();
        if !by_c.contains_key(&key) {
            order.push(key);
        }
        by_c.entry(key)
            .or_insert_with(|| Series { label: format!("c = {}", r.curvature), points: Vec::new() })
            .points
            .push((r.nu, r.v_obs));
    }
    let mut series: Vec<Series> = order.into_iter().map(|k| by_c.remove(&k).expect("series")).collect();
    for s in &mut series {
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    line_plot(title, "viscosity", "vertical velocity at (2, 1.5)", &series, false)
}

pub fn decay_svg(rows: &[DecayRow]) -> String {
    let series = [Series { label: "singular values".into(), points: rows.iter().map(|r| (r.mode as f64, r.sigma)).collect() }];
    line_plot("snapshot singular values", "mode", "sigma", &series, true)
}

/// Store metadata after checking that every offline stage completed.
pub fn open_complete_store(store: &ArtifactStore) -> Result<Meta> {
    let meta = store.read_meta()?.ok_or_else(|| {
        Error::Store(format!("{} holds no artifacts; run `semrom offline --config <file>` (cmd_offline) first", store.root().display()))
    })?;
    for stage in STAGES {
        match meta.stages.get(stage) {
            Some(StageStatus::Complete) => {}
            Some(StageStatus::Failed { message }) => {
                return Err(Error::Store(format!(
                    "offline stage `{stage}` failed ({message}); fix the cause and re-run `semrom offline`"
                )))
            }
            None => {
                return Err(Error::Store(format!("offline stage `{stage}` is missing; re-run `semrom offline` to complete it")))
            }
        }
    }
    let config: RunConfig = serde_json::from_value(meta.config.clone())?;
    check_provenance(&meta, &config)?;
    Ok(meta)
}

/// Reduced solves at `target` plus the training-point comparison, decay,
/// interpolation and timing reports, written to `<store>/reports`.
pub fn cmd_online(
    store_dir: &Path,
    target: OnlineTarget,
    n_modes: Option<usize>,
    expected: Option<&RunConfig>,
) -> Result<OnlineSummary> {
    let store = ArtifactStore::new(store_dir);
    let meta = open_complete_store(&store)?;
    if let Some(cfg) = expected {
        check_provenance(&meta, cfg)?;
    }
    let config: RunConfig = serde_json::from_value(meta.config.clone())?;
    let rom = load_rom(&store)?;
    if rom.config_hash != meta.config_hash {
        return Err(Error::Provenance(format!(
            "reduced model was built for configuration {}, store is {}",
            rom.config_hash, meta.config_hash
        )));
    }
    let probe_c = config.curvature_range.0;
    let fp = mesh_fingerprint(&config.setup, probe_c)?;
    if meta.fingerprints.get(&curvature_key(probe_c)) != Some(&fp) {
        return Err(Error::Provenance(format!("mesh fingerprint changed at curvature {probe_c}: now {fp}")));
    }
    if let Some(n) = n_modes {
        if n == 0 || n > rom.n() {
            return Err(Error::Config(format!("--n-modes {n} outside 1..={}", rom.n())));
        }
    }
    let n = n_modes.unwrap_or(rom.n());
    let tag = n_modes.map_or(String::new(), |n| format!("_N{n}"));
    let snapshots = load_snapshots(&store)?;
    let basis = load_basis(&store)?;

    let grid = match target {
        OnlineTarget::Training => config.snapshot_grid(),
        OnlineTarget::Grid(a, b) => ParameterGrid::uniform(config.nu_range, a, config.curvature_range, b),
        OnlineTarget::Point(nu, c) => ParameterGrid { nu: vec![nu], curvature: vec![c] },
    };
    let rows = rom_sweep(&rom, &grid, &config.oseen, n_modes);

    let mut errors = Vec::new();
    let mut rom_times = Vec::new();
    for i in snapshots.converged_indices() {
        let p = snapshots.params[i];
        let (v_rom, times) = match rom.online_solve(p, &config.oseen, n_modes) {
            Ok(r) => (r.observable, r.iteration_seconds),
            Err(e) => {
                warn!("reduced solve at training point nu = {}, c = {} failed: {e}", p.nu, p.curvature);
                (f64::NAN, Vec::new())
            }
        };
        rom_times.extend(times);
        let v_fom = snapshots.observables[i];
        errors.push(ErrorRow { nu: p.nu, curvature: p.curvature, v_fom, v_rom, abs_err: (v_rom - v_fom).abs() });
    }
    let below_001 = errors.iter().filter(|e| e.abs_err < 0.01).count();
    let below_01 = errors.iter().filter(|e| e.abs_err < 0.1).count();
    let rom_median = median(&mut rom_times);
    let fom_median = snapshots.median_iteration_seconds;

    let title = format!("reduced model, N = {n}");
    let decay = pod_decay_report(&basis);
    let expansions = Role::ALL.iter().map(|&r| load_expansion(&store, r)).collect::<Result<Vec<_>>>()?;
    let timing = format!(
        "{TIMING_HEADER}\nfom_median_iteration_s,{}\nrom_median_iteration_s,{}\nspeedup,{}\n",
        num(fom_median),
        num(rom_median),
        num(fom_median / rom_median)
    );
    let outputs = [
        (format!("reports/bifurcation{tag}.csv"), bifurcation_csv(&rows)),
        (format!("reports/bifurcation{tag}.svg"), bifurcation_svg(&rows, &title)),
        (format!("reports/errors{tag}.csv"), error_csv(&errors)),
        ("reports/decay.csv".to_string(), decay_csv(&decay)),
        ("reports/decay.svg".to_string(), decay_svg(&decay)),
        ("reports/mdeim.csv".to_string(), mdeim_csv(&expansions)),
        (format!("reports/timing{tag}.csv"), timing),
    ];
    let mut files = Vec::new();
    for (rel, text) in &outputs {
        store.write_text(rel, text)?;
        files.push(store.path(rel));
    }
    info!(
        "N = {n}: {below_001}/{} training points within 0.01, {below_01} within 0.1; speedup {:.1}x",
        errors.len(),
        fom_median / rom_median
    );
    Ok(OnlineSummary {
        n,
        rows,
        errors,
        below_001,
        below_01,
        fom_median_iteration_s: fom_median,
        rom_median_iteration_s: rom_median,
        files,
    })
}

/// Summary printed by `semrom report`.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub n: usize,
    pub q: Vec<(String, usize)>,
    pub points: usize,
    pub below_001: usize,
    pub below_01: usize,
    pub speedup: f64,
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "reduced basis size N = {}", self.n)?;
        for (role, q) in &self.q {
            writeln!(f, "  Q[{role}] = {q}")?;
        }
        writeln!(f, "training points compared: {}", self.points)?;
        writeln!(f, "  |error| < 0.01: {}", self.below_001)?;
        writeln!(f, "  |error| < 0.1:  {}", self.below_01)?;
        write!(f, "median iteration speedup: {:.1}x", self.speedup)
    }
}

fn read_csv(store: &ArtifactStore, rel: &str, header: &str) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(store.path(rel))
        .map_err(|_| Error::Store(format!("{rel} not found; run `semrom online --store {}` first", store.root().display())))?;
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(Error::Store(format!("{rel} has an unexpected header")));
    }
    Ok(lines.map(|l| l.split(',').map(str::to_string).collect()).collect())
}

/// Error counts, speedup, interpolation sizes and basis size of the last
/// full-basis online run.
pub fn cmd_report(store_dir: &Path) -> Result<Report> {
    let store = ArtifactStore::new(store_dir);
    if store.read_meta()?.is_none() {
        return Err(Error::Store(format!(
            "{} is empty; run `semrom offline --config <file>` (cmd_offline) first",
            store_dir.display()
        )));
    }
    open_complete_store(&store)?;
    let errors = read_csv(&store, "reports/errors.csv", ERROR_HEADER)?;
    let abs: Vec<f64> = errors.iter().map(|r| r.get(4).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN)).collect();
    let timing = read_csv(&store, "reports/timing.csv", TIMING_HEADER)?;
    let speedup = timing
        .iter()
        .find(|r| r.first().map(String::as_str) == Some("speedup"))
        .and_then(|r| r.get(1)?.parse().ok())
        .unwrap_or(f64::NAN);
    let diag = read_csv(&store, "reports/mdeim.csv", MDEIM_HEADER)?;
    let basis: BasisInfo = store.read_json("basis/info.json")?;
    Ok(Report {
        n: basis.n,
        q: diag.iter().filter_map(|r| Some((r.first()?.clone(), r.get(1)?.parse().ok()?))).collect(),
        points: abs.len(),
        below_001: abs.iter().filter(|&&e| e < 0.01).count(),
        below_01: abs.iter().filter(|&&e| e < 0.1).count(),
        speedup,
    })
}
