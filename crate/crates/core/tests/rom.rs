mod common;

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use semrom::geometry::ParameterPoint;
use semrom::mdeim::{self, coefficients, AffineExpansion, Role};
use semrom::pipeline::{collect_role, load_rom, save_rom};
use semrom::pod::{pod, snapshot_matrix, ReducedBasis};
use semrom::rom::{galerkin_solve, reconstruct, RomArtifacts};
use semrom::sem::entry::{evaluate_entry, evaluate_rhs_entry};
use semrom::sem::Forcing;
use semrom::steady::{snapshot_sweep, ModelSetup, OseenConfig, ParameterGrid, SnapshotSet};
use semrom::store::ArtifactStore;
use semrom::Error;

struct Fixture {
    setup: ModelSetup,
    snapshots: SnapshotSet,
    basis: ReducedBasis,
    expansions: Vec<AffineExpansion>,
    rom: RomArtifacts,
}

/// Small offline run kept at full energy so every training state lies in
/// the span of the basis and the expansions are exact on the training set.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let setup = common::tiny_setup(4);
        let grid = ParameterGrid::uniform((0.15, 0.2), 2, (0.0, 0.4), 2);
        let snapshots = snapshot_sweep(&setup, &grid, &OseenConfig::default(), &mut |_, _, _| {}).unwrap();
        assert!(snapshots.converged.iter().all(|&c| c));
        let cols: Vec<&[f64]> = snapshots.states.iter().map(|s| s.coefficients.as_slice()).collect();
        let basis = pod(&snapshot_matrix(&cols).unwrap(), 1.0).unwrap();
        let problem = setup.problem(0.0).unwrap();
        let expansions: Vec<AffineExpansion> = Role::ALL
            .iter()
            .map(|&r| mdeim::build(&collect_role(&setup, &snapshots, r).unwrap(), 1.0, &problem.disc.layout).unwrap())
            .collect();
        let rom = RomArtifacts::offline(&setup, &problem, &snapshots, &basis, &expansions, "test").unwrap();
        Fixture { setup, snapshots, basis, expansions, rom }
    })
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn projected_expansion_matches_dense_projection() {
    let f = fixture();
    let i = 3;
    let p = f.snapshots.params[i];
    let x = &f.snapshots.states[i].coefficients;
    let problem = f.setup.problem(p.curvature).unwrap();
    let disc = &problem.disc;
    let u = &f.basis.u;

    let sys = disc.gather_globalize(&disc.assemble_blocks(p.nu, Some(x), &Forcing::default()));
    let k = sys.to_dense(&disc.structure);
    let dense = u.transpose() * &k * u;
    let dense_rhs = u.transpose() * DVector::from_column_slice(&sys.rhs);

    let mut a = DMatrix::zeros(f.basis.n, f.basis.n);
    let mut rhs = DVector::zeros(f.basis.n);
    for (exp, role) in f.expansions.iter().zip(&f.rom.roles) {
        let tau = coefficients(&exp.interp_matrix, &mut |k| {
            let (r, c) = exp.interp_entries[k];
            Ok(if exp.role.is_vector() {
                evaluate_rhs_entry(disc, p.nu, Some(x), r)
            } else {
                evaluate_entry(disc, p.nu, Some(x), r, c)
            })
        })
        .unwrap();
        for (t, m) in tau.iter().zip(&role.matrices) {
            a += m * *t;
        }
        for (t, v) in tau.iter().zip(&role.vectors) {
            rhs += v * *t;
        }
    }
    assert!(rel(&a, &dense) < 1e-8, "operator mismatch {}", rel(&a, &dense));
    assert!((&rhs - &dense_rhs).norm() < 1e-8 * dense_rhs.norm());
}

#[test]
fn galerkin_reproduces_states_in_the_span() {
    let f = fixture();
    for i in [0, 3] {
        let p = f.snapshots.params[i];
        let x = DVector::from_column_slice(&f.snapshots.states[i].coefficients);
        let problem = f.setup.problem(p.curvature).unwrap();
        let x0 = f.basis.u.transpose() * &x;
        let (xn, converged, _) = galerkin_solve(&problem.disc, &f.basis.u, p.nu, x0, &OseenConfig::default()).unwrap();
        assert!(converged);
        let back = &f.basis.u * xn;
        assert!((&back - &x).norm() <= 1e-6 * x.norm());
    }
}

#[test]
fn reconstruction_preserves_norm() {
    let f = fixture();
    let xn = DVector::from_fn(f.basis.n, |i, _| common::hash_unit(i, 5));
    let full = reconstruct(&f.basis, &xn);
    let norm: f64 = full.coefficients.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((norm - xn.norm()).abs() <= 1e-12 * xn.norm());
}

#[test]
fn online_solve_matches_training_observables() {
    let f = fixture();
    for i in 0..f.snapshots.len() {
        let r = f.rom.online_solve(f.snapshots.params[i], &OseenConfig::default(), None).unwrap();
        assert!(r.converged);
        assert!((r.observable - f.snapshots.observables[i]).abs() < 1e-6);
    }
}

#[test]
fn online_solve_is_deterministic() {
    let f = fixture();
    let mu = ParameterPoint::new(0.17, 0.13).unwrap();
    let a = f.rom.online_solve(mu, &OseenConfig::default(), None).unwrap();
    let b = f.rom.online_solve(mu, &OseenConfig::default(), None).unwrap();
    assert_eq!(a.x_n, b.x_n);
    assert_eq!(a.observable.to_bits(), b.observable.to_bits());
}

#[test]
fn one_mode_model_stays_finite() {
    let f = fixture();
    let mu = ParameterPoint::new(0.18, 0.2).unwrap();
    let r = f.rom.online_solve(mu, &OseenConfig::default(), Some(1)).unwrap();
    assert_eq!(r.x_n.len(), 1);
    assert!(r.observable.is_finite());
}

#[test]
fn online_data_does_not_scale_with_mesh_unknowns() {
    let f = fixture();
    let n_free = f.basis.dim();
    let nm = semrom::sem::ReferenceElement::new(f.setup.order).n_modes();
    assert_eq!(f.rom.element_basis.len(), f.rom.support.len());
    for m in &f.rom.element_basis {
        assert_eq!(m.nrows(), 2 * nm);
    }
    for r in &f.rom.roles {
        assert!(r.matrices.iter().all(|m| m.nrows() == f.basis.n));
        assert!(r.vectors.iter().all(|v| v.len() == f.basis.n));
    }
    // only elements under an interpolation entry are kept
    let mut touched: Vec<usize> = f.rom.roles.iter().flat_map(|r| r.stencils.iter().flat_map(|s| s.elements())).collect();
    touched.sort_unstable();
    touched.dedup();
    assert_eq!(f.rom.support, touched);
    assert!(f.rom.probe.len() < n_free && f.rom.training_coords.ncols() < n_free);
}

#[test]
fn store_round_trip_is_bit_exact() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let store = ArtifactStore::new(dir.path());
    save_rom(&store, &f.rom).unwrap();
    let back = load_rom(&store).unwrap();
    assert_eq!(back, f.rom);
}

#[test]
fn basis_from_another_mesh_is_refused() {
    let f = fixture();
    let other = common::tiny_setup(3).problem(0.0).unwrap();
    let err = RomArtifacts::offline(&f.setup, &other, &f.snapshots, &f.basis, &f.expansions, "x").unwrap_err();
    assert!(matches!(err, Error::Provenance(_)), "{err}");
}
