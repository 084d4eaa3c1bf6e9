#![allow(dead_code)]

use std::path::Path;

use nalgebra::DMatrix;

use semrom::geometry::{generate_mesh, ChannelSpec, Refinement};
use semrom::pipeline::RunConfig;
use semrom::sem::{Discretization, DofKind};
use semrom::steady::ModelSetup;

/// Coarse mesh used by the fast end-to-end tests.
pub fn tiny_setup(order: usize) -> ModelSetup {
    ModelSetup {
        refinement: Refinement { upstream: 1, through: 1, downstream: 3, block_rows: 1, gap_rows: 1, downstream_growth: 1.2 },
        order,
        ..Default::default()
    }
}

pub fn toy_config(dir: &Path, grid: (usize, usize), order: usize) -> RunConfig {
    RunConfig { grid, setup: tiny_setup(order), output_dir: dir.to_path_buf(), ..Default::default() }
}

/// Deterministic values in [-1, 1) for test matrices.
pub fn hash_unit(i: usize, j: usize) -> f64 {
    let v = ((i as f64) * 12.9898 + (j as f64) * 78.233 + 0.5).sin() * 43758.5453;
    2.0 * (v - v.floor()) - 1.0
}

pub fn monomial_integral(k: usize) -> f64 {
    if k % 2 == 1 {
        0.0
    } else {
        2.0 / (k as f64 + 1.0)
    }
}

/// Coefficients of `(y (3 - y), 0)` in the modal basis, built from the mesh
/// directly: vertex values, and on vertical edges of height `h` a first
/// bubble coefficient `h^2` (since `u - linear = h^2 (1 - xi^2) / 4`).
pub fn poiseuille_coefficients(disc: &Discretization) -> Vec<f64> {
    let layout = &disc.layout;
    let mesh = &disc.mesh;
    let p = layout.order;
    (0..layout.n_free())
        .map(|i| match layout.classify(i) {
            DofKind::VelBnd { comp: 0, scalar } if scalar < layout.n_vertices => {
                let v = mesh.vertices[scalar];
                v.y * (3.0 - v.y)
            }
            DofKind::VelBnd { comp: 0, scalar } => {
                let r = scalar - layout.n_vertices;
                let (edge, m) = (r / (p - 1), r % (p - 1) + 1);
                let [a, b] = mesh.edges[edge].vertices;
                let (a, b) = (mesh.vertices[a], mesh.vertices[b]);
                if m == 1 && (a.x - b.x).abs() < 1e-14 {
                    (a.y - b.y).powi(2)
                } else {
                    0.0
                }
            }
            _ => f64::NAN,
        })
        .collect()
}

pub fn small_channel(p: usize) -> Discretization {
    let refinement = Refinement { upstream: 1, through: 1, downstream: 2, block_rows: 1, gap_rows: 1, downstream_growth: 1.0 };
    Discretization::new(generate_mesh(&ChannelSpec::default(), 0.3, &refinement, p).unwrap()).unwrap()
}

pub fn smooth_advection(disc: &Discretization) -> Vec<f64> {
    (0..disc.n_free()).map(|i| 0.3 * ((i as f64) * 0.37).sin()).collect()
}

/// Greedy selection written out directly: residuals by least squares on the
/// chosen rows, maximum found by a plain scan.
pub fn greedy_oracle(v: &DMatrix<f64>) -> Vec<usize> {
    let mut pts = Vec::new();
    for k in 0..v.ncols() {
        let mut r: Vec<f64> = v.column(k).iter().copied().collect();
        if k > 0 {
            let p = DMatrix::from_fn(k, k, |i, j| v[(pts[i], j)]);
            let rhs = DMatrix::from_fn(k, 1, |i, _| v[(pts[i], k)]);
            let c = p.svd(true, true).solve(&rhs, 1e-300).unwrap();
            for (i, ri) in r.iter_mut().enumerate() {
                for j in 0..k {
                    *ri -= v[(i, j)] * c[(j, 0)];
                }
            }
        }
        let mut best = 0;
        for i in 1..r.len() {
            if r[i].abs() > r[best].abs() {
                best = i;
            }
        }
        pts.push(best);
    }
    pts
}
