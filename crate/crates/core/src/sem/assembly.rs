//! Element blocks of the Oseen system, their gathering into one sparse
//! global operator over the free unknowns, and the sparse direct solve.

use std::io::Write as _;
use std::sync::OnceLock;

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryTag, Mesh, Point};

use super::element::{edge_traction, velocity_at_qp, ElementGeometry};
use super::layout::{dirichlet_velocity, DofLayout};
use super::reference::ReferenceElement;

const SKIP: u32 = u32::MAX;

/// Volume force and outlet traction. Both default to zero.
#[derive(Clone, Copy, Default)]
pub struct Forcing<'a> {
    pub body: Option<&'a dyn Fn(Point) -> [f64; 2]>,
    pub traction: Option<&'a dyn Fn(Point) -> [f64; 2]>,
}

impl std::fmt::Debug for Forcing<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Forcing")
            .field("body", &self.body.is_some())
            .field("traction", &self.traction.is_some())
            .finish()
    }
}

/// Mesh plus everything about the discretization that does not depend on
/// viscosity or the advecting field.
pub struct Discretization {
    pub mesh: Mesh,
    pub reference: ReferenceElement,
    pub layout: DofLayout,
    pub geometry: Vec<ElementGeometry>,
    pub laplacian: Vec<DMatrix<f64>>,
    pub divergence: Vec<DMatrix<f64>>,
    pub mass: Vec<DMatrix<f64>>,
    pub structure: SparseStructure,
    symbolic_lu: OnceLock<SymbolicLu<usize>>,
}

impl std::fmt::Debug for Discretization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Discretization")
            .field("order", &self.mesh.order)
            .field("elements", &self.mesh.elements.len())
            .field("n_free", &self.layout.n_free())
            .finish()
    }
}

impl Discretization {
    /// Discretization with the channel boundary data (parabolic inflow, no-slip walls).
    pub fn new(mesh: Mesh) -> Result<Self> {
        let height = mesh.spec.height;
        Self::with_dirichlet(mesh, &move |tag, p| dirichlet_velocity(tag, p, height))
    }

    pub fn with_dirichlet(mesh: Mesh, g: &dyn Fn(BoundaryTag, Point) -> [f64; 2]) -> Result<Self> {
        let reference = ReferenceElement::new(mesh.order);
        let layout = DofLayout::with_dirichlet(&mesh, &reference, g);
        let geometry = mesh
            .elements
            .iter()
            .enumerate()
            .map(|(e, el)| ElementGeometry::new(e, el, &reference))
            .collect::<Result<Vec<_>>>()?;
        let laplacian = geometry.iter().map(|g| g.laplacian()).collect();
        let divergence = geometry.iter().map(|g| g.divergence(&reference)).collect();
        let mass = geometry.iter().map(|g| g.mass(&reference)).collect();
        let structure = SparseStructure::new(&layout);
        Ok(Self {
            mesh,
            reference,
            layout,
            geometry,
            laplacian,
            divergence,
            mass,
            structure,
            symbolic_lu: OnceLock::new(),
        })
    }

    pub fn n_free(&self) -> usize {
        self.layout.n_free()
    }

    /// Element-local velocity coefficients (`2 n_modes`) of a free vector.
    /// Dirichlet modes carry the boundary data, or zero when
    /// `with_dirichlet` is false (for differences of states).
    pub fn local_velocity(&self, element: usize, x: &[f64], with_dirichlet: bool) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.layout.n_modes];
        self.layout.gather_velocity(element, x, &mut out);
        if !with_dirichlet {
            let nm = self.layout.n_modes;
            for comp in 0..2 {
                for l in 0..self.layout.n_bnd_local {
                    if self.layout.velocity_index(element, comp, l).is_none() {
                        out[comp * nm + l] = 0.0;
                    }
                }
            }
        }
        out
    }

    /// Element blocks of the linearized operator
    /// `nu (grad u, grad v) + ((w . grad) u, v) - (p, div v) - (q, div u)`
    /// with `w` taken from `advection` (Stokes when `None`).
    pub fn assemble_blocks(&self, nu: f64, advection: Option<&[f64]>, forcing: &Forcing<'_>) -> BlockSystem<'_> {
        let n_el = self.mesh.elements.len();
        let mut s = Vec::with_capacity(n_el);
        let mut f = Vec::with_capacity(n_el);
        for e in 0..n_el {
            s.push(self.scalar_operator(e, nu, advection.map(|w| self.local_velocity(e, w, true)).as_deref()));
            f.push(self.element_load(e, forcing));
        }
        BlockSystem { disc: self, nu, s, f }
    }

    /// `nu * laplacian + advection` for one element, `w` given as local coefficients.
    pub fn scalar_operator(&self, e: usize, nu: f64, w: Option<&[f64]>) -> DMatrix<f64> {
        let mut s = &self.laplacian[e] * nu;
        if let Some(w) = w {
            let (wx, wy) = velocity_at_qp(&self.reference, w);
            s += self.geometry[e].advection(&self.reference, &wx, &wy);
        }
        s
    }

    pub fn element_load(&self, e: usize, forcing: &Forcing<'_>) -> DVector<f64> {
        let mut f = match forcing.body {
            Some(body) => self.geometry[e].load(&self.reference, body),
            None => DVector::zeros(2 * self.layout.n_modes),
        };
        if let Some(t) = forcing.traction {
            let el = &self.mesh.elements[e];
            for k in 0..4 {
                if self.mesh.edges[el.edge_ids[k]].tag == Some(BoundaryTag::Outlet) {
                    f += edge_traction(el, &self.reference, k, t);
                }
            }
        }
        f
    }

    /// Gathered operator and Dirichlet-lifted right-hand side over the free unknowns.
    pub fn gather_globalize(&self, sys: &BlockSystem<'_>) -> GlobalSystem {
        let st = &self.structure;
        let mut values = vec![0.0; st.nnz()];
        let mut rhs = vec![0.0; st.n];
        for e in 0..self.mesh.elements.len() {
            let k = sys.element_matrix(e);
            let r = sys.element_rhs(e, &k);
            let l = k.nrows();
            let dofs = &st.dofs[e];
            let scatter = &st.scatter[e];
            for b in 0..l {
                for a in 0..l {
                    let pos = scatter[a + b * l];
                    if pos != SKIP {
                        values[pos as usize] += k[(a, b)];
                    }
                }
            }
            for a in 0..l {
                if dofs[a] != SKIP {
                    rhs[dofs[a] as usize] += r[a];
                }
            }
        }
        GlobalSystem { values, rhs }
    }

    /// Solves a gathered system with a sparse LU. The symbolic factorization
    /// is computed once per discretization and reused.
    pub fn solve(&self, sys: &GlobalSystem) -> std::result::Result<Vec<f64>, String> {
        let st = &self.structure;
        let n = st.n;
        let symbolic = SymbolicSparseColMatRef::new_checked(n, n, &st.col_ptr, None, &st.row_idx);
        let sym = match self.symbolic_lu.get() {
            Some(s) => s.clone(),
            None => {
                let s = SymbolicLu::try_new(symbolic).map_err(|e| format!("symbolic factorization: {e:?}"))?;
                let _ = self.symbolic_lu.set(s.clone());
                s
            }
        };
        let mat = SparseColMatRef::new(symbolic, &sys.values);
        let lu = Lu::try_new_with_symbolic(sym, mat).map_err(|e| format!("numeric factorization: {e:?}"))?;
        let mut b = Mat::<f64>::from_fn(n, 1, |i, _| sys.rhs[i]);
        lu.solve_in_place(b.as_mut());
        let mut x: Vec<f64> = (0..n).map(|i| b[(i, 0)]).collect();
        // one step of iterative refinement
        let ax = sys.matvec(st, &x);
        let mut r = Mat::<f64>::from_fn(n, 1, |i, _| sys.rhs[i] - ax[i]);
        lu.solve_in_place(r.as_mut());
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += r[(i, 0)];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err("factorization produced non-finite values (singular operator)".into());
        }
        Ok(x)
    }

    /// Solves and wraps failures as solver errors tagged with `nu` and the iteration.
    pub fn solve_checked(&self, sys: &GlobalSystem, nu: f64, iteration: usize) -> Result<Vec<f64>> {
        self.solve(sys).map_err(|reason| Error::Solver { nu, iteration, reason })
    }
}

/// Element blocks at one viscosity and advecting field. The pressure
/// coupling is geometric and borrowed from the discretization.
#[derive(Debug)]
pub struct BlockSystem<'a> {
    pub disc: &'a Discretization,
    pub nu: f64,
    /// Scalar velocity operator per element (`n_modes x n_modes`), shared by both components.
    pub s: Vec<DMatrix<f64>>,
    /// Load per element (`2 n_modes`).
    pub f: Vec<DVector<f64>>,
}

impl BlockSystem<'_> {
    fn split(&self) -> (usize, usize) {
        (self.disc.layout.n_bnd_local, self.disc.layout.n_modes)
    }

    /// Boundary-boundary velocity block of one component.
    pub fn a(&self, e: usize) -> DMatrix<f64> {
        let (nb, _) = self.split();
        self.s[e].view((0, 0), (nb, nb)).into_owned()
    }

    /// Boundary-interior velocity block.
    pub fn b(&self, e: usize) -> DMatrix<f64> {
        let (nb, nm) = self.split();
        self.s[e].view((0, nb), (nb, nm - nb)).into_owned()
    }

    /// Interior-boundary velocity block.
    pub fn b_tilde(&self, e: usize) -> DMatrix<f64> {
        let (nb, nm) = self.split();
        self.s[e].view((nb, 0), (nm - nb, nb)).into_owned()
    }

    /// Interior-interior velocity block.
    pub fn c(&self, e: usize) -> DMatrix<f64> {
        let (nb, nm) = self.split();
        self.s[e].view((nb, nb), (nm - nb, nm - nb)).into_owned()
    }

    /// Pressure rows against boundary velocity modes, columns `[x modes, y modes]`.
    pub fn d_bnd(&self, e: usize) -> DMatrix<f64> {
        let (nb, nm) = self.split();
        let d = &self.disc.divergence[e];
        let mut out = DMatrix::zeros(d.nrows(), 2 * nb);
        out.columns_mut(0, nb).copy_from(&d.columns(0, nb));
        out.columns_mut(nb, nb).copy_from(&d.columns(nm, nb));
        out
    }

    /// Pressure rows against interior velocity modes.
    pub fn d_int(&self, e: usize) -> DMatrix<f64> {
        let (nb, nm) = self.split();
        let ni = nm - nb;
        let d = &self.disc.divergence[e];
        let mut out = DMatrix::zeros(d.nrows(), 2 * ni);
        out.columns_mut(0, ni).copy_from(&d.columns(nb, ni));
        out.columns_mut(ni, ni).copy_from(&d.columns(nm + nb, ni));
        out
    }

    /// Full element matrix in local order `[x modes, y modes, pressure modes]`.
    pub fn element_matrix(&self, e: usize) -> DMatrix<f64> {
        let nm = self.disc.layout.n_modes;
        let d = &self.disc.divergence[e];
        let np = d.nrows();
        let l = 2 * nm + np;
        let mut k = DMatrix::zeros(l, l);
        k.view_mut((0, 0), (nm, nm)).copy_from(&self.s[e]);
        k.view_mut((nm, nm), (nm, nm)).copy_from(&self.s[e]);
        k.view_mut((2 * nm, 0), (np, 2 * nm)).copy_from(d);
        k.view_mut((0, 2 * nm), (2 * nm, np)).copy_from(&d.transpose());
        k
    }

    /// Element right-hand side `f - K d` with `d` the Dirichlet lift.
    pub fn element_rhs(&self, e: usize, k: &DMatrix<f64>) -> DVector<f64> {
        let nm = self.disc.layout.n_modes;
        let l = k.nrows();
        let mut d = DVector::zeros(l);
        d.rows_mut(0, 2 * nm).copy_from_slice(&self.disc.layout.element_dirichlet(e));
        let mut r = -(k * d);
        for i in 0..2 * nm {
            r[i] += self.f[e][i];
        }
        r
    }
}

/// Compressed-column pattern of the gathered operator plus, per element,
/// the map from local entries to positions in the value array.
#[derive(Debug, Clone)]
pub struct SparseStructure {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    /// Per element, global free index of each local unknown (`u32::MAX` if prescribed).
    pub dofs: Vec<Vec<u32>>,
    /// Per element, value position of local entry `(a, b)` at `a + b * L`.
    pub scatter: Vec<Vec<u32>>,
}

impl SparseStructure {
    pub fn new(layout: &DofLayout) -> Self {
        let n = layout.n_free();
        let nm = layout.n_modes;
        let np = layout.n_p_local;
        let l = 2 * nm + np;
        let dofs: Vec<Vec<u32>> = (0..layout.n_elements)
            .map(|e| {
                let mut v = Vec::with_capacity(l);
                for comp in 0..2 {
                    for m in 0..nm {
                        v.push(layout.velocity_index(e, comp, m).map_or(SKIP, |g| g as u32));
                    }
                }
                for k in 0..np {
                    v.push(layout.pressure_index(e, k) as u32);
                }
                v
            })
            .collect();
        // block (a, b) is structurally nonzero unless it couples the two
        // velocity components or two pressure modes
        let block = |a: usize| if a < nm { 0 } else if a < 2 * nm { 1 } else { 2 };
        let coupled = |a: usize, b: usize| {
            let (ba, bb) = (block(a), block(b));
            ba == 2 && bb != 2 || bb == 2 && ba != 2 || ba == bb && ba != 2
        };
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for d in &dofs {
            for b in 0..l {
                if d[b] == SKIP {
                    continue;
                }
                let col = &mut cols[d[b] as usize];
                for a in 0..l {
                    if d[a] != SKIP && coupled(a, b) {
                        col.push(d[a] as usize);
                    }
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for col in &mut cols {
            col.sort_unstable();
            col.dedup();
            row_idx.extend_from_slice(col);
            col_ptr.push(row_idx.len());
            *col = Vec::new();
        }
        assert!(row_idx.len() < SKIP as usize, "pattern too large for 32-bit positions");
        let scatter = dofs
            .iter()
            .map(|d| {
                let mut s = vec![SKIP; l * l];
                for b in 0..l {
                    if d[b] == SKIP {
                        continue;
                    }
                    let c = d[b] as usize;
                    let rows = &row_idx[col_ptr[c]..col_ptr[c + 1]];
                    for a in 0..l {
                        if d[a] != SKIP && coupled(a, b) {
                            let k = rows.binary_search(&(d[a] as usize)).expect("entry in pattern");
                            s[a + b * l] = (col_ptr[c] + k) as u32;
                        }
                    }
                }
                s
            })
            .collect();
        Self { n, col_ptr, row_idx, dofs, scatter }
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Value position of entry `(row, col)`, if it is in the pattern.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let (lo, hi) = (self.col_ptr[col], self.col_ptr[col + 1]);
        self.row_idx[lo..hi].binary_search(&row).ok().map(|k| lo + k)
    }

    /// All pattern entries as `(row, col)` in column-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |c| self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]].iter().map(move |&r| (r, c)))
    }
}

/// Values of the gathered operator on a [`SparseStructure`] and the lifted right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSystem {
    pub values: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl GlobalSystem {
    pub fn matvec(&self, st: &SparseStructure, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; st.n];
        for c in 0..st.n {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for k in st.col_ptr[c]..st.col_ptr[c + 1] {
                y[st.row_idx[k]] += self.values[k] * xc;
            }
        }
        y
    }

    pub fn entry(&self, st: &SparseStructure, row: usize, col: usize) -> f64 {
        st.position(row, col).map_or(0.0, |k| self.values[k])
    }

    pub fn to_dense(&self, st: &SparseStructure) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(st.n, st.n);
        for (k, (r, c)) in st.entries().enumerate() {
            m[(r, c)] = self.values[k];
        }
        m
    }

    /// Matrix Market coordinate dump (1-based indices).
    pub fn write_matrix_market(&self, st: &SparseStructure, out: &mut dyn std::io::Write) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(out);
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", st.n, st.n, st.nnz())?;
        for (k, (r, c)) in st.entries().enumerate() {
            writeln!(w, "{} {} {:.17e}", r + 1, c + 1, self.values[k])?;
        }
        w.flush()
    }
}
