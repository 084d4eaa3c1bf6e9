//! Degree-of-freedom bookkeeping: element-local modes, the gather map onto
//! global boundary unknowns, and Dirichlet elimination.
//!
//! The free unknown vector is ordered `(v_bnd, p, v_int)`:
//!
//! ```text
//! [ vx on free boundary modes | vy on free boundary modes
//! | pressure (element-major)
//! | vx interior (element-major) | vy interior (element-major) ]
//! ```

use crate::geometry::{BoundaryTag, EdgeCurve, Mesh, Point};

use super::quadrature::gll_rule;
use super::reference::{BoundarySlot, ReferenceElement};

const NONE: usize = usize::MAX;

/// Velocity prescribed on Dirichlet boundaries: parabolic inflow
/// `u_x = y (H - y)` on the inlet, no-slip on walls.
pub fn dirichlet_velocity(tag: BoundaryTag, p: Point, height: f64) -> [f64; 2] {
    match tag {
        BoundaryTag::Inlet => [p.y * (height - p.y), 0.0],
        BoundaryTag::Wall => [0.0, 0.0],
        BoundaryTag::Outlet => unreachable!("outlet is a natural boundary"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofKind {
    /// Shared boundary velocity mode, by scalar boundary id.
    VelBnd { comp: usize, scalar: usize },
    Pressure { element: usize, mode: usize },
    VelInt { comp: usize, element: usize, mode: usize },
}

#[derive(Debug, Clone)]
pub struct DofLayout {
    pub order: usize,
    pub n_elements: usize,
    pub n_vertices: usize,
    pub n_edges: usize,
    /// Local sizes: velocity modes per component, boundary modes, interior modes, pressure modes.
    pub n_modes: usize,
    pub n_bnd_local: usize,
    pub n_int_local: usize,
    pub n_p_local: usize,
    /// Scalar boundary id -> free boundary index (or `usize::MAX` for Dirichlet).
    pub bnd_free: Vec<usize>,
    /// Free boundary index -> scalar boundary id.
    pub bnd_scalar: Vec<usize>,
    /// Prescribed values per component on scalar boundary ids (zero on free ids).
    pub dirichlet: [Vec<f64>; 2],
    /// Per element: scalar boundary id of each local boundary mode (the gather map).
    pub elem_bnd: Vec<Vec<usize>>,
    /// Per scalar boundary id: the `(element, local mode)` pairs that share it.
    pub bnd_support: Vec<Vec<(usize, usize)>>,
}

impl DofLayout {
    /// Layout with the channel boundary data of [`dirichlet_velocity`].
    pub fn new(mesh: &Mesh, reference: &ReferenceElement) -> Self {
        let height = mesh.spec.height;
        Self::with_dirichlet(mesh, reference, &|tag, p| dirichlet_velocity(tag, p, height))
    }

    /// Layout with arbitrary velocity data `g(tag, point)` on inlet and wall edges.
    pub fn with_dirichlet(mesh: &Mesh, reference: &ReferenceElement, g: &dyn Fn(BoundaryTag, Point) -> [f64; 2]) -> Self {
        let p = mesh.order;
        assert_eq!(p, reference.order);
        let n_vertices = mesh.vertices.len();
        let n_edges = mesh.edges.len();
        let n_scalar = n_vertices + n_edges * (p - 1);
        let edge_dof = |e: usize, m: usize| n_vertices + e * (p - 1) + (m - 1);

        let elem_bnd: Vec<Vec<usize>> = mesh
            .elements
            .iter()
            .map(|el| {
                reference.slots[..reference.n_bnd]
                    .iter()
                    .map(|s| match *s {
                        BoundarySlot::Vertex(k) => el.vertex_ids[k],
                        BoundarySlot::Edge(k, m) => edge_dof(el.edge_ids[k], m),
                    })
                    .collect()
            })
            .collect();
        let mut bnd_support = vec![Vec::new(); n_scalar];
        for (e, ids) in elem_bnd.iter().enumerate() {
            for (l, &g) in ids.iter().enumerate() {
                bnd_support[g].push((e, l));
            }
        }

        // Dirichlet data: vertices first (walls win over the inlet at corners),
        // then edge modes by interpolation at the interior GLL points
        let mut is_dir = vec![false; n_scalar];
        let mut dirichlet = [vec![0.0; n_scalar], vec![0.0; n_scalar]];
        let mut vertex_tag: Vec<Option<BoundaryTag>> = vec![None; n_vertices];
        for edge in &mesh.edges {
            match edge.tag {
                Some(BoundaryTag::Wall) => {
                    for &v in &edge.vertices {
                        vertex_tag[v] = Some(BoundaryTag::Wall);
                    }
                }
                Some(BoundaryTag::Inlet) => {
                    for &v in &edge.vertices {
                        vertex_tag[v].get_or_insert(BoundaryTag::Inlet);
                    }
                }
                _ => {}
            }
        }
        for (v, tag) in vertex_tag.iter().enumerate() {
            if let Some(t) = *tag {
                is_dir[v] = true;
                let val = g(t, mesh.vertices[v]);
                dirichlet[0][v] = val[0];
                dirichlet[1][v] = val[1];
            }
        }
        let gll = gll_rule(p + 1);
        let inner = &gll.nodes[1..p];
        let vander = nalgebra::DMatrix::from_fn(p - 1, p - 1, |k, m| reference.basis.eval(m + 1, inner[k]).0);
        let vander_lu = vander.lu();
        for (eid, edge) in mesh.edges.iter().enumerate() {
            let Some(tag) = edge.tag.filter(|t| *t != BoundaryTag::Outlet) else {
                continue;
            };
            let curve = EdgeCurve {
                start: mesh.vertices[edge.vertices[0]],
                end: mesh.vertices[edge.vertices[1]],
                shape: edge.shape,
            };
            for comp in 0..2 {
                let (v0, v1) = (dirichlet[comp][edge.vertices[0]], dirichlet[comp][edge.vertices[1]]);
                let rhs = nalgebra::DVector::from_fn(p - 1, |k, _| {
                    let s = inner[k];
                    let val = g(tag, curve.eval(s))[comp];
                    val - v0 * reference.basis.eval(0, s).0 - v1 * reference.basis.eval(p, s).0
                });
                let coef = vander_lu.solve(&rhs).expect("edge interpolation matrix is nonsingular");
                for m in 1..p {
                    dirichlet[comp][edge_dof(eid, m)] = coef[m - 1];
                }
            }
            for m in 1..p {
                is_dir[edge_dof(eid, m)] = true;
            }
        }

        let mut bnd_free = vec![NONE; n_scalar];
        let mut bnd_scalar = Vec::new();
        for g in 0..n_scalar {
            if !is_dir[g] {
                bnd_free[g] = bnd_scalar.len();
                bnd_scalar.push(g);
            }
        }

        Self {
            order: p,
            n_elements: mesh.elements.len(),
            n_vertices,
            n_edges,
            n_modes: reference.n_modes(),
            n_bnd_local: reference.n_bnd,
            n_int_local: reference.n_int(),
            n_p_local: reference.n_pmodes(),
            bnd_free,
            bnd_scalar,
            dirichlet,
            elem_bnd,
            bnd_support,
        }
    }

    pub fn n_bnd_free(&self) -> usize {
        self.bnd_scalar.len()
    }

    pub fn n_pressure(&self) -> usize {
        self.n_elements * self.n_p_local
    }

    pub fn n_interior(&self) -> usize {
        self.n_elements * self.n_int_local
    }

    /// Size of the system after Dirichlet removal.
    pub fn n_free(&self) -> usize {
        2 * self.n_bnd_free() + self.n_pressure() + 2 * self.n_interior()
    }

    pub fn pressure_offset(&self) -> usize {
        2 * self.n_bnd_free()
    }

    pub fn interior_offset(&self, comp: usize) -> usize {
        2 * self.n_bnd_free() + self.n_pressure() + comp * self.n_interior()
    }

    pub fn pressure_index(&self, element: usize, mode: usize) -> usize {
        self.pressure_offset() + element * self.n_p_local + mode
    }

    /// Global free index of local velocity mode `l` of component `comp`, or
    /// `None` when the mode carries Dirichlet data.
    pub fn velocity_index(&self, element: usize, comp: usize, l: usize) -> Option<usize> {
        if l < self.n_bnd_local {
            let f = self.bnd_free[self.elem_bnd[element][l]];
            (f != NONE).then(|| comp * self.n_bnd_free() + f)
        } else {
            Some(self.interior_offset(comp) + element * self.n_int_local + (l - self.n_bnd_local))
        }
    }

    /// Prescribed value of local velocity mode `l` (zero for free modes).
    pub fn local_dirichlet(&self, element: usize, comp: usize, l: usize) -> f64 {
        if l < self.n_bnd_local {
            self.dirichlet[comp][self.elem_bnd[element][l]]
        } else {
            0.0
        }
    }

    pub fn classify(&self, index: usize) -> DofKind {
        let nb = self.n_bnd_free();
        if index < 2 * nb {
            DofKind::VelBnd { comp: index / nb, scalar: self.bnd_scalar[index % nb] }
        } else if index < self.interior_offset(0) {
            let r = index - self.pressure_offset();
            DofKind::Pressure { element: r / self.n_p_local, mode: r % self.n_p_local }
        } else {
            let r = index - self.interior_offset(0);
            let comp = r / self.n_interior();
            let r = r % self.n_interior();
            DofKind::VelInt { comp, element: r / self.n_int_local, mode: self.n_bnd_local + r % self.n_int_local }
        }
    }

    /// Elements whose local modes touch global free index `index`, with the
    /// local position (velocity mode within one component, or pressure mode).
    pub fn support(&self, index: usize) -> Vec<(usize, usize)> {
        match self.classify(index) {
            DofKind::VelBnd { scalar, .. } => self.bnd_support[scalar].clone(),
            DofKind::Pressure { element, mode } => vec![(element, mode)],
            DofKind::VelInt { element, mode, .. } => vec![(element, mode)],
        }
    }

    /// Element-local velocity coefficients (`2 * n_modes`, component-major)
    /// of a free vector, with Dirichlet data filled in.
    pub fn gather_velocity(&self, element: usize, x: &[f64], out: &mut [f64]) {
        let nm = self.n_modes;
        for comp in 0..2 {
            for l in 0..nm {
                out[comp * nm + l] = match self.velocity_index(element, comp, l) {
                    Some(g) => x[g],
                    None => self.local_dirichlet(element, comp, l),
                };
            }
        }
    }

    /// Element-local Dirichlet vector (`2 * n_modes`).
    pub fn element_dirichlet(&self, element: usize) -> Vec<f64> {
        let nm = self.n_modes;
        let mut d = vec![0.0; 2 * nm];
        for comp in 0..2 {
            for l in 0..self.n_bnd_local {
                d[comp * nm + l] = self.local_dirichlet(element, comp, l);
            }
        }
        d
    }

    /// Number of scalar boundary ids (vertices plus edge modes).
    pub fn n_bnd_scalar(&self) -> usize {
        self.bnd_free.len()
    }

    /// Cheap structural fingerprint used to check that a stored reduced model
    /// matches the mesh it is evaluated on.
    pub fn fingerprint(&self) -> String {
        format!(
            "p{}-el{}-v{}-e{}-free{}",
            self.order,
            self.n_elements,
            self.n_vertices,
            self.n_edges,
            self.n_free()
        )
    }
}
