//! Spectral-element discretization of the steady Oseen problem.

pub mod assembly;
pub mod basis;
pub mod element;
pub mod entry;
pub mod field;
pub mod layout;
pub mod quadrature;
pub mod reference;

pub use assembly::{BlockSystem, Discretization, Forcing, GlobalSystem, SparseStructure};
pub use basis::{eval_basis, Basis1D};
pub use entry::{evaluate_entry, evaluate_rhs_entry, EntryEvaluator};
pub use field::{evaluate_solution, FlowState, PointFunctional};
pub use layout::{DofKind, DofLayout};
pub use quadrature::{gll_rule, QuadratureRule};
pub use reference::ReferenceElement;
