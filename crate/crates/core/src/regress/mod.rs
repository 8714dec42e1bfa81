//! Sparse regression of governing laws: derivatives, feature libraries,
//! STLSQ, and symbolic output.

mod derivative;
mod library;
mod model;
mod stlsq;

pub use derivative::{central_difference, central_difference_raw, interior_states, Derivative};
pub use library::{build_library, CandidateLibrary, CompiledLibrary, LibrarySpec};
pub use model::{evaluate_rhs, format_sig, ode_system, pde_system, to_symbolic, SparseModel};
pub use stlsq::{
    stlsq, stlsq_matrix, support_oracle, support_oracle_matrix, OracleFit, StlsqFit, DEFAULT_MAX_ITER,
    ORACLE_MAX_FEATURES, ORACLE_MAX_K,
};
