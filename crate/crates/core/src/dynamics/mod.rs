//! Ground-truth dynamical systems and their numerical integration.

mod integrate;
mod series;
mod systems;

pub use integrate::{integrate_ode, integrate_pde, rk4_trajectory, DIVERGENCE_BOUND, MIN_PDE_GRID};
pub use series::{Channel, FieldSeries, FieldSnapshot, Grid, TrajectorySeries};
pub use systems::{
    builtin_system, builtin_system_with, FieldPoint, OdeFn, OperatorSet, PdeFn, Rhs, SystemKind, SystemSpec,
    TrueTerms, SYSTEM_NAMES,
};
