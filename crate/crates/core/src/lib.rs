//! Symmetry reduction of mechanical systems by stages.
//!
//! The crate builds up in layers:
//!
//! * [`algebra`] — Lie algebras from structure constants: bracket, coadjoint
//!   action, validation, input-file parsing.
//! * [`stages`] — chains of nested ideals, per-stage horizontal lifts, the
//!   bilinear `a`/`b` forms and the bracket reassembled stage by stage.
//! * [`dynamics`] — Euler-Poincare flows and their nonholonomic variants on
//!   the algebra, with constraints handled by parametrization.
//! * [`bundle`] — the same reduction over a trivial bundle (shape space
//!   times group): connection, curvature, vertical and horizontal equations.
//! * [`disk`] — the rolling-disk benchmark with a hand-written reduced
//!   system and a full-configuration Lagrange-multiplier oracle.
//! * [`integrate`] — fixed-step RK4 and trajectory storage.
//!
//! Everything is immutable after construction and safe to share across
//! threads; evaluator closures are required to be `Send + Sync`.

pub mod algebra;
pub mod bundle;
pub mod disk;
pub mod dynamics;
pub mod error;
pub mod integrate;
pub mod stages;
pub mod systems;

pub use algebra::{AlgCovector, AlgVector, LieAlgebraSpec};
pub use error::{Error, Result};
pub use integrate::Trajectory;
pub use stages::{InvariantMetric, StageChain, StagedStructure};
