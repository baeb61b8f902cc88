//! Geometry of finite-dimensional real normed spaces and a decomposition
//! engine for phase-isometries.
//!
//! A map `f: X -> Y` is a phase-isometry when
//! `{‖f(x)+f(y)‖, ‖f(x)−f(y)‖} = {‖x+y‖, ‖x−y‖}` for all `x, y`. The crate
//! checks that equation against black-box oracles and, for surjective
//! oracles on smooth, ℓ∞ₙ and ℓ¹ₙ domains, factors them as `ε·T` with `T` a
//! linear isometry and `ε` a sign function.
//!
//! Module map:
//! - [`space`]: norms, dual norms, supporting functionals, directional
//!   derivatives, smooth / w*-exposed points.
//! - [`orthogonality`]: Birkhoff orthogonality and its ℓ¹ characterizations.
//! - [`phase_maps`]: oracles, functional-equation checks, ground-truth
//!   generators.
//! - [`decomposition`]: sign pinning, two-dimensional normalization,
//!   projective recovery, functional recovery and the decomposition routes.
//! - [`campaign`]: seeded generate → decompose → score campaigns.

pub mod campaign;
pub mod decomposition;
pub mod orthogonality;
pub mod phase_maps;
pub mod rng;
pub mod settings;
pub mod space;

pub use decomposition::{decompose, DecomposeOptions, DecompositionCertificate, DecompositionError, Route};
pub use phase_maps::{LinearMap, PhaseMapOracle, SignAssignment};
pub use settings::Settings;
pub use space::{Exponent, Functional, NormKind, NormSpec, SpaceError};
