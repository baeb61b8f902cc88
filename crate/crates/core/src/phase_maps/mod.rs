//! The map under study: oracles, functional-equation checks and generators
//! of ground-truth phase-isometries `x ↦ ε(x)·Tx`.

mod checks;
mod generate;
mod linear;
mod oracle;
mod signs;

pub use checks::{
    check_phase_equation, check_wigner_equation, lemma21_invariants, CheckError, EquationReport, InvariantOutcome,
    InvariantReport, PairVerdict,
};
pub use generate::{
    generate_isometry, generate_phase_isometry, phase_isometry_with_rule, random_points, sign_flip_example,
    sine_curve, GenerateError, GeneratedPhaseIsometry, HiddenTruth, IsometryDraw, SignRule,
};
pub use linear::{IsometryCheck, LinearMap};
pub use oracle::{MapFn, OracleError, PhaseMapOracle, PointKey};
pub use signs::{canonical_ray, format_key, point_key, ray_key, SignAssignment, SignKeying};
