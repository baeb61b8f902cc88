//! Birkhoff orthogonality: `x ⊥ y` iff `‖x + ty‖ ≥ ‖x‖` for every real `t`.
//!
//! Decided by James' criterion: with `x̂ = x/‖x‖`, `x ⊥ y` iff
//! `−M_x̂(−y) ≤ 0 ≤ M_x̂(y)`, i.e. some `x* ∈ D(x̂)` has `x*(y) = 0`. Both
//! one-sided derivatives come from the extreme supporting functionals for
//! `±y`, so the functional witnessing orthogonality is their convex
//! combination.

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::settings::Settings;
use crate::space::{Exponent, Functional, NormSpec, SpaceError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrthogonalityError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("operation requires unweighted l^1; space is {0}")]
    WrongSpaceKind(String),
}

/// Outcome of a Birkhoff test.
#[derive(Clone, Debug, Serialize)]
pub struct OrthogonalityVerdict {
    pub orthogonal: bool,
    /// The strict test failed and the verdict was decided by the tolerance margin.
    pub near_tie: bool,
    /// `M_x̂(y)`.
    pub upper: f64,
    /// `−M_x̂(−y)`.
    pub lower: f64,
    /// A supporting functional at `x` annihilating `y` when orthogonal.
    pub witness: Option<Functional>,
}

impl OrthogonalityVerdict {
    fn trivial() -> Self {
        Self { orthogonal: true, near_tie: false, upper: 0.0, lower: 0.0, witness: None }
    }
}

pub fn is_birkhoff_orthogonal(
    space: &NormSpec,
    x: &DVector<f64>,
    y: &DVector<f64>,
    settings: &Settings,
) -> Result<OrthogonalityVerdict, SpaceError> {
    space.check(x)?;
    space.check(y)?;
    let nx = space.norm_unchecked(x);
    let ny = space.norm_unchecked(y);
    if nx == 0.0 || ny == 0.0 {
        return Ok(OrthogonalityVerdict::trivial());
    }
    let x_hat = x / nx;
    let hi = space.extreme_support(&x_hat, y, settings.tol);
    let lo = space.extreme_support(&x_hat, &(-y), settings.tol);
    let upper = hi.dot(y);
    let lower = lo.dot(y);
    let strict = lower <= 0.0 && 0.0 <= upper;
    let margin = settings.tol * ny;
    let orthogonal = lower <= margin && -margin <= upper;
    let witness = orthogonal.then(|| {
        let phi = if upper - lower > 0.0 {
            let lambda = (-lower / (upper - lower)).clamp(0.0, 1.0);
            &hi * lambda + &lo * (1.0 - lambda)
        } else {
            hi.clone()
        };
        Functional::new(phi)
    });
    Ok(OrthogonalityVerdict { orthogonal, near_tie: orthogonal && !strict, upper, lower, witness })
}

/// Hyperplane `Z = {z : normal(z) = 0}`.
#[derive(Clone, Debug, Serialize)]
pub struct Hyperplane {
    pub normal: Functional,
}

impl Hyperplane {
    pub fn contains(&self, z: &DVector<f64>, tol: f64) -> bool {
        self.normal.apply(z).abs() <= tol * (1.0 + z.amax())
    }

    /// Euclidean projection of `v` onto `Z`, used to sample points of `Z`.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let a = self.normal.coords();
        v - a * (a.dot(v) / a.dot(a))
    }
}

/// `Z` from one supporting functional at `x`; `x ⊥ z` for every `z ∈ Z`.
pub fn orthogonal_hyperplane(space: &NormSpec, x: &DVector<f64>, settings: &Settings) -> Result<Hyperplane, SpaceError> {
    let support = space.support_set(x, settings)?;
    Ok(Hyperplane { normal: support.witness })
}

/// The three ℓ¹ predicates, evaluated independently.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct L1Triple {
    pub disjoint_support: bool,
    pub birkhoff: bool,
    pub norm_identity: bool,
}

impl L1Triple {
    pub fn agree(&self) -> bool {
        self.disjoint_support == self.birkhoff && self.birkhoff == self.norm_identity
    }
}

pub fn l1_orthogonality_triple(
    space: &NormSpec,
    x: &DVector<f64>,
    y: &DVector<f64>,
    settings: &Settings,
) -> Result<L1Triple, OrthogonalityError> {
    if space.lp_exponent() != Some(Exponent::Finite(1.0)) {
        return Err(OrthogonalityError::WrongSpaceKind(space.describe()));
    }
    space.check(x)?;
    space.check(y)?;
    let disjoint_support = x.iter().zip(y.iter()).all(|(a, b)| *a == 0.0 || *b == 0.0);
    let birkhoff = is_birkhoff_orthogonal(space, x, y, settings)?.orthogonal;
    let nx = space.norm_unchecked(x);
    let ny = space.norm_unchecked(y);
    let target = nx + ny;
    let close = |v: f64| (v - target).abs() <= settings.tol * (1.0 + target);
    let norm_identity = close(space.norm_unchecked(&(x + y))) && close(space.norm_unchecked(&(x - y)));
    Ok(L1Triple { disjoint_support, birkhoff, norm_identity })
}

/// Minimum of `t ↦ ‖x + ty‖` by golden-section search over
/// `|t| ≤ 2‖x‖ / max(‖y‖, 1e-12)`. Returns `(t*, min)`.
pub fn minimize_along(space: &NormSpec, x: &DVector<f64>, y: &DVector<f64>) -> (f64, f64) {
    let nx = space.norm_unchecked(x);
    let ny = space.norm_unchecked(y);
    let bound = 2.0 * nx / ny.max(1e-12);
    let f = |t: f64| space.norm_unchecked(&(x + y * t));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (-bound, bound);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + bound) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let t = (a + b) / 2.0;
    [(0.0, nx), (t, f(t)), (c, fc), (d, fd)]
        .into_iter()
        .fold((0.0, f64::INFINITY), |acc, cand| if cand.1 < acc.1 { cand } else { acc })
}
