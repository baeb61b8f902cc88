//! Finite-dimensional real normed spaces.
//!
//! Three norm families are supported: ℓᵖₙ, weighted ℓᵖₙ and polyhedral
//! norms `‖x‖ = maxᵢ |⟨aᵢ, x⟩|`. Weighted norms are `‖Dx‖_p` for a positive
//! diagonal `D` (`D = diag(wᵢ^{1/p})`, or `diag(wᵢ)` when `p = ∞`), so both
//! ℓᵖ kinds share one code path through [`Geometry::Scaled`].
//!
//! Everything that depends on the subdifferential of the norm goes through
//! one primitive: the member of `D(u)` that maximizes `x*(d)` for a given
//! direction `d`. The directional derivative `M_u(d)` is its value, the
//! canonical supporting functional is its value for `d = 0`, and Birkhoff
//! orthogonality reads off the maximizers for `±d`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::settings::Settings;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("invalid exponent {0}; expected p >= 1 or \"inf\"")]
    InvalidExponent(f64),
    #[error("expected {expected} weights, found {found}")]
    WeightCount { expected: usize, found: usize },
    #[error("weight {index} is {value}; weights must be positive and finite")]
    InvalidWeight { index: usize, value: f64 },
    #[error("polyhedral functionals span a rank-{rank} subspace of a {dim}-dimensional dual; the gauge is not a norm")]
    DegeneratePolyhedral { rank: usize, dim: usize },
    #[error("polyhedral vertex enumeration needs {0} linear solves; reduce the functional list")]
    TooManyFunctionals(u128),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("coordinate {0} is not finite")]
    NonFinite(usize),
    #[error("vector must be nonzero")]
    ZeroVector,
    #[error("expected a unit vector, norm is {0}")]
    NotUnit(f64),
    #[error("operation requires {required}; space is {actual}")]
    WrongKind { required: &'static str, actual: String },
    #[error("finite-difference quotients did not settle within the step schedule")]
    NoConvergence,
}

/// Exponent `p ∈ [1, ∞]`. Serialized as a number, or `"inf"` for `p = ∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn new(p: f64) -> Result<Self, SpaceError> {
        if p == f64::INFINITY {
            Ok(Exponent::Infinity)
        } else if p.is_finite() && p >= 1.0 {
            Ok(Exponent::Finite(p))
        } else {
            Err(SpaceError::InvalidExponent(p))
        }
    }

    pub fn conjugate(self) -> Exponent {
        match self {
            Exponent::Infinity => Exponent::Finite(1.0),
            Exponent::Finite(1.0) => Exponent::Infinity,
            Exponent::Finite(p) => Exponent::Finite(p / (p - 1.0)),
        }
    }

    pub fn is_one(self) -> bool {
        self == Exponent::Finite(1.0)
    }

    pub fn is_infinite(self) -> bool {
        self == Exponent::Infinity
    }

    /// `1 < p < ∞`: the norm is smooth and strictly convex.
    pub fn is_smooth(self) -> bool {
        matches!(self, Exponent::Finite(p) if p > 1.0)
    }

    pub fn value(self) -> f64 {
        match self {
            Exponent::Finite(p) => p,
            Exponent::Infinity => f64::INFINITY,
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => f.write_str("inf"),
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(p) => serializer.serialize_f64(*p),
            Exponent::Infinity => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(p) => Exponent::new(p).map_err(serde::de::Error::custom),
            Raw::Text(s) => match s.to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "∞" => Ok(Exponent::Infinity),
                other => other
                    .parse::<f64>()
                    .map_err(serde::de::Error::custom)
                    .and_then(|p| Exponent::new(p).map_err(serde::de::Error::custom)),
            },
        }
    }
}

/// Declarative description of a norm, as it appears in JSON.
#[derive(Clone, Debug, PartialEq)]
pub enum NormKind {
    Lp { p: Exponent },
    WeightedLp { p: Exponent, weights: Vec<f64> },
    Polyhedral { functionals: Vec<Vec<f64>> },
}

#[derive(Clone, Debug)]
enum Geometry {
    /// `‖x‖ = ‖scale ∘ x‖_p`; `scale = None` for the unweighted norm.
    Scaled { p: Exponent, scale: Option<DVector<f64>> },
    /// Rows are the functionals `aᵢ`; `vertices` are the extreme points of
    /// the unit ball.
    Polytope { rows: DMatrix<f64>, vertices: Vec<DVector<f64>> },
}

/// A finite-dimensional real normed space. Immutable after construction.
#[derive(Clone, Debug)]
pub struct NormSpec {
    dim: usize,
    kind: NormKind,
    geometry: Geometry,
}

impl PartialEq for NormSpec {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.kind == other.kind
    }
}

/// Limit on `C(m, n)·2ⁿ` for polyhedral vertex enumeration.
const MAX_VERTEX_SYSTEMS: u128 = 4_000_000;

impl NormSpec {
    pub fn new(dim: usize, kind: NormKind) -> Result<Self, SpaceError> {
        if dim == 0 {
            return Err(SpaceError::ZeroDimension);
        }
        let geometry = match &kind {
            NormKind::Lp { p } => {
                Exponent::new(p.value())?;
                Geometry::Scaled { p: *p, scale: None }
            }
            NormKind::WeightedLp { p, weights } => {
                Exponent::new(p.value())?;
                if weights.len() != dim {
                    return Err(SpaceError::WeightCount { expected: dim, found: weights.len() });
                }
                if let Some((index, &value)) =
                    weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0))
                {
                    return Err(SpaceError::InvalidWeight { index, value });
                }
                let scale = DVector::from_iterator(
                    dim,
                    weights.iter().map(|w| match p {
                        Exponent::Infinity => *w,
                        Exponent::Finite(p) => w.powf(1.0 / p),
                    }),
                );
                Geometry::Scaled { p: *p, scale: Some(scale) }
            }
            NormKind::Polyhedral { functionals } => {
                for row in functionals {
                    if row.len() != dim {
                        return Err(SpaceError::DimensionMismatch { expected: dim, found: row.len() });
                    }
                    if let Some(i) = row.iter().position(|v| !v.is_finite()) {
                        return Err(SpaceError::NonFinite(i));
                    }
                }
                let rows = DMatrix::from_fn(functionals.len(), dim, |i, j| functionals[i][j]);
                let rank = matrix_rank(&rows);
                if rank < dim {
                    return Err(SpaceError::DegeneratePolyhedral { rank, dim });
                }
                let vertices = polytope_vertices(&rows)?;
                Geometry::Polytope { rows, vertices }
            }
        };
        Ok(Self { dim, kind, geometry })
    }

    pub fn lp(dim: usize, p: f64) -> Result<Self, SpaceError> {
        Self::new(dim, NormKind::Lp { p: Exponent::new(p)? })
    }

    pub fn l1(dim: usize) -> Self {
        Self::lp(dim, 1.0).expect("valid ℓ¹ space")
    }

    pub fn l2(dim: usize) -> Self {
        Self::lp(dim, 2.0).expect("valid ℓ² space")
    }

    pub fn linf(dim: usize) -> Self {
        Self::lp(dim, f64::INFINITY).expect("valid ℓ∞ space")
    }

    pub fn weighted(dim: usize, p: f64, weights: Vec<f64>) -> Result<Self, SpaceError> {
        Self::new(dim, NormKind::WeightedLp { p: Exponent::new(p)?, weights })
    }

    pub fn polyhedral(functionals: Vec<Vec<f64>>) -> Result<Self, SpaceError> {
        let dim = functionals.first().map_or(0, Vec::len);
        Self::new(dim, NormKind::Polyhedral { functionals })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &NormKind {
        &self.kind
    }

    /// `Some(p)` for unweighted ℓᵖ.
    pub fn lp_exponent(&self) -> Option<Exponent> {
        match &self.kind {
            NormKind::Lp { p } => Some(*p),
            _ => None,
        }
    }

    /// `Some(p)` for ℓᵖ and weighted ℓᵖ.
    pub fn scaled_exponent(&self) -> Option<Exponent> {
        match &self.geometry {
            Geometry::Scaled { p, .. } => Some(*p),
            Geometry::Polytope { .. } => None,
        }
    }

    pub fn is_euclidean(&self) -> bool {
        self.lp_exponent() == Some(Exponent::Finite(2.0))
    }

    /// Every nonzero point is smooth.
    pub fn is_smooth_space(&self) -> bool {
        self.dim == 1 || self.scaled_exponent().is_some_and(Exponent::is_smooth)
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            NormKind::Lp { p } => format!("l^{p}_{}", self.dim),
            NormKind::WeightedLp { p, .. } => format!("weighted l^{p}_{}", self.dim),
            NormKind::Polyhedral { functionals } => {
                format!("polyhedral norm on R^{} ({} functionals)", self.dim, functionals.len())
            }
        }
    }

    /// Vertices of the unit ball of a polyhedral norm.
    pub fn polytope_vertices(&self) -> Option<&[DVector<f64>]> {
        match &self.geometry {
            Geometry::Polytope { vertices, .. } => Some(vertices),
            Geometry::Scaled { .. } => None,
        }
    }

    pub fn check(&self, x: &DVector<f64>) -> Result<(), SpaceError> {
        if x.len() != self.dim {
            return Err(SpaceError::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        match x.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(SpaceError::NonFinite(i)),
            None => Ok(()),
        }
    }

    pub fn norm(&self, x: &DVector<f64>) -> Result<f64, SpaceError> {
        self.check(x)?;
        Ok(self.norm_unchecked(x))
    }

    /// Norm without the dimension check; callers guarantee `x.len() == dim`.
    pub fn norm_unchecked(&self, x: &DVector<f64>) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.geometry {
            Geometry::Scaled { p, scale: None } => lp_norm(x.as_slice(), *p),
            Geometry::Scaled { p, scale: Some(d) } => lp_norm(x.component_mul(d).as_slice(), *p),
            Geometry::Polytope { rows, .. } => (rows * x).amax(),
        }
    }

    pub fn dual_norm(&self, phi: &Functional) -> Result<f64, SpaceError> {
        self.check(phi.coords())?;
        Ok(self.dual_norm_unchecked(phi.coords()))
    }

    pub(crate) fn dual_norm_unchecked(&self, phi: &DVector<f64>) -> f64 {
        match &self.geometry {
            Geometry::Scaled { p, scale: None } => lp_norm(phi.as_slice(), p.conjugate()),
            Geometry::Scaled { p, scale: Some(d) } => lp_norm(phi.component_div(d).as_slice(), p.conjugate()),
            Geometry::Polytope { vertices, .. } => {
                vertices.iter().map(|v| phi.dot(v).abs()).fold(0.0, f64::max)
            }
        }
    }

    /// `e_i / ‖e_i‖`.
    pub fn unit_basis_vector(&self, i: usize) -> DVector<f64> {
        let mut e = DVector::zeros(self.dim);
        e[i] = 1.0;
        let n = self.norm_unchecked(&e);
        e / n
    }

    /// Member of `D(u)` maximizing `x*(direction)`. `u` must be nonzero.
    pub(crate) fn extreme_support(&self, u: &DVector<f64>, direction: &DVector<f64>, tol: f64) -> DVector<f64> {
        match &self.geometry {
            Geometry::Scaled { p, scale: None } => {
                DVector::from_vec(lp_extreme(u.as_slice(), *p, direction.as_slice(), tol))
            }
            Geometry::Scaled { p, scale: Some(d) } => {
                let du = u.component_mul(d);
                let dd = direction.component_mul(d);
                DVector::from_vec(lp_extreme(du.as_slice(), *p, dd.as_slice(), tol)).component_mul(d)
            }
            Geometry::Polytope { rows, .. } => {
                let candidates = active_polytope_functionals(rows, u, tol);
                candidates
                    .into_iter()
                    .map(|a| (a.dot(direction), a))
                    .fold(None::<(f64, DVector<f64>)>, |best, (v, a)| match best {
                        Some((bv, _)) if bv >= v => best,
                        _ => Some((v, a)),
                    })
                    .map(|(_, a)| a)
                    .expect("a nonzero point has an active functional")
            }
        }
    }

    /// Whether `D(x)` is a singleton.
    pub fn is_smooth_point(&self, x: &DVector<f64>, settings: &Settings) -> Result<bool, SpaceError> {
        self.check(x)?;
        if x.iter().all(|v| *v == 0.0) {
            return Err(SpaceError::ZeroVector);
        }
        Ok(self.smooth_unchecked(x, settings.tol))
    }

    fn smooth_unchecked(&self, x: &DVector<f64>, tol: f64) -> bool {
        match &self.geometry {
            Geometry::Scaled { p, scale } => {
                let y = match scale {
                    Some(d) => x.component_mul(d),
                    None => x.clone(),
                };
                match p {
                    Exponent::Infinity => {
                        let m = y.amax();
                        y.iter().filter(|v| v.abs() >= m * (1.0 - tol)).count() == 1
                    }
                    Exponent::Finite(p) if *p == 1.0 => y.iter().all(|v| *v != 0.0),
                    Exponent::Finite(_) => true,
                }
            }
            Geometry::Polytope { rows, .. } => {
                let candidates = active_polytope_functionals(rows, x, tol);
                let first = &candidates[0];
                let scale = 1.0 + first.amax();
                candidates.iter().all(|c| (c - first).amax() <= tol * scale)
            }
        }
    }

    /// A supporting functional at `x` together with the smoothness verdict.
    pub fn support_set(&self, x: &DVector<f64>, settings: &Settings) -> Result<SupportDescription, SpaceError> {
        self.check(x)?;
        if x.iter().all(|v| *v == 0.0) {
            return Err(SpaceError::ZeroVector);
        }
        let zero = DVector::zeros(self.dim);
        let witness = Functional::new(self.extreme_support(x, &zero, settings.tol));
        let is_smooth = self.smooth_unchecked(x, settings.tol);
        Ok(SupportDescription {
            point: x.clone(),
            kind: if is_smooth { SupportKind::Singleton } else { SupportKind::Face },
            witness,
            is_smooth,
        })
    }

    fn require_unit(&self, u: &DVector<f64>, settings: &Settings) -> Result<(), SpaceError> {
        self.check(u)?;
        let n = self.norm_unchecked(u);
        if (n - 1.0).abs() > settings.tol {
            return Err(SpaceError::NotUnit(n));
        }
        Ok(())
    }

    /// `M_u(x) = lim_{t→0⁺} (‖u+tx‖ − ‖u‖)/t = max{x*(x) : x* ∈ D(u)}`.
    pub fn directional_derivative(
        &self,
        u: &DVector<f64>,
        x: &DVector<f64>,
        settings: &Settings,
    ) -> Result<f64, SpaceError> {
        self.require_unit(u, settings)?;
        self.check(x)?;
        Ok(self.extreme_support(u, x, settings.tol).dot(x))
    }

    /// `M_u(x)` from one-sided difference quotients with steps `2^-k`,
    /// `k = 10..=40`, extrapolated from the first pair that agrees to
    /// `settings.fd_tol`. Convexity makes the quotient monotone in `t`.
    pub fn directional_derivative_numeric(
        &self,
        u: &DVector<f64>,
        x: &DVector<f64>,
        settings: &Settings,
    ) -> Result<f64, SpaceError> {
        self.require_unit(u, settings)?;
        self.check(x)?;
        let base = self.norm_unchecked(u);
        let mut previous: Option<f64> = None;
        for k in 10..=40 {
            let t = (-(k as f64)).exp2();
            let quotient = (self.norm_unchecked(&(u + x * t)) - base) / t;
            if let Some(prev) = previous {
                if (quotient - prev).abs() <= settings.fd_tol {
                    return Ok(2.0 * quotient - prev);
                }
            }
            previous = Some(quotient);
        }
        Err(SpaceError::NoConvergence)
    }

    /// Decides whether the unit functional `x_star` is a w*-exposed point of
    /// the dual ball, i.e. the only supporting functional at some smooth
    /// unit vector, and returns that vector when it is.
    pub fn is_w_star_exposed(&self, x_star: &Functional, settings: &Settings) -> Result<Exposure, SpaceError> {
        self.check(x_star.coords())?;
        let dual = self.dual_norm_unchecked(x_star.coords());
        if (dual - 1.0).abs() > settings.tol {
            return Err(SpaceError::NotUnit(dual));
        }
        let tol = settings.tol;
        let candidate = match &self.geometry {
            Geometry::Scaled { p, scale } => {
                let y = match scale {
                    Some(d) => x_star.coords().component_div(d),
                    None => x_star.coords().clone(),
                };
                let z = match p {
                    Exponent::Finite(p) if *p > 1.0 => {
                        let q = p / (p - 1.0);
                        Ok(y.map(|v| signum0(v) * v.abs().powf(q - 1.0)))
                    }
                    Exponent::Finite(_) => match y.iter().position(|v| (v.abs() - 1.0).abs() > tol) {
                        Some(i) => Err(format!(
                            "coordinate {i} has |x*_{i}| < 1, so every norming point vanishes there and is not smooth"
                        )),
                        None => Ok(y.map(signum0) / self.dim as f64),
                    },
                    Exponent::Infinity => {
                        let support: Vec<usize> = (0..self.dim).filter(|&i| y[i].abs() > tol).collect();
                        if support.len() == 1 {
                            let mut z = DVector::zeros(self.dim);
                            z[support[0]] = signum0(y[support[0]]);
                            Ok(z)
                        } else {
                            Err(format!(
                                "x* has {} nonzero coordinates; only ±coordinate functionals are exposed",
                                support.len()
                            ))
                        }
                    }
                };
                z.map(|z| match scale {
                    Some(d) => z.component_div(d),
                    None => z,
                })
            }
            Geometry::Polytope { rows, vertices } => exposing_facet_point(rows, vertices, x_star.coords(), tol),
        };
        let point = match candidate {
            Ok(point) => point,
            Err(diagnosis) => return Ok(Exposure { exposed: false, point: None, diagnosis }),
        };
        let n = self.norm_unchecked(&point);
        if n == 0.0 {
            return Ok(Exposure { exposed: false, point: None, diagnosis: "degenerate exposing point".into() });
        }
        let point = point / n;
        let support = self.support_set(&point, settings)?;
        let agrees = (support.witness.coords() - x_star.coords()).amax() <= tol * (1.0 + x_star.coords().amax()) * 10.0;
        if support.is_smooth && agrees {
            Ok(Exposure { exposed: true, point: Some(point), diagnosis: "exposed".into() })
        } else {
            Ok(Exposure {
                exposed: false,
                point: None,
                diagnosis: "candidate norming point is not smooth or has another supporting functional".into(),
            })
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawSpec {
    Lp { dim: usize, p: Exponent },
    WeightedLp { dim: usize, p: Exponent, weights: Vec<f64> },
    Polyhedral { dim: usize, functionals: Vec<Vec<f64>> },
}

impl Serialize for NormSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let raw = match &self.kind {
            NormKind::Lp { p } => RawSpec::Lp { dim: self.dim, p: *p },
            NormKind::WeightedLp { p, weights } => RawSpec::WeightedLp { dim: self.dim, p: *p, weights: weights.clone() },
            NormKind::Polyhedral { functionals } => {
                RawSpec::Polyhedral { dim: self.dim, functionals: functionals.clone() }
            }
        };
        raw.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for NormSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let (dim, kind) = match RawSpec::deserialize(deserializer)? {
            RawSpec::Lp { dim, p } => (dim, NormKind::Lp { p }),
            RawSpec::WeightedLp { dim, p, weights } => (dim, NormKind::WeightedLp { p, weights }),
            RawSpec::Polyhedral { dim, functionals } => (dim, NormKind::Polyhedral { functionals }),
        };
        NormSpec::new(dim, kind).map_err(serde::de::Error::custom)
    }
}

/// Element of the dual space acting by the dot product.
#[derive(Clone, Debug, PartialEq)]
pub struct Functional(DVector<f64>);

impl Functional {
    pub fn new(coords: DVector<f64>) -> Self {
        Self(coords)
    }

    pub fn from_slice(coords: &[f64]) -> Self {
        Self(DVector::from_column_slice(coords))
    }

    /// Coordinate functional `e_i*`.
    pub fn coordinate(dim: usize, i: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[i] = 1.0;
        Self(v)
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn apply(&self, x: &DVector<f64>) -> f64 {
        self.0.dot(x)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(&self.0 * s)
    }
}

impl Serialize for Functional {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.0.as_slice().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Functional {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(Self(DVector::from_vec(Vec::<f64>::deserialize(deserializer)?)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportKind {
    Singleton,
    Face,
}

/// One member of `D(point / ‖point‖)` and whether it is the only one.
#[derive(Clone, Debug)]
pub struct SupportDescription {
    pub point: DVector<f64>,
    pub kind: SupportKind,
    pub witness: Functional,
    pub is_smooth: bool,
}

/// Result of [`NormSpec::is_w_star_exposed`].
#[derive(Clone, Debug)]
pub struct Exposure {
    pub exposed: bool,
    /// Smooth unit vector whose only supporting functional is the input.
    pub point: Option<DVector<f64>>,
    pub diagnosis: String,
}

/// Coordinatewise sign with `sign(0) = 0`.
pub fn sign_map(x: &DVector<f64>) -> DVector<f64> {
    x.map(signum0)
}

/// Indices of the nonzero coordinates.
pub fn support_indices(x: &DVector<f64>) -> Vec<usize> {
    x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect()
}

pub(crate) fn signum0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn lp_norm(x: &[f64], p: Exponent) -> f64 {
    let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    match p {
        Exponent::Infinity => m,
        Exponent::Finite(1.0) => x.iter().map(|v| v.abs()).sum(),
        Exponent::Finite(2.0) => m * x.iter().map(|v| (v / m) * (v / m)).sum::<f64>().sqrt(),
        Exponent::Finite(p) => m * x.iter().map(|v| (v.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p),
    }
}

fn lp_extreme(u: &[f64], p: Exponent, direction: &[f64], tol: f64) -> Vec<f64> {
    match p {
        Exponent::Finite(p) if p > 1.0 => {
            let n = lp_norm(u, Exponent::Finite(p));
            if p == 2.0 {
                u.iter().map(|v| v / n).collect()
            } else {
                u.iter().map(|v| signum0(*v) * (v.abs() / n).powf(p - 1.0)).collect()
            }
        }
        Exponent::Finite(_) => u
            .iter()
            .zip(direction)
            .map(|(v, d)| if *v != 0.0 { signum0(*v) } else { signum0(*d) })
            .collect(),
        Exponent::Infinity => {
            let m = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let mut best: Option<(usize, f64)> = None;
            for (j, v) in u.iter().enumerate() {
                if v.abs() >= m * (1.0 - tol) {
                    let value = signum0(*v) * direction[j];
                    if best.is_none_or(|(_, b)| value > b) {
                        best = Some((j, value));
                    }
                }
            }
            let j = best.expect("nonzero vector has an active coordinate").0;
            let mut g = vec![0.0; u.len()];
            g[j] = signum0(u[j]);
            g
        }
    }
}

/// Active functionals `sign(⟨aᵢ,x⟩)·aᵢ` with `|⟨aᵢ,x⟩| ≥ (1 − tol)‖x‖`.
fn active_polytope_functionals(rows: &DMatrix<f64>, x: &DVector<f64>, tol: f64) -> Vec<DVector<f64>> {
    let values = rows * x;
    let m = values.amax();
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() >= m * (1.0 - tol))
        .map(|(i, v)| rows.row(i).transpose() * signum0(*v))
        .collect()
}

fn exposing_facet_point(
    rows: &DMatrix<f64>,
    vertices: &[DVector<f64>],
    x_star: &DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>, String> {
    let scale = 1.0 + x_star.amax();
    let matches_functional = (0..rows.nrows()).any(|i| {
        let a = rows.row(i).transpose();
        (&a - x_star).amax() <= tol * scale || (&a + x_star).amax() <= tol * scale
    });
    if !matches_functional {
        return Err("x* is not ± one of the defining functionals, so it is not a vertex of the dual ball".into());
    }
    let facet: Vec<&DVector<f64>> = vertices.iter().filter(|v| x_star.dot(v) >= 1.0 - 1e-9).collect();
    if facet.is_empty() {
        return Err("no vertex of the unit ball attains x* = 1".into());
    }
    let centroid = facet.iter().fold(DVector::zeros(x_star.len()), |acc, v| acc + *v) / facet.len() as f64;
    Ok(centroid)
}

fn matrix_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let singular = m.clone().svd(false, false).singular_values;
    let top = singular.max();
    if top == 0.0 {
        return 0;
    }
    singular.iter().filter(|s| **s > top * 1e-10).count()
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// Extreme points of `{x : |⟨aᵢ,x⟩| ≤ 1 ∀i}` by solving every `n×n`
/// subsystem `⟨a_j, v⟩ = ±1` and keeping the feasible, distinct solutions.
fn polytope_vertices(rows: &DMatrix<f64>) -> Result<Vec<DVector<f64>>, SpaceError> {
    let (m, n) = rows.shape();
    let systems = binomial(m, n).saturating_mul(1u128 << n.min(100));
    if systems > MAX_VERTEX_SYSTEMS {
        return Err(SpaceError::TooManyFunctionals(systems));
    }
    let row_norms: Vec<f64> = (0..m).map(|i| rows.row(i).norm()).collect();
    let mut vertices: Vec<DVector<f64>> = Vec::new();
    let mut combo: Vec<usize> = (0..n).collect();
    loop {
        let sub = DMatrix::from_fn(n, n, |i, j| rows[(combo[i], j)]);
        let volume: f64 = combo.iter().map(|&i| row_norms[i]).product();
        let lu = sub.lu();
        if lu.determinant().abs() > 1e-12 * volume {
            for signs in 0u64..(1u64 << n) {
                let rhs = DVector::from_fn(n, |i, _| if signs >> i & 1 == 1 { -1.0 } else { 1.0 });
                let Some(v) = lu.solve(&rhs) else { continue };
                if (rows * &v).amax() <= 1.0 + 1e-9 {
                    let fresh = vertices.iter().all(|w| (w - &v).amax() > 1e-9 * (1.0 + v.amax()));
                    if fresh {
                        vertices.push(v);
                    }
                }
            }
        }
        // next combination in lexicographic order
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(vertices);
            }
            i -= 1;
            if combo[i] < m - n + i {
                break;
            }
            if i == 0 {
                return Ok(vertices);
            }
        }
        combo[i] += 1;
        for j in i + 1..n {
            combo[j] = combo[j - 1] + 1;
        }
    }
}
