//! Factoring a phase-isometry oracle as `x ↦ ε(x)·Tx`.
//!
//! Every route ends in the same certification step: `T` is assembled from
//! basis images, its global sign is fixed, each logged query `x` gets the
//! sign `ε(x)` minimizing `‖f(x) ∓ Tx‖`, and the phase equation is replayed
//! through `ε·T` on fresh pairs.

mod functional;
mod pinning;
mod projective;
mod routes;
mod two_dim;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phase_maps::{LinearMap, OracleError, PhaseMapOracle, SignAssignment, SignKeying};
use crate::rng::{derive, gaussian_vector, seeded, GENERATOR};
use crate::settings::Settings;
use crate::space::{Exponent, NormSpec, SpaceError};

pub use functional::{recover_functional, FunctionalRecovery, StabilizationStep};
pub use pinning::{pin_signs, Evaluator, Homogenized, SignPinning};
pub use projective::{recover_projective_linear, ProjectiveRecovery};
pub use two_dim::{auerbach_basis, normalize_two_dim, test_grid, GridPoint, TwoDimNormalization};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Auto,
    OneDim,
    Smooth,
    Linf,
    L1,
    Generic,
}

impl Route {
    pub const ALL: [Route; 6] = [Route::Auto, Route::OneDim, Route::Smooth, Route::Linf, Route::L1, Route::Generic];

    pub fn name(self) -> &'static str {
        match self {
            Route::Auto => "auto",
            Route::OneDim => "one_dim",
            Route::Smooth => "smooth",
            Route::Linf => "linf",
            Route::L1 => "l1",
            Route::Generic => "generic",
        }
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Route {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Route::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown route `{s}` (expected auto, one_dim, smooth, linf, l1 or generic)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecomposeOptions {
    pub route: Route,
    /// The caller asserts that the oracle is onto its codomain.
    pub declared_surjective: bool,
    /// Seed for random probes and verification pairs.
    pub seed: u64,
    pub settings: Settings,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self { route: Route::Auto, declared_surjective: false, seed: 0, settings: Settings::default() }
    }
}

impl DecomposeOptions {
    pub fn surjective(route: Route, seed: u64) -> Self {
        Self { route, declared_surjective: true, seed, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecompositionError {
    #[error("not decomposable: {reason} (witness {witness:?})")]
    NotDecomposable { reason: String, witness: Vec<Vec<f64>> },
    #[error("collinearity violated: sine {sine:e} (witness {witness:?})")]
    CollinearityViolation { sine: f64, witness: Vec<Vec<f64>> },
    #[error("images span only {rank} dimensions; at least 3 are needed")]
    RangeDegenerate { rank: usize },
    #[error("inputs are linearly dependent: {witness:?}")]
    DependentInputs { witness: Vec<Vec<f64>> },
    #[error("route {route} does not support {space}")]
    RouteUnsupported { route: Route, space: String },
    #[error("route {route} needs an oracle declared surjective")]
    SurjectivityNotDeclared { route: Route },
    #[error("sample table lacks {} planned probe(s)", missing.len())]
    MissingProbes { missing: Vec<Vec<f64>> },
    #[error("functional is not w*-exposed: {diagnosis}")]
    NotExposed { diagnosis: String },
    #[error("supporting functionals did not stabilize up to t = 2^{cap}")]
    NoStabilization { cap: u32 },
    #[error("f(t·u) is not a smooth point at t = {t} (witness {witness:?})")]
    SmoothnessFailure { t: f64, witness: Vec<Vec<f64>> },
    #[error("dimension {dim} is below the {needed} this step needs")]
    TooFewDimensions { dim: usize, needed: usize },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

impl DecompositionError {
    /// 2 when the oracle violates a required identity, 4 for a functional
    /// that is not exposed, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::NotDecomposable { .. } | Self::CollinearityViolation { .. } | Self::RangeDegenerate { .. } => 2,
            Self::NotExposed { .. } => 4,
            _ => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::NotDecomposable { .. } => "NotDecomposable",
            Self::CollinearityViolation { .. } => "CollinearityViolation",
            Self::RangeDegenerate { .. } => "RangeDegenerate",
            Self::DependentInputs { .. } => "DependentInputs",
            Self::RouteUnsupported { .. } => "RouteUnsupported",
            Self::SurjectivityNotDeclared { .. } => "SurjectivityNotDeclared",
            Self::MissingProbes { .. } => "MissingProbes",
            Self::NotExposed { .. } => "NotExposed",
            Self::NoStabilization { .. } => "NoStabilization",
            Self::SmoothnessFailure { .. } => "SmoothnessFailure",
            Self::TooFewDimensions { .. } => "TooFewDimensions",
            Self::Oracle(_) => "Oracle",
            Self::Space(_) => "Space",
        }
    }

    pub fn witness(&self) -> Option<&[Vec<f64>]> {
        match self {
            Self::NotDecomposable { witness, .. }
            | Self::CollinearityViolation { witness, .. }
            | Self::DependentInputs { witness }
            | Self::SmoothnessFailure { witness, .. } => Some(witness),
            Self::MissingProbes { missing } => Some(missing),
            _ => None,
        }
    }
}

pub(crate) fn vecs<'a>(xs: impl IntoIterator<Item = &'a DVector<f64>>) -> Vec<Vec<f64>> {
    xs.into_iter().map(|x| x.as_slice().to_vec()).collect()
}

/// Matrix sending `basis[i]` to `images[i]`.
pub(crate) fn map_from_basis(
    basis: &[DVector<f64>],
    images: &[DVector<f64>],
) -> Result<DMatrix<f64>, DecompositionError> {
    let b = DMatrix::from_columns(basis);
    let inv = b.try_inverse().ok_or_else(|| DecompositionError::DependentInputs { witness: vecs(basis) })?;
    Ok(DMatrix::from_columns(images) * inv)
}

/// One logged query with its recovered sign.
#[derive(Clone, Debug, Serialize)]
pub struct TranscriptEntry {
    pub x: Vec<f64>,
    pub sign: i8,
    /// `min(‖f(x) − Tx‖, ‖f(x) + Tx‖)`.
    pub residual: f64,
}

/// Evidence that `f = ε·T` on every logged query.
#[derive(Clone, Debug, Serialize)]
pub struct DecompositionCertificate {
    pub route: Route,
    #[serde(rename = "T")]
    pub t: Vec<Vec<f64>>,
    pub sign_table: SignAssignment,
    pub transcript: Vec<TranscriptEntry>,
    pub residual_max: f64,
    pub verified_pairs: usize,
    pub max_equation_discrepancy: f64,
    /// Largest `|‖Tx‖ − ‖x‖| / (1 + ‖x‖)` over 100 random `x`.
    pub isometry_error: f64,
    pub surjectivity: String,
    pub settings: Settings,
    pub seed: u64,
    pub generator: String,
    pub queries: usize,
    /// Route-specific intermediate results.
    pub diagnostics: serde_json::Value,
    #[serde(skip)]
    map: LinearMap,
}

impl DecompositionCertificate {
    pub fn map(&self) -> &LinearMap {
        &self.map
    }

    /// Recovered `ε(x)` for a logged query.
    pub fn epsilon(&self, x: &DVector<f64>) -> Option<i8> {
        self.sign_table.get(self.map.domain(), x)
    }
}

/// Route actually taken for `requested` on `f`, or why none applies.
pub fn resolve_route(f: &PhaseMapOracle, requested: Route) -> Result<Route, DecompositionError> {
    let (domain, codomain) = (f.domain(), f.codomain());
    let n = domain.dim();
    let unweighted = |d: &NormSpec, p: Exponent| d.lp_exponent() == Some(p);
    let is_l1 = |d: &NormSpec| d.lp_exponent().is_some_and(Exponent::is_one);
    let smooth_lp = domain.scaled_exponent().is_some_and(|p| !p.is_one() && !p.is_infinite());
    let route = match requested {
        Route::Auto if n == 1 => Route::OneDim,
        Route::Auto if is_l1(domain) => Route::L1,
        Route::Auto if unweighted(domain, Exponent::Infinity) => Route::Linf,
        Route::Auto if smooth_lp => Route::Smooth,
        Route::Auto => Route::Generic,
        other => other,
    };
    let supported = match route {
        Route::OneDim => n == 1,
        Route::L1 => is_l1(domain) && is_l1(codomain) && codomain.dim() == n,
        Route::Linf => {
            unweighted(domain, Exponent::Infinity) && unweighted(codomain, Exponent::Infinity) && codomain.dim() == n
        }
        Route::Smooth => smooth_lp && codomain.dim() == n,
        Route::Generic => codomain.dim() == n,
        Route::Auto => unreachable!("auto was resolved above"),
    };
    if supported {
        Ok(route)
    } else {
        Err(DecompositionError::RouteUnsupported {
            route,
            space: format!("{} -> {}", domain.describe(), codomain.describe()),
        })
    }
}

/// Points a decomposition of an oracle on `domain` will query, found by a
/// dry run against the identity map. Table oracles must answer all of them.
pub fn plan_queries(domain: &NormSpec, options: &DecomposeOptions) -> Result<Vec<DVector<f64>>, DecompositionError> {
    let probe = PhaseMapOracle::identity(domain);
    let route = resolve_route(&probe, options.route)?;
    let output = routes::run(&probe, route, options)?;
    let certificate = finish(&probe, route, output, options, true)?;
    drop(certificate);
    Ok(probe.transcript().into_iter().map(|(x, _)| x).collect())
}

/// Factors `f` as `ε·T` along `options.route`.
pub fn decompose(f: &PhaseMapOracle, options: &DecomposeOptions) -> Result<DecompositionCertificate, DecompositionError> {
    let route = resolve_route(f, options.route)?;
    if !options.declared_surjective && !(options.route == Route::OneDim) {
        return Err(DecompositionError::SurjectivityNotDeclared { route });
    }
    let table_mode = f.is_table();
    if table_mode {
        let missing: Vec<Vec<f64>> = plan_queries(f.domain(), options)?
            .into_iter()
            .filter(|x| !f.can_answer(x))
            .map(|x| x.as_slice().to_vec())
            .collect();
        if !missing.is_empty() {
            return Err(DecompositionError::MissingProbes { missing });
        }
    }
    let output = routes::run(f, route, options)?;
    finish(f, route, output, options, table_mode)
}

/// Columns `T e₁, …, T eₙ` from a route, with whatever it wants to report.
pub(crate) struct RouteOutput {
    pub columns: Vec<DVector<f64>>,
    pub diagnostics: serde_json::Value,
}

const FRESH_PAIRS: usize = 32;

fn finish(
    f: &PhaseMapOracle,
    route: Route,
    output: RouteOutput,
    options: &DecomposeOptions,
    table_mode: bool,
) -> Result<DecompositionCertificate, DecompositionError> {
    let settings = &options.settings;
    let (domain, codomain) = (f.domain(), f.codomain());
    let mut matrix = DMatrix::from_columns(&output.columns);
    if let Some(first) = matrix.column(0).iter().copied().find(|v| *v != 0.0) {
        if first < 0.0 {
            matrix.neg_mut();
        }
    }
    let map = LinearMap::new(matrix, domain.clone(), codomain.clone())?;
    let pairs: Vec<(DVector<f64>, DVector<f64>)> = if table_mode {
        let xs: Vec<DVector<f64>> = f.transcript().into_iter().map(|(x, _)| x).collect();
        xs.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect()
    } else {
        let mut rng = seeded(derive(options.seed, 0xF1));
        let pairs: Vec<_> = (0..FRESH_PAIRS)
            .map(|_| (gaussian_vector(&mut rng, domain.dim()), gaussian_vector(&mut rng, domain.dim())))
            .collect();
        for (x, y) in &pairs {
            f.query(x)?;
            f.query(y)?;
        }
        pairs
    };
    let mut sign_table = SignAssignment::new(SignKeying::Point);
    let mut transcript = Vec::new();
    let mut residual_max = 0.0f64;
    for (x, fx) in f.transcript() {
        let tx = map.apply(&x);
        let plus = codomain.norm_unchecked(&(&fx - &tx));
        let minus = codomain.norm_unchecked(&(&fx + &tx));
        let (sign, residual) = if plus <= minus { (1, plus) } else { (-1, minus) };
        if residual > settings.tol * domain.norm_unchecked(&x).max(1.0) {
            return Err(DecompositionError::NotDecomposable {
                reason: format!("f(x) differs from ±Tx by {residual:e}"),
                witness: vecs([&x]),
            });
        }
        residual_max = residual_max.max(residual);
        if x.iter().any(|v| *v != 0.0) {
            sign_table.insert(domain, &x, sign);
        }
        transcript.push(TranscriptEntry { x: x.as_slice().to_vec(), sign, residual });
    }
    let phased = |x: &DVector<f64>| map.apply(x) * f64::from(sign_table.get(domain, x).unwrap_or(1));
    let mut max_equation_discrepancy = 0.0f64;
    for (x, y) in &pairs {
        let (gx, gy) = (phased(x), phased(y));
        let mut expected = [domain.norm_unchecked(&(x + y)), domain.norm_unchecked(&(x - y))];
        let mut observed = [codomain.norm_unchecked(&(&gx + &gy)), codomain.norm_unchecked(&(&gx - &gy))];
        expected.sort_by(f64::total_cmp);
        observed.sort_by(f64::total_cmp);
        if !(settings.close(expected[0], observed[0]) && settings.close(expected[1], observed[1])) {
            return Err(DecompositionError::NotDecomposable {
                reason: "ε·T violates the phase equation".into(),
                witness: vecs([x, y]),
            });
        }
        let d = (expected[0] - observed[0]).abs().max((expected[1] - observed[1]).abs());
        max_equation_discrepancy = max_equation_discrepancy.max(d);
    }
    let check = map.verify_isometry(100, derive(options.seed, 0x150), settings.tol);
    if !check.isometric {
        return Err(DecompositionError::NotDecomposable {
            reason: format!("recovered T is not an isometry (relative error {:e})", check.max_relative_error),
            witness: map.rows(),
        });
    }
    Ok(DecompositionCertificate {
        route,
        t: map.rows(),
        sign_table,
        queries: transcript.len(),
        transcript,
        residual_max,
        verified_pairs: pairs.len(),
        max_equation_discrepancy,
        isometry_error: check.max_relative_error,
        surjectivity: if options.declared_surjective { "declared" } else { "not_declared" }.to_owned(),
        settings: *settings,
        seed: options.seed,
        generator: GENERATOR.to_owned(),
        diagnostics: output.diagnostics,
        map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_maps::{generate_isometry, generate_phase_isometry, phase_isometry_with_rule, sine_curve, SignRule};

    fn round_trip(space: NormSpec, seed: u64) -> DecompositionCertificate {
        let t = generate_isometry(&space, seed).unwrap().map;
        let g = generate_phase_isometry(&t, seed + 1, true);
        let cert = decompose(&g.oracle, &DecomposeOptions::surjective(Route::Auto, seed)).unwrap();
        let s = if (cert.map().matrix() - t.matrix()).amax() < 1e-9 { 1 } else { -1 };
        assert!((cert.map().matrix() * f64::from(s) - t.matrix()).amax() <= 1e-9);
        for (x, _) in g.oracle.transcript() {
            assert_eq!(cert.epsilon(&x).unwrap() * s, g.truth.epsilon(&x), "x = {x}");
        }
        cert
    }

    #[test]
    fn routes_resolve_by_space_kind() {
        let r = |s: NormSpec| resolve_route(&PhaseMapOracle::identity(&s), Route::Auto).unwrap();
        assert_eq!(r(NormSpec::l2(1)), Route::OneDim);
        assert_eq!(r(NormSpec::l1(3)), Route::L1);
        assert_eq!(r(NormSpec::linf(3)), Route::Linf);
        assert_eq!(r(NormSpec::lp(3, 3.0).unwrap()), Route::Smooth);
        assert_eq!(r(NormSpec::weighted(3, 2.0, vec![1.0, 2.0, 3.0]).unwrap()), Route::Smooth);
        assert_eq!(r(NormSpec::weighted(3, 1.0, vec![1.0, 2.0, 3.0]).unwrap()), Route::Generic);
        let forced = resolve_route(&PhaseMapOracle::identity(&NormSpec::l2(3)), Route::Linf);
        assert!(matches!(forced, Err(DecompositionError::RouteUnsupported { route: Route::Linf, .. })));
        assert_eq!("one_dim".parse::<Route>().unwrap(), Route::OneDim);
        assert!("diagonal".parse::<Route>().is_err());
    }

    #[test]
    fn l1_signed_permutation_round_trips() {
        let space = NormSpec::l1(3);
        let m = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let t = LinearMap::new(m, space.clone(), space).unwrap();
        let g = generate_phase_isometry(&t, 5, true);
        let cert = decompose(&g.oracle, &DecomposeOptions::surjective(Route::Auto, 1)).unwrap();
        assert_eq!(cert.route, Route::L1);
        let d = (cert.map().matrix() - t.matrix()).amax().min((cert.map().matrix() + t.matrix()).amax());
        assert!(d <= 1e-9);
        assert!(cert.residual_max <= 1e-9);
    }

    #[test]
    fn orthogonal_map_with_constant_sign_takes_the_smooth_route() {
        let space = NormSpec::l2(4);
        let t = generate_isometry(&space, 8).unwrap().map;
        let g = phase_isometry_with_rule(&t, SignRule::Constant { sign: 1 });
        let cert = decompose(&g.oracle, &DecomposeOptions::surjective(Route::Auto, 2)).unwrap();
        assert_eq!(cert.route, Route::Smooth);
        assert!(cert.residual_max <= 1e-9);
        let d = (cert.map().matrix() - t.matrix()).amax().min((cert.map().matrix() + t.matrix()).amax());
        assert!(d <= 1e-9);
    }

    #[test]
    fn round_trips_on_every_supported_kind() {
        round_trip(NormSpec::l2(1), 3);
        round_trip(NormSpec::l2(2), 4);
        round_trip(NormSpec::lp(3, 1.5).unwrap(), 5);
        round_trip(NormSpec::linf(4), 6);
        round_trip(NormSpec::l1(4), 7);
        round_trip(NormSpec::weighted(3, 3.0, vec![1.0, 1.0, 2.0]).unwrap(), 8);
    }

    #[test]
    fn certificate_serializes_with_capital_t() {
        let cert = round_trip(NormSpec::l1(2), 9);
        let json = serde_json::to_value(&cert).unwrap();
        assert_eq!(json["route"], "l1");
        assert_eq!(json["surjectivity"], "declared");
        assert!(json["T"].is_array() && json["sign_table"]["table"].is_object());
    }

    #[test]
    fn sine_curve_is_refused_unless_one_dim_is_forced() {
        let f = sine_curve();
        let err = decompose(&f, &DecomposeOptions::default()).unwrap_err();
        assert!(matches!(err, DecompositionError::SurjectivityNotDeclared { .. }));
        assert_eq!(err.exit_code(), 3);
        let forced = DecomposeOptions { route: Route::OneDim, ..DecomposeOptions::default() };
        let err = decompose(&f, &forced).unwrap_err();
        let DecompositionError::NotDecomposable { witness, .. } = &err else { panic!("{err}") };
        let t = witness[0][0];
        let f1 = f.query(&DVector::from_vec(vec![1.0])).unwrap();
        let ft = f.query(&DVector::from_vec(vec![t])).unwrap();
        let gap = (&ft - &f1 * t).amax().min((&ft + &f1 * t).amax());
        assert!(gap > 1e-9);
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn table_oracles_report_missing_probes() {
        let space = NormSpec::l1(3);
        let options = DecomposeOptions::surjective(Route::Auto, 0);
        let planned = plan_queries(&space, &options).unwrap();
        let samples: Vec<_> = planned.iter().skip(1).map(|x| (x.clone(), x.clone())).collect();
        let f = PhaseMapOracle::from_table(space.clone(), space.clone(), samples).unwrap();
        let err = decompose(&f, &options).unwrap_err();
        let DecompositionError::MissingProbes { missing } = &err else { panic!("{err}") };
        assert_eq!(missing, &vec![planned[0].as_slice().to_vec()]);
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn complete_tables_decompose() {
        let space = NormSpec::linf(3);
        let options = DecomposeOptions::surjective(Route::Auto, 4);
        let t = generate_isometry(&space, 2).unwrap().map;
        let g = generate_phase_isometry(&t, 3, true);
        let samples: Vec<_> =
            plan_queries(&space, &options).unwrap().into_iter().map(|x| (x.clone(), g.oracle.query(&x).unwrap())).collect();
        let f = PhaseMapOracle::from_table(space.clone(), space, samples).unwrap();
        let cert = decompose(&f, &options).unwrap();
        let d = (cert.map().matrix() - t.matrix()).amax().min((cert.map().matrix() + t.matrix()).amax());
        assert!(d <= 1e-9);
    }
}
