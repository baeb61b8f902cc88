use nalgebra::DVector;
use serde::Serialize;

use super::{vecs, DecompositionError};
use crate::phase_maps::{canonical_ray, OracleError, PhaseMapOracle};
use crate::settings::Settings;
use crate::space::NormSpec;

/// Anything that maps domain vectors to codomain vectors.
pub trait Evaluator {
    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>, OracleError>;
    fn domain(&self) -> &NormSpec;
    fn codomain(&self) -> &NormSpec;
}

impl Evaluator for PhaseMapOracle {
    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>, OracleError> {
        self.query(x)
    }

    fn domain(&self) -> &NormSpec {
        PhaseMapOracle::domain(self)
    }

    fn codomain(&self) -> &NormSpec {
        PhaseMapOracle::codomain(self)
    }
}

/// `f₀(s·r) = s·f(r)` where `r` is the canonical representative of the ray
/// through the argument. `f₀` is homogeneous, and equals `±f` pointwise
/// whenever `f(tx) = ±t·f(x)`.
pub struct Homogenized<'a>(pub &'a PhaseMapOracle);

impl Evaluator for Homogenized<'_> {
    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>, OracleError> {
        let domain = self.0.domain();
        domain.check(x)?;
        let Some(rep) = canonical_ray(domain, x) else {
            return Ok(DVector::zeros(self.0.codomain().dim()));
        };
        let first = x.iter().copied().find(|v| *v != 0.0).unwrap_or(1.0);
        let s = domain.norm_unchecked(x) * if first < 0.0 { -1.0 } else { 1.0 };
        Ok(self.0.query(&rep)? * s)
    }

    fn domain(&self) -> &NormSpec {
        self.0.domain()
    }

    fn codomain(&self) -> &NormSpec {
        self.0.codomain()
    }
}

/// Signs with `f(x+y) = α·f(x) + β·f(y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SignPinning {
    pub alpha: i8,
    pub beta: i8,
    pub residual: f64,
    /// More than one sign pair fit; `(+1, +1)` was preferred.
    pub tie: bool,
}

impl SignPinning {
    pub fn product(&self) -> i8 {
        self.alpha * self.beta
    }
}

const SIGN_PAIRS: [(i8, i8); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Euclidean sine of the angle between `x` and the line through `y`.
pub(crate) fn sine_between(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let (nx, yy) = (x.norm(), y.dot(y));
    if nx == 0.0 || yy == 0.0 {
        return 0.0;
    }
    (x - y * (x.dot(y) / yy)).norm() / nx
}

pub(crate) fn pin_from_images(
    codomain: &NormSpec,
    fx: &DVector<f64>,
    fy: &DVector<f64>,
    fxy: &DVector<f64>,
    threshold: f64,
) -> Option<SignPinning> {
    let residuals: Vec<(i8, i8, f64)> = SIGN_PAIRS
        .iter()
        .map(|&(a, b)| {
            let guess = fx * f64::from(a) + fy * f64::from(b);
            (a, b, codomain.norm_unchecked(&(fxy - guess)))
        })
        .collect();
    let fitting: Vec<&(i8, i8, f64)> = residuals.iter().filter(|r| r.2 <= threshold).collect();
    match fitting.len() {
        0 => None,
        1 => Some(SignPinning { alpha: fitting[0].0, beta: fitting[0].1, residual: fitting[0].2, tie: false }),
        _ => {
            let chosen = fitting.iter().find(|r| r.0 == 1 && r.1 == 1).unwrap_or(&fitting[0]);
            Some(SignPinning { alpha: chosen.0, beta: chosen.1, residual: chosen.2, tie: true })
        }
    }
}

/// Finds `α, β ∈ {±1}` with `f(x+y) = α·f(x) + β·f(y)` by trying all four
/// sign pairs. Fails when no pair fits within `tol·(1 + ‖x‖ + ‖y‖)`.
pub fn pin_signs<E: Evaluator + ?Sized>(
    f: &E,
    x: &DVector<f64>,
    y: &DVector<f64>,
    settings: &Settings,
) -> Result<SignPinning, DecompositionError> {
    let domain = f.domain();
    domain.check(x)?;
    domain.check(y)?;
    if sine_between(x, y) <= 1e-12 {
        return Err(DecompositionError::DependentInputs { witness: vecs([x, y]) });
    }
    let fx = f.eval(x)?;
    let fy = f.eval(y)?;
    let fxy = f.eval(&(x + y))?;
    let threshold = settings.tol * (1.0 + domain.norm_unchecked(x) + domain.norm_unchecked(y));
    pin_from_images(f.codomain(), &fx, &fy, &fxy, threshold).ok_or_else(|| DecompositionError::NotDecomposable {
        reason: "f(x+y) is not ±f(x) ± f(y)".into(),
        witness: vecs([x, y]),
    })
}

/// Condition `f(tx) = ±t·f(x)` for every `x` in `xs` and `t` in `ts`.
pub(crate) fn check_scaling<E: Evaluator + ?Sized>(
    f: &E,
    xs: &[DVector<f64>],
    ts: &[f64],
    settings: &Settings,
) -> Result<(), DecompositionError> {
    let (domain, codomain) = (f.domain(), f.codomain());
    for x in xs {
        let fx = f.eval(x)?;
        let nx = domain.norm_unchecked(x);
        for &t in ts {
            let ftx = f.eval(&(x * t))?;
            let scaled = &fx * t;
            let r = codomain.norm_unchecked(&(&ftx - &scaled)).min(codomain.norm_unchecked(&(&ftx + &scaled)));
            if r > settings.tol * (1.0 + t.abs() * nx) {
                return Err(DecompositionError::NotDecomposable {
                    reason: format!("f(tx) is not ±t·f(x) at t = {t}"),
                    witness: vec![x.as_slice().to_vec(), vec![t]],
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_maps::{phase_isometry_with_rule, LinearMap, SignRule};

    fn v(c: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(c)
    }

    #[test]
    fn linear_maps_pin_to_plus_plus() {
        let f = PhaseMapOracle::identity(&NormSpec::l2(3));
        let p = pin_signs(&f, &v(&[1.0, 0.0, 2.0]), &v(&[0.0, 1.0, -1.0]), &Settings::default()).unwrap();
        assert_eq!((p.alpha, p.beta, p.residual, p.tie), (1, 1, 0.0, false));
    }

    #[test]
    fn phase_flip_on_x_is_recovered() {
        let space = NormSpec::l1(2);
        let x = v(&[1.0, 0.0]);
        let flip = x.clone();
        // ε(x) = −1, ε(y) = ε(x+y) = +1
        let f = PhaseMapOracle::from_fn(space.clone(), space, move |z| if *z == flip { -z } else { z.clone() });
        let p = pin_signs(&f, &x, &v(&[0.0, 1.0]), &Settings::default()).unwrap();
        assert_eq!((p.alpha, p.beta), (-1, 1));
        assert_eq!(p.residual, 0.0);
    }

    #[test]
    fn non_additive_maps_are_rejected() {
        let space = NormSpec::l2(2);
        let f = PhaseMapOracle::from_fn(space.clone(), space, |z| z.map(|c| c * c));
        let err = pin_signs(&f, &v(&[1.0, 1.0]), &v(&[1.0, -1.0]), &Settings::default()).unwrap_err();
        assert!(matches!(err, DecompositionError::NotDecomposable { .. }));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn dependent_inputs_are_refused() {
        let f = PhaseMapOracle::identity(&NormSpec::l2(2));
        let err = pin_signs(&f, &v(&[1.0, 2.0]), &v(&[-2.0, -4.0]), &Settings::default()).unwrap_err();
        assert!(matches!(err, DecompositionError::DependentInputs { .. }));
    }

    #[test]
    fn homogenized_oracle_is_homogeneous() {
        let space = NormSpec::l2(2);
        let t = LinearMap::identity(&space);
        let g = phase_isometry_with_rule(&t, SignRule::Hashed { seed: 3, even: false });
        let f0 = Homogenized(&g.oracle);
        let x = v(&[0.6, -0.8]);
        let base = f0.eval(&x).unwrap();
        for s in [-3.0, -1.0, 0.5, 2.0] {
            assert!((f0.eval(&(&x * s)).unwrap() - &base * s).amax() < 1e-15);
        }
    }

    #[test]
    fn scaling_condition_catches_nonhomogeneous_maps() {
        let space = NormSpec::l2(1);
        let f = PhaseMapOracle::from_fn(space.clone(), space, |t| t.map(|c| c.abs().sqrt()));
        assert!(check_scaling(&f, &[v(&[1.0])], &[2.0], &Settings::default()).is_err());
    }
}
