use nalgebra::DVector;
use serde::Serialize;

use super::{vecs, DecompositionError};
use crate::phase_maps::PhaseMapOracle;
use crate::settings::Settings;
use crate::space::Functional;

/// One step of the schedule `t = 2ᵏ`.
#[derive(Clone, Debug, Serialize)]
pub struct StabilizationStep {
    pub t: f64,
    pub phi: Functional,
    /// Dual-norm distance to the previous estimate; `None` at the first step.
    pub change: Option<f64>,
    pub smooth: bool,
}

/// A norm-one `φ ∈ Y*` with `x*(x) = ±φ(f(x))` on the verification samples.
#[derive(Clone, Debug, Serialize)]
pub struct FunctionalRecovery {
    pub phi: Functional,
    pub x_star: Functional,
    /// Smooth unit vector `u` whose only supporting functional is `x*`.
    pub exposing_point: Vec<f64>,
    pub trace: Vec<StabilizationStep>,
    pub stabilized_at: f64,
    pub phi_dual_norm: f64,
    pub samples: usize,
    /// `s(x)` with `x*(x) = s(x)·φ(f(x))`; `+1` where both vanish.
    pub sign_pattern: Vec<i8>,
    pub max_discrepancy: f64,
}

/// Recovers `φ` for a w*-exposed `x*` as the limit of supporting functionals
/// of the codomain at `f(t·u)`, where `u` exposes `x*`.
pub fn recover_functional(
    f: &PhaseMapOracle,
    x_star: &Functional,
    samples: &[DVector<f64>],
    settings: &Settings,
) -> Result<FunctionalRecovery, DecompositionError> {
    let exposure = f.domain().is_w_star_exposed(x_star, settings)?;
    let u = match exposure.point {
        Some(u) if exposure.exposed => u,
        _ => return Err(DecompositionError::NotExposed { diagnosis: exposure.diagnosis }),
    };
    recover_functional_at(f, x_star, &u, samples, settings)
}

/// [`recover_functional`] with the exposing point supplied.
pub(crate) fn recover_functional_at(
    f: &PhaseMapOracle,
    x_star: &Functional,
    u: &DVector<f64>,
    samples: &[DVector<f64>],
    settings: &Settings,
) -> Result<FunctionalRecovery, DecompositionError> {
    let (domain, codomain) = (f.domain(), f.codomain());
    let fu = f.query(u)?;
    let mut trace: Vec<StabilizationStep> = Vec::new();
    let mut stable = None;
    for k in 0..=settings.stabilization_cap {
        let t = f64::from(k).exp2();
        let image = f.query(&(u * t))?;
        let support = codomain.support_set(&image, settings)?;
        let mut phi = support.witness;
        if phi.apply(&fu) < 0.0 {
            phi = phi.scaled(-1.0);
        }
        let change = trace
            .last()
            .map(|prev| codomain.dual_norm_unchecked(&(phi.coords() - prev.phi.coords())));
        trace.push(StabilizationStep { t, phi, change, smooth: support.is_smooth });
        if change.is_some_and(|c| c < settings.tol) {
            stable = Some(trace.len() - 1);
            break;
        }
    }
    let Some(last) = stable else {
        return Err(DecompositionError::NoStabilization { cap: settings.stabilization_cap });
    };
    let step = &trace[last];
    let phi = step.phi.clone();
    let phi_dual_norm = codomain.dual_norm_unchecked(phi.coords());
    if (phi_dual_norm - 1.0).abs() > settings.tol {
        return Err(DecompositionError::NotDecomposable {
            reason: format!("recovered functional has dual norm {phi_dual_norm}"),
            witness: vecs([u]),
        });
    }
    let mut sign_pattern = Vec::with_capacity(samples.len());
    let mut max_discrepancy = 0.0f64;
    for x in samples {
        let a = x_star.apply(x);
        let b = phi.apply(&f.query(x)?);
        let d = (a.abs() - b.abs()).abs();
        if d > settings.functional_tol * (1.0 + domain.norm_unchecked(x)) {
            let witness = vecs([x]);
            return Err(if step.smooth {
                DecompositionError::NotDecomposable {
                    reason: format!("|x*(x)| = {} but |φ(f(x))| = {}", a.abs(), b.abs()),
                    witness,
                }
            } else {
                DecompositionError::SmoothnessFailure { t: step.t, witness }
            });
        }
        max_discrepancy = max_discrepancy.max(d);
        sign_pattern.push(if a * b < 0.0 { -1 } else { 1 });
    }
    Ok(FunctionalRecovery {
        phi,
        x_star: x_star.clone(),
        exposing_point: u.as_slice().to_vec(),
        stabilized_at: step.t,
        trace,
        phi_dual_norm,
        samples: samples.len(),
        sign_pattern,
        max_discrepancy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_maps::{generate_isometry, generate_phase_isometry, random_points};
    use crate::space::NormSpec;

    #[test]
    fn l3_recovers_a_transported_coordinate_functional() {
        let space = NormSpec::lp(3, 3.0).unwrap();
        let t = generate_isometry(&space, 6).unwrap().map;
        let g = generate_phase_isometry(&t, 7, false);
        let xs = random_points(&space, 8, 100);
        let r = recover_functional(&g.oracle, &Functional::coordinate(3, 0), &xs, &Settings::default()).unwrap();
        // φ = ±e₁*∘T⁻¹ and T⁻¹ = Tᵀ for a signed permutation
        let expected = t.matrix().column(0).into_owned();
        let d = (r.phi.coords() - &expected).amax().min((r.phi.coords() + &expected).amax());
        assert!(d < 1e-12);
        for x in &xs {
            assert!((g.oracle.query(x).unwrap().dot(r.phi.coords()).abs() - x[0].abs()).abs() < 1e-12);
        }
        assert!(r.stabilized_at <= 32.0);
    }

    #[test]
    fn identity_gives_back_x_star_with_plus_signs() {
        let space = NormSpec::l2(3);
        let x_star = Functional::from_slice(&[0.6, 0.0, -0.8]);
        let xs = random_points(&space, 1, 20);
        let r = recover_functional(&PhaseMapOracle::identity(&space), &x_star, &xs, &Settings::default()).unwrap();
        assert!((r.phi.coords() - x_star.coords()).amax() < 1e-12);
        assert!(r.sign_pattern.iter().all(|s| *s == 1));
    }

    #[test]
    fn one_dimensional_phi_reads_plus_minus_t() {
        let space = NormSpec::l2(1);
        let g = generate_phase_isometry(&crate::phase_maps::LinearMap::identity(&space), 2, false);
        let grid: Vec<DVector<f64>> = (-8..=8).map(|k| DVector::from_vec(vec![f64::from(k) * 0.75])).collect();
        let r = recover_functional(&g.oracle, &Functional::from_slice(&[1.0]), &grid, &Settings::default()).unwrap();
        for x in &grid {
            assert_eq!(r.phi.apply(&g.oracle.query(x).unwrap()).abs(), x[0].abs());
        }
    }

    #[test]
    fn unexposed_functionals_are_rejected() {
        let space = NormSpec::l1(3);
        let err = recover_functional(
            &PhaseMapOracle::identity(&space),
            &Functional::from_slice(&[1.0, 1.0, 0.0]),
            &[],
            &Settings::default(),
        )
        .unwrap_err();
        assert!(matches!(err, DecompositionError::NotExposed { .. }));
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn non_isometric_maps_fail_verification() {
        let space = NormSpec::l2(2);
        let f = PhaseMapOracle::from_fn(space.clone(), space.clone(), |x| DVector::from_vec(vec![x[0] + x[1], x[1]]));
        let xs = random_points(&space, 3, 10);
        let err = recover_functional(&f, &Functional::coordinate(2, 1), &xs, &Settings::default()).unwrap_err();
        assert!(matches!(err, DecompositionError::NotDecomposable { .. }));
    }
}
