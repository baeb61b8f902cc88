use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::pinning::Evaluator;
use super::{map_from_basis, vecs, DecompositionError};
use crate::settings::Settings;

/// Euclidean sine of the angle between `v` and `span(basis)`.
pub(crate) fn sine_to_span(v: &DVector<f64>, basis: &[DVector<f64>]) -> f64 {
    let nv = v.norm();
    if nv == 0.0 || basis.is_empty() {
        return 0.0;
    }
    let m = DMatrix::from_columns(basis);
    let coeffs = m.clone().svd(true, true).solve(v, 1e-12).expect("SVD with both factors");
    (v - m * coeffs).norm() / nv
}

pub(crate) fn numeric_rank(columns: &[DVector<f64>]) -> usize {
    if columns.is_empty() {
        return 0;
    }
    let s = DMatrix::from_columns(columns).svd(false, false).singular_values;
    let top = s.max();
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|v| **v > top * 1e-10).count()
}

/// Linear `A` with `[A(x)] = [f(x)]` on the probes.
#[derive(Clone, Debug, Serialize)]
pub struct ProjectiveRecovery {
    /// Codomain × domain matrix of `A`.
    pub matrix: Vec<Vec<f64>>,
    /// `cᵢ` in `A(bᵢ) = cᵢ·f(bᵢ)`.
    pub coefficients: Vec<f64>,
    pub rank: usize,
    pub probes: usize,
    /// Largest sine of the angle between `A(x)` and `f(x)` over the probes.
    pub max_sine: f64,
}

impl ProjectiveRecovery {
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.matrix.len(), self.matrix[0].len(), |i, j| self.matrix[i][j])
    }
}

/// Projective-coordinates construction: with images `f(bᵢ)` of a basis and
/// `f(b₁ + … + bₙ) = Σ cᵢ f(bᵢ)`, set `A(bᵢ) = cᵢ f(bᵢ)`. Requires
/// `n ≥ 3`; checks that images are not confined to a plane, that
/// `f(bᵢ + bⱼ) ∈ span{f(bᵢ), f(bⱼ)}`, and that `[A(x)] = [f(x)]` on every probe.
pub fn recover_projective_linear<E: Evaluator + ?Sized>(
    f: &E,
    basis: &[DVector<f64>],
    probes: &[DVector<f64>],
    settings: &Settings,
) -> Result<ProjectiveRecovery, DecompositionError> {
    let n = basis.len();
    if n < 3 {
        return Err(DecompositionError::TooFewDimensions { dim: n, needed: 3 });
    }
    let images: Vec<DVector<f64>> = basis.iter().map(|b| f.eval(b)).collect::<Result<_, _>>()?;
    let probe_images: Vec<DVector<f64>> = probes.iter().map(|p| f.eval(p)).collect::<Result<_, _>>()?;
    let all: Vec<DVector<f64>> = images.iter().chain(&probe_images).cloned().collect();
    let rank = numeric_rank(&all);
    if rank < 3 {
        return Err(DecompositionError::RangeDegenerate { rank });
    }
    let limit = settings.collinearity_tol;
    for i in 0..n {
        for j in i + 1..n {
            let sum = &basis[i] + &basis[j];
            let s = sine_to_span(&f.eval(&sum)?, &[images[i].clone(), images[j].clone()]);
            if s > limit {
                return Err(DecompositionError::CollinearityViolation {
                    sine: s,
                    witness: vecs([&basis[i], &basis[j], &sum]),
                });
            }
        }
    }
    let total = basis.iter().fold(DVector::zeros(basis[0].len()), |acc, b| acc + b);
    let f_total = f.eval(&total)?;
    let frame = DMatrix::from_columns(&images);
    let c = frame.clone().svd(true, true).solve(&f_total, 1e-12).expect("SVD with both factors");
    let s = (&f_total - &frame * &c).norm() / f_total.norm().max(f64::MIN_POSITIVE);
    if s > limit {
        return Err(DecompositionError::CollinearityViolation { sine: s, witness: vecs([&total]) });
    }
    let columns: Vec<DVector<f64>> = images.iter().zip(c.iter()).map(|(img, ci)| img * *ci).collect();
    let a = map_from_basis(basis, &columns)?;
    let mut max_sine = 0.0f64;
    for (p, fp) in probes.iter().zip(&probe_images) {
        let ap = &a * p;
        let s = super::pinning::sine_between(fp, &ap).max(super::pinning::sine_between(&ap, fp));
        if s > limit || (ap.norm() == 0.0) != (fp.norm() == 0.0) {
            return Err(DecompositionError::CollinearityViolation { sine: s, witness: vecs([p]) });
        }
        max_sine = max_sine.max(s);
    }
    Ok(ProjectiveRecovery {
        matrix: a.row_iter().map(|r| r.iter().copied().collect()).collect(),
        coefficients: c.iter().copied().collect(),
        rank,
        probes: probes.len(),
        max_sine,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::pinning::Homogenized;
    use crate::phase_maps::{generate_isometry, generate_phase_isometry, random_points, PhaseMapOracle};
    use crate::space::NormSpec;

    fn v(c: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(c)
    }

    fn basis(n: usize) -> Vec<DVector<f64>> {
        (0..n).map(|i| DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })).collect()
    }

    #[test]
    fn signed_ray_maps_recover_a_multiple_of_t() {
        let space = NormSpec::l2(4);
        let t = generate_isometry(&space, 21).unwrap().map;
        let g = generate_phase_isometry(&t, 22, true);
        let probes = random_points(&space, 23, 100);
        let r = recover_projective_linear(&Homogenized(&g.oracle), &basis(4), &probes, &Settings::default()).unwrap();
        let a = r.to_matrix();
        let lambda = r.coefficients[0].signum() * g.truth.epsilon(&basis(4)[0]) as f64;
        assert!((a - t.matrix() * lambda).amax() < 1e-12);
        assert!(r.coefficients.iter().all(|c| (c.abs() - 1.0).abs() < 1e-12));
        assert!(r.max_sine <= 1e-8);
    }

    #[test]
    fn two_dimensions_are_refused() {
        let f = PhaseMapOracle::identity(&NormSpec::l2(2));
        let err = recover_projective_linear(&f, &basis(2), &[], &Settings::default()).unwrap_err();
        assert!(matches!(err, DecompositionError::TooFewDimensions { dim: 2, .. }));
    }

    #[test]
    fn bent_sum_image_violates_collinearity() {
        let space = NormSpec::l2(3);
        let f = PhaseMapOracle::from_fn(space.clone(), space, |z| {
            if *z == DVector::from_vec(vec![1.0, 1.0, 0.0]) {
                DVector::from_vec(vec![1.0, 1.0, 1.0])
            } else {
                z.clone()
            }
        });
        let err = recover_projective_linear(&f, &basis(3), &[], &Settings::default()).unwrap_err();
        let DecompositionError::CollinearityViolation { witness, .. } = err else { panic!("unexpected error") };
        assert_eq!(witness[2], vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn planar_range_is_degenerate() {
        let space = NormSpec::l2(3);
        let f = PhaseMapOracle::from_fn(space.clone(), space, |z| v(&[z[0], z[1] + z[2], 0.0]));
        let err = recover_projective_linear(&f, &basis(3), &[], &Settings::default()).unwrap_err();
        assert!(matches!(err, DecompositionError::RangeDegenerate { rank: 2 }));
    }
}
