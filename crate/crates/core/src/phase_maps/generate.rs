use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::linear::{IsometryCheck, LinearMap};
use super::oracle::PhaseMapOracle;
use super::signs::{format_key, ray_key, SignAssignment, SignKeying};
use crate::rng::{fnv1a, gaussian_vector, mix64, seeded, SeededRng};
use crate::space::{NormKind, NormSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerateError {
    #[error("generated matrix failed the isometry check (relative error {0:e})")]
    NotIsometric(f64),
}

/// A random linear isometry of a space onto itself.
#[derive(Clone, Debug)]
pub struct IsometryDraw {
    pub map: LinearMap,
    /// Set when the space kind has no generator and the identity was used.
    pub warning: Option<String>,
    pub check: IsometryCheck,
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal moved into `Q`.
fn random_orthogonal(rng: &mut SeededRng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Signed permutation that only permutes indices within `groups`.
fn random_signed_permutation(rng: &mut SeededRng, n: usize, groups: &[Vec<usize>]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for group in groups {
        let mut targets = group.clone();
        targets.shuffle(rng);
        for (&src, &dst) in group.iter().zip(&targets) {
            m[(dst, src)] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        }
    }
    m
}

/// Index classes of equal weights; coordinates may only be permuted within a class.
fn weight_groups(weights: &[f64]) -> Vec<Vec<usize>> {
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for (i, w) in weights.iter().enumerate() {
        match groups.iter_mut().find(|(g, _)| g == w) {
            Some((_, members)) => members.push(i),
            None => groups.push((*w, vec![i])),
        }
    }
    groups.into_iter().map(|(_, m)| m).collect()
}

/// Random isometry of `space`: orthogonal for ℓ², a signed permutation for
/// other ℓᵖ, a weight-preserving signed permutation for weighted ℓᵖ. For
/// polyhedral norms the identity is returned with a warning.
pub fn generate_isometry(space: &NormSpec, seed: u64) -> Result<IsometryDraw, GenerateError> {
    let mut rng = seeded(seed);
    let n = space.dim();
    let (matrix, warning) = match space.kind() {
        NormKind::Lp { .. } if space.is_euclidean() => (random_orthogonal(&mut rng, n), None),
        NormKind::Lp { .. } => (random_signed_permutation(&mut rng, n, &[(0..n).collect()]), None),
        NormKind::WeightedLp { weights, .. } => {
            (random_signed_permutation(&mut rng, n, &weight_groups(weights)), None)
        }
        NormKind::Polyhedral { .. } => (
            DMatrix::identity(n, n),
            Some("no isometry generator for polyhedral norms; using the identity".to_owned()),
        ),
    };
    let map = LinearMap::new(matrix, space.clone(), space.clone()).expect("square matrix of the space dimension");
    let check = map.verify_isometry(100, mix64(seed), 1e-9);
    if !check.isometric {
        return Err(GenerateError::NotIsometric(check.max_relative_error));
    }
    Ok(IsometryDraw { map, warning, check })
}

/// How the hidden phase function is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SignRule {
    Constant { sign: i8 },
    /// Pseudo-random bit per ray (`even`) or per direction (`!even`).
    Hashed { seed: u64, even: bool },
}

impl SignRule {
    pub fn sign(&self, space: &NormSpec, x: &DVector<f64>) -> i8 {
        if x.iter().all(|v| *v == 0.0) {
            return 1;
        }
        match *self {
            SignRule::Constant { sign } => sign,
            SignRule::Hashed { seed, even } => {
                let key = if even {
                    ray_key(space, x)
                } else {
                    format_key((x / space.norm_unchecked(x)).as_slice())
                };
                if mix64(seed ^ fnv1a(key.as_bytes())) & 1 == 0 {
                    1
                } else {
                    -1
                }
            }
        }
    }
}

/// The `(T, ε)` behind a generated oracle, kept for scoring.
#[derive(Clone, Debug)]
pub struct HiddenTruth {
    pub map: LinearMap,
    pub rule: SignRule,
}

impl HiddenTruth {
    pub fn epsilon(&self, x: &DVector<f64>) -> i8 {
        self.rule.sign(self.map.domain(), x)
    }

    /// `ε` on the given points, keyed by point.
    pub fn sign_table<'a>(&self, points: impl IntoIterator<Item = &'a DVector<f64>>) -> SignAssignment {
        let mut table = SignAssignment::new(SignKeying::Point);
        for x in points {
            if x.iter().any(|v| *v != 0.0) {
                table.insert(self.map.domain(), x, self.epsilon(x));
            }
        }
        table
    }
}

pub struct GeneratedPhaseIsometry {
    pub oracle: PhaseMapOracle,
    pub truth: HiddenTruth,
}

/// Oracle `x ↦ ε(x)·Tx` with `ε` drawn by `rule`.
pub fn phase_isometry_with_rule(t: &LinearMap, rule: SignRule) -> GeneratedPhaseIsometry {
    let matrix = t.matrix().clone();
    let domain = t.domain().clone();
    let oracle = PhaseMapOracle::from_fn(t.domain().clone(), t.codomain().clone(), move |x| {
        &matrix * x * f64::from(rule.sign(&domain, x))
    });
    GeneratedPhaseIsometry { oracle, truth: HiddenTruth { map: t.clone(), rule } }
}

/// Oracle `x ↦ ε(x)·Tx` with a pseudo-random `ε`; with `even`, `ε(−x) = ε(x)`.
pub fn generate_phase_isometry(t: &LinearMap, seed: u64, even: bool) -> GeneratedPhaseIsometry {
    phase_isometry_with_rule(t, SignRule::Hashed { seed, even })
}

/// `t ↦ (t, sin t)` from ℝ into ℓ∞₂: an isometry that is not onto and not linear.
pub fn sine_curve() -> PhaseMapOracle {
    PhaseMapOracle::from_fn(NormSpec::l2(1), NormSpec::linf(2), |t| {
        DVector::from_vec(vec![t[0], t[0].sin()])
    })
}

/// `f(x₀) = −x₀`, `f(−x₀) = x₀`, identity elsewhere.
pub fn sign_flip_example(space: &NormSpec, x0: DVector<f64>) -> PhaseMapOracle {
    PhaseMapOracle::from_fn(space.clone(), space.clone(), move |x| {
        if *x == x0 || *x == -&x0 {
            -x
        } else {
            x.clone()
        }
    })
}

/// `count` Gaussian points of `space`.
pub fn random_points(space: &NormSpec, seed: u64, count: usize) -> Vec<DVector<f64>> {
    let mut rng = seeded(seed);
    (0..count).map(|_| gaussian_vector(&mut rng, space.dim())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_maps::checks::{check_phase_equation, lemma21_invariants};
    use crate::settings::Settings;

    fn pairs(space: &NormSpec, seed: u64, count: usize) -> Vec<(DVector<f64>, DVector<f64>)> {
        let pts = random_points(space, seed, 2 * count);
        pts.chunks(2).map(|c| (c[0].clone(), c[1].clone())).collect()
    }

    #[test]
    fn l1_generator_gives_signed_permutations() {
        let draw = generate_isometry(&NormSpec::l1(3), 7).unwrap();
        let m = draw.map.matrix();
        for j in 0..3 {
            let col = m.column(j);
            assert_eq!(col.iter().filter(|v| **v != 0.0).count(), 1);
            assert_eq!(col.amax(), 1.0);
        }
        assert!(draw.check.isometric && draw.warning.is_none());
    }

    #[test]
    fn l2_generator_is_orthogonal() {
        let draw = generate_isometry(&NormSpec::l2(2), 3).unwrap();
        let m = draw.map.matrix();
        assert!((m.transpose() * m - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn weighted_generator_respects_weights() {
        let space = NormSpec::weighted(3, 1.0, vec![1.0, 2.0, 1.0]).unwrap();
        for seed in 0..20 {
            let m = generate_isometry(&space, seed).unwrap().map.matrix().clone();
            assert_eq!(m[(1, 1)].abs(), 1.0);
        }
    }

    #[test]
    fn polyhedral_generator_warns() {
        let space = NormSpec::polyhedral(vec![vec![1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        assert!(generate_isometry(&space, 0).unwrap().warning.is_some());
    }

    #[test]
    fn constant_sign_reproduces_t() {
        let t = generate_isometry(&NormSpec::linf(4), 5).unwrap().map;
        let g = phase_isometry_with_rule(&t, SignRule::Constant { sign: 1 });
        for x in random_points(t.domain(), 1, 10) {
            assert_eq!(g.oracle.query(&x).unwrap(), t.apply(&x));
        }
    }

    #[test]
    fn even_generated_maps_satisfy_the_equation_and_are_odd() {
        let space = NormSpec::l1(4);
        let t = generate_isometry(&space, 11).unwrap().map;
        let g = generate_phase_isometry(&t, 12, true);
        let s = Settings::default();
        let r = check_phase_equation(&g.oracle, &pairs(&space, 2, 200), &s).unwrap();
        assert!(r.all_pass() && r.max_discrepancy <= 1e-10);
        let inv = lemma21_invariants(&g.oracle, &random_points(&space, 3, 50), true, &s).unwrap();
        assert!(inv.passed);
    }

    #[test]
    fn uneven_maps_fail_oddness_somewhere() {
        let space = NormSpec::l2(2);
        let t = LinearMap::identity(&space);
        let g = generate_phase_isometry(&t, 4, false);
        let inv = lemma21_invariants(&g.oracle, &random_points(&space, 5, 50), true, &Settings::default()).unwrap();
        assert!(inv.sign_symmetry.passed);
        assert!(!inv.oddness.unwrap().passed);
    }

    #[test]
    fn sine_curve_is_an_isometry_into_linf() {
        let f = sine_curve();
        let r = check_phase_equation(&f, &pairs(f.domain(), 8, 100), &Settings::default()).unwrap();
        assert!(r.all_pass());
    }
}
