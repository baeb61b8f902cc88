use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use super::oracle::{OracleError, PhaseMapOracle};
use crate::settings::Settings;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("the Wigner equation needs Euclidean domain and codomain; got {0}")]
    NotEuclidean(String),
}

/// Verdict for one pair `(x, y)`.
#[derive(Clone, Debug, Serialize)]
pub struct PairVerdict {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub pass: bool,
    pub discrepancy: f64,
    /// The two sides of the identity, each sorted ascending for multisets.
    pub expected: Vec<f64>,
    pub observed: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EquationReport {
    pub total: usize,
    pub passed: usize,
    pub max_discrepancy: f64,
    pub first_failure: Option<PairVerdict>,
    pub verdicts: Vec<PairVerdict>,
}

impl EquationReport {
    pub fn all_pass(&self) -> bool {
        self.passed == self.total
    }

    fn from_verdicts(verdicts: Vec<PairVerdict>) -> Self {
        let passed = verdicts.iter().filter(|v| v.pass).count();
        let max_discrepancy = verdicts.iter().map(|v| v.discrepancy).fold(0.0, f64::max);
        let first_failure = verdicts.iter().find(|v| !v.pass).cloned();
        Self { total: verdicts.len(), passed, max_discrepancy, first_failure, verdicts }
    }
}

fn sorted2(a: f64, b: f64) -> [f64; 2] {
    if a <= b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Compares `{‖f(x)+f(y)‖, ‖f(x)−f(y)‖}` with `{‖x+y‖, ‖x−y‖}` as sorted
/// pairs, entrywise within `tol·(1 + magnitude)`.
pub fn check_phase_equation(
    f: &PhaseMapOracle,
    pairs: &[(DVector<f64>, DVector<f64>)],
    settings: &Settings,
) -> Result<EquationReport, OracleError> {
    let (dom, cod) = (f.domain(), f.codomain());
    let mut verdicts = Vec::with_capacity(pairs.len());
    for (x, y) in pairs {
        let fx = f.query(x)?;
        let fy = f.query(y)?;
        let expected = sorted2(dom.norm_unchecked(&(x + y)), dom.norm_unchecked(&(x - y)));
        let observed = sorted2(cod.norm_unchecked(&(&fx + &fy)), cod.norm_unchecked(&(&fx - &fy)));
        let discrepancy = (expected[0] - observed[0]).abs().max((expected[1] - observed[1]).abs());
        let pass = (0..2).all(|i| settings.close(expected[i], observed[i]));
        verdicts.push(PairVerdict {
            x: x.as_slice().to_vec(),
            y: y.as_slice().to_vec(),
            pass,
            discrepancy,
            expected: expected.to_vec(),
            observed: observed.to_vec(),
        });
    }
    Ok(EquationReport::from_verdicts(verdicts))
}

/// `|⟨f(x), f(y)⟩| = |⟨x, y⟩|` on Euclidean spaces.
pub fn check_wigner_equation(
    f: &PhaseMapOracle,
    pairs: &[(DVector<f64>, DVector<f64>)],
    settings: &Settings,
) -> Result<EquationReport, CheckError> {
    if !(f.domain().is_euclidean() && f.codomain().is_euclidean()) {
        return Err(CheckError::NotEuclidean(format!(
            "{} -> {}",
            f.domain().describe(),
            f.codomain().describe()
        )));
    }
    let mut verdicts = Vec::with_capacity(pairs.len());
    for (x, y) in pairs {
        let fx = f.query(x)?;
        let fy = f.query(y)?;
        let expected = x.dot(y).abs();
        let observed = fx.dot(&fy).abs();
        verdicts.push(PairVerdict {
            x: x.as_slice().to_vec(),
            y: y.as_slice().to_vec(),
            pass: settings.close(expected, observed),
            discrepancy: (expected - observed).abs(),
            expected: vec![expected],
            observed: vec![observed],
        });
    }
    Ok(EquationReport::from_verdicts(verdicts))
}

/// One invariant of the norm-preservation / oddness suite.
#[derive(Clone, Debug, Serialize)]
pub struct InvariantOutcome {
    pub passed: bool,
    pub checked: usize,
    pub witness: Option<Vec<f64>>,
    pub detail: String,
}

impl InvariantOutcome {
    fn pass(checked: usize) -> Self {
        Self { passed: true, checked, witness: None, detail: "ok".into() }
    }

    fn fail(checked: usize, witness: &DVector<f64>, detail: String) -> Self {
        Self { passed: false, checked, witness: Some(witness.as_slice().to_vec()), detail }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantReport {
    pub norm_preservation: InvariantOutcome,
    /// `f(−x) ∈ {f(x), −f(x)}`.
    pub sign_symmetry: InvariantOutcome,
    /// `f(−x) = −f(x)`; surjective mode only.
    pub oddness: Option<InvariantOutcome>,
    /// `x ≠ y ⟹ f(x) ≠ f(y)` on the sample; surjective mode only.
    pub injectivity: Option<InvariantOutcome>,
    pub passed: bool,
}

/// Consequences of the phase equation that every phase-isometry satisfies,
/// plus oddness and injectivity, which surjective ones satisfy.
pub fn lemma21_invariants(
    f: &PhaseMapOracle,
    xs: &[DVector<f64>],
    surjective_mode: bool,
    settings: &Settings,
) -> Result<InvariantReport, OracleError> {
    let (dom, cod) = (f.domain(), f.codomain());
    let tol = settings.tol;
    let mut norm_preservation = InvariantOutcome::pass(xs.len());
    let mut sign_symmetry = InvariantOutcome::pass(xs.len());
    let mut oddness = InvariantOutcome::pass(xs.len());
    let mut images = Vec::with_capacity(xs.len());
    for x in xs {
        let fx = f.query(x)?;
        let f_neg = f.query(&(-x))?;
        let nx = dom.norm_unchecked(x);
        let nfx = cod.norm_unchecked(&fx);
        if norm_preservation.passed && !settings.close(nx, nfx) {
            norm_preservation = InvariantOutcome::fail(xs.len(), x, format!("‖f(x)‖ = {nfx}, ‖x‖ = {nx}"));
        }
        let scale = tol * (1.0 + nx);
        let plus = cod.norm_unchecked(&(&f_neg - &fx));
        let minus = cod.norm_unchecked(&(&f_neg + &fx));
        if sign_symmetry.passed && plus.min(minus) > scale {
            sign_symmetry = InvariantOutcome::fail(
                xs.len(),
                x,
                format!("f(-x) differs from ±f(x) by {}", plus.min(minus)),
            );
        }
        if oddness.passed && minus > scale {
            oddness = InvariantOutcome::fail(xs.len(), x, format!("‖f(-x) + f(x)‖ = {minus}"));
        }
        images.push(fx);
    }
    let injectivity = surjective_mode.then(|| {
        let mut outcome = InvariantOutcome::pass(xs.len() * xs.len().saturating_sub(1) / 2);
        'outer: for i in 0..xs.len() {
            for j in i + 1..xs.len() {
                let apart = dom.norm_unchecked(&(&xs[i] - &xs[j]));
                let image_gap = cod.norm_unchecked(&(&images[i] - &images[j]));
                let scale = tol * (1.0 + dom.norm_unchecked(&xs[i]));
                if apart > scale && image_gap <= scale {
                    outcome = InvariantOutcome::fail(
                        outcome.checked,
                        &xs[i],
                        format!("f(x) = f(y) for y = {:?}", xs[j].as_slice()),
                    );
                    break 'outer;
                }
            }
        }
        outcome
    });
    let oddness = surjective_mode.then_some(oddness);
    let passed = norm_preservation.passed
        && sign_symmetry.passed
        && oddness.as_ref().is_none_or(|o| o.passed)
        && injectivity.as_ref().is_none_or(|o| o.passed);
    Ok(InvariantReport { norm_preservation, sign_symmetry, oddness, injectivity, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::NormSpec;

    fn v(c: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(c)
    }

    #[test]
    fn identity_passes_with_zero_discrepancy() {
        let f = PhaseMapOracle::identity(&NormSpec::l2(2));
        let pairs = vec![(v(&[1.0, 2.0]), v(&[-3.0, 0.5])), (v(&[0.0, 0.0]), v(&[1.0, 1.0]))];
        let r = check_phase_equation(&f, &pairs, &Settings::default()).unwrap();
        assert!(r.all_pass());
        assert_eq!(r.max_discrepancy, 0.0);
    }

    #[test]
    fn shift_fails_at_origin_pair() {
        let c = v(&[0.5, 0.0]);
        let f = PhaseMapOracle::from_fn(NormSpec::l2(2), NormSpec::l2(2), move |x| x + &c);
        let zero = v(&[0.0, 0.0]);
        let r = check_phase_equation(&f, &[(zero.clone(), zero)], &Settings::default()).unwrap();
        assert!(!r.all_pass());
        assert_eq!(r.first_failure.unwrap().observed, vec![0.0, 1.0]);
    }

    #[test]
    fn wigner_examples() {
        let s = Settings::default();
        let e1 = v(&[1.0, 0.0]);
        let double = PhaseMapOracle::from_fn(NormSpec::l2(2), NormSpec::l2(2), |x| x * 2.0);
        let r = check_wigner_equation(&double, &[(e1.clone(), e1.clone())], &s).unwrap();
        assert_eq!(r.first_failure.unwrap().observed, vec![4.0]);

        let abs = PhaseMapOracle::from_fn(NormSpec::l2(2), NormSpec::l2(2), |x| x.abs());
        let r = check_wigner_equation(&abs, &[(v(&[1.0, 1.0]), v(&[1.0, -1.0]))], &s).unwrap();
        let fail = r.first_failure.unwrap();
        assert_eq!((fail.expected[0], fail.observed[0]), (0.0, 2.0));

        let l1 = PhaseMapOracle::identity(&NormSpec::l1(2));
        assert!(matches!(check_wigner_equation(&l1, &[], &s), Err(CheckError::NotEuclidean(_))));
    }

    #[test]
    fn invariants_flag_non_odd_maps() {
        let space = NormSpec::l2(2);
        let x0 = v(&[1.0, 0.0]);
        let target = x0.clone();
        // ε(x0) = −1, ε(−x0) = +1, identity elsewhere
        let f = PhaseMapOracle::from_fn(space.clone(), space, move |x| if *x == target { -x } else { x.clone() });
        let r = lemma21_invariants(&f, &[x0.clone(), v(&[0.3, 0.4])], true, &Settings::default()).unwrap();
        assert!(r.norm_preservation.passed && r.sign_symmetry.passed);
        let odd = r.oddness.unwrap();
        assert!(!odd.passed);
        assert_eq!(odd.witness.unwrap(), vec![1.0, 0.0]);
        assert!(!r.passed);
    }
}
