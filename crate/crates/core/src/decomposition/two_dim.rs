use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::pinning::{pin_signs, Evaluator};
use super::DecompositionError;
use crate::orthogonality::is_birkhoff_orthogonal;
use crate::settings::Settings;
use crate::space::NormSpec;

/// `{±2⁻ᵏ, ±1, ±2ᵏ : k = 1..6}`, ascending.
pub fn test_grid() -> Vec<f64> {
    let mut grid = vec![1.0, -1.0];
    for k in 1..=6 {
        let p = f64::from(1u32 << k);
        grid.extend([p, -p, 1.0 / p, -1.0 / p]);
    }
    grid.sort_by(f64::total_cmp);
    grid
}

/// Pinned signs at one grid value `a` and the three identities checked there.
#[derive(Clone, Debug, Serialize)]
pub struct GridPoint {
    pub a: f64,
    pub alpha: i8,
    pub beta: i8,
    pub product: i8,
    pub tie: bool,
    pub a1: bool,
    pub a2: bool,
    pub a3: bool,
}

/// A 2-D restriction `g(ax+by) = a·g(x) + b·g(y)` of a homogeneous oracle.
#[derive(Clone, Debug, Serialize)]
pub struct TwoDimNormalization {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// The basis is mutually Birkhoff orthogonal (an Auerbach basis).
    pub auerbach: bool,
    pub grid: Vec<GridPoint>,
    /// `α(1)β(1)`.
    pub reference_product: i8,
    pub product_constant: bool,
    pub g_x: Vec<f64>,
    pub g_y: Vec<f64>,
}

impl TwoDimNormalization {
    /// `g(ax + by)`.
    pub fn g(&self, a: f64, b: f64) -> DVector<f64> {
        DVector::from_column_slice(&self.g_x) * a + DVector::from_column_slice(&self.g_y) * b
    }

    /// Matrix of `g` when the domain is the span of the basis.
    pub fn matrix(&self) -> Option<DMatrix<f64>> {
        if self.x.len() != 2 {
            return None;
        }
        let basis = DMatrix::from_columns(&[DVector::from_column_slice(&self.x), DVector::from_column_slice(&self.y)]);
        let images = DMatrix::from_columns(&[
            DVector::from_column_slice(&self.g_x),
            DVector::from_column_slice(&self.g_y),
        ]);
        basis.try_inverse().map(|inv| images * inv)
    }
}

fn mutually_orthogonal(space: &NormSpec, x: &DVector<f64>, y: &DVector<f64>, settings: &Settings) -> bool {
    let strict = settings.with_tol(settings.tol.min(1e-12));
    let xy = is_birkhoff_orthogonal(space, x, y, &strict).map(|v| v.orthogonal).unwrap_or(false);
    let yx = is_birkhoff_orthogonal(space, y, x, &strict).map(|v| v.orthogonal).unwrap_or(false);
    xy && yx
}

/// Unit basis of `span{a, b}` with biorthogonal norm-one functionals. The
/// normalized input pair is used when it already qualifies; otherwise the
/// pair maximizing the determinant (which is an Auerbach basis) is located
/// on a 720-step angular grid.
pub fn auerbach_basis(
    space: &NormSpec,
    a: &DVector<f64>,
    b: &DVector<f64>,
    settings: &Settings,
) -> (DVector<f64>, DVector<f64>, bool) {
    let x = a / space.norm_unchecked(a);
    let y = b / space.norm_unchecked(b);
    if mutually_orthogonal(space, &x, &y, settings) {
        return (x, y, true);
    }
    let steps = 720;
    let unit: Vec<(f64, f64, DVector<f64>)> = (0..steps)
        .map(|i| {
            let th = std::f64::consts::PI * i as f64 / steps as f64;
            let v = a * th.cos() + b * th.sin();
            let n = space.norm_unchecked(&v);
            (th.cos() / n, th.sin() / n, v / n)
        })
        .collect();
    let mut best = (0usize, 1usize, 0.0f64);
    for i in 0..steps {
        for j in i + 1..steps {
            let det = (unit[i].0 * unit[j].1 - unit[i].1 * unit[j].0).abs();
            if det > best.2 {
                best = (i, j, det);
            }
        }
    }
    let (x, y) = (unit[best.0].2.clone(), unit[best.1].2.clone());
    let exact = mutually_orthogonal(space, &x, &y, &settings.with_tol(1e-6));
    (x, y, exact)
}

/// Builds `g(ax+by) = α(a/b)β(a/b)·f(ax) + f(by)` from a homogeneous
/// oracle on `span{x, y}`, pinning `α(a), β(a)` on [`test_grid`], and
/// certifies `α(a)β(a) = α(1)β(1)` there together with the identities
///
/// * (a1) `{‖g(ax+y) ± g(ax−y)‖} = {|2a|, 2}`
/// * (a2) `{‖g(ax+y) ± g(x+y)‖} = {‖(a+1)x+2y‖, |a−1|}`
/// * (a3) `{‖g(ax+ay) ± g(ax+y)‖} = {‖2ax+(a+1)y‖, |a−1|}`
pub fn normalize_two_dim<E: Evaluator + ?Sized>(
    f0: &E,
    x: &DVector<f64>,
    y: &DVector<f64>,
    settings: &Settings,
) -> Result<TwoDimNormalization, DecompositionError> {
    let space = f0.domain();
    let cod = f0.codomain();
    let (x, y, auerbach) = auerbach_basis(space, x, y, settings);
    let grid = test_grid();
    let mut pins = Vec::with_capacity(grid.len());
    for &a in &grid {
        pins.push(pin_signs(f0, &(&x * a), &y, settings)?);
    }
    let product = |a: f64| -> f64 {
        let i = grid.iter().position(|g| *g == a).expect("grid is closed under negation");
        f64::from(pins[i].product())
    };
    let fy = f0.eval(&y)?;
    // g(ax + by) for b ≠ 0 with a/b on the grid
    let g = |a: f64, b: f64| -> Result<DVector<f64>, DecompositionError> {
        Ok(f0.eval(&(&x * a))? * product(a / b) + f0.eval(&(&y * b))?)
    };
    let multiset_ok = |lhs: [f64; 2], rhs: [f64; 2]| {
        let mut l = lhs;
        let mut r = rhs;
        l.sort_by(f64::total_cmp);
        r.sort_by(f64::total_cmp);
        settings.close(l[0], r[0]) && settings.close(l[1], r[1])
    };
    let reference = pins[grid.iter().position(|g| *g == 1.0).expect("1 is on the grid")].product();
    let mut points = Vec::with_capacity(grid.len());
    for (&a, pin) in grid.iter().zip(&pins) {
        let g_ax_y = g(a, 1.0)?;
        let g_ax_my = g(a, -1.0)?;
        let g_x_y = g(1.0, 1.0)?;
        let g_ax_ay = g(a, a)?;
        let pm = |u: &DVector<f64>, w: &DVector<f64>| [cod.norm_unchecked(&(u + w)), cod.norm_unchecked(&(u - w))];
        let a1 = multiset_ok(pm(&g_ax_y, &g_ax_my), [2.0 * a.abs(), 2.0]);
        let a2 = multiset_ok(
            pm(&g_ax_y, &g_x_y),
            [space.norm_unchecked(&(&x * (a + 1.0) + &y * 2.0)), (a - 1.0).abs()],
        );
        let a3 = multiset_ok(
            pm(&g_ax_ay, &g_ax_y),
            [space.norm_unchecked(&(&x * (2.0 * a) + &y * (a + 1.0))), (a - 1.0).abs()],
        );
        points.push(GridPoint {
            a,
            alpha: pin.alpha,
            beta: pin.beta,
            product: pin.product(),
            tie: pin.tie,
            a1,
            a2,
            a3,
        });
    }
    let product_constant = points.iter().all(|p| p.product == reference);
    // report the violation closest to a = 1 in scale, positive a first
    let bad = points
        .iter()
        .filter(|p| p.product != reference || !(p.a1 && p.a2 && p.a3))
        .min_by(|p, q| p.a.abs().total_cmp(&q.a.abs()).then(q.a.total_cmp(&p.a)));
    if let Some(bad) = bad {
        let failing: Vec<&str> = [("a1", bad.a1), ("a2", bad.a2), ("a3", bad.a3)]
            .iter()
            .filter(|(_, ok)| !ok)
            .map(|(name, _)| *name)
            .collect();
        return Err(DecompositionError::NotDecomposable {
            reason: format!(
                "sign product α(a)β(a) = {} against α(1)β(1) = {} at a = {}; identities violated: [{}]",
                bad.product,
                reference,
                bad.a,
                failing.join(", ")
            ),
            witness: vec![vec![bad.a], x.as_slice().to_vec(), y.as_slice().to_vec()],
        });
    }
    let g_x = f0.eval(&x)? * f64::from(reference);
    Ok(TwoDimNormalization {
        x: x.as_slice().to_vec(),
        y: y.as_slice().to_vec(),
        auerbach,
        grid: points,
        reference_product: reference,
        product_constant,
        g_x: g_x.as_slice().to_vec(),
        g_y: fy.as_slice().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::pinning::Homogenized;
    use crate::phase_maps::{generate_isometry, generate_phase_isometry, PhaseMapOracle};

    fn v(c: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(c)
    }

    #[test]
    fn grid_has_26_symmetric_points() {
        let g = test_grid();
        assert_eq!(g.len(), 26);
        assert!(g.iter().all(|a| g.contains(&-a)));
        assert!(g.contains(&64.0) && g.contains(&(-1.0 / 64.0)));
    }

    #[test]
    fn standard_basis_is_auerbach_in_lp() {
        let (_, _, exact) = auerbach_basis(&NormSpec::linf(2), &v(&[1.0, 0.0]), &v(&[0.0, 1.0]), &Settings::default());
        assert!(exact);
    }

    #[test]
    fn max_determinant_search_finds_an_auerbach_pair() {
        let hex = NormSpec::polyhedral(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let (x, y, exact) = auerbach_basis(&hex, &v(&[1.0, 0.0]), &v(&[0.0, 1.0]), &Settings::default());
        assert!(exact, "x = {x}, y = {y}");
    }

    #[test]
    fn generated_oracles_normalize_to_a_signed_copy_of_t() {
        let space = NormSpec::lp(2, 3.0).unwrap();
        let t = generate_isometry(&space, 4).unwrap().map;
        let g = generate_phase_isometry(&t, 9, true);
        let f0 = Homogenized(&g.oracle);
        let n = normalize_two_dim(&f0, &v(&[1.0, 0.0]), &v(&[0.0, 1.0]), &Settings::default()).unwrap();
        assert!(n.product_constant && n.auerbach);
        let m = n.matrix().unwrap();
        let d = (&m - t.matrix()).amax().min((&m + t.matrix()).amax());
        assert!(d < 1e-12);
    }

    #[test]
    fn ray_flip_of_2x_plus_y_is_caught_at_a_equals_2() {
        let space = NormSpec::l2(2);
        // on the ray through 2x+y answer with the image of 2x−y instead
        let f = PhaseMapOracle::from_fn(space.clone(), space, |z| {
            if (z[0] - 2.0 * z[1]).abs() <= 1e-12 * z.amax() && z[1] != 0.0 {
                DVector::from_vec(vec![z[0], -z[1]])
            } else {
                z.clone()
            }
        });
        let err = normalize_two_dim(&Homogenized(&f), &v(&[1.0, 0.0]), &v(&[0.0, 1.0]), &Settings::default())
            .unwrap_err();
        let DecompositionError::NotDecomposable { reason, witness } = err else { panic!("unexpected error") };
        assert_eq!(witness[0], vec![2.0]);
        assert!(reason.contains("a3"), "{reason}");
    }
}
