use nalgebra::DVector;
use serde_json::json;

use super::functional::{recover_functional, recover_functional_at};
use super::pinning::{check_scaling, pin_signs, Evaluator, Homogenized};
use super::projective::{recover_projective_linear, sine_to_span};
use super::two_dim::normalize_two_dim;
use super::{vecs, DecomposeOptions, DecompositionError, Route, RouteOutput};
use crate::orthogonality::is_birkhoff_orthogonal;
use crate::phase_maps::PhaseMapOracle;
use crate::rng::{derive, gaussian_vector, seeded, sparse_gaussian_vector};
use crate::settings::Settings;
use crate::space::{sign_map, support_indices, Functional, NormSpec};

/// Basis vectors, pairwise sums, the all-ones vector and `3n` random points.
struct Probes {
    basis: Vec<DVector<f64>>,
    sums: Vec<DVector<f64>>,
    samples: Vec<DVector<f64>>,
}

impl Probes {
    fn new(space: &NormSpec, seed: u64, sparse: bool) -> Self {
        let n = space.dim();
        let basis: Vec<DVector<f64>> =
            (0..n).map(|i| DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })).collect();
        let mut sums = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                sums.push(&basis[i] + &basis[j]);
            }
        }
        if n > 2 {
            sums.push(DVector::from_element(n, 1.0));
        }
        let mut rng = seeded(derive(seed, 0x9B));
        let samples = (0..3 * n)
            .map(|k| {
                if sparse && k % 2 == 1 {
                    sparse_gaussian_vector(&mut rng, n, 0.5)
                } else {
                    gaussian_vector(&mut rng, n)
                }
            })
            .collect();
        Self { basis, sums, samples }
    }
}

pub(super) fn run(f: &PhaseMapOracle, route: Route, options: &DecomposeOptions) -> Result<RouteOutput, DecompositionError> {
    let sparse = matches!(route, Route::L1 | Route::Linf);
    let probes = Probes::new(f.domain(), options.seed, sparse);
    let settings = &options.settings;
    match route {
        Route::OneDim => one_dim(f, &probes),
        Route::Smooth => projective_route(f, &probes, options, true),
        Route::Generic => projective_route(f, &probes, options, false),
        Route::Linf => linf(f, &probes, settings),
        Route::L1 => l1(f, &probes, settings),
        Route::Auto => unreachable!("routes are resolved before running"),
    }
}

fn one_dim(f: &PhaseMapOracle, probes: &Probes) -> Result<RouteOutput, DecompositionError> {
    let u = f.domain().unit_basis_vector(0);
    let fu = f.query(&u)?;
    for x in &probes.samples {
        f.query(x)?;
    }
    let scale = 1.0 / u[0];
    Ok(RouteOutput {
        columns: vec![&fu * scale],
        diagnostics: json!({ "x0": u.as_slice(), "f_x0": fu.as_slice() }),
    })
}

/// `T e₁ = f(e₁)` and `T eⱼ = α·β·f(eⱼ)` from `f(eⱼ + e₁) = α f(eⱼ) + β f(e₁)`.
fn columns_from_pins(
    f: &PhaseMapOracle,
    basis: &[DVector<f64>],
    settings: &Settings,
) -> Result<(Vec<DVector<f64>>, usize), DecompositionError> {
    let mut columns = vec![f.query(&basis[0])?];
    let mut ties = 0;
    for e in &basis[1..] {
        let pin = pin_signs(f, e, &basis[0], settings)?;
        ties += usize::from(pin.tie);
        columns.push(f.query(e)? * f64::from(pin.product()));
    }
    Ok((columns, ties))
}

/// `z` with `e₁ ⊥ z ⊥ e₁` and `f(z + e₁) = α f(z) + β f(e₁)` for `z` in
/// the hyperplane `{z₁ = 0}`.
fn hyperplane_condition(
    f: &PhaseMapOracle,
    probes: &Probes,
    settings: &Settings,
) -> Result<serde_json::Value, DecompositionError> {
    let space = f.domain();
    let e1 = &probes.basis[0];
    let zs: Vec<DVector<f64>> = probes.basis[1..]
        .iter()
        .cloned()
        .chain(probes.samples.iter().map(|x| {
            let mut z = x.clone();
            z[0] = 0.0;
            z
        }))
        .filter(|z| z.iter().any(|v| *v != 0.0))
        .collect();
    let mut ties = 0;
    for z in &zs {
        let forward = is_birkhoff_orthogonal(space, e1, z, settings)?;
        let backward = is_birkhoff_orthogonal(space, z, e1, settings)?;
        if !(forward.orthogonal && backward.orthogonal) {
            return Err(DecompositionError::NotDecomposable {
                reason: "e₁ and the hyperplane {z₁ = 0} are not mutually orthogonal".into(),
                witness: vecs([e1, z]),
            });
        }
        ties += usize::from(pin_signs(f, z, e1, settings)?.tie);
    }
    Ok(json!({ "hyperplane_points": zs.len(), "ties": ties }))
}

fn multiset_close(settings: &Settings, lhs: [f64; 2], rhs: [f64; 2]) -> bool {
    let (mut l, mut r) = (lhs, rhs);
    l.sort_by(f64::total_cmp);
    r.sort_by(f64::total_cmp);
    settings.close(l[0], r[0]) && settings.close(l[1], r[1])
}

fn line_preservation(f: &PhaseMapOracle, samples: &[DVector<f64>], settings: &Settings) -> Result<usize, DecompositionError> {
    let mut checked = 0;
    for w in samples.windows(3) {
        let (x, y, z) = (&w[0], &w[1], &w[2]);
        if sine_to_span(z, &[x.clone(), y.clone()]) <= 1e-3 {
            continue;
        }
        let (fx, fy, fz) = (f.query(x)?, f.query(y)?, f.query(z)?);
        let s = sine_to_span(&fz, &[fx, fy]);
        if s <= settings.collinearity_tol {
            return Err(DecompositionError::NotDecomposable {
                reason: format!("f(z) lies in span{{f(x), f(y)}} (sine {s:e}) while z does not"),
                witness: vecs([x, y, z]),
            });
        }
        checked += 1;
    }
    Ok(checked)
}

/// Smooth and generic spaces: homogenize, pin signs, then normalize (n = 2)
/// or recover projective coordinates (n ≥ 3).
fn projective_route(
    f: &PhaseMapOracle,
    probes: &Probes,
    options: &DecomposeOptions,
    functionals: bool,
) -> Result<RouteOutput, DecompositionError> {
    let settings = &options.settings;
    let space = f.domain();
    let n = space.dim();
    if n == 1 {
        return one_dim(f, probes);
    }
    let basis = &probes.basis;
    let scaled: Vec<DVector<f64>> = basis.iter().chain(&probes.samples).cloned().collect();
    check_scaling(f, &scaled, &[2.0, 0.5, 3.0], settings)?;
    let triples = if n >= 3 { line_preservation(f, &probes.samples, settings)? } else { 0 };
    let mut recoveries = Vec::new();
    if functionals {
        for i in 0..n {
            let u = space.unit_basis_vector(i);
            let x_star = space.support_set(&u, settings)?.witness;
            let r = recover_functional(f, &x_star, &probes.samples, settings)?;
            recoveries.push(json!({ "index": i, "stabilized_at": r.stabilized_at, "max_discrepancy": r.max_discrepancy }));
        }
    }
    let f0 = Homogenized(f);
    let mut pins = 0;
    let mut ties = 0;
    for i in 0..n {
        for j in i + 1..n {
            ties += usize::from(pin_signs(&f0, &basis[i], &basis[j], settings)?.tie);
            pins += 1;
        }
    }
    for w in probes.samples.chunks_exact(2) {
        ties += usize::from(pin_signs(&f0, &w[0], &w[1], settings)?.tie);
        pins += 1;
    }
    let (columns, recovery) = if n == 2 {
        let norm = normalize_two_dim(&f0, &basis[0], &basis[1], settings)?;
        let m = norm.matrix().expect("two-dimensional domain");
        let columns = (0..2).map(|j| m.column(j).into_owned()).collect();
        (columns, serde_json::to_value(&norm).expect("serializable"))
    } else {
        let mut rng = seeded(derive(options.seed, 0x77));
        let extra: Vec<DVector<f64>> = (0..100).map(|_| gaussian_vector(&mut rng, n)).collect();
        let test: Vec<DVector<f64>> = probes.sums.iter().chain(&probes.samples).chain(&extra).cloned().collect();
        let r = recover_projective_linear(&f0, basis, &test, settings)?;
        if let Some(i) = r.coefficients.iter().position(|c| (c.abs() - 1.0).abs() > settings.tol) {
            return Err(DecompositionError::NotDecomposable {
                reason: format!("projective coefficient c_{} = {} is not ±1", i + 1, r.coefficients[i]),
                witness: vecs([&basis[i], &basis.iter().sum::<DVector<f64>>()]),
            });
        }
        let mut columns = Vec::with_capacity(n);
        for (e, c) in basis.iter().zip(&r.coefficients) {
            columns.push(f0.eval(e)? * c.signum());
        }
        (columns, serde_json::to_value(&r).expect("serializable"))
    };
    Ok(RouteOutput {
        columns,
        diagnostics: json!({
            "line_triples": triples,
            "functionals": recoveries,
            "pinned_pairs": pins,
            "ties": ties,
            "recovery": recovery,
        }),
    })
}

fn linf(f: &PhaseMapOracle, probes: &Probes, settings: &Settings) -> Result<RouteOutput, DecompositionError> {
    let n = f.domain().dim();
    let (dom, cod) = (f.domain(), f.codomain());
    let basis = &probes.basis;
    // Step 1: coordinate functionals aligned with the images of the basis
    let mut stabilized = Vec::with_capacity(n);
    for i in 0..n {
        let r = recover_functional(f, &Functional::coordinate(n, i), &probes.samples, settings)?;
        for (j, e) in basis.iter().enumerate() {
            let v = r.phi.apply(&f.query(e)?);
            let target = if i == j { 1.0 } else { 0.0 };
            if (v - target).abs() > settings.tol {
                return Err(DecompositionError::NotDecomposable {
                    reason: format!("φ_{}(f(e_{})) = {v}, expected {target}", i + 1, j + 1),
                    witness: vecs([&basis[i], e]),
                });
            }
        }
        stabilized.push(r.stabilized_at);
    }
    // Step 2: θ(f(x)) = ±f(θ(x))
    for x in &probes.samples {
        let nx = dom.norm_unchecked(x);
        let th = sign_map(x);
        let (a, b, c) = (f.query(&th)?, f.query(&(&th * nx))?, f.query(x)?);
        let pm = |u: &DVector<f64>, w: &DVector<f64>| [cod.norm_unchecked(&(u + w)), cod.norm_unchecked(&(u - w))];
        let min_abs = support_indices(x).iter().map(|&i| x[i].abs()).fold(f64::INFINITY, f64::min);
        let first = multiset_close(settings, pm(&a, &b), [1.0 + nx, (1.0 - nx).abs()]);
        let second = multiset_close(settings, pm(&b, &c), [2.0 * nx, nx - min_abs]);
        let tc = sign_map(&c);
        let theta = (&tc - &a).amax().min((&tc + &a).amax()) <= settings.tol;
        if !(first && second && theta) {
            return Err(DecompositionError::NotDecomposable {
                reason: "θ(f(x)) is not ±f(θ(x))".into(),
                witness: vecs([x]),
            });
        }
    }
    // Step 3: conditions (a) and (b) with Z = {z₁ = 0}
    for x in &probes.samples {
        let base = sign_map(&f.query(x)?);
        for t in [2.0, 0.5, 3.0] {
            let scaled = sign_map(&f.query(&(x * t))?);
            if (&scaled - &base).amax().min((&scaled + &base).amax()) > 0.0 {
                return Err(DecompositionError::NotDecomposable {
                    reason: format!("θ(f(tx)) is not ±θ(f(x)) at t = {t}"),
                    witness: vec![x.as_slice().to_vec(), vec![t]],
                });
            }
        }
    }
    check_scaling(f, &probes.samples, &[2.0, 0.5, 3.0], settings)?;
    let hyperplane = hyperplane_condition(f, probes, settings)?;
    let (columns, ties) = columns_from_pins(f, basis, settings)?;
    Ok(RouteOutput {
        columns,
        diagnostics: json!({ "stabilized_at": stabilized, "hyperplane": hyperplane, "assembly_ties": ties }),
    })
}

fn l1(f: &PhaseMapOracle, probes: &Probes, settings: &Settings) -> Result<RouteOutput, DecompositionError> {
    let n = f.domain().dim();
    let (dom, cod) = (f.domain(), f.codomain());
    let basis = &probes.basis;
    let ts = [2.0, 0.5, 3.0, -1.5];
    // Step 1: f(t e_γ) = ±t f(e_γ), and f(t e_γ₀) ± f(e_γ) have norm 1 + |t|
    check_scaling(f, basis, &ts, settings)?;
    let images: Vec<DVector<f64>> = basis.iter().map(|e| f.query(e)).collect::<Result<_, _>>()?;
    for t in ts {
        let ft = f.query(&(&basis[0] * t))?;
        for (e, fe) in basis.iter().zip(&images).skip(1) {
            let pair = [cod.norm_unchecked(&(&ft + fe)), cod.norm_unchecked(&(&ft - fe))];
            if !multiset_close(settings, pair, [1.0 + t.abs(), 1.0 + t.abs()]) {
                return Err(DecompositionError::NotDecomposable {
                    reason: format!("‖f(t e_1) ± f(e_γ)‖ ≠ 1 + |t| at t = {t}"),
                    witness: vecs([&basis[0], e]),
                });
            }
        }
    }
    // Steps 2–3: f(x) = Σ b_m f(e_m) with |b_m| = |x_m|
    let frame = nalgebra::DMatrix::from_columns(&images);
    let solver = frame.clone().svd(true, true);
    for x in &probes.samples {
        let fx = f.query(x)?;
        let nx = dom.norm_unchecked(x);
        let scale = settings.tol * (1.0 + nx);
        let b = solver.solve(&fx, 1e-12).expect("SVD with both factors");
        let expansion = cod.norm_unchecked(&(&fx - &frame * &b));
        let mut ok = expansion <= scale;
        for m in 0..n {
            ok &= (b[m].abs() - x[m].abs()).abs() <= scale;
            if x[m] != 0.0 {
                let part = &images[m] * b[m];
                let total = cod.norm_unchecked(&(&fx + &part)) + cod.norm_unchecked(&(&fx - &part));
                ok &= settings.close(total, 2.0 * nx);
            }
        }
        if !ok {
            return Err(DecompositionError::NotDecomposable {
                reason: "f(x) is not Σ b_m f(e_m) with |b_m| = |x_m|".into(),
                witness: vecs([x]),
            });
        }
    }
    // Step 4: signs from x* = Σ_{Γx} sign(x_γ) e_γ*
    let mut step4 = 0;
    for x in probes.samples.iter().take(n) {
        let support = support_indices(x);
        let x_star = Functional::new(sign_map(x));
        let u = sign_map(x) / support.len() as f64;
        let inside: Vec<DVector<f64>> = std::iter::once(x.clone())
            .chain(support.iter().map(|&g| basis[g].clone()))
            .collect();
        let r = recover_functional_at(f, &x_star, &u, &inside, settings)?;
        let predicted = support
            .iter()
            .fold(DVector::zeros(cod.dim()), |acc, &g| acc + &images[g] * (r.phi.apply(&images[g]) * x[g].abs()));
        let fx = f.query(x)?;
        let gap = cod.norm_unchecked(&(&fx - &predicted)).min(cod.norm_unchecked(&(&fx + &predicted)));
        if gap > settings.tol * (1.0 + dom.norm_unchecked(x)) {
            return Err(DecompositionError::NotDecomposable {
                reason: format!("f(x) differs from ±Σ φ(f(e_γ))|x_γ| f(e_γ) by {gap:e}"),
                witness: vecs([x]),
            });
        }
        step4 += 1;
    }
    // Step 5: conditions (a) and (b) with Z = {z₁ = 0}
    check_scaling(f, &probes.samples, &[2.0, 0.5, 3.0], settings)?;
    let hyperplane = hyperplane_condition(f, probes, settings)?;
    let (columns, ties) = columns_from_pins(f, basis, settings)?;
    Ok(RouteOutput {
        columns,
        diagnostics: json!({ "sign_checks": step4, "hyperplane": hyperplane, "assembly_ties": ties }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_maps::{generate_isometry, generate_phase_isometry};

    fn opts(seed: u64) -> DecomposeOptions {
        DecomposeOptions::surjective(Route::Auto, seed)
    }

    #[test]
    fn probe_set_has_the_documented_shape() {
        let p = Probes::new(&NormSpec::l1(4), 1, true);
        assert_eq!((p.basis.len(), p.sums.len(), p.samples.len()), (4, 7, 12));
        assert!(p.samples.iter().skip(1).step_by(2).any(|x| x.iter().any(|v| *v == 0.0)));
    }

    #[test]
    fn linf_route_rejects_a_coordinate_shear() {
        let space = NormSpec::linf(3);
        let f = PhaseMapOracle::from_fn(space.clone(), space, |x| {
            DVector::from_vec(vec![x[0], x[1], if x[2].abs() > x[0].abs() { x[2] } else { -x[2] }])
        });
        let err = run(&f, Route::Linf, &opts(0)).err().unwrap();
        assert_eq!(err.exit_code(), 2, "{err}");
    }

    #[test]
    fn l1_route_rejects_a_non_additive_map() {
        let space = NormSpec::l1(3);
        // norm preserving, but mixes coordinates
        let f = PhaseMapOracle::from_fn(space.clone(), space, |x| {
            let n: f64 = x.iter().map(|v| v.abs()).sum();
            let mut y = DVector::zeros(3);
            y[0] = n;
            y
        });
        let err = run(&f, Route::L1, &opts(0)).err().unwrap();
        assert!(matches!(err, DecompositionError::NotDecomposable { .. }), "{err}");
    }

    #[test]
    fn l1_route_columns_are_plus_minus_t() {
        let space = NormSpec::l1(5);
        let t = generate_isometry(&space, 3).unwrap().map;
        let g = generate_phase_isometry(&t, 4, true);
        let out = run(&g.oracle, Route::L1, &opts(5)).unwrap();
        let m = nalgebra::DMatrix::from_columns(&out.columns);
        assert!((&m - t.matrix()).amax().min((&m + t.matrix()).amax()) == 0.0);
    }
}
