use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::space::NormSpec;

/// Coordinates rounded to 12 decimals, e.g. `[0.600000000000,-0.800000000000]`.
pub fn format_key(coords: &[f64]) -> String {
    let parts: Vec<String> = coords
        .iter()
        .map(|v| {
            let r = (v * 1e12).round() / 1e12;
            // collapse -0 so that x and its rounding twin share a key
            format!("{:.12}", if r == 0.0 { 0.0 } else { r })
        })
        .collect();
    format!("[{}]", parts.join(","))
}

/// `x/‖x‖` with the first nonzero coordinate made positive; `None` for `x = 0`.
pub fn canonical_ray(space: &NormSpec, x: &DVector<f64>) -> Option<DVector<f64>> {
    let n = space.norm_unchecked(x);
    if n == 0.0 {
        return None;
    }
    let u = x / n;
    let first = u.iter().copied().find(|v| *v != 0.0)?;
    Some(if first < 0.0 { -u } else { u })
}

/// Key shared by every nonzero multiple of `x`; `"0"` for the origin.
pub fn ray_key(space: &NormSpec, x: &DVector<f64>) -> String {
    canonical_ray(space, x).map_or_else(|| "0".to_owned(), |u| format_key(u.as_slice()))
}

/// Key of the point `x` itself.
pub fn point_key(x: &DVector<f64>) -> String {
    format_key(x.as_slice())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignKeying {
    /// One value per line through the origin.
    Ray,
    /// One value per queried point.
    Point,
}

/// Recorded values of a phase function `ε` with the convention `ε(0) = +1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignAssignment {
    pub keying: SignKeying,
    pub table: BTreeMap<String, i8>,
}

impl SignAssignment {
    pub fn new(keying: SignKeying) -> Self {
        Self { keying, table: BTreeMap::new() }
    }

    pub fn key(&self, space: &NormSpec, x: &DVector<f64>) -> String {
        if x.iter().all(|v| *v == 0.0) {
            return "0".to_owned();
        }
        match self.keying {
            SignKeying::Ray => ray_key(space, x),
            SignKeying::Point => point_key(x),
        }
    }

    /// Records `sign` at `x`. Panics unless `sign` is `±1`.
    pub fn insert(&mut self, space: &NormSpec, x: &DVector<f64>, sign: i8) {
        assert!(sign == 1 || sign == -1, "phase values must be ±1, got {sign}");
        let key = self.key(space, x);
        self.table.insert(key, sign);
    }

    /// `Some(ε(x))` when recorded; the origin always maps to `+1`.
    pub fn get(&self, space: &NormSpec, x: &DVector<f64>) -> Option<i8> {
        if x.iter().all(|v| *v == 0.0) {
            return Some(1);
        }
        self.table.get(&self.key(space, x)).copied()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(c)
    }

    #[test]
    fn ray_keys_identify_opposite_and_scaled_points() {
        let l1 = NormSpec::l1(2);
        let k = ray_key(&l1, &v(&[3.0, -4.0]));
        assert_eq!(k, "[0.428571428571,-0.571428571429]");
        assert_eq!(ray_key(&l1, &v(&[-3.0, 4.0])), k);
        assert_eq!(ray_key(&l1, &v(&[6.0, -8.0])), k);
        assert_eq!(ray_key(&l1, &v(&[0.0, 0.0])), "0");
    }

    #[test]
    fn negative_zero_shares_a_key() {
        assert_eq!(point_key(&v(&[-0.0, 1.0])), point_key(&v(&[0.0, 1.0])));
        assert_eq!(point_key(&v(&[-1e-14, 1.0])), "[0.000000000000,1.000000000000]");
    }

    #[test]
    fn origin_is_positive() {
        let s = SignAssignment::new(SignKeying::Point);
        assert_eq!(s.get(&NormSpec::l2(2), &v(&[0.0, 0.0])), Some(1));
        assert_eq!(s.get(&NormSpec::l2(2), &v(&[1.0, 0.0])), None);
    }

    #[test]
    #[should_panic]
    fn rejects_zero_sign() {
        SignAssignment::new(SignKeying::Ray).insert(&NormSpec::l2(1), &v(&[1.0]), 0);
    }
}
