use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::rng::{gaussian_vector, seeded};
use crate::space::{NormSpec, SpaceError};

/// Linear map between two normed spaces, stored as a codomain × domain matrix.
#[derive(Clone, Debug)]
pub struct LinearMap {
    matrix: DMatrix<f64>,
    domain: NormSpec,
    codomain: NormSpec,
}

/// Outcome of sampling `‖Tx‖ = ‖x‖`.
#[derive(Clone, Debug, Serialize)]
pub struct IsometryCheck {
    pub isometric: bool,
    pub samples: usize,
    /// Largest `|‖Tx‖ − ‖x‖| / (1 + ‖x‖)`.
    pub max_relative_error: f64,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>, domain: NormSpec, codomain: NormSpec) -> Result<Self, SpaceError> {
        if matrix.ncols() != domain.dim() {
            return Err(SpaceError::DimensionMismatch { expected: domain.dim(), found: matrix.ncols() });
        }
        if matrix.nrows() != codomain.dim() {
            return Err(SpaceError::DimensionMismatch { expected: codomain.dim(), found: matrix.nrows() });
        }
        if let Some(i) = matrix.iter().position(|v| !v.is_finite()) {
            return Err(SpaceError::NonFinite(i));
        }
        Ok(Self { matrix, domain, codomain })
    }

    pub fn identity(space: &NormSpec) -> Self {
        let n = space.dim();
        Self { matrix: DMatrix::identity(n, n), domain: space.clone(), codomain: space.clone() }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn domain(&self) -> &NormSpec {
        &self.domain
    }

    pub fn codomain(&self) -> &NormSpec {
        &self.codomain
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    pub fn negated(&self) -> Self {
        Self { matrix: -&self.matrix, ..self.clone() }
    }

    /// Row-major nested vectors, the JSON shape of `"T"`.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    /// Largest entrywise difference to `other`.
    pub fn max_entry_distance(&self, other: &LinearMap) -> f64 {
        if self.matrix.shape() != other.matrix.shape() {
            return f64::INFINITY;
        }
        (&self.matrix - &other.matrix).amax()
    }

    /// Checks `‖Tx‖ = ‖x‖` on `samples` Gaussian vectors drawn from `seed`.
    pub fn verify_isometry(&self, samples: usize, seed: u64, tol: f64) -> IsometryCheck {
        let mut rng = seeded(seed);
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let x = gaussian_vector(&mut rng, self.domain.dim());
            let nx = self.domain.norm_unchecked(&x);
            let ntx = self.codomain.norm_unchecked(&self.apply(&x));
            worst = worst.max((ntx - nx).abs() / (1.0 + nx));
        }
        IsometryCheck { isometric: worst <= tol, samples, max_relative_error: worst }
    }
}
