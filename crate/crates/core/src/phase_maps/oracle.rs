use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use nalgebra::DVector;
use thiserror::Error;

use crate::space::{NormSpec, SpaceError};

pub type MapFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("invalid query: {0}")]
    Query(#[from] SpaceError),
    #[error("sample table has no entry for {0:?}")]
    MissingKey(Vec<f64>),
    #[error("oracle returned {found} coordinates, codomain has {expected}")]
    OutputDimension { expected: usize, found: usize },
    #[error("oracle returned a non-finite value at {0:?}")]
    NonFiniteOutput(Vec<f64>),
}

/// Exact bit pattern of a point, with `-0.0` folded into `0.0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PointKey(Vec<u64>);

impl PointKey {
    pub fn of(x: &DVector<f64>) -> Self {
        Self(x.iter().map(|v| if *v == 0.0 { 0u64 } else { v.to_bits() }).collect())
    }
}

enum Source {
    Function(MapFn),
    Table(HashMap<PointKey, DVector<f64>>),
}

#[derive(Default)]
struct QueryLog {
    entries: Vec<(DVector<f64>, DVector<f64>)>,
    index: HashMap<PointKey, usize>,
}

/// The map `f` under study. Answers are memoized, so repeated queries return
/// identical vectors, and every evaluated point is kept in the transcript.
pub struct PhaseMapOracle {
    domain: NormSpec,
    codomain: NormSpec,
    source: Source,
    log: Mutex<QueryLog>,
}

impl fmt::Debug for PhaseMapOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let source = match &self.source {
            Source::Function(_) => "function".to_owned(),
            Source::Table(t) => format!("table({} entries)", t.len()),
        };
        f.debug_struct("PhaseMapOracle")
            .field("domain", &self.domain.describe())
            .field("codomain", &self.codomain.describe())
            .field("source", &source)
            .field("queries", &self.query_count())
            .finish()
    }
}

impl PhaseMapOracle {
    pub fn from_fn<F>(domain: NormSpec, codomain: NormSpec, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self { domain, codomain, source: Source::Function(Arc::new(f)), log: Mutex::default() }
    }

    pub fn identity(space: &NormSpec) -> Self {
        Self::from_fn(space.clone(), space.clone(), |x| x.clone())
    }

    /// Oracle that only answers the stored points, matched bit for bit.
    pub fn from_table(
        domain: NormSpec,
        codomain: NormSpec,
        samples: impl IntoIterator<Item = (DVector<f64>, DVector<f64>)>,
    ) -> Result<Self, OracleError> {
        let mut table = HashMap::new();
        for (x, fx) in samples {
            domain.check(&x)?;
            if fx.len() != codomain.dim() {
                return Err(OracleError::OutputDimension { expected: codomain.dim(), found: fx.len() });
            }
            if fx.iter().any(|v| !v.is_finite()) {
                return Err(OracleError::NonFiniteOutput(x.as_slice().to_vec()));
            }
            table.insert(PointKey::of(&x), fx);
        }
        Ok(Self { domain, codomain, source: Source::Table(table), log: Mutex::default() })
    }

    pub fn domain(&self) -> &NormSpec {
        &self.domain
    }

    pub fn codomain(&self) -> &NormSpec {
        &self.codomain
    }

    pub fn is_table(&self) -> bool {
        matches!(self.source, Source::Table(_))
    }

    /// Whether a table oracle can answer `x` (always true for functions).
    pub fn can_answer(&self, x: &DVector<f64>) -> bool {
        match &self.source {
            Source::Function(_) => true,
            Source::Table(t) => t.contains_key(&PointKey::of(x)),
        }
    }

    pub fn query(&self, x: &DVector<f64>) -> Result<DVector<f64>, OracleError> {
        self.domain.check(x)?;
        let key = PointKey::of(x);
        {
            let log = self.log.lock().expect("query log poisoned");
            if let Some(&i) = log.index.get(&key) {
                return Ok(log.entries[i].1.clone());
            }
        }
        let fx = match &self.source {
            Source::Function(f) => f(x),
            Source::Table(t) => t.get(&key).cloned().ok_or_else(|| OracleError::MissingKey(x.as_slice().to_vec()))?,
        };
        if fx.len() != self.codomain.dim() {
            return Err(OracleError::OutputDimension { expected: self.codomain.dim(), found: fx.len() });
        }
        if fx.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::NonFiniteOutput(x.as_slice().to_vec()));
        }
        let mut log = self.log.lock().expect("query log poisoned");
        // another thread may have raced us to the same point; keep the first answer
        if let Some(&i) = log.index.get(&key) {
            return Ok(log.entries[i].1.clone());
        }
        let i = log.entries.len();
        log.entries.push((x.clone(), fx.clone()));
        log.index.insert(key, i);
        Ok(fx)
    }

    /// Every distinct point evaluated so far, in first-query order.
    pub fn transcript(&self) -> Vec<(DVector<f64>, DVector<f64>)> {
        self.log.lock().expect("query log poisoned").entries.clone()
    }

    pub fn query_count(&self) -> usize {
        self.log.lock().expect("query log poisoned").entries.len()
    }

    pub fn clear_log(&self) {
        *self.log.lock().expect("query log poisoned") = QueryLog::default();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(c)
    }

    #[test]
    fn queries_are_memoized_and_logged() {
        let calls = Arc::new(Mutex::new(0usize));
        let counter = Arc::clone(&calls);
        let f = PhaseMapOracle::from_fn(NormSpec::l2(2), NormSpec::l2(2), move |x| {
            *counter.lock().unwrap() += 1;
            x * 2.0
        });
        let x = v(&[1.0, -0.0]);
        assert_eq!(f.query(&x).unwrap(), v(&[2.0, 0.0]));
        assert_eq!(f.query(&v(&[1.0, 0.0])).unwrap(), v(&[2.0, 0.0]));
        assert_eq!(*calls.lock().unwrap(), 1);
        assert_eq!(f.transcript().len(), 1);
    }

    #[test]
    fn table_answers_only_stored_points() {
        let f = PhaseMapOracle::from_table(
            NormSpec::l1(2),
            NormSpec::l1(2),
            vec![(v(&[1.0, 0.0]), v(&[0.0, 1.0]))],
        )
        .unwrap();
        assert_eq!(f.query(&v(&[1.0, 0.0])).unwrap(), v(&[0.0, 1.0]));
        assert_eq!(f.query(&v(&[0.0, 1.0])), Err(OracleError::MissingKey(vec![0.0, 1.0])));
    }

    #[test]
    fn bad_outputs_are_reported() {
        let f = PhaseMapOracle::from_fn(NormSpec::l2(2), NormSpec::l2(2), |_| v(&[1.0]));
        assert!(matches!(f.query(&v(&[1.0, 0.0])), Err(OracleError::OutputDimension { .. })));
        let g = PhaseMapOracle::from_fn(NormSpec::l2(1), NormSpec::l2(1), |_| v(&[f64::NAN]));
        assert!(matches!(g.query(&v(&[1.0])), Err(OracleError::NonFiniteOutput(_))));
        assert!(matches!(g.query(&v(&[1.0, 2.0])), Err(OracleError::Query(_))));
    }
}
