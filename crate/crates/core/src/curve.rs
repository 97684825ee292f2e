use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Strain values outside this band point to a calibration error.
pub const STRAIN_SANITY_BAND: (f64, f64) = (-0.01, 2.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error("time values must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("non-finite point at index {0}")]
    NonFinite(usize),
}

/// Where a digitized curve came from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub figure_id: String,
    pub series_key: String,
    pub calibration: String,
    pub quality: f64,
}

/// Time (s) against strain (fraction), strictly increasing in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreepCurve {
    points: Vec<(f64, f64)>,
    /// Points removed by the monotonicity cleaner.
    #[serde(default)]
    pub monotonicity_flags: usize,
    #[serde(default)]
    pub source: Option<TraceMetadata>,
}

impl CreepCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, CurveError> {
        for (i, (t, e)) in points.iter().enumerate() {
            if !t.is_finite() || !e.is_finite() {
                return Err(CurveError::NonFinite(i));
            }
            if i > 0 && *t <= points[i - 1].0 {
                return Err(CurveError::NotIncreasing(i));
            }
        }
        Ok(CreepCurve {
            points,
            monotonicity_flags: 0,
            source: None,
        })
    }

    pub fn with_source(mut self, source: TraceMetadata, flags: usize) -> Self {
        self.source = Some(source);
        self.monotonicity_flags = flags;
        self
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.0).collect()
    }

    pub fn strains(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    /// Indices of points whose strain falls outside [`STRAIN_SANITY_BAND`].
    pub fn out_of_band(&self) -> Vec<usize> {
        let (lo, hi) = STRAIN_SANITY_BAND;
        self.points
            .iter()
            .enumerate()
            .filter(|(_, (_, e))| *e < lo || *e > hi)
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_increasing_time() {
        assert_eq!(
            CreepCurve::new(vec![(0.0, 0.0), (1.0, 0.1), (1.0, 0.2)]),
            Err(CurveError::NotIncreasing(2))
        );
    }

    #[test]
    fn band_check() {
        let c = CreepCurve::new(vec![(0.0, -0.5), (1.0, 0.1), (2.0, 3.0)]).unwrap();
        assert_eq!(c.out_of_band(), vec![0, 2]);
    }
}
