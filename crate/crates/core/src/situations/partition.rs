use serde::{Deserialize, Serialize};

use super::SituationError;
use crate::units::kmh_to_mps;

/// Ordered, disjoint half-open speed ranges `[lo, hi)`.
///
/// Boundaries are kept in km/h as configured (so documents round-trip
/// exactly) together with their m/s equivalents used for lookups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PartitionRepr", into = "PartitionRepr")]
pub struct SpeedRangePartition {
    boundaries_kmh: Vec<f64>,
    boundaries_mps: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionRepr {
    boundaries_kmh: Vec<f64>,
}

impl TryFrom<PartitionRepr> for SpeedRangePartition {
    type Error = SituationError;

    fn try_from(repr: PartitionRepr) -> Result<Self, Self::Error> {
        Self::from_kmh(&repr.boundaries_kmh)
    }
}

impl From<SpeedRangePartition> for PartitionRepr {
    fn from(p: SpeedRangePartition) -> Self {
        PartitionRepr {
            boundaries_kmh: p.boundaries_kmh,
        }
    }
}

impl SpeedRangePartition {
    pub fn from_kmh(boundaries_kmh: &[f64]) -> Result<Self, SituationError> {
        if boundaries_kmh.len() < 2 {
            return Err(SituationError::Partition(format!(
                "need at least two boundaries, got {}",
                boundaries_kmh.len()
            )));
        }
        if boundaries_kmh.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(SituationError::Partition(format!(
                "boundaries must be finite and >= 0: {boundaries_kmh:?}"
            )));
        }
        if boundaries_kmh.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SituationError::Partition(format!(
                "boundaries must be strictly increasing: {boundaries_kmh:?}"
            )));
        }
        Ok(Self {
            boundaries_kmh: boundaries_kmh.to_vec(),
            boundaries_mps: boundaries_kmh.iter().map(|&b| kmh_to_mps(b)).collect(),
        })
    }

    /// The three highway ranges 80–100, 100–130 and 130–180 km/h.
    pub fn highway() -> Self {
        Self::from_kmh(&[80.0, 100.0, 130.0, 180.0]).expect("static partition")
    }

    pub fn len(&self) -> usize {
        self.boundaries_kmh.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn boundaries_kmh(&self) -> &[f64] {
        &self.boundaries_kmh
    }

    pub fn bounds_mps(&self, index: usize) -> (f64, f64) {
        (self.boundaries_mps[index], self.boundaries_mps[index + 1])
    }

    pub fn bounds_kmh(&self, index: usize) -> (f64, f64) {
        (self.boundaries_kmh[index], self.boundaries_kmh[index + 1])
    }

    /// Index of the range containing `speed` (m/s).
    pub fn range_of(&self, speed: f64) -> Option<usize> {
        let b = &self.boundaries_mps;
        if !(speed >= b[0] && speed < b[b.len() - 1]) {
            return None;
        }
        // partition_point gives the first boundary strictly above `speed`
        Some(b.partition_point(|&x| x <= speed) - 1)
    }

    pub fn label(&self, index: usize) -> String {
        let (lo, hi) = self.bounds_kmh(index);
        format!("{lo}-{hi} km/h")
    }
}
