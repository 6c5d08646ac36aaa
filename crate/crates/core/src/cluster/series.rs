use serde::{Deserialize, Serialize};

use super::ClusterError;
use crate::data::AssessmentSeries;

/// Relative change between two consecutive observed years.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PctStep {
    pub from_year: i32,
    pub to_year: i32,
    pub pct_change: f64,
    /// The interval spans more than one year (2008→2010 in county data).
    pub is_gap_interval: bool,
}

impl PctStep {
    pub fn years_spanned(&self) -> i32 {
        self.to_year - self.from_year
    }

    /// Equivalent constant annual rate over the interval.
    pub fn annualized(&self) -> f64 {
        if self.is_gap_interval {
            (1.0 + self.pct_change).powf(1.0 / f64::from(self.years_spanned())) - 1.0
        } else {
            self.pct_change
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PctChangeSeries {
    pub parcel_id: String,
    pub steps: Vec<PctStep>,
}

impl PctChangeSeries {
    /// Rebuild the value history from its first value.
    pub fn reconstruct(&self, base: f64) -> Vec<f64> {
        let mut v = base;
        std::iter::once(base)
            .chain(self.steps.iter().map(|s| {
                v *= 1.0 + s.pct_change;
                v
            }))
            .collect()
    }
}

/// Percent changes over consecutive observed years of a complete series.
pub fn to_pct_changes(s: &AssessmentSeries) -> Result<PctChangeSeries, ClusterError> {
    if !s.is_complete() {
        return Err(ClusterError::IncompleteSeries(s.parcel_id.clone()));
    }
    let obs: Vec<(i32, f64)> = s.observations.iter().map(|(&y, &v)| (y, v)).collect();
    let steps = obs
        .windows(2)
        .map(|w| {
            let ((s_year, s_val), (t_year, t_val)) = (w[0], w[1]);
            PctStep {
                from_year: s_year,
                to_year: t_year,
                pct_change: (t_val - s_val) / s_val,
                is_gap_interval: t_year - s_year > 1,
            }
        })
        .collect();
    Ok(PctChangeSeries { parcel_id: s.parcel_id.clone(), steps })
}
