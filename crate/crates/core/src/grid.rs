//! Output time grids. Relaxation in these models spans many decades, so the
//! default sampling is logarithmic.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TimeGrid {
    /// Geometrically spaced points from `t_min` to `t_max` inclusive.
    Log { t_min: f64, t_max: f64, points: usize },
    /// Evenly spaced points from 0 to `t_max` inclusive.
    Linear { t_max: f64, points: usize },
}

impl TimeGrid {
    pub fn log(t_min: f64, t_max: f64, points: usize) -> Result<Self> {
        if !(t_min > 0.0 && t_max > t_min) {
            return Err(Error::InvalidSpec(format!(
                "log grid needs 0 < t_min < t_max, got [{t_min}, {t_max}]"
            )));
        }
        if points < 2 {
            return Err(Error::InvalidSpec("grid needs at least 2 points".into()));
        }
        Ok(Self::Log { t_min, t_max, points })
    }

    pub fn linear(t_max: f64, points: usize) -> Result<Self> {
        if t_max <= 0.0 {
            return Err(Error::InvalidSpec(format!("t_max must be positive, got {t_max}")));
        }
        if points < 2 {
            return Err(Error::InvalidSpec("grid needs at least 2 points".into()));
        }
        Ok(Self::Linear { t_max, points })
    }

    pub fn t_max(&self) -> f64 {
        match self {
            Self::Log { t_max, .. } | Self::Linear { t_max, .. } => *t_max,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        match *self {
            Self::Log { t_min, t_max, points } => {
                let lo = t_min.ln();
                let hi = t_max.ln();
                (0..points)
                    .map(|i| (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp())
                    .collect()
            }
            Self::Linear { t_max, points } => (0..points)
                .map(|i| t_max * i as f64 / (points - 1) as f64)
                .collect(),
        }
    }
}
