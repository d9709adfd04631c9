//! Ensemble statistics with deterministic reduction order.

use serde::{Deserialize, Serialize};

/// Mean and standard error of a scalar observable over an ensemble, per grid
/// point. `stderr` is absent for single-trajectory ensembles.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
}

impl SeriesStats {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Reduce per-trajectory series (`rows[trajectory][grid point]`) into mean
/// and standard error. Summation follows the slice order, so results do not
/// depend on thread scheduling.
pub fn reduce_rows(rows: &[Vec<f64>]) -> SeriesStats {
    assert!(!rows.is_empty());
    let n = rows.len();
    let len = rows[0].len();
    let mut mean = vec![0.0; len];
    for row in rows {
        debug_assert_eq!(row.len(), len);
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    if n < 2 {
        return SeriesStats { mean, stderr: None };
    }
    let mut var = vec![0.0; len];
    for row in rows {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    let stderr = var
        .into_iter()
        .map(|s| (s / ((n - 1) as f64 * n as f64)).sqrt())
        .collect();
    SeriesStats {
        mean,
        stderr: Some(stderr),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_stderr() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 2.0], vec![5.0, 2.0]];
        let s = reduce_rows(&rows);
        assert_eq!(s.mean, vec![3.0, 2.0]);
        let se = s.stderr.unwrap();
        // sample std of {1,3,5} is 2, stderr = 2/sqrt(3)
        assert!((se[0] - 2.0 / 3.0f64.sqrt()).abs() < 1e-14);
        assert_eq!(se[1], 0.0);
    }

    #[test]
    fn single_row_has_no_stderr() {
        let s = reduce_rows(&[vec![1.0, 2.0]]);
        assert!(s.stderr.is_none());
    }
}
