//! Observable time series, relaxation-time extraction and
//! classical-vs-quantum comparison reports.

use crate::classical_engine::ClassicalTrajectory;
use crate::error::{Error, Result};
use crate::quantum_engine::QuantumTrajectory;
use serde::{Deserialize, Serialize};

/// Default band fraction for the band-exit relaxation time.
pub const DEFAULT_BAND: f64 = 0.05;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
    pub label: String,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::InvalidSpec("series times/values length mismatch".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSpec("series times must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("series values must be finite".into()));
        }
        Ok(Self {
            times,
            values,
            stderr: None,
            label: label.into(),
        })
    }

    pub fn with_stderr(mut self, stderr: Vec<f64>) -> Result<Self> {
        if stderr.len() != self.times.len() {
            return Err(Error::InvalidSpec("stderr length mismatch".into()));
        }
        self.stderr = Some(stderr);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Linear interpolation in log-time (falls back to linear time when a
    /// nonpositive time is involved). Out-of-range queries clamp to the
    /// endpoints.
    pub fn interpolate(&self, t: f64) -> f64 {
        let times = &self.times;
        if t <= times[0] {
            return self.values[0];
        }
        if t >= *times.last().unwrap() {
            return *self.values.last().unwrap();
        }
        let hi = times.partition_point(|&x| x < t);
        let lo = hi - 1;
        let (t0, t1) = (times[lo], times[hi]);
        let frac = if t0 > 0.0 && t1 > 0.0 && t > 0.0 {
            (t.ln() - t0.ln()) / (t1.ln() - t0.ln())
        } else {
            (t - t0) / (t1 - t0)
        };
        self.values[lo] + frac * (self.values[hi] - self.values[lo])
    }
}

/// Band-exit relaxation time: the last time the series leaves the band
/// |v - v_ss| ≤ band · |v(0) - v_ss|, interpolated (log-time) between the
/// last outside point and the following inside point.
///
/// Errors when the final value has not entered the band; the residual is
/// carried in the error.
pub fn relaxation_time(series: &TimeSeries, stationary_value: f64, band: f64) -> Result<f64> {
    if !(band > 0.0) {
        return Err(Error::InvalidSpec(format!("band must be positive, got {band}")));
    }
    let threshold = band * (series.values[0] - stationary_value).abs();
    let final_residual = (series.values.last().unwrap() - stationary_value).abs();
    if final_residual > threshold {
        return Err(Error::NotConverged {
            residual: final_residual,
            band: threshold,
        });
    }
    let deviations: Vec<f64> = series
        .values
        .iter()
        .map(|v| (v - stationary_value).abs())
        .collect();
    let Some(last_outside) = deviations.iter().rposition(|&d| d > threshold) else {
        return Ok(0.0);
    };
    let (i, j) = (last_outside, last_outside + 1);
    let (d0, d1) = (deviations[i], deviations[j]);
    let frac = if d0 > d1 { (d0 - threshold) / (d0 - d1) } else { 1.0 };
    let (t0, t1) = (series.times[i], series.times[j]);
    if t0 > 0.0 && t1 > 0.0 {
        Ok((t0.ln() + frac * (t1.ln() - t0.ln())).exp())
    } else {
        Ok(t0 + frac * (t1 - t0))
    }
}

/// Deviation profile between two series over one log-decade of time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecadeDeviation {
    /// Decade lower edge 10^k.
    pub decade_start: f64,
    pub max_abs_deviation: f64,
}

/// Comparison report between a classical and a quantum observable series.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// |v_ss_classical - v_ss_quantum| as supplied.
    pub stationary_deviation: f64,
    /// Deviation of the latest overlapping values.
    pub final_deviation: f64,
    /// max_t |classical(t) - quantum(t)| over the overlapping window.
    pub max_transient_deviation: f64,
    /// Same maximum, relative to the larger magnitude at that time.
    pub max_relative_transient_deviation: f64,
    pub per_decade: Vec<DecadeDeviation>,
}

/// Compare classical and quantum series on their overlapping time window,
/// interpolating the quantum series onto the classical grid (linear in
/// log-time).
pub fn compare_models(
    classical: &TimeSeries,
    quantum: &TimeSeries,
    v_ss_classical: f64,
    v_ss_quantum: f64,
) -> Result<ComparisonReport> {
    let t_lo = classical.times[0].max(quantum.times[0]);
    let t_hi = classical
        .times
        .last()
        .unwrap()
        .min(*quantum.times.last().unwrap());
    if t_hi <= t_lo {
        return Err(Error::GridMismatch);
    }
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    let mut final_dev = 0.0;
    let mut decades: Vec<DecadeDeviation> = Vec::new();
    for (&t, &c) in classical.times.iter().zip(&classical.values) {
        if t < t_lo || t > t_hi {
            continue;
        }
        let q = quantum.interpolate(t);
        let dev = (c - q).abs();
        max_abs = max_abs.max(dev);
        let scale = c.abs().max(q.abs()).max(1e-12);
        max_rel = max_rel.max(dev / scale);
        final_dev = dev;
        let decade_start = if t > 0.0 {
            10f64.powi(t.log10().floor() as i32)
        } else {
            0.0
        };
        match decades.last_mut() {
            Some(d) if d.decade_start == decade_start => {
                d.max_abs_deviation = d.max_abs_deviation.max(dev);
            }
            _ => decades.push(DecadeDeviation {
                decade_start,
                max_abs_deviation: dev,
            }),
        }
    }
    Ok(ComparisonReport {
        stationary_deviation: (v_ss_classical - v_ss_quantum).abs(),
        final_deviation: final_dev,
        max_transient_deviation: max_abs,
        max_relative_transient_deviation: max_rel,
        per_decade: decades,
    })
}

/// Per-site occupation heatmap of a single trajectory: `matrix[site][time]`.
#[derive(Clone, Debug)]
pub struct SiteProfile {
    pub times: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
}

pub fn site_profile_heatmap(trajectory: &QuantumTrajectory) -> Result<SiteProfile> {
    if trajectory.samples.times.is_empty() {
        return Err(Error::InvalidSpec(
            "trajectory carries no per-site samples".into(),
        ));
    }
    Ok(SiteProfile {
        times: trajectory.samples.times.clone(),
        matrix: trajectory.samples.site_density.clone(),
    })
}

pub fn site_profile_from_classical(
    trajectory: &ClassicalTrajectory,
    grid: &[f64],
) -> SiteProfile {
    SiteProfile {
        times: grid.to_vec(),
        matrix: trajectory.site_occupation_series(grid),
    }
}

/// Plateau intervals of a log-time series: maximal windows where
/// |dv/d log t| stays below `threshold_frac` of its running maximum, kept
/// when they span at least `min_decades` decades. The running maximum must
/// also have reached 10% of its global value, which discards the quiescent
/// stretch before dynamics set in.
pub fn plateau_intervals(
    series: &TimeSeries,
    threshold_frac: f64,
    min_decades: f64,
) -> Result<Vec<(f64, f64)>> {
    if series.times[0] <= 0.0 {
        return Err(Error::InvalidSpec("plateau detection needs positive times".into()));
    }
    let n = series.len();
    if n < 3 {
        return Ok(Vec::new());
    }
    let mut derivs = Vec::with_capacity(n - 2);
    for i in 1..n - 1 {
        let dlog = series.times[i + 1].ln() - series.times[i - 1].ln();
        derivs.push(((series.values[i + 1] - series.values[i - 1]) / dlog).abs());
    }
    let global_max = derivs.iter().copied().fold(0.0f64, f64::max);
    let mut running_max = 0.0f64;
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let mut open: Option<usize> = None;
    for (idx, &d) in derivs.iter().enumerate() {
        running_max = running_max.max(d);
        let quiet = d < threshold_frac * running_max && running_max >= 0.1 * global_max;
        match (quiet, open) {
            (true, None) => open = Some(idx),
            (false, Some(start)) => {
                push_interval(&mut intervals, series, start, idx - 1, min_decades);
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        push_interval(&mut intervals, series, start, derivs.len() - 1, min_decades);
    }
    Ok(intervals)
}

fn push_interval(
    intervals: &mut Vec<(f64, f64)>,
    series: &TimeSeries,
    d_start: usize,
    d_end: usize,
    min_decades: f64,
) {
    // derivative index i corresponds to series index i+1
    let t_lo = series.times[d_start + 1];
    let t_hi = series.times[d_end + 1];
    if (t_hi / t_lo).log10() >= min_decades {
        intervals.push((t_lo, t_hi));
    }
}

/// Decay rates of a sum of exponentials on a uniform grid via linear
/// prediction (Prony). A constant offset shows up as a rate near zero;
/// repeated rates come out as repeated roots. Returns `n_modes` rates
/// sorted ascending.
pub fn fit_exponential_rates(times: &[f64], values: &[f64], n_modes: usize) -> Result<Vec<f64>> {
    let n = times.len();
    if n != values.len() || n < 2 * n_modes + 1 {
        return Err(Error::InvalidSpec(format!(
            "need at least {} uniformly spaced samples for {n_modes} modes",
            2 * n_modes + 1
        )));
    }
    let h = times[1] - times[0];
    for w in times.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1e-300) {
            return Err(Error::InvalidSpec("exponential fit requires a uniform grid".into()));
        }
    }
    let rows = n - n_modes;
    let mut a = nalgebra::DMatrix::<f64>::zeros(rows, n_modes);
    let mut b = nalgebra::DVector::<f64>::zeros(rows);
    for i in 0..rows {
        for j in 0..n_modes {
            a[(i, j)] = values[i + j];
        }
        b[i] = values[i + n_modes];
    }
    let svd = a.svd(true, true);
    let coeffs = svd
        .solve(&b, 1e-13)
        .map_err(|e| Error::InvalidSpec(format!("linear prediction failed: {e}")))?;
    // companion matrix of z^m - c_{m-1} z^{m-1} - ... - c_0
    let mut companion = nalgebra::DMatrix::<f64>::zeros(n_modes, n_modes);
    for i in 1..n_modes {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..n_modes {
        companion[(i, n_modes - 1)] = coeffs[i];
    }
    let roots = companion.complex_eigenvalues();
    let mut rates: Vec<f64> = roots
        .iter()
        .map(|z| {
            let magnitude = z.norm().max(1e-300);
            -magnitude.ln() / h
        })
        .collect();
    rates.sort_by(f64::total_cmp);
    Ok(rates)
}
