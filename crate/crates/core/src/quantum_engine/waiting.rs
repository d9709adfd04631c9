//! Waiting-time distributions of the jump point process.

use super::QuantumTrajectory;
use crate::error::{Error, Result};

/// Inter-jump intervals of one trajectory. The first interval is measured
/// from the trajectory start at t = 0.
pub fn inter_jump_waits(trajectory: &QuantumTrajectory) -> Vec<f64> {
    let mut prev = 0.0;
    trajectory
        .events
        .iter()
        .map(|ev| {
            let wait = ev.time - prev;
            prev = ev.time;
            wait
        })
        .collect()
}

/// 2D histogram of waiting times binned by (jump time window, waiting
/// duration). `frequencies` are normalized per time window (each nonempty
/// window sums to 1); events outside the edges are dropped.
#[derive(Clone, Debug)]
pub struct WaitingTimeHistogram {
    pub window_edges: Vec<f64>,
    pub wait_edges: Vec<f64>,
    /// `counts[window][wait bin]`.
    pub counts: Vec<Vec<u64>>,
    pub frequencies: Vec<Vec<f64>>,
}

impl WaitingTimeHistogram {
    /// Wait-bin counts pooled over all time windows.
    pub fn pooled_counts(&self) -> Vec<u64> {
        let bins = self.wait_edges.len() - 1;
        let mut pooled = vec![0u64; bins];
        for row in &self.counts {
            for (p, &c) in pooled.iter_mut().zip(row) {
                *p += c;
            }
        }
        pooled
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

pub fn waiting_time_distribution(
    trajectories: &[QuantumTrajectory],
    window_edges: &[f64],
    wait_edges: &[f64],
) -> Result<WaitingTimeHistogram> {
    if trajectories.is_empty() {
        return Err(Error::InvalidSpec("at least one trajectory required".into()));
    }
    for edges in [window_edges, wait_edges] {
        if edges.len() < 2 || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSpec(
                "histogram edges must be strictly increasing with at least one bin".into(),
            ));
        }
    }
    let n_windows = window_edges.len() - 1;
    let n_bins = wait_edges.len() - 1;
    let mut counts = vec![vec![0u64; n_bins]; n_windows];
    for traj in trajectories {
        let mut prev = 0.0;
        for ev in &traj.events {
            let wait = ev.time - prev;
            prev = ev.time;
            let Some(w) = bin_index(window_edges, ev.time) else {
                continue;
            };
            let Some(b) = bin_index(wait_edges, wait) else {
                continue;
            };
            counts[w][b] += 1;
        }
    }
    let frequencies = counts
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                vec![0.0; n_bins]
            } else {
                row.iter().map(|&c| c as f64 / total as f64).collect()
            }
        })
        .collect();
    Ok(WaitingTimeHistogram {
        window_edges: window_edges.to_vec(),
        wait_edges: wait_edges.to_vec(),
        counts,
        frequencies,
    })
}

fn bin_index(edges: &[f64], value: f64) -> Option<usize> {
    if value < edges[0] || value >= edges[edges.len() - 1] {
        return None;
    }
    // edges are sorted; linear scan is fine at histogram sizes
    edges
        .windows(2)
        .position(|w| value >= w[0] && value < w[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum_engine::{JumpEvent, QuantumTrajectory, TrajectorySamples};
    use crate::rng::TrajectorySeed;
    use crate::spin_space::{PureState, SpinConfiguration};
    use std::sync::Arc;

    fn trajectory_with_events(times: &[f64]) -> QuantumTrajectory {
        QuantumTrajectory {
            seed: TrajectorySeed::new(0, 0),
            initial: Arc::new(PureState::basis_state(&SpinConfiguration::all_up(1))),
            events: times.iter().map(|&t| JumpEvent { time: t, channel: 0 }).collect(),
            samples: TrajectorySamples {
                times: vec![],
                density: vec![],
                sigma_x: vec![],
                site_density: vec![vec![]],
            },
            converged_dark: false,
        }
    }

    #[test]
    fn waits_measured_between_consecutive_jumps() {
        let traj = trajectory_with_events(&[0.5, 0.8, 2.0]);
        assert_eq!(inter_jump_waits(&traj), vec![0.5, 0.30000000000000004, 1.2]);
    }

    #[test]
    fn histogram_counts_and_normalization() {
        let trajs = vec![
            trajectory_with_events(&[0.5, 0.8, 2.0]),
            trajectory_with_events(&[1.5]),
        ];
        let hist =
            waiting_time_distribution(&trajs, &[0.0, 1.0, 4.0], &[0.0, 1.0, 2.0]).unwrap();
        // waits: (t=0.5, w=0.5), (t=0.8, w=0.3), (t=2.0, w=1.2), (t=1.5, w=1.5)
        assert_eq!(hist.counts[0], vec![2, 0]);
        assert_eq!(hist.counts[1], vec![0, 2]);
        assert_eq!(hist.frequencies[0], vec![1.0, 0.0]);
        assert_eq!(hist.frequencies[1], vec![0.0, 1.0]);
        assert_eq!(hist.pooled_counts(), vec![2, 2]);
        assert_eq!(hist.total_count(), 4);
    }

    #[test]
    fn empty_event_lists_yield_zero_counts() {
        let trajs = vec![trajectory_with_events(&[])];
        let hist = waiting_time_distribution(&trajs, &[0.0, 1.0], &[0.0, 1.0]).unwrap();
        assert_eq!(hist.total_count(), 0);
        assert_eq!(hist.frequencies[0], vec![0.0]);
    }
}
