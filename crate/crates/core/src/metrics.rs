//! Evaluation measures for flocking runs.
//!
//! Per-state measures: flock diameter (largest pairwise distance) and
//! velocity convergence (mean squared deviation from the flock-average
//! velocity). Per-trajectory: collision instances per recorded state for the
//! three clearance families (inter-agent, obstacle, predator). Aggregates
//! over run sets report converged statistics and collision counts/rates; the
//! count sums violating (state, pair) instances while the rate flags states,
//! and an instance-normalized rate is emitted alongside since both
//! denominator conventions are in use.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::dynamics::Obstacle;
use crate::mpc::Trajectory;
use crate::vector::Vector;
use crate::{Error, Result};

/// Largest pairwise distance in the flock.
pub fn diameter<const D: usize>(positions: &[Vector<D>]) -> Result<f64> {
    let n = positions.len();
    if n < 2 {
        return Err(Error::TooFewAgents {
            required: 2,
            actual: n,
        });
    }
    let mut max = 0.0_f64;
    for i in 0..n {
        for j in i + 1..n {
            max = max.max(positions[i].distance(&positions[j]));
        }
    }
    Ok(max)
}

/// Mean squared deviation of agent velocities from their average.
pub fn velocity_convergence<const D: usize>(velocities: &[Vector<D>]) -> f64 {
    let n = velocities.len();
    if n == 0 {
        return 0.0;
    }
    let mean: Vector<D> = velocities.iter().copied().sum::<Vector<D>>() / n as f64;
    velocities
        .iter()
        .map(|v| (*v - mean).norm_sq())
        .sum::<f64>()
        / n as f64
}

/// Per-control-step measures of one trajectory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricSeries {
    pub diameter: Vec<f64>,
    pub velocity_convergence: Vec<f64>,
    /// Violating (state, pair/agent) instances at each recorded state.
    pub ic_instances: Vec<u64>,
    pub oc_instances: Vec<u64>,
    pub pc_instances: Vec<u64>,
}

impl MetricSeries {
    pub fn states(&self) -> usize {
        self.diameter.len()
    }

    pub fn final_diameter(&self) -> f64 {
        *self.diameter.last().unwrap_or(&f64::NAN)
    }

    pub fn final_velocity_convergence(&self) -> f64 {
        *self.velocity_convergence.last().unwrap_or(&f64::NAN)
    }
}

/// Computes the full metric series of a trajectory, counting collision
/// instances against the given clearances at every recorded state.
pub fn collision_events<const D: usize>(
    trajectory: &Trajectory<D>,
    d_min: f64,
    d_min_pred: f64,
    obstacles: &[Obstacle<D>],
) -> Result<MetricSeries> {
    let mut series = MetricSeries::default();
    for state in &trajectory.states {
        let positions = state.positions();
        series.diameter.push(diameter(&positions)?);
        series
            .velocity_convergence
            .push(velocity_convergence(&state.velocities()));

        let n = positions.len();
        let mut ic = 0u64;
        for i in 0..n {
            for j in i + 1..n {
                if positions[i].distance(&positions[j]) < d_min {
                    ic += 1;
                }
            }
        }
        let mut oc = 0u64;
        for p in &positions {
            for o in obstacles {
                if o.boundary_distance(p) < d_min {
                    oc += 1;
                }
            }
        }
        let mut pc = 0u64;
        if let Some(pred) = &state.predator {
            for p in &positions {
                if p.distance(&pred.position) < d_min_pred {
                    pc += 1;
                }
            }
        }
        series.ic_instances.push(ic);
        series.oc_instances.push(oc);
        series.pc_instances.push(pc);
    }
    Ok(series)
}

/// Collision totals over a trajectory set.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CollisionReport {
    /// Violating (state, pair/agent) instances summed over all trajectories.
    pub ic_count: u64,
    pub oc_count: u64,
    pub pc_count: u64,
    /// Fraction of recorded states containing at least one collision.
    pub ic_state_rate: f64,
    pub oc_state_rate: f64,
    pub pc_state_rate: f64,
    /// Instances over the total number of (state, pair/agent) slots.
    pub ic_instance_rate: f64,
    pub oc_instance_rate: f64,
    pub pc_instance_rate: f64,
    pub total_states: u64,
}

/// Sums collision instances and state flags over a trajectory set.
///
/// `agents` and `obstacle_count` size the instance-rate denominators.
pub fn aggregate_collisions(
    series: &[MetricSeries],
    agents: usize,
    obstacle_count: usize,
) -> CollisionReport {
    let mut report = CollisionReport::default();
    let mut flagged = [0u64; 3];
    for s in series {
        report.total_states += s.states() as u64;
        for &ic in &s.ic_instances {
            report.ic_count += ic;
            flagged[0] += (ic > 0) as u64;
        }
        for &oc in &s.oc_instances {
            report.oc_count += oc;
            flagged[1] += (oc > 0) as u64;
        }
        for &pc in &s.pc_instances {
            report.pc_count += pc;
            flagged[2] += (pc > 0) as u64;
        }
    }
    if report.total_states > 0 {
        let states = report.total_states as f64;
        report.ic_state_rate = flagged[0] as f64 / states;
        report.oc_state_rate = flagged[1] as f64 / states;
        report.pc_state_rate = flagged[2] as f64 / states;
        let pair_slots = states * (agents * agents.saturating_sub(1) / 2) as f64;
        if pair_slots > 0.0 {
            report.ic_instance_rate = report.ic_count as f64 / pair_slots;
        }
        let obstacle_slots = states * (agents * obstacle_count) as f64;
        if obstacle_slots > 0.0 {
            report.oc_instance_rate = report.oc_count as f64 / obstacle_slots;
        }
        let predator_slots = states * agents as f64;
        if predator_slots > 0.0 {
            report.pc_instance_rate = report.pc_count as f64 / predator_slots;
        }
    }
    report
}

/// Mean and population standard deviation.
pub fn converged_stats(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptySet("run statistics"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Pointwise average of each series set, then their difference. Series are
/// truncated to the shortest length; the flag reports whether truncation
/// happened.
pub fn series_difference(set_a: &[Vec<f64>], set_b: &[Vec<f64>]) -> Result<(Vec<f64>, bool)> {
    if set_a.is_empty() || set_b.is_empty() {
        return Err(Error::EmptySet("series set"));
    }
    let len = set_a
        .iter()
        .chain(set_b)
        .map(Vec::len)
        .min()
        .unwrap_or(0);
    let truncated = set_a.iter().chain(set_b).any(|s| s.len() != len);
    let avg = |set: &[Vec<f64>]| -> Vec<f64> {
        let mut out = alloc::vec![0.0; len];
        for series in set {
            for (o, v) in out.iter_mut().zip(series) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= set.len() as f64;
        }
        out
    };
    let a = avg(set_a);
    let b = avg(set_b);
    Ok((a.iter().zip(&b).map(|(x, y)| x - y).collect(), truncated))
}

/// Converged-statistics summary of a run set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub runs: usize,
    pub mean_converged_diameter: f64,
    pub sd_converged_diameter: f64,
    pub mean_velocity_convergence: f64,
    pub sd_velocity_convergence: f64,
    pub collisions: CollisionReport,
}

/// Final-state statistics and collision totals over a run set.
pub fn evaluate_runs(
    series: &[MetricSeries],
    agents: usize,
    obstacle_count: usize,
) -> Result<EvalReport> {
    let finals_d: Vec<f64> = series.iter().map(MetricSeries::final_diameter).collect();
    let finals_vc: Vec<f64> = series
        .iter()
        .map(MetricSeries::final_velocity_convergence)
        .collect();
    let (mean_d, sd_d) = converged_stats(&finals_d)?;
    let (mean_vc, sd_vc) = converged_stats(&finals_vc)?;
    Ok(EvalReport {
        runs: series.len(),
        mean_converged_diameter: mean_d,
        sd_converged_diameter: sd_d,
        mean_velocity_convergence: mean_vc,
        sd_velocity_convergence: sd_vc,
        collisions: aggregate_collisions(series, agents, obstacle_count),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{AgentState, FlockState};
    use crate::rng::seeded;
    use rand::RngExt;

    fn pts(raw: &[[f64; 2]]) -> Vec<Vector<2>> {
        raw.iter().map(|p| Vector(*p)).collect()
    }

    #[test]
    fn diameter_cases() {
        assert!((diameter(&pts(&[[0.0, 0.0], [3.0, 4.0]])).unwrap() - 5.0).abs() < 1e-15);
        assert_eq!(diameter(&pts(&[[1.0, 1.0], [1.0, 1.0]])).unwrap(), 0.0);
        let tri = pts(&[[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]]);
        assert!((diameter(&tri).unwrap() - 5.0_f64.sqrt()).abs() < 1e-12);
        assert!(diameter(&pts(&[[0.0, 0.0]])).is_err());
    }

    #[test]
    fn velocity_convergence_cases() {
        assert_eq!(
            velocity_convergence(&pts(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]])),
            0.0
        );
        assert!((velocity_convergence(&pts(&[[1.0, 0.0], [-1.0, 0.0]])) - 1.0).abs() < 1e-15);
        assert_eq!(velocity_convergence(&pts(&[[3.0, -2.0]])), 0.0);
    }

    fn still_flock(points: &[[f64; 2]]) -> FlockState<2> {
        FlockState::new(points.iter().map(|p| AgentState::at_rest(Vector(*p))).collect())
    }

    #[test]
    fn collision_counting_and_rates() {
        // 334 states: one state has two violating pairs, the rest are clear.
        let clear = still_flock(&[[0.0, 0.0], [10.0, 0.0], [20.0, 0.0]]);
        let tight = still_flock(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        let mut states = alloc::vec![clear.clone(); 334];
        states[100] = tight;
        let traj = Trajectory {
            states,
            actions: alloc::vec![alloc::vec![Vector::ZERO; 3]; 333],
        };
        let series = collision_events(&traj, 2.0, 4.0, &[]).unwrap();
        let report = aggregate_collisions(&[series], 3, 0);
        assert_eq!(report.ic_count, 2);
        assert!((report.ic_state_rate - 1.0 / 334.0).abs() < 1e-12);
        assert_eq!(report.oc_count, 0);
        assert_eq!(report.oc_state_rate, 0.0);
    }

    #[test]
    fn clean_trajectory_has_zero_counts_and_rates() {
        let clear = still_flock(&[[0.0, 0.0], [10.0, 0.0]]);
        let traj = Trajectory {
            states: alloc::vec![clear; 10],
            actions: alloc::vec![alloc::vec![Vector::ZERO; 2]; 9],
        };
        let series = collision_events(&traj, 2.0, 4.0, &[]).unwrap();
        let report = aggregate_collisions(&[series], 2, 0);
        assert_eq!(report.ic_count, 0);
        assert_eq!(report.ic_state_rate, 0.0);
        assert_eq!(report.ic_instance_rate, 0.0);
    }

    #[test]
    fn converged_stats_cases() {
        let (m, s) = converged_stats(&[7.5]).unwrap();
        assert_eq!((m, s), (7.5, 0.0));
        let (m, s) = converged_stats(&[20.0, 24.0]).unwrap();
        assert!((m - 22.0).abs() < 1e-15);
        assert!((s - 2.0).abs() < 1e-15);
        let (_, s) = converged_stats(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn series_difference_cases() {
        let a = alloc::vec![alloc::vec![1.0, 2.0, 3.0]];
        let (zero, truncated) = series_difference(&a, &a).unwrap();
        assert_eq!(zero, alloc::vec![0.0, 0.0, 0.0]);
        assert!(!truncated);

        let b = alloc::vec![alloc::vec![0.5, 1.0, 1.5]];
        let (diff, _) = series_difference(&a, &b).unwrap();
        assert_eq!(diff, alloc::vec![0.5, 1.0, 1.5]);

        let two = alloc::vec![alloc::vec![1.0, 3.0], alloc::vec![3.0, 5.0]];
        let one = alloc::vec![alloc::vec![1.0, 1.0]];
        let (diff, _) = series_difference(&two, &one).unwrap();
        assert_eq!(diff, alloc::vec![1.0, 3.0]);

        let ragged = alloc::vec![alloc::vec![1.0, 2.0], alloc::vec![1.0]];
        let (diff, truncated) = series_difference(&ragged, &one).unwrap();
        assert_eq!(diff.len(), 1);
        assert!(truncated);

        assert!(series_difference(&[], &one).is_err());
    }

    #[test]
    fn measures_are_invariant_under_permutation_and_translation() {
        let mut rng = seeded(41);
        for _ in 0..20 {
            let positions: Vec<Vector<2>> = (0..6)
                .map(|_| Vector([rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)]))
                .collect();
            let velocities: Vec<Vector<2>> = (0..6)
                .map(|_| Vector([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]))
                .collect();
            let shift = Vector([rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]);

            let shifted: Vec<Vector<2>> = positions.iter().map(|p| *p + shift).collect();
            let mut permuted = positions.clone();
            permuted.swap(0, 5);
            permuted.swap(2, 3);
            let d = diameter(&positions).unwrap();
            assert!((d - diameter(&shifted).unwrap()).abs() < 1e-12);
            assert!((d - diameter(&permuted).unwrap()).abs() < 1e-15);

            let boosted: Vec<Vector<2>> = velocities.iter().map(|v| *v + shift).collect();
            let vc = velocity_convergence(&velocities);
            assert!((vc - velocity_convergence(&boosted)).abs() < 1e-12);
        }
    }
}
