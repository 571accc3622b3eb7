//! Simulation, evaluation, and plant-comparison runners.

use std::time::{Duration, Instant};

use flock_core::metrics::{collision_events, evaluate_runs, series_difference, MetricSeries};
use flock_core::mpc::{control_loop, CentralizedMpc, Controller, DistributedMpc, Trajectory};
use flock_core::nn::{FeatureLayout, Mlp, NeuralController};
use flock_core::quad::quad_flock_loop;
use flock_core::rng::derive_seed;

use crate::config::Config;
use crate::files::TimingDto;
use crate::pipeline::{initial_state, ExpertRun};
use crate::{ForgeError, Result};

/// Which controller drives a simulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControllerKind {
    Cmpc,
    Dmpc,
    Dnc,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Cmpc => "cmpc",
            ControllerKind::Dmpc => "dmpc",
            ControllerKind::Dnc => "dnc",
        }
    }
}

/// Builds the configured controller. `checkpoint` is required for the neural
/// controller and must match the config's task/dimension layout.
pub fn build_controller<const D: usize>(
    cfg: &Config,
    kind: ControllerKind,
    checkpoint: Option<(FeatureLayout, Mlp)>,
) -> Result<Box<dyn Controller<D>>> {
    let sim = cfg.sim_params();
    let mpc = cfg.mpc_params();
    let predator = cfg.predator_params::<D>();
    match kind {
        ControllerKind::Cmpc => Ok(Box::new(CentralizedMpc {
            spec: cfg.cost_spec::<D>(cfg.cost.omega_cmpc),
            mpc,
            sim,
            predator,
        })),
        ControllerKind::Dmpc => Ok(Box::new(DistributedMpc {
            spec: cfg.cost_spec::<D>(cfg.cost.omega_dmpc),
            mpc,
            sim,
            predator,
            neighbor_count: cfg.flock.neighbors,
        })),
        ControllerKind::Dnc => {
            let (layout, mlp) = checkpoint.ok_or_else(|| {
                ForgeError::Config("controller dnc requires --checkpoint".into())
            })?;
            let expected = cfg.layout()?;
            if layout != expected {
                return Err(ForgeError::Config(format!(
                    "checkpoint layout {} does not match the configured task ({})",
                    layout.tag(),
                    expected.tag()
                )));
            }
            let controller = NeuralController::<D>::new(mlp, layout, sim.a_max)?
                .with_environment(cfg.obstacles::<D>(), cfg.target::<D>());
            Ok(Box::new(controller))
        }
    }
}

/// Wraps a controller and accumulates wall-clock time per agent decision.
pub struct TimingController<const D: usize> {
    inner: Box<dyn Controller<D>>,
    pub decisions: u64,
    pub elapsed: Duration,
}

impl<const D: usize> TimingController<D> {
    pub fn new(inner: Box<dyn Controller<D>>) -> Self {
        Self {
            inner,
            decisions: 0,
            elapsed: Duration::ZERO,
        }
    }

    pub fn mean_seconds_per_decision(&self) -> f64 {
        if self.decisions == 0 {
            return 0.0;
        }
        self.elapsed.as_secs_f64() / self.decisions as f64
    }

    pub fn timing(&self, name: &str) -> TimingDto {
        TimingDto {
            controller: name.into(),
            decisions: self.decisions,
            mean_seconds_per_decision: self.mean_seconds_per_decision(),
        }
    }
}

impl<const D: usize> Controller<D> for TimingController<D> {
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn decide(
        &mut self,
        flock: &flock_core::dynamics::FlockState<D>,
    ) -> flock_core::Result<Vec<flock_core::Vector<D>>> {
        let start = Instant::now();
        let out = self.inner.decide(flock);
        self.elapsed += start.elapsed();
        self.decisions += flock.len() as u64;
        out
    }
}

/// Closed-loop runs from `count` seeded fresh initial states. Returns the
/// trajectories (in seed order) and the controller's timing summary.
pub fn simulate_runs<const D: usize>(
    cfg: &Config,
    kind: ControllerKind,
    checkpoint: Option<(FeatureLayout, Mlp)>,
    count: usize,
    base_seed: u64,
) -> Result<(Vec<ExpertRun<D>>, TimingDto)> {
    let sim = cfg.sim_params();
    let predator = cfg.predator_params::<D>();
    let mut controller = TimingController::new(build_controller(cfg, kind, checkpoint)?);
    let mut runs = Vec::with_capacity(count);
    for idx in 0..count {
        let seed = derive_seed(base_seed, idx as u64);
        let initial = initial_state::<D>(cfg, seed)?;
        let trajectory = control_loop(&initial, &mut controller, &sim, predator.as_ref())?;
        runs.push(ExpertRun { seed, trajectory });
    }
    Ok((runs, controller.timing(kind.name())))
}

/// Metric series of a trajectory under the configured clearances.
pub fn trajectory_metrics<const D: usize>(
    cfg: &Config,
    trajectory: &Trajectory<D>,
) -> Result<MetricSeries> {
    Ok(collision_events(
        trajectory,
        cfg.cost.d_min,
        cfg.cost.d_min_pred,
        &cfg.obstacles::<D>(),
    )?)
}

/// Pointwise mean over a set of per-step series, truncated to the shortest.
pub fn mean_series(set: &[Vec<f64>]) -> Vec<f64> {
    let len = set.iter().map(Vec::len).min().unwrap_or(0);
    let mut out = vec![0.0; len];
    for series in set {
        for (o, v) in out.iter_mut().zip(series) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= set.len().max(1) as f64;
    }
    out
}

/// Evaluation summary of a set of stored runs.
pub struct Evaluation {
    pub report: flock_core::metrics::EvalReport,
    pub mean_diameter: Vec<f64>,
    pub mean_velocity_convergence: Vec<f64>,
}

pub fn evaluate_trajectories<const D: usize>(
    cfg: &Config,
    trajectories: &[Trajectory<D>],
) -> Result<Evaluation> {
    if trajectories.is_empty() {
        return Err(ForgeError::Config(
            "evaluation needs at least one trajectory".into(),
        ));
    }
    let series: Vec<MetricSeries> = trajectories
        .iter()
        .map(|t| trajectory_metrics(cfg, t))
        .collect::<Result<_>>()?;
    let agents = trajectories[0].agents();
    let report = evaluate_runs(&series, agents, cfg.cost.obstacles.len())?;
    let diameters: Vec<Vec<f64>> = series.iter().map(|s| s.diameter.clone()).collect();
    let vcs: Vec<Vec<f64>> = series
        .iter()
        .map(|s| s.velocity_convergence.clone())
        .collect();
    Ok(Evaluation {
        report,
        mean_diameter: mean_series(&diameters),
        mean_velocity_convergence: mean_series(&vcs),
    })
}

/// A quadrotor-plant run: the point-compatible trajectory plus full quad
/// states per recorded step.
pub struct QuadRun {
    pub run: ExpertRun<3>,
    pub quad_states: Vec<Vec<flock_core::quad::QuadState>>,
}

/// All four plant/controller combinations of the generalization comparison.
pub struct QuadComparison {
    pub dnc_point: Vec<ExpertRun<3>>,
    pub dnc_quad: Vec<QuadRun>,
    pub cmpc_point: Vec<ExpertRun<3>>,
    pub cmpc_quad: Vec<QuadRun>,
    /// Point-minus-quad difference of set-averaged diameter curves.
    pub delta_diameter_dnc: Vec<f64>,
    pub delta_vc_dnc: Vec<f64>,
    pub delta_diameter_cmpc: Vec<f64>,
    pub delta_vc_cmpc: Vec<f64>,
    pub timings: Vec<TimingDto>,
}

/// Runs the neural and centralized controllers on both the point plant and
/// the quadrotor plant from shared seeded initial states.
pub fn quad_compare(cfg: &Config, layout: FeatureLayout, mlp: Mlp) -> Result<QuadComparison> {
    if cfg.dim != 3 {
        return Err(ForgeError::Config(
            "dim: the plant comparison runs the 3D point model (use a 3D profile)".into(),
        ));
    }
    if layout != FeatureLayout::Bf36 {
        return Err(ForgeError::Config(format!(
            "checkpoint layout {} is not the spatial basic-flocking layout (bf36)",
            layout.tag()
        )));
    }
    let sim = cfg.sim_params();
    let quad_params = cfg.quad_params();
    let gains = cfg.pid_gains();
    let count = cfg.data.eval_trajectories;
    let base_seed = cfg.data.eval_seed;

    let build_dnc = || -> Result<Box<dyn Controller<3>>> {
        build_controller::<3>(cfg, ControllerKind::Dnc, Some((layout, mlp.clone())))
    };
    let build_cmpc = || -> Result<Box<dyn Controller<3>>> {
        build_controller::<3>(cfg, ControllerKind::Cmpc, None)
    };

    let mut out = QuadComparison {
        dnc_point: Vec::new(),
        dnc_quad: Vec::new(),
        cmpc_point: Vec::new(),
        cmpc_quad: Vec::new(),
        delta_diameter_dnc: Vec::new(),
        delta_vc_dnc: Vec::new(),
        delta_diameter_cmpc: Vec::new(),
        delta_vc_cmpc: Vec::new(),
        timings: Vec::new(),
    };

    let run_point = |controller: &mut TimingController<3>,
                         runs: &mut Vec<ExpertRun<3>>|
     -> Result<()> {
        for idx in 0..count {
            let seed = derive_seed(base_seed, idx as u64);
            let initial = initial_state::<3>(cfg, seed)?;
            let trajectory = control_loop(&initial, controller, &sim, None)?;
            runs.push(ExpertRun { seed, trajectory });
        }
        Ok(())
    };
    let run_quad = |controller: &mut TimingController<3>,
                        runs: &mut Vec<QuadRun>|
     -> Result<()> {
        for idx in 0..count {
            let seed = derive_seed(base_seed, idx as u64);
            let initial = initial_state::<3>(cfg, seed)?;
            let quad_traj = quad_flock_loop(
                &initial,
                controller,
                &sim,
                &quad_params,
                &gains,
                cfg.quad.dt_inner,
            )?;
            runs.push(QuadRun {
                run: ExpertRun {
                    seed,
                    trajectory: quad_traj.point,
                },
                quad_states: quad_traj.quad_states,
            });
        }
        Ok(())
    };

    let mut dnc_point_ctrl = TimingController::new(build_dnc()?);
    run_point(&mut dnc_point_ctrl, &mut out.dnc_point)?;
    out.timings.push(dnc_point_ctrl.timing("dnc-point"));

    let mut dnc_quad_ctrl = TimingController::new(build_dnc()?);
    run_quad(&mut dnc_quad_ctrl, &mut out.dnc_quad)?;
    out.timings.push(dnc_quad_ctrl.timing("dnc-quad"));

    let mut cmpc_point_ctrl = TimingController::new(build_cmpc()?);
    run_point(&mut cmpc_point_ctrl, &mut out.cmpc_point)?;
    out.timings.push(cmpc_point_ctrl.timing("cmpc-point"));

    let mut cmpc_quad_ctrl = TimingController::new(build_cmpc()?);
    run_quad(&mut cmpc_quad_ctrl, &mut out.cmpc_quad)?;
    out.timings.push(cmpc_quad_ctrl.timing("cmpc-quad"));

    let series_of = |runs: &[&Trajectory<3>]| -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let mut diameters = Vec::new();
        let mut vcs = Vec::new();
        for traj in runs {
            let m = trajectory_metrics(cfg, traj)?;
            diameters.push(m.diameter);
            vcs.push(m.velocity_convergence);
        }
        Ok((diameters, vcs))
    };
    fn point_trajs(runs: &[ExpertRun<3>]) -> Vec<&Trajectory<3>> {
        runs.iter().map(|r| &r.trajectory).collect()
    }
    fn quad_trajs(runs: &[QuadRun]) -> Vec<&Trajectory<3>> {
        runs.iter().map(|r| &r.run.trajectory).collect()
    }
    let (dnc_point_d, dnc_point_vc) = series_of(&point_trajs(&out.dnc_point))?;
    let (dnc_quad_d, dnc_quad_vc) = series_of(&quad_trajs(&out.dnc_quad))?;
    let (cmpc_point_d, cmpc_point_vc) = series_of(&point_trajs(&out.cmpc_point))?;
    let (cmpc_quad_d, cmpc_quad_vc) = series_of(&quad_trajs(&out.cmpc_quad))?;

    out.delta_diameter_dnc = series_difference(&dnc_point_d, &dnc_quad_d)?.0;
    out.delta_vc_dnc = series_difference(&dnc_point_vc, &dnc_quad_vc)?.0;
    out.delta_diameter_cmpc = series_difference(&cmpc_point_d, &cmpc_quad_d)?.0;
    out.delta_vc_cmpc = series_difference(&cmpc_point_vc, &cmpc_quad_vc)?.0;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> Config {
        Config::from_json_str(
            r#"{"profile": "desk2d", "sim": {"sim_time": 2.0}, "flock": {"agents": 6}, "data": {"eval_trajectories": 2}}"#,
        )
        .unwrap()
    }

    #[test]
    fn simulate_runs_are_seeded_and_deterministic() {
        let cfg = tiny_config();
        let (a, timing) = simulate_runs::<2>(&cfg, ControllerKind::Cmpc, None, 2, 900).unwrap();
        let (b, _) = simulate_runs::<2>(&cfg, ControllerKind::Cmpc, None, 2, 900).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].seed, 900);
        assert_eq!(a[1].seed, 901);
        assert!(timing.decisions > 0);
        assert!(timing.mean_seconds_per_decision > 0.0);
    }

    #[test]
    fn dnc_controller_requires_checkpoint() {
        let cfg = tiny_config();
        match build_controller::<2>(&cfg, ControllerKind::Dnc, None) {
            Err(ForgeError::Config(msg)) => assert!(msg.contains("checkpoint")),
            Err(other) => panic!("unexpected error: {other}"),
            Ok(_) => panic!("expected a config error"),
        }
    }

    #[test]
    fn evaluation_aggregates_run_set() {
        let cfg = tiny_config();
        let (runs, _) = simulate_runs::<2>(&cfg, ControllerKind::Cmpc, None, 2, 900).unwrap();
        let trajs: Vec<_> = runs.into_iter().map(|r| r.trajectory).collect();
        let eval = evaluate_trajectories(&cfg, &trajs).unwrap();
        assert_eq!(eval.report.runs, 2);
        assert_eq!(eval.mean_diameter.len(), trajs[0].states.len());
        assert!(eval.report.mean_converged_diameter > 0.0);
    }

    #[test]
    fn mean_series_averages_pointwise() {
        let set = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(mean_series(&set), vec![2.0, 3.0]);
    }
}
