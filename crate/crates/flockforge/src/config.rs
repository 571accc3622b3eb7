//! Experiment configuration.
//!
//! A configuration is a single JSON document. The `profile` field selects a
//! preset (`paper2d`, `desk2d`, `paper3d`, `desk3d`) whose values the rest of
//! the document overrides key by key; without a profile the document must be
//! complete. Cross-field consistency (task, dimension, feature layout,
//! observables) is validated on load and errors carry field paths.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use flock_core::cost::{CostSpec, Task};
use flock_core::dynamics::{Obstacle, PredatorParams, SampleBox, SimParams};
use flock_core::mpc::{GradMode, MpcParams};
use flock_core::nn::{Activation, AdamConfig, FeatureLayout, MlpArchitecture};
use flock_core::quad::{PidGains, QuadParams};
use flock_core::Vector;

use crate::{ForgeError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskName {
    BasicFlocking,
    CollisionAvoidance,
    ObstacleTarget,
    PredatorAvoidance,
}

impl TaskName {
    pub fn to_core(self) -> Task {
        match self {
            TaskName::BasicFlocking => Task::BasicFlocking,
            TaskName::CollisionAvoidance => Task::CollisionAvoidance,
            TaskName::ObstacleTarget => Task::ObstacleTarget,
            TaskName::PredatorAvoidance => Task::PredatorAvoidance,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub eta: u32,
    pub v_max: f64,
    pub a_max: f64,
    pub sim_time: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcSection {
    pub horizon: usize,
    pub descent_iters: usize,
    pub step_size: f64,
    pub backtrack: f64,
    pub tol: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSection {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    /// Separation weight used by the centralized solver (and expert data).
    pub omega_cmpc: f64,
    /// Separation weight used by the distributed solver.
    pub omega_dmpc: f64,
    pub rho: f64,
    pub omega_t: f64,
    pub lambda: f64,
    pub d_min: f64,
    pub d_min_pred: f64,
    pub separation_radius: f64,
    pub target: Option<Vec<f64>>,
    pub obstacles: Vec<ObstacleSection>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlockSection {
    pub agents: usize,
    pub neighbors: usize,
    pub pos_min: f64,
    pub pos_max: f64,
    pub vel_min: f64,
    pub vel_max: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredatorSection {
    pub agility: f64,
    pub start_distance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Expert trajectories generated for training data.
    pub trajectories: usize,
    /// Base seed for training trajectories (trajectory i uses seed + i).
    pub seed: u64,
    /// Fresh evaluation runs.
    pub eval_trajectories: usize,
    /// Base seed for evaluation runs; disjoint from the training seeds.
    pub eval_seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Fraction of trajectories held out for generalization-loss reporting.
    pub holdout_fraction: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidSection {
    pub kp_angle: f64,
    pub ki_angle: f64,
    pub kd_angle: f64,
    pub kp_yaw: f64,
    pub ki_yaw: f64,
    pub kd_yaw: f64,
    pub max_tilt: f64,
    pub integral_limit: f64,
    pub max_thrust: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSection {
    pub dt_inner: f64,
    pub mass: f64,
    pub gravity: f64,
    pub inertia_x: f64,
    pub inertia_y: f64,
    pub inertia_z: f64,
    pub rotor_inertia: f64,
    pub arm_length: f64,
    pub thrust_factor: f64,
    pub drag_factor: f64,
    pub pid: PidSection,
}

/// A fully resolved experiment configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub task: TaskName,
    pub dim: usize,
    pub sim: SimSection,
    pub mpc: MpcSection,
    pub cost: CostSection,
    pub flock: FlockSection,
    pub predator: PredatorSection,
    pub data: DataSection,
    pub train: TrainSection,
    pub quad: QuadSection,
}

/// Preset values; everything outside the preset-specific overrides is shared.
fn profile_value(name: &str) -> Option<Value> {
    let base = json!({
        "task": "basic-flocking",
        "dim": 2,
        "sim": { "dt": 0.1, "eta": 3, "v_max": 2.0, "a_max": 1.5, "sim_time": 100.0 },
        "mpc": { "horizon": 3, "descent_iters": 50, "step_size": 1.0, "backtrack": 0.5, "tol": 1e-6 },
        "cost": {
            "omega_cmpc": 2000.0,
            "omega_dmpc": 30.0,
            "rho": 100000.0,
            "omega_t": 1.0,
            "lambda": 1.0,
            "d_min": 2.0,
            "d_min_pred": 4.0,
            "separation_radius": 10.0,
            "target": [60.0, 0.0],
            "obstacles": [
                { "center": [30.0, -16.0], "radius": 3.0 },
                { "center": [30.0, -8.0], "radius": 3.0 },
                { "center": [30.0, 0.0], "radius": 3.0 },
                { "center": [30.0, 8.0], "radius": 3.0 },
                { "center": [30.0, 16.0], "radius": 3.0 }
            ]
        },
        "flock": { "agents": 30, "neighbors": 5, "pos_min": -15.0, "pos_max": 15.0, "vel_min": 0.0, "vel_max": 1.0 },
        "predator": { "agility": 1.25, "start_distance": 50.0 },
        "data": { "trajectories": 100, "seed": 1000, "eval_trajectories": 100, "eval_seed": 900000 },
        "train": {
            "epochs": 10000, "batch_size": 500,
            "lr": 1e-4, "beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8,
            "seed": 7, "hidden_layers": 5, "hidden_width": 64,
            "holdout_fraction": 0.1
        },
        "quad": {
            "dt_inner": 0.01,
            "mass": 0.650, "gravity": 9.81,
            "inertia_x": 7.5e-3, "inertia_y": 7.5e-3, "inertia_z": 1.3e-2,
            "rotor_inertia": 6e-5, "arm_length": 0.23,
            "thrust_factor": 3.13e-5, "drag_factor": 7.5e-7,
            "pid": {
                "kp_angle": 40.0, "ki_angle": 2.0, "kd_angle": 12.0,
                "kp_yaw": 15.0, "ki_yaw": 0.5, "kd_yaw": 8.0,
                "max_tilt": 0.5, "integral_limit": 1.0, "max_thrust": 25.506
            }
        }
    });
    let overlay = match name {
        "paper2d" => json!({}),
        "desk2d" => json!({
            "flock": { "agents": 10 },
            "data": { "trajectories": 20, "eval_trajectories": 10 },
            "train": { "epochs": 2000 }
        }),
        // The spatial profiles run basic flocking only; trajectories are 400
        // control steps (sim_time 120 at dt 0.1, eta 3).
        "paper3d" => json!({
            "dim": 3,
            "sim": { "sim_time": 120.0 },
            "cost": { "target": null, "obstacles": [] },
            "flock": { "agents": 20 },
            "data": { "trajectories": 400 },
            "train": { "hidden_width": 84 }
        }),
        "desk3d" => json!({
            "dim": 3,
            "cost": { "target": null, "obstacles": [] },
            "flock": { "agents": 8 },
            "data": { "trajectories": 10, "eval_trajectories": 5 },
            "train": { "epochs": 1000, "hidden_width": 84 }
        }),
        _ => return None,
    };
    let mut value = base;
    merge(&mut value, overlay);
    Some(value)
}

/// Recursively overlays `patch` onto `base`; objects merge, everything else
/// replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(base_map), Value::Object(patch_map)) => {
            for (k, v) in patch_map {
                match base_map.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        base_map.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl Config {
    /// Parses a config document: applies the profile (when present), merges
    /// overrides, deserializes, and validates. Accepts a manifest document
    /// transparently by reading its embedded resolved config.
    pub fn from_json_str(text: &str) -> Result<Config> {
        let mut doc: Value = serde_json::from_str(text)
            .map_err(|e| ForgeError::Config(format!("invalid JSON: {e}")))?;
        // A manifest embeds the resolved config under "config".
        if let Some(inner) = doc.get("config") {
            if doc.get("command").is_some() {
                doc = inner.clone();
            }
        }
        let profile = match doc.as_object_mut() {
            Some(map) => map.remove("profile"),
            None => return Err(ForgeError::Config("config must be a JSON object".into())),
        };
        let resolved = match profile {
            Some(Value::String(name)) => {
                let mut base = profile_value(&name).ok_or_else(|| {
                    ForgeError::Config(format!(
                        "profile: unknown profile {name:?} (expected paper2d, desk2d, paper3d, or desk3d)"
                    ))
                })?;
                merge(&mut base, doc);
                base
            }
            Some(other) => {
                return Err(ForgeError::Config(format!(
                    "profile: expected a string, got {other}"
                )))
            }
            None => doc,
        };
        let deserializer = resolved.clone();
        let config: Config = serde_path_to_error::deserialize(deserializer)
            .map_err(|e| ForgeError::Config(format!("{}: {}", e.path(), e.inner())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(ForgeError::io(path))?;
        Self::from_json_str(&text)
    }

    /// Cross-field consistency; error messages name the offending fields.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(ForgeError::Config(msg));
        if self.dim != 2 && self.dim != 3 {
            return fail(format!("dim: must be 2 or 3, got {}", self.dim));
        }
        if self.dim == 3 && self.task != TaskName::BasicFlocking {
            return fail(format!(
                "task: only basic-flocking is supported in dimension 3, got {:?}",
                self.task
            ));
        }
        if self.flock.agents < 2 {
            return fail(format!(
                "flock.agents: need at least 2 agents, got {}",
                self.flock.agents
            ));
        }
        if self.flock.neighbors + 1 > self.flock.agents {
            return fail(format!(
                "flock.neighbors: {} neighbors need at least {} agents, flock has {}",
                self.flock.neighbors,
                self.flock.neighbors + 1,
                self.flock.agents
            ));
        }
        if self.flock.neighbors != FeatureLayout::NEIGHBORS {
            return fail(format!(
                "flock.neighbors: feature layouts fix the neighborhood at {}, got {}",
                FeatureLayout::NEIGHBORS,
                self.flock.neighbors
            ));
        }
        if self.flock.pos_min >= self.flock.pos_max {
            return fail("flock.pos_min: position box is empty".into());
        }
        if self.flock.vel_min > self.flock.vel_max {
            return fail("flock.vel_min: velocity box is empty".into());
        }
        // Profiles keep a target around for convenience; it only becomes a
        // contract (and reaches the cost) for the obstacle-target task.
        if self.task == TaskName::ObstacleTarget {
            let target = self.cost.target.as_ref().ok_or_else(|| {
                ForgeError::Config("cost.target: required for task obstacle-target".into())
            })?;
            if target.len() != self.dim {
                return fail(format!(
                    "cost.target: expected {} components, got {}",
                    self.dim,
                    target.len()
                ));
            }
            if self.cost.obstacles.is_empty() {
                return fail("cost.obstacles: required for task obstacle-target".into());
            }
        }
        for (i, o) in self.cost.obstacles.iter().enumerate() {
            if o.center.len() != self.dim {
                return fail(format!(
                    "cost.obstacles[{i}].center: expected {} components, got {}",
                    self.dim,
                    o.center.len()
                ));
            }
            if !(o.radius > 0.0) {
                return fail(format!("cost.obstacles[{i}].radius: must be > 0"));
            }
        }
        if self.cost.d_min_pred < self.cost.d_min {
            return fail(format!(
                "cost.d_min_pred: {} must be >= cost.d_min {}",
                self.cost.d_min_pred, self.cost.d_min
            ));
        }
        if self.task != TaskName::BasicFlocking && !(self.cost.rho > 0.0) {
            return fail("cost.rho: must be > 0 for penalized tasks".into());
        }
        if !(self.predator.agility > 1.0) {
            return fail(format!(
                "predator.agility: must be > 1, got {}",
                self.predator.agility
            ));
        }
        if !(self.train.holdout_fraction >= 0.0 && self.train.holdout_fraction < 1.0) {
            return fail(format!(
                "train.holdout_fraction: must lie in [0, 1), got {}",
                self.train.holdout_fraction
            ));
        }
        if !(self.quad.dt_inner > 0.0) {
            return fail("quad.dt_inner: must be > 0".into());
        }
        // Delegate range checks to the core parameter types.
        self.sim_params()
            .validate()
            .map_err(|e| ForgeError::Config(format!("sim: {e}")))?;
        self.mpc_params()
            .validate()
            .map_err(|e| ForgeError::Config(format!("mpc: {e}")))?;
        self.adam(None)
            .validate()
            .map_err(|e| ForgeError::Config(format!("train: {e}")))?;
        Ok(())
    }

    pub fn core_task(&self) -> Task {
        self.task.to_core()
    }

    /// Feature layout implied by task and dimension.
    pub fn layout(&self) -> Result<FeatureLayout> {
        FeatureLayout::for_task(self.core_task(), self.dim)
            .map_err(|e| ForgeError::Config(format!("task: {e}")))
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams {
            dt: self.sim.dt,
            eta: self.sim.eta,
            v_max: self.sim.v_max,
            a_max: self.sim.a_max,
            sim_time: self.sim.sim_time,
        }
    }

    pub fn mpc_params(&self) -> MpcParams {
        MpcParams {
            horizon: self.mpc.horizon,
            lambda: self.cost.lambda,
            descent_iters: self.mpc.descent_iters,
            step_size: self.mpc.step_size,
            backtrack: self.mpc.backtrack,
            tol: self.mpc.tol,
            grad_mode: GradMode::Reverse,
        }
    }

    pub fn sample_box(&self) -> SampleBox {
        SampleBox {
            pos_min: self.flock.pos_min,
            pos_max: self.flock.pos_max,
            vel_min: self.flock.vel_min,
            vel_max: self.flock.vel_max,
            max_attempts: 10_000,
        }
    }

    fn vector<const D: usize>(raw: &[f64]) -> Vector<D> {
        let mut v = Vector::ZERO;
        for d in 0..D {
            v[d] = raw[d];
        }
        v
    }

    pub fn obstacles<const D: usize>(&self) -> Vec<Obstacle<D>> {
        self.cost
            .obstacles
            .iter()
            .map(|o| Obstacle::new(Self::vector(&o.center), o.radius))
            .collect()
    }

    pub fn target<const D: usize>(&self) -> Option<Vector<D>> {
        self.cost.target.as_ref().map(|t| Self::vector(t))
    }

    /// The task cost specification; `omega` distinguishes the centralized
    /// and distributed separation weights.
    pub fn cost_spec<const D: usize>(&self, omega: f64) -> CostSpec<D> {
        CostSpec {
            task: self.core_task(),
            omega,
            rho: self.cost.rho,
            omega_t: self.cost.omega_t,
            lambda: self.cost.lambda,
            d_min: self.cost.d_min,
            d_min_pred: self.cost.d_min_pred,
            r: self.cost.separation_radius,
            target: if self.core_task() == Task::ObstacleTarget {
                self.target::<D>()
            } else {
                None
            },
            obstacles: if self.core_task() == Task::ObstacleTarget {
                self.obstacles::<D>()
            } else {
                Vec::new()
            },
        }
    }

    pub fn predator_params<const D: usize>(&self) -> Option<PredatorParams<D>> {
        (self.task == TaskName::PredatorAvoidance).then(|| {
            PredatorParams::new(self.predator.agility, self.predator.start_distance)
        })
    }

    pub fn adam(&self, seed_override: Option<u64>) -> AdamConfig {
        AdamConfig {
            lr: self.train.lr,
            beta1: self.train.beta1,
            beta2: self.train.beta2,
            epsilon: self.train.epsilon,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            seed: seed_override.unwrap_or(self.train.seed),
        }
    }

    pub fn architecture(&self, layout: FeatureLayout) -> MlpArchitecture {
        MlpArchitecture {
            input: layout.width(),
            hidden_layers: self.train.hidden_layers,
            hidden_width: self.train.hidden_width,
            output: layout.dim(),
            hidden_activation: if self.dim == 3 {
                Activation::Relu
            } else {
                Activation::Sigmoid
            },
        }
    }

    pub fn quad_params(&self) -> QuadParams {
        QuadParams {
            mass: self.quad.mass,
            gravity: self.quad.gravity,
            inertia_x: self.quad.inertia_x,
            inertia_y: self.quad.inertia_y,
            inertia_z: self.quad.inertia_z,
            rotor_inertia: self.quad.rotor_inertia,
            arm_length: self.quad.arm_length,
            thrust_factor: self.quad.thrust_factor,
            drag_factor: self.quad.drag_factor,
        }
    }

    pub fn pid_gains(&self) -> PidGains {
        let p = &self.quad.pid;
        PidGains {
            kp_angle: p.kp_angle,
            ki_angle: p.ki_angle,
            kd_angle: p.kd_angle,
            kp_yaw: p.kp_yaw,
            ki_yaw: p.ki_yaw,
            kd_yaw: p.kd_yaw,
            max_tilt: p.max_tilt,
            integral_limit: p.integral_limit,
            max_thrust: p.max_thrust,
        }
    }
}
