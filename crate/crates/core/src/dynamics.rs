//! Discrete-time point-mass flock dynamics.
//!
//! Agents follow the double-integrator update
//! `p' = p + dt·v`, `v' = clamp(v + dt·a, v_max)` with the position update
//! using the pre-update velocity. Accelerations are held constant for `eta`
//! consecutive time steps between control updates. Speed and acceleration
//! bounds are enforced by magnitude rescaling, which preserves direction.

use alloc::format;
use alloc::vec::Vec;

use rand::RngExt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::rng::{seeded, FlockRng};
use crate::vector::Vector;
use crate::{Error, Result};

/// Simulation schedule and kinematic bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimParams {
    /// Duration of one dynamics time step.
    pub dt: f64,
    /// Dynamics time steps per control update (the control step is `eta·dt`).
    pub eta: u32,
    /// Speed bound enforced on every agent at every step.
    pub v_max: f64,
    /// Acceleration bound enforced on every control input.
    pub a_max: f64,
    /// Total simulated duration.
    pub sim_time: f64,
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParam(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.eta < 1 {
            return Err(Error::InvalidParam(format!("eta must be >= 1, got {}", self.eta)));
        }
        if !(self.v_max > 0.0) {
            return Err(Error::InvalidParam(format!("v_max must be > 0, got {}", self.v_max)));
        }
        if !(self.a_max > 0.0) {
            return Err(Error::InvalidParam(format!("a_max must be > 0, got {}", self.a_max)));
        }
        if !(self.sim_time > 0.0) {
            return Err(Error::InvalidParam(format!(
                "sim_time must be > 0, got {}",
                self.sim_time
            )));
        }
        Ok(())
    }

    /// Number of control steps a full run records actions for.
    pub fn control_steps(&self) -> usize {
        (self.sim_time / (self.dt * self.eta as f64)).floor() as usize
    }
}

/// Position/velocity pair of one agent.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AgentState<const D: usize> {
    pub position: Vector<D>,
    pub velocity: Vector<D>,
}

impl<const D: usize> AgentState<D> {
    pub fn new(position: Vector<D>, velocity: Vector<D>) -> Self {
        Self { position, velocity }
    }

    pub fn at_rest(position: Vector<D>) -> Self {
        Self {
            position,
            velocity: Vector::ZERO,
        }
    }
}

/// All agent states plus the optional predator at one time step.
///
/// Agent identity is positional: index `i` refers to the same agent across
/// the whole trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct FlockState<const D: usize> {
    pub agents: Vec<AgentState<D>>,
    pub predator: Option<AgentState<D>>,
    /// Dynamics time steps elapsed since the initial state.
    pub time_step: u64,
}

impl<const D: usize> FlockState<D> {
    pub fn new(agents: Vec<AgentState<D>>) -> Self {
        Self {
            agents,
            predator: None,
            time_step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector<D>> {
        self.agents.iter().map(|a| a.position).collect()
    }

    pub fn velocities(&self) -> Vec<Vector<D>> {
        self.agents.iter().map(|a| a.velocity).collect()
    }

    /// Mean agent position.
    pub fn centroid(&self) -> Vector<D> {
        let sum: Vector<D> = self.agents.iter().map(|a| a.position).sum();
        sum / self.agents.len() as f64
    }
}

/// A circular (2D) / spherical (3D) obstacle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Obstacle<const D: usize> {
    pub center: Vector<D>,
    pub radius: f64,
}

impl<const D: usize> Obstacle<D> {
    pub fn new(center: Vector<D>, radius: f64) -> Self {
        debug_assert!(radius > 0.0);
        Self { center, radius }
    }

    /// Signed distance from `p` to the obstacle boundary; negative inside.
    pub fn boundary_distance(&self, p: &Vector<D>) -> f64 {
        p.distance(&self.center) - self.radius
    }

    /// Closest point on the boundary to `p`. For `p` exactly at the center
    /// the direction is ambiguous; the first axis is used.
    pub fn closest_point(&self, p: &Vector<D>) -> Vector<D> {
        let offset = *p - self.center;
        let dir = if offset.norm() == 0.0 {
            Vector::unit_x()
        } else {
            offset.unit_or_zero()
        };
        self.center + dir * self.radius
    }
}

/// Predator agility and spawn geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredatorParams<const D: usize> {
    /// Speed/acceleration bounds are this factor times the agent bounds (> 1).
    pub agility: f64,
    /// Initial distance from the flock centroid.
    pub start_distance: f64,
    /// Unit bearing from the centroid to the spawn point.
    pub bearing: Vector<D>,
}

impl<const D: usize> PredatorParams<D> {
    pub fn new(agility: f64, start_distance: f64) -> Self {
        Self {
            agility,
            start_distance,
            bearing: Vector::unit_x(),
        }
    }

    pub fn with_bearing(mut self, bearing: Vector<D>) -> Self {
        self.bearing = bearing.unit_or_zero();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.agility > 1.0) {
            return Err(Error::InvalidParam(format!(
                "predator agility must be > 1, got {}",
                self.agility
            )));
        }
        Ok(())
    }
}

/// Advances one agent by a single dynamics time step.
///
/// The caller is responsible for clamping `accel` to `a_max` first; the
/// velocity bound is enforced here.
pub fn step_agent<const D: usize>(
    state: &AgentState<D>,
    accel: &Vector<D>,
    params: &SimParams,
) -> AgentState<D> {
    let position = state.position + state.velocity * params.dt;
    let velocity = (state.velocity + *accel * params.dt).clamp_norm(params.v_max);
    AgentState { position, velocity }
}

/// Predator control law: seek the flock centroid at maximum acceleration.
///
/// Returns zero when the predator sits exactly at the centroid.
pub fn predator_control<const D: usize>(
    flock: &FlockState<D>,
    params: &SimParams,
    predator: &PredatorParams<D>,
) -> Result<Vector<D>> {
    if flock.is_empty() {
        return Err(Error::TooFewAgents {
            required: 1,
            actual: 0,
        });
    }
    let pred = flock
        .predator
        .as_ref()
        .ok_or(Error::MissingObservable("predator state"))?;
    let toward = flock.centroid() - pred.position;
    Ok(toward.unit_or_zero() * (predator.agility * params.a_max))
}

/// Indices of the `count` agents closest to agent `i`, sorted ascending by
/// Euclidean distance with ties broken by lower index. Agent `i` itself is
/// excluded.
pub fn nearest_neighbors<const D: usize>(
    flock: &FlockState<D>,
    i: usize,
    count: usize,
) -> Result<Vec<usize>> {
    let n = flock.len();
    if count > n.saturating_sub(1) {
        return Err(Error::NeighborCount {
            requested: count,
            available: n.saturating_sub(1),
        });
    }
    let origin = flock.agents[i].position;
    let mut by_distance: Vec<(f64, usize)> = flock
        .agents
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(j, a)| (origin.distance(&a.position), j))
        .collect();
    by_distance.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(by_distance.into_iter().take(count).map(|(_, j)| j).collect())
}

/// Axis-aligned sampling boxes for initial configurations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleBox {
    pub pos_min: f64,
    pub pos_max: f64,
    pub vel_min: f64,
    pub vel_max: f64,
    /// Whole-configuration rejection attempts before giving up.
    pub max_attempts: usize,
}

impl Default for SampleBox {
    fn default() -> Self {
        Self {
            pos_min: -15.0,
            pos_max: 15.0,
            vel_min: 0.0,
            vel_max: 1.0,
            max_attempts: 10_000,
        }
    }
}

/// Whether a pair of agents can still avoid closing within `d_min` when both
/// brake at `a_max`: the current gap minus the stopping distance of the
/// closing speed (split over both agents) must exceed `d_min`. Coincident
/// pairs are unrecoverable.
pub fn pair_recoverable<const D: usize>(
    a: &AgentState<D>,
    b: &AgentState<D>,
    a_max: f64,
    d_min: f64,
) -> bool {
    let rel_p = b.position - a.position;
    let gap = rel_p.norm();
    if gap == 0.0 {
        return false;
    }
    let rel_v = b.velocity - a.velocity;
    let closing = (-(rel_p.dot(&rel_v)) / gap).max(0.0);
    gap - closing * closing / (4.0 * a_max) > d_min
}

/// Samples a recoverable initial flock: positions and velocities uniform on
/// the boxes, whole configurations rejected until every pair passes
/// [`pair_recoverable`]. Deterministic given the seed.
pub fn sample_initial_flock<const D: usize>(
    n: usize,
    seed: u64,
    params: &SimParams,
    d_min: f64,
    sample_box: &SampleBox,
) -> Result<FlockState<D>> {
    if n == 0 {
        return Err(Error::TooFewAgents {
            required: 1,
            actual: 0,
        });
    }
    let mut rng = seeded(seed);
    for _ in 0..sample_box.max_attempts {
        let agents = draw_configuration::<D>(n, &mut rng, sample_box);
        let recoverable = (0..n).all(|i| {
            (i + 1..n).all(|j| pair_recoverable(&agents[i], &agents[j], params.a_max, d_min))
        });
        if recoverable {
            return Ok(FlockState::new(agents));
        }
    }
    Err(Error::SamplerRejectionCap {
        attempts: sample_box.max_attempts,
    })
}

fn draw_configuration<const D: usize>(
    n: usize,
    rng: &mut FlockRng,
    sample_box: &SampleBox,
) -> Vec<AgentState<D>> {
    (0..n)
        .map(|_| {
            let mut position = Vector::ZERO;
            let mut velocity = Vector::ZERO;
            for d in 0..D {
                position[d] = rng.random_range(sample_box.pos_min..=sample_box.pos_max);
            }
            for d in 0..D {
                velocity[d] = rng.random_range(sample_box.vel_min..=sample_box.vel_max);
            }
            AgentState { position, velocity }
        })
        .collect()
}

/// Places the predator at rest at `start_distance` from the flock centroid
/// along the configured bearing.
pub fn spawn_predator<const D: usize>(flock: &mut FlockState<D>, predator: &PredatorParams<D>) {
    let spot = flock.centroid() + predator.bearing * predator.start_distance;
    flock.predator = Some(AgentState::at_rest(spot));
}
