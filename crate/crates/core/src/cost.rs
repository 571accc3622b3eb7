//! Declarative flocking cost terms and their analytic gradients.
//!
//! Flocking objectives are expressed as flock-wide costs over agent
//! positions: a cohesion term over all pairs, an inverse-square separation
//! term over close pairs, and exact-penalty terms that replace minimum
//! clearance constraints (inter-agent, obstacle, predator) by the 2-norm of
//! their violation magnitudes. The four task compositions combine these; when
//! a collision penalty is present the separation term is omitted as
//! redundant, and multiple constraint families share one penalty weight by
//! collecting all violations into a single norm.
//!
//! Nondifferentiable points (violation boundaries, the norm at zero,
//! coincident points in clearance terms) use the zero-extension subgradient.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::dynamics::Obstacle;
use crate::vector::Vector;
use crate::{Error, Result};

/// Flocking objective selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    /// Cohesion balanced by inverse-square separation.
    BasicFlocking,
    /// Cohesion with a penalized minimum inter-agent clearance.
    CollisionAvoidance,
    /// Collision avoidance plus obstacle clearance and target seeking.
    ObstacleTarget,
    /// Collision avoidance plus predator clearance.
    PredatorAvoidance,
}

impl Task {
    /// Tasks other than basic flocking carry a penalty term.
    pub fn uses_penalty(&self) -> bool {
        !matches!(self, Task::BasicFlocking)
    }
}

/// Weights, thresholds, and environment for one task's cost.
#[derive(Clone, Debug, PartialEq)]
pub struct CostSpec<const D: usize> {
    pub task: Task,
    /// Separation weight (basic flocking only).
    pub omega: f64,
    /// Penalty weight for clearance violations.
    pub rho: f64,
    /// Target-seeking weight.
    pub omega_t: f64,
    /// Control-effort weight applied by the receding-horizon objective.
    pub lambda: f64,
    /// Minimum inter-agent and agent-obstacle clearance.
    pub d_min: f64,
    /// Minimum agent-predator clearance.
    pub d_min_pred: f64,
    /// Separation neighborhood radius (basic flocking only).
    pub r: f64,
    pub target: Option<Vector<D>>,
    pub obstacles: Vec<Obstacle<D>>,
}

impl<const D: usize> CostSpec<D> {
    pub fn basic_flocking(omega: f64, r: f64) -> Self {
        Self {
            task: Task::BasicFlocking,
            omega,
            rho: 0.0,
            omega_t: 0.0,
            lambda: 1.0,
            d_min: 2.0,
            d_min_pred: 4.0,
            r,
            target: None,
            obstacles: Vec::new(),
        }
    }

    pub fn collision_avoidance(rho: f64, d_min: f64) -> Self {
        Self {
            task: Task::CollisionAvoidance,
            omega: 0.0,
            rho,
            omega_t: 0.0,
            lambda: 1.0,
            d_min,
            d_min_pred: d_min * 2.0,
            r: d_min * 5.0,
            target: None,
            obstacles: Vec::new(),
        }
    }

    pub fn obstacle_target(
        rho: f64,
        omega_t: f64,
        d_min: f64,
        target: Vector<D>,
        obstacles: Vec<Obstacle<D>>,
    ) -> Self {
        Self {
            task: Task::ObstacleTarget,
            omega: 0.0,
            rho,
            omega_t,
            lambda: 1.0,
            d_min,
            d_min_pred: d_min * 2.0,
            r: d_min * 5.0,
            target: Some(target),
            obstacles,
        }
    }

    pub fn predator_avoidance(rho: f64, d_min: f64, d_min_pred: f64) -> Self {
        Self {
            task: Task::PredatorAvoidance,
            omega: 0.0,
            rho,
            omega_t: 0.0,
            lambda: 1.0,
            d_min,
            d_min_pred,
            r: d_min * 5.0,
            target: None,
            obstacles: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("omega", self.omega),
            ("rho", self.rho),
            ("omega_t", self.omega_t),
            ("lambda", self.lambda),
        ] {
            if w < 0.0 || !w.is_finite() {
                return Err(Error::InvalidParam(format!(
                    "{name} must be finite and >= 0, got {w}"
                )));
            }
        }
        if self.task.uses_penalty() && !(self.rho > 0.0) {
            return Err(Error::InvalidParam(format!(
                "rho must be > 0 for penalized tasks, got {}",
                self.rho
            )));
        }
        if self.d_min_pred < self.d_min {
            return Err(Error::InvalidParam(format!(
                "d_min_pred ({}) must be >= d_min ({})",
                self.d_min_pred, self.d_min
            )));
        }
        let needs_target = self.task == Task::ObstacleTarget;
        if needs_target != self.target.is_some() {
            return Err(Error::InvalidParam(format!(
                "target must be present exactly for the obstacle-target task (task {:?})",
                self.task
            )));
        }
        Ok(())
    }
}

/// A task cost together with its unweighted term breakdown.
///
/// `total` is the spec-weighted sum of the terms:
/// `cohesion + omega*separation + rho*penalty + omega_t*target + lambda*effort`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostValue {
    pub total: f64,
    pub cohesion: f64,
    pub separation: f64,
    pub penalty: f64,
    pub target: f64,
    pub effort: f64,
}

/// Mean squared pairwise distance: `(2/(n(n-1))) * sum_{i<j} |p_i - p_j|^2`.
pub fn cohesion_cost<const D: usize>(positions: &[Vector<D>]) -> Result<f64> {
    let n = positions.len();
    if n < 2 {
        return Err(Error::TooFewAgents {
            required: 2,
            actual: n,
        });
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += (positions[i] - positions[j]).norm_sq();
        }
    }
    Ok(2.0 * sum / (n * (n - 1)) as f64)
}

/// Inverse-square separation over unordered pairs closer than `r`.
///
/// Exactly coincident pairs make the term infinite and are reported as an
/// error instead.
pub fn separation_cost<const D: usize>(positions: &[Vector<D>], r: f64) -> Result<f64> {
    let n = positions.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d_sq = (positions[i] - positions[j]).norm_sq();
            if d_sq == 0.0 {
                return Err(Error::CoincidentAgents { i, j });
            }
            if d_sq < r * r {
                sum += 1.0 / d_sq;
            }
        }
    }
    Ok(sum)
}

/// 2-norm of per-pair clearance violations `max(d_min - |p_ij|, 0)`.
pub fn collision_penalty<const D: usize>(positions: &[Vector<D>], d_min: f64) -> f64 {
    let mut sq = 0.0;
    let n = positions.len();
    for i in 0..n {
        for j in i + 1..n {
            let v = (d_min - positions[i].distance(&positions[j])).max(0.0);
            sq += v * v;
        }
    }
    sq.sqrt()
}

/// 2-norm over (agent, obstacle) pairs of boundary-clearance violations.
///
/// Clearance is the signed distance to the obstacle boundary, so an agent
/// inside an obstacle contributes `d_min` plus its penetration depth.
pub fn obstacle_penalty<const D: usize>(
    positions: &[Vector<D>],
    obstacles: &[Obstacle<D>],
    d_min: f64,
) -> f64 {
    let mut sq = 0.0;
    for p in positions {
        for o in obstacles {
            let v = (d_min - o.boundary_distance(p)).max(0.0);
            sq += v * v;
        }
    }
    sq.sqrt()
}

/// Mean squared distance of the agents to a fixed target.
pub fn target_cost<const D: usize>(positions: &[Vector<D>], target: &Vector<D>) -> f64 {
    let n = positions.len().max(1);
    positions
        .iter()
        .map(|p| (*p - *target).norm_sq())
        .sum::<f64>()
        / n as f64
}

/// 2-norm over agents of predator-clearance violations.
pub fn predator_penalty<const D: usize>(
    positions: &[Vector<D>],
    predator: &Vector<D>,
    d_min_pred: f64,
) -> f64 {
    positions
        .iter()
        .map(|p| {
            let v = (d_min_pred - p.distance(predator)).max(0.0);
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

/// One active clearance violation together with the agents it touches and
/// the gradient of its magnitude with respect to their positions.
struct ViolationEntry<const D: usize> {
    value: f64,
    grads: [(usize, Vector<D>); 2],
    touched: usize,
}

impl<const D: usize> ViolationEntry<D> {
    fn one(value: f64, agent: usize, grad: Vector<D>) -> Self {
        Self {
            value,
            grads: [(agent, grad), (0, Vector::ZERO)],
            touched: 1,
        }
    }

    fn two(value: f64, i: usize, gi: Vector<D>, j: usize, gj: Vector<D>) -> Self {
        Self {
            value,
            grads: [(i, gi), (j, gj)],
            touched: 2,
        }
    }
}

fn collision_violations<const D: usize>(
    positions: &[Vector<D>],
    d_min: f64,
    out: &mut Vec<ViolationEntry<D>>,
) {
    let n = positions.len();
    for i in 0..n {
        for j in i + 1..n {
            let diff = positions[i] - positions[j];
            let d = diff.norm();
            let v = d_min - d;
            if v > 0.0 {
                // Coincident pairs have no defined direction: zero subgradient.
                let dir = if d > 0.0 { diff / d } else { Vector::ZERO };
                out.push(ViolationEntry::two(v, i, -dir, j, dir));
            }
        }
    }
}

fn obstacle_violations<const D: usize>(
    positions: &[Vector<D>],
    obstacles: &[Obstacle<D>],
    d_min: f64,
    out: &mut Vec<ViolationEntry<D>>,
) {
    for (i, p) in positions.iter().enumerate() {
        for o in obstacles {
            let v = d_min - o.boundary_distance(p);
            if v > 0.0 {
                let offset = *p - o.center;
                let dir = offset.unit_or_zero();
                out.push(ViolationEntry::one(v, i, -dir));
            }
        }
    }
}

fn predator_violations<const D: usize>(
    positions: &[Vector<D>],
    predator: &Vector<D>,
    d_min_pred: f64,
    out: &mut Vec<ViolationEntry<D>>,
) {
    for (i, p) in positions.iter().enumerate() {
        let diff = *p - *predator;
        let d = diff.norm();
        let v = d_min_pred - d;
        if v > 0.0 {
            let dir = if d > 0.0 { diff / d } else { Vector::ZERO };
            out.push(ViolationEntry::one(v, i, -dir));
        }
    }
}

/// Norm of the collected violations and, when nonzero, its gradient folded
/// into `grad` with weight `rho`.
fn apply_penalty_norm<const D: usize>(
    entries: &[ViolationEntry<D>],
    rho: f64,
    grad: Option<&mut [Vector<D>]>,
) -> f64 {
    let norm_sq: f64 = entries.iter().map(|e| e.value * e.value).sum();
    let norm = norm_sq.sqrt();
    if let Some(grad) = grad {
        if norm > 0.0 {
            let scale = rho / norm;
            for e in entries {
                for (agent, g) in e.grads.iter().take(e.touched) {
                    grad[*agent] += *g * (scale * e.value);
                }
            }
        }
    }
    norm
}

/// Which violation families a task collects into its penalty norm.
fn penalty_entries<const D: usize>(
    positions: &[Vector<D>],
    predator: Option<&Vector<D>>,
    spec: &CostSpec<D>,
) -> Result<Vec<ViolationEntry<D>>> {
    let mut entries = Vec::new();
    match spec.task {
        Task::BasicFlocking => {}
        Task::CollisionAvoidance => collision_violations(positions, spec.d_min, &mut entries),
        Task::ObstacleTarget => {
            collision_violations(positions, spec.d_min, &mut entries);
            obstacle_violations(positions, &spec.obstacles, spec.d_min, &mut entries);
        }
        Task::PredatorAvoidance => {
            collision_violations(positions, spec.d_min, &mut entries);
            let predator = predator.ok_or(Error::MissingObservable("predator position"))?;
            predator_violations(positions, predator, spec.d_min_pred, &mut entries);
        }
    }
    Ok(entries)
}

/// Task cost with term breakdown.
///
/// `predator` is the predator position, required by the predator-avoidance
/// task and ignored otherwise.
pub fn task_cost<const D: usize>(
    positions: &[Vector<D>],
    predator: Option<&Vector<D>>,
    spec: &CostSpec<D>,
) -> Result<CostValue> {
    let cohesion = cohesion_cost(positions)?;
    let mut value = CostValue {
        cohesion,
        ..CostValue::default()
    };
    match spec.task {
        Task::BasicFlocking => {
            value.separation = separation_cost(positions, spec.r)?;
        }
        Task::CollisionAvoidance | Task::ObstacleTarget | Task::PredatorAvoidance => {
            let entries = penalty_entries(positions, predator, spec)?;
            value.penalty = apply_penalty_norm(&entries, spec.rho, None);
            if spec.task == Task::ObstacleTarget {
                let target = spec.target.as_ref().ok_or(Error::MissingObservable("target"))?;
                value.target = target_cost(positions, target);
            }
        }
    }
    value.total = value.cohesion
        + spec.omega * value.separation
        + spec.rho * value.penalty
        + spec.omega_t * value.target
        + spec.lambda * value.effort;
    Ok(value)
}

fn cohesion_gradient<const D: usize>(positions: &[Vector<D>], grad: &mut [Vector<D>]) {
    let n = positions.len();
    let w = 2.0 / (n * (n - 1)) as f64;
    for i in 0..n {
        for j in i + 1..n {
            let g = (positions[i] - positions[j]) * (2.0 * w);
            grad[i] += g;
            grad[j] -= g;
        }
    }
}

fn separation_gradient<const D: usize>(
    positions: &[Vector<D>],
    r: f64,
    omega: f64,
    grad: &mut [Vector<D>],
) -> Result<()> {
    let n = positions.len();
    for i in 0..n {
        for j in i + 1..n {
            let diff = positions[i] - positions[j];
            let d_sq = diff.norm_sq();
            if d_sq == 0.0 {
                return Err(Error::CoincidentAgents { i, j });
            }
            if d_sq < r * r {
                let g = diff * (-2.0 * omega / (d_sq * d_sq));
                grad[i] += g;
                grad[j] -= g;
            }
        }
    }
    Ok(())
}

/// Analytic gradient of [`task_cost`] with respect to every position.
///
/// At nondifferentiable points (violation boundaries, zero penalty norm,
/// coincident clearance pairs) the zero-extension subgradient is returned.
pub fn task_cost_gradient<const D: usize>(
    positions: &[Vector<D>],
    predator: Option<&Vector<D>>,
    spec: &CostSpec<D>,
) -> Result<Vec<Vector<D>>> {
    let n = positions.len();
    if n < 2 {
        return Err(Error::TooFewAgents {
            required: 2,
            actual: n,
        });
    }
    let mut grad = vec![Vector::ZERO; n];
    cohesion_gradient(positions, &mut grad);
    match spec.task {
        Task::BasicFlocking => {
            separation_gradient(positions, spec.r, spec.omega, &mut grad)?;
        }
        Task::CollisionAvoidance | Task::ObstacleTarget | Task::PredatorAvoidance => {
            let entries = penalty_entries(positions, predator, spec)?;
            apply_penalty_norm(&entries, spec.rho, Some(&mut grad));
            if spec.task == Task::ObstacleTarget {
                let target = spec.target.as_ref().ok_or(Error::MissingObservable("target"))?;
                let w = 2.0 * spec.omega_t / n as f64;
                for (g, p) in grad.iter_mut().zip(positions) {
                    *g += (*p - *target) * w;
                }
            }
        }
    }
    Ok(grad)
}

/// Per-agent cost seen by the distributed optimizer: mean squared distance to
/// the known neighbors, plus either the inverse-square separation over those
/// neighbors (basic flocking) or the task's penalty terms restricted to
/// entries involving this agent.
pub fn distributed_cost<const D: usize>(
    positions: &[Vector<D>],
    agent: usize,
    neighbors: &[usize],
    predator: Option<&Vector<D>>,
    spec: &CostSpec<D>,
) -> Result<f64> {
    if neighbors.is_empty() {
        return Err(Error::EmptySet("neighbor set"));
    }
    let own = positions[agent];
    let mut cohesion = 0.0;
    for &j in neighbors {
        cohesion += (own - positions[j]).norm_sq();
    }
    cohesion /= neighbors.len() as f64;

    let mut cost = cohesion;
    match spec.task {
        Task::BasicFlocking => {
            for &j in neighbors {
                let d_sq = (own - positions[j]).norm_sq();
                if d_sq == 0.0 {
                    return Err(Error::CoincidentAgents { i: agent, j });
                }
                cost += spec.omega / d_sq;
            }
        }
        _ => {
            let entries = local_penalty_entries(positions, agent, neighbors, predator, spec)?;
            cost += spec.rho * apply_penalty_norm(&entries, spec.rho, None);
            if spec.task == Task::ObstacleTarget {
                let target = spec.target.as_ref().ok_or(Error::MissingObservable("target"))?;
                cost += spec.omega_t * (own - *target).norm_sq();
            }
        }
    }
    Ok(cost)
}

/// Gradient of [`distributed_cost`] with respect to every position (entries
/// for agents outside `{agent} ∪ neighbors` are zero).
pub fn distributed_cost_gradient<const D: usize>(
    positions: &[Vector<D>],
    agent: usize,
    neighbors: &[usize],
    predator: Option<&Vector<D>>,
    spec: &CostSpec<D>,
) -> Result<Vec<Vector<D>>> {
    if neighbors.is_empty() {
        return Err(Error::EmptySet("neighbor set"));
    }
    let own = positions[agent];
    let mut grad = vec![Vector::ZERO; positions.len()];
    let w = 2.0 / neighbors.len() as f64;
    for &j in neighbors {
        let g = (own - positions[j]) * w;
        grad[agent] += g;
        grad[j] -= g;
    }
    match spec.task {
        Task::BasicFlocking => {
            for &j in neighbors {
                let diff = own - positions[j];
                let d_sq = diff.norm_sq();
                if d_sq == 0.0 {
                    return Err(Error::CoincidentAgents { i: agent, j });
                }
                let g = diff * (-2.0 * spec.omega / (d_sq * d_sq));
                grad[agent] += g;
                grad[j] -= g;
            }
        }
        _ => {
            let entries = local_penalty_entries(positions, agent, neighbors, predator, spec)?;
            apply_penalty_norm(&entries, spec.rho, Some(&mut grad));
            if spec.task == Task::ObstacleTarget {
                let target = spec.target.as_ref().ok_or(Error::MissingObservable("target"))?;
                grad[agent] += (own - *target) * (2.0 * spec.omega_t);
            }
        }
    }
    Ok(grad)
}

fn local_penalty_entries<const D: usize>(
    positions: &[Vector<D>],
    agent: usize,
    neighbors: &[usize],
    predator: Option<&Vector<D>>,
    spec: &CostSpec<D>,
) -> Result<Vec<ViolationEntry<D>>> {
    let mut entries = Vec::new();
    let own = positions[agent];
    for &j in neighbors {
        let diff = own - positions[j];
        let d = diff.norm();
        let v = spec.d_min - d;
        if v > 0.0 {
            let dir = if d > 0.0 { diff / d } else { Vector::ZERO };
            entries.push(ViolationEntry::two(v, agent, -dir, j, dir));
        }
    }
    match spec.task {
        Task::ObstacleTarget => {
            for o in &spec.obstacles {
                let v = spec.d_min - o.boundary_distance(&own);
                if v > 0.0 {
                    let dir = (own - o.center).unit_or_zero();
                    entries.push(ViolationEntry::one(v, agent, -dir));
                }
            }
        }
        Task::PredatorAvoidance => {
            let predator = predator.ok_or(Error::MissingObservable("predator position"))?;
            let diff = own - *predator;
            let d = diff.norm();
            let v = spec.d_min_pred - d;
            if v > 0.0 {
                let dir = if d > 0.0 { diff / d } else { Vector::ZERO };
                entries.push(ViolationEntry::one(v, agent, -dir));
            }
        }
        _ => {}
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::RngExt;

    fn pts(raw: &[[f64; 2]]) -> Vec<Vector<2>> {
        raw.iter().map(|p| Vector(*p)).collect()
    }

    #[test]
    fn cohesion_triangle() {
        let p = pts(&[[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]]);
        let got = cohesion_cost(&p).unwrap();
        assert!((got - 50.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cohesion_coincident_pair_is_zero() {
        let p = pts(&[[1.0, 1.0], [1.0, 1.0]]);
        assert_eq!(cohesion_cost(&p).unwrap(), 0.0);
    }

    #[test]
    fn cohesion_single_pair() {
        let p = pts(&[[0.0, 0.0], [1.0, 0.0]]);
        assert!((cohesion_cost(&p).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cohesion_needs_two_agents() {
        let p = pts(&[[0.0, 0.0]]);
        assert!(matches!(
            cohesion_cost(&p),
            Err(Error::TooFewAgents { .. })
        ));
    }

    #[test]
    fn separation_triangle_within_radius() {
        let p = pts(&[[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]]);
        let expected = 1.0 / 9.0 + 1.0 / 16.0 + 1.0 / 25.0;
        assert!((separation_cost(&p, 10.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn separation_outside_radius_is_zero() {
        let p = pts(&[[0.0, 0.0], [3.0, 0.0]]);
        assert_eq!(separation_cost(&p, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn separation_unit_pair() {
        let p = pts(&[[0.0, 0.0], [1.0, 0.0]]);
        assert!((separation_cost(&p, 2.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn separation_coincident_pair_errors() {
        let p = pts(&[[1.0, 2.0], [1.0, 2.0]]);
        assert_eq!(
            separation_cost(&p, 2.0),
            Err(Error::CoincidentAgents { i: 0, j: 1 })
        );
    }

    #[test]
    fn collision_penalty_single_violation() {
        let p = pts(&[[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]]);
        assert!((collision_penalty(&p, 2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn collision_penalty_clear_flock_is_zero() {
        let p = pts(&[[0.0, 0.0], [5.0, 0.0], [10.0, 0.0]]);
        assert_eq!(collision_penalty(&p, 2.0), 0.0);
    }

    #[test]
    fn collision_penalty_two_violations_norm() {
        let p = pts(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        assert!((collision_penalty(&p, 2.0) - 2.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn obstacle_penalty_cases() {
        let obstacles = [Obstacle::new(Vector([0.0, 0.0]), 1.0)];
        assert_eq!(
            obstacle_penalty(&pts(&[[5.0, 0.0]]), &obstacles, 2.0),
            0.0
        );
        assert!((obstacle_penalty(&pts(&[[2.0, 0.0]]), &obstacles, 2.0) - 1.0).abs() < 1e-15);
        let two = pts(&[[2.0, 0.0], [-2.0, 0.0]]);
        assert!((obstacle_penalty(&two, &obstacles, 2.0) - 2.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn obstacle_penalty_interior_grows_with_penetration() {
        let obstacles = [Obstacle::new(Vector([0.0, 0.0]), 1.0)];
        // Half a unit inside: violation = d_min + penetration depth.
        let got = obstacle_penalty(&pts(&[[0.5, 0.0]]), &obstacles, 2.0);
        assert!((got - 2.5).abs() < 1e-15);
    }

    #[test]
    fn target_cost_cases() {
        let g = Vector([1.0, 0.0]);
        assert_eq!(target_cost(&pts(&[[1.0, 0.0], [1.0, 0.0]]), &g), 0.0);
        assert!((target_cost(&pts(&[[0.0, 0.0], [2.0, 0.0]]), &g) - 1.0).abs() < 1e-15);
        let origin = Vector([0.0, 0.0]);
        assert!((target_cost(&pts(&[[3.0, 4.0]]), &origin) - 25.0).abs() < 1e-15);
    }

    #[test]
    fn predator_penalty_cases() {
        let q = Vector([0.0, 0.0]);
        assert_eq!(predator_penalty(&pts(&[[10.0, 0.0]]), &q, 4.0), 0.0);
        assert!((predator_penalty(&pts(&[[3.0, 0.0]]), &q, 4.0) - 1.0).abs() < 1e-15);
        let two = pts(&[[3.0, 0.0], [0.0, 2.0]]);
        assert!((predator_penalty(&two, &q, 4.0) - 5.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn basic_flocking_composition() {
        let spec = CostSpec::basic_flocking(30.0, 2.0);
        let p = pts(&[[0.0, 0.0], [1.0, 0.0]]);
        let v = task_cost(&p, None, &spec).unwrap();
        assert!((v.total - 31.0).abs() < 1e-12);
        assert!((v.cohesion - 1.0).abs() < 1e-15);
        assert!((v.separation - 1.0).abs() < 1e-15);
    }

    #[test]
    fn collision_task_without_violations_is_cohesion() {
        let spec = CostSpec::collision_avoidance(1e5, 2.0);
        let p = pts(&[[0.0, 0.0], [8.0, 0.0], [0.0, 8.0]]);
        let v = task_cost(&p, None, &spec).unwrap();
        assert_eq!(v.penalty, 0.0);
        assert!((v.total - v.cohesion).abs() < 1e-12);
    }

    #[test]
    fn obstacle_target_combines_violation_families_in_one_norm() {
        // Pair distance 2 with d_min 5 puts 3 into the inter-agent entries;
        // an obstacle equidistant from both agents with clearance violation
        // 4/sqrt(2) each puts 4 into the obstacle entries.
        let d_min = 5.0;
        let oa_each = 4.0 / 2.0_f64.sqrt();
        let radius = 0.5;
        let boundary = d_min - oa_each;
        let h = ((boundary + radius) * (boundary + radius) - 1.0).sqrt();
        let obstacles = vec![Obstacle::new(Vector([1.0, h]), radius)];
        let target = Vector([1.0, 0.0]);
        let mut spec = CostSpec::obstacle_target(10.0, 2.0, d_min, target, obstacles);
        spec.d_min_pred = d_min;
        let p = pts(&[[0.0, 0.0], [2.0, 0.0]]);

        let ca = collision_penalty(&p, d_min);
        let oa = obstacle_penalty(&p, &spec.obstacles, d_min);
        assert!((ca - 3.0).abs() < 1e-12);
        assert!((oa - 4.0).abs() < 1e-12);

        let v = task_cost(&p, None, &spec).unwrap();
        assert!((v.penalty - 5.0).abs() < 1e-12);
        let ts = target_cost(&p, &target);
        let expected = v.cohesion + spec.omega_t * ts + spec.rho * 5.0;
        assert!((v.total - expected).abs() < 1e-9);
    }

    #[test]
    fn predator_task_combines_collision_and_predator_entries() {
        let spec = CostSpec::predator_avoidance(100.0, 2.0, 4.0);
        let p = pts(&[[0.0, 0.0], [1.0, 0.0]]);
        let q = Vector([0.0, 3.0]);
        let v = task_cost(&p, Some(&q), &spec).unwrap();
        let ca = collision_penalty(&p, 2.0);
        let pa = predator_penalty(&p, &q, 4.0);
        assert!((v.penalty - (ca * ca + pa * pa).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn predator_task_requires_predator() {
        let spec = CostSpec::predator_avoidance(100.0, 2.0, 4.0);
        let p = pts(&[[0.0, 0.0], [1.0, 0.0]]);
        assert_eq!(
            task_cost(&p, None, &spec),
            Err(Error::MissingObservable("predator position"))
        );
    }

    #[test]
    fn total_is_weighted_sum_of_terms() {
        let mut rng = seeded(5);
        for _ in 0..50 {
            let p: Vec<Vector<2>> = (0..5)
                .map(|_| Vector([rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)]))
                .collect();
            let q = Vector([rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)]);
            for spec in [
                CostSpec::basic_flocking(30.0, 10.0),
                CostSpec::collision_avoidance(1e5, 2.0),
                CostSpec::obstacle_target(
                    1e5,
                    1.0,
                    2.0,
                    Vector([5.0, 5.0]),
                    vec![Obstacle::new(Vector([0.0, 0.0]), 1.0)],
                ),
                CostSpec::predator_avoidance(1e5, 2.0, 4.0),
            ] {
                let v = match task_cost(&p, Some(&q), &spec) {
                    Ok(v) => v,
                    Err(Error::CoincidentAgents { .. }) => continue,
                    Err(e) => panic!("unexpected error: {e}"),
                };
                let recomputed = v.cohesion
                    + spec.omega * v.separation
                    + spec.rho * v.penalty
                    + spec.omega_t * v.target
                    + spec.lambda * v.effort;
                let rel = (v.total - recomputed).abs() / v.total.abs().max(1e-12);
                assert!(rel < 1e-9);
            }
        }
    }

    /// Central finite differences over every coordinate; independent of the
    /// analytic path.
    fn fd_gradient<const D: usize>(
        positions: &[Vector<D>],
        predator: Option<&Vector<D>>,
        spec: &CostSpec<D>,
        h: f64,
    ) -> Vec<Vector<D>> {
        let mut grad = vec![Vector::ZERO; positions.len()];
        let mut work = positions.to_vec();
        for i in 0..positions.len() {
            for d in 0..D {
                work[i][d] = positions[i][d] + h;
                let plus = task_cost(&work, predator, spec).unwrap().total;
                work[i][d] = positions[i][d] - h;
                let minus = task_cost(&work, predator, spec).unwrap().total;
                work[i][d] = positions[i][d];
                grad[i][d] = (plus - minus) / (2.0 * h);
            }
        }
        grad
    }

    fn max_rel_err<const D: usize>(a: &[Vector<D>], b: &[Vector<D>]) -> f64 {
        let scale = a
            .iter()
            .chain(b)
            .map(|v| v.norm())
            .fold(0.0_f64, f64::max)
            .max(1e-9);
        a.iter()
            .zip(b)
            .map(|(x, y)| (*x - *y).norm() / scale)
            .fold(0.0, f64::max)
    }

    fn near_kink<const D: usize>(
        positions: &[Vector<D>],
        predator: Option<&Vector<D>>,
        spec: &CostSpec<D>,
        margin: f64,
    ) -> bool {
        let n = positions.len();
        for i in 0..n {
            for j in i + 1..n {
                let d = positions[i].distance(&positions[j]);
                if (d - spec.d_min).abs() < margin || d < margin {
                    return true;
                }
                if spec.task == Task::BasicFlocking && (d - spec.r).abs() < margin {
                    return true;
                }
            }
            for o in &spec.obstacles {
                if (o.boundary_distance(&positions[i]) - spec.d_min).abs() < margin {
                    return true;
                }
            }
            if let Some(q) = predator {
                if (positions[i].distance(q) - spec.d_min_pred).abs() < margin {
                    return true;
                }
            }
        }
        false
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = seeded(17);
        let specs = [
            CostSpec::basic_flocking(30.0, 10.0),
            CostSpec::collision_avoidance(100.0, 2.0),
            CostSpec::obstacle_target(
                100.0,
                1.0,
                2.0,
                Vector([6.0, 6.0]),
                vec![Obstacle::new(Vector([0.0, 0.0]), 1.5)],
            ),
            CostSpec::predator_avoidance(100.0, 2.0, 4.0),
        ];
        for spec in &specs {
            let mut checked = 0;
            while checked < 25 {
                let p: Vec<Vector<2>> = (0..5)
                    .map(|_| {
                        Vector([rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)])
                    })
                    .collect();
                let q = Vector([rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)]);
                if near_kink(&p, Some(&q), spec, 1e-3) {
                    continue;
                }
                let analytic = task_cost_gradient(&p, Some(&q), spec).unwrap();
                let numeric = fd_gradient(&p, Some(&q), spec, 1e-5);
                assert!(
                    max_rel_err(&analytic, &numeric) < 1e-4,
                    "task {:?} gradient mismatch",
                    spec.task
                );
                checked += 1;
            }
        }
    }

    #[test]
    fn symmetric_pair_gradients_are_opposite() {
        let spec = CostSpec::basic_flocking(30.0, 10.0);
        let p = pts(&[[-1.0, 0.0], [1.0, 0.0]]);
        let g = task_cost_gradient(&p, None, &spec).unwrap();
        assert!((g[0] + g[1]).norm() < 1e-12);
    }

    #[test]
    fn inactive_penalty_gradient_reduces_to_cohesion() {
        let spec = CostSpec::collision_avoidance(1e5, 2.0);
        let p = pts(&[[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]]);
        let g = task_cost_gradient(&p, None, &spec).unwrap();
        let mut cohesion_only = vec![Vector::ZERO; 3];
        cohesion_gradient(&p, &mut cohesion_only);
        for (a, b) in g.iter().zip(&cohesion_only) {
            assert!((*a - *b).norm() < 1e-15);
        }
    }

    #[test]
    fn translation_and_permutation_invariance() {
        let mut rng = seeded(23);
        let spec = CostSpec::collision_avoidance(100.0, 2.0);
        for _ in 0..20 {
            let p: Vec<Vector<2>> = (0..4)
                .map(|_| Vector([rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]))
                .collect();
            let shift = Vector([rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
            let shifted: Vec<Vector<2>> = p.iter().map(|v| *v + shift).collect();
            let mut permuted = p.clone();
            permuted.swap(0, 3);
            permuted.swap(1, 2);
            let base = task_cost(&p, None, &spec).unwrap().total;
            let t = task_cost(&shifted, None, &spec).unwrap().total;
            let q = task_cost(&permuted, None, &spec).unwrap().total;
            assert!((base - t).abs() < 1e-9 * base.abs().max(1.0));
            assert!((base - q).abs() < 1e-12 * base.abs().max(1.0));
        }
    }

    #[test]
    fn penalized_minimizer_respects_clearance_on_grid() {
        // Two agents, one step, one free position: brute force over a grid.
        // With a large penalty weight the unconstrained minimizer of the
        // penalized cost satisfies the clearance constraint.
        let spec = CostSpec::collision_avoidance(1e5, 2.0);
        let anchor = Vector([0.0, 0.0]);
        let mut best = (f64::INFINITY, Vector([0.0, 0.0]));
        let steps = 1000;
        for ix in 0..=steps {
            for iy in 0..=steps {
                let p = Vector([
                    -5.0 + 10.0 * ix as f64 / steps as f64,
                    -5.0 + 10.0 * iy as f64 / steps as f64,
                ]);
                let total = task_cost(&[anchor, p], None, &spec).unwrap().total;
                if total < best.0 {
                    best = (total, p);
                }
            }
        }
        let violation = spec.d_min - anchor.distance(&best.1);
        assert!(violation <= 1e-6, "violation {violation}");
    }

    #[test]
    fn distributed_cost_matches_hand_formula() {
        let spec = CostSpec::basic_flocking(30.0, 10.0);
        let p = pts(&[[0.0, 0.0], [2.0, 0.0], [0.0, 3.0]]);
        let got = distributed_cost(&p, 0, &[1, 2], None, &spec).unwrap();
        let expected = (4.0 + 9.0) / 2.0 + 30.0 * (1.0 / 4.0 + 1.0 / 9.0);
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn distributed_gradient_matches_finite_differences() {
        let mut rng = seeded(31);
        let specs = [
            CostSpec::basic_flocking(30.0, 10.0),
            CostSpec::collision_avoidance(100.0, 2.0),
            CostSpec::predator_avoidance(100.0, 2.0, 4.0),
        ];
        for spec in &specs {
            for _ in 0..20 {
                let p: Vec<Vector<2>> = (0..4)
                    .map(|_| {
                        Vector([rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)])
                    })
                    .collect();
                let q = Vector([rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)]);
                if near_kink(&p, Some(&q), spec, 1e-3) {
                    continue;
                }
                let analytic =
                    distributed_cost_gradient(&p, 0, &[1, 2, 3], Some(&q), spec).unwrap();
                let mut numeric = vec![Vector::ZERO; 4];
                let mut work = p.clone();
                let h = 1e-6;
                for i in 0..4 {
                    for d in 0..2 {
                        work[i][d] = p[i][d] + h;
                        let plus =
                            distributed_cost(&work, 0, &[1, 2, 3], Some(&q), spec).unwrap();
                        work[i][d] = p[i][d] - h;
                        let minus =
                            distributed_cost(&work, 0, &[1, 2, 3], Some(&q), spec).unwrap();
                        work[i][d] = p[i][d];
                        numeric[i][d] = (plus - minus) / (2.0 * h);
                    }
                }
                assert!(max_rel_err(&analytic, &numeric) < 1e-4);
            }
        }
    }

    #[test]
    fn spec_validation_catches_inconsistency() {
        let mut spec = CostSpec::<2>::collision_avoidance(1e5, 2.0);
        spec.rho = 0.0;
        assert!(spec.validate().is_err());

        let mut spec = CostSpec::<2>::basic_flocking(30.0, 10.0);
        spec.target = Some(Vector([0.0, 0.0]));
        assert!(spec.validate().is_err());

        let mut spec = CostSpec::<2>::predator_avoidance(1e5, 2.0, 4.0);
        spec.d_min_pred = 1.0;
        assert!(spec.validate().is_err());

        assert!(CostSpec::<2>::basic_flocking(30.0, 10.0).validate().is_ok());
    }
}
