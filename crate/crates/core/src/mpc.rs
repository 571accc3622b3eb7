//! Receding-horizon control.
//!
//! At each control step the solver searches for the acceleration sequence
//! over a `T`-control-step horizon minimizing the accumulated task cost plus
//! a control-effort term, by projected gradient descent with a backtracking
//! line search: steps are halved until the rollout cost improves, and every
//! iterate is projected onto the per-acceleration magnitude ball. Descent
//! starts from the zero plan, so the final cost never exceeds the zero-plan
//! cost.
//!
//! The prediction model is the plant itself: within the horizon, dynamics
//! advance in `eta`-grouped sub-steps exactly as the closed loop does.
//! Gradients flow by reverse accumulation through the linear dynamics,
//! including the exact Jacobian of the speed clamp; a central-difference mode
//! exists for debugging. In the distributed problem only the solving agent's
//! plan is free and its neighbors coast (constant velocity); the predicted
//! predator follows its pursuit law in the centralized problem and coasts in
//! the distributed one, and its predicted path is treated as given by the
//! backward pass.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::cost::{
    distributed_cost, distributed_cost_gradient, task_cost, task_cost_gradient, CostSpec,
};
use crate::dynamics::{
    nearest_neighbors, predator_control, step_agent, FlockState, PredatorParams, SimParams,
};
use crate::vector::Vector;
use crate::{Error, Result};

/// Solver schedule and stopping parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpcParams {
    /// Prediction horizon in control steps.
    pub horizon: usize,
    /// Control-effort weight.
    pub lambda: f64,
    /// Gradient-descent iteration cap.
    pub descent_iters: usize,
    /// Initial line-search step.
    pub step_size: f64,
    /// Line-search shrink factor in (0, 1).
    pub backtrack: f64,
    /// Relative-improvement stopping threshold.
    pub tol: f64,
    /// Gradient computation mode.
    pub grad_mode: GradMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradMode {
    /// Reverse accumulation through the rollout (default).
    Reverse,
    /// Central finite differences over the plan (debug oracle).
    FiniteDifference,
}

impl Default for MpcParams {
    fn default() -> Self {
        Self {
            horizon: 3,
            lambda: 1.0,
            descent_iters: 50,
            step_size: 1.0,
            backtrack: 0.5,
            tol: 1e-6,
            grad_mode: GradMode::Reverse,
        }
    }
}

impl MpcParams {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::InvalidParam("horizon must be >= 1".into()));
        }
        if self.descent_iters < 1 {
            return Err(Error::InvalidParam("descent_iters must be >= 1".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::InvalidParam(
                "backtrack must be strictly between 0 and 1".into(),
            ));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::InvalidParam("step_size must be > 0".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidParam("lambda must be >= 0".into()));
        }
        Ok(())
    }
}

/// Planned accelerations: `steps[t][slot]` is the prediction for controlled
/// agent `slot` at horizon step `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPlan<const D: usize> {
    pub steps: Vec<Vec<Vector<D>>>,
}

impl<const D: usize> ControlPlan<D> {
    pub fn zeros(horizon: usize, controlled: usize) -> Self {
        Self {
            steps: vec![vec![Vector::ZERO; controlled]; horizon],
        }
    }

    /// Clamps every planned acceleration to the magnitude ball.
    pub fn project(&mut self, a_max: f64) {
        for step in &mut self.steps {
            for a in step {
                *a = a.clamp_norm(a_max);
            }
        }
    }
}

/// Whose stage cost the rollout accumulates.
enum StageCost<'a, const D: usize> {
    Centralized,
    Distributed { agent: usize, neighbors: &'a [usize] },
}

impl<const D: usize> StageCost<'_, D> {
    fn value(
        &self,
        positions: &[Vector<D>],
        predator: Option<&Vector<D>>,
        spec: &CostSpec<D>,
    ) -> Result<f64> {
        match self {
            StageCost::Centralized => Ok(task_cost(positions, predator, spec)?.total),
            StageCost::Distributed { agent, neighbors } => {
                distributed_cost(positions, *agent, neighbors, predator, spec)
            }
        }
    }

    fn gradient(
        &self,
        positions: &[Vector<D>],
        predator: Option<&Vector<D>>,
        spec: &CostSpec<D>,
    ) -> Result<Vec<Vector<D>>> {
        match self {
            StageCost::Centralized => task_cost_gradient(positions, predator, spec),
            StageCost::Distributed { agent, neighbors } => {
                distributed_cost_gradient(positions, *agent, neighbors, predator, spec)
            }
        }
    }
}

/// A horizon optimization problem frozen at one control step.
struct HorizonProblem<'a, const D: usize> {
    initial: &'a FlockState<D>,
    /// Agent indices whose accelerations are decision variables.
    controlled: &'a [usize],
    /// Slot lookup: `slot_of[agent] = Some(plan column)`.
    slot_of: Vec<Option<usize>>,
    stage: StageCost<'a, D>,
    spec: &'a CostSpec<D>,
    mpc: &'a MpcParams,
    sim: &'a SimParams,
    predator: Option<&'a PredatorParams<D>>,
    /// Centralized prediction rolls the predator with its pursuit law;
    /// distributed prediction lets it coast.
    predict_predator: bool,
}

/// Forward-pass record needed by the backward pass.
struct Tape<const D: usize> {
    /// Pre-clamp velocities per (control step, sub-step, agent).
    pre_clamp: Vec<Vec<Vec<Vector<D>>>>,
    /// Agent positions after each control step of the horizon.
    stage_positions: Vec<Vec<Vector<D>>>,
    /// Predicted predator position at each of those states.
    stage_predator: Vec<Option<Vector<D>>>,
}

impl<'a, const D: usize> HorizonProblem<'a, D> {
    fn new(
        initial: &'a FlockState<D>,
        controlled: &'a [usize],
        stage: StageCost<'a, D>,
        spec: &'a CostSpec<D>,
        mpc: &'a MpcParams,
        sim: &'a SimParams,
        predator: Option<&'a PredatorParams<D>>,
        predict_predator: bool,
    ) -> Self {
        let mut slot_of = vec![None; initial.len()];
        for (slot, &agent) in controlled.iter().enumerate() {
            slot_of[agent] = Some(slot);
        }
        Self {
            initial,
            controlled,
            slot_of,
            stage,
            spec,
            mpc,
            sim,
            predator,
            predict_predator,
        }
    }

    /// Rollout cost; optionally records the tape for reverse accumulation.
    fn cost(&self, plan: &ControlPlan<D>, mut tape: Option<&mut Tape<D>>) -> Result<f64> {
        let n = self.initial.len();
        let dt = self.sim.dt;
        let eta = self.sim.eta as usize;
        let mut positions = self.initial.positions();
        let mut velocities = self.initial.velocities();
        let mut pred = self.initial.predator;

        let mut total = 0.0;
        let mut view = self.initial.clone();
        for step in &plan.steps {
            // Effort over the controlled accelerations.
            total += self.mpc.lambda * step.iter().map(Vector::norm_sq).sum::<f64>();

            let pred_accel = match (&pred, self.predator, self.predict_predator) {
                (Some(_), Some(pp), true) => {
                    view.agents.truncate(0);
                    view.agents.extend(
                        positions
                            .iter()
                            .zip(&velocities)
                            .map(|(p, v)| crate::dynamics::AgentState::new(*p, *v)),
                    );
                    view.predator = pred;
                    predator_control(&view, self.sim, pp)?
                }
                _ => Vector::ZERO,
            };
            let pred_v_max = self
                .predator
                .map(|pp| pp.agility * self.sim.v_max)
                .unwrap_or(self.sim.v_max);

            let mut step_tape = tape.as_deref_mut().map(|_| Vec::with_capacity(eta));
            for _ in 0..eta {
                let mut pre = tape.as_deref_mut().map(|_| Vec::with_capacity(n));
                for i in 0..n {
                    let accel = self.slot_of[i].map_or(Vector::ZERO, |s| step[s]);
                    positions[i] += velocities[i] * dt;
                    let w = velocities[i] + accel * dt;
                    if let Some(pre) = pre.as_mut() {
                        pre.push(w);
                    }
                    velocities[i] = w.clamp_norm(self.sim.v_max);
                }
                if let Some(p) = &mut pred {
                    p.position += p.velocity * dt;
                    p.velocity = (p.velocity + pred_accel * dt).clamp_norm(pred_v_max);
                }
                if let (Some(st), Some(pre)) = (step_tape.as_mut(), pre) {
                    st.push(pre);
                }
            }
            let pred_pos = pred.map(|p| p.position);
            total += self
                .stage
                .value(&positions, pred_pos.as_ref(), self.spec)?;
            if let Some(tape) = tape.as_deref_mut() {
                if let Some(st) = step_tape {
                    tape.pre_clamp.push(st);
                }
                tape.stage_positions.push(positions.clone());
                tape.stage_predator.push(pred_pos);
            }
        }
        Ok(total)
    }

    /// Gradient of the rollout cost with respect to the plan.
    fn gradient(&self, plan: &ControlPlan<D>) -> Result<ControlPlan<D>> {
        match self.mpc.grad_mode {
            GradMode::Reverse => self.reverse_gradient(plan),
            GradMode::FiniteDifference => self.fd_gradient(plan),
        }
    }

    fn reverse_gradient(&self, plan: &ControlPlan<D>) -> Result<ControlPlan<D>> {
        let n = self.initial.len();
        let dt = self.sim.dt;
        let eta = self.sim.eta as usize;
        let horizon = plan.steps.len();
        let mut tape = Tape {
            pre_clamp: Vec::with_capacity(horizon),
            stage_positions: Vec::with_capacity(horizon),
            stage_predator: Vec::with_capacity(horizon),
        };
        self.cost(plan, Some(&mut tape))?;

        let mut grad = ControlPlan::zeros(horizon, self.controlled.len());
        let mut gp = vec![Vector::<D>::ZERO; n];
        let mut gv = vec![Vector::<D>::ZERO; n];
        for t in (0..horizon).rev() {
            let stage_grad = self.stage.gradient(
                &tape.stage_positions[t],
                tape.stage_predator[t].as_ref(),
                self.spec,
            )?;
            for i in 0..n {
                gp[i] += stage_grad[i];
            }
            for s in (0..eta).rev() {
                for i in 0..n {
                    let gw = clamp_jacobian_apply(
                        &tape.pre_clamp[t][s][i],
                        self.sim.v_max,
                        &gv[i],
                    );
                    if let Some(slot) = self.slot_of[i] {
                        grad.steps[t][slot] += gw * dt;
                    }
                    gv[i] = gp[i] * dt + gw;
                }
            }
            for (slot, a) in plan.steps[t].iter().enumerate() {
                grad.steps[t][slot] += *a * (2.0 * self.mpc.lambda);
            }
        }
        Ok(grad)
    }

    fn fd_gradient(&self, plan: &ControlPlan<D>) -> Result<ControlPlan<D>> {
        let h = 1e-6;
        let mut grad = ControlPlan::zeros(plan.steps.len(), self.controlled.len());
        let mut work = plan.clone();
        for t in 0..plan.steps.len() {
            for s in 0..plan.steps[t].len() {
                for d in 0..D {
                    work.steps[t][s][d] = plan.steps[t][s][d] + h;
                    let plus = self.cost(&work, None)?;
                    work.steps[t][s][d] = plan.steps[t][s][d] - h;
                    let minus = self.cost(&work, None)?;
                    work.steps[t][s][d] = plan.steps[t][s][d];
                    grad.steps[t][s][d] = (plus - minus) / (2.0 * h);
                }
            }
        }
        Ok(grad)
    }

    /// Projected gradient descent from the zero plan. The returned cost never
    /// exceeds the zero-plan cost; a flat landscape returns the zero plan.
    fn solve(&self) -> Result<(ControlPlan<D>, f64)> {
        let horizon = self.mpc.horizon;
        let mut plan = ControlPlan::zeros(horizon, self.controlled.len());
        let mut cost = self.cost(&plan, None)?;
        for _ in 0..self.mpc.descent_iters {
            let grad = self.gradient(&plan)?;
            let mut step = self.mpc.step_size;
            let mut improved = false;
            while step > 1e-14 * self.mpc.step_size {
                let mut trial = plan.clone();
                for (ts, gs) in trial.steps.iter_mut().zip(&grad.steps) {
                    for (a, g) in ts.iter_mut().zip(gs) {
                        *a -= *g * step;
                    }
                }
                trial.project(self.sim.a_max);
                let trial_cost = self.cost(&trial, None)?;
                if trial_cost < cost {
                    let rel = (cost - trial_cost) / cost.abs().max(1e-12);
                    plan = trial;
                    cost = trial_cost;
                    improved = true;
                    if rel < self.mpc.tol {
                        return Ok((plan, cost));
                    }
                    break;
                }
                step *= self.mpc.backtrack;
            }
            if !improved {
                break;
            }
        }
        Ok((plan, cost))
    }
}

/// Jacobian-transpose product of the magnitude clamp at pre-clamp value `w`.
fn clamp_jacobian_apply<const D: usize>(
    w: &Vector<D>,
    bound: f64,
    g: &Vector<D>,
) -> Vector<D> {
    let n = w.norm();
    if n <= bound {
        *g
    } else {
        let unit = *w / n;
        (*g - unit * unit.dot(g)) * (bound / n)
    }
}

/// Cost of simulating `plan` forward from `flock` (all agents controlled):
/// the per-control-step task costs plus the weighted control effort.
pub fn rollout_cost<const D: usize>(
    flock: &FlockState<D>,
    plan: &ControlPlan<D>,
    spec: &CostSpec<D>,
    mpc: &MpcParams,
    sim: &SimParams,
    predator: Option<&PredatorParams<D>>,
) -> Result<f64> {
    let n = flock.len();
    if plan.steps.iter().any(|s| s.len() != n) {
        return Err(Error::WidthMismatch {
            expected: n,
            actual: plan.steps.first().map_or(0, Vec::len),
        });
    }
    let controlled: Vec<usize> = (0..n).collect();
    let problem = HorizonProblem::new(
        flock,
        &controlled,
        StageCost::Centralized,
        spec,
        mpc,
        sim,
        predator,
        true,
    );
    problem.cost(plan, None)
}

/// One centralized control decision: the first acceleration per agent of the
/// optimized joint plan.
pub fn solve_centralized<const D: usize>(
    flock: &FlockState<D>,
    spec: &CostSpec<D>,
    mpc: &MpcParams,
    sim: &SimParams,
    predator: Option<&PredatorParams<D>>,
) -> Result<Vec<Vector<D>>> {
    if flock.len() < 2 {
        return Err(Error::TooFewAgents {
            required: 2,
            actual: flock.len(),
        });
    }
    mpc.validate()?;
    let controlled: Vec<usize> = (0..flock.len()).collect();
    let problem = HorizonProblem::new(
        flock,
        &controlled,
        StageCost::Centralized,
        spec,
        mpc,
        sim,
        predator,
        true,
    );
    let (plan, _) = problem.solve()?;
    Ok(plan.steps.into_iter().next().unwrap())
}

/// One distributed control decision for `agent`: its neighbors are assumed to
/// coast through the horizon and only its own plan is optimized.
pub fn solve_distributed<const D: usize>(
    flock: &FlockState<D>,
    agent: usize,
    neighbor_count: usize,
    spec: &CostSpec<D>,
    mpc: &MpcParams,
    sim: &SimParams,
    predator: Option<&PredatorParams<D>>,
) -> Result<Vector<D>> {
    mpc.validate()?;
    let neighbors = nearest_neighbors(flock, agent, neighbor_count)?;
    let controlled = [agent];
    let problem = HorizonProblem::new(
        flock,
        &controlled,
        StageCost::Distributed {
            agent,
            neighbors: &neighbors,
        },
        spec,
        mpc,
        sim,
        predator,
        false,
    );
    let (plan, _) = problem.solve()?;
    Ok(plan.steps[0][0])
}

/// A control policy queried once per control step for all agents.
pub trait Controller<const D: usize> {
    fn name(&self) -> &'static str;
    /// One acceleration per agent, in agent order.
    fn decide(&mut self, flock: &FlockState<D>) -> Result<Vec<Vector<D>>>;
}

/// Centralized receding-horizon controller.
pub struct CentralizedMpc<const D: usize> {
    pub spec: CostSpec<D>,
    pub mpc: MpcParams,
    pub sim: SimParams,
    pub predator: Option<PredatorParams<D>>,
}

impl<const D: usize> Controller<D> for CentralizedMpc<D> {
    fn name(&self) -> &'static str {
        "cmpc"
    }

    fn decide(&mut self, flock: &FlockState<D>) -> Result<Vec<Vector<D>>> {
        solve_centralized(flock, &self.spec, &self.mpc, &self.sim, self.predator.as_ref())
    }
}

/// Per-agent receding-horizon controller; decisions for different agents are
/// independent and solved separately (in parallel with the `parallel`
/// feature, with deterministic ordering).
pub struct DistributedMpc<const D: usize> {
    pub spec: CostSpec<D>,
    pub mpc: MpcParams,
    pub sim: SimParams,
    pub predator: Option<PredatorParams<D>>,
    pub neighbor_count: usize,
}

impl<const D: usize> Controller<D> for DistributedMpc<D> {
    fn name(&self) -> &'static str {
        "dmpc"
    }

    fn decide(&mut self, flock: &FlockState<D>) -> Result<Vec<Vector<D>>> {
        let solve_one = |i: usize| {
            solve_distributed(
                flock,
                i,
                self.neighbor_count,
                &self.spec,
                &self.mpc,
                &self.sim,
                self.predator.as_ref(),
            )
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            (0..flock.len()).into_par_iter().map(solve_one).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..flock.len()).map(solve_one).collect()
        }
    }
}

/// Always commands zero acceleration; agents drift ballistically.
pub struct ZeroController;

impl<const D: usize> Controller<D> for ZeroController {
    fn name(&self) -> &'static str {
        "zero"
    }

    fn decide(&mut self, flock: &FlockState<D>) -> Result<Vec<Vector<D>>> {
        Ok(vec![Vector::ZERO; flock.len()])
    }
}

/// A closed-loop run: `states[k]` is the flock before the `k`-th control
/// action `actions[k]`; the final state has no action.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<const D: usize> {
    pub states: Vec<FlockState<D>>,
    pub actions: Vec<Vec<Vector<D>>>,
}

impl<const D: usize> Trajectory<D> {
    pub fn control_steps(&self) -> usize {
        self.actions.len()
    }

    pub fn agents(&self) -> usize {
        self.states.first().map_or(0, FlockState::len)
    }
}

/// Runs the closed loop: each control step queries the controller, clamps
/// the commanded accelerations, and advances the plant (and predator) for
/// `eta` dynamics sub-steps. Collisions are recorded by the metrics, not
/// halted on.
pub fn control_loop<const D: usize>(
    initial: &FlockState<D>,
    controller: &mut dyn Controller<D>,
    sim: &SimParams,
    predator: Option<&PredatorParams<D>>,
) -> Result<Trajectory<D>> {
    sim.validate()?;
    if initial.predator.is_some() && predator.is_none() {
        return Err(Error::MissingObservable("predator params"));
    }
    let steps = sim.control_steps();
    let n = initial.len();
    let mut states = Vec::with_capacity(steps + 1);
    let mut actions = Vec::with_capacity(steps);
    let mut state = initial.clone();
    for _ in 0..steps {
        let mut accels = controller.decide(&state)?;
        if accels.len() != n {
            return Err(Error::WidthMismatch {
                expected: n,
                actual: accels.len(),
            });
        }
        for a in &mut accels {
            *a = a.clamp_norm(sim.a_max);
        }
        let pred_accel = match (&state.predator, predator) {
            (Some(_), Some(pp)) => Some((predator_control(&state, sim, pp)?, pp.agility)),
            _ => None,
        };
        states.push(state.clone());
        actions.push(accels.clone());
        for _ in 0..sim.eta {
            for (agent, accel) in state.agents.iter_mut().zip(&accels) {
                *agent = step_agent(agent, accel, sim);
            }
            if let (Some(p), Some((a, agility))) = (&mut state.predator, &pred_accel) {
                p.position += p.velocity * sim.dt;
                p.velocity = (p.velocity + *a * sim.dt).clamp_norm(agility * sim.v_max);
            }
        }
        state.time_step += sim.eta as u64;
    }
    states.push(state);
    Ok(Trajectory { states, actions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::AgentState;
    use crate::rng::seeded;
    use rand::RngExt;

    fn sim(eta: u32) -> SimParams {
        SimParams {
            dt: 0.1,
            eta,
            v_max: 2.0,
            a_max: 1.5,
            sim_time: 100.0,
        }
    }

    fn flock(points: &[([f64; 2], [f64; 2])]) -> FlockState<2> {
        FlockState::new(
            points
                .iter()
                .map(|(p, v)| AgentState::new(Vector(*p), Vector(*v)))
                .collect(),
        )
    }

    #[test]
    fn zero_plan_static_flock_costs_current_positions() {
        let f = flock(&[([0.0, 0.0], [0.0, 0.0]), ([4.0, 0.0], [0.0, 0.0])]);
        let spec = CostSpec::basic_flocking(30.0, 10.0);
        let mpc = MpcParams {
            horizon: 1,
            ..MpcParams::default()
        };
        let plan = ControlPlan::zeros(1, 2);
        let got = rollout_cost(&f, &plan, &spec, &mpc, &sim(3), None).unwrap();
        let stage = task_cost(&f.positions(), None, &spec).unwrap().total;
        assert!((got - stage).abs() < 1e-12);
    }

    #[test]
    fn effort_term_adds_weighted_squared_magnitude() {
        let f = flock(&[([0.0, 0.0], [0.0, 0.0]), ([4.0, 0.0], [0.0, 0.0])]);
        let spec = CostSpec::basic_flocking(30.0, 10.0);
        let mpc = MpcParams {
            horizon: 1,
            lambda: 2.0,
            ..MpcParams::default()
        };
        // With eta = 1 and zero velocities the first step moves no positions,
        // so the cost difference is exactly the effort term.
        let s = sim(1);
        let zero = rollout_cost(&f, &ControlPlan::zeros(1, 2), &spec, &mpc, &s, None).unwrap();
        let mut plan = ControlPlan::zeros(1, 2);
        plan.steps[0][0] = Vector([1.0, 0.0]);
        let with_a = rollout_cost(&f, &plan, &spec, &mpc, &s, None).unwrap();
        assert!((with_a - zero - 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_step_rollout_matches_manual_unroll() {
        let f = flock(&[([0.0, 0.0], [0.5, 0.0]), ([4.0, 0.0], [0.0, -0.25])]);
        let spec = CostSpec::basic_flocking(30.0, 10.0);
        let s = sim(3);
        let mpc = MpcParams {
            horizon: 2,
            lambda: 0.7,
            ..MpcParams::default()
        };
        let mut plan = ControlPlan::zeros(2, 2);
        plan.steps[0][0] = Vector([0.2, 0.1]);
        plan.steps[0][1] = Vector([-0.3, 0.0]);
        plan.steps[1][0] = Vector([0.0, -0.2]);
        plan.steps[1][1] = Vector([0.1, 0.1]);

        // Independent hand unroll of the same dynamics.
        let mut p = f.positions();
        let mut v = f.velocities();
        let mut expected = 0.0;
        for t in 0..2 {
            expected += 0.7
                * plan.steps[t]
                    .iter()
                    .map(|a| a.norm_sq())
                    .sum::<f64>();
            for _ in 0..3 {
                for i in 0..2 {
                    p[i] += v[i] * s.dt;
                    v[i] = (v[i] + plan.steps[t][i] * s.dt).clamp_norm(s.v_max);
                }
            }
            expected += task_cost(&p, None, &spec).unwrap().total;
        }
        let got = rollout_cost(&f, &plan, &spec, &mpc, &s, None).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn reverse_gradient_matches_finite_differences() {
        let mut rng = seeded(3);
        // Radius large enough that separation stays smooth everywhere the
        // rollout visits.
        let spec = CostSpec::basic_flocking(30.0, 1e6);
        let s = sim(3);
        for _ in 0..10 {
            let f = flock(&[
                (
                    [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)],
                    [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)],
                ),
                (
                    [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)],
                    [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)],
                ),
                (
                    [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)],
                    [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)],
                ),
            ]);
            if f.positions()
                .iter()
                .enumerate()
                .any(|(i, a)| f.positions()[..i].iter().any(|b| a.distance(b) < 0.5))
            {
                continue;
            }
            let reverse = MpcParams {
                horizon: 3,
                lambda: 0.5,
                ..MpcParams::default()
            };
            let fd = MpcParams {
                grad_mode: GradMode::FiniteDifference,
                ..reverse
            };
            let controlled = [0, 1, 2];
            let mut plan = ControlPlan::zeros(3, 3);
            for step in &mut plan.steps {
                for a in step.iter_mut() {
                    *a = Vector([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
                }
            }
            let problem = |mpc| HorizonProblem::new(
                &f,
                &controlled,
                StageCost::Centralized,
                &spec,
                mpc,
                &s,
                None,
                true,
            );
            let g_rev = problem(&reverse).reverse_gradient(&plan).unwrap();
            let g_fd = problem(&fd).fd_gradient(&plan).unwrap();
            let scale = g_fd
                .steps
                .iter()
                .flatten()
                .map(Vector::norm)
                .fold(1e-9_f64, f64::max);
            for (a, b) in g_rev.steps.iter().flatten().zip(g_fd.steps.iter().flatten()) {
                assert!(
                    (*a - *b).norm() / scale < 1e-5,
                    "reverse {a:?} vs fd {b:?}"
                );
            }
        }
    }

    #[test]
    fn distant_agents_accelerate_toward_each_other() {
        let f = flock(&[([0.0, 0.0], [0.0, 0.0]), ([20.0, 0.0], [0.0, 0.0])]);
        let spec = CostSpec::basic_flocking(30.0, 10.0);
        let a = solve_centralized(&f, &spec, &MpcParams::default(), &sim(3), None).unwrap();
        assert!(a[0][0] > 0.0, "agent 0 should accelerate in +x, got {:?}", a[0]);
        assert!(a[1][0] < 0.0, "agent 1 should accelerate in -x, got {:?}", a[1]);
    }

    #[test]
    fn stationary_configuration_yields_small_action() {
        // Separation-cohesion balance point for a resting pair.
        let spec = CostSpec::basic_flocking(30.0, 10.0);
        let spacing = 30.0_f64.powf(0.25);
        let f = flock(&[([0.0, 0.0], [0.0, 0.0]), ([spacing, 0.0], [0.0, 0.0])]);
        let a = solve_centralized(&f, &spec, &MpcParams::default(), &sim(3), None).unwrap();
        for ai in &a {
            assert!(ai.norm() < 5e-2, "expected near-zero action, got {ai:?}");
        }
    }

    #[test]
    fn solve_never_exceeds_zero_plan_cost() {
        let mut rng = seeded(7);
        let spec = CostSpec::collision_avoidance(1e5, 2.0);
        let s = sim(3);
        let mpc = MpcParams::default();
        for _ in 0..10 {
            let f = FlockState::new(
                (0..5)
                    .map(|_| {
                        AgentState::new(
                            Vector([rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)]),
                            Vector([rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]),
                        )
                    })
                    .collect(),
            );
            let controlled: Vec<usize> = (0..5).collect();
            let problem = HorizonProblem::new(
                &f,
                &controlled,
                StageCost::Centralized,
                &spec,
                &mpc,
                &s,
                None,
                true,
            );
            let zero_cost = problem.cost(&ControlPlan::zeros(mpc.horizon, 5), None).unwrap();
            let (_, solved) = problem.solve().unwrap();
            assert!(solved <= zero_cost);
        }
    }

    #[test]
    fn distributed_agent_moves_toward_lone_neighbor() {
        let f = flock(&[([0.0, 0.0], [0.0, 0.0]), ([15.0, 0.0], [0.0, 0.0])]);
        let spec = CostSpec::basic_flocking(30.0, 10.0);
        let a = solve_distributed(&f, 0, 1, &spec, &MpcParams::default(), &sim(3), None).unwrap();
        assert!(a[0] > 0.0, "expected +x acceleration, got {a:?}");
    }

    #[test]
    fn distributed_stationary_spacing_yields_small_action() {
        let spec = CostSpec::basic_flocking(30.0, 10.0);
        let spacing = 30.0_f64.powf(0.25);
        let f = flock(&[([0.0, 0.0], [0.0, 0.0]), ([spacing, 0.0], [0.0, 0.0])]);
        let a = solve_distributed(&f, 0, 1, &spec, &MpcParams::default(), &sim(3), None).unwrap();
        assert!(a.norm() < 5e-2, "expected near-zero action, got {a:?}");
    }

    #[test]
    fn coasting_neighbor_equals_pre_advanced_neighbor() {
        // One horizon step of the distributed rollout sees a moving neighbor
        // exactly where a ballistic pre-advance puts it.
        let spec = CostSpec::basic_flocking(30.0, 10.0);
        let s = sim(3);
        let mpc = MpcParams {
            horizon: 1,
            lambda: 0.0,
            ..MpcParams::default()
        };
        let moving = flock(&[([0.0, 0.0], [0.0, 0.0]), ([8.0, 0.0], [1.0, 0.5])]);
        let neighbors = [1usize];
        let problem = HorizonProblem::new(
            &moving,
            &[0],
            StageCost::Distributed {
                agent: 0,
                neighbors: &neighbors,
            },
            &spec,
            &mpc,
            &s,
            None,
            false,
        );
        let cost_moving = problem.cost(&ControlPlan::zeros(1, 1), None).unwrap();

        let advance = s.dt * s.eta as f64;
        let pre_advanced = flock(&[
            ([0.0, 0.0], [0.0, 0.0]),
            ([8.0 + advance, 0.5 * advance], [1.0, 0.5]),
        ]);
        let problem2 = HorizonProblem::new(
            &pre_advanced,
            &[0],
            StageCost::Distributed {
                agent: 0,
                neighbors: &neighbors,
            },
            &spec,
            &mpc,
            &s,
            None,
            false,
        );
        // The pre-advanced flock still coasts one control step in the rollout,
        // so compare stage costs directly instead.
        let expected = distributed_cost(
            &[
                Vector([0.0, 0.0]),
                Vector([8.0 + advance, 0.5 * advance]),
            ],
            0,
            &neighbors,
            None,
            &spec,
        )
        .unwrap();
        assert!((cost_moving - expected).abs() < 1e-12);
        let _ = problem2;
    }

    #[test]
    fn control_loop_records_floor_steps_plus_initial() {
        let f = flock(&[([0.0, 0.0], [1.0, 0.0]), ([4.0, 0.0], [0.0, 0.0])]);
        let s = sim(3);
        let mut zero = ZeroController;
        let traj = control_loop(&f, &mut zero, &s, None).unwrap();
        assert_eq!(traj.control_steps(), 333);
        assert_eq!(traj.states.len(), 334);
    }

    #[test]
    fn zero_controller_is_pure_drift() {
        let f = flock(&[([0.0, 0.0], [1.0, 0.5]), ([4.0, 0.0], [-0.5, 0.25])]);
        let s = SimParams {
            sim_time: 3.0,
            ..sim(3)
        };
        let mut zero = ZeroController;
        let traj = control_loop(&f, &mut zero, &s, None).unwrap();
        for state in &traj.states {
            for (agent, initial) in state.agents.iter().zip(&f.agents) {
                assert_eq!(agent.velocity, initial.velocity);
            }
        }
        let elapsed = traj.states.last().unwrap().time_step as f64 * s.dt;
        let drifted = f.agents[0].position + f.agents[0].velocity * elapsed;
        let last = traj.states.last().unwrap().agents[0].position;
        assert!((drifted - last).norm() < 1e-9);
    }

    #[test]
    fn identical_seeds_produce_identical_trajectories() {
        let b = crate::dynamics::SampleBox::default();
        let s = SimParams {
            sim_time: 6.0,
            ..sim(3)
        };
        let spec = CostSpec::basic_flocking(2000.0, 10.0);
        let run = || {
            let f: FlockState<2> =
                crate::dynamics::sample_initial_flock(4, 5, &s, 2.0, &b).unwrap();
            let mut ctrl = CentralizedMpc {
                spec: spec.clone(),
                mpc: MpcParams::default(),
                sim: s,
                predator: None,
            };
            control_loop(&f, &mut ctrl, &s, None).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn projection_keeps_actions_within_bound() {
        let f = flock(&[([0.0, 0.0], [0.0, 0.0]), ([50.0, 0.0], [0.0, 0.0])]);
        let spec = CostSpec::basic_flocking(30.0, 10.0);
        let s = sim(3);
        let a = solve_centralized(&f, &spec, &MpcParams::default(), &s, None).unwrap();
        for ai in &a {
            assert!(ai.norm() <= s.a_max + 1e-12);
        }
    }
}
