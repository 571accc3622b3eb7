//! Quadrotor rigid-body plant and the acceleration-tracking inner loop.
//!
//! The 12-state model carries position, velocity, Euler roll/pitch/yaw, and
//! body rates; inputs are total thrust, three body moments, and the summed
//! rotor speed feeding the gyroscopic coupling terms. Integration is
//! fixed-step fourth-order Runge-Kutta. A PID tracker converts commanded 3D
//! accelerations into inputs so the point-model controllers can fly the
//! quadrotor unchanged: the vertical channel sets thrust from the demanded
//! specific force, the lateral channels set roll/pitch targets, and PID loops
//! on the angles produce the moments (yaw held at zero, integrals clamped).

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::dynamics::{AgentState, FlockState, SimParams};
use crate::mpc::{Controller, Trajectory};
use crate::vector::Vector;
use crate::{Error, Result};

/// Physical parameters of the quadrotor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadParams {
    pub mass: f64,
    pub gravity: f64,
    pub inertia_x: f64,
    pub inertia_y: f64,
    pub inertia_z: f64,
    pub rotor_inertia: f64,
    pub arm_length: f64,
    pub thrust_factor: f64,
    pub drag_factor: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        Self {
            mass: 0.650,
            gravity: 9.81,
            inertia_x: 7.5e-3,
            inertia_y: 7.5e-3,
            inertia_z: 1.3e-2,
            rotor_inertia: 6e-5,
            arm_length: 0.23,
            thrust_factor: 3.13e-5,
            drag_factor: 7.5e-7,
        }
    }
}

impl QuadParams {
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }
}

/// 12-state rigid-body state: position, velocity, Euler angles
/// (roll, pitch, yaw), and angular rates. Angles are wrapped to (-pi, pi].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QuadState {
    pub position: Vector<3>,
    pub velocity: Vector<3>,
    pub angles: Vector<3>,
    pub rates: Vector<3>,
}

impl QuadState {
    /// Level and at rest at a position.
    pub fn hovering_at(position: Vector<3>) -> Self {
        Self {
            position,
            ..Self::default()
        }
    }

    /// Level attitude with the point-model position and velocity.
    pub fn from_point(agent: &AgentState<3>) -> Self {
        Self {
            position: agent.position,
            velocity: agent.velocity,
            ..Self::default()
        }
    }

    pub fn as_point(&self) -> AgentState<3> {
        AgentState::new(self.position, self.velocity)
    }

    fn to_array(self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for d in 0..3 {
            out[d] = self.position[d];
            out[3 + d] = self.velocity[d];
            out[6 + d] = self.angles[d];
            out[9 + d] = self.rates[d];
        }
        out
    }

    fn from_array(a: [f64; 12]) -> Self {
        let mut s = Self::default();
        for d in 0..3 {
            s.position[d] = a[d];
            s.velocity[d] = a[3 + d];
            s.angles[d] = a[6 + d];
            s.rates[d] = a[9 + d];
        }
        s
    }

    fn wrap_angles(&mut self) {
        for d in 0..3 {
            self.angles[d] = wrap_angle(self.angles[d]);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite()
            && self.velocity.is_finite()
            && self.angles.is_finite()
            && self.rates.is_finite()
    }
}

/// Wraps an angle into (-pi, pi].
fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * core::f64::consts::PI;
    let mut x = a % two_pi;
    if x > core::f64::consts::PI {
        x -= two_pi;
    } else if x <= -core::f64::consts::PI {
        x += two_pi;
    }
    x
}

/// Control inputs: total thrust, body moments, and the summed rotor speed
/// driving the gyroscopic terms (zero when rotor speeds are not tracked).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QuadInput {
    pub thrust: f64,
    pub roll_moment: f64,
    pub pitch_moment: f64,
    pub yaw_moment: f64,
    pub rotor_speed_sum: f64,
}

/// Rigid-body state derivative.
pub fn quad_derivative(state: &QuadState, input: &QuadInput, params: &QuadParams) -> [f64; 12] {
    let (roll, pitch, yaw) = (state.angles[0], state.angles[1], state.angles[2]);
    let (sr, cr) = (roll.sin(), roll.cos());
    let (sp, cp) = (pitch.sin(), pitch.cos());
    let (sy, cy) = (yaw.sin(), yaw.cos());
    let (roll_rate, pitch_rate, yaw_rate) = (state.rates[0], state.rates[1], state.rates[2]);
    let thrust_per_mass = input.thrust / params.mass;

    let acc_x = (cr * sp * cy + sr * sy) * thrust_per_mass;
    let acc_y = (cr * sp * sy - sr * cy) * thrust_per_mass;
    let acc_z = -params.gravity + cr * cp * thrust_per_mass;

    let roll_acc = pitch_rate * yaw_rate * (params.inertia_y - params.inertia_z)
        / params.inertia_x
        - params.rotor_inertia / params.inertia_x * pitch_rate * input.rotor_speed_sum
        + input.roll_moment / params.inertia_x;
    let pitch_acc = yaw_rate * roll_rate * (params.inertia_z - params.inertia_x)
        / params.inertia_y
        + params.rotor_inertia / params.inertia_y * roll_rate * input.rotor_speed_sum
        + input.pitch_moment / params.inertia_y;
    let yaw_acc = roll_rate * pitch_rate * (params.inertia_x - params.inertia_y)
        / params.inertia_z
        + input.yaw_moment / params.inertia_z;

    [
        state.velocity[0],
        acc_x,
        state.velocity[1],
        acc_y,
        state.velocity[2],
        acc_z,
        roll_rate,
        roll_acc,
        pitch_rate,
        pitch_acc,
        yaw_rate,
        yaw_acc,
    ]
}

// State layout used by the integrator: position/velocity interleaved per
// axis, then angle/rate pairs (matches `quad_derivative`).
fn pack(state: &QuadState) -> [f64; 12] {
    let s = state.to_array();
    [
        s[0], s[3], s[1], s[4], s[2], s[5], s[6], s[9], s[7], s[10], s[8], s[11],
    ]
}

fn unpack(a: [f64; 12]) -> QuadState {
    QuadState::from_array([
        a[0], a[2], a[4], a[1], a[3], a[5], a[6], a[8], a[10], a[7], a[9], a[11],
    ])
}

/// One fixed-step fourth-order Runge-Kutta step with the input held constant.
pub fn rk4_step(
    state: &QuadState,
    input: &QuadInput,
    step: f64,
    params: &QuadParams,
) -> Result<QuadState> {
    let eval = |packed: [f64; 12]| -> [f64; 12] {
        let s = unpack(packed);
        let d = quad_derivative(&s, input, params);
        // Derivative in packed layout.
        [
            d[0], d[1], d[2], d[3], d[4], d[5], d[6], d[7], d[8], d[9], d[10], d[11],
        ]
    };
    let y0 = pack(state);
    let k1 = eval(y0);
    let k2 = eval(add_scaled(y0, k1, step / 2.0));
    let k3 = eval(add_scaled(y0, k2, step / 2.0));
    let k4 = eval(add_scaled(y0, k3, step));
    let mut y = y0;
    for i in 0..12 {
        y[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let mut next = unpack(y);
    next.wrap_angles();
    if !next.is_finite() {
        return Err(Error::Divergence("quadrotor integration"));
    }
    Ok(next)
}

fn add_scaled(y: [f64; 12], k: [f64; 12], h: f64) -> [f64; 12] {
    let mut out = y;
    for i in 0..12 {
        out[i] += h * k[i];
    }
    out
}

/// Integrates for `duration` with fixed sub-steps of (at most) `step`.
pub fn integrate_quad(
    state: &QuadState,
    input: &QuadInput,
    duration: f64,
    step: f64,
    params: &QuadParams,
) -> Result<QuadState> {
    if !(step > 0.0 && duration >= 0.0) {
        return Err(Error::InvalidParam(
            "integration step and duration must be positive".into(),
        ));
    }
    let n = (duration / step).round().max(1.0) as usize;
    let h = duration / n as f64;
    let mut s = *state;
    for _ in 0..n {
        s = rk4_step(&s, input, h, params)?;
    }
    Ok(s)
}

/// Maps per-rotor thrusts to inputs: total thrust, differential arm moments,
/// alternating-sign drag moments, and the summed rotor speed.
pub fn rotor_mixing(thrusts: [f64; 4], params: &QuadParams) -> QuadInput {
    let drag_per_thrust = params.drag_factor / params.thrust_factor;
    let torques: Vec<f64> = thrusts.iter().map(|f| f * drag_per_thrust).collect();
    QuadInput {
        thrust: thrusts.iter().sum(),
        roll_moment: params.arm_length * (thrusts[3] - thrusts[1]),
        pitch_moment: params.arm_length * (thrusts[2] - thrusts[0]),
        yaw_moment: -torques[0] + torques[1] - torques[2] + torques[3],
        rotor_speed_sum: thrusts
            .iter()
            .map(|f| (f / params.thrust_factor).max(0.0).sqrt())
            .sum(),
    }
}

/// Same mapping from rotor angular speeds.
pub fn rotor_mixing_from_speeds(speeds: [f64; 4], params: &QuadParams) -> QuadInput {
    let thrusts: [f64; 4] = core::array::from_fn(|i| params.thrust_factor * speeds[i] * speeds[i]);
    let mut input = rotor_mixing(thrusts, params);
    input.rotor_speed_sum = speeds.iter().sum();
    input
}

/// Inverts the mixing for nonnegative squared rotor speeds; `None` when the
/// demanded input is not realizable.
pub fn rotor_speeds_for(input: &QuadInput, params: &QuadParams) -> Option<[f64; 4]> {
    let drag_share = input.yaw_moment * params.thrust_factor / params.drag_factor;
    let odd_sum = (input.thrust - drag_share) / 2.0; // F1 + F3
    let even_sum = (input.thrust + drag_share) / 2.0; // F2 + F4
    let f4 = (even_sum + input.roll_moment / params.arm_length) / 2.0;
    let f2 = (even_sum - input.roll_moment / params.arm_length) / 2.0;
    let f3 = (odd_sum + input.pitch_moment / params.arm_length) / 2.0;
    let f1 = (odd_sum - input.pitch_moment / params.arm_length) / 2.0;
    let thrusts = [f1, f2, f3, f4];
    if thrusts.iter().any(|f| *f < 0.0) {
        return None;
    }
    Some(core::array::from_fn(|i| {
        (thrusts[i] / params.thrust_factor).sqrt()
    }))
}

/// Gains and saturations of the acceleration tracker.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PidGains {
    pub kp_angle: f64,
    pub ki_angle: f64,
    pub kd_angle: f64,
    pub kp_yaw: f64,
    pub ki_yaw: f64,
    pub kd_yaw: f64,
    /// Roll/pitch setpoint clamp (rad).
    pub max_tilt: f64,
    /// Anti-windup clamp on the integral terms.
    pub integral_limit: f64,
    /// Upper thrust saturation (N).
    pub max_thrust: f64,
}

impl PidGains {
    /// Defaults tuned for the stock airframe; thrust ceiling at four times
    /// hover thrust.
    pub fn for_params(params: &QuadParams) -> Self {
        Self {
            kp_angle: 40.0,
            ki_angle: 2.0,
            kd_angle: 12.0,
            kp_yaw: 15.0,
            ki_yaw: 0.5,
            kd_yaw: 8.0,
            max_tilt: 0.5,
            integral_limit: 1.0,
            max_thrust: 4.0 * params.hover_thrust(),
        }
    }
}

impl Default for PidGains {
    fn default() -> Self {
        Self::for_params(&QuadParams::default())
    }
}

/// Stateful inner loop: converts a commanded world-frame acceleration into
/// thrust and body moments.
///
/// The demanded specific force is the command plus gravity compensation;
/// thrust is its magnitude (saturated), the roll/pitch setpoints orient the
/// thrust axis along it at zero yaw, and per-angle PID loops produce the
/// moments. Saturations absorb extremes, so the tracker is total.
#[derive(Clone, Copy, Debug)]
pub struct AccelerationTracker {
    pub gains: PidGains,
    integral: Vector<3>,
}

impl AccelerationTracker {
    pub fn new(gains: PidGains) -> Self {
        Self {
            gains,
            integral: Vector::ZERO,
        }
    }

    pub fn reset(&mut self) {
        self.integral = Vector::ZERO;
    }

    /// One tracker update; `dt` is the inner-loop step.
    pub fn control(
        &mut self,
        state: &QuadState,
        accel_cmd: &Vector<3>,
        params: &QuadParams,
        dt: f64,
    ) -> QuadInput {
        let demanded = Vector([accel_cmd[0], accel_cmd[1], accel_cmd[2] + params.gravity]);
        let magnitude = demanded.norm();
        let thrust = (params.mass * magnitude).clamp(0.0, self.gains.max_thrust);

        let (roll_target, pitch_target) = if magnitude < 1e-9 {
            (0.0, 0.0)
        } else {
            let max_sin = self.gains.max_tilt.sin();
            let roll = (-demanded[1] / magnitude).clamp(-max_sin, max_sin).asin();
            let pitch = demanded[0]
                .atan2(demanded[2])
                .clamp(-self.gains.max_tilt, self.gains.max_tilt);
            (roll, pitch)
        };

        let error = Vector([
            roll_target - state.angles[0],
            pitch_target - state.angles[1],
            wrap_angle(-state.angles[2]),
        ]);
        for d in 0..3 {
            self.integral[d] = (self.integral[d] + error[d] * dt)
                .clamp(-self.gains.integral_limit, self.gains.integral_limit);
        }
        let g = &self.gains;
        QuadInput {
            thrust,
            roll_moment: params.inertia_x
                * (g.kp_angle * error[0] + g.ki_angle * self.integral[0]
                    - g.kd_angle * state.rates[0]),
            pitch_moment: params.inertia_y
                * (g.kp_angle * error[1] + g.ki_angle * self.integral[1]
                    - g.kd_angle * state.rates[1]),
            yaw_moment: params.inertia_z
                * (g.kp_yaw * error[2] + g.ki_yaw * self.integral[2] - g.kd_yaw * state.rates[2]),
            rotor_speed_sum: 0.0,
        }
    }
}

/// A quadrotor flock run: the point-compatible trajectory plus the full quad
/// states at every recorded step.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadTrajectory {
    pub point: Trajectory<3>,
    /// Per recorded state, per agent.
    pub quad_states: Vec<Vec<QuadState>>,
}

/// Flies a point-model controller on quadrotor plants.
///
/// Each control step reads (position, velocity) off every quadrotor, queries
/// the unchanged 3D controller, clamps the commanded accelerations, and lets
/// each agent's PID tracker follow its command for `eta·dt` seconds of RK4
/// sub-steps of length `dt_inner`.
pub fn quad_flock_loop(
    initial: &FlockState<3>,
    controller: &mut dyn Controller<3>,
    sim: &SimParams,
    params: &QuadParams,
    gains: &PidGains,
    dt_inner: f64,
) -> Result<QuadTrajectory> {
    sim.validate()?;
    if !(dt_inner > 0.0) {
        return Err(Error::InvalidParam("dt_inner must be > 0".into()));
    }
    let steps = sim.control_steps();
    let n = initial.len();
    let mut quads: Vec<QuadState> = initial.agents.iter().map(QuadState::from_point).collect();
    let mut trackers = alloc::vec![AccelerationTracker::new(*gains); n];

    let control_period = sim.eta as f64 * sim.dt;
    let inner_steps = (control_period / dt_inner).round().max(1.0) as usize;
    let h = control_period / inner_steps as f64;

    let mut states = Vec::with_capacity(steps + 1);
    let mut actions = Vec::with_capacity(steps);
    let mut quad_log = Vec::with_capacity(steps + 1);
    let mut time_step = 0u64;
    for _ in 0..steps {
        let view = FlockState {
            agents: quads.iter().map(QuadState::as_point).collect(),
            predator: None,
            time_step,
        };
        let mut accels = controller.decide(&view)?;
        if accels.len() != n {
            return Err(Error::WidthMismatch {
                expected: n,
                actual: accels.len(),
            });
        }
        for a in &mut accels {
            *a = a.clamp_norm(sim.a_max);
        }
        states.push(view);
        actions.push(accels.clone());
        quad_log.push(quads.clone());
        for (quad, (tracker, cmd)) in quads.iter_mut().zip(trackers.iter_mut().zip(&accels)) {
            for _ in 0..inner_steps {
                let input = tracker.control(quad, cmd, params, h);
                *quad = rk4_step(quad, &input, h, params)?;
            }
        }
        time_step += sim.eta as u64;
    }
    states.push(FlockState {
        agents: quads.iter().map(QuadState::as_point).collect(),
        predator: None,
        time_step,
    });
    quad_log.push(quads);
    Ok(QuadTrajectory {
        point: Trajectory { states, actions },
        quad_states: quad_log,
    })
}
