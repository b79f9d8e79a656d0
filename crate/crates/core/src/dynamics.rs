//! Rigid-body-lite physics for a level, buoyant blimp.
//!
//! The craft has three independent actuation channels: a vertical thrust
//! that fights the residual (net) weight, a yaw torque, and a lateral thrust
//! acting along the current heading. Drag is linear in both translation and
//! yaw so that constant-thrust motion has a closed-form solution.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("state corruption: non-finite {0}")]
    StateCorruption(&'static str),
}

/// Per-channel actuator output. Vertical and lateral are newtons, yaw is N·m.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelThrust {
    pub vertical: f64,
    pub yaw: f64,
    pub lateral: f64,
}

impl ChannelThrust {
    pub const ZERO: ChannelThrust = ChannelThrust { vertical: 0.0, yaw: 0.0, lateral: 0.0 };

    /// Clamp every channel to its actuator limit. Vertical thrust is
    /// bidirectional here; only the altitude hold restricts itself to lift.
    pub fn clamped(self, params: &PhysicsParams) -> Self {
        ChannelThrust {
            vertical: self.vertical.clamp(-params.max_vertical_thrust, params.max_vertical_thrust),
            yaw: self.yaw.clamp(-params.max_yaw_torque, params.max_yaw_torque),
            lateral: self.lateral.clamp(-params.max_lateral_thrust, params.max_lateral_thrust),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroneState {
    /// World frame, z up.
    pub position: Vec3,
    pub velocity: Vec3,
    /// Radians in [-π, π).
    pub heading: f64,
    pub yaw_rate: f64,
    pub thrust: ChannelThrust,
    /// Seconds since simulation start.
    pub time: f64,
}

impl DroneState {
    pub fn at_rest(position: Vec3, heading: f64) -> Self {
        DroneState {
            position,
            velocity: Vec3::zeros(),
            heading: wrap_heading(heading),
            yaw_rate: 0.0,
            thrust: ChannelThrust::ZERO,
            time: 0.0,
        }
    }

    pub fn heading_vector(&self) -> Vec3 {
        Vec3::new(self.heading.cos(), self.heading.sin(), 0.0)
    }

    fn check_finite(&self) -> Result<(), DynamicsError> {
        let finite3 = |v: &Vec3| v.iter().all(|c| c.is_finite());
        if !finite3(&self.position) {
            return Err(DynamicsError::StateCorruption("position"));
        }
        if !finite3(&self.velocity) {
            return Err(DynamicsError::StateCorruption("velocity"));
        }
        if !self.heading.is_finite() || !self.yaw_rate.is_finite() {
            return Err(DynamicsError::StateCorruption("attitude"));
        }
        let t = &self.thrust;
        if !(t.vertical.is_finite() && t.yaw.is_finite() && t.lateral.is_finite()) {
            return Err(DynamicsError::StateCorruption("thrust"));
        }
        if !self.time.is_finite() {
            return Err(DynamicsError::StateCorruption("time"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsParams {
    /// kg
    pub mass: f64,
    /// Weight minus buoyant lift in newtons; positive sinks.
    pub net_weight: f64,
    /// N·s/m
    pub c_lin: f64,
    /// N·m·s/rad
    pub c_yaw: f64,
    /// kg·m²
    pub yaw_inertia: f64,
    pub max_vertical_thrust: f64,
    pub max_lateral_thrust: f64,
    pub max_yaw_torque: f64,
    /// Fixed step in seconds.
    pub dt: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        PhysicsParams {
            mass: 0.12,
            net_weight: 0.02,
            c_lin: 0.05,
            c_yaw: 0.004,
            yaw_inertia: 0.002,
            max_vertical_thrust: 0.08,
            max_lateral_thrust: 0.06,
            max_yaw_torque: 0.002,
            dt: 0.01,
        }
    }
}

impl PhysicsParams {
    /// Returns one message per violated constraint.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        let positive = [
            ("mass", self.mass),
            ("c_lin", self.c_lin),
            ("c_yaw", self.c_yaw),
            ("yaw_inertia", self.yaw_inertia),
            ("max_vertical_thrust", self.max_vertical_thrust),
            ("max_lateral_thrust", self.max_lateral_thrust),
            ("max_yaw_torque", self.max_yaw_torque),
            ("dt", self.dt),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                errors.push(format!("physics.{name} must be finite and > 0 (got {value})"));
            }
        }
        if !self.net_weight.is_finite() {
            errors.push("physics.net_weight must be finite".into());
        } else if self.max_vertical_thrust <= self.net_weight.abs() {
            errors.push(format!(
                "physics.max_vertical_thrust ({}) must exceed |net_weight| ({})",
                self.max_vertical_thrust, self.net_weight
            ));
        }
        errors
    }

    /// Terminal speed under the largest combined channel thrust.
    pub fn terminal_speed(&self) -> f64 {
        self.max_vertical_thrust.hypot(self.max_lateral_thrust) / self.c_lin
    }
}

/// Wrap an angle into [-π, π).
pub fn wrap_heading(angle: f64) -> f64 {
    if (-PI..PI).contains(&angle) {
        return angle;
    }
    let two_pi = 2.0 * PI;
    let mut wrapped = (angle + PI).rem_euclid(two_pi) - PI;
    // rem_euclid may round up to exactly 2π for tiny negative inputs
    if wrapped >= PI {
        wrapped -= two_pi;
    }
    wrapped
}

/// Thrust minus residual weight minus linear drag.
pub fn net_force(state: &DroneState, params: &PhysicsParams) -> Vec3 {
    let thrust = state.heading_vector() * state.thrust.lateral
        + Vec3::new(0.0, 0.0, state.thrust.vertical);
    thrust - Vec3::new(0.0, 0.0, params.net_weight) - state.velocity * params.c_lin
}

pub fn net_torque(state: &DroneState, params: &PhysicsParams) -> f64 {
    state.thrust.yaw - params.c_yaw * state.yaw_rate
}

/// Advance one fixed step with semi-implicit Euler.
///
/// Velocities are updated first from the net force and torque, then pose is
/// integrated from the new velocities. The ground is an inelastic clamp.
pub fn step(state: &DroneState, params: &PhysicsParams) -> Result<DroneState, DynamicsError> {
    state.check_finite()?;
    let dt = params.dt;

    let accel = net_force(state, params) / params.mass;
    let yaw_accel = net_torque(state, params) / params.yaw_inertia;

    let mut next = *state;
    next.velocity += accel * dt;
    next.yaw_rate += yaw_accel * dt;
    next.position += next.velocity * dt;
    next.heading = wrap_heading(state.heading + next.yaw_rate * dt);
    next.time += dt;

    if next.position.z <= 0.0 {
        next.position.z = 0.0;
        if next.velocity.z < 0.0 {
            next.velocity.z = 0.0;
        }
    }
    next.check_finite()?;
    Ok(next)
}
