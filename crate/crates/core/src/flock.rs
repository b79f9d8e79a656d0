//! Boids coordination and closest-point-of-approach avoidance, evaluated per
//! drone on the neighbor snapshots it has received over the relay.

use serde::{Deserialize, Serialize};

use crate::dynamics::{wrap_heading, ChannelThrust, DroneState, PhysicsParams, Vec3};

/// Snapshots older than this are ignored.
pub const SNAPSHOT_MAX_AGE: f64 = 1.0;

const COINCIDENT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlockParams {
    pub k_coh: f64,
    pub k_sep: f64,
    pub k_ali: f64,
    /// m
    pub r_neigh: f64,
    /// m
    pub r_sep: f64,
    /// m
    pub safety_radius: f64,
    /// m/s², clamp on the commanded acceleration.
    pub max_accel: f64,
    /// s, look-ahead for closest approach.
    pub horizon: f64,
    /// N·m per rad of heading error.
    pub yaw_kp: f64,
    /// N·m·s per rad.
    pub yaw_kd: f64,
}

impl Default for FlockParams {
    fn default() -> Self {
        FlockParams {
            k_coh: 0.4,
            k_sep: 1.2,
            k_ali: 0.6,
            r_neigh: 3.0,
            r_sep: 1.0,
            safety_radius: 0.3,
            max_accel: 0.5,
            horizon: 3.0,
            yaw_kp: 0.01,
            yaw_kd: 0.01,
        }
    }
}

impl FlockParams {
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        for (name, v) in [("r_neigh", self.r_neigh), ("r_sep", self.r_sep), ("safety_radius", self.safety_radius)] {
            if !(v > 0.0) {
                errors.push(format!("flock.{name} must be > 0"));
            }
        }
        if self.r_sep > self.r_neigh {
            errors.push("flock.r_sep must not exceed r_neigh".into());
        }
        for (name, v) in [("k_coh", self.k_coh), ("k_sep", self.k_sep), ("k_ali", self.k_ali)] {
            if !(v >= 0.0) {
                errors.push(format!("flock.{name} must be >= 0"));
            }
        }
        if !(self.max_accel > 0.0) || !(self.horizon >= 0.0) {
            errors.push("flock.max_accel must be > 0 and horizon >= 0".into());
        }
        errors
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeerSnapshot {
    pub drone_id: u8,
    pub position: Vec3,
    pub velocity: Vec3,
    /// When the sender sampled itself.
    pub stamped: f64,
    /// When the relay delivered it.
    pub received: f64,
}

impl PeerSnapshot {
    pub fn of(drone_id: u8, state: &DroneState) -> Self {
        PeerSnapshot {
            drone_id,
            position: state.position,
            velocity: state.velocity,
            stamped: state.time,
            received: state.time,
        }
    }

    pub fn is_fresh(&self, now: f64) -> bool {
        now - self.stamped <= SNAPSHOT_MAX_AGE
    }
}

/// Fresh snapshots of other drones within the neighbor radius.
pub fn neighbors<'a>(
    me: &PeerSnapshot,
    snapshots: impl IntoIterator<Item = &'a PeerSnapshot>,
    now: f64,
    params: &FlockParams,
) -> Vec<PeerSnapshot> {
    snapshots
        .into_iter()
        .filter(|s| s.drone_id != me.drone_id && s.is_fresh(now))
        .filter(|s| (s.position - me.position).norm() <= params.r_neigh)
        .copied()
        .collect()
}

/// The three boids terms before weighting is summed and clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlockTerms {
    pub cohesion: Vec3,
    pub separation: Vec3,
    pub alignment: Vec3,
}

impl FlockTerms {
    pub fn total(&self) -> Vec3 {
        self.cohesion + self.separation + self.alignment
    }
}

/// Weighted cohesion, separation, and alignment without the output clamp.
pub fn flock_terms(me: &PeerSnapshot, neighbors: &[PeerSnapshot], params: &FlockParams) -> FlockTerms {
    if neighbors.is_empty() {
        return FlockTerms { cohesion: Vec3::zeros(), separation: Vec3::zeros(), alignment: Vec3::zeros() };
    }
    // the drone counts itself in the local centroid and mean velocity
    let n = (neighbors.len() + 1) as f64;
    let centroid = neighbors.iter().fold(me.position, |acc, s| acc + s.position) / n;
    let mean_v = neighbors.iter().fold(me.velocity, |acc, s| acc + s.velocity) / n;

    let mut separation = Vec3::zeros();
    for other in neighbors {
        let away = me.position - other.position;
        let d = away.norm();
        if d < COINCIDENT_EPS {
            // fixed push keyed by id keeps the pair antisymmetric
            let sign = if me.drone_id < other.drone_id { -1.0 } else { 1.0 };
            separation += Vec3::new(sign / params.r_sep, 0.0, 0.0);
        } else if d < params.r_sep {
            separation += away / (d * d);
        }
    }

    FlockTerms {
        cohesion: (centroid - me.position) * params.k_coh,
        separation: separation * params.k_sep,
        alignment: (mean_v - me.velocity) * params.k_ali,
    }
}

pub fn clamp_norm(v: Vec3, max: f64) -> Vec3 {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

/// Boids acceleration, clamped to `max_accel`. Zero with no neighbors.
pub fn flock_accel(me: &PeerSnapshot, neighbors: &[PeerSnapshot], params: &FlockParams) -> Vec3 {
    clamp_norm(flock_terms(me, neighbors, params).total(), params.max_accel)
}

/// Repulsion from every drone predicted to come within twice the safety
/// radius inside the horizon, assuming constant velocities.
pub fn avoidance_accel(me: &PeerSnapshot, others: &[PeerSnapshot], params: &FlockParams) -> Vec3 {
    let threshold = 2.0 * params.safety_radius;
    let mut total = Vec3::zeros();
    for other in others.iter().filter(|o| o.drone_id != me.drone_id) {
        let dp = other.position - me.position;
        let dv = other.velocity - me.velocity;
        let dv2 = dv.norm_squared();
        let t_star = if dv2 > 0.0 { (-dp.dot(&dv) / dv2).clamp(0.0, params.horizon) } else { 0.0 };
        let separation = dp + dv * t_star;
        let d_min = separation.norm();
        if d_min >= threshold {
            continue;
        }
        let magnitude = params.max_accel * (1.0 - d_min / threshold);
        let direction = if d_min > 1e-9 {
            -separation / d_min
        } else {
            head_on_escape(me, other)
        };
        total += direction * magnitude;
    }
    total
}

/// Sidestep for an exactly head-on encounter: each drone goes to +y of its
/// own approach frame, which is +y of the lower id's frame for that drone
/// and −y of it for the other.
fn head_on_escape(me: &PeerSnapshot, other: &PeerSnapshot) -> Vec3 {
    let approach = me.velocity - other.velocity;
    let flat = Vec3::new(approach.x, approach.y, 0.0);
    if flat.norm() > 1e-12 {
        let x = flat.normalize();
        Vec3::new(-x.y, x.x, 0.0)
    } else if me.drone_id < other.drone_id {
        Vec3::new(0.0, 1.0, 0.0)
    } else {
        Vec3::new(0.0, -1.0, 0.0)
    }
}

/// Avoidance first; boids fill whatever authority avoidance leaves unused.
pub fn blend(avoid: Vec3, flock: Vec3, params: &FlockParams) -> Vec3 {
    let avoid = clamp_norm(avoid, params.max_accel);
    let spare = (1.0 - avoid.norm() / params.max_accel).max(0.0);
    clamp_norm(avoid + flock * spare, params.max_accel)
}

/// Map a desired acceleration onto the three actuation channels.
///
/// Vertical takes `hover_thrust + m·a_z`, lateral takes the along-heading
/// component, and yaw steers toward the horizontal azimuth of `accel` with a
/// PD law on the wrapped heading error.
pub fn flock_to_channels(
    accel: &Vec3,
    state: &DroneState,
    physics: &PhysicsParams,
    flock: &FlockParams,
    hover_thrust: f64,
) -> ChannelThrust {
    let m = physics.mass;
    let vertical = (hover_thrust + m * accel.z).clamp(0.0, physics.max_vertical_thrust);
    let along = accel.dot(&state.heading_vector());
    let lateral = (m * along).clamp(-physics.max_lateral_thrust, physics.max_lateral_thrust);

    let horizontal = accel.x.hypot(accel.y);
    let steer = if horizontal > 1e-9 {
        flock.yaw_kp * heading_error(state.heading, accel.y.atan2(accel.x))
    } else {
        0.0
    };
    let yaw = (steer - flock.yaw_kd * state.yaw_rate)
        .clamp(-physics.max_yaw_torque, physics.max_yaw_torque);
    ChannelThrust { vertical, yaw, lateral }
}

/// Signed shortest rotation from `heading` to `target`; positive is
/// counter-clockwise.
pub fn heading_error(heading: f64, target: f64) -> f64 {
    wrap_heading(target - heading)
}
