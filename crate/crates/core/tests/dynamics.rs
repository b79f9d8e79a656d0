mod common;

use std::f64::consts::PI;

use approx::assert_relative_eq;
use blimp_core::dynamics::{self, wrap_heading, ChannelThrust, DroneState, PhysicsParams, Vec3};
use proptest::prelude::*;

#[test]
fn speed_matches_closed_form_at_2_4_s() {
    let params = PhysicsParams { net_weight: 0.0, ..Default::default() };
    let mut s = DroneState::at_rest(Vec3::new(0.0, 0.0, 1.0), 0.0);
    s.thrust.lateral = 0.06;
    for _ in 0..240 {
        s = dynamics::step(&s, &params).unwrap();
    }
    let exact = common::closed_form_speed(0.06, 0.05, 0.12, 2.4);
    assert_relative_eq!(exact, 0.7585, max_relative = 1e-3);
    assert_relative_eq!(s.velocity.x, exact, max_relative = 0.01);
}

#[test]
fn speed_tracks_closed_form_over_10_s() {
    let worst = common::closed_form_worst_error(10.0);
    assert!(worst < 0.01, "worst relative error {worst}");
}

#[test]
fn terminal_speed_never_exceeded() {
    let excess = common::terminal_bound_excess(100, 3);
    assert!(excess <= 1e-6, "exceeded terminal speed by {excess}");
}

#[test]
fn identical_schedules_are_bit_identical() {
    let params = PhysicsParams::default();
    let run = || {
        let mut s = DroneState::at_rest(Vec3::new(0.3, -0.2, 1.1), 2.0);
        let mut trace = Vec::new();
        for k in 0..500 {
            s.thrust = ChannelThrust {
                vertical: if k % 97 < 50 { 0.05 } else { -0.03 },
                yaw: if k % 31 < 10 { 0.002 } else { -0.001 },
                lateral: 0.06 * ((k % 13) as f64 / 13.0 - 0.5),
            };
            s = dynamics::step(&s, &params).unwrap();
            trace.push(s);
        }
        trace
    };
    let a = run();
    let b = run();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.position.map(f64::to_bits), y.position.map(f64::to_bits));
        assert_eq!(x.velocity.map(f64::to_bits), y.velocity.map(f64::to_bits));
        assert_eq!(x.heading.to_bits(), y.heading.to_bits());
    }
}

#[test]
fn heading_wrap_on_random_angles() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10_000 {
        let a: f64 = rng.random_range(-1000.0..1000.0);
        let w = wrap_heading(a);
        assert!((-PI..PI).contains(&w), "{a} -> {w}");
        let turns = (a - w) / (2.0 * PI);
        assert!((turns - turns.round()).abs() * 2.0 * PI <= 1e-9, "{a} -> {w}");
    }
}

proptest! {
    #[test]
    fn ground_clamp_holds(z0 in 0.0..0.5f64, vz in -3.0..0.5f64, down in 0.0..0.08f64) {
        let params = PhysicsParams::default();
        let mut s = DroneState::at_rest(Vec3::new(0.0, 0.0, z0), 0.0);
        s.velocity.z = vz;
        s.thrust.vertical = -down;
        for _ in 0..200 {
            s = dynamics::step(&s, &params).unwrap();
            prop_assert!(s.position.z >= 0.0);
            if s.position.z == 0.0 {
                prop_assert!(s.velocity.z >= 0.0);
            }
        }
    }

    #[test]
    fn heading_stays_in_range(h in -10.0..10.0f64, torque in -0.002..0.002f64) {
        let params = PhysicsParams::default();
        let mut s = DroneState::at_rest(Vec3::new(0.0, 0.0, 1.0), h);
        s.thrust.yaw = torque;
        for _ in 0..500 {
            s = dynamics::step(&s, &params).unwrap();
            prop_assert!((-PI..PI).contains(&s.heading));
        }
    }
}
