//! Independent oracles and scenario builders shared by the integration tests
//! and the acceptance report. Nothing here calls the code it checks.

#![allow(dead_code)]

use blimp_core::arena::{Arena, Hoop};
use blimp_core::dynamics::{self, DroneState, PhysicsParams, Vec3};
use blimp_core::flock::PeerSnapshot;
use blimp_core::protocol::FrameType;
use blimp_core::replay::{replay, RecordedRun, ReplayLog, StateHash};
use blimp_core::runtime::{self, AltitudeHold, Channels, HoldGains, Opcode, TimedCommand};
use blimp_core::world::{Input, LinkModel, WorldConfig, WorldEvent};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- dynamics

/// Speed from rest under constant force `f` with linear drag `c` and mass `m`.
pub fn closed_form_speed(f: f64, c: f64, m: f64, t: f64) -> f64 {
    f / c * (1.0 - (-c * t / m).exp())
}

/// Largest relative deviation of simulated lateral speed from the analytic
/// solution, sampled every step over `seconds`. Early samples where the
/// speed is tiny are compared in absolute terms against 1% of terminal.
pub fn closed_form_worst_error(seconds: f64) -> f64 {
    let params = PhysicsParams { net_weight: 0.0, ..Default::default() };
    let f = params.max_lateral_thrust;
    let terminal = f / params.c_lin;
    let mut s = DroneState::at_rest(Vec3::new(0.0, 0.0, 1.0), 0.0);
    s.thrust.lateral = f;
    let steps = (seconds / params.dt).round() as usize;
    let mut worst: f64 = 0.0;
    for k in 1..=steps {
        s = dynamics::step(&s, &params).unwrap();
        let t = k as f64 * params.dt;
        let exact = closed_form_speed(f, params.c_lin, params.mass, t);
        let err = (s.velocity.norm() - exact).abs() / exact.max(0.01 * terminal);
        worst = worst.max(err);
    }
    worst
}

/// Run random channel-clamped thrust schedules; return the largest excess of
/// speed over the terminal bound.
pub fn terminal_bound_excess(schedules: usize, seed: u64) -> f64 {
    let params = PhysicsParams { net_weight: 0.0, ..Default::default() };
    let bound = params.terminal_speed();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..schedules {
        let mut s = DroneState::at_rest(Vec3::new(0.0, 0.0, 1.5), rng.random_range(-3.0..3.0));
        let segments = rng.random_range(1..8);
        for _ in 0..segments {
            s.thrust = dynamics::ChannelThrust {
                vertical: rng.random_range(-1.0..1.0) * params.max_vertical_thrust,
                yaw: rng.random_range(-1.0..1.0) * params.max_yaw_torque,
                lateral: rng.random_range(-1.0..1.0) * params.max_lateral_thrust,
            };
            for _ in 0..rng.random_range(50..800) {
                s = dynamics::step(&s, &params).unwrap();
                worst = worst.max(s.velocity.norm() - bound);
            }
        }
    }
    worst
}

// ---------------------------------------------------------------- runtime

pub struct HoldRun {
    /// First time after which |error| stays within 0.02 m for the rest of the run.
    pub settled_at: Option<f64>,
    pub max_error_after_settle: f64,
    pub max_abs_error: f64,
    /// Vertical thrust averaged over the final 10 s.
    pub final_thrust: f64,
}

/// Altitude hold from a 0.5 m error with default physics and gains.
pub fn hold_from_offset(seconds: f64) -> HoldRun {
    let params = PhysicsParams::default();
    let mut state = DroneState::at_rest(Vec3::new(0.0, 0.0, 1.0), 0.0);
    let mut channels = Channels::default();
    let mut hold = AltitudeHold::engaged_at(1.5, HoldGains::default());
    let steps = (seconds / params.dt).round() as usize;
    let tail = (10.0 / params.dt) as usize;
    let mut errors = Vec::with_capacity(steps);
    let mut thrust_sum = 0.0;
    for k in 0..steps {
        let now = k as f64 * params.dt;
        state.thrust = runtime::tick(&mut channels, &mut hold, &state, &params, now).clamped(&params);
        if k >= steps - tail {
            thrust_sum += state.thrust.vertical;
        }
        state = dynamics::step(&state, &params).unwrap();
        errors.push((state.time, (state.position.z - 1.5).abs()));
    }
    let last_bad = errors.iter().rposition(|&(_, e)| e > 0.02);
    let settled_at = match last_bad {
        None => Some(0.0),
        Some(i) if i + 1 < errors.len() => Some(errors[i + 1].0),
        Some(_) => None,
    };
    let after = last_bad.map_or(0, |i| i + 1);
    HoldRun {
        settled_at,
        max_error_after_settle: errors[after..].iter().map(|e| e.1).fold(0.0, f64::max),
        max_abs_error: errors.iter().map(|e| e.1).fold(0.0, f64::max),
        final_thrust: thrust_sum / tail as f64,
    }
}

/// Ticks of maximum vertical thrust produced by `UP(duration_ms)` from idle,
/// and whether the hold re-engaged at the altitude of the tick it lapsed.
pub fn up_profile(duration_ms: u32) -> (usize, bool, Vec<f64>) {
    let params = PhysicsParams::default();
    let mut state = DroneState::at_rest(Vec3::new(0.0, 0.0, 1.0), 0.0);
    let mut channels = Channels::default();
    let mut hold = AltitudeHold::engaged_at(1.0, HoldGains::default());
    runtime::enqueue(&mut channels, &mut hold, &TimedCommand::timed(Opcode::Up, duration_ms, 1), 0.0, 1.0)
        .unwrap();
    let mut profile = Vec::new();
    let mut captured_ok = true;
    let mut lapsed = false;
    for k in 0..(duration_ms as usize / 10 + 100) {
        let now = k as f64 * params.dt;
        let z_before = state.position.z;
        let thrust = runtime::tick(&mut channels, &mut hold, &state, &params, now);
        if !lapsed && channels.vertical.active.is_none() {
            lapsed = true;
            captured_ok = hold.engaged && hold.target_z == z_before;
        }
        profile.push(thrust.vertical);
        state.thrust = thrust.clamped(&params);
        state = dynamics::step(&state, &params).unwrap();
    }
    let max = params.max_vertical_thrust;
    let leading = profile.iter().take_while(|&&v| v == max).count();
    let total = profile.iter().filter(|&&v| v == max).count();
    // rectangular: all max ticks form one leading block
    let rectangular = leading == total;
    (leading, captured_ok && rectangular, profile)
}

/// Reference sensor: same stream, same draw, computed by hand.
pub fn height_oracle(z: f64, quantum: f64, noise_sd: f64, seed: u64, reads: usize) -> Vec<f64> {
    use rand_distr::{Distribution, Normal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_sd).unwrap();
    (0..reads)
        .map(|_| {
            let noisy = z + normal.sample(&mut rng);
            let q = (noisy / quantum + 1e-9).floor() * quantum;
            if q < 0.0 {
                0.0
            } else {
                q
            }
        })
        .collect()
}

// ---------------------------------------------------------------- protocol

/// Bitwise CRC-16/CCITT-FALSE.
pub fn crc_reference(data: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &byte in data {
        crc ^= u16::from(byte) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 { (crc << 1) ^ 0x1021 } else { crc << 1 };
        }
    }
    crc
}

/// Frame bytes assembled field by field.
pub fn frame_reference(ftype: u8, drone: u8, seq: u16, payload: &[u8]) -> Vec<u8> {
    let mut out = vec![0x42, 0x44, 0x01, ftype, drone, seq as u8, (seq >> 8) as u8];
    out.push(payload.len() as u8);
    out.push((payload.len() >> 8) as u8);
    out.extend_from_slice(payload);
    let crc = crc_reference(&out);
    out.push(crc as u8);
    out.push((crc >> 8) as u8);
    out
}

pub fn random_frame_type(rng: &mut impl Rng) -> FrameType {
    FrameType::ALL[rng.random_range(0..FrameType::ALL.len())]
}

/// Verdict by walking the window one step at a time from `last`.
pub fn seq_oracle(last: Option<u16>, incoming: u16) -> &'static str {
    let Some(last) = last else { return "accept" };
    if incoming == last {
        return "duplicate";
    }
    let mut probe = last;
    for _ in 0..1024 {
        probe = probe.wrapping_add(1);
        if probe == incoming {
            return "accept";
        }
    }
    "stale"
}

// ---------------------------------------------------------------- arena

/// Hoop crossing by dense sampling: find the first sample interval whose
/// plane-side flips and bisect it. Returns the plane crossing and its
/// off-center distance; the caller applies the disc test.
pub fn hoop_sampler(p0: &Vec3, p1: &Vec3, hoop: &Hoop, samples: usize) -> Option<(Vec3, f64)> {
    let c = Vec3::from(hoop.center);
    let n = Vec3::from(hoop.normal);
    let at = |s: f64| p0 + (p1 - p0) * s;
    let side = |s: f64| n.dot(&(at(s) - c)) >= 0.0;
    let mut prev = side(0.0);
    for k in 1..=samples {
        let s1 = k as f64 / samples as f64;
        let cur = side(s1);
        if cur != prev {
            let (mut lo, mut hi) = ((k - 1) as f64 / samples as f64, s1);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if side(mid) == prev {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let hit = at(0.5 * (lo + hi));
            return Some((hit, (hit - c).norm()));
        }
        prev = cur;
    }
    None
}

pub fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Outcome of comparing the analytic test against the sampler on random pairs.
pub struct HoopAgreement {
    pub pairs: usize,
    pub crossings: usize,
    pub near_rim_skipped: usize,
    pub disagreements: usize,
}

pub fn hoop_agreement(pairs: usize, seed: u64) -> HoopAgreement {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = HoopAgreement { pairs, crossings: 0, near_rim_skipped: 0, disagreements: 0 };
    for _ in 0..pairs {
        let hoop = Hoop {
            center: [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(0.5..2.5)],
            normal: random_unit(&mut rng).into(),
            radius: rng.random_range(0.2..1.0),
            order: 0,
        };
        let c = Vec3::from(hoop.center);
        // bias endpoints toward the hoop so a good share actually cross
        let spread = rng.random_range(0.3..3.0);
        let p0 = c + random_unit(&mut rng) * rng.random_range(0.0..spread);
        let p1 = c + random_unit(&mut rng) * rng.random_range(0.0..spread);
        let fast = blimp_core::arena::segment_crosses_hoop(&p0, &p1, &hoop);
        let slow = hoop_sampler(&p0, &p1, &hoop, 10_000);
        let near_rim = matches!(slow, Some((_, off)) if (off - hoop.radius).abs() <= 1e-6);
        if near_rim {
            out.near_rim_skipped += 1;
            continue;
        }
        let slow_hit = slow.filter(|&(_, off)| off < hoop.radius).map(|(p, _)| p);
        match (fast, slow_hit) {
            (Some(a), Some(b)) => {
                out.crossings += 1;
                if (a - b).norm() > 1e-6 {
                    out.disagreements += 1;
                }
            }
            (None, None) => {}
            _ => out.disagreements += 1,
        }
    }
    out
}

// ---------------------------------------------------------------- flocking

pub fn random_flock(n: usize, rng: &mut impl Rng) -> Vec<PeerSnapshot> {
    (0..n)
        .map(|i| PeerSnapshot {
            drone_id: (i + 1) as u8,
            position: Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.5..2.5)),
            velocity: Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.3..0.3)),
            stamped: 0.0,
            received: 0.0,
        })
        .collect()
}

/// Minimum distance between two flock-mode drones flying at each other.
pub fn head_on_min_distance(link: LinkModel, seconds: f64) -> f64 {
    let config = WorldConfig { drones: 2, link, seed: 11, ..Default::default() };
    let mut doc = Arena::sample().doc().clone();
    doc.spawns = vec![
        blimp_core::arena::Spawn { position: [-3.0, 0.0, 1.5], heading: 0.0 },
        blimp_core::arena::Spawn { position: [3.0, 0.0, 1.5], heading: std::f64::consts::PI },
    ];
    doc.obstacles.clear();
    let arena = blimp_core::arena::validate_arena(doc).unwrap();
    let mut world = blimp_core::World::new(config, arena).unwrap();
    world.drone_mut(1).unwrap().state.velocity = Vec3::new(1.0, 0.0, 0.0);
    world.drone_mut(2).unwrap().state.velocity = Vec3::new(-1.0, 0.0, 0.0);
    world.apply(&Input::FlockMode { drone: 1, enabled: true }).unwrap();
    world.apply(&Input::FlockMode { drone: 2, enabled: true }).unwrap();
    let steps = (seconds / world.config().physics.dt).round() as u64;
    let mut min = f64::INFINITY;
    for _ in 0..steps {
        world.step().unwrap();
        let a = world.drone(1).unwrap().state.position;
        let b = world.drone(2).unwrap().state.position;
        min = min.min((a - b).norm());
    }
    min
}

// ---------------------------------------------------------------- world

/// Fraction of PEER copies dropped across `sends` unicasts, plus the exact
/// drop pattern predicted by replaying the link stream by hand.
pub fn relay_loss(seed: u64, loss: f64, sends: usize) -> (f64, bool) {
    let config = WorldConfig {
        seed,
        drones: 2,
        link: LinkModel { latency_ms: 20, loss_prob: loss },
        ..Default::default()
    };
    let mut world = blimp_core::World::new(config, Arena::sample()).unwrap();
    let mut oracle = ChaCha8Rng::seed_from_u64(seed);
    oracle.set_stream(0);
    let mut dropped = 0usize;
    let mut exact = true;
    for _ in 0..sends {
        let delivered = world.relay_peer(1, None, &[0xAB]).unwrap();
        let predicted = if oracle.random::<f64>() < loss { 0 } else { 1 };
        exact &= delivered == predicted;
        dropped += 1 - delivered;
    }
    (dropped as f64 / sends as f64, exact)
}

pub struct Determinism {
    pub name: &'static str,
    pub live: StateHash,
    pub replayed: StateHash,
    pub text_round_trip: bool,
    pub elapsed: std::time::Duration,
    pub note: String,
}

impl Determinism {
    pub fn ok(&self) -> bool {
        self.live == self.replayed && self.text_round_trip
    }
}

fn finish(name: &'static str, run: RecordedRun, started: std::time::Instant, note: String) -> Determinism {
    let (world, log) = run.finish();
    let text = log.to_jsonl();
    let parsed = ReplayLog::parse(&text).expect("log parses");
    let outcome = replay(&parsed).expect("log replays");
    Determinism {
        name,
        live: StateHash(world.state_hash()),
        replayed: outcome.final_hash,
        text_round_trip: parsed == log,
        elapsed: started.elapsed(),
        note,
    }
}

pub fn idle_scenario() -> Determinism {
    let started = std::time::Instant::now();
    let mut run = RecordedRun::new(WorldConfig { seed: 42, ..Default::default() }, Arena::sample()).unwrap();
    run.run_until(1000).unwrap();
    finish("idle", run, started, "10 s, 3 drones".into())
}

/// Drone 1 flies the sample course; drone 3 noses into the pillar.
pub fn race_scenario() -> Determinism {
    let started = std::time::Instant::now();
    let config = WorldConfig { seed: 7, sensor: blimp_core::runtime::SensorParams { quantum: 0.01, noise_sd: 0.005 }, ..Default::default() };
    let mut run = RecordedRun::new(config, Arena::sample()).unwrap();
    let mut finished = None;
    let mut contacts = 0usize;
    let mut seq = 0u16;
    let mut cmd = |run: &mut RecordedRun, drone: u8, op: Opcode, ms: u32| {
        seq += 1;
        let cmd = if op == Opcode::Off { TimedCommand::off(seq) } else { TimedCommand::timed(op, ms, seq) };
        run.apply(Input::Command { drone, cmd }).unwrap();
    };
    run.apply(Input::RaceArm { drone: 1 }).unwrap();
    cmd(&mut run, 1, Opcode::Forward, 12_000);
    cmd(&mut run, 3, Opcode::Forward, 6_000);
    cmd(&mut run, 2, Opcode::TurnRight, 1_500);
    let mut on_step = |events: Vec<WorldEvent>| {
        for e in events {
            match e {
                WorldEvent::TrialFinished { start_t, finish_t, .. } => finished = Some(finish_t - start_t),
                WorldEvent::Contact { .. } => contacts += 1,
                _ => {}
            }
        }
    };
    for _ in 0..300 {
        on_step(run.step().unwrap());
    }
    cmd(&mut run, 2, Opcode::Up, 2_000);
    run.apply(Input::HeightQuery { drone: 2 }).unwrap();
    for _ in 0..500 {
        on_step(run.step().unwrap());
    }
    cmd(&mut run, 3, Opcode::Off, 0);
    cmd(&mut run, 2, Opcode::Forward, 4_000);
    for _ in 0..700 {
        on_step(run.step().unwrap());
    }
    let note = format!(
        "trial {}, {contacts} contact steps",
        finished.map_or("unfinished".to_string(), |t| format!("{t:.2} s"))
    );
    finish("scripted race", run, started, note)
}

/// Five drones in flock mode under the lossy preset.
pub fn flock_scenario() -> Determinism {
    let started = std::time::Instant::now();
    let config = WorldConfig { seed: 2024, drones: 5, link: LinkModel::lossy(), ..Default::default() };
    let mut run = RecordedRun::new(config, Arena::sample()).unwrap();
    for id in 1..=5 {
        run.apply(Input::FlockMode { drone: id, enabled: true }).unwrap();
    }
    run.run_until(500).unwrap();
    run.apply(Input::Command { drone: 4, cmd: TimedCommand::timed(Opcode::Forward, 1000, 1) }).unwrap();
    run.apply(Input::FlockMode { drone: 5, enabled: false }).unwrap();
    run.run_until(1500).unwrap();
    run.apply(Input::FlockMode { drone: 5, enabled: true }).unwrap();
    run.run_until(2000).unwrap();
    finish("5-drone flock", run, started, "20 s, lossy link".into())
}

pub fn frame_type_byte(t: FrameType) -> u8 {
    t.code()
}
