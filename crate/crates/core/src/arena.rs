//! Arena geometry, hoop traversal, contact handling, and time-trial scoring.

use std::collections::BTreeSet;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use std::hash::Hasher;

use crate::dynamics::{DroneState, Vec3};

/// Radius of the sphere standing in for the balloon in contact checks.
pub const DRONE_RADIUS: f64 = 0.15;

/// Crossings this close to the rim count as misses.
pub const RIM_TOLERANCE: f64 = 1e-9;

/// Penetrations shallower than this are not reported, so a resolved contact
/// does not re-trigger on rounding.
const CONTACT_SLOP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    fn closest_point(&self, p: &Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(self.min[0], self.max[0]),
            p.y.clamp(self.min[1], self.max[1]),
            p.z.clamp(self.min[2], self.max[2]),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hoop {
    pub center: [f64; 3],
    pub normal: [f64; 3],
    pub radius: f64,
    pub order: usize,
}

impl Hoop {
    pub fn center(&self) -> Vec3 {
        Vec3::from(self.center)
    }

    pub fn normal(&self) -> Vec3 {
        Vec3::from(self.normal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spawn {
    pub position: [f64; 3],
    #[serde(default)]
    pub heading: f64,
}

/// The arena file as written by hand. Validated into an [`Arena`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaDoc {
    #[serde(default)]
    pub name: String,
    pub bounds: Aabb,
    #[serde(default)]
    pub hoops: Vec<Hoop>,
    #[serde(default)]
    pub obstacles: Vec<Aabb>,
    #[serde(default)]
    pub spawns: Vec<Spawn>,
    /// When set, crossing hoop 0 starts the clock; otherwise arming does.
    #[serde(default = "default_true")]
    pub start_gate: bool,
}

fn default_true() -> bool {
    true
}

/// A validated arena. Hoops are sorted by course order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Arena {
    doc: ArenaDoc,
}

impl Arena {
    pub fn doc(&self) -> &ArenaDoc {
        &self.doc
    }

    pub fn bounds(&self) -> &Aabb {
        &self.doc.bounds
    }

    pub fn hoops(&self) -> &[Hoop] {
        &self.doc.hoops
    }

    pub fn obstacles(&self) -> &[Aabb] {
        &self.doc.obstacles
    }

    pub fn spawns(&self) -> &[Spawn] {
        &self.doc.spawns
    }

    pub fn start_gate(&self) -> bool {
        self.doc.start_gate
    }

    /// Spawn for the `index`-th drone, cycling the list and offsetting each
    /// lap by a metre in y. Falls back to a point above the bounds' center.
    pub fn spawn_for(&self, index: usize) -> Spawn {
        let b = &self.doc.bounds;
        if self.doc.spawns.is_empty() {
            let mid = |i: usize| 0.5 * (b.min[i] + b.max[i]);
            return Spawn { position: [mid(0) + index as f64, mid(1), mid(2)], heading: 0.0 };
        }
        let base = self.doc.spawns[index % self.doc.spawns.len()];
        let lap = (index / self.doc.spawns.len()) as f64;
        let mut position = base.position;
        position[1] = (position[1] + lap).clamp(b.min[1], b.max[1]);
        Spawn { position, heading: base.heading }
    }

    /// FNV-1a over the canonical JSON of the document.
    pub fn content_hash(&self) -> u64 {
        let json = serde_json::to_vec(&self.doc).expect("arena serializes");
        let mut h = FnvHasher::default();
        h.write(&json);
        h.finish()
    }

    /// A rectangular 10×6×3 m hall with two hoops and one pillar.
    pub fn sample() -> Arena {
        validate_arena(ArenaDoc {
            name: "sample".into(),
            bounds: Aabb { min: [-5.0, -3.0, 0.0], max: [5.0, 3.0, 3.0] },
            hoops: vec![
                Hoop { center: [-1.0, 0.0, 1.5], normal: [1.0, 0.0, 0.0], radius: 0.4, order: 0 },
                Hoop { center: [3.0, 0.0, 1.5], normal: [1.0, 0.0, 0.0], radius: 0.4, order: 1 },
            ],
            obstacles: vec![Aabb { min: [0.5, 1.5, 0.0], max: [1.5, 2.5, 3.0] }],
            spawns: vec![
                Spawn { position: [-4.0, 0.0, 1.5], heading: 0.0 },
                Spawn { position: [-4.0, -1.5, 1.5], heading: 0.0 },
                Spawn { position: [-4.0, 1.5, 1.5], heading: 0.0 },
            ],
            start_gate: true,
        })
        .expect("sample arena is valid")
    }
}

/// Check every arena invariant, reporting each violation separately.
pub fn validate_arena(mut doc: ArenaDoc) -> Result<Arena, Vec<String>> {
    let mut errors = Vec::new();
    let finite = |v: &[f64]| v.iter().all(|c| c.is_finite());

    let b = doc.bounds;
    if !finite(&b.min) || !finite(&b.max) {
        errors.push("bounds: coordinates must be finite".to_string());
    } else if (0..3).any(|i| b.min[i] >= b.max[i]) {
        errors.push("bounds: min must be strictly below max on every axis".to_string());
    }

    let mut seen = BTreeSet::new();
    for (i, hoop) in doc.hoops.iter().enumerate() {
        if !finite(&hoop.center) || !finite(&hoop.normal) {
            errors.push(format!("hoops[{i}]: coordinates must be finite"));
            continue;
        }
        let norm = hoop.normal().norm();
        if (norm - 1.0).abs() > 1e-9 {
            errors.push(format!("hoops[{i}].normal: must be a unit vector (|n| = {norm})"));
        }
        if !(hoop.radius > 0.0) {
            errors.push(format!("hoops[{i}].radius: must be > 0 (got {})", hoop.radius));
        }
        if !seen.insert(hoop.order) {
            errors.push(format!("hoops[{i}].order: duplicate order index {}", hoop.order));
        }
    }
    if errors.iter().all(|e| !e.contains(".order")) {
        let n = doc.hoops.len();
        if let Some(gap) = (0..n).find(|k| !seen.contains(k)) {
            errors.push(format!("hoops: order indices must be dense from 0; missing {gap}"));
        }
    }

    for (i, ob) in doc.obstacles.iter().enumerate() {
        if !finite(&ob.min) || !finite(&ob.max) {
            errors.push(format!("obstacles[{i}]: coordinates must be finite"));
        } else if (0..3).any(|k| ob.min[k] > ob.max[k]) {
            errors.push(format!("obstacles[{i}]: min must not exceed max"));
        }
    }

    for (i, spawn) in doc.spawns.iter().enumerate() {
        let p = Vec3::from(spawn.position);
        if !finite(&spawn.position) || !spawn.heading.is_finite() {
            errors.push(format!("spawns[{i}]: values must be finite"));
        } else if !b.contains(&p) {
            errors.push(format!("spawns[{i}].position: {:?} lies outside bounds", spawn.position));
        }
    }

    if errors.is_empty() {
        doc.hoops.sort_by_key(|h| h.order);
        Ok(Arena { doc })
    } else {
        Err(errors)
    }
}

/// Parse and validate an arena JSON document.
pub fn parse_arena(json: &str) -> Result<Arena, Vec<String>> {
    let doc: ArenaDoc = serde_json::from_str(json).map_err(|e| vec![format!("arena: {e}")])?;
    validate_arena(doc)
}

/// Where the segment `p0 → p1` passes through the hoop's disc, if it does.
///
/// Endpoints exactly on the plane count as the positive side so a path that
/// touches the plane at a sample point is counted once. Grazes within
/// [`RIM_TOLERANCE`] of the rim are misses.
pub fn segment_crosses_hoop(p0: &Vec3, p1: &Vec3, hoop: &Hoop) -> Option<Vec3> {
    if p0 == p1 {
        return None;
    }
    let c = hoop.center();
    let n = hoop.normal();
    let d0 = n.dot(&(p0 - c));
    let d1 = n.dot(&(p1 - c));
    if (d0 < 0.0) == (d1 < 0.0) {
        return None;
    }
    let s = d0 / (d0 - d1);
    let hit = p0 + (p1 - p0) * s;
    let off_center = (hit - c).norm();
    (off_center < hoop.radius - RIM_TOLERANCE).then_some(hit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourseProgress {
    pub next_hoop: usize,
    pub start_t: Option<f64>,
    pub finish_t: Option<f64>,
    pub crossings: Vec<(usize, f64)>,
}

impl CourseProgress {
    /// Fresh progress for a trial armed at `armed_at`. Without a start gate the
    /// clock starts at arming.
    pub fn armed(arena: &Arena, armed_at: f64) -> Self {
        CourseProgress {
            next_hoop: 0,
            start_t: (!arena.start_gate()).then_some(armed_at),
            finish_t: None,
            crossings: Vec::new(),
        }
    }

    pub fn finished(&self) -> bool {
        self.finish_t.is_some()
    }

    pub fn trial_time(&self) -> Option<f64> {
        Some(self.finish_t? - self.start_t?)
    }
}

/// Advance progress if `segment` crosses the next hoop in order.
///
/// Returns the index of the hoop crossed, if progress advanced.
pub fn update_progress(
    progress: &mut CourseProgress,
    arena: &Arena,
    segment: (&Vec3, &Vec3),
    t: f64,
) -> Option<usize> {
    let hoops = arena.hoops();
    if progress.finished() || progress.next_hoop >= hoops.len() {
        return None;
    }
    if let Some(&(_, last_t)) = progress.crossings.last() {
        if t <= last_t {
            return None;
        }
    }
    let idx = progress.next_hoop;
    segment_crosses_hoop(segment.0, segment.1, &hoops[idx])?;
    progress.crossings.push((idx, t));
    if idx == 0 && progress.start_t.is_none() {
        progress.start_t = Some(t);
    }
    progress.next_hoop += 1;
    if progress.next_hoop == hoops.len() {
        progress.finish_t = Some(t);
    }
    Some(idx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum Surface {
    Floor,
    Ceiling,
    WallMinX,
    WallMaxX,
    WallMinY,
    WallMaxY,
    Obstacle(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub surface: Surface,
    /// Unit normal pointing back into free space.
    pub normal: [f64; 3],
    /// Where the sphere center must sit to just touch the surface, along `normal`.
    pub resolved: [f64; 3],
}

/// Sphere-proxy contacts against the bounds walls and obstacle boxes.
pub fn check_collision(state: &DroneState, arena: &Arena) -> Vec<Contact> {
    let p = state.position;
    let r = DRONE_RADIUS;
    let b = arena.bounds();
    let mut contacts = Vec::new();

    let walls = [
        (Surface::WallMinX, 0, b.min[0], 1.0),
        (Surface::WallMaxX, 0, b.max[0], -1.0),
        (Surface::WallMinY, 1, b.min[1], 1.0),
        (Surface::WallMaxY, 1, b.max[1], -1.0),
        (Surface::Floor, 2, b.min[2], 1.0),
        (Surface::Ceiling, 2, b.max[2], -1.0),
    ];
    for (surface, axis, plane, inward) in walls {
        // signed distance from the wall into the arena
        let dist = (p[axis] - plane) * inward;
        if dist < r - CONTACT_SLOP {
            let mut normal = [0.0; 3];
            normal[axis] = inward;
            let mut resolved: [f64; 3] = p.into();
            resolved[axis] = plane + inward * r;
            contacts.push(Contact { surface, normal, resolved });
        }
    }

    for (i, ob) in arena.obstacles().iter().enumerate() {
        let closest = ob.closest_point(&p);
        let delta = p - closest;
        let dist = delta.norm();
        if dist >= r - CONTACT_SLOP {
            continue;
        }
        let normal = if dist > 1e-12 {
            delta / dist
        } else {
            // center inside the box: leave through the shallowest face
            let mut best = (f64::INFINITY, Vec3::zeros());
            for axis in 0..3 {
                for (face, sign) in [(ob.min[axis], -1.0), (ob.max[axis], 1.0)] {
                    let depth = (p[axis] - face).abs();
                    if depth < best.0 {
                        let mut n = Vec3::zeros();
                        n[axis] = sign;
                        best = (depth, n);
                    }
                }
            }
            best.1
        };
        let surface_point = if dist > 1e-12 {
            closest
        } else {
            let axis = normal.iamax();
            let mut sp = p;
            sp[axis] = if normal[axis] > 0.0 { ob.max[axis] } else { ob.min[axis] };
            sp
        };
        let resolved = surface_point + normal * r;
        contacts.push(Contact {
            surface: Surface::Obstacle(i),
            normal: normal.into(),
            resolved: resolved.into(),
        });
    }
    contacts
}

/// Push the sphere out of every contact and cancel inward velocity.
///
/// Obstacles are resolved first and the bounds last, so the final position is
/// always inside the bounds shrunk by the proxy radius.
pub fn resolve_contacts(state: &mut DroneState, contacts: &[Contact], arena: &Arena) {
    let ordered = contacts
        .iter()
        .filter(|c| matches!(c.surface, Surface::Obstacle(_)))
        .chain(contacts.iter().filter(|c| !matches!(c.surface, Surface::Obstacle(_))));
    for contact in ordered {
        let n = Vec3::from(contact.normal);
        let target = Vec3::from(contact.resolved);
        let depth = (target - state.position).dot(&n);
        if depth > 0.0 {
            state.position += n * depth;
        }
        let vn = state.velocity.dot(&n);
        if vn < 0.0 {
            state.velocity -= n * vn;
        }
    }
    let b = arena.bounds();
    for axis in 0..3 {
        let lo = b.min[axis] + DRONE_RADIUS;
        let hi = b.max[axis] - DRONE_RADIUS;
        if lo <= hi {
            state.position[axis] = state.position[axis].clamp(lo, hi);
        } else {
            state.position[axis] = 0.5 * (b.min[axis] + b.max[axis]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_hoop() -> Hoop {
        Hoop { center: [0.0, 0.0, 1.5], normal: [1.0, 0.0, 0.0], radius: 0.4, order: 0 }
    }

    fn at(x: f64, y: f64, z: f64) -> DroneState {
        DroneState::at_rest(Vec3::new(x, y, z), 0.0)
    }

    #[test]
    fn worked_crossing() {
        let hit = segment_crosses_hoop(
            &Vec3::new(-0.1, 0.0, 1.5),
            &Vec3::new(0.1, 0.1, 1.4),
            &test_hoop(),
        )
        .expect("crossing");
        assert!((hit - Vec3::new(0.0, 0.05, 1.45)).norm() < 1e-12);
        assert!(((hit - test_hoop().center()).norm() - 0.0707).abs() < 1e-4);
    }

    #[test]
    fn misses() {
        let h = test_hoop();
        // parallel to the plane
        assert!(segment_crosses_hoop(&Vec3::new(0.1, -0.2, 1.5), &Vec3::new(0.1, 0.2, 1.5), &h).is_none());
        // outside the disc
        assert!(segment_crosses_hoop(&Vec3::new(-0.1, 0.6, 1.5), &Vec3::new(0.1, 0.6, 1.5), &h).is_none());
        // tangent to the rim
        assert!(segment_crosses_hoop(&Vec3::new(-0.1, 0.4, 1.5), &Vec3::new(0.1, 0.4, 1.5), &h).is_none());
        // degenerate
        let p = Vec3::new(0.0, 0.0, 1.5);
        assert!(segment_crosses_hoop(&p, &p, &h).is_none());
        // reverse direction still counts
        assert!(segment_crosses_hoop(&Vec3::new(0.1, 0.0, 1.5), &Vec3::new(-0.1, 0.0, 1.5), &h).is_some());
    }

    fn two_hoop_arena() -> Arena {
        Arena::sample()
    }

    fn through(x: f64) -> (Vec3, Vec3) {
        (Vec3::new(x - 0.05, 0.0, 1.5), Vec3::new(x + 0.05, 0.0, 1.5))
    }

    #[test]
    fn progress_ordering() {
        let arena = two_hoop_arena();
        let mut p = CourseProgress::armed(&arena, 0.0);
        let (a0, a1) = through(-1.0);
        let (b0, b1) = through(3.0);

        assert_eq!(update_progress(&mut p, &arena, (&b0, &b1), 1.0), None);
        assert_eq!(p, CourseProgress::armed(&arena, 0.0));

        assert_eq!(update_progress(&mut p, &arena, (&a0, &a1), 3.0), Some(0));
        assert_eq!(update_progress(&mut p, &arena, (&a0, &a1), 4.0), None);
        assert_eq!(update_progress(&mut p, &arena, (&b0, &b1), 9.0), Some(1));
        assert_eq!(p.trial_time(), Some(6.0));
        assert!(p.finished());
        assert_eq!(p.crossings, vec![(0, 3.0), (1, 9.0)]);
    }

    #[test]
    fn no_start_gate_clock_starts_at_arming() {
        let mut doc = two_hoop_arena().doc().clone();
        doc.start_gate = false;
        let arena = validate_arena(doc).unwrap();
        let mut p = CourseProgress::armed(&arena, 1.0);
        let (a0, a1) = through(-1.0);
        let (b0, b1) = through(3.0);
        update_progress(&mut p, &arena, (&a0, &a1), 3.0);
        update_progress(&mut p, &arena, (&b0, &b1), 9.0);
        assert_eq!(p.trial_time(), Some(8.0));
    }

    #[test]
    fn collision_examples() {
        let arena = Arena::sample();
        let contacts = check_collision(&at(0.0, 0.0, 3.1), &arena);
        assert_eq!(contacts.len(), 1);
        assert_eq!(contacts[0].surface, Surface::Ceiling);

        // obstacle face at x = 0.5; center 0.1 m in front of it
        let contacts = check_collision(&at(0.4, 2.0, 1.5), &arena);
        assert_eq!(contacts.len(), 1);
        assert_eq!(contacts[0].surface, Surface::Obstacle(0));
        assert_eq!(contacts[0].normal, [-1.0, 0.0, 0.0]);

        // 0.2 m from the nearest surfaces
        assert!(check_collision(&at(0.3, 1.3, 1.5), &arena).is_empty());
    }

    #[test]
    fn response_stays_in_bounds() {
        let arena = Arena::sample();
        let mut s = at(0.0, 0.0, 3.1);
        s.velocity = Vec3::new(0.2, 0.0, 0.5);
        let contacts = check_collision(&s, &arena);
        resolve_contacts(&mut s, &contacts, &arena);
        assert!((s.position.z - (3.0 - DRONE_RADIUS)).abs() < 1e-12);
        assert_eq!(s.velocity, Vec3::new(0.2, 0.0, 0.0));

        // buried in the pillar
        let mut s = at(1.0, 1.6, 1.5);
        let contacts = check_collision(&s, &arena);
        resolve_contacts(&mut s, &contacts, &arena);
        assert!(check_collision(&s, &arena).iter().all(|c| !matches!(c.surface, Surface::Obstacle(_))));
    }

    #[test]
    fn validation_errors() {
        assert!(validate_arena(Arena::sample().doc().clone()).is_ok());

        let mut doc = Arena::sample().doc().clone();
        doc.hoops[0].normal = [0.0, 0.0, 2.0];
        let errs = validate_arena(doc).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("unit vector")), "{errs:?}");

        let mut doc = Arena::sample().doc().clone();
        doc.hoops[1].order = 0;
        let errs = validate_arena(doc).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("duplicate order")), "{errs:?}");

        let mut doc = Arena::sample().doc().clone();
        doc.hoops[0].radius = 0.0;
        doc.spawns[0].position = [9.0, 0.0, 1.0];
        let errs = validate_arena(doc).unwrap_err();
        assert_eq!(errs.len(), 2, "{errs:?}");

        let mut doc = Arena::sample().doc().clone();
        doc.hoops[1].order = 5;
        let errs = validate_arena(doc).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("dense")), "{errs:?}");
    }

    #[test]
    fn hoops_sorted_by_order() {
        let mut doc = Arena::sample().doc().clone();
        doc.hoops.reverse();
        let arena = validate_arena(doc).unwrap();
        assert_eq!(arena.hoops()[0].order, 0);
    }
}
