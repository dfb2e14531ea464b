//! External-agent behavior programs.
//!
//! Eleven kinds, one per quadrant. Each behavior owns its agents (one, or a
//! chaser/runner or actor/imitator pair), its quadrant zone, and one random
//! stream per agent. Movement uses land-exact stepping (never overshoot a
//! target) and every position update is confined to the quadrant zone.
//!
//! Gaze contingency (peekaboo) receives the previous step's visibility so
//! that agent motion never depends on the gaze rotation made in the same
//! tick.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{dist, origin_segment_distance, step_toward, Zone};
use super::rng::{normal, stream, tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorKind {
    Static,
    Periodic,
    Noise,
    ReachDet,
    ReachStoch,
    ChaseDet,
    ChaseStoch,
    PeekabooDet,
    PeekabooStoch,
    MimicDet,
    MimicStoch,
}

impl BehaviorKind {
    pub fn n_agents(self) -> usize {
        match self {
            BehaviorKind::ChaseDet
            | BehaviorKind::ChaseStoch
            | BehaviorKind::MimicDet
            | BehaviorKind::MimicStoch => 2,
            _ => 1,
        }
    }

    /// Animate kinds are the contingent/goal-directed programs eligible for
    /// the animate quadrant; static/periodic/noise are the inanimate fillers.
    pub fn is_animate(self) -> bool {
        !matches!(self, BehaviorKind::Static | BehaviorKind::Periodic | BehaviorKind::Noise)
    }

    pub fn label(self) -> &'static str {
        match self {
            BehaviorKind::Static => "static",
            BehaviorKind::Periodic => "periodic",
            BehaviorKind::Noise => "noise",
            BehaviorKind::ReachDet => "reach_det",
            BehaviorKind::ReachStoch => "reach_stoch",
            BehaviorKind::ChaseDet => "chase_det",
            BehaviorKind::ChaseStoch => "chase_stoch",
            BehaviorKind::PeekabooDet => "peekaboo_det",
            BehaviorKind::PeekabooStoch => "peekaboo_stoch",
            BehaviorKind::MimicDet => "mimic_det",
            BehaviorKind::MimicStoch => "mimic_stoch",
        }
    }
}

/// Motion constants for every kind. Values are per-step lengths in room
/// units unless noted.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorParams {
    pub periodic_speed: f64,
    pub noise_step: f64,
    pub reach_speed: f64,
    pub reach_arrival_radius: f64,
    /// Auxiliary objects relocate every this many env steps (reaching worlds).
    pub reach_relocate_every: u64,
    pub chaser_speed: f64,
    pub runner_speed: f64,
    /// Runner flees to an escape point when closer than this to the zone edge.
    pub bound_proximity: f64,
    pub peekaboo_speed: f64,
    /// Consecutive visible steps that count as being stared at.
    pub stare_steps: u64,
    /// Further visible steps while hidden before peeking out.
    pub peek_after: u64,
    /// Imitator lag in steps.
    pub mimic_delay: usize,
    /// Per-coordinate Gaussian noise of the stochastic imitator.
    pub mimic_sigma: f64,
}

impl Default for BehaviorParams {
    fn default() -> BehaviorParams {
        BehaviorParams {
            periodic_speed: 0.20,
            noise_step: 0.25,
            reach_speed: 0.20,
            reach_arrival_radius: 0.3,
            reach_relocate_every: 500,
            chaser_speed: 0.22,
            runner_speed: 0.25,
            bound_proximity: 0.5,
            peekaboo_speed: 0.25,
            stare_steps: 5,
            peek_after: 40,
            mimic_delay: 10,
            mimic_sigma: 0.05,
        }
    }
}

/// Behavior-internal discrete mode, exposed in trajectory logs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Phase {
    Fixed,
    Shuttle { target: usize },
    Wander,
    Reach { target: usize },
    Pursue,
    Flee,
    Escape { target: [f64; 2] },
    Exposed { stare: u64 },
    ToHide,
    Hidden { watched: u64 },
    ToPeek { target: [f64; 2] },
    Return,
    Mirror,
}

impl Phase {
    /// Compact log label; parameters that matter for replay debugging are
    /// embedded, coordinates are not (positions are logged separately).
    pub fn label(&self) -> String {
        match self {
            Phase::Fixed => "fixed".into(),
            Phase::Shuttle { target } => format!("shuttle:{target}"),
            Phase::Wander => "wander".into(),
            Phase::Reach { target } => format!("reach:{target}"),
            Phase::Pursue => "pursue".into(),
            Phase::Flee => "flee".into(),
            Phase::Escape { .. } => "escape".into(),
            Phase::Exposed { stare } => format!("exposed:{stare}"),
            Phase::ToHide => "to_hide".into(),
            Phase::Hidden { watched } => format!("hidden:{watched}"),
            Phase::ToPeek { .. } => "to_peek".into(),
            Phase::Return => "return".into(),
            Phase::Mirror => "mirror".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AgentState {
    pub pos: [f64; 2],
    pub phase: Phase,
}

/// Per-step context a behavior reads: auxiliary objects, whether each of its
/// agents was visible at the end of the previous step, and the env step
/// counter.
pub struct StepCtx<'a> {
    pub aux: &'a [[f64; 2]; 3],
    pub watched: &'a [bool],
}

#[derive(Clone)]
pub struct Behavior {
    pub kind: BehaviorKind,
    pub quadrant: u8,
    pub zone: Zone,
    params: BehaviorParams,
    agents: Vec<AgentState>,
    rngs: Vec<ChaCha8Rng>,
    endpoints: [[f64; 2]; 2],
    escape_points: Vec<[f64; 2]>,
    exposed_loc: [f64; 2],
    hide_loc: [f64; 2],
    peek_loc: [f64; 2],
    actor_zone: Zone,
    imit_zone: Zone,
    history: VecDeque<[f64; 2]>,
}

/// Reflection across the line through the origin at `diag_deg`.
fn reflect_across(diag_deg: f64, p: [f64; 2]) -> [f64; 2] {
    let t = (2.0 * diag_deg).to_radians();
    [t.cos() * p[0] + t.sin() * p[1], t.sin() * p[0] - t.cos() * p[1]]
}

/// Fixed-length step in a uniformly random direction that stays inside
/// `zone`. Directions are redrawn while the step would exit; the clamp
/// fallback is unreachable in practice (the zone is everywhere wider than a
/// step) but keeps the function total.
fn noise_move(pos: [f64; 2], zone: &Zone, step_len: f64, rng: &mut ChaCha8Rng) -> [f64; 2] {
    let mut cand = pos;
    for _ in 0..128 {
        let th = rng.gen_range(0.0..std::f64::consts::TAU);
        cand = [pos[0] + step_len * th.cos(), pos[1] + step_len * th.sin()];
        if zone.contains(cand, 0.0) {
            return cand;
        }
    }
    zone.clamp(cand)
}

/// Repeated sampling until `accept` holds, falling back to the last draw.
fn sample_where(
    zone: &Zone,
    rng: &mut ChaCha8Rng,
    tries: usize,
    accept: impl Fn([f64; 2]) -> bool,
) -> [f64; 2] {
    let mut p = zone.sample(rng);
    for _ in 0..tries {
        if accept(p) {
            return p;
        }
        p = zone.sample(rng);
    }
    p
}

impl Behavior {
    /// Builds the behavior for one quadrant. Placement draws come from the
    /// per-agent streams `(seed, AGENT, quadrant, agent_index)` so behaviors
    /// never share randomness. `aux` must already be placed: peekaboo hides
    /// behind `aux[0]` and the reachers walk between all three.
    pub fn init(
        kind: BehaviorKind,
        quadrant: u8,
        zone: Zone,
        params: BehaviorParams,
        seed: u64,
        aux: &[[f64; 2]; 3],
    ) -> Behavior {
        let mut rngs: Vec<ChaCha8Rng> = (0..kind.n_agents())
            .map(|i| stream(seed, &[tag::AGENT, quadrant as u64, i as u64]))
            .collect();
        let ha = zone.half_angle_deg;
        let mut b = Behavior {
            kind,
            quadrant,
            zone,
            params,
            agents: Vec::new(),
            rngs: Vec::new(),
            endpoints: [[0.0; 2]; 2],
            escape_points: Vec::new(),
            exposed_loc: [0.0; 2],
            hide_loc: [0.0; 2],
            peek_loc: [0.0; 2],
            actor_zone: zone.sub_sector(-ha, 0.0),
            imit_zone: zone.sub_sector(0.0, ha),
            history: VecDeque::new(),
        };
        match kind {
            BehaviorKind::Static => {
                let pos = zone.sample(&mut rngs[0]);
                b.agents.push(AgentState { pos, phase: Phase::Fixed });
            }
            BehaviorKind::Periodic => {
                // The shuttle path must clear the inner arc so straight-line
                // travel never leaves the zone.
                let a = zone.sample(&mut rngs[0]);
                let c = sample_where(&zone, &mut rngs[0], 64, |p| {
                    dist(p, a) >= 1.0 && origin_segment_distance(a, p) >= zone.r_min
                });
                b.endpoints = [a, c];
                b.agents.push(AgentState { pos: a, phase: Phase::Shuttle { target: 1 } });
            }
            BehaviorKind::Noise => {
                let pos = zone.sample(&mut rngs[0]);
                b.agents.push(AgentState { pos, phase: Phase::Wander });
            }
            BehaviorKind::ReachDet | BehaviorKind::ReachStoch => {
                let pos = zone.sample(&mut rngs[0]);
                b.agents.push(AgentState { pos, phase: Phase::Reach { target: 0 } });
            }
            BehaviorKind::ChaseDet | BehaviorKind::ChaseStoch => {
                let chaser = zone.sample(&mut rngs[0]);
                let runner = sample_where(&zone, &mut rngs[1], 32, |p| dist(p, chaser) >= 1.0);
                if kind == BehaviorKind::ChaseDet {
                    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(3);
                    for _ in 0..3 {
                        let have = pts.clone();
                        pts.push(sample_where(&zone, &mut rngs[1], 32, |p| {
                            have.iter().all(|q| dist(p, *q) >= 1.0)
                        }));
                    }
                    b.escape_points = pts;
                }
                b.agents.push(AgentState { pos: chaser, phase: Phase::Pursue });
                b.agents.push(AgentState { pos: runner, phase: Phase::Flee });
            }
            BehaviorKind::PeekabooDet | BehaviorKind::PeekabooStoch => {
                let obj = aux[0];
                b.exposed_loc = sample_where(&zone, &mut rngs[0], 32, |p| dist(p, obj) >= 1.5);
                let r = (obj[0] * obj[0] + obj[1] * obj[1]).sqrt();
                let u = [obj[0] / r, obj[1] / r];
                b.hide_loc = zone.clamp([obj[0] + 0.6 * u[0], obj[1] + 0.6 * u[1]]);
                let perp = [-u[1], u[0]];
                b.peek_loc = zone.clamp([obj[0] + 0.8 * perp[0], obj[1] + 0.8 * perp[1]]);
                b.agents.push(AgentState { pos: b.exposed_loc, phase: Phase::Exposed { stare: 0 } });
            }
            BehaviorKind::MimicDet | BehaviorKind::MimicStoch => {
                let actor = b.actor_zone.sample(&mut rngs[0]);
                let imit = reflect_across(zone.diag_deg, actor);
                b.history = std::iter::repeat(actor).take(params.mimic_delay).collect();
                b.agents.push(AgentState { pos: actor, phase: Phase::Wander });
                b.agents.push(AgentState { pos: imit, phase: Phase::Mirror });
            }
        }
        b.rngs = rngs;
        b
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    /// Advances one tick. `ctx.watched` must hold one flag per agent.
    pub fn step(&mut self, ctx: &StepCtx) {
        assert_eq!(ctx.watched.len(), self.agents.len(), "watched flags per agent");
        match self.kind {
            BehaviorKind::Static => {}
            BehaviorKind::Periodic => self.step_periodic(),
            BehaviorKind::Noise => {
                let p = noise_move(self.agents[0].pos, &self.zone, self.params.noise_step, &mut self.rngs[0]);
                self.agents[0].pos = p;
            }
            BehaviorKind::ReachDet | BehaviorKind::ReachStoch => self.step_reach(ctx),
            BehaviorKind::ChaseDet | BehaviorKind::ChaseStoch => self.step_chase(),
            BehaviorKind::PeekabooDet | BehaviorKind::PeekabooStoch => self.step_peekaboo(ctx.watched[0]),
            BehaviorKind::MimicDet | BehaviorKind::MimicStoch => self.step_mimic(),
        }
    }

    fn step_periodic(&mut self) {
        let Phase::Shuttle { target } = self.agents[0].phase else { unreachable!() };
        let goal = self.endpoints[target];
        let np = self
            .zone
            .clamp(step_toward(self.agents[0].pos, goal, self.params.periodic_speed));
        self.agents[0].pos = np;
        if np == goal {
            self.agents[0].phase = Phase::Shuttle { target: 1 - target };
        }
    }

    fn step_reach(&mut self, ctx: &StepCtx) {
        let Phase::Reach { mut target } = self.agents[0].phase else { unreachable!() };
        if dist(self.agents[0].pos, ctx.aux[target]) <= self.params.reach_arrival_radius {
            target = match self.kind {
                BehaviorKind::ReachDet => (target + 1) % 3,
                _ => self.rngs[0].gen_range(0..3),
            };
            self.agents[0].phase = Phase::Reach { target };
        }
        let np = step_toward(self.agents[0].pos, ctx.aux[target], self.params.reach_speed);
        self.agents[0].pos = self.zone.clamp(np);
    }

    fn step_chase(&mut self) {
        let chaser = self.agents[0].pos;
        let runner = self.agents[1].pos;

        // Both read start-of-tick positions: simultaneous update.
        let new_chaser = self
            .zone
            .clamp(step_toward(chaser, runner, self.params.chaser_speed));

        match self.agents[1].phase {
            Phase::Escape { target } => {
                let np = self
                    .zone
                    .clamp(step_toward(runner, target, self.params.runner_speed));
                self.agents[1].pos = np;
                if np == target {
                    self.agents[1].phase = Phase::Flee;
                }
            }
            _ => {
                let d = dist(runner, chaser);
                let dir = if d > 1e-12 {
                    [(runner[0] - chaser[0]) / d, (runner[1] - chaser[1]) / d]
                } else {
                    let th: f64 = self.rngs[1].gen_range(0.0..std::f64::consts::TAU);
                    [th.cos(), th.sin()]
                };
                let np = self.zone.clamp([
                    runner[0] + self.params.runner_speed * dir[0],
                    runner[1] + self.params.runner_speed * dir[1],
                ]);
                self.agents[1].pos = np;
                if self.zone.boundary_distance(np) < self.params.bound_proximity {
                    let target = self.pick_escape(np, chaser);
                    self.agents[1].phase = Phase::Escape { target };
                }
            }
        }
        self.agents[0].pos = new_chaser;
    }

    fn pick_escape(&mut self, runner: [f64; 2], chaser: [f64; 2]) -> [f64; 2] {
        if self.kind == BehaviorKind::ChaseDet {
            let mut best = self.escape_points[0];
            let mut best_d = -1.0;
            for &p in &self.escape_points {
                let d = dist(p, chaser);
                if d > best_d + 1e-12 {
                    best = p;
                    best_d = d;
                }
            }
            best
        } else {
            let here = dist(runner, chaser);
            let mut far = self.zone.sample(&mut self.rngs[1]);
            for _ in 0..16 {
                if dist(far, chaser) > here {
                    break;
                }
                far = self.zone.sample(&mut self.rngs[1]);
            }
            far
        }
    }

    fn step_peekaboo(&mut self, watched: bool) {
        let speed = self.params.peekaboo_speed;
        let agent = &mut self.agents[0];
        match agent.phase {
            Phase::Exposed { stare } => {
                let stare = if watched { stare + 1 } else { 0 };
                agent.phase = if stare >= self.params.stare_steps {
                    Phase::ToHide
                } else {
                    Phase::Exposed { stare }
                };
            }
            Phase::ToHide => {
                if !watched {
                    agent.phase = Phase::Return;
                } else {
                    agent.pos = self.zone.clamp(step_toward(agent.pos, self.hide_loc, speed));
                    if agent.pos == self.hide_loc {
                        agent.phase = Phase::Hidden { watched: 0 };
                    }
                }
            }
            Phase::Hidden { watched: w } => {
                if !watched {
                    agent.phase = Phase::Return;
                } else if w + 1 >= self.params.peek_after {
                    let target = match self.kind {
                        BehaviorKind::PeekabooDet => self.peek_loc,
                        _ => {
                            let th: f64 = self.rngs[0].gen_range(0.0..std::f64::consts::TAU);
                            self.zone.clamp([
                                // Peek spots scatter around the hiding object.
                                self.hide_loc[0] + 0.8 * th.cos(),
                                self.hide_loc[1] + 0.8 * th.sin(),
                            ])
                        }
                    };
                    agent.phase = Phase::ToPeek { target };
                } else {
                    agent.phase = Phase::Hidden { watched: w + 1 };
                }
            }
            Phase::ToPeek { target } => {
                if !watched {
                    agent.phase = Phase::Return;
                } else {
                    agent.pos = self.zone.clamp(step_toward(agent.pos, target, speed));
                    if agent.pos == target {
                        agent.phase = Phase::ToHide;
                    }
                }
            }
            Phase::Return => {
                agent.pos = self.zone.clamp(step_toward(agent.pos, self.exposed_loc, speed));
                if agent.pos == self.exposed_loc {
                    agent.phase = Phase::Exposed { stare: 0 };
                }
            }
            _ => unreachable!("peekaboo phase"),
        }
    }

    fn step_mimic(&mut self) {
        let actor = noise_move(
            self.agents[0].pos,
            &self.actor_zone,
            self.params.noise_step,
            &mut self.rngs[0],
        );
        self.agents[0].pos = actor;
        self.history.push_back(actor);
        let delayed = self.history.pop_front().expect("delay buffer prefilled");
        let mirrored = reflect_across(self.zone.diag_deg, delayed);
        self.agents[1].pos = match self.kind {
            BehaviorKind::MimicDet => mirrored,
            _ => {
                let s = self.params.mimic_sigma;
                self.imit_zone.clamp([
                    mirrored[0] + s * normal(&mut self.rngs[1]),
                    mirrored[1] + s * normal(&mut self.rngs[1]),
                ])
            }
        };
    }

    /// Relocation target positions must be inside this behavior's zone; used
    /// by reaching worlds when auxiliary objects jump.
    pub fn sample_aux_positions(zone: &Zone, rng: &mut ChaCha8Rng) -> [[f64; 2]; 3] {
        let a = zone.sample(rng);
        let b = sample_where(zone, rng, 32, |p| dist(p, a) >= 1.0);
        let c = sample_where(zone, rng, 32, |p| dist(p, a) >= 1.0 && dist(p, b) >= 1.0);
        [a, b, c]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zone(q: u8) -> Zone {
        Zone::for_quadrant(q, 15.0, [4.0, 9.0])
    }

    fn aux_for(z: &Zone, seed: u64) -> [[f64; 2]; 3] {
        let mut rng = stream(seed, &[tag::AUX]);
        Behavior::sample_aux_positions(z, &mut rng)
    }

    fn mk(kind: BehaviorKind, q: u8, seed: u64) -> (Behavior, [[f64; 2]; 3]) {
        let z = zone(q);
        let aux = aux_for(&z, seed);
        (Behavior::init(kind, q, z, BehaviorParams::default(), seed, &aux), aux)
    }

    #[test]
    fn static_agent_never_moves() {
        let (mut b, aux) = mk(BehaviorKind::Static, 1, 3);
        let start = b.agents()[0].pos;
        for _ in 0..200 {
            b.step(&StepCtx { aux: &aux, watched: &[false] });
            assert_eq!(b.agents()[0].pos, start);
        }
    }

    #[test]
    fn periodic_round_trip_returns_to_start() {
        let (mut b, aux) = mk(BehaviorKind::Periodic, 2, 11);
        let a = b.endpoints[0];
        let c = b.endpoints[1];
        let steps_one_way = (dist(a, c) / b.params.periodic_speed).ceil() as usize;
        for _ in 0..2 * steps_one_way {
            b.step(&StepCtx { aux: &aux, watched: &[false] });
        }
        assert!(dist(b.agents()[0].pos, a) <= b.params.periodic_speed + 1e-12);
    }

    #[test]
    fn noise_steps_have_fixed_length_and_stay_zoned() {
        let (mut b, aux) = mk(BehaviorKind::Noise, 3, 7);
        let mut prev = b.agents()[0].pos;
        for _ in 0..100_000 {
            b.step(&StepCtx { aux: &aux, watched: &[false] });
            let p = b.agents()[0].pos;
            assert!(b.zone.contains(p, 1e-9));
            assert!((dist(prev, p) - 0.25).abs() < 1e-9);
            prev = p;
        }
    }

    #[test]
    fn reacher_visits_all_objects_in_order() {
        let (mut b, aux) = mk(BehaviorKind::ReachDet, 4, 5);
        let mut visited = Vec::new();
        for _ in 0..2000 {
            b.step(&StepCtx { aux: &aux, watched: &[false] });
            let Phase::Reach { target } = b.agents()[0].phase else { panic!() };
            if visited.last() != Some(&target) {
                visited.push(target);
            }
        }
        assert!(visited.len() >= 4, "reacher should cycle targets, saw {visited:?}");
        for w in visited.windows(2) {
            assert_eq!(w[1], (w[0] + 1) % 3, "deterministic reacher must advance cyclically");
        }
    }

    #[test]
    fn chase_pair_stays_zoned_and_separates_phases() {
        for kind in [BehaviorKind::ChaseDet, BehaviorKind::ChaseStoch] {
            let (mut b, aux) = mk(kind, 1, 13);
            let mut escaped = false;
            for _ in 0..5000 {
                b.step(&StepCtx { aux: &aux, watched: &[false, false] });
                for a in b.agents() {
                    assert!(b.zone.contains(a.pos, 1e-9), "{kind:?} left the zone");
                }
                if matches!(b.agents()[1].phase, Phase::Escape { .. }) {
                    escaped = true;
                }
            }
            assert!(escaped, "{kind:?} runner never used an escape route");
        }
    }

    #[test]
    fn mimic_det_mirror_identity_holds_exactly() {
        let (mut b, aux) = mk(BehaviorKind::MimicDet, 2, 17);
        let d = b.params.mimic_delay;
        let mut actor_track = vec![b.agents()[0].pos];
        for t in 1..400 {
            b.step(&StepCtx { aux: &aux, watched: &[false, false] });
            actor_track.push(b.agents()[0].pos);
            if t >= d {
                let want = reflect_across(b.zone.diag_deg, actor_track[t - d]);
                assert_eq!(b.agents()[1].pos, want, "mirror identity broke at t={t}");
            }
        }
    }

    #[test]
    fn mimic_stoch_tracks_mirror_with_noise() {
        let (mut b, aux) = mk(BehaviorKind::MimicStoch, 2, 19);
        let d = b.params.mimic_delay;
        let mut actor_track = vec![b.agents()[0].pos];
        let mut total = 0.0;
        let n = 500;
        for t in 1..=n {
            b.step(&StepCtx { aux: &aux, watched: &[false, false] });
            actor_track.push(b.agents()[0].pos);
            if t >= d {
                let want = reflect_across(b.zone.diag_deg, actor_track[t - d]);
                total += dist(b.agents()[1].pos, want);
            }
        }
        let mean = total / (n - d + 1) as f64;
        // E‖(σZ₁, σZ₂)‖ = σ·√(π/2) ≈ 0.0627 for σ = 0.05; clamping can only
        // shrink it. A loose band distinguishes "noisy mirror" from both
        // "exact mirror" and "unrelated walk".
        assert!(mean > 0.01 && mean < 0.2, "mean mirror deviation {mean}");
    }

    #[test]
    fn peekaboo_hides_when_stared_at_and_returns_on_lookaway() {
        let (mut b, aux) = mk(BehaviorKind::PeekabooDet, 4, 23);
        // Stare continuously: must pass Exposed → ToHide → Hidden.
        let mut seen_tohide = false;
        let mut seen_hidden = false;
        for _ in 0..200 {
            b.step(&StepCtx { aux: &aux, watched: &[true] });
            match b.agents()[0].phase {
                Phase::ToHide => seen_tohide = true,
                Phase::Hidden { .. } => seen_hidden = true,
                _ => {}
            }
            if seen_hidden {
                break;
            }
        }
        assert!(seen_tohide && seen_hidden, "stare did not drive the hide transition");

        // Keep staring: it must eventually peek.
        let mut seen_peek = false;
        for _ in 0..200 {
            b.step(&StepCtx { aux: &aux, watched: &[true] });
            if matches!(b.agents()[0].phase, Phase::ToPeek { .. }) {
                seen_peek = true;
                break;
            }
        }
        assert!(seen_peek, "stare did not drive the peek transition");

        // Look away: it returns to the exposed location and resets.
        let mut returned = 0;
        for _ in 0..200 {
            b.step(&StepCtx { aux: &aux, watched: &[false] });
            if matches!(b.agents()[0].phase, Phase::Exposed { .. }) {
                returned += 1;
            }
        }
        assert!(returned > 0, "look-away did not restore the exposed phase");
        assert_eq!(b.agents()[0].pos, b.exposed_loc);
    }

    #[test]
    fn all_kinds_respect_zone_and_speed_bounds() {
        let kinds = [
            BehaviorKind::Static,
            BehaviorKind::Periodic,
            BehaviorKind::Noise,
            BehaviorKind::ReachDet,
            BehaviorKind::ReachStoch,
            BehaviorKind::ChaseDet,
            BehaviorKind::ChaseStoch,
            BehaviorKind::PeekabooDet,
            BehaviorKind::PeekabooStoch,
            BehaviorKind::MimicDet,
            BehaviorKind::MimicStoch,
        ];
        for (i, kind) in kinds.into_iter().enumerate() {
            let q = (i % 4 + 1) as u8;
            let (mut b, aux) = mk(kind, q, 100 + i as u64);
            let watched = vec![i % 2 == 0; kind.n_agents()];
            let mut prev: Vec<[f64; 2]> = b.agents().iter().map(|a| a.pos).collect();
            // The imitator replays the actor's step sizes, plus its own
            // clamped Gaussian jitter when stochastic.
            let speed_cap = 0.25 + if kind == BehaviorKind::MimicStoch { 0.5 } else { 0.0 };
            for _ in 0..3000 {
                b.step(&StepCtx { aux: &aux, watched: &watched });
                for (j, a) in b.agents().iter().enumerate() {
                    assert!(b.zone.contains(a.pos, 1e-9), "{kind:?} agent {j} left the zone");
                    let moved = dist(prev[j], a.pos);
                    assert!(moved <= speed_cap + 1e-9, "{kind:?} agent {j} moved {moved}");
                    prev[j] = a.pos;
                }
            }
        }
    }
}
