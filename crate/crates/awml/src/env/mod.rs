//! Quadrant playroom with a gaze-only agent.
//!
//! The room is a square centered on the agent, which never translates and
//! only rotates its field of view through nine discrete gaze actions. Four
//! annular-sector zones sit on the quadrant diagonals, each home to one
//! behavior program. The zone geometry keeps the field of view narrower
//! than the angular gap between zones, so at most one behavior is ever
//! visible at a time.
//!
//! Observations use an oracle encoder: agents inside the field of view
//! report their true position with a visibility flag of one; agents outside
//! it report a caller-supplied estimate with a flag of zero. Three
//! auxiliary objects (reaching targets, one doubling as the peekaboo
//! hiding spot) and the gaze direction complete the observation.
//!
//! Randomness is split into named streams keyed off two seeds: the world
//! seed fixes which behavior lives in which quadrant, while the instance
//! seed drives placements and runtime noise. A validation fork keeps the
//! world seed (same layout, same model components apply) but re-rolls the
//! instance seed.

pub mod behavior;
pub mod geometry;
pub mod rng;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use behavior::{Behavior, BehaviorKind, BehaviorParams, StepCtx};
use geometry::{rotate_deg, visible, Zone};
use rng::{stream, tag};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("invalid environment config: {0}")]
    Config(String),
}

/// Room and gaze geometry. Defaults give a 50 degree field of view against
/// a 60 degree gap between zones.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomConfig {
    pub half_extent: f64,
    pub fov_deg: f64,
    pub zone_half_angle_deg: f64,
    pub zone_radii: [f64; 2],
}

impl Default for RoomConfig {
    fn default() -> RoomConfig {
        RoomConfig {
            half_extent: 10.0,
            fov_deg: 50.0,
            zone_half_angle_deg: 15.0,
            zone_radii: [4.0, 9.0],
        }
    }
}

impl RoomConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(EnvError::Config(format!("fov_deg {} out of (0, 180)", self.fov_deg)));
        }
        if !(self.zone_half_angle_deg > 0.0 && self.zone_half_angle_deg < 45.0) {
            return Err(EnvError::Config(format!(
                "zone_half_angle_deg {} out of (0, 45)",
                self.zone_half_angle_deg
            )));
        }
        let [r_min, r_max] = self.zone_radii;
        if !(r_min > 0.0 && r_min < r_max && r_max <= self.half_extent) {
            return Err(EnvError::Config(format!(
                "zone_radii [{r_min}, {r_max}] must satisfy 0 < r_min < r_max <= half_extent {}",
                self.half_extent
            )));
        }
        let gap = 90.0 - 2.0 * self.zone_half_angle_deg;
        if self.fov_deg >= gap {
            return Err(EnvError::Config(format!(
                "fov_deg {} must stay below the {gap} degree gap between zones \
                 so only one behavior fits in view",
                self.fov_deg
            )));
        }
        Ok(())
    }

    pub fn zone(&self, quadrant: u8) -> Zone {
        Zone::for_quadrant(quadrant, self.zone_half_angle_deg, self.zone_radii)
    }
}

pub const N_ACTIONS: usize = 9;

/// Gaze actions: stay, or rotate by one of four magnitudes in either
/// direction. Left is counterclockwise (positive degrees).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Stay,
    Left12,
    Left24,
    Left48,
    Left96,
    Right12,
    Right24,
    Right48,
    Right96,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [
        Action::Stay,
        Action::Left12,
        Action::Left24,
        Action::Left48,
        Action::Left96,
        Action::Right12,
        Action::Right24,
        Action::Right48,
        Action::Right96,
    ];

    pub fn index(self) -> usize {
        Action::ALL.iter().position(|a| *a == self).unwrap()
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }

    pub fn delta_deg(self) -> f64 {
        match self {
            Action::Stay => 0.0,
            Action::Left12 => 12.0,
            Action::Left24 => 24.0,
            Action::Left48 => 48.0,
            Action::Left96 => 96.0,
            Action::Right12 => -12.0,
            Action::Right24 => -24.0,
            Action::Right48 => -48.0,
            Action::Right96 => -96.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldKind {
    /// One each of static, periodic, noise, plus the animate behavior.
    Mixture,
    /// Three independent noise behaviors plus the animate behavior.
    Noise,
}

impl WorldKind {
    pub fn label(self) -> &'static str {
        match self {
            WorldKind::Mixture => "mixture",
            WorldKind::Noise => "noise_world",
        }
    }
}

/// Which world to build and with what layout seed.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub kind: WorldKind,
    pub animate: BehaviorKind,
    pub seed: u64,
}

impl WorldSpec {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !self.animate.is_animate() {
            return Err(EnvError::Config(format!(
                "animate behavior must be contingent, got {}",
                self.animate.label()
            )));
        }
        Ok(())
    }

    fn quadrant_kinds(&self) -> [BehaviorKind; 4] {
        match self.kind {
            WorldKind::Mixture => [
                BehaviorKind::Static,
                BehaviorKind::Periodic,
                BehaviorKind::Noise,
                self.animate,
            ],
            WorldKind::Noise => [
                BehaviorKind::Noise,
                BehaviorKind::Noise,
                BehaviorKind::Noise,
                self.animate,
            ],
        }
    }
}

/// One world-model component's share of the observation: the agents of one
/// quadrant's behavior.
#[derive(Clone, Debug)]
pub struct GroupSpec {
    pub name: String,
    pub kind: BehaviorKind,
    pub quadrant: u8,
    pub agent_start: usize,
    pub n_agents: usize,
}

impl GroupSpec {
    /// Slice of the external observation vector covering this group's
    /// (x, y, visible) triples.
    pub fn ext_range(&self) -> std::ops::Range<usize> {
        3 * self.agent_start..3 * (self.agent_start + self.n_agents)
    }

    pub fn is_animate(&self) -> bool {
        self.kind.is_animate()
    }
}

/// What the agent sees after a step.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// Per agent: (x, y, 1) when visible, (estimate_x, estimate_y, 0) when not.
    pub ctilde: Vec<[f64; 3]>,
    pub aux: [[f64; 2]; 3],
    /// Gaze direction as (cos, sin).
    pub ego: [f64; 2],
}

impl Observation {
    /// Agent triples, then auxiliary object coordinates, then gaze.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        for c in &self.ctilde {
            v.extend_from_slice(c);
        }
        for a in &self.aux {
            v.extend_from_slice(a);
        }
        v.extend_from_slice(&self.ego);
        v
    }

    pub fn dim(&self) -> usize {
        3 * self.ctilde.len() + 6 + 2
    }
}

pub struct Env {
    cfg: RoomConfig,
    params: BehaviorParams,
    spec: WorldSpec,
    instance_seed: u64,
    behaviors: Vec<Behavior>,
    groups: Vec<GroupSpec>,
    aux: [[f64; 2]; 3],
    aux_rng: ChaCha8Rng,
    orientation_deg: f64,
    step_count: u64,
    prev_visible: Vec<bool>,
}

impl Env {
    /// Builds the world with runtime randomness tied to the world seed.
    pub fn new(cfg: RoomConfig, params: BehaviorParams, spec: WorldSpec) -> Result<Env, EnvError> {
        Env::with_instance_seed(cfg, params, spec, spec.seed)
    }

    /// Same layout as `spec.seed` dictates, but placements and runtime noise
    /// drawn from `instance_seed`.
    pub fn with_instance_seed(
        cfg: RoomConfig,
        params: BehaviorParams,
        spec: WorldSpec,
        instance_seed: u64,
    ) -> Result<Env, EnvError> {
        cfg.validate()?;
        spec.validate()?;

        let mut kinds = spec.quadrant_kinds();
        kinds.shuffle(&mut stream(spec.seed, &[tag::LAYOUT]));

        let animate_q = kinds
            .iter()
            .position(|k| k.is_animate())
            .expect("one animate kind per world") as u8
            + 1;
        let mut aux_rng = stream(instance_seed, &[tag::AUX]);
        let aux = Behavior::sample_aux_positions(&cfg.zone(animate_q), &mut aux_rng);

        let mut behaviors = Vec::with_capacity(4);
        for (i, kind) in kinds.into_iter().enumerate() {
            let q = (i + 1) as u8;
            behaviors.push(Behavior::init(kind, q, cfg.zone(q), params, instance_seed, &aux));
        }

        let mut groups = Vec::with_capacity(4);
        let mut agent_start = 0;
        for b in &behaviors {
            let repeated = behaviors.iter().filter(|o| o.kind == b.kind).count() > 1;
            let name = if repeated {
                format!("{}_q{}", b.kind.label(), b.quadrant)
            } else {
                b.kind.label().to_string()
            };
            let n = b.kind.n_agents();
            groups.push(GroupSpec {
                name,
                kind: b.kind,
                quadrant: b.quadrant,
                agent_start,
                n_agents: n,
            });
            agent_start += n;
        }

        let mut env = Env {
            cfg,
            params,
            spec,
            instance_seed,
            behaviors,
            groups,
            aux,
            aux_rng,
            orientation_deg: 0.0,
            step_count: 0,
            prev_visible: Vec::new(),
        };
        env.prev_visible = env.visibility()?;
        Ok(env)
    }

    /// New world instance for held-out evaluation: identical layout, fresh
    /// placements and noise.
    pub fn validation_fork(&self, val_seed: u64) -> Result<Env, EnvError> {
        Env::with_instance_seed(self.cfg, self.params, self.spec, val_seed)
    }

    pub fn config(&self) -> &RoomConfig {
        &self.cfg
    }

    pub fn behavior_params(&self) -> &BehaviorParams {
        &self.params
    }

    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    pub fn instance_seed(&self) -> u64 {
        self.instance_seed
    }

    pub fn groups(&self) -> &[GroupSpec] {
        &self.groups
    }

    pub fn animate_group(&self) -> &GroupSpec {
        self.groups.iter().find(|g| g.is_animate()).expect("animate group")
    }

    pub fn behaviors(&self) -> &[Behavior] {
        &self.behaviors
    }

    pub fn aux(&self) -> &[[f64; 2]; 3] {
        &self.aux
    }

    pub fn orientation_deg(&self) -> f64 {
        self.orientation_deg
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn n_agents(&self) -> usize {
        self.prev_visible.len()
    }

    /// External observation width: one (x, y, visible) triple per agent.
    pub fn ext_dim(&self) -> usize {
        3 * self.n_agents()
    }

    pub fn obs_dim(&self) -> usize {
        self.ext_dim() + 6 + 2
    }

    /// Visibility flags as of the end of the latest step, in flattened
    /// agent order.
    pub fn visible_flags(&self) -> &[bool] {
        &self.prev_visible
    }

    /// Index into `groups()` of the behavior currently in view, if any.
    /// The zone geometry guarantees at most one.
    pub fn visible_group_index(&self) -> Option<usize> {
        self.groups.iter().position(|g| {
            self.prev_visible[g.agent_start..g.agent_start + g.n_agents]
                .iter()
                .any(|v| *v)
        })
    }

    /// Starting position estimates for never-seen agents: their zone centers.
    pub fn initial_estimates(&self) -> Vec<[f64; 2]> {
        let mut v = Vec::with_capacity(self.n_agents());
        for b in &self.behaviors {
            let c = b.zone.center();
            for _ in 0..b.kind.n_agents() {
                v.push(c);
            }
        }
        v
    }

    fn visibility(&self) -> Result<Vec<bool>, EnvError> {
        let mut flags = Vec::with_capacity(8);
        for b in &self.behaviors {
            for a in b.agents() {
                flags.push(visible(self.orientation_deg, a.pos, self.cfg.fov_deg)?);
            }
        }
        Ok(flags)
    }

    /// Encodes the current state without advancing it. `c_hat` supplies the
    /// stand-in position for each agent outside the field of view.
    pub fn observe(&self, c_hat: &[[f64; 2]]) -> Result<Observation, EnvError> {
        let vis = self.visibility()?;
        Ok(self.encode(&vis, c_hat))
    }

    fn encode(&self, vis: &[bool], c_hat: &[[f64; 2]]) -> Observation {
        assert_eq!(c_hat.len(), vis.len(), "one estimate per agent");
        let mut ctilde = Vec::with_capacity(vis.len());
        let mut i = 0;
        for b in &self.behaviors {
            for a in b.agents() {
                ctilde.push(if vis[i] {
                    [a.pos[0], a.pos[1], 1.0]
                } else {
                    [c_hat[i][0], c_hat[i][1], 0.0]
                });
                i += 1;
            }
        }
        let rad = self.orientation_deg.to_radians();
        Observation { ctilde, aux: self.aux, ego: [rad.cos(), rad.sin()] }
    }

    /// One tick: rotate the gaze, relocate reaching targets when due, move
    /// every behavior using the previous step's visibility, then encode.
    pub fn env_step(&mut self, action: Action, c_hat: &[[f64; 2]]) -> Result<Observation, EnvError> {
        self.step_count += 1;
        self.orientation_deg = rotate_deg(self.orientation_deg, action.delta_deg());

        let reaching = matches!(self.spec.animate, BehaviorKind::ReachDet | BehaviorKind::ReachStoch);
        if reaching && self.step_count % self.params.reach_relocate_every == 0 {
            let q = self.animate_group().quadrant;
            self.aux = Behavior::sample_aux_positions(&self.cfg.zone(q), &mut self.aux_rng);
        }

        let mut offset = 0;
        for b in &mut self.behaviors {
            let n = b.kind.n_agents();
            let ctx = StepCtx { aux: &self.aux, watched: &self.prev_visible[offset..offset + n] };
            b.step(&ctx);
            offset += n;
        }

        let vis = self.visibility()?;
        let obs = self.encode(&vis, c_hat);
        self.prev_visible = vis;
        Ok(obs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn spec(kind: WorldKind, animate: BehaviorKind, seed: u64) -> WorldSpec {
        WorldSpec { kind, animate, seed }
    }

    fn build(kind: WorldKind, animate: BehaviorKind, seed: u64) -> Env {
        Env::new(RoomConfig::default(), BehaviorParams::default(), spec(kind, animate, seed)).unwrap()
    }

    fn random_rollout(env: &mut Env, steps: usize, policy_seed: u64) -> Vec<Vec<f64>> {
        let mut rng = stream(policy_seed, &[tag::POLICY]);
        let mut chat = env.initial_estimates();
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let a = Action::from_index(rng.gen_range(0..N_ACTIONS));
            let obs = env.env_step(a, &chat).unwrap();
            for (i, c) in obs.ctilde.iter().enumerate() {
                chat[i] = [c[0], c[1]];
            }
            out.push(obs.flatten());
        }
        out
    }

    #[test]
    fn config_rejects_fov_reaching_two_zones() {
        let cfg = RoomConfig { fov_deg: 60.0, ..RoomConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(RoomConfig::default().validate().is_ok());
    }

    #[test]
    fn action_indices_round_trip_and_left_is_ccw() {
        for (i, a) in Action::ALL.into_iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(Action::from_index(i), a);
        }
        assert!(Action::Left24.delta_deg() > 0.0);
        assert!(Action::Right24.delta_deg() < 0.0);
        assert_eq!(Action::Stay.delta_deg(), 0.0);
    }

    #[test]
    fn mixture_layout_holds_one_of_each_kind() {
        let env = build(WorldKind::Mixture, BehaviorKind::ChaseDet, 42);
        let kinds: Vec<BehaviorKind> = env.behaviors().iter().map(|b| b.kind).collect();
        assert!(kinds.contains(&BehaviorKind::Static));
        assert!(kinds.contains(&BehaviorKind::Periodic));
        assert!(kinds.contains(&BehaviorKind::Noise));
        assert!(kinds.contains(&BehaviorKind::ChaseDet));
        assert_eq!(env.n_agents(), 5);
        assert_eq!(env.groups().len(), 4);
        let names: Vec<&str> = env.groups().iter().map(|g| g.name.as_str()).collect();
        assert!(names.contains(&"chase_det"));
    }

    #[test]
    fn noise_world_names_noise_groups_by_quadrant() {
        let env = build(WorldKind::Noise, BehaviorKind::ReachDet, 7);
        let noise: Vec<&GroupSpec> =
            env.groups().iter().filter(|g| g.kind == BehaviorKind::Noise).collect();
        assert_eq!(noise.len(), 3);
        for g in &noise {
            assert_eq!(g.name, format!("noise_q{}", g.quadrant));
        }
        assert_eq!(env.animate_group().kind, BehaviorKind::ReachDet);
    }

    #[test]
    fn identical_seeds_replay_identical_trajectories() {
        let mut a = build(WorldKind::Mixture, BehaviorKind::PeekabooStoch, 9);
        let mut b = build(WorldKind::Mixture, BehaviorKind::PeekabooStoch, 9);
        let ta = random_rollout(&mut a, 1000, 77);
        let tb = random_rollout(&mut b, 1000, 77);
        assert_eq!(ta, tb);
    }

    #[test]
    fn validation_fork_keeps_layout_but_reroll_positions() {
        let env = build(WorldKind::Mixture, BehaviorKind::MimicStoch, 21);
        let fork = env.validation_fork(9001).unwrap();
        for (a, b) in env.behaviors().iter().zip(fork.behaviors()) {
            assert_eq!(a.kind, b.kind);
            assert_eq!(a.quadrant, b.quadrant);
        }
        let moved = env
            .behaviors()
            .iter()
            .zip(fork.behaviors())
            .any(|(a, b)| a.agents()[0].pos != b.agents()[0].pos);
        assert!(moved, "fork should re-roll agent placements");
        assert_ne!(env.aux(), fork.aux());
    }

    #[test]
    fn at_most_one_group_visible_during_rollout() {
        let mut env = build(WorldKind::Mixture, BehaviorKind::ChaseStoch, 3);
        let chat = env.initial_estimates();
        let mut rng = stream(5, &[tag::POLICY]);
        for _ in 0..20_000 {
            let a = Action::from_index(rng.gen_range(0..N_ACTIONS));
            env.env_step(a, &chat).unwrap();
            let visible_groups = env
                .groups()
                .iter()
                .filter(|g| {
                    env.visible_flags()[g.agent_start..g.agent_start + g.n_agents]
                        .iter()
                        .any(|v| *v)
                })
                .count();
            assert!(visible_groups <= 1, "two behaviors in view at once");
        }
    }

    #[test]
    fn encoder_substitutes_estimates_for_hidden_agents() {
        let mut env = build(WorldKind::Mixture, BehaviorKind::ReachDet, 15);
        let chat: Vec<[f64; 2]> = (0..env.n_agents()).map(|i| [100.0 + i as f64, -7.0]).collect();
        let obs = env.env_step(Action::Stay, &chat).unwrap();
        let mut i = 0;
        for b in env.behaviors() {
            for a in b.agents() {
                let c = obs.ctilde[i];
                if env.visible_flags()[i] {
                    assert_eq!(c, [a.pos[0], a.pos[1], 1.0]);
                } else {
                    assert_eq!(c, [chat[i][0], chat[i][1], 0.0]);
                }
                i += 1;
            }
        }
        assert_eq!(obs.flatten().len(), env.obs_dim());
    }

    #[test]
    fn ego_encodes_orientation_after_rotation() {
        let mut env = build(WorldKind::Mixture, BehaviorKind::ChaseDet, 1);
        let chat = env.initial_estimates();
        let obs = env.env_step(Action::Left96, &chat).unwrap();
        let rad = 96.0_f64.to_radians();
        assert!((obs.ego[0] - rad.cos()).abs() < 1e-12);
        assert!((obs.ego[1] - rad.sin()).abs() < 1e-12);
        assert_eq!(env.orientation_deg(), 96.0);
    }

    #[test]
    fn aux_relocates_on_schedule_only_for_reaching_worlds() {
        let mut env = build(WorldKind::Noise, BehaviorKind::ReachDet, 33);
        let chat = env.initial_estimates();
        let every = env.behavior_params().reach_relocate_every;
        let mut prev = *env.aux();
        for t in 1..=(2 * every) {
            env.env_step(Action::Stay, &chat).unwrap();
            if t % every == 0 {
                assert_ne!(*env.aux(), prev, "aux should relocate at step {t}");
                prev = *env.aux();
            } else {
                assert_eq!(*env.aux(), prev, "aux moved off schedule at step {t}");
            }
        }

        let mut still = build(WorldKind::Mixture, BehaviorKind::ChaseDet, 33);
        let chat = still.initial_estimates();
        let start = *still.aux();
        for _ in 0..(every + 10) {
            still.env_step(Action::Stay, &chat).unwrap();
        }
        assert_eq!(*still.aux(), start, "aux must stay put without a reacher");
    }

    #[test]
    fn groups_tile_the_external_observation() {
        let env = build(WorldKind::Mixture, BehaviorKind::MimicDet, 2);
        let mut covered = 0;
        for g in env.groups() {
            let r = g.ext_range();
            assert_eq!(r.start, covered);
            covered = r.end;
        }
        assert_eq!(covered, env.ext_dim());
    }
}
