//! Component-ensemble world model over masked agent coordinates.
//!
//! One recurrent component per behaviorally interdependent agent group (or a
//! single joint component in the entangled ablation). Each component sees
//! only its group's (x, y, visible) triples plus the shared auxiliary-object
//! and gaze features and the action one-hot, runs a two-layer LSTM across
//! the whole input-plus-output span (future steps carry only the planned
//! action), and maps each output-span hidden state through a two-layer MLP
//! to that step's predicted coordinates and visibility logits.
//!
//! Training follows a progress-friendly regime: every Adam step on the live
//! parameters is followed by an exponential blend into the old parameters,
//! with a one-time warm start that copies live into old early in training so
//! the progress baseline starts from something sensible.

use serde::{Deserialize, Serialize};

use crate::env::rng::{stream, tag};
use crate::env::GroupSpec;
use crate::numcore::{
    masked_row_terms, Adam, AdamConfig, LstmStackSpec, MlpSpec, NumError, ParamSet, Tape, Tensor,
    Var,
};

pub const N_ACTION_ONEHOT: usize = crate::env::N_ACTIONS;
/// Shared observation tail: three auxiliary objects (x, y) plus gaze (cos, sin).
pub const SHARED_DIM: usize = 8;
/// Factor applied to coordinate inputs before they reach any network.
pub const COORD_INPUT_SCALE: f64 = 0.1;

/// World-model hyperparameters. Defaults are the full-scale settings; desk
/// runs shrink the hidden sizes and batch through the config file.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WmConfig {
    /// Input horizon: observed steps fed to the LSTM.
    pub tau_in: usize,
    /// Output horizon: future steps predicted per window.
    pub tau_out: usize,
    /// LSTM and MLP hidden width for single-agent groups.
    pub hidden_single: usize,
    /// Hidden width for multi-agent groups (and the entangled joint net).
    pub hidden_pair: usize,
    pub lr: f64,
    pub batch: usize,
    /// Blend weight of the old-parameter moving average.
    pub ema_gamma: f64,
    /// Update count at which old is copied from live exactly once.
    pub warm_start_after: u64,
    /// Ablation: one joint component over all agents instead of one per group.
    pub entangled: bool,
    /// Sensitivity variant: squared Euclidean coordinate error.
    pub squared_coord: bool,
}

impl Default for WmConfig {
    fn default() -> WmConfig {
        WmConfig {
            tau_in: 10,
            tau_out: 5,
            hidden_single: 256,
            hidden_pair: 512,
            lr: 1e-4,
            batch: 256,
            ema_gamma: 0.9995,
            warm_start_after: 100,
            entangled: false,
            squared_coord: false,
        }
    }
}

impl WmConfig {
    pub fn validate(&self) -> Result<(), NumError> {
        if self.tau_in < 1 || self.tau_out < 1 {
            return Err(NumError::Config("tau_in and tau_out must be at least 1".into()));
        }
        if !(self.ema_gamma > 0.0 && self.ema_gamma < 1.0) {
            return Err(NumError::Config(format!("ema_gamma {} out of (0, 1)", self.ema_gamma)));
        }
        if self.hidden_single == 0 || self.hidden_pair == 0 || self.batch == 0 {
            return Err(NumError::Config("hidden sizes and batch must be positive".into()));
        }
        Ok(())
    }

    /// Window length a sample must span: observed steps plus predicted steps.
    pub fn window_len(&self) -> usize {
        self.tau_in + self.tau_out
    }
}

/// One step of interaction as stored in replay: the flattened observation
/// the agent acted from, the action it took, and the curiosity reward
/// assigned at collection time (unused by the world model itself).
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
}

/// Contiguous span of agent indices one component predicts.
#[derive(Clone, Debug)]
pub struct UnitBlock {
    pub name: String,
    pub agent_start: usize,
    pub n_agents: usize,
}

impl From<&GroupSpec> for UnitBlock {
    fn from(g: &GroupSpec) -> UnitBlock {
        UnitBlock { name: g.name.clone(), agent_start: g.agent_start, n_agents: g.n_agents }
    }
}

/// Which parameter set to evaluate with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WhichParams {
    Live,
    Old,
}

/// Batch-mean loss split into its two addends.
#[derive(Clone, Copy, Debug, Default)]
pub struct Scored {
    pub coord: f64,
    pub ce: f64,
}

impl Scored {
    pub fn total(&self) -> f64 {
        self.coord + self.ce
    }
}

pub struct Component {
    block: UnitBlock,
    lstm: LstmStackSpec,
    mlp: MlpSpec,
    live: ParamSet,
    old: ParamSet,
    opt: Adam,
    updates: u64,
}

impl Component {
    pub fn name(&self) -> &str {
        &self.block.name
    }

    pub fn block(&self) -> &UnitBlock {
        &self.block
    }

    pub fn live(&self) -> &ParamSet {
        &self.live
    }

    pub fn old(&self) -> &ParamSet {
        &self.old
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    fn params(&self, which: WhichParams) -> &ParamSet {
        match which {
            WhichParams::Live => &self.live,
            WhichParams::Old => &self.old,
        }
    }
}

pub struct WorldModel {
    cfg: WmConfig,
    n_agents: usize,
    components: Vec<Component>,
}

impl WorldModel {
    /// Builds one component per group (or one joint component when
    /// entangled), with parameters drawn from per-component model-init
    /// streams of `seed`.
    pub fn new(
        cfg: WmConfig,
        groups: &[GroupSpec],
        n_agents: usize,
        seed: u64,
    ) -> Result<WorldModel, NumError> {
        cfg.validate()?;
        let blocks: Vec<UnitBlock> = if cfg.entangled {
            vec![UnitBlock { name: "joint".into(), agent_start: 0, n_agents }]
        } else {
            groups.iter().map(UnitBlock::from).collect()
        };

        let mut components = Vec::with_capacity(blocks.len());
        for (ci, block) in blocks.into_iter().enumerate() {
            let hidden = if block.n_agents == 1 { cfg.hidden_single } else { cfg.hidden_pair };
            let input = 3 * block.n_agents + SHARED_DIM + N_ACTION_ONEHOT;
            let lstm = LstmStackSpec::new(input, hidden, 2);
            let mlp = MlpSpec::new(hidden, hidden, 3 * block.n_agents);
            let mut rng = stream(seed, &[tag::MODEL_INIT, ci as u64]);
            let mut live = ParamSet::new();
            lstm.init_into(&mut live, "lstm.", &mut rng)?;
            mlp.init_into(&mut live, "mlp.", &mut rng)?;
            let old = live.clone();
            let opt = Adam::new(AdamConfig::with_lr(cfg.lr), &live);
            components.push(Component { block, lstm, mlp, live, old, opt, updates: 0 });
        }
        Ok(WorldModel { cfg, n_agents, components })
    }

    /// Fresh model with the same configuration and component layout but
    /// independently initialized parameters (ensemble members).
    pub fn like(other: &WorldModel, seed: u64) -> Result<WorldModel, NumError> {
        let mut components = Vec::with_capacity(other.components.len());
        for (ci, c) in other.components.iter().enumerate() {
            let mut rng = stream(seed, &[tag::MODEL_INIT, ci as u64]);
            let mut live = ParamSet::new();
            c.lstm.init_into(&mut live, "lstm.", &mut rng)?;
            c.mlp.init_into(&mut live, "mlp.", &mut rng)?;
            let old = live.clone();
            let opt = Adam::new(AdamConfig::with_lr(other.cfg.lr), &live);
            components.push(Component {
                block: c.block.clone(),
                lstm: c.lstm,
                mlp: c.mlp,
                live,
                old,
                opt,
                updates: 0,
            });
        }
        Ok(WorldModel { cfg: other.cfg, n_agents: other.n_agents, components })
    }

    pub fn cfg(&self) -> &WmConfig {
        &self.cfg
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn window_len(&self) -> usize {
        self.cfg.window_len()
    }

    fn obs_dim(&self) -> usize {
        3 * self.n_agents + SHARED_DIM
    }

    fn check_windows(&self, windows: &[&[StepRecord]]) {
        assert!(!windows.is_empty(), "empty window batch");
        for w in windows {
            assert_eq!(w.len(), self.window_len(), "window length");
            for s in w.iter() {
                assert_eq!(s.obs.len(), self.obs_dim(), "observation width");
                assert!(s.action < N_ACTION_ONEHOT, "action index");
            }
        }
    }

    /// Per-timestep LSTM input for one component: the group's observation
    /// slice plus shared features plus the action one-hot; future steps
    /// blank the observation part and carry only the planned action.
    ///
    /// Coordinates enter at a tenth of their room-unit value: raw magnitudes
    /// near the walls saturate the 1/sqrt(fan-in) first layer's gates at init.
    /// Binary flags, the gaze direction, and the one-hot stay as-is, and the
    /// regression targets stay in room units.
    fn input_step(&self, comp: &Component, w: &[StepRecord], t: usize, row: &mut [f64]) {
        row.fill(0.0);
        let b = &comp.block;
        if t < self.cfg.tau_in {
            let obs = &w[t].obs;
            let ext = 3 * self.n_agents;
            for a in 0..b.n_agents {
                let triple = 3 * (b.agent_start + a);
                row[3 * a] = obs[triple] * COORD_INPUT_SCALE;
                row[3 * a + 1] = obs[triple + 1] * COORD_INPUT_SCALE;
                row[3 * a + 2] = obs[triple + 2];
            }
            let shared = &mut row[3 * b.n_agents..3 * b.n_agents + SHARED_DIM];
            shared.copy_from_slice(&obs[ext..ext + SHARED_DIM]);
            for v in &mut shared[..SHARED_DIM - 2] {
                *v *= COORD_INPUT_SCALE;
            }
        }
        row[3 * b.n_agents + SHARED_DIM + w[t].action] = 1.0;
    }

    /// Output-span targets for one component: coordinate pairs and
    /// visibility labels, time-major with agents innermost.
    fn targets(&self, comp: &Component, windows: &[&[StepRecord]]) -> (Tensor, Tensor) {
        let b = &comp.block;
        let units = b.n_agents * self.cfg.tau_out;
        let mut ctilde = Tensor::zeros(&[windows.len(), 2 * units]);
        let mut mask = Tensor::zeros(&[windows.len(), units]);
        for (r, w) in windows.iter().enumerate() {
            for j in 0..self.cfg.tau_out {
                let obs = &w[self.cfg.tau_in + j].obs;
                for a in 0..b.n_agents {
                    let u = j * b.n_agents + a;
                    let triple = 3 * (b.agent_start + a);
                    ctilde.set(r, 2 * u, obs[triple]);
                    ctilde.set(r, 2 * u + 1, obs[triple + 1]);
                    mask.set(r, u, obs[triple + 2]);
                }
            }
        }
        (ctilde, mask)
    }

    /// Unrolls one component on `tape` and returns the prediction var
    /// (B × 3·|group|·tau_out, time-major).
    fn predict_on_tape(
        &self,
        tape: &mut Tape,
        ci: usize,
        params: &ParamSet,
        windows: &[&[StepRecord]],
    ) -> Var {
        let comp = &self.components[ci];
        let span = self.window_len();
        let d_in = comp.lstm.input;
        let mut xs = Vec::with_capacity(span);
        for t in 0..span {
            let mut x = Tensor::zeros(&[windows.len(), d_in]);
            for (r, w) in windows.iter().enumerate() {
                let base = r * d_in;
                self.input_step(comp, w, t, &mut x.as_mut_slice()[base..base + d_in]);
            }
            xs.push(tape.constant(x));
        }
        let (hs, _) = comp.lstm.forward(tape, params, "lstm.", &xs, None);
        let mut outs = Vec::with_capacity(self.cfg.tau_out);
        for j in 0..self.cfg.tau_out {
            outs.push(comp.mlp.forward(tape, params, "mlp.", hs[self.cfg.tau_in + j]));
        }
        tape.concat_cols(&outs)
    }

    /// Predicted (x, y, logit) triples per component in group order.
    pub fn predict(&self, which: WhichParams, windows: &[&[StepRecord]]) -> Vec<Tensor> {
        self.check_windows(windows);
        (0..self.components.len())
            .map(|ci| {
                let mut tape = Tape::new();
                let params = self.components[ci].params(which);
                let pred = self.predict_on_tape(&mut tape, ci, params, windows);
                tape.value(pred).clone()
            })
            .collect()
    }

    /// Batch-mean loss terms of one component under an arbitrary
    /// schema-compatible parameter set (used for progress baselines and
    /// snapshots as well as the live and old sets).
    pub fn score_component_with(
        &self,
        ci: usize,
        params: &ParamSet,
        windows: &[&[StepRecord]],
    ) -> Scored {
        let n = self.components[ci].block.n_agents;
        self.score_component_units_with(ci, params, windows, 0..n)
    }

    /// Loss terms restricted to a local agent sub-range of the component,
    /// which lets per-behavior validation cut through the entangled joint
    /// net the same way it reads a dedicated component.
    pub fn score_component_units_with(
        &self,
        ci: usize,
        params: &ParamSet,
        windows: &[&[StepRecord]],
        local_agents: std::ops::Range<usize>,
    ) -> Scored {
        self.check_windows(windows);
        let comp = &self.components[ci];
        let n = comp.block.n_agents;
        assert!(local_agents.end <= n, "agent sub-range out of bounds");
        let mut tape = Tape::new();
        let pred = self.predict_on_tape(&mut tape, ci, params, windows);
        let pv = tape.value(pred);
        let (ctilde, mask) = self.targets(comp, windows);

        let mut total = Scored::default();
        for r in 0..windows.len() {
            let p = pv.row_slice(r);
            let ct = ctilde.row_slice(r);
            let mk = mask.row_slice(r);
            for j in 0..self.cfg.tau_out {
                let lo = j * n + local_agents.start;
                let hi = j * n + local_agents.end;
                let (coord, ce) = masked_row_terms(
                    &p[3 * lo..3 * hi],
                    &ct[2 * lo..2 * hi],
                    &mk[lo..hi],
                    self.cfg.squared_coord,
                );
                total.coord += coord;
                total.ce += ce;
            }
        }
        let b = windows.len() as f64;
        Scored { coord: total.coord / b, ce: total.ce / b }
    }

    pub fn score_component(
        &self,
        ci: usize,
        which: WhichParams,
        windows: &[&[StepRecord]],
    ) -> Scored {
        self.score_component_with(ci, self.components[ci].params(which), windows)
    }

    /// Total loss terms summed over components.
    pub fn score(&self, which: WhichParams, windows: &[&[StepRecord]]) -> Scored {
        let mut total = Scored::default();
        for ci in 0..self.components.len() {
            let s = self.score_component(ci, which, windows);
            total.coord += s.coord;
            total.ce += s.ce;
        }
        total
    }

    /// Loss graph for one component; exposed so gradient checks can probe
    /// the exact training path.
    pub fn component_loss_graph(
        &self,
        ci: usize,
        params: &ParamSet,
        windows: &[&[StepRecord]],
    ) -> (Tape, Var) {
        self.check_windows(windows);
        let mut tape = Tape::new();
        let pred = self.predict_on_tape(&mut tape, ci, params, windows);
        let (ctilde, mask) = self.targets(&self.components[ci], windows);
        let loss = tape.masked_coord_bce(pred, ctilde, mask, self.cfg.squared_coord);
        (tape, loss)
    }

    /// One Adam step on the live parameters of component `ci`, followed by
    /// the exponential old-parameter blend, with the one-time warm start
    /// replacing the blend at exactly the configured update count. Returns
    /// the pre-step batch loss.
    pub fn train_component(
        &mut self,
        ci: usize,
        windows: &[&[StepRecord]],
    ) -> Result<f64, NumError> {
        let (tape, loss) = self.component_loss_graph(ci, &self.components[ci].live, windows);
        let value = tape.scalar_value(loss);
        let grads = tape.backward(loss, &self.components[ci].live);
        let comp = &mut self.components[ci];
        comp.opt.step(&mut comp.live, &grads)?;
        comp.updates += 1;
        if comp.updates == self.cfg.warm_start_after {
            comp.old.copy_from(&comp.live)?;
        } else {
            comp.old.ema_blend_from(&comp.live, self.cfg.ema_gamma)?;
        }
        Ok(value)
    }

    /// Trains every component on the same window batch; returns the summed
    /// pre-step loss.
    pub fn train_all(&mut self, windows: &[&[StepRecord]]) -> Result<f64, NumError> {
        let mut total = 0.0;
        for ci in 0..self.components.len() {
            total += self.train_component(ci, windows)?;
        }
        Ok(total)
    }

    /// Checkpoint entries, one namespace per component and parameter role.
    pub fn param_entries(&self) -> Vec<(String, &ParamSet)> {
        let mut v = Vec::with_capacity(2 * self.components.len());
        for c in &self.components {
            v.push((format!("wm.{}.live", c.block.name), &c.live));
            v.push((format!("wm.{}.old", c.block.name), &c.old));
        }
        v
    }

    /// Restores parameters saved by [`WorldModel::param_entries`].
    pub fn restore(&mut self, entries: &[(String, ParamSet)]) -> Result<(), NumError> {
        for c in &mut self.components {
            let live_name = format!("wm.{}.live", c.block.name);
            let old_name = format!("wm.{}.old", c.block.name);
            let mut found = 0;
            for (name, set) in entries {
                if *name == live_name {
                    c.live.copy_from(set)?;
                    found += 1;
                } else if *name == old_name {
                    c.old.copy_from(set)?;
                    found += 1;
                }
            }
            if found != 2 {
                return Err(NumError::Schema {
                    context: "world model restore".into(),
                    detail: format!("missing entries for component {}", c.block.name),
                });
            }
        }
        Ok(())
    }

    /// Component index whose block covers the given agent span, plus the
    /// local offset of that span inside the block.
    pub fn locate_agents(&self, agent_start: usize, n_agents: usize) -> Option<(usize, usize)> {
        self.components.iter().enumerate().find_map(|(ci, c)| {
            let b = &c.block;
            (agent_start >= b.agent_start && agent_start + n_agents <= b.agent_start + b.n_agents)
                .then(|| (ci, agent_start - b.agent_start))
        })
    }

    /// Batch-mean loss terms for one behavior group, whichever component
    /// hosts it.
    pub fn score_group(
        &self,
        group: &GroupSpec,
        which: WhichParams,
        windows: &[&[StepRecord]],
    ) -> Scored {
        let (ci, lo) = self
            .locate_agents(group.agent_start, group.n_agents)
            .expect("group not covered by any component");
        let params = self.components[ci].params(which);
        self.score_component_units_with(ci, params, windows, lo..lo + group.n_agents)
    }
}

/// Zeroes every tensor in the set; with all-zero weights the model predicts
/// zero coordinates and logit zero (probability one half) everywhere.
pub fn zero_params(set: &mut ParamSet) {
    for slot in 0..set.len() {
        for v in set.by_slot_mut(slot).as_mut_slice() {
            *v = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::behavior::{BehaviorKind, BehaviorParams};
    use crate::env::{Action, Env, RoomConfig, WorldKind, WorldSpec, N_ACTIONS};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_cfg() -> WmConfig {
        WmConfig {
            tau_in: 4,
            tau_out: 2,
            hidden_single: 6,
            hidden_pair: 8,
            lr: 3e-3,
            batch: 4,
            warm_start_after: 5,
            ..WmConfig::default()
        }
    }

    fn playroom(seed: u64) -> Env {
        let spec = WorldSpec { kind: WorldKind::Mixture, animate: BehaviorKind::ChaseDet, seed };
        Env::new(RoomConfig::default(), BehaviorParams::default(), spec).unwrap()
    }

    fn collect(env: &mut Env, steps: usize, policy_seed: u64) -> Vec<StepRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(policy_seed);
        let mut chat = env.initial_estimates();
        let mut records = Vec::with_capacity(steps);
        for _ in 0..steps {
            let a = rng.gen_range(0..N_ACTIONS);
            let obs = env.env_step(Action::from_index(a), &chat).unwrap();
            for (i, c) in obs.ctilde.iter().enumerate() {
                chat[i] = [c[0], c[1]];
            }
            records.push(StepRecord { obs: obs.flatten(), action: a, reward: 0.0 });
        }
        records
    }

    fn window_batch(records: &[StepRecord], len: usize, count: usize) -> Vec<&[StepRecord]> {
        (0..count).map(|i| &records[i * 3..i * 3 + len]).collect()
    }

    #[test]
    fn prediction_shapes_follow_group_sizes() {
        let mut env = playroom(5);
        let records = collect(&mut env, 40, 11);
        let cfg = tiny_cfg();
        let wm = WorldModel::new(cfg, env.groups(), env.n_agents(), 7).unwrap();
        let windows = window_batch(&records, cfg.window_len(), 3);
        let preds = wm.predict(WhichParams::Live, &windows);
        assert_eq!(preds.len(), env.groups().len());
        for (p, g) in preds.iter().zip(env.groups()) {
            assert_eq!(p.shape(), [3, 3 * g.n_agents * cfg.tau_out]);
        }
    }

    #[test]
    fn zero_weights_predict_zeros() {
        let mut env = playroom(8);
        let records = collect(&mut env, 30, 2);
        let cfg = tiny_cfg();
        let mut wm = WorldModel::new(cfg, env.groups(), env.n_agents(), 1).unwrap();
        for c in &mut wm.components {
            zero_params(&mut c.live);
        }
        let windows = window_batch(&records, cfg.window_len(), 2);
        for p in wm.predict(WhichParams::Live, &windows) {
            assert!(p.as_slice().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let mut env = playroom(3);
        let _ = collect(&mut env, 1, 1);
        let a = WorldModel::new(tiny_cfg(), env.groups(), env.n_agents(), 42).unwrap();
        let b = WorldModel::new(tiny_cfg(), env.groups(), env.n_agents(), 42).unwrap();
        let c = WorldModel::new(tiny_cfg(), env.groups(), env.n_agents(), 43).unwrap();
        for (x, y) in a.components.iter().zip(&b.components) {
            assert_eq!(x.live.l2_distance(&y.live).unwrap(), 0.0);
        }
        let moved = a
            .components
            .iter()
            .zip(&c.components)
            .any(|(x, y)| x.live.l2_distance(&y.live).unwrap() > 0.0);
        assert!(moved);
    }

    #[test]
    fn score_matches_tape_loss_node() {
        let mut env = playroom(13);
        let records = collect(&mut env, 40, 5);
        let cfg = tiny_cfg();
        let wm = WorldModel::new(cfg, env.groups(), env.n_agents(), 9).unwrap();
        let windows = window_batch(&records, cfg.window_len(), 4);
        for ci in 0..wm.components().len() {
            let s = wm.score_component(ci, WhichParams::Live, &windows);
            let (tape, loss) = wm.component_loss_graph(ci, wm.components()[ci].live(), &windows);
            assert!((s.total() - tape.scalar_value(loss)).abs() < 1e-12);
        }
    }

    #[test]
    fn hidden_target_coordinates_cannot_move_the_loss() {
        let mut env = playroom(17);
        let records = collect(&mut env, 60, 3);
        let cfg = tiny_cfg();
        let wm = WorldModel::new(cfg, env.groups(), env.n_agents(), 20).unwrap();
        let windows = window_batch(&records, cfg.window_len(), 6);
        let before = wm.score(WhichParams::Live, &windows).total();

        // Perturb (x, y) of every masked-out unit in the target span only.
        let mut fuzz = ChaCha8Rng::seed_from_u64(1);
        let mut altered: Vec<Vec<StepRecord>> = windows.iter().map(|w| w.to_vec()).collect();
        let mut touched = 0;
        for w in &mut altered {
            for s in &mut w[cfg.tau_in..] {
                for a in 0..env.n_agents() {
                    if s.obs[3 * a + 2] == 0.0 {
                        s.obs[3 * a] += fuzz.gen_range(-5.0..5.0);
                        s.obs[3 * a + 1] += fuzz.gen_range(-5.0..5.0);
                        touched += 1;
                    }
                }
            }
        }
        assert!(touched > 0, "fuzz found nothing to perturb");
        let views: Vec<&[StepRecord]> = altered.iter().map(|w| w.as_slice()).collect();
        let after = wm.score(WhichParams::Live, &views).total();
        assert_eq!(before, after, "masked targets leaked into the loss");
    }

    #[test]
    fn components_ignore_other_groups_inputs() {
        let mut env = playroom(23);
        let records = collect(&mut env, 40, 9);
        let cfg = tiny_cfg();
        let wm = WorldModel::new(cfg, env.groups(), env.n_agents(), 4).unwrap();
        let windows = window_batch(&records, cfg.window_len(), 2);
        let base = wm.predict(WhichParams::Live, &windows);

        // Scramble the first group's input triples everywhere.
        let g0 = &env.groups()[0];
        let mut altered: Vec<Vec<StepRecord>> = windows.iter().map(|w| w.to_vec()).collect();
        for w in &mut altered {
            for s in w.iter_mut() {
                for k in g0.ext_range() {
                    s.obs[k] += 3.5;
                }
            }
        }
        let views: Vec<&[StepRecord]> = altered.iter().map(|w| w.as_slice()).collect();
        let moved = wm.predict(WhichParams::Live, &views);
        assert_ne!(base[0].as_slice(), moved[0].as_slice(), "own inputs must matter");
        for ci in 1..base.len() {
            assert_eq!(
                base[ci].as_slice(),
                moved[ci].as_slice(),
                "component {ci} read another group's inputs"
            );
        }
    }

    #[test]
    fn training_reduces_loss_and_updates_old_params() {
        let mut env = playroom(29);
        let records = collect(&mut env, 50, 4);
        let cfg = tiny_cfg();
        let mut wm = WorldModel::new(cfg, env.groups(), env.n_agents(), 3).unwrap();
        let windows = window_batch(&records, cfg.window_len(), 8);

        let first = wm.score(WhichParams::Live, &windows).total();
        for _ in 0..60 {
            wm.train_all(&windows).unwrap();
        }
        let last = wm.score(WhichParams::Live, &windows).total();
        assert!(
            last < 0.5 * first,
            "overfit on a frozen batch should at least halve the loss ({first} -> {last})"
        );
        for c in wm.components() {
            assert!(c.old().l2_distance(c.live()).unwrap() > 0.0, "old must trail live");
        }
    }

    #[test]
    fn warm_start_copies_old_from_live_exactly_once() {
        let mut env = playroom(31);
        let records = collect(&mut env, 30, 8);
        let cfg = tiny_cfg();
        let mut wm = WorldModel::new(cfg, env.groups(), env.n_agents(), 6).unwrap();
        let windows = window_batch(&records, cfg.window_len(), 2);
        for step in 1..=(cfg.warm_start_after + 2) {
            wm.train_component(0, &windows).unwrap();
            let c = &wm.components()[0];
            let d = c.old().l2_distance(c.live()).unwrap();
            if step == cfg.warm_start_after {
                assert_eq!(d, 0.0, "warm start must copy live into old bitwise");
            } else {
                assert!(d > 0.0, "old should trail live at update {step}");
            }
        }
    }

    #[test]
    fn entangled_model_covers_all_agents_with_one_component() {
        let mut env = playroom(37);
        let records = collect(&mut env, 40, 6);
        let cfg = WmConfig { entangled: true, ..tiny_cfg() };
        let wm = WorldModel::new(cfg, env.groups(), env.n_agents(), 12).unwrap();
        assert_eq!(wm.components().len(), 1);
        let windows = window_batch(&records, cfg.window_len(), 3);
        let preds = wm.predict(WhichParams::Live, &windows);
        assert_eq!(preds[0].shape(), [3, 3 * env.n_agents() * cfg.tau_out]);

        // Group scoring slices through the joint net, and the slices add up
        // to the whole.
        let whole = wm.score_component(0, WhichParams::Live, &windows);
        let mut coord = 0.0;
        let mut ce = 0.0;
        for g in env.groups() {
            let s = wm.score_group(g, WhichParams::Live, &windows);
            coord += s.coord;
            ce += s.ce;
        }
        assert!((coord - whole.coord).abs() < 1e-12);
        assert!((ce - whole.ce).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip_restores_both_roles() {
        let mut env = playroom(41);
        let records = collect(&mut env, 40, 2);
        let cfg = tiny_cfg();
        let mut wm = WorldModel::new(cfg, env.groups(), env.n_agents(), 8).unwrap();
        let windows = window_batch(&records, cfg.window_len(), 4);
        for _ in 0..3 {
            wm.train_all(&windows).unwrap();
        }
        let saved: Vec<(String, ParamSet)> =
            wm.param_entries().into_iter().map(|(n, p)| (n, p.clone())).collect();
        for _ in 0..3 {
            wm.train_all(&windows).unwrap();
        }
        let diverged = wm.score(WhichParams::Live, &windows).total();
        wm.restore(&saved).unwrap();
        for (c, (_, orig)) in wm.components().iter().zip(saved.iter().step_by(2)) {
            assert_eq!(c.live().l2_distance(orig).unwrap(), 0.0);
        }
        let restored = wm.score(WhichParams::Live, &windows).total();
        assert_ne!(diverged, restored);
    }
}
