//! Intrinsic reward signals over freshly observed windows.
//!
//! Every signal answers the same question with the same shape: given the
//! newest window of step records, how interesting was it? The answers
//! differ:
//!
//! - **γ-Progress** scores the window under the slow EMA copy of the world
//!   model and under the live copy, and rewards the drop. Transitions the
//!   model is still improving on pay out; mastered ones and unlearnable
//!   ones both go quiet.
//! - **δ-Progress** does the same with a hard snapshot taken a fixed number
//!   of update rounds ago instead of an EMA.
//! - **RND** rewards observations a trainable predictor cannot yet match
//!   against a frozen random encoder (novelty).
//! - **Disagreement** rewards prediction variance across an ensemble of
//!   independently initialized world models trained on the same batches.
//! - **Adversarial** rewards the live model's coordinate error itself, which
//!   chases anything hard to predict, learnable or not.
//! - **Random** rewards nothing; the policy ignores the critic entirely.
//!
//! The harness owns one [`Curiosity`] and calls three hooks: [`Curiosity::reward`]
//! at collection time, [`Curiosity::begin_update_round`] once per model
//! update round, and [`Curiosity::train_step`] alongside every world-model
//! gradient step.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::env::rng::{stream, tag};
use crate::numcore::{Adam, AdamConfig, MlpSpec, NumError, ParamSet, Tape, Tensor};
use crate::worldmodel::{StepRecord, WhichParams, WorldModel, SHARED_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    GammaProgress,
    DeltaProgress,
    Rnd,
    Disagreement,
    Adversarial,
    Random,
}

impl SignalKind {
    pub const ALL: [SignalKind; 6] = [
        SignalKind::GammaProgress,
        SignalKind::DeltaProgress,
        SignalKind::Rnd,
        SignalKind::Disagreement,
        SignalKind::Adversarial,
        SignalKind::Random,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            SignalKind::GammaProgress => "gamma_progress",
            SignalKind::DeltaProgress => "delta_progress",
            SignalKind::Rnd => "rnd",
            SignalKind::Disagreement => "disagreement",
            SignalKind::Adversarial => "adversarial",
            SignalKind::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<SignalKind> {
        SignalKind::ALL.iter().copied().find(|k| k.label() == s)
    }
}

/// Signal selection plus per-kind knobs. Irrelevant knobs are ignored by
/// the kinds that do not use them.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CuriosityConfig {
    pub kind: SignalKind,
    /// Update rounds between the δ-Progress snapshot and the live model.
    pub delta: usize,
    /// Hidden width of the RND encoder pair.
    pub rnd_hidden: usize,
    /// Embedding width the RND predictor must match.
    pub rnd_dim: usize,
    pub rnd_lr: f64,
    /// Ensemble size for Disagreement, counting the live model as member 0.
    pub ensemble: usize,
    /// Folds the visibility cross-entropy term into the Adversarial reward.
    pub adversarial_include_ce: bool,
}

impl Default for CuriosityConfig {
    fn default() -> CuriosityConfig {
        CuriosityConfig {
            kind: SignalKind::GammaProgress,
            delta: 1,
            rnd_hidden: 128,
            rnd_dim: 64,
            rnd_lr: 1e-4,
            ensemble: 3,
            adversarial_include_ce: false,
        }
    }
}

impl CuriosityConfig {
    pub fn validate(&self) -> Result<(), NumError> {
        if self.delta == 0 {
            return Err(NumError::Config("curiosity delta must be at least 1".into()));
        }
        if self.rnd_hidden == 0 || self.rnd_dim == 0 || self.rnd_lr <= 0.0 {
            return Err(NumError::Config("rnd dimensions and lr must be positive".into()));
        }
        if self.kind == SignalKind::Disagreement && self.ensemble < 2 {
            return Err(NumError::Config(format!(
                "disagreement needs an ensemble of at least 2, got {}",
                self.ensemble
            )));
        }
        Ok(())
    }
}

/// Hard parameter snapshots, one per world-model component, taken at update
/// round boundaries.
#[derive(Clone, Debug)]
struct DeltaState {
    delta: usize,
    snapshots: VecDeque<Vec<ParamSet>>,
}

impl DeltaState {
    fn push(&mut self, wm: &WorldModel) {
        let snap = wm.components().iter().map(|c| c.live().clone()).collect();
        self.snapshots.push_back(snap);
        while self.snapshots.len() > self.delta {
            self.snapshots.pop_front();
        }
    }

    fn reward(&self, wm: &WorldModel, window: &[StepRecord]) -> f64 {
        let Some(oldest) = self.snapshots.front() else {
            return 0.0;
        };
        let windows = [window];
        let past: f64 = oldest
            .iter()
            .enumerate()
            .map(|(ci, params)| wm.score_component_with(ci, params, &windows).total())
            .sum();
        past - wm.score(WhichParams::Live, &windows).total()
    }
}

/// Random network distillation state: a frozen random encoder and a
/// trainable predictor of the same architecture chasing it.
pub struct Rnd {
    spec: MlpSpec,
    target: ParamSet,
    predictor: ParamSet,
    opt: Adam,
}

impl Rnd {
    pub fn new(obs_dim: usize, hidden: usize, out: usize, lr: f64, seed: u64) -> Result<Rnd, NumError> {
        let spec = MlpSpec::new(obs_dim, hidden, out);
        let mut target = ParamSet::new();
        spec.init_into(&mut target, "enc.", &mut stream(seed, &[tag::CURIOSITY, 0]))?;
        let mut predictor = ParamSet::new();
        spec.init_into(&mut predictor, "enc.", &mut stream(seed, &[tag::CURIOSITY, 1]))?;
        let opt = Adam::new(AdamConfig::with_lr(lr), &predictor);
        Ok(Rnd { spec, target, predictor, opt })
    }

    pub fn target(&self) -> &ParamSet {
        &self.target
    }

    pub fn predictor(&self) -> &ParamSet {
        &self.predictor
    }

    pub fn predictor_mut(&mut self) -> &mut ParamSet {
        &mut self.predictor
    }

    fn batch_input(&self, batch: &[&[f64]]) -> Tensor {
        let mut x = Tensor::zeros(&[batch.len(), self.spec.input]);
        for (r, obs) in batch.iter().enumerate() {
            assert_eq!(obs.len(), self.spec.input, "rnd observation width");
            x.as_mut_slice()[r * self.spec.input..(r + 1) * self.spec.input].copy_from_slice(obs);
        }
        x
    }

    /// Embedding-gap loss node on a fresh tape; the frozen encoder output
    /// enters as a constant so gradients reach only the predictor.
    fn gap_graph(&self, batch: &[&[f64]]) -> (Tape, crate::numcore::Var) {
        let mut tape = Tape::new();
        let x = tape.constant(self.batch_input(batch));
        let t = self.spec.forward(&mut tape, &self.target, "enc.", x);
        let frozen = tape.value(t).clone();
        let p = self.spec.forward(&mut tape, &self.predictor, "enc.", x);
        let gap = tape.mse_loss(p, frozen);
        (tape, gap)
    }

    /// Mean squared gap between predictor and frozen encoder embeddings.
    pub fn reward(&self, obs: &[f64]) -> f64 {
        let (tape, gap) = self.gap_graph(&[obs]);
        tape.value(gap).as_slice()[0]
    }

    /// One Adam step pulling the predictor toward the frozen encoder on a
    /// batch of observations.
    pub fn train(&mut self, batch: &[&[f64]]) -> Result<f64, NumError> {
        let (tape, loss) = self.gap_graph(batch);
        let value = tape.value(loss).as_slice()[0];
        let grads = tape.backward(loss, &self.predictor);
        self.opt.step(&mut self.predictor, &grads)?;
        Ok(value)
    }
}

/// Extra ensemble members; the live world model is member 0 and is trained
/// by the harness, so only the rest live here.
struct EnsembleState {
    extras: Vec<WorldModel>,
}

impl EnsembleState {
    fn reward(&self, wm: &WorldModel, window: &[StepRecord]) -> f64 {
        let windows = [window];
        let n_members = self.extras.len() + 1;
        let mut preds = Vec::with_capacity(n_members);
        preds.push(wm.predict(WhichParams::Live, &windows));
        for m in &self.extras {
            preds.push(m.predict(WhichParams::Live, &windows));
        }

        let tau_out = wm.cfg().tau_out;
        let mut acc = 0.0;
        let mut count = 0usize;
        for (ci, comp) in wm.components().iter().enumerate() {
            let units = comp.block().n_agents * tau_out;
            for u in 0..units {
                for k in 0..2 {
                    let col = 3 * u + k;
                    // Population variance anchored at member 0, so
                    // identical members give exactly zero and a common
                    // shift cancels before any rounding.
                    let origin = preds[0][ci].at(0, col);
                    let mut s1 = 0.0;
                    let mut s2 = 0.0;
                    for p in &preds {
                        let d = p[ci].at(0, col) - origin;
                        s1 += d;
                        s2 += d * d;
                    }
                    let n = n_members as f64;
                    acc += ((s2 - s1 * s1 / n) / n).max(0.0);
                    count += 1;
                }
            }
        }
        acc / count as f64
    }
}

enum State {
    GammaProgress,
    DeltaProgress(DeltaState),
    Rnd(Rnd),
    Disagreement(EnsembleState),
    Adversarial { include_ce: bool },
    Random,
}

/// One configured signal instance, holding whatever learners or snapshots
/// its kind needs.
pub struct Curiosity {
    kind: SignalKind,
    state: State,
}

impl Curiosity {
    /// Builds the signal to fit `wm`'s layout. `seed` drives the RND
    /// encoder pair and the extra ensemble members; γ-Progress and the
    /// stateless kinds ignore it.
    pub fn new(cfg: &CuriosityConfig, wm: &WorldModel, seed: u64) -> Result<Curiosity, NumError> {
        cfg.validate()?;
        let state = match cfg.kind {
            SignalKind::GammaProgress => State::GammaProgress,
            SignalKind::DeltaProgress => State::DeltaProgress(DeltaState {
                delta: cfg.delta,
                snapshots: VecDeque::new(),
            }),
            SignalKind::Rnd => {
                let obs_dim = 3 * wm.n_agents() + SHARED_DIM;
                State::Rnd(Rnd::new(obs_dim, cfg.rnd_hidden, cfg.rnd_dim, cfg.rnd_lr, seed)?)
            }
            SignalKind::Disagreement => {
                let extras = (1..cfg.ensemble)
                    .map(|k| WorldModel::like(wm, seed.wrapping_add(k as u64)))
                    .collect::<Result<Vec<_>, _>>()?;
                State::Disagreement(EnsembleState { extras })
            }
            SignalKind::Adversarial => {
                State::Adversarial { include_ce: cfg.adversarial_include_ce }
            }
            SignalKind::Random => State::Random,
        };
        Ok(Curiosity { kind: cfg.kind, state })
    }

    pub fn kind(&self) -> SignalKind {
        self.kind
    }

    /// A Random agent draws actions uniformly and never trains the critic.
    pub fn uses_random_policy(&self) -> bool {
        self.kind == SignalKind::Random
    }

    /// Scalar reward for the freshly completed window (newest record last).
    pub fn reward(&self, wm: &WorldModel, window: &[StepRecord]) -> f64 {
        match &self.state {
            State::GammaProgress => {
                let windows = [window];
                wm.score(WhichParams::Old, &windows).total()
                    - wm.score(WhichParams::Live, &windows).total()
            }
            State::DeltaProgress(ds) => ds.reward(wm, window),
            State::Rnd(rnd) => rnd.reward(&window.last().expect("non-empty window").obs),
            State::Disagreement(es) => es.reward(wm, window),
            State::Adversarial { include_ce } => {
                let s = wm.score(WhichParams::Live, &[window]);
                if *include_ce {
                    s.total()
                } else {
                    s.coord
                }
            }
            State::Random => 0.0,
        }
    }

    /// Round-boundary hook, called once before each block of world-model
    /// gradient steps. Only δ-Progress reacts, by snapshotting the live
    /// parameters.
    pub fn begin_update_round(&mut self, wm: &WorldModel) {
        if let State::DeltaProgress(ds) = &mut self.state {
            ds.push(wm);
        }
    }

    /// Per-gradient-step hook, called with the same batch that just trained
    /// the world model. RND trains its predictor; Disagreement trains the
    /// extra ensemble members in lockstep.
    pub fn train_step(
        &mut self,
        _wm: &WorldModel,
        windows: &[&[StepRecord]],
    ) -> Result<(), NumError> {
        match &mut self.state {
            State::Rnd(rnd) => {
                let batch: Vec<&[f64]> = windows
                    .iter()
                    .map(|w| w.last().expect("non-empty window").obs.as_slice())
                    .collect();
                rnd.train(&batch)?;
            }
            State::Disagreement(es) => {
                for m in &mut es.extras {
                    m.train_all(windows)?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Borrow of the extra ensemble members (the live model is member 0
    /// and lives with the harness), when this signal is Disagreement.
    pub fn ensemble(&self) -> Option<&[WorldModel]> {
        match &self.state {
            State::Disagreement(es) => Some(&es.extras),
            _ => None,
        }
    }

    pub fn ensemble_mut(&mut self) -> Option<&mut [WorldModel]> {
        match &mut self.state {
            State::Disagreement(es) => Some(&mut es.extras),
            _ => None,
        }
    }

    /// Borrow of the RND state, when this signal is RND.
    pub fn rnd(&self) -> Option<&Rnd> {
        match &self.state {
            State::Rnd(r) => Some(r),
            _ => None,
        }
    }

    pub fn rnd_mut(&mut self) -> Option<&mut Rnd> {
        match &mut self.state {
            State::Rnd(r) => Some(r),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::behavior::BehaviorKind;
    use crate::env::GroupSpec;
    use crate::worldmodel::{zero_params, WmConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn solo_group() -> Vec<GroupSpec> {
        vec![GroupSpec {
            name: "solo".into(),
            kind: BehaviorKind::Static,
            quadrant: 1,
            agent_start: 0,
            n_agents: 1,
        }]
    }

    fn tiny_cfg() -> WmConfig {
        WmConfig {
            tau_in: 3,
            tau_out: 1,
            hidden_single: 5,
            hidden_pair: 6,
            lr: 1e-2,
            batch: 2,
            ..WmConfig::default()
        }
    }

    /// Window over a single static agent: visible at the target step with
    /// the given true coordinates, zeros everywhere else.
    fn solo_window(cfg: &WmConfig, target: [f64; 2]) -> Vec<StepRecord> {
        let mut w: Vec<StepRecord> = (0..cfg.window_len())
            .map(|_| StepRecord { obs: vec![0.0; 3 + SHARED_DIM], action: 0, reward: 0.0 })
            .collect();
        let last = w.last_mut().unwrap();
        last.obs[0] = target[0];
        last.obs[1] = target[1];
        last.obs[2] = 1.0;
        w
    }

    /// Zero live weights, old weights biased to emit (3, 4): the old loss
    /// exceeds the live loss by exactly the coordinate distance 5.
    #[test]
    fn gamma_progress_matches_hand_built_loss_gap() {
        let cfg = tiny_cfg();
        let mut wm = WorldModel::new(cfg, &solo_group(), 1, 7).unwrap();
        let mut entries: Vec<(String, ParamSet)> = wm
            .param_entries()
            .iter()
            .map(|(n, p)| (n.clone(), (*p).clone()))
            .collect();
        for (name, params) in &mut entries {
            zero_params(params);
            if name.ends_with(".old") {
                let b2 = params.get_mut("mlp.b2").as_mut_slice();
                b2[0] = 3.0;
                b2[1] = 4.0;
            }
        }
        wm.restore(&entries).unwrap();

        let window = solo_window(&cfg, [0.0, 0.0]);
        let sig = Curiosity::new(
            &CuriosityConfig { kind: SignalKind::GammaProgress, ..CuriosityConfig::default() },
            &wm,
            0,
        )
        .unwrap();
        let r = sig.reward(&wm, &window);
        assert!((r - 5.0).abs() < 1e-12, "reward {r}");
    }

    #[test]
    fn gamma_progress_is_zero_when_old_equals_live() {
        let wm = WorldModel::new(tiny_cfg(), &solo_group(), 1, 8).unwrap();
        let sig = Curiosity::new(&CuriosityConfig::default(), &wm, 0).unwrap();
        let window = solo_window(wm.cfg(), [2.0, -1.0]);
        assert_eq!(sig.reward(&wm, &window), 0.0);
    }

    #[test]
    fn gamma_progress_is_antisymmetric_in_the_two_scores() {
        let mut wm = WorldModel::new(tiny_cfg(), &solo_group(), 1, 9).unwrap();
        let window = solo_window(wm.cfg(), [4.0, 4.0]);
        let batch = [window.as_slice()];
        for _ in 0..3 {
            wm.train_all(&batch).unwrap();
        }
        let sig = Curiosity::new(&CuriosityConfig::default(), &wm, 0).unwrap();
        let r = sig.reward(&wm, &window);
        let swapped = wm.score(WhichParams::Live, &batch).total()
            - wm.score(WhichParams::Old, &batch).total();
        assert!((r + swapped).abs() < 1e-12);
        assert!(r != 0.0, "training should separate old from live");
    }

    #[test]
    fn delta_progress_is_zero_before_any_snapshot() {
        let wm = WorldModel::new(tiny_cfg(), &solo_group(), 1, 10).unwrap();
        let cfg = CuriosityConfig { kind: SignalKind::DeltaProgress, ..CuriosityConfig::default() };
        let sig = Curiosity::new(&cfg, &wm, 0).unwrap();
        assert_eq!(sig.reward(&wm, &solo_window(wm.cfg(), [1.0, 1.0])), 0.0);
    }

    #[test]
    fn delta_progress_equals_forced_old_gamma_progress() {
        let mut wm = WorldModel::new(tiny_cfg(), &solo_group(), 1, 11).unwrap();
        let cfg = CuriosityConfig { kind: SignalKind::DeltaProgress, ..CuriosityConfig::default() };
        let mut sig = Curiosity::new(&cfg, &wm, 0).unwrap();
        let window = solo_window(wm.cfg(), [3.0, -2.0]);
        let batch = [window.as_slice()];

        sig.begin_update_round(&wm);
        let snapshot: Vec<ParamSet> =
            wm.components().iter().map(|c| c.live().clone()).collect();
        for _ in 0..4 {
            wm.train_all(&batch).unwrap();
        }
        let r = sig.reward(&wm, &window);
        assert!(r != 0.0);

        // Second path: overwrite the EMA copy with the snapshot and read
        // the same difference through γ-Progress.
        let mut entries: Vec<(String, ParamSet)> = Vec::new();
        for (c, s) in wm.components().iter().zip(&snapshot) {
            entries.push((format!("wm.{}.live", c.name()), c.live().clone()));
            entries.push((format!("wm.{}.old", c.name()), s.clone()));
        }
        wm.restore(&entries).unwrap();
        let gp = Curiosity::new(&CuriosityConfig::default(), &wm, 0).unwrap();
        assert_eq!(r, gp.reward(&wm, &window));
    }

    #[test]
    fn delta_progress_keeps_only_delta_snapshots() {
        let mut wm = WorldModel::new(tiny_cfg(), &solo_group(), 1, 12).unwrap();
        let cfg = CuriosityConfig {
            kind: SignalKind::DeltaProgress,
            delta: 2,
            ..CuriosityConfig::default()
        };
        let mut sig = Curiosity::new(&cfg, &wm, 0).unwrap();
        let window = solo_window(wm.cfg(), [1.0, 2.0]);
        let batch = [window.as_slice()];

        // Rounds 1..=3; after round 3 the oldest retained snapshot is the
        // one taken at round 2.
        let mut round_starts = Vec::new();
        for _ in 0..3 {
            sig.begin_update_round(&wm);
            round_starts.push(wm.score(WhichParams::Live, &batch).total());
            wm.train_all(&batch).unwrap();
        }
        let live = wm.score(WhichParams::Live, &batch).total();
        let r = sig.reward(&wm, &window);
        assert!((r - (round_starts[1] - live)).abs() < 1e-12);
    }

    #[test]
    fn rnd_reward_is_zero_when_predictor_copies_target() {
        let mut rnd = Rnd::new(11, 16, 8, 1e-3, 42).unwrap();
        let obs: Vec<f64> = (0..11).map(|i| 0.3 * i as f64 - 1.0).collect();
        assert!(rnd.reward(&obs) > 0.0, "independent init should disagree");
        *rnd.predictor_mut() = rnd.target().clone();
        assert_eq!(rnd.reward(&obs), 0.0);
    }

    #[test]
    fn rnd_training_drives_reward_down_on_a_fixed_point() {
        let mut rnd = Rnd::new(7, 24, 12, 3e-3, 43).unwrap();
        let obs: Vec<f64> = vec![0.5, -1.0, 2.0, 0.0, 1.5, -0.25, 0.75];
        let before = rnd.reward(&obs);
        let mut milestones = vec![before];
        for i in 0..400 {
            rnd.train(&[&obs]).unwrap();
            if (i + 1) % 100 == 0 {
                milestones.push(rnd.reward(&obs));
            }
        }
        for pair in milestones.windows(2) {
            assert!(pair[1] < pair[0], "milestones not decreasing: {milestones:?}");
        }
        assert!(*milestones.last().unwrap() < 0.05 * before);
    }

    #[test]
    fn rnd_rewards_differ_across_observations_at_init() {
        let rnd = Rnd::new(9, 32, 16, 1e-3, 44).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let mut rewards = Vec::new();
        for _ in 0..8 {
            let obs: Vec<f64> = (0..9).map(|_| rng.gen_range(-2.0..2.0)).collect();
            rewards.push(rnd.reward(&obs));
        }
        for i in 1..rewards.len() {
            assert!(rewards[i] != rewards[0]);
        }
    }

    #[test]
    fn rnd_target_checksum_survives_training() {
        let mut rnd = Rnd::new(5, 8, 4, 1e-2, 46).unwrap();
        let sum = rnd.target().checksum();
        let obs = [1.0, 0.0, -1.0, 0.5, 2.0];
        for _ in 0..50 {
            rnd.train(&[&obs]).unwrap();
        }
        assert_eq!(rnd.target().checksum(), sum);
        assert!(rnd.predictor().checksum() != sum);
    }

    #[test]
    fn disagreement_is_zero_for_identical_members() {
        let wm = WorldModel::new(tiny_cfg(), &solo_group(), 1, 13).unwrap();
        let cfg = CuriosityConfig { kind: SignalKind::Disagreement, ..CuriosityConfig::default() };
        let mut sig = Curiosity::new(&cfg, &wm, 0).unwrap();
        // Clone the live parameters into every extra member.
        let entries: Vec<(String, ParamSet)> = wm
            .param_entries()
            .iter()
            .map(|(n, p)| (n.clone(), (*p).clone()))
            .collect();
        if let State::Disagreement(es) = &mut sig.state {
            for m in &mut es.extras {
                m.restore(&entries).unwrap();
            }
        }
        assert_eq!(sig.reward(&wm, &solo_window(wm.cfg(), [1.0, -1.0])), 0.0);
    }

    /// Members rigged to output constants 1, 2, 3 on every coordinate: the
    /// population variance is 2/3 everywhere, so the mean is too.
    #[test]
    fn disagreement_matches_population_variance_by_hand() {
        let cfg = tiny_cfg();
        let mut wm = WorldModel::new(cfg, &solo_group(), 1, 14).unwrap();
        let curio_cfg =
            CuriosityConfig { kind: SignalKind::Disagreement, ..CuriosityConfig::default() };
        let mut sig = Curiosity::new(&curio_cfg, &wm, 0).unwrap();

        let rig = |model: &mut WorldModel, value: f64| {
            let mut entries: Vec<(String, ParamSet)> = model
                .param_entries()
                .iter()
                .map(|(n, p)| (n.clone(), (*p).clone()))
                .collect();
            for (_, params) in &mut entries {
                zero_params(params);
                let b2 = params.get_mut("mlp.b2").as_mut_slice();
                b2[0] = value;
                b2[1] = value;
            }
            model.restore(&entries).unwrap();
        };
        rig(&mut wm, 1.0);
        if let State::Disagreement(es) = &mut sig.state {
            rig(&mut es.extras[0], 2.0);
            rig(&mut es.extras[1], 3.0);
        }

        let r = sig.reward(&wm, &solo_window(wm.cfg(), [0.0, 0.0]));
        assert!((r - 2.0 / 3.0).abs() < 1e-12, "reward {r}");
    }

    #[test]
    fn disagreement_ignores_common_output_shifts() {
        let cfg = tiny_cfg();
        let wm = WorldModel::new(cfg, &solo_group(), 1, 15).unwrap();
        let curio_cfg =
            CuriosityConfig { kind: SignalKind::Disagreement, ..CuriosityConfig::default() };
        let mut sig = Curiosity::new(&curio_cfg, &wm, 99).unwrap();
        let window = solo_window(wm.cfg(), [2.0, 2.0]);
        let before = sig.reward(&wm, &window);
        assert!(before > 0.0);

        // Shift every member's coordinate outputs by the same constant.
        let mut shifted_wm = WorldModel::new(cfg, &solo_group(), 1, 15).unwrap();
        let shift = |model: &mut WorldModel, c: f64| {
            let mut entries: Vec<(String, ParamSet)> = model
                .param_entries()
                .iter()
                .map(|(n, p)| (n.clone(), (*p).clone()))
                .collect();
            for (name, params) in &mut entries {
                if name.ends_with(".live") {
                    let b2 = params.get_mut("mlp.b2").as_mut_slice();
                    b2[0] += c;
                    b2[1] += c;
                }
            }
            model.restore(&entries).unwrap();
        };
        shift(&mut shifted_wm, 10.0);
        if let State::Disagreement(es) = &mut sig.state {
            for m in &mut es.extras {
                shift(m, 10.0);
            }
        }
        let after = sig.reward(&shifted_wm, &window);
        assert!((after - before).abs() < 1e-9, "{before} vs {after}");
    }

    #[test]
    fn disagreement_rejects_tiny_ensembles() {
        let wm = WorldModel::new(tiny_cfg(), &solo_group(), 1, 16).unwrap();
        let cfg = CuriosityConfig {
            kind: SignalKind::Disagreement,
            ensemble: 1,
            ..CuriosityConfig::default()
        };
        assert!(Curiosity::new(&cfg, &wm, 0).is_err());
    }

    #[test]
    fn adversarial_reads_the_coordinate_error() {
        let cfg = tiny_cfg();
        let mut wm = WorldModel::new(cfg, &solo_group(), 1, 17).unwrap();
        let mut entries: Vec<(String, ParamSet)> = wm
            .param_entries()
            .iter()
            .map(|(n, p)| (n.clone(), (*p).clone()))
            .collect();
        for (_, params) in &mut entries {
            zero_params(params);
        }
        wm.restore(&entries).unwrap();

        let window = solo_window(&cfg, [3.0, 4.0]);
        let curio_cfg =
            CuriosityConfig { kind: SignalKind::Adversarial, ..CuriosityConfig::default() };
        let sig = Curiosity::new(&curio_cfg, &wm, 0).unwrap();
        let r = sig.reward(&wm, &window);
        assert!((r - 5.0).abs() < 1e-12, "reward {r}");

        let with_ce = Curiosity::new(
            &CuriosityConfig { adversarial_include_ce: true, ..curio_cfg },
            &wm,
            0,
        )
        .unwrap();
        let scored = wm.score(WhichParams::Live, &[window.as_slice()]);
        assert_eq!(with_ce.reward(&wm, &window), scored.total());
        assert!((r - (scored.total() - scored.ce)).abs() < 1e-12);
    }

    #[test]
    fn random_signal_is_always_zero_and_bypasses_the_critic() {
        for seed in [1u64, 2, 3] {
            let wm = WorldModel::new(tiny_cfg(), &solo_group(), 1, seed).unwrap();
            let cfg = CuriosityConfig { kind: SignalKind::Random, ..CuriosityConfig::default() };
            let sig = Curiosity::new(&cfg, &wm, seed).unwrap();
            assert_eq!(sig.reward(&wm, &solo_window(wm.cfg(), [5.0, 5.0])), 0.0);
            assert!(sig.uses_random_policy());
        }
    }

    /// Every kind builds from config and answers the same call shape.
    #[test]
    fn all_kinds_share_the_reward_interface() {
        let wm = WorldModel::new(tiny_cfg(), &solo_group(), 1, 18).unwrap();
        let window = solo_window(wm.cfg(), [1.0, 1.0]);
        let batch = [window.as_slice()];
        for kind in SignalKind::ALL {
            let cfg = CuriosityConfig { kind, ..CuriosityConfig::default() };
            let mut sig = Curiosity::new(&cfg, &wm, 5).unwrap();
            sig.begin_update_round(&wm);
            sig.train_step(&wm, &batch).unwrap();
            let r = sig.reward(&wm, &window);
            assert!(r.is_finite(), "{} produced {r}", kind.label());
            assert_eq!(sig.kind(), kind);
            assert_eq!(SignalKind::parse(kind.label()), Some(kind));
        }
    }
}
