//! The training loop and the analysis that reads its artifacts.
//!
//! One run interleaves three clocks. Every env step the controller picks a
//! gaze action, the env advances, and the step is logged and buffered.
//! Every `steps_per_round` steps (once `min_buffer` records exist) an update
//! round executes `grad_steps_per_round` iterations of: world-model Adam
//! step on every component, curiosity-side training (RND predictor,
//! ensemble extras), and one DQN update. Every `validate_every` steps the
//! live model is scored on held-out rollouts, one per behavior, each in a
//! fresh world instance forked from the run seed.
//!
//! Validation is side-effect free by construction: it reads the world model,
//! forks the env, and draws randomness from its own seed stream, so a run
//! with validation disabled produces bit-identical training artifacts.
//!
//! Buffered records carry the observation the agent acted *from*, the
//! action, and the curiosity reward assigned once the observation window is
//! full. The same ring of records serves world-model window sampling and
//! DQN n-step transition assembly.
//!
//! The analysis half turns logged runs into the headline quantities: end
//! performance (inverse mean of the last five validation losses), attention
//! ratios and differentials, the two failure-mode labels, and the
//! early-indicator comparison that pits attention features against
//! performance features at predicting final-performance tertiles.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::controller::{select_action, Dqn, Q_WINDOW, ReplayBuffer};
use crate::curiosity::Curiosity;
use crate::env::behavior::BehaviorKind;
use crate::env::geometry::{circ_diff_deg, rotate_deg};
use crate::env::rng::{stream, tag};
use crate::env::{Action, Env, EnvError, GroupSpec, WorldKind, N_ACTIONS};
use crate::numcore::NumError;
use crate::worldmodel::{StepRecord, WhichParams, WorldModel};

/// Window batch size used when scoring long validation rollouts; bounds the
/// tape memory of a single forward pass.
const SCORE_CHUNK: usize = 256;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("analysis: {0}")]
    Analysis(String),
}

/// One logged env step: the observation the agent acted from, the action,
/// the schedule epsilon, the curiosity reward, and which agents were in
/// view. Replay re-derives everything else.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub t: u64,
    pub action: usize,
    pub eps: f64,
    pub reward: f64,
    pub visible_agents: Vec<usize>,
    pub obs: Vec<f64>,
}

/// Batch-mean loss of one behavior group on its held-out rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupLoss {
    pub name: String,
    pub loss: f64,
}

/// One validation pass: per-behavior losses plus the world-level scalar
/// (mixture: mean over static, periodic, and animate; noise world: animate
/// only).
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationPoint {
    /// Env steps completed when this validation ran.
    pub step: u64,
    pub losses: Vec<GroupLoss>,
    pub scalar: f64,
}

/// Everything a finished run hands to the caller: logs plus the trained
/// models for checkpointing.
pub struct RunOutput {
    pub validations: Vec<ValidationPoint>,
    pub events: Vec<StepEvent>,
    pub wm: WorldModel,
    pub dqn: Dqn,
    pub curiosity: Curiosity,
}

/// Builds the training env a config describes.
pub fn build_env(cfg: &RunConfig) -> Result<Env, EnvError> {
    Env::new(cfg.room, cfg.behavior, cfg.world_spec())
}

/// Runs one full training run. `progress` fires after each validation.
pub fn run(
    cfg: &RunConfig,
    progress: &mut dyn FnMut(&ValidationPoint),
) -> Result<RunOutput, HarnessError> {
    cfg.validate().map_err(|e| HarnessError::Analysis(e.to_string()))?;
    let mut env = build_env(cfg)?;
    let n_agents = env.n_agents();
    let mut wm = WorldModel::new(cfg.world_model, env.groups(), n_agents, cfg.seed)?;
    let mut curiosity = Curiosity::new(&cfg.curiosity, &wm, cfg.seed)?;
    let mut dqn = Dqn::new(cfg.dqn, env.obs_dim(), cfg.seed)?;
    let mut replay = ReplayBuffer::new(cfg.dqn.replay_capacity);

    let random_policy = curiosity.uses_random_policy();
    let window_len = wm.window_len();
    let h = &cfg.harness;

    let mut policy_rng = stream(cfg.seed, &[tag::POLICY]);
    let mut wm_rng = stream(cfg.seed, &[tag::REPLAY_SAMPLE, 0]);
    let mut q_rng = stream(cfg.seed, &[tag::REPLAY_SAMPLE, 1]);

    let mut chat = env.initial_estimates();
    let mut current_obs = env.observe(&chat)?.flatten();
    update_chat(&mut chat, &current_obs);

    let mut obs_hist: VecDeque<Vec<f64>> = VecDeque::with_capacity(Q_WINDOW);
    obs_hist.push_back(current_obs.clone());

    let mut recent: VecDeque<StepRecord> = VecDeque::with_capacity(window_len);
    let mut events = Vec::with_capacity(h.total_steps as usize);
    let mut validations = Vec::new();

    for t in 0..h.total_steps {
        let eps = if random_policy { 1.0 } else { dqn.cfg().eps_at(t) };
        let action = if random_policy {
            policy_rng.gen_range(0..N_ACTIONS)
        } else {
            select_action(&dqn.q_values(&q_input(&obs_hist)), eps, &mut policy_rng)
        };

        let obs_next = env.env_step(Action::from_index(action), &chat)?.flatten();
        update_chat(&mut chat, &obs_next);

        let mut rec = StepRecord { obs: current_obs.clone(), action, reward: 0.0 };
        if recent.len() + 1 >= window_len {
            let skip = recent.len() + 1 - window_len;
            let mut window: Vec<StepRecord> = recent.iter().skip(skip).cloned().collect();
            window.push(rec.clone());
            rec.reward = curiosity.reward(&wm, &window);
        }
        recent.push_back(rec.clone());
        if recent.len() > window_len {
            recent.pop_front();
        }
        replay.push(rec.clone());

        events.push(StepEvent {
            t,
            action,
            eps,
            reward: rec.reward,
            visible_agents: visible_from(&current_obs, n_agents),
            obs: current_obs,
        });
        current_obs = obs_next;
        obs_hist.push_back(current_obs.clone());
        if obs_hist.len() > Q_WINDOW {
            obs_hist.pop_front();
        }

        if (t + 1) % h.steps_per_round == 0 && replay.len() >= h.min_buffer {
            curiosity.begin_update_round(&wm);
            for _ in 0..h.grad_steps_per_round {
                let windows =
                    replay.sample_windows(&mut wm_rng, cfg.world_model.batch, window_len)?;
                let refs: Vec<&[StepRecord]> = windows.iter().map(Vec::as_slice).collect();
                wm.train_all(&refs)?;
                curiosity.train_step(&wm, &refs)?;
                if !random_policy {
                    dqn.update(&replay, &mut q_rng)?;
                }
            }
        }

        if (t + 1) % h.validate_every == 0 {
            let k = (t + 1) / h.validate_every;
            let point = run_validation(cfg, &env, &wm, k, t + 1)?;
            progress(&point);
            validations.push(point);
        }
    }

    Ok(RunOutput { validations, events, wm, dqn, curiosity })
}

/// Copies visible agents' true positions into the persistent estimate
/// vector; out-of-view agents keep their last known position.
fn update_chat(chat: &mut [[f64; 2]], obs: &[f64]) {
    for (i, c) in chat.iter_mut().enumerate() {
        if obs[3 * i + 2] == 1.0 {
            *c = [obs[3 * i], obs[3 * i + 1]];
        }
    }
}

fn visible_from(obs: &[f64], n_agents: usize) -> Vec<usize> {
    (0..n_agents).filter(|a| obs[3 * a + 2] == 1.0).collect()
}

/// Flattened controller input: the last `Q_WINDOW` observations, oldest
/// first, front-padded by repeating the earliest one.
fn q_input(hist: &VecDeque<Vec<f64>>) -> Vec<f64> {
    let earliest = hist.front().expect("at least one observation");
    let mut x = Vec::with_capacity(Q_WINDOW * earliest.len());
    for _ in hist.len()..Q_WINDOW {
        x.extend_from_slice(earliest);
    }
    for o in hist {
        x.extend_from_slice(o);
    }
    x
}

/// The diagonal bearing of a quadrant's zone, in degrees.
pub fn zone_diag_deg(quadrant: u8) -> f64 {
    45.0 + 90.0 * f64::from(quadrant - 1)
}

/// The rotation that lands the gaze closest to `target_deg`. Ties resolve
/// to the first action in declaration order.
pub fn stare_action(orientation_deg: f64, target_deg: f64) -> Action {
    let mut best = Action::ALL[0];
    let mut best_err = f64::INFINITY;
    for a in Action::ALL {
        let err = circ_diff_deg(target_deg, rotate_deg(orientation_deg, a.delta_deg())).abs();
        if err < best_err {
            best_err = err;
            best = a;
        }
    }
    best
}

/// Held-out rollout under the fixed evaluation policy: stare at the target
/// zone's diagonal. The field of view is wider than a zone, so the target
/// behavior stays fully in view, which keeps a hiding agent watched (and
/// therefore peeking on schedule) and keeps reaching targets observed
/// through their relocations.
pub fn stare_rollout(
    env: &mut Env,
    steps: u64,
    target_deg: f64,
) -> Result<Vec<StepRecord>, HarnessError> {
    let mut chat = env.initial_estimates();
    let mut obs = env.observe(&chat)?.flatten();
    update_chat(&mut chat, &obs);
    let mut records = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        let action = stare_action(env.orientation_deg(), target_deg);
        let next = env.env_step(action, &chat)?.flatten();
        update_chat(&mut chat, &next);
        records.push(StepRecord { obs, action: action.index(), reward: 0.0 });
        obs = next;
    }
    Ok(records)
}

/// Batch-mean loss of one group over every contiguous window of a rollout,
/// scored in bounded chunks.
pub fn score_records(wm: &WorldModel, group: &GroupSpec, records: &[StepRecord]) -> f64 {
    let len = wm.window_len();
    assert!(records.len() >= len, "rollout shorter than one window");
    let starts: Vec<usize> = (0..=records.len() - len).collect();
    let mut sum = 0.0;
    for chunk in starts.chunks(SCORE_CHUNK) {
        let windows: Vec<&[StepRecord]> = chunk.iter().map(|&s| &records[s..s + len]).collect();
        let scored = wm.score_group(group, WhichParams::Live, &windows);
        sum += scored.total() * windows.len() as f64;
    }
    sum / starts.len() as f64
}

/// Scores every behavior on its own fresh world instance.
fn run_validation(
    cfg: &RunConfig,
    env: &Env,
    wm: &WorldModel,
    k: u64,
    step: u64,
) -> Result<ValidationPoint, HarnessError> {
    let mut losses = Vec::with_capacity(env.groups().len());
    for (gi, group) in env.groups().iter().enumerate() {
        let val_seed: u64 = stream(cfg.seed, &[tag::VALIDATION, k, gi as u64]).gen();
        let mut fork = env.validation_fork(val_seed)?;
        let records =
            stare_rollout(&mut fork, cfg.harness.validation_steps, zone_diag_deg(group.quadrant))?;
        let loss = score_records(wm, group, &records);
        losses.push(GroupLoss { name: group.name.clone(), loss });
    }
    let scalar = world_scalar(env.spec().kind, env.groups(), &losses);
    Ok(ValidationPoint { step, losses, scalar })
}

/// The per-world validation scalar: the mixture world averages the static,
/// periodic, and animate losses (noise is excluded as unlearnable); the
/// noise world reports the animate loss alone.
pub fn world_scalar(kind: WorldKind, groups: &[GroupSpec], losses: &[GroupLoss]) -> f64 {
    assert_eq!(groups.len(), losses.len(), "one loss per group");
    let mut sum = 0.0;
    let mut n = 0;
    for (g, l) in groups.iter().zip(losses) {
        let include = match kind {
            WorldKind::Mixture => g.kind != BehaviorKind::Noise,
            WorldKind::Noise => g.is_animate(),
        };
        if include {
            sum += l.loss;
            n += 1;
        }
    }
    sum / n as f64
}

/// Inverse of the mean of the last five values of a validation-loss series.
pub fn end_performance(scalars: &[f64]) -> Result<f64, HarnessError> {
    if scalars.len() < 5 {
        return Err(HarnessError::Analysis(format!(
            "end performance needs 5 validation points, got {}",
            scalars.len()
        )));
    }
    let tail = &scalars[scalars.len() - 5..];
    Ok(5.0 / tail.iter().sum::<f64>())
}

/// Visibility bookkeeping over a training log.
#[derive(Clone, Debug)]
pub struct AttentionSummary {
    pub total_steps: u64,
    /// Steps on which any agent of the group was in view, in group order.
    pub group_steps: Vec<u64>,
    pub animate_steps: u64,
    pub noise_steps: u64,
    /// animate_steps / noise_steps; infinite when noise was never watched.
    pub ratio: f64,
    /// Per non-overlapping window: animate visibility fraction minus the
    /// mean visibility fraction of the other groups.
    pub differential: Vec<f64>,
}

/// Tallies per-group visibility and the animate-vs-noise ratio from a
/// training event log.
pub fn attention_summary(
    groups: &[GroupSpec],
    events: &[StepEvent],
    window: u64,
) -> AttentionSummary {
    let window = window.max(1) as usize;
    let mut group_steps = vec![0u64; groups.len()];
    let n_windows = events.len() / window;
    let mut win_counts = vec![vec![0u64; groups.len()]; n_windows];
    for (i, e) in events.iter().enumerate() {
        for (gi, g) in groups.iter().enumerate() {
            let hit = e
                .visible_agents
                .iter()
                .any(|&a| a >= g.agent_start && a < g.agent_start + g.n_agents);
            if hit {
                group_steps[gi] += 1;
                if i / window < n_windows {
                    win_counts[i / window][gi] += 1;
                }
            }
        }
    }

    let mut animate_steps = 0;
    let mut noise_steps = 0;
    for (gi, g) in groups.iter().enumerate() {
        if g.is_animate() {
            animate_steps += group_steps[gi];
        } else if g.kind == BehaviorKind::Noise {
            noise_steps += group_steps[gi];
        }
    }
    let ratio = if noise_steps > 0 {
        animate_steps as f64 / noise_steps as f64
    } else if animate_steps > 0 {
        f64::INFINITY
    } else {
        0.0
    };

    let others = groups.iter().filter(|g| !g.is_animate()).count();
    let differential = win_counts
        .iter()
        .map(|counts| {
            let mut animate = 0.0;
            let mut other = 0.0;
            for (gi, g) in groups.iter().enumerate() {
                let frac = counts[gi] as f64 / window as f64;
                if g.is_animate() {
                    animate += frac;
                } else {
                    other += frac;
                }
            }
            animate - other / others as f64
        })
        .collect();

    AttentionSummary {
        total_steps: events.len() as u64,
        group_steps,
        animate_steps,
        noise_steps,
        ratio,
        differential,
    }
}

/// The two diagnostic labels for a signal's attention profile, measured
/// against the Random policy's across-seed spread.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    /// Mixture world: animate-to-noise attention indistinguishable from the
    /// Random policy's.
    Indifference,
    /// Noise world: animate attention collapses below the Random policy's.
    NoiseFixation,
}

impl FailureMode {
    pub fn label(self) -> &'static str {
        match self {
            FailureMode::Indifference => "indifference",
            FailureMode::NoiseFixation => "noise_fixation",
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Across-seed sample standard deviation.
fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Labels one signal's attention ratios against the Random baseline: in the
/// mixture world, a mean within two Random standard deviations of Random's
/// mean is Indifference; in the noise world, a mean more than two standard
/// deviations below Random's is NoiseFixation. Requires at least three
/// seeds on both sides.
pub fn classify_failure(
    world: WorldKind,
    signal_ratios: &[f64],
    random_ratios: &[f64],
) -> Result<Option<FailureMode>, HarnessError> {
    if signal_ratios.len() < 3 || random_ratios.len() < 3 {
        return Err(HarnessError::Analysis(format!(
            "failure classification needs at least 3 seeds per side, got {} and {}",
            signal_ratios.len(),
            random_ratios.len()
        )));
    }
    for r in signal_ratios.iter().chain(random_ratios) {
        if !r.is_finite() {
            return Err(HarnessError::Analysis(
                "attention ratio not finite; the run never watched a noise agent".into(),
            ));
        }
    }
    let ms = mean(signal_ratios);
    let mr = mean(random_ratios);
    let sd = sample_sd(random_ratios);
    Ok(match world {
        WorldKind::Mixture => ((ms - mr).abs() <= 2.0 * sd).then_some(FailureMode::Indifference),
        WorldKind::Noise => (ms < mr - 2.0 * sd).then_some(FailureMode::NoiseFixation),
    })
}

/// One run reduced to what the early-indicator analysis consumes.
#[derive(Clone, Debug)]
pub struct RunSample {
    pub behavior: BehaviorKind,
    /// Env steps between validation points.
    pub validate_every: u64,
    /// Validation scalar series, in order.
    pub scalars: Vec<f64>,
    /// Per training step: was any animate agent in view.
    pub anim_visible: Vec<bool>,
    /// Per training step: was any noise agent in view.
    pub noise_visible: Vec<bool>,
}

/// Accuracy of both feature families at one probe point.
#[derive(Clone, Copy, Debug)]
pub struct IndicatorPoint {
    /// Env steps of training the features may see.
    pub t: u64,
    pub acc_perf: f64,
    pub acc_att: f64,
}

/// Number of attention buckets the probe interval is split into.
pub const ATT_BUCKETS: usize = 10;

/// Ridge strength of the indicator classifiers.
pub const INDICATOR_L2: f64 = 1e-3;

/// For every validation point T, fits two leave-one-run-out multinomial
/// logistic classifiers predicting final-performance tertiles: one from the
/// validation-loss series up to T, one from bucketed attention fractions up
/// to T. Both get the behavior one-hot appended. Labels are tertiles of the
/// mean of the final four validation losses, computed within each behavior.
pub fn early_indicator(runs: &[RunSample]) -> Result<Vec<IndicatorPoint>, HarnessError> {
    let n = runs.len();
    if n < 6 {
        return Err(HarnessError::Analysis(format!(
            "early indicator needs at least 6 runs, got {n}"
        )));
    }
    let n_vals = runs[0].scalars.len();
    let ve = runs[0].validate_every;
    let steps = runs[0].anim_visible.len();
    for r in runs {
        if r.scalars.len() != n_vals || r.validate_every != ve || r.anim_visible.len() != steps {
            return Err(HarnessError::Analysis(
                "early indicator needs runs with identical schedules".into(),
            ));
        }
    }
    if n_vals < 4 {
        return Err(HarnessError::Analysis(
            "labels need at least four validation points".into(),
        ));
    }

    let labels = tertile_labels(runs)?;
    let mut behaviors: Vec<BehaviorKind> = runs.iter().map(|r| r.behavior).collect();
    behaviors.sort_by_key(|b| b.label());
    behaviors.dedup();
    let one_hot = |r: &RunSample| -> Vec<f64> {
        behaviors.iter().map(|b| f64::from(u8::from(*b == r.behavior))).collect()
    };

    let mut points = Vec::with_capacity(n_vals);
    for v in 1..=n_vals {
        let t = v as u64 * ve;
        let horizon = ((t as usize).min(steps)).max(ATT_BUCKETS);

        let perf_x: Vec<Vec<f64>> = runs
            .iter()
            .map(|r| {
                let mut f = r.scalars[..v].to_vec();
                f.extend(one_hot(r));
                f
            })
            .collect();
        let att_x: Vec<Vec<f64>> = runs
            .iter()
            .map(|r| {
                let mut f = bucket_fractions(&r.anim_visible[..horizon]);
                f.extend(bucket_fractions(&r.noise_visible[..horizon]));
                f.extend(one_hot(r));
                f
            })
            .collect();

        points.push(IndicatorPoint {
            t,
            acc_perf: loo_accuracy(&perf_x, &labels, 3, INDICATOR_L2),
            acc_att: loo_accuracy(&att_x, &labels, 3, INDICATOR_L2),
        });
    }
    Ok(points)
}

/// Mean of the final four validation losses, inverted to a performance, and
/// ranked into three classes of as-equal-as-possible size within each
/// behavior. Higher class index means higher final performance.
fn tertile_labels(runs: &[RunSample]) -> Result<Vec<usize>, HarnessError> {
    let mut labels = vec![0usize; runs.len()];
    let mut behaviors: Vec<BehaviorKind> = runs.iter().map(|r| r.behavior).collect();
    behaviors.sort_by_key(|b| b.label());
    behaviors.dedup();
    for b in behaviors {
        let idx: Vec<usize> =
            (0..runs.len()).filter(|&i| runs[i].behavior == b).collect();
        if idx.len() < 3 {
            return Err(HarnessError::Analysis(format!(
                "tertiles need at least 3 runs per behavior, {} has {}",
                b.label(),
                idx.len()
            )));
        }
        let perf = |i: usize| -> f64 {
            let s = &runs[i].scalars;
            4.0 / s[s.len() - 4..].iter().sum::<f64>()
        };
        let mut order = idx.clone();
        order.sort_by(|&a, &b| perf(a).partial_cmp(&perf(b)).unwrap().then(a.cmp(&b)));
        for (rank, &i) in order.iter().enumerate() {
            labels[i] = rank * 3 / order.len();
        }
    }
    Ok(labels)
}

/// Fraction of true flags in each of `ATT_BUCKETS` equal slices.
fn bucket_fractions(flags: &[bool]) -> Vec<f64> {
    let n = flags.len();
    (0..ATT_BUCKETS)
        .map(|b| {
            let lo = b * n / ATT_BUCKETS;
            let hi = (b + 1) * n / ATT_BUCKETS;
            if hi == lo {
                return 0.0;
            }
            flags[lo..hi].iter().filter(|&&f| f).count() as f64 / (hi - lo) as f64
        })
        .collect()
}

/// Leave-one-out cross-validated accuracy of an L2-regularized multinomial
/// logistic regression. Deterministic: zero init, full-batch gradient
/// descent with backtracking, features standardized on each training fold.
pub fn loo_accuracy(features: &[Vec<f64>], labels: &[usize], k: usize, l2: f64) -> f64 {
    let n = features.len();
    let mut correct = 0;
    for held in 0..n {
        let train_x: Vec<&[f64]> = (0..n)
            .filter(|&i| i != held)
            .map(|i| features[i].as_slice())
            .collect();
        let train_y: Vec<usize> =
            (0..n).filter(|&i| i != held).map(|i| labels[i]).collect();
        let (means, sds) = column_stats(&train_x);
        let xs: Vec<Vec<f64>> =
            train_x.iter().map(|r| standardize(r, &means, &sds)).collect();
        let model = softmax_fit(&xs, &train_y, k, l2);
        let probe = standardize(&features[held], &means, &sds);
        if model.predict(&probe) == labels[held] {
            correct += 1;
        }
    }
    correct as f64 / n as f64
}

fn column_stats(rows: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut means = vec![0.0; d];
    for r in rows {
        for (m, v) in means.iter_mut().zip(*r) {
            *m += v / n;
        }
    }
    let mut sds = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            sds[j] += (r[j] - means[j]) * (r[j] - means[j]) / n;
        }
    }
    for s in &mut sds {
        *s = s.sqrt();
    }
    (means, sds)
}

/// Z-scores against fold statistics; constant columns map to zero.
fn standardize(row: &[f64], means: &[f64], sds: &[f64]) -> Vec<f64> {
    row.iter()
        .zip(means)
        .zip(sds)
        .map(|((v, m), s)| if *s > 1e-12 { (v - m) / s } else { 0.0 })
        .collect()
}

struct Softmax {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Softmax {
    fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.w
            .iter()
            .zip(&self.b)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    fn predict(&self, x: &[f64]) -> usize {
        let s = self.scores(x);
        let mut best = 0;
        for (i, v) in s.iter().enumerate() {
            if *v > s[best] {
                best = i;
            }
        }
        best
    }
}

fn softmax_probs(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Cross-entropy plus ridge penalty and its gradient, averaged over rows.
fn softmax_loss_grad(
    m: &Softmax,
    xs: &[Vec<f64>],
    ys: &[usize],
    l2: f64,
) -> (f64, Vec<Vec<f64>>, Vec<f64>) {
    let k = m.w.len();
    let d = m.w[0].len();
    let n = xs.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![vec![0.0; d]; k];
    let mut gb = vec![0.0; k];
    for (x, &y) in xs.iter().zip(ys) {
        let p = softmax_probs(&m.scores(x));
        loss -= p[y].max(1e-300).ln() / n;
        for c in 0..k {
            let coeff = (p[c] - f64::from(u8::from(c == y))) / n;
            gb[c] += coeff;
            for (g, v) in gw[c].iter_mut().zip(x) {
                *g += coeff * v;
            }
        }
    }
    for c in 0..k {
        for (g, w) in gw[c].iter_mut().zip(&m.w[c]) {
            loss += l2 * w * w;
            *g += 2.0 * l2 * w;
        }
    }
    (loss, gw, gb)
}

fn softmax_fit(xs: &[Vec<f64>], ys: &[usize], k: usize, l2: f64) -> Softmax {
    let d = xs[0].len();
    let mut m = Softmax { w: vec![vec![0.0; d]; k], b: vec![0.0; k] };
    let mut lr = 1.0;
    let (mut loss, mut gw, mut gb) = softmax_loss_grad(&m, xs, ys, l2);
    for _ in 0..500 {
        let cand = Softmax {
            w: m.w
                .iter()
                .zip(&gw)
                .map(|(row, g)| row.iter().zip(g).map(|(w, g)| w - lr * g).collect())
                .collect(),
            b: m.b.iter().zip(&gb).map(|(b, g)| b - lr * g).collect(),
        };
        let (cand_loss, cand_gw, cand_gb) = softmax_loss_grad(&cand, xs, ys, l2);
        if cand_loss < loss {
            m = cand;
            loss = cand_loss;
            gw = cand_gw;
            gb = cand_gb;
            lr = (lr * 1.1).min(10.0);
        } else {
            lr *= 0.5;
            if lr < 1e-12 {
                break;
            }
        }
    }
    m
}

/// Outcome of re-simulating a logged run.
#[derive(Clone, Copy, Debug)]
pub struct ReplayReport {
    /// Events verified before stopping.
    pub steps_checked: usize,
    /// First event whose observation differs from the re-simulation.
    pub divergence: Option<u64>,
    /// Whether the log covers the configured run length.
    pub complete: bool,
}

/// Re-executes the env from a logged action sequence and compares every
/// logged observation bit for bit.
pub fn replay_events(cfg: &RunConfig, events: &[StepEvent]) -> Result<ReplayReport, HarnessError> {
    let mut env = build_env(cfg)?;
    let mut chat = env.initial_estimates();
    let mut obs = env.observe(&chat)?.flatten();
    update_chat(&mut chat, &obs);
    let mut checked = 0;
    for (i, e) in events.iter().enumerate() {
        if e.action >= N_ACTIONS || !bits_equal(&obs, &e.obs) {
            return Ok(ReplayReport {
                steps_checked: checked,
                divergence: Some(e.t),
                complete: false,
            });
        }
        checked = i + 1;
        obs = env.env_step(Action::from_index(e.action), &chat)?.flatten();
        update_chat(&mut chat, &obs);
    }
    Ok(ReplayReport {
        steps_checked: checked,
        divergence: None,
        complete: events.len() as u64 == cfg.harness.total_steps,
    })
}

fn bits_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}
