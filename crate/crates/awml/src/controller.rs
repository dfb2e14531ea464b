//! ε-greedy DQN gaze controller and the shared step-record replay.
//!
//! The buffer stores one [`StepRecord`] per environment step in arrival
//! order, so a single ring serves both consumers: the world model samples
//! contiguous prediction windows from it, and the DQN assembles n-step
//! transitions from it at sampling time. Assembling late matters: rewards
//! written into the buffer stay exactly as the curiosity signal scored them
//! at collection time, while the bootstrap tail always uses the current
//! target network.
//!
//! The Q-network reads the three most recent observations, flattened, and
//! emits one value per gaze action. Updates are standard DQN with an
//! n-step return and a periodically synced target copy.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::rng::{stream, tag};
use crate::env::N_ACTIONS;
use crate::numcore::{Adam, AdamConfig, MlpSpec, NumError, ParamSet, Tape, Tensor};
use crate::worldmodel::StepRecord;

/// Observations fed to the Q-network per decision: x_{t-2:t}.
pub const Q_WINDOW: usize = 3;

/// Controller hyperparameters. Defaults are the full-scale settings; desk
/// runs shrink `hidden` and `batch` through the config file.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub hidden: usize,
    pub lr: f64,
    pub batch: usize,
    /// Discount β applied per environment step.
    pub discount: f64,
    /// Bootstrapping horizon: rewards summed for this many steps before
    /// the target-net tail takes over.
    pub nstep: usize,
    /// Q-updates between target-network copies.
    pub target_sync: u64,
    /// Replay capacity; the oldest record is evicted beyond this.
    pub replay_capacity: usize,
    pub eps0: f64,
    pub eps_min: f64,
    /// Linear ε decay per environment step.
    pub eps_decay: f64,
}

impl Default for DqnConfig {
    fn default() -> DqnConfig {
        DqnConfig {
            hidden: 512,
            lr: 1e-4,
            batch: 256,
            discount: 0.99,
            nstep: 200,
            target_sync: 1000,
            replay_capacity: 200_000,
            eps0: 1.0,
            eps_min: 0.025,
            eps_decay: 1e-4,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<(), NumError> {
        if self.nstep == 0 {
            return Err(NumError::Config("nstep must be at least 1".into()));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(NumError::Config(format!("discount {} out of (0, 1)", self.discount)));
        }
        if self.hidden == 0 || self.batch == 0 || self.replay_capacity == 0 {
            return Err(NumError::Config("hidden, batch, and capacity must be positive".into()));
        }
        if self.lr <= 0.0 || self.target_sync == 0 {
            return Err(NumError::Config("lr and target_sync must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.eps_min)
            || !(0.0..=1.0).contains(&self.eps0)
            || self.eps_min > self.eps0
            || self.eps_decay < 0.0
        {
            return Err(NumError::Config("epsilon schedule out of range".into()));
        }
        Ok(())
    }

    /// ε after `step` environment steps: linear from `eps0` down to
    /// `eps_min`, then flat.
    pub fn eps_at(&self, step: u64) -> f64 {
        (self.eps0 - self.eps_decay * step as f64).max(self.eps_min)
    }
}

/// Arrival-ordered ring of step records with positional contiguity: entry
/// `i` was recorded exactly `len - 1 - i` steps before the newest one.
pub struct ReplayBuffer {
    capacity: usize,
    records: VecDeque<StepRecord>,
    next_step: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { capacity, records: VecDeque::with_capacity(capacity), next_step: 0 }
    }

    /// Appends a record, evicting the oldest at capacity; returns the
    /// global step index assigned to it.
    pub fn push(&mut self, record: StepRecord) -> u64 {
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
        let idx = self.next_step;
        self.next_step += 1;
        idx
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Global step index of the oldest retained record.
    pub fn first_step(&self) -> u64 {
        self.next_step - self.records.len() as u64
    }

    pub fn record(&self, i: usize) -> &StepRecord {
        &self.records[i]
    }

    /// `count` uniformly placed contiguous windows of `len` records each,
    /// copied out so the borrow ends with the call.
    pub fn sample_windows(
        &self,
        rng: &mut ChaCha8Rng,
        count: usize,
        len: usize,
    ) -> Result<Vec<Vec<StepRecord>>, NumError> {
        if self.records.len() < len {
            return Err(NumError::Config(format!(
                "replay holds {} records, need {len} for a window",
                self.records.len()
            )));
        }
        let max_start = self.records.len() - len;
        Ok((0..count)
            .map(|_| {
                let s = rng.gen_range(0..=max_start);
                (s..s + len).map(|i| self.records[i].clone()).collect()
            })
            .collect())
    }

    /// Oldest start index usable for an n-step transition (needs a full
    /// Q window of history behind it) and the newest exclusive bound
    /// (needs `nstep` rewards plus a bootstrap window ahead).
    fn transition_bounds(&self, nstep: usize) -> Option<(usize, usize)> {
        let need = (Q_WINDOW - 1) + nstep + 1;
        if self.records.len() <= need {
            return None;
        }
        Some((Q_WINDOW - 1, self.records.len() - nstep))
    }

    fn flat_q_window(&self, end: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(Q_WINDOW * self.records[end].obs.len());
        for i in end + 1 - Q_WINDOW..=end {
            x.extend_from_slice(&self.records[i].obs);
        }
        x
    }

    /// `count` n-step transitions with the reward sum discounted at
    /// sampling time.
    pub fn sample_transitions(
        &self,
        rng: &mut ChaCha8Rng,
        count: usize,
        nstep: usize,
        discount: f64,
    ) -> Result<Vec<Transition>, NumError> {
        let Some((lo, hi)) = self.transition_bounds(nstep) else {
            return Err(NumError::Config(format!(
                "replay holds {} records, too few for {nstep}-step transitions",
                self.records.len()
            )));
        };
        Ok((0..count)
            .map(|_| {
                let s = rng.gen_range(lo..hi);
                let mut ret = 0.0;
                let mut scale = 1.0;
                for i in 0..nstep {
                    ret += scale * self.records[s + i].reward;
                    scale *= discount;
                }
                Transition {
                    x: self.flat_q_window(s),
                    action: self.records[s].action,
                    ret,
                    x_boot: self.flat_q_window(s + nstep),
                }
            })
            .collect())
    }
}

/// One assembled n-step transition: decision window, chosen action, the
/// discounted reward sum, and the window the bootstrap tail evaluates.
#[derive(Clone, Debug)]
pub struct Transition {
    pub x: Vec<f64>,
    pub action: usize,
    pub ret: f64,
    pub x_boot: Vec<f64>,
}

/// Q-network pair (live and target) plus its optimizer.
pub struct Dqn {
    cfg: DqnConfig,
    spec: MlpSpec,
    live: ParamSet,
    target: ParamSet,
    opt: Adam,
    updates: u64,
}

impl Dqn {
    /// `obs_dim` is the width of one flattened observation; the network
    /// consumes `Q_WINDOW` of them side by side.
    pub fn new(cfg: DqnConfig, obs_dim: usize, seed: u64) -> Result<Dqn, NumError> {
        cfg.validate()?;
        let spec = MlpSpec::new(Q_WINDOW * obs_dim, cfg.hidden, N_ACTIONS);
        let mut live = ParamSet::new();
        spec.init_into(&mut live, "q.", &mut stream(seed, &[tag::MODEL_INIT, Q_INIT_SUBTAG]))?;
        let target = live.clone();
        let opt = Adam::new(AdamConfig::with_lr(cfg.lr), &live);
        Ok(Dqn { cfg, spec, live, target, opt, updates: 0 })
    }

    pub fn cfg(&self) -> &DqnConfig {
        &self.cfg
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn live(&self) -> &ParamSet {
        &self.live
    }

    pub fn target(&self) -> &ParamSet {
        &self.target
    }

    fn forward_values(&self, params: &ParamSet, xs: &[&[f64]]) -> Tensor {
        let mut x = Tensor::zeros(&[xs.len(), self.spec.input]);
        for (r, row) in xs.iter().enumerate() {
            assert_eq!(row.len(), self.spec.input, "q input width");
            x.as_mut_slice()[r * self.spec.input..(r + 1) * self.spec.input].copy_from_slice(row);
        }
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let q = self.spec.forward(&mut tape, params, "q.", xv);
        tape.value(q).clone()
    }

    /// Q-values of the live network for one flattened decision window.
    pub fn q_values(&self, x: &[f64]) -> Vec<f64> {
        self.forward_values(&self.live, &[x]).as_slice().to_vec()
    }

    /// One DQN step on a sampled batch; returns the TD loss before the
    /// update. The target network refreshes every `target_sync` updates.
    pub fn update(&mut self, replay: &ReplayBuffer, rng: &mut ChaCha8Rng) -> Result<f64, NumError> {
        let batch =
            replay.sample_transitions(rng, self.cfg.batch, self.cfg.nstep, self.cfg.discount)?;
        let boot_scale = self.cfg.discount.powi(self.cfg.nstep as i32);

        let boots: Vec<&[f64]> = batch.iter().map(|t| t.x_boot.as_slice()).collect();
        let boot_q = self.forward_values(&self.target, &boots);
        let targets: Vec<f64> = batch
            .iter()
            .enumerate()
            .map(|(r, t)| {
                let best = (0..N_ACTIONS).map(|a| boot_q.at(r, a)).fold(f64::NEG_INFINITY, f64::max);
                t.ret + boot_scale * best
            })
            .collect();
        let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();

        let mut x = Tensor::zeros(&[batch.len(), self.spec.input]);
        for (r, t) in batch.iter().enumerate() {
            x.as_mut_slice()[r * self.spec.input..(r + 1) * self.spec.input]
                .copy_from_slice(&t.x);
        }
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let q = self.spec.forward(&mut tape, &self.live, "q.", xv);
        let loss = tape.td_loss(q, &actions, &targets);
        let value = tape.scalar_value(loss);
        let grads = tape.backward(loss, &self.live);
        self.opt.step(&mut self.live, &grads)?;

        self.updates += 1;
        if self.updates % self.cfg.target_sync == 0 {
            self.target = self.live.clone();
        }
        Ok(value)
    }

    /// Named parameter sets for checkpointing.
    pub fn param_entries(&self) -> Vec<(String, &ParamSet)> {
        vec![("dqn.live".into(), &self.live), ("dqn.target".into(), &self.target)]
    }

    pub fn restore(&mut self, entries: &[(String, ParamSet)]) -> Result<(), NumError> {
        let mut found = 0;
        for (name, set) in entries {
            if name == "dqn.live" {
                self.live.copy_from(set)?;
                found += 1;
            } else if name == "dqn.target" {
                self.target.copy_from(set)?;
                found += 1;
            }
        }
        if found != 2 {
            return Err(NumError::Schema {
                context: "dqn restore",
                detail: "missing live or target entry".into(),
            });
        }
        Ok(())
    }
}

/// Init-stream suffix separating the Q-network from world-model components.
const Q_INIT_SUBTAG: u64 = 1000;

/// ε-greedy over the given values: uniform with probability `eps`, else
/// the argmax with ties broken toward the lowest index.
pub fn select_action(qvals: &[f64], eps: f64, rng: &mut ChaCha8Rng) -> usize {
    assert_eq!(qvals.len(), N_ACTIONS, "q-value count");
    assert!((0.0..=1.0).contains(&eps), "eps {eps} out of [0, 1]");
    if rng.gen::<f64>() < eps {
        return rng.gen_range(0..N_ACTIONS);
    }
    let mut best = 0;
    for (i, v) in qvals.iter().enumerate().skip(1) {
        if *v > qvals[best] {
            best = i;
        }
    }
    best
}
