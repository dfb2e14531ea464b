//! Adam optimizer over a [`ParamSet`].

use super::{NumError, ParamSet};

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> AdamConfig {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> AdamConfig {
        AdamConfig { lr, ..AdamConfig::default() }
    }
}

/// Bias-corrected Adam. Moment estimates share the target's schema; the step
/// counter advances exactly once per [`Adam::step`] call.
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    m: ParamSet,
    v: ParamSet,
}

impl Adam {
    pub fn new(cfg: AdamConfig, schema: &ParamSet) -> Adam {
        Adam { cfg, t: 0, m: schema.zeros_like(), v: schema.zeros_like() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn config(&self) -> AdamConfig {
        self.cfg
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<(), NumError> {
        if !params.same_schema(grads) || !params.same_schema(&self.m) {
            return Err(NumError::Schema {
                context: "adam_step",
                detail: "params, grads, and moment schemas must all match".into(),
            });
        }
        self.t += 1;
        let c1 = 1.0 - self.cfg.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.cfg.beta2.powi(self.t as i32);
        for slot in 0..params.len() {
            let g = grads.by_slot(slot).as_slice();
            let m = self.m.by_slot_mut(slot).as_mut_slice();
            for (mi, gi) in m.iter_mut().zip(g) {
                *mi = self.cfg.beta1 * *mi + (1.0 - self.cfg.beta1) * gi;
            }
            let v = self.v.by_slot_mut(slot).as_mut_slice();
            for (vi, gi) in v.iter_mut().zip(g) {
                *vi = self.cfg.beta2 * *vi + (1.0 - self.cfg.beta2) * gi * gi;
            }
            let m = self.m.by_slot(slot).as_slice();
            let v = self.v.by_slot(slot).as_slice();
            let p = params.by_slot_mut(slot).as_mut_slice();
            for i in 0..p.len() {
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= self.cfg.lr * mhat / (vhat.sqrt() + self.cfg.eps);
            }
        }
        Ok(())
    }
}
