//! Layer schemas: a stacked LSTM and a two-layer MLP.
//!
//! A spec owns its sizes and knows how to allocate its parameters into a
//! [`ParamSet`] under a name prefix and how to run forward on a [`Tape`].
//! Sequences are slices of B×D tape vars, one per timestep, so the same code
//! path serves single windows (B = 1) and training batches.
//!
//! Initialization: weight matrices uniform in ±1/√fan_in (fan_in = input
//! rows), biases zero, except the LSTM forget-gate bias which starts at 1.0
//! so early training does not erase its own memory. Gate columns are ordered
//! input, forget, candidate, output.

use rand::Rng;
use rand::RngCore;

use super::{NumError, ParamSet, Tape, Tensor, Var};

fn uniform_init(shape: &[usize], fan_in: usize, rng: &mut dyn RngCore) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in t.as_mut_slice() {
        *v = rng.gen_range(-bound..bound);
    }
    t
}

/// Stack of LSTM layers with a shared hidden width.
#[derive(Clone, Copy, Debug)]
pub struct LstmStackSpec {
    pub input: usize,
    pub hidden: usize,
    pub layers: usize,
}

/// Per-layer (h, c) tape vars carried across timesteps.
pub struct LstmState {
    pub h: Vec<Var>,
    pub c: Vec<Var>,
}

impl LstmStackSpec {
    pub fn new(input: usize, hidden: usize, layers: usize) -> LstmStackSpec {
        assert!(input > 0 && hidden > 0 && layers > 0);
        LstmStackSpec { input, hidden, layers }
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input
        } else {
            self.hidden
        }
    }

    /// Allocates `{prefix}lstm{l}.{wx,wh,b}` for each layer.
    pub fn init_into(
        &self,
        params: &mut ParamSet,
        prefix: &str,
        rng: &mut dyn RngCore,
    ) -> Result<(), NumError> {
        let h = self.hidden;
        for l in 0..self.layers {
            let d = self.layer_input(l);
            params.insert(&format!("{prefix}lstm{l}.wx"), uniform_init(&[d, 4 * h], d, rng))?;
            params.insert(&format!("{prefix}lstm{l}.wh"), uniform_init(&[h, 4 * h], h, rng))?;
            let mut bias = Tensor::zeros(&[1, 4 * h]);
            for c in h..2 * h {
                bias.set(0, c, 1.0);
            }
            params.insert(&format!("{prefix}lstm{l}.b"), bias)?;
        }
        Ok(())
    }

    /// Zero initial state on the given tape.
    pub fn zero_state(&self, tape: &mut Tape, batch: usize) -> LstmState {
        let mut h = Vec::with_capacity(self.layers);
        let mut c = Vec::with_capacity(self.layers);
        for _ in 0..self.layers {
            h.push(tape.constant(Tensor::zeros(&[batch, self.hidden])));
            c.push(tape.constant(Tensor::zeros(&[batch, self.hidden])));
        }
        LstmState { h, c }
    }

    /// Unrolls the stack over `xs` (one B×input var per timestep), returning
    /// the top layer's hidden var at every timestep plus the carried state.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        prefix: &str,
        xs: &[Var],
        init: Option<LstmState>,
    ) -> (Vec<Var>, LstmState) {
        assert!(!xs.is_empty(), "lstm needs at least one timestep");
        let batch = tape.value(xs[0]).rows();
        let state = match init {
            Some(s) => s,
            None => self.zero_state(tape, batch),
        };
        assert_eq!(state.h.len(), self.layers);
        let hsize = self.hidden;

        let mut weights = Vec::with_capacity(self.layers);
        for l in 0..self.layers {
            let wx = tape.param(params, &format!("{prefix}lstm{l}.wx"));
            let wh = tape.param(params, &format!("{prefix}lstm{l}.wh"));
            let b = tape.param(params, &format!("{prefix}lstm{l}.b"));
            weights.push((wx, wh, b));
        }

        let mut h = state.h;
        let mut c = state.c;
        let mut top = Vec::with_capacity(xs.len());
        for &x in xs {
            let mut layer_in = x;
            for l in 0..self.layers {
                let (wx, wh, b) = weights[l];
                let from_x = tape.matmul(layer_in, wx);
                let from_h = tape.matmul(h[l], wh);
                let pre = tape.add(from_x, from_h);
                let gates = tape.add_row_bias(pre, b);
                let i_raw = tape.slice_cols(gates, 0, hsize);
                let f_raw = tape.slice_cols(gates, hsize, hsize);
                let g_raw = tape.slice_cols(gates, 2 * hsize, hsize);
                let o_raw = tape.slice_cols(gates, 3 * hsize, hsize);
                let i = tape.sigmoid(i_raw);
                let f = tape.sigmoid(f_raw);
                let g = tape.tanh(g_raw);
                let o = tape.sigmoid(o_raw);
                let keep = tape.mul(f, c[l]);
                let write = tape.mul(i, g);
                c[l] = tape.add(keep, write);
                let c_act = tape.tanh(c[l]);
                h[l] = tape.mul(o, c_act);
                layer_in = h[l];
            }
            top.push(h[self.layers - 1]);
        }
        (top, LstmState { h, c })
    }
}

/// Two-layer perceptron: affine → tanh → affine.
#[derive(Clone, Copy, Debug)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: usize, output: usize) -> MlpSpec {
        assert!(input > 0 && hidden > 0 && output > 0);
        MlpSpec { input, hidden, output }
    }

    /// Allocates `{prefix}{w1,b1,w2,b2}`.
    pub fn init_into(
        &self,
        params: &mut ParamSet,
        prefix: &str,
        rng: &mut dyn RngCore,
    ) -> Result<(), NumError> {
        params.insert(&format!("{prefix}w1"), uniform_init(&[self.input, self.hidden], self.input, rng))?;
        params.insert(&format!("{prefix}b1"), Tensor::zeros(&[1, self.hidden]))?;
        params.insert(&format!("{prefix}w2"), uniform_init(&[self.hidden, self.output], self.hidden, rng))?;
        params.insert(&format!("{prefix}b2"), Tensor::zeros(&[1, self.output]))?;
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, prefix: &str, x: Var) -> Var {
        assert_eq!(tape.value(x).cols(), self.input, "mlp input width");
        let w1 = tape.param(params, &format!("{prefix}w1"));
        let b1 = tape.param(params, &format!("{prefix}b1"));
        let w2 = tape.param(params, &format!("{prefix}w2"));
        let b2 = tape.param(params, &format!("{prefix}b2"));
        let a1 = tape.matmul(x, w1);
        let a1b = tape.add_row_bias(a1, b1);
        let h = tape.tanh(a1b);
        let a2 = tape.matmul(h, w2);
        tape.add_row_bias(a2, b2)
    }
}

/// Stacked LSTM followed by the MLP applied to every timestep's hidden state.
///
/// Returns one B×output var per timestep and the final LSTM state.
pub fn forward_lstm_mlp(
    tape: &mut Tape,
    params: &ParamSet,
    lstm: &LstmStackSpec,
    mlp: &MlpSpec,
    lstm_prefix: &str,
    mlp_prefix: &str,
    xs: &[Var],
    init: Option<LstmState>,
) -> (Vec<Var>, LstmState) {
    assert_eq!(mlp.input, lstm.hidden, "mlp must consume the lstm hidden width");
    let (hs, state) = lstm.forward(tape, params, lstm_prefix, xs, init);
    let outs = hs
        .iter()
        .map(|&h| mlp.forward(tape, params, mlp_prefix, h))
        .collect();
    (outs, state)
}
