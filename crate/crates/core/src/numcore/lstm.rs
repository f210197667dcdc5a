//! Single-layer LSTM cell with cached forward pass and exact backward pass.
//!
//! Gate order in every stacked weight matrix and bias is `i, f, g, o`:
//! rows `0..H` input gate, `H..2H` forget gate, `2H..3H` candidate,
//! `3H..4H` output gate. No peepholes, no forget-gate bias offset.

use rand::Rng;

use super::mat::Mat;
use super::params::{view, Params, TensorView};
use crate::error::{contract, Result};

pub const GATE_ORDER: &str = "i,f,g,o";

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// 4H × E input weights.
    pub w: Mat,
    /// 4H × H recurrent weights.
    pub u: Mat,
    /// 4H bias.
    pub b: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w: Mat::zeros(4 * hidden, input),
            u: Mat::zeros(4 * hidden, hidden),
            b: vec![0.0; 4 * hidden],
        }
    }

    /// Every entry drawn from U(-1/√H, 1/√H).
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let w = Mat::uniform(4 * hidden, input, bound, rng);
        let u = Mat::uniform(4 * hidden, hidden, bound, rng);
        let b = (0..4 * hidden).map(|_| rng.gen_range(-bound..=bound)).collect();
        LstmParams { w, u, b }
    }

    pub fn hidden(&self) -> usize {
        self.u.cols()
    }

    pub fn input(&self) -> usize {
        self.w.cols()
    }

    pub fn from_parts(w: Mat, u: Mat, b: Vec<f64>) -> Result<Self> {
        let h = u.cols();
        contract!(
            u.rows() == 4 * h && w.rows() == 4 * h && b.len() == 4 * h,
            "LSTM shapes W {:?}, U {:?}, b {} are inconsistent",
            w.shape(),
            u.shape(),
            b.len()
        );
        Ok(LstmParams { w, u, b })
    }
}

impl Params for LstmParams {
    fn tensors(&self) -> Vec<(String, TensorView<'_>)> {
        vec![
            ("W".into(), view(self.w.rows(), self.w.cols(), self.w.data())),
            ("U".into(), view(self.u.rows(), self.u.cols(), self.u.data())),
            ("b".into(), view(self.b.len(), 1, &self.b)),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.data_mut(), self.u.data_mut(), &mut self.b]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intermediate values of one step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates in `i, f, g, o` order.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    /// 1.0 where the cell value passed the clip unchanged.
    c_pass: Vec<f64>,
    h_pass: Vec<f64>,
}

fn clamp_pass(v: &mut [f64], clip: Option<f64>) -> Vec<f64> {
    match clip {
        None => vec![1.0; v.len()],
        Some(lim) => v
            .iter_mut()
            .map(|x| {
                if *x > lim {
                    *x = lim;
                    0.0
                } else if *x < -lim {
                    *x = -lim;
                    0.0
                } else {
                    1.0
                }
            })
            .collect(),
    }
}

fn forward(p: &LstmParams, x: &[f64], s: &LstmState, clip: Option<f64>) -> (LstmState, StepCache) {
    let hd = p.hidden();
    let mut a = p.b.clone();
    p.w.matvec_add(x, &mut a);
    p.u.matvec_add(&s.h, &mut a);
    for (k, v) in a.iter_mut().enumerate() {
        *v = if (2 * hd..3 * hd).contains(&k) {
            v.tanh()
        } else {
            sigmoid(*v)
        };
    }
    let (i, rest) = a.split_at(hd);
    let (f, rest) = rest.split_at(hd);
    let (g, o) = rest.split_at(hd);
    let mut c: Vec<f64> = (0..hd).map(|j| f[j] * s.c[j] + i[j] * g[j]).collect();
    let c_pass = clamp_pass(&mut c, clip);
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let mut h: Vec<f64> = (0..hd).map(|j| o[j] * tanh_c[j]).collect();
    let h_pass = clamp_pass(&mut h, clip);
    let cache = StepCache {
        x: x.to_vec(),
        h_prev: s.h.clone(),
        c_prev: s.c.clone(),
        gates: a,
        tanh_c,
        c_pass,
        h_pass,
    };
    (LstmState { h, c }, cache)
}

fn check_shapes(p: &LstmParams, x: &[f64], s: &LstmState) -> Result<()> {
    contract!(
        x.len() == p.input(),
        "input of size {} for LSTM expecting {}",
        x.len(),
        p.input()
    );
    contract!(
        s.h.len() == p.hidden() && s.c.len() == p.hidden(),
        "state of size {}/{} for hidden size {}",
        s.h.len(),
        s.c.len(),
        p.hidden()
    );
    Ok(())
}

/// One LSTM step: `i,f,o = σ(·)`, `g = tanh(·)`, `c' = f⊙c + i⊙g`,
/// `h' = o⊙tanh(c')`.
pub fn lstm_step(p: &LstmParams, x: &[f64], s: &LstmState) -> Result<LstmState> {
    lstm_step_clipped(p, x, s, None)
}

/// [`lstm_step`] with `c'` and `h'` clamped to `[-clip, clip]`.
pub fn lstm_step_clipped(
    p: &LstmParams,
    x: &[f64],
    s: &LstmState,
    clip: Option<f64>,
) -> Result<LstmState> {
    check_shapes(p, x, s)?;
    Ok(forward(p, x, s, clip).0)
}

/// Runs the cell over `inputs` from a zero state, returning the state after
/// each step and the caches needed by [`run_backward`].
pub fn run_forward(
    p: &LstmParams,
    inputs: &[Vec<f64>],
    clip: Option<f64>,
) -> Result<(Vec<LstmState>, Vec<StepCache>)> {
    let mut s = LstmState::zeros(p.hidden());
    let mut states = Vec::with_capacity(inputs.len());
    let mut caches = Vec::with_capacity(inputs.len());
    for x in inputs {
        check_shapes(p, x, &s)?;
        let (next, cache) = forward(p, x, &s, clip);
        states.push(next.clone());
        caches.push(cache);
        s = next;
    }
    Ok((states, caches))
}

/// States only, no caches.
pub fn run_states(p: &LstmParams, inputs: &[Vec<f64>], clip: Option<f64>) -> Result<Vec<LstmState>> {
    let mut s = LstmState::zeros(p.hidden());
    let mut states = Vec::with_capacity(inputs.len());
    for x in inputs {
        check_shapes(p, x, &s)?;
        s = forward(p, x, &s, clip).0;
        states.push(s.clone());
    }
    Ok(states)
}

/// Backpropagates `dh[t]` (loss gradient w.r.t. the emitted `h` at step `t`)
/// through the whole sequence. Parameter gradients are added into `grads`;
/// the returned vectors are gradients w.r.t. each input.
pub fn run_backward(
    p: &LstmParams,
    caches: &[StepCache],
    dh: &[Vec<f64>],
    grads: &mut LstmParams,
) -> Vec<Vec<f64>> {
    debug_assert_eq!(caches.len(), dh.len());
    let hd = p.hidden();
    let mut dh_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; hd];
    let mut dxs = vec![Vec::new(); caches.len()];
    let mut da = vec![0.0; 4 * hd];
    for t in (0..caches.len()).rev() {
        let cache = &caches[t];
        let (i, rest) = cache.gates.split_at(hd);
        let (f, rest) = rest.split_at(hd);
        let (g, o) = rest.split_at(hd);
        let mut dc_prev = vec![0.0; hd];
        for j in 0..hd {
            let dh_raw = (dh[t][j] + dh_next[j]) * cache.h_pass[j];
            let th = cache.tanh_c[j];
            let d_o = dh_raw * th;
            let dc = (dc_next[j] + dh_raw * o[j] * (1.0 - th * th)) * cache.c_pass[j];
            let d_f = dc * cache.c_prev[j];
            let d_i = dc * g[j];
            let d_g = dc * i[j];
            dc_prev[j] = dc * f[j];
            da[j] = d_i * i[j] * (1.0 - i[j]);
            da[hd + j] = d_f * f[j] * (1.0 - f[j]);
            da[2 * hd + j] = d_g * (1.0 - g[j] * g[j]);
            da[3 * hd + j] = d_o * o[j] * (1.0 - o[j]);
        }
        grads.w.add_outer(&da, &cache.x);
        grads.u.add_outer(&da, &cache.h_prev);
        for (gb, d) in grads.b.iter_mut().zip(&da) {
            *gb += d;
        }
        let mut dx = vec![0.0; p.input()];
        p.w.t_matvec_add(&da, &mut dx);
        let mut dhp = vec![0.0; hd];
        p.u.t_matvec_add(&da, &mut dhp);
        dxs[t] = dx;
        dh_next = dhp;
        dc_next = dc_prev;
    }
    dxs
}
