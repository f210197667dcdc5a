//! Softmax, the dense output layer, and full-sequence loss/gradient for an
//! LSTM followed by a softmax over the vocabulary.

use rand::Rng;

use super::lstm::{run_backward, run_forward, run_states, LstmParams};
use super::mat::Mat;
use super::params::{prefixed, view, Params, TensorView};
use crate::error::{contract, Result};

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `ln softmax(logits)[k]` computed via log-sum-exp.
pub fn log_softmax_at(logits: &[f64], k: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits[k] - max - lse
}

/// Affine layer `W·x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        Dense {
            w: Mat::zeros(outputs, inputs),
            b: vec![0.0; outputs],
        }
    }

    pub fn init<R: Rng>(outputs: usize, inputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Dense {
            w: Mat::uniform(outputs, inputs, bound, rng),
            b: vec![0.0; outputs],
        }
    }

    pub fn outputs(&self) -> usize {
        self.w.rows()
    }

    pub fn inputs(&self) -> usize {
        self.w.cols()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.b.clone();
        self.w.matvec_add(x, &mut out);
        out
    }
}

impl Params for Dense {
    fn tensors(&self) -> Vec<(String, TensorView<'_>)> {
        vec![
            ("W".into(), view(self.w.rows(), self.w.cols(), self.w.data())),
            ("b".into(), view(self.b.len(), 1, &self.b)),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.data_mut(), &mut self.b]
    }
}

/// An LSTM whose hidden state feeds a softmax over `V` classes at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqModel {
    pub lstm: LstmParams,
    pub out: Dense,
}

impl SeqModel {
    pub fn init<R: Rng>(input: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        SeqModel {
            lstm: LstmParams::init(input, hidden, rng),
            out: Dense::init(classes, hidden, rng),
        }
    }

    pub fn classes(&self) -> usize {
        self.out.outputs()
    }
}

impl Params for SeqModel {
    fn tensors(&self) -> Vec<(String, TensorView<'_>)> {
        prefixed("lstm", self.lstm.tensors())
            .chain(prefixed("out", self.out.tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.lstm.tensors_mut();
        v.extend(self.out.tensors_mut());
        v
    }
}

/// Loss and gradients of one sequence.
#[derive(Debug, Clone)]
pub struct SeqGrads {
    /// Mean cross-entropy over the `T` targets.
    pub loss: f64,
    pub grads: SeqModel,
    /// Gradient w.r.t. each input vector.
    pub d_inputs: Vec<Vec<f64>>,
}

fn check_targets(model: &SeqModel, inputs: &[Vec<f64>], targets: &[usize]) -> Result<()> {
    contract!(!inputs.is_empty(), "empty sequence");
    contract!(
        inputs.len() == targets.len(),
        "{} inputs for {} targets",
        inputs.len(),
        targets.len()
    );
    let v = model.classes();
    contract!(
        targets.iter().all(|&t| t < v),
        "target id out of range for {v} classes"
    );
    Ok(())
}

/// Mean cross-entropy `−(1/T) Σ ln p(target_t)` with exact full-sequence
/// BPTT gradients for every parameter and every input.
pub fn seq_loss_and_grads(
    model: &SeqModel,
    inputs: &[Vec<f64>],
    targets: &[usize],
    clip: Option<f64>,
) -> Result<SeqGrads> {
    check_targets(model, inputs, targets)?;
    let (states, caches) = run_forward(&model.lstm, inputs, clip)?;
    let t_len = inputs.len() as f64;
    let mut grads = model.zeros_like();
    let mut loss = 0.0;
    let mut dh = Vec::with_capacity(states.len());
    for (s, &target) in states.iter().zip(targets) {
        let logits = model.out.apply(&s.h);
        let mut p = softmax(&logits);
        loss -= log_softmax_at(&logits, target);
        p[target] -= 1.0;
        for v in p.iter_mut() {
            *v /= t_len;
        }
        grads.out.w.add_outer(&p, &s.h);
        for (gb, d) in grads.out.b.iter_mut().zip(&p) {
            *gb += d;
        }
        let mut d = vec![0.0; model.lstm.hidden()];
        model.out.w.t_matvec_add(&p, &mut d);
        dh.push(d);
    }
    let d_inputs = run_backward(&model.lstm, &caches, &dh, &mut grads.lstm);
    Ok(SeqGrads {
        loss: loss / t_len,
        grads,
        d_inputs,
    })
}

/// `ln p(target_t)` at every step, no gradients.
pub fn seq_log_probs(
    model: &SeqModel,
    inputs: &[Vec<f64>],
    targets: &[usize],
    clip: Option<f64>,
) -> Result<Vec<f64>> {
    check_targets(model, inputs, targets)?;
    let states = run_states(&model.lstm, inputs, clip)?;
    Ok(states
        .iter()
        .zip(targets)
        .map(|(s, &t)| log_softmax_at(&model.out.apply(&s.h), t))
        .collect())
}

/// Sums per-sequence losses and gradients over a batch, in batch order.
pub fn batch_loss_and_grads(
    model: &SeqModel,
    batch: &[(Vec<Vec<f64>>, Vec<usize>)],
    clip: Option<f64>,
) -> Result<(f64, SeqModel)> {
    let mut total = model.zeros_like();
    let mut loss = 0.0;
    for (inputs, targets) in batch {
        let g = seq_loss_and_grads(model, inputs, targets, clip)?;
        loss += g.loss;
        total.add_assign(&g.grads);
    }
    Ok((loss, total))
}
