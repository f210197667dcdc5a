//! Bidirectional LSTM domain classifier.
//!
//! A forward recurrence yields `h_t`, a backward one over the reversed unit
//! yields `g_t`, and every step predicts the unit's domain:
//! `z_t = softmax(Z_g g_t + Z_h h_t + b_o)`. Training minimises the mean
//! per-step cross-entropy against the unit label. Units are paragraphs or
//! sentences as plain word streams without `<s>`/`</s>`.
//!
//! The concatenated states `s_t = [g_t ; h_t]` averaged per word type give a
//! globally informed embedding table.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bilm::StateKind;
use crate::corpus::{Corpus, Vocab};
use crate::embed::{average_states, EmbeddingTable, Provenance, StateStream};
use crate::error::{contract, Error, Result};
use crate::numcore::{
    axpy, log_softmax_at, prefixed, rng, run_backward, run_forward, run_states, softmax, view,
    Checkpoint, LstmParams, LstmState, Mat, Params, StepCache, TensorView,
};
use crate::train::{fit, Control, TrainConfig};

pub const CHECKPOINT_KIND: &str = "domaincls";

/// What one training or extraction unit is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Paragraph,
    Sentence,
}

impl std::str::FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paragraph" | "paragraphs" => Ok(Granularity::Paragraph),
            "sentence" | "sentences" => Ok(Granularity::Sentence),
            _ => Err(Error::Data(format!("unknown granularity {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainConfig {
    pub emb_dim: usize,
    pub hidden: usize,
    pub granularity: Granularity,
    /// Clamp `c` and `h` to `±clip` at every step.
    pub clip: Option<f64>,
    /// State emitted for embeddings.
    pub state: StateKind,
    pub train: TrainConfig,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig {
            emb_dim: 256,
            hidden: 128,
            granularity: Granularity::Paragraph,
            clip: None,
            state: StateKind::Hidden,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainParams {
    pub embedding: Mat,
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    /// Output columns reading the backward state `g_t`.
    pub z_g: Mat,
    /// Output columns reading the forward state `h_t`.
    pub z_h: Mat,
    pub b_o: Vec<f64>,
}

impl Params for DomainParams {
    fn tensors(&self) -> Vec<(String, TensorView<'_>)> {
        let e = &self.embedding;
        let mut v = vec![("embedding".to_string(), view(e.rows(), e.cols(), e.data()))];
        v.extend(prefixed("fwd", self.fwd.tensors()));
        v.extend(prefixed("bwd", self.bwd.tensors()));
        for (name, m) in [("Z_g", &self.z_g), ("Z_h", &self.z_h)] {
            v.push((name.to_string(), view(m.rows(), m.cols(), m.data())));
        }
        v.push(("b_o".to_string(), view(self.b_o.len(), 1, &self.b_o)));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = vec![self.embedding.data_mut()];
        v.extend(self.fwd.tensors_mut());
        v.extend(self.bwd.tensors_mut());
        v.push(self.z_g.data_mut());
        v.push(self.z_h.data_mut());
        v.push(&mut self.b_o);
        v
    }
}

impl DomainParams {
    pub fn init(vocab_size: usize, domains: usize, config: &DomainConfig) -> Self {
        let mut r = rng(config.train.seed);
        let (e, h) = (config.emb_dim, config.hidden);
        let embedding = Mat::uniform(vocab_size, e, 1.0 / (e as f64).sqrt(), &mut r);
        let fwd = LstmParams::init(e, h, &mut r);
        let bwd = LstmParams::init(e, h, &mut r);
        let bound = 1.0 / ((2 * h) as f64).sqrt();
        let z_g = Mat::uniform(domains, h, bound, &mut r);
        let z_h = Mat::uniform(domains, h, bound, &mut r);
        DomainParams {
            embedding,
            fwd,
            bwd,
            z_g,
            z_h,
            b_o: vec![0.0; domains],
        }
    }

    pub fn domains(&self) -> usize {
        self.b_o.len()
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }

    /// Zeroes the output layer so every step predicts uniformly.
    pub fn zero_output(&mut self) {
        self.z_g.data_mut().fill(0.0);
        self.z_h.data_mut().fill(0.0);
        self.b_o.fill(0.0);
    }

    /// Exchanges the roles of the two directions, including the halves of
    /// the output layer.
    pub fn swapped(&self) -> Self {
        DomainParams {
            embedding: self.embedding.clone(),
            fwd: self.bwd.clone(),
            bwd: self.fwd.clone(),
            z_g: self.z_h.clone(),
            z_h: self.z_g.clone(),
            b_o: self.b_o.clone(),
        }
    }

    fn check(&self, ids: &[usize]) -> Result<()> {
        contract!(!ids.is_empty(), "empty classification unit");
        contract!(
            self.fwd.hidden() == self.bwd.hidden() && self.z_g.rows() == self.domains(),
            "inconsistent domain classifier shapes"
        );
        let v = self.embedding.rows();
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            contract!(false, "token id {bad} outside vocabulary of {v}");
        }
        Ok(())
    }

    fn inputs(&self, ids: &[usize]) -> Vec<Vec<f64>> {
        ids.iter().map(|&i| self.embedding.row(i).to_vec()).collect()
    }

    fn logits(&self, g: &[f64], h: &[f64]) -> Vec<f64> {
        let u = self.z_g.matvec(g);
        let w = self.z_h.matvec(h);
        u.iter()
            .zip(&w)
            .zip(&self.b_o)
            .map(|((a, b), c)| (a + b) + c)
            .collect()
    }

    /// Forward states `h_t` and backward states `g_t`, both indexed by `t`.
    fn states(&self, ids: &[usize], clip: Option<f64>) -> Result<(Vec<LstmState>, Vec<LstmState>)> {
        self.check(ids)?;
        let x = self.inputs(ids);
        let fwd = run_states(&self.fwd, &x, clip)?;
        let rev: Vec<Vec<f64>> = x.into_iter().rev().collect();
        let mut bwd = run_states(&self.bwd, &rev, clip)?;
        bwd.reverse();
        Ok((fwd, bwd))
    }

    /// Per-step domain distributions of one unit.
    pub fn classify_stepwise(&self, ids: &[usize], clip: Option<f64>) -> Result<Vec<Vec<f64>>> {
        let (fwd, bwd) = self.states(ids, clip)?;
        Ok(fwd
            .iter()
            .zip(&bwd)
            .map(|(h, g)| softmax(&self.logits(&g.h, &h.h)))
            .collect())
    }

    /// Majority vote of the per-step argmax; ties go to the lower domain id.
    pub fn predict(&self, ids: &[usize], clip: Option<f64>) -> Result<usize> {
        let mut votes = vec![0usize; self.domains()];
        for z in self.classify_stepwise(ids, clip)? {
            votes[argmax(&z)] += 1;
        }
        Ok(argmax_count(&votes))
    }

    /// Mean per-step cross-entropy of one labeled unit and its gradients.
    pub fn loss_and_grads(&self, ids: &[usize], label: usize, clip: Option<f64>) -> Result<(f64, Self)> {
        self.check(ids)?;
        contract!(label < self.domains(), "label {label} outside {} domains", self.domains());
        let t_len = ids.len();
        let x = self.inputs(ids);
        let (fwd, f_caches): (Vec<LstmState>, Vec<StepCache>) = run_forward(&self.fwd, &x, clip)?;
        let rev: Vec<Vec<f64>> = x.iter().rev().cloned().collect();
        let (bwd, b_caches) = run_forward(&self.bwd, &rev, clip)?;

        let mut grads = self.zeros_like();
        let scale = 1.0 / t_len as f64;
        let mut loss = 0.0;
        let mut dh = vec![Vec::new(); t_len];
        // backward-run step k emitted g at position t_len - 1 - k
        let mut dg_run = vec![Vec::new(); t_len];
        for t in 0..t_len {
            let h = &fwd[t].h;
            let g = &bwd[t_len - 1 - t].h;
            let logits = self.logits(g, h);
            loss -= log_softmax_at(&logits, label);
            let mut dl = softmax(&logits);
            dl[label] -= 1.0;
            dl.iter_mut().for_each(|v| *v *= scale);
            grads.z_g.add_outer(&dl, g);
            grads.z_h.add_outer(&dl, h);
            axpy(1.0, &dl, &mut grads.b_o);
            let mut d_h = vec![0.0; self.hidden()];
            self.z_h.t_matvec_add(&dl, &mut d_h);
            let mut d_g = vec![0.0; self.hidden()];
            self.z_g.t_matvec_add(&dl, &mut d_g);
            dh[t] = d_h;
            dg_run[t_len - 1 - t] = d_g;
        }
        let dx_f = run_backward(&self.fwd, &f_caches, &dh, &mut grads.fwd);
        let dx_b = run_backward(&self.bwd, &b_caches, &dg_run, &mut grads.bwd);
        for (t, d) in dx_f.iter().enumerate() {
            axpy(1.0, d, grads.embedding.row_mut(ids[t]));
        }
        for (k, d) in dx_b.iter().enumerate() {
            axpy(1.0, d, grads.embedding.row_mut(ids[t_len - 1 - k]));
        }
        Ok((loss * scale, grads))
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn argmax_count(v: &[usize]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// A labeled word stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub ids: Vec<usize>,
    pub label: Option<usize>,
}

/// Splits a corpus into classifier units. Empty units are dropped.
pub fn units(corpus: &Corpus, granularity: Granularity) -> Vec<Unit> {
    let mut out = Vec::new();
    for p in &corpus.paragraphs {
        match granularity {
            Granularity::Paragraph => out.push(Unit { ids: p.words(), label: p.label }),
            Granularity::Sentence => out.extend(p.sentences.iter().map(|s| Unit {
                ids: s.words().to_vec(),
                label: p.label,
            })),
        }
    }
    out.retain(|u| !u.ids.is_empty());
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainModel {
    pub vocab: Vocab,
    pub params: DomainParams,
    pub config: DomainConfig,
}

impl DomainModel {
    pub fn init(vocab: &Vocab, domains: usize, config: &DomainConfig) -> Self {
        DomainModel {
            vocab: vocab.clone(),
            params: DomainParams::init(vocab.len(), domains, config),
            config: config.clone(),
        }
    }

    pub fn classify_stepwise(&self, ids: &[usize]) -> Result<Vec<Vec<f64>>> {
        self.params.classify_stepwise(ids, self.config.clip)
    }

    pub fn predict(&self, ids: &[usize]) -> Result<usize> {
        self.params.predict(ids, self.config.clip)
    }

    /// Fraction of labeled units whose majority vote matches the label.
    pub fn accuracy(&self, corpus: &Corpus, granularity: Granularity) -> Result<f64> {
        let us: Vec<Unit> = units(corpus, granularity)
            .into_iter()
            .filter(|u| u.label.is_some())
            .collect();
        if us.is_empty() {
            return Err(Error::Data("no labeled units to score".into()));
        }
        let mut hits = 0;
        for u in &us {
            if Some(self.predict(&u.ids)?) == u.label {
                hits += 1;
            }
        }
        Ok(hits as f64 / us.len() as f64)
    }

    /// `(word id, s_t)` for every occurrence, with `s_t = [g_t ; h_t]`.
    pub fn extract_states(
        &self,
        corpus: &Corpus,
        granularity: Granularity,
        state: StateKind,
        clip: Option<f64>,
    ) -> Result<StateStream> {
        if corpus.vocab.len() != self.vocab.len() {
            return Err(Error::Data(format!(
                "corpus vocabulary has {} entries, model {}",
                corpus.vocab.len(),
                self.vocab.len()
            )));
        }
        let pick = |s: &LstmState| match state {
            StateKind::Cell => s.c.clone(),
            StateKind::Hidden => s.h.clone(),
        };
        let mut out = Vec::with_capacity(corpus.num_words());
        for u in units(corpus, granularity) {
            let (fwd, bwd) = self.params.states(&u.ids, clip)?;
            for (t, &id) in u.ids.iter().enumerate() {
                out.push((id, [pick(&bwd[t]), pick(&fwd[t])].concat()));
            }
        }
        Ok(out)
    }

    /// Averaged `s_t` per word type, using the model's own settings.
    pub fn embeddings(&self, corpus: &Corpus) -> Result<EmbeddingTable> {
        let stream = self.extract_states(corpus, self.config.granularity, self.config.state, self.config.clip)?;
        let (table, _) = average_states(&self.vocab, 2 * self.params.hidden(), &stream, Provenance::Domaincls)?;
        Ok(table)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = json!({
            "config": self.config,
            "vocab": self.vocab,
            "domains": self.params.domains(),
            "concat_order": "backward,forward",
        });
        let mut ck = Checkpoint::new(CHECKPOINT_KIND, meta);
        for (name, t) in self.params.tensors() {
            ck.push(name, t);
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let config: DomainConfig = serde_json::from_value(ck.meta["config"].clone())?;
        let vocab: Vocab = serde_json::from_value(ck.meta["vocab"].clone())?;
        let domains = ck.meta["domains"]
            .as_u64()
            .ok_or_else(|| Error::Data("checkpoint lacks the domain count".into()))? as usize;
        let mut m = DomainModel::init(&vocab, domains, &config);
        let shapes: Vec<(String, usize, usize)> = m
            .params
            .tensors()
            .into_iter()
            .map(|(n, t)| (n, t.rows, t.cols))
            .collect();
        for ((name, r, c), dst) in shapes.into_iter().zip(m.params.tensors_mut()) {
            dst.copy_from_slice(ck.tensor(&name, r, c)?);
        }
        Ok(m)
    }
}

#[derive(Debug, Clone)]
pub struct DomainTrained {
    pub model: DomainModel,
    pub epoch_losses: Vec<f64>,
}

/// Trains on every unit of a labeled corpus. The domain count is one more
/// than the largest label.
pub fn train_domaincls(corpus: &Corpus, config: &DomainConfig) -> Result<DomainTrained> {
    let us = units(corpus, config.granularity);
    if us.is_empty() {
        return Err(Error::Data("domain classifier corpus has no non-empty units".into()));
    }
    if let Some(pos) = us.iter().position(|u| u.label.is_none()) {
        return Err(Error::Data(format!("training unit {} has no label", pos + 1)));
    }
    let domains = corpus.num_domains().max(1);
    let mut model = DomainModel::init(&corpus.vocab, domains, config);
    let clip = config.clip;
    let epoch_losses = fit(
        &mut model.params,
        &us,
        &config.train,
        |p, u| p.loss_and_grads(&u.ids, u.label.unwrap_or(0), clip),
        |_, _, _| Ok(Control::Continue),
    )?;
    Ok(DomainTrained { model, epoch_losses })
}

/// [`DomainModel::embeddings`] under the model's configuration.
pub fn domain_embeddings(model: &DomainModel, corpus: &Corpus) -> Result<EmbeddingTable> {
    model.embeddings(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, encode_labeled, parse_labeled, tokenize};
    use crate::numcore::{grad_check, lstm_step};
    use std::path::Path;

    fn small_cfg(e: usize, h: usize) -> DomainConfig {
        DomainConfig {
            emb_dim: e,
            hidden: h,
            train: TrainConfig { epochs: 1, batch_size: 4, ..TrainConfig::default() },
            ..DomainConfig::default()
        }
    }

    fn labeled(text: &str) -> Corpus {
        let lines = parse_labeled(text, Path::new("t")).unwrap();
        let toks: Vec<String> = lines.iter().flat_map(|l| tokenize(&l.text)).collect();
        let vocab = build_vocab(toks.iter().map(String::as_str), 100, 1).unwrap();
        encode_labeled(&lines, &vocab)
    }

    #[test]
    fn gradients_pass_check() {
        let mut p = DomainParams::init(8, 2, &small_cfg(4, 3));
        p.fill_uniform(1.0, &mut rng(2));
        let ids = [3, 7, 4, 3, 5];
        let (_, g) = p.loss_and_grads(&ids, 1, None).unwrap();
        let report = grad_check(
            |x| {
                let mut q = p.clone();
                q.set_flat(x).unwrap();
                q.loss_and_grads(&ids, 1, None).unwrap().0
            },
            &p.flatten(),
            &g.flatten(),
            1e-5,
            1e-4,
        );
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn zero_network_is_uniform() {
        let mut p = DomainParams::init(6, 3, &small_cfg(3, 2));
        p.zero_output();
        for z in p.classify_stepwise(&[3, 4, 5], None).unwrap() {
            assert_eq!(z, vec![1.0 / 3.0; 3]);
        }
        let (loss, _) = p.loss_and_grads(&[3, 4], 2, None).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn single_domain_is_certain() {
        let p = DomainParams::init(6, 1, &small_cfg(3, 2));
        for z in p.classify_stepwise(&[3, 4, 5, 3], None).unwrap() {
            assert_eq!(z, vec![1.0]);
        }
    }

    #[test]
    fn matches_hand_unroll() {
        let p = DomainParams::init(5, 2, &small_cfg(3, 2));
        let ids = [3, 4, 3];
        let x: Vec<&[f64]> = ids.iter().map(|&i| p.embedding.row(i)).collect();
        let mut h = vec![LstmState::zeros(2)];
        for t in 0..3 {
            let next = lstm_step(&p.fwd, x[t], &h[t]).unwrap();
            h.push(next);
        }
        let mut g = vec![LstmState::zeros(2)];
        for t in 0..3 {
            let next = lstm_step(&p.bwd, x[2 - t], &g[t]).unwrap();
            g.push(next);
        }
        let z = p.classify_stepwise(&ids, None).unwrap();
        for t in 0..3 {
            let ht = &h[t + 1].h;
            let gt = &g[3 - t].h;
            let mut logits = p.b_o.clone();
            for d in 0..2 {
                for j in 0..2 {
                    logits[d] += p.z_g.get(d, j) * gt[j] + p.z_h.get(d, j) * ht[j];
                }
            }
            let m = logits[0].max(logits[1]);
            let den = (logits[0] - m).exp() + (logits[1] - m).exp();
            for d in 0..2 {
                assert!((z[t][d] - (logits[d] - m).exp() / den).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reversal_with_swapped_roles_is_bitwise_symmetric() {
        let p = DomainParams::init(9, 3, &small_cfg(4, 3));
        let ids = vec![3, 8, 5, 5, 4, 7];
        let z = p.classify_stepwise(&ids, None).unwrap();
        let rev: Vec<usize> = ids.iter().rev().copied().collect();
        let mut zr = p.swapped().classify_stepwise(&rev, None).unwrap();
        zr.reverse();
        assert_eq!(z, zr);
    }

    #[test]
    fn distributions_sum_to_one() {
        let mut p = DomainParams::init(9, 4, &small_cfg(4, 3));
        p.fill_uniform(3.0, &mut rng(8));
        for z in p.classify_stepwise(&[3, 4, 5, 6, 7, 8], None).unwrap() {
            assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unlabeled_unit_is_an_error() {
        let vocab = crate::corpus::build_vocab_from_text("a b. c d.", 100, 1).unwrap();
        let c = crate::corpus::encode("a b. c d.", &vocab);
        assert!(train_domaincls(&c, &small_cfg(3, 2)).is_err());
    }

    #[test]
    fn sentence_units_equal_paragraph_units_for_single_sentences() {
        let c = labeled("__label__0\ta b c.\n__label__1\td e.\n__label__0\ta c.\n__label__1\te e d.\n");
        let mut cfg = small_cfg(3, 2);
        cfg.train.epochs = 3;
        let para = train_domaincls(&c, &cfg).unwrap();
        cfg.granularity = Granularity::Sentence;
        let sent = train_domaincls(&c, &cfg).unwrap();
        assert_eq!(para.model.params, sent.model.params);
        assert_eq!(para.epoch_losses, sent.epoch_losses);
    }

    #[test]
    fn learns_disjoint_domains() {
        let mut text = String::new();
        for i in 0..20 {
            let (l, w) = if i % 2 == 0 { (0, ["a", "b", "c"]) } else { (1, ["x", "y", "z"]) };
            let words: Vec<&str> = (0..6).map(|k| w[(i + k) % 3]).collect();
            text.push_str(&format!("__label__{l}\t{}.\n", words.join(" ")));
        }
        let c = labeled(&text);
        let mut cfg = small_cfg(6, 6);
        cfg.train.epochs = 30;
        cfg.train.adam.lr = 1e-2;
        let t = train_domaincls(&c, &cfg).unwrap();
        assert!(t.epoch_losses.last().unwrap() < &t.epoch_losses[0]);
        assert_eq!(t.model.accuracy(&c, Granularity::Paragraph).unwrap(), 1.0);
    }

    #[test]
    fn embeddings_and_saturation() {
        let c = labeled("__label__0\ta b. a c.\n__label__1\tb c.\n");
        let m = DomainModel::init(&c.vocab, 2, &small_cfg(3, 2));
        let stream = m.extract_states(&c, Granularity::Paragraph, StateKind::Hidden, None).unwrap();
        assert_eq!(stream.len(), 9);
        let table = m.embeddings(&c).unwrap();
        assert_eq!(table.dim(), 4);
        assert_eq!(table.provenance, Provenance::Domaincls);

        // biases of 30 saturate every gate, so the cell grows by one per step
        let mut big = m.clone();
        for b in big.params.fwd.b.iter_mut().chain(big.params.bwd.b.iter_mut()) {
            *b = 30.0;
        }
        let text = format!("__label__0\t{}.\n", "a ".repeat(40));
        let long = encode_labeled(&parse_labeled(&text, Path::new("t")).unwrap(), &c.vocab);
        let peak = |clip| {
            big.extract_states(&long, Granularity::Paragraph, StateKind::Cell, clip)
                .unwrap()
                .iter()
                .flat_map(|(_, s)| s.iter().map(|v| v.abs()))
                .fold(0.0f64, f64::max)
        };
        assert!(peak(None) > 30.0);
        assert!(peak(Some(3.0)) <= 3.0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let c = labeled("__label__0\ta b.\n__label__2\tc.\n");
        let m = DomainModel::init(&c.vocab, 3, &small_cfg(3, 2));
        let back = DomainModel::from_checkpoint(&Checkpoint::from_bytes(&m.to_checkpoint().to_bytes(), Path::new("x")).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
