//! Sentence-level bidirectional LSTM language model.
//!
//! A shared input embedding feeds two disjoint recurrences: the forward one
//! reads `<s> w_1 … w_T` and predicts `w_1 … w_T </s>`, the backward one
//! reads `</s> w_T … w_1` and predicts `w_T … w_1 <s>`. Both states are reset
//! at every sentence. The training loss is the sum of the two directions'
//! mean per-token cross-entropies.
//!
//! Context-independent embeddings are built by recording, for every word
//! occurrence, the forward and backward cell states right after the word is
//! consumed, concatenating them (forward first) and averaging per word type.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{Corpus, Sentence, Vocab};
use crate::embed::{average_states, EmbeddingTable, Provenance, StateStream};
use crate::error::{Error, Result};
use crate::lm::{InputStage, LmModel, LmParams};
use crate::numcore::{
    prefixed, rng, run_states, seq_loss_and_grads, view, Checkpoint, Dense, LstmState, Mat,
    Params, SeqModel, TensorView,
};
use crate::train::{fit, Control, TrainConfig};

pub const CHECKPOINT_KIND: &str = "bilm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiLmConfig {
    pub emb_dim: usize,
    /// Size of each direction's LSTM.
    pub hidden: usize,
    /// Clamp `c` and `h` to `±clip` during training and extraction.
    pub clip: Option<f64>,
    pub train: TrainConfig,
}

impl Default for BiLmConfig {
    fn default() -> Self {
        BiLmConfig {
            emb_dim: 256,
            hidden: 128,
            clip: None,
            train: TrainConfig::default(),
        }
    }
}

/// Which recurrent state an extraction emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    #[default]
    Cell,
    Hidden,
}

/// How the two directions are merged per occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    /// `[forward ; backward]`, dimension 2H.
    #[default]
    Concat,
    /// Element-wise mean, dimension H.
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractOptions {
    pub state: StateKind,
    pub combine: Combine,
    /// Overrides the model's clip setting when present.
    pub clip: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLmParams {
    pub embedding: Mat,
    pub fwd: SeqModel,
    pub bwd: SeqModel,
}

impl Params for BiLmParams {
    fn tensors(&self) -> Vec<(String, TensorView<'_>)> {
        let e = &self.embedding;
        std::iter::once(("embedding".to_string(), view(e.rows(), e.cols(), e.data())))
            .chain(prefixed("fwd", self.fwd.tensors()))
            .chain(prefixed("bwd", self.bwd.tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = vec![self.embedding.data_mut()];
        v.extend(self.fwd.tensors_mut());
        v.extend(self.bwd.tensors_mut());
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLmModel {
    pub vocab: Vocab,
    pub params: BiLmParams,
    pub config: BiLmConfig,
}

fn embed_ids(embedding: &Mat, ids: impl Iterator<Item = usize>) -> Vec<Vec<f64>> {
    ids.map(|i| embedding.row(i).to_vec()).collect()
}

/// Per-direction mean losses of one sentence, with gradients.
fn sentence_loss_and_grads(
    p: &BiLmParams,
    s: &Sentence,
    clip: Option<f64>,
) -> Result<(f64, f64, BiLmParams)> {
    let ids = &s.ids;
    let n = ids.len();
    let f_in = embed_ids(&p.embedding, ids[..n - 1].iter().copied());
    let f_tg: Vec<usize> = ids[1..].to_vec();
    let b_in = embed_ids(&p.embedding, ids[1..].iter().rev().copied());
    let b_tg: Vec<usize> = ids[..n - 1].iter().rev().copied().collect();

    let f = seq_loss_and_grads(&p.fwd, &f_in, &f_tg, clip)?;
    let b = seq_loss_and_grads(&p.bwd, &b_in, &b_tg, clip)?;
    let mut g = BiLmParams {
        embedding: Mat::zeros(p.embedding.rows(), p.embedding.cols()),
        fwd: f.grads,
        bwd: b.grads,
    };
    for (k, d) in f.d_inputs.iter().enumerate() {
        crate::numcore::axpy(1.0, d, g.embedding.row_mut(ids[k]));
    }
    for (k, d) in b.d_inputs.iter().enumerate() {
        crate::numcore::axpy(1.0, d, g.embedding.row_mut(ids[n - 1 - k]));
    }
    Ok((f.loss, b.loss, g))
}

impl BiLmModel {
    /// Seeded initialization: uniform(−1/√H, 1/√H) recurrences, output
    /// layers uniform(−1/√H, 1/√H), embedding uniform(−1/√E, 1/√E).
    pub fn init(vocab: &Vocab, config: &BiLmConfig) -> Self {
        let mut r = rng(config.train.seed);
        let v = vocab.len();
        let e = config.emb_dim;
        let embedding = Mat::uniform(v, e, 1.0 / (e as f64).sqrt(), &mut r);
        let fwd = SeqModel::init(e, config.hidden, v, &mut r);
        let bwd = SeqModel::init(e, config.hidden, v, &mut r);
        BiLmModel {
            vocab: vocab.clone(),
            params: BiLmParams { embedding, fwd, bwd },
            config: config.clone(),
        }
    }

    /// Zeroes both output layers so each direction predicts uniformly.
    pub fn zero_outputs(&mut self) {
        let (v, h) = (self.vocab.len(), self.config.hidden);
        self.params.fwd.out = Dense::zeros(v, h);
        self.params.bwd.out = Dense::zeros(v, h);
    }

    /// Joint loss (forward mean + backward mean) of one sentence.
    pub fn sentence_loss(&self, s: &Sentence) -> Result<f64> {
        let (f, b, _) = sentence_loss_and_grads(&self.params, s, self.config.clip)?;
        Ok(f + b)
    }

    /// Joint loss and gradients of one sentence.
    pub fn sentence_loss_and_grads(&self, s: &Sentence) -> Result<(f64, BiLmParams)> {
        let (f, b, g) = sentence_loss_and_grads(&self.params, s, self.config.clip)?;
        Ok((f + b, g))
    }

    /// Mean joint loss over every sentence of `corpus`.
    pub fn mean_loss(&self, corpus: &Corpus) -> Result<f64> {
        let mut total = 0.0;
        for s in corpus.sentences() {
            total += self.sentence_loss(s)?;
        }
        Ok(total / corpus.num_sentences().max(1) as f64)
    }

    /// The forward direction as a stand-alone unidirectional LM.
    pub fn forward_lm(&self) -> LmModel {
        LmModel {
            vocab: self.vocab.clone(),
            params: LmParams {
                embedding: self.params.embedding.clone(),
                compression: None,
                frozen: false,
                seq: self.params.fwd.clone(),
            },
            input: InputStage::Learned,
            clip: self.config.clip,
        }
    }

    fn check_vocab(&self, corpus: &Corpus) -> Result<()> {
        if corpus.vocab.len() != self.vocab.len() {
            return Err(Error::Data(format!(
                "corpus vocabulary has {} entries, model {}",
                corpus.vocab.len(),
                self.vocab.len()
            )));
        }
        Ok(())
    }

    /// `(word id, state)` for every word occurrence, framing tokens
    /// excluded, in corpus order.
    pub fn extract_states(&self, corpus: &Corpus, opts: &ExtractOptions) -> Result<StateStream> {
        self.check_vocab(corpus)?;
        let clip = opts.clip.or(self.config.clip);
        let pick = |s: &LstmState| match opts.state {
            StateKind::Cell => s.c.clone(),
            StateKind::Hidden => s.h.clone(),
        };
        let mut out = Vec::with_capacity(corpus.num_words());
        for s in corpus.sentences() {
            let ids = &s.ids;
            let n = ids.len();
            let fwd = run_states(
                &self.params.fwd.lstm,
                &embed_ids(&self.params.embedding, ids.iter().copied()),
                clip,
            )?;
            let bwd = run_states(
                &self.params.bwd.lstm,
                &embed_ids(&self.params.embedding, ids.iter().rev().copied()),
                clip,
            )?;
            for t in 1..n - 1 {
                let f = pick(&fwd[t]);
                let b = pick(&bwd[n - 1 - t]);
                let state = match opts.combine {
                    Combine::Concat => [f, b].concat(),
                    Combine::Average => f.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect(),
                };
                out.push((ids[t], state));
            }
        }
        Ok(out)
    }

    pub fn state_dim(&self, opts: &ExtractOptions) -> usize {
        match opts.combine {
            Combine::Concat => 2 * self.config.hidden,
            Combine::Average => self.config.hidden,
        }
    }

    /// Averaged per-word states as an embedding table.
    pub fn embeddings(&self, corpus: &Corpus, opts: &ExtractOptions) -> Result<EmbeddingTable> {
        let stream = self.extract_states(corpus, opts)?;
        let (table, _) = average_states(&self.vocab, self.state_dim(opts), &stream, Provenance::Bilm)?;
        Ok(table)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = json!({
            "config": self.config,
            "vocab": self.vocab,
            "concat_order": "forward,backward",
        });
        let mut ck = Checkpoint::new(CHECKPOINT_KIND, meta);
        for (name, t) in self.params.tensors() {
            ck.push(name, t);
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let config: BiLmConfig = serde_json::from_value(ck.meta["config"].clone())?;
        let vocab: Vocab = serde_json::from_value(ck.meta["vocab"].clone())?;
        let mut m = BiLmModel::init(&vocab, &config);
        let names: Vec<(String, usize, usize)> = m
            .params
            .tensors()
            .into_iter()
            .map(|(n, t)| (n, t.rows, t.cols))
            .collect();
        for ((name, r, c), dst) in names.into_iter().zip(m.params.tensors_mut()) {
            dst.copy_from_slice(ck.tensor(&name, r, c)?);
        }
        Ok(m)
    }
}

/// Result of [`train_bilm`].
#[derive(Debug, Clone)]
pub struct BiLmTrained {
    pub model: BiLmModel,
    pub epoch_losses: Vec<f64>,
}

/// Trains both directions jointly with Adam, one sentence per unit.
pub fn train_bilm(corpus: &Corpus, config: &BiLmConfig) -> Result<BiLmTrained> {
    if corpus.num_sentences() == 0 {
        return Err(Error::Data("bi-LM training corpus is empty".into()));
    }
    let mut model = BiLmModel::init(&corpus.vocab, config);
    let sentences: Vec<&Sentence> = corpus.sentences().collect();
    let clip = config.clip;
    let epoch_losses = fit(
        &mut model.params,
        &sentences,
        &config.train,
        |p, s| {
            let (f, b, g) = sentence_loss_and_grads(p, s, clip)?;
            Ok((f + b, g))
        },
        |_, _, _| Ok(Control::Continue),
    )?;
    Ok(BiLmTrained {
        model,
        epoch_losses,
    })
}

/// [`BiLmModel::embeddings`] with default extraction options.
pub fn bilm_embeddings(model: &BiLmModel, corpus: &Corpus) -> Result<EmbeddingTable> {
    model.embeddings(corpus, &ExtractOptions::default())
}
