//! The unidirectional LSTM language model, its perplexity, the word-rank
//! probe and the multi-row experiment suite.
//!
//! The input stage is either a learned `V × E` embedding (the baseline) or a
//! pre-trained table, optionally frozen and optionally followed by a learned
//! linear compression `E' × E_pre`. Training and evaluation run sentence by
//! sentence with the recurrent state reset at `<s>`.

mod probe;
pub mod suite;

pub use probe::{format_rank, rank_of, rank_probe, ProbeResult};
pub use suite::{run_experiment_suite, EmbeddingSource, EmbeddingSpec, EvalReport, Manifest, ReportRow};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{Corpus, Sentence, Vocab, NUM_RESERVED};
use crate::embed::{EmbeddingTable, Normalization, Provenance};
use crate::error::{Error, Result};
use crate::numcore::{
    axpy, prefixed, rng, seq_log_probs, seq_loss_and_grads, view, Checkpoint, Dense, Mat, Params,
    SeqModel, TensorView,
};
use crate::train::{fit, Control, TrainConfig};

pub const CHECKPOINT_KIND: &str = "lm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    /// Embedding size of the learned baseline input stage.
    pub emb_dim: usize,
    pub hidden: usize,
    pub clip: Option<f64>,
    /// Stop after this many epochs without validation improvement.
    pub patience: Option<usize>,
    pub train: TrainConfig,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            emb_dim: 256,
            hidden: 128,
            clip: None,
            patience: Some(2),
            train: TrainConfig::default(),
        }
    }
}

/// Description of the active input stage, kept for reports and checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InputStage {
    Learned,
    Pretrained {
        provenance: Provenance,
        normalization: Normalization,
    },
}

/// How to build the input stage for [`train_lm`].
#[derive(Debug, Clone, Copy)]
pub enum InputSpec<'a> {
    Learned,
    Pretrained {
        table: &'a EmbeddingTable,
        frozen: bool,
        /// Output size of a learned compression layer, if any.
        compression: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmParams {
    /// Learned embedding or pre-trained table, rows indexed by vocab id.
    pub embedding: Mat,
    /// Learned `E' × E_pre` map applied after the table lookup.
    pub compression: Option<Mat>,
    /// Excludes `embedding` from training.
    pub frozen: bool,
    pub seq: SeqModel,
}

impl Params for LmParams {
    fn tensors(&self) -> Vec<(String, TensorView<'_>)> {
        let e = &self.embedding;
        let mut v = vec![("embedding".to_string(), view(e.rows(), e.cols(), e.data()))];
        if let Some(c) = &self.compression {
            v.push(("compression".to_string(), view(c.rows(), c.cols(), c.data())));
        }
        v.extend(prefixed("seq", self.seq.tensors()));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = vec![self.embedding.data_mut()];
        if let Some(c) = &mut self.compression {
            v.push(c.data_mut());
        }
        v.extend(self.seq.tensors_mut());
        v
    }

    fn trainable(&self) -> Vec<&[f64]> {
        let skip = usize::from(self.frozen);
        self.tensors()
            .into_iter()
            .skip(skip)
            .map(|(_, t)| t.data)
            .collect()
    }

    fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let skip = usize::from(self.frozen);
        self.tensors_mut().into_iter().skip(skip).collect()
    }
}

impl LmParams {
    fn input_vector(&self, id: usize) -> Vec<f64> {
        let row = self.embedding.row(id);
        match &self.compression {
            Some(c) => c.matvec(row),
            None => row.to_vec(),
        }
    }

    fn inputs(&self, ids: &[usize]) -> Vec<Vec<f64>> {
        ids.iter().map(|&i| self.input_vector(i)).collect()
    }

    /// Mean next-word loss of one sentence and its gradients.
    pub fn sentence_loss_and_grads(&self, s: &Sentence, clip: Option<f64>) -> Result<(f64, LmParams)> {
        let n = s.ids.len();
        let inputs = self.inputs(&s.ids[..n - 1]);
        let g = seq_loss_and_grads(&self.seq, &inputs, &s.ids[1..], clip)?;
        let mut grads = LmParams {
            embedding: Mat::zeros(self.embedding.rows(), self.embedding.cols()),
            compression: self
                .compression
                .as_ref()
                .map(|c| Mat::zeros(c.rows(), c.cols())),
            frozen: self.frozen,
            seq: g.grads,
        };
        for (k, dx) in g.d_inputs.iter().enumerate() {
            let id = s.ids[k];
            match (&self.compression, &mut grads.compression) {
                (Some(c), Some(gc)) => {
                    gc.add_outer(dx, self.embedding.row(id));
                    if !self.frozen {
                        c.t_matvec_add(dx, grads.embedding.row_mut(id));
                    }
                }
                _ => {
                    if !self.frozen {
                        axpy(1.0, dx, grads.embedding.row_mut(id));
                    }
                }
            }
        }
        Ok((g.loss, grads))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmModel {
    pub vocab: Vocab,
    pub params: LmParams,
    pub input: InputStage,
    pub clip: Option<f64>,
}

impl LmModel {
    /// Baseline model with a learned `V × emb_dim` input stage.
    pub fn init_learned(vocab: &Vocab, config: &LmConfig) -> Self {
        let mut r = rng(config.train.seed);
        let e = config.emb_dim;
        let embedding = Mat::uniform(vocab.len(), e, 1.0 / (e as f64).sqrt(), &mut r);
        let seq = SeqModel::init(e, config.hidden, vocab.len(), &mut r);
        LmModel {
            vocab: vocab.clone(),
            params: LmParams {
                embedding,
                compression: None,
                frozen: false,
                seq,
            },
            input: InputStage::Learned,
            clip: config.clip,
        }
    }

    /// Model reading a pre-trained table aligned to `vocab`. Words the table
    /// lacks get zero rows; their ids are returned alongside the model.
    pub fn init_pretrained(
        vocab: &Vocab,
        table: &EmbeddingTable,
        frozen: bool,
        compression: Option<usize>,
        config: &LmConfig,
    ) -> Result<(Self, Vec<usize>)> {
        if table.dim() == 0 {
            return Err(Error::Data("pre-trained table has zero columns".into()));
        }
        let (aligned, missing) = table.align_to(vocab);
        let real_missing = missing.iter().filter(|&&i| i >= NUM_RESERVED).count();
        let real_words = vocab.len() - NUM_RESERVED;
        if real_words > 0 && real_missing == real_words {
            return Err(Error::Data(
                "pre-trained table covers none of the corpus vocabulary".into(),
            ));
        }
        if real_missing > 0 {
            log::warn!("{real_missing} of {real_words} vocabulary words missing from the pre-trained table; using zero rows");
        }
        let mut r = rng(config.train.seed);
        let e_pre = table.dim();
        let comp = compression.map(|e| Mat::uniform(e, e_pre, 1.0 / (e_pre as f64).sqrt(), &mut r));
        let lstm_in = compression.unwrap_or(e_pre);
        let seq = SeqModel::init(lstm_in, config.hidden, vocab.len(), &mut r);
        let model = LmModel {
            vocab: vocab.clone(),
            params: LmParams {
                embedding: aligned,
                compression: comp,
                frozen,
                seq,
            },
            input: InputStage::Pretrained {
                provenance: table.provenance,
                normalization: table.normalization,
            },
            clip: config.clip,
        };
        Ok((model, missing))
    }

    pub fn init(vocab: &Vocab, input: InputSpec<'_>, config: &LmConfig) -> Result<(Self, Vec<usize>)> {
        match input {
            InputSpec::Learned => Ok((Self::init_learned(vocab, config), Vec::new())),
            InputSpec::Pretrained {
                table,
                frozen,
                compression,
            } => Self::init_pretrained(vocab, table, frozen, compression, config),
        }
    }

    /// Sets the output layer to zero, making every prediction uniform.
    pub fn zero_output(&mut self) {
        let out = &self.params.seq.out;
        self.params.seq.out = Dense::zeros(out.outputs(), out.inputs());
    }

    /// `ln p(w_t | prefix)` for every predicted token of a sentence
    /// (`w_1 … w_T </s>`).
    pub fn sentence_log_probs(&self, s: &Sentence) -> Result<Vec<f64>> {
        let n = s.ids.len();
        let inputs = self.params.inputs(&s.ids[..n - 1]);
        seq_log_probs(&self.params.seq, &inputs, &s.ids[1..], self.clip)
    }

    /// Next-word distribution after reading `prefix` (which starts with `<s>`).
    pub fn next_word_distribution(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        let inputs = self.params.inputs(prefix);
        let states = crate::numcore::run_states(&self.params.seq.lstm, &inputs, self.clip)?;
        let last = states
            .last()
            .ok_or_else(|| Error::Contract("empty prefix".into()))?;
        Ok(crate::numcore::softmax(&self.params.seq.out.apply(&last.h)))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = json!({
            "vocab": self.vocab,
            "input": self.input,
            "frozen": self.params.frozen,
            "clip": self.clip,
            "hidden": self.params.seq.lstm.hidden(),
        });
        let mut ck = Checkpoint::new(CHECKPOINT_KIND, meta);
        for (name, t) in self.params.tensors() {
            ck.push(name, t);
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let vocab: Vocab = serde_json::from_value(ck.meta["vocab"].clone())?;
        let input: InputStage = serde_json::from_value(ck.meta["input"].clone())?;
        let frozen = ck.meta["frozen"].as_bool().unwrap_or(false);
        let clip: Option<f64> = serde_json::from_value(ck.meta["clip"].clone())?;
        let get = |name: &str| {
            ck.get(name)
                .ok_or_else(|| Error::Data(format!("checkpoint lacks {name}")))
        };
        let emb = get("embedding")?;
        let embedding = Mat::from_vec(emb.rows, emb.cols, emb.data.clone())?;
        let compression = match ck.get("compression") {
            Some(t) => Some(Mat::from_vec(t.rows, t.cols, t.data.clone())?),
            None => None,
        };
        let w = get("seq.lstm.W")?;
        let hidden = w.rows / 4;
        let mut seq = SeqModel {
            lstm: crate::numcore::LstmParams::zeros(w.cols, hidden),
            out: Dense::zeros(vocab.len(), hidden),
        };
        ck.fill_params("seq", &mut seq)?;
        Ok(LmModel {
            vocab,
            params: LmParams {
                embedding,
                compression,
                frozen,
                seq,
            },
            input,
            clip,
        })
    }
}

/// `exp(−(1/N) Σ ln p(w_t | prefix))` with `N` counting words and `</s>`
/// but not `<s>`. Per-sentence sums are added in sorted order so the value
/// does not depend on sentence order.
pub fn perplexity(model: &LmModel, corpus: &Corpus) -> Result<f64> {
    if corpus.vocab.len() != model.vocab.len() {
        return Err(Error::Data(format!(
            "corpus vocabulary has {} entries, model {}",
            corpus.vocab.len(),
            model.vocab.len()
        )));
    }
    let mut sums = Vec::with_capacity(corpus.num_sentences());
    let mut n = 0usize;
    for s in corpus.sentences() {
        let lp = model.sentence_log_probs(s)?;
        n += lp.len();
        sums.push(lp.iter().sum::<f64>());
    }
    if n == 0 {
        return Err(Error::Data("perplexity of an empty corpus".into()));
    }
    sums.sort_by(f64::total_cmp);
    let total: f64 = sums.iter().sum();
    Ok((-total / n as f64).exp())
}

#[derive(Debug, Clone)]
pub struct LmTrained {
    pub model: LmModel,
    pub epoch_losses: Vec<f64>,
    /// Validation perplexity after each epoch, when a validation set was given.
    pub valid_ppl: Vec<f64>,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
    /// Vocabulary ids that had no pre-trained row.
    pub missing_rows: Vec<usize>,
}

/// Trains the next-word objective sentence by sentence. With a validation
/// corpus the best epoch is kept and training stops after `patience`
/// epochs without improvement.
pub fn train_lm(
    corpus: &Corpus,
    input: InputSpec<'_>,
    config: &LmConfig,
    valid: Option<&Corpus>,
) -> Result<LmTrained> {
    if corpus.num_sentences() == 0 {
        return Err(Error::Data("LM training corpus is empty".into()));
    }
    let (mut model, missing_rows) = LmModel::init(&corpus.vocab, input, config)?;
    let sentences: Vec<&Sentence> = corpus.sentences().collect();
    let clip = config.clip;
    let template = model.clone();
    let mut best: Option<(f64, usize, LmParams)> = None;
    let mut valid_ppl = Vec::new();
    let epoch_losses = fit(
        &mut model.params,
        &sentences,
        &config.train,
        |p, s| p.sentence_loss_and_grads(s, clip),
        |epoch, _, p| {
            let Some(v) = valid else {
                return Ok(Control::Continue);
            };
            let probe = LmModel {
                params: p.clone(),
                ..template.clone()
            };
            let ppl = perplexity(&probe, v)?;
            valid_ppl.push(ppl);
            if best.as_ref().is_none_or(|(b, _, _)| ppl < *b) {
                best = Some((ppl, epoch, p.clone()));
            }
            let since = epoch - best.as_ref().map_or(epoch, |b| b.1);
            Ok(match config.patience {
                Some(pat) if since >= pat => Control::Stop,
                _ => Control::Continue,
            })
        },
    )?;
    let best_epoch = match best {
        Some((_, e, p)) => {
            model.params = p;
            e + 1
        }
        None => epoch_losses.len(),
    };
    Ok(LmTrained {
        model,
        epoch_losses,
        valid_ppl,
        best_epoch,
        missing_rows,
    })
}
