//! word2vec with negative sampling, CBOW and skip-gram.
//!
//! Mirrors the reference C trainer: input vectors start in
//! `U(-0.5/E, 0.5/E)`, output vectors at zero, the learning rate decays
//! linearly per processed word down to `1e-4` of its initial value, and the
//! effective window is drawn uniformly from `1..=window` for each center
//! word. Training is single-threaded and fully determined by the seed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, BOS, EOS};
use crate::embed::{EmbeddingTable, Provenance};
use crate::error::{contract, Error, Result};
use crate::numcore::{dot, rng, sigmoid, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum W2vMode {
    Cbow,
    SkipGram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct W2vConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub mode: W2vMode,
    pub epochs: usize,
    pub lr: f64,
    /// Words seen fewer times than this in the training corpus are skipped.
    pub min_count: u64,
    pub unigram_exponent: f64,
    /// Frequent-word subsampling threshold; `None` disables subsampling.
    pub subsample: Option<f64>,
    pub seed: u64,
}

impl Default for W2vConfig {
    fn default() -> Self {
        W2vConfig {
            dim: 256,
            window: 5,
            negatives: 5,
            mode: W2vMode::Cbow,
            epochs: 5,
            lr: 0.025,
            min_count: 1,
            unigram_exponent: 0.75,
            subsample: None,
            seed: crate::DEFAULT_SEED,
        }
    }
}

impl W2vConfig {
    pub fn validate(&self) -> Result<()> {
        contract!(self.dim >= 1, "word2vec dim must be >= 1");
        contract!(self.window >= 1, "word2vec window must be >= 1");
        contract!(self.negatives >= 1, "word2vec needs at least one negative");
        contract!(
            self.unigram_exponent > 0.0 && self.unigram_exponent <= 1.0,
            "unigram exponent {} outside (0, 1]",
            self.unigram_exponent
        );
        Ok(())
    }
}

/// Sampling distribution proportional to `count^exponent`.
#[derive(Debug, Clone)]
pub struct UnigramTable {
    ids: Vec<usize>,
    cumulative: Vec<f64>,
}

impl UnigramTable {
    pub fn new(counts: &[(usize, u64)], exponent: f64) -> Result<Self> {
        let mut ids = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0.0;
        for &(id, c) in counts {
            if c == 0 {
                continue;
            }
            total += (c as f64).powf(exponent);
            ids.push(id);
            cumulative.push(total);
        }
        if ids.is_empty() {
            return Err(Error::Data("unigram table has no tokens".into()));
        }
        Ok(UnigramTable { ids, cumulative })
    }

    /// Probability assigned to `id`.
    pub fn prob(&self, id: usize) -> f64 {
        let total = *self.cumulative.last().unwrap();
        self.ids
            .iter()
            .position(|&i| i == id)
            .map_or(0.0, |k| {
                let lo = if k == 0 { 0.0 } else { self.cumulative[k - 1] };
                (self.cumulative[k] - lo) / total
            })
    }
}

/// Draws one token id from the unigram table.
pub fn negative_sample<R: Rng>(table: &UnigramTable, rng: &mut R) -> usize {
    let total = *table.cumulative.last().unwrap();
    let u = rng.gen::<f64>() * total;
    let k = table.cumulative.partition_point(|&c| c <= u);
    table.ids[k.min(table.ids.len() - 1)]
}

/// Negative-sampling loss for one input vector `h` against one positive and
/// several negative output rows:
/// `−ln σ(h·o₊) − Σ ln σ(−h·o₋)`.
/// Returns the loss with gradients w.r.t. the input and output matrices.
pub fn ns_loss_and_grads(
    input: &Mat,
    output: &Mat,
    center: usize,
    target: usize,
    negatives: &[usize],
) -> (f64, Mat, Mat) {
    let h = input.row(center);
    let mut g_in = Mat::zeros(input.rows(), input.cols());
    let mut g_out = Mat::zeros(output.rows(), output.cols());
    let mut loss = 0.0;
    let labelled = std::iter::once((target, 1.0)).chain(negatives.iter().map(|&n| (n, 0.0)));
    for (id, label) in labelled {
        let o = output.row(id);
        let f = dot(h, o);
        loss -= if label == 1.0 {
            sigmoid(f).ln()
        } else {
            sigmoid(-f).ln()
        };
        let coeff = sigmoid(f) - label;
        for k in 0..h.len() {
            let gi = g_in.get(center, k) + coeff * o[k];
            g_in.set(center, k, gi);
            let go = g_out.get(id, k) + coeff * h[k];
            g_out.set(id, k, go);
        }
    }
    (loss, g_in, g_out)
}

/// The seeded input-vector initialization training starts from.
pub fn initial_vectors(vocab_size: usize, cfg: &W2vConfig) -> Mat {
    let mut r = rng(cfg.seed);
    let bound = 0.5 / cfg.dim as f64;
    Mat::uniform(vocab_size, cfg.dim, bound, &mut r)
}

#[derive(Debug, Clone)]
pub struct W2vOutput {
    pub table: EmbeddingTable,
    /// Mean negative-sampling loss per center word, one entry per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains input-side vectors over every sentence of `corpus`, in order.
/// Framing tokens are not part of the training stream.
pub fn train_word2vec(corpus: &Corpus, cfg: &W2vConfig) -> Result<W2vOutput> {
    cfg.validate()?;
    let v = corpus.vocab.len();
    let mut counts = vec![0u64; v];
    for s in corpus.sentences() {
        for &w in s.words() {
            counts[w] += 1;
        }
    }
    let keep: Vec<bool> = counts.iter().map(|&c| c > 0 && c >= cfg.min_count).collect();
    let train_words: u64 = counts
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(c, _)| c)
        .sum();
    if train_words == 0 {
        return Err(Error::Data("corpus has no trainable tokens".into()));
    }
    let unigram = UnigramTable::new(
        &counts
            .iter()
            .enumerate()
            .filter(|(i, _)| keep[*i] && *i != BOS && *i != EOS)
            .map(|(i, &c)| (i, c))
            .collect::<Vec<_>>(),
        cfg.unigram_exponent,
    )?;

    let mut syn0 = initial_vectors(v, cfg);
    let mut syn1 = Mat::zeros(v, cfg.dim);
    // initialization consumed its own stream; training draws from a second one
    let mut r = rng(cfg.seed.wrapping_add(1));
    let total = cfg.epochs as f64 * train_words as f64 + 1.0;
    let mut processed = 0u64;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut neu1 = vec![0.0; cfg.dim];
    let mut neu1e = vec![0.0; cfg.dim];

    for _ in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut updates = 0u64;
        for s in corpus.sentences() {
            let mut sent = Vec::with_capacity(s.words().len());
            for &w in s.words() {
                if !keep[w] {
                    continue;
                }
                processed += 1;
                if let Some(t) = cfg.subsample {
                    let f = counts[w] as f64;
                    let thr = t * train_words as f64;
                    let p_keep = ((f / thr).sqrt() + 1.0) * thr / f;
                    if p_keep < r.gen::<f64>() {
                        continue;
                    }
                }
                sent.push(w);
            }
            let alpha = (cfg.lr * (1.0 - processed as f64 / total)).max(cfg.lr * 1e-4);
            for pos in 0..sent.len() {
                let center = sent[pos];
                let b = r.gen_range(1..=cfg.window);
                let lo = pos.saturating_sub(b);
                let hi = (pos + b).min(sent.len() - 1);
                let ctx: Vec<usize> = (lo..=hi).filter(|&j| j != pos).map(|j| sent[j]).collect();
                if ctx.is_empty() {
                    continue;
                }
                match cfg.mode {
                    W2vMode::Cbow => {
                        neu1.fill(0.0);
                        for &c in &ctx {
                            for (n, x) in neu1.iter_mut().zip(syn0.row(c)) {
                                *n += x;
                            }
                        }
                        neu1.iter_mut().for_each(|n| *n /= ctx.len() as f64);
                        neu1e.fill(0.0);
                        loss_sum += ns_update(&neu1, &mut neu1e, &mut syn1, center, &unigram, cfg, alpha, &mut r);
                        for &c in &ctx {
                            for (x, e) in syn0.row_mut(c).iter_mut().zip(&neu1e) {
                                *x += e;
                            }
                        }
                        updates += 1;
                    }
                    W2vMode::SkipGram => {
                        for &c in &ctx {
                            neu1e.fill(0.0);
                            let h = syn0.row(c).to_vec();
                            loss_sum += ns_update(&h, &mut neu1e, &mut syn1, center, &unigram, cfg, alpha, &mut r);
                            for (x, e) in syn0.row_mut(c).iter_mut().zip(&neu1e) {
                                *x += e;
                            }
                            updates += 1;
                        }
                    }
                }
            }
        }
        epoch_losses.push(if updates == 0 { 0.0 } else { loss_sum / updates as f64 });
    }
    let table = EmbeddingTable::for_vocab(&corpus.vocab, syn0, Provenance::Word2vec)?;
    Ok(W2vOutput {
        table,
        epoch_losses,
    })
}

/// One SGD step of the negative-sampling objective for input vector `h`.
/// Output rows are updated in place; the input gradient step is accumulated
/// into `neu1e`. Returns the loss before the update.
#[allow(clippy::too_many_arguments)]
fn ns_update<R: Rng>(
    h: &[f64],
    neu1e: &mut [f64],
    syn1: &mut Mat,
    center: usize,
    unigram: &UnigramTable,
    cfg: &W2vConfig,
    alpha: f64,
    r: &mut R,
) -> f64 {
    let mut loss = 0.0;
    for d in 0..=cfg.negatives {
        let (target, label) = if d == 0 {
            (center, 1.0)
        } else {
            let t = negative_sample(unigram, r);
            if t == center {
                continue;
            }
            (t, 0.0)
        };
        let o = syn1.row_mut(target);
        let f = dot(h, o);
        loss -= if label == 1.0 {
            sigmoid(f).ln()
        } else {
            sigmoid(-f).ln()
        };
        let g = (label - sigmoid(f)) * alpha;
        for k in 0..h.len() {
            neu1e[k] += g * o[k];
            o[k] += g * h[k];
        }
    }
    loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab_from_text, encode};
    use crate::numcore::{grad_check, norm2};

    fn corpus_of(text: &str) -> Corpus {
        let v = build_vocab_from_text(text, 1000, 1).unwrap();
        encode(text, &v)
    }

    #[test]
    fn unigram_probabilities() {
        let t = UnigramTable::new(&[(3, 16), (4, 1)], 0.75).unwrap();
        assert!((t.prob(3) - 8.0 / 9.0).abs() < 1e-15);
        let t = UnigramTable::new(&[(7, 5)], 0.75).unwrap();
        let mut r = rng(1);
        assert!((0..100).all(|_| negative_sample(&t, &mut r) == 7));
        assert!(UnigramTable::new(&[], 0.75).is_err());
        assert!(UnigramTable::new(&[(1, 0)], 0.75).is_err());
    }

    #[test]
    fn sampling_frequencies_match() {
        let t = UnigramTable::new(&[(0, 1), (1, 1)], 0.75).unwrap();
        let mut r = rng(42);
        let n = 100_000;
        let a = (0..n).filter(|_| negative_sample(&t, &mut r) == 0).count();
        assert!((a as f64 / n as f64 - 0.5).abs() < 0.01);

        let t = UnigramTable::new(&[(0, 16), (1, 1)], 0.75).unwrap();
        let a = (0..n).filter(|_| negative_sample(&t, &mut r) == 0).count();
        assert!((a as f64 / n as f64 - 8.0 / 9.0).abs() < 0.01);
    }

    #[test]
    fn ns_gradient_matches_finite_differences() {
        let mut r = rng(5);
        let input = Mat::uniform(10, 4, 0.8, &mut r);
        let output = Mat::uniform(10, 4, 0.8, &mut r);
        let negs = [1, 7, 9];
        let (_, gi, go) = ns_loss_and_grads(&input, &output, 2, 5, &negs);
        let flat: Vec<f64> = [input.data(), output.data()].concat();
        let analytic: Vec<f64> = [gi.data(), go.data()].concat();
        let report = grad_check(
            |x| {
                let a = Mat::from_vec(10, 4, x[..40].to_vec()).unwrap();
                let b = Mat::from_vec(10, 4, x[40..].to_vec()).unwrap();
                ns_loss_and_grads(&a, &b, 2, 5, &negs).0
            },
            &flat,
            &analytic,
            1e-5,
            1e-5,
        );
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let c = corpus_of("a b c a b c .");
        let cfg = W2vConfig { dim: 8, epochs: 0, ..W2vConfig::default() };
        let out = train_word2vec(&c, &cfg).unwrap();
        assert_eq!(out.table.matrix(), &initial_vectors(c.vocab.len(), &cfg));
        assert!(out.epoch_losses.is_empty());
    }

    #[test]
    fn loss_decreases_on_repeated_sentence() {
        // With a one-word window every context is the other word, so the
        // objective has no internal conflict and can keep improving.
        let text = "a b ".repeat(5000);
        let c = corpus_of(&text);
        for mode in [W2vMode::Cbow, W2vMode::SkipGram] {
            let cfg = W2vConfig { dim: 16, epochs: 6, window: 1, mode, seed: 42, ..W2vConfig::default() };
            let out = train_word2vec(&c, &cfg).unwrap();
            for w in out.epoch_losses.windows(2) {
                assert!(w[1] < w[0], "{mode:?}: {:?}", out.epoch_losses);
            }
            assert!(out.table.matrix().data().iter().all(|v| v.abs() < 1e3));
        }
    }

    #[test]
    fn interchangeable_words_align() {
        // x and y occur in exactly the same contexts
        let left = ["p1", "p2", "p3", "p4"];
        let right = ["q1", "q2", "q3", "q4"];
        let mut r = rng(42);
        let mut text = String::new();
        for _ in 0..2000 {
            let l = left[r.gen_range(0..4)];
            let m = if r.gen_bool(0.5) { "x" } else { "y" };
            let q = right[r.gen_range(0..4)];
            text.push_str(&format!("{l} {m} {q} .\n"));
        }
        let c = corpus_of(&text);
        let cfg = W2vConfig { dim: 16, epochs: 50, window: 2, ..W2vConfig::default() };
        let out = train_word2vec(&c, &cfg).unwrap();
        let x = out.table.row_of("x").unwrap();
        let y = out.table.row_of("y").unwrap();
        let cos = dot(x, y) / (norm2(x) * norm2(y));
        assert!(cos > 0.9, "cos = {cos}");
    }

    #[test]
    fn same_seed_same_table() {
        let c = corpus_of("the cat sat on the mat . the dog sat on the log .");
        let cfg = W2vConfig { dim: 8, epochs: 3, subsample: Some(1e-3), ..W2vConfig::default() };
        let a = train_word2vec(&c, &cfg).unwrap().table;
        let b = train_word2vec(&c, &cfg).unwrap().table;
        assert_eq!(a, b);
        let other = W2vConfig { seed: 7, ..cfg };
        assert_ne!(train_word2vec(&c, &other).unwrap().table, a);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let c = corpus_of("");
        assert!(train_word2vec(&c, &W2vConfig::default()).is_err());
        let bad = W2vConfig { unigram_exponent: 0.0, ..W2vConfig::default() };
        assert!(train_word2vec(&corpus_of("a b"), &bad).is_err());
    }
}
