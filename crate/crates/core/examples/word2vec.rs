//! Train CBOW and skip-gram vectors with negative sampling on a synthetic
//! topic corpus, then compare within-topic and cross-topic similarity.
//!
//! ```text
//! cargo run --release --example word2vec
//! ```

use revlm::corpus::{build_vocab_from_text, encode};
use revlm::embed::{normalize, Normalization};
use revlm::numcore::dot;
use revlm::synth::{plain_text, topic_paragraphs, topic_word, TopicSpec};
use revlm::word2vec::{train_word2vec, W2vConfig, W2vMode};

fn main() -> revlm::Result<()> {
    let text = plain_text(&topic_paragraphs(&TopicSpec::default(), 1500));
    let vocab = build_vocab_from_text(&text, 10_000, 1)?;
    let corpus = encode(&text, &vocab);

    for mode in [W2vMode::Cbow, W2vMode::SkipGram] {
        let cfg = W2vConfig { dim: 32, window: 3, epochs: 3, mode, ..W2vConfig::default() };
        let out = train_word2vec(&corpus, &cfg)?;
        let table = normalize(&out.table, Normalization::Unit)?;
        let cos = |a: &str, b: &str| match (table.row_of(a), table.row_of(b)) {
            (Some(x), Some(y)) => dot(x, y),
            _ => f64::NAN,
        };
        let (a, b, c) = (topic_word(0, 0), topic_word(0, 1), topic_word(1, 0));
        println!(
            "{mode:?}: losses {:.4?}\n  cos({a}, {b}) = {:.3}   cos({a}, {c}) = {:.3}",
            out.epoch_losses,
            cos(&a, &b),
            cos(&a, &c)
        );
    }
    Ok(())
}
