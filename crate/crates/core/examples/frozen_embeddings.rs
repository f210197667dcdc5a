//! Feed a pre-trained table into the LM three ways: frozen, frozen behind a
//! learned compression layer, and fine-tuned. Frozen rows come out of
//! training bit-for-bit unchanged.
//!
//! ```text
//! cargo run --release --example frozen_embeddings
//! ```

use revlm::corpus::{build_vocab_from_text, encode};
use revlm::embed::{normalize, Normalization};
use revlm::lm::{perplexity, train_lm, InputSpec, LmConfig};
use revlm::synth::{plain_text, topic_paragraphs, TopicSpec};
use revlm::train::TrainConfig;
use revlm::word2vec::{train_word2vec, W2vConfig};

fn main() -> revlm::Result<()> {
    let sample = |seed, n| plain_text(&topic_paragraphs(&TopicSpec { seed, ..TopicSpec::default() }, n));
    let large = sample(4, 2000);
    let big_vocab = build_vocab_from_text(&large, 10_000, 1)?;
    let w2v = train_word2vec(&encode(&large, &big_vocab), &W2vConfig { dim: 24, window: 3, ..W2vConfig::default() })?;
    let table = normalize(&w2v.table, Normalization::Meanvar)?;

    let train_text = sample(1, 60);
    let vocab = build_vocab_from_text(&train_text, 10_000, 1)?;
    let train = encode(&train_text, &vocab);
    let valid = encode(&sample(2, 60), &vocab);

    let cfg = LmConfig {
        emb_dim: 16,
        hidden: 32,
        train: TrainConfig { epochs: 30, batch_size: 8, ..TrainConfig::default() },
        ..LmConfig::default()
    };
    let cases: [(&str, InputSpec); 4] = [
        ("learned", InputSpec::Learned),
        ("frozen", InputSpec::Pretrained { table: &table, frozen: true, compression: None }),
        ("frozen + compression 12", InputSpec::Pretrained { table: &table, frozen: true, compression: Some(12) }),
        ("fine-tuned", InputSpec::Pretrained { table: &table, frozen: false, compression: None }),
    ];
    for (name, input) in cases {
        let frozen = matches!(input, InputSpec::Pretrained { frozen: true, .. });
        let trained = train_lm(&train, input, &cfg, Some(&valid))?;
        let emb = trained.model.params.embedding.clone();
        let (aligned, _) = table.align_to(&vocab);
        println!(
            "{name:<24} valid PPL {:.3} (best epoch {}), table unchanged: {}",
            perplexity(&trained.model, &valid)?,
            trained.best_epoch,
            if frozen { (emb == aligned).to_string() } else { "-".into() }
        );
    }
    Ok(())
}
