//! Train the bi-LSTM domain classifier on a two-topic synthetic corpus,
//! report majority-vote accuracy, and export its averaged state embeddings.
//!
//! ```text
//! cargo run --release --example domain_classifier [paragraphs]
//! ```

use std::time::Instant;

use revlm::corpus::{build_vocab_from_text, encode_labeled, parse_labeled};
use revlm::domaincls::{train_domaincls, DomainConfig, Granularity};
use revlm::synth::{labeled_text, plain_text, topic_paragraphs, TopicSpec};
use revlm::train::TrainConfig;

fn main() -> revlm::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2000);
    let spec = TopicSpec { topics: 2, ..TopicSpec::default() };
    let paragraphs = topic_paragraphs(&spec, n);
    let lines = parse_labeled(&labeled_text(&paragraphs), "synthetic".as_ref())?;
    let vocab = build_vocab_from_text(&plain_text(&paragraphs), 10_000, 1)?;
    let corpus = encode_labeled(&lines, &vocab);

    let cfg = DomainConfig {
        emb_dim: 16,
        hidden: 16,
        train: TrainConfig { epochs: 2, ..TrainConfig::default() },
        ..DomainConfig::default()
    };
    let start = Instant::now();
    let trained = train_domaincls(&corpus, &cfg)?;
    let model = &trained.model;
    println!("{n} paragraphs, V = {}, losses {:?}", vocab.len(), trained.epoch_losses);
    println!(
        "paragraph accuracy {:.4}, sentence accuracy {:.4} ({:.1?})",
        model.accuracy(&corpus, Granularity::Paragraph)?,
        model.accuracy(&corpus, Granularity::Sentence)?,
        start.elapsed()
    );

    let table = model.embeddings(&corpus)?;
    println!("embedding table {} x {}", table.len(), table.dim());
    Ok(())
}
