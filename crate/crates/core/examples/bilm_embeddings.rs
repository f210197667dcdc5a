//! Train a small bidirectional LM and turn its per-occurrence states into
//! one context-independent vector per word.

use revlm::bilm::{train_bilm, BiLmConfig, Combine, ExtractOptions, StateKind};
use revlm::corpus::{build_vocab_from_text, encode};
use revlm::embed::{mean_variance_normalize, EmbeddingTable};
use revlm::synth::{plain_text, topic_paragraphs, TopicSpec};
use revlm::train::TrainConfig;

fn main() -> revlm::Result<()> {
    let text = plain_text(&topic_paragraphs(&TopicSpec::default(), 300));
    let vocab = build_vocab_from_text(&text, 10_000, 1)?;
    let corpus = encode(&text, &vocab);

    let cfg = BiLmConfig {
        emb_dim: 16,
        hidden: 12,
        train: TrainConfig { epochs: 2, ..TrainConfig::default() },
        ..BiLmConfig::default()
    };
    let trained = train_bilm(&corpus, &cfg)?;
    println!("forward + backward loss per epoch: {:.4?}", trained.epoch_losses);

    for (state, combine) in [
        (StateKind::Cell, Combine::Concat),
        (StateKind::Hidden, Combine::Concat),
        (StateKind::Cell, Combine::Average),
    ] {
        let opts = ExtractOptions { state, combine, clip: None };
        let table = trained.model.embeddings(&corpus, &opts)?;
        println!("{state:?}/{combine:?}: {} x {}", table.len(), table.dim());
    }

    // Cell states with the default options, standardized per dimension and
    // written in the embedding text format.
    let table = mean_variance_normalize(&trained.model.embeddings(&corpus, &ExtractOptions::default())?, false)?;
    let text = table.to_text();
    print!("{}", text.lines().take(3).map(|l| format!("{:.80}…\n", l)).collect::<String>());
    let back = EmbeddingTable::parse(&text, "bilm.txt".as_ref())?;
    assert_eq!(back.matrix(), table.matrix());
    Ok(())
}
