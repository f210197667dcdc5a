//! Train the LSTM language model from scratch on a small deterministic
//! corpus and report training perplexity after each epoch.
//!
//! ```text
//! cargo run --release --example lm_train
//! ```

use std::time::Instant;

use revlm::corpus::{build_vocab_from_text, encode};
use revlm::lm::{perplexity, train_lm, InputSpec, LmConfig, LmModel};
use revlm::numcore::AdamConfig;
use revlm::synth::cyclic_corpus;
use revlm::train::TrainConfig;

fn main() -> revlm::Result<()> {
    let text = cyclic_corpus(50);
    let vocab = build_vocab_from_text(&text, 100, 1)?;
    let corpus = encode(&text, &vocab);

    let cfg = LmConfig {
        emb_dim: 16,
        hidden: 32,
        patience: None,
        train: TrainConfig {
            epochs: 60,
            batch_size: 5,
            adam: AdamConfig { lr: 1e-2, ..AdamConfig::default() },
            ..TrainConfig::default()
        },
        ..LmConfig::default()
    };

    let untrained = LmModel::init_learned(&vocab, &cfg);
    println!("V = {}, untrained PPL {:.3}", vocab.len(), perplexity(&untrained, &corpus)?);

    let start = Instant::now();
    let trained = train_lm(&corpus, InputSpec::Learned, &cfg, None)?;
    for (e, loss) in trained.epoch_losses.iter().enumerate().step_by(10) {
        println!("epoch {:>3}  mean loss {loss:.4}", e + 1);
    }
    println!(
        "training PPL {:.4} after {:.1?}",
        perplexity(&trained.model, &corpus)?,
        start.elapsed()
    );
    Ok(())
}
