//! Where does the LM rank the word that actually came next? Trains a small
//! model, saves and reloads its checkpoint, then probes every position of a
//! sentence.

use revlm::corpus::{build_vocab_from_text, encode, Sentence};
use revlm::lm::{rank_probe, train_lm, InputSpec, LmConfig, LmModel};
use revlm::numcore::{AdamConfig, Checkpoint};
use revlm::synth::cyclic_corpus;
use revlm::train::TrainConfig;

fn main() -> revlm::Result<()> {
    let text = cyclic_corpus(50) + "blue green red.\n";
    let vocab = build_vocab_from_text(&text, 100, 1)?;
    let corpus = encode(&text, &vocab);
    let cfg = LmConfig {
        emb_dim: 8,
        hidden: 16,
        train: TrainConfig {
            epochs: 30,
            batch_size: 5,
            adam: AdamConfig { lr: 1e-2, ..AdamConfig::default() },
            ..TrainConfig::default()
        },
        ..LmConfig::default()
    };
    let trained = train_lm(&corpus, InputSpec::Learned, &cfg, None)?;

    let path = std::env::temp_dir().join("revlm-probe.ckpt");
    trained.model.to_checkpoint().save(&path)?;
    let model = LmModel::from_checkpoint(&Checkpoint::load(&path)?)?;

    // The third word breaks the cycle.
    let words: Vec<String> = "red green red black white".split(' ').map(String::from).collect();
    let sentence = Sentence::from_tokens(&words, &model.vocab);
    for position in 1..=words.len() {
        let r = rank_probe(&model, &sentence, position)?;
        print!("{}", r.report().lines().next().unwrap_or(""));
        println!("   best guess {:?}", r.top[0].0);
    }
    println!("\nfull report for word 3:\n{}", rank_probe(&model, &sentence, 3)?.report());
    Ok(())
}
