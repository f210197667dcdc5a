//! Label synthetic topic paragraphs with the iterative LSA + spherical
//! k-means labeler and score the result against the hidden topics.
//!
//! ```text
//! cargo run --release --example lsa_labeler [paragraphs] [d]
//! ```

use std::time::Instant;

use revlm::labeler::{adjusted_rand_index, docs_from_texts, iterate_labeling, LabelerConfig};
use revlm::synth::{topic_paragraphs, topics, TopicSpec};

fn main() -> revlm::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let n = args.next().flatten().unwrap_or(3000);
    let d = args.next().flatten().unwrap_or(64);

    let paragraphs = topic_paragraphs(&TopicSpec::default(), n);
    let texts: Vec<String> = paragraphs.iter().map(|p| p.text.clone()).collect();
    let (vocab, docs) = docs_from_texts(&texts, 1)?;

    let cfg = LabelerConfig { k: 3, d, ..LabelerConfig::default() };
    let start = Instant::now();
    let labeling = iterate_labeling(&docs, vocab.len(), &cfg)?;
    let elapsed = start.elapsed();

    println!("{n} paragraphs, {} terms, d = {d}", vocab.len());
    println!("exploratory k-means objective: {:?}", labeling.initial_objective);
    for (i, r) in labeling.rounds.iter().enumerate() {
        println!(
            "round {}: retained {} (mean margin {:.3}), relabeled {:.2}%",
            i + 1,
            r.retained,
            r.retained_confidence,
            100.0 * r.changed
        );
    }
    println!(
        "ARI vs hidden topics {:.4} ({elapsed:.1?})",
        adjusted_rand_index(&labeling.labels, &topics(&paragraphs))
    );
    Ok(())
}
