//! Baseline LM against LMs with frozen pre-trained word2vec, bi-LM and
//! domain-classifier embeddings, all run from one manifest.
//!
//! The LM sees a small slice of a topic-conditioned synthetic corpus; the
//! embeddings are pre-trained on a much larger sample from the same
//! distribution.
//!
//! ```text
//! cargo run --release --example experiment_suite [out_dir]
//! ```

use std::path::PathBuf;
use std::time::Instant;

use revlm::lm::{run_experiment_suite, Manifest};
use revlm::synth::{labeled_text, plain_text, topic_paragraphs, TopicSpec};

fn write(dir: &std::path::Path, name: &str, text: &str) -> std::io::Result<()> {
    std::fs::write(dir.join(name), text)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("revlm-suite"));
    std::fs::create_dir_all(&dir)?;

    let sample = |seed, n| topic_paragraphs(&TopicSpec { seed, ..TopicSpec::default() }, n);
    write(&dir, "train.txt", &plain_text(&sample(1, 60)))?;
    write(&dir, "valid.txt", &plain_text(&sample(2, 60)))?;
    write(&dir, "test.txt", &plain_text(&sample(3, 60)))?;
    let large = sample(4, 3000);
    write(&dir, "large.txt", &plain_text(&large))?;
    write(&dir, "large.labeled.txt", &labeled_text(&large))?;

    let mut manifest: Manifest = serde_json::from_str(
        r#"{
        "corpus": { "train": "train.txt", "valid": "valid.txt", "test": "test.txt", "tag": "topics-60" },
        "lm": { "emb_dim": 16, "hidden": 32, "patience": 3,
                "train": { "epochs": 40, "batch_size": 8, "adam": { "lr": 0.005 } } },
        "seeds": [42, 43, 44],
        "embeddings": [
            { "source": { "kind": "word2vec", "corpus": "large.txt",
                          "config": { "dim": 16, "window": 3, "epochs": 5 } },
              "dataset": "topics-3000", "data_type": "sentences" },
            { "source": { "kind": "bilm", "corpus": "large.txt",
                          "config": { "emb_dim": 16, "hidden": 8, "train": { "epochs": 1 } } },
              "dataset": "topics-3000", "data_type": "sentences", "normalization": "meanvar" },
            { "source": { "kind": "domaincls", "corpus": "large.labeled.txt",
                          "config": { "emb_dim": 16, "hidden": 8, "train": { "epochs": 1 } } },
              "dataset": "topics-3000", "data_type": "paragraphs" }
        ],
        "probes": [ { "text": "the t0w0 of t0w1 and t0w2.", "position": 2 } ]
    }"#,
    )?;
    manifest.resolve_paths(&dir);

    let start = Instant::now();
    let report = run_experiment_suite(&manifest)?;
    print!("{}", report.to_table());
    println!("({:.1?})", start.elapsed());
    std::fs::write(dir.join("report.json"), report.to_json()?)?;
    for row in &report.rows {
        for p in &row.probes {
            println!("[{}] {}", row.provenance, p.report().lines().next().unwrap_or(""));
        }
    }
    Ok(())
}
