//! Seeded synthetic corpora for tests, examples and benchmarks.
//!
//! Topic corpora draw every paragraph from one topic. Each topic owns a
//! disjoint word list sampled with Zipf-like weights; a small set of shared
//! function words is mixed in. Topic words are named `t<topic>w<index>`.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::format_labeled;
use crate::numcore::rng;

pub const FUNCTION_WORDS: [&str; 6] = ["the", "of", "and", "a", "to", "in"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopicSpec {
    pub topics: usize,
    pub words_per_topic: usize,
    /// Inclusive range of sentences per paragraph.
    pub sentences: (usize, usize),
    /// Inclusive range of words per sentence, before the full stop.
    pub sentence_len: (usize, usize),
    /// Chance that a position holds a function word.
    pub function_prob: f64,
    /// Zipf exponent of topic word frequencies.
    pub zipf: f64,
    pub seed: u64,
}

impl Default for TopicSpec {
    fn default() -> Self {
        TopicSpec {
            topics: 3,
            words_per_topic: 40,
            sentences: (2, 4),
            sentence_len: (5, 10),
            function_prob: 0.3,
            zipf: 1.0,
            seed: crate::DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParagraph {
    pub topic: usize,
    pub text: String,
}

pub fn topic_word(topic: usize, index: usize) -> String {
    format!("t{topic}w{index}")
}

/// `n` paragraphs whose topics cycle `0, 1, …, topics − 1`.
pub fn topic_paragraphs(spec: &TopicSpec, n: usize) -> Vec<SynthParagraph> {
    let mut r = rng(spec.seed);
    let weights: Vec<f64> = (1..=spec.words_per_topic)
        .map(|k| 1.0 / (k as f64).powf(spec.zipf))
        .collect();
    let pick = WeightedIndex::new(&weights).expect("positive weights");
    (0..n)
        .map(|i| {
            let topic = i % spec.topics.max(1);
            let n_sent = r.gen_range(spec.sentences.0..=spec.sentences.1);
            let sentences: Vec<String> = (0..n_sent)
                .map(|_| {
                    let len = r.gen_range(spec.sentence_len.0..=spec.sentence_len.1);
                    let words: Vec<String> = (0..len)
                        .map(|_| {
                            if r.gen_bool(spec.function_prob) {
                                FUNCTION_WORDS[r.gen_range(0..FUNCTION_WORDS.len())].to_string()
                            } else {
                                topic_word(topic, pick.sample(&mut r))
                            }
                        })
                        .collect();
                    format!("{}.", words.join(" "))
                })
                .collect();
            SynthParagraph {
                topic,
                text: sentences.join(" "),
            }
        })
        .collect()
}

/// Paragraphs separated by blank lines.
pub fn plain_text(paragraphs: &[SynthParagraph]) -> String {
    paragraphs
        .iter()
        .map(|p| format!("{}\n\n", p.text))
        .collect()
}

/// One `__label__<topic>\t<paragraph>` line per paragraph.
pub fn labeled_text(paragraphs: &[SynthParagraph]) -> String {
    paragraphs
        .iter()
        .map(|p| format_labeled(p.topic, &p.text) + "\n")
        .collect()
}

pub fn topics(paragraphs: &[SynthParagraph]) -> Vec<usize> {
    paragraphs.iter().map(|p| p.topic).collect()
}

/// `n` sentences over a cycle of five words, each 12 words long and starting
/// at word `i mod 5`. Only the first word of a sentence is uncertain, so a
/// perfect model reaches a perplexity of `5^(1/14) ≈ 1.12`.
pub fn cyclic_corpus(n: usize) -> String {
    const CYCLE: [&str; 5] = ["red", "green", "blue", "black", "white"];
    let mut out = String::new();
    for i in 0..n {
        let words: Vec<&str> = (0..12).map(|k| CYCLE[(i + k) % 5]).collect();
        out.push_str(&words.join(" "));
        out.push_str(".\n");
    }
    out
}
