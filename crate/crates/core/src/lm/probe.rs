use serde::{Deserialize, Serialize};

use super::LmModel;
use crate::corpus::{Sentence, Vocab};
use crate::error::{Error, Result};

/// Rank of `target` under `probs`: one plus the number of ids with a
/// strictly higher probability, plus the number of lower ids with an equal
/// probability (ties go to the lower id).
pub fn rank_of(probs: &[f64], target: usize) -> usize {
    let pt = probs[target];
    1 + probs
        .iter()
        .enumerate()
        .filter(|&(j, &p)| p > pt || (p == pt && j < target))
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    /// 1-based index of the probed word within the sentence.
    pub position: usize,
    pub target: String,
    pub target_prob: f64,
    pub rank: usize,
    pub vocab_size: usize,
    /// The ten most probable next words, best first.
    pub top: Vec<(String, f64)>,
}

impl ProbeResult {
    pub fn report(&self) -> String {
        let mut s = format!(
            "\"{}\" at word {}: position {} out of a vocabulary of {} (p = {:.6e})\n",
            self.target,
            self.position,
            format_rank(self.rank),
            format_rank(self.vocab_size),
            self.target_prob
        );
        for (i, (tok, p)) in self.top.iter().enumerate() {
            s.push_str(&format!("{:>3}. {tok}\t{p:.6e}\n", i + 1));
        }
        s
    }
}

/// Formats a count with comma thousands separators: 28553 -> "28,553".
pub fn format_rank(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn top_k(probs: &[f64], vocab: &Vocab, k: usize) -> Vec<(String, f64)> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    idx.into_iter()
        .take(k)
        .map(|i| (vocab.token(i).unwrap_or("?").to_string(), probs[i]))
        .collect()
}

/// Probes word `position` (1-based, real words only) of a framed sentence.
pub fn rank_probe(model: &LmModel, sentence: &Sentence, position: usize) -> Result<ProbeResult> {
    let words = sentence.words();
    if position == 0 || position > words.len() {
        return Err(Error::Data(format!(
            "position {position} outside the sentence's {} words",
            words.len()
        )));
    }
    let probs = model.next_word_distribution(&sentence.ids[..position])?;
    let target = sentence.ids[position];
    Ok(ProbeResult {
        position,
        target: model.vocab.token(target).unwrap_or("?").to_string(),
        target_prob: probs[target],
        rank: rank_of(&probs, target),
        vocab_size: probs.len(),
        top: top_k(&probs, &model.vocab, 10),
    })
}
