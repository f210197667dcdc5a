//! Text ingestion: tokenization, vocabulary construction and integer encoding.
//!
//! Plain-text corpora hold one paragraph per blank-line separated block.
//! Labeled corpora hold one paragraph per line, prefixed `__label__<id>\t`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNK: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const NUM_RESERVED: usize = 3;

pub const UNK_TOKEN: &str = "<unk>";
pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";

pub const LABEL_PREFIX: &str = "__label__";

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || "“”‘’«»…–—¡¿".contains(c)
}

fn is_terminator(tok: &str) -> bool {
    matches!(tok, "." | "!" | "?")
}

/// Lowercases, splits on whitespace and detaches every punctuation character
/// as its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars() {
            if is_punct(c) {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(c.to_string());
            } else {
                word.extend(c.to_lowercase());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

/// Splits a token stream into sentences; `.`, `!` and `?` close a sentence
/// and stay attached to it. Trailing tokens form a final sentence.
pub fn split_sentences(tokens: Vec<String>) -> Vec<Vec<String>> {
    let mut sentences = Vec::new();
    let mut cur = Vec::new();
    for tok in tokens {
        let end = is_terminator(&tok);
        cur.push(tok);
        if end {
            sentences.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        sentences.push(cur);
    }
    sentences
}

/// Blank-line separated blocks of raw text. Blocks with no tokens are dropped.
pub fn split_paragraphs(text: &str) -> Vec<String> {
    let mut paras = Vec::new();
    let mut cur = String::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !cur.trim().is_empty() {
                paras.push(std::mem::take(&mut cur));
            }
            cur.clear();
        } else {
            if !cur.is_empty() {
                cur.push('\n');
            }
            cur.push_str(line);
        }
    }
    if !cur.trim().is_empty() {
        paras.push(cur);
    }
    paras
}

/// Paragraphs, each a list of tokenized sentences.
pub fn segment(text: &str) -> Vec<Vec<Vec<String>>> {
    split_paragraphs(text)
        .iter()
        .map(|p| split_sentences(tokenize(p)))
        .filter(|p| !p.is_empty())
        .collect()
}

/// Token ↔ id bijection with occurrence counts. Ids 0..3 are reserved for
/// `<unk>`, `<s>` and `</s>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    id_to_token: Vec<String>,
    counts: Vec<u64>,
    token_to_id: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
    counts: Vec<u64>,
}

impl From<VocabRepr> for Vocab {
    fn from(r: VocabRepr) -> Self {
        let token_to_id = r
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab {
            id_to_token: r.tokens,
            counts: r.counts,
            token_to_id,
        }
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr {
            tokens: v.id_to_token,
            counts: v.counts,
        }
    }
}

impl Vocab {
    /// Builds a vocabulary directly from `(token, count)` pairs in id order,
    /// the reserved tokens included.
    pub fn from_entries(entries: Vec<(String, u64)>) -> Result<Self> {
        if entries.len() < NUM_RESERVED
            || entries[UNK].0 != UNK_TOKEN
            || entries[BOS].0 != BOS_TOKEN
            || entries[EOS].0 != EOS_TOKEN
        {
            return Err(Error::Data(
                "vocabulary must start with <unk>, <s>, </s>".into(),
            ));
        }
        let mut token_to_id = HashMap::with_capacity(entries.len());
        let mut id_to_token = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        for (id, (tok, count)) in entries.into_iter().enumerate() {
            if token_to_id.insert(tok.clone(), id).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token {tok:?}")));
            }
            id_to_token.push(tok);
            counts.push(count);
        }
        Ok(Vocab {
            id_to_token,
            counts,
            token_to_id,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    /// Id of `token`, or [`UNK`] when out of vocabulary.
    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    /// Writes `token\tcount` lines in id order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        for (tok, c) in self.id_to_token.iter().zip(&self.counts) {
            let _ = writeln!(s, "{tok}\t{c}");
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let (tok, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, i + 1, "expected token<TAB>count"))?;
            let count = count
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad count {count:?}")))?;
            entries.push((tok.to_string(), count));
        }
        Self::from_entries(entries).map_err(|e| Error::parse(path, 1, e.to_string()))
    }
}

/// Keeps the `max_size - 3` most frequent tokens whose count reaches
/// `min_count`. Equal counts are ordered lexicographically so the result does
/// not depend on stream order. The `<unk>` count records how many occurrences
/// were dropped.
pub fn build_vocab<'a, I>(tokens: I, max_size: usize, min_count: u64) -> Result<Vocab>
where
    I: IntoIterator<Item = &'a str>,
{
    if max_size < NUM_RESERVED {
        return Err(Error::Contract(format!(
            "max_size {max_size} leaves no room for the reserved tokens"
        )));
    }
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for t in tokens {
        if matches!(t, UNK_TOKEN | BOS_TOKEN | EOS_TOKEN) {
            continue;
        }
        *freq.entry(t).or_default() += 1;
    }
    let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut entries = vec![
        (UNK_TOKEN.to_string(), 0),
        (BOS_TOKEN.to_string(), 0),
        (EOS_TOKEN.to_string(), 0),
    ];
    let mut dropped = 0;
    for (tok, c) in ranked {
        if c >= min_count && entries.len() < max_size {
            entries.push((tok.to_string(), c));
        } else {
            dropped += c;
        }
    }
    entries[UNK].1 = dropped;
    Vocab::from_entries(entries)
}

/// Builds a vocabulary over every token of a raw text.
pub fn build_vocab_from_text(text: &str, max_size: usize, min_count: u64) -> Result<Vocab> {
    let tokens = tokenize(text);
    build_vocab(tokens.iter().map(String::as_str), max_size, min_count)
}

/// `<s> w_1 .. w_T </s>` as token ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub ids: Vec<usize>,
}

impl Sentence {
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S], vocab: &Vocab) -> Self {
        let mut ids = Vec::with_capacity(tokens.len() + 2);
        ids.push(BOS);
        ids.extend(tokens.iter().map(|t| vocab.id_or_unk(t.as_ref())));
        ids.push(EOS);
        Sentence { ids }
    }

    /// Frames raw word ids with `<s>`/`</s>`.
    pub fn from_word_ids(words: &[usize]) -> Self {
        let mut ids = Vec::with_capacity(words.len() + 2);
        ids.push(BOS);
        ids.extend_from_slice(words);
        ids.push(EOS);
        Sentence { ids }
    }

    /// The ids between the framing tokens.
    pub fn words(&self) -> &[usize] {
        &self.ids[1..self.ids.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub sentences: Vec<Sentence>,
    pub label: Option<usize>,
}

impl Paragraph {
    /// Word ids of every sentence, concatenated without framing.
    pub fn words(&self) -> Vec<usize> {
        self.sentences
            .iter()
            .flat_map(|s| s.words().iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub paragraphs: Vec<Paragraph>,
    pub vocab: Vocab,
}

impl Corpus {
    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.paragraphs.iter().flat_map(|p| p.sentences.iter())
    }

    pub fn num_sentences(&self) -> usize {
        self.paragraphs.iter().map(|p| p.sentences.len()).sum()
    }

    /// Word occurrences, framing tokens excluded.
    pub fn num_words(&self) -> usize {
        self.sentences().map(|s| s.words().len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.paragraphs.is_empty()
    }

    /// One more than the largest paragraph label, or 0 when unlabeled.
    pub fn num_domains(&self) -> usize {
        self.paragraphs
            .iter()
            .filter_map(|p| p.label)
            .max()
            .map_or(0, |m| m + 1)
    }

    /// Same paragraphs with one sentence per paragraph (labels carried along).
    pub fn sentence_units(&self) -> Corpus {
        let paragraphs = self
            .paragraphs
            .iter()
            .flat_map(|p| {
                p.sentences.iter().map(move |s| Paragraph {
                    sentences: vec![s.clone()],
                    label: p.label,
                })
            })
            .collect();
        Corpus {
            paragraphs,
            vocab: self.vocab.clone(),
        }
    }

    fn check_ids(&self) -> Result<()> {
        let v = self.vocab.len();
        for s in self.sentences() {
            if s.ids.len() < 2 || s.ids.iter().any(|&i| i >= v) {
                return Err(Error::Contract(format!(
                    "sentence {:?} invalid for vocabulary of {v}",
                    s.ids
                )));
            }
        }
        Ok(())
    }

    /// Builds a corpus from already-encoded paragraphs, validating ids.
    pub fn from_paragraphs(paragraphs: Vec<Paragraph>, vocab: Vocab) -> Result<Self> {
        let c = Corpus { paragraphs, vocab };
        c.check_ids()?;
        Ok(c)
    }
}

/// Maps every token of `text` to its id (or `<unk>`), framing each sentence.
/// Paragraphs that tokenize to nothing are dropped.
pub fn encode(text: &str, vocab: &Vocab) -> Corpus {
    let paragraphs = segment(text)
        .into_iter()
        .map(|p| Paragraph {
            sentences: p.iter().map(|s| Sentence::from_tokens(s, vocab)).collect(),
            label: None,
        })
        .collect();
    Corpus {
        paragraphs,
        vocab: vocab.clone(),
    }
}

/// Token strings of a sentence without framing; OOV words come back as `<unk>`.
pub fn decode(sentence: &Sentence, vocab: &Vocab) -> Vec<String> {
    sentence
        .words()
        .iter()
        .map(|&i| vocab.token(i).unwrap_or(UNK_TOKEN).to_string())
        .collect()
}

/// A labeled paragraph as it appears in a `__label__` file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledLine {
    pub label: usize,
    pub text: String,
}

/// Parses `__label__<id>\t<paragraph>` lines. Blank lines are skipped.
pub fn parse_labeled(text: &str, origin: &Path) -> Result<Vec<LabeledLine>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rest = line
            .strip_prefix(LABEL_PREFIX)
            .ok_or_else(|| Error::parse(origin, i + 1, "missing __label__ prefix"))?;
        let (id, body) = rest
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, i + 1, "missing tab after label"))?;
        let label = id
            .parse()
            .map_err(|_| Error::parse(origin, i + 1, format!("bad label {id:?}")))?;
        out.push(LabeledLine {
            label,
            text: body.to_string(),
        });
    }
    Ok(out)
}

/// Formats one `__label__` line; newlines inside the paragraph become spaces.
pub fn format_labeled(label: usize, text: &str) -> String {
    let flat: Vec<&str> = text.split_whitespace().collect();
    format!("{LABEL_PREFIX}{label}\t{}", flat.join(" "))
}

/// Encodes labeled lines, one paragraph each.
pub fn encode_labeled(lines: &[LabeledLine], vocab: &Vocab) -> Corpus {
    let paragraphs = lines
        .iter()
        .filter_map(|l| {
            let sentences: Vec<Sentence> = split_sentences(tokenize(&l.text))
                .iter()
                .map(|s| Sentence::from_tokens(s, vocab))
                .collect();
            (!sentences.is_empty()).then_some(Paragraph {
                sentences,
                label: Some(l.label),
            })
        })
        .collect();
    Corpus {
        paragraphs,
        vocab: vocab.clone(),
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
