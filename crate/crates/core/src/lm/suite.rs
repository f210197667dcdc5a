//! Baseline plus one LM per embedding spec, evaluated on shared
//! validation and test sets and reported in a fixed row schema.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{perplexity, rank_probe, train_lm, InputSpec, LmConfig, LmModel, ProbeResult};
use crate::bilm::{train_bilm, BiLmConfig, ExtractOptions};
use crate::corpus::{
    build_vocab_from_text, encode, encode_labeled, parse_labeled, read_text, segment, Corpus,
    Sentence,
};
use crate::domaincls::{train_domaincls, DomainConfig, Granularity};
use crate::embed::{normalize, EmbeddingTable, Normalization, Provenance};
use crate::error::{Error, Result};
use crate::labeler::{docs_from_texts, iterate_labeling, LabelerConfig};
use crate::word2vec::{train_word2vec, W2vConfig, W2vMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusPaths {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
    /// Dataset tag shown in the baseline row.
    #[serde(default = "default_tag")]
    pub tag: String,
}

fn default_tag() -> String {
    "lm-train".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabSettings {
    pub max_size: usize,
    pub min_count: u64,
}

impl Default for VocabSettings {
    fn default() -> Self {
        VocabSettings {
            max_size: 50_000,
            min_count: 1,
        }
    }
}

/// Where a row's pre-trained table comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbeddingSource {
    /// An embedding text file.
    File {
        path: PathBuf,
        #[serde(default)]
        objective: Option<String>,
    },
    Word2vec {
        corpus: PathBuf,
        #[serde(default)]
        config: W2vConfig,
    },
    Bilm {
        corpus: PathBuf,
        #[serde(default)]
        config: BiLmConfig,
        #[serde(default)]
        extract: ExtractOptions,
    },
    /// Trained on a `__label__` file, or on plain paragraphs labeled first
    /// by the iterative LSA labeler when `labeler` is given.
    Domaincls {
        corpus: PathBuf,
        #[serde(default)]
        config: DomainConfig,
        #[serde(default)]
        labeler: Option<LabelerConfig>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub source: EmbeddingSource,
    /// Dataset tag of the pre-training corpus.
    #[serde(default)]
    pub dataset: Option<String>,
    /// Granularity of the pre-training data, e.g. "sentences".
    #[serde(default)]
    pub data_type: Option<String>,
    #[serde(default)]
    pub normalization: Normalization,
    /// Learned compression width; on for domain tables, off otherwise,
    /// unless set here. Zero disables it.
    #[serde(default)]
    pub compression: Option<usize>,
    #[serde(default = "default_true")]
    pub frozen: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub text: String,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub corpus: CorpusPaths,
    #[serde(default)]
    pub vocab: VocabSettings,
    #[serde(default)]
    pub lm: LmConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub embeddings: Vec<EmbeddingSpec>,
    #[serde(default)]
    pub probes: Vec<ProbeSpec>,
}

fn default_seeds() -> Vec<u64> {
    vec![crate::DEFAULT_SEED]
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, e.line(), format!("bad manifest: {e}")))
    }

    /// Resolves relative corpus and embedding paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus.train);
        fix(&mut self.corpus.valid);
        fix(&mut self.corpus.test);
        for e in &mut self.embeddings {
            match &mut e.source {
                EmbeddingSource::File { path, .. } => fix(path),
                EmbeddingSource::Word2vec { corpus, .. }
                | EmbeddingSource::Bilm { corpus, .. }
                | EmbeddingSource::Domaincls { corpus, .. } => fix(corpus),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub valid_ppl: f64,
    pub test_ppl: f64,
    pub best_epoch: usize,
}

/// One line of the report, in the column order of the printed table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// "baseline", "word2vec", "bilm", "domaincls" or "external".
    pub provenance: String,
    pub dataset: String,
    pub data_type: String,
    pub objective: String,
    pub normalization: Normalization,
    pub frozen: bool,
    pub compression: Option<usize>,
    /// Median over seeds.
    pub valid_ppl: Option<f64>,
    pub test_ppl: Option<f64>,
    /// `(baseline − row) / baseline` on the median perplexities.
    pub rel_valid: Option<f64>,
    pub rel_test: Option<f64>,
    pub seeds: Vec<SeedResult>,
    /// Vocabulary words without a pre-trained row.
    pub missing_rows: usize,
    pub probes: Vec<ProbeResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub manifest: Manifest,
    pub vocab_size: usize,
    /// Tokens scored per split (words plus `</s>`).
    pub valid_tokens: usize,
    pub test_tokens: usize,
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let fmt_ppl = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        let fmt_rel = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:+.2}%", 100.0 * x));
        let header = [
            "Provenance", "Dataset", "Type of data", "Training objective", "Norm", "Valid PPL", "Test PPL", "Rel. test",
        ];
        let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            cells.push(vec![
                r.provenance.clone(),
                r.dataset.clone(),
                r.data_type.clone(),
                r.objective.clone(),
                serde_json::to_value(r.normalization)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default(),
                fmt_ppl(r.valid_ppl),
                fmt_ppl(r.test_ppl),
                fmt_rel(r.rel_test),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| cells.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in cells.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (s, w))| if c >= 5 { format!("{s:>w$}") } else { format!("{s:<w$}") })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                out.push('\n');
            }
        }
        for r in self.rows.iter().filter(|r| r.error.is_some()) {
            out.push_str(&format!("error in {} row: {}\n", r.provenance, r.error.as_deref().unwrap_or("")));
        }
        out
    }
}

/// Median; the mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn load_corpus(path: &Path, vocab: &crate::corpus::Vocab) -> Result<Corpus> {
    let text = read_text(path)?;
    let c = encode(&text, vocab);
    if c.num_sentences() == 0 {
        return Err(Error::Data(format!("{}: no sentences", path.display())));
    }
    Ok(c)
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Trains or loads the table of one spec. Returns it with the row's
/// descriptive columns `(provenance, dataset, data type, objective)`.
fn source_table(spec: &EmbeddingSpec, vocab: &VocabSettings) -> Result<(EmbeddingTable, [String; 4])> {
    let (table, dataset, data_type, objective) = match &spec.source {
        EmbeddingSource::File { path, objective } => {
            let t = EmbeddingTable::load(path)?;
            (t, stem(path), "-".to_string(), objective.clone().unwrap_or_else(|| "external".into()))
        }
        EmbeddingSource::Word2vec { corpus, config } => {
            let text = read_text(corpus)?;
            let v = build_vocab_from_text(&text, vocab.max_size, config.min_count.max(vocab.min_count))?;
            let out = train_word2vec(&encode(&text, &v), config)?;
            let obj = match config.mode {
                W2vMode::Cbow => "word2vec CBOW",
                W2vMode::SkipGram => "word2vec skip-gram",
            };
            (out.table, stem(corpus), "sentences".into(), obj.to_string())
        }
        EmbeddingSource::Bilm { corpus, config, extract } => {
            let text = read_text(corpus)?;
            let v = build_vocab_from_text(&text, vocab.max_size, vocab.min_count)?;
            let c = encode(&text, &v);
            let trained = train_bilm(&c, config)?;
            let t = trained.model.embeddings(&c, extract)?;
            (t, stem(corpus), "sentences".into(), "bidirectional LM".into())
        }
        EmbeddingSource::Domaincls { corpus, config, labeler } => {
            let text = read_text(corpus)?;
            let lines = match labeler {
                None => parse_labeled(&text, corpus)?,
                Some(lcfg) => {
                    let paragraphs: Vec<String> = crate::corpus::split_paragraphs(&text);
                    let (v, docs) = docs_from_texts(&paragraphs, 1)?;
                    let labeling = iterate_labeling(&docs, v.len(), lcfg)?;
                    paragraphs
                        .into_iter()
                        .zip(labeling.labels)
                        .map(|(text, label)| crate::corpus::LabeledLine { label, text })
                        .collect()
                }
            };
            let joined: String = lines.iter().map(|l| format!("{}\n\n", l.text)).collect();
            let v = build_vocab_from_text(&joined, vocab.max_size, vocab.min_count)?;
            let c = encode_labeled(&lines, &v);
            let trained = train_domaincls(&c, config)?;
            let t = trained.model.embeddings(&c)?;
            let dt = match config.granularity {
                Granularity::Paragraph => "paragraphs",
                Granularity::Sentence => "sentences",
            };
            (t, stem(corpus), dt.into(), "domain classification".into())
        }
    };
    let provenance = match &spec.source {
        EmbeddingSource::File { .. } => serde_json::to_value(table.provenance)?
            .as_str()
            .unwrap_or("external")
            .to_string(),
        EmbeddingSource::Word2vec { .. } => "word2vec".into(),
        EmbeddingSource::Bilm { .. } => "bilm".into(),
        EmbeddingSource::Domaincls { .. } => "domaincls".into(),
    };
    let table = normalize(&table, spec.normalization)?;
    let dataset = spec.dataset.clone().unwrap_or(dataset);
    let data_type = spec.data_type.clone().unwrap_or(data_type);
    Ok((table, [provenance, dataset, data_type, objective]))
}

/// Compression width for a spec: explicit value, else the LM embedding
/// size for domain tables and none for everything else.
pub fn compression_policy(spec: &EmbeddingSpec, provenance: Provenance, lm: &LmConfig) -> Option<usize> {
    match spec.compression {
        Some(0) => None,
        Some(w) => Some(w),
        None if provenance == Provenance::Domaincls => Some(lm.emb_dim),
        None => None,
    }
}

struct Splits {
    train: Corpus,
    valid: Corpus,
    test: Corpus,
}

fn run_row(
    manifest: &Manifest,
    splits: &Splits,
    input: Option<(&EmbeddingTable, bool, Option<usize>)>,
) -> Result<(Vec<SeedResult>, usize, Vec<ProbeResult>)> {
    let mut results = Vec::new();
    let mut missing = 0;
    let mut first: Option<LmModel> = None;
    for &seed in &manifest.seeds {
        let mut cfg = manifest.lm.clone();
        cfg.train.seed = seed;
        let spec = match input {
            None => InputSpec::Learned,
            Some((table, frozen, compression)) => InputSpec::Pretrained { table, frozen, compression },
        };
        let trained = train_lm(&splits.train, spec, &cfg, Some(&splits.valid))?;
        missing = trained.missing_rows.len();
        results.push(SeedResult {
            seed,
            valid_ppl: perplexity(&trained.model, &splits.valid)?,
            test_ppl: perplexity(&trained.model, &splits.test)?,
            best_epoch: trained.best_epoch,
        });
        first.get_or_insert(trained.model);
    }
    let mut probes = Vec::new();
    if let Some(model) = &first {
        for p in &manifest.probes {
            let toks: Vec<String> = segment(&p.text).into_iter().flatten().flatten().collect();
            let s = Sentence::from_tokens(&toks, &model.vocab);
            probes.push(rank_probe(model, &s, p.position)?);
        }
    }
    Ok((results, missing, probes))
}

/// Runs every row of `manifest`. Paths must already be resolved. A row that
/// fails keeps its error message and the remaining rows still run; missing
/// or unreadable LM corpora fail the whole suite.
pub fn run_experiment_suite(manifest: &Manifest) -> Result<EvalReport> {
    if manifest.seeds.is_empty() {
        return Err(Error::Data("manifest lists no seeds".into()));
    }
    let train_text = read_text(&manifest.corpus.train)?;
    let vocab = build_vocab_from_text(&train_text, manifest.vocab.max_size, manifest.vocab.min_count)?;
    let splits = Splits {
        train: encode(&train_text, &vocab),
        valid: load_corpus(&manifest.corpus.valid, &vocab)?,
        test: load_corpus(&manifest.corpus.test, &vocab)?,
    };
    if splits.train.num_sentences() == 0 {
        return Err(Error::Data(format!("{}: no sentences", manifest.corpus.train.display())));
    }
    let count = |c: &Corpus| c.sentences().map(|s| s.ids.len() - 1).sum::<usize>();

    let mut rows: Vec<ReportRow> = std::iter::once(None)
        .chain(manifest.embeddings.iter().map(Some))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|spec| {
            let mut row = ReportRow {
                provenance: "baseline".into(),
                dataset: manifest.corpus.tag.clone(),
                data_type: "sentences".into(),
                objective: "LM (learned embedding)".into(),
                normalization: Normalization::None,
                frozen: false,
                compression: None,
                valid_ppl: None,
                test_ppl: None,
                rel_valid: None,
                rel_test: None,
                seeds: Vec::new(),
                missing_rows: 0,
                probes: Vec::new(),
                error: None,
            };
            let outcome = match spec {
                None => run_row(manifest, &splits, None),
                Some(spec) => {
                    row.normalization = spec.normalization;
                    row.frozen = spec.frozen;
                    source_table(spec, &manifest.vocab).and_then(|(table, [p, d, t, o])| {
                        row.provenance = p;
                        row.dataset = d;
                        row.data_type = t;
                        row.objective = o;
                        row.compression = compression_policy(spec, table.provenance, &manifest.lm);
                        run_row(manifest, &splits, Some((&table, spec.frozen, row.compression)))
                    })
                }
            };
            match outcome {
                Ok((seeds, missing, probes)) => {
                    row.valid_ppl = median(&seeds.iter().map(|s| s.valid_ppl).collect::<Vec<_>>());
                    row.test_ppl = median(&seeds.iter().map(|s| s.test_ppl).collect::<Vec<_>>());
                    row.seeds = seeds;
                    row.missing_rows = missing;
                    row.probes = probes;
                }
                Err(e) => {
                    log::error!("suite row failed: {e}");
                    row.error = Some(e.to_string());
                }
            }
            row
        })
        .collect();

    let base_valid = rows[0].valid_ppl;
    let base_test = rows[0].test_ppl;
    let rel = |base: Option<f64>, new: Option<f64>| match (base, new) {
        (Some(b), Some(n)) => Some((b - n) / b),
        _ => None,
    };
    for r in &mut rows {
        r.rel_valid = rel(base_valid, r.valid_ppl);
        r.rel_test = rel(base_test, r.test_ppl);
    }
    Ok(EvalReport {
        manifest: manifest.clone(),
        vocab_size: vocab.len(),
        valid_tokens: count(&splits.valid),
        test_tokens: count(&splits.test),
        rows,
    })
}
