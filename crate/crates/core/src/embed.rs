//! Embedding tables: lookup, normalization, occurrence averaging of
//! contextual states, and the word2vec text format.
//!
//! File layout: a header line `V E`, then one line per row,
//! `token v1 … vE`, space separated, `\n` terminated. Values are written with
//! 17 significant digits so a save/load cycle is bit-exact.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{read_text, Vocab};
use crate::error::{contract, Error, Result};
use crate::numcore::Mat;

/// Where a table came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Word2vec,
    Bilm,
    Domaincls,
    External,
}

/// The last normalization applied to a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    #[default]
    None,
    Unit,
    /// Per-dimension centering, divided by the standard deviation.
    Meanvar,
    /// Per-dimension centering, divided by the variance itself.
    MeanvarLiteral,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "unit" => Ok(Normalization::Unit),
            "meanvar" => Ok(Normalization::Meanvar),
            "meanvar-literal" => Ok(Normalization::MeanvarLiteral),
            other => Err(Error::Data(format!("unknown normalization {other:?}"))),
        }
    }
}

/// A `V × E` matrix whose rows are bound to tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Mat,
    pub provenance: Provenance,
    pub normalization: Normalization,
}

impl EmbeddingTable {
    pub fn new(tokens: Vec<String>, matrix: Mat, provenance: Provenance) -> Result<Self> {
        contract!(
            tokens.len() == matrix.rows(),
            "{} tokens for {} rows",
            tokens.len(),
            matrix.rows()
        );
        contract!(matrix.is_finite(), "embedding table holds non-finite values");
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            contract!(
                index.insert(t.clone(), i).is_none(),
                "duplicate token {t:?} in embedding table"
            );
        }
        Ok(EmbeddingTable {
            tokens,
            index,
            matrix,
            provenance,
            normalization: Normalization::None,
        })
    }

    /// Table whose rows follow `vocab`'s ids.
    pub fn for_vocab(vocab: &Vocab, matrix: Mat, provenance: Provenance) -> Result<Self> {
        Self::new(vocab.tokens().to_vec(), matrix, provenance)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn row_of(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&i| self.matrix.row(i))
    }

    /// Row `id`, identical to `Eᵀ · onehot(id)`.
    pub fn lookup(&self, id: usize) -> Result<&[f64]> {
        contract!(
            id < self.len(),
            "id {id} outside table of {} rows",
            self.len()
        );
        Ok(self.matrix.row(id))
    }

    /// Re-indexes rows by `vocab` ids. Tokens the table lacks get zero rows;
    /// their ids are returned.
    pub fn align_to(&self, vocab: &Vocab) -> (Mat, Vec<usize>) {
        let mut m = Mat::zeros(vocab.len(), self.dim());
        let mut missing = Vec::new();
        for (id, tok) in vocab.tokens().iter().enumerate() {
            match self.row_of(tok) {
                Some(row) => m.row_mut(id).copy_from_slice(row),
                None => missing.push(id),
            }
        }
        (m, missing)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.len() * (self.dim() * 24 + 16));
        let _ = writeln!(s, "{} {}", self.len(), self.dim());
        for (i, tok) in self.tokens.iter().enumerate() {
            s.push_str(tok);
            for v in self.matrix.row(i) {
                let _ = write!(s, " {v:.16e}");
            }
            s.push('\n');
        }
        s
    }

    /// Reads a word2vec text file. Provenance is `External` and
    /// normalization `None`; callers that know better overwrite both.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, 1, "empty embedding file"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(origin, 1, format!("bad header {header:?}")))?;
        let [rows, cols] = dims[..] else {
            return Err(Error::parse(origin, 1, "header must be \"V E\""));
        };
        let mut tokens = Vec::with_capacity(rows);
        let mut data = Vec::with_capacity(rows * cols);
        let mut last = 1;
        for (i, line) in lines {
            last = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if tokens.len() == rows {
                return Err(Error::parse(origin, i + 1, format!("more than {rows} rows")));
            }
            let mut fields = line.split_whitespace();
            let tok = fields.next().unwrap();
            let start = data.len();
            for f in fields {
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::parse(origin, i + 1, format!("bad value {f:?}")))?;
                if !v.is_finite() {
                    return Err(Error::parse(origin, i + 1, "non-finite value"));
                }
                data.push(v);
            }
            if data.len() - start != cols {
                return Err(Error::parse(
                    origin,
                    i + 1,
                    format!("{} values, header says {cols}", data.len() - start),
                ));
            }
            tokens.push(tok.to_string());
        }
        if tokens.len() != rows {
            return Err(Error::parse(
                origin,
                last + 1,
                format!("{} rows, header says {rows}", tokens.len()),
            ));
        }
        let matrix = Mat::from_vec(rows, cols, data)?;
        Self::new(tokens, matrix, Provenance::External)
            .map_err(|e| Error::parse(origin, 0, e.to_string()))
    }
}

/// Divides every row by its L2 norm. Zero rows stay zero; their indices are
/// returned and logged.
pub fn unit_normalize(table: &EmbeddingTable) -> (EmbeddingTable, Vec<usize>) {
    let mut out = table.clone();
    let mut zero_rows = Vec::new();
    for i in 0..out.len() {
        let row = out.matrix.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            zero_rows.push(i);
        } else {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    if !zero_rows.is_empty() {
        log::warn!("unit_normalize: {} zero rows left as zero", zero_rows.len());
    }
    out.normalization = Normalization::Unit;
    (out, zero_rows)
}

/// Per-dimension `(x − μ) / s` over all rows, with `s` the population
/// standard deviation or, when `literal_variance` is set, the variance.
/// Dimensions with `s < 1e-12` are only centered.
pub fn mean_variance_normalize(
    table: &EmbeddingTable,
    literal_variance: bool,
) -> Result<EmbeddingTable> {
    let n = table.len();
    contract!(n >= 2, "mean-variance normalization needs at least 2 rows, got {n}");
    let d = table.dim();
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(table.matrix.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for i in 0..n {
        for ((s, v), m) in var.iter_mut().zip(table.matrix.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n as f64);
    let scale: Vec<f64> = var
        .iter()
        .map(|&v| if literal_variance { v } else { v.sqrt() })
        .collect();

    let mut out = table.clone();
    for i in 0..n {
        for ((x, m), s) in out.matrix.row_mut(i).iter_mut().zip(&mean).zip(&scale) {
            *x -= m;
            if *s >= 1e-12 {
                *x /= s;
            }
        }
    }
    out.normalization = if literal_variance {
        Normalization::MeanvarLiteral
    } else {
        Normalization::Meanvar
    };
    Ok(out)
}

/// Applies the normalization named by `mode`.
pub fn normalize(table: &EmbeddingTable, mode: Normalization) -> Result<EmbeddingTable> {
    Ok(match mode {
        Normalization::None => table.clone(),
        Normalization::Unit => unit_normalize(table).0,
        Normalization::Meanvar => mean_variance_normalize(table, false)?,
        Normalization::MeanvarLiteral => mean_variance_normalize(table, true)?,
    })
}

/// Per-occurrence `(token id, state)` pairs in corpus order.
pub type StateStream = Vec<(usize, Vec<f64>)>;

/// Averages every word's states over its occurrences, accumulating in stream
/// order. Words never seen get zero rows; their ids are returned.
pub fn average_states(
    vocab: &Vocab,
    dim: usize,
    stream: &[(usize, Vec<f64>)],
    provenance: Provenance,
) -> Result<(EmbeddingTable, Vec<usize>)> {
    let mut sums = Mat::zeros(vocab.len(), dim);
    let mut counts = vec![0u64; vocab.len()];
    for (id, state) in stream {
        contract!(
            state.len() == dim,
            "state of size {} in a stream of dimension {dim}",
            state.len()
        );
        contract!(*id < vocab.len(), "token id {id} outside vocabulary");
        for (s, v) in sums.row_mut(*id).iter_mut().zip(state) {
            *s += v;
        }
        counts[*id] += 1;
    }
    let mut unseen = Vec::new();
    for (id, &c) in counts.iter().enumerate() {
        if c == 0 {
            unseen.push(id);
        } else {
            sums.row_mut(id).iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    if !unseen.is_empty() {
        log::warn!(
            "average_states: {} of {} words never occur; rows set to zero",
            unseen.len(),
            vocab.len()
        );
    }
    Ok((EmbeddingTable::for_vocab(vocab, sums, provenance)?, unseen))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab;

    fn table(rows: &[Vec<f64>]) -> EmbeddingTable {
        let tokens = (0..rows.len()).map(|i| format!("w{i}")).collect();
        EmbeddingTable::new(tokens, Mat::from_rows(rows).unwrap(), Provenance::External).unwrap()
    }

    #[test]
    fn lookup_is_row_and_onehot_product() {
        let t = EmbeddingTable::new(
            (0..4).map(|i| i.to_string()).collect(),
            Mat::identity(4),
            Provenance::External,
        )
        .unwrap();
        assert_eq!(t.lookup(2).unwrap(), &[0.0, 0.0, 1.0, 0.0]);
        assert!(t.lookup(4).is_err());

        let t = table(&[vec![0.1, -2.5, 3.0], vec![1e-300, 7.0, -0.0], vec![4.0, 5.5, 6.25]]);
        let et = t.matrix().transpose();
        for id in 0..3 {
            let mut onehot = vec![0.0; 3];
            onehot[id] = 1.0;
            let prod = et.matvec(&onehot);
            let row = t.lookup(id).unwrap();
            assert!(row.iter().zip(&prod).all(|(a, b)| a.to_bits() == b.to_bits() || (*a == 0.0 && *b == 0.0)));
        }
    }

    #[test]
    fn unit_normalization() {
        let t = table(&[vec![3.0, 4.0], vec![0.0, 0.0], vec![-1e-3, 2e5]]);
        let (n, zero) = unit_normalize(&t);
        assert_eq!(zero, vec![1]);
        assert!((n.matrix().get(0, 0) - 0.6).abs() < 1e-15);
        assert!((n.matrix().get(0, 1) - 0.8).abs() < 1e-15);
        assert_eq!(n.matrix().row(1), &[0.0, 0.0]);
        assert_eq!(n.normalization, Normalization::Unit);
        let (again, _) = unit_normalize(&n);
        for (a, b) in again.matrix().data().iter().zip(n.matrix().data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_variance_cases() {
        let t = table(&[vec![1.0, 5.0], vec![3.0, 5.0]]);
        let n = mean_variance_normalize(&t, false).unwrap();
        assert_eq!(n.matrix().data(), &[-1.0, 0.0, 1.0, 0.0]);
        let t3 = table(&[vec![5.0], vec![5.0], vec![5.0]]);
        assert_eq!(mean_variance_normalize(&t3, false).unwrap().matrix().data(), &[0.0; 3]);
        assert!(mean_variance_normalize(&table(&[vec![1.0]]), false).is_err());
        // literal variance: values {0, 4} have μ=2, σ²=4
        let lit = mean_variance_normalize(&table(&[vec![0.0], vec![4.0]]), true).unwrap();
        assert_eq!(lit.matrix().data(), &[-0.5, 0.5]);
        assert_eq!(lit.normalization, Normalization::MeanvarLiteral);
    }

    #[test]
    fn averaging() {
        let vocab = build_vocab(["a", "b", "c"], 10, 1).unwrap();
        let a = vocab.id("a").unwrap();
        let b = vocab.id("b").unwrap();
        let s = vec![0.1f64.sqrt(), -1.0 / 3.0];
        let stream = vec![(a, vec![1.0, 0.0]), (b, s.clone()), (a, vec![0.0, 1.0])];
        let (t, unseen) = average_states(&vocab, 2, &stream, Provenance::Bilm).unwrap();
        assert_eq!(t.lookup(a).unwrap(), &[0.5, 0.5]);
        assert_eq!(t.lookup(b).unwrap(), &s[..]);
        assert_eq!(unseen, vec![0, 1, 2, vocab.id("c").unwrap()]);
        assert_eq!(t.lookup(vocab.id("c").unwrap()).unwrap(), &[0.0, 0.0]);
        assert!(average_states(&vocab, 3, &stream, Provenance::Bilm).is_err());
    }

    #[test]
    fn file_errors_name_the_line() {
        let p = Path::new("e.txt");
        let err = EmbeddingTable::parse("2 3\na 1 2 3\nb 1 2 3 4\n", p).unwrap_err();
        assert!(err.to_string().starts_with("e.txt:3:"), "{err}");
        let err = EmbeddingTable::parse("2 3\na 1 2 3\n", p).unwrap_err();
        assert!(err.to_string().starts_with("e.txt:3:"), "{err}");
        let err = EmbeddingTable::parse("two 3\n", p).unwrap_err();
        assert!(err.to_string().starts_with("e.txt:1:"), "{err}");
        let err = EmbeddingTable::parse("1 1\na x\n", p).unwrap_err();
        assert!(err.to_string().starts_with("e.txt:2:"), "{err}");
    }

    #[test]
    fn reads_hand_written_word2vec_text() {
        let text = "3 2\nthe 0.1 -0.2\ncat 1e-3 4\nsat -1.5 0\n";
        let t = EmbeddingTable::parse(text, Path::new("w2v.txt")).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.dim(), 2);
        assert_eq!(t.row_of("cat").unwrap(), &[1e-3, 4.0]);
        assert_eq!(t.provenance, Provenance::External);
    }

    #[test]
    fn align_fills_missing_with_zero() {
        let t = EmbeddingTable::parse("2 1\na 1.5\nzz 2\n", Path::new("x")).unwrap();
        let vocab = build_vocab(["a", "b"], 10, 1).unwrap();
        let (m, missing) = t.align_to(&vocab);
        assert_eq!(m.row(vocab.id("a").unwrap()), &[1.5]);
        assert_eq!(missing, vec![0, 1, 2, vocab.id("b").unwrap()]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
            (2usize..8, 1usize..6).prop_flat_map(|(n, d)| {
                proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, d), n)
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn save_load_is_bitwise(r in rows()) {
                let t = table(&r);
                let back = EmbeddingTable::parse(&t.to_text(), Path::new("x")).unwrap();
                let a: Vec<u64> = back.matrix().data().iter().map(|v| v.to_bits()).collect();
                let b: Vec<u64> = t.matrix().data().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(a, b);
                prop_assert_eq!(back.tokens(), t.tokens());
            }

            #[test]
            fn normalizations_hit_targets(r in rows()) {
                let t = table(&r);
                let (u, zero) = unit_normalize(&t);
                for i in (0..u.len()).filter(|i| !zero.contains(i)) {
                    let n = u.matrix().row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                    prop_assert!((n - 1.0).abs() < 1e-12);
                }
                let m = mean_variance_normalize(&t, false).unwrap();
                let n = m.len() as f64;
                for d in 0..m.dim() {
                    let col: Vec<f64> = (0..m.len()).map(|i| m.matrix().get(i, d)).collect();
                    let mu = col.iter().sum::<f64>() / n;
                    let sd = (col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n).sqrt();
                    prop_assert!(mu.abs() < 1e-12);
                    let raw: Vec<f64> = (0..t.len()).map(|i| t.matrix().get(i, d)).collect();
                    let rmu = raw.iter().sum::<f64>() / n;
                    let rsd = (raw.iter().map(|v| (v - rmu) * (v - rmu)).sum::<f64>() / n).sqrt();
                    if rsd >= 1e-12 {
                        prop_assert!((sd - 1.0).abs() < 1e-9);
                    }
                }
            }

            #[test]
            fn averaging_is_order_insensitive(
                entries in proptest::collection::vec((3usize..7, proptest::collection::vec(-5.0f64..5.0, 3)), 1..40),
                rot in 0usize..40,
            ) {
                let vocab = build_vocab(["a", "b", "c", "d"], 10, 1).unwrap();
                let (t1, _) = average_states(&vocab, 3, &entries, Provenance::Bilm).unwrap();
                let mut shuffled = entries.clone();
                let k = rot % shuffled.len();
                shuffled.rotate_left(k);
                shuffled.reverse();
                let (t2, _) = average_states(&vocab, 3, &shuffled, Provenance::Bilm).unwrap();
                for (a, b) in t1.matrix().data().iter().zip(t2.matrix().data()) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
                let (t3, _) = average_states(&vocab, 3, &entries, Provenance::Bilm).unwrap();
                prop_assert_eq!(t1, t3);
            }
        }
    }
}
