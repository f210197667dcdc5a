//! Domain labels for unlabeled paragraphs: tf-idf LSA, spherical k-means,
//! and an iterative loop that refits the LSA space on confidently labeled
//! documents only.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocab, format_labeled, tokenize, Vocab, NUM_RESERVED};
use crate::error::{contract, Error, Result};
use crate::numcore::{dot, norm2, rng, Mat};

/// A document as term ids.
pub type Doc = Vec<usize>;

const OVERSAMPLE: usize = 8;
const MAX_POWER_ITERS: usize = 300;
const POWER_TOL: f64 = 1e-11;

/// Tokenizes paragraphs and maps them to term ids. Reserved ids never
/// occur in the output.
pub fn docs_from_texts(texts: &[String], min_count: u64) -> Result<(Vocab, Vec<Doc>)> {
    let toks: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t)).collect();
    let vocab = build_vocab(toks.iter().flatten().map(String::as_str), usize::MAX, min_count)?;
    let docs = toks
        .iter()
        .map(|d| {
            d.iter()
                .filter_map(|w| vocab.id(w))
                .filter(|&i| i >= NUM_RESERVED)
                .collect()
        })
        .collect();
    Ok((vocab, docs))
}

/// Sparse tf-idf columns: raw term frequency times `ln(N / df)`.
#[derive(Debug, Clone)]
struct TfIdf {
    idf: Vec<f64>,
    cols: Vec<Vec<(usize, f64)>>,
}

fn term_counts(doc: &[usize]) -> Vec<(usize, f64)> {
    let mut ids = doc.to_vec();
    ids.sort_unstable();
    let mut out: Vec<(usize, f64)> = Vec::new();
    for id in ids {
        match out.last_mut() {
            Some((last, c)) if *last == id => *c += 1.0,
            _ => out.push((id, 1.0)),
        }
    }
    out
}

fn weigh(doc: &[usize], idf: &[f64]) -> Vec<(usize, f64)> {
    term_counts(doc)
        .into_iter()
        .filter(|&(t, _)| t < idf.len())
        .map(|(t, c)| (t, c * idf[t]))
        .filter(|&(_, w)| w != 0.0)
        .collect()
}

fn tfidf(docs: &[Doc], n_terms: usize) -> TfIdf {
    let mut df = vec![0usize; n_terms];
    for d in docs {
        for (t, _) in term_counts(d) {
            df[t] += 1;
        }
    }
    let n = docs.len() as f64;
    let idf: Vec<f64> = df
        .iter()
        .map(|&f| if f == 0 { 0.0 } else { (n / f as f64).ln() })
        .collect();
    let cols = docs.iter().map(|d| weigh(d, &idf)).collect();
    TfIdf { idf, cols }
}

/// `A^T A Q` for the sparse term-document matrix `A`.
fn gram_times(cols: &[Vec<(usize, f64)>], n_terms: usize, q: &DMatrix<f64>) -> DMatrix<f64> {
    let k = q.ncols();
    let mut y = vec![0.0; n_terms * k];
    for (j, col) in cols.iter().enumerate() {
        for &(t, w) in col {
            for c in 0..k {
                y[t * k + c] += w * q[(j, c)];
            }
        }
    }
    let mut z = DMatrix::zeros(cols.len(), k);
    for (j, col) in cols.iter().enumerate() {
        for &(t, w) in col {
            for c in 0..k {
                z[(j, c)] += w * y[t * k + c];
            }
        }
    }
    z
}

/// Flips each column so its largest-magnitude entry (lowest index on ties)
/// is positive.
fn fix_signs(v: &mut DMatrix<f64>) {
    for c in 0..v.ncols() {
        let mut best = 0;
        for r in 0..v.nrows() {
            if v[(r, c)].abs() > v[(best, c)].abs() {
                best = r;
            }
        }
        if v[(best, c)] < 0.0 {
            v.column_mut(c).neg_mut();
        }
    }
}

/// Top eigenpairs of `A^T A` by subspace iteration with a Rayleigh–Ritz
/// step. The start block is `A^T Ω` for a seeded term-side `Ω`, so it moves
/// with the documents when they are reordered.
fn top_right_singular(
    cols: &[Vec<(usize, f64)>],
    n_terms: usize,
    d: usize,
    seed: u64,
) -> (Vec<f64>, DMatrix<f64>) {
    let n = cols.len();
    let k = (d + OVERSAMPLE).min(n);
    let mut r = rng(seed);
    let omega: Vec<f64> = (0..n_terms * k).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mut q = DMatrix::zeros(n, k);
    for (j, col) in cols.iter().enumerate() {
        for &(t, w) in col {
            for c in 0..k {
                q[(j, c)] += w * omega[t * k + c];
            }
        }
    }
    q = q.qr().q();
    let mut prev: Option<DMatrix<f64>> = None;
    let mut vals = Vec::new();
    let mut vecs = DMatrix::zeros(n, d);
    for iter in 0..MAX_POWER_ITERS {
        let z = gram_times(cols, n_terms, &q);
        let t = q.transpose() * &z;
        let t = (&t + t.transpose()) * 0.5;
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let w = DMatrix::from_fn(k, d, |i, c| eig.eigenvectors[(i, order[c])]);
        vecs = &q * w;
        fix_signs(&mut vecs);
        vals = order[..d].iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let converged = prev
            .as_ref()
            .is_some_and(|p| (p - &vecs).amax() < POWER_TOL);
        if converged {
            log::debug!("subspace iteration converged after {} steps", iter + 1);
            break;
        }
        prev = Some(vecs.clone());
        q = z.qr().q();
    }
    (vals, vecs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsaSpace {
    pub d: usize,
    /// Per-term inverse document frequency, indexed by term id.
    pub idf: Vec<f64>,
    /// Term-side singular vectors, `n_terms × d`.
    pub u: Mat,
    /// Singular values, non-increasing.
    pub sigma: Vec<f64>,
    /// Unit-normalized `V_d Σ_d` rows of the fitted documents.
    pub doc_vectors: Mat,
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm2(&v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Fits a rank-`d` LSA space. `d` is lowered to the numerical rank of the
/// tf-idf matrix with a warning when it exceeds it.
pub fn build_lsa(docs: &[Doc], n_terms: usize, d: usize, seed: u64) -> Result<LsaSpace> {
    contract!(docs.len() >= 2, "LSA needs at least 2 documents, got {}", docs.len());
    contract!(d >= 1, "LSA dimension must be >= 1");
    if let Some(bad) = docs.iter().flatten().find(|&&t| t >= n_terms) {
        contract!(false, "term id {bad} outside {n_terms} terms");
    }
    let tf = tfidf(docs, n_terms);
    let used_terms = tf.idf.iter().filter(|&&x| x > 0.0).count();
    let cap = d.min(used_terms).min(docs.len());
    if cap == 0 {
        return Err(Error::Data("tf-idf matrix is zero: every term occurs in every document".into()));
    }
    let (vals, vecs) = top_right_singular(&tf.cols, n_terms, cap, seed);
    let top = vals[0].sqrt();
    let rank = vals.iter().take_while(|&&l| l.sqrt() > 1e-10 * top).count().max(1);
    if rank < d {
        log::warn!("LSA dimension {d} exceeds the matrix rank {rank}; using {rank}");
    }
    let sigma: Vec<f64> = vals[..rank].iter().map(|l| l.sqrt()).collect();
    let mut u = Mat::zeros(n_terms, rank);
    for (j, col) in tf.cols.iter().enumerate() {
        for &(t, w) in col {
            for c in 0..rank {
                let cur = u.get(t, c);
                u.set(t, c, cur + w * vecs[(j, c)] / sigma[c]);
            }
        }
    }
    let mut space = LsaSpace {
        d: rank,
        idf: tf.idf,
        u,
        sigma,
        doc_vectors: Mat::zeros(0, rank),
    };
    // U_d^T a_j equals the row of V_d Σ_d, and identical documents stay
    // bitwise identical
    space.doc_vectors = space.project_all(docs);
    Ok(space)
}

impl LsaSpace {
    /// Folds a document into the space: `U_d^T a`, unit-normalized. Terms
    /// unseen at fit time carry no weight.
    pub fn project(&self, doc: &[usize]) -> Vec<f64> {
        let mut v = vec![0.0; self.d];
        for (t, w) in weigh(doc, &self.idf) {
            if t < self.u.rows() {
                for (c, x) in v.iter_mut().enumerate() {
                    *x += w * self.u.get(t, c);
                }
            }
        }
        unit(v)
    }

    pub fn project_all(&self, docs: &[Doc]) -> Mat {
        let mut m = Mat::zeros(docs.len(), self.d);
        for (j, d) in docs.iter().enumerate() {
            m.row_mut(j).copy_from_slice(&self.project(d));
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    /// Unit-norm centroids, one per row.
    pub centroids: Mat,
    pub assignment: Vec<usize>,
    /// Best minus second-best cosine, capped to `[-1, 1]`.
    pub confidence: Vec<f64>,
    pub iterations: usize,
    /// `Σ cos(x, assigned centroid)` after every assignment step.
    pub objective: Vec<f64>,
}

/// Assigns every row of `x` to its most similar centroid (lowest index on
/// ties) and returns the margins.
pub fn classify(x: &Mat, centroids: &Mat) -> (Vec<usize>, Vec<f64>, f64) {
    let mut assign = Vec::with_capacity(x.rows());
    let mut conf = Vec::with_capacity(x.rows());
    let mut objective = 0.0;
    for i in 0..x.rows() {
        let sims: Vec<f64> = (0..centroids.rows())
            .map(|c| dot(x.row(i), centroids.row(c)))
            .collect();
        let mut best = 0;
        for (c, s) in sims.iter().enumerate() {
            if *s > sims[best] {
                best = c;
            }
        }
        let second = sims
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != best)
            .map(|(_, s)| *s)
            .fold(f64::NEG_INFINITY, f64::max);
        let margin = if second.is_finite() { sims[best] - second } else { 1.0 };
        assign.push(best);
        conf.push(margin.clamp(-1.0, 1.0));
        objective += sims[best];
    }
    (assign, conf, objective)
}

fn kmeanspp<R: Rng>(x: &Mat, k: usize, r: &mut R) -> Vec<usize> {
    let n = x.rows();
    let mut chosen = vec![r.gen_range(0..n)];
    let mut dist: Vec<f64> = (0..n).map(|i| 1.0 - dot(x.row(i), x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let w: Vec<f64> = dist.iter().map(|d| d.max(0.0)).collect();
        let total: f64 = w.iter().sum();
        let next = if total > 0.0 {
            let mut u = r.gen_range(0.0..total);
            let mut pick = n - 1;
            for (i, wi) in w.iter().enumerate() {
                if u < *wi {
                    pick = i;
                    break;
                }
                u -= wi;
            }
            pick
        } else {
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(1.0 - dot(x.row(i), x.row(next)));
        }
    }
    chosen
}

fn mean_centroids(x: &Mat, assign: &[usize], old: &Mat) -> (Mat, Vec<usize>) {
    let mut c = Mat::zeros(old.rows(), old.cols());
    let mut counts = vec![0usize; old.rows()];
    for (i, &a) in assign.iter().enumerate() {
        counts[a] += 1;
        crate::numcore::axpy(1.0, x.row(i), c.row_mut(a));
    }
    for k in 0..c.rows() {
        let n = norm2(c.row(k));
        if n > 0.0 {
            c.row_mut(k).iter_mut().for_each(|v| *v /= n);
        } else {
            c.row_mut(k).copy_from_slice(old.row(k));
        }
    }
    (c, counts)
}

/// Spherical k-means on unit rows, seeded k-means++ initialisation. Runs
/// until assignments stop changing or 100 iterations.
pub fn kmeans(x: &Mat, k: usize, seed: u64) -> Result<ClusterState> {
    contract!(k >= 1 && k <= x.rows(), "k = {k} for {} vectors", x.rows());
    let mut r = rng(seed);
    let init = kmeanspp(x, k, &mut r);
    let mut centroids = Mat::zeros(k, x.cols());
    for (c, &i) in init.iter().enumerate() {
        centroids.row_mut(c).copy_from_slice(x.row(i));
    }
    let (mut assign, mut conf, obj) = classify(x, &centroids);
    let mut objective = vec![obj];
    let mut iterations = 0;
    while iterations < 100 {
        iterations += 1;
        let (mut next, counts) = mean_centroids(x, &assign, &centroids);
        // empty clusters take the points worst served by their centroid
        let mut taken = Vec::new();
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..x.rows())
                    .filter(|i| !taken.contains(i))
                    .min_by(|&a, &b| {
                        let sa = dot(x.row(a), next.row(assign[a]));
                        let sb = dot(x.row(b), next.row(assign[b]));
                        sa.total_cmp(&sb).then(a.cmp(&b))
                    });
                if let Some(i) = far {
                    taken.push(i);
                    next.row_mut(c).copy_from_slice(x.row(i));
                }
            }
        }
        centroids = next;
        let (a, cf, obj) = classify(x, &centroids);
        objective.push(obj);
        conf = cf;
        let stable = a == assign;
        assign = a;
        if stable {
            break;
        }
    }
    Ok(ClusterState {
        centroids,
        assignment: assign,
        confidence: conf,
        iterations,
        objective,
    })
}

/// Greedy farthest-point selection of `k` rows under cosine similarity,
/// starting from the least similar pair. Ties go to lower indices.
pub fn select_dissimilar(centroids: &Mat, k: usize) -> Vec<usize> {
    let n = centroids.rows();
    let k = k.min(n);
    if k == 0 {
        return Vec::new();
    }
    if k == 1 || n == 1 {
        return vec![0];
    }
    let sim = |a: usize, b: usize| dot(centroids.row(a), centroids.row(b));
    let mut pair = (0, 1);
    for i in 0..n {
        for j in i + 1..n {
            if sim(i, j) < sim(pair.0, pair.1) {
                pair = (i, j);
            }
        }
    }
    let mut chosen = vec![pair.0, pair.1];
    while chosen.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|i| !chosen.contains(i)) {
            let closest = chosen.iter().map(|&c| sim(i, c)).fold(f64::NEG_INFINITY, f64::max);
            if best.is_none_or(|(_, b)| closest < b) {
                best = Some((i, closest));
            }
        }
        chosen.push(best.map_or(0, |b| b.0));
    }
    chosen
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelerConfig {
    pub k: usize,
    pub d: usize,
    /// Minimum margin for a document to shape the next round.
    pub tau: f64,
    pub rounds: usize,
    /// Size of the exploratory clustering; `2k` when absent.
    pub initial_k: Option<usize>,
    pub seed: u64,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        LabelerConfig {
            k: 8,
            d: 64,
            tau: 0.1,
            rounds: 4,
            initial_k: None,
            seed: crate::DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub retained: usize,
    /// Mean margin of the retained documents.
    pub retained_confidence: f64,
    /// Fraction of documents whose label changed in this round.
    pub changed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labeling {
    pub labels: Vec<usize>,
    pub confidence: Vec<f64>,
    /// Objective trace of the exploratory k-means.
    pub initial_objective: Vec<f64>,
    /// Centroids picked from the exploratory clustering.
    pub selected: Vec<usize>,
    pub rounds: Vec<RoundStats>,
    pub config: LabelerConfig,
}

/// Clusters into `2k`, keeps the `k` most dissimilar centroids and then
/// repeatedly refits LSA on documents whose margin reaches `tau`, moving
/// each centroid to the mean of its retained members and relabeling every
/// document. Stops after `rounds` rounds or once fewer than 0.1% of labels
/// change.
pub fn iterate_labeling(docs: &[Doc], n_terms: usize, cfg: &LabelerConfig) -> Result<Labeling> {
    contract!(cfg.rounds >= 1, "at least one labeling round is required");
    contract!(cfg.k >= 1, "k must be >= 1");
    if docs.len() < cfg.k.max(2) {
        return Err(Error::Data(format!("{} documents for k = {}", docs.len(), cfg.k)));
    }
    let space = build_lsa(docs, n_terms, cfg.d, cfg.seed)?;
    let k0 = cfg.initial_k.unwrap_or(2 * cfg.k).clamp(cfg.k, docs.len());
    let explore = kmeans(&space.doc_vectors, k0, cfg.seed)?;
    let selected = select_dissimilar(&explore.centroids, cfg.k);
    let mut centroids = Mat::zeros(cfg.k, space.d);
    for (c, &i) in selected.iter().enumerate() {
        centroids.row_mut(c).copy_from_slice(explore.centroids.row(i));
    }
    let (mut labels, mut conf, _) = classify(&space.doc_vectors, &centroids);
    let mut rounds = Vec::new();
    for round in 0..cfg.rounds {
        let keep: Vec<usize> = (0..docs.len()).filter(|&i| conf[i] >= cfg.tau).collect();
        let mut per = vec![0usize; cfg.k];
        for &i in &keep {
            per[labels[i]] += 1;
        }
        if let Some(empty) = per.iter().position(|&n| n == 0) {
            return Err(Error::Data(format!(
                "round {}: cluster {empty} retains no document at confidence {}",
                round + 1,
                cfg.tau
            )));
        }
        let kept_docs: Vec<Doc> = keep.iter().map(|&i| docs[i].clone()).collect();
        let kept_conf = keep.iter().map(|&i| conf[i]).sum::<f64>() / keep.len() as f64;
        let sub = if kept_docs.len() >= 2 {
            build_lsa(&kept_docs, n_terms, cfg.d, cfg.seed)?
        } else {
            space.clone()
        };
        let x = sub.project_all(docs);
        let mut c = Mat::zeros(cfg.k, sub.d);
        for &i in &keep {
            crate::numcore::axpy(1.0, x.row(i), c.row_mut(labels[i]));
        }
        for r in 0..cfg.k {
            let v = unit(c.row(r).to_vec());
            c.row_mut(r).copy_from_slice(&v);
        }
        let (next, cf, _) = classify(&x, &c);
        let changed = next.iter().zip(&labels).filter(|(a, b)| a != b).count() as f64 / docs.len() as f64;
        log::info!(
            "labeling round {}: kept {} docs (mean margin {kept_conf:.4}), {:.2}% relabeled",
            round + 1,
            keep.len(),
            100.0 * changed
        );
        rounds.push(RoundStats {
            retained: keep.len(),
            retained_confidence: kept_conf,
            changed,
        });
        labels = next;
        conf = cf;
        if changed < 0.001 {
            break;
        }
    }
    Ok(Labeling {
        labels,
        confidence: conf,
        initial_objective: explore.objective,
        selected,
        rounds,
        config: cfg.clone(),
    })
}

/// `__label__<id>\t<paragraph>` lines for every paragraph.
pub fn format_labels(texts: &[String], labels: &[usize]) -> String {
    texts
        .iter()
        .zip(labels)
        .map(|(t, &l)| format_labeled(l, t) + "\n")
        .collect()
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |m: u64| (m * m.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&m| c2(m)).sum();
    let rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(n as u64);
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
