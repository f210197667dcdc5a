//! Acceptance checks. Runs without the libtest harness and prints one
//! `PASS`/`FAIL` line per criterion; exits non-zero if any fails.
//!
//! ```text
//! cargo test --release --test acceptance
//! ```

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use revlm::bilm::{BiLmConfig, BiLmModel, ExtractOptions};
use revlm::corpus::{build_vocab_from_text, encode, encode_labeled, parse_labeled, Corpus};
use revlm::domaincls::{train_domaincls, DomainConfig, DomainModel, DomainParams, Granularity};
use revlm::embed::{normalize, EmbeddingTable, Normalization, Provenance};
use revlm::labeler::{adjusted_rand_index, docs_from_texts, iterate_labeling, LabelerConfig};
use revlm::lm::{perplexity, rank_probe, train_lm, EvalReport, InputSpec, LmConfig, LmModel};
use revlm::numcore::{grad_check, rng, AdamConfig, Checkpoint, Mat, Params};
use revlm::synth::{cyclic_corpus, labeled_text, plain_text, topic_paragraphs, topics, TopicSpec};
use revlm::train::TrainConfig;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn revlm(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_revlm"))
        .args(args)
        .env_remove("RTL_SEED")
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Result<String, String> {
    let out = revlm(args);
    ensure(
        out.status.code() == Some(0),
        format!("revlm {} exited {:?}: {}", args.join(" "), out.status.code(), String::from_utf8_lossy(&out.stderr)),
    )?;
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn f64_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn corpus_of(text: &str) -> Corpus {
    encode(text, &build_vocab_from_text(text, 10_000, 1).expect("vocab"))
}

fn c1_gradients() -> Outcome {
    let start = Instant::now();
    // "a b c d ." framed: V = 8 (3 reserved ids), T = 6 targets.
    let c = corpus_of("a b c d.");
    let s = c.sentences().next().expect("sentence");
    ensure(c.vocab.len() == 8 && s.ids.len() == 7, "instance shape")?;
    let mut worst: Vec<String> = Vec::new();

    let lm_cfg = LmConfig { emb_dim: 5, hidden: 4, ..LmConfig::default() };
    let table = EmbeddingTable::for_vocab(&c.vocab, Mat::uniform(8, 5, 1.0, &mut rng(3)), Provenance::Word2vec)
        .map_err(|e| e.to_string())?;
    let mut stages = vec![("learned", LmModel::init_learned(&c.vocab, &lm_cfg))];
    for (name, frozen, comp) in [("frozen", true, None), ("compressed", true, Some(3)), ("tuned", false, None)] {
        let (m, _) = ok(LmModel::init_pretrained(&c.vocab, &table, frozen, comp, &lm_cfg))?;
        stages.push((name, m));
    }
    for (name, m) in stages {
        let (_, g) = ok(m.params.sentence_loss_and_grads(s, None))?;
        let r = grad_check(
            |x| {
                let mut q = m.params.clone();
                q.set_flat(x).expect("length");
                q.sentence_loss_and_grads(s, None).expect("loss").0
            },
            &m.params.flatten(),
            &g.flatten(),
            1e-5,
            1e-4,
        );
        ensure(r.passed, format!("LM ({name}) max rel error {:.3e}", r.max_rel_error))?;
        worst.push(format!("lm/{name} {:.1e}", r.max_rel_error));
    }

    let bcfg = BiLmConfig { emb_dim: 5, hidden: 4, ..BiLmConfig::default() };
    let mut b = BiLmModel::init(&c.vocab, &bcfg);
    b.params.fill_uniform(1.0, &mut rng(1));
    let (_, g) = ok(b.sentence_loss_and_grads(s))?;
    let r = grad_check(
        |x| {
            let mut q = b.clone();
            q.params.set_flat(x).expect("length");
            q.sentence_loss(s).expect("loss")
        },
        &b.params.flatten(),
        &g.flatten(),
        1e-5,
        1e-4,
    );
    ensure(r.passed, format!("bi-LM max rel error {:.3e}", r.max_rel_error))?;
    worst.push(format!("bilm {:.1e}", r.max_rel_error));

    let dcfg = DomainConfig { emb_dim: 5, hidden: 4, ..DomainConfig::default() };
    let mut d = DomainParams::init(8, 2, &dcfg);
    d.fill_uniform(1.0, &mut rng(2));
    let ids = [3, 7, 4, 3, 5, 6];
    let (_, g) = ok(d.loss_and_grads(&ids, 1, None))?;
    let r = grad_check(
        |x| {
            let mut q = d.clone();
            q.set_flat(x).expect("length");
            q.loss_and_grads(&ids, 1, None).expect("loss").0
        },
        &d.flatten(),
        &g.flatten(),
        1e-5,
        1e-4,
    );
    ensure(r.passed, format!("domain classifier max rel error {:.3e}", r.max_rel_error))?;
    worst.push(format!("domaincls {:.1e}", r.max_rel_error));
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(120), format!("took {elapsed:.1?}"))?;
    Ok(worst.join(", "))
}

fn c2_uniform() -> Outcome {
    let texts = [
        cyclic_corpus(20),
        plain_text(&topic_paragraphs(&TopicSpec::default(), 40)),
        "one. two words. three words here!\n".to_string(),
    ];
    let cfg = LmConfig { emb_dim: 6, hidden: 5, ..LmConfig::default() };
    let mut worst = 0f64;
    for text in &texts {
        let c = corpus_of(text);
        let v = c.vocab.len() as f64;
        let mut learned = LmModel::init_learned(&c.vocab, &cfg);
        learned.zero_output();
        let table = EmbeddingTable::for_vocab(&c.vocab, Mat::uniform(c.vocab.len(), 4, 2.0, &mut rng(9)), Provenance::Bilm)
            .map_err(|e| e.to_string())?;
        let (mut pre, _) = ok(LmModel::init_pretrained(&c.vocab, &table, true, Some(3), &cfg))?;
        pre.zero_output();
        for m in [&learned, &pre] {
            let ppl = ok(perplexity(m, &c))?;
            let rel = (ppl - v).abs() / v;
            worst = worst.max(rel);
            ensure(rel <= 1e-9, format!("PPL {ppl} vs V = {v}"))?;
        }
    }
    Ok(format!("max relative deviation from V {worst:.1e}"))
}

fn c3_overfit() -> Outcome {
    let start = Instant::now();
    let c = corpus_of(&cyclic_corpus(50));
    ensure(c.num_sentences() == 50, "50 sentences")?;
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
    let t = ok(train_lm(&c, InputSpec::Learned, &cfg, None))?;
    let ppl = ok(perplexity(&t.model, &c))?;
    let elapsed = start.elapsed();
    ensure(ppl < 1.3, format!("training PPL {ppl:.4}"))?;
    ensure(elapsed < Duration::from_secs(300), format!("took {elapsed:.1?}"))?;
    Ok(format!("training PPL {ppl:.4}"))
}

fn c4_freeze(dir: &Path) -> Outcome {
    let sample = |seed, n| plain_text(&topic_paragraphs(&TopicSpec { seed, ..TopicSpec::default() }, n));
    let train = dir.join("train.txt");
    let valid = dir.join("valid.txt");
    std::fs::write(&train, sample(1, 30)).map_err(|e| e.to_string())?;
    std::fs::write(&valid, sample(2, 10)).map_err(|e| e.to_string())?;
    let w2v = dir.join("w2v");
    run_ok(&["w2v", "--corpus", p(&train), "--out", p(&w2v), "--dim", "8", "--epochs", "2"])?;
    let emb_path = w2v.join("embeddings.txt");
    let before = sha256(&std::fs::read(&emb_path).map_err(|e| e.to_string())?);

    let mut checked = 0;
    for (tag, extra) in [
        ("plain", vec![]),
        ("compressed", vec!["--compression", "4"]),
        ("unit", vec!["--normalize", "unit"]),
        ("meanvar", vec!["--normalize", "meanvar", "--compression", "5"]),
    ] {
        let out = dir.join(format!("lm-{tag}"));
        let mut args = vec![
            "lm-train", "--train-corpus", p(&train), "--valid", p(&valid), "--out", p(&out),
            "--embeddings", p(&emb_path), "--hidden", "8", "--epochs", "3",
        ];
        args.extend(extra);
        run_ok(&args)?;
        let ck = ok(Checkpoint::load(&out.join("model.ckpt")))?;
        let model = ok(LmModel::from_checkpoint(&ck))?;
        let table = ok(EmbeddingTable::load(&emb_path))?;
        let mode = match tag {
            "unit" => Normalization::Unit,
            "meanvar" => Normalization::Meanvar,
            _ => Normalization::None,
        };
        let (expected, _) = ok(normalize(&table, mode))?.align_to(&model.vocab);
        let stored = ck.get("embedding").ok_or("no embedding tensor")?;
        ensure(
            sha256(&f64_bytes(&stored.data)) == sha256(&f64_bytes(expected.data())),
            format!("{tag}: frozen table changed during training"),
        )?;
        checked += 1;
    }
    let after = sha256(&std::fs::read(&emb_path).map_err(|e| e.to_string())?);
    ensure(before == after, "input embedding file changed")?;
    Ok(format!("{checked} lm-train runs, table hashes equal"))
}

/// Two passes: count occurrences, then add `state / count` per occurrence.
fn two_pass_average(stream: &[(usize, Vec<f64>)], v: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut counts = vec![0usize; v];
    for (id, _) in stream {
        counts[*id] += 1;
    }
    let mut avg = vec![vec![0.0; dim]; v];
    for (id, s) in stream {
        for (a, x) in avg[*id].iter_mut().zip(s) {
            *a += x / counts[*id] as f64;
        }
    }
    (avg, counts)
}

fn compare_average(table: &EmbeddingTable, stream: &[(usize, Vec<f64>)], model_vocab: &revlm::corpus::Vocab) -> Result<(f64, usize), String> {
    let (avg, counts) = two_pass_average(stream, model_vocab.len(), table.dim());
    let mut max_err = 0f64;
    let mut singles = 0;
    for id in 0..model_vocab.len() {
        let tok = model_vocab.token(id).ok_or("id without token")?;
        let row = table.row_of(tok).ok_or(format!("no row for {tok}"))?;
        for (a, b) in row.iter().zip(&avg[id]) {
            max_err = max_err.max((a - b).abs());
        }
        if counts[id] == 1 {
            singles += 1;
            let only = &stream.iter().find(|(i, _)| *i == id).ok_or("missing occurrence")?.1;
            ensure(row == only.as_slice(), format!("single-occurrence word {tok} differs"))?;
        }
    }
    ensure(max_err <= 1e-12, format!("max component error {max_err:.3e}"))?;
    Ok((max_err, singles))
}

fn c5_averaging(dir: &Path) -> Outcome {
    let paragraphs = topic_paragraphs(&TopicSpec { topics: 2, words_per_topic: 60, ..TopicSpec::default() }, 30);
    let plain = dir.join("avg.txt");
    let labeled = dir.join("avg.labeled.txt");
    std::fs::write(&plain, plain_text(&paragraphs)).map_err(|e| e.to_string())?;
    std::fs::write(&labeled, labeled_text(&paragraphs)).map_err(|e| e.to_string())?;

    let bilm = dir.join("bilm");
    run_ok(&["bilm", "--corpus", p(&plain), "--out", p(&bilm), "--emb-dim", "6", "--hidden", "5", "--epochs", "1"])?;
    let dom = dir.join("dom");
    run_ok(&["domaincls", "--corpus", p(&labeled), "--out", p(&dom), "--emb-dim", "6", "--hidden", "5", "--epochs", "1"])?;

    let mut notes = Vec::new();
    let b_avg = dir.join("bilm-avg");
    run_ok(&["embed-avg", "--model", p(&bilm.join("model.ckpt")), "--corpus", p(&plain), "--out", p(&b_avg)])?;
    let model = ok(BiLmModel::from_checkpoint(&ok(Checkpoint::load(&bilm.join("model.ckpt")))?))?;
    let corpus = encode(&std::fs::read_to_string(&plain).map_err(|e| e.to_string())?, &model.vocab);
    let stream = ok(model.extract_states(&corpus, &ExtractOptions::default()))?;
    let (err, singles) = compare_average(&ok(EmbeddingTable::load(&b_avg.join("embeddings.txt")))?, &stream, &model.vocab)?;
    notes.push(format!("bilm err {err:.1e}, {singles} singletons exact"));

    let d_avg = dir.join("dom-avg");
    run_ok(&["embed-avg", "--model", p(&dom.join("model.ckpt")), "--corpus", p(&labeled), "--out", p(&d_avg)])?;
    let model = ok(DomainModel::from_checkpoint(&ok(Checkpoint::load(&dom.join("model.ckpt")))?))?;
    let lines = ok(parse_labeled(&std::fs::read_to_string(&labeled).map_err(|e| e.to_string())?, &labeled))?;
    let corpus = encode_labeled(&lines, &model.vocab);
    let stream = ok(model.extract_states(&corpus, Granularity::Paragraph, model.config.state, model.config.clip))?;
    let (err, singles) = compare_average(&ok(EmbeddingTable::load(&d_avg.join("embeddings.txt")))?, &stream, &model.vocab)?;
    notes.push(format!("domaincls err {err:.1e}, {singles} singletons exact"));
    Ok(notes.join("; "))
}

fn c6_normalization() -> Outcome {
    let mut r = rng(6);
    let mut worst = (0f64, 0f64, 0f64);
    for (n, d, scale) in [(50, 8, 1.0), (500, 32, 1e3), (7, 3, 1e-3)] {
        let mut m = Mat::uniform(n, d, scale, &mut r);
        // Shift each column away from zero.
        for i in 0..n {
            for (j, v) in m.row_mut(i).iter_mut().enumerate() {
                *v += scale * j as f64;
            }
        }
        let tokens = (0..n).map(|i| format!("w{i}")).collect();
        let t = ok(EmbeddingTable::new(tokens, m, Provenance::External))?;
        let u = ok(normalize(&t, Normalization::Unit))?;
        for i in 0..n {
            let norm = u.matrix().row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            worst.0 = worst.0.max((norm - 1.0).abs());
        }
        let mv = ok(normalize(&t, Normalization::Meanvar))?;
        for j in 0..d {
            let col: Vec<f64> = (0..n).map(|i| mv.matrix().get(i, j)).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            worst.1 = worst.1.max(mean.abs());
            worst.2 = worst.2.max((std - 1.0).abs());
        }
    }
    ensure(worst.0 <= 1e-12, format!("unit norm off by {:.3e}", worst.0))?;
    ensure(worst.1 <= 1e-12, format!("mean {:.3e}", worst.1))?;
    ensure(worst.2 <= 1e-9, format!("std off by {:.3e}", worst.2))?;
    Ok(format!("|norm-1| {:.1e}, |mean| {:.1e}, |std-1| {:.1e}", worst.0, worst.1, worst.2))
}

fn c7_domain() -> Outcome {
    let start = Instant::now();
    let paragraphs = topic_paragraphs(&TopicSpec { topics: 2, ..TopicSpec::default() }, 2000);
    let lines = ok(parse_labeled(&labeled_text(&paragraphs), Path::new("synthetic")))?;
    let vocab = ok(build_vocab_from_text(&plain_text(&paragraphs), 10_000, 1))?;
    let corpus = encode_labeled(&lines, &vocab);
    let cfg = DomainConfig {
        emb_dim: 16,
        hidden: 16,
        train: TrainConfig { epochs: 2, ..TrainConfig::default() },
        ..DomainConfig::default()
    };
    let t = ok(train_domaincls(&corpus, &cfg))?;
    let acc = ok(t.model.accuracy(&corpus, Granularity::Paragraph))?;
    let elapsed = start.elapsed();
    ensure(acc >= 0.95, format!("accuracy {acc:.4}"))?;
    ensure(elapsed < Duration::from_secs(600), format!("took {elapsed:.1?}"))?;
    Ok(format!("majority-vote accuracy {acc:.4} on 2000 paragraphs"))
}

fn c8_labeler() -> Outcome {
    let start = Instant::now();
    let paragraphs = topic_paragraphs(&TopicSpec::default(), 3000);
    let texts: Vec<String> = paragraphs.iter().map(|p| p.text.clone()).collect();
    let (vocab, docs) = ok(docs_from_texts(&texts, 1))?;
    let cfg = LabelerConfig { k: 3, ..LabelerConfig::default() };
    let l = ok(iterate_labeling(&docs, vocab.len(), &cfg))?;
    let ari = adjusted_rand_index(&l.labels, &topics(&paragraphs));
    let elapsed = start.elapsed();
    let trace = &l.initial_objective;
    ensure(trace.windows(2).all(|w| w[1] >= w[0]), format!("objective decreased: {trace:?}"))?;
    ensure(ari >= 0.8, format!("ARI {ari:.4}"))?;
    ensure(elapsed < Duration::from_secs(600), format!("took {elapsed:.1?}"))?;
    Ok(format!("ARI {ari:.4}, objective non-decreasing over {} iterations", trace.len()))
}

fn c9_directional(dir: &Path) -> Result<(String, EvalReport), String> {
    let sample = |seed, n| plain_text(&topic_paragraphs(&TopicSpec { seed, ..TopicSpec::default() }, n));
    for (name, seed, n) in [("train", 1, 60), ("valid", 2, 60), ("test", 3, 60), ("large", 4, 3000)] {
        std::fs::write(dir.join(format!("{name}.txt")), sample(seed, n)).map_err(|e| e.to_string())?;
    }
    let manifest = r#"{
        "corpus": { "train": "train.txt", "valid": "valid.txt", "test": "test.txt", "tag": "topics-60" },
        "lm": { "emb_dim": 16, "hidden": 32, "patience": 3,
                "train": { "epochs": 40, "batch_size": 8, "adam": { "lr": 0.005 } } },
        "seeds": [42, 43, 44],
        "embeddings": [
            { "source": { "kind": "word2vec", "corpus": "large.txt",
                          "config": { "dim": 16, "window": 3, "epochs": 5 } },
              "dataset": "topics-3000", "data_type": "sentences" }
        ],
        "probes": [ { "text": "the t0w0 of t0w1 and t0w2.", "position": 2 } ]
    }"#;
    let m = dir.join("manifest.json");
    std::fs::write(&m, manifest).map_err(|e| e.to_string())?;
    let out = dir.join("report");
    let table = run_ok(&["suite", "--manifest", p(&m), "--out", p(&out)])?;
    let json = std::fs::read_to_string(out.join("report.json")).map_err(|e| e.to_string())?;
    let report = ok(EvalReport::from_json(&json))?;
    ensure(std::fs::read_to_string(out.join("report.txt")).map_err(|e| e.to_string())? == table, "printed table differs from report.txt")?;
    for col in ["Provenance", "Dataset", "Type of data", "Training objective", "Test PPL"] {
        ensure(table.contains(col), format!("table lacks column {col}"))?;
    }
    ensure(report.rows.len() == 2 && report.rows[0].provenance == "baseline", "rows: baseline then word2vec")?;
    let base = &report.rows[0];
    let w2v = &report.rows[1];
    ensure(w2v.error.is_none(), format!("word2vec row failed: {:?}", w2v.error))?;
    ensure(base.seeds.len() == 3 && w2v.seeds.len() == 3, "three seeds per row")?;
    let (b, w) = (base.test_ppl.ok_or("no baseline PPL")?, w2v.test_ppl.ok_or("no word2vec PPL")?);
    ensure(w <= 1.02 * b, format!("word2vec test PPL {w:.3} vs baseline {b:.3}"))?;
    Ok((
        format!(
            "median test PPL word2vec {w:.3} vs baseline {b:.3} (ratio {:.3}, rel {:+.1}%)",
            w / b,
            100.0 * w2v.rel_test.unwrap_or(f64::NAN)
        ),
        report,
    ))
}

fn c10_probe(dir: &Path) -> Outcome {
    let text = cyclic_corpus(50) + "blue green red.\n";
    let c = corpus_of(&text);
    let cfg = LmConfig {
        emb_dim: 8,
        hidden: 16,
        train: TrainConfig {
            epochs: 20,
            batch_size: 5,
            adam: AdamConfig { lr: 1e-2, ..AdamConfig::default() },
            ..TrainConfig::default()
        },
        ..LmConfig::default()
    };
    let model = ok(train_lm(&c, InputSpec::Learned, &cfg, None))?.model;
    let v = model.vocab.len();
    let mut contexts = 0;
    for s in c.sentences().take(10) {
        for pos in 1..=s.words().len() {
            let probs = ok(model.next_word_distribution(&s.ids[..pos]))?;
            let argmax = (0..v).max_by(|&a, &b| probs[a].total_cmp(&probs[b]).then(b.cmp(&a))).ok_or("empty")?;
            ensure(revlm::lm::rank_of(&probs, argmax) == 1, "argmax not ranked 1")?;
            let mut ranks: Vec<usize> = (0..v).map(|t| revlm::lm::rank_of(&probs, t)).collect();
            ranks.sort_unstable();
            ensure(ranks == (1..=v).collect::<Vec<_>>(), "ranks are not a permutation of 1..=V")?;
            let r = ok(rank_probe(&model, s, pos))?;
            ensure((1..=v).contains(&r.rank), "rank outside [1, V]")?;
            contexts += 1;
        }
    }
    let ck = dir.join("probe-lm.ckpt");
    ok(model.to_checkpoint().save(&ck))?;
    let printed = run_ok(&["probe", "--model", p(&ck), "--text", "red green red black", "--position", "3"])?;
    let first = printed.lines().next().unwrap_or("");
    let expect = format!("out of a vocabulary of {v} (p = ");
    ensure(
        first.starts_with("\"red\" at word 3: position ") && first.contains(&expect),
        format!("unexpected report line {first:?}"),
    )?;
    ensure(printed.lines().count() == 1 + v.min(10), "top-10 list missing")?;
    let big = revlm::lm::ProbeResult {
        position: 17,
        target: "x".into(),
        target_prob: 1e-6,
        rank: 1234,
        vocab_size: 28_553,
        top: Vec::new(),
    };
    ensure(big.report().contains("position 1,234 out of a vocabulary of 28,553"), "thousands separators")?;
    Ok(format!("{contexts} contexts; {first}"))
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).expect("readable dir").flatten() {
            let path = e.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != "meta.json") {
                out.insert(path.clone(), std::fs::read(&path).expect("readable file"));
            }
        }
    }
    out
}

fn c11_determinism(dir: &Path) -> Outcome {
    let ps = topic_paragraphs(&TopicSpec { topics: 2, ..TopicSpec::default() }, 40);
    let plain = dir.join("c.txt");
    let labeled = dir.join("c.labeled.txt");
    std::fs::write(&plain, plain_text(&ps)).map_err(|e| e.to_string())?;
    std::fs::write(&labeled, labeled_text(&ps)).map_err(|e| e.to_string())?;
    std::fs::write(
        dir.join("m.json"),
        r#"{ "corpus": { "train": "c.txt", "valid": "c.txt", "test": "c.txt" },
             "lm": { "emb_dim": 6, "hidden": 6, "train": { "epochs": 2 } },
             "seeds": [1, 2],
             "embeddings": [ { "source": { "kind": "word2vec", "corpus": "c.txt", "config": { "dim": 6, "epochs": 1 } } } ],
             "probes": [ { "text": "the of and", "position": 2 } ] }"#,
    )
    .map_err(|e| e.to_string())?;
    let out = dir.join("runs");
    let o = |name: &str| out.join(name);
    let (pl, lb) = (p(&plain), p(&labeled));
    let runs: Vec<Vec<String>> = vec![
        vec!["vocab", "--corpus", pl, "--out", p(&o("vocab"))],
        vec!["w2v", "--corpus", pl, "--out", p(&o("w2v")), "--dim", "6", "--epochs", "2", "--mode", "skip-gram"],
        vec!["bilm", "--corpus", pl, "--out", p(&o("bilm")), "--emb-dim", "5", "--hidden", "4", "--epochs", "1"],
        vec!["label", "--corpus", pl, "--out", p(&o("label")), "--k", "2", "--d", "8"],
        vec!["domaincls", "--corpus", lb, "--out", p(&o("dom")), "--emb-dim", "5", "--hidden", "4", "--epochs", "1"],
        vec!["embed-avg", "--model", p(&o("bilm").join("model.ckpt")), "--corpus", pl, "--out", p(&o("avg"))],
        vec!["lm-train", "--train-corpus", pl, "--valid", pl, "--out", p(&o("lm")), "--embeddings", p(&o("w2v").join("embeddings.txt")), "--hidden", "5", "--epochs", "2"],
        vec!["eval", "--model", p(&o("lm").join("model.ckpt")), "--corpus", pl, "--out", p(&o("eval"))],
        vec!["suite", "--manifest", p(&dir.join("m.json")), "--out", p(&o("suite"))],
        vec!["probe", "--model", p(&o("lm").join("model.ckpt")), "--text", "the of and", "--position", "2", "--out", p(&o("probe"))],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    let mut stdout = Vec::new();
    for args in &runs {
        let a: Vec<&str> = args.iter().map(String::as_str).collect();
        stdout.push(run_ok(&a)?);
    }
    let first = snapshot(&out);
    for (args, printed) in runs.iter().zip(&stdout) {
        let a: Vec<&str> = args.iter().map(String::as_str).collect();
        ensure(&run_ok(&a)? == printed, format!("{} printed different output", args[0]))?;
    }
    let second = snapshot(&out);
    ensure(first.keys().eq(second.keys()), "different file sets")?;
    for (path, bytes) in &first {
        ensure(&second[path] == bytes, format!("{} differs between runs", path.display()))?;
    }
    for sub in ["vocab", "w2v", "bilm", "label", "dom", "avg", "lm", "eval", "suite", "probe"] {
        ensure(o(sub).join("config.json").exists(), format!("{sub} lacks config.json"))?;
    }
    Ok(format!("{} subcommands rerun, {} artifact files byte-identical", runs.len(), first.len()))
}

fn c12_round_trips(dir: &Path, report: Option<&EvalReport>) -> Outcome {
    let mut r = rng(12);
    let mut m = Mat::uniform(20, 7, 1.0, &mut r);
    let specials = [0.1, 1.0 / 3.0, -0.0, 5e-324, 2.2250738585072014e-308, 1.7976931348623157e308, -1e-300, 123456789.12345679];
    for (i, s) in specials.iter().enumerate() {
        m.row_mut(i)[i % 7] = *s;
    }
    for i in 8..20 {
        for v in m.row_mut(i) {
            *v *= 10f64.powi(i as i32 - 14);
        }
    }
    let t = ok(EmbeddingTable::new((0..20).map(|i| format!("w{i}")).collect(), m, Provenance::External))?;
    let path = dir.join("rt.txt");
    ok(t.save(&path))?;
    let back = ok(EmbeddingTable::load(&path))?;
    ensure(
        f64_bytes(back.matrix().data()) == f64_bytes(t.matrix().data()),
        "embedding values changed bits",
    )?;
    ensure(back.tokens() == t.tokens(), "tokens changed")?;

    let report = report.ok_or("no suite report available to round-trip")?;
    let parsed = ok(EvalReport::from_json(&ok(report.to_json())?))?;
    ensure(&parsed == report, "report changed on parse")?;
    let bits = |r: &EvalReport| -> Vec<u8> {
        let mut v = Vec::new();
        for row in &r.rows {
            for s in &row.seeds {
                v.extend(f64_bytes(&[s.valid_ppl, s.test_ppl]));
            }
            v.extend(f64_bytes(&[row.valid_ppl.unwrap_or(0.0), row.test_ppl.unwrap_or(0.0), row.rel_test.unwrap_or(0.0)]));
        }
        v
    };
    ensure(bits(&parsed) == bits(report), "report floats changed bits")?;
    Ok("embedding text and report JSON round-trip bitwise".into())
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let sub = |name: &str| {
        let d = tmp.path().join(name);
        std::fs::create_dir_all(&d).expect("mkdir");
        d
    };
    std::panic::set_hook(Box::new(|info| eprintln!("  panic: {info}")));

    let mut report: Option<EvalReport> = None;
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut run = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let line = match &out {
            Ok(d) => format!("criterion {n:>2} PASS  {name}: {d}"),
            Err(d) => format!("criterion {n:>2} FAIL  {name}: {d}"),
        };
        println!("{line}  [{:.1?}]", start.elapsed());
        results.push((n, name, out));
    };

    run(1, "gradient fidelity", &mut c1_gradients);
    run(2, "uniform-model perplexity", &mut c2_uniform);
    run(3, "overfit oracle", &mut c3_overfit);
    let d = sub("c4");
    run(4, "freeze contract", &mut || c4_freeze(&d));
    let d = sub("c5");
    run(5, "averaging oracle", &mut || c5_averaging(&d));
    run(6, "normalization", &mut c6_normalization);
    run(7, "domain classifier accuracy", &mut c7_domain);
    run(8, "labeler recovery", &mut c8_labeler);
    let d = sub("c9");
    run(9, "directional suite experiment", &mut || {
        let (line, r) = c9_directional(&d)?;
        report = Some(r);
        Ok(line)
    });
    let d = sub("c10");
    run(10, "rank probe", &mut || c10_probe(&d));
    let d = sub("c11");
    run(11, "determinism", &mut || c11_determinism(&d));
    let d = sub("c12");
    let rep = report.clone();
    run(12, "round trips", &mut || c12_round_trips(&d, rep.as_ref()));

    let failed: Vec<usize> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria pass{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!("; failing {failed:?}") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
