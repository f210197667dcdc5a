//! Central finite differences against the analytic BPTT gradients of the
//! LSTM LM, then a few Adam steps on the same loss.

use revlm::corpus::{build_vocab_from_text, encode};
use revlm::lm::{LmConfig, LmModel};
use revlm::numcore::{adam_update, grad_check, rng, AdamConfig, AdamState, Params};

fn main() -> revlm::Result<()> {
    let text = "a b c d a c.";
    let vocab = build_vocab_from_text(text, 100, 1)?;
    let corpus = encode(text, &vocab);
    let s = corpus.sentences().next().expect("one sentence");

    let cfg = LmConfig { emb_dim: 5, hidden: 4, ..LmConfig::default() };
    let mut model = LmModel::init_learned(&vocab, &cfg);
    model.params.fill_uniform(0.5, &mut rng(7));

    let (loss, grads) = model.params.sentence_loss_and_grads(s, None)?;
    let report = grad_check(
        |x| {
            let mut p = model.params.clone();
            p.set_flat(x).expect("same length");
            p.sentence_loss_and_grads(s, None).expect("valid sentence").0
        },
        &model.params.flatten(),
        &grads.flatten(),
        1e-5,
        1e-4,
    );
    println!("V = {}, loss {loss:.6}", vocab.len());
    println!(
        "{} coordinates, max relative error {:.3e} (analytic {:.6e} vs numeric {:.6e}), passed: {}",
        report.checked, report.max_rel_error, report.worst_analytic, report.worst_numeric, report.passed
    );

    let mut adam = AdamState::new(AdamConfig { lr: 0.05, ..AdamConfig::default() });
    for step in 1..=50 {
        let (loss, g) = model.params.sentence_loss_and_grads(s, None)?;
        if step % 10 == 1 {
            println!("step {step:>2}  loss {loss:.5}");
        }
        adam_update(&mut model.params, &g, &mut adam)?;
    }
    Ok(())
}
