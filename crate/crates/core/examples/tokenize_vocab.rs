//! Tokenize raw text, build a vocabulary, and encode sentences with
//! `<s>`/`</s>` framing and `<unk>` for unseen words.

use revlm::corpus::{build_vocab_from_text, encode, segment, tokenize};

fn main() -> revlm::Result<()> {
    let text = "The cat sat on the mat. The dog sat too!\n\nA new paragraph, with a comma.";
    println!("tokens: {:?}", tokenize(text));

    for (p, paragraph) in segment(text).iter().enumerate() {
        for sentence in paragraph {
            println!("paragraph {p}: {sentence:?}");
        }
    }

    // Words seen once are dropped at min_count 2.
    let vocab = build_vocab_from_text(text, 100, 2)?;
    for id in 0..vocab.len() {
        println!("{id:>3}  {}", vocab.token(id).unwrap_or("?"));
    }

    let corpus = encode("the cat ate the fish.", &vocab);
    let s = corpus.sentences().next().expect("one sentence");
    let shown: Vec<&str> = s.ids.iter().map(|&i| vocab.token(i).unwrap_or("?")).collect();
    println!("encoded: {:?} -> {shown:?}", s.ids);
    Ok(())
}
