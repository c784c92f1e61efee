//! Regenerates `data/toy/` from the deterministic generator in `cipherlm::toy`.

use std::path::Path;

use cipherlm::{io, toy};

fn main() -> cipherlm::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy");
    std::fs::create_dir_all(&dir).map_err(|e| cipherlm::Error::io(&dir, e))?;
    let vocab = toy::toy_vocab();
    io::save_vocab(&vocab, dir.join("vocab.txt"))?;
    io::save_matrix(
        &toy::toy_embeddings(vocab.len()),
        dir.join("embeddings.clm1"),
    )?;
    let tsv = io::to_tsv(&toy::toy_corpus());
    let path = dir.join("sentiment.tsv");
    std::fs::write(&path, tsv).map_err(|e| cipherlm::Error::io(&path, e))?;
    println!("wrote {}", dir.display());
    Ok(())
}
