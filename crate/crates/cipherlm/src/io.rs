//! On-disk formats.
//!
//! A bundle directory holds three files:
//!
//! * `vocab.txt`: UTF-8, one token per line, line number = token id;
//! * `embeddings.clm1`: the CLM1 matrix (see [`cipherlm_core::matrix`]);
//! * `manifest.json`: [`BundleManifest`] as pretty-printed JSON, LF line endings.
//!
//! Every writer is byte-deterministic for equal inputs.

use std::fs;
use std::path::{Path, PathBuf};

use cipherlm_core::adapt::BundleManifest;
use cipherlm_core::trainer::{ClassifierHead, LabeledExample};
use cipherlm_core::{AdaptedBundle, EmbeddingMatrix, Vocabulary};
use serde::Serialize;

use crate::error::{Error, Result};

pub const VOCAB_FILE: &str = "vocab.txt";
pub const MATRIX_FILE: &str = "embeddings.clm1";
pub const MANIFEST_FILE: &str = "manifest.json";

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn in_file<T>(path: &Path, r: cipherlm_core::Result<T>) -> Result<T> {
    r.map_err(|e| Error::Data {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_vocab(path: impl AsRef<Path>, specials: &[&str]) -> Result<Vocabulary> {
    let path = path.as_ref();
    let text = read_text(path)?;
    in_file(path, Vocabulary::parse(&text, specials))
}

pub fn save_vocab(vocab: &Vocabulary, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), vocab.to_text().as_bytes())
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    in_file(path, EmbeddingMatrix::from_clm1_bytes(&bytes))
}

pub fn save_matrix(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &m.to_clm1_bytes()?)
}

/// Pretty JSON with a trailing LF.
pub fn to_json_text<T: Serialize>(value: &T, context: &str) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::json(context, e))?;
    s.push('\n');
    Ok(s)
}

pub fn save_bundle(
    vocab: &Vocabulary,
    emb: &EmbeddingMatrix,
    manifest: &BundleManifest,
    dir: impl AsRef<Path>,
) -> Result<()> {
    manifest.validate(vocab, emb)?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_vocab(vocab, dir.join(VOCAB_FILE))?;
    save_matrix(emb, dir.join(MATRIX_FILE))?;
    write(
        &dir.join(MANIFEST_FILE),
        to_json_text(manifest, "manifest")?.as_bytes(),
    )
}

pub fn write_bundle(bundle: &AdaptedBundle, dir: impl AsRef<Path>) -> Result<()> {
    save_bundle(bundle.vocab(), bundle.emb(), bundle.manifest(), dir)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<BundleManifest> {
    let path = path.as_ref();
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<AdaptedBundle> {
    let dir = dir.as_ref();
    let manifest = load_manifest(dir.join(MANIFEST_FILE))?;
    let vocab = load_vocab(dir.join(VOCAB_FILE), &[])?;
    let emb = load_matrix(dir.join(MATRIX_FILE))?;
    in_file(dir, AdaptedBundle::new(vocab, emb, manifest))
}

pub fn bundle_paths(dir: impl AsRef<Path>) -> [PathBuf; 3] {
    let dir = dir.as_ref();
    [
        dir.join(VOCAB_FILE),
        dir.join(MATRIX_FILE),
        dir.join(MANIFEST_FILE),
    ]
}

pub fn save_head(head: &ClassifierHead, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), to_json_text(head, "head")?.as_bytes())
}

pub fn load_head(path: impl AsRef<Path>) -> Result<ClassifierHead> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let head: ClassifierHead =
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
    in_file(path, head.validate())?;
    Ok(head)
}

/// `text<TAB>label` per line. Blank lines are skipped.
pub fn parse_tsv(text: &str) -> std::result::Result<Vec<LabeledExample>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let (t, label) = line
                .rsplit_once('\t')
                .ok_or_else(|| format!("line {}: expected text<TAB>label", i + 1))?;
            let label = label
                .trim()
                .parse()
                .map_err(|_| format!("line {}: label is not a class index", i + 1))?;
            Ok(LabeledExample {
                text: t.to_string(),
                label,
            })
        })
        .collect()
}

pub fn load_tsv(path: impl AsRef<Path>) -> Result<Vec<LabeledExample>> {
    let path = path.as_ref();
    parse_tsv(&read_text(path)?).map_err(|message| Error::Data {
        path: path.to_path_buf(),
        message,
    })
}

pub fn to_tsv(data: &[LabeledExample]) -> String {
    data.iter()
        .map(|ex| format!("{}\t{}\n", ex.text, ex.label))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use cipherlm_core::vocab::DEFAULT_SPECIALS;

    #[test]
    fn tsv_parses_and_rejects() {
        let d = parse_tsv("a good film\t1\n\nbad one\t0\n").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[1].label, 0);
        assert!(parse_tsv("no label here").is_err());
        assert!(parse_tsv("x\tpositive").is_err());
        assert_eq!(parse_tsv(&to_tsv(&d)).unwrap(), d);
    }

    #[test]
    fn vocab_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.txt");
        fs::write(&p, "[PAD]\n[UNK]\nthe\ncat").unwrap();
        let v = load_vocab(&p, &DEFAULT_SPECIALS).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.special_ids().len(), 2);
        let q = dir.path().join("w.txt");
        save_vocab(&v, &q).unwrap();
        assert_eq!(load_vocab(&q, &DEFAULT_SPECIALS).unwrap(), v);
    }

    #[test]
    fn missing_file_is_an_io_error() {
        assert!(matches!(
            load_matrix("/nonexistent/m.clm1"),
            Err(Error::Io { .. })
        ));
    }
}
