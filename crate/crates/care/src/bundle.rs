//! Model bundle directory.
//!
//! ```text
//! manifest.json        {version, backend, vocab_size, strategies[], ...}
//! vocab.tsv            term \t index
//! weights/<s>.f32      little-endian f32, vocab_size + 1 values (bias last)
//! index.jsonl          retrieval entries, one per line
//! idf.tsv              term \t idf
//! safety/*.txt         lexicon lists
//! ```

use std::fs;
use std::path::Path;

use care_core::classify::{LogisticScorer, StrategyPredictor, Vocabulary};
use care_core::generate::{GeneratorIndex, IndexEntry};
use care_core::safety::Lexicon;
use care_core::training::{TrainOptions, TrainedModels, BACKEND};
use care_core::Strategy;
use serde::{Deserialize, Serialize};

use crate::error::{CareError, Result};
use crate::lexicon::{load_lexicon, write_lexicon};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub backend: String,
    pub vocab_size: usize,
    pub strategies: Vec<Strategy>,
    pub context_len: usize,
    pub index_entries: usize,
    pub train: TrainOptions,
}

#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub manifest: Manifest,
    pub predictor: StrategyPredictor,
    pub index: GeneratorIndex,
    pub lexicon: Lexicon,
}

impl ModelBundle {
    pub fn new(models: TrainedModels, lexicon: Lexicon, opts: &TrainOptions) -> Self {
        let manifest = Manifest {
            version: models.predictor.version().to_string(),
            backend: BACKEND.to_string(),
            vocab_size: models.predictor.vocabulary().len(),
            strategies: Strategy::ALL.to_vec(),
            context_len: opts.context_len,
            index_entries: models.index.entries().len(),
            train: *opts,
        };
        ModelBundle {
            manifest,
            predictor: models.predictor,
            index: models.index,
            lexicon,
        }
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CareError::io(path, e))
}

fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CareError::io(path, e))
}

fn weights_file(dir: &Path, s: Strategy) -> std::path::PathBuf {
    dir.join("weights").join(format!("{}.f32", s.as_str()))
}

/// Writes every file of the bundle. Output is a pure function of the bundle.
pub fn save_bundle(dir: impl AsRef<Path>, bundle: &ModelBundle) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("weights")).map_err(|e| CareError::io(dir, e))?;

    let manifest = serde_json::to_string_pretty(&bundle.manifest).expect("manifest serializes");
    write(&dir.join("manifest.json"), manifest + "\n")?;

    let mut vocab = String::new();
    for (i, term) in bundle.predictor.vocabulary().terms().iter().enumerate() {
        vocab.push_str(&format!("{term}\t{i}\n"));
    }
    write(&dir.join("vocab.tsv"), vocab)?;

    for s in Strategy::ALL {
        let scorer = bundle
            .predictor
            .scorer(s)
            .ok_or_else(|| CareError::bundle(dir, "predictor is not trained"))?;
        let bytes: Vec<u8> = scorer.weights().iter().flat_map(|w| w.to_le_bytes()).collect();
        write(&weights_file(dir, s), bytes)?;
    }

    let mut index = String::new();
    for e in bundle.index.entries() {
        index.push_str(&serde_json::to_string(e).expect("entries serialize"));
        index.push('\n');
    }
    write(&dir.join("index.jsonl"), index)?;

    let mut idf = String::new();
    for (term, w) in bundle.index.terms() {
        idf.push_str(&format!("{term}\t{w}\n"));
    }
    write(&dir.join("idf.tsv"), idf)?;

    write_lexicon(dir.join("safety"), &bundle.lexicon)
}

/// Splits `a\tb` lines, reporting 1-based line numbers.
fn tsv_pairs<'a>(path: &'a Path, text: &'a str) -> impl Iterator<Item = Result<(usize, &'a str, &'a str)>> + 'a {
    text.lines().enumerate().map(move |(n, line)| {
        line.split_once('\t')
            .map(|(a, b)| (n + 1, a, b))
            .ok_or_else(|| CareError::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: "expected two tab-separated fields".into(),
            })
    })
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<ModelBundle> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let manifest: Manifest = serde_json::from_str(&read_string(&manifest_path)?).map_err(|e| CareError::Parse {
        path: manifest_path.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if manifest.backend != BACKEND {
        return Err(CareError::bundle(dir, format!("unsupported backend `{}`", manifest.backend)));
    }
    if manifest.strategies != Strategy::ALL {
        return Err(CareError::bundle(dir, "strategies must list all eight in canonical order"));
    }

    let vocab_path = dir.join("vocab.tsv");
    let vocab_text = read_string(&vocab_path)?;
    let mut terms = Vec::new();
    for row in tsv_pairs(&vocab_path, &vocab_text) {
        let (line, term, index) = row?;
        if index.parse::<usize>().ok() != Some(terms.len()) {
            return Err(CareError::Parse {
                path: vocab_path.clone(),
                line,
                message: format!("expected index {}", terms.len()),
            });
        }
        terms.push(term.to_string());
    }
    if terms.len() != manifest.vocab_size {
        return Err(CareError::bundle(
            dir,
            format!("vocab.tsv has {} terms, manifest says {}", terms.len(), manifest.vocab_size),
        ));
    }
    let vocab = Vocabulary::from_terms(terms)?;

    let mut scorers = Vec::with_capacity(Strategy::COUNT);
    for s in Strategy::ALL {
        let path = weights_file(dir, s);
        let bytes = fs::read(&path).map_err(|e| CareError::io(&path, e))?;
        if bytes.len() != 4 * (manifest.vocab_size + 1) {
            return Err(CareError::bundle(
                dir,
                format!("{} has {} bytes, expected {}", path.display(), bytes.len(), 4 * (manifest.vocab_size + 1)),
            ));
        }
        let weights = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        scorers.push(LogisticScorer::from_weights(weights));
    }
    let predictor = StrategyPredictor::from_parts(vocab, scorers, manifest.version.clone())?;

    let index_path = dir.join("index.jsonl");
    let mut entries = Vec::new();
    for (n, line) in read_string(&index_path)?.lines().enumerate() {
        let entry: IndexEntry = serde_json::from_str(line).map_err(|e| CareError::Parse {
            path: index_path.clone(),
            line: n + 1,
            message: e.to_string(),
        })?;
        entries.push(entry);
    }
    let idf_path = dir.join("idf.tsv");
    let idf_text = read_string(&idf_path)?;
    let mut idf = Vec::new();
    for row in tsv_pairs(&idf_path, &idf_text) {
        let (line, term, w) = row?;
        let w: f64 = w.parse().map_err(|_| CareError::Parse {
            path: idf_path.clone(),
            line,
            message: format!("invalid idf `{w}`"),
        })?;
        idf.push((term.to_string(), w));
    }
    let index = GeneratorIndex::from_parts(idf, entries, manifest.version.clone())?;
    let lexicon = load_lexicon(dir.join("safety"))?;
    Ok(ModelBundle {
        manifest,
        predictor,
        index,
        lexicon,
    })
}
