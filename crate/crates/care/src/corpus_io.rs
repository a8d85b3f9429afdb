//! JSON Lines corpus files: one conversation object per line.

use std::fs;
use std::io::Write;
use std::path::Path;

use care_core::corpus::{Split, SplitManifest};
use care_core::Conversation;

use crate::error::{CareError, Result};

/// Parses and validates every non-blank line. Errors carry 1-based line
/// numbers.
pub fn parse_corpus(text: &str, path: &Path) -> Result<Vec<Conversation>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| CareError::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let conv: Conversation = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        conv.validate().map_err(|e| parse_err(e.to_string()))?;
        out.push(conv);
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Conversation>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CareError::io(path, e))?;
    parse_corpus(&text, path)
}

pub fn corpus_to_string(convs: &[Conversation]) -> String {
    let mut out = String::new();
    for c in convs {
        out.push_str(&serde_json::to_string(c).expect("conversations serialize"));
        out.push('\n');
    }
    out
}

pub fn write_corpus(path: impl AsRef<Path>, convs: &[Conversation]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CareError::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| CareError::io(path, e))?;
    f.write_all(corpus_to_string(convs).as_bytes())
        .map_err(|e| CareError::io(path, e))
}

/// Writes `train.jsonl`, `dev.jsonl`, `test.jsonl` and `split.json`.
pub fn write_split(dir: impl AsRef<Path>, split: &Split, manifest: &SplitManifest) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| CareError::io(dir, e))?;
    write_corpus(dir.join("train.jsonl"), &split.train)?;
    write_corpus(dir.join("dev.jsonl"), &split.dev)?;
    write_corpus(dir.join("test.jsonl"), &split.test)?;
    let manifest_path = dir.join("split.json");
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&manifest_path, json + "\n").map_err(|e| CareError::io(&manifest_path, e))
}
