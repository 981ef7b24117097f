//! JSON Lines helpers: one UTF-8 JSON record per line, `\n` terminated.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::CorpusError;

pub fn read_file(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses JSONL text, skipping blank lines. Errors carry the 1-based line number.
pub fn parse_str<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, CorpusError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line)
            .map_err(|e| CorpusError::malformed("jsonl", format!("line {}: {e}", n + 1)))?;
        out.push(item);
    }
    Ok(out)
}

pub fn read<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            CorpusError::malformed("jsonl", format!("{}:{}: {e}", path.display(), n + 1))
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write<T: Serialize, W: Write>(
    mut writer: W,
    items: impl IntoIterator<Item = T>,
) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut writer, &item)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn to_string<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    let mut buf = Vec::new();
    write(&mut buf, items).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}
