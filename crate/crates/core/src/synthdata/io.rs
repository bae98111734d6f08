//! JSON-lines dataset files: a header line `{version, config, digest}`
//! followed by one dialogue object per line. The digest is the SHA-256 of the
//! record lines, each terminated by `\n`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Dataset, Dialogue, GenConfig};
use crate::error::{Error, Result};

pub const DATASET_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u64,
    config: GenConfig,
    digest: String,
}

fn digest(lines: &[&str]) -> String {
    let mut h = Sha256::new();
    for line in lines {
        h.update(line.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Serialized file contents.
pub fn encode_dataset(dataset: &Dataset) -> Result<String> {
    let records: Vec<String> = dataset
        .dialogues
        .iter()
        .map(serde_json::to_string)
        .collect::<std::result::Result<_, _>>()?;
    let refs: Vec<&str> = records.iter().map(String::as_str).collect();
    let header = Header {
        version: DATASET_VERSION,
        config: dataset.config.clone(),
        digest: digest(&refs),
    };
    let mut out = serde_json::to_string(&header)?;
    out.push('\n');
    for r in &records {
        out.push_str(r);
        out.push('\n');
    }
    Ok(out)
}

pub fn decode_dataset(text: &str) -> Result<Dataset> {
    let mut lines = text.lines();
    let head = lines.next().ok_or(Error::MalformedRecord {
        line: 1,
        reason: "missing header".into(),
    })?;
    let raw: serde_json::Value = serde_json::from_str(head).map_err(|e| Error::MalformedRecord {
        line: 1,
        reason: e.to_string(),
    })?;
    let version = raw.get("version").and_then(serde_json::Value::as_u64).ok_or(Error::MalformedRecord {
        line: 1,
        reason: "header lacks a numeric version".into(),
    })?;
    if version != DATASET_VERSION {
        return Err(Error::DatasetVersion {
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let header: Header = serde_json::from_value(raw).map_err(|e| Error::MalformedRecord {
        line: 1,
        reason: e.to_string(),
    })?;
    let records: Vec<&str> = lines.collect();
    let found = digest(&records);
    if found != header.digest {
        return Err(Error::DigestMismatch {
            expected: header.digest,
            found,
        });
    }
    let mut dialogues = Vec::with_capacity(records.len());
    for (i, line) in records.iter().enumerate() {
        let malformed = |reason: String| Error::MalformedRecord { line: i + 2, reason };
        let d: Dialogue = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        d.validate(&header.config).map_err(malformed)?;
        dialogues.push(d);
    }
    Ok(Dataset {
        config: header.config,
        dialogues,
    })
}

pub fn write_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_dataset(dataset)?).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::generate;

    fn sample() -> Dataset {
        generate(&GenConfig {
            n_dialogues: 12,
            max_len: 6,
            n_speakers: 2,
            d_in: [3, 2, 2],
            n_classes: 4,
            noise: 0.37,
            context_copy_prob: 0.3,
            seed: 5,
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let ds = sample();
        let text = encode_dataset(&ds).unwrap();
        assert_eq!(decode_dataset(&text).unwrap(), ds);
        assert_eq!(encode_dataset(&ds).unwrap(), text);
    }

    #[test]
    fn corrupted_payload_is_detected() {
        let text = encode_dataset(&sample()).unwrap();
        let at = text.find('\n').unwrap() + 20;
        let mut bytes = text.into_bytes();
        bytes[at] = if bytes[at] == b'1' { b'2' } else { b'1' };
        let err = decode_dataset(std::str::from_utf8(&bytes).unwrap()).unwrap_err();
        assert!(matches!(err, Error::DigestMismatch { .. }), "{err}");
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let text = encode_dataset(&sample()).unwrap();
        let text = text.replacen("\"version\":1", "\"version\":2", 1);
        let err = decode_dataset(&text).unwrap_err();
        assert!(matches!(err, Error::DatasetVersion { found: 2, expected: 1 }), "{err}");
    }

    #[test]
    fn malformed_record_reports_its_line() {
        let ds = sample();
        let mut lines: Vec<String> = encode_dataset(&ds).unwrap().lines().map(String::from).collect();
        lines[3] = "{\"speakers\": [0]}".into();
        let refs: Vec<&str> = lines[1..].iter().map(String::as_str).collect();
        let mut header: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
        header["digest"] = serde_json::Value::String(digest(&refs));
        lines[0] = header.to_string();
        let err = decode_dataset(&(lines.join("\n") + "\n")).unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { line: 4, .. }), "{err}");
    }
}
