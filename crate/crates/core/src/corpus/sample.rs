//! The dataset record type and its file formats: JSONL for samples, a small
//! binary format for externally stored feature matrices.

use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::syntree::{parse_bracketed, ParseTree};

/// One sentence the decoder may be asked to imitate.
#[derive(Debug, Clone, PartialEq)]
pub struct Exemplar {
    pub words: Vec<String>,
    pub parse: ParseTree,
    pub pos: Vec<String>,
}

/// Where a sample's features came from, preserved across round trips.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSource {
    Inline,
    /// Path relative to the JSONL file.
    File(String),
}

/// One training/eval record: a feature sequence standing in for a video,
/// its caption with parse and POS tags, and a set of exemplar sentences.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    /// M x D feature rows, possibly zero-padded beyond `valid_frames`.
    pub features: Vec<Vec<f64>>,
    pub feature_source: FeatureSource,
    pub valid_frames: usize,
    pub caption: Vec<String>,
    pub caption_parse: ParseTree,
    pub caption_pos: Vec<String>,
    pub exemplars: Vec<Exemplar>,
    /// Unknown JSON fields, preserved verbatim.
    pub extra: serde_json::Map<String, serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct ExemplarRecord {
    words: Vec<String>,
    parse: String,
    pos: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FeaturesField {
    Inline(Vec<Vec<f64>>),
    File(String),
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    id: String,
    features: FeaturesField,
    caption: Vec<String>,
    parse: String,
    pos: Vec<String>,
    exemplars: Vec<ExemplarRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    valid_frames: Option<usize>,
    #[serde(flatten)]
    extra: serde_json::Map<String, serde_json::Value>,
}

impl Sample {
    fn from_record(rec: SampleRecord, base_dir: &Path, line: usize) -> Result<Self> {
        let err = |msg: String| CoreError::data(format!("line {line}: {msg}"));

        let (features, feature_source) = match rec.features {
            FeaturesField::Inline(rows) => (rows, FeatureSource::Inline),
            FeaturesField::File(rel) => {
                let rows = read_features(&base_dir.join(&rel))
                    .map_err(|e| err(format!("feature file {rel}: {e}")))?;
                (rows, FeatureSource::File(rel))
            }
        };
        if features.is_empty() {
            return Err(err("sample has no feature rows".into()));
        }
        let d = features[0].len();
        if features.iter().any(|r| r.len() != d) {
            return Err(err("ragged feature rows".into()));
        }

        let caption_parse = parse_bracketed(&rec.parse).map_err(|e| err(format!("{e}")))?;
        if rec.pos.len() != rec.caption.len() {
            return Err(err(format!(
                "{} POS tags for {} caption words",
                rec.pos.len(),
                rec.caption.len()
            )));
        }
        if caption_parse.leaf_count() != rec.caption.len() {
            return Err(err(format!(
                "parse has {} leaves for {} caption words",
                caption_parse.leaf_count(),
                rec.caption.len()
            )));
        }

        let mut exemplars = Vec::with_capacity(rec.exemplars.len());
        for (k, e) in rec.exemplars.into_iter().enumerate() {
            let parse =
                parse_bracketed(&e.parse).map_err(|er| err(format!("exemplar {k}: {er}")))?;
            if e.pos.len() != e.words.len() || parse.leaf_count() != e.words.len() {
                return Err(err(format!("exemplar {k}: words/pos/parse lengths disagree")));
            }
            exemplars.push(Exemplar {
                words: e.words,
                parse,
                pos: e.pos,
            });
        }

        let valid = rec.valid_frames.unwrap_or(features.len());
        if valid == 0 || valid > features.len() {
            return Err(err(format!(
                "valid_frames {valid} out of range for {} rows",
                features.len()
            )));
        }

        Ok(Sample {
            id: rec.id,
            features,
            feature_source,
            valid_frames: valid,
            caption: rec.caption,
            caption_parse,
            caption_pos: rec.pos,
            exemplars,
            extra: rec.extra,
        })
    }

    fn to_record(&self) -> SampleRecord {
        SampleRecord {
            id: self.id.clone(),
            features: match &self.feature_source {
                FeatureSource::Inline => FeaturesField::Inline(self.features.clone()),
                FeatureSource::File(p) => FeaturesField::File(p.clone()),
            },
            caption: self.caption.clone(),
            parse: self.caption_parse.serialize(),
            pos: self.caption_pos.clone(),
            exemplars: self
                .exemplars
                .iter()
                .map(|e| ExemplarRecord {
                    words: e.words.clone(),
                    parse: e.parse.serialize(),
                    pos: e.pos.clone(),
                })
                .collect(),
            valid_frames: if self.valid_frames == self.features.len() {
                None
            } else {
                Some(self.valid_frames)
            },
            extra: self.extra.clone(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.features[0].len()
    }
}

/// Load a dataset; errors carry the 1-based line number.
pub fn load_jsonl(path: &Path) -> Result<Vec<Sample>> {
    let base = path.parent().map(PathBuf::from).unwrap_or_default();
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(&line)
            .map_err(|e| CoreError::data(format!("line {}: {e}", i + 1)))?;
        out.push(Sample::from_record(rec, &base, i + 1)?);
    }
    Ok(out)
}

/// Save a dataset, one JSON object per line. File-referenced features are
/// written as references; the binary files themselves are not touched.
pub fn save_jsonl(samples: &[Sample], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in samples {
        let rec = s.to_record();
        let line = serde_json::to_string(&rec)
            .map_err(|e| CoreError::data(format!("encode sample {}: {e}", s.id)))?;
        writeln!(f, "{line}")?;
    }
    f.flush()?;
    Ok(())
}

/// Feature binary format: u32 M, u32 D, then M*D little-endian f32 values.
pub fn write_features(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    if rows.is_empty() {
        return Err(CoreError::data("write_features: no rows"));
    }
    let d = rows[0].len();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&(rows.len() as u32).to_le_bytes())?;
    f.write_all(&(d as u32).to_le_bytes())?;
    for row in rows {
        if row.len() != d {
            return Err(CoreError::data("write_features: ragged rows"));
        }
        for &v in row {
            f.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut u4 = [0u8; 4];
    f.read_exact(&mut u4)?;
    let m = u32::from_le_bytes(u4) as usize;
    f.read_exact(&mut u4)?;
    let d = u32::from_le_bytes(u4) as usize;
    let mut payload = Vec::new();
    f.read_to_end(&mut payload)?;
    if payload.len() != m * d * 4 {
        return Err(CoreError::data(format!(
            "feature file {}: header says {m}x{d} but payload is {} bytes",
            path.display(),
            payload.len()
        )));
    }
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let row: Vec<f64> = payload[i * d * 4..(i + 1) * d * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str) -> Sample {
        Sample {
            id: id.to_string(),
            features: vec![vec![0.5, -1.25], vec![0.0, 2.0]],
            feature_source: FeatureSource::Inline,
            valid_frames: 2,
            caption: vec!["the".into(), "dog".into()],
            caption_parse: parse_bracketed("(ROOT (S (DT the) (NN dog)))").unwrap(),
            caption_pos: vec!["DT".into(), "NN".into()],
            exemplars: vec![Exemplar {
                words: vec!["a".into(), "cat".into()],
                parse: parse_bracketed("(ROOT (S (DT a) (NN cat)))").unwrap(),
                pos: vec!["DT".into(), "NN".into()],
            }],
            extra: serde_json::Map::new(),
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let samples = vec![sample("s1"), sample("s2")];
        save_jsonl(&samples, &path).unwrap();
        let back = load_jsonl(&path).unwrap();
        assert_eq!(back, samples);
    }

    #[test]
    fn unknown_fields_survive_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let mut s = sample("s1");
        s.extra
            .insert("source_url".into(), serde_json::json!("http://example"));
        save_jsonl(&[s.clone()], &path).unwrap();
        let back = load_jsonl(&path).unwrap();
        assert_eq!(back[0].extra["source_url"], "http://example");
        assert_eq!(back[0], s);
    }

    #[test]
    fn unbalanced_parse_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = serde_json::to_string(&sample("ok").to_record()).unwrap();
        let bad = good.replace("(ROOT (S (DT the) (NN dog)))", "(ROOT (S (DT the)");
        std::fs::write(&path, format!("{good}\n{bad}\n")).unwrap();
        let err = load_jsonl(&path).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn missing_field_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"id\": \"x\"}\n").unwrap();
        let err = load_jsonl(&path).unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn external_feature_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]];
        write_features(&dir.path().join("v.bin"), &rows).unwrap();

        let mut s = sample("s1");
        s.features = rows.clone();
        s.valid_frames = 3;
        s.feature_source = FeatureSource::File("v.bin".into());
        let path = dir.path().join("corpus.jsonl");
        save_jsonl(&[s.clone()], &path).unwrap();

        let back = load_jsonl(&path).unwrap();
        assert_eq!(back[0].features.len(), 3);
        assert_eq!(back[0].features, rows);
        assert_eq!(back[0], s);
    }

    #[test]
    fn pos_length_mismatch_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let mut s = sample("s1");
        s.caption_pos.pop();
        let rec = serde_json::to_string(&s.to_record()).unwrap();
        std::fs::write(&path, format!("{rec}\n")).unwrap();
        assert!(load_jsonl(&path).is_err());
    }
}
