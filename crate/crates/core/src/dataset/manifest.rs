//! Line-delimited JSON manifests.
//!
//! Monophonic corpus lines carry `path`, `instrument`, `genre` and an
//! optional `split` (fold index 0..4 or `"test"`). Multi-label tracks (mixes,
//! test tracks) carry `labels: [code, ...]` instead of `instrument`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::labels::{Genre, Instrument, LabelVector};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Fold(u8),
    Test,
}

impl Serialize for Split {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Split::Fold(k) => s.serialize_u8(*k),
            Split::Test => s.serialize_str("test"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub path: PathBuf,
    pub instrument: Instrument,
    pub genre: Genre,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "split_de")]
    pub split: Option<Split>,
}

fn split_de<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<Split>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Fold(u8),
        Name(String),
    }
    match Option::<Raw>::deserialize(d)? {
        None => Ok(None),
        Some(Raw::Fold(k)) if k < 5 => Ok(Some(Split::Fold(k))),
        Some(Raw::Fold(k)) => Err(serde::de::Error::custom(format!("fold index {k} outside 0..4"))),
        Some(Raw::Name(s)) if s == "test" => Ok(Some(Split::Test)),
        Some(Raw::Name(s)) => Err(serde::de::Error::custom(format!("unknown split `{s}`"))),
    }
}

#[derive(Deserialize)]
struct RawLine {
    path: PathBuf,
    instrument: Option<String>,
    #[serde(default)]
    labels: Option<Vec<String>>,
    genre: Option<String>,
    #[serde(default)]
    duration_s: Option<f64>,
    #[serde(default, deserialize_with = "split_de")]
    split: Option<Split>,
}

/// Manifest line for a multi-label track.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackLine {
    pub path: PathBuf,
    pub labels: Vec<Instrument>,
}

/// A labelled audio file of any polyphony, as consumed by feature
/// extraction, prediction and evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackRecord {
    pub path: PathBuf,
    pub labels: LabelVector,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse_raw(line_no: usize, line: &str) -> Result<RawLine> {
    serde_json::from_str(line).map_err(|e| Error::Validation {
        line: line_no,
        msg: e.to_string(),
    })
}

fn parse_instrument(line: usize, s: &str) -> Result<Instrument> {
    s.parse().map_err(|msg| Error::Validation { line, msg })
}

/// Parse and validate a monophonic corpus manifest. File existence is not
/// checked here; see [`verify_manifest`].
pub fn load_manifest(path: &Path) -> Result<Vec<ClipRecord>> {
    read_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            let raw = parse_raw(line, &text)?;
            let instrument = parse_instrument(
                line,
                raw.instrument.as_deref().ok_or(Error::Validation {
                    line,
                    msg: "missing `instrument`".into(),
                })?,
            )?;
            let genre = raw
                .genre
                .as_deref()
                .ok_or(Error::Validation {
                    line,
                    msg: "missing `genre`".into(),
                })?
                .parse()
                .map_err(|msg| Error::Validation { line, msg })?;
            if let Some(d) = raw.duration_s {
                if !(d > 0.0) {
                    return Err(Error::Validation {
                        line,
                        msg: format!("duration_s must be positive, got {d}"),
                    });
                }
            }
            Ok(ClipRecord {
                path: raw.path,
                instrument,
                genre,
                duration_s: raw.duration_s,
                split: raw.split,
            })
        })
        .collect()
}

/// Parse any manifest into labelled tracks (`instrument` or `labels` per line).
pub fn load_tracks(path: &Path) -> Result<Vec<TrackRecord>> {
    read_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            let raw = parse_raw(line, &text)?;
            let labels = match (&raw.instrument, &raw.labels) {
                (Some(i), _) => LabelVector::single(parse_instrument(line, i)?),
                (None, Some(codes)) => {
                    let insts = codes
                        .iter()
                        .map(|c| parse_instrument(line, c))
                        .collect::<Result<Vec<_>>>()?;
                    LabelVector::from_instruments(&insts)
                }
                (None, None) => {
                    return Err(Error::Validation {
                        line,
                        msg: "record needs `instrument` or `labels`".into(),
                    })
                }
            };
            if labels.count() == 0 {
                return Err(Error::Validation {
                    line,
                    msg: "record has no labels".into(),
                });
            }
            Ok(TrackRecord {
                path: raw.path,
                labels,
            })
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_manifest(path: &Path, records: &[ClipRecord]) -> Result<()> {
    write_jsonl(path, records)
}

/// Resolve a record path relative to the directory holding its manifest.
pub fn resolve(manifest: &Path, record_path: &Path) -> PathBuf {
    if record_path.is_absolute() {
        record_path.to_path_buf()
    } else {
        manifest
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(record_path)
    }
}

/// Outcome of checking that every manifest entry points at readable audio.
#[derive(Debug, Default)]
pub struct VerifyReport {
    pub ok: usize,
    pub missing: Vec<PathBuf>,
    pub unreadable: Vec<(PathBuf, String)>,
}

/// Check each record's file and fill in `duration_s` from its header.
pub fn verify_manifest(manifest: &Path, records: &mut [ClipRecord]) -> VerifyReport {
    let mut report = VerifyReport::default();
    for r in records.iter_mut() {
        let p = resolve(manifest, &r.path);
        if !p.exists() {
            report.missing.push(p);
            continue;
        }
        match hound::WavReader::open(&p) {
            Ok(reader) => {
                let spec = reader.spec();
                r.duration_s = Some(reader.duration() as f64 / spec.sample_rate as f64);
                report.ok += 1;
            }
            Err(e) => report.unreadable.push((p, e.to_string())),
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(contents: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        std::fs::write(&p, contents).unwrap();
        (dir, p)
    }

    #[test]
    fn parses_records() {
        let (_d, p) = manifest(
            "{\"path\": \"a.wav\", \"instrument\": \"pia\", \"genre\": \"classical\"}\n\
             {\"path\": \"b.wav\", \"instrument\": \"voi\", \"genre\": \"pop_rock\", \"split\": 3}\n\
             {\"path\": \"c.wav\", \"instrument\": \"sax\", \"genre\": \"jazz_blues\", \"split\": \"test\"}\n",
        );
        let recs = load_manifest(&p).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].path, PathBuf::from("a.wav"));
        assert_eq!(recs[0].instrument, Instrument::Pia);
        assert_eq!(recs[0].genre, Genre::Classical);
        assert_eq!(recs[1].split, Some(Split::Fold(3)));
        assert_eq!(recs[2].split, Some(Split::Test));
    }

    #[test]
    fn unknown_instrument_names_line() {
        let (_d, p) = manifest(
            "{\"path\": \"a.wav\", \"instrument\": \"pia\", \"genre\": \"classical\"}\n\
             {\"path\": \"b.wav\", \"instrument\": \"harp\", \"genre\": \"classical\"}\n",
        );
        match load_manifest(&p) {
            Err(Error::Validation { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("harp"));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_empty_manifest() {
        let (_d, p) = manifest("");
        assert!(load_manifest(&p).unwrap().is_empty());
    }

    #[test]
    fn round_trip_and_verify() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let recs = vec![ClipRecord {
            path: "missing.wav".into(),
            instrument: Instrument::Flu,
            genre: Genre::CountryFolk,
            duration_s: None,
            split: Some(Split::Fold(0)),
        }];
        write_manifest(&p, &recs).unwrap();
        let mut back = load_manifest(&p).unwrap();
        assert_eq!(back, recs);
        let report = verify_manifest(&p, &mut back);
        assert_eq!(report.missing.len(), 1);
    }

    #[test]
    fn multi_label_tracks() {
        let (_d, p) = manifest(
            "{\"path\": \"mix.wav\", \"labels\": [\"cel\", \"pia\"]}\n\
             {\"path\": \"a.wav\", \"instrument\": \"gac\", \"genre\": \"pop_rock\"}\n",
        );
        let tracks = load_tracks(&p).unwrap();
        assert_eq!(tracks[0].labels, LabelVector::from_instruments(&[Instrument::Cel, Instrument::Pia]));
        assert_eq!(tracks[1].labels, LabelVector::single(Instrument::Gac));
    }
}
