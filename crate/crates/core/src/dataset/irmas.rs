//! Ingest adapter for the IRMAS training layout: one folder per instrument
//! code, file names carrying bracketed tags such as
//! `001__[cel][nod][cla]0058__1.wav`, where the last tag is the genre.

use std::path::{Path, PathBuf};

use super::labels::{Genre, Instrument};
use super::manifest::ClipRecord;
use crate::error::{Error, Result};

#[derive(Debug, Default)]
pub struct IrmasIngest {
    pub records: Vec<ClipRecord>,
    /// Files whose genre tag has no counterpart in the genre vocabulary.
    pub skipped: Vec<PathBuf>,
}

fn genre_tag(tag: &str) -> Option<Genre> {
    match tag {
        "cla" => Some(Genre::Classical),
        "pop_roc" => Some(Genre::PopRock),
        "jaz_blu" => Some(Genre::JazzBlues),
        "cou_fol" => Some(Genre::CountryFolk),
        _ => None,
    }
}

fn bracket_tags(name: &str) -> Vec<&str> {
    let mut tags = Vec::new();
    let mut rest = name;
    while let Some(open) = rest.find('[') {
        match rest[open..].find(']') {
            Some(close) => {
                tags.push(&rest[open + 1..open + close]);
                rest = &rest[open + close + 1..];
            }
            None => break,
        }
    }
    tags
}

/// Scan `root` and build records with paths relative to `root`. Folders not
/// named after an instrument code are ignored.
pub fn ingest_irmas(root: &Path) -> Result<IrmasIngest> {
    let mut out = IrmasIngest::default();
    let mut dirs: Vec<_> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .collect();
    dirs.sort_by_key(|e| e.file_name());
    for dir in dirs {
        let Ok(instrument) = dir.file_name().to_string_lossy().parse::<Instrument>() else {
            continue;
        };
        let mut files: Vec<_> = std::fs::read_dir(dir.path())
            .map_err(|e| Error::io(&dir.path(), e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        files.sort();
        for file in files {
            let name = file.file_name().unwrap_or_default().to_string_lossy().into_owned();
            let rel = file.strip_prefix(root).unwrap_or(&file).to_path_buf();
            match bracket_tags(&name).last().and_then(|t| genre_tag(t)) {
                Some(genre) => out.records.push(ClipRecord {
                    path: rel,
                    instrument,
                    genre,
                    duration_s: None,
                    split: None,
                }),
                None => out.skipped.push(rel),
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_parsed_and_unknown_genres_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        for (folder, file) in [
            ("cla", "001__[cla][nod][cou_fol]0001__1.wav"),
            ("cla", "[cla][dru][cla]0002__2.wav"),
            ("vio", "[vio][nod][lat_sou]0003__1.wav"),
            ("dru", "[dru][pop_roc]0004__1.wav"),
        ] {
            std::fs::create_dir_all(root.join(folder)).unwrap();
            std::fs::write(root.join(folder).join(file), b"").unwrap();
        }
        let got = ingest_irmas(root).unwrap();
        assert_eq!(got.records.len(), 2);
        assert_eq!(got.records[0].genre, Genre::CountryFolk);
        assert_eq!(got.records[1].genre, Genre::Classical);
        assert!(got.records.iter().all(|r| r.instrument == Instrument::Cla));
        assert_eq!(got.skipped.len(), 1);
    }

    #[test]
    fn bracket_scan() {
        assert_eq!(bracket_tags("a[x]b[yy][z"), vec!["x", "yy"]);
    }
}
