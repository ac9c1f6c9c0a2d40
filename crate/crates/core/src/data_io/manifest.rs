//! Dataset manifest:
//!
//! ```text
//! HWGAT-MANIFEST 1
//! class <index> <name>
//! entry <relative path> <label> <train|val|test> [signer]
//! ```
//!
//! Class lines must list indices `0..C` in order. Entry paths are relative
//! to the manifest's directory. Loading checks labels, split tags and that
//! every referenced file exists.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sequence::{load_sequence, parse_err};
use crate::error::{Error, Result};
use crate::preprocess::SkeletonSequence;

pub const MANIFEST_MAGIC: &str = "HWGAT-MANIFEST";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Manifest(format!("unknown split tag {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Path relative to the manifest directory.
    pub path: PathBuf,
    pub label: usize,
    pub split: Split,
    pub signer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub class_names: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

fn token_ok(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

impl DatasetManifest {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        for name in &self.class_names {
            if !token_ok(name) {
                return Err(Error::Manifest(format!("class name {name:?} must be one token")));
            }
        }
        for e in &self.entries {
            if e.label >= self.num_classes() {
                return Err(Error::Manifest(format!(
                    "entry {} has label {} but only {} classes",
                    e.path.display(),
                    e.label,
                    self.num_classes()
                )));
            }
            let p = e.path.to_string_lossy();
            if !token_ok(&p) || e.signer.as_deref().is_some_and(|s| !token_ok(s)) {
                return Err(Error::Manifest(format!("entry {p:?} has an empty or whitespace field")));
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn split_counts(&self) -> BTreeMap<Split, usize> {
        let mut m = BTreeMap::new();
        for e in &self.entries {
            *m.entry(e.split).or_insert(0) += 1;
        }
        m
    }

    /// `None` when some entry has no signer id, otherwise whether no signer
    /// appears in two different splits.
    pub fn signer_disjoint(&self) -> Option<bool> {
        let mut seen: BTreeMap<&str, Split> = BTreeMap::new();
        for e in &self.entries {
            let s = e.signer.as_deref()?;
            if let Some(&prev) = seen.get(s) {
                if prev != e.split {
                    return Some(false);
                }
            }
            seen.insert(s, e.split);
        }
        Some(true)
    }

    pub fn format(&self) -> Result<String> {
        self.validate()?;
        let mut out = format!("{MANIFEST_MAGIC} 1\n");
        for (i, name) in self.class_names.iter().enumerate() {
            let _ = writeln!(out, "class {i} {name}");
        }
        for e in &self.entries {
            let _ = write!(out, "entry {} {} {}", e.path.display(), e.label, e.split.name());
            if let Some(s) = &e.signer {
                let _ = write!(out, " {s}");
            }
            out.push('\n');
        }
        Ok(out)
    }

    /// Parses manifest text without touching the referenced files.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, l)) if l == format!("{MANIFEST_MAGIC} 1") => {}
            Some((n, _)) => return Err(parse_err(path, n, format!("expected header \"{MANIFEST_MAGIC} 1\""))),
            None => return Err(parse_err(path, 1, "empty manifest")),
        }
        let mut m = DatasetManifest::default();
        for (n, line) in lines {
            let t: Vec<&str> = line.split_whitespace().collect();
            match t.as_slice() {
                ["class", idx, name] => {
                    if idx.parse::<usize>().ok() != Some(m.class_names.len()) {
                        return Err(parse_err(path, n, format!("class index {idx} out of order")));
                    }
                    m.class_names.push(name.to_string());
                }
                ["entry", p, label, split, rest @ ..] if rest.len() <= 1 => {
                    let label = label.parse().map_err(|_| parse_err(path, n, format!("label {label:?} is not an index")))?;
                    let split = Split::parse(split).map_err(|e| parse_err(path, n, e.to_string()))?;
                    m.entries.push(ManifestEntry {
                        path: PathBuf::from(p),
                        label,
                        split,
                        signer: rest.first().map(|s| s.to_string()),
                    });
                }
                _ => return Err(parse_err(path, n, "expected a class or entry record")),
            }
        }
        m.validate()?;
        Ok(m)
    }
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let text = manifest.format()?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads a manifest and checks that every referenced file exists.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m = DatasetManifest::parse(&text, path)?;
    let base = base_dir(path);
    let mut dangling = BTreeSet::new();
    for e in &m.entries {
        if !base.join(&e.path).is_file() {
            dangling.insert(e.path.display().to_string());
        }
    }
    if let Some(first) = dangling.iter().next() {
        return Err(Error::Manifest(format!(
            "{} references {} missing file(s), first {first}",
            path.display(),
            dangling.len()
        )));
    }
    Ok(m)
}

pub fn base_dir(manifest_path: &Path) -> PathBuf {
    manifest_path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Loads every sequence of `split`, labeled from the manifest.
pub fn load_split(manifest_path: &Path, manifest: &DatasetManifest, split: Split) -> Result<Vec<SkeletonSequence>> {
    let base = base_dir(manifest_path);
    manifest
        .split(split)
        .map(|e| {
            let mut seq = load_sequence(&base.join(&e.path))?;
            seq.label = Some(e.label);
            Ok(seq)
        })
        .collect()
}
