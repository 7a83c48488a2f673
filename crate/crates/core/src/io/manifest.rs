//! Plain-text dataset manifests.
//!
//! ```text
//! #version=1
//! #shape=8x8
//! #channels=1
//! #range=u8
//! #certificate=3f1c0a2b9d7e4411
//! images/a.pgm	zero
//! images/b.eqt	one
//! ```
//!
//! Entries are `path<TAB>label`, with paths relative to the manifest's
//! directory. Files ending in `.pgm` are read as PGM images, anything else
//! as raw tensor files.

use super::pgm::load_pgm;
use crate::constructive::dataset_digest;
use crate::error::{Error, Result};
use crate::tensor::{codec, MultiTensor, Shape};
use std::fmt;
use std::path::{Path, PathBuf};

pub const MANIFEST_VERSION: u32 = 1;

/// Declared value range; each tag fixes the bit count `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeTag {
    /// `[0, 256)`, `Q = 7`.
    U8,
    /// `{0, 1}`, `Q = 0`.
    Binary,
    /// `[0, 2^(Q+1))` for the given `Q`.
    Bits(u32),
}

impl RangeTag {
    pub fn bits(self) -> u32 {
        match self {
            RangeTag::U8 => 7,
            RangeTag::Binary => 0,
            RangeTag::Bits(q) => q,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "u8" => Some(RangeTag::U8),
            "binary" => Some(RangeTag::Binary),
            _ => s
                .strip_prefix('q')
                .and_then(|q| q.parse().ok())
                .filter(|&q| q <= 52)
                .map(RangeTag::Bits),
        }
    }
}

impl fmt::Display for RangeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RangeTag::U8 => f.write_str("u8"),
            RangeTag::Binary => f.write_str("binary"),
            RangeTag::Bits(q) => write!(f, "q{q}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub version: u32,
    pub shape: Shape,
    pub channels: usize,
    pub range: RangeTag,
    /// Digest of a dataset already certified aperiodic.
    pub certificate: Option<String>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut version = None;
        let mut shape = None;
        let mut channels = None;
        let mut range = None;
        let mut certificate = None;
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let at = |m: String| Error::Input(format!("manifest line {}: {m}", lineno + 1));
            if line.trim().is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                let Some((key, value)) = header.split_once('=') else {
                    continue; // plain comment
                };
                let value = value.trim();
                match key.trim() {
                    "version" => {
                        version = Some(
                            value
                                .parse::<u32>()
                                .map_err(|_| at(format!("bad version {value:?}")))?,
                        )
                    }
                    "shape" => shape = Some(Shape::parse(value).map_err(|e| at(e.to_string()))?),
                    "channels" => {
                        channels = Some(
                            value
                                .parse::<usize>()
                                .ok()
                                .filter(|&c| c > 0)
                                .ok_or_else(|| at(format!("bad channel count {value:?}")))?,
                        )
                    }
                    "range" => {
                        range = Some(
                            RangeTag::parse(value)
                                .ok_or_else(|| at(format!("bad range tag {value:?}")))?,
                        )
                    }
                    "certificate" => certificate = Some(value.to_string()),
                    other => return Err(at(format!("unknown header {other:?}"))),
                }
                continue;
            }
            let (path, label) = line
                .split_once('\t')
                .ok_or_else(|| at("expected path<TAB>label".into()))?;
            if path.is_empty() {
                return Err(at("empty path".into()));
            }
            entries.push(ManifestEntry {
                path: path.to_string(),
                label: label.to_string(),
            });
        }
        let missing = |k: &str| Error::Input(format!("manifest is missing the #{k}= header"));
        let version = version.unwrap_or(MANIFEST_VERSION);
        if version != MANIFEST_VERSION {
            return Err(Error::Input(format!(
                "unsupported manifest version {version}"
            )));
        }
        Ok(Self {
            version,
            shape: shape.ok_or_else(|| missing("shape"))?,
            channels: channels.unwrap_or(1),
            range: range.ok_or_else(|| missing("range"))?,
            certificate,
            entries,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "#version={}\n#shape={}\n#channels={}\n#range={}\n",
            self.version, self.shape, self.channels, self.range
        );
        if let Some(c) = &self.certificate {
            s.push_str(&format!("#certificate={c}\n"));
        }
        for e in &self.entries {
            s.push_str(&format!("{}\t{}\n", e.path, e.label));
        }
        s
    }
}

/// A manifest with its tensors loaded and validated.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub manifest: DatasetManifest,
    pub elements: Vec<MultiTensor>,
    pub labels: Vec<String>,
}

impl LabeledDataset {
    pub fn bits(&self) -> u32 {
        self.manifest.range.bits()
    }

    /// Whether the cached certificate names exactly these tensors.
    pub fn certificate_matches(&self) -> bool {
        self.manifest.certificate.as_deref() == Some(dataset_digest(&self.elements).as_str())
    }
}

fn load_element(path: &Path) -> Result<MultiTensor> {
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
    {
        Ok(load_pgm(path)?.into())
    } else {
        Ok(codec::read_file(path)?.0)
    }
}

/// Loads and validates every entry; all problems are reported together.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read manifest {}: {e}", path.display())))?;
    let manifest = DatasetManifest::parse(&text)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    load_entries(manifest, &base)
}

pub fn load_entries(manifest: DatasetManifest, base: &Path) -> Result<LabeledDataset> {
    if manifest.entries.is_empty() {
        return Err(Error::Input("manifest lists no elements".into()));
    }
    let bound = 2f64.powi(manifest.range.bits() as i32 + 1);
    let mut problems = Vec::new();
    let mut elements = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let file: PathBuf = base.join(&e.path);
        let x = match load_element(&file) {
            Ok(x) => x,
            Err(err) => {
                problems.push(format!("{}: {err}", e.path));
                continue;
            }
        };
        if x.shape() != &manifest.shape || x.channels() != manifest.channels {
            problems.push(format!(
                "{}: layout {}x{} does not match declared {}x{}",
                e.path,
                x.channels(),
                x.shape(),
                manifest.channels,
                manifest.shape
            ));
            continue;
        }
        if let Some((i, v)) = x
            .as_slice()
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v >= 0.0 && v < bound && v.fract() == 0.0))
        {
            problems.push(format!(
                "{}: value {v} at position {i} violates range {}",
                e.path, manifest.range
            ));
            continue;
        }
        elements.push(x);
    }
    if !problems.is_empty() {
        return Err(Error::Input(format!(
            "{} of {} manifest entries failed:\n  {}",
            problems.len(),
            manifest.entries.len(),
            problems.join("\n  ")
        )));
    }
    let labels = manifest.entries.iter().map(|e| e.label.clone()).collect();
    Ok(LabeledDataset {
        manifest,
        elements,
        labels,
    })
}
