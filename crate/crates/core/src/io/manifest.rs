//! Dataset manifests: one frame per line,
//! `video_id frame_index frame_path [pa_path|-] [label]`, `#` comments.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::selection::FrameRef;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub frame: FrameRef,
    pub frame_path: PathBuf,
    pub pa_path: Option<PathBuf>,
    pub label: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Relative paths resolve against this directory.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn frame_path(&self, e: &ManifestEntry) -> PathBuf {
        self.resolve(&e.frame_path)
    }

    pub fn pa_path(&self, e: &ManifestEntry) -> Option<PathBuf> {
        e.pa_path.as_deref().map(|p| self.resolve(p))
    }

    /// Manifest text; parsing it yields the same entries.
    pub fn to_text(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.entries {
            let field = |p: &Path| -> Result<String> {
                let s = p
                    .to_str()
                    .ok_or_else(|| Error::InvalidParameter(format!("non UTF-8 path {p:?}")))?;
                if s.is_empty() || s == "-" || s.starts_with('#') || s.contains(char::is_whitespace) {
                    return Err(Error::InvalidParameter(format!("path {s:?} cannot be written to a manifest")));
                }
                Ok(s.to_string())
            };
            if e.frame.video.is_empty()
                || e.frame.video.starts_with('#')
                || e.frame.video.contains(char::is_whitespace)
            {
                return Err(Error::InvalidParameter(format!("bad video id {:?}", e.frame.video)));
            }
            write!(out, "{} {} {}", e.frame.video, e.frame.index, field(&e.frame_path)?).expect("string write");
            match (&e.pa_path, &e.label) {
                (None, None) => {}
                (pa, label) => {
                    let pa = pa.as_deref().map(field).transpose()?.unwrap_or_else(|| "-".into());
                    write!(out, " {pa}").expect("string write");
                    if let Some(l) = label {
                        if l.is_empty() || l.contains(char::is_whitespace) {
                            return Err(Error::InvalidParameter(format!("bad label {l:?}")));
                        }
                        write!(out, " {l}").expect("string write");
                    }
                }
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// Parses manifest text without touching the file system.
pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Manifest { line, message };
        let fields: Vec<&str> = content.split_whitespace().collect();
        if !(3..=5).contains(&fields.len()) {
            return Err(err(format!("expected 3 to 5 fields, found {}", fields.len())));
        }
        let index: u32 = fields[1]
            .parse()
            .map_err(|_| err(format!("frame index {:?} is not a non-negative integer", fields[1])))?;
        let frame = FrameRef::new(fields[0], index);
        if !seen.insert(frame.clone()) {
            return Err(err(format!("duplicate frame {frame}")));
        }
        entries.push(ManifestEntry {
            frame,
            frame_path: PathBuf::from(fields[2]),
            pa_path: fields.get(3).filter(|p| **p != "-").map(PathBuf::from),
            label: fields.get(4).map(|s| s.to_string()),
        });
    }
    Ok(Manifest {
        entries,
        base_dir: PathBuf::new(),
    })
}

/// Loads a manifest and checks that every frame file exists.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut m = parse_manifest(&text)?;
    m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    for e in &m.entries {
        let p = m.frame_path(e);
        if !p.is_file() {
            return Err(Error::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, format!("frame {} not found", e.frame)),
            ));
        }
    }
    Ok(m)
}

pub fn save_manifest(m: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, m.to_text()?).map_err(|e| Error::io(path, e))
}
