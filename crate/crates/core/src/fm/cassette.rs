use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fp: String,
    pub tag: String,
    pub response: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CassetteError {
    #[error("cassette {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cassette {path}:{line}: corrupt entry: {message}")]
    Corrupt {
        path: String,
        line: usize,
        message: String,
    },
}

/// Fingerprint → response map loaded from a line-delimited file.
#[derive(Debug, Clone, Default)]
pub struct Cassette {
    entries: HashMap<String, CassetteEntry>,
    order: Vec<String>,
}

impl Cassette {
    pub fn load(path: &Path) -> Result<Self, CassetteError> {
        let f = std::fs::File::open(path).map_err(|source| CassetteError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read(std::io::BufReader::new(f), &path.display().to_string())
    }

    /// Loads `path` if it exists, otherwise starts empty.
    pub fn load_or_empty(path: &Path) -> Result<Self, CassetteError> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::default())
        }
    }

    pub fn read(r: impl BufRead, name: &str) -> Result<Self, CassetteError> {
        let mut c = Cassette::default();
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|source| CassetteError::Io {
                path: name.to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry =
                serde_json::from_str(&line).map_err(|e| CassetteError::Corrupt {
                    path: name.to_string(),
                    line: n + 1,
                    message: e.to_string(),
                })?;
            c.insert(entry);
        }
        Ok(c)
    }

    /// Keeps the first response recorded for a fingerprint.
    pub fn insert(&mut self, entry: CassetteEntry) -> bool {
        if self.entries.contains_key(&entry.fp) {
            return false;
        }
        self.order.push(entry.fp.clone());
        self.entries.insert(entry.fp.clone(), entry);
        true
    }

    pub fn get(&self, fp: &str) -> Option<&CassetteEntry> {
        self.entries.get(fp)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> impl Iterator<Item = &CassetteEntry> {
        self.order.iter().map(move |fp| &self.entries[fp])
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for e in self.entries() {
            s.push_str(&entry_line(e));
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), CassetteError> {
        std::fs::write(path, self.to_jsonl()).map_err(|source| CassetteError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

pub(crate) fn entry_line(e: &CassetteEntry) -> String {
    let mut s = serde_json::to_string(e).expect("entry serializes");
    s.push('\n');
    s
}

/// Append-only writer; one line per recorded entry, flushed immediately.
pub(crate) struct CassetteWriter {
    path: PathBuf,
    file: std::fs::File,
}

impl CassetteWriter {
    pub fn open(path: &Path) -> Result<Self, CassetteError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|source| CassetteError::Io {
                path: dir.display().to_string(),
                source,
            })?;
        }
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| CassetteError::Io {
                path: path.display().to_string(),
                source,
            })?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn append(&mut self, e: &CassetteEntry) -> Result<(), CassetteError> {
        self.file
            .write_all(entry_line(e).as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|source| CassetteError::Io {
                path: self.path.display().to_string(),
                source,
            })
    }
}
