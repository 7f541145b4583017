use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

/// Resolves a state's `screenshot` reference to PNG bytes.
pub trait Screenshots: Send + Sync {
    fn load(&self, reference: &str) -> Option<Arc<Vec<u8>>>;
}

/// In-memory store keyed by reference.
#[derive(Debug, Clone, Default)]
pub struct MemScreens {
    map: HashMap<String, Arc<Vec<u8>>>,
}

impl MemScreens {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, reference: impl Into<String>, png: Arc<Vec<u8>>) {
        self.map.insert(reference.into(), png);
    }

    pub fn extend(&mut self, other: &MemScreens) {
        for (k, v) in &other.map {
            self.map.insert(k.clone(), v.clone());
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// References in sorted order.
    pub fn references(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.map.keys().map(String::as_str).collect();
        v.sort();
        v
    }

    /// Writes every screenshot below `root`, creating directories as needed.
    pub fn write_all(&self, root: &std::path::Path) -> std::io::Result<()> {
        for r in self.references() {
            let path = root.join(r);
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            if !path.exists() {
                std::fs::write(&path, self.map[r].as_slice())?;
            }
        }
        Ok(())
    }
}

impl Screenshots for MemScreens {
    fn load(&self, reference: &str) -> Option<Arc<Vec<u8>>> {
        self.map.get(reference).cloned()
    }
}

/// Files relative to a root directory.
#[derive(Debug, Clone)]
pub struct DirScreens {
    pub root: PathBuf,
}

impl DirScreens {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl Screenshots for DirScreens {
    fn load(&self, reference: &str) -> Option<Arc<Vec<u8>>> {
        std::fs::read(self.root.join(reference)).ok().map(Arc::new)
    }
}
