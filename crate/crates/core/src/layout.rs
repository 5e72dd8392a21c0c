//! On-disk layout of a data directory.
//!
//! ```text
//! <root>/index
//! <root>/config
//! <root>/sessions/<id>/{log,snapshot,proposals}
//! <root>/profiles/<user_id>
//! <root>/store/{templates/<id>,ledger,balances,applications}
//! <root>/batches/<YYYY-MM-DD>/...
//! ```

use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataLayout {
    root: PathBuf,
}

/// Whether `id` is safe to use as a single path component.
pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl DataLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DataLayout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn index(&self) -> PathBuf {
        self.root.join("index")
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config")
    }

    pub fn sessions(&self) -> PathBuf {
        self.root.join("sessions")
    }

    pub fn session(&self, id: &str) -> PathBuf {
        self.sessions().join(id)
    }

    pub fn log(&self, id: &str) -> PathBuf {
        self.session(id).join("log")
    }

    pub fn snapshot(&self, id: &str) -> PathBuf {
        self.session(id).join("snapshot")
    }

    pub fn proposals(&self, id: &str) -> PathBuf {
        self.session(id).join("proposals")
    }

    pub fn profiles(&self) -> PathBuf {
        self.root.join("profiles")
    }

    pub fn profile(&self, user_id: &str) -> PathBuf {
        self.profiles().join(user_id)
    }

    pub fn store(&self) -> PathBuf {
        self.root.join("store")
    }

    pub fn batches(&self) -> PathBuf {
        self.root.join("batches")
    }

    /// Ids of all sessions with a log file, sorted.
    pub fn session_ids(&self) -> std::io::Result<Vec<String>> {
        let dir = self.sessions();
        if !dir.exists() {
            return Ok(vec![]);
        }
        let mut ids = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let entry = entry?;
            if entry.path().join("log").is_file() {
                if let Some(name) = entry.file_name().to_str() {
                    ids.push(name.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}
