use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Batch, OfflineError, Window};
use crate::domain::record;

pub const BATCH_FORMAT: &str = "stagewise-batch/1";

const FILES: [&str; 4] = ["decomposition.samples", "retrieval.samples", "generation.samples", "accepted.sidecar"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub window: Window,
    pub counts: BTreeMap<String, usize>,
    /// sha256 hex per file.
    pub files: BTreeMap<String, String>,
    /// sha256 over the file hashes in fixed order.
    pub content_hash: String,
    pub skipped_logs: Vec<String>,
}

fn lines<T: Serialize>(items: &[T]) -> String {
    items.iter().map(|i| record::encode(i) + "\n").collect()
}

/// Writes `batch` to `out_root/<YYYY-MM-DD of window start>/`.
///
/// Files are written to a hidden temporary directory and renamed into
/// place, so readers never see a partial batch. An existing batch for the
/// same day is replaced. Output is a pure function of `(batch, window)`.
pub fn export_batch(batch: &Batch, window: &Window, out_root: &Path) -> Result<(PathBuf, Manifest), OfflineError> {
    let contents =
        [lines(&batch.decomposition), lines(&batch.retrieval), lines(&batch.generation), lines(&batch.accepted)];
    let counts = [batch.decomposition.len(), batch.retrieval.len(), batch.generation.len(), batch.accepted.len()];

    let mut files = BTreeMap::new();
    let mut all = Sha256::new();
    for (name, body) in FILES.iter().zip(&contents) {
        let h = hex::encode(Sha256::digest(body.as_bytes()));
        all.update(h.as_bytes());
        files.insert(name.to_string(), h);
    }
    let manifest = Manifest {
        format: BATCH_FORMAT.into(),
        window: *window,
        counts: ["decomposition", "retrieval", "generation", "accepted"]
            .iter()
            .zip(counts)
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        files,
        content_hash: hex::encode(all.finalize()),
        skipped_logs: batch.skipped_logs.clone(),
    };

    let day = window.from.date().format("%Y-%m-%d").to_string();
    let target = out_root.join(&day);
    let io = |e: std::io::Error| OfflineError::Io(format!("{}: {e}", target.display()));
    fs::create_dir_all(out_root).map_err(io)?;
    let tmp = out_root.join(format!(".{day}.tmp-{}", uuid::Uuid::new_v4().simple()));
    let write = || -> std::io::Result<()> {
        fs::create_dir(&tmp)?;
        for (name, body) in FILES.iter().zip(&contents) {
            write_synced(&tmp.join(name), body.as_bytes())?;
        }
        write_synced(&tmp.join("manifest"), (record::encode(&manifest) + "\n").as_bytes())?;
        if target.exists() {
            let old = out_root.join(format!(".{day}.old-{}", uuid::Uuid::new_v4().simple()));
            fs::rename(&target, &old)?;
            fs::rename(&tmp, &target)?;
            fs::remove_dir_all(&old)
        } else {
            fs::rename(&tmp, &target)
        }
    };
    if let Err(e) = write() {
        let _ = fs::remove_dir_all(&tmp);
        return Err(io(e));
    }
    Ok((target, manifest))
}

fn write_synced(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()
}
