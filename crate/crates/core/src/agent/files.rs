use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::toolbox::HARNESS_DIR;

/// Relative path (forward slashes) → SHA-256 hex digest.
pub type FileHashes = BTreeMap<String, String>;

/// Hashes every regular file under `ws`, skipping the harness's own
/// scratch directory. Symlinks are not followed.
pub fn snapshot_workspace(ws: &Path) -> FileHashes {
    let mut out = FileHashes::new();
    let walker = WalkDir::new(ws)
        .follow_links(false)
        .sort_by_file_name()
        .into_iter();
    for entry in walker.filter_entry(|e| e.depth() != 1 || e.file_name() != HARNESS_DIR) {
        let Ok(entry) = entry else { continue };
        if !entry.file_type().is_file() {
            continue;
        }
        let Ok(rel) = entry.path().strip_prefix(ws) else {
            continue;
        };
        let rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        if let Ok(bytes) = fs::read(entry.path()) {
            out.insert(rel, hex::encode(Sha256::digest(&bytes)));
        }
    }
    out
}

/// Paths created, deleted or changed between two snapshots.
pub fn track_modified_files(before: &FileHashes, after: &FileHashes) -> BTreeSet<String> {
    let mut changed: BTreeSet<String> = after
        .iter()
        .filter(|(p, h)| before.get(*p) != Some(*h))
        .map(|(p, _)| p.clone())
        .collect();
    changed.extend(before.keys().filter(|p| !after.contains_key(*p)).cloned());
    changed
}
