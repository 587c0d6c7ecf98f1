//! Crash-safe experiment checkpoints with retention.
//!
//! Layout under `<base>/checkpoints/`:
//!
//! ```text
//! manifest-<iter>.txt      line-oriented, written last
//! <component>-<iter>.bin   opaque payload bytes
//! ```
//!
//! Every file is written under a temporary name and renamed into place, and
//! the manifest only after all payloads are in place, so a crash at any point
//! leaves either a complete checkpoint or none at all for that iteration.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

pub const MANIFEST_FORMAT: u32 = 1;
pub const DEFAULT_KEEP_LAST: usize = 3;
const MANIFEST_MAGIC: &str = "valrl-checkpoint";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid component name `{0}`")]
    InvalidName(String),
    #[error("iteration {iteration} is not after the latest checkpoint {latest}")]
    NotIncreasing { iteration: u64, latest: u64 },
    #[error("keep_last must be at least 1")]
    KeepLast,
    /// Checkpoints exist but none verifies. Never silently restart.
    #[error("no valid checkpoint in {dir}: {reasons}")]
    Unrecoverable { dir: PathBuf, reasons: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io { path: path.to_path_buf(), source }
}

/// Simulates process death at a chosen write boundary.
///
/// Clones share one counter, so a single injector can arm the checkpointer
/// and the experiment log together. Boundary `n` (1-based) fails with an
/// error whose kind is [`io::ErrorKind::Interrupted`]; partially written
/// files stay on disk exactly as a crash would leave them.
#[derive(Debug, Clone, Default)]
pub struct FaultInjector {
    state: Option<Arc<(AtomicU64, AtomicU64)>>,
}

impl FaultInjector {
    /// Never fails and counts nothing.
    pub fn disabled() -> Self {
        Self { state: None }
    }

    /// Counts boundaries without failing.
    pub fn counting() -> Self {
        Self::crash_at(u64::MAX)
    }

    pub fn crash_at(boundary: u64) -> Self {
        Self { state: Some(Arc::new((AtomicU64::new(0), AtomicU64::new(boundary)))) }
    }

    /// Boundaries passed so far.
    pub fn count(&self) -> u64 {
        self.state.as_ref().map_or(0, |s| s.0.load(Ordering::SeqCst))
    }

    /// Marks one write boundary; fails if it is the armed one.
    pub fn boundary(&self, what: &str) -> io::Result<()> {
        let Some(state) = &self.state else { return Ok(()) };
        let n = state.0.fetch_add(1, Ordering::SeqCst) + 1;
        if n == state.1.load(Ordering::SeqCst) {
            return Err(io::Error::new(io::ErrorKind::Interrupted, format!("injected crash at boundary {n} ({what})")));
        }
        Ok(())
    }

    pub fn is_injected(err: &io::Error) -> bool {
        err.kind() == io::ErrorKind::Interrupted && err.to_string().starts_with("injected crash")
    }
}

/// Writes `bytes` to `path` via a temporary file and rename, with a crash
/// boundary before the write, halfway through it, and before the rename.
pub fn write_atomic(path: &Path, bytes: &[u8], faults: &FaultInjector) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    faults.boundary("create")?;
    let mut file = fs::File::create(&tmp)?;
    let half = bytes.len() / 2;
    file.write_all(&bytes[..half])?;
    faults.boundary("write")?;
    file.write_all(&bytes[half..])?;
    file.sync_all()?;
    drop(file);
    faults.boundary("rename")?;
    fs::rename(&tmp, path)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub name: String,
    pub file: String,
    pub crc32: u32,
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointManifest {
    pub format: u32,
    pub iteration: u64,
    pub entries: Vec<ManifestEntry>,
    /// Milliseconds since the Unix epoch; informational only.
    pub created_unix_ms: u128,
}

impl CheckpointManifest {
    pub fn to_text(&self) -> String {
        let mut out = format!("{MANIFEST_MAGIC} {}\niteration {}\ncreated_unix_ms {}\n", self.format, self.iteration, self.created_unix_ms);
        for e in &self.entries {
            out.push_str(&format!("component {} {} {:08x} {}\n", e.name, e.file, e.crc32, e.length));
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let mut next = |what: &str| lines.next().ok_or_else(|| format!("missing {what}"));
        let format = next("header")?
            .strip_prefix(MANIFEST_MAGIC)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or("bad header")?;
        if format != MANIFEST_FORMAT {
            return Err(format!("unsupported manifest format {format}"));
        }
        let field = |line: &str, key: &str| line.strip_prefix(key).map(str::trim).map(str::to_string).ok_or(format!("expected `{key}`"));
        let iteration = field(next("iteration")?, "iteration")?.parse().map_err(|_| "bad iteration")?;
        let created_unix_ms = field(next("timestamp")?, "created_unix_ms")?.parse().map_err(|_| "bad timestamp")?;
        let mut entries = Vec::new();
        loop {
            let line = next("end marker")?;
            if line == "end" {
                break;
            }
            let parts: Vec<&str> = line.split(' ').collect();
            let [tag, name, file, crc, length] = parts[..] else { return Err(format!("bad entry `{line}`")) };
            if tag != "component" {
                return Err(format!("bad entry `{line}`"));
            }
            entries.push(ManifestEntry {
                name: name.to_string(),
                file: file.to_string(),
                crc32: u32::from_str_radix(crc, 16).map_err(|_| "bad checksum")?,
                length: length.parse().map_err(|_| "bad length")?,
            });
        }
        Ok(Self { format, iteration, entries, created_unix_ms })
    }
}

/// A verified checkpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Restored {
    pub iteration: u64,
    pub components: BTreeMap<String, Vec<u8>>,
}

impl Restored {
    pub fn component(&self, name: &str) -> Option<&[u8]> {
        self.components.get(name).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone)]
pub struct Checkpointer {
    dir: PathBuf,
    keep_last: usize,
    faults: FaultInjector,
}

impl Checkpointer {
    /// Checkpoints live in `<base_dir>/checkpoints`, created on demand.
    pub fn new(base_dir: &Path, keep_last: usize) -> Result<Self, CheckpointError> {
        if keep_last == 0 {
            return Err(CheckpointError::KeepLast);
        }
        let dir = base_dir.join("checkpoints");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self { dir, keep_last, faults: FaultInjector::disabled() })
    }

    pub fn with_faults(mut self, faults: FaultInjector) -> Self {
        self.faults = faults;
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn keep_last(&self) -> usize {
        self.keep_last
    }

    fn manifest_path(&self, iteration: u64) -> PathBuf {
        self.dir.join(format!("manifest-{iteration}.txt"))
    }

    /// Iterations that have a manifest file, ascending. Says nothing about
    /// validity.
    pub fn manifest_iterations(&self) -> Result<Vec<u64>, CheckpointError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir).map_err(io_err(&self.dir))? {
            let entry = entry.map_err(io_err(&self.dir))?;
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            if let Some(iter) = name.strip_prefix("manifest-").and_then(|s| s.strip_suffix(".txt")) {
                if let Ok(i) = iter.parse() {
                    out.push(i);
                }
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Writes one checkpoint and returns its manifest path.
    pub fn save(&self, iteration: u64, components: &[(&str, &[u8])]) -> Result<PathBuf, CheckpointError> {
        if let Some(&latest) = self.manifest_iterations()?.last() {
            if iteration <= latest {
                return Err(CheckpointError::NotIncreasing { iteration, latest });
            }
        }
        let mut entries = Vec::with_capacity(components.len());
        for &(name, bytes) in components {
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(CheckpointError::InvalidName(name.to_string()));
            }
            let file = format!("{name}-{iteration}.bin");
            let path = self.dir.join(&file);
            write_atomic(&path, bytes, &self.faults).map_err(io_err(&path))?;
            entries.push(ManifestEntry { name: name.to_string(), file, crc32: crc32fast::hash(bytes), length: bytes.len() as u64 });
        }
        let created_unix_ms = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
        let manifest = CheckpointManifest { format: MANIFEST_FORMAT, iteration, entries, created_unix_ms };
        let path = self.manifest_path(iteration);
        write_atomic(&path, manifest.to_text().as_bytes(), &self.faults).map_err(io_err(&path))?;
        Ok(path)
    }

    /// Reads and verifies the checkpoint at `iteration`.
    pub fn load(&self, iteration: u64) -> Result<Restored, String> {
        let path = self.manifest_path(iteration);
        let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let manifest = CheckpointManifest::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if manifest.iteration != iteration {
            return Err(format!("{}: names iteration {}", path.display(), manifest.iteration));
        }
        let mut components = BTreeMap::new();
        for e in manifest.entries {
            let payload = self.dir.join(&e.file);
            let bytes = fs::read(&payload).map_err(|err| format!("{}: {err}", payload.display()))?;
            if bytes.len() as u64 != e.length || crc32fast::hash(&bytes) != e.crc32 {
                return Err(format!("{}: checksum or length mismatch", payload.display()));
            }
            components.insert(e.name, bytes);
        }
        Ok(Restored { iteration, components })
    }

    /// Newest checkpoint whose checksums verify; `None` if there are no
    /// manifests at all.
    pub fn restore_latest(&self) -> Result<Option<Restored>, CheckpointError> {
        let iterations = self.manifest_iterations()?;
        let mut reasons = Vec::new();
        for &iteration in iterations.iter().rev() {
            match self.load(iteration) {
                Ok(restored) => {
                    for reason in &reasons {
                        log::warn!("skipping corrupt checkpoint: {reason}");
                    }
                    return Ok(Some(restored));
                }
                Err(reason) => reasons.push(reason),
            }
        }
        if reasons.is_empty() {
            return Ok(None);
        }
        Err(CheckpointError::Unrecoverable { dir: self.dir.clone(), reasons: reasons.join("; ") })
    }

    /// Keeps the newest `keep_last` valid checkpoints and deletes everything
    /// older: manifests first, so a crash mid-collection never leaves a
    /// manifest pointing at removed payloads. Returns the deleted paths.
    /// Per-file failures are logged and skipped.
    pub fn garbage_collect(&self) -> Result<Vec<PathBuf>, CheckpointError> {
        let iterations = self.manifest_iterations()?;
        let mut valid = iterations.iter().rev().filter(|&&i| self.load(i).is_ok());
        let Some(&oldest_kept) = valid.nth(self.keep_last - 1) else {
            return Ok(Vec::new());
        };
        let mut doomed_manifests = Vec::new();
        let mut doomed_payloads = Vec::new();
        for entry in fs::read_dir(&self.dir).map_err(io_err(&self.dir))? {
            let entry = entry.map_err(io_err(&self.dir))?;
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            let Some(iteration) = file_iteration(name) else { continue };
            if iteration >= oldest_kept {
                continue;
            }
            if name.starts_with("manifest-") {
                doomed_manifests.push(entry.path());
            } else {
                doomed_payloads.push(entry.path());
            }
        }
        doomed_manifests.sort();
        doomed_payloads.sort();
        let mut deleted = Vec::new();
        for path in doomed_manifests.into_iter().chain(doomed_payloads) {
            match fs::remove_file(&path) {
                Ok(()) => deleted.push(path),
                Err(e) => log::warn!("could not delete {}: {e}", path.display()),
            }
        }
        Ok(deleted)
    }
}

/// Iteration encoded in a checkpoint file name (`x-<iter>.bin`,
/// `manifest-<iter>.txt`, or either with a `.tmp` suffix).
fn file_iteration(name: &str) -> Option<u64> {
    let name = name.strip_suffix(".tmp").unwrap_or(name);
    let stem = name.strip_suffix(".bin").or_else(|| name.strip_suffix(".txt"))?;
    stem.rsplit_once('-')?.1.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn components(i: u64) -> Vec<(String, Vec<u8>)> {
        vec![("agent".into(), vec![i as u8; 100 + i as usize]), ("runner".into(), i.to_le_bytes().to_vec())]
    }

    fn save(ck: &Checkpointer, i: u64) -> Result<PathBuf, CheckpointError> {
        let c = components(i);
        let refs: Vec<(&str, &[u8])> = c.iter().map(|(n, b)| (n.as_str(), b.as_slice())).collect();
        ck.save(i, &refs)
    }

    #[test]
    fn empty_directory_restores_nothing() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(Checkpointer::new(dir.path(), 3).unwrap().restore_latest().unwrap(), None);
    }

    #[test]
    fn round_trip_and_latest_wins() {
        let dir = tempfile::tempdir().unwrap();
        let ck = Checkpointer::new(dir.path(), 3).unwrap();
        save(&ck, 5).unwrap();
        save(&ck, 6).unwrap();
        let r = ck.restore_latest().unwrap().unwrap();
        assert_eq!(r.iteration, 6);
        for (name, bytes) in components(6) {
            assert_eq!(r.component(&name).unwrap(), bytes.as_slice());
        }
        assert!(matches!(save(&ck, 6), Err(CheckpointError::NotIncreasing { .. })));
    }

    #[test]
    fn manifest_text_round_trips() {
        let m = CheckpointManifest {
            format: MANIFEST_FORMAT,
            iteration: 12,
            entries: vec![ManifestEntry { name: "agent".into(), file: "agent-12.bin".into(), crc32: 0xdead_beef, length: 9 }],
            created_unix_ms: 1234,
        };
        assert_eq!(CheckpointManifest::parse(&m.to_text()).unwrap(), m);
        assert!(CheckpointManifest::parse(&m.to_text().replace("end\n", "")).is_err());
    }

    #[test]
    fn corrupt_newest_falls_back() {
        let dir = tempfile::tempdir().unwrap();
        let ck = Checkpointer::new(dir.path(), 3).unwrap();
        save(&ck, 1).unwrap();
        save(&ck, 2).unwrap();
        let payload = ck.dir().join("agent-2.bin");
        let mut bytes = fs::read(&payload).unwrap();
        bytes[3] ^= 0x40;
        fs::write(&payload, bytes).unwrap();
        assert_eq!(ck.restore_latest().unwrap().unwrap().iteration, 1);
    }

    #[test]
    fn all_corrupt_is_unrecoverable() {
        let dir = tempfile::tempdir().unwrap();
        let ck = Checkpointer::new(dir.path(), 3).unwrap();
        save(&ck, 1).unwrap();
        fs::write(ck.dir().join("runner-1.bin"), b"garbage").unwrap();
        assert!(matches!(ck.restore_latest(), Err(CheckpointError::Unrecoverable { .. })));
    }

    #[test]
    fn garbage_collection_counts() {
        let dir = tempfile::tempdir().unwrap();
        let ck = Checkpointer::new(dir.path(), 3).unwrap();
        save(&ck, 0).unwrap();
        assert!(ck.garbage_collect().unwrap().is_empty());
        for i in 1..10 {
            save(&ck, i).unwrap();
        }
        let deleted = ck.garbage_collect().unwrap();
        assert_eq!(deleted.iter().filter(|p| p.to_str().unwrap().contains("manifest-")).count(), 7);
        assert_eq!(deleted.len(), 21);
        assert_eq!(ck.manifest_iterations().unwrap(), vec![7, 8, 9]);
        for i in 7..10 {
            assert!(ck.load(i).is_ok());
        }
    }

    #[test]
    fn every_crash_point_leaves_previous_checkpoint() {
        let probe = tempfile::tempdir().unwrap();
        let counter = FaultInjector::counting();
        let ck = Checkpointer::new(probe.path(), 3).unwrap().with_faults(counter.clone());
        save(&ck, 1).unwrap();
        let per_save = counter.count();
        assert_eq!(per_save, 9);
        for boundary in 1..=per_save {
            let dir = tempfile::tempdir().unwrap();
            save(&Checkpointer::new(dir.path(), 3).unwrap(), 1).unwrap();
            let faulty = Checkpointer::new(dir.path(), 3).unwrap().with_faults(FaultInjector::crash_at(boundary));
            let err = save(&faulty, 2).unwrap_err();
            assert!(matches!(err, CheckpointError::Io { ref source, .. } if FaultInjector::is_injected(source)));
            let r = faulty.restore_latest().unwrap().unwrap();
            assert_eq!(r.iteration, 1, "boundary {boundary}");
            assert!(faulty.garbage_collect().is_ok());
            // The rerun after a crash overwrites any stale temporaries.
            let clean = Checkpointer::new(dir.path(), 3).unwrap();
            save(&clean, 2).unwrap();
            assert_eq!(clean.restore_latest().unwrap().unwrap().iteration, 2);
        }
    }

    #[test]
    fn rejects_bad_names_and_zero_retention() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Checkpointer::new(dir.path(), 0), Err(CheckpointError::KeepLast)));
        let ck = Checkpointer::new(dir.path(), 1).unwrap();
        assert!(matches!(ck.save(0, &[("a-b", b"x")]), Err(CheckpointError::InvalidName(_))));
    }

    #[test]
    fn file_iterations_parse() {
        assert_eq!(file_iteration("manifest-12.txt"), Some(12));
        assert_eq!(file_iteration("agent-3.bin.tmp"), Some(3));
        assert_eq!(file_iteration("notes.md"), None);
    }
}
