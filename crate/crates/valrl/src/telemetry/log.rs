//! Append-only binary experiment log.
//!
//! ```text
//! file   : magic "VRLLOG01" | frame(header) | frame(record)*
//! frame  : payload_len u32 | crc32(payload) u32 | payload
//! ```
//!
//! Payloads are named-array archives. A frame that is short or fails its
//! checksum can only be the torn tail of an interrupted append; readers stop
//! before it and writers truncate it away.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use valrl_core::codec::Archive;

use super::TelemetryError;
use crate::checkpoint::FaultInjector;

pub const LOG_MAGIC: [u8; 8] = *b"VRLLOG01";
pub const LOG_FILE: &str = "log.bin";

/// Returns, lengths and frame count of one phase of an iteration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhaseStatistics {
    pub returns: Vec<f64>,
    pub lengths: Vec<u64>,
    pub frames: u64,
}

impl PhaseStatistics {
    pub fn episodes(&self) -> usize {
        self.returns.len()
    }

    /// `None` when no episode finished.
    pub fn mean_return(&self) -> Option<f64> {
        mean(&self.returns)
    }

    pub fn mean_length(&self) -> Option<f64> {
        let lengths: Vec<f64> = self.lengths.iter().map(|&l| l as f64).collect();
        mean(&lengths)
    }

    pub fn push(&mut self, episode_return: f64, length: u64) {
        self.returns.push(episode_return);
        self.lengths.push(length);
        self.frames += length;
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationStatistics {
    pub iteration: u64,
    pub train: PhaseStatistics,
    /// Present iff the schedule is `train_and_eval`.
    pub eval: Option<PhaseStatistics>,
    /// Not persisted in the log, which must be reproducible bit for bit;
    /// decoded records carry zero. Timings go to `timings.csv`.
    pub wall_clock: Duration,
}

impl IterationStatistics {
    fn to_archive(&self) -> Result<Archive, valrl_core::Error> {
        let mut a = Archive::new();
        a.push_u64("iteration", vec![self.iteration])?;
        let mut phase = |prefix: &str, p: &PhaseStatistics| -> Result<(), valrl_core::Error> {
            a.push_f64(format!("{prefix}_returns"), vec![p.returns.len()], p.returns.clone())?;
            a.push_u64(format!("{prefix}_lengths"), p.lengths.clone())?;
            a.push_u64(format!("{prefix}_frames"), vec![p.frames])
        };
        phase("train", &self.train)?;
        if let Some(eval) = &self.eval {
            phase("eval", eval)?;
        }
        Ok(a)
    }

    fn from_archive(a: &Archive) -> Result<Self, valrl_core::Error> {
        let phase = |prefix: &str| -> Result<PhaseStatistics, valrl_core::Error> {
            Ok(PhaseStatistics {
                returns: a.f64s(&format!("{prefix}_returns"))?.to_vec(),
                lengths: a.u64s(&format!("{prefix}_lengths"))?.to_vec(),
                frames: a.u64s_exact(&format!("{prefix}_frames"), 1)?[0],
            })
        };
        Ok(Self {
            iteration: a.u64s_exact("iteration", 1)?[0],
            train: phase("train")?,
            eval: if a.get("eval_returns").is_ok() { Some(phase("eval")?) } else { None },
            wall_clock: Duration::ZERO,
        })
    }
}

/// Identifies the experiment a log belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogHeader {
    pub run_id: String,
    /// Fingerprint of the effective configuration.
    pub config_fingerprint: u64,
    /// The same with the seed binding left out; equal across the seeds of
    /// one setting.
    pub seedless_fingerprint: u64,
    pub environment: String,
    pub agent: String,
    /// Effective configuration dump; parseable as a config file.
    pub config_text: String,
}

impl LogHeader {
    fn to_archive(&self) -> Result<Archive, valrl_core::Error> {
        let mut a = Archive::new();
        a.push_u8("run_id", self.run_id.as_bytes().to_vec())?;
        a.push_u64("fingerprints", vec![self.config_fingerprint, self.seedless_fingerprint])?;
        a.push_u8("environment", self.environment.as_bytes().to_vec())?;
        a.push_u8("agent", self.agent.as_bytes().to_vec())?;
        a.push_u8("config", self.config_text.as_bytes().to_vec())?;
        Ok(a)
    }

    fn from_archive(a: &Archive) -> Result<Self, valrl_core::Error> {
        let text = |name: &str| -> Result<String, valrl_core::Error> {
            String::from_utf8(a.u8s(name)?.to_vec()).map_err(|_| valrl_core::Error::Decode(format!("`{name}` is not UTF-8")))
        };
        let fingerprints = a.u64s_exact("fingerprints", 2)?;
        Ok(Self {
            run_id: text("run_id")?,
            config_fingerprint: fingerprints[0],
            seedless_fingerprint: fingerprints[1],
            environment: text("environment")?,
            agent: text("agent")?,
            config_text: text("config")?,
        })
    }
}

fn frame(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + 8);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

/// Splits `bytes` (after the magic) into complete frames. Returns the
/// payloads and the byte offset where valid data ends.
fn split_frames(bytes: &[u8]) -> (Vec<&[u8]>, usize) {
    let mut frames = Vec::new();
    let mut pos = 0;
    while bytes.len() - pos >= 8 {
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap());
        let Some(payload) = bytes.get(pos + 8..pos + 8 + len) else { break };
        if crc32fast::hash(payload) != crc {
            break;
        }
        frames.push(payload);
        pos += 8 + len;
    }
    (frames, pos)
}

/// A fully read log.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentLog {
    pub path: PathBuf,
    pub header: LogHeader,
    pub records: Vec<IterationStatistics>,
    /// Bytes after the last complete record (a torn append).
    pub torn_bytes: usize,
}

impl ExperimentLog {
    pub fn read(path: &Path) -> Result<Self, TelemetryError> {
        let bytes = fs::read(path).map_err(|e| TelemetryError::io(path, e))?;
        let corrupt = |reason: String| TelemetryError::Corrupt { path: path.to_path_buf(), reason };
        let body = bytes.strip_prefix(&LOG_MAGIC[..]).ok_or_else(|| corrupt("missing log magic".into()))?;
        let (frames, valid) = split_frames(body);
        let (header, records) = frames.split_first().ok_or_else(|| corrupt("missing header".into()))?;
        let header = Archive::decode(header).and_then(|a| LogHeader::from_archive(&a)).map_err(|e| corrupt(e.to_string()))?;
        let mut out = Vec::with_capacity(records.len());
        for payload in records {
            let record = Archive::decode(payload).and_then(|a| IterationStatistics::from_archive(&a)).map_err(|e| corrupt(e.to_string()))?;
            let expected = out.len() as u64;
            if record.iteration != expected {
                return Err(TelemetryError::Gap { path: path.to_path_buf(), expected, found: record.iteration });
            }
            out.push(record);
        }
        let torn_bytes = body.len() - valid;
        if torn_bytes > 0 {
            log::warn!("{}: ignoring {torn_bytes} bytes of an incomplete record", path.display());
        }
        Ok(Self { path: path.to_path_buf(), header, records: out, torn_bytes })
    }

    /// The `Component.param` binding recorded in the header's configuration.
    pub fn binding(&self, key: &str) -> Option<String> {
        let config = crate::config::parse_config(&self.header.config_text, &self.path.display().to_string()).ok()?;
        let value = config.lookup_key(key)?;
        Some(match value {
            crate::config::Literal::Str(s) | crate::config::Literal::Ident(s) => s.clone(),
            other => other.to_string(),
        })
    }

    /// CSV mirror: one row per episode.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,phase,episode,return,length\n");
        for r in &self.records {
            let phases = std::iter::once(("train", &r.train)).chain(r.eval.as_ref().map(|e| ("eval", e)));
            for (name, phase) in phases {
                for (i, (ret, len)) in phase.returns.iter().zip(&phase.lengths).enumerate() {
                    out.push_str(&format!("{},{name},{i},{ret},{len}\n", r.iteration));
                }
            }
        }
        out
    }
}

/// Appends iteration records to a log file.
#[derive(Debug)]
pub struct LogWriter {
    path: PathBuf,
    file: File,
    next_iteration: u64,
    faults: FaultInjector,
}

impl LogWriter {
    /// Opens `path` for appending, keeping its first `keep_records` records
    /// and discarding anything after them, including a torn tail. A missing
    /// file is created with `header`. An existing file must carry a header
    /// with the same configuration fingerprint; it is kept as is.
    pub fn open(path: &Path, header: &LogHeader, keep_records: u64, faults: FaultInjector) -> Result<Self, TelemetryError> {
        if !path.exists() {
            let mut bytes = LOG_MAGIC.to_vec();
            let payload = header.to_archive().map_err(|e| TelemetryError::Encode(e.to_string()))?.encode();
            bytes.extend(frame(&payload));
            crate::checkpoint::write_atomic(path, &bytes, &faults).map_err(|e| TelemetryError::io(path, e))?;
            if keep_records > 0 {
                return Err(TelemetryError::Mismatch(format!("{}: resuming after iteration {} but the log is missing", path.display(), keep_records - 1)));
            }
        }
        let existing = ExperimentLog::read(path)?;
        if existing.header.config_fingerprint != header.config_fingerprint {
            return Err(TelemetryError::Mismatch(format!(
                "{} belongs to a different configuration (fingerprint {:016x}, expected {:016x})",
                path.display(),
                existing.header.config_fingerprint,
                header.config_fingerprint
            )));
        }
        if (existing.records.len() as u64) < keep_records {
            return Err(TelemetryError::Mismatch(format!(
                "{}: holds {} records but the checkpoint needs {keep_records}",
                path.display(),
                existing.records.len()
            )));
        }
        let bytes = fs::read(path).map_err(|e| TelemetryError::io(path, e))?;
        let (frames, _) = split_frames(&bytes[LOG_MAGIC.len()..]);
        let keep_len = LOG_MAGIC.len() + frames[..=keep_records as usize].iter().map(|f| f.len() + 8).sum::<usize>();
        let file = OpenOptions::new().write(true).open(path).map_err(|e| TelemetryError::io(path, e))?;
        file.set_len(keep_len as u64).map_err(|e| TelemetryError::io(path, e))?;
        let mut writer = Self { path: path.to_path_buf(), file, next_iteration: keep_records, faults };
        writer.seek_end()?;
        Ok(writer)
    }

    fn seek_end(&mut self) -> Result<(), TelemetryError> {
        use std::io::Seek;
        self.file.seek(io::SeekFrom::End(0)).map_err(|e| TelemetryError::io(&self.path, e))?;
        Ok(())
    }

    pub fn next_iteration(&self) -> u64 {
        self.next_iteration
    }

    /// Durably appends one record; its index must follow the last one.
    pub fn append(&mut self, stats: &IterationStatistics) -> Result<(), TelemetryError> {
        if stats.iteration != self.next_iteration {
            return Err(TelemetryError::Gap { path: self.path.clone(), expected: self.next_iteration, found: stats.iteration });
        }
        let payload = stats.to_archive().map_err(|e| TelemetryError::Encode(e.to_string()))?.encode();
        let bytes = frame(&payload);
        let half = bytes.len() / 2;
        let io = |e| TelemetryError::io(&self.path, e);
        self.faults.boundary("log append").map_err(io)?;
        self.file.write_all(&bytes[..half]).map_err(io)?;
        self.faults.boundary("log append tail").map_err(io)?;
        self.file.write_all(&bytes[half..]).map_err(io)?;
        self.file.sync_data().map_err(io)?;
        self.next_iteration += 1;
        Ok(())
    }
}
