//! Append-only per-channel sample logs.
//!
//! Each channel gets `ch<id>.log` holding one record per line:
//! `<t_us> <channel> <gain> <raw> <value>`. Gain is 0 for compass samples.
//! A record is visible to queries only after its line was written and
//! flushed.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t_us: u64,
    pub channel: u8,
    pub gain: u32,
    pub raw: u16,
    pub value: f64,
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {}",
            self.t_us, self.channel, self.gain, self.raw, self.value
        )
    }
}

impl FromStr for Record {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let f: Vec<&str> = s.split_ascii_whitespace().collect();
        if f.len() != 5 {
            return Err(format!("expected 5 fields, got {}", f.len()));
        }
        let bad = |name: &str| format!("bad {name} field {s:?}");
        Ok(Record {
            t_us: f[0].parse().map_err(|_| bad("t_us"))?,
            channel: f[1].parse().map_err(|_| bad("channel"))?,
            gain: f[2].parse().map_err(|_| bad("gain"))?,
            raw: f[3].parse().map_err(|_| bad("raw"))?,
            value: f[4].parse().map_err(|_| bad("value"))?,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("channel {channel}: {source}")]
    Io {
        channel: u8,
        #[source]
        source: io::Error,
    },
    #[error("channel {channel}: timestamp {t_us} not after {last_us}")]
    NonMonotonic { channel: u8, t_us: u64, last_us: u64 },
    #[error("{path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Default)]
struct ChannelLog {
    records: Vec<Record>,
    file: Option<BufWriter<File>>,
}

#[derive(Debug, Default)]
pub struct SampleStore {
    dir: Option<PathBuf>,
    logs: BTreeMap<u8, ChannelLog>,
    failures: u64,
    last_error: Option<String>,
    skipped_lines: u64,
}

pub fn log_file_name(channel: u8) -> String {
    format!("ch{channel}.log")
}

impl SampleStore {
    /// Store without files; used for headless runs.
    pub fn memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a store directory and loads its logs.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|source| StoreError::Open {
            path: dir.clone(),
            source,
        })?;
        let mut store = Self {
            dir: Some(dir.clone()),
            ..Self::default()
        };
        let entries = fs::read_dir(&dir).map_err(|source| StoreError::Open {
            path: dir.clone(),
            source,
        })?;
        let mut found: Vec<(u8, PathBuf)> = entries
            .filter_map(Result::ok)
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                let id = name.strip_prefix("ch")?.strip_suffix(".log")?.parse().ok()?;
                Some((id, e.path()))
            })
            .collect();
        found.sort();
        for (id, path) in found {
            let file = File::open(&path).map_err(|source| StoreError::Open {
                path: path.clone(),
                source,
            })?;
            let log = store.logs.entry(id).or_default();
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|source| StoreError::Open {
                    path: path.clone(),
                    source,
                })?;
                match line.parse::<Record>() {
                    Ok(r) if r.channel == id && log.records.last().is_none_or(|l| r.t_us > l.t_us) => {
                        log.records.push(r)
                    }
                    // torn tail or foreign line: keep the valid prefix readable
                    _ => store.skipped_lines += 1,
                }
            }
        }
        Ok(store)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn persist(&mut self, rec: Record) -> Result<(), StoreError> {
        let res = self.try_persist(rec);
        if let Err(e) = &res {
            self.failures += 1;
            self.last_error = Some(e.to_string());
        }
        res
    }

    fn try_persist(&mut self, rec: Record) -> Result<(), StoreError> {
        let log = self.logs.entry(rec.channel).or_default();
        if let Some(last) = log.records.last() {
            if rec.t_us <= last.t_us {
                return Err(StoreError::NonMonotonic {
                    channel: rec.channel,
                    t_us: rec.t_us,
                    last_us: last.t_us,
                });
            }
        }
        if let Some(dir) = &self.dir {
            let io_err = |source| StoreError::Io {
                channel: rec.channel,
                source,
            };
            if log.file.is_none() {
                let f = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(dir.join(log_file_name(rec.channel)))
                    .map_err(io_err)?;
                log.file = Some(BufWriter::new(f));
            }
            let w = log.file.as_mut().expect("opened above");
            writeln!(w, "{rec}").and_then(|_| w.flush()).map_err(io_err)?;
        }
        log.records.push(rec);
        Ok(())
    }

    /// Records with `from_us <= t_us <= to_us`.
    pub fn query(&self, channel: u8, from_us: u64, to_us: u64) -> Vec<Record> {
        let Some(log) = self.logs.get(&channel) else {
            return Vec::new();
        };
        let lo = log.records.partition_point(|r| r.t_us < from_us);
        let hi = log.records.partition_point(|r| r.t_us <= to_us);
        log.records[lo..hi.max(lo)].to_vec()
    }

    pub fn all(&self, channel: u8) -> &[Record] {
        self.logs.get(&channel).map_or(&[], |l| l.records.as_slice())
    }

    pub fn channels(&self) -> impl Iterator<Item = u8> + '_ {
        self.logs.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.logs.values().map(|l| l.records.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn latest_t_us(&self) -> Option<u64> {
        self.logs.values().filter_map(|l| l.records.last()).map(|r| r.t_us).max()
    }

    pub fn failures(&self) -> u64 {
        self.failures
    }

    pub fn last_error(&self) -> Option<&str> {
        self.last_error.as_deref()
    }

    /// Lines ignored while loading existing logs.
    pub fn skipped_lines(&self) -> u64 {
        self.skipped_lines
    }

    /// Flushes and fsyncs every open log.
    pub fn sync(&mut self) -> io::Result<()> {
        for log in self.logs.values_mut() {
            if let Some(w) = log.file.as_mut() {
                w.flush()?;
                w.get_ref().sync_all()?;
            }
        }
        Ok(())
    }
}
