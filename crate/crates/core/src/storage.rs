//! Append-only, checksummed JSON-Lines logs.
//!
//! Each line is `{"sum":"<16 hex>","rec":<record>}` where `sum` is the first
//! eight bytes of SHA-256 over the serialized record. Lines that fail to
//! parse or verify (a torn final write, for example) are skipped on load.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

fn checksum(bytes: &[u8]) -> String {
    Sha256::digest(bytes)[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct LineOut<'a> {
    sum: String,
    rec: &'a RawValue,
}

#[derive(Deserialize)]
struct LineIn<'a> {
    sum: String,
    #[serde(borrow)]
    rec: &'a RawValue,
}

fn encode<T: Serialize>(record: &T) -> std::io::Result<Vec<u8>> {
    let rec = serde_json::to_string(record)?;
    let raw = RawValue::from_string(rec)?;
    let mut line = serde_json::to_vec(&LineOut { sum: checksum(raw.get().as_bytes()), rec: &raw })?;
    line.push(b'\n');
    Ok(line)
}

#[derive(Debug)]
pub struct LoadedLog<T> {
    pub records: Vec<T>,
    pub skipped: usize,
}

#[derive(Debug)]
pub struct EventLog<T> {
    path: PathBuf,
    _marker: PhantomData<fn(T) -> T>,
}

impl<T: Serialize + DeserializeOwned> EventLog<T> {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        EventLog { path: path.into(), _marker: PhantomData }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &T) -> std::io::Result<()> {
        let line = encode(record)?;
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        f.write_all(&line)?;
        f.sync_data()
    }

    pub fn load(&self) -> std::io::Result<LoadedLog<T>> {
        let mut out = LoadedLog { records: Vec::new(), skipped: 0 };
        let file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(e),
        };
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = match line {
                Ok(l) => l,
                Err(e) if e.kind() == std::io::ErrorKind::InvalidData => {
                    out.skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if line.trim().is_empty() {
                continue;
            }
            let parsed = serde_json::from_str::<LineIn<'_>>(&line)
                .ok()
                .filter(|l| l.sum == checksum(l.rec.get().as_bytes()))
                .and_then(|l| serde_json::from_str::<T>(l.rec.get()).ok());
            match parsed {
                Some(r) => out.records.push(r),
                None => {
                    tracing::warn!(path = %self.path.display(), line = i + 1, "skipping corrupt log line");
                    out.skipped += 1;
                }
            }
        }
        Ok(out)
    }

    /// Atomically replaces the log with `records`.
    pub fn rewrite(&self, records: &[T]) -> std::io::Result<()> {
        let tmp = self.path.with_extension("compact.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            for r in records {
                w.write_all(&encode(r)?)?;
            }
            w.flush()?;
            w.get_ref().sync_all()?;
        }
        std::fs::rename(tmp, &self.path)
    }
}
