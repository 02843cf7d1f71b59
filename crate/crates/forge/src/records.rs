//! Line-delimited JSON record I/O with line-numbered diagnostics, plus
//! sharded output whose concatenation is byte-identical to the unsharded
//! stream.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("shard size must be >= 1")]
    BadShardSize,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Reads records from line-delimited JSON. Blank lines are ignored; any
/// malformed line fails with its 1-based line number.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, RecordError> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| RecordError::Malformed {
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn read_jsonl_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, RecordError> {
    read_jsonl(BufReader::new(File::open(path)?))
}

/// Writes records as line-delimited JSON, one record per line.
pub fn write_jsonl<'a, T, W, I>(writer: &mut W, records: I) -> Result<(), RecordError>
where
    T: Serialize + 'a,
    W: Write,
    I: IntoIterator<Item = &'a T>,
{
    for record in records {
        let json = serde_json::to_string(record).map_err(|e| RecordError::Malformed {
            line: 0,
            message: e.to_string(),
        })?;
        writer.write_all(json.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_jsonl_file<'a, T: Serialize + 'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a T>,
) -> Result<(), RecordError> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_jsonl(&mut writer, records)?;
    writer.flush()?;
    Ok(())
}

/// Splits a record stream across `{stem}-{index:05}.jsonl` files of at most
/// `shard_size` records, in order.
pub struct ShardWriter {
    dir: PathBuf,
    stem: String,
    shard_size: usize,
    current: Option<BufWriter<File>>,
    in_shard: usize,
    next_index: usize,
    paths: Vec<PathBuf>,
}

impl ShardWriter {
    pub fn new(dir: &Path, stem: &str, shard_size: usize) -> Result<Self, RecordError> {
        if shard_size == 0 {
            return Err(RecordError::BadShardSize);
        }
        Ok(ShardWriter {
            dir: dir.to_path_buf(),
            stem: stem.to_string(),
            shard_size,
            current: None,
            in_shard: 0,
            next_index: 0,
            paths: Vec::new(),
        })
    }

    fn roll(&mut self) -> Result<&mut BufWriter<File>, RecordError> {
        if self.current.is_none() || self.in_shard == self.shard_size {
            if let Some(mut done) = self.current.take() {
                done.flush()?;
            }
            let path = self
                .dir
                .join(format!("{}-{:05}.jsonl", self.stem, self.next_index));
            self.current = Some(BufWriter::new(File::create(&path)?));
            self.paths.push(path);
            self.next_index += 1;
            self.in_shard = 0;
        }
        Ok(self.current.as_mut().expect("shard open"))
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<(), RecordError> {
        let json = serde_json::to_string(record).map_err(|e| RecordError::Malformed {
            line: 0,
            message: e.to_string(),
        })?;
        let writer = self.roll()?;
        writer.write_all(json.as_bytes())?;
        writer.write_all(b"\n")?;
        self.in_shard += 1;
        Ok(())
    }

    /// Flushes and returns the shard paths in write order.
    pub fn finish(mut self) -> Result<Vec<PathBuf>, RecordError> {
        if let Some(mut writer) = self.current.take() {
            writer.flush()?;
        }
        Ok(self.paths)
    }
}

/// Shard files for `stem` under `dir`, sorted by name (write order, given
/// the zero-padded index).
pub fn shard_paths(dir: &Path, stem: &str) -> Result<Vec<PathBuf>, RecordError> {
    let prefix = format!("{stem}-");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|path| {
            path.file_name()
                .and_then(|n| n.to_str())
                .map(|name| name.starts_with(&prefix) && name.ends_with(".jsonl"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    Ok(paths)
}

/// Reads records back from shards in path order.
pub fn read_shards<T: DeserializeOwned>(paths: &[PathBuf]) -> Result<Vec<T>, RecordError> {
    let mut records = Vec::new();
    for path in paths {
        records.extend(read_jsonl_file(path)?);
    }
    Ok(records)
}
