//! Append-only JSONL store keyed by row identity.
//!
//! Rows are appended one JSON object per line and flushed immediately. On open the
//! file is replayed; a torn final line from an interrupted write is truncated away.
//! When a key occurs more than once the latest row wins.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::hash::Hash;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub trait Keyed {
    type Key: Eq + Hash + Clone;

    fn key(&self) -> Self::Key;
    fn is_valid(&self) -> bool;
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

struct State<T: Keyed> {
    file: File,
    rows: Vec<T>,
    index: HashMap<T::Key, usize>,
    /// Lines in the file, including superseded rows.
    lines: usize,
}

pub struct JsonlStore<T: Keyed> {
    path: PathBuf,
    state: Mutex<State<T>>,
}

impl<T> JsonlStore<T>
where
    T: Keyed + Serialize + DeserializeOwned + Clone,
{
    /// Opens (or creates) the store and replays existing rows.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_owned();
        let io = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let mut rows: Vec<T> = Vec::new();
        let mut index = HashMap::new();
        let mut lines = 0;
        let mut good_len: u64 = 0;
        if path.exists() {
            let mut reader = BufReader::new(File::open(&path).map_err(io)?);
            let mut buf = String::new();
            let mut line_no = 0;
            loop {
                buf.clear();
                let n = reader.read_line(&mut buf).map_err(io)?;
                if n == 0 {
                    break;
                }
                line_no += 1;
                if !buf.ends_with('\n') {
                    tracing::warn!(path = %path.display(), line = line_no, "dropping torn final line");
                    break;
                }
                if !buf.trim().is_empty() {
                    let row: T =
                        serde_json::from_str(buf.trim_end()).map_err(|e| StoreError::Corrupt {
                            path: path.clone(),
                            line: line_no,
                            message: e.to_string(),
                        })?;
                    upsert(&mut rows, &mut index, row);
                    lines += 1;
                }
                good_len += n as u64;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        if file.metadata().map_err(io)?.len() != good_len {
            file.set_len(good_len).map_err(io)?;
        }
        Ok(Self {
            path,
            state: Mutex::new(State {
                file,
                rows,
                index,
                lines,
            }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends a row and flushes it to disk.
    pub fn append(&self, row: T) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(&row).expect("row serializes");
        line.push(b'\n');
        let mut st = self.state.lock().expect("store lock");
        st.file
            .write_all(&line)
            .and_then(|_| st.file.flush())
            .map_err(|source| StoreError::Io {
                path: self.path.clone(),
                source,
            })?;
        st.lines += 1;
        let State { rows, index, .. } = &mut *st;
        upsert(rows, index, row);
        Ok(())
    }

    pub fn get(&self, key: &T::Key) -> Option<T> {
        let st = self.state.lock().expect("store lock");
        st.index.get(key).map(|&i| st.rows[i].clone())
    }

    pub fn has_valid(&self, key: &T::Key) -> bool {
        self.get(key).is_some_and(|r| r.is_valid())
    }

    /// Current rows, one per key, in first-insertion order.
    pub fn rows(&self) -> Vec<T> {
        self.state.lock().expect("store lock").rows.clone()
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("store lock").rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rewrites the file with one row per key if superseded rows are present.
    pub fn compact(&self) -> Result<(), StoreError> {
        let mut st = self.state.lock().expect("store lock");
        if st.lines == st.rows.len() {
            return Ok(());
        }
        let io = |source| StoreError::Io {
            path: self.path.clone(),
            source,
        };
        let tmp = self.path.with_extension("jsonl.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp).map_err(io)?);
            for row in &st.rows {
                serde_json::to_writer(&mut w, row).expect("row serializes");
                w.write_all(b"\n").map_err(io)?;
            }
            w.flush().map_err(io)?;
            w.get_ref().sync_all().map_err(io)?;
        }
        std::fs::rename(&tmp, &self.path).map_err(io)?;
        st.file = OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(io)?;
        st.lines = st.rows.len();
        Ok(())
    }

    /// Writes the current rows as JSONL.
    pub fn export<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut w = BufWriter::new(w);
        for row in self.rows() {
            serde_json::to_writer(&mut w, &row)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}

fn upsert<T: Keyed>(rows: &mut Vec<T>, index: &mut HashMap<T::Key, usize>, row: T) {
    match index.get(&row.key()) {
        Some(&i) => rows[i] = row,
        None => {
            index.insert(row.key(), rows.len());
            rows.push(row);
        }
    }
}

/// Reads all rows of a JSONL file, latest row per key.
pub fn read_jsonl<T>(path: &Path) -> Result<Vec<T>, StoreError>
where
    T: Keyed + DeserializeOwned,
{
    let file = File::open(path).map_err(|source| StoreError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut rows = Vec::new();
    let mut index = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| StoreError::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row: T = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        upsert(&mut rows, &mut index, row);
    }
    Ok(rows)
}
