//! Sorted spill runs and their k-way merge.
//!
//! Run file layout (unstable): repeated `[u32 LE key len][key][u32 LE value len][value]`,
//! entries sorted by `(key, value)` bytes.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub(crate) type Entry = (Vec<u8>, Vec<u8>);

pub(crate) fn write_run(path: &Path, entries: &[Entry]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (k, v) in entries {
        w.write_all(&(k.len() as u32).to_le_bytes())
            .and_then(|_| w.write_all(k))
            .and_then(|_| w.write_all(&(v.len() as u32).to_le_bytes()))
            .and_then(|_| w.write_all(v))
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) struct RunReader {
    path: PathBuf,
    reader: BufReader<File>,
}

impl RunReader {
    pub(crate) fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            reader: BufReader::new(file),
        })
    }

    fn read_block(&mut self) -> Result<Option<Vec<u8>>> {
        let mut len = [0u8; 4];
        match self.reader.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(Error::io(&self.path, e)),
        }
        let mut buf = vec![0u8; u32::from_le_bytes(len) as usize];
        self.reader
            .read_exact(&mut buf)
            .map_err(|e| Error::io(&self.path, e))?;
        Ok(Some(buf))
    }

    fn next_entry(&mut self) -> Result<Option<Entry>> {
        let Some(k) = self.read_block()? else {
            return Ok(None);
        };
        let v = self
            .read_block()?
            .ok_or_else(|| Error::Engine(format!("{}: truncated spill run", self.path.display())))?;
        Ok(Some((k, v)))
    }
}

enum Source {
    Memory(std::vec::IntoIter<Entry>),
    Run(RunReader),
}

impl Source {
    fn next_entry(&mut self) -> Result<Option<Entry>> {
        match self {
            Source::Memory(it) => Ok(it.next()),
            Source::Run(r) => r.next_entry(),
        }
    }
}

/// Merges sorted in-memory entries with sorted spill runs into one sorted stream.
pub(crate) struct MergedRuns {
    sources: Vec<Source>,
    heap: BinaryHeap<Reverse<(Entry, usize)>>,
}

impl MergedRuns {
    pub(crate) fn new(memory: Vec<Entry>, runs: &[PathBuf]) -> Result<Self> {
        let mut sources = vec![Source::Memory(memory.into_iter())];
        for path in runs {
            sources.push(Source::Run(RunReader::open(path)?));
        }
        let mut heap = BinaryHeap::with_capacity(sources.len());
        for (i, s) in sources.iter_mut().enumerate() {
            if let Some(e) = s.next_entry()? {
                heap.push(Reverse((e, i)));
            }
        }
        Ok(Self { sources, heap })
    }

    pub(crate) fn next_entry(&mut self) -> Result<Option<Entry>> {
        let Some(Reverse((entry, i))) = self.heap.pop() else {
            return Ok(None);
        };
        if let Some(e) = self.sources[i].next_entry()? {
            self.heap.push(Reverse((e, i)));
        }
        Ok(Some(entry))
    }

    /// Pops every entry sharing the smallest remaining key.
    pub(crate) fn next_group(&mut self) -> Result<Option<(Vec<u8>, Vec<Vec<u8>>)>> {
        let Some((key, first)) = self.next_entry()? else {
            return Ok(None);
        };
        let mut values = vec![first];
        while let Some(Reverse(((k, _), _))) = self.heap.peek() {
            if *k != key {
                break;
            }
            let (_, v) = self.next_entry()?.expect("peeked entry");
            values.push(v);
        }
        Ok(Some((key, values)))
    }
}
