//! Local partitioned map / shuffle / reduce.
//!
//! Every stage output is canonical: map output is routed by key, each key
//! group's payloads are sorted by their encoded bytes before the reduce
//! function sees them, and the stage output is sorted by encoded bytes. The
//! result is therefore independent of partition count, worker count and
//! spill behaviour.

mod codec;
mod spill;

use std::fmt::Debug;
use std::path::PathBuf;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use codec::Codec;
use spill::{Entry, MergedRuns};

/// Default in-memory shuffle budget before spilling to disk.
pub const DEFAULT_MEMORY_BUDGET: usize = 512 * 1024 * 1024;

/// Default number of shuffle partitions per stage.
pub const DEFAULT_PARTITIONS: usize = 16;

const MAP_CHUNK: usize = 1024;
const MAP_BATCH: usize = 64 * MAP_CHUNK;
// Rough per-entry bookkeeping cost (two Vec headers plus the tuple).
const ENTRY_OVERHEAD: usize = 56;

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub workers: usize,
    pub partitions: usize,
    pub memory_budget: usize,
    pub tmp_dir: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            workers: std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
            partitions: DEFAULT_PARTITIONS,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            tmp_dir: None,
        }
    }
}

impl EngineConfig {
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_partitions(mut self, partitions: usize) -> Self {
        self.partitions = partitions;
        self
    }

    pub fn with_memory_budget(mut self, bytes: usize) -> Self {
        self.memory_budget = bytes;
        self
    }

    pub fn with_tmp_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.tmp_dir = Some(dir.into());
        self
    }
}

/// One map/reduce stage.
///
/// `map_fn` turns an input record into keyed payloads; `reduce_fn` receives a key
/// and all payloads routed to it, sorted by encoded bytes. Both must be pure.
pub struct StageSpec<M, R> {
    pub name: String,
    pub map_fn: M,
    pub reduce_fn: R,
    pub partition_count: usize,
}

impl<M, R> StageSpec<M, R> {
    pub fn new(name: impl Into<String>, map_fn: M, reduce_fn: R) -> Self {
        Self {
            name: name.into(),
            map_fn,
            reduce_fn,
            partition_count: DEFAULT_PARTITIONS,
        }
    }

    pub fn with_partitions(mut self, partition_count: usize) -> Self {
        self.partition_count = partition_count;
        self
    }
}

pub struct Engine {
    config: EngineConfig,
    pool: rayon::ThreadPool,
}

impl Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("config", &self.config).finish()
    }
}

impl Default for Engine {
    fn default() -> Self {
        Self::new(EngineConfig::default()).expect("default engine")
    }
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        if config.workers == 0 {
            return Err(Error::InvalidArgument("workers must be positive".into()));
        }
        if config.partitions == 0 {
            return Err(Error::InvalidArgument("partitions must be positive".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .thread_name(|i| format!("windtunnel-worker-{i}"))
            .build()
            .map_err(|e| Error::Engine(e.to_string()))?;
        Ok(Self { config, pool })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn workers(&self) -> usize {
        self.config.workers
    }

    /// Builds a stage using this engine's partition count.
    pub fn stage<M, R>(&self, name: impl Into<String>, map_fn: M, reduce_fn: R) -> StageSpec<M, R> {
        StageSpec::new(name, map_fn, reduce_fn).with_partitions(self.config.partitions)
    }

    /// Runs `f` on this engine's worker pool.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> T {
        self.pool.install(f)
    }

    pub fn run_stage<I, K, V, O, M, R>(&self, input: &[I], spec: &StageSpec<M, R>) -> Result<Vec<O>>
    where
        I: Debug + Sync,
        K: Codec + Debug,
        V: Codec,
        O: Codec + Send,
        M: Fn(&I) -> Result<Vec<(K, V)>> + Sync,
        R: Fn(&K, Vec<V>) -> Result<Vec<O>> + Sync,
    {
        if spec.partition_count == 0 {
            return Err(Error::InvalidArgument(format!(
                "stage {:?}: partition_count must be positive",
                spec.name
            )));
        }
        let mut shuffle = Shuffle::new(&spec.name, spec.partition_count, &self.config);
        for (b, batch) in input.chunks(MAP_BATCH).enumerate() {
            let mapped: Vec<Result<Vec<(usize, Entry)>>> = self.pool.install(|| {
                batch
                    .par_chunks(MAP_CHUNK)
                    .enumerate()
                    .map(|(c, chunk)| {
                        let base = b * MAP_BATCH + c * MAP_CHUNK;
                        map_chunk(spec, chunk, base)
                    })
                    .collect()
            });
            for chunk in mapped {
                for (p, entry) in chunk? {
                    shuffle.push(p, entry)?;
                }
            }
        }
        let (memory, runs, _spill_dir) = shuffle.finish();

        let reduced: Vec<Result<Vec<Vec<u8>>>> = self.pool.install(|| {
            memory
                .into_par_iter()
                .zip(runs.into_par_iter())
                .map(|(mut entries, runs)| {
                    entries.par_sort_unstable();
                    reduce_partition(spec, entries, &runs)
                })
                .collect()
        });
        let mut out = Vec::new();
        for part in reduced {
            out.extend(part?);
        }
        self.pool.install(|| out.par_sort_unstable());
        out.iter().map(|bytes| O::from_bytes(bytes)).collect()
    }
}

fn map_chunk<I, K, V, M, R>(spec: &StageSpec<M, R>, chunk: &[I], base: usize) -> Result<Vec<(usize, Entry)>>
where
    I: Debug,
    K: Codec,
    V: Codec,
    M: Fn(&I) -> Result<Vec<(K, V)>>,
{
    let mut out = Vec::new();
    for (i, record) in chunk.iter().enumerate() {
        let emitted = (spec.map_fn)(record).map_err(|source| Error::Stage {
            stage: spec.name.clone(),
            location: format!("map of record #{} {:?}", base + i, record),
            source: Box::new(source),
        })?;
        for (k, v) in emitted {
            let key = k.to_bytes();
            let p = (fnv1a(&key) % spec.partition_count as u64) as usize;
            out.push((p, (key, v.to_bytes())));
        }
    }
    Ok(out)
}

fn reduce_partition<K, V, O, M, R>(spec: &StageSpec<M, R>, entries: Vec<Entry>, runs: &[PathBuf]) -> Result<Vec<Vec<u8>>>
where
    K: Codec + Debug,
    V: Codec,
    O: Codec,
    R: Fn(&K, Vec<V>) -> Result<Vec<O>>,
{
    let mut merged = MergedRuns::new(entries, runs)?;
    let mut out = Vec::new();
    while let Some((key_bytes, value_bytes)) = merged.next_group()? {
        let key = K::from_bytes(&key_bytes)?;
        let values = value_bytes
            .iter()
            .map(|v| V::from_bytes(v))
            .collect::<Result<Vec<_>>>()?;
        let emitted = (spec.reduce_fn)(&key, values).map_err(|source| Error::Stage {
            stage: spec.name.clone(),
            location: format!("reduce of key {key:?}"),
            source: Box::new(source),
        })?;
        out.extend(emitted.iter().map(Codec::to_bytes));
    }
    Ok(out)
}

struct Shuffle<'a> {
    stage: &'a str,
    config: &'a EngineConfig,
    partitions: Vec<Vec<Entry>>,
    runs: Vec<Vec<PathBuf>>,
    bytes: usize,
    spill_dir: Option<tempfile::TempDir>,
    spill_count: usize,
}

impl<'a> Shuffle<'a> {
    fn new(stage: &'a str, partitions: usize, config: &'a EngineConfig) -> Self {
        Self {
            stage,
            config,
            partitions: vec![Vec::new(); partitions],
            runs: vec![Vec::new(); partitions],
            bytes: 0,
            spill_dir: None,
            spill_count: 0,
        }
    }

    fn push(&mut self, partition: usize, entry: Entry) -> Result<()> {
        self.bytes += entry.0.len() + entry.1.len() + ENTRY_OVERHEAD;
        self.partitions[partition].push(entry);
        if self.bytes > self.config.memory_budget {
            self.spill()?;
        }
        Ok(())
    }

    fn spill(&mut self) -> Result<()> {
        if self.spill_dir.is_none() {
            let mut builder = tempfile::Builder::new();
            builder.prefix("windtunnel-spill-");
            let dir = match &self.config.tmp_dir {
                Some(root) => builder.tempdir_in(root).map_err(|e| Error::io(root, e))?,
                None => builder
                    .tempdir()
                    .map_err(|e| Error::io(std::env::temp_dir(), e))?,
            };
            self.spill_dir = Some(dir);
        }
        let dir = self.spill_dir.as_ref().unwrap().path().to_path_buf();
        for (p, entries) in self.partitions.iter_mut().enumerate() {
            if entries.is_empty() {
                continue;
            }
            entries.sort_unstable();
            let path = dir.join(format!("{}-{p}-{}.run", sanitize(self.stage), self.spill_count));
            spill::write_run(&path, entries)?;
            self.runs[p].push(path);
            entries.clear();
        }
        log::debug!("stage {:?}: spilled {} bytes", self.stage, self.bytes);
        self.spill_count += 1;
        self.bytes = 0;
        Ok(())
    }

    fn finish(self) -> (Vec<Vec<Entry>>, Vec<Vec<PathBuf>>, Option<tempfile::TempDir>) {
        (self.partitions, self.runs, self.spill_dir)
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Hex SHA-256 over the canonical encodings of `records`, in order.
pub fn digest<T: Codec>(records: &[T]) -> String {
    let mut hasher = Sha256::new();
    let mut buf = Vec::new();
    for r in records {
        buf.clear();
        r.encode(&mut buf);
        hasher.update((buf.len() as u64).to_le_bytes());
        hasher.update(&buf);
    }
    to_hex(&hasher.finalize())
}

pub(crate) fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
