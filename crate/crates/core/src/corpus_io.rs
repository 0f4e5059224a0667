//! Readers and writers for the query, corpus, qrels and run tables.
//!
//! Queries and corpus are two-column TSV (`id<TAB>text`). Qrels come either as
//! TREC qrels (`query_id 0 entity_id score`, whitespace separated) or as scored
//! TSV (`query_id<TAB>entity_id<TAB>score`). Run files use the TREC run layout
//! `query_id Q0 entity_id rank score tag`. All input must be valid UTF-8.

use std::collections::hash_map::Entry as MapEntry;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::engine::Codec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const QUERIES_FILE: &str = "queries.tsv";
pub const CORPUS_FILE: &str = "corpus.tsv";
pub const QRELS_FILE: &str = "qrels.tsv";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QueryRecord {
    pub query_id: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityRecord {
    pub entity_id: String,
    pub content: String,
}

/// A relevance judgment of one entity for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QRelRecord<S> {
    pub entity_id: String,
    pub query_id: String,
    pub score: S,
}

impl<S> QRelRecord<S> {
    pub fn new(query_id: impl Into<String>, entity_id: impl Into<String>, score: S) -> Self {
        Self {
            entity_id: entity_id.into(),
            query_id: query_id.into(),
            score,
        }
    }
}

/// One ranked result from an externally produced retrieval run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord<S> {
    pub query_id: String,
    pub entity_id: String,
    pub rank: u64,
    pub score: S,
    pub tag: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QrelsFormat {
    TrecQrels,
    ScoredTsv,
}

impl FromStr for QrelsFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trec-qrels" => Ok(Self::TrecQrels),
            "scored-tsv" => Ok(Self::ScoredTsv),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

impl std::fmt::Display for QrelsFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::TrecQrels => "trec-qrels",
            Self::ScoredTsv => "scored-tsv",
        })
    }
}

/// A sampled `(queries, corpus, qrels)` triple.
///
/// Constructed through [`CorpusSample::new`], which puts every table in
/// canonical order (queries and entities by id, qrels by `(query, entity)`).
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSample<S> {
    pub queries: Vec<QueryRecord>,
    pub entities: Vec<EntityRecord>,
    pub qrels: Vec<QRelRecord<S>>,
}

impl<S: Scalar> CorpusSample<S> {
    pub fn new(
        mut queries: Vec<QueryRecord>,
        mut entities: Vec<EntityRecord>,
        mut qrels: Vec<QRelRecord<S>>,
    ) -> Self {
        queries.sort();
        entities.sort();
        qrels.sort_by(|a, b| {
            (a.query_id.as_str(), a.entity_id.as_str()).cmp(&(b.query_id.as_str(), b.entity_id.as_str()))
        });
        Self {
            queries,
            entities,
            qrels,
        }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), Vec::new(), Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty() && self.entities.is_empty() && self.qrels.is_empty()
    }

    /// Checks id uniqueness, referential closure and the absence of orphan queries.
    pub fn validate(&self) -> Result<()> {
        let mut query_ids = HashSet::with_capacity(self.queries.len());
        for q in &self.queries {
            if !query_ids.insert(q.query_id.as_str()) {
                return Err(Error::Closure(format!("duplicate query id {:?}", q.query_id)));
            }
        }
        let mut entity_ids = HashSet::with_capacity(self.entities.len());
        for e in &self.entities {
            if !entity_ids.insert(e.entity_id.as_str()) {
                return Err(Error::Closure(format!("duplicate entity id {:?}", e.entity_id)));
            }
        }
        let mut pairs = HashSet::with_capacity(self.qrels.len());
        let mut judged = HashSet::with_capacity(self.queries.len());
        for r in &self.qrels {
            if !query_ids.contains(r.query_id.as_str()) {
                return Err(Error::Closure(format!(
                    "qrel ({}, {}) references missing query",
                    r.query_id, r.entity_id
                )));
            }
            if !entity_ids.contains(r.entity_id.as_str()) {
                return Err(Error::Closure(format!(
                    "qrel ({}, {}) references missing entity",
                    r.query_id, r.entity_id
                )));
            }
            if !pairs.insert((r.query_id.as_str(), r.entity_id.as_str())) {
                return Err(Error::Closure(format!(
                    "duplicate qrel ({}, {})",
                    r.query_id, r.entity_id
                )));
            }
            judged.insert(r.query_id.as_str());
        }
        if let Some(orphan) = self.queries.iter().find(|q| !judged.contains(q.query_id.as_str())) {
            return Err(Error::Closure(format!("query {:?} has no qrels", orphan.query_id)));
        }
        Ok(())
    }

    /// Entities that carry at least one qrel.
    pub fn judged_entity_count(&self) -> usize {
        self.qrels.iter().map(|r| r.entity_id.as_str()).collect::<BTreeSet<_>>().len()
    }
}

impl<S: Scalar> Codec for QRelRecord<S> {
    fn encode(&self, out: &mut Vec<u8>) {
        self.query_id.encode(out);
        self.entity_id.encode(out);
        self.score.encode(out);
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        let query_id = String::decode(input)?;
        let entity_id = String::decode(input)?;
        let score = S::decode(input)?;
        Ok(Self {
            entity_id,
            query_id,
            score,
        })
    }
}

impl Codec for QueryRecord {
    fn encode(&self, out: &mut Vec<u8>) {
        self.query_id.encode(out);
        self.content.encode(out);
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        Ok(Self {
            query_id: String::decode(input)?,
            content: String::decode(input)?,
        })
    }
}

impl Codec for EntityRecord {
    fn encode(&self, out: &mut Vec<u8>) {
        self.entity_id.encode(out);
        self.content.encode(out);
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        Ok(Self {
            entity_id: String::decode(input)?,
            content: String::decode(input)?,
        })
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Yields `(line_number, line)` for every non-empty line, rejecting invalid UTF-8.
struct Lines<R> {
    reader: R,
    path: PathBuf,
    line: usize,
    buf: Vec<u8>,
}

impl<R: BufRead> Lines<R> {
    fn new(reader: R, path: &Path) -> Self {
        Self {
            reader,
            path: path.to_path_buf(),
            line: 0,
            buf: Vec::new(),
        }
    }
}

impl<R: BufRead> Iterator for Lines<R> {
    type Item = Result<(usize, String)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            }
            self.line += 1;
            if self.buf.last() == Some(&b'\n') {
                self.buf.pop();
                if self.buf.last() == Some(&b'\r') {
                    self.buf.pop();
                }
            }
            if self.buf.is_empty() {
                continue;
            }
            return Some(match std::str::from_utf8(&self.buf) {
                Ok(s) => Ok((self.line, s.to_string())),
                Err(e) => Err(Error::parse(&self.path, self.line, format!("invalid UTF-8: {e}"))),
            });
        }
    }
}

fn parse_two_column<R: BufRead>(reader: R, path: &Path) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for item in Lines::new(reader, path) {
        let (line, text) = item?;
        let fields: Vec<&str> = text.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 2 tab-separated columns, found {}", fields.len()),
            ));
        }
        let id = fields[0];
        if id.is_empty() {
            return Err(Error::parse(path, line, "empty id"));
        }
        match seen.entry(id.to_string()) {
            MapEntry::Occupied(first) => {
                return Err(Error::DuplicateId {
                    path: path.to_path_buf(),
                    id: id.to_string(),
                    first: *first.get(),
                    second: line,
                })
            }
            MapEntry::Vacant(v) => {
                v.insert(line);
            }
        }
        out.push((line, id.to_string(), fields[1].to_string()));
    }
    Ok(out)
}

pub fn parse_queries<R: BufRead>(reader: R, path: &Path) -> Result<Vec<QueryRecord>> {
    Ok(parse_two_column(reader, path)?
        .into_iter()
        .map(|(_, query_id, content)| QueryRecord { query_id, content })
        .collect())
}

pub fn parse_corpus<R: BufRead>(reader: R, path: &Path) -> Result<Vec<EntityRecord>> {
    Ok(parse_two_column(reader, path)?
        .into_iter()
        .map(|(_, entity_id, content)| EntityRecord { entity_id, content })
        .collect())
}

pub fn read_queries(path: impl AsRef<Path>) -> Result<Vec<QueryRecord>> {
    let path = path.as_ref();
    parse_queries(open(path)?, path)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<EntityRecord>> {
    let path = path.as_ref();
    parse_corpus(open(path)?, path)
}

fn parse_score<S: Scalar>(text: &str, path: &Path, line: usize) -> Result<S> {
    let score: S = text
        .parse()
        .map_err(|_| Error::parse(path, line, format!("score {text:?} is not a number")))?;
    if !score.is_finite() {
        return Err(Error::parse(path, line, format!("score {text:?} is not finite")));
    }
    Ok(score)
}

/// Parses qrels; repeated `(query, entity)` pairs collapse to their maximum score.
/// Output keeps first-appearance order.
pub fn parse_qrels<S: Scalar, R: BufRead>(reader: R, path: &Path, format: QrelsFormat) -> Result<Vec<QRelRecord<S>>> {
    let mut out: Vec<QRelRecord<S>> = Vec::new();
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    for item in Lines::new(reader, path) {
        let (line, text) = item?;
        let (query_id, entity_id, score_text) = match format {
            QrelsFormat::TrecQrels => {
                let fields: Vec<&str> = text.split_whitespace().collect();
                if fields.len() != 4 {
                    return Err(Error::parse(
                        path,
                        line,
                        format!("expected 4 whitespace-separated columns, found {}", fields.len()),
                    ));
                }
                (fields[0], fields[2], fields[3])
            }
            QrelsFormat::ScoredTsv => {
                let fields: Vec<&str> = text.split('\t').collect();
                if fields.len() != 3 {
                    return Err(Error::parse(
                        path,
                        line,
                        format!("expected 3 tab-separated columns, found {}", fields.len()),
                    ));
                }
                (fields[0], fields[1], fields[2])
            }
        };
        if query_id.is_empty() || entity_id.is_empty() {
            return Err(Error::parse(path, line, "empty id"));
        }
        let score = parse_score::<S>(score_text, path, line)?;
        match index.entry((query_id.to_string(), entity_id.to_string())) {
            MapEntry::Occupied(slot) => {
                let existing = &mut out[*slot.get()];
                if score > existing.score {
                    existing.score = score;
                }
            }
            MapEntry::Vacant(slot) => {
                slot.insert(out.len());
                out.push(QRelRecord::new(query_id, entity_id, score));
            }
        }
    }
    Ok(out)
}

pub fn read_qrels<S: Scalar>(path: impl AsRef<Path>, format: QrelsFormat) -> Result<Vec<QRelRecord<S>>> {
    let path = path.as_ref();
    parse_qrels(open(path)?, path, format)
}

/// Parses a TREC run file. Records come back grouped by query and ordered by rank.
pub fn parse_run<S: Scalar, R: BufRead>(reader: R, path: &Path) -> Result<Vec<RunRecord<S>>> {
    let mut out = Vec::new();
    let mut ranks: HashMap<(String, u64), usize> = HashMap::new();
    for item in Lines::new(reader, path) {
        let (line, text) = item?;
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 6 whitespace-separated columns, found {}", fields.len()),
            ));
        }
        let rank: u64 = fields[3]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("rank {:?} is not a positive integer", fields[3])))?;
        if rank == 0 {
            return Err(Error::parse(path, line, "rank must be positive"));
        }
        let score = parse_score::<S>(fields[4], path, line)?;
        if let Some(first) = ranks.insert((fields[0].to_string(), rank), line) {
            return Err(Error::parse(
                path,
                line,
                format!("query {} repeats rank {rank} (first on line {first})", fields[0]),
            ));
        }
        out.push(RunRecord {
            query_id: fields[0].to_string(),
            entity_id: fields[2].to_string(),
            rank,
            score,
            tag: fields[5].to_string(),
        });
    }
    out.sort_by(|a, b| a.query_id.cmp(&b.query_id).then(a.rank.cmp(&b.rank)));
    Ok(out)
}

pub fn read_run<S: Scalar>(path: impl AsRef<Path>) -> Result<Vec<RunRecord<S>>> {
    let path = path.as_ref();
    parse_run(open(path)?, path)
}

fn check_field(field: &str, what: &str, allow_empty: bool) -> Result<()> {
    if !allow_empty && field.is_empty() {
        return Err(Error::InvalidArgument(format!("empty {what}")));
    }
    if field.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidArgument(format!(
            "{what} {field:?} contains a tab or line break"
        )));
    }
    Ok(())
}

fn write_lines<I>(path: &Path, lines: I) -> Result<()>
where
    I: IntoIterator<Item = Result<String>>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        let line = line?;
        w.write_all(line.as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_queries(path: impl AsRef<Path>, queries: &[QueryRecord]) -> Result<()> {
    write_lines(
        path.as_ref(),
        queries.iter().map(|q| {
            check_field(&q.query_id, "query id", false)?;
            check_field(&q.content, "query content", true)?;
            Ok(format!("{}\t{}", q.query_id, q.content))
        }),
    )
}

pub fn write_corpus(path: impl AsRef<Path>, entities: &[EntityRecord]) -> Result<()> {
    write_lines(
        path.as_ref(),
        entities.iter().map(|e| {
            check_field(&e.entity_id, "entity id", false)?;
            check_field(&e.content, "entity content", true)?;
            Ok(format!("{}\t{}", e.entity_id, e.content))
        }),
    )
}

/// Writes qrels as scored TSV (`query_id<TAB>entity_id<TAB>score`).
pub fn write_qrels<S: Scalar>(path: impl AsRef<Path>, qrels: &[QRelRecord<S>]) -> Result<()> {
    write_lines(
        path.as_ref(),
        qrels.iter().map(|r| {
            check_field(&r.query_id, "query id", false)?;
            check_field(&r.entity_id, "entity id", false)?;
            Ok(format!("{}\t{}\t{}", r.query_id, r.entity_id, r.score))
        }),
    )
}

/// Writes `queries.tsv`, `corpus.tsv` and `qrels.tsv` into `dir`.
///
/// Refuses samples that fail [`CorpusSample::validate`].
pub fn write_sample<S: Scalar>(sample: &CorpusSample<S>, dir: impl AsRef<Path>) -> Result<()> {
    sample.validate()?;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_queries(dir.join(QUERIES_FILE), &sample.queries)?;
    write_corpus(dir.join(CORPUS_FILE), &sample.entities)?;
    write_qrels(dir.join(QRELS_FILE), &sample.qrels)
}

pub fn read_sample<S: Scalar>(dir: impl AsRef<Path>) -> Result<CorpusSample<S>> {
    let dir = dir.as_ref();
    let sample = CorpusSample::new(
        read_queries(dir.join(QUERIES_FILE))?,
        read_corpus(dir.join(CORPUS_FILE))?,
        read_qrels(dir.join(QRELS_FILE), QrelsFormat::ScoredTsv)?,
    );
    sample.validate()?;
    Ok(sample)
}
