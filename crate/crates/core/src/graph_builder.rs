//! Entity-affinity graph construction from relevance judgments.
//!
//! Two entities are linked when some query judges both. The weight of that
//! link through one query is the smaller of the two judgment scores, and the
//! edge keeps the largest such weight across all shared queries.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::corpus_io::{EntityRecord, QRelRecord, QueryRecord};
use crate::engine::{Codec, Engine};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default cap on the number of entities a single query may contribute pairs for.
pub const DEFAULT_MAX_QUERY_FANOUT: usize = 1000;

/// Undirected weighted edge with `entity_a < entity_b` (byte order).
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityEdge<S> {
    pub entity_a: String,
    pub entity_b: String,
    pub affinity: S,
}

impl<S> AffinityEdge<S> {
    /// Builds an edge in canonical orientation. Returns `None` for self-pairs.
    pub fn new(x: impl Into<String>, y: impl Into<String>, affinity: S) -> Option<Self> {
        let (x, y) = (x.into(), y.into());
        match x.cmp(&y) {
            std::cmp::Ordering::Less => Some(Self { entity_a: x, entity_b: y, affinity }),
            std::cmp::Ordering::Greater => Some(Self { entity_a: y, entity_b: x, affinity }),
            std::cmp::Ordering::Equal => None,
        }
    }
}

impl<S: Scalar> Codec for AffinityEdge<S> {
    fn encode(&self, out: &mut Vec<u8>) {
        self.entity_a.encode(out);
        self.entity_b.encode(out);
        self.affinity.encode(out);
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        Ok(Self {
            entity_a: String::decode(input)?,
            entity_b: String::decode(input)?,
            affinity: S::decode(input)?,
        })
    }
}

/// Keeps the records with `score > tau`.
pub fn filter_qrels<S: Scalar>(qrels: &[QRelRecord<S>], tau: S) -> Vec<QRelRecord<S>> {
    qrels.iter().filter(|r| r.score > tau).cloned().collect()
}

/// Threshold that keeps the `ceil(top_fraction * n)` highest-scored records,
/// plus any records tied with the lowest of them.
pub fn percentile_cutoff<S: Scalar>(qrels: &[QRelRecord<S>], top_fraction: f64) -> Result<S> {
    if qrels.is_empty() {
        return Err(Error::InvalidArgument("percentile cutoff of an empty qrels table".into()));
    }
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "top fraction {top_fraction} is outside (0, 1]"
        )));
    }
    let mut scores: Vec<S> = qrels.iter().map(|r| r.score).collect();
    scores.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    let keep = ((top_fraction * scores.len() as f64).ceil() as usize).clamp(1, scores.len());
    Ok(scores[keep - 1].next_down())
}

/// How qrels are thresholded before edges are generated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreFilter<S> {
    All,
    Threshold(S),
    TopFraction(f64),
}

impl<S: Scalar> ScoreFilter<S> {
    /// Resolves to the effective `tau`; `-inf` keeps everything.
    pub fn tau(&self, qrels: &[QRelRecord<S>]) -> Result<S> {
        match *self {
            ScoreFilter::All => Ok(S::neg_infinity()),
            ScoreFilter::Threshold(t) if t.is_nan() => {
                Err(Error::InvalidArgument("tau must not be NaN".into()))
            }
            ScoreFilter::Threshold(t) => Ok(t),
            ScoreFilter::TopFraction(_) if qrels.is_empty() => Ok(S::neg_infinity()),
            ScoreFilter::TopFraction(f) => percentile_cutoff(qrels, f),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphBuild<S> {
    pub edges: Vec<AffinityEdge<S>>,
    /// Queries skipped for exceeding the fanout cap, with their entity counts.
    pub dropped_queries: Vec<(String, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
enum PairOrDrop<S> {
    Pair(String, String, S),
    Dropped(String, u64),
}

impl<S: Scalar> Codec for PairOrDrop<S> {
    fn encode(&self, out: &mut Vec<u8>) {
        match self {
            PairOrDrop::Pair(a, b, s) => {
                out.push(0);
                (a.clone(), b.clone(), *s).encode(out);
            }
            PairOrDrop::Dropped(q, n) => {
                out.push(1);
                (q.clone(), *n).encode(out);
            }
        }
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        let (tag, rest) = input
            .split_first()
            .ok_or_else(|| Error::Codec("empty pair record".into()))?;
        *input = rest;
        match tag {
            0 => {
                let (a, b, s) = <(String, String, S)>::decode(input)?;
                Ok(PairOrDrop::Pair(a, b, s))
            }
            1 => {
                let (q, n) = <(String, u64)>::decode(input)?;
                Ok(PairOrDrop::Dropped(q, n))
            }
            t => Err(Error::Codec(format!("bad pair tag {t}"))),
        }
    }
}

/// Builds one edge per entity pair that shares at least one query.
///
/// `qrels` should already be score-filtered. Queries judging more than
/// `max_query_fanout` distinct entities are skipped and reported.
pub fn build_affinity_edges<S: Scalar>(
    engine: &Engine,
    qrels: &[QRelRecord<S>],
    max_query_fanout: usize,
) -> Result<GraphBuild<S>> {
    let pairs = engine.stage(
        "affinity-pairs",
        |r: &QRelRecord<S>| Ok(vec![(r.query_id.clone(), (r.entity_id.clone(), r.score))]),
        move |query: &String, judged: Vec<(String, S)>| {
            // payloads arrive sorted by entity, so repeated entities are adjacent
            let mut entities: Vec<(String, S)> = Vec::with_capacity(judged.len());
            for (e, s) in judged {
                match entities.last_mut() {
                    Some((last, best)) if *last == e => *best = best.max(s),
                    _ => entities.push((e, s)),
                }
            }
            if entities.len() > max_query_fanout {
                return Ok(vec![PairOrDrop::Dropped(query.clone(), entities.len() as u64)]);
            }
            let mut out = Vec::with_capacity(entities.len() * entities.len().saturating_sub(1) / 2);
            for (i, (e1, s1)) in entities.iter().enumerate() {
                for (e2, s2) in &entities[i + 1..] {
                    out.push(PairOrDrop::Pair(e1.clone(), e2.clone(), s1.min(*s2)));
                }
            }
            Ok(out)
        },
    );
    let step1: Vec<PairOrDrop<S>> = engine.run_stage(qrels, &pairs)?;

    let mut dropped_queries = Vec::new();
    let mut candidates = Vec::with_capacity(step1.len());
    for rec in step1 {
        match rec {
            PairOrDrop::Dropped(q, n) => dropped_queries.push((q, n)),
            PairOrDrop::Pair(a, b, s) => candidates.push(AffinityEdge { entity_a: a, entity_b: b, affinity: s }),
        }
    }
    for (q, n) in &dropped_queries {
        log::warn!("query {q} judges {n} entities (cap {max_query_fanout}); skipped");
    }
    Ok(GraphBuild {
        edges: max_dedup(engine, &candidates)?,
        dropped_queries,
    })
}

/// Collapses parallel edges to one per pair, keeping the largest affinity.
pub fn max_dedup<S: Scalar>(engine: &Engine, edges: &[AffinityEdge<S>]) -> Result<Vec<AffinityEdge<S>>> {
    let stage = engine.stage(
        "affinity-max",
        |e: &AffinityEdge<S>| Ok(vec![((e.entity_a.clone(), e.entity_b.clone()), e.affinity)]),
        |(a, b): &(String, String), weights: Vec<S>| {
            let best = weights.into_iter().fold(S::neg_infinity(), S::max);
            Ok(vec![AffinityEdge { entity_a: a.clone(), entity_b: b.clone(), affinity: best }])
        },
    );
    engine.run_stage(edges, &stage)
}

/// Tables an edge source may draw on.
#[derive(Debug, Clone, Copy)]
pub struct SourceInputs<'a, S> {
    pub queries: &'a [QueryRecord],
    pub entities: &'a [EntityRecord],
    pub qrels: &'a [QRelRecord<S>],
}

/// A generator of affinity edges. Additional relations (hyperlinks, content
/// similarity) plug in here; their edges are merged with [`union_edge_sources`].
pub trait EdgeSource<S: Scalar>: Send + Sync {
    fn name(&self) -> &str;

    fn edges(&self, engine: &Engine, inputs: &SourceInputs<'_, S>) -> Result<Vec<AffinityEdge<S>>>;
}

/// Edges between entities judged for a common query.
#[derive(Debug, Clone)]
pub struct SharedQuerySource<S> {
    pub filter: ScoreFilter<S>,
    pub max_query_fanout: usize,
}

impl<S: Scalar> EdgeSource<S> for SharedQuerySource<S> {
    fn name(&self) -> &str {
        "shared-query"
    }

    fn edges(&self, engine: &Engine, inputs: &SourceInputs<'_, S>) -> Result<Vec<AffinityEdge<S>>> {
        let tau = self.filter.tau(inputs.qrels)?;
        let kept = filter_qrels(inputs.qrels, tau);
        Ok(build_affinity_edges(engine, &kept, self.max_query_fanout)?.edges)
    }
}

/// Unions the edges of several sources, keeping the maximum affinity per pair.
pub fn union_edge_sources<S: Scalar>(
    engine: &Engine,
    sources: &[&dyn EdgeSource<S>],
    inputs: &SourceInputs<'_, S>,
) -> Result<Vec<AffinityEdge<S>>> {
    let mut all = Vec::new();
    for source in sources {
        let edges = source.edges(engine, inputs)?;
        log::info!("edge source {}: {} edges", source.name(), edges.len());
        all.extend(edges);
    }
    max_dedup(engine, &all)
}

/// Checks orientation, uniqueness and `affinity > tau` for every edge.
pub fn validate_edges<S: Scalar>(edges: &[AffinityEdge<S>], tau: S) -> Result<()> {
    let mut seen = HashSet::with_capacity(edges.len());
    for e in edges {
        if e.entity_a >= e.entity_b {
            return Err(Error::InvalidArgument(format!(
                "edge ({}, {}) is not in canonical orientation",
                e.entity_a, e.entity_b
            )));
        }
        if !seen.insert((e.entity_a.as_str(), e.entity_b.as_str())) {
            return Err(Error::InvalidArgument(format!(
                "duplicate edge ({}, {})",
                e.entity_a, e.entity_b
            )));
        }
        if !(e.affinity.is_finite() && e.affinity > tau) {
            return Err(Error::InvalidArgument(format!(
                "edge ({}, {}) has affinity {} not above tau {}",
                e.entity_a, e.entity_b, e.affinity, tau
            )));
        }
    }
    Ok(())
}

/// Number of neighbours of every node that appears in an edge.
pub fn node_degrees<S>(edges: &[AffinityEdge<S>]) -> BTreeMap<&str, u64> {
    let mut degrees: BTreeMap<&str, u64> = BTreeMap::new();
    for e in edges {
        *degrees.entry(e.entity_a.as_str()).or_default() += 1;
        *degrees.entry(e.entity_b.as_str()).or_default() += 1;
    }
    degrees
}

/// Histogram from degree to the number of nodes with that degree.
pub fn degree_distribution<S>(edges: &[AffinityEdge<S>]) -> BTreeMap<u64, u64> {
    let mut hist = BTreeMap::new();
    for d in node_degrees(edges).into_values() {
        *hist.entry(d).or_default() += 1;
    }
    hist
}

/// Writes `entity_a<TAB>entity_b<TAB>affinity`, one edge per line, sorted.
pub fn write_edges<S: Scalar>(path: impl AsRef<Path>, edges: &[AffinityEdge<S>]) -> Result<()> {
    let path = path.as_ref();
    let mut sorted: Vec<&AffinityEdge<S>> = edges.iter().collect();
    sorted.sort_by(|x, y| (&x.entity_a, &x.entity_b).cmp(&(&y.entity_a, &y.entity_b)));
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in sorted {
        if e.entity_a.contains(['\t', '\n', '\r']) || e.entity_b.contains(['\t', '\n', '\r']) {
            return Err(Error::InvalidArgument(format!(
                "edge id contains a tab or line break: ({:?}, {:?})",
                e.entity_a, e.entity_b
            )));
        }
        writeln!(w, "{}\t{}\t{}", e.entity_a, e.entity_b, e.affinity).map_err(|err| Error::io(path, err))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_edges<S: Scalar>(path: impl AsRef<Path>) -> Result<Vec<AffinityEdge<S>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut edges = Vec::new();
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, lineno, format!("expected 3 columns, found {}", fields.len())));
        }
        let affinity: S = fields[2]
            .parse()
            .ok()
            .filter(|s: &S| s.is_finite())
            .ok_or_else(|| Error::parse(path, lineno, format!("bad affinity {:?}", fields[2])))?;
        if fields[0] >= fields[1] {
            return Err(Error::parse(path, lineno, "edge endpoints must satisfy entity_a < entity_b"));
        }
        if let Some(first) = seen.insert((fields[0].to_string(), fields[1].to_string()), lineno) {
            return Err(Error::parse(path, lineno, format!("duplicate edge (first on line {first})")));
        }
        edges.push(AffinityEdge {
            entity_a: fields[0].to_string(),
            entity_b: fields[1].to_string(),
            affinity,
        });
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::EngineConfig;

    fn q(query: &str, entity: &str, score: f64) -> QRelRecord<f64> {
        QRelRecord::new(query, entity, score)
    }

    fn e(a: &str, b: &str, w: f64) -> AffinityEdge<f64> {
        AffinityEdge::new(a, b, w).unwrap()
    }

    fn engine() -> Engine {
        Engine::new(EngineConfig::default().with_workers(2).with_partitions(3)).unwrap()
    }

    #[test]
    fn strict_threshold() {
        let qrels = vec![q("q", "a", 0.9), q("q", "b", 0.5), q("q", "c", 0.3)];
        assert_eq!(filter_qrels(&qrels, 0.5), vec![q("q", "a", 0.9)]);
        assert_eq!(filter_qrels(&qrels, f64::NEG_INFINITY).len(), 3);
        assert!(filter_qrels(&qrels, 1.0).is_empty());
    }

    #[test]
    fn percentile_keeps_top_half() {
        let qrels: Vec<_> = [1.0, 2.0, 3.0, 4.0].iter().map(|&s| q("q", &format!("e{s}"), s)).collect();
        let tau = percentile_cutoff(&qrels, 0.5).unwrap();
        let kept: Vec<f64> = filter_qrels(&qrels, tau).iter().map(|r| r.score).collect();
        assert_eq!(kept, vec![3.0, 4.0]);
        assert_eq!(filter_qrels(&qrels, percentile_cutoff(&qrels, 1.0).unwrap()).len(), 4);
    }

    #[test]
    fn percentile_keeps_boundary_ties() {
        let qrels: Vec<_> = (0..4).map(|i| q("q", &format!("e{i}"), 5.0)).collect();
        let tau = percentile_cutoff(&qrels, 0.5).unwrap();
        assert_eq!(filter_qrels(&qrels, tau).len(), 4);
    }

    #[test]
    fn percentile_errors() {
        assert!(percentile_cutoff::<f64>(&[], 0.5).is_err());
        let qrels = vec![q("q", "a", 1.0)];
        assert!(percentile_cutoff(&qrels, 0.0).is_err());
        assert!(percentile_cutoff(&qrels, 1.5).is_err());
    }

    #[test]
    fn chain_of_two_queries() {
        let qrels = vec![q("q1", "e1", 0.9), q("q1", "e2", 0.8), q("q2", "e2", 0.7), q("q2", "e3", 0.6)];
        let g = build_affinity_edges(&engine(), &qrels, 1000).unwrap();
        assert_eq!(g.edges, vec![e("e1", "e2", 0.8), e("e2", "e3", 0.6)]);
        assert!(g.dropped_queries.is_empty());
    }

    #[test]
    fn max_over_shared_queries() {
        let qrels = vec![q("q1", "e1", 0.9), q("q1", "e2", 0.8), q("q2", "e1", 0.95), q("q2", "e2", 0.99)];
        let g = build_affinity_edges(&engine(), &qrels, 1000).unwrap();
        assert_eq!(g.edges, vec![e("e1", "e2", 0.95)]);
    }

    #[test]
    fn single_judgment_gives_no_edges() {
        let g = build_affinity_edges(&engine(), &[q("q1", "e1", 1.0)], 1000).unwrap();
        assert!(g.edges.is_empty());
    }

    #[test]
    fn hub_queries_are_dropped_and_reported() {
        let mut qrels: Vec<_> = (0..5).map(|i| q("hub", &format!("e{i}"), 1.0)).collect();
        qrels.push(q("small", "e0", 1.0));
        qrels.push(q("small", "e1", 0.5));
        let g = build_affinity_edges(&engine(), &qrels, 4).unwrap();
        assert_eq!(g.edges, vec![e("e0", "e1", 0.5)]);
        assert_eq!(g.dropped_queries, vec![("hub".to_string(), 5)]);
    }

    #[test]
    fn degrees() {
        let triangle = vec![e("a", "b", 1.0), e("b", "c", 1.0), e("a", "c", 1.0)];
        assert_eq!(degree_distribution(&triangle), BTreeMap::from([(2, 3)]));
        let path = vec![e("a", "b", 1.0), e("b", "c", 1.0)];
        assert_eq!(degree_distribution(&path), BTreeMap::from([(1, 2), (2, 1)]));
        assert!(degree_distribution::<f64>(&[]).is_empty());
    }

    #[test]
    fn edge_constructor_orients_and_rejects_loops() {
        let edge = AffinityEdge::new("z", "a", 1.0).unwrap();
        assert_eq!((edge.entity_a.as_str(), edge.entity_b.as_str()), ("a", "z"));
        assert!(AffinityEdge::new("a", "a", 1.0).is_none());
    }

    #[test]
    fn validation_uses_configured_tau() {
        let edges = vec![e("a", "b", -0.5)];
        assert!(validate_edges(&edges, -1.0).is_ok());
        assert!(validate_edges(&edges, 0.0).is_err());
        let dup = vec![e("a", "b", 1.0), e("a", "b", 2.0)];
        assert!(validate_edges(&dup, 0.0).is_err());
    }

    #[test]
    fn edge_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("edges.tsv");
        let edges = vec![e("b", "c", 0.25), e("a", "b", 1.0)];
        write_edges(&path, &edges).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a\tb\t1\nb\tc\t0.25\n");
        let back: Vec<AffinityEdge<f64>> = read_edges(&path).unwrap();
        assert_eq!(back, vec![e("a", "b", 1.0), e("b", "c", 0.25)]);
        std::fs::write(&path, "b\ta\t1\n").unwrap();
        assert!(read_edges::<f64>(&path).is_err());
    }

    struct Fixed(Vec<AffinityEdge<f64>>);

    impl EdgeSource<f64> for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }

        fn edges(&self, _: &Engine, _: &SourceInputs<'_, f64>) -> Result<Vec<AffinityEdge<f64>>> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn sources_union_with_max() {
        let qrels = vec![q("q1", "a", 0.4), q("q1", "b", 0.6)];
        let inputs = SourceInputs { queries: &[], entities: &[], qrels: &qrels };
        let shared = SharedQuerySource { filter: ScoreFilter::All, max_query_fanout: 10 };
        let links = Fixed(vec![e("a", "b", 0.9), e("b", "c", 0.1)]);
        let weak = Fixed(vec![e("a", "b", 0.2)]);
        let edges = union_edge_sources(&engine(), &[&shared, &links, &weak], &inputs).unwrap();
        assert_eq!(edges, vec![e("a", "b", 0.9), e("b", "c", 0.1)]);
    }

    #[test]
    fn nan_threshold_rejected() {
        assert!(ScoreFilter::Threshold(f64::NAN).tau(&[]).is_err());
    }
}
