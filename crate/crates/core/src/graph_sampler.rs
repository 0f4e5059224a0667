//! Community detection by weighted label propagation, and size-proportional
//! cluster sampling of the resulting communities.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::engine::{Codec, Engine};
use crate::error::{Error, Result};
use crate::graph_builder::AffinityEdge;
use crate::scalar::Scalar;
use crate::seed::unit_draw;

pub const DEFAULT_ROUNDS: u32 = 5;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LabelState {
    pub node_id: String,
    pub label: String,
    pub round: u32,
}

impl Codec for LabelState {
    fn encode(&self, out: &mut Vec<u8>) {
        self.node_id.encode(out);
        self.label.encode(out);
        self.round.encode(out);
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        Ok(Self {
            node_id: String::decode(input)?,
            label: String::decode(input)?,
            round: u32::decode(input)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    /// Final label of every node that appears in an edge, sorted by node id.
    pub states: Vec<LabelState>,
    pub rounds: u32,
    /// Nodes whose label changed in the last round.
    pub changed_in_final_round: u64,
}

impl Propagation {
    pub fn changed_fraction(&self) -> f64 {
        if self.states.is_empty() {
            0.0
        } else {
            self.changed_in_final_round as f64 / self.states.len() as f64
        }
    }
}

/// Synchronous weighted label propagation.
///
/// Every node starts labelled with its own id. In each round a node adopts the
/// label with the largest summed affinity among its neighbours' labels from the
/// previous round; ties go to the byte-wise smallest label. The snapshot after
/// `rounds` rounds is returned whether or not it is stable.
pub fn propagate_labels<S: Scalar>(engine: &Engine, edges: &[AffinityEdge<S>], rounds: u32) -> Result<Propagation> {
    if rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be at least 1".into()));
    }
    let instantiate = engine.stage(
        "propagation-init",
        |e: &AffinityEdge<S>| {
            Ok(vec![
                (e.entity_a.clone(), (e.entity_b.clone(), e.affinity)),
                (e.entity_b.clone(), (e.entity_a.clone(), e.affinity)),
            ])
        },
        |node: &String, neighbours: Vec<(String, S)>| {
            Ok(neighbours
                .into_iter()
                .map(|(n, w)| (node.clone(), n, w))
                .collect::<Vec<_>>())
        },
    );
    let adjacency: Vec<(String, String, S)> = engine.run_stage(edges, &instantiate)?;

    let mut labels: HashMap<String, String> = HashMap::new();
    for (node, _, _) in &adjacency {
        labels.entry(node.clone()).or_insert_with(|| node.clone());
    }

    let mut changed = 0;
    for round in 1..=rounds {
        let current = &labels;
        // each directed record carries the node's label over to its neighbour
        let step = engine.stage(
            format!("propagation-round-{round}"),
            move |(node, neighbour, w): &(String, String, S)| Ok(vec![(neighbour.clone(), (current[node].clone(), *w))]),
            |node: &String, votes: Vec<(String, S)>| Ok(vec![(node.clone(), strongest_label(&votes))]),
        );
        let next: Vec<(String, String)> = engine.run_stage(&adjacency, &step)?;
        changed = next.iter().filter(|(n, l)| labels[n] != *l).count() as u64;
        labels = next.into_iter().collect();
    }

    let mut states: Vec<LabelState> = labels
        .into_iter()
        .map(|(node_id, label)| LabelState { node_id, label, round: rounds })
        .collect();
    states.sort();
    Ok(Propagation {
        states,
        rounds,
        changed_in_final_round: changed,
    })
}

// `votes` is sorted by label, so equal labels are adjacent and the first
// maximum seen is also the smallest label among ties.
fn strongest_label<S: Scalar>(votes: &[(String, S)]) -> String {
    let mut best: Option<(&str, S)> = None;
    let mut i = 0;
    while i < votes.len() {
        let label = votes[i].0.as_str();
        let mut total = S::zero();
        while i < votes.len() && votes[i].0 == label {
            total = total + votes[i].1;
            i += 1;
        }
        if best.is_none_or(|(_, b)| total > b) {
            best = Some((label, total));
        }
    }
    best.map(|(l, _)| l.to_string()).unwrap_or_default()
}

/// A community: all nodes sharing one final label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ClusterAssignment {
    pub label: String,
    /// Sorted, non-empty.
    pub members: Vec<String>,
}

impl ClusterAssignment {
    pub fn size(&self) -> u64 {
        self.members.len() as u64
    }
}

impl Codec for ClusterAssignment {
    fn encode(&self, out: &mut Vec<u8>) {
        self.label.encode(out);
        self.members.encode(out);
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        Ok(Self {
            label: String::decode(input)?,
            members: Vec::decode(input)?,
        })
    }
}

/// Groups final labels into clusters, sorted by label.
pub fn extract_clusters(engine: &Engine, states: &[LabelState]) -> Result<Vec<ClusterAssignment>> {
    let by_node = engine.stage(
        "clusters-by-node",
        |s: &LabelState| Ok(vec![(s.node_id.clone(), s.label.clone())]),
        |node: &String, mut labels: Vec<String>| {
            labels.dedup();
            if labels.len() > 1 {
                return Err(Error::ConflictingLabels {
                    node: node.clone(),
                    first: labels[0].clone(),
                    second: labels[1].clone(),
                });
            }
            Ok(vec![(labels.pop().unwrap(), node.clone())])
        },
    );
    let assigned: Vec<(String, String)> = engine.run_stage(states, &by_node)?;
    let by_label = engine.stage(
        "clusters-by-label",
        |(label, node): &(String, String)| Ok(vec![(label.clone(), node.clone())]),
        |label: &String, members: Vec<String>| Ok(vec![ClusterAssignment { label: label.clone(), members }]),
    );
    engine.run_stage(&assigned, &by_label)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanEntry<S> {
    pub label: String,
    pub selected: bool,
    pub probability: S,
}

/// Which clusters enter the sample, and the parameters that decided it.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan<S> {
    pub seed: u64,
    pub scale: S,
    pub total_entities: u64,
    pub target_entities: Option<u64>,
    /// One entry per cluster, sorted by label.
    pub entries: Vec<PlanEntry<S>>,
}

impl<S> SamplePlan<S> {
    pub fn selected_labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(|e| e.selected).map(|e| e.label.as_str())
    }
}

fn check_totals(clusters: &[ClusterAssignment], total_entities: u64) -> Result<u64> {
    let sum: u64 = clusters.iter().map(ClusterAssignment::size).sum();
    if total_entities == 0 || sum > total_entities {
        return Err(Error::InvalidArgument(format!(
            "total entity count {total_entities} must be positive and cover the {sum} clustered nodes"
        )));
    }
    Ok(sum)
}

fn inclusion_probability<S: Scalar>(size: u64, total: u64, scale: S) -> S {
    let p = scale * S::from_u64(size).unwrap() / S::from_u64(total).unwrap();
    p.min(S::one())
}

/// Includes each cluster independently with probability
/// `min(1, scale * size / total_entities)`.
///
/// The uniform draw for a cluster depends only on `(seed, label)`.
pub fn sample_clusters<S: Scalar>(
    engine: &Engine,
    clusters: &[ClusterAssignment],
    total_entities: u64,
    seed: u64,
    scale: S,
) -> Result<SamplePlan<S>> {
    if !(scale > S::zero() && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale {scale} must be positive and finite")));
    }
    check_totals(clusters, total_entities)?;
    let mut entries: Vec<PlanEntry<S>> = engine.install(|| {
        clusters
            .par_iter()
            .map(|c| {
                let probability = inclusion_probability(c.size(), total_entities, scale);
                let draw = S::from_f64_lossy(unit_draw(seed, &c.label));
                PlanEntry {
                    label: c.label.clone(),
                    selected: draw < probability,
                    probability,
                }
            })
            .collect()
    });
    entries.sort_by(|a, b| a.label.cmp(&b.label));
    Ok(SamplePlan {
        seed,
        scale,
        total_entities,
        target_entities: None,
        entries,
    })
}

/// Expected number of sampled entities under `scale`.
pub fn expected_sample_size<S: Scalar>(clusters: &[ClusterAssignment], total_entities: u64, scale: S) -> S {
    clusters.iter().fold(S::zero(), |acc, c| {
        acc + S::from_u64(c.size()).unwrap() * inclusion_probability(c.size(), total_entities, scale)
    })
}

/// Finds the scale whose expected sample size equals `target_entities`, by bisection.
pub fn calibrate_scale<S: Scalar>(clusters: &[ClusterAssignment], total_entities: u64, target_entities: u64) -> Result<S> {
    let clustered = check_totals(clusters, total_entities)?;
    if target_entities == 0 {
        return Err(Error::InvalidArgument("target entity count must be positive".into()));
    }
    if target_entities > clustered {
        return Err(Error::UnreachableTarget {
            target: target_entities,
            max_expected: clustered as f64,
        });
    }
    let smallest = clusters.iter().map(ClusterAssignment::size).min().unwrap();
    // every cluster is certain to be drawn once scale reaches total / smallest
    let saturated = S::from_u64(total_entities).unwrap() / S::from_u64(smallest).unwrap();
    if target_entities == clustered {
        return Ok(saturated);
    }
    let target = S::from_u64(target_entities).unwrap();
    let tolerance = S::from_f64_lossy(1e-12);
    let (mut lo, mut hi) = (S::zero(), saturated);
    for _ in 0..200 {
        let mid = (lo + hi) / S::from_u8(2).unwrap();
        if expected_sample_size(clusters, total_entities, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= tolerance * hi {
            break;
        }
    }
    Ok((lo + hi) / S::from_u8(2).unwrap())
}

/// Writes `node_id<TAB>label`, one line per node, sorted by node.
pub fn write_clusters(path: impl AsRef<Path>, clusters: &[ClusterAssignment]) -> Result<()> {
    let path = path.as_ref();
    let mut rows: Vec<(&str, &str)> = clusters
        .iter()
        .flat_map(|c| c.members.iter().map(move |m| (m.as_str(), c.label.as_str())))
        .collect();
    rows.sort();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for (node, label) in rows {
        writeln!(w, "{node}\t{label}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn tsv_rows(path: &Path, columns: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(str::to_string).collect();
        if fields.len() != columns {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected {columns} columns, found {}", fields.len()),
            ));
        }
        rows.push((i + 1, fields));
    }
    Ok(rows)
}

pub fn read_clusters(path: impl AsRef<Path>) -> Result<Vec<ClusterAssignment>> {
    let path = path.as_ref();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (line, mut fields) in tsv_rows(path, 2)? {
        let label = fields.pop().unwrap();
        let node = fields.pop().unwrap();
        if let Some(first) = seen.insert(node.clone(), line) {
            return Err(Error::parse(path, line, format!("node {node:?} already labelled on line {first}")));
        }
        groups.entry(label).or_default().push(node);
    }
    Ok(groups
        .into_iter()
        .map(|(label, mut members)| {
            members.sort();
            ClusterAssignment { label, members }
        })
        .collect())
}

/// Writes `label<TAB>selected(0|1)<TAB>probability`, sorted by label.
pub fn write_plan<S: Scalar>(path: impl AsRef<Path>, plan: &SamplePlan<S>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for e in &plan.entries {
        writeln!(w, "{}\t{}\t{}", e.label, e.selected as u8, e.probability).map_err(|err| Error::io(path, err))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_plan<S: Scalar>(path: impl AsRef<Path>) -> Result<Vec<PlanEntry<S>>> {
    let path = path.as_ref();
    let mut entries = Vec::new();
    for (line, fields) in tsv_rows(path, 3)? {
        let selected = match fields[1].as_str() {
            "0" => false,
            "1" => true,
            other => return Err(Error::parse(path, line, format!("selected flag {other:?} is not 0 or 1"))),
        };
        let probability: S = fields[2]
            .parse()
            .ok()
            .filter(|p: &S| *p >= S::zero() && *p <= S::one())
            .ok_or_else(|| Error::parse(path, line, format!("bad probability {:?}", fields[2])))?;
        entries.push(PlanEntry {
            label: fields[0].clone(),
            selected,
            probability,
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::EngineConfig;

    fn engine() -> Engine {
        Engine::new(EngineConfig::default().with_workers(2).with_partitions(4)).unwrap()
    }

    fn e(a: &str, b: &str) -> AffinityEdge<f64> {
        AffinityEdge::new(a, b, 1.0).unwrap()
    }

    fn labels_of(p: &Propagation) -> Vec<(&str, &str)> {
        p.states.iter().map(|s| (s.node_id.as_str(), s.label.as_str())).collect()
    }

    #[test]
    fn triangle_converges_to_smallest_id() {
        let edges = vec![e("a", "b"), e("b", "c"), e("a", "c")];
        let one = propagate_labels(&engine(), &edges, 1).unwrap();
        assert_eq!(labels_of(&one), vec![("a", "b"), ("b", "a"), ("c", "a")]);
        let three = propagate_labels(&engine(), &edges, 3).unwrap();
        assert_eq!(labels_of(&three), vec![("a", "a"), ("b", "a"), ("c", "a")]);
        assert_eq!(three.changed_in_final_round, 0);
        assert!(three.states.iter().all(|s| s.round == 3));
    }

    #[test]
    fn disjoint_triangles_get_two_labels() {
        let edges = vec![e("a", "b"), e("b", "c"), e("a", "c"), e("x", "y"), e("y", "z"), e("x", "z")];
        let p = propagate_labels(&engine(), &edges, 3).unwrap();
        let clusters = extract_clusters(&engine(), &p.states).unwrap();
        assert_eq!(
            clusters,
            vec![
                ClusterAssignment { label: "a".into(), members: vec!["a".into(), "b".into(), "c".into()] },
                ClusterAssignment { label: "x".into(), members: vec!["x".into(), "y".into(), "z".into()] },
            ]
        );
    }

    #[test]
    fn weights_decide_the_vote() {
        // b hears label a (weight 1) and label c (weights 2 via c)
        let edges = vec![
            AffinityEdge::new("a", "b", 1.0).unwrap(),
            AffinityEdge::new("b", "c", 2.0).unwrap(),
        ];
        let p = propagate_labels(&engine(), &edges, 1).unwrap();
        assert_eq!(labels_of(&p), vec![("a", "b"), ("b", "c"), ("c", "b")]);
    }

    #[test]
    fn zero_rounds_rejected() {
        assert!(propagate_labels::<f64>(&engine(), &[], 0).is_err());
        assert!(propagate_labels::<f64>(&engine(), &[], 1).unwrap().states.is_empty());
    }

    #[test]
    fn extract_single_and_conflict() {
        let one = vec![LabelState { node_id: "a".into(), label: "a".into(), round: 1 }];
        let c = extract_clusters(&engine(), &one).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].size(), 1);

        let conflict = vec![
            LabelState { node_id: "a".into(), label: "a".into(), round: 1 },
            LabelState { node_id: "a".into(), label: "b".into(), round: 1 },
        ];
        let err = extract_clusters(&engine(), &conflict).unwrap_err();
        match err {
            Error::Stage { source, .. } => assert!(matches!(*source, Error::ConflictingLabels { .. })),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn sized(sizes: &[usize]) -> Vec<ClusterAssignment> {
        sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| ClusterAssignment {
                label: format!("L{i}"),
                members: (0..n).map(|j| format!("n{i}-{j}")).collect(),
            })
            .collect()
    }

    #[test]
    fn whole_corpus_cluster_always_selected() {
        let clusters = sized(&[100]);
        for seed in 0..50 {
            let plan = sample_clusters(&engine(), &clusters, 100, seed, 1.0).unwrap();
            assert!(plan.entries[0].selected);
            assert_eq!(plan.entries[0].probability, 1.0);
        }
    }

    #[test]
    fn sampling_preconditions() {
        let clusters = sized(&[10]);
        assert!(sample_clusters(&engine(), &clusters, 100, 1, 0.0).is_err());
        assert!(sample_clusters(&engine(), &clusters, 5, 1, 1.0).is_err());
    }

    #[test]
    fn plan_is_deterministic_across_workers() {
        let clusters = sized(&[5, 7, 1, 3, 9, 2, 2, 4]);
        let a = sample_clusters(&engine(), &clusters, 60, 99, 2.5).unwrap();
        let single = Engine::new(EngineConfig::default().with_workers(1).with_partitions(1)).unwrap();
        let b = sample_clusters(&single, &clusters, 60, 99, 2.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn calibration_examples() {
        let full = sized(&[100]);
        assert!((calibrate_scale::<f64>(&full, 100, 100).unwrap() - 1.0).abs() < 1e-12);
        let halves = sized(&[50, 50]);
        let c: f64 = calibrate_scale(&halves, 100, 25).unwrap();
        assert!((c - 0.5).abs() < 1e-9, "{c}");
        assert!((expected_sample_size(&halves, 100, c) - 25.0).abs() < 1e-6);
        match calibrate_scale::<f64>(&halves, 100, 101) {
            Err(Error::UnreachableTarget { max_expected, .. }) => assert_eq!(max_expected, 100.0),
            other => panic!("unexpected {other:?}"),
        }
        assert!(calibrate_scale::<f64>(&halves, 100, 0).is_err());
    }

    #[test]
    fn calibration_is_monotone() {
        let clusters = sized(&[1, 2, 3, 5, 8, 13, 21]);
        let mut last = 0.0f64;
        for target in 1..=53 {
            let c: f64 = calibrate_scale(&clusters, 200, target).unwrap();
            assert!(c >= last, "target {target}: {c} < {last}");
            let expected = expected_sample_size(&clusters, 200, c);
            assert!((expected - target as f64).abs() <= 1e-6 * target as f64);
            last = c;
        }
    }

    #[test]
    fn plan_and_cluster_files_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let clusters = sized(&[2, 3]);
        let plan = sample_clusters(&engine(), &clusters, 10, 3, 1.0).unwrap();
        write_plan(dir.path().join("plan.tsv"), &plan).unwrap();
        write_clusters(dir.path().join("clusters.tsv"), &clusters).unwrap();
        assert_eq!(read_plan::<f64>(dir.path().join("plan.tsv")).unwrap(), plan.entries);
        assert_eq!(read_clusters(dir.path().join("clusters.tsv")).unwrap(), clusters);
    }
}
