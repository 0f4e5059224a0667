//! Reference implementations used to check the engine-backed code.
//!
//! Nothing here touches the engine or shares helpers with the library code
//! it checks.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use windtunnel::corpus_io::QRelRecord;
use windtunnel::graph_builder::AffinityEdge;

pub type EdgeMap = BTreeMap<(String, String), f64>;

/// Affinity by brute force: every unordered entity pair, every query.
pub fn affinity_oracle(qrels: &[QRelRecord<f64>], tau: f64) -> EdgeMap {
    let mut judged: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in qrels.iter().filter(|r| r.score > tau) {
        let s = judged.entry(&r.query_id).or_default().entry(&r.entity_id).or_insert(f64::NEG_INFINITY);
        *s = s.max(r.score);
    }
    let entities: BTreeSet<&str> = judged.values().flat_map(|m| m.keys().copied()).collect();
    let entities: Vec<&str> = entities.into_iter().collect();
    let mut out = EdgeMap::new();
    for i in 0..entities.len() {
        for j in i + 1..entities.len() {
            let (x, y) = (entities[i], entities[j]);
            let mut best: Option<f64> = None;
            for scores in judged.values() {
                if let (Some(&sx), Some(&sy)) = (scores.get(x), scores.get(y)) {
                    let m = if sx < sy { sx } else { sy };
                    best = Some(best.map_or(m, |b: f64| if m > b { m } else { b }));
                }
            }
            if let Some(w) = best {
                out.insert((x.to_string(), y.to_string()), w);
            }
        }
    }
    out
}

pub fn edge_map(edges: &[AffinityEdge<f64>]) -> EdgeMap {
    edges
        .iter()
        .map(|e| ((e.entity_a.clone(), e.entity_b.clone()), e.affinity))
        .collect()
}

/// Synchronous label propagation, one node at a time.
pub fn propagation_oracle(edges: &[AffinityEdge<f64>], rounds: u32) -> (BTreeMap<String, String>, usize) {
    let mut adjacency: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for e in edges {
        adjacency.entry(e.entity_a.clone()).or_default().push((e.entity_b.clone(), e.affinity));
        adjacency.entry(e.entity_b.clone()).or_default().push((e.entity_a.clone(), e.affinity));
    }
    let mut labels: BTreeMap<String, String> = adjacency.keys().map(|n| (n.clone(), n.clone())).collect();
    let mut changed = 0;
    for _ in 0..rounds {
        let mut next = BTreeMap::new();
        for (node, neighbours) in &adjacency {
            let mut support: BTreeMap<&str, f64> = BTreeMap::new();
            for (n, w) in neighbours {
                *support.entry(labels[n].as_str()).or_insert(0.0) += w;
            }
            let top = support.values().cloned().fold(f64::NEG_INFINITY, f64::max);
            // BTreeMap iterates labels in ascending order
            let winner = support.iter().find(|(_, &s)| s == top).unwrap().0;
            next.insert(node.clone(), winner.to_string());
        }
        changed = next.iter().filter(|(n, l)| labels[*n] != **l).count();
        labels = next;
    }
    (labels, changed)
}

/// Connected components by union-find.
pub fn components(edges: &[AffinityEdge<f64>]) -> BTreeMap<String, usize> {
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for e in edges {
        for n in [&e.entity_a, &e.entity_b] {
            let len = index.len();
            index.entry(n).or_insert(len);
        }
    }
    let mut parent: Vec<usize> = (0..index.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for e in edges {
        let (a, b) = (find(&mut parent, index[e.entity_a.as_str()]), find(&mut parent, index[e.entity_b.as_str()]));
        parent[a] = b;
    }
    index
        .iter()
        .map(|(n, &i)| (n.to_string(), find(&mut parent, i)))
        .collect()
}

/// Yule-Simon log-likelihood using the product form of the Beta function:
/// B(1, r+1) = 1/(r+1) and B(k+1, r+1) = B(k, r+1) * k / (k + r + 1).
pub fn yule_simon_loglik(histogram: &BTreeMap<u64, u64>, rho: f64) -> f64 {
    let mut total = 0.0;
    let mut log_b = -(rho + 1.0).ln();
    let mut k = 1u64;
    for (&degree, &count) in histogram {
        while k < degree {
            log_b += (k as f64).ln() - (k as f64 + rho + 1.0).ln();
            k += 1;
        }
        total += count as f64 * (rho.ln() + log_b);
    }
    total
}

/// Maximum-likelihood rho by a coarse grid, then a fine grid around the best point.
pub fn grid_mle(histogram: &BTreeMap<u64, u64>, lo: f64, hi: f64) -> f64 {
    let argmax = |from: f64, to: f64, step: f64| {
        let n = ((to - from) / step).round() as usize;
        (0..=n)
            .map(|i| from + i as f64 * step)
            .filter(|r| *r > 0.0)
            .map(|r| (r, yule_simon_loglik(histogram, r)))
            .fold((f64::NAN, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
            .0
    };
    let coarse = argmax(lo, hi, 0.01);
    argmax((coarse - 0.02).max(lo), (coarse + 0.02).min(hi), 1e-4)
}

/// Random qrels over at most `max_queries` queries and `max_entities` entities.
pub fn random_qrels(rng: &mut ChaCha8Rng, max_queries: usize, max_entities: usize) -> Vec<QRelRecord<f64>> {
    let nq = rng.random_range(1..=max_queries);
    let ne = rng.random_range(1..=max_entities);
    let density: f64 = rng.random_range(0.02..0.4);
    let mut qrels = Vec::new();
    for q in 0..nq {
        for e in 0..ne {
            if rng.random_bool(density) {
                // a handful of repeated score levels so ties and equal mins happen
                let score = if rng.random_bool(0.5) {
                    rng.random_range(0..5) as f64
                } else {
                    rng.random_range(0.0..4.0)
                };
                qrels.push(QRelRecord::new(format!("q{q}"), format!("e{e}"), score));
            }
        }
    }
    qrels
}

/// Random graph with weights that are multiples of 1/8, so weight sums are
/// exact whatever order they are added in.
pub fn random_graph(rng: &mut ChaCha8Rng, max_nodes: usize) -> Vec<AffinityEdge<f64>> {
    let n = rng.random_range(2..=max_nodes);
    let p: f64 = rng.random_range(0.5..6.0) / n as f64;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p.min(1.0)) {
                let w = rng.random_range(1..=16) as f64 / 8.0;
                edges.extend(AffinityEdge::new(format!("n{i:03}"), format!("n{j:03}"), w));
            }
        }
    }
    if edges.is_empty() {
        edges.extend(AffinityEdge::new("n000", "n001", 1.0));
    }
    edges
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
