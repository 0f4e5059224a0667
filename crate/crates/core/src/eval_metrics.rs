//! Precision@k over run files and sample-level density statistics.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::corpus_io::{CorpusSample, QRelRecord, RunRecord};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_K: usize = 3;
/// Binary relevance convention: a judgment counts when its score is at least 1.
pub const DEFAULT_RELEVANCE_THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrecisionReport<S> {
    pub k: usize,
    pub per_query: BTreeMap<String, S>,
    pub mean: S,
    pub judged_queries: usize,
}

/// Mean precision@k over every query that has at least one qrel.
///
/// Run rows are ordered by their rank column. A query returning fewer than `k`
/// results still divides by `k`, and a judged query absent from the run scores 0.
pub fn precision_at_k<S: Scalar>(
    run: &[RunRecord<S>],
    qrels: &[QRelRecord<S>],
    k: usize,
    relevance_threshold: S,
) -> Result<PrecisionReport<S>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut relevant: HashMap<(&str, &str), bool> = HashMap::new();
    let mut judged: BTreeMap<&str, ()> = BTreeMap::new();
    for r in qrels {
        judged.insert(r.query_id.as_str(), ());
        let hit = relevant.entry((r.query_id.as_str(), r.entity_id.as_str())).or_insert(false);
        *hit |= r.score >= relevance_threshold;
    }

    let mut ranked: HashMap<&str, Vec<(u64, &str)>> = HashMap::new();
    for r in run {
        if judged.contains_key(r.query_id.as_str()) {
            ranked.entry(r.query_id.as_str()).or_default().push((r.rank, r.entity_id.as_str()));
        }
    }

    let k_s = S::from_usize(k).unwrap();
    let mut per_query = BTreeMap::new();
    let mut total = S::zero();
    for &query in judged.keys() {
        let hits = ranked.get_mut(query).map_or(0, |results| {
            results.sort_unstable();
            results
                .iter()
                .take(k)
                .filter(|(_, e)| relevant.get(&(query, *e)).copied().unwrap_or(false))
                .count()
        });
        let p = S::from_usize(hits).unwrap() / k_s;
        total = total + p;
        per_query.insert(query.to_string(), p);
    }
    let judged_queries = per_query.len();
    let mean = if judged_queries == 0 {
        S::zero()
    } else {
        total / S::from_usize(judged_queries).unwrap()
    };
    Ok(PrecisionReport {
        k,
        per_query,
        mean,
        judged_queries,
    })
}

/// How `rho_q` is derived from a sample's counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityDefinition {
    /// Distinct queries divided by distinct entities.
    QueriesPerEntity,
}

pub const DENSITY_DEFINITION: DensityDefinition = DensityDefinition::QueriesPerEntity;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityReport {
    pub definition: DensityDefinition,
    pub query_count: usize,
    pub entity_count: usize,
    pub judged_entity_count: usize,
    pub qrel_count: usize,
    pub rho_q: f64,
}

pub fn query_density<S: Scalar>(sample: &CorpusSample<S>) -> Result<DensityReport> {
    if sample.entities.is_empty() {
        return Err(Error::InvalidArgument("query density of a sample without entities".into()));
    }
    let query_count = sample.queries.len();
    let entity_count = sample.entities.len();
    let rho_q = match DENSITY_DEFINITION {
        DensityDefinition::QueriesPerEntity => query_count as f64 / entity_count as f64,
    };
    Ok(DensityReport {
        definition: DENSITY_DEFINITION,
        query_count,
        entity_count,
        judged_entity_count: sample.judged_entity_count(),
        qrel_count: sample.qrels.len(),
        rho_q,
    })
}

/// Share of each retained query's original judgments that survive in a sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreservationReport {
    pub retained_qrels: usize,
    /// Original qrels belonging to the queries the sample kept.
    pub original_qrels: usize,
    pub fraction: f64,
}

pub fn qrel_preservation<S: Scalar>(sample: &CorpusSample<S>, original: &[QRelRecord<S>]) -> PreservationReport {
    let kept: HashMap<&str, ()> = sample.queries.iter().map(|q| (q.query_id.as_str(), ())).collect();
    let original_qrels = original.iter().filter(|r| kept.contains_key(r.query_id.as_str())).count();
    let retained_qrels = sample.qrels.len();
    let fraction = if original_qrels == 0 {
        1.0
    } else {
        retained_qrels as f64 / original_qrels as f64
    };
    PreservationReport {
        retained_qrels,
        original_qrels,
        fraction,
    }
}
