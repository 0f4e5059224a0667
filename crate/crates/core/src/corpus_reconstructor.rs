//! Turns a set of sampled entities back into a `(queries, corpus, qrels)` sample.
//!
//! Both samplers share one closure rule: keep every qrel whose entity was
//! sampled, then every query that still has a qrel. Records are copied
//! verbatim from the source tables.

use std::collections::{BTreeSet, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus_io::{CorpusSample, EntityRecord, QRelRecord, QueryRecord};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::graph_sampler::{ClusterAssignment, PlanEntry};
use crate::scalar::Scalar;

/// Builds the sample for the clusters selected in `plan`.
pub fn reconstruct<S: Scalar>(
    engine: &Engine,
    plan: &[PlanEntry<S>],
    clusters: &[ClusterAssignment],
    queries: &[QueryRecord],
    entities: &[EntityRecord],
    qrels: &[QRelRecord<S>],
) -> Result<CorpusSample<S>> {
    let known: HashSet<&str> = clusters.iter().map(|c| c.label.as_str()).collect();
    if let Some(unknown) = plan.iter().find(|e| !known.contains(e.label.as_str())) {
        return Err(Error::InvalidArgument(format!(
            "plan label {:?} does not name a cluster",
            unknown.label
        )));
    }
    let selected: HashSet<&str> = plan.iter().filter(|e| e.selected).map(|e| e.label.as_str()).collect();
    let members: HashSet<&str> = clusters
        .iter()
        .filter(|c| selected.contains(c.label.as_str()))
        .flat_map(|c| c.members.iter().map(String::as_str))
        .collect();
    assemble(engine, &members, queries, entities, qrels)
}

/// Uniform random sample of `k` entities without replacement, closed over
/// qrels and queries like [`reconstruct`].
pub fn uniform_sample<S: Scalar>(
    engine: &Engine,
    entities: &[EntityRecord],
    queries: &[QueryRecord],
    qrels: &[QRelRecord<S>],
    k: usize,
    seed: u64,
) -> Result<CorpusSample<S>> {
    if k == 0 || k > entities.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {k} of {} entities",
            entities.len()
        )));
    }
    // draw over the id-sorted table so input order does not matter
    let ids: Vec<&str> = entities
        .iter()
        .map(|e| e.entity_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: HashSet<&str> = rand::seq::index::sample(&mut rng, ids.len(), k)
        .into_iter()
        .map(|i| ids[i])
        .collect();
    assemble(engine, &chosen, queries, entities, qrels)
}

fn assemble<S: Scalar>(
    engine: &Engine,
    chosen: &HashSet<&str>,
    queries: &[QueryRecord],
    entities: &[EntityRecord],
    qrels: &[QRelRecord<S>],
) -> Result<CorpusSample<S>> {
    let entity_join = engine.stage(
        "sample-entities",
        |e: &EntityRecord| {
            Ok(if chosen.contains(e.entity_id.as_str()) {
                vec![(e.entity_id.clone(), e.content.clone())]
            } else {
                vec![]
            })
        },
        |id: &String, contents: Vec<String>| {
            if contents.len() > 1 {
                return Err(Error::InvalidArgument(format!("entity id {id:?} appears more than once")));
            }
            Ok(contents
                .into_iter()
                .map(|content| EntityRecord { entity_id: id.clone(), content })
                .collect::<Vec<_>>())
        },
    );
    let sampled_entities: Vec<EntityRecord> = engine.run_stage(entities, &entity_join)?;
    if sampled_entities.len() < chosen.len() {
        let found: HashSet<&str> = sampled_entities.iter().map(|e| e.entity_id.as_str()).collect();
        let missing = chosen.iter().filter(|id| !found.contains(*id)).min().unwrap();
        return Err(Error::MissingEntity(missing.to_string()));
    }

    let qrel_join = engine.stage(
        "sample-qrels",
        |r: &QRelRecord<S>| {
            Ok(if chosen.contains(r.entity_id.as_str()) {
                vec![((r.query_id.clone(), r.entity_id.clone()), r.score)]
            } else {
                vec![]
            })
        },
        |(q, e): &(String, String), scores: Vec<S>| {
            let best = scores.into_iter().fold(S::neg_infinity(), S::max);
            Ok(vec![QRelRecord::new(q.clone(), e.clone(), best)])
        },
    );
    let sampled_qrels: Vec<QRelRecord<S>> = engine.run_stage(qrels, &qrel_join)?;

    let judged: HashSet<&str> = sampled_qrels.iter().map(|r| r.query_id.as_str()).collect();
    let query_join = engine.stage(
        "sample-queries",
        |q: &QueryRecord| {
            Ok(if judged.contains(q.query_id.as_str()) {
                vec![(q.query_id.clone(), q.content.clone())]
            } else {
                vec![]
            })
        },
        |id: &String, contents: Vec<String>| {
            if contents.len() > 1 {
                return Err(Error::InvalidArgument(format!("query id {id:?} appears more than once")));
            }
            Ok(contents
                .into_iter()
                .map(|content| QueryRecord { query_id: id.clone(), content })
                .collect::<Vec<_>>())
        },
    );
    let sampled_queries: Vec<QueryRecord> = engine.run_stage(queries, &query_join)?;
    if sampled_queries.len() < judged.len() {
        let found: HashSet<&str> = sampled_queries.iter().map(|q| q.query_id.as_str()).collect();
        let missing = judged.iter().filter(|id| !found.contains(*id)).min().unwrap();
        return Err(Error::Closure(format!("qrels reference query {missing:?} missing from the query table")));
    }

    let sample = CorpusSample::new(sampled_queries, sampled_entities, sampled_qrels);
    sample.validate()?;
    Ok(sample)
}
