//! Planted-community corpora for end-to-end checks.
//!
//! Each community owns `community_size` entities, of which only
//! `judged_per_community` are ever judged; the rest are auxiliary. One broad
//! query per community judges all of its judged entities, and the remaining
//! queries each judge `narrow_judgments` of them. Queries never judge entities
//! outside their own community. All judgments have score 1.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus_io::{EntityRecord, QRelRecord, QueryRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantedConfig {
    pub communities: usize,
    pub community_size: usize,
    pub judged_per_community: usize,
    pub queries_per_community: usize,
    pub narrow_judgments: usize,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            communities: 200,
            community_size: 50,
            judged_per_community: 6,
            queries_per_community: 10,
            narrow_judgments: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCorpus {
    pub queries: Vec<QueryRecord>,
    pub entities: Vec<EntityRecord>,
    pub qrels: Vec<QRelRecord<f64>>,
    /// Community index of every entity, parallel to `entities`.
    pub community_of: Vec<usize>,
}

pub fn planted_corpus(config: &PlantedConfig, seed: u64) -> PlantedCorpus {
    assert!(config.judged_per_community <= config.community_size);
    assert!(config.narrow_judgments <= config.judged_per_community);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = PlantedCorpus {
        queries: Vec::new(),
        entities: Vec::new(),
        qrels: Vec::new(),
        community_of: Vec::new(),
    };
    for c in 0..config.communities {
        let ids: Vec<String> = (0..config.community_size).map(|j| format!("c{c:04}e{j:03}")).collect();
        for id in &ids {
            out.entities.push(EntityRecord {
                entity_id: id.clone(),
                content: format!("passage {id} about topic {c}"),
            });
            out.community_of.push(c);
        }
        let judged: Vec<&String> = sample(&mut rng, config.community_size, config.judged_per_community)
            .into_iter()
            .map(|j| &ids[j])
            .collect();
        for qi in 0..config.queries_per_community {
            let query_id = format!("c{c:04}q{qi:03}");
            out.queries.push(QueryRecord {
                query_id: query_id.clone(),
                content: format!("question {qi} on topic {c}"),
            });
            let picks: Vec<&String> = if qi == 0 {
                judged.clone()
            } else {
                sample(&mut rng, judged.len(), config.narrow_judgments)
                    .into_iter()
                    .map(|j| judged[j])
                    .collect()
            };
            for e in picks {
                out.qrels.push(QRelRecord::new(query_id.clone(), e.clone(), 1.0));
            }
        }
    }
    out
}
