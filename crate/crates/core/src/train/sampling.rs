use rand::seq::index::sample;

use super::TrainError;
use crate::corpus::{Corpus, Qrels};
use crate::rng::stream_rng;

pub const DEFAULT_NEGATIVES: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TrainingExample {
    pub qid: String,
    pub docid: String,
    pub label: bool,
}

/// One true example per judged positive plus `negatives` false ones drawn
/// uniformly, without replacement, from documents not relevant to the query.
///
/// Positives are visited in (query, doc) order; negatives for the i-th
/// positive come from their own seeded stream.
pub fn sample_training_set(
    qrels: &Qrels,
    corpus: &Corpus,
    negatives: usize,
    seed: u64,
) -> Result<Vec<TrainingExample>, TrainError> {
    let mut out = Vec::new();
    for (i, (q, d)) in qrels.positives().into_iter().enumerate() {
        out.push(TrainingExample {
            qid: q.to_string(),
            docid: d.to_string(),
            label: true,
        });
        if negatives == 0 {
            continue;
        }
        let relevant = qrels.relevant(q);
        let pool: Vec<&str> = corpus.ids().filter(|id| !relevant.contains(id)).collect();
        if pool.len() < negatives {
            return Err(TrainError::CorpusTooSmall {
                query: q.to_string(),
                needed: negatives,
                available: pool.len(),
            });
        }
        let mut rng = stream_rng(&[seed, i as u64]);
        for j in sample(&mut rng, pool.len(), negatives) {
            out.push(TrainingExample {
                qid: q.to_string(),
                docid: pool[j].to_string(),
                label: false,
            });
        }
    }
    Ok(out)
}
