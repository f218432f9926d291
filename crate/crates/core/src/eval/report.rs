use std::fmt::Write as _;

use super::{average_precision, ndcg_at_k, recall_at_k, EvalError, Metric, RunRanking};
use crate::corpus::Qrels;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub metrics: Vec<Metric>,
    /// `(qid, metric, value)` in query order, then metric order.
    pub per_query: Vec<(String, Metric, f64)>,
    /// Unweighted mean over evaluated queries, per metric.
    pub means: Vec<(Metric, f64)>,
}

impl EvalReport {
    pub fn mean(&self, metric: Metric) -> Option<f64> {
        self.means.iter().find(|(m, _)| *m == metric).map(|(_, v)| *v)
    }

    pub fn value(&self, qid: &str, metric: Metric) -> Option<f64> {
        self.per_query
            .iter()
            .find(|(q, m, _)| q == qid && *m == metric)
            .map(|(_, _, v)| *v)
    }

    /// `qid,metric,value` rows followed by one `all` row per metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("qid,metric,value\n");
        for (q, m, v) in &self.per_query {
            let _ = writeln!(out, "{q},{m},{v:.6}");
        }
        for (m, v) in &self.means {
            let _ = writeln!(out, "all,{m},{v:.6}");
        }
        out
    }

    pub fn to_pretty(&self) -> String {
        let mut out = String::new();
        let queries = self.per_query.len() / self.metrics.len().max(1);
        let _ = writeln!(out, "queries evaluated: {queries}");
        for (m, v) in &self.means {
            let _ = writeln!(out, "{:<20} {v:.4}", m.to_string());
        }
        out
    }
}

pub fn evaluate_run(run: &RunRanking, qrels: &Qrels, metrics: &[Metric]) -> Result<EvalReport, EvalError> {
    if run.is_empty() {
        return Err(EvalError::EmptyRun);
    }
    let mut per_query = Vec::new();
    let mut sums = vec![0.0; metrics.len()];
    let mut count = 0usize;
    for (qid, _) in run.iter() {
        if !qrels.contains_query(qid) {
            log::warn!("query `{qid}` has no judgments; scored as 0");
        }
        let ranking = run.doc_ids(qid);
        let relevant = qrels.relevant(qid);
        for (j, m) in metrics.iter().enumerate() {
            let v = match m {
                Metric::Map => average_precision(&ranking, &relevant)?,
                Metric::Ndcg(k) => ndcg_at_k(&ranking, qrels.judged(qid), *k)?,
                Metric::Recall(k) => recall_at_k(&ranking, &relevant, *k, false)?,
                Metric::CappedRecall(k) => recall_at_k(&ranking, &relevant, *k, true)?,
            };
            sums[j] += v;
            per_query.push((qid.to_string(), *m, v));
        }
        count += 1;
    }
    let means = metrics.iter().zip(sums).map(|(m, s)| (*m, s / count as f64)).collect();
    Ok(EvalReport {
        metrics: metrics.to_vec(),
        per_query,
        means,
    })
}
