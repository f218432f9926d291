use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Map,
    Ndcg(usize),
    Recall(usize),
    CappedRecall(usize),
}

impl Metric {
    pub fn defaults() -> Vec<Metric> {
        vec![
            Metric::Map,
            Metric::Ndcg(10),
            Metric::Recall(100),
            Metric::CappedRecall(100),
        ]
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Map => write!(f, "map"),
            Metric::Ndcg(k) => write!(f, "ndcg@{k}"),
            Metric::Recall(k) => write!(f, "recall@{k}"),
            Metric::CappedRecall(k) => write!(f, "capped_recall@{k}"),
        }
    }
}

impl FromStr for Metric {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        if lower == "map" {
            return Ok(Metric::Map);
        }
        let unknown = || EvalError::UnknownMetric(s.to_string());
        let (name, k) = lower.split_once('@').ok_or_else(unknown)?;
        let k: usize = k.parse().map_err(|_| unknown())?;
        if k == 0 {
            return Err(EvalError::ZeroCutoff);
        }
        match name {
            "ndcg" => Ok(Metric::Ndcg(k)),
            "recall" => Ok(Metric::Recall(k)),
            "capped_recall" => Ok(Metric::CappedRecall(k)),
            _ => Err(unknown()),
        }
    }
}

fn check_unique<S: AsRef<str>>(ranking: &[S]) -> Result<(), EvalError> {
    let mut seen = HashSet::with_capacity(ranking.len());
    for d in ranking {
        if !seen.insert(d.as_ref()) {
            return Err(EvalError::DuplicateDoc(d.as_ref().to_string()));
        }
    }
    Ok(())
}

/// Uncapped average precision over the full ranking; 0 with no relevant docs.
pub fn average_precision<S: AsRef<str>>(ranking: &[S], relevant: &BTreeSet<&str>) -> Result<f64, EvalError> {
    check_unique(ranking)?;
    if relevant.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, d) in ranking.iter().enumerate() {
        if relevant.contains(d.as_ref()) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / relevant.len() as f64)
}

/// Linear-gain DCG with `log2(rank + 1)` discount.
pub fn dcg_at_k(gains: impl IntoIterator<Item = f64>, k: usize) -> f64 {
    gains
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, g)| g / ((i + 2) as f64).log2())
        .sum::<f64>()
        + 0.0 // an empty float sum is -0.0
}

pub fn ndcg_at_k<S: AsRef<str>>(
    ranking: &[S],
    grades: Option<&BTreeMap<String, u32>>,
    k: usize,
) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroCutoff);
    }
    check_unique(ranking)?;
    let Some(grades) = grades else { return Ok(0.0) };
    let mut ideal: Vec<u32> = grades.values().copied().filter(|g| *g > 0).collect();
    if ideal.is_empty() {
        return Ok(0.0);
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg_at_k(ideal.iter().map(|g| f64::from(*g)), k);
    let dcg = dcg_at_k(
        ranking
            .iter()
            .map(|d| f64::from(grades.get(d.as_ref()).copied().unwrap_or(0))),
        k,
    );
    Ok(dcg / idcg)
}

/// `hits@k / |relevant|`, or `hits@k / min(k, |relevant|)` when capped.
pub fn recall_at_k<S: AsRef<str>>(
    ranking: &[S],
    relevant: &BTreeSet<&str>,
    k: usize,
    capped: bool,
) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroCutoff);
    }
    check_unique(ranking)?;
    if relevant.is_empty() {
        return Ok(0.0);
    }
    let hits = ranking.iter().take(k).filter(|d| relevant.contains(d.as_ref())).count();
    let denom = if capped { k.min(relevant.len()) } else { relevant.len() };
    Ok(hits as f64 / denom as f64)
}
