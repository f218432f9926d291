//! Slow reference implementations, written straight from the definitions.
//!
//! They share no code with the fast paths and back the self-test and the
//! test suites.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::corpus::Document;
use crate::text::tokenize;

/// Score every document against `terms` without an index.
pub fn bm25_table(docs: &[Document], terms: &[String], k1: f64, b: f64) -> Vec<(String, f64)> {
    let toks: Vec<Vec<String>> = docs.iter().map(|d| tokenize(&d.text)).collect();
    let n = docs.len() as f64;
    let avg = if docs.is_empty() {
        0.0
    } else {
        toks.iter().map(Vec::len).sum::<usize>() as f64 / n
    };
    docs.iter()
        .zip(&toks)
        .map(|(d, dt)| {
            let mut s = 0.0;
            for t in terms {
                let tf = dt.iter().filter(|w| *w == t).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = toks.iter().filter(|x| x.contains(t)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                let norm = 1.0 - b + b * dt.len() as f64 / avg;
                s += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
            (d.id.clone(), s)
        })
        .collect()
}

/// Exhaustive top list: positive scores, descending, id ascending.
pub fn bm25_ranking(docs: &[Document], terms: &[String]) -> Vec<(String, f64)> {
    let mut t: Vec<(String, f64)> = bm25_table(docs, terms, 1.2, 0.75)
        .into_iter()
        .filter(|(_, s)| *s > 0.0)
        .collect();
    t.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    t
}

fn precision_at(ranking: &[String], relevant: &BTreeSet<String>, k: usize) -> f64 {
    ranking[..k].iter().filter(|d| relevant.contains(*d)).count() as f64 / k as f64
}

pub fn average_precision(ranking: &[String], relevant: &BTreeSet<String>) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for k in 1..=ranking.len() {
        if relevant.contains(&ranking[k - 1]) {
            total += precision_at(ranking, relevant, k);
        }
    }
    total / relevant.len() as f64
}

pub fn ndcg(ranking: &[String], grades: &BTreeMap<String, u32>, k: usize) -> f64 {
    let discount = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let mut dcg = 0.0;
    for rank in 1..=k.min(ranking.len()) {
        dcg += f64::from(*grades.get(&ranking[rank - 1]).unwrap_or(&0)) * discount(rank);
    }
    // ideal: repeatedly take the largest remaining grade
    let mut pool: Vec<u32> = grades.values().copied().filter(|g| *g > 0).collect();
    let mut idcg = 0.0;
    for rank in 1..=k {
        let Some((pos, g)) = pool.iter().copied().enumerate().max_by_key(|(_, g)| *g) else {
            break;
        };
        pool.remove(pos);
        idcg += f64::from(g) * discount(rank);
    }
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

pub fn recall(ranking: &[String], relevant: &BTreeSet<String>, k: usize, capped: bool) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let mut hits = 0;
    for d in relevant {
        if ranking.iter().take(k).any(|r| r == d) {
            hits += 1;
        }
    }
    let denom = if capped && k < relevant.len() {
        k
    } else {
        relevant.len()
    };
    hits as f64 / denom as f64
}

/// Node and edge sets of the 2-hop subgraph by direct path enumeration over
/// a raw triple list. Edges are `(head, relation, tail)`.
pub fn two_hop_subgraph(
    triples: &[(String, String, String)],
    query_seeds: &BTreeSet<String>,
    doc_seeds: &BTreeSet<String>,
) -> (BTreeSet<String>, BTreeSet<(String, String, String)>) {
    let adjacent =
        |a: &str, b: &str| a != b && triples.iter().any(|(h, _, t)| (h == a && t == b) || (h == b && t == a));
    let seeds: BTreeSet<String> = query_seeds.union(doc_seeds).cloned().collect();
    let mut all_nodes: BTreeSet<&str> = BTreeSet::new();
    for (h, _, t) in triples {
        all_nodes.insert(h);
        all_nodes.insert(t);
    }
    let mut nodes = seeds.clone();
    for a in &seeds {
        for b in &seeds {
            if a == b {
                continue;
            }
            for w in &all_nodes {
                if *w != a && *w != b && adjacent(a, w) && adjacent(w, b) {
                    nodes.insert(w.to_string());
                }
            }
        }
    }
    let edges = triples
        .iter()
        .filter(|(h, _, t)| nodes.contains(h) && nodes.contains(t))
        .cloned()
        .collect();
    (nodes, edges)
}

/// Monte Carlo `E[ln N(z; mu, sigma) - ln N(z; 0, 1)]` with its standard error.
///
/// Draws come in antithetic pairs `(eps, -eps)`, which cancels the term linear
/// in `eps`; `samples` counts individual draws.
pub fn kl_monte_carlo<R: Rng>(mu: &[f64], sigma: &[f64], samples: usize, rng: &mut R) -> (f64, f64) {
    let pairs = (samples / 2).max(1);
    let (mut sum, mut sq) = (0.0, 0.0);
    let mut eps = vec![0.0; mu.len()];
    for _ in 0..pairs {
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        let mut v = 0.0;
        for sign in [1.0, -1.0] {
            for ((m, s), e) in mu.iter().zip(sigma).zip(&eps) {
                let e = sign * e;
                let z = m + s * e;
                // ln N(z; m, s) - ln N(z; 0, 1)
                v += 0.5 * (-s.ln() - 0.5 * e * e + 0.5 * z * z);
            }
        }
        sum += v;
        sq += v * v;
    }
    let n = pairs as f64;
    let mean = sum / n;
    let var = (sq / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}

fn log_normal_pdf(z: &[f64], mu: &[f64], sigma: &[f64]) -> f64 {
    z.iter()
        .zip(mu)
        .zip(sigma)
        .map(|((z, m), s)| {
            let u = (z - m) / s;
            -0.5 * u * u - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
        })
        .sum()
}

/// Mutual information of a discrete `x` with Gaussian `z | x`, estimated by
/// sampling, against the average `KL(p(z|x) || N(0, I))` bound.
#[derive(Debug, Clone, PartialEq)]
pub struct MiBound {
    pub mi_estimate: f64,
    pub mi_std_error: f64,
    pub mean_kl: f64,
}

impl MiBound {
    pub fn holds(&self) -> bool {
        self.mi_estimate <= self.mean_kl + 3.0 * self.mi_std_error
    }
}

pub fn mi_bound<R: Rng>(
    weights: &[f64],
    mus: &[Vec<f64>],
    sigmas: &[Vec<f64>],
    samples: usize,
    rng: &mut R,
) -> MiBound {
    let total: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..samples {
        let mut u: f64 = rng.random();
        let mut k = probs.len() - 1;
        for (i, p) in probs.iter().enumerate() {
            if u < *p {
                k = i;
                break;
            }
            u -= p;
        }
        let z: Vec<f64> = mus[k]
            .iter()
            .zip(&sigmas[k])
            .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let cond = log_normal_pdf(&z, &mus[k], &sigmas[k]);
        let logs: Vec<f64> = (0..probs.len())
            .map(|j| probs[j].ln() + log_normal_pdf(&z, &mus[j], &sigmas[j]))
            .collect();
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let marginal = m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        let v = cond - marginal;
        sum += v;
        sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sq / n - mean * mean).max(0.0);
    let mean_kl = probs
        .iter()
        .zip(mus.iter().zip(sigmas))
        .map(|(p, (m, s))| {
            p * 0.5
                * m.iter()
                    .zip(s)
                    .map(|(m, s)| m * m + s * s - 1.0 - (s * s).ln())
                    .sum::<f64>()
        })
        .sum();
    MiBound {
        mi_estimate: mean,
        mi_std_error: (var / n).sqrt(),
        mean_kl,
    }
}
