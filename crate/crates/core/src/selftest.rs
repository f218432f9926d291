//! Quick internal consistency checks run by `kgrank selftest`.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Document;
use crate::eval::{average_precision, ndcg_at_k, recall_at_k};
use crate::index::build_index;
use crate::kg::{extract_subgraph, KnowledgeGraph, QuerySubgraph};
use crate::model::{kl_closed_form, ModelConfig, Noise, PairInput, RankerModel, Vocab};
use crate::oracle;
use crate::tensor::{finite_diff_check, Array, GradCheckOptions, ParamStore, Tape, TensorError};
use crate::train::loss_var;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Configuration used by the full-model gradient check.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        text_layers: 1,
        fused_layers: 1,
        d_text: 16,
        d_graph: 8,
        heads: 2,
        d_bottleneck: 4,
        d_proj: 8,
        ff_mult: 2,
        max_len: 16,
        alpha: 0.01,
        text_only: false,
        node_seed: 5,
    }
}

/// A tiny model and one prepared pair with a bridged subgraph.
pub fn tiny_instance(config: ModelConfig, seed: u64) -> Result<(RankerModel, PairInput)> {
    let kg = KnowledgeGraph::from_parts(
        vec![
            ("a".into(), "r1".into(), "w".into()),
            ("w".into(), "r2".into(), "b".into()),
            ("b".into(), "r1".into(), "c".into()),
        ],
        vec![
            ("a".into(), "alpha".into()),
            ("b".into(), "beta".into()),
            ("w".into(), "omega".into()),
        ],
    )?;
    let vocab = Vocab::build(["alpha beta gamma delta omega"]);
    let model = RankerModel::new(config, vocab, kg.relations(), seed)?;
    let sg = extract_subgraph(&kg, ["a"], ["b"], 10)?;
    let input = model.prepare("alpha gamma", "beta delta unknownword", &sg)?;
    Ok((model, input))
}

/// Largest relative error of the training objective's gradient at a fixed
/// noise draw.
pub fn model_gradient_error(
    model: &RankerModel,
    input: &PairInput,
    label: bool,
    noise: &Noise,
    opts: GradCheckOptions,
) -> Result<f64> {
    let report = finite_diff_check(
        model.params(),
        |tape: &mut Tape, bound| -> std::result::Result<_, crate::Error> {
            let vars = model.forward(tape, bound, input, noise)?;
            Ok(loss_var(tape, &vars, label, model.config().alpha)?.0)
        },
        opts,
    )?;
    Ok(report.max_rel_error)
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn gradients() -> Result<Check> {
    let (model, input) = tiny_instance(tiny_config(), 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let noise = Noise::standard(model.config(), &mut rng);
    let err = model_gradient_error(
        &model,
        &input,
        true,
        &noise,
        GradCheckOptions {
            step: 1e-4,
            max_coords: 150,
            seed: 3,
        },
    )?;
    Ok(check(
        "model gradient",
        err < 1e-4,
        format!("max relative error {err:.2e}"),
    ))
}

fn quadratic() -> Result<Check> {
    let mut store = ParamStore::new();
    store.insert("w", Array::filled(&[1, 3], 1.0));
    let report = finite_diff_check(
        &store,
        |tape: &mut Tape, b| -> std::result::Result<_, TensorError> {
            let w = b.get("w")?;
            let sq = tape.mul(w, w)?;
            tape.sum(sq)
        },
        GradCheckOptions::default(),
    )?;
    Ok(check(
        "quadratic gradient",
        report.max_rel_error <= 1e-10,
        format!("max relative error {:.2e}", report.max_rel_error),
    ))
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<String>, BTreeMap<String, u32>) {
    let n = rng.random_range(1..=20);
    let mut docs: Vec<String> = (0..n + 5).map(|i| format!("d{i}")).collect();
    let mut grades = BTreeMap::new();
    for d in &docs {
        if rng.random_bool(0.3) {
            grades.insert(d.clone(), rng.random_range(0..=3));
        }
    }
    for i in (1..docs.len()).rev() {
        docs.swap(i, rng.random_range(0..=i));
    }
    docs.truncate(n);
    (docs, grades)
}

fn metrics(instances: usize) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (ranking, grades) = random_instance(&mut rng);
        let rel_owned: BTreeSet<String> = grades.iter().filter(|(_, g)| **g > 0).map(|(d, _)| d.clone()).collect();
        let rel: BTreeSet<&str> = rel_owned.iter().map(String::as_str).collect();
        let k = rng.random_range(1..=25);
        let pairs = [
            (
                average_precision(&ranking, &rel)?,
                oracle::average_precision(&ranking, &rel_owned),
            ),
            (
                ndcg_at_k(&ranking, Some(&grades), k)?,
                oracle::ndcg(&ranking, &grades, k),
            ),
            (
                recall_at_k(&ranking, &rel, k, false)?,
                oracle::recall(&ranking, &rel_owned, k, false),
            ),
            (
                recall_at_k(&ranking, &rel, k, true)?,
                oracle::recall(&ranking, &rel_owned, k, true),
            ),
        ];
        for (a, b) in pairs {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(check(
        "metric oracles",
        worst <= 1e-12,
        format!("max deviation {worst:.1e}"),
    ))
}

fn subgraphs(graphs: usize) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = 0;
    for _ in 0..graphs {
        let n = rng.random_range(2..=30);
        let m = rng.random_range(1..=3 * n);
        let triples: Vec<(String, String, String)> = (0..m)
            .map(|_| {
                (
                    format!("n{}", rng.random_range(0..n)),
                    format!("r{}", rng.random_range(0..3)),
                    format!("n{}", rng.random_range(0..n)),
                )
            })
            .collect();
        let kg = KnowledgeGraph::from_parts(triples.clone(), Vec::new())?;
        let pick = |rng: &mut ChaCha8Rng| -> BTreeSet<String> {
            (0..rng.random_range(0..4))
                .map(|_| kg.node_id(rng.random_range(0..kg.num_nodes())).to_string())
                .collect()
        };
        let (vq, vd) = (pick(&mut rng), pick(&mut rng));
        let sg: QuerySubgraph = extract_subgraph(&kg, &vq, &vd, usize::MAX)?;
        let got_nodes: BTreeSet<String> = sg.kg_node_ids().map(str::to_string).collect();
        let got_edges: BTreeSet<(String, String, String)> = sg
            .kg_edges()
            .map(|e| {
                (
                    sg.nodes[e.source].id.clone(),
                    e.relation.clone(),
                    sg.nodes[e.target].id.clone(),
                )
            })
            .collect();
        let mut dedup = triples.clone();
        dedup.sort();
        dedup.dedup();
        let (nodes, edges) = oracle::two_hop_subgraph(&dedup, &vq, &vd);
        if nodes != got_nodes || edges != got_edges {
            failures += 1;
        }
    }
    Ok(check(
        "subgraph oracle",
        failures == 0,
        format!("{failures}/{graphs} mismatches"),
    ))
}

fn kl() -> Result<Check> {
    let zero = kl_closed_form(&[0.0, 0.0], &[1.0, 1.0])?;
    let half = kl_closed_form(&[1.0], &[1.0])?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mu, sigma) = ([0.4, -0.8], [0.6, 1.3]);
    let (mc, _) = oracle::kl_monte_carlo(&mu, &sigma, 100_000, &mut rng);
    let exact = kl_closed_form(&mu, &sigma)?;
    let ok = zero.abs() < 1e-12 && (half - 0.5).abs() < 1e-12 && (mc - exact).abs() < 2e-2;
    Ok(check(
        "kl closed form",
        ok,
        format!("kl(0,1)={zero:.1e} kl(1,1)={half} mc {mc:.4} vs {exact:.4}"),
    ))
}

fn bm25() -> Result<Check> {
    let docs = vec![Document::new("d", "a")];
    let idx = build_index(&docs)?;
    let s = idx.bm25_score(&["a".to_string()], "d")?;
    let expect = (4.0f64 / 3.0).ln();
    Ok(check(
        "bm25 single document",
        (s - expect).abs() < 1e-12,
        format!("{s:.6} vs {expect:.6}"),
    ))
}

type CheckFn = Box<dyn Fn() -> Result<Check>>;

/// Run every check; errors count as failures.
pub fn run_selftest() -> Vec<Check> {
    let runs: Vec<(&'static str, CheckFn)> = vec![
        ("quadratic gradient", Box::new(quadratic)),
        ("model gradient", Box::new(gradients)),
        ("metric oracles", Box::new(|| metrics(200))),
        ("subgraph oracle", Box::new(|| subgraphs(50))),
        ("kl closed form", Box::new(kl)),
        ("bm25 single document", Box::new(bm25)),
    ];
    runs.into_iter()
        .map(|(name, f)| f().unwrap_or_else(|e| check(name, false, e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    #[test]
    fn selftest_passes() {
        for c in super::run_selftest() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
