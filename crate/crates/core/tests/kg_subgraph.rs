mod common;

use std::collections::{BTreeMap, BTreeSet};

use kgrank::kg::{
    extract_subgraph, link_entities, KnowledgeGraph, MentionSource, Provenance, QuerySubgraph, SubgraphCache,
    INTERACTION_RELATION,
};
use kgrank::oracle::two_hop_subgraph;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Edge = (String, String, String);

/// Every node is registered through the lexicon so isolated seeds resolve.
fn kg_of(g: &common::RandomGraph, triples: &[Edge]) -> KnowledgeGraph {
    let lexicon = g.nodes.iter().map(|n| (n.clone(), n.clone()));
    KnowledgeGraph::from_parts(triples.iter().cloned(), lexicon).unwrap()
}

fn node_and_edge_sets(sg: &QuerySubgraph) -> (BTreeSet<String>, BTreeSet<Edge>) {
    let nodes = sg.kg_node_ids().map(str::to_string).collect();
    let edges = sg
        .kg_edges()
        .map(|e| {
            (
                sg.nodes[e.source].id.clone(),
                e.relation.clone(),
                sg.nodes[e.target].id.clone(),
            )
        })
        .collect();
    (nodes, edges)
}

#[test]
fn uncapped_extraction_equals_path_enumeration_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..200 {
        let g = common::random_graph(&mut rng, 50);
        let kg = kg_of(&g, &g.triples);
        let sg = extract_subgraph(&kg, &g.query_seeds, &g.doc_seeds, usize::MAX).unwrap();
        let (nodes, edges) = node_and_edge_sets(&sg);
        let (want_nodes, want_edges) = two_hop_subgraph(&g.triples, &g.query_seeds, &g.doc_seeds);
        assert_eq!(nodes, want_nodes, "trial {trial}");
        assert_eq!(edges, want_edges, "trial {trial}");
        // the interaction node is first and wired both ways to every KG node
        assert_eq!(sg.nodes[0].provenance, Provenance::Interaction);
        let int_edges = sg.edges.iter().filter(|e| e.relation == INTERACTION_RELATION).count();
        assert_eq!(int_edges, 2 * (sg.num_nodes() - 1));
    }
}

/// Priority order by brute force: provenance class, then the number of
/// distinct seeds a bridge touches (descending), then node id.
fn priority_order(g: &common::RandomGraph, all: &BTreeSet<String>) -> Vec<(String, Provenance)> {
    let adjacent = |a: &str, b: &str| {
        a != b
            && g.triples
                .iter()
                .any(|(h, _, t)| (h == a && t == b) || (h == b && t == a))
    };
    let seeds: BTreeSet<&String> = g.query_seeds.union(&g.doc_seeds).collect();
    let mut keyed: Vec<(Provenance, usize, String)> = all
        .iter()
        .map(|n| {
            let (q, d) = (g.query_seeds.contains(n), g.doc_seeds.contains(n));
            let prov = match (q, d) {
                (true, true) => Provenance::Both,
                (true, false) => Provenance::QuerySeed,
                (false, true) => Provenance::DocSeed,
                (false, false) => Provenance::Bridge,
            };
            let degree = if prov == Provenance::Bridge {
                seeds.iter().filter(|s| adjacent(s, n)).count()
            } else {
                0
            };
            (prov, usize::MAX - degree, n.clone())
        })
        .collect();
    keyed.sort();
    keyed.into_iter().map(|(p, _, n)| (n, p)).collect()
}

#[test]
fn capping_follows_the_priority_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut capped_cases = 0;
    for trial in 0..200 {
        let g = common::random_graph(&mut rng, 30);
        let kg = kg_of(&g, &g.triples);
        let (all, _) = two_hop_subgraph(&g.triples, &g.query_seeds, &g.doc_seeds);
        if all.is_empty() {
            continue;
        }
        let want = priority_order(&g, &all);
        let cap = rng.random_range(1..=all.len());
        capped_cases += usize::from(cap < all.len());
        let sg = extract_subgraph(&kg, &g.query_seeds, &g.doc_seeds, cap).unwrap();
        let got: Vec<(String, Provenance)> = sg.nodes.iter().skip(1).map(|n| (n.id.clone(), n.provenance)).collect();
        assert_eq!(got, want[..cap].to_vec(), "trial {trial} cap {cap}");
        // retained edges are exactly the parent edges among retained nodes
        let kept: BTreeSet<&str> = got.iter().map(|(n, _)| n.as_str()).collect();
        let (_, edges) = node_and_edge_sets(&sg);
        let want_edges: BTreeSet<Edge> = g
            .triples
            .iter()
            .filter(|(h, _, t)| kept.contains(h.as_str()) && kept.contains(t.as_str()))
            .cloned()
            .collect();
        assert_eq!(edges, want_edges);
    }
    assert!(capped_cases > 50, "too few capped cases: {capped_cases}");
}

#[test]
fn bridge_nodes_connect_two_distinct_seeds() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let g = common::random_graph(&mut rng, 25);
        let kg = kg_of(&g, &g.triples);
        let sg = extract_subgraph(&kg, &g.query_seeds, &g.doc_seeds, usize::MAX).unwrap();
        let seeds: BTreeSet<usize> = g
            .query_seeds
            .union(&g.doc_seeds)
            .map(|s| kg.index_of(s).unwrap())
            .collect();
        for n in sg.nodes.iter().filter(|n| n.provenance == Provenance::Bridge) {
            let w = kg.index_of(&n.id).unwrap();
            let touching = kg.neighbors(w).iter().filter(|x| seeds.contains(x)).count();
            assert!(touching >= 2, "{} touches {touching} seeds", n.id);
        }
    }
}

#[test]
fn cache_round_trips_byte_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cache = SubgraphCache::new();
    for i in 0..10 {
        let g = common::random_graph(&mut rng, 15);
        let kg = kg_of(&g, &g.triples);
        cache.insert(
            format!("q{}", i % 3),
            format!("d{i}"),
            extract_subgraph(&kg, &g.query_seeds, &g.doc_seeds, 10).unwrap(),
        );
    }
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("cache.jsonl");
    cache.save(&p).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    let back = SubgraphCache::load(&p).unwrap();
    assert_eq!(back.len(), cache.len());
    assert_eq!(back.get("q1", "d4"), cache.get("q1", "d4"));
    back.save(&p).unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), bytes);
}

#[test]
fn linking_then_extraction_finds_the_bridge() {
    let kg = KnowledgeGraph::from_parts(
        vec![
            ("gpc6".into(), "associated_with".into(), "omim_x".into()),
            ("omim_x".into(), "phenotype_of".into(), "brachy".into()),
        ],
        vec![
            ("gpc6".into(), "GPC6".into()),
            ("brachy".into(), "omodysplasia".into()),
            ("omim_x".into(), "glypican disorder".into()),
        ],
    )
    .unwrap();
    let q: BTreeSet<String> = link_entities("Which disease is caused by GPC6 mutations?", &kg, MentionSource::Query)
        .into_iter()
        .map(|m| m.node)
        .collect();
    let d: BTreeSet<String> = link_entities("Autosomal recessive omodysplasia ...", &kg, MentionSource::Document)
        .into_iter()
        .map(|m| m.node)
        .collect();
    let sg = extract_subgraph(&kg, &q, &d, 10).unwrap();
    let ids: Vec<&str> = sg.kg_node_ids().collect();
    assert_eq!(ids, ["gpc6", "brachy", "omim_x"]);
    assert!(sg.has_bridge());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn extraction_ignores_triple_order(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_graph(&mut rng, 20);
        let mut shuffled = g.triples.clone();
        shuffled.shuffle(&mut rng);
        let a = extract_subgraph(&kg_of(&g, &g.triples), &g.query_seeds, &g.doc_seeds, 6).unwrap();
        let b = extract_subgraph(&kg_of(&g, &shuffled), &g.query_seeds, &g.doc_seeds, 6).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn seed_sides_are_symmetric_in_node_set(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_graph(&mut rng, 20);
        let kg = kg_of(&g, &g.triples);
        let a = extract_subgraph(&kg, &g.query_seeds, &g.doc_seeds, usize::MAX).unwrap();
        let b = extract_subgraph(&kg, &g.doc_seeds, &g.query_seeds, usize::MAX).unwrap();
        prop_assert_eq!(node_and_edge_sets(&a), node_and_edge_sets(&b));
    }

    #[test]
    fn cap_bounds_the_retained_nodes(seed in 0u64..10_000, cap in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_graph(&mut rng, 20);
        let sg = extract_subgraph(&kg_of(&g, &g.triples), &g.query_seeds, &g.doc_seeds, cap).unwrap();
        prop_assert!(sg.num_nodes() <= cap + 1);
        let provs: Vec<Provenance> = sg.nodes.iter().map(|n| n.provenance).collect();
        let mut sorted = provs.clone();
        sorted.sort();
        prop_assert_eq!(provs, sorted);
        let counts: BTreeMap<Provenance, usize> = sg.nodes.iter().fold(BTreeMap::new(), |mut m, n| {
            *m.entry(n.provenance).or_default() += 1;
            m
        });
        prop_assert_eq!(counts[&Provenance::Interaction], 1);
    }
}
