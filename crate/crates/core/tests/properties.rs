mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use gapgraph_core::config::{RunConfig, Variant};
use gapgraph_core::evidence::{AddOutcome, EvidenceBank, EvidenceId};
use gapgraph_core::gap::{build_search_chains, sbm_block_matrix, ChainConfig, ChainKind};
use gapgraph_core::kg::{
    bridging_score, detect_communities, EdgeId, ExtractionResult, KnowledgeGraph, MergeCluster, NewEdge, NewNode,
    NodeId,
};
use gapgraph_core::outline::{parse_outline, render_outline};
use gapgraph_core::sim::{generate_world, simulate_run, Rubric};
use proptest::prelude::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use common::{random_graph, random_partition, rng};

fn edge_evidence(kg: &KnowledgeGraph) -> BTreeMap<EdgeId, BTreeSet<EvidenceId>> {
    kg.edges().map(|e| (e.id, e.evidence_ids.clone())).collect()
}

/// A well-formed extraction over `kg`: a few fresh nodes, fresh edges between
/// any known nodes, and evidence labels that may also point at old edges.
fn random_extraction(r: &mut ChaCha8Rng, kg: &KnowledgeGraph) -> (ExtractionResult, BTreeMap<String, EvidenceId>) {
    let mut res = ExtractionResult::default();
    let mut nodes: Vec<NodeId> = kg.nodes().map(|n| n.id).collect();
    let mut next = kg.max_node_id() + 1;
    for _ in 0..r.random_range(0..3) {
        res.new_nodes.push(NewNode { id: NodeId(next), node_name: format!("fresh {next}"), is_core_entity: r.random_bool(0.2) });
        nodes.push(NodeId(next));
        next += 1;
    }
    let mut edges: Vec<EdgeId> = kg.edges().map(|e| e.id).collect();
    let mut next_edge = kg.max_edge_id() + 1;
    if nodes.len() >= 2 {
        for _ in 0..r.random_range(0..5) {
            let pick: Vec<NodeId> = nodes.choose_multiple(r, 2).copied().collect();
            res.new_edges.push(NewEdge {
                id: EdgeId(next_edge),
                source_id: pick[0],
                target_id: pick[1],
                relation_name: ["supports", "limits"].choose(r).unwrap().to_string(),
            });
            edges.push(EdgeId(next_edge));
            next_edge += 1;
        }
    }
    let mut labels = BTreeMap::new();
    if !edges.is_empty() {
        for k in 0..r.random_range(0..4u32) {
            let label = format!("EN{}", k + 1);
            let k_hit = r.random_range(1..=2);
            let hit: Vec<EdgeId> = edges.choose_multiple(r, k_hit).copied().collect();
            res.evidences_map.insert(label.clone(), hit);
            labels.insert(label, EvidenceId(500 + k));
        }
    }
    (res, labels)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bank_ids_are_dense_and_urls_unique(urls in prop::collection::vec(0u8..12, 0..40)) {
        let mut bank = EvidenceBank::new();
        let mut seen = BTreeSet::new();
        for (i, u) in urls.iter().enumerate() {
            // Trailing slash and fragment variants normalise to the same url.
            let url = match i % 3 {
                0 => format!("https://site.example/p/{u}"),
                1 => format!("https://SITE.example/p/{u}/"),
                _ => format!("https://site.example/p/{u}#frag"),
            };
            let before = bank.len();
            let out = bank.add(&url, "t", "q", "s", "c", 0).unwrap();
            if seen.insert(*u) {
                prop_assert_eq!(out, AddOutcome::Added(EvidenceId(before as u32 + 1)));
            } else {
                prop_assert_eq!(out, AddOutcome::Duplicate);
                prop_assert_eq!(bank.len(), before);
            }
        }
        prop_assert_eq!(bank.len(), seen.len());
        prop_assert_eq!(EvidenceBank::from_json(&bank.to_json()).unwrap(), bank);
    }

    #[test]
    fn extraction_never_loses_evidence(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut kg = random_graph(&mut r, 8);
        for _ in 0..3 {
            let before = edge_evidence(&kg);
            let (res, labels) = random_extraction(&mut r, &kg);
            kg.apply_extraction(&res, &labels).unwrap();
            let after = edge_evidence(&kg);
            for (e, ev) in &before {
                prop_assert!(after[e].is_superset(ev));
            }
            let added: BTreeSet<EvidenceId> = labels.values().copied().collect();
            prop_assert!(kg.evidence_ids().is_subset(&before.values().flatten().copied().chain(added).collect()));
        }
    }

    #[test]
    fn bad_extraction_leaves_graph_untouched(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut kg = random_graph(&mut r, 6);
        let (mut res, labels) = random_extraction(&mut r, &kg);
        res.evidences_map.insert("EN99".into(), vec![EdgeId(10_000)]);
        let before = kg.clone();
        prop_assert!(kg.apply_extraction(&res, &labels).is_err());
        prop_assert_eq!(kg, before);
    }

    #[test]
    fn merge_conserves_evidence(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut kg = random_graph(&mut r, 12);
        let before = kg.evidence_ids();
        let mut concepts: Vec<NodeId> = kg.nodes().filter(|n| !n.is_core_entity).map(|n| n.id).collect();
        concepts.shuffle(&mut r);
        let mut clusters = Vec::new();
        while concepts.len() >= 2 && r.random_bool(0.7) {
            let k = r.random_range(2..=concepts.len().min(5));
            let sources: Vec<NodeId> = concepts.drain(..k).collect();
            clusters.push(MergeCluster { representative: format!("merged {}", clusters.len()), sources });
        }
        let nodes_before = kg.node_count();
        let report = kg.merge_nodes(&clusters).unwrap();
        let dropped: BTreeSet<EvidenceId> = report.dropped_self_loops.iter().flat_map(|(_, ev)| ev.iter().copied()).collect();
        let kept = kg.evidence_ids();
        prop_assert_eq!(kept.union(&dropped).copied().collect::<BTreeSet<_>>(), before);
        let absorbed: usize = clusters.iter().map(|c| c.sources.len() - 1).sum();
        prop_assert_eq!(kg.node_count(), nodes_before - absorbed);
        for e in kg.edges() {
            prop_assert!(e.source != e.target);
            prop_assert!(kg.node(e.source).is_ok() && kg.node(e.target).is_ok());
        }
    }

    #[test]
    fn partitions_cover_every_node(seed in any::<u64>()) {
        let mut r = rng(seed);
        let kg = random_graph(&mut r, 20);
        let p = detect_communities(&kg, seed);
        prop_assert!(p.validate(&kg).is_ok());
        prop_assert_eq!(p.assignment.len(), kg.node_count());
        let labels: BTreeSet<u32> = p.assignment.values().copied().collect();
        prop_assert_eq!(labels, (0..p.num_communities() as u32).collect::<BTreeSet<_>>());
        prop_assert_eq!(detect_communities(&kg, seed), p);
    }

    #[test]
    fn bridging_is_a_fraction(seed in any::<u64>()) {
        let mut r = rng(seed);
        let kg = random_graph(&mut r, 15);
        let p = random_partition(&mut r, &kg);
        for n in kg.nodes() {
            let b = bridging_score(&kg, &p, n.id).unwrap();
            prop_assert!((0.0..=1.0).contains(&b), "{b}");
        }
    }

    #[test]
    fn block_probabilities_are_open_unit(seed in any::<u64>(), alpha in 0.001f64..5.0) {
        let mut r = rng(seed);
        let kg = random_graph(&mut r, 15);
        let p = random_partition(&mut r, &kg);
        let b = sbm_block_matrix(&kg, &p, alpha).unwrap();
        for row in &b.probs {
            for x in row {
                prop_assert!(*x > 0.0 && *x < 1.0, "{x}");
            }
        }
    }

    #[test]
    fn chains_respect_budget_and_order(seed in any::<u64>(), budget in 1usize..40) {
        let mut r = rng(seed);
        let kg = random_graph(&mut r, 14);
        let p = random_partition(&mut r, &kg);
        let cfg = ChainConfig { budget, ..ChainConfig::default() };
        let chains = build_search_chains(&kg, &p, &cfg).unwrap();
        prop_assert!(chains.len() <= budget);
        prop_assert_eq!(&chains, &build_search_chains(&kg, &p, &cfg).unwrap());
        for (i, c) in chains.iter().enumerate() {
            prop_assert_eq!(&c.chain_id, &format!("chain_{}", i + 1));
        }
        let rank = |k: ChainKind| match k {
            ChainKind::Enrich => 0,
            ChainKind::ExploreSim => 1,
            ChainKind::ExploreSbm => 2,
            ChainKind::ExploreHole => 3,
        };
        prop_assert!(chains.windows(2).all(|w| rank(w[0].kind) <= rank(w[1].kind)));
        // Enrich: unsupported edges first, then by score.
        let enrich: Vec<(bool, f64)> = chains
            .iter()
            .filter(|c| c.kind == ChainKind::Enrich)
            .map(|c| (!kg.edge(c.edge.unwrap()).unwrap().evidence_ids.is_empty(), c.score))
            .collect();
        for w in enrich.windows(2) {
            prop_assert!(w[0].0 <= w[1].0);
            if w[0].0 == w[1].0 {
                prop_assert!(w[0].1 >= w[1].1);
            }
        }
        let pairs: BTreeSet<(NodeId, NodeId)> = chains.iter().filter(|c| c.kind != ChainKind::Enrich).map(|c| c.pair()).collect();
        prop_assert_eq!(pairs.len(), chains.iter().filter(|c| c.kind != ChainKind::Enrich).count());
    }

    #[test]
    fn outline_render_parse_round_trips(shape in prop::collection::vec((0usize..3, 0usize..3, prop::collection::btree_set(1u32..40, 0..3)), 1..6)) {
        // Per section: subsection count, points per subsection, and the ids
        // cited on every line of that section.
        let cite = |ids: &BTreeSet<u32>| {
            if ids.is_empty() {
                String::new()
            } else {
                format!(" <citation>{}</citation>", ids.iter().map(|i| format!("id_{i}")).collect::<Vec<_>>().join(", "))
            }
        };
        let mut lines = vec!["Report".to_string()];
        for (s, (subs, points, ids)) in shape.iter().enumerate() {
            let s = s + 1;
            lines.push(format!("{s}. Section {s}{}", cite(ids)));
            for sub in 1..=*subs {
                lines.push(format!("    {s}.{sub} Part {sub}{}", cite(ids)));
                for letter in ["a", "b", "c"].iter().take(*points) {
                    lines.push(format!("        {letter}. Point {letter}{}", cite(ids)));
                }
            }
        }
        let og = parse_outline(&lines.join("\n")).unwrap();
        let again = parse_outline(&render_outline(&og, true)).unwrap();
        prop_assert_eq!(&again, &og);
        let want: BTreeSet<EvidenceId> = shape.iter().flat_map(|(_, _, c)| c.iter().map(|k| EvidenceId(*k))).collect();
        prop_assert_eq!(og.all_citations(), want);
        prop_assert!(!og.without_citations().has_citations());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn simulated_coverage_never_falls(seed in 0u64..1000, dual in any::<bool>()) {
        let w = Arc::new(generate_world(seed, 3, 18, 3, 1).unwrap());
        let run = RunConfig { max_iter: 4, ..RunConfig::default() };
        let v = if dual { Variant::DualGraph } else { Variant::OutlineOnly };
        let a = simulate_run(&w, v, &run, &Rubric::default()).unwrap();
        prop_assert!(a.coverage.windows(2).all(|p| p[0] <= p[1]), "{:?}", a.coverage);
        prop_assert!(a.coverage.iter().all(|c| (0.0..=1.0).contains(c)));
        prop_assert_eq!(a, simulate_run(&w, v, &run, &Rubric::default()).unwrap());
    }
}
