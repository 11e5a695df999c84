use lhst_core::{expand_labels, expanded_mask, HierarchyGraph, LabelVector, SynsetId, Vocabulary};
use lhst_testkit::dag::{bfs_closure, expand_oracle, random_bits, random_dag, random_vocab, vocab_text, RandomDag};
use lhst_testkit::rng;
use proptest::prelude::*;
use rand::Rng;

fn load(dag: &RandomDag, seed: u64) -> HierarchyGraph {
    HierarchyGraph::parse_str(&dag.to_hierarchy_text(&mut rng(seed))).unwrap()
}

/// Core node index for generator node `i`.
fn node(graph: &HierarchyGraph, dag: &RandomDag, i: usize) -> usize {
    graph.index_of(&SynsetId::new(dag.names[i].clone()).unwrap()).unwrap()
}

#[test]
fn thousand_node_fixture_counts() {
    let dag = random_dag(&mut rng(1000), 1000, 0.004);
    let graph = load(&dag, 1);
    assert_eq!(graph.node_count(), dag.node_count());
    assert_eq!(graph.edge_count(), dag.edge_count());
    assert!(dag.edge_count() > 1000, "fixture too sparse: {}", dag.edge_count());
}

#[test]
fn closure_matches_bfs_on_random_dags() {
    let mut r = rng(7);
    for trial in 0..40 {
        let n = r.random_range(1..=80);
        let density = r.random_range(0.0..0.15);
        let dag = random_dag(&mut r, n, density);
        let graph = load(&dag, trial);
        for seed in 0..n {
            let oracle = bfs_closure(n, &dag.edges, seed);
            let mask = graph.closure_mask(node(&graph, &dag, seed), None);
            for i in 0..n {
                assert_eq!(mask[node(&graph, &dag, i)], oracle[i], "trial {trial} seed {seed} node {i}");
            }
            let ids = graph.closure(&SynsetId::new(dag.names[seed].clone()).unwrap()).unwrap();
            assert_eq!(ids.len(), oracle.iter().filter(|&&b| b).count());
        }
    }
}

#[test]
fn edge_order_does_not_matter() {
    let dag = random_dag(&mut rng(3), 60, 0.1);
    let a = load(&dag, 10);
    let b = load(&dag, 11);
    assert_eq!(a.edges().collect::<Vec<_>>(), b.edges().collect::<Vec<_>>());
}

#[test]
fn back_edge_is_a_cycle() {
    let mut r = rng(5);
    for trial in 0..20 {
        let mut dag = random_dag(&mut r, 30, 0.2);
        let Some(&(c, p)) = dag.edges.first() else { continue };
        // closing the loop through an existing edge
        dag.edges.push((p, c));
        let err = HierarchyGraph::parse_str(&dag.to_hierarchy_text(&mut rng(trial))).unwrap_err();
        assert_eq!(err.kind(), "CycleError");
    }
}

struct Case {
    dag: RandomDag,
    graph: HierarchyGraph,
    classes: Vec<Option<usize>>,
    vocab: Vocabulary,
}

fn case(seed: u64) -> Case {
    let mut r = rng(seed);
    let n = r.random_range(1..=40);
    let density = r.random_range(0.0..0.2);
    let dag = random_dag(&mut r, n, density);
    let c = r.random_range(1..=n + 5);
    let classes = random_vocab(&mut r, n, c, 0.8);
    let graph = load(&dag, seed);
    let vocab = Vocabulary::parse_str(&vocab_text(&dag, &classes), &graph).unwrap();
    Case {
        dag,
        graph,
        classes,
        vocab,
    }
}

fn bits(seed: u64, len: usize) -> LabelVector {
    let mut r = rng(seed);
    let p = r.random_range(0.0..0.5);
    LabelVector::new(random_bits(&mut r, len, p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn expansion_matches_oracle(seed in any::<u64>(), label_seed in any::<u64>()) {
        let k = case(seed);
        let y = bits(label_seed, k.vocab.len());
        let got = expand_labels(&k.graph, &k.vocab, &y).unwrap();
        let want = expand_oracle(k.dag.node_count(), &k.dag.edges, &k.classes, y.bits());
        prop_assert_eq!(got.bits(), &want[..]);
    }

    #[test]
    fn expansion_is_monotone(seed in any::<u64>(), label_seed in any::<u64>()) {
        let k = case(seed);
        let y = bits(label_seed, k.vocab.len());
        let e = expand_labels(&k.graph, &k.vocab, &y).unwrap();
        prop_assert!(e.covers(&y));
        // and order preserving
        let bigger = y.union(&bits(label_seed ^ 1, k.vocab.len())).unwrap();
        let eb = expand_labels(&k.graph, &k.vocab, &bigger).unwrap();
        prop_assert!(eb.covers(&e));
    }

    #[test]
    fn expansion_distributes_over_union(seed in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        let k = case(seed);
        let y1 = bits(a, k.vocab.len());
        let y2 = bits(b, k.vocab.len());
        let lhs = expand_labels(&k.graph, &k.vocab, &y1.union(&y2).unwrap()).unwrap();
        let rhs = expand_labels(&k.graph, &k.vocab, &y1)
            .unwrap()
            .union(&expand_labels(&k.graph, &k.vocab, &y2).unwrap())
            .unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    /// A second pass re-seeds from every class reached by the first, so it
    /// equals the oracle applied to the first result.
    #[test]
    fn second_pass_reseeds_from_reached_classes(seed in any::<u64>(), label_seed in any::<u64>()) {
        let k = case(seed);
        let y = bits(label_seed, k.vocab.len());
        let once = expand_labels(&k.graph, &k.vocab, &y).unwrap();
        let twice = expand_labels(&k.graph, &k.vocab, &once).unwrap();
        let want = expand_oracle(k.dag.node_count(), &k.dag.edges, &k.classes, once.bits());
        prop_assert_eq!(twice.bits(), &want[..]);
        prop_assert!(twice.covers(&once));
    }

    #[test]
    fn mask_is_xor(seed in any::<u64>(), label_seed in any::<u64>()) {
        let k = case(seed);
        let y = bits(label_seed, k.vocab.len());
        let e = expand_labels(&k.graph, &k.vocab, &y).unwrap();
        let mask = expanded_mask(&y, &e).unwrap();
        for c in 0..y.len() {
            prop_assert_eq!(mask.get(c), y.get(c) ^ e.get(c));
        }
    }
}

/// Up-and-down expansion is not idempotent: a leaf reaches its parent, and
/// the parent then reaches the leaf's siblings.
#[test]
fn expansion_is_not_idempotent_through_siblings() {
    let graph = HierarchyGraph::parse_str(
        "N mammal.n.01 aquatic_mammal\nN seal.n.01 seal\nN dolphin.n.01 dolphin\n\
         E seal.n.01 mammal.n.01\nE dolphin.n.01 mammal.n.01\n",
    )
    .unwrap();
    let vocab = Vocabulary::parse_str("mammal\tmammal.n.01\nseal\tseal.n.01\ndolphin\tdolphin.n.01\n", &graph).unwrap();
    let once = expand_labels(&graph, &vocab, &LabelVector::one_hot(3, 1)).unwrap();
    assert_eq!(once.bits(), &[true, true, false]);
    let twice = expand_labels(&graph, &vocab, &once).unwrap();
    assert_eq!(twice.bits(), &[true, true, true]);
}
