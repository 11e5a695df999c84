//! Random DAG fixtures and a two-direction BFS closure oracle.

use rand::seq::SliceRandom;
use rand::Rng;

/// A random DAG as a plain edge list. Edges are `(child, parent)` pairs over
/// node indices `0..names.len()`.
#[derive(Debug, Clone)]
pub struct RandomDag {
    pub names: Vec<String>,
    pub edges: Vec<(usize, usize)>,
}

impl RandomDag {
    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Serializes the DAG in the `N`/`E` hierarchy text format. Node lines are
    /// emitted in index order, edge lines in a shuffled order.
    pub fn to_hierarchy_text<R: Rng>(&self, rng: &mut R) -> String {
        let mut out = String::from("# generated fixture\n");
        for (i, name) in self.names.iter().enumerate() {
            out.push_str(&format!("N {name} lemma_{i},Alt_Lemma_{i}\n"));
        }
        let mut edges = self.edges.clone();
        edges.shuffle(rng);
        for (c, p) in edges {
            out.push_str(&format!("E {} {}\n", self.names[c], self.names[p]));
        }
        out
    }
}

/// Generates a DAG on `n` nodes. A hidden random topological order is drawn,
/// then every pair is connected (later -> earlier) with probability
/// `density`. Node names are random so that lexicographic order differs from
/// the hidden order.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize, density: f64) -> RandomDag {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let names = (0..n)
        .map(|i| format!("s{:04}.n.{:02}", rng.random_range(0..10_000u32), i))
        .collect();
    let mut edges = Vec::new();
    for hi in 0..n {
        for lo in 0..hi {
            if rng.random_bool(density) {
                // order[hi] comes later in the hidden order, so it is the child.
                edges.push((order[hi], order[lo]));
            }
        }
    }
    RandomDag { names, edges }
}

/// Closure by repeated full scans of the edge list until nothing changes,
/// once upwards (child -> parent) and once downwards.
pub fn bfs_closure(n: usize, edges: &[(usize, usize)], seed: usize) -> Vec<bool> {
    let mut up = vec![false; n];
    up[seed] = true;
    loop {
        let mut changed = false;
        for &(c, p) in edges {
            if up[c] && !up[p] {
                up[p] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut down = vec![false; n];
    down[seed] = true;
    loop {
        let mut changed = false;
        for &(c, p) in edges {
            if down[p] && !down[c] {
                down[c] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    up.iter().zip(&down).map(|(a, b)| *a || *b).collect()
}

/// Expansion oracle: OR of the original bits with the union of per-seed
/// closures, restricted to classes that map onto a node.
pub fn expand_oracle(
    n: usize,
    edges: &[(usize, usize)],
    class_nodes: &[Option<usize>],
    labels: &[bool],
) -> Vec<bool> {
    let mut reached = vec![false; n];
    for (c, &bit) in labels.iter().enumerate() {
        if let (true, Some(node)) = (bit, class_nodes[c]) {
            for (i, r) in bfs_closure(n, edges, node).into_iter().enumerate() {
                reached[i] |= r;
            }
        }
    }
    labels
        .iter()
        .zip(class_nodes)
        .map(|(&bit, node)| bit || node.map(|i| reached[i]).unwrap_or(false))
        .collect()
}

/// Random vocabulary over a DAG: `c` classes, each mapped to a distinct node
/// with probability `mapped`, otherwise unmapped.
pub fn random_vocab<R: Rng>(rng: &mut R, n: usize, c: usize, mapped: f64) -> Vec<Option<usize>> {
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(rng);
    (0..c)
        .map(|i| {
            if i < n && rng.random_bool(mapped) {
                Some(nodes[i])
            } else {
                None
            }
        })
        .collect()
}

pub fn random_bits<R: Rng>(rng: &mut R, len: usize, p: f64) -> Vec<bool> {
    (0..len).map(|_| rng.random_bool(p)).collect()
}

/// Vocabulary file text for a class→node mapping.
pub fn vocab_text(dag: &RandomDag, class_nodes: &[Option<usize>]) -> String {
    let mut out = String::new();
    for (i, node) in class_nodes.iter().enumerate() {
        match node {
            Some(n) => out.push_str(&format!("class {i}\t{}\n", dag.names[*n])),
            None => out.push_str(&format!("class {i}\n")),
        }
    }
    out
}
