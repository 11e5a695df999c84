//! Hypernym/hyponym graph, class vocabulary, and label expansion.
//!
//! A [`HierarchyGraph`] is a validated DAG of synsets whose edges point from
//! a hyponym (child) to its hypernym (parent). Expanding an image label sets
//! every vocabulary class whose synset lies in the ancestor-or-descendant
//! closure of an already set class. Siblings and cousins are never reached.
//!
//! Text format, one record per line:
//!
//! ```text
//! # comment
//! N mammal.n.01 mammal
//! N seal.n.09 seal,true_seal
//! E seal.n.09 mammal.n.01
//! ```
//!
//! Nodes must be declared before any edge uses them.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::io::BufRead;

use crate::error::{Error, Result};

/// Opaque synset identifier such as `mammal.n.01`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SynsetId(String);

impl SynsetId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(Error::Invariant(format!(
                "synset id {id:?} must be non-empty without whitespace"
            )));
        }
        Ok(SynsetId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SynsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lowercases and turns underscores into spaces.
pub fn normalize_lemma(raw: &str) -> String {
    raw.trim().to_lowercase().replace('_', " ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synset {
    pub id: SynsetId,
    pub lemmas: Vec<String>,
}

/// Collects nodes and edges before validation.
#[derive(Debug, Default)]
pub struct HierarchyBuilder {
    nodes: BTreeMap<SynsetId, Vec<String>>,
    edges: Vec<(SynsetId, SynsetId)>,
}

impl HierarchyBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `false` if the id was already declared.
    pub fn add_node<I, S>(&mut self, id: SynsetId, lemmas: I) -> bool
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if self.nodes.contains_key(&id) {
            return false;
        }
        let lemmas = lemmas
            .into_iter()
            .map(|l| normalize_lemma(l.as_ref()))
            .collect();
        self.nodes.insert(id, lemmas);
        true
    }

    pub fn contains(&self, id: &SynsetId) -> bool {
        self.nodes.contains_key(id)
    }

    /// Adds a hyponym -> hypernym edge.
    pub fn add_edge(&mut self, child: SynsetId, parent: SynsetId) {
        self.edges.push((child, parent));
    }

    pub fn build(self) -> Result<HierarchyGraph> {
        let index: HashMap<SynsetId, usize> = self
            .nodes
            .keys()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let n = index.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for (child, parent) in &self.edges {
            let lookup = |id: &SynsetId| {
                index.get(id).copied().ok_or_else(|| Error::DanglingEdge {
                    line: 0,
                    node: id.to_string(),
                })
            };
            let (c, p) = (lookup(child)?, lookup(parent)?);
            parents[c].push(p);
            children[p].push(c);
        }
        let mut edge_count = 0;
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        for list in &parents {
            edge_count += list.len();
        }
        let synsets = self
            .nodes
            .into_iter()
            .map(|(id, lemmas)| Synset { id, lemmas })
            .collect();
        let graph = HierarchyGraph {
            synsets,
            index,
            parents,
            children,
            edge_count,
        };
        graph.check_acyclic()?;
        Ok(graph)
    }
}

/// Validated, immutable hypernym DAG. Nodes are stored in lexicographic
/// order of their ids, so node indices are deterministic for a given input.
#[derive(Debug, Clone)]
pub struct HierarchyGraph {
    synsets: Vec<Synset>,
    index: HashMap<SynsetId, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    edge_count: usize,
}

impl PartialEq for HierarchyGraph {
    fn eq(&self, other: &Self) -> bool {
        self.synsets == other.synsets && self.parents == other.parents
    }
}

impl HierarchyGraph {
    /// Parses the line-oriented `N`/`E` format.
    pub fn load<R: BufRead>(source: R) -> Result<Self> {
        let mut builder = HierarchyBuilder::new();
        for (i, line) in source.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (tag, rest) = split_token(line);
            match tag {
                "N" => {
                    let (id, lemmas) = split_token(rest);
                    let id = SynsetId::new(id).map_err(|_| Error::parse(lineno, "missing node id"))?;
                    let lemmas: Vec<&str> = lemmas
                        .split(',')
                        .map(str::trim)
                        .filter(|l| !l.is_empty())
                        .collect();
                    if lemmas.is_empty() {
                        return Err(Error::parse(lineno, format!("node {id} has no lemmas")));
                    }
                    if !builder.add_node(id.clone(), lemmas) {
                        return Err(Error::parse(lineno, format!("duplicate node {id}")));
                    }
                }
                "E" => {
                    let fields: Vec<&str> = rest.split_whitespace().collect();
                    if fields.len() != 2 {
                        return Err(Error::parse(lineno, "edge needs exactly <child> <parent>"));
                    }
                    let mut ids = Vec::with_capacity(2);
                    for f in fields {
                        let id = SynsetId(f.to_string());
                        if !builder.contains(&id) {
                            return Err(Error::DanglingEdge {
                                line: lineno,
                                node: f.to_string(),
                            });
                        }
                        ids.push(id);
                    }
                    let parent = ids.pop().unwrap();
                    let child = ids.pop().unwrap();
                    builder.add_edge(child, parent);
                }
                other => {
                    return Err(Error::parse(lineno, format!("unknown record type {other:?}")));
                }
            }
        }
        builder.build()
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        Self::load(text.as_bytes())
    }

    pub fn node_count(&self) -> usize {
        self.synsets.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn synsets(&self) -> &[Synset] {
        &self.synsets
    }

    pub fn synset(&self, node: usize) -> &Synset {
        &self.synsets[node]
    }

    pub fn index_of(&self, id: &SynsetId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &SynsetId) -> bool {
        self.index.contains_key(id)
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    /// Edges as `(child, parent)` node-index pairs, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (c, p)))
    }

    /// Seed plus all transitive hypernyms and hyponyms, as synset ids.
    pub fn closure(&self, seed: &SynsetId) -> Result<Vec<SynsetId>> {
        self.closure_with_depth(seed, None)
    }

    pub fn closure_with_depth(
        &self,
        seed: &SynsetId,
        max_depth: Option<usize>,
    ) -> Result<Vec<SynsetId>> {
        let node = self
            .index_of(seed)
            .ok_or_else(|| Error::UnknownSynset(seed.to_string()))?;
        let mask = self.closure_mask(node, max_depth);
        Ok(mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| self.synsets[i].id.clone())
            .collect())
    }

    /// Closure of a node as a membership mask over node indices. Ancestors
    /// and descendants are walked separately; `max_depth` bounds the number
    /// of hops in each direction.
    pub fn closure_mask(&self, node: usize, max_depth: Option<usize>) -> Vec<bool> {
        let mut mask = vec![false; self.node_count()];
        mask[node] = true;
        self.walk(node, &self.parents, max_depth, &mut mask);
        self.walk(node, &self.children, max_depth, &mut mask);
        mask
    }

    fn walk(&self, start: usize, adj: &[Vec<usize>], max_depth: Option<usize>, mask: &mut [bool]) {
        let mut seen = vec![false; adj.len()];
        seen[start] = true;
        let mut queue = VecDeque::from([(start, 0usize)]);
        while let Some((v, d)) = queue.pop_front() {
            if max_depth.is_some_and(|m| d >= m) {
                continue;
            }
            for &next in &adj[v] {
                if !seen[next] {
                    seen[next] = true;
                    mask[next] = true;
                    queue.push_back((next, d + 1));
                }
            }
        }
    }

    fn check_acyclic(&self) -> Result<()> {
        let n = self.node_count();
        // Kahn's algorithm over child -> parent edges: a node is ready once
        // all of its children have been removed.
        let mut pending: Vec<usize> = self.children.iter().map(Vec::len).collect();
        let mut ready: Vec<usize> = (0..n).filter(|&v| pending[v] == 0).collect();
        let mut removed = vec![false; n];
        while let Some(v) = ready.pop() {
            removed[v] = true;
            for &p in &self.parents[v] {
                pending[p] -= 1;
                if pending[p] == 0 {
                    ready.push(p);
                }
            }
        }
        let Some(start) = (0..n).find(|&v| !removed[v]) else {
            return Ok(());
        };
        // Every remaining node still has a remaining child, so walking
        // child links must revisit a node.
        let mut path = vec![start];
        let mut pos = HashMap::from([(start, 0usize)]);
        let mut v = start;
        loop {
            let next = *self.children[v]
                .iter()
                .find(|&&c| !removed[c])
                .expect("remaining node has a remaining child");
            if let Some(&at) = pos.get(&next) {
                // path[at..] is parent -> child order; report child -> parent.
                let mut cycle: Vec<String> = path[at..]
                    .iter()
                    .rev()
                    .map(|&i| self.synsets[i].id.to_string())
                    .collect();
                cycle.push(cycle[0].clone());
                return Err(Error::Cycle { cycle });
            }
            pos.insert(next, path.len());
            path.push(next);
            v = next;
        }
    }
}

fn split_token(s: &str) -> (&str, &str) {
    let s = s.trim_start();
    match s.find(char::is_whitespace) {
        Some(i) => (&s[..i], s[i..].trim_start()),
        None => (s, ""),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassEntry {
    pub name: String,
    pub synset: Option<SynsetId>,
}

/// Ordered class list; class `i` is column `i` of every label vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    classes: Vec<ClassEntry>,
}

impl Vocabulary {
    /// Checks name uniqueness and that every mapped synset exists in `graph`.
    pub fn new(classes: Vec<ClassEntry>, graph: &HierarchyGraph) -> Result<Self> {
        let mut names = HashMap::new();
        for (i, class) in classes.iter().enumerate() {
            if names.insert(class.name.as_str(), i).is_some() {
                return Err(Error::Invariant(format!("duplicate class name {:?}", class.name)));
            }
            if let Some(id) = &class.synset {
                if !graph.contains(id) {
                    return Err(Error::UnknownSynset(id.to_string()));
                }
            }
        }
        Ok(Self { classes })
    }

    /// Parses `<class_name>[<TAB><synset_id>]` lines. Blank lines are skipped.
    pub fn load<R: BufRead>(source: R, graph: &HierarchyGraph) -> Result<Self> {
        let mut classes = Vec::new();
        let mut seen = HashMap::new();
        for (i, line) in source.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let name = fields.next().unwrap_or_default().trim().to_string();
            let synset = match fields.next().map(str::trim) {
                Some("") | None => None,
                Some(id) => Some(SynsetId::new(id).map_err(|e| Error::parse(lineno, e.to_string()))?),
            };
            if fields.next().is_some() {
                return Err(Error::parse(lineno, "expected <class_name>[<TAB><synset_id>]"));
            }
            if name.is_empty() {
                return Err(Error::parse(lineno, "empty class name"));
            }
            if seen.insert(name.clone(), lineno).is_some() {
                return Err(Error::parse(lineno, format!("duplicate class {name:?}")));
            }
            if let Some(id) = &synset {
                if !graph.contains(id) {
                    return Err(Error::UnknownSynset(id.to_string()));
                }
            }
            classes.push(ClassEntry { name, synset });
        }
        Ok(Self { classes })
    }

    pub fn parse_str(text: &str, graph: &HierarchyGraph) -> Result<Self> {
        Self::load(text.as_bytes(), graph)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ClassEntry] {
        &self.classes
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }
}

/// Binary per-class label vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelVector(Vec<bool>);

impl LabelVector {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn one_hot(len: usize, index: usize) -> Self {
        let mut bits = vec![false; len];
        bits[index] = true;
        Self(bits)
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut bits = vec![false; len];
        for i in indices {
            bits[i] = true;
        }
        Self(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn get(&self, index: usize) -> bool {
        self.0[index]
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn union(&self, other: &LabelVector) -> Result<LabelVector> {
        Error::check_dim("label union", self.len(), other.len())?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| *a || *b).collect()))
    }

    /// True when every bit set in `other` is also set here.
    pub fn covers(&self, other: &LabelVector) -> bool {
        self.len() == other.len() && self.0.iter().zip(&other.0).all(|(a, b)| *a || !*b)
    }
}

impl From<Vec<bool>> for LabelVector {
    fn from(bits: Vec<bool>) -> Self {
        Self(bits)
    }
}

/// Sets every class reachable from a set class through hypernym or hyponym
/// links. Classes without a synset keep their own bit only.
pub fn expand_labels(
    graph: &HierarchyGraph,
    vocab: &Vocabulary,
    y_cls: &LabelVector,
) -> Result<LabelVector> {
    expand_labels_with_depth(graph, vocab, y_cls, None)
}

pub fn expand_labels_with_depth(
    graph: &HierarchyGraph,
    vocab: &Vocabulary,
    y_cls: &LabelVector,
    max_depth: Option<usize>,
) -> Result<LabelVector> {
    Error::check_dim("expand_labels", vocab.len(), y_cls.len())?;
    let nodes: Vec<Option<usize>> = vocab
        .classes()
        .iter()
        .map(|c| c.synset.as_ref().and_then(|id| graph.index_of(id)))
        .collect();
    let mut reached = vec![false; graph.node_count()];
    for c in y_cls.ones() {
        if let Some(node) = nodes[c] {
            for (r, m) in reached.iter_mut().zip(graph.closure_mask(node, max_depth)) {
                *r |= m;
            }
        }
    }
    Ok(LabelVector(
        y_cls
            .bits()
            .iter()
            .zip(&nodes)
            .map(|(&bit, node)| bit || node.is_some_and(|n| reached[n]))
            .collect(),
    ))
}

/// Bits added by expansion: set in `y_hier` but not in `y_cls`.
pub fn expanded_mask(y_cls: &LabelVector, y_hier: &LabelVector) -> Result<LabelVector> {
    Error::check_dim("expanded_mask", y_cls.len(), y_hier.len())?;
    if let Some(c) = (0..y_cls.len()).find(|&c| y_cls.get(c) && !y_hier.get(c)) {
        return Err(Error::Invariant(format!(
            "expanded label drops class {c} that the raw label sets"
        )));
    }
    Ok(LabelVector(
        y_cls
            .bits()
            .iter()
            .zip(y_hier.bits())
            .map(|(&raw, &hier)| hier && !raw)
            .collect(),
    ))
}
