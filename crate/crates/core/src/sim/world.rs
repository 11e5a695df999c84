//! Synthetic hierarchical world: a balanced class tree, leaf prototypes
//! built from per-node offsets, and a seeded dataset of weakly labelled
//! images, fully labelled samples and held-out samples.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hierarchy::{ClassEntry, HierarchyBuilder, HierarchyGraph, LabelVector, SynsetId, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    /// Children per internal node.
    pub branching: usize,
    /// Number of tree levels including the root.
    pub depth: usize,
    /// Feature dimension.
    pub features: usize,
    /// Per-coordinate standard deviation of proposal noise.
    pub sigma: f64,
    pub n_images: usize,
    pub proposals_per_image: usize,
    /// Tree level of the observed image label (0 = root, `depth - 1` = the
    /// leaf itself).
    pub coarseness: usize,
    /// Distinct leaf objects per weak image.
    pub objects_per_image: usize,
    /// Fully labelled samples per leaf (the supervised split).
    pub det_per_leaf: usize,
    /// Held-out samples per leaf for accuracy.
    pub test_per_leaf: usize,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            branching: 3,
            depth: 3,
            features: 16,
            sigma: 0.3,
            n_images: 200,
            proposals_per_image: 5,
            coarseness: 1,
            objects_per_image: 1,
            det_per_leaf: 2,
            test_per_leaf: 50,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.branching < 2 {
            return bad(format!("branching {} < 2", self.branching));
        }
        if self.depth < 2 {
            return bad(format!("depth {} < 2", self.depth));
        }
        if self.features < 2 {
            return bad(format!("features {} < 2", self.features));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return bad(format!("sigma {} must be finite and >= 0", self.sigma));
        }
        if self.n_images == 0 || self.proposals_per_image == 0 || self.test_per_leaf == 0 {
            return bad("n_images, proposals and test_per_leaf must be positive".into());
        }
        if self.coarseness >= self.depth {
            return bad(format!("coarseness {} must be < depth {}", self.coarseness, self.depth));
        }
        let leaves = self
            .branching
            .checked_pow((self.depth - 1) as u32)
            .filter(|&n| n <= 1 << 20)
            .ok_or_else(|| Error::InvalidConfig("tree too large".into()))?;
        if self.objects_per_image == 0 || self.objects_per_image > leaves {
            return bad(format!("objects_per_image must be in 1..={leaves}"));
        }
        Ok(())
    }
}

/// Tree, vocabulary and prototypes. Classes are numbered breadth-first, so
/// the leaves are the last `leaf_count()` classes.
#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub config: WorldConfig,
    pub graph: HierarchyGraph,
    pub vocab: Vocabulary,
    /// Parent class of every class (`None` for the root).
    parent: Vec<Option<usize>>,
    level: Vec<usize>,
    /// Prototype per leaf, indexed by `class - first_leaf`.
    pub prototypes: Vec<Array1<f64>>,
}

impl SynthWorld {
    pub fn class_count(&self) -> usize {
        self.parent.len()
    }

    pub fn first_leaf(&self) -> usize {
        self.class_count() - self.prototypes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.prototypes.len()
    }

    pub fn leaves(&self) -> std::ops::Range<usize> {
        self.first_leaf()..self.class_count()
    }

    pub fn level(&self, class: usize) -> usize {
        self.level[class]
    }

    /// Ancestor of `class` at tree level `level` (the class itself when it
    /// already sits there).
    pub fn ancestor_at(&self, mut class: usize, level: usize) -> usize {
        while self.level[class] > level {
            class = self.parent[class].expect("non-root has a parent");
        }
        class
    }

    /// True when `class` equals `ancestor` or lies below it.
    pub fn is_under(&self, class: usize, ancestor: usize) -> bool {
        self.level[class] >= self.level[ancestor]
            && self.ancestor_at(class, self.level[ancestor]) == ancestor
    }
}

/// A single feature vector with its true leaf class.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Array1<f64>,
    pub leaf: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakImage {
    /// `proposals x features`.
    pub proposals: Array2<f64>,
    /// True leaf class of each proposal; never seen by training.
    pub true_leaves: Vec<usize>,
    /// Observed coarse image label.
    pub y_cls: LabelVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub weak: Vec<WeakImage>,
    /// Fully labelled split.
    pub det: Vec<Sample>,
    /// Held-out split for accuracy.
    pub test: Vec<Sample>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(len, |_| {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

fn class_id(path: &[usize]) -> String {
    let mut id = String::from("root");
    for p in path {
        id.push('.');
        id.push_str(&p.to_string());
    }
    id
}

/// Builds the world and its dataset. The same config always produces the
/// same output; prototypes, supervised samples, weak images and held-out
/// samples each draw from their own RNG stream.
pub fn generate_world(config: &WorldConfig) -> Result<(SynthWorld, Dataset)> {
    config.validate()?;
    let f = config.features;

    // Breadth-first tree.
    let mut paths: Vec<Vec<usize>> = vec![vec![]];
    let mut parent = vec![None];
    let mut level = vec![0];
    let mut start = 0;
    for depth in 1..config.depth {
        let end = paths.len();
        for p in start..end {
            for b in 0..config.branching {
                let mut path = paths[p].clone();
                path.push(b);
                paths.push(path);
                parent.push(Some(p));
                level.push(depth);
            }
        }
        start = end;
    }
    let first_leaf = start;

    let ids: Vec<SynsetId> = paths
        .iter()
        .map(|p| SynsetId::new(class_id(p)).expect("generated ids have no whitespace"))
        .collect();
    let mut builder = HierarchyBuilder::new();
    for (id, path) in ids.iter().zip(&paths) {
        let lemma = if path.is_empty() {
            "entity".to_string()
        } else {
            let parts: Vec<String> = path.iter().map(usize::to_string).collect();
            format!("class {}", parts.join(" "))
        };
        builder.add_node(id.clone(), [lemma]);
    }
    for (c, p) in parent.iter().enumerate() {
        if let Some(p) = p {
            builder.add_edge(ids[c].clone(), ids[*p].clone());
        }
    }
    let graph = builder.build()?;
    let vocab = Vocabulary::new(
        ids.iter()
            .map(|id| ClassEntry {
                name: id.to_string(),
                synset: Some(id.clone()),
            })
            .collect(),
        &graph,
    )?;

    // Each non-root node contributes an offset with unit expected norm; a
    // leaf prototype is the sum of offsets along its path, so siblings share
    // everything but the last term.
    let mut rng = stream(config.seed, 0);
    let scale = 1.0 / (f as f64).sqrt();
    let prototypes = loop {
        let mut offset = vec![Array1::zeros(f)];
        for _ in 1..paths.len() {
            offset.push(gaussian(&mut rng, f, scale));
        }
        let mut sum: Vec<Array1<f64>> = Vec::with_capacity(paths.len());
        for c in 0..paths.len() {
            let v = match parent[c] {
                Some(p) => &sum[p] + &offset[c],
                None => offset[c].clone(),
            };
            sum.push(v);
        }
        let protos: Vec<Array1<f64>> = sum.split_off(first_leaf);
        let distinct = protos
            .iter()
            .enumerate()
            .all(|(i, a)| protos[..i].iter().all(|b| a != b));
        if distinct {
            break protos;
        }
    };

    let world = SynthWorld {
        config: config.clone(),
        graph,
        vocab,
        parent,
        level,
        prototypes,
    };
    let leaf_count = world.leaf_count();
    let class_count = world.class_count();

    let draw = |rng: &mut ChaCha8Rng, leaf: usize| -> Array1<f64> {
        let noise = gaussian(rng, f, 1.0);
        &world.prototypes[leaf - first_leaf] + &(noise * config.sigma)
    };

    let mut rng = stream(config.seed, 1);
    let mut det = Vec::with_capacity(leaf_count * config.det_per_leaf);
    for leaf in world.leaves() {
        for _ in 0..config.det_per_leaf {
            det.push(Sample {
                features: draw(&mut rng, leaf),
                leaf,
            });
        }
    }

    let mut rng = stream(config.seed, 2);
    let mut weak = Vec::with_capacity(config.n_images);
    for _ in 0..config.n_images {
        let mut objects: Vec<usize> = Vec::with_capacity(config.objects_per_image);
        while objects.len() < config.objects_per_image {
            let leaf = first_leaf + rng.random_range(0..leaf_count);
            if !objects.contains(&leaf) {
                objects.push(leaf);
            }
        }
        let mut proposals = Array2::zeros((config.proposals_per_image, f));
        let mut true_leaves = Vec::with_capacity(config.proposals_per_image);
        for k in 0..config.proposals_per_image {
            let leaf = objects[k % objects.len()];
            proposals.row_mut(k).assign(&draw(&mut rng, leaf));
            true_leaves.push(leaf);
        }
        let y_cls = LabelVector::from_indices(
            class_count,
            objects.iter().map(|&l| world.ancestor_at(l, config.coarseness)),
        );
        weak.push(WeakImage {
            proposals,
            true_leaves,
            y_cls,
        });
    }

    let mut rng = stream(config.seed, 3);
    let mut test = Vec::with_capacity(leaf_count * config.test_per_leaf);
    for leaf in world.leaves() {
        for _ in 0..config.test_per_leaf {
            test.push(Sample {
                features: draw(&mut rng, leaf),
                leaf,
            });
        }
    }

    Ok((world, Dataset { weak, det, test }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_tree() {
        let cfg = WorldConfig {
            branching: 2,
            depth: 2,
            coarseness: 0,
            ..Default::default()
        };
        let (w, _) = generate_world(&cfg).unwrap();
        assert_eq!(w.class_count(), 3);
        assert_eq!(w.leaf_count(), 2);
        assert_eq!(w.graph.edge_count(), 2);
        assert_eq!(w.vocab.classes()[0].name, "root");
    }

    #[test]
    fn default_tree_shape() {
        let (w, d) = generate_world(&WorldConfig::default()).unwrap();
        assert_eq!(w.class_count(), 13);
        assert_eq!(w.leaves(), 4..13);
        assert_eq!(d.weak.len(), 200);
        assert_eq!(d.det.len(), 18);
        assert_eq!(d.test.len(), 450);
        for img in &d.weak {
            assert_eq!(img.y_cls.count_ones(), 1);
            let label = img.y_cls.ones().next().unwrap();
            assert_eq!(w.level(label), 1);
            assert!(img.true_leaves.iter().all(|&l| w.is_under(l, label)));
        }
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = WorldConfig::default();
        let (_, a) = generate_world(&cfg).unwrap();
        let (_, b) = generate_world(&cfg).unwrap();
        assert_eq!(a, b);
        let (_, c) = generate_world(&WorldConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_samples_equal_prototypes() {
        let cfg = WorldConfig {
            sigma: 0.0,
            ..Default::default()
        };
        let (w, d) = generate_world(&cfg).unwrap();
        for img in &d.weak {
            for (row, &leaf) in img.proposals.rows().into_iter().zip(&img.true_leaves) {
                assert_eq!(row, w.prototypes[leaf - w.first_leaf()]);
            }
        }
        for s in d.det.iter().chain(&d.test) {
            assert_eq!(s.features, w.prototypes[s.leaf - w.first_leaf()]);
        }
    }

    #[test]
    fn multi_object_images() {
        let cfg = WorldConfig {
            objects_per_image: 2,
            coarseness: 2,
            ..Default::default()
        };
        let (_, d) = generate_world(&cfg).unwrap();
        for img in &d.weak {
            assert_eq!(img.y_cls.count_ones(), 2);
        }
    }

    #[test]
    fn invalid_configs() {
        let base = WorldConfig::default();
        for cfg in [
            WorldConfig { branching: 1, ..base.clone() },
            WorldConfig { depth: 1, ..base.clone() },
            WorldConfig { features: 1, ..base.clone() },
            WorldConfig { sigma: -0.1, ..base.clone() },
            WorldConfig { coarseness: 3, ..base.clone() },
            WorldConfig { objects_per_image: 10, ..base.clone() },
            WorldConfig { n_images: 0, ..base.clone() },
        ] {
            assert_eq!(generate_world(&cfg).unwrap_err().kind(), "InvalidConfigError");
        }
    }

    #[test]
    fn ancestry_helpers() {
        let (w, _) = generate_world(&WorldConfig::default()).unwrap();
        // breadth-first: 0 root, 1..4 level one, 4..13 leaves
        assert_eq!(w.ancestor_at(4, 1), 1);
        assert_eq!(w.ancestor_at(12, 1), 3);
        assert_eq!(w.ancestor_at(12, 0), 0);
        assert!(w.is_under(5, 1));
        assert!(!w.is_under(7, 1));
        assert!(w.is_under(2, 2));
        assert!(w.is_under(2, 0));
    }
}
