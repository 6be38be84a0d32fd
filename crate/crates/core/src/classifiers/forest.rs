//! Random forest: bootstrap-bagged CART trees with Gini-impurity splits over a
//! random feature subset per node.
//!
//! Tree `k` draws from its own ChaCha stream `(seed, k)`, so trees can be
//! grown in parallel and the forest is still a pure function of the seed.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, check_dims, check_training_set, Prediction};
use crate::container::Container;
use crate::dataspec::{EmbeddingMatrix, LabelSet};
use crate::error::{Error, Result};
use crate::{par, seed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vote {
    /// Average of per-tree leaf class distributions.
    Average,
    /// Fraction of trees whose leaf majority is each class.
    Majority,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    /// `None` means `⌈√d⌉`.
    pub features_per_split: Option<usize>,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    pub vote: Vote,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: None,
            features_per_split: None,
            min_samples_split: 2,
            bootstrap: true,
            vote: Vote::Average,
            seed: 42,
        }
    }
}

/// One node of a flattened tree. Leaves have `feature == None`.
#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub feature: Option<usize>,
    /// Samples with `x[feature] <= threshold` go left.
    pub threshold: f32,
    pub left: usize,
    pub right: usize,
    /// Training-sample class counts reaching this node.
    pub counts: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    /// Root first.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_for(&self, x: &[f64]) -> &Node {
        let mut node = &self.nodes[0];
        while let Some(f) = node.feature {
            node = if x[f] <= node.threshold as f64 {
                &self.nodes[node.left]
            } else {
                &self.nodes[node.right]
            };
        }
        node
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            match n.feature {
                None => 0,
                Some(_) => 1 + go(t, n.left).max(go(t, n.right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub classes: LabelSet,
    pub dims: usize,
    pub params: ForestParams,
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts
        .iter()
        .map(|c| (c / total) * (c / total))
        .sum::<f64>()
}

struct Builder<'a> {
    x: &'a EmbeddingMatrix,
    y: &'a [usize],
    n_classes: usize,
    mtry: usize,
    max_depth: Option<usize>,
    min_split: usize,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f32,
    impurity: f64,
}

impl Builder<'_> {
    fn counts(&self, samples: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.n_classes];
        for &i in samples {
            c[self.y[i]] += 1.0;
        }
        c
    }

    fn best_split(&self, samples: &[usize], rng: &mut impl Rng) -> Option<BestSplit> {
        let d = self.x.dims();
        let total = samples.len() as f64;
        let mut best: Option<BestSplit> = None;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(samples.len());
        let features = index::sample(rng, d, self.mtry.min(d));
        for f in features.iter() {
            pairs.clear();
            pairs.extend(samples.iter().map(|&i| (self.x.get(i, f), self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = vec![0.0; self.n_classes];
            let mut right = vec![0.0; self.n_classes];
            for &(_, c) in &pairs {
                right[c] += 1.0;
            }
            for k in 0..pairs.len() - 1 {
                let c = pairs[k].1;
                left[c] += 1.0;
                right[c] -= 1.0;
                let (lo, hi) = (pairs[k].0, pairs[k + 1].0);
                if lo == hi {
                    continue;
                }
                let threshold = (0.5 * (lo + hi)) as f32;
                // the stored f32 threshold must reproduce this partition
                if !((threshold as f64) >= lo && (threshold as f64) < hi) {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = total - nl;
                let impurity = (nl * gini(&left, nl) + nr * gini(&right, nr)) / total;
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize, rng: &mut impl Rng) -> usize {
        let counts = self.counts(&samples);
        let id = self.nodes.len();
        self.nodes.push(Node {
            feature: None,
            threshold: 0.0,
            left: 0,
            right: 0,
            counts: counts.clone(),
        });
        let total = samples.len() as f64;
        let parent = gini(&counts, total);
        let depth_ok = self.max_depth.is_none_or(|m| depth < m);
        if parent <= 0.0 || samples.len() < self.min_split || !depth_ok {
            return id;
        }
        let Some(split) = self.best_split(&samples, rng) else {
            return id;
        };
        if split.impurity > parent {
            return id;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&i| self.x.get(i, split.feature) <= split.threshold as f64);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        let node = &mut self.nodes[id];
        node.feature = Some(split.feature);
        node.threshold = split.threshold;
        node.left = left;
        node.right = right;
        id
    }
}

pub fn fit_forest(
    x: &EmbeddingMatrix,
    y: &[usize],
    classes: &LabelSet,
    params: &ForestParams,
) -> Result<ForestModel> {
    check_training_set(x, y, classes)?;
    if params.n_trees == 0 {
        return Err(Error::param("a forest needs at least one tree"));
    }
    if params.min_samples_split < 2 {
        return Err(Error::param("min_samples_split must be at least 2"));
    }
    let d = x.dims();
    let mtry = params
        .features_per_split
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize);
    if mtry == 0 || mtry > d {
        return Err(Error::param(format!(
            "features_per_split {mtry} not in 1..={d}"
        )));
    }
    let n = x.rows();
    let trees = par::map_range(params.n_trees, |t| {
        let mut rng = seed::rng_stream(params.seed, t as u64);
        let samples: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let mut b = Builder {
            x,
            y,
            n_classes: classes.len(),
            mtry,
            max_depth: params.max_depth,
            min_split: params.min_samples_split,
            nodes: Vec::new(),
        };
        b.grow(samples, 0, &mut rng);
        Tree { nodes: b.nodes }
    });
    Ok(ForestModel {
        trees,
        classes: classes.clone(),
        dims: d,
        params: ForestParams {
            features_per_split: Some(mtry),
            ..params.clone()
        },
    })
}

pub fn predict_forest(model: &ForestModel, x: &EmbeddingMatrix) -> Result<Vec<Prediction>> {
    check_dims(model.dims, x)?;
    let c = model.classes.len();
    let n_trees = model.trees.len() as f64;
    Ok(par::map_range(x.rows(), |i| {
        let row = x.row(i);
        let mut probs = vec![0.0; c];
        for t in &model.trees {
            let leaf = t.leaf_for(row);
            match model.params.vote {
                Vote::Average => {
                    let total: f64 = leaf.counts.iter().sum();
                    for (p, k) in probs.iter_mut().zip(&leaf.counts) {
                        *p += k / total;
                    }
                }
                Vote::Majority => probs[argmax(&leaf.counts)] += 1.0,
            }
        }
        probs.iter_mut().for_each(|p| *p /= n_trees);
        Prediction::from_probs(probs)
    }))
}

#[derive(Serialize, Deserialize)]
struct ForestHeader {
    classes: LabelSet,
    dims: usize,
    params: ForestParams,
    /// Index of each tree's root in the node table.
    tree_offsets: Vec<usize>,
}

impl ForestModel {
    /// Header plus a single `nodes` section with one row per node:
    /// `[feature or -1, threshold, left, right, counts...]`.
    pub fn to_container(&self) -> Result<Container> {
        let c = self.classes.len();
        let width = 4 + c;
        let mut data = Vec::new();
        let mut offsets = Vec::with_capacity(self.trees.len());
        for t in &self.trees {
            offsets.push(data.len() / width);
            for n in &t.nodes {
                data.push(n.feature.map_or(-1.0, |f| f as f64));
                data.push(n.threshold as f64);
                data.push(n.left as f64);
                data.push(n.right as f64);
                data.extend_from_slice(&n.counts);
            }
        }
        let rows = data.len() / width;
        let mut out = Container::new("forest");
        let header = ForestHeader {
            classes: self.classes.clone(),
            dims: self.dims,
            params: self.params.clone(),
            tree_offsets: offsets,
        };
        for (k, v) in serde_json::to_value(header)?.as_object().unwrap() {
            out.set(k, v)?;
        }
        out.push_section("nodes", EmbeddingMatrix::new(rows, width, data)?);
        Ok(out)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind("forest")?;
        let header = ForestHeader {
            classes: c.get("classes")?,
            dims: c.get("dims")?,
            params: c.get("params")?,
            tree_offsets: c.get("tree_offsets")?,
        };
        let nodes = c.section("nodes")?;
        let k = header.classes.len();
        if nodes.dims() != 4 + k {
            return Err(Error::Format(
                "forest node width disagrees with the label set".into(),
            ));
        }
        let mut trees = Vec::with_capacity(header.tree_offsets.len());
        for (t, &start) in header.tree_offsets.iter().enumerate() {
            let end = header
                .tree_offsets
                .get(t + 1)
                .copied()
                .unwrap_or(nodes.rows());
            if start >= end || end > nodes.rows() {
                return Err(Error::Format(format!("bad node range for tree {t}")));
            }
            let size = end - start;
            let mut tree = Vec::with_capacity(size);
            for r in start..end {
                let row = nodes.row(r);
                let feature = (row[0] >= 0.0).then_some(row[0] as usize);
                let (left, right) = (row[2] as usize, row[3] as usize);
                if feature.is_some_and(|f| f >= header.dims)
                    || (feature.is_some() && (left >= size || right >= size))
                {
                    return Err(Error::Format(format!(
                        "corrupt node {} in tree {t}",
                        r - start
                    )));
                }
                tree.push(Node {
                    feature,
                    threshold: row[1] as f32,
                    left,
                    right,
                    counts: row[4..].to_vec(),
                });
            }
            trees.push(Tree { nodes: tree });
        }
        Ok(Self {
            trees,
            classes: header.classes,
            dims: header.dims,
            params: header.params,
        })
    }
}
