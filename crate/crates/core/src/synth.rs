//! Seeded synthetic graphs: a labelled rooted tree and a two-community
//! stochastic block model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::ingest::MessageGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    /// A node's class is the index of the root child whose subtree holds it.
    SubtreeOfRootChild,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTreeSpec {
    pub branching: usize,
    pub depth: usize,
    pub label_rule: LabelRule,
    pub feature_noise: f64,
    /// Must be at least `branching`; class `c` has mean `e_c`.
    pub feature_dim: usize,
    pub seed: u64,
}

impl Default for SyntheticTreeSpec {
    fn default() -> Self {
        SyntheticTreeSpec {
            branching: 3,
            depth: 6,
            label_rule: LabelRule::SubtreeOfRootChild,
            feature_noise: 1.0,
            feature_dim: 16,
            seed: 0,
        }
    }
}

impl SyntheticTreeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.branching < 2 || self.depth < 2 {
            return Err(Error::invalid("branching and depth must both be at least 2"));
        }
        if self.feature_dim < self.branching {
            return Err(Error::invalid("feature_dim must be at least branching"));
        }
        if !self.feature_noise.is_finite() || self.feature_noise < 0.0 {
            return Err(Error::invalid("feature_noise must be a finite non-negative number"));
        }
        Ok(())
    }

    /// `Σ_{ℓ=0..depth} branching^ℓ`.
    pub fn num_nodes(&self) -> usize {
        (0..=self.depth).map(|l| self.branching.pow(l as u32)).sum()
    }
}

/// Breadth-first numbered tree; node 0 is the root and carries class 0.
pub fn synthetic_tree(spec: &SyntheticTreeSpec) -> Result<MessageGraph> {
    spec.validate()?;
    let n = spec.num_nodes();
    let mut labels = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut next = 1;
    for parent in 0..n {
        if next >= n {
            break;
        }
        for c in 0..spec.branching {
            let child = next;
            next += 1;
            edges.push((parent, child));
            labels[child] = if parent == 0 { c } else { labels[parent] };
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut features = Tensor::zeros(n, spec.feature_dim);
    for (i, &c) in labels.iter().enumerate() {
        let row = features.row_mut(i);
        for v in row.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = spec.feature_noise * z;
        }
        row[c] += 1.0;
    }
    MessageGraph::new(features, edges, Some(labels), (0..n).map(|i| format!("t{i}")).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoCommunitySpec {
    pub num_nodes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Offset of the class mean along the first feature axis.
    pub signal: f64,
    /// Standard deviation of the per-entry Gaussian noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for TwoCommunitySpec {
    fn default() -> Self {
        TwoCommunitySpec { num_nodes: 200, p_in: 0.1, p_out: 0.01, feature_dim: 8, signal: 0.025, noise: 0.05, seed: 0 }
    }
}

/// Planted partition: the first half of the nodes is class 0.
pub fn two_communities(spec: &TwoCommunitySpec) -> Result<MessageGraph> {
    let n = spec.num_nodes;
    if n < 2 || spec.feature_dim == 0 {
        return Err(Error::invalid("need at least two nodes and one feature"));
    }
    if ![spec.p_in, spec.p_out].iter().all(|p| (0.0..=1.0).contains(p)) {
        return Err(Error::invalid("edge probabilities must be in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let labels: Vec<usize> = (0..n).map(|i| usize::from(i >= n / 2)).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { spec.p_in } else { spec.p_out };
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let mut features = Tensor::zeros(n, spec.feature_dim);
    for (i, &c) in labels.iter().enumerate() {
        let row = features.row_mut(i);
        for v in row.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = spec.noise * z;
        }
        row[0] += if c == 0 { -spec.signal } else { spec.signal };
    }
    MessageGraph::new(features, edges, Some(labels), (0..n).map(|i| format!("c{i}")).collect())
}
