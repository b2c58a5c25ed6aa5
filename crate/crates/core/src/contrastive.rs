//! Unsupervised branch: feature augmentations, two-view encoding, readout,
//! bilinear discriminator, the contrastive objective and the downstream
//! logistic-regression classifier.

use std::path::Path;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{init_weight, sigmoid, Adam, Tape, Tensor, Var};
use crate::encoders::maps::log0;
use crate::encoders::{
    aggregation_weights, bind_layers, encode, AggregationWeights, EncoderConfig, HyperbolicLayerParams, TrainOptions,
};
use crate::error::{Error, Result};
use crate::fmt;
use crate::ingest::MessageGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentationKind {
    /// Zero every feature of a random subset of nodes.
    FeatureDropping,
    /// Zero a random subset of individual feature entries.
    RandomMasking,
    /// Shuffle feature rows across nodes.
    FeatureCorruption,
}

impl AugmentationKind {
    pub fn name(self) -> &'static str {
        match self {
            AugmentationKind::FeatureDropping => "feature_dropping",
            AugmentationKind::RandomMasking => "random_masking",
            AugmentationKind::FeatureCorruption => "feature_corruption",
        }
    }
}

impl FromStr for AugmentationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "feature_dropping" | "dropping" => Ok(AugmentationKind::FeatureDropping),
            "random_masking" | "masking" => Ok(AugmentationKind::RandomMasking),
            "feature_corruption" | "corruption" => Ok(AugmentationKind::FeatureCorruption),
            other => Err(Error::invalid(format!("unknown augmentation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub kind: AugmentationKind,
    /// Ignored by [`AugmentationKind::FeatureCorruption`].
    pub drop_rate: f64,
    pub seed: u64,
}

fn ceil_count(total: usize, rate: f64) -> usize {
    ((total as f64 * rate - 1e-9).ceil().max(0.0) as usize).min(total)
}

/// The seeded permutation used by feature corruption.
pub fn sample_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    p
}

/// A perturbed copy of the graph: same nodes and edges, altered features.
pub fn augment(graph: &MessageGraph, spec: &AugmentationSpec) -> Result<MessageGraph> {
    if !(0.0..=1.0).contains(&spec.drop_rate) {
        return Err(Error::invalid(format!("drop_rate {} must be in [0, 1]", spec.drop_rate)));
    }
    let x = &graph.features;
    let (n, d) = x.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let features = match spec.kind {
        AugmentationKind::FeatureDropping => {
            let mut out = x.clone();
            for i in index::sample(&mut rng, n, ceil_count(n, spec.drop_rate)) {
                out.row_mut(i).fill(0.0);
            }
            out
        }
        AugmentationKind::RandomMasking => {
            let mut out = x.clone();
            let data = out.data_mut();
            for k in index::sample(&mut rng, n * d, ceil_count(n * d, spec.drop_rate)) {
                data[k] = 0.0;
            }
            out
        }
        AugmentationKind::FeatureCorruption => x.select_rows(&sample_permutation(n, spec.seed)),
    };
    Ok(MessageGraph {
        features,
        edges: graph.edges.clone(),
        labels: graph.labels.clone(),
        node_ids: graph.node_ids.clone(),
    })
}

/// Learnable `h×h` bilinear scoring matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorParams {
    pub score_matrix: Tensor,
}

impl DiscriminatorParams {
    pub fn new(score_matrix: Tensor) -> Result<Self> {
        if score_matrix.rows() != score_matrix.cols() {
            return Err(Error::invalid("score matrix must be square"));
        }
        if !score_matrix.is_finite() {
            return Err(Error::invalid("non-finite score matrix"));
        }
        Ok(DiscriminatorParams { score_matrix })
    }
}

/// Sigmoid of the row mean.
pub fn readout(e: &Tensor) -> Result<Vec<f64>> {
    if e.rows() == 0 {
        return Err(Error::invalid("readout of an empty embedding set"));
    }
    let n = e.rows() as f64;
    Ok((0..e.cols()).map(|j| sigmoid(e.row_iter().map(|r| r[j]).sum::<f64>() / n)).collect())
}

fn bilinear(e: &[f64], z: &[f64], d: &DiscriminatorParams) -> Result<f64> {
    let w = &d.score_matrix;
    if e.len() != w.rows() || z.len() != w.cols() {
        return Err(Error::invalid(format!(
            "discriminator expects vectors of length {}, got {} and {}",
            w.rows(),
            e.len(),
            z.len()
        )));
    }
    Ok((0..w.rows()).map(|i| e[i] * w.row(i).iter().zip(z).map(|(a, b)| a * b).sum::<f64>()).sum())
}

/// `σ(eᵀ W z)`.
pub fn discriminate(e: &[f64], z: &[f64], d: &DiscriminatorParams) -> Result<f64> {
    Ok(sigmoid(bilinear(e, z, d)?))
}

/// Contrastive loss from discriminator probabilities of positive and
/// negative rows.
pub fn bce_from_scores(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() && neg.is_empty() {
        return Err(Error::invalid("no scores"));
    }
    let total: f64 = pos.iter().map(|p| -p.ln()).sum::<f64>() + neg.iter().map(|q| -(1.0 - q).ln()).sum::<f64>();
    Ok(total / (pos.len() + neg.len()) as f64)
}

/// Loss of positives `e` and negatives `e_neg` against the summary `z`.
pub fn uhsed_loss(e: &Tensor, e_neg: &Tensor, z: &[f64], d: &DiscriminatorParams) -> Result<f64> {
    let n = e.rows() + e_neg.rows();
    if n == 0 {
        return Err(Error::invalid("no embeddings to score"));
    }
    // log-sum-exp form so saturated scores stay finite
    let softplus = |x: f64| x.max(0.0) + (-x.abs()).exp().ln_1p();
    let mut total = 0.0;
    for r in e.row_iter() {
        total += softplus(-bilinear(r, z, d)?);
    }
    for r in e_neg.row_iter() {
        total += softplus(bilinear(r, z, d)?);
    }
    Ok(total / n as f64)
}

/// Summary vector `σ(mean_i e_i)` as a `1×h` tape node.
pub fn readout_var(tape: &mut Tape, e: Var) -> Result<Var> {
    if tape.shape(e).0 == 0 {
        return Err(Error::invalid("readout of an empty embedding set"));
    }
    let m = tape.row_mean(e)?;
    tape.sigmoid(m)
}

/// Bilinear logits `e_i W zᵀ` as an `N×1` tape node.
pub fn discriminator_logits(tape: &mut Tape, e: Var, w: Var, z: Var) -> Result<Var> {
    let ew = tape.matmul(e, w)?;
    let zt = tape.transpose(z)?;
    tape.matmul(ew, zt)
}

/// Contrastive objective on the tape from positive and negative logits.
pub fn contrastive_loss(tape: &mut Tape, pos: Var, neg: Var) -> Result<Var> {
    let (n, m) = (tape.shape(pos).0, tape.shape(neg).0);
    let lp = tape.bce_logits(pos, &Tensor::filled(n, 1, 1.0))?;
    let ln = tape.bce_logits(neg, &Tensor::zeros(m, 1))?;
    let lp = tape.scale(lp, n as f64 / (n + m) as f64)?;
    let ln = tape.scale(ln, m as f64 / (n + m) as f64)?;
    tape.add(lp, ln)
}

fn flat_embeddings(
    tape: &mut Tape,
    features: &Tensor,
    weights: &AggregationWeights,
    layers: &[crate::encoders::BoundLayer],
    config: &EncoderConfig,
) -> Result<Var> {
    let x = tape.constant(features.clone());
    let h = encode(tape, x, weights, layers, config)?;
    log0(tape, h, &config.manifold)
}

/// Both views through the shared encoder, mapped to the flat tangent space
/// at the origin. The views must share their edge set.
pub fn encode_views(
    g: &MessageGraph,
    g_neg: &MessageGraph,
    layers: &[HyperbolicLayerParams],
    config: &EncoderConfig,
) -> Result<(Tensor, Tensor)> {
    if g.edges != g_neg.edges || g.num_nodes() != g_neg.num_nodes() {
        return Err(Error::invalid("views must share nodes and edges"));
    }
    let weights = aggregation_weights(&g.edges, g.num_nodes())?;
    let mut tape = Tape::new();
    let bound = bind_layers(&mut tape, layers, false);
    let e = flat_embeddings(&mut tape, &g.features, &weights, &bound, config)?;
    let e2 = flat_embeddings(&mut tape, &g_neg.features, &weights, &bound, config)?;
    Ok((tape.value(e).clone(), tape.value(e2).clone()))
}

#[derive(Debug, Clone)]
pub struct UhsedOutcome {
    /// Flat node embeddings from the final parameters.
    pub embeddings: Tensor,
    pub layers: Vec<HyperbolicLayerParams>,
    pub discriminator: DiscriminatorParams,
    /// Loss at each epoch, before that epoch's update.
    pub losses: Vec<f64>,
}

/// Trains encoder and discriminator jointly. A fresh negative view is drawn
/// every epoch from a seed stream derived from `opts.seed`; `aug.seed` is
/// ignored.
pub fn train_uhsed(
    graph: &MessageGraph,
    config: &EncoderConfig,
    aug: &AugmentationSpec,
    opts: &TrainOptions,
) -> Result<UhsedOutcome> {
    config.validate()?;
    if graph.num_nodes() == 0 {
        return Err(Error::invalid("empty graph"));
    }
    if !opts.learning_rate.is_finite() || opts.learning_rate <= 0.0 {
        return Err(Error::invalid("learning rate must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut layers = config.init_layers(graph.feature_dim(), &mut rng);
    let mut disc = init_weight(config.hidden_dim, config.hidden_dim, &mut rng);
    let mut aug_stream = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);
    let weights = aggregation_weights(&graph.edges, graph.num_nodes())?;
    let mut shapes: Vec<_> = layers.iter().flat_map(|l| [l.weight.shape(), l.bias.shape()]).collect();
    shapes.push(disc.shape());
    let mut adam = Adam::new(opts.learning_rate, &shapes);
    let mut losses = Vec::with_capacity(opts.epochs);

    for _ in 0..opts.epochs {
        let neg = augment(graph, &AugmentationSpec { seed: aug_stream.gen(), ..*aug })?;
        let mut tape = Tape::new();
        let bound = bind_layers(&mut tape, &layers, true);
        let w = tape.param(disc.clone());
        let e = flat_embeddings(&mut tape, &graph.features, &weights, &bound, config)?;
        let e2 = flat_embeddings(&mut tape, &neg.features, &weights, &bound, config)?;
        let z = readout_var(&mut tape, e)?;
        let pos = discriminator_logits(&mut tape, e, w, z)?;
        let negl = discriminator_logits(&mut tape, e2, w, z)?;
        let loss = contrastive_loss(&mut tape, pos, negl)?;
        losses.push(tape.value(loss).item()?);
        tape.backward(loss)?;
        let mut grads: Vec<Tensor> = bound.iter().flat_map(|b| [tape.grad(b.weight), tape.grad(b.bias)]).collect();
        grads.push(tape.grad(w));
        let mut params: Vec<&mut Tensor> =
            layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect();
        params.push(&mut disc);
        adam.step(&mut params, &grads)?;
    }

    let mut tape = Tape::new();
    let bound = bind_layers(&mut tape, &layers, false);
    let e = flat_embeddings(&mut tape, &graph.features, &weights, &bound, config)?;
    Ok(UhsedOutcome {
        embeddings: tape.value(e).clone(),
        layers,
        discriminator: DiscriminatorParams::new(disc)?,
        losses,
    })
}

/// Node embeddings with their ids, as written by the unsupervised run.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDump {
    pub embeddings: Tensor,
    pub node_ids: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct DumpFile {
    num_nodes: usize,
    dim: usize,
    #[serde(serialize_with = "fmt::reals")]
    embeddings: Vec<f64>,
    node_ids: Vec<String>,
}

impl EmbeddingDump {
    pub fn to_json(&self) -> Result<String> {
        let f = DumpFile {
            num_nodes: self.embeddings.rows(),
            dim: self.embeddings.cols(),
            embeddings: self.embeddings.data().to_vec(),
            node_ids: self.node_ids.clone(),
        };
        Ok(serde_json::to_string(&f)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: DumpFile = serde_json::from_str(text)?;
        if f.node_ids.len() != f.num_nodes {
            return Err(Error::invalid("node id count does not match num_nodes"));
        }
        Ok(EmbeddingDump { embeddings: Tensor::new(f.num_nodes, f.dim, f.embeddings)?, node_ids: f.node_ids })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fmt::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        EmbeddingDump::from_json(&text).map_err(|e| e.in_file(path))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions { epochs: 300, learning_rate: 0.05, seed: 0 }
    }
}

/// Multinomial logistic regression on standardised features.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    pub weight: Tensor,
    pub bias: Tensor,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl LogisticRegression {
    /// Fits on the rows listed in `train`. Labels must be dense class ids.
    pub fn fit(e: &Tensor, labels: &[usize], train: &[usize], opts: &LogisticOptions) -> Result<Self> {
        if labels.len() != e.rows() {
            return Err(Error::invalid(format!("{} labels for {} rows", labels.len(), e.rows())));
        }
        if let Some(&bad) = train.iter().find(|&&i| i >= e.rows()) {
            return Err(Error::invalid(format!("train row {bad} out of range")));
        }
        let first = train.first().map(|&i| labels[i]);
        if first.is_none() || train.iter().all(|&i| Some(labels[i]) == first) {
            return Err(Error::invalid("training data must contain at least two classes"));
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        let d = e.cols();
        let x = e.select_rows(train);
        let t = train.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| x.row_iter().map(|r| r[j]).sum::<f64>() / t).collect();
        let scale: Vec<f64> = (0..d)
            .map(|j| {
                let var = x.row_iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / t;
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let mut model = LogisticRegression {
            weight: Tensor::uniform(classes, d, 0.01, &mut ChaCha8Rng::seed_from_u64(opts.seed)),
            bias: Tensor::zeros(1, classes),
            mean,
            scale,
        };
        let xs = model.standardize(&x);
        let y: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let rows: Vec<usize> = (0..train.len()).collect();
        let mut adam = Adam::new(opts.learning_rate, &[model.weight.shape(), model.bias.shape()]);
        for _ in 0..opts.epochs {
            let mut tape = Tape::new();
            let xv = tape.constant(xs.clone());
            let w = tape.param(model.weight.clone());
            let b = tape.param(model.bias.clone());
            let wt = tape.transpose(w)?;
            let z = tape.matmul(xv, wt)?;
            let z = tape.add(z, b)?;
            let p = tape.softmax_rows(z)?;
            let loss = tape.cross_entropy(p, &y, &rows)?;
            tape.backward(loss)?;
            let grads = [tape.grad(w), tape.grad(b)];
            adam.step(&mut [&mut model.weight, &mut model.bias], &grads)?;
        }
        Ok(model)
    }

    fn standardize(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.scale[j];
            }
        }
        out
    }

    pub fn decision(&self, e: &Tensor) -> Result<Tensor> {
        if e.cols() != self.weight.cols() {
            return Err(Error::invalid(format!("expected {} features, got {}", self.weight.cols(), e.cols())));
        }
        let mut z = self.standardize(e).matmul(&self.weight.transpose())?;
        for i in 0..z.rows() {
            for (v, b) in z.row_mut(i).iter_mut().zip(self.bias.data()) {
                *v += b;
            }
        }
        Ok(z)
    }

    pub fn predict(&self, e: &Tensor) -> Result<Vec<usize>> {
        Ok(self.decision(e)?.argmax_rows())
    }
}
