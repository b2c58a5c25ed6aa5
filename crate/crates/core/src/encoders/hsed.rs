use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Adam, Tape, Tensor};
use crate::error::{Error, Result};
use crate::fmt::write_atomic;
use crate::ingest::{MessageGraph, Split};
use crate::metrics::{accuracy, EvalReport, LabelPair};

use super::layers::{aggregation_weights, bind_layers, encode, linear_decode, AggregationWeights, BoundLayer};
use super::{EncoderConfig, HyperbolicLayerParams};

const CHECKPOINT_FORMAT: &str = "hsed-checkpoint";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { epochs: 100, learning_rate: 0.1, seed: 0 }
    }
}

/// Supervised encoder plus linear decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsedModel {
    pub config: EncoderConfig,
    pub layers: Vec<HyperbolicLayerParams>,
    pub decoder: HyperbolicLayerParams,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    input_dim: usize,
    num_classes: usize,
    training: TrainOptions,
    model: HsedModel,
}

impl HsedModel {
    pub fn init(config: &EncoderConfig, input_dim: usize, num_classes: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if num_classes == 0 {
            return Err(Error::invalid("need at least one class"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = config.init_layers(input_dim, &mut rng);
        let decoder = HyperbolicLayerParams::init(num_classes, config.hidden_dim, &mut rng);
        Ok(HsedModel { config: *config, layers, decoder })
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, HyperbolicLayerParams::in_dim)
    }

    pub fn num_classes(&self) -> usize {
        self.decoder.out_dim()
    }

    fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in self.layers.iter().chain(std::iter::once(&self.decoder)) {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in self.layers.iter_mut().chain(std::iter::once(&mut self.decoder)) {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    fn forward(&self, tape: &mut Tape, graph: &MessageGraph, w: &AggregationWeights, trainable: bool) -> Result<(crate::diffcore::Var, Vec<BoundLayer>)> {
        let x = tape.constant(graph.features.clone());
        let mut bound = bind_layers(tape, &self.layers, trainable);
        let dec = bind_layers(tape, std::slice::from_ref(&self.decoder), trainable)[0];
        let h = encode(tape, x, w, &bound, &self.config)?;
        let z = linear_decode(tape, h, dec, &self.config.manifold)?;
        bound.push(dec);
        Ok((z, bound))
    }

    /// Decoder outputs for every node.
    pub fn logits(&self, graph: &MessageGraph) -> Result<Tensor> {
        let w = aggregation_weights(&graph.edges, graph.num_nodes())?;
        let mut tape = Tape::new();
        let (z, _) = self.forward(&mut tape, graph, &w, false)?;
        Ok(tape.value(z).clone())
    }

    pub fn predict(&self, graph: &MessageGraph) -> Result<Vec<usize>> {
        Ok(self.logits(graph)?.argmax_rows())
    }

    pub fn to_json(&self, training: &TrainOptions) -> Result<String> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            input_dim: self.input_dim(),
            num_classes: self.num_classes(),
            training: *training,
            model: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&ck)?)
    }

    pub fn from_json(text: &str) -> Result<(Self, TrainOptions)> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::invalid(format!("not a checkpoint: format `{}`", ck.format)));
        }
        let m = ck.model;
        m.config.validate()?;
        let mut fan_in = ck.input_dim;
        for l in &m.layers {
            HyperbolicLayerParams::new(l.weight.clone(), l.bias.clone())?;
            if l.in_dim() != fan_in {
                return Err(Error::invalid("checkpoint layer dimensions are inconsistent"));
            }
            fan_in = l.out_dim();
        }
        HyperbolicLayerParams::new(m.decoder.weight.clone(), m.decoder.bias.clone())?;
        if m.decoder.in_dim() != fan_in || m.num_classes() != ck.num_classes || m.layers.len() != m.config.hidden_layers {
            return Err(Error::invalid("checkpoint decoder dimensions are inconsistent"));
        }
        Ok((m, ck.training))
    }

    pub fn write(&self, training: &TrainOptions, path: &Path) -> Result<()> {
        let mut text = self.to_json(training)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn read(path: &Path) -> Result<(Self, TrainOptions)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        HsedModel::from_json(&text).map_err(|e| e.in_file(path))
    }
}

#[derive(Debug, Clone)]
pub struct HsedOutcome {
    /// Parameters from the epoch with the best validation accuracy.
    pub model: HsedModel,
    pub report: EvalReport,
    /// Number of optimizer steps taken before the kept parameters.
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub train_acc: f64,
}

fn subset_acc(labels: &[usize], pred: &[usize], rows: &[usize]) -> Result<f64> {
    let t: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
    let p: Vec<usize> = rows.iter().map(|&i| pred[i]).collect();
    Ok(accuracy(LabelPair::new(&t, &p)?))
}

/// Full-batch supervised training. Each epoch scores the current
/// parameters on the validation rows before stepping, and the best-scoring
/// parameters are kept. The returned report is computed on the test rows.
pub fn train_hsed(graph: &MessageGraph, config: &EncoderConfig, opts: &TrainOptions, split: &Split) -> Result<HsedOutcome> {
    let labels = graph.labels.as_deref().ok_or_else(|| Error::invalid("supervised training needs labels"))?;
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::invalid("train and test splits must be non-empty"));
    }
    let n = graph.num_nodes();
    if let Some(&bad) = split.train.iter().chain(&split.test).chain(&split.val).find(|&&i| i >= n) {
        return Err(Error::invalid(format!("split index {bad} out of range for {n} nodes")));
    }
    if !opts.learning_rate.is_finite() || opts.learning_rate <= 0.0 {
        return Err(Error::invalid("learning rate must be positive"));
    }
    let val_rows = if split.val.is_empty() { &split.train } else { &split.val };
    let weights = aggregation_weights(&graph.edges, n)?;
    let mut model = HsedModel::init(config, graph.feature_dim(), graph.num_classes(), opts.seed)?;
    let shapes: Vec<_> = model.params().iter().map(|t| t.shape()).collect();
    let mut adam = Adam::new(opts.learning_rate, &shapes);

    let mut best: Option<(f64, usize, HsedModel)> = None;
    for epoch in 0..opts.epochs {
        let mut tape = Tape::new();
        let (z, bound) = model.forward(&mut tape, graph, &weights, true)?;
        let pred = tape.value(z).argmax_rows();
        let val = subset_acc(labels, &pred, val_rows)?;
        if best.as_ref().map_or(true, |b| val > b.0) {
            best = Some((val, epoch, model.clone()));
        }
        let p = tape.softmax_rows(z)?;
        let loss = tape.cross_entropy(p, labels, &split.train)?;
        tape.backward(loss)?;
        let grads: Vec<Tensor> =
            bound.iter().flat_map(|b| [tape.grad(b.weight), tape.grad(b.bias)]).collect();
        adam.step(&mut model.params_mut(), &grads)?;
    }
    let pred = model.predict(graph)?;
    let val = subset_acc(labels, &pred, val_rows)?;
    let (best_val_acc, best_epoch, model) = match best {
        Some(b) if b.0 >= val => b,
        _ => (val, opts.epochs, model),
    };
    let pred = model.predict(graph)?;
    let truth: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
    let test_pred: Vec<usize> = split.test.iter().map(|&i| pred[i]).collect();
    let report = EvalReport::compute(&truth, &test_pred)?;
    let train_acc = subset_acc(labels, &pred, &split.train)?;
    Ok(HsedOutcome { model, report, best_epoch, best_val_acc, train_acc })
}
