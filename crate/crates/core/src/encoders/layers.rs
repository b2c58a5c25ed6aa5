use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::manifold::ManifoldSpec;

use super::maps::{exp0, exp_at, log0, log_at, project};
use super::{Activation, EncoderConfig, EncoderKind, HyperbolicLayerParams};

/// A layer's parameters registered on a tape.
#[derive(Debug, Clone, Copy)]
pub struct BoundLayer {
    pub weight: Var,
    pub bias: Var,
}

/// Registers each layer's weight and bias, as trainable leaves or constants.
pub fn bind_layers(tape: &mut Tape, layers: &[HyperbolicLayerParams], trainable: bool) -> Vec<BoundLayer> {
    layers
        .iter()
        .map(|p| {
            let (w, b) = (p.weight.clone(), p.bias.clone());
            if trainable {
                BoundLayer { weight: tape.param(w), bias: tape.param(b) }
            } else {
                BoundLayer { weight: tape.constant(w), bias: tape.constant(b) }
            }
        })
        .collect()
}

/// Raw feature rows read as origin tangent vectors and mapped onto the manifold.
pub fn lift_features(tape: &mut Tape, x: Var, spec: &ManifoldSpec) -> Result<Var> {
    exp0(tape, x, spec)
}

fn activate(tape: &mut Tape, x: Var, act: Activation) -> Result<Var> {
    match act {
        Activation::Relu => tape.relu(x),
        Activation::Identity => Ok(x),
    }
}

fn check_width(tape: &Tape, x: Var, layer: BoundLayer, spec: &ManifoldSpec) -> Result<()> {
    let tangent = tape.shape(x).1 - (spec.ambient_dim(0));
    let (out, input) = tape.shape(layer.weight);
    if tangent != input {
        return Err(Error::invalid(format!("layer expects {input} input features, got {tangent}")));
    }
    if tape.shape(layer.bias) != (1, out) {
        return Err(Error::invalid(format!("bias must be 1x{out}")));
    }
    Ok(())
}

/// `σ` applied in the tangent space at the origin.
pub fn hyp_activation(tape: &mut Tape, h: Var, act: Activation, spec: &ManifoldSpec) -> Result<Var> {
    if act == Activation::Identity {
        return Ok(h);
    }
    if spec.is_flat() {
        return activate(tape, h, act);
    }
    let t = log0(tape, h, spec)?;
    let t = activate(tape, t, act)?;
    let y = exp0(tape, t, spec)?;
    project(tape, y, spec)
}

/// Hyperbolic feature transform: matrix-vector multiplication and bias
/// translation through the origin tangent space, then `σ`.
pub fn hyp_linear(
    tape: &mut Tape,
    x: Var,
    layer: BoundLayer,
    act: Activation,
    spec: &ManifoldSpec,
) -> Result<Var> {
    check_width(tape, x, layer, spec)?;
    let wt = tape.transpose(layer.weight)?;
    let t = log0(tape, x, spec)?;
    let m = tape.matmul(t, wt)?;
    if spec.is_flat() {
        let y = tape.add(m, layer.bias)?;
        return activate(tape, y, act);
    }
    let mx = exp0(tape, m, spec)?;
    let t = log0(tape, mx, spec)?;
    let t = tape.add(t, layer.bias)?;
    let y = exp0(tape, t, spec)?;
    let y = project(tape, y, spec)?;
    hyp_activation(tape, y, act, spec)
}

/// Symmetric-normalised neighbourhood weights with self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationWeights {
    pub num_nodes: usize,
    /// `w_ii = 1/(deg i + 1)`.
    pub self_weight: Vec<f64>,
    /// Directed copies of every edge: `(target i, source j)`.
    pub target: Vec<usize>,
    pub source: Vec<usize>,
    /// `w_ij = 1/√((deg i + 1)(deg j + 1))`, aligned with `target`/`source`.
    pub weight: Vec<f64>,
}

impl AggregationWeights {
    /// Weight between `i` and `j`; `None` if they are not adjacent.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if i == j {
            return self.self_weight.get(i).copied();
        }
        (0..self.target.len()).find(|&e| self.target[e] == i && self.source[e] == j).map(|e| self.weight[e])
    }

    /// The dense normalised adjacency `Â`.
    pub fn dense(&self) -> Tensor {
        let mut a = Tensor::zeros(self.num_nodes, self.num_nodes);
        for (i, &w) in self.self_weight.iter().enumerate() {
            a.set(i, i, w);
        }
        for e in 0..self.target.len() {
            a.set(self.target[e], self.source[e], self.weight[e]);
        }
        a
    }
}

pub fn aggregation_weights(edges: &[(usize, usize)], n: usize) -> Result<AggregationWeights> {
    let mut deg = vec![0usize; n];
    let mut seen = std::collections::BTreeSet::new();
    for &(a, b) in edges {
        if a >= n || b >= n {
            return Err(Error::invalid(format!("edge ({a}, {b}) out of range for {n} nodes")));
        }
        if a == b {
            return Err(Error::invalid(format!("self-loop on node {a}")));
        }
        if seen.insert((a.min(b), a.max(b))) {
            deg[a] += 1;
            deg[b] += 1;
        }
    }
    let d = |i: usize| (deg[i] + 1) as f64;
    let mut target = Vec::with_capacity(2 * seen.len());
    let mut source = Vec::with_capacity(2 * seen.len());
    let mut weight = Vec::with_capacity(2 * seen.len());
    for &(a, b) in &seen {
        let w = 1.0 / (d(a) * d(b)).sqrt();
        for (i, j) in [(a, b), (b, a)] {
            target.push(i);
            source.push(j);
            weight.push(w);
        }
    }
    Ok(AggregationWeights { num_nodes: n, self_weight: (0..n).map(|i| 1.0 / d(i)).collect(), target, source, weight })
}

/// Each row moves to `exp_{h_i}(Σ_j w_ij log_{h_i}(h_j))`. The self term is
/// `log_{h_i}(h_i) = 0` and drops out. On a flat spec this is exactly `Â·H`.
pub fn hyp_aggregate(tape: &mut Tape, h: Var, weights: &AggregationWeights, spec: &ManifoldSpec) -> Result<Var> {
    let n = tape.shape(h).0;
    if n != weights.num_nodes {
        return Err(Error::invalid(format!("{n} rows for {} aggregation nodes", weights.num_nodes)));
    }
    let wcol = Tensor::new(weights.weight.len(), 1, weights.weight.clone())?;
    if spec.is_flat() {
        let sw = tape.constant(Tensor::new(n, 1, weights.self_weight.clone())?);
        let own = tape.hadamard(h, sw)?;
        if weights.target.is_empty() {
            return Ok(own);
        }
        let nb = tape.gather_rows(h, &weights.source)?;
        let w = tape.constant(wcol);
        let nb = tape.hadamard(nb, w)?;
        let nb = tape.scatter_add_rows(nb, &weights.target, n)?;
        return tape.add(own, nb);
    }
    if weights.target.is_empty() {
        return Ok(h);
    }
    let base = tape.gather_rows(h, &weights.target)?;
    let nb = tape.gather_rows(h, &weights.source)?;
    let l = log_at(tape, base, nb, spec)?;
    let w = tape.constant(wcol);
    let l = tape.hadamard(l, w)?;
    let v = tape.scatter_add_rows(l, &weights.target, n)?;
    exp_at(tape, h, v, spec)
}

/// One graph-convolution layer: transform, aggregate, then `σ`.
pub fn hgcn_layer(
    tape: &mut Tape,
    x: Var,
    weights: &AggregationWeights,
    layer: BoundLayer,
    act: Activation,
    spec: &ManifoldSpec,
) -> Result<Var> {
    let h = hyp_linear(tape, x, layer, Activation::Identity, spec)?;
    let h = hyp_aggregate(tape, h, weights, spec)?;
    hyp_activation(tape, h, act, spec)
}

/// `log_o(H)·Wᵀ + b`, a Euclidean `N×C` output.
pub fn linear_decode(tape: &mut Tape, h: Var, layer: BoundLayer, spec: &ManifoldSpec) -> Result<Var> {
    check_width(tape, h, layer, spec)?;
    let t = log0(tape, h, spec)?;
    let wt = tape.transpose(layer.weight)?;
    let z = tape.matmul(t, wt)?;
    tape.add(z, layer.bias)
}

/// Lift followed by the configured layer stack. `weights` is only consulted
/// by the GCN kind.
pub fn encode(
    tape: &mut Tape,
    x: Var,
    weights: &AggregationWeights,
    layers: &[BoundLayer],
    config: &EncoderConfig,
) -> Result<Var> {
    let spec = &config.manifold;
    let mut h = lift_features(tape, x, spec)?;
    for &layer in layers {
        h = match config.kind {
            EncoderKind::HyperbolicMlp => hyp_linear(tape, h, layer, config.activation, spec)?,
            EncoderKind::HyperbolicGcn => hgcn_layer(tape, h, weights, layer, config.activation, spec)?,
        };
    }
    Ok(h)
}

/// Forward pass of the MLP stack on raw features, outside of training.
pub fn hmlp_forward(features: &Tensor, layers: &[HyperbolicLayerParams], config: &EncoderConfig) -> Result<Tensor> {
    if config.kind != EncoderKind::HyperbolicMlp {
        return Err(Error::invalid("hmlp_forward needs the MLP encoder kind"));
    }
    let mut tape = Tape::new();
    let x = tape.constant(features.clone());
    let bound = bind_layers(&mut tape, layers, false);
    let none = aggregation_weights(&[], features.rows())?;
    let h = encode(&mut tape, x, &none, &bound, config)?;
    Ok(tape.value(h).clone())
}
