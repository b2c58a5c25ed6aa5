//! Hyperbolic encoders: the feature transform, neighbourhood aggregation,
//! GCN and MLP stacks, the tangent-space linear decoder and the supervised
//! training loop.

mod hsed;
mod layers;
pub mod maps;

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{init_weight, Tensor};
use crate::error::{Error, Result};
use crate::manifold::ManifoldSpec;

pub use hsed::{train_hsed, HsedModel, HsedOutcome, TrainOptions};
pub use layers::{
    aggregation_weights, bind_layers, encode, hgcn_layer, hmlp_forward, hyp_activation, hyp_aggregate, hyp_linear,
    lift_features, linear_decode, AggregationWeights, BoundLayer,
};

/// Layer stack flavour. The flat control is obtained by pairing either kind
/// with a Euclidean [`ManifoldSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// Stacked feature transforms; edges are ignored.
    HyperbolicMlp,
    /// Feature transform followed by neighbourhood aggregation per layer.
    HyperbolicGcn,
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mlp" | "hmlp" | "hyperbolic_mlp" => Ok(EncoderKind::HyperbolicMlp),
            "gcn" | "hgcn" | "hyperbolic_gcn" => Ok(EncoderKind::HyperbolicGcn),
            other => Err(Error::invalid(format!("unknown encoder kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "identity" | "none" | "linear" => Ok(Activation::Identity),
            other => Err(Error::invalid(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub hidden_layers: usize,
    pub hidden_dim: usize,
    pub activation: Activation,
    pub manifold: ManifoldSpec,
    pub kind: EncoderKind,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 {
            return Err(Error::invalid("hidden_layers must be at least 1"));
        }
        if self.hidden_dim == 0 {
            return Err(Error::invalid("hidden_dim must be at least 1"));
        }
        self.manifold.validate()
    }

    /// Freshly initialised layer stack for `in_dim` raw features.
    pub fn init_layers<R: Rng + ?Sized>(&self, in_dim: usize, rng: &mut R) -> Vec<HyperbolicLayerParams> {
        let mut fan_in = in_dim;
        (0..self.hidden_layers)
            .map(|_| {
                let p = HyperbolicLayerParams::init(self.hidden_dim, fan_in, rng);
                fan_in = self.hidden_dim;
                p
            })
            .collect()
    }
}

/// Weight `out×in` and bias `1×out` of one layer. The bias is stored as a
/// row so it broadcasts over the node rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicLayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl HyperbolicLayerParams {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        if bias.shape() != (1, weight.rows()) {
            return Err(Error::invalid(format!(
                "bias is {}x{}, expected 1x{}",
                bias.rows(),
                bias.cols(),
                weight.rows()
            )));
        }
        if !weight.is_finite() || !bias.is_finite() {
            return Err(Error::invalid("non-finite layer parameters"));
        }
        Ok(HyperbolicLayerParams { weight, bias })
    }

    pub fn init<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        HyperbolicLayerParams { weight: init_weight(out_dim, in_dim, rng), bias: Tensor::zeros(1, out_dim) }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}
