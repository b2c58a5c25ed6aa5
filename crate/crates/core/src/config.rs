//! Flat `key = value` run configuration. Unknown keys are rejected.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::contrastive::{AugmentationKind, AugmentationSpec};
use crate::encoders::{Activation, EncoderConfig, EncoderKind, TrainOptions};
use crate::error::{Error, Result};
use crate::manifold::{ManifoldKind, ManifoldSpec};
use crate::synth::{LabelRule, SyntheticTreeSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Supervised pipeline.
    Hsed,
    /// Contrastive pipeline plus logistic regression.
    Uhsed,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Hsed => "hsed",
            Mode::Uhsed => "uhsed",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hsed" => Ok(Mode::Hsed),
            "uhsed" => Ok(Mode::Uhsed),
            other => Err(Error::invalid(format!("unknown mode `{other}`"))),
        }
    }
}

/// `(line number, key, value)` for every non-blank, non-comment line.
fn entries(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: i + 1, message: format!("expected `key = value`, got `{line}`") })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Error::Parse { line: i + 1, message: "empty key or value".into() });
        }
        if out.iter().any(|(_, seen, _): &(usize, String, String)| seen == k) {
            return Err(Error::Parse { line: i + 1, message: format!("key `{k}` given twice") });
        }
        out.push((i + 1, k.to_string(), v.to_string()));
    }
    Ok(out)
}

fn value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parse { line, message: format!("bad value `{v}` for `{key}`") })
}

/// Everything needed to train either pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    /// `None` means the per-mode default: 2 for hsed, 1 for uhsed.
    pub hidden_layers: Option<usize>,
    pub hidden_dim: usize,
    pub activation: Activation,
    pub manifold: ManifoldKind,
    pub curvature: f64,
    /// `None` means MLP for hsed and GCN for uhsed.
    pub encoder: Option<EncoderKind>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub augmentation: AugmentationKind,
    pub drop_rate: f64,
    pub train_fraction: f64,
    pub test_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Hsed,
            hidden_layers: None,
            hidden_dim: 512,
            activation: Activation::Relu,
            manifold: ManifoldKind::PoincareBall,
            curvature: 1.0,
            encoder: None,
            epochs: 100,
            learning_rate: 0.1,
            augmentation: AugmentationKind::FeatureCorruption,
            drop_rate: 0.1,
            train_fraction: 0.7,
            test_fraction: 0.2,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for (line, k, v) in entries(text)? {
            match k.as_str() {
                "mode" => c.mode = value(line, &k, &v)?,
                "hidden_layers" => c.hidden_layers = Some(value(line, &k, &v)?),
                "hidden_dim" => c.hidden_dim = value(line, &k, &v)?,
                "activation" => c.activation = value(line, &k, &v)?,
                "manifold" => c.manifold = value(line, &k, &v)?,
                "curvature" => c.curvature = value(line, &k, &v)?,
                "encoder" => c.encoder = Some(value(line, &k, &v)?),
                "epochs" => c.epochs = value(line, &k, &v)?,
                "learning_rate" | "lr" => c.learning_rate = value(line, &k, &v)?,
                "augmentation" => c.augmentation = value(line, &k, &v)?,
                "drop_rate" => c.drop_rate = value(line, &k, &v)?,
                "train_fraction" => c.train_fraction = value(line, &k, &v)?,
                "test_fraction" => c.test_fraction = value(line, &k, &v)?,
                "val_fraction" => c.val_fraction = value(line, &k, &v)?,
                "seed" => c.seed = value(line, &k, &v)?,
                other => return Err(Error::Parse { line, message: format!("unknown key `{other}`") }),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        RunConfig::parse(&text).map_err(|e| e.in_file(path))
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder_config().validate()?;
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return Err(Error::invalid("drop_rate must be in [0, 1]"));
        }
        let fr = [self.train_fraction, self.test_fraction, self.val_fraction];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("split fractions must be in [0, 1] and sum to 1"));
        }
        Ok(())
    }

    pub fn resolved_hidden_layers(&self) -> usize {
        self.hidden_layers.unwrap_or(match self.mode {
            Mode::Hsed => 2,
            Mode::Uhsed => 1,
        })
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            hidden_layers: self.resolved_hidden_layers(),
            hidden_dim: self.hidden_dim,
            activation: self.activation,
            manifold: ManifoldSpec { kind: self.manifold, curvature: self.curvature },
            kind: self.encoder.unwrap_or(match self.mode {
                Mode::Hsed => EncoderKind::HyperbolicMlp,
                Mode::Uhsed => EncoderKind::HyperbolicGcn,
            }),
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions { epochs: self.epochs, learning_rate: self.learning_rate, seed: self.seed }
    }

    pub fn augmentation_spec(&self) -> AugmentationSpec {
        AugmentationSpec { kind: self.augmentation, drop_rate: self.drop_rate, seed: self.seed }
    }

    /// Canonical text form; parsing it gives back the same configuration.
    pub fn to_text(&self) -> String {
        let mut s = format!("mode = {}\n", self.mode.name());
        if let Some(h) = self.hidden_layers {
            s += &format!("hidden_layers = {h}\n");
        }
        s += &format!("hidden_dim = {}\n", self.hidden_dim);
        s += &format!("activation = {}\n", self.activation.name());
        s += &format!("manifold = {}\n", self.manifold.name());
        s += &format!("curvature = {}\n", self.curvature);
        if let Some(e) = self.encoder {
            s += match e {
                EncoderKind::HyperbolicMlp => "encoder = mlp\n",
                EncoderKind::HyperbolicGcn => "encoder = gcn\n",
            };
        }
        s += &format!("epochs = {}\n", self.epochs);
        s += &format!("learning_rate = {}\n", self.learning_rate);
        s += &format!("augmentation = {}\n", self.augmentation.name());
        s += &format!("drop_rate = {}\n", self.drop_rate);
        s += &format!("train_fraction = {}\n", self.train_fraction);
        s += &format!("test_fraction = {}\n", self.test_fraction);
        s += &format!("val_fraction = {}\n", self.val_fraction);
        s += &format!("seed = {}\n", self.seed);
        s
    }
}

/// Parses the synthetic-tree keys: branching, depth, feature_noise,
/// feature_dim, seed.
pub fn parse_tree_spec(text: &str) -> Result<SyntheticTreeSpec> {
    let mut s = SyntheticTreeSpec::default();
    for (line, k, v) in entries(text)? {
        match k.as_str() {
            "branching" => s.branching = value(line, &k, &v)?,
            "depth" => s.depth = value(line, &k, &v)?,
            "feature_noise" => s.feature_noise = value(line, &k, &v)?,
            "feature_dim" => s.feature_dim = value(line, &k, &v)?,
            "seed" => s.seed = value(line, &k, &v)?,
            "label_rule" => {
                if v != "subtree_of_root_child" {
                    return Err(Error::Parse { line, message: format!("unknown label rule `{v}`") });
                }
                s.label_rule = LabelRule::SubtreeOfRootChild;
            }
            other => return Err(Error::Parse { line, message: format!("unknown key `{other}`") }),
        }
    }
    s.validate()?;
    Ok(s)
}
