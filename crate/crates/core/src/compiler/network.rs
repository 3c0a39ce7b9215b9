use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bigm::BigMBound;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// Binary step: 1 if `z >= 0`, else 0.
    Bsf,
    Relu,
    Linear,
    /// `prev ⊙ (W · selector + b)`: gates each entry of the previous layer by
    /// the selector bit expanded through `W`.
    HadamardGate,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Bsf => {
                if z >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Relu => z.max(0.0),
            Activation::Linear | Activation::HadamardGate => z,
        }
    }
}

/// What a layer's weight matrix multiplies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputSource {
    /// Output of the previous layer.
    #[serde(rename = "prev")]
    Prev,
    /// `[previous output; network input]` (skip connection).
    #[serde(rename = "prev_concat_input")]
    PrevConcatInput,
    /// The network input.
    #[serde(rename = "input")]
    Input,
    /// Output of the first-hit selector layer (the third layer).
    #[serde(rename = "selector")]
    Selector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub input_source: InputSource,
}

impl LayerSpec {
    pub fn new(
        weights: Matrix,
        bias: Vec<f64>,
        activation: Activation,
        input_source: InputSource,
    ) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::InvalidNetwork(format!(
                "bias has {} entries for {} rows",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
            input_source,
        })
    }

    pub fn rows(&self) -> usize {
        self.weights.rows()
    }

    pub fn cols(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetworkKind {
    #[serde(rename = "yann")]
    Yann,
    #[serde(rename = "yann_l")]
    YannL,
    #[serde(rename = "checker")]
    ConstraintChecker,
}

impl std::fmt::Display for NetworkKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NetworkKind::Yann => "yann",
            NetworkKind::YannL => "yann_l",
            NetworkKind::ConstraintChecker => "checker",
        })
    }
}

/// Block pattern used by the structured forward path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Structure {
    /// Halfspace count of each region, in layer-1 row order.
    pub block_sizes: Vec<usize>,
    /// Raw affine offsets, `m` per region, region-major.
    pub offsets: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub kind: NetworkKind,
    /// Input dimension (lifted dimension if a feature map is declared).
    pub n: usize,
    /// Output dimension (`p` for a constraint checker).
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub layers: Vec<LayerSpec>,
    pub big_m: Option<BigMBound>,
    /// Per-output-row gate constants, when compiled with per-row M.
    pub big_m_rows: Option<Vec<f64>>,
    pub region_order: Vec<usize>,
    pub structure: Option<Structure>,
    pub features: Vec<String>,
}

impl Network {
    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(LayerSpec::rows).collect()
    }

    /// Checks the shape invariants of each network kind.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidNetwork(msg));
        let (n, m, p, q) = (self.n, self.m, self.p, self.q);
        use Activation::*;
        use InputSource::*;
        let expected: Vec<(Activation, InputSource, usize, usize)> = match self.kind {
            NetworkKind::Yann => vec![
                (Bsf, Prev, q, n),
                (Relu, Prev, p, q),
                (Relu, Prev, p, p),
                (Relu, PrevConcatInput, 2 * m * p, p + n),
                (Linear, Prev, m, 2 * m * p),
            ],
            NetworkKind::YannL => vec![
                (Bsf, Prev, q, n),
                (Relu, Prev, p, q),
                (Relu, Prev, p, p),
                (Linear, Input, m * p, n),
                (HadamardGate, Selector, m * p, p),
                (Linear, Prev, m, m * p),
            ],
            NetworkKind::ConstraintChecker => {
                if m != p {
                    return bad(format!("checker must have m = p, got m={m} p={p}"));
                }
                vec![(Bsf, Prev, q, n), (Relu, Prev, p, q)]
            }
        };
        if self.layers.len() != expected.len() {
            return bad(format!(
                "{} network needs {} layers, found {}",
                self.kind,
                expected.len(),
                self.layers.len()
            ));
        }
        for (i, (layer, (act, src, rows, cols))) in self.layers.iter().zip(expected).enumerate() {
            if layer.activation != act || layer.input_source != src {
                return bad(format!(
                    "layer {}: expected {act:?}/{src:?}, found {:?}/{:?}",
                    i + 1,
                    layer.activation,
                    layer.input_source
                ));
            }
            if layer.rows() != rows || layer.cols() != cols || layer.bias.len() != rows {
                return bad(format!(
                    "layer {}: expected {rows}x{cols}, found {}x{}",
                    i + 1,
                    layer.rows(),
                    layer.cols()
                ));
            }
        }
        if self.region_order.len() != p {
            return bad(format!("region_order has {} entries, p = {p}", self.region_order.len()));
        }
        if let Some(s) = &self.structure {
            if s.block_sizes.len() != p || s.block_sizes.iter().sum::<usize>() != q {
                return bad("structure block sizes do not match p and q".into());
            }
            if self.kind != NetworkKind::ConstraintChecker && s.offsets.len() != m * p {
                return bad("structure offsets do not match m·p".into());
            }
        }
        if let Some(rows) = &self.big_m_rows {
            if rows.len() != m {
                return bad("big_m_rows must have one entry per output row".into());
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
    input_source: InputSource,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    kind: NetworkKind,
    n: usize,
    m: usize,
    p: usize,
    q: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    big_m: Option<BigMBound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    big_m_rows: Option<Vec<f64>>,
    #[serde(default)]
    region_order: Option<Vec<usize>>,
    layers: Vec<LayerFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    structure: Option<Structure>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    features: Vec<String>,
}

impl Network {
    pub fn to_json(&self) -> String {
        let file = NetworkFile {
            kind: self.kind,
            n: self.n,
            m: self.m,
            p: self.p,
            q: self.q,
            big_m: self.big_m.clone(),
            big_m_rows: self.big_m_rows.clone(),
            region_order: Some(self.region_order.clone()),
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    rows: l.rows(),
                    cols: l.cols(),
                    weights: l.weights.as_slice().to_vec(),
                    bias: l.bias.clone(),
                    activation: l.activation,
                    input_source: l.input_source,
                })
                .collect(),
            structure: self.structure.clone(),
            features: self.features.clone(),
        };
        serde_json::to_string(&file).expect("network serialization")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(s)?;
        let layers = file
            .layers
            .into_iter()
            .map(|l| {
                LayerSpec::new(
                    Matrix::from_vec(l.rows, l.cols, l.weights)?,
                    l.bias,
                    l.activation,
                    l.input_source,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let net = Network {
            kind: file.kind,
            n: file.n,
            m: file.m,
            p: file.p,
            q: file.q,
            layers,
            big_m: file.big_m,
            big_m_rows: file.big_m_rows,
            region_order: file.region_order.unwrap_or_else(|| (0..file.p).collect()),
            structure: file.structure,
            features: file.features,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}
