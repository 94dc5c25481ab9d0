//! Feed-forward inference where every neuron is one EMAC invocation.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{code_to_exact, round_to_format, Code, FormatSpec};
use crate::emac::{emac, EmacError, MacConfig};
use crate::exact::{ExactValue, ParseExactError};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("NaR input")]
    NaRInput,
    #[error("model format {found} does not match requested format {expected}")]
    FormatMismatch { expected: String, found: String },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Emac(#[from] EmacError),
    #[error("bad number `{text}`: {source}")]
    Number { text: String, source: ParseExactError },
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Affine,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerModel {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub weights: Vec<Code>,
    pub biases: Vec<Code>,
    pub activation: Activation,
}

impl LayerModel {
    pub fn row(&self, j: usize) -> &[Code] {
        &self.weights[j * self.in_dim..(j + 1) * self.in_dim]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkModel {
    pub spec: FormatSpec,
    pub input_dim: usize,
    pub layers: Vec<LayerModel>,
}

impl NetworkModel {
    /// Checks dimension chaining, code formats and the activation layout.
    pub fn validate(&self) -> Result<(), NetworkError> {
        let mut dim = self.input_dim;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.in_dim != dim {
                return Err(NetworkError::DimensionMismatch(format!(
                    "layer {i} expects {} inputs but receives {dim}",
                    layer.in_dim
                )));
            }
            if layer.weights.len() != layer.in_dim * layer.out_dim || layer.biases.len() != layer.out_dim {
                return Err(NetworkError::DimensionMismatch(format!("layer {i} parameter counts")));
            }
            if let Some(c) = layer.weights.iter().chain(&layer.biases).find(|c| c.spec() != self.spec) {
                return Err(NetworkError::FormatMismatch { expected: self.spec.tag(), found: c.spec().tag() });
            }
            if layer.activation == Activation::Affine && i + 1 != self.layers.len() {
                return Err(NetworkError::InvalidModel(format!("hidden layer {i} must use relu")));
            }
            dim = layer.out_dim;
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.out_dim)
    }
}

/// `output_j = act(emac(row_j, input, bias_j))` with fan-in `k = in_dim`.
pub fn layer_forward(layer: &LayerModel, input: &[Code]) -> Result<Vec<Code>, NetworkError> {
    if input.len() != layer.in_dim {
        return Err(NetworkError::DimensionMismatch(format!(
            "layer expects {} inputs, got {}",
            layer.in_dim,
            input.len()
        )));
    }
    let Some(first) = layer.biases.first() else {
        return Ok(Vec::new());
    };
    let spec = first.spec();
    if input.iter().any(|c| c.is_nar()) {
        return Err(NetworkError::NaRInput);
    }
    let k = layer.in_dim.max(1);
    (0..layer.out_dim)
        .map(|j| {
            let cfg = MacConfig::new(spec, k, layer.biases[j]);
            let out = emac(layer.row(j), input, &cfg).map_err(|e| match e {
                EmacError::NaRInput => NetworkError::NaRInput,
                other => other.into(),
            })?;
            Ok(match layer.activation {
                Activation::Relu if out.is_negative() => spec.zero(),
                // float negative zero becomes the canonical zero code too
                Activation::Relu if code_to_exact(out).map(|v| v.is_zero()).unwrap_or(false) => spec.zero(),
                _ => out,
            })
        })
        .collect()
}

pub fn network_forward(model: &NetworkModel, input: &[Code]) -> Result<Vec<Code>, NetworkError> {
    if input.len() != model.input_dim {
        return Err(NetworkError::DimensionMismatch(format!(
            "model expects {} features, got {}",
            model.input_dim,
            input.len()
        )));
    }
    let mut x = input.to_vec();
    for layer in &model.layers {
        x = layer_forward(layer, &x)?;
    }
    Ok(x)
}

/// Index of the largest output value; ties go to the lowest index.
pub fn argmax_codes(outputs: &[Code]) -> Result<usize, NetworkError> {
    let values = outputs
        .iter()
        .map(|c| code_to_exact(*c).map_err(|_| NetworkError::NaRInput))
        .collect::<Result<Vec<_>, _>>()?;
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if v.cmp(&values[best]) == Ordering::Greater {
            best = i;
        }
    }
    Ok(best)
}

pub fn classify(model: &NetworkModel, input: &[Code]) -> Result<usize, NetworkError> {
    if model.output_dim() == 0 {
        return Err(NetworkError::InvalidModel("readout has no outputs".into()));
    }
    argmax_codes(&network_forward(model, input)?)
}

/// Rounds real-valued features into the model's format.
pub fn quantize_input(features: &[f64], spec: FormatSpec) -> Vec<Code> {
    features.iter().map(|&x| round_to_format(&ExactValue::from_f64(x), spec)).collect()
}

/// On-disk model layout shared by real-valued and quantized models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub input_dim: usize,
    pub layers: Vec<LayerDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerDocument {
    pub out_dim: usize,
    pub activation: Activation,
    pub weights: Vec<String>,
    pub biases: Vec<String>,
}

/// Format field used for unquantized double-precision models.
pub const REAL_FORMAT: &str = "real";

impl ModelDocument {
    pub fn load(path: &Path) -> Result<Self, NetworkError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| NetworkError::Io { path: path.display().to_string(), source })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), NetworkError> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|source| NetworkError::Io { path: path.display().to_string(), source })
    }

    /// Parses every parameter, per layer as `(weights, biases)`. Real-valued documents
    /// hold doubles, so their parameters are read as the nearest double first.
    pub fn exact_parameters(&self) -> Result<Vec<(Vec<ExactValue>, Vec<ExactValue>)>, NetworkError> {
        let real = self.format == REAL_FORMAT;
        let parse = |s: &String| {
            let v = s.parse::<ExactValue>().map_err(|source| NetworkError::Number { text: s.clone(), source })?;
            if real {
                let d: f64 = s.parse().map_err(|_| NetworkError::InvalidModel(format!("`{s}` is not a double")))?;
                if !d.is_finite() {
                    return Err(NetworkError::InvalidModel(format!("`{s}` is not finite")));
                }
                return Ok(ExactValue::from_f64(d));
            }
            Ok(v)
        };
        self.layers
            .iter()
            .map(|l| {
                let w = l.weights.iter().map(parse).collect::<Result<Vec<_>, _>>()?;
                let b = l.biases.iter().map(parse).collect::<Result<Vec<_>, _>>()?;
                Ok((w, b))
            })
            .collect()
    }
}

impl NetworkModel {
    /// Builds a model from a document. A quantized document must name `spec` (when
    /// given); a real-valued one is rounded into `spec`, which is then required.
    pub fn from_document(doc: &ModelDocument, spec: Option<FormatSpec>) -> Result<Self, NetworkError> {
        let spec = if doc.format == REAL_FORMAT {
            spec.ok_or_else(|| NetworkError::InvalidModel("real-valued model needs a target format".into()))?
        } else {
            let stored: FormatSpec = doc
                .format
                .parse()
                .map_err(|e| NetworkError::InvalidModel(format!("format field: {e}")))?;
            match spec {
                Some(s) if s != stored => {
                    return Err(NetworkError::FormatMismatch { expected: s.tag(), found: stored.tag() })
                }
                _ => stored,
            }
        };
        let params = doc.exact_parameters()?;
        let mut in_dim = doc.input_dim;
        let mut layers = Vec::with_capacity(doc.layers.len());
        for (l, (w, b)) in doc.layers.iter().zip(params) {
            let q = |v: &ExactValue| round_to_format(v, spec);
            layers.push(LayerModel {
                in_dim,
                out_dim: l.out_dim,
                weights: w.iter().map(q).collect(),
                biases: b.iter().map(q).collect(),
                activation: l.activation,
            });
            in_dim = l.out_dim;
        }
        let model = NetworkModel { spec, input_dim: doc.input_dim, layers };
        model.validate()?;
        Ok(model)
    }

    pub fn to_document(&self) -> ModelDocument {
        let dec = |c: &Code| code_to_exact(*c).expect("finite parameter").to_decimal_string();
        ModelDocument {
            format: self.spec.tag(),
            input_dim: self.input_dim,
            layers: self
                .layers
                .iter()
                .map(|l| LayerDocument {
                    out_dim: l.out_dim,
                    activation: l.activation,
                    weights: l.weights.iter().map(dec).collect(),
                    biases: l.biases.iter().map(dec).collect(),
                })
                .collect(),
        }
    }

    pub fn load(path: &Path, spec: Option<FormatSpec>) -> Result<Self, NetworkError> {
        Self::from_document(&ModelDocument::load(path)?, spec)
    }

    pub fn save(&self, path: &Path) -> Result<(), NetworkError> {
        self.to_document().save(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p8() -> FormatSpec {
        "posit8es0".parse().unwrap()
    }

    fn q(v: f64) -> Code {
        round_to_format(&ExactValue::from_f64(v), p8())
    }

    fn layer(in_dim: usize, w: &[f64], b: &[f64], activation: Activation) -> LayerModel {
        LayerModel {
            in_dim,
            out_dim: b.len(),
            weights: w.iter().map(|&x| q(x)).collect(),
            biases: b.iter().map(|&x| q(x)).collect(),
            activation,
        }
    }

    #[test]
    fn identity_and_relu() {
        let l = layer(1, &[1.0], &[0.0], Activation::Relu);
        assert_eq!(layer_forward(&l, &[q(1.0)]).unwrap(), vec![q(1.0)]);
        let l = layer(2, &[0.0, 0.0], &[-0.5], Activation::Relu);
        assert_eq!(layer_forward(&l, &[q(3.0), q(2.0)]).unwrap(), vec![q(0.0)]);
        let l = layer(2, &[0.0, 0.0], &[-0.5], Activation::Affine);
        assert_eq!(layer_forward(&l, &[q(3.0), q(2.0)]).unwrap(), vec![q(-0.5)]);
    }

    #[test]
    fn forward_composition() {
        let empty = NetworkModel { spec: p8(), input_dim: 2, layers: vec![] };
        let x = vec![q(0.25), q(-2.0)];
        assert_eq!(network_forward(&empty, &x).unwrap(), x);
        let id = layer(2, &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], Activation::Relu);
        let chain = NetworkModel { spec: p8(), input_dim: 2, layers: vec![id.clone(), id] };
        chain.validate().unwrap();
        let x = vec![q(0.25), q(3.0)];
        assert_eq!(network_forward(&chain, &x).unwrap(), x);
        assert!(matches!(network_forward(&chain, &x[..1]), Err(NetworkError::DimensionMismatch(_))));
    }

    #[test]
    fn argmax_rules() {
        assert_eq!(argmax_codes(&[q(0.0), q(1.0), q(0.0)]).unwrap(), 1);
        assert_eq!(argmax_codes(&[q(0.5), q(0.5), q(0.5)]).unwrap(), 0);
        assert_eq!(argmax_codes(&[q(-3.0), q(-1.0)]).unwrap(), 1);
    }

    #[test]
    fn rejects_bad_topology() {
        let a = layer(2, &[1.0, 0.0], &[0.0], Activation::Affine);
        let b = layer(1, &[1.0], &[0.0], Activation::Relu);
        let m = NetworkModel { spec: p8(), input_dim: 2, layers: vec![a.clone(), b.clone()] };
        assert!(matches!(m.validate(), Err(NetworkError::InvalidModel(_))));
        let m = NetworkModel { spec: p8(), input_dim: 3, layers: vec![a] };
        assert!(matches!(m.validate(), Err(NetworkError::DimensionMismatch(_))));
    }

    #[test]
    fn nar_input_is_rejected() {
        let l = layer(1, &[1.0], &[0.0], Activation::Relu);
        let nar = Code::new(p8(), 0x80);
        assert!(matches!(layer_forward(&l, &[nar]), Err(NetworkError::NaRInput)));
    }

    #[test]
    fn document_roundtrip() {
        let m = NetworkModel {
            spec: p8(),
            input_dim: 2,
            layers: vec![
                layer(2, &[0.75, -1.5, 3.0, 0.015625], &[0.125, -64.0], Activation::Relu),
                layer(2, &[1.0, -1.0], &[0.0], Activation::Affine),
            ],
        };
        let doc = m.to_document();
        assert_eq!(doc.layers[0].weights[3], "0.015625");
        let back = NetworkModel::from_document(&doc, None).unwrap();
        assert_eq!(back, m);
        let f8: FormatSpec = "float8e4".parse().unwrap();
        assert!(matches!(NetworkModel::from_document(&doc, Some(f8)), Err(NetworkError::FormatMismatch { .. })));
        let mut real = doc.clone();
        real.format = REAL_FORMAT.into();
        assert!(NetworkModel::from_document(&real, None).is_err());
        assert_eq!(NetworkModel::from_document(&real, Some(p8())).unwrap(), m);
    }
}
