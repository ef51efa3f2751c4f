use std::fmt;
use std::str::FromStr;

use super::CrfError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Sum,
    Average,
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum" => Ok(Aggregation::Sum),
            "average" => Ok(Aggregation::Average),
            other => Err(format!("unknown aggregation `{other}` (expected sum or average)")),
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Sum => "sum",
            Aggregation::Average => "average",
        })
    }
}

/// Linear softmax head over a bag-of-embeddings document encoding.
/// `weights` is `C × E`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxClassifier {
    num_classes: usize,
    dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub aggregation: Aggregation,
    pub use_bias: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// d loss / d token vector, one row per input token.
    pub inputs: Vec<Vec<f64>>,
}

impl SoftmaxClassifier {
    pub fn new(num_classes: usize, dim: usize, aggregation: Aggregation, use_bias: bool) -> Result<Self, CrfError> {
        if num_classes < 2 {
            return Err(CrfError::InvalidModel(format!("need at least 2 classes, got {num_classes}")));
        }
        if dim == 0 {
            return Err(CrfError::InvalidModel("encoding dimension must be positive".into()));
        }
        Ok(SoftmaxClassifier {
            num_classes,
            dim,
            weights: vec![0.0; num_classes * dim],
            bias: vec![0.0; num_classes],
            aggregation,
            use_bias,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn encode<V: AsRef<[f64]>>(&self, vectors: &[V]) -> Result<Vec<f64>, CrfError> {
        if vectors.is_empty() {
            return Err(CrfError::EmptyDocument);
        }
        let mut out = vec![0.0; self.dim];
        for v in vectors {
            let v = v.as_ref();
            if v.len() != self.dim {
                return Err(CrfError::DimMismatch {
                    expected: self.dim,
                    found: v.len(),
                });
            }
            for (o, x) in out.iter_mut().zip(v) {
                *o += x;
            }
        }
        if self.aggregation == Aggregation::Average {
            let n = vectors.len() as f64;
            out.iter_mut().for_each(|o| *o /= n);
        }
        Ok(out)
    }

    pub fn logits(&self, encoding: &[f64]) -> Vec<f64> {
        (0..self.num_classes)
            .map(|c| {
                let w = &self.weights[c * self.dim..(c + 1) * self.dim];
                let dot: f64 = w.iter().zip(encoding).map(|(a, b)| a * b).sum();
                if self.use_bias {
                    dot + self.bias[c]
                } else {
                    dot
                }
            })
            .collect()
    }

    pub fn classify_scores<V: AsRef<[f64]>>(&self, vectors: &[V]) -> Result<Vec<f64>, CrfError> {
        let enc = self.encode(vectors)?;
        Ok(softmax(&self.logits(&enc)))
    }

    /// Cross-entropy loss and its gradient.
    pub fn nll_gradient<V: AsRef<[f64]>>(&self, vectors: &[V], gold: usize) -> Result<(f64, ClassifierGradient), CrfError> {
        if gold >= self.num_classes {
            return Err(CrfError::InvalidLabel {
                index: gold,
                k: self.num_classes,
            });
        }
        let enc = self.encode(vectors)?;
        let logits = self.logits(&enc);
        let log_z = super::log_sum_exp(&logits);
        let loss = log_z - logits[gold];
        let mut resid: Vec<f64> = logits.iter().map(|l| (l - log_z).exp()).collect();
        resid[gold] -= 1.0;

        let mut weights = vec![0.0; self.weights.len()];
        for (c, r) in resid.iter().enumerate() {
            for (g, e) in weights[c * self.dim..(c + 1) * self.dim].iter_mut().zip(&enc) {
                *g = r * e;
            }
        }
        let bias = if self.use_bias { resid.clone() } else { vec![0.0; self.num_classes] };

        let scale = match self.aggregation {
            Aggregation::Sum => 1.0,
            Aggregation::Average => 1.0 / vectors.len() as f64,
        };
        let mut d_enc = vec![0.0; self.dim];
        for (c, r) in resid.iter().enumerate() {
            for (d, w) in d_enc.iter_mut().zip(&self.weights[c * self.dim..(c + 1) * self.dim]) {
                *d += scale * r * w;
            }
        }
        let inputs = vec![d_enc; vectors.len()];
        Ok((loss, ClassifierGradient { weights, bias, inputs }))
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
