//! Linear-chain CRF and softmax classifier heads.
//!
//! Path scores are `start[y0] + Σ emit[t][yt] + Σ T[yt][yt+1] + end[yL-1]`.
//! All inference runs in log space; forbidden transitions are encoded with
//! the finite sentinel [`NEG_INF`] so arithmetic stays total.

mod classifier;
mod labels;

use thiserror::Error;

pub use self::classifier::{softmax, Aggregation, ClassifierGradient, SoftmaxClassifier};
pub use self::labels::{BioTag, LabelSet};
use crate::features::SparseFeatureVector;

/// Log-space stand-in for −∞.
pub const NEG_INF: f64 = -1e30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CrfError {
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("label set is not BIO: `{0}`")]
    NotBioLabelSet(String),
    #[error("label index {index} out of range for {k} labels")]
    InvalidLabel { index: usize, k: usize },
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("feature id {id} outside a model with {num_features} features")]
    FeatureOutOfRange { id: usize, num_features: usize },
    #[error("document has no tokens")]
    EmptyDocument,
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// Per-position, per-label scores for one sequence (row-major `L × K`).
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionTable {
    len: usize,
    k: usize,
    scores: Vec<f64>,
}

impl EmissionTable {
    pub fn new(len: usize, k: usize, scores: Vec<f64>) -> Result<Self, CrfError> {
        if scores.len() != len * k {
            return Err(CrfError::LengthMismatch {
                expected: len * k,
                found: scores.len(),
            });
        }
        Ok(EmissionTable { len, k, scores })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, CrfError> {
        let k = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != k) {
            return Err(CrfError::DimMismatch {
                expected: k,
                found: bad.len(),
            });
        }
        Self::new(rows.len(), k, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_labels(&self) -> usize {
        self.k
    }

    pub fn get(&self, t: usize, y: usize) -> f64 {
        self.scores[t * self.k + y]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.scores[t * self.k..(t + 1) * self.k]
    }

    pub fn add(&mut self, t: usize, y: usize, delta: f64) {
        self.scores[t * self.k + y] += delta;
    }
}

/// Featurized sequence: sparse features per position and optional dense
/// vectors per position.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CrfInput {
    pub sparse: Vec<SparseFeatureVector>,
    pub dense: Option<Vec<Vec<f64>>>,
}

impl CrfInput {
    pub fn len(&self) -> usize {
        self.sparse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sparse.is_empty()
    }
}

/// CRF parameter groups; gradients share the same layout.
///
/// * `sparse`: `F × K`, feature-major (`sparse[f * K + y]`)
/// * `dense`: `K × D` (`dense[y * D + d]`)
/// * `transitions`: `K × K` (`transitions[prev * K + next]`)
#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams {
    pub sparse: Vec<f64>,
    pub dense: Vec<f64>,
    pub transitions: Vec<f64>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl CrfParams {
    pub fn zeros(k: usize, num_features: usize, dense_dim: usize) -> Self {
        CrfParams {
            sparse: vec![0.0; num_features * k],
            dense: vec![0.0; k * dense_dim],
            transitions: vec![0.0; k * k],
            start: vec![0.0; k],
            end: vec![0.0; k],
        }
    }

    /// Groups in name order.
    pub fn groups(&self) -> [(&'static str, &Vec<f64>); 5] {
        [
            ("dense", &self.dense),
            ("end", &self.end),
            ("sparse", &self.sparse),
            ("start", &self.start),
            ("transitions", &self.transitions),
        ]
    }

    pub fn groups_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 5] {
        [
            ("dense", &mut self.dense),
            ("end", &mut self.end),
            ("sparse", &mut self.sparse),
            ("start", &mut self.start),
            ("transitions", &mut self.transitions),
        ]
    }

    pub fn squared_norm(&self) -> f64 {
        self.groups().iter().flat_map(|(_, g)| g.iter()).map(|x| x * x).sum()
    }

    pub fn fill(&mut self, value: f64) {
        for (_, g) in self.groups_mut() {
            g.fill(value);
        }
    }
}

/// Gradient of the CRF negative log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfGradient {
    pub params: CrfParams,
    /// d nll / d dense input, per position (present when the input is dense).
    pub dense_input: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    labels: LabelSet,
    num_features: usize,
    dense_dim: usize,
    pub params: CrfParams,
    pub l2: f64,
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl CrfModel {
    pub fn new(labels: LabelSet, num_features: usize, dense_dim: usize, l2: f64) -> Self {
        let k = labels.len();
        CrfModel {
            labels,
            num_features,
            dense_dim,
            params: CrfParams::zeros(k, num_features, dense_dim),
            l2,
        }
    }

    /// Replaces all parameters, checking every group's length.
    pub fn with_params(mut self, params: CrfParams) -> Result<Self, CrfError> {
        let expected = CrfParams::zeros(self.k(), self.num_features, self.dense_dim);
        for ((_, want), (_, got)) in expected.groups().iter().zip(params.groups().iter()) {
            if want.len() != got.len() {
                return Err(CrfError::LengthMismatch {
                    expected: want.len(),
                    found: got.len(),
                });
            }
        }
        self.params = params;
        Ok(self)
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn dense_dim(&self) -> usize {
        self.dense_dim
    }

    fn trans(&self, i: usize, j: usize) -> f64 {
        self.params.transitions[i * self.k() + j]
    }

    fn check_emissions(&self, em: &EmissionTable) -> Result<(), CrfError> {
        if em.is_empty() {
            return Err(CrfError::EmptySequence);
        }
        if em.num_labels() != self.k() {
            return Err(CrfError::DimMismatch {
                expected: self.k(),
                found: em.num_labels(),
            });
        }
        Ok(())
    }

    fn check_path(&self, em: &EmissionTable, path: &[usize]) -> Result<(), CrfError> {
        self.check_emissions(em)?;
        if path.len() != em.len() {
            return Err(CrfError::LengthMismatch {
                expected: em.len(),
                found: path.len(),
            });
        }
        if let Some(&bad) = path.iter().find(|&&y| y >= self.k()) {
            return Err(CrfError::InvalidLabel { index: bad, k: self.k() });
        }
        Ok(())
    }

    /// Emission scores `θ[y]·φ(t) + Θ[y]·e(t)`.
    pub fn emissions(&self, input: &CrfInput) -> Result<EmissionTable, CrfError> {
        let k = self.k();
        let len = input.len();
        let mut scores = vec![0.0; len * k];
        for (t, feats) in input.sparse.iter().enumerate() {
            let row = &mut scores[t * k..(t + 1) * k];
            for (f, v) in feats.iter() {
                if f >= self.num_features {
                    return Err(CrfError::FeatureOutOfRange {
                        id: f,
                        num_features: self.num_features,
                    });
                }
                let w = &self.params.sparse[f * k..(f + 1) * k];
                for (r, wy) in row.iter_mut().zip(w) {
                    *r += v * wy;
                }
            }
        }
        match &input.dense {
            Some(dense) => {
                if dense.len() != len {
                    return Err(CrfError::LengthMismatch {
                        expected: len,
                        found: dense.len(),
                    });
                }
                for (t, e) in dense.iter().enumerate() {
                    if e.len() != self.dense_dim {
                        return Err(CrfError::DimMismatch {
                            expected: self.dense_dim,
                            found: e.len(),
                        });
                    }
                    for y in 0..k {
                        let w = &self.params.dense[y * self.dense_dim..(y + 1) * self.dense_dim];
                        scores[t * k + y] += w.iter().zip(e).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
            None if self.dense_dim > 0 => {
                return Err(CrfError::DimMismatch {
                    expected: self.dense_dim,
                    found: 0,
                })
            }
            None => {}
        }
        EmissionTable::new(len, k, scores)
    }

    pub fn path_score(&self, em: &EmissionTable, path: &[usize]) -> Result<f64, CrfError> {
        self.check_path(em, path)?;
        let mut score = self.params.start[path[0]] + self.params.end[path[path.len() - 1]];
        for (t, &y) in path.iter().enumerate() {
            score += em.get(t, y);
            if t > 0 {
                score += self.trans(path[t - 1], y);
            }
        }
        Ok(score)
    }

    /// Forward log-potentials, row-major `L × K`.
    fn forward(&self, em: &EmissionTable) -> Vec<f64> {
        let (len, k) = (em.len(), self.k());
        let mut alpha = vec![0.0; len * k];
        for y in 0..k {
            alpha[y] = self.params.start[y] + em.get(0, y);
        }
        let mut buf = vec![0.0; k];
        for t in 1..len {
            for j in 0..k {
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = alpha[(t - 1) * k + i] + self.trans(i, j);
                }
                alpha[t * k + j] = log_sum_exp(&buf) + em.get(t, j);
            }
        }
        alpha
    }

    fn backward(&self, em: &EmissionTable) -> Vec<f64> {
        let (len, k) = (em.len(), self.k());
        let mut beta = vec![0.0; len * k];
        beta[(len - 1) * k..].copy_from_slice(&self.params.end);
        let mut buf = vec![0.0; k];
        for t in (0..len - 1).rev() {
            for i in 0..k {
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = self.trans(i, j) + em.get(t + 1, j) + beta[(t + 1) * k + j];
                }
                beta[t * k + i] = log_sum_exp(&buf);
            }
        }
        beta
    }

    fn log_z_from_alpha(&self, em: &EmissionTable, alpha: &[f64]) -> f64 {
        let k = self.k();
        let last = &alpha[(em.len() - 1) * k..];
        let finals: Vec<f64> = last.iter().zip(&self.params.end).map(|(a, e)| a + e).collect();
        log_sum_exp(&finals)
    }

    pub fn log_partition(&self, em: &EmissionTable) -> Result<f64, CrfError> {
        self.check_emissions(em)?;
        Ok(self.log_z_from_alpha(em, &self.forward(em)))
    }

    /// Per-position label posteriors (`L` rows of `K`).
    pub fn marginals(&self, em: &EmissionTable) -> Result<Vec<Vec<f64>>, CrfError> {
        self.check_emissions(em)?;
        let alpha = self.forward(em);
        let beta = self.backward(em);
        let log_z = self.log_z_from_alpha(em, &alpha);
        Ok(self.node_marginals(em, &alpha, &beta, log_z))
    }

    fn node_marginals(&self, em: &EmissionTable, alpha: &[f64], beta: &[f64], log_z: f64) -> Vec<Vec<f64>> {
        let k = self.k();
        (0..em.len())
            .map(|t| (0..k).map(|y| (alpha[t * k + y] + beta[t * k + y] - log_z).exp()).collect())
            .collect()
    }

    /// Pairwise posteriors `P(y_t = i, y_{t+1} = j)` for `t` in `0..L-1`,
    /// each row-major `K × K`.
    pub fn edge_marginals(&self, em: &EmissionTable) -> Result<Vec<Vec<f64>>, CrfError> {
        self.check_emissions(em)?;
        let alpha = self.forward(em);
        let beta = self.backward(em);
        let log_z = self.log_z_from_alpha(em, &alpha);
        Ok(self.pair_marginals(em, &alpha, &beta, log_z))
    }

    fn pair_marginals(&self, em: &EmissionTable, alpha: &[f64], beta: &[f64], log_z: f64) -> Vec<Vec<f64>> {
        let k = self.k();
        (0..em.len().saturating_sub(1))
            .map(|t| {
                let mut m = vec![0.0; k * k];
                for i in 0..k {
                    for j in 0..k {
                        m[i * k + j] = (alpha[t * k + i] + self.trans(i, j) + em.get(t + 1, j) + beta[(t + 1) * k + j]
                            - log_z)
                            .exp();
                    }
                }
                m
            })
            .collect()
    }

    /// Max-product decoding. Ties go to the lower label index.
    pub fn viterbi(&self, em: &EmissionTable) -> Result<(Vec<usize>, f64), CrfError> {
        self.check_emissions(em)?;
        Ok(self.decode(em, &self.params.transitions, &self.params.start))
    }

    fn decode(&self, em: &EmissionTable, transitions: &[f64], start: &[f64]) -> (Vec<usize>, f64) {
        let (len, k) = (em.len(), self.k());
        let mut delta: Vec<f64> = (0..k).map(|y| start[y] + em.get(0, y)).collect();
        let mut back = vec![0usize; len * k];
        let mut next = vec![0.0; k];
        for t in 1..len {
            for j in 0..k {
                let mut best = 0;
                let mut best_score = delta[0] + transitions[j];
                for i in 1..k {
                    let s = delta[i] + transitions[i * k + j];
                    if s > best_score {
                        best = i;
                        best_score = s;
                    }
                }
                back[t * k + j] = best;
                next[j] = best_score + em.get(t, j);
            }
            std::mem::swap(&mut delta, &mut next);
        }
        let mut last = 0;
        let mut best_score = delta[0] + self.params.end[0];
        for (y, d) in delta.iter().enumerate().skip(1) {
            let s = d + self.params.end[y];
            if s > best_score {
                last = y;
                best_score = s;
            }
        }
        let mut path = vec![last; len];
        for t in (1..len).rev() {
            path[t - 1] = back[t * k + path[t]];
        }
        (path, best_score)
    }

    /// Viterbi restricted to BIO-valid paths: `I-X` may only follow `B-X`
    /// or `I-X`, and may not start a sequence.
    pub fn constrained_viterbi(&self, em: &EmissionTable) -> Result<(Vec<usize>, f64), CrfError> {
        self.check_emissions(em)?;
        let tags = self.labels.bio_tags()?;
        let k = self.k();
        let mut transitions = self.params.transitions.clone();
        let mut start = self.params.start.clone();
        for (j, tag) in tags.iter().enumerate() {
            if let BioTag::Inside(ty) = tag {
                start[j] = NEG_INF;
                for (i, prev) in tags.iter().enumerate() {
                    let ok = matches!(prev, BioTag::Begin(p) | BioTag::Inside(p) if p == ty);
                    if !ok {
                        transitions[i * k + j] = NEG_INF;
                    }
                }
            }
        }
        let (path, _) = self.decode(em, &transitions, &start);
        let score = self.path_score(em, &path)?;
        Ok((path, score))
    }

    /// Decodes with BIO constraints when the label set is BIO, plain Viterbi
    /// otherwise.
    pub fn decode_auto(&self, em: &EmissionTable) -> Result<(Vec<usize>, f64), CrfError> {
        if self.labels.is_bio() {
            self.constrained_viterbi(em)
        } else {
            self.viterbi(em)
        }
    }

    /// `(l2 / 2) · ‖θ‖²` over every parameter group.
    pub fn l2_penalty(&self) -> f64 {
        0.5 * self.l2 * self.params.squared_norm()
    }

    /// `log Z − score(gold) + (l2 / 2)‖θ‖²`.
    pub fn nll(&self, em: &EmissionTable, gold: &[usize]) -> Result<f64, CrfError> {
        let gold_score = self.path_score(em, gold)?;
        Ok(self.log_partition(em)? - gold_score + self.l2_penalty())
    }

    /// Full gradient of [`CrfModel::nll`] including the l2 term.
    pub fn nll_gradient(&self, input: &CrfInput, gold: &[usize]) -> Result<CrfGradient, CrfError> {
        let mut params = CrfParams::zeros(self.k(), self.num_features, self.dense_dim);
        let mut dense_input = input.dense.as_ref().map(|d| vec![vec![0.0; self.dense_dim]; d.len()]);
        self.accumulate_gradient(input, gold, 1.0, &mut params, dense_input.as_mut())?;
        self.add_l2_gradient(&mut params, 1.0);
        Ok(CrfGradient { params, dense_input })
    }

    /// Adds `scale · (E_model[φ] − φ(gold))` into `grad` (no l2 term) and
    /// returns the data loss `log Z − score(gold)`.
    pub fn accumulate_gradient(
        &self,
        input: &CrfInput,
        gold: &[usize],
        scale: f64,
        grad: &mut CrfParams,
        mut dense_input: Option<&mut Vec<Vec<f64>>>,
    ) -> Result<f64, CrfError> {
        let em = self.emissions(input)?;
        self.check_path(&em, gold)?;
        let (len, k, dd) = (em.len(), self.k(), self.dense_dim);
        let alpha = self.forward(&em);
        let beta = self.backward(&em);
        let log_z = self.log_z_from_alpha(&em, &alpha);
        let gold_score = self.path_score(&em, gold)?;
        let marg = self.node_marginals(&em, &alpha, &beta, log_z);
        let pairs = self.pair_marginals(&em, &alpha, &beta, log_z);

        // Residual r[t][y] = P(y_t = y) − [gold_t = y].
        let mut resid = marg;
        for (t, &y) in gold.iter().enumerate() {
            resid[t][y] -= 1.0;
        }

        for (t, r) in resid.iter().enumerate() {
            for (f, v) in input.sparse[t].iter() {
                let g = &mut grad.sparse[f * k..(f + 1) * k];
                for (gy, ry) in g.iter_mut().zip(r) {
                    *gy += scale * v * ry;
                }
            }
            if let Some(dense) = &input.dense {
                let e = &dense[t];
                for (y, ry) in r.iter().enumerate() {
                    let g = &mut grad.dense[y * dd..(y + 1) * dd];
                    for (gd, ed) in g.iter_mut().zip(e) {
                        *gd += scale * ry * ed;
                    }
                }
                if let Some(out) = dense_input.as_deref_mut() {
                    for (y, ry) in r.iter().enumerate() {
                        let w = &self.params.dense[y * dd..(y + 1) * dd];
                        for (o, wd) in out[t].iter_mut().zip(w) {
                            *o += scale * ry * wd;
                        }
                    }
                }
            }
        }
        for y in 0..k {
            grad.start[y] += scale * resid[0][y];
            grad.end[y] += scale * resid[len - 1][y];
        }
        for (t, pair) in pairs.iter().enumerate() {
            for (g, p) in grad.transitions.iter_mut().zip(pair) {
                *g += scale * p;
            }
            grad.transitions[gold[t] * k + gold[t + 1]] -= scale;
        }
        Ok(log_z - gold_score)
    }

    /// Adds `scale · l2 · θ` into `grad`.
    pub fn add_l2_gradient(&self, grad: &mut CrfParams, scale: f64) {
        if self.l2 == 0.0 {
            return;
        }
        for ((_, g), (_, p)) in grad.groups_mut().into_iter().zip(self.params.groups()) {
            for (gi, pi) in g.iter_mut().zip(p.iter()) {
                *gi += scale * self.l2 * pi;
            }
        }
    }
}
