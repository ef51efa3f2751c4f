//! Reference implementations used as test oracles. Nothing here calls into
//! the CRF inference routines; scores are recomputed from raw matrices.
#![allow(dead_code)]

use sdpkit::crf::{Aggregation, CrfInput, CrfModel, CrfParams, EmissionTable, LabelSet, SoftmaxClassifier};
use sdpkit::features::SparseFeatureVector;
use sdpkit::rng::{self, Rng};

pub fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng::unit_f64(rng)
}

pub fn labels(k: usize) -> LabelSet {
    LabelSet::new((0..k).map(|i| format!("L{i}")).collect()).unwrap()
}

pub fn bio_labels(types: usize) -> LabelSet {
    let mut names = vec!["O".to_string()];
    for t in 0..types {
        names.push(format!("B-T{t}"));
        names.push(format!("I-T{t}"));
    }
    LabelSet::new(names).unwrap()
}

/// Plain matrices describing one CRF scoring problem.
#[derive(Debug, Clone)]
pub struct RawCrf {
    pub emissions: Vec<Vec<f64>>,
    pub transitions: Vec<Vec<f64>>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl RawCrf {
    pub fn random(rng: &mut Rng, len: usize, k: usize, scale: f64) -> Self {
        let mut draw = |n: usize| (0..n).map(|_| uniform(rng, -scale, scale)).collect::<Vec<f64>>();
        let emissions = (0..len).map(|_| draw(k)).collect();
        let transitions = (0..k).map(|_| draw(k)).collect();
        let start = draw(k);
        let end = draw(k);
        RawCrf {
            emissions,
            transitions,
            start,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.emissions.len()
    }

    pub fn k(&self) -> usize {
        self.start.len()
    }

    pub fn model(&self, labels: LabelSet) -> CrfModel {
        let k = self.k();
        let mut params = CrfParams::zeros(k, 0, 0);
        params.transitions = self.transitions.concat();
        params.start = self.start.clone();
        params.end = self.end.clone();
        CrfModel::new(labels, 0, 0, 0.0).with_params(params).unwrap()
    }

    pub fn table(&self) -> EmissionTable {
        EmissionTable::from_rows(&self.emissions).unwrap()
    }

    pub fn score(&self, path: &[usize]) -> f64 {
        let mut s = self.start[path[0]] + self.end[*path.last().unwrap()];
        for t in 0..path.len() {
            s += self.emissions[t][path[t]];
        }
        for w in path.windows(2) {
            s += self.transitions[w[0]][w[1]];
        }
        s
    }

    /// Every path in lexicographic order.
    pub fn paths(&self) -> Vec<Vec<usize>> {
        let (len, k) = (self.len(), self.k());
        let total = k.pow(len as u32);
        (0..total)
            .map(|mut code| {
                let mut p = vec![0; len];
                for slot in p.iter_mut().rev() {
                    *slot = code % k;
                    code /= k;
                }
                p
            })
            .collect()
    }

    pub fn log_partition(&self) -> f64 {
        let scores: Vec<f64> = self.paths().iter().map(|p| self.score(p)).collect();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
    }

    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let log_z = self.log_partition();
        let mut m = vec![vec![0.0; self.k()]; self.len()];
        for p in self.paths() {
            let w = (self.score(&p) - log_z).exp();
            for (t, &y) in p.iter().enumerate() {
                m[t][y] += w;
            }
        }
        m
    }

    /// `P(y_t = a, y_{t+1} = b)` as `K × K` row-major tables, one per
    /// adjacent pair.
    pub fn edge_marginals(&self) -> Vec<Vec<f64>> {
        let log_z = self.log_partition();
        let k = self.k();
        let mut m = vec![vec![0.0; k * k]; self.len().saturating_sub(1)];
        for p in self.paths() {
            let w = (self.score(&p) - log_z).exp();
            for t in 0..p.len().saturating_sub(1) {
                m[t][p[t] * k + p[t + 1]] += w;
            }
        }
        m
    }

    /// Highest-scoring path among those accepted by `keep`; the first in
    /// lexicographic order wins ties.
    pub fn argmax_where(&self, keep: impl Fn(&[usize]) -> bool) -> (Vec<usize>, f64) {
        let mut best: Option<(Vec<usize>, f64)> = None;
        for p in self.paths() {
            if !keep(&p) {
                continue;
            }
            let s = self.score(&p);
            if best.as_ref().is_none_or(|(_, b)| s > *b) {
                best = Some((p, s));
            }
        }
        best.expect("at least one admissible path")
    }

    pub fn argmax(&self) -> (Vec<usize>, f64) {
        self.argmax_where(|_| true)
    }
}

/// BIO validity of a label-name path.
pub fn bio_valid(names: &[&str]) -> bool {
    let mut prev: Option<&str> = None;
    for name in names {
        if let Some(ty) = name.strip_prefix("I-") {
            match prev {
                Some(p) if p == format!("B-{ty}") || p == format!("I-{ty}") => {}
                _ => return false,
            }
        }
        prev = Some(name);
    }
    true
}

/// Central difference of `f` at `x[i]`.
pub fn central_difference(x: &mut [f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + h;
    let plus = f(x);
    x[i] = orig - h;
    let minus = f(x);
    x[i] = orig;
    (plus - minus) / (2.0 * h)
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_ABS_FLOOR: f64 = 1e-7;

pub fn gradients_agree(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= FD_ABS_FLOOR || diff / analytic.abs().max(numeric.abs()) <= FD_REL_TOL
}

/// A featurized CRF instance with sparse and dense inputs.
pub struct CrfCase {
    pub model: CrfModel,
    pub input: CrfInput,
    pub gold: Vec<usize>,
}

pub fn random_crf_case(rng: &mut Rng) -> CrfCase {
    let k = 1 + rng::below(rng, 4);
    let len = 1 + rng::below(rng, 5);
    let num_features = 1 + rng::below(rng, 6);
    let dense_dim = rng::below(rng, 3);
    let l2 = if rng::below(rng, 2) == 0 { 0.0 } else { uniform(rng, 0.0, 0.5) };
    let mut params = CrfParams::zeros(k, num_features, dense_dim);
    for (_, g) in params.groups_mut() {
        for v in g.iter_mut() {
            *v = uniform(rng, -1.0, 1.0);
        }
    }
    let model = CrfModel::new(labels(k), num_features, dense_dim, l2).with_params(params).unwrap();
    let sparse = (0..len)
        .map(|_| {
            let n = rng::below(rng, 4);
            SparseFeatureVector::from_ids((0..n).map(|_| rng::below(rng, num_features) as u32))
        })
        .collect();
    let dense = (dense_dim > 0).then(|| {
        (0..len)
            .map(|_| (0..dense_dim).map(|_| uniform(rng, -1.0, 1.0)).collect())
            .collect()
    });
    let gold = (0..len).map(|_| rng::below(rng, k)).collect();
    CrfCase {
        model,
        input: CrfInput { sparse, dense },
        gold,
    }
}

/// Checks every parameter and dense-input coordinate of a CRF case.
/// Returns the number of coordinates checked or a description of the
/// first disagreement.
pub fn check_crf_gradient(case: &CrfCase) -> Result<usize, String> {
    let grad = case.model.nll_gradient(&case.input, &case.gold).unwrap();
    let mut checked = 0;
    let group_names: Vec<&str> = case.model.params.groups().iter().map(|(n, _)| *n).collect();
    for (gi, name) in group_names.iter().enumerate() {
        let analytic = grad.params.groups()[gi].1.clone();
        let mut model = case.model.clone();
        for (i, &a) in analytic.iter().enumerate() {
            let n = {
                let orig = model.params.groups()[gi].1[i];
                let mut eval = |v: f64| {
                    model.params.groups_mut()[gi].1[i] = v;
                    let em = model.emissions(&case.input).unwrap();
                    model.nll(&em, &case.gold).unwrap()
                };
                let plus = eval(orig + FD_STEP);
                let minus = eval(orig - FD_STEP);
                eval(orig);
                (plus - minus) / (2.0 * FD_STEP)
            };
            if !gradients_agree(a, n) {
                return Err(format!("{name}[{i}]: analytic {a} vs numeric {n}"));
            }
            checked += 1;
        }
    }
    if let (Some(dense), Some(dg)) = (&case.input.dense, &grad.dense_input) {
        for t in 0..dense.len() {
            for d in 0..dense[t].len() {
                let mut input = case.input.clone();
                let mut row = dense[t].clone();
                let n = central_difference(&mut row, d, FD_STEP, |r| {
                    input.dense.as_mut().unwrap()[t] = r.to_vec();
                    let em = case.model.emissions(&input).unwrap();
                    case.model.nll(&em, &case.gold).unwrap()
                });
                if !gradients_agree(dg[t][d], n) {
                    return Err(format!("input[{t}][{d}]: analytic {} vs numeric {n}", dg[t][d]));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}

pub struct ClassifierCase {
    pub clf: SoftmaxClassifier,
    pub vectors: Vec<Vec<f64>>,
    pub gold: usize,
}

pub fn random_classifier_case(rng: &mut Rng) -> ClassifierCase {
    let c = 2 + rng::below(rng, 4);
    let e = 1 + rng::below(rng, 5);
    let agg = if rng::below(rng, 2) == 0 { Aggregation::Sum } else { Aggregation::Average };
    let mut clf = SoftmaxClassifier::new(c, e, agg, rng::below(rng, 3) > 0).unwrap();
    for w in clf.weights.iter_mut().chain(clf.bias.iter_mut()) {
        *w = uniform(rng, -1.0, 1.0);
    }
    let n = 1 + rng::below(rng, 6);
    let vectors = (0..n).map(|_| (0..e).map(|_| uniform(rng, -1.0, 1.0)).collect()).collect();
    let gold = rng::below(rng, c);
    ClassifierCase { clf, vectors, gold }
}

fn classifier_loss(clf: &SoftmaxClassifier, vectors: &[Vec<f64>], gold: usize) -> f64 {
    // Independent recomputation of −log softmax(W·enc + b)[gold].
    let n = vectors.len() as f64;
    let enc: Vec<f64> = (0..clf.dim())
        .map(|d| {
            let s: f64 = vectors.iter().map(|v| v[d]).sum();
            match clf.aggregation {
                Aggregation::Sum => s,
                Aggregation::Average => s / n,
            }
        })
        .collect();
    let logits: Vec<f64> = (0..clf.num_classes())
        .map(|c| {
            let w = &clf.weights[c * clf.dim()..(c + 1) * clf.dim()];
            w.iter().zip(&enc).map(|(a, b)| a * b).sum::<f64>() + if clf.use_bias { clf.bias[c] } else { 0.0 }
        })
        .collect();
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    z.ln() - logits[gold]
}

pub fn check_classifier_gradient(case: &ClassifierCase) -> Result<usize, String> {
    let (loss, grad) = case.clf.nll_gradient(&case.vectors, case.gold).unwrap();
    let reference = classifier_loss(&case.clf, &case.vectors, case.gold);
    if (loss - reference).abs() > 1e-12 {
        return Err(format!("loss {loss} vs reference {reference}"));
    }
    let mut checked = 0;
    let mut clf = case.clf.clone();
    let mut weights = clf.weights.clone();
    for (i, &a) in grad.weights.iter().enumerate() {
        let n = central_difference(&mut weights, i, FD_STEP, |w| {
            clf.weights = w.to_vec();
            classifier_loss(&clf, &case.vectors, case.gold)
        });
        if !gradients_agree(a, n) {
            return Err(format!("weights[{i}]: analytic {a} vs numeric {n}"));
        }
        checked += 1;
    }
    let mut clf = case.clf.clone();
    let mut bias = clf.bias.clone();
    for (i, &a) in grad.bias.iter().enumerate() {
        let n = central_difference(&mut bias, i, FD_STEP, |b| {
            clf.bias = b.to_vec();
            classifier_loss(&clf, &case.vectors, case.gold)
        });
        if !gradients_agree(a, n) {
            return Err(format!("bias[{i}]: analytic {a} vs numeric {n}"));
        }
        checked += 1;
    }
    for t in 0..case.vectors.len() {
        for d in 0..case.clf.dim() {
            let mut vectors = case.vectors.clone();
            let mut row = vectors[t].clone();
            let n = central_difference(&mut row, d, FD_STEP, |r| {
                vectors[t] = r.to_vec();
                classifier_loss(&case.clf, &vectors, case.gold)
            });
            if !gradients_agree(grad.inputs[t][d], n) {
                return Err(format!("input[{t}][{d}]: analytic {} vs numeric {n}", grad.inputs[t][d]));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

/// Repository root (two levels above this crate).
pub fn repo_root() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Loads a bundled experiment with its checkpoint directory redirected.
pub fn bundled_experiment(name: &str, checkpoint_dir: &std::path::Path) -> sdpkit::components::Experiment {
    let path = repo_root().join("configs").join(name);
    let text = std::fs::read_to_string(&path).unwrap();
    let line = text
        .lines()
        .find(|l| l.starts_with("checkpoint_dir"))
        .expect("config names a checkpoint_dir");
    let text = text.replace(line, &format!("checkpoint_dir = {:?}", checkpoint_dir.display().to_string()));
    sdpkit::components::experiment_from_str(&text, path.parent().unwrap()).unwrap()
}
