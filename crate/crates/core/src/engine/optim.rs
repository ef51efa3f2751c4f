//! Parameter updates, gradient clipping, plateau scheduling and word dropout.

use super::EngineError;
use crate::corpus::{PAD_ID, UNK_ID};
use crate::rng::{self, Rng};

pub const ADAGRAD_EPS: f64 = 1e-8;

fn check(group: &str, params: &[f64], grads: &[f64], state: &[f64]) -> Result<(), EngineError> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(EngineError::ShapeMismatch {
            group: group.to_string(),
            detail: format!("params {}, grads {}, state {}", params.len(), grads.len(), state.len()),
        });
    }
    Ok(())
}

/// `v ← μv + g; p ← p − lr·v`.
pub fn sgd_step(
    group: &str,
    params: &mut [f64],
    grads: &[f64],
    lr: f64,
    momentum: f64,
    velocity: &mut [f64],
) -> Result<(), EngineError> {
    check(group, params, grads, velocity)?;
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
    Ok(())
}

/// `a ← a + g²; p ← p − lr·g/√(a+ε)`.
pub fn adagrad_step(
    group: &str,
    params: &mut [f64],
    grads: &[f64],
    lr: f64,
    eps: f64,
    accum: &mut [f64],
) -> Result<(), EngineError> {
    check(group, params, grads, accum)?;
    for ((p, g), a) in params.iter_mut().zip(grads).zip(accum.iter_mut()) {
        *a += g * g;
        *p -= lr * g / (*a + eps).sqrt();
    }
    Ok(())
}

/// Rescales all groups jointly so the global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<'a>(groups: impl IntoIterator<Item = &'a mut Vec<f64>>, max_norm: f64) -> f64 {
    let groups: Vec<&mut Vec<f64>> = groups.into_iter().collect();
    let norm = groups.iter().flat_map(|g| g.iter()).map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in groups {
            for x in g.iter_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

/// Reduce-on-plateau learning-rate schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    pub higher_better: bool,
    best: Option<f64>,
    bad_epochs: usize,
}

/// Improvement must exceed this margin to count.
pub const IMPROVEMENT_TOL: f64 = 1e-12;

pub fn improves(value: f64, best: Option<f64>, higher_better: bool) -> bool {
    match best {
        None => true,
        Some(b) if higher_better => value > b + IMPROVEMENT_TOL,
        Some(b) => value < b - IMPROVEMENT_TOL,
    }
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize, higher_better: bool) -> Self {
        PlateauScheduler {
            factor,
            patience,
            higher_better,
            best: None,
            bad_epochs: 0,
        }
    }

    /// Records one epoch's metric and returns the learning rate to use next.
    pub fn step(&mut self, metric: f64, lr: f64) -> f64 {
        if improves(metric, self.best, self.higher_better) {
            self.best = Some(metric);
            self.bad_epochs = 0;
            return lr;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.bad_epochs = 0;
            return lr * self.factor;
        }
        lr
    }
}

/// Replays `history` through a fresh scheduler.
pub fn plateau_schedule(history: &[f64], factor: f64, patience: usize, higher_better: bool, lr: f64) -> f64 {
    let mut s = PlateauScheduler::new(factor, patience, higher_better);
    history.iter().fold(lr, |lr, &m| s.step(m, lr))
}

/// Replaces each non-pad id by UNK with probability `p`.
pub fn apply_word_dropout(ids: &[u32], p: f64, rng: &mut Rng) -> Vec<u32> {
    if p <= 0.0 {
        return ids.to_vec();
    }
    ids.iter()
        .map(|&id| {
            if id == PAD_ID {
                id
            } else if rng::unit_f64(rng) < p {
                UNK_ID
            } else {
                id
            }
        })
        .collect()
}
