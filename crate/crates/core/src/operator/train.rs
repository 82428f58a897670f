use serde::{Deserialize, Serialize};

use super::data::OperatorDataset;
use super::deeponet::DeepONet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    /// Seed of the weight initialization.
    pub seed: u64,
    pub optimizer: Optimizer,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Losses are recorded every `log_every` iterations and at the end.
    pub log_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            iterations: 50_000,
            seed: 0,
            optimizer: Optimizer::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            log_every: 1000,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("adam decay rates must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub records: Vec<LossRecord>,
}

impl LossHistory {
    pub fn initial_train(&self) -> Option<f64> {
        self.records.first().map(|r| r.train_loss)
    }

    pub fn final_record(&self) -> Option<&LossRecord> {
        self.records.last()
    }

    /// Running minimum of the training loss over the records.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.records
            .iter()
            .scan(f64::INFINITY, |best, r| {
                *best = best.min(r.train_loss);
                Some(*best)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DeepONet,
    pub history: LossHistory,
    /// Iteration whose parameters were returned.
    pub best_iteration: usize,
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(cfg: &TrainingConfig, n: usize) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Full-batch training of `model` on `data`.
///
/// Train (and test, when given) losses are recorded at iteration 0, every
/// `log_every` iterations, and after the last update. The returned model is
/// the recorded snapshot with the lowest training loss, so its loss never
/// exceeds the initial one. A non-finite loss aborts with
/// [`Error::Diverged`] carrying the history so far.
pub fn train(
    model: DeepONet,
    data: &OperatorDataset,
    test: Option<&OperatorDataset>,
    cfg: &TrainingConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut model = model;
    let mut params = model.parameters();
    let mut adam = Adam::new(cfg, params.len());
    let mut history = LossHistory::default();
    let mut best = (f64::INFINITY, 0usize, params.clone());

    for it in 0..=cfg.iterations {
        let (loss, grad) = model.loss_and_grad(data)?;
        let record = it % cfg.log_every == 0 || it == cfg.iterations;
        if record || !loss.is_finite() {
            let test_loss = test.map(|d| model.mse_loss(d)).transpose()?;
            history.records.push(LossRecord {
                iteration: it,
                train_loss: loss,
                test_loss,
            });
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    iteration: it,
                    history,
                });
            }
            if loss < best.0 {
                best = (loss, it, params.clone());
            }
            log::debug!("iteration {it}: train loss {loss:.3e}");
        }
        if it == cfg.iterations {
            break;
        }
        let g = grad.to_vec();
        match cfg.optimizer {
            Optimizer::Adam => adam.step(&mut params, &g),
            Optimizer::Sgd => params
                .iter_mut()
                .zip(&g)
                .for_each(|(p, g)| *p -= cfg.learning_rate * g),
        }
        model.set_parameters(&params)?;
    }

    model.set_parameters(&best.2)?;
    Ok(TrainOutcome {
        model,
        history,
        best_iteration: best.1,
    })
}
