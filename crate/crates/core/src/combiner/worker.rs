use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::Particles;
use crate::error::{Error, Result};
use crate::fiducial::DNorm;
use crate::models::{DataSubset, Model};
use crate::sampler::{run_chain, ChainConfig, ChainOutput};
use crate::scalar::Scalar;

/// What crossed a worker boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Payload {
    /// A worker returned its chain draws.
    ChainDraws { worker: usize, rows: usize },
    /// Particles were sent to a worker for likelihood evaluation.
    Particles { worker: usize, rows: usize },
    /// A worker returned per-particle log-likelihoods of its block.
    LogLikelihoods { worker: usize, len: usize },
}

/// Record of every message between the coordinator and the workers.
#[derive(Debug, Default)]
pub struct ExchangeLog {
    messages: Mutex<Vec<Payload>>,
}

impl ExchangeLog {
    pub fn new() -> Self {
        Self::default()
    }

    fn record(&self, p: Payload) {
        self.messages.lock().expect("exchange log poisoned").push(p);
    }

    pub fn messages(&self) -> Vec<Payload> {
        self.messages.lock().expect("exchange log poisoned").clone()
    }
}

/// Owns one data block. Observations never leave the worker; callers get
/// chain draws and log-likelihood vectors only.
pub struct Worker<'m, T: Scalar, M: Model<T> + ?Sized> {
    model: &'m M,
    data: DataSubset<T>,
}

impl<'m, T: Scalar, M: Model<T> + ?Sized> Worker<'m, T, M> {
    pub fn new(model: &'m M, data: DataSubset<T>) -> Self {
        Worker { model, data }
    }

    pub fn id(&self) -> usize {
        self.data.id
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample(&self, cfg: &ChainConfig<T>, norm: DNorm, log: &ExchangeLog) -> Result<ChainOutput<T>> {
        let out = run_chain(self.model, &self.data, cfg, norm).map_err(|e| e.in_subset(self.id()))?;
        log.record(Payload::ChainDraws {
            worker: self.id(),
            rows: out.particles.len(),
        });
        Ok(out)
    }

    /// log f(y_k; θ) for every particle θ.
    pub fn log_likelihoods(&self, particles: &Particles<T>, log: &ExchangeLog) -> Result<Vec<T>> {
        log.record(Payload::Particles {
            worker: self.id(),
            rows: particles.len(),
        });
        let out = particles
            .iter_rows()
            .map(|theta| {
                if !self.model.in_support(theta) {
                    return Ok(T::neg_infinity());
                }
                let v = self.model.log_likelihood(&self.data.observations, theta)?;
                if v.is_nan() {
                    return Err(Error::ModelEvaluation("log-likelihood is NaN".into()));
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_subset(self.id()))?;
        log.record(Payload::LogLikelihoods {
            worker: self.id(),
            len: out.len(),
        });
        Ok(out)
    }
}
