//! Central aggregator holding the global parameters.
//!
//! Received noisy gradients are buffered; once the buffer holds `max_buf`
//! of them, θ moves against their mean and the buffer is flushed. The update
//! reads nothing but the buffered gradients, η and θ.

use crate::agent::Submission;
use crate::error::{Error, Result};
use crate::mechanism::check_finite;
use crate::model::{ModelParams, PARAM_DIM};

#[derive(Debug, Clone)]
pub struct Aggregator {
    params: ModelParams,
    buffer: Vec<Vec<f64>>,
    eta: f64,
    max_buf: usize,
    submission_count: u64,
    updates: u64,
}

impl Aggregator {
    pub fn new(params: ModelParams, eta: f64, max_buf: usize) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {eta}")));
        }
        if max_buf == 0 {
            return Err(Error::InvalidConfig("buffer size must be at least 1".into()));
        }
        Ok(Self { params, buffer: Vec::with_capacity(max_buf), eta, max_buf, submission_count: 0, updates: 0 })
    }

    /// Buffers the submission's noisy gradient, updating θ when the buffer
    /// fills. Returns whether an update happened.
    pub fn receive(&mut self, sub: &Submission) -> Result<bool> {
        self.receive_gradient(sub.noisy_gradient.clone())
    }

    pub fn receive_gradient(&mut self, gradient: Vec<f64>) -> Result<bool> {
        if gradient.len() != PARAM_DIM {
            return Err(Error::InvalidInput(format!(
                "gradient has length {}, expected {PARAM_DIM}",
                gradient.len()
            )));
        }
        check_finite(&gradient)?;
        self.buffer.push(gradient);
        self.submission_count += 1;
        if self.buffer.len() >= self.max_buf {
            self.apply_update()?;
            return Ok(true);
        }
        Ok(false)
    }

    /// `θ ← θ − η · mean(B)`, then `B ← {}`.
    pub fn apply_update(&mut self) -> Result<()> {
        if self.buffer.is_empty() {
            return Err(Error::Usage("update with an empty buffer".into()));
        }
        let mut mean = vec![0.0; PARAM_DIM];
        for g in &self.buffer {
            for (m, v) in mean.iter_mut().zip(g) {
                *m += v;
            }
        }
        let count = self.buffer.len() as f64;
        for m in &mut mean {
            *m /= count;
        }
        self.params.descend(&mean, self.eta);
        self.buffer.clear();
        self.updates += 1;
        if self.params.as_flat().iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged(format!("parameters left the finite range at update {}", self.updates)));
        }
        Ok(())
    }

    /// Copy of θ and the number of submissions received so far.
    pub fn snapshot(&self) -> (ModelParams, u64) {
        (self.params.clone(), self.submission_count)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn submission_count(&self) -> u64 {
        self.submission_count
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn max_buf(&self) -> usize {
        self.max_buf
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}
