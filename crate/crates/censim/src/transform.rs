//! Synthetic responses for censored regression.
//!
//! The transform Y* = δT / (1 - G(T-)) keeps the conditional mean of the
//! latent response: E[Y* | X] = E[Y | X] whenever censoring is independent.
//! With the fitted censoring distribution it yields the computable Ŷ*; with
//! the true law it yields the oracle Y* used in simulation tests.

use crate::error::{Error, Result};
use crate::survival::{validate_sample, Cdf, Observation};

/// Observations paired with their synthetic responses. Censored entries are
/// exactly zero; uncensored entries keep the sign of the observed time and
/// are inflated by the inverse censoring-survival.
#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub observations: Vec<Observation>,
    pub y_star: Vec<f64>,
}

impl SyntheticSample {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Computes Y*_i = δ_i T_i / (1 - G(T_i-)) for every observation. The left
/// limit G(T-) is used throughout; the distinction matters at the largest
/// uncensored observation, where G(T) may already be one.
pub fn synthetic_transform(sample: &[Observation], g: &impl Cdf) -> Result<SyntheticSample> {
    validate_sample(sample)?;
    let mut y_star = Vec::with_capacity(sample.len());
    for obs in sample {
        if obs.event {
            let keep = 1.0 - g.value_minus(obs.time);
            if keep <= 0.0 {
                return Err(Error::WeightSingularity { time: obs.time });
            }
            y_star.push(obs.time / keep);
        } else {
            y_star.push(0.0);
        }
    }
    Ok(SyntheticSample { observations: sample.to_vec(), y_star })
}

/// Caps the magnitude of the synthetic responses at `cap`, preserving signs.
/// Diagnostics only; no cap is applied by default anywhere in the pipeline.
pub fn cap_synthetic(synthetic: &mut SyntheticSample, cap: f64) {
    for y in &mut synthetic.y_star {
        if y.abs() > cap {
            *y = cap * y.signum();
        }
    }
}
