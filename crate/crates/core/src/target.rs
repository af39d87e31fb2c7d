//! Scalar targets read from the logits.
//!
//! Every target used here is linear in the logits, so it is carried around
//! as the weight vector of that linear functional. The weight vector doubles
//! as the seed of reverse-mode passes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "class", rename_all = "snake_case")]
pub enum TargetSpec {
    Logit(usize),
    /// Top class at the actual input, minus the mean logit.
    TopLogitMinusMean,
    LogitMinusMean(usize),
}

impl TargetSpec {
    /// Fixes the target for one explanation. `logits` are the logits at the
    /// actual input; they decide the class for [`TargetSpec::TopLogitMinusMean`].
    pub fn resolve(&self, logits: &Tensor) -> Result<LogitFunctional> {
        let classes = logits.len();
        let check = |class: usize| {
            if class >= classes {
                Err(Error::ClassOutOfRange { class, classes })
            } else {
                Ok(class)
            }
        };
        let (class, centred) = match *self {
            TargetSpec::Logit(c) => (check(c)?, false),
            TargetSpec::LogitMinusMean(c) => (check(c)?, true),
            TargetSpec::TopLogitMinusMean => (logits.argmax()?, true),
        };
        let mut weights = if centred {
            vec![-1.0 / classes as f64; classes]
        } else {
            vec![0.0; classes]
        };
        weights[class] += 1.0;
        Ok(LogitFunctional {
            weights,
            class: Some(class),
        })
    }
}

/// `target(logits) = weights · logits`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitFunctional {
    weights: Vec<f64>,
    class: Option<usize>,
}

impl LogitFunctional {
    pub fn new(weights: Vec<f64>) -> Self {
        Self {
            weights,
            class: None,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Class the functional was resolved for, if any.
    pub fn class(&self) -> Option<usize> {
        self.class
    }

    pub fn check_dim(&self, outputs: usize) -> Result<()> {
        if self.weights.len() != outputs {
            return Err(Error::InvalidArgument(format!(
                "target is not a scalar functional of the {outputs} logits (got {} weights)",
                self.weights.len()
            )));
        }
        Ok(())
    }

    pub fn eval(&self, logits: &Tensor) -> f64 {
        debug_assert_eq!(logits.len(), self.weights.len());
        self.weights
            .iter()
            .zip(logits.data())
            .map(|(w, l)| w * l)
            .sum()
    }
}
