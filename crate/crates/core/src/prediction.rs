use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{AuBits, Emotion, LabelSet, Va, AU_COUNT, CE_COUNT, VA_DIM};
use crate::numeric::Matrix;

/// Network outputs for a batch: B×12 AU logits, B×7 CE logits and B×2
/// tanh-bounded VA values.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub au_logits: Matrix,
    pub ce_logits: Matrix,
    pub va: Matrix,
}

/// Outputs for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub au_logits: [f64; AU_COUNT],
    pub ce_logits: [f64; CE_COUNT],
    pub va: [f64; VA_DIM],
}

impl Predictions {
    pub fn new(au_logits: Matrix, ce_logits: Matrix, va: Matrix) -> Result<Self> {
        let b = au_logits.rows();
        let shapes = [
            ("au_logits", au_logits.shape(), AU_COUNT),
            ("ce_logits", ce_logits.shape(), CE_COUNT),
            ("va", va.shape(), VA_DIM),
        ];
        for (what, (rows, cols), width) in shapes {
            if rows != b || cols != width {
                return Err(Error::dim(
                    format!("Predictions::{what}"),
                    format!("{b}x{width}"),
                    format!("{rows}x{cols}"),
                ));
            }
        }
        Ok(Self {
            au_logits,
            ce_logits,
            va,
        })
    }

    pub fn len(&self) -> usize {
        self.au_logits.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Prediction {
        let mut p = Prediction {
            au_logits: [0.0; AU_COUNT],
            ce_logits: [0.0; CE_COUNT],
            va: [0.0; VA_DIM],
        };
        p.au_logits.copy_from_slice(self.au_logits.row(i));
        p.ce_logits.copy_from_slice(self.ce_logits.row(i));
        p.va.copy_from_slice(self.va.row(i));
        p
    }

    pub fn iter(&self) -> impl Iterator<Item = Prediction> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    /// Zero-filled buffers of matching shape, used to carry output gradients.
    pub fn zeros(batch: usize) -> Self {
        Self {
            au_logits: Matrix::zeros(batch, AU_COUNT),
            ce_logits: Matrix::zeros(batch, CE_COUNT),
            va: Matrix::zeros(batch, VA_DIM),
        }
    }
}

/// Hard decisions derived from a [`Prediction`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub au: AuBits,
    pub ce: Emotion,
    pub va: Va,
}

impl Decision {
    /// The decision that reproduces `labels` exactly on every present track.
    /// Absent tracks get all-off AUs, neutral and zero VA.
    pub fn from_labels(labels: &LabelSet) -> Self {
        Self {
            au: labels.au.unwrap_or([false; AU_COUNT]),
            ce: labels.ce.unwrap_or(Emotion::Neutral),
            va: labels.va.unwrap_or(Va {
                valence: 0.0,
                arousal: 0.0,
            }),
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl Prediction {
    /// AU unit `k` is on iff `logit_k > thresholds[k]`; CE is the argmax.
    pub fn decide(&self, thresholds: &[f64; AU_COUNT]) -> Decision {
        let mut au = [false; AU_COUNT];
        for ((bit, &logit), &t) in au.iter_mut().zip(&self.au_logits).zip(thresholds) {
            *bit = logit > t;
        }
        let ce = Emotion::ALL[argmax(&self.ce_logits)];
        Decision {
            au,
            ce,
            va: Va {
                valence: self.va[0],
                arousal: self.va[1],
            },
        }
    }
}
