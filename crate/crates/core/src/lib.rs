//! Multi-task affect recognition over fixed expression embeddings.
//!
//! A streaming network predicts action units, then categorical emotion, then
//! valence/arousal, each stage feeding translated features to the next. Loss
//! terms are masked per sample so records labelled on any subset of the three
//! tracks can be mixed in one batch.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod labels;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod prediction;
pub mod training;

pub use error::{Error, Result};
pub use labels::{AuBits, Emotion, LabelSet, Va, AU_COUNT, CE_COUNT, DEFAULT_AU_CODES, VA_DIM};
pub use data::{AffectRecord, Batch, Dataset, PseudoRuleTable, SynthConfig};
pub use losses::LossBreakdown;
pub use metrics::{MetricReport, ScoreRow, ScoreWeights};
pub use model::{AffectNet, HiddenWidths, NetConfig, Trainer, Variant};
pub use numeric::{Matrix, Optimizer, OptimizerKind, ParamStore, RngState};
pub use prediction::{Decision, Prediction, Predictions};
pub use training::{EpochLog, TrainConfig};
