//! Records, dataset files, synthetic generation, pseudo labels and splits.

pub mod dataset;
pub mod pseudo;
pub mod split;
pub mod synth;

pub use dataset::{AffectRecord, Batch, Dataset};
pub use pseudo::{pseudo_apply, pseudo_infer, PseudoRule, PseudoRuleTable};
pub use split::{batch_iter, holdout_split, kfold_split, Fold};
pub use synth::{synth_generate, CeSource, GroundTruth, SynthConfig, TruthRecord};
