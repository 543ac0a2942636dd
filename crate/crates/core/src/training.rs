//! Mini-batch training loop and evaluation helpers.

use serde::{Deserialize, Serialize};

use crate::data::{batch_iter, synth_generate, Batch, Dataset, PseudoRuleTable, SynthConfig};
use crate::error::{Error, Result};
use crate::losses::LossBreakdown;
use crate::metrics::{MetricReport, ScoreWeights};
use crate::model::{AffectNet, NetConfig, Trainer};
use crate::numeric::gradcheck::{finite_diff_check_sampled, GradCheckReport, DEFAULT_EPS};
use crate::numeric::{Optimizer, OptimizerKind, RngState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    /// Seeds the per-epoch batch order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            lr: 3e-4,
            optimizer: OptimizerKind::adam(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Validation("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch size must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Validation(format!("learning rate {} must be > 0", self.lr)));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> Optimizer {
        Optimizer::new(self.optimizer, self.lr)
    }
}

/// Per-epoch loss summary. Track losses are means over the batches where the
/// track had labels; counts are summed over the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_au: f64,
    pub l_ce: f64,
    pub l_va: f64,
    pub total: f64,
    pub n_au: usize,
    pub n_ce: usize,
    pub n_va: usize,
    pub batches: usize,
}

pub const LOG_HEADER: &str = "epoch,l_au,l_ce,l_va,total,n_au,n_ce,n_va";

impl EpochLog {
    fn from_batches(epoch: usize, parts: &[LossBreakdown]) -> Self {
        let mean_where = |f: fn(&LossBreakdown) -> f64, present: fn(&LossBreakdown) -> bool| {
            let vals: Vec<f64> = parts.iter().filter(|b| present(b)).map(f).collect();
            if vals.is_empty() {
                0.0
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        };
        Self {
            epoch,
            l_au: mean_where(|b| b.l_au, |b| b.n_au > 0),
            l_ce: mean_where(|b| b.l_ce, |b| b.n_ce > 0),
            l_va: mean_where(|b| b.l_va, |b| b.n_va >= 2),
            total: mean_where(|b| b.total, |_| true),
            n_au: parts.iter().map(|b| b.n_au).sum(),
            n_ce: parts.iter().map(|b| b.n_ce).sum(),
            n_va: parts.iter().map(|b| b.n_va).sum(),
            batches: parts.len(),
        }
    }

    /// One CSV row matching [`LOG_HEADER`].
    pub fn to_log_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch, self.l_au, self.l_ce, self.l_va, self.total, self.n_au, self.n_ce, self.n_va
        )
    }
}

/// Runs `cfg.epochs` epochs over `data`, calling `on_epoch` after each.
/// Batches without any label are skipped; a dataset without labels is an
/// error.
pub fn fit(
    trainer: &mut Trainer,
    data: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if !data.has_any_label() {
        return Err(Error::NoLabels("training set has no labels on any track".into()));
    }
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut parts = Vec::new();
        for idx in batch_iter(data.len(), cfg.batch_size, cfg.seed, epoch as u64)? {
            let batch = data.batch(&idx);
            if !batch.has_labels() {
                continue;
            }
            parts.push(trainer.train_step(&batch.embeddings, &batch.labels)?);
        }
        let log = EpochLog::from_batches(epoch + 1, &parts);
        on_epoch(&log);
        logs.push(log);
    }
    Ok(logs)
}

/// Wraps `net` with a fresh optimizer from `cfg` and trains it.
pub fn train_new(
    net: AffectNet,
    data: &Dataset,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(AffectNet, Vec<EpochLog>)> {
    let mut trainer = Trainer::new(net, cfg.optimizer());
    let logs = fit(&mut trainer, data, cfg, on_epoch)?;
    Ok((trainer.net, logs))
}

/// Predicts every record of `data` and scores the labelled tracks.
pub fn evaluate(net: &AffectNet, data: &Dataset, weights: &ScoreWeights) -> Result<MetricReport> {
    let batch = data.full_batch();
    let decisions = net.predict(&batch.embeddings)?;
    MetricReport::evaluate(&decisions, &batch.labels, weights)
}

/// Eight synthetic records whose label masks cover every combination of
/// present tracks (the all-missing pattern is replaced by all-present).
/// Embeddings are drawn from U(-1, 1) so that gradients are well above
/// rounding noise.
pub fn gradcheck_batch(embed_dim: usize, seed: u64) -> Result<Batch> {
    let cfg = SynthConfig {
        n: 8,
        embed_dim,
        seed,
        ..SynthConfig::default()
    };
    let (data, _) = synth_generate(&cfg, &PseudoRuleTable::default())?;
    let mut batch = data.full_batch();
    let mut rng = RngState::new(seed);
    for x in batch.embeddings.as_mut_slice() {
        *x = rng.uniform(-1.0, 1.0);
    }
    for (i, l) in batch.labels.iter_mut().enumerate() {
        let m = if i % 8 == 7 { 0 } else { i % 8 };
        if m & 1 != 0 {
            l.au = None;
        }
        if m & 2 != 0 {
            l.ce = None;
        }
        if m & 4 != 0 {
            l.va = None;
        }
    }
    Ok(batch)
}

/// Compares backprop gradients of the total loss against central
/// differences for a fresh network built from `config`.
///
/// `corrupt` names a layer whose first analytic weight gradient is shifted
/// by one before the comparison, to exercise the failure path.
pub fn network_gradcheck(
    config: NetConfig,
    batch: &Batch,
    corrupt: Option<&str>,
    max_per_param: Option<usize>,
) -> Result<GradCheckReport> {
    let mut net = AffectNet::build(config)?;
    net.loss_and_grad(&batch.embeddings, &batch.labels)?;
    if let Some(name) = corrupt {
        let layer = net
            .params_mut()
            .get_mut(name)
            .ok_or_else(|| Error::Validation(format!("no layer named `{name}`")))?;
        let g = layer.grad_weight.get(0, 0);
        layer.grad_weight.set(0, 0, g + 1.0);
    }
    let mut store = net.params().clone();
    let mut failure = None;
    let report = finite_diff_check_sampled(
        |s| match AffectNet::from_parts(config, s.clone())
            .and_then(|n| n.loss(&batch.embeddings, &batch.labels))
        {
            Ok(b) => b.total,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        &mut store,
        DEFAULT_EPS,
        max_per_param,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, PseudoRuleTable, SynthConfig};
    use crate::model::NetConfig;

    fn tiny_data(seed: u64) -> Dataset {
        let cfg = SynthConfig {
            n: 96,
            embed_dim: 16,
            seed,
            ..SynthConfig::default()
        }
        .with_missing(0.3);
        synth_generate(&cfg, &PseudoRuleTable::default()).unwrap().0
    }

    fn tcfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 16,
            lr: 5e-3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn loss_decreases_over_epochs() {
        let data = tiny_data(1);
        let net = AffectNet::build(NetConfig::compact()).unwrap();
        let (_, logs) = train_new(net, &data, &tcfg(30), |_| {}).unwrap();
        assert_eq!(logs.len(), 30);
        assert!(logs[29].total < logs[0].total, "{} >= {}", logs[29].total, logs[0].total);
        assert_eq!(logs[0].batches, 6);
        let (au, ce, va) = data.label_counts();
        assert_eq!((logs[0].n_au, logs[0].n_ce), (au, ce));
        assert!(logs[0].n_va <= va);
    }

    #[test]
    fn training_is_deterministic() {
        let data = tiny_data(2);
        let run = || {
            let net = AffectNet::build(NetConfig::compact()).unwrap();
            train_new(net, &data, &tcfg(3), |_| {}).unwrap()
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(a.params(), b.params());
        assert_eq!(la, lb);
    }

    #[test]
    fn config_errors() {
        assert!(tcfg(0).validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..tcfg(1) }.validate().is_err());
        assert!(TrainConfig { lr: -1.0, ..tcfg(1) }.validate().is_err());
    }

    #[test]
    fn unlabelled_training_set_rejected() {
        let mut data = tiny_data(3);
        for l in data.labels_mut() {
            *l = Default::default();
        }
        let net = AffectNet::build(NetConfig::compact()).unwrap();
        assert!(matches!(
            train_new(net, &data, &tcfg(1), |_| {}),
            Err(Error::NoLabels(_))
        ));
    }

    #[test]
    fn gradcheck_batch_masks() {
        let b = gradcheck_batch(16, 0).unwrap();
        assert_eq!(b.len(), 8);
        let patterns: std::collections::BTreeSet<_> = b
            .labels
            .iter()
            .map(|l| (l.au.is_some(), l.ce.is_some(), l.va.is_some()))
            .collect();
        assert_eq!(patterns.len(), 7);
    }

    #[test]
    fn network_gradcheck_passes_and_catches_corruption() {
        let batch = gradcheck_batch(16, 0).unwrap();
        let cfg = NetConfig::compact();
        let ok = network_gradcheck(cfg, &batch, None, Some(20)).unwrap();
        assert!(ok.passed(1e-5), "{ok:?}");
        let bad = network_gradcheck(cfg, &batch, Some("head_ce.0"), Some(20)).unwrap();
        assert!(!bad.passed(1e-5));
        assert_eq!(bad.worst_param.as_deref(), Some("head_ce.0"));
        assert!(network_gradcheck(cfg, &batch, Some("nope"), None).is_err());
    }

    #[test]
    fn log_line_shape() {
        let line = EpochLog { epoch: 3, n_au: 4, ..Default::default() }.to_log_line();
        assert_eq!(line.split(',').count(), LOG_HEADER.split(',').count());
        assert!(line.starts_with("3,"));
    }

    #[test]
    fn evaluation_covers_labelled_tracks() {
        let data = tiny_data(4);
        let net = AffectNet::build(NetConfig::compact()).unwrap();
        let r = evaluate(&net, &data, &ScoreWeights::default()).unwrap();
        let (au, ce, va) = data.label_counts();
        assert_eq!(r.au.unwrap().n, au);
        assert_eq!(r.ce.unwrap().n, ce);
        assert_eq!(r.va.unwrap().n, va);
    }
}
