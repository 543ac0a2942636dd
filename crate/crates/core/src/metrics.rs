//! Challenge metrics: per-unit AU F1 and decision accuracy, CE macro F1 and
//! accuracy, VA concordance, and the weighted per-track scores.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{AuBits, Emotion, LabelSet, AU_COUNT, CE_COUNT};
use crate::prediction::Decision;

pub use crate::losses::ccc;

/// Binary F1 `2TP / (2TP + FP + FN)`.
///
/// With no positives anywhere (TP = FP = FN = 0) the score is 1, so a perfect
/// prediction always scores 1.
pub fn binary_f1(pred: &[bool], truth: &[bool]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::dim("binary_f1", pred.len(), truth.len()));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(f1_from_counts(tp, fp, fn_))
}

/// `(precision, recall)`; an empty denominator counts as 1.
pub fn precision_recall(pred: &[bool], truth: &[bool]) -> Result<(f64, f64)> {
    if pred.len() != truth.len() {
        return Err(Error::dim("precision_recall", pred.len(), truth.len()));
    }
    let tp = pred.iter().zip(truth).filter(|(&p, &t)| p && t).count();
    let predicted = pred.iter().filter(|&&p| p).count();
    let actual = truth.iter().filter(|&&t| t).count();
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    Ok((ratio(tp, predicted), ratio(tp, actual)))
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp + fn_ == 0 {
        1.0
    } else {
        (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuMetrics {
    pub f1: [f64; AU_COUNT],
    pub f1_macro: f64,
    /// Fraction of correct decisions over all N×12 entries.
    pub tacc: f64,
}

pub fn au_metrics(pred: &[AuBits], truth: &[AuBits]) -> Result<AuMetrics> {
    if pred.len() != truth.len() {
        return Err(Error::dim("au_metrics samples", truth.len(), pred.len()));
    }
    if pred.is_empty() {
        return Err(Error::Validation("au_metrics needs at least one sample".into()));
    }
    let mut f1 = [0.0; AU_COUNT];
    for (k, f) in f1.iter_mut().enumerate() {
        let p: Vec<bool> = pred.iter().map(|row| row[k]).collect();
        let t: Vec<bool> = truth.iter().map(|row| row[k]).collect();
        *f = binary_f1(&p, &t)?;
    }
    let correct = pred
        .iter()
        .zip(truth)
        .flat_map(|(p, t)| p.iter().zip(t))
        .filter(|(a, b)| a == b)
        .count();
    Ok(AuMetrics {
        f1,
        f1_macro: f1.iter().sum::<f64>() / AU_COUNT as f64,
        tacc: correct as f64 / (pred.len() * AU_COUNT) as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeMetrics {
    pub f1: [f64; CE_COUNT],
    pub f1_macro: f64,
    pub accuracy: f64,
}

/// One-vs-rest F1 per class, averaged without weights, plus exact-match accuracy.
pub fn ce_metrics(pred: &[Emotion], truth: &[Emotion]) -> Result<CeMetrics> {
    if pred.len() != truth.len() {
        return Err(Error::dim("ce_metrics samples", truth.len(), pred.len()));
    }
    if pred.is_empty() {
        return Err(Error::Validation("ce_metrics needs at least one sample".into()));
    }
    let mut confusion = [[0usize; CE_COUNT]; CE_COUNT];
    for (&p, &t) in pred.iter().zip(truth) {
        confusion[t.index()][p.index()] += 1;
    }
    let mut f1 = [0.0; CE_COUNT];
    for (c, f) in f1.iter_mut().enumerate() {
        let tp = confusion[c][c];
        let fn_: usize = confusion[c].iter().sum::<usize>() - tp;
        let fp: usize = (0..CE_COUNT).map(|t| confusion[t][c]).sum::<usize>() - tp;
        *f = f1_from_counts(tp, fp, fn_);
    }
    let correct: usize = (0..CE_COUNT).map(|c| confusion[c][c]).sum();
    Ok(CeMetrics {
        f1,
        f1_macro: f1.iter().sum::<f64>() / CE_COUNT as f64,
        accuracy: correct as f64 / pred.len() as f64,
    })
}

/// Weights combining a track's component metrics into its score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub au_f1: f64,
    pub au_tacc: f64,
    pub ce_f1: f64,
    pub ce_acc: f64,
    pub va_valence: f64,
    pub va_arousal: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            au_f1: 0.5,
            au_tacc: 0.5,
            ce_f1: 0.67,
            ce_acc: 0.33,
            va_valence: 0.5,
            va_arousal: 0.5,
        }
    }
}

impl ScoreWeights {
    pub fn au_score(&self, f1_macro: f64, tacc: f64) -> f64 {
        self.au_f1 * f1_macro + self.au_tacc * tacc
    }

    pub fn ce_score(&self, f1_macro: f64, accuracy: f64) -> f64 {
        self.ce_f1 * f1_macro + self.ce_acc * accuracy
    }

    pub fn va_score(&self, ccc_v: f64, ccc_a: f64) -> f64 {
        self.va_valence * ccc_v + self.va_arousal * ccc_a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuReport {
    pub n: usize,
    pub f1: [f64; AU_COUNT],
    pub f1_macro: f64,
    pub tacc: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeReport {
    pub n: usize,
    pub f1_macro: f64,
    pub accuracy: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaReport {
    pub n: usize,
    pub ccc_v: f64,
    pub ccc_a: f64,
    pub score: f64,
}

/// Metrics for every track that had at least one labelled sample. Tracks
/// without labels are `None`, never zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub au: Option<AuReport>,
    pub ce: Option<CeReport>,
    pub va: Option<VaReport>,
}

impl MetricReport {
    /// Scores decisions against whatever labels each sample carries.
    pub fn evaluate(decisions: &[Decision], labels: &[LabelSet], weights: &ScoreWeights) -> Result<Self> {
        if decisions.len() != labels.len() {
            return Err(Error::dim("evaluate", labels.len(), decisions.len()));
        }
        let pairs = || decisions.iter().zip(labels);

        let (au_pred, au_truth): (Vec<AuBits>, Vec<AuBits>) =
            pairs().filter_map(|(d, l)| l.au.map(|t| (d.au, t))).unzip();
        let au = if au_truth.is_empty() {
            None
        } else {
            let m = au_metrics(&au_pred, &au_truth)?;
            Some(AuReport {
                n: au_truth.len(),
                f1: m.f1,
                f1_macro: m.f1_macro,
                tacc: m.tacc,
                score: weights.au_score(m.f1_macro, m.tacc),
            })
        };

        let (ce_pred, ce_truth): (Vec<Emotion>, Vec<Emotion>) =
            pairs().filter_map(|(d, l)| l.ce.map(|t| (d.ce, t))).unzip();
        let ce = if ce_truth.is_empty() {
            None
        } else {
            let m = ce_metrics(&ce_pred, &ce_truth)?;
            Some(CeReport {
                n: ce_truth.len(),
                f1_macro: m.f1_macro,
                accuracy: m.accuracy,
                score: weights.ce_score(m.f1_macro, m.accuracy),
            })
        };

        let va_pairs: Vec<_> = pairs().filter_map(|(d, l)| l.va.map(|t| (d.va, t))).collect();
        let va = if va_pairs.is_empty() {
            None
        } else {
            let pv: Vec<f64> = va_pairs.iter().map(|(p, _)| p.valence).collect();
            let tv: Vec<f64> = va_pairs.iter().map(|(_, t)| t.valence).collect();
            let pa: Vec<f64> = va_pairs.iter().map(|(p, _)| p.arousal).collect();
            let ta: Vec<f64> = va_pairs.iter().map(|(_, t)| t.arousal).collect();
            let ccc_v = ccc(&pv, &tv)?;
            let ccc_a = ccc(&pa, &ta)?;
            Some(VaReport {
                n: va_pairs.len(),
                ccc_v,
                ccc_a,
                score: weights.va_score(ccc_v, ccc_a),
            })
        };

        Ok(Self { au, ce, va })
    }

    /// Mean CCC over valence and arousal, when the VA track is present.
    pub fn mean_ccc(&self) -> Option<f64> {
        self.va.map(|v| 0.5 * (v.ccc_v + v.ccc_a))
    }

    /// `key = value` lines, one metric per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(au) = &self.au {
            let _ = writeln!(s, "au.n = {}", au.n);
            for (k, f) in au.f1.iter().enumerate() {
                let _ = writeln!(s, "au.f1.{k} = {f}");
            }
            let _ = writeln!(s, "au.f1_macro = {}", au.f1_macro);
            let _ = writeln!(s, "au.tacc = {}", au.tacc);
            let _ = writeln!(s, "au.score = {}", au.score);
        }
        if let Some(ce) = &self.ce {
            let _ = writeln!(s, "ce.n = {}", ce.n);
            let _ = writeln!(s, "ce.f1_macro = {}", ce.f1_macro);
            let _ = writeln!(s, "ce.accuracy = {}", ce.accuracy);
            let _ = writeln!(s, "ce.score = {}", ce.score);
        }
        if let Some(va) = &self.va {
            let _ = writeln!(s, "va.n = {}", va.n);
            let _ = writeln!(s, "va.ccc_v = {}", va.ccc_v);
            let _ = writeln!(s, "va.ccc_a = {}", va.ccc_a);
            let _ = writeln!(s, "va.score = {}", va.score);
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Validation(format!("bad report JSON: {e}")))
    }
}

/// One row of a per-fold score table. Absent tracks are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreRow {
    pub au_f1: Option<f64>,
    pub au_tacc: Option<f64>,
    pub au_score: Option<f64>,
    pub ce_f1: Option<f64>,
    pub ce_acc: Option<f64>,
    pub ce_score: Option<f64>,
    pub ccc_v: Option<f64>,
    pub ccc_a: Option<f64>,
    pub va_score: Option<f64>,
}

impl ScoreRow {
    pub fn from_report(r: &MetricReport) -> Self {
        Self {
            au_f1: r.au.map(|a| a.f1_macro),
            au_tacc: r.au.map(|a| a.tacc),
            au_score: r.au.map(|a| a.score),
            ce_f1: r.ce.map(|c| c.f1_macro),
            ce_acc: r.ce.map(|c| c.accuracy),
            ce_score: r.ce.map(|c| c.score),
            ccc_v: r.va.map(|v| v.ccc_v),
            ccc_a: r.va.map(|v| v.ccc_a),
            va_score: r.va.map(|v| v.score),
        }
    }

    fn fields(&self) -> [Option<f64>; 9] {
        [
            self.au_f1,
            self.au_tacc,
            self.au_score,
            self.ce_f1,
            self.ce_acc,
            self.ce_score,
            self.ccc_v,
            self.ccc_a,
            self.va_score,
        ]
    }

    pub const COLUMNS: [&'static str; 9] = [
        "au_f1", "au_tacc", "au_score", "ce_f1", "ce_acc", "ce_score", "ccc_v", "ccc_a", "va_score",
    ];

    /// Column-wise arithmetic mean over the rows where the column is present.
    pub fn mean(rows: &[ScoreRow]) -> Self {
        let mut out = [None; 9];
        for (c, slot) in out.iter_mut().enumerate() {
            let vals: Vec<f64> = rows.iter().filter_map(|r| r.fields()[c]).collect();
            if !vals.is_empty() {
                *slot = Some(vals.iter().sum::<f64>() / vals.len() as f64);
            }
        }
        let [au_f1, au_tacc, au_score, ce_f1, ce_acc, ce_score, ccc_v, ccc_a, va_score] = out;
        Self {
            au_f1,
            au_tacc,
            au_score,
            ce_f1,
            ce_acc,
            ce_score,
            ccc_v,
            ccc_a,
            va_score,
        }
    }

    /// Whitespace-separated cells at four decimals; `-` for absent ones.
    pub fn to_cells(&self) -> String {
        self.fields()
            .iter()
            .map(|v| v.map_or_else(|| format!("{:>8}", "-"), |x| format!("{x:>8.4}")))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
