//! Per-track losses with analytic gradients, and the presence-masked total.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{LabelSet, VA_DIM};
use crate::numeric::Matrix;
use crate::prediction::Predictions;

/// `log(1 + Σ_k exp(x_k))` and its gradient `exp(x_k) / (1 + Σ exp)`,
/// shifted so that no exponent is positive.
fn log1p_sum_exp(xs: &[f64]) -> (f64, Vec<f64>) {
    if xs.is_empty() {
        return (0.0, Vec::new());
    }
    let shift = xs.iter().copied().fold(0.0f64, f64::max);
    let exps: Vec<f64> = xs.iter().map(|&x| (x - shift).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let value = if shift == 0.0 {
        sum.ln_1p()
    } else {
        shift + ((-shift).exp() + sum).ln()
    };
    let denom = (-shift).exp() + sum;
    (value, exps.into_iter().map(|e| e / denom).collect())
}

/// Multi-label cross-entropy over AU logits:
/// `log(1 + Σ_{v_i=0} e^{x_i}) + log(1 + Σ_{v_j=1} e^{−x_j})`.
pub fn multilabel_ce(logits: &[f64], target: &[bool]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != target.len() {
        return Err(Error::dim("multilabel_ce target", logits.len(), target.len()));
    }
    let negatives: Vec<f64> = logits
        .iter()
        .zip(target)
        .filter(|(_, &t)| !t)
        .map(|(&x, _)| x)
        .collect();
    let positives: Vec<f64> = logits
        .iter()
        .zip(target)
        .filter(|(_, &t)| t)
        .map(|(&x, _)| -x)
        .collect();
    let (l0, g0) = log1p_sum_exp(&negatives);
    let (l1, g1) = log1p_sum_exp(&positives);

    let mut grad = vec![0.0; logits.len()];
    let (mut i0, mut i1) = (0, 0);
    for (g, &t) in grad.iter_mut().zip(target) {
        if t {
            *g = -g1[i1];
            i1 += 1;
        } else {
            *g = g0[i0];
            i0 += 1;
        }
    }
    Ok((l0 + l1, grad))
}

/// Softmax cross-entropy `−log softmax(x)[target]`; gradient `softmax(x) − onehot`.
pub fn softmax_ce(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= logits.len() {
        return Err(Error::Validation(format!(
            "class {target} out of range for {} logits",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[target] - max);
    let mut grad: Vec<f64> = exps.into_iter().map(|e| e / sum).collect();
    grad[target] -= 1.0;
    Ok((loss, grad))
}

struct Moments {
    mean_p: f64,
    mean_t: f64,
    var_p: f64,
    var_t: f64,
    cov: f64,
}

fn moments(pred: &[f64], truth: &[f64]) -> Moments {
    let n = pred.len() as f64;
    let mean_p = pred.iter().sum::<f64>() / n;
    let mean_t = truth.iter().sum::<f64>() / n;
    let (mut var_p, mut var_t, mut cov) = (0.0, 0.0, 0.0);
    for (&p, &t) in pred.iter().zip(truth) {
        let (dp, dt) = (p - mean_p, t - mean_t);
        var_p += dp * dp;
        var_t += dt * dt;
        cov += dp * dt;
    }
    Moments {
        mean_p,
        mean_t,
        var_p: var_p / n,
        var_t: var_t / n,
        cov: cov / n,
    }
}

fn check_pair(context: &str, pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::dim(context, pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(Error::Validation(format!("{context}: empty sequences")));
    }
    Ok(())
}

/// Concordance correlation coefficient with population statistics.
///
/// A zero denominator only happens when both sequences are the same constant,
/// which counts as perfect agreement (1); any other zero denominator (only
/// reachable through rounding) gives 0.
pub fn ccc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair("ccc", pred, truth)?;
    let m = moments(pred, truth);
    let denom = m.var_p + m.var_t + (m.mean_p - m.mean_t).powi(2);
    if denom == 0.0 {
        return Ok(if pred == truth { 1.0 } else { 0.0 });
    }
    Ok(2.0 * m.cov / denom)
}

/// CCC and its gradient with respect to each prediction.
pub fn ccc_with_grad(pred: &[f64], truth: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_pair("ccc_with_grad", pred, truth)?;
    let n = pred.len() as f64;
    let m = moments(pred, truth);
    let diff = m.mean_p - m.mean_t;
    let denom = m.var_p + m.var_t + diff * diff;
    if denom == 0.0 {
        let value = if pred == truth { 1.0 } else { 0.0 };
        return Ok((value, vec![0.0; pred.len()]));
    }
    let value = 2.0 * m.cov / denom;
    // d cov/dp_i = (t_i − mt)/n ; d denom/dp_i = 2 (p_i − mp)/n + 2 (mp − mt)/n
    let grad = pred
        .iter()
        .zip(truth)
        .map(|(&p, &t)| {
            let d_cov = (t - m.mean_t) / n;
            let d_den = 2.0 * (p - m.mean_p) / n + 2.0 * diff / n;
            (2.0 * d_cov * denom - 2.0 * m.cov * d_den) / (denom * denom)
        })
        .collect();
    Ok((value, grad))
}

/// `(1 − CCC_valence) + (1 − CCC_arousal)` over an n×2 batch, with the
/// gradient for every entry of `pred`.
pub fn va_loss(pred: &Matrix, truth: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != truth.shape() || pred.cols() != VA_DIM {
        return Err(Error::dim(
            "va_loss",
            format!("matching n x {VA_DIM}"),
            format!("{:?} vs {:?}", pred.shape(), truth.shape()),
        ));
    }
    if pred.rows() < 2 {
        return Err(Error::Validation(format!(
            "va_loss needs at least 2 samples, got {}",
            pred.rows()
        )));
    }
    let n = pred.rows();
    let mut grad = Matrix::zeros(n, VA_DIM);
    let mut loss = 0.0;
    for d in 0..VA_DIM {
        let p: Vec<f64> = (0..n).map(|i| pred.get(i, d)).collect();
        let t: Vec<f64> = (0..n).map(|i| truth.get(i, d)).collect();
        let (c, g) = ccc_with_grad(&p, &t)?;
        loss += 1.0 - c;
        for (i, gi) in g.into_iter().enumerate() {
            grad.set(i, d, -gi);
        }
    }
    Ok((loss, grad))
}

/// Per-track losses of one batch with the number of contributing samples.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_au: f64,
    pub l_ce: f64,
    pub l_va: f64,
    pub total: f64,
    pub n_au: usize,
    pub n_ce: usize,
    pub n_va: usize,
}

/// Presence-masked total loss.
///
/// AU and CE losses are means over the samples carrying those labels. The VA
/// loss is one batch-level CCC over the VA-labelled subset and is skipped
/// (count 0) when fewer than two such samples exist. Returned gradients are
/// with respect to the AU logits, CE logits and bounded VA outputs; rows
/// without a label on a track get exactly zero in that track.
pub fn total_loss(preds: &Predictions, labels: &[LabelSet]) -> Result<(LossBreakdown, Predictions)> {
    let b = preds.len();
    if labels.len() != b {
        return Err(Error::dim("total_loss labels", b, labels.len()));
    }
    if b == 0 {
        return Err(Error::Validation("total_loss on an empty batch".into()));
    }
    if labels.iter().all(LabelSet::is_empty) {
        return Err(Error::NoLabels("batch has no label on any track".into()));
    }

    let mut out = LossBreakdown::default();
    let mut grads = Predictions::zeros(b);

    let au_rows: Vec<usize> = (0..b).filter(|&i| labels[i].au.is_some()).collect();
    if !au_rows.is_empty() {
        let scale = 1.0 / au_rows.len() as f64;
        for &i in &au_rows {
            let target = labels[i].au.expect("filtered");
            let (l, g) = multilabel_ce(preds.au_logits.row(i), &target)?;
            out.l_au += l * scale;
            for (dst, gk) in grads.au_logits.row_mut(i).iter_mut().zip(g) {
                *dst = gk * scale;
            }
        }
        out.n_au = au_rows.len();
    }

    let ce_rows: Vec<usize> = (0..b).filter(|&i| labels[i].ce.is_some()).collect();
    if !ce_rows.is_empty() {
        let scale = 1.0 / ce_rows.len() as f64;
        for &i in &ce_rows {
            let target = labels[i].ce.expect("filtered").index();
            let (l, g) = softmax_ce(preds.ce_logits.row(i), target)?;
            out.l_ce += l * scale;
            for (dst, gk) in grads.ce_logits.row_mut(i).iter_mut().zip(g) {
                *dst = gk * scale;
            }
        }
        out.n_ce = ce_rows.len();
    }

    let va_rows: Vec<usize> = (0..b).filter(|&i| labels[i].va.is_some()).collect();
    if va_rows.len() >= 2 {
        let pred = preds.va.select_rows(&va_rows);
        let truth_rows: Vec<[f64; VA_DIM]> = va_rows
            .iter()
            .map(|&i| labels[i].va.expect("filtered").as_array())
            .collect();
        let truth = Matrix::from_rows(&truth_rows)?;
        let (l, g) = va_loss(&pred, &truth)?;
        out.l_va = l;
        for (k, &i) in va_rows.iter().enumerate() {
            grads.va.row_mut(i).copy_from_slice(g.row(k));
        }
        out.n_va = va_rows.len();
    }

    out.total = out.l_au + out.l_ce + out.l_va;
    Ok((out, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{Emotion, Va, AU_COUNT};
    use crate::numeric::gradcheck::{check_vector, DEFAULT_EPS};
    use crate::numeric::RngState;
    use proptest::prelude::*;

    #[test]
    fn multilabel_zero_logit_closed_forms() {
        let (l, _) = multilabel_ce(&[0.0; 12], &[true; 12]).unwrap();
        assert!((l - 13f64.ln()).abs() < 1e-12);
        let mut t = [false; 12];
        t[..4].iter_mut().for_each(|b| *b = true);
        let (l, _) = multilabel_ce(&[0.0; 12], &t).unwrap();
        assert!((l - (9f64.ln() + 5f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn multilabel_two_label_case() {
        let (l, _) = multilabel_ce(&[2.0, -1.0], &[true, false]).unwrap();
        let expect = (1.0 + (-1f64).exp()).ln() + (1.0 + (-2f64).exp()).ln();
        assert!((l - expect).abs() < 1e-12);
        assert!((l - 0.4402).abs() < 1e-4);
    }

    #[test]
    fn softmax_cases() {
        let (l, g) = softmax_ce(&[0.0; 7], 3).unwrap();
        assert!((l - 7f64.ln()).abs() < 1e-12);
        assert!(g.iter().sum::<f64>().abs() < 1e-15);
        let mut x = [0.0; 7];
        x[2] = 1000.0;
        assert!(softmax_ce(&x, 2).unwrap().0 < 1e-6);
        let (l, _) = softmax_ce(&[1.0, 2.0, 3.0], 2).unwrap();
        let expect = -(3f64.exp() / (1f64.exp() + 2f64.exp() + 3f64.exp())).ln();
        assert!((l - expect).abs() < 1e-12);
        assert!((l - 0.4076).abs() < 1e-4);
        assert!(softmax_ce(&[0.0; 7], 7).is_err());
    }

    #[test]
    fn ccc_cases() {
        let t = [0.1, -0.4, 0.9, 0.3];
        assert!((ccc(&t, &t).unwrap() - 1.0).abs() < 1e-12);
        let x = [-1.0, 0.5, 0.5, 0.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((ccc(&neg, &x).unwrap() + 1.0).abs() < 1e-12);
        assert!((ccc(&[0.0, 1.0, 2.0], &[0.0, 1.0, 1.0]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(ccc(&[0.3; 4], &[0.3; 4]).unwrap(), 1.0);
        assert_eq!(ccc(&[0.3; 4], &[0.1, 0.2, 0.3, 0.4]).unwrap(), 0.0);
        assert!(ccc(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn va_loss_cases() {
        let truth = Matrix::from_rows(&[[0.5, -0.2], [-0.5, 0.2], [0.0, 0.4], [0.0, -0.4]]).unwrap();
        let (l, _) = va_loss(&truth, &truth).unwrap();
        assert!(l.abs() < 1e-12);
        let (l, _) = va_loss(&truth.map(|v| -v), &truth).unwrap();
        assert!((l - 4.0).abs() < 1e-12);
        assert!(va_loss(&Matrix::zeros(1, 2), &Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn va_loss_gradient_matches_finite_differences() {
        let mut rng = RngState::new(11);
        let n = 16;
        let p: Vec<f64> = (0..2 * n).map(|_| rng.uniform(-0.9, 0.9)).collect();
        let t: Vec<f64> = (0..2 * n).map(|_| rng.uniform(-0.9, 0.9)).collect();
        let truth = Matrix::from_vec(n, 2, t).unwrap();
        let pred = Matrix::from_vec(n, 2, p.clone()).unwrap();
        let (_, g) = va_loss(&pred, &truth).unwrap();
        let r = check_vector(
            |x| va_loss(&Matrix::from_vec(n, 2, x.to_vec()).unwrap(), &truth).unwrap().0,
            &p,
            g.as_slice(),
            DEFAULT_EPS,
        );
        assert!(r.max_rel_error < 1e-5, "{r:?}");
    }

    #[test]
    fn per_loss_gradients_match_finite_differences() {
        let mut rng = RngState::new(3);
        let x: Vec<f64> = (0..12).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let t: Vec<bool> = (0..12).map(|i| i % 3 == 0).collect();
        let (_, g) = multilabel_ce(&x, &t).unwrap();
        let r = check_vector(|v| multilabel_ce(v, &t).unwrap().0, &x, &g, DEFAULT_EPS);
        assert!(r.max_rel_error < 1e-5, "{r:?}");

        let x: Vec<f64> = (0..7).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let (_, g) = softmax_ce(&x, 5).unwrap();
        let r = check_vector(|v| softmax_ce(v, 5).unwrap().0, &x, &g, DEFAULT_EPS);
        assert!(r.max_rel_error < 1e-5, "{r:?}");
    }

    fn preds(b: usize, seed: u64) -> Predictions {
        let mut rng = RngState::new(seed);
        let mut gen = |c: usize, s: f64| {
            Matrix::from_vec(b, c, (0..b * c).map(|_| rng.uniform(-s, s)).collect()).unwrap()
        };
        let au = gen(AU_COUNT, 2.0);
        let ce = gen(7, 2.0);
        let va = gen(2, 0.9);
        Predictions::new(au, ce, va).unwrap()
    }

    fn au_bits(k: usize) -> [bool; AU_COUNT] {
        let mut a = [false; AU_COUNT];
        for (i, b) in a.iter_mut().enumerate() {
            *b = (i + k) % 3 == 0;
        }
        a
    }

    #[test]
    fn missing_va_track_contributes_nothing() {
        let p = preds(4, 1);
        let labels: Vec<LabelSet> = (0..4)
            .map(|k| LabelSet {
                au: Some(au_bits(k)),
                ce: Some(Emotion::ALL[k]),
                va: None,
            })
            .collect();
        let (b, g) = total_loss(&p, &labels).unwrap();
        assert_eq!(b.n_va, 0);
        assert_eq!(b.l_va, 0.0);
        assert!(g.va.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(b.total, b.l_au + b.l_ce);
    }

    #[test]
    fn single_va_sample_is_skipped() {
        let p = preds(1, 2);
        let labels = [LabelSet {
            au: Some(au_bits(0)),
            ce: Some(Emotion::Fear),
            va: Some(Va::new(0.2, 0.3).unwrap()),
        }];
        let (b, g) = total_loss(&p, &labels).unwrap();
        assert_eq!(b.n_va, 0);
        assert_eq!(b.total, b.l_au + b.l_ce);
        assert!(g.va.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mixed_batch_equals_independent_track_losses() {
        let p = preds(12, 9);
        let mut rng = RngState::new(4);
        let labels: Vec<LabelSet> = (0..12)
            .map(|k| match k / 4 {
                0 => LabelSet { au: Some(au_bits(k)), ..Default::default() },
                1 => LabelSet { ce: Some(Emotion::ALL[k % 7]), ..Default::default() },
                _ => LabelSet {
                    va: Some(Va::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)).unwrap()),
                    ..Default::default()
                },
            })
            .collect();
        let (b, g) = total_loss(&p, &labels).unwrap();

        let au: f64 = (0..4)
            .map(|i| multilabel_ce(p.au_logits.row(i), &au_bits(i)).unwrap().0)
            .sum::<f64>()
            / 4.0;
        let ce: f64 = (4..8)
            .map(|i| softmax_ce(p.ce_logits.row(i), i % 7).unwrap().0)
            .sum::<f64>()
            / 4.0;
        let rows: Vec<usize> = (8..12).collect();
        let truth: Vec<[f64; 2]> = rows.iter().map(|&i| labels[i].va.unwrap().as_array()).collect();
        let va = va_loss(&p.va.select_rows(&rows), &Matrix::from_rows(&truth).unwrap())
            .unwrap()
            .0;
        assert!((b.total - (au + ce + va)).abs() < 1e-12);
        assert_eq!((b.n_au, b.n_ce, b.n_va), (4, 4, 4));
        // gradients confined to labelled rows of each track
        for i in 4..12 {
            assert!(g.au_logits.row(i).iter().all(|&v| v == 0.0));
        }
        for i in (0..4).chain(8..12) {
            assert!(g.ce_logits.row(i).iter().all(|&v| v == 0.0));
        }
        for i in 0..8 {
            assert!(g.va.row(i).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn unlabelled_batch_is_rejected() {
        let p = preds(2, 5);
        let err = total_loss(&p, &[LabelSet::default(); 2]).unwrap_err();
        assert!(matches!(err, Error::NoLabels(_)));
    }

    proptest! {
        #[test]
        fn multilabel_nonnegative_and_permutation_equivariant(
            xs in proptest::collection::vec(-20.0f64..20.0, 12),
            bits in proptest::collection::vec(any::<bool>(), 12),
            rot in 0usize..12,
        ) {
            let (l, _) = multilabel_ce(&xs, &bits).unwrap();
            prop_assert!(l >= 0.0);
            let mut xr = xs.clone();
            let mut br = bits.clone();
            xr.rotate_left(rot);
            br.rotate_left(rot);
            let (lr, _) = multilabel_ce(&xr, &br).unwrap();
            prop_assert!((l - lr).abs() <= 1e-12 * l.max(1.0));
        }

        #[test]
        fn large_logits_stay_finite(
            xs in proptest::collection::vec(-1e4f64..1e4, 12),
            bits in proptest::collection::vec(any::<bool>(), 12),
            target in 0usize..7,
        ) {
            let (l, g) = multilabel_ce(&xs, &bits).unwrap();
            prop_assert!(l.is_finite() && g.iter().all(|v| v.is_finite()));
            let (l, g) = softmax_ce(&xs[..7], target).unwrap();
            prop_assert!(l.is_finite() && g.iter().all(|v| v.is_finite()));
        }

        #[test]
        fn softmax_gradient_sums_to_zero(
            xs in proptest::collection::vec(-50.0f64..50.0, 7),
            target in 0usize..7,
        ) {
            let (_, g) = softmax_ce(&xs, target).unwrap();
            prop_assert!(g.iter().sum::<f64>().abs() < 1e-12);
        }

        #[test]
        fn ccc_symmetry_and_affine_invariance(
            pairs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..40),
            shift in -5.0f64..5.0,
            scale in 0.1f64..10.0,
        ) {
            let p: Vec<f64> = pairs.iter().map(|x| x.0).collect();
            let t: Vec<f64> = pairs.iter().map(|x| x.1).collect();
            let c = ccc(&p, &t).unwrap();
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&c));
            prop_assert!((c - ccc(&t, &p).unwrap()).abs() < 1e-12);
            let ps: Vec<f64> = p.iter().map(|v| v + shift).collect();
            let ts: Vec<f64> = t.iter().map(|v| v + shift).collect();
            prop_assert!((c - ccc(&ps, &ts).unwrap()).abs() < 1e-9);
            let pk: Vec<f64> = p.iter().map(|v| v * scale).collect();
            let tk: Vec<f64> = t.iter().map(|v| v * scale).collect();
            prop_assert!((c - ccc(&pk, &tk).unwrap()).abs() < 1e-9);
        }
    }
}
