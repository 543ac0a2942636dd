//! Central-difference gradient checking.

use super::params::ParamStore;

pub const DEFAULT_EPS: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter (layer name) holding the worst entry; `None` for free vectors
    /// or when nothing was checked.
    pub worst_param: Option<String>,
    /// Flat index of the worst entry: weight entries first, then bias.
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub entries_checked: usize,
}

impl GradCheckReport {
    fn empty() -> Self {
        Self {
            max_rel_error: 0.0,
            worst_param: None,
            worst_index: 0,
            worst_analytic: 0.0,
            worst_numeric: 0.0,
            entries_checked: 0,
        }
    }

    fn record(&mut self, param: Option<&str>, index: usize, analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        self.entries_checked += 1;
        if err > self.max_rel_error || self.entries_checked == 1 {
            self.max_rel_error = err;
            self.worst_param = param.map(str::to_owned);
            self.worst_index = index;
            self.worst_analytic = analytic;
            self.worst_numeric = numeric;
        }
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Checks a gradient of a function of a free vector.
pub fn check_vector<F>(mut f: F, x: &[f64], analytic: &[f64], eps: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x.len(), analytic.len(), "gradient length");
    let mut report = GradCheckReport::empty();
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let up = f(&probe);
        probe[i] = x[i] - eps;
        let down = f(&probe);
        probe[i] = x[i];
        report.record(None, i, analytic[i], (up - down) / (2.0 * eps));
    }
    report
}

/// Compares the analytic gradients currently held in `store` against central
/// differences of `loss_fn`, perturbing every weight and bias entry.
///
/// `loss_fn` must not touch the gradient buffers' meaning; it may overwrite
/// them, because they are snapshotted before probing and restored afterwards.
pub fn finite_diff_check<F>(loss_fn: F, store: &mut ParamStore, eps: f64) -> GradCheckReport
where
    F: FnMut(&ParamStore) -> f64,
{
    finite_diff_check_sampled(loss_fn, store, eps, None)
}

/// As [`finite_diff_check`], but probes at most `max_per_param` evenly strided
/// entries of each layer when a limit is given.
pub fn finite_diff_check_sampled<F>(
    mut loss_fn: F,
    store: &mut ParamStore,
    eps: f64,
    max_per_param: Option<usize>,
) -> GradCheckReport
where
    F: FnMut(&ParamStore) -> f64,
{
    let analytic: Vec<(String, Vec<f64>)> = store
        .iter()
        .map(|(name, p)| {
            let mut g = p.grad_weight.as_slice().to_vec();
            g.extend_from_slice(&p.grad_bias);
            (name.to_owned(), g)
        })
        .collect();

    let mut report = GradCheckReport::empty();
    for (name, grads) in &analytic {
        let n = grads.len();
        let stride = match max_per_param {
            Some(k) if k > 0 && n > k => n.div_ceil(k),
            _ => 1,
        };
        for idx in (0..n).step_by(stride) {
            let original = read_entry(store, name, idx);
            write_entry(store, name, idx, original + eps);
            let up = loss_fn(store);
            write_entry(store, name, idx, original - eps);
            let down = loss_fn(store);
            write_entry(store, name, idx, original);
            report.record(Some(name), idx, grads[idx], (up - down) / (2.0 * eps));
        }
    }

    for (name, grads) in analytic {
        let p = store.get_mut(&name).expect("layer present");
        let nw = p.grad_weight.len();
        p.grad_weight.as_mut_slice().copy_from_slice(&grads[..nw]);
        p.grad_bias.copy_from_slice(&grads[nw..]);
    }
    report
}

fn read_entry(store: &ParamStore, name: &str, idx: usize) -> f64 {
    let p = store.get(name).expect("layer present");
    let nw = p.weight.len();
    if idx < nw {
        p.weight.as_slice()[idx]
    } else {
        p.bias[idx - nw]
    }
}

fn write_entry(store: &mut ParamStore, name: &str, idx: usize, value: f64) {
    let p = store.get_mut(name).expect("layer present");
    let nw = p.weight.len();
    if idx < nw {
        p.weight.as_mut_slice()[idx] = value;
    } else {
        p.bias[idx - nw] = value;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::matrix::Matrix;
    use crate::numeric::params::LinearParams;

    fn scalar(theta: f64, grad: f64) -> ParamStore {
        let mut s = ParamStore::new();
        let mut p = LinearParams::new(Matrix::filled(1, 1, theta), vec![0.0]).unwrap();
        p.grad_weight.set(0, 0, grad);
        s.insert("theta", p).unwrap();
        s
    }

    #[test]
    fn square_at_three() {
        let mut s = scalar(3.0, 6.0);
        let r = finite_diff_check(
            |s| s.get("theta").unwrap().weight.get(0, 0).powi(2),
            &mut s,
            DEFAULT_EPS,
        );
        assert!(r.max_rel_error < 1e-8, "{r:?}");
        assert_eq!(r.entries_checked, 2);
    }

    #[test]
    fn constant_loss_has_zero_error() {
        let mut s = scalar(3.0, 0.0);
        let r = finite_diff_check(|_| 4.2, &mut s, DEFAULT_EPS);
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn wrong_gradient_is_reported_by_name() {
        let mut s = scalar(3.0, 5.0);
        let r = finite_diff_check(
            |s| s.get("theta").unwrap().weight.get(0, 0).powi(2),
            &mut s,
            DEFAULT_EPS,
        );
        assert!(r.max_rel_error > 0.1);
        assert_eq!(r.worst_param.as_deref(), Some("theta"));
        assert_eq!(r.worst_index, 0);
        // analytic gradients restored
        assert_eq!(s.get("theta").unwrap().grad_weight.get(0, 0), 5.0);
    }

    #[test]
    fn vector_check() {
        let x = [0.5f64, -1.5, 2.0];
        let grad: Vec<f64> = x.iter().map(|v| v.cos()).collect();
        let r = check_vector(|v| v.iter().map(|t| t.sin()).sum(), &x, &grad, DEFAULT_EPS);
        assert!(r.max_rel_error < 1e-8);
    }
}
