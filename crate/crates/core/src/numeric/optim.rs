use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub const fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::adam()
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m_w: Matrix,
    v_w: Matrix,
    m_b: Vec<f64>,
    v_b: Vec<f64>,
}

/// First-order optimizer over every layer of a [`ParamStore`].
///
/// Moment buffers are allocated lazily on the first step and indexed in the
/// store's insertion order.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    moments: Vec<Moments>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self::new(OptimizerKind::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::adam(), lr)
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update and zeroes the gradient buffers.
    ///
    /// Every gradient is checked before anything is written, so a non-finite
    /// entry leaves the parameters untouched.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        for (name, p) in store.iter() {
            let bad = p
                .grad_weight
                .as_slice()
                .iter()
                .chain(&p.grad_bias)
                .enumerate()
                .find(|(_, g)| !g.is_finite());
            if let Some((index, &value)) = bad {
                return Err(Error::NonFiniteGradient {
                    param: name.to_owned(),
                    index,
                    value,
                });
            }
        }

        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (_, p) in store.iter_mut() {
                    for (w, g) in p.weight.as_mut_slice().iter_mut().zip(p.grad_weight.as_slice()) {
                        *w -= self.lr * g;
                    }
                    for (b, g) in p.bias.iter_mut().zip(&p.grad_bias) {
                        *b -= self.lr * g;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.moments.len() != store.len() {
                    self.moments = store
                        .iter()
                        .map(|(_, p)| Moments {
                            m_w: Matrix::zeros(p.in_dim(), p.out_dim()),
                            v_w: Matrix::zeros(p.in_dim(), p.out_dim()),
                            m_b: vec![0.0; p.out_dim()],
                            v_b: vec![0.0; p.out_dim()],
                        })
                        .collect();
                }
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let lr = self.lr;
                let update = |w: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                };
                for ((_, p), mo) in store.iter_mut().zip(self.moments.iter_mut()) {
                    let w = p.weight.as_mut_slice().iter_mut();
                    let g = p.grad_weight.as_slice().iter();
                    let m = mo.m_w.as_mut_slice().iter_mut();
                    let v = mo.v_w.as_mut_slice().iter_mut();
                    for (((w, &g), m), v) in w.zip(g).zip(m).zip(v) {
                        update(w, g, m, v);
                    }
                    let b = p.bias.iter_mut();
                    let g = p.grad_bias.iter();
                    for (((b, &g), m), v) in b.zip(g).zip(mo.m_b.iter_mut()).zip(mo.v_b.iter_mut())
                    {
                        update(b, g, m, v);
                    }
                }
            }
        }
        store.zero_grad();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::params::LinearParams;

    fn scalar_store(w: f64) -> ParamStore {
        let mut s = ParamStore::new();
        let p = LinearParams::new(Matrix::filled(1, 1, w), vec![0.0]).unwrap();
        s.insert("w", p).unwrap();
        s
    }

    fn w(s: &ParamStore) -> f64 {
        s.get("w").unwrap().weight.get(0, 0)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        for mut opt in [Optimizer::sgd(0.1), Optimizer::adam(1e-3)] {
            let mut s = scalar_store(1.5);
            opt.step(&mut s).unwrap();
            assert_eq!(w(&s), 1.5);
        }
    }

    #[test]
    fn sgd_rule() {
        let mut s = scalar_store(1.0);
        s.get_mut("w").unwrap().grad_weight.set(0, 0, 0.5);
        Optimizer::sgd(0.1).step(&mut s).unwrap();
        assert!((w(&s) - 0.95).abs() < 1e-15);
        assert_eq!(s.get("w").unwrap().grad_weight.get(0, 0), 0.0);
    }

    /// Scalar Adam recurrence written out independently of the optimizer.
    fn adam_reference(mut w: f64, lr: f64, steps: u32) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=steps {
            let g = 2.0 * w;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            w -= lr * mh / (vh.sqrt() + eps);
        }
        w
    }

    #[test]
    fn adam_minimises_quadratic() {
        let lr = 0.01;
        let mut s = scalar_store(1.0);
        let mut opt = Optimizer::adam(lr);
        for _ in 0..500 {
            let cur = w(&s);
            s.get_mut("w").unwrap().grad_weight.set(0, 0, 2.0 * cur);
            opt.step(&mut s).unwrap();
        }
        assert!(w(&s).abs() < 1e-3, "w = {}", w(&s));
        assert!((w(&s) - adam_reference(1.0, lr, 500)).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let mut s = scalar_store(1.0);
        s.get_mut("w").unwrap().grad_bias[0] = f64::NAN;
        let err = Optimizer::adam(0.1).step(&mut s).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { ref param, index: 1, .. } if param == "w"));
        assert_eq!(w(&s), 1.0);
    }
}
