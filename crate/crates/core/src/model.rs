//! The streaming AU → CE → VA network and its parallel-heads ablation.
//!
//! Streaming dataflow for an embedding `e` (after the optional adapter):
//!
//! ```text
//! f_au = ExtractorAU(e)            au   = HeadAU(f_au)
//! j_ce = [TransAUCE(f_au) | ExtractorCE(e)]      ce = HeadCE(j_ce)
//! j_va = [ExtractorVA(e) | TransCEVA(j_ce)]      va = tanh(HeadVA(j_va))
//! ```
//!
//! The parallel variant drops both translators, so each head only sees its
//! own extractor.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{LabelSet, AU_COUNT, CE_COUNT, VA_DIM};
use crate::losses::{total_loss, LossBreakdown};
use crate::numeric::ops::{
    concat, linear_backward, linear_forward, relu, relu_backward, split_cols, tanh, tanh_backward,
};
use crate::numeric::{LayerId, LinearParams, Matrix, Optimizer, ParamStore, RngState};
use crate::prediction::{Decision, Predictions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Streaming,
    Parallel,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "streaming" => Ok(Variant::Streaming),
            "parallel" => Ok(Variant::Parallel),
            other => Err(Error::Validation(format!(
                "unknown variant `{other}` (expected streaming|parallel)"
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Streaming => "streaming",
            Variant::Parallel => "parallel",
        })
    }
}

/// Hidden-layer widths of the two-layer MLPs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenWidths {
    pub extractor: usize,
    pub head: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub embed_dim: usize,
    /// Flattened 12×16 AU feature.
    pub au_feat_dim: usize,
    pub ce_feat_dim: usize,
    pub va_feat_dim: usize,
    pub translator_dim: usize,
    pub hidden: HiddenWidths,
    pub variant: Variant,
    pub adapter: bool,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            embed_dim: 512,
            au_feat_dim: 12 * 16,
            ce_feat_dim: 64,
            va_feat_dim: 64,
            translator_dim: 64,
            hidden: HiddenWidths {
                extractor: 256,
                head: 64,
            },
            variant: Variant::Streaming,
            adapter: false,
            seed: 0,
        }
    }
}

impl NetConfig {
    /// Same topology with narrow layers; small enough to finite-difference
    /// every parameter.
    pub fn compact() -> Self {
        Self {
            embed_dim: 16,
            au_feat_dim: 12,
            ce_feat_dim: 6,
            va_feat_dim: 6,
            translator_dim: 5,
            hidden: HiddenWidths {
                extractor: 10,
                head: 8,
            },
            ..Self::default()
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("embed_dim", self.embed_dim),
            ("au_feat_dim", self.au_feat_dim),
            ("ce_feat_dim", self.ce_feat_dim),
            ("va_feat_dim", self.va_feat_dim),
            ("translator_dim", self.translator_dim),
            ("hidden.extractor", self.hidden.extractor),
            ("hidden.head", self.hidden.head),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Validation(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    fn ce_joint_dim(&self) -> usize {
        match self.variant {
            Variant::Streaming => self.translator_dim + self.ce_feat_dim,
            Variant::Parallel => self.ce_feat_dim,
        }
    }

    fn va_joint_dim(&self) -> usize {
        match self.variant {
            Variant::Streaming => self.va_feat_dim + self.translator_dim,
            Variant::Parallel => self.va_feat_dim,
        }
    }

    /// `(name, in, out)` of every linear layer, in construction order.
    pub fn layer_shapes(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        let mut mlp = |name: &str, i: usize, h: usize, o: usize| {
            out.push((format!("{name}.0"), i, h));
            out.push((format!("{name}.1"), h, o));
        };
        let (e, he, hh) = (self.embed_dim, self.hidden.extractor, self.hidden.head);
        mlp(layer::EXTRACTOR_AU, e, he, self.au_feat_dim);
        mlp(layer::EXTRACTOR_CE, e, he, self.ce_feat_dim);
        mlp(layer::EXTRACTOR_VA, e, he, self.va_feat_dim);
        mlp(layer::HEAD_AU, self.au_feat_dim, hh, AU_COUNT);
        mlp(layer::HEAD_CE, self.ce_joint_dim(), hh, CE_COUNT);
        mlp(layer::HEAD_VA, self.va_joint_dim(), hh, VA_DIM);
        let mut shapes = Vec::new();
        if self.adapter {
            shapes.push((layer::ADAPTER.to_owned(), e, e));
        }
        shapes.extend(out);
        if self.variant == Variant::Streaming {
            shapes.push((layer::TRANS_AU_CE.to_owned(), self.au_feat_dim, self.translator_dim));
            shapes.push((layer::TRANS_CE_VA.to_owned(), self.ce_joint_dim(), self.translator_dim));
        }
        shapes
    }
}

/// Layer names as stored in the parameter store and checkpoints. Two-layer
/// blocks store `<name>.0` and `<name>.1`.
pub mod layer {
    pub const ADAPTER: &str = "adapter";
    pub const EXTRACTOR_AU: &str = "extractor_au";
    pub const EXTRACTOR_CE: &str = "extractor_ce";
    pub const EXTRACTOR_VA: &str = "extractor_va";
    pub const HEAD_AU: &str = "head_au";
    pub const HEAD_CE: &str = "head_ce";
    pub const HEAD_VA: &str = "head_va";
    pub const TRANS_AU_CE: &str = "trans_au_ce";
    pub const TRANS_CE_VA: &str = "trans_ce_va";
}

/// Two linear layers with a ReLU between them.
#[derive(Debug, Clone, Copy)]
struct Mlp {
    first: LayerId,
    second: LayerId,
}

#[derive(Debug, Clone)]
struct MlpCache {
    pre: Matrix,
    hidden: Matrix,
}

impl Mlp {
    fn forward(&self, store: &ParamStore, input: &Matrix) -> Result<(Matrix, MlpCache)> {
        let pre = linear_forward(store, self.first, input)?;
        let hidden = relu(&pre);
        let out = linear_forward(store, self.second, &hidden)?;
        Ok((out, MlpCache { pre, hidden }))
    }

    fn backward(
        &self,
        store: &mut ParamStore,
        input: &Matrix,
        cache: &MlpCache,
        grad: &Matrix,
        input_grad: bool,
    ) -> Result<Option<Matrix>> {
        let d_hidden = linear_backward(store, self.second, &cache.hidden, grad, true)?
            .expect("requested");
        let d_pre = relu_backward(&cache.pre, &d_hidden);
        linear_backward(store, self.first, input, &d_pre, input_grad)
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    adapter: Option<LayerId>,
    extractor_au: Mlp,
    extractor_ce: Mlp,
    extractor_va: Mlp,
    head_au: Mlp,
    head_ce: Mlp,
    head_va: Mlp,
    translators: Option<(LayerId, LayerId)>,
}

impl Layout {
    fn resolve(store: &ParamStore, config: &NetConfig) -> Result<Self> {
        let id = |name: &str| {
            store
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing layer `{name}`")))
        };
        let mlp = |name: &str| -> Result<Mlp> {
            Ok(Mlp {
                first: id(&format!("{name}.0"))?,
                second: id(&format!("{name}.1"))?,
            })
        };
        Ok(Self {
            adapter: if config.adapter { Some(id(layer::ADAPTER)?) } else { None },
            extractor_au: mlp(layer::EXTRACTOR_AU)?,
            extractor_ce: mlp(layer::EXTRACTOR_CE)?,
            extractor_va: mlp(layer::EXTRACTOR_VA)?,
            head_au: mlp(layer::HEAD_AU)?,
            head_ce: mlp(layer::HEAD_CE)?,
            head_va: mlp(layer::HEAD_VA)?,
            translators: match config.variant {
                Variant::Streaming => Some((id(layer::TRANS_AU_CE)?, id(layer::TRANS_CE_VA)?)),
                Variant::Parallel => None,
            },
        })
    }
}

/// Intermediate activations of one forward pass, consumed by
/// [`AffectNet::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    embeddings: Matrix,
    adapted: Option<Matrix>,
    ext_au: MlpCache,
    f_au: Matrix,
    head_au: MlpCache,
    ext_ce: MlpCache,
    j_ce: Matrix,
    head_ce: MlpCache,
    ext_va: MlpCache,
    j_va: Matrix,
    head_va: MlpCache,
    va: Matrix,
}

impl ForwardCache {
    fn input(&self) -> &Matrix {
        self.adapted.as_ref().unwrap_or(&self.embeddings)
    }
}

#[derive(Debug, Clone)]
pub struct AffectNet {
    config: NetConfig,
    params: ParamStore,
    layout: Layout,
}

impl AffectNet {
    /// Allocates every layer from `config.seed`: He-uniform weights, zero bias.
    /// The adapter, when enabled, starts at the identity.
    pub fn build(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = RngState::new(config.seed);
        let mut params = ParamStore::new();
        for (name, i, o) in config.layer_shapes() {
            if name == layer::ADAPTER {
                params.insert(&name, LinearParams::new(Matrix::identity(i), vec![0.0; o])?)?;
            } else {
                params.add_linear(&name, i, o, &mut rng)?;
            }
        }
        let layout = Layout::resolve(&params, &config)?;
        Ok(Self {
            config,
            params,
            layout,
        })
    }

    /// Reassembles a network from stored parameters; names and shapes must
    /// match what `config` would build.
    pub fn from_parts(config: NetConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let expected = config.layer_shapes();
        if expected.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} layers, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, i, o) in &expected {
            let p = params
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing layer `{name}`")))?;
            if (p.in_dim(), p.out_dim()) != (*i, *o) {
                return Err(Error::Checkpoint(format!(
                    "layer `{name}` is {}x{}, expected {i}x{o}",
                    p.in_dim(),
                    p.out_dim()
                )));
            }
        }
        let layout = Layout::resolve(&params, &config)?;
        Ok(Self {
            config,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    pub fn forward(&self, embeddings: &Matrix) -> Result<Predictions> {
        self.forward_cached(embeddings).map(|(p, _)| p)
    }

    pub fn forward_cached(&self, embeddings: &Matrix) -> Result<(Predictions, ForwardCache)> {
        if embeddings.cols() != self.config.embed_dim {
            return Err(Error::dim(
                "embedding input",
                self.config.embed_dim,
                embeddings.cols(),
            ));
        }
        let p = &self.params;
        let l = &self.layout;
        let adapted = match l.adapter {
            Some(id) => Some(linear_forward(p, id, embeddings)?),
            None => None,
        };
        let x = adapted.as_ref().unwrap_or(embeddings);

        let (f_au, ext_au) = l.extractor_au.forward(p, x)?;
        let (au_logits, head_au) = l.head_au.forward(p, &f_au)?;

        let (c_ce, ext_ce) = l.extractor_ce.forward(p, x)?;
        let j_ce = match l.translators {
            Some((au_ce, _)) => concat(&linear_forward(p, au_ce, &f_au)?, &c_ce)?,
            None => c_ce,
        };
        let (ce_logits, head_ce) = l.head_ce.forward(p, &j_ce)?;

        let (c_va, ext_va) = l.extractor_va.forward(p, x)?;
        let j_va = match l.translators {
            Some((_, ce_va)) => concat(&c_va, &linear_forward(p, ce_va, &j_ce)?)?,
            None => c_va,
        };
        let (va_pre, head_va) = l.head_va.forward(p, &j_va)?;
        let va = tanh(&va_pre);

        let preds = Predictions::new(au_logits, ce_logits, va.clone())?;
        let cache = ForwardCache {
            embeddings: embeddings.clone(),
            adapted,
            ext_au,
            f_au,
            head_au,
            ext_ce,
            j_ce,
            head_ce,
            ext_va,
            j_va,
            head_va,
            va,
        };
        Ok((preds, cache))
    }

    /// Accumulates parameter gradients given gradients of the loss with
    /// respect to the three outputs (AU logits, CE logits, bounded VA).
    pub fn backward(&mut self, cache: &ForwardCache, grads: &Predictions) -> Result<()> {
        let l = self.layout;
        let cfg = self.config;
        let p = &mut self.params;
        let need_x = l.adapter.is_some();
        let x = cache.input();

        // VA branch
        let d_va_pre = tanh_backward(&cache.va, &grads.va);
        let d_j_va = l
            .head_va
            .backward(p, &cache.j_va, &cache.head_va, &d_va_pre, true)?
            .expect("requested");
        let (d_c_va, d_j_ce_from_va) = match l.translators {
            Some((_, ce_va)) => {
                let (d_c_va, d_t2) = split_cols(&d_j_va, cfg.va_feat_dim)?;
                let d = linear_backward(p, ce_va, &cache.j_ce, &d_t2, true)?;
                (d_c_va, d)
            }
            None => (d_j_va, None),
        };
        let d_x_va = l.extractor_va.backward(p, x, &cache.ext_va, &d_c_va, need_x)?;

        // CE branch
        let mut d_j_ce = l
            .head_ce
            .backward(p, &cache.j_ce, &cache.head_ce, &grads.ce_logits, true)?
            .expect("requested");
        if let Some(d) = d_j_ce_from_va {
            d_j_ce.add_assign(&d)?;
        }
        let (d_c_ce, d_f_au_from_ce) = match l.translators {
            Some((au_ce, _)) => {
                let (d_t1, d_c_ce) = split_cols(&d_j_ce, cfg.translator_dim)?;
                let d = linear_backward(p, au_ce, &cache.f_au, &d_t1, true)?;
                (d_c_ce, d)
            }
            None => (d_j_ce, None),
        };
        let d_x_ce = l.extractor_ce.backward(p, x, &cache.ext_ce, &d_c_ce, need_x)?;

        // AU branch
        let mut d_f_au = l
            .head_au
            .backward(p, &cache.f_au, &cache.head_au, &grads.au_logits, true)?
            .expect("requested");
        if let Some(d) = d_f_au_from_ce {
            d_f_au.add_assign(&d)?;
        }
        let d_x_au = l.extractor_au.backward(p, x, &cache.ext_au, &d_f_au, need_x)?;

        if let Some(adapter) = l.adapter {
            let mut d_x = d_x_au.expect("requested");
            d_x.add_assign(&d_x_ce.expect("requested"))?;
            d_x.add_assign(&d_x_va.expect("requested"))?;
            linear_backward(p, adapter, &cache.embeddings, &d_x, false)?;
        }
        Ok(())
    }

    /// Zeroes the gradient buffers, then runs forward, the masked total loss
    /// and backward. Gradients are left in the parameter store.
    pub fn loss_and_grad(&mut self, embeddings: &Matrix, labels: &[LabelSet]) -> Result<LossBreakdown> {
        self.params.zero_grad();
        let (preds, cache) = self.forward_cached(embeddings)?;
        let (breakdown, grads) = total_loss(&preds, labels)?;
        self.backward(&cache, &grads)?;
        Ok(breakdown)
    }

    /// Loss value only, without touching gradients.
    pub fn loss(&self, embeddings: &Matrix, labels: &[LabelSet]) -> Result<LossBreakdown> {
        let preds = self.forward(embeddings)?;
        Ok(total_loss(&preds, labels)?.0)
    }

    pub fn predict(&self, embeddings: &Matrix) -> Result<Vec<Decision>> {
        self.predict_with_thresholds(embeddings, &[0.0; AU_COUNT])
    }

    pub fn predict_with_thresholds(
        &self,
        embeddings: &Matrix,
        thresholds: &[f64; AU_COUNT],
    ) -> Result<Vec<Decision>> {
        let preds = self.forward(embeddings)?;
        Ok(preds.iter().map(|p| p.decide(thresholds)).collect())
    }
}

/// A network together with its optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub net: AffectNet,
    pub optimizer: Optimizer,
}

impl Trainer {
    pub fn new(net: AffectNet, optimizer: Optimizer) -> Self {
        Self { net, optimizer }
    }

    /// One optimisation step on a batch. Fails, leaving the parameters
    /// untouched, if any gradient is non-finite.
    pub fn train_step(&mut self, embeddings: &Matrix, labels: &[LabelSet]) -> Result<LossBreakdown> {
        let breakdown = self.net.loss_and_grad(embeddings, labels)?;
        self.optimizer.step(self.net.params_mut())?;
        if !self.net.params().is_finite() {
            return Err(Error::Validation("parameters became non-finite".into()));
        }
        Ok(breakdown)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{Emotion, Va};

    fn inputs(b: usize, dim: usize, seed: u64) -> Matrix {
        let mut rng = RngState::new(seed);
        Matrix::from_vec(b, dim, (0..b * dim).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn default_parameter_count_closed_form() {
        // (in*out + out) per linear layer, written out by hand.
        let lin = |i: usize, o: usize| i * o + o;
        let streaming = lin(512, 256) + lin(256, 192)
            + lin(512, 256) + lin(256, 64)
            + lin(512, 256) + lin(256, 64)
            + lin(192, 64) + lin(64, 12)
            + lin(192, 64)
            + lin(128, 64) + lin(64, 7)
            + lin(128, 64)
            + lin(128, 64) + lin(64, 2);
        let net = AffectNet::build(NetConfig::default()).unwrap();
        assert_eq!(net.num_params(), streaming);

        let parallel = AffectNet::build(NetConfig::default().with_variant(Variant::Parallel)).unwrap();
        assert!(parallel.num_params() < net.num_params());
        let expect_parallel = streaming - lin(192, 64) - lin(128, 64) - lin(128, 64) + lin(64, 64)
            - lin(128, 64)
            + lin(64, 64);
        assert_eq!(parallel.num_params(), expect_parallel);
    }

    #[test]
    fn same_seed_same_init() {
        let a = AffectNet::build(NetConfig::compact().with_seed(9)).unwrap();
        let b = AffectNet::build(NetConfig::compact().with_seed(9)).unwrap();
        assert_eq!(a.params(), b.params());
        let c = AffectNet::build(NetConfig::compact().with_seed(10)).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn zero_params_zero_outputs() {
        let mut net = AffectNet::build(NetConfig::compact()).unwrap();
        for (_, p) in net.params_mut().iter_mut() {
            p.weight.fill(0.0);
            p.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        let preds = net.forward(&Matrix::zeros(3, 16)).unwrap();
        assert!(preds.au_logits.as_slice().iter().all(|&v| v == 0.0));
        assert!(preds.ce_logits.as_slice().iter().all(|&v| v == 0.0));
        assert!(preds.va.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_embedding_width_names_stage() {
        let net = AffectNet::build(NetConfig::compact()).unwrap();
        let err = net.forward(&Matrix::zeros(2, 15)).unwrap_err();
        assert!(err.to_string().contains("embedding input"), "{err}");
    }

    #[test]
    fn va_is_bounded_even_for_huge_inputs() {
        let net = AffectNet::build(NetConfig::compact()).unwrap();
        let x = inputs(5, 16, 1).map(|v| v * 1e6);
        let preds = net.forward(&x).unwrap();
        assert!(preds.va.as_slice().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn au_only_batch_leaves_downstream_gradients_zero() {
        let mut net = AffectNet::build(NetConfig::compact()).unwrap();
        let labels: Vec<LabelSet> = (0..4)
            .map(|k| LabelSet {
                au: Some(std::array::from_fn(|i| (i + k) % 2 == 0)),
                ..Default::default()
            })
            .collect();
        net.loss_and_grad(&inputs(4, 16, 2), &labels).unwrap();
        let p = net.params();
        for name in ["head_ce.0", "head_ce.1", "head_va.0", "head_va.1", "trans_ce_va", "trans_au_ce"] {
            assert_eq!(p.grad_l1(name), Some(0.0), "{name}");
        }
        assert!(p.grad_l1("extractor_au.0").unwrap() > 0.0);
    }

    #[test]
    fn va_only_gradient_flow_depends_on_variant() {
        let labels: Vec<LabelSet> = (0..6)
            .map(|k| LabelSet {
                va: Some(Va::new(0.1 * k as f64 - 0.3, 0.5 - 0.15 * k as f64).unwrap()),
                ..Default::default()
            })
            .collect();
        let x = inputs(6, 16, 3);

        let mut s = AffectNet::build(NetConfig::compact()).unwrap();
        s.loss_and_grad(&x, &labels).unwrap();
        assert!(s.params().grad_l1("extractor_au.0").unwrap() > 0.0);
        assert_eq!(s.params().grad_l1("head_au.1"), Some(0.0));

        let mut par = AffectNet::build(NetConfig::compact().with_variant(Variant::Parallel)).unwrap();
        par.loss_and_grad(&x, &labels).unwrap();
        assert_eq!(par.params().grad_l1("extractor_au.0"), Some(0.0));
        assert_eq!(par.params().grad_l1("extractor_au.1"), Some(0.0));
    }

    #[test]
    fn adapter_starts_as_identity() {
        let mut cfg = NetConfig::compact();
        cfg.adapter = true;
        let with = AffectNet::build(cfg).unwrap();
        let without = AffectNet::build(NetConfig::compact()).unwrap();
        let x = inputs(3, 16, 4);
        // extractor weights are drawn identically since the adapter consumes no randomness
        assert_eq!(with.forward(&x).unwrap(), without.forward(&x).unwrap());
    }

    #[test]
    fn from_parts_rejects_wrong_layout() {
        let net = AffectNet::build(NetConfig::compact()).unwrap();
        let par = NetConfig::compact().with_variant(Variant::Parallel);
        assert!(AffectNet::from_parts(par, net.params().clone()).is_err());
        assert!(AffectNet::from_parts(NetConfig::compact(), net.params().clone()).is_ok());
    }

    fn mixed_labels(b: usize) -> Vec<LabelSet> {
        let mut rng = RngState::new(77);
        (0..b)
            .map(|k| {
                let au = (k % 4 != 3).then(|| std::array::from_fn(|_| rng.chance(0.5)));
                let ce = (k % 4 != 1).then(|| Emotion::ALL[(k * 5) % 7]);
                let va = (k % 4 != 2)
                    .then(|| Va::new(rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)).unwrap());
                LabelSet { au, ce, va }
            })
            .collect()
    }

    #[test]
    fn full_network_gradients_match_finite_differences() {
        use crate::numeric::gradcheck::{finite_diff_check, DEFAULT_EPS};
        for (variant, adapter) in [
            (Variant::Streaming, false),
            (Variant::Parallel, false),
            (Variant::Streaming, true),
        ] {
            let mut cfg = NetConfig::compact().with_variant(variant).with_seed(21);
            cfg.adapter = adapter;
            let mut net = AffectNet::build(cfg).unwrap();
            let x = inputs(8, 16, 6);
            let labels = mixed_labels(8);
            net.loss_and_grad(&x, &labels).unwrap();
            let snapshot = net.clone();
            let mut store = net.params().clone();
            let report = finite_diff_check(
                |s| {
                    AffectNet::from_parts(cfg, s.clone())
                        .unwrap()
                        .loss(&x, &labels)
                        .unwrap()
                        .total
                },
                &mut store,
                DEFAULT_EPS,
            );
            assert!(report.max_rel_error < 1e-5, "{variant} adapter={adapter}: {report:?}");
            assert_eq!(&store, snapshot.params());
        }
    }

    #[test]
    fn train_step_reduces_loss_on_fixed_batch() {
        let net = AffectNet::build(NetConfig::compact()).unwrap();
        let mut t = Trainer::new(net, Optimizer::adam(1e-2));
        let x = inputs(8, 16, 5);
        let labels: Vec<LabelSet> = (0..8)
            .map(|k| LabelSet {
                au: Some(std::array::from_fn(|i| (i * k) % 3 == 0)),
                ce: Some(Emotion::ALL[k % 7]),
                va: Some(Va::new(0.2 * (k as f64 - 4.0) / 4.0, 0.1).unwrap()),
            })
            .collect();
        let first = t.train_step(&x, &labels).unwrap().total;
        let mut last = first;
        for _ in 0..50 {
            last = t.train_step(&x, &labels).unwrap().total;
        }
        assert!(last < first, "{last} !< {first}");
    }
}
