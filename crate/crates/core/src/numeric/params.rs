use indexmap::IndexMap;

use super::matrix::Matrix;
use super::rng::RngState;
use crate::error::{Error, Result};

/// Handle to a linear layer inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerId(pub(crate) usize);

/// Weights and bias of one linear layer plus gradient buffers of the same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    /// in × out
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub grad_weight: Matrix,
    pub grad_bias: Vec<f64>,
}

impl LinearParams {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::dim("LinearParams bias", weight.cols(), bias.len()));
        }
        let (i, o) = weight.shape();
        Ok(Self {
            grad_weight: Matrix::zeros(i, o),
            grad_bias: vec![0.0; o],
            weight,
            bias,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.fill(0.0);
        self.grad_bias.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// He-uniform initialisation: `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`, zero bias.
pub fn he_uniform(in_dim: usize, out_dim: usize, rng: &mut RngState) -> Matrix {
    let limit = (6.0 / in_dim.max(1) as f64).sqrt();
    let data = (0..in_dim * out_dim)
        .map(|_| rng.uniform(-limit, limit))
        .collect();
    Matrix::from_vec(in_dim, out_dim, data).expect("shape by construction")
}

/// Named, insertion-ordered collection of linear layer parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    layers: IndexMap<String, LinearParams>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, params: LinearParams) -> Result<LayerId> {
        if self.layers.contains_key(name) {
            return Err(Error::Validation(format!("duplicate layer name `{name}`")));
        }
        let (idx, _) = self.layers.insert_full(name.to_owned(), params);
        Ok(LayerId(idx))
    }

    /// Adds a He-uniform initialised layer.
    pub fn add_linear(
        &mut self,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut RngState,
    ) -> Result<LayerId> {
        let weight = he_uniform(in_dim, out_dim, rng);
        self.insert(name, LinearParams::new(weight, vec![0.0; out_dim])?)
    }

    pub fn id(&self, name: &str) -> Option<LayerId> {
        self.layers.get_index_of(name).map(LayerId)
    }

    pub fn name(&self, id: LayerId) -> &str {
        self.layers.get_index(id.0).expect("valid layer id").0
    }

    pub fn layer(&self, id: LayerId) -> &LinearParams {
        &self.layers[id.0]
    }

    pub fn layer_mut(&mut self, id: LayerId) -> &mut LinearParams {
        &mut self.layers[id.0]
    }

    pub fn get(&self, name: &str) -> Option<&LinearParams> {
        self.layers.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut LinearParams> {
        self.layers.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &LinearParams)> {
        self.layers.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut LinearParams)> {
        self.layers.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_params(&self) -> usize {
        self.layers.values().map(LinearParams::num_params).sum()
    }

    pub fn zero_grad(&mut self) {
        self.layers.values_mut().for_each(LinearParams::zero_grad);
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .values()
            .all(|p| p.weight.is_finite() && p.bias.iter().all(|b| b.is_finite()))
    }

    /// Sum of absolute gradient entries of one layer; handy for flow checks.
    pub fn grad_l1(&self, name: &str) -> Option<f64> {
        self.get(name).map(|p| {
            p.grad_weight.as_slice().iter().map(|g| g.abs()).sum::<f64>()
                + p.grad_bias.iter().map(|g| g.abs()).sum::<f64>()
        })
    }
}
