//! Forward and backward passes for the layer types used by the networks.
//!
//! Backward functions take the forward input (the cached activation) and the
//! upstream gradient. Parameter gradients are accumulated into the store.

use super::matrix::Matrix;
use super::params::{LayerId, ParamStore};
use crate::error::{Error, Result};

/// `input · W + b`, with `b` broadcast over rows.
pub fn linear_forward(store: &ParamStore, id: LayerId, input: &Matrix) -> Result<Matrix> {
    let p = store.layer(id);
    if input.cols() != p.in_dim() {
        return Err(Error::dim(
            format!("layer `{}` input width", store.name(id)),
            p.in_dim(),
            input.cols(),
        ));
    }
    let mut out = input.matmul(&p.weight)?;
    for r in 0..out.rows() {
        for (o, b) in out.row_mut(r).iter_mut().zip(&p.bias) {
            *o += b;
        }
    }
    Ok(out)
}

/// Accumulates `dW += inputᵀ · g` and `db += Σ_rows g`; returns `g · Wᵀ` when
/// `input_grad` is set.
pub fn linear_backward(
    store: &mut ParamStore,
    id: LayerId,
    input: &Matrix,
    grad_out: &Matrix,
    input_grad: bool,
) -> Result<Option<Matrix>> {
    let name = store.name(id).to_owned();
    let p = store.layer_mut(id);
    if grad_out.cols() != p.out_dim() || grad_out.rows() != input.rows() {
        return Err(Error::dim(
            format!("layer `{name}` upstream gradient"),
            format!("{}x{}", input.rows(), p.out_dim()),
            format!("{}x{}", grad_out.rows(), grad_out.cols()),
        ));
    }
    let dw = input.t_matmul(grad_out)?;
    p.grad_weight.add_assign(&dw)?;
    for (gb, s) in p.grad_bias.iter_mut().zip(grad_out.column_sums()) {
        *gb += s;
    }
    if input_grad {
        Ok(Some(grad_out.matmul_t(&p.weight)?))
    } else {
        Ok(None)
    }
}

pub fn relu(input: &Matrix) -> Matrix {
    input.map(|x| x.max(0.0))
}

/// Passes `grad` through where the forward input was strictly positive.
pub fn relu_backward(input: &Matrix, grad: &Matrix) -> Matrix {
    debug_assert_eq!(input.shape(), grad.shape());
    let data = input
        .as_slice()
        .iter()
        .zip(grad.as_slice())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Matrix::from_vec(input.rows(), input.cols(), data).expect("same shape")
}

pub fn tanh(input: &Matrix) -> Matrix {
    input.map(f64::tanh)
}

/// Backward of tanh given its forward *output* `y`: `g · (1 − y²)`.
pub fn tanh_backward(output: &Matrix, grad: &Matrix) -> Matrix {
    debug_assert_eq!(output.shape(), grad.shape());
    let data = output
        .as_slice()
        .iter()
        .zip(grad.as_slice())
        .map(|(&y, &g)| g * (1.0 - y * y))
        .collect();
    Matrix::from_vec(output.rows(), output.cols(), data).expect("same shape")
}

/// Column-wise concatenation `[a | b]`.
pub fn concat(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(Error::dim("concat batch size", a.rows(), b.rows()));
    }
    let cols = a.cols() + b.cols();
    let mut data = Vec::with_capacity(a.rows() * cols);
    for r in 0..a.rows() {
        data.extend_from_slice(&a.as_slice()[r * a.cols()..(r + 1) * a.cols()]);
        data.extend_from_slice(&b.as_slice()[r * b.cols()..(r + 1) * b.cols()]);
    }
    Matrix::from_vec(a.rows(), cols, data)
}

/// Backward of [`concat`]: splits the upstream gradient at column `left_cols`.
pub fn split_cols(grad: &Matrix, left_cols: usize) -> Result<(Matrix, Matrix)> {
    if left_cols > grad.cols() {
        return Err(Error::dim("split_cols", format!("<= {}", grad.cols()), left_cols));
    }
    let right_cols = grad.cols() - left_cols;
    let mut left = Vec::with_capacity(grad.rows() * left_cols);
    let mut right = Vec::with_capacity(grad.rows() * right_cols);
    for r in 0..grad.rows() {
        let row = &grad.as_slice()[r * grad.cols()..(r + 1) * grad.cols()];
        left.extend_from_slice(&row[..left_cols]);
        right.extend_from_slice(&row[left_cols..]);
    }
    Ok((
        Matrix::from_vec(grad.rows(), left_cols, left)?,
        Matrix::from_vec(grad.rows(), right_cols, right)?,
    ))
}
