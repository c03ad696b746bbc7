//! Finite-difference verification of recorded gradients.
//!
//! The numeric side never touches the backward pass: it re-runs the forward
//! closure at perturbed parameter values and central-differences the loss.

use super::tape::{Tape, Var};
use super::tensor::{Real, Tensor};
use crate::error::Result;

/// Maximum acceptable relative error between analytic and numeric gradients
/// at the build float width.
#[cfg(not(feature = "f32"))]
pub const TOLERANCE: Real = 1e-4;
#[cfg(feature = "f32")]
pub const TOLERANCE: Real = 1e-2;

#[cfg(not(feature = "f32"))]
const STEP: Real = 1e-5;
#[cfg(feature = "f32")]
const STEP: Real = 5e-3;

/// Relative-error denominator floor; keeps near-zero gradients from turning
/// finite-difference noise into spurious failures.
const FLOOR: Real = 1e-3;

/// Compare the tape gradient of `build`'s scalar loss against central finite
/// differences over every coordinate of every parameter. Returns the largest
/// relative error.
///
/// `build` must be deterministic in the parameter values: any dropout inside
/// must use a fixed mask ([`Tape::dropout_with_mask`]).
pub fn max_relative_error<F>(params: &[Tensor], build: &F) -> Result<Real>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let analytic = analytic_grads(params, build)?;

    let mut worst: Real = 0.0;
    let mut scratch: Vec<Tensor> = params.to_vec();
    for (pi, param) in params.iter().enumerate() {
        for ci in 0..param.numel() {
            let x = param.data()[ci];
            let h = STEP * x.abs().max(1.0);

            scratch[pi].data_mut()[ci] = x + h;
            let plus = eval(&scratch, build)?;
            scratch[pi].data_mut()[ci] = x - h;
            let minus = eval(&scratch, build)?;
            scratch[pi].data_mut()[ci] = x;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[pi].data()[ci];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            if err > worst {
                worst = err;
            }
        }
    }
    Ok(worst)
}

fn analytic_grads<F>(params: &[Tensor], build: &F) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p)).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    Ok(vars
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
        .collect())
}

fn eval<F>(params: &[Tensor], build: &F) -> Result<Real>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p)).collect();
    let loss = build(&mut tape, &vars)?;
    tape.value(loss).item()
}
