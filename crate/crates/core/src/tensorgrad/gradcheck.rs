//! Central finite-difference oracle for tape gradients.
//!
//! The numeric side only ever reads forward values, so it stays independent
//! of every backward rule it is used to check.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Largest `|a - n| / max(|a|, |n|, 1e-6)` over paired entries.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Compares the tape gradient of `f` w.r.t. every entry of every input
/// against central differences with step `h`. Returns the worst relative
/// error.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let (analytic, numeric) = gradient_pair(inputs, h, &f)?;
    Ok(max_rel_error(&analytic, &numeric))
}

/// Analytic and numeric gradients, flattened over all inputs.
pub fn gradient_pair<F>(inputs: &[Tensor], h: f64, f: &F) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<f64> = vars
        .iter()
        .zip(inputs)
        .flat_map(|(&v, t)| grads.tensor(v, t).into_data())
        .collect();

    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.constant(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.value(loss).item())
    };
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut work = inputs.to_vec();
    for i in 0..inputs.len() {
        for k in 0..inputs[i].numel() {
            let orig = inputs[i].data()[k];
            work[i].data_mut()[k] = orig + h;
            let up = eval(&work)?;
            work[i].data_mut()[k] = orig - h;
            let down = eval(&work)?;
            work[i].data_mut()[k] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
    }
    Ok((analytic, numeric))
}
