//! Batch matrices built from sampled transitions.

use ndarray::Array2;

use crate::envs::JointObservation;
use crate::error::{check_len, Result};
use crate::numerics::{log_sum_exp, softmax, Real};
use crate::replay::Transition;

pub(crate) fn obs_of(t: &Transition, next: bool) -> &JointObservation {
    if next {
        &t.next_observation
    } else {
        &t.observation
    }
}

/// Rows are flattened joint observations.
pub(crate) fn joint_matrix<T: Real>(batch: &[&Transition], width: usize, next: bool) -> Result<Array2<T>> {
    let mut data = Vec::with_capacity(batch.len() * width);
    let mut row = Vec::with_capacity(width);
    for t in batch {
        row.clear();
        obs_of(t, next).flatten_into(&mut row);
        check_len("joint observation", width, row.len())?;
        data.extend(row.iter().map(|&v| T::from_f64(v)));
    }
    Ok(Array2::from_shape_vec((batch.len(), width), data).expect("row-major joint batch"))
}

pub(crate) fn local_matrix<T: Real>(batch: &[&Transition], agent: usize, width: usize, next: bool) -> Result<Array2<T>> {
    let mut data = Vec::with_capacity(batch.len() * width);
    for t in batch {
        let local = obs_of(t, next)
            .locals
            .get(agent)
            .ok_or(crate::Error::Shape {
                context: "local observations",
                expected: agent + 1,
                actual: obs_of(t, next).locals.len(),
            })?;
        check_len("local observation", width, local.len())?;
        data.extend(local.iter().map(|&v| T::from_f64(v)));
    }
    Ok(Array2::from_shape_vec((batch.len(), width), data).expect("row-major local batch"))
}

pub(crate) fn to_real<T: Real>(values: &[f64]) -> Vec<T> {
    values.iter().map(|&v| T::from_f64(v)).collect()
}

pub(crate) fn rewards(batch: &[&Transition]) -> Vec<f64> {
    batch.iter().map(|t| t.reward).collect()
}

/// Bootstrap mask: 0 for terminal transitions, 1 otherwise.
pub(crate) fn continuation(batch: &[&Transition]) -> Vec<f64> {
    batch.iter().map(|t| if t.terminal { 0.0 } else { 1.0 }).collect()
}

pub(crate) fn validate_actions(batch: &[&Transition], sizes: &[usize]) -> Result<()> {
    for t in batch {
        t.action.validate(sizes)?;
    }
    Ok(())
}

/// Gradient of the conservative term lse(q) − q[a] with respect to q, plus its value.
pub(crate) fn conservative_term(q: &[f64], action: usize) -> (f64, Vec<f64>) {
    let mut grad = softmax(q);
    grad[action] -= 1.0;
    (log_sum_exp(q) - q[action], grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conservative_term_of_uniform_values() {
        let (v, g) = conservative_term(&[0.0, 0.0, 0.0, 0.0], 1);
        assert!((v - 4f64.ln()).abs() < 1e-12);
        assert!((g[1] + 0.75).abs() < 1e-12);
        assert!((g.iter().sum::<f64>()).abs() < 1e-12);
    }
}
