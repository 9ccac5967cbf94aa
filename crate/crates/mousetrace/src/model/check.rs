//! Finite-difference validation of the analytic gradients.
//!
//! Runs the whole pair loss in f64 on a small configuration and compares
//! every parameter's backpropagated gradient against central differences.
//! Dropout must be disabled (it would change the loss between evaluations);
//! batch-norm runs in batch-statistics mode with frozen running buffers, so
//! repeated evaluations see the identical function.

use ndarray::{Array1, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::bce_with_logits;
use super::{Model, ModelConfig, ModelError};
use crate::seed;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub params_checked: usize,
}

/// Relative error with a floor so near-zero gradients compare on an
/// absolute scale.
fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Nudge one scalar parameter, addressed by (tensor index, element index)
/// in visit order.
fn perturb(model: &mut Model<f64>, tensor: usize, element: usize, delta: f64) {
    let mut cursor = 0usize;
    model.visit_params(&mut |_, v, _| {
        if cursor == tensor {
            v[element] += delta;
        }
        cursor += 1;
    });
}

/// Compare analytic gradients with central finite differences over every
/// parameter of a model built from `config`.
pub fn finite_difference_check(
    config: &ModelConfig,
    pair_count: usize,
    data_seed: u64,
) -> Result<GradCheckReport, ModelError> {
    if config.dropout != 0.0 {
        return Err(ModelError::BadConfig(
            "gradient check requires dropout = 0".into(),
        ));
    }
    let mut model = Model::<f64>::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(data_seed, &["gradcheck-data"]));
    let shape = (pair_count, config.input_features, config.input_len);
    let xa = Array3::from_shape_fn(shape, |_| rng.gen_range(-1.0..1.0));
    let xb = Array3::from_shape_fn(shape, |_| rng.gen_range(-1.0..1.0));
    let labels = Array1::from_shape_fn(pair_count, |k| if k % 2 == 0 { 1.0 } else { 0.0 });

    // Dropout is off, so the rng passed to the forward pass is never used.
    let loss_of = |model: &mut Model<f64>| -> f64 {
        let mut dummy_rng = ChaCha8Rng::seed_from_u64(0);
        let logits = model.forward_train(&xa, &xb, &mut dummy_rng, false);
        bce_with_logits(&logits, &labels).0
    };

    // Analytic pass.
    model.zero_grad();
    let mut dummy_rng = ChaCha8Rng::seed_from_u64(0);
    let logits = model.forward_train(&xa, &xb, &mut dummy_rng, false);
    let (_, dlogits) = bce_with_logits(&logits, &labels);
    model.backward_train(&dlogits);
    let mut grads: Vec<(String, Vec<f64>)> = Vec::new();
    model.visit_params(&mut |name, _, g| grads.push((name.to_string(), g.to_vec())));

    let h = 1e-5;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        params_checked: 0,
    };
    for (tensor, (name, analytic)) in grads.iter().enumerate() {
        for element in 0..analytic.len() {
            perturb(&mut model, tensor, element, h);
            let loss_plus = loss_of(&mut model);
            perturb(&mut model, tensor, element, -2.0 * h);
            let loss_minus = loss_of(&mut model);
            perturb(&mut model, tensor, element, h);
            let fd = (loss_plus - loss_minus) / (2.0 * h);
            let rel = rel_error(analytic[element], fd);
            report.params_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = format!("{name}[{element}]");
            }
        }
    }
    Ok(report)
}
