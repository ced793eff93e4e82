//! Backpropagation against central finite differences.

mod common;

use common::gradient::*;
use fedtune::nn::{Network, TargetSpec};
use fedtune::rng::seeded;

#[test]
fn classifier_hard_labels() {
    for seed in 0..20 {
        assert!(classifier_error(seed, false) < REL_TOL, "seed {seed}");
    }
}

#[test]
fn classifier_lwf_targets() {
    for seed in 100..120 {
        assert!(classifier_error(seed, true) < REL_TOL, "seed {seed}");
    }
}

#[test]
fn lm_hard_labels() {
    for seed in 200..220 {
        assert!(lm_error(seed, false) < REL_TOL, "seed {seed}");
    }
}

#[test]
fn lm_mixed_targets() {
    for seed in 300..320 {
        assert!(lm_error(seed, true) < REL_TOL, "seed {seed}");
    }
}

/// With lambda = 0 and the reference equal to the trained model, the loss is
/// the entropy of the model's own predictions, and the gradient is that of
/// the KL part only: zero at the reference point.
#[test]
fn lm_self_distillation_is_entropy() {
    for seed in 400..410 {
        let mut rng = seeded(seed);
        let m = random_lm(&mut rng, 0.0);
        let batch = random_batch(&mut rng, m.vocab_size());
        let state = m.zero_state(batch.batch);
        let teachers = [m.clone()];
        let targets = TargetSpec::Mixed { lambda: 0.0, teachers: &teachers };
        let out = m.loss_and_grad(&batch, &state, &targets, &mut [state.clone()], None).unwrap();
        let mut st = state.clone();
        let p = m.batch_probs(&batch.inputs, batch.batch, &mut st).unwrap();
        let rows = batch.inputs.len() as f64;
        let entropy = -p.iter().map(|&q| q * q.ln()).sum::<f64>() / rows;
        assert!((out.loss - entropy).abs() < 1e-12);

        // teacher frozen at the reference: d/dθ [H(p_ref, p_θ)] at θ = θ_ref
        let frozen = m.clone();
        let numeric = numeric_grad(m.params(), |p| {
            let mm = m.with_params(p.clone()).unwrap();
            let t = [frozen.clone()];
            let tg = TargetSpec::Mixed { lambda: 0.0, teachers: &t };
            mm.loss_and_grad(&batch, &state, &tg, &mut [state.clone()], None).unwrap().loss
        });
        assert_close(&out.grad, &numeric, "self distillation");
        assert!(out.grad.norm() < 1e-12, "cross-entropy to itself is stationary");
    }
}

/// Hard-label loss equals the per-position negative log-likelihood read off
/// the inference path.
#[test]
fn lm_hard_loss_matches_inference() {
    let mut rng = seeded(77);
    let m = random_lm(&mut rng, 0.0);
    let batch = random_batch(&mut rng, m.vocab_size());
    let state = m.zero_state(batch.batch);
    let out = m.loss_and_grad(&batch, &state, &TargetSpec::Hard, &mut [], None).unwrap();
    let mut st = state.clone();
    let p = m.batch_probs(&batch.inputs, batch.batch, &mut st).unwrap();
    let v = m.vocab_size();
    let nll: f64 = batch
        .targets
        .iter()
        .enumerate()
        .map(|(r, &t)| -p[r * v + t as usize].ln())
        .sum::<f64>()
        / batch.targets.len() as f64;
    assert!((out.loss - nll).abs() < 1e-12);
    assert_eq!(out.state, st);
}
