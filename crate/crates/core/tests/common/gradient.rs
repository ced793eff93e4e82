//! Finite-difference gradient checks shared by several test targets.

use fedtune::nn::{FeedforwardClassifier, LmBatch, LmShape, Network, ParamVec, RecurrentLM, TargetSpec};
use fedtune::rng::{seeded, Rng};
use rand::Rng as _;

pub const STEP: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-4;
/// Denominator floor for coordinates whose gradient is essentially zero,
/// where central differences only resolve ~1e-10 absolute.
pub const FLOOR: f64 = 1e-5;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}

/// Central differences of `loss` around `p`, one coordinate at a time.
pub fn numeric_grad(p: &ParamVec, loss: impl Fn(&ParamVec) -> f64) -> Vec<f64> {
    let mut q = p.clone();
    (0..p.len())
        .map(|i| {
            let orig = q.values()[i];
            q.values_mut()[i] = orig + STEP;
            let up = loss(&q);
            q.values_mut()[i] = orig - STEP;
            let down = loss(&q);
            q.values_mut()[i] = orig;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

pub fn worst_error(analytic: &ParamVec, numeric: &[f64]) -> f64 {
    analytic
        .values()
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

pub fn assert_close(analytic: &ParamVec, numeric: &[f64], what: &str) {
    let worst = worst_error(analytic, numeric);
    assert!(worst < REL_TOL, "{what}: worst relative error {worst:e}");
}

pub fn randomize(p: &mut ParamVec, rng: &mut Rng, scale: f64) {
    for v in p.values_mut() {
        *v = rng.random_range(-scale..scale);
    }
}

pub fn random_classifier(rng: &mut Rng, dropout: bool) -> FeedforwardClassifier {
    let din = rng.random_range(2..6);
    let hidden = rng.random_range(2..6);
    let classes = rng.random_range(2..5);
    let widths = [din, hidden, hidden + 1, classes];
    let drop = if dropout { [0.2, 0.5, 0.3] } else { [0.0; 3] };
    let m = FeedforwardClassifier::new(&widths, &drop, rng).unwrap();
    let mut p = m.params().clone();
    randomize(&mut p, rng, 0.9);
    m.with_params(p).unwrap()
}

/// Worst relative gradient error for one random classifier instance.
pub fn classifier_error(seed: u64, mixed: bool) -> f64 {
    let mut rng = seeded(seed);
    let m = random_classifier(&mut rng, seed.is_multiple_of(2));
    let n = 4;
    let x: Vec<f64> = (0..n * m.input_dim()).map(|_| rng.random()).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..m.classes())).collect();
    let teacher = {
        let mut p = m.params().clone();
        randomize(&mut p, &mut rng, 0.9);
        m.with_params(p).unwrap()
    };
    let lambda = rng.random_range(0.0..1.0);
    let teachers = [teacher];
    let targets = if mixed {
        TargetSpec::Mixed { lambda, teachers: &teachers }
    } else {
        TargetSpec::Hard
    };
    let mask_seed = seed ^ 0xabc;
    let (_, grad) = m.loss_and_grad(&x, &labels, &targets, Some(&mut seeded(mask_seed))).unwrap();
    let numeric = numeric_grad(m.params(), |p| {
        let mm = m.with_params(p.clone()).unwrap();
        mm.loss_and_grad(&x, &labels, &targets, Some(&mut seeded(mask_seed))).unwrap().0
    });
    worst_error(&grad, &numeric)
}

pub fn random_lm(rng: &mut Rng, dropout: f64) -> RecurrentLM {
    let shape = LmShape {
        vocab: rng.random_range(3..8),
        embed: rng.random_range(2..5),
        hidden: vec![rng.random_range(2..5), rng.random_range(2..4)],
    };
    let m = RecurrentLM::new(shape, dropout, 4, rng).unwrap();
    let mut p = m.params().clone();
    randomize(&mut p, rng, 0.7);
    m.with_params(p).unwrap()
}

pub fn random_batch(rng: &mut Rng, vocab: usize) -> LmBatch {
    let b = rng.random_range(1..4);
    let steps = rng.random_range(1..5);
    let windows: Vec<Vec<u32>> = (0..b)
        .map(|_| (0..=steps).map(|_| rng.random_range(0..vocab as u32)).collect())
        .collect();
    let refs: Vec<&[u32]> = windows.iter().map(|w| w.as_slice()).collect();
    LmBatch::from_windows(&refs).unwrap()
}

/// Worst relative gradient error for one random language-model instance.
pub fn lm_error(seed: u64, mixed: bool) -> f64 {
    let mut rng = seeded(seed);
    let m = random_lm(&mut rng, if seed.is_multiple_of(2) { 0.3 } else { 0.0 });
    let batch = random_batch(&mut rng, m.vocab_size());
    let mut state = m.zero_state(batch.batch);
    state.randomize(&mut rng, 0.5);
    let teachers = vec![
        {
            let mut p = m.params().clone();
            randomize(&mut p, &mut rng, 0.7);
            m.with_params(p).unwrap()
        },
        {
            let mut p = m.params().clone();
            randomize(&mut p, &mut rng, 0.7);
            m.with_params(p).unwrap()
        },
    ];
    let lambda = rng.random_range(0.0..1.0);
    let targets = if mixed {
        TargetSpec::Mixed { lambda, teachers: &teachers }
    } else {
        TargetSpec::Hard
    };
    let mut teacher_state = state.clone();
    teacher_state.randomize(&mut rng, 0.5);
    let fresh_teacher_states = || {
        if mixed {
            vec![teacher_state.clone(), teacher_state.clone()]
        } else {
            vec![]
        }
    };
    let mask_seed = seed ^ 0x5eed;
    let run = |mm: &RecurrentLM| {
        let mut ts = fresh_teacher_states();
        mm.loss_and_grad(&batch, &state, &targets, &mut ts, Some(&mut seeded(mask_seed))).unwrap()
    };
    let out = run(&m);
    let numeric = numeric_grad(m.params(), |p| run(&m.with_params(p.clone()).unwrap()).loss);
    worst_error(&out.grad, &numeric)
}

