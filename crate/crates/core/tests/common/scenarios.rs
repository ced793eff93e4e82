//! Experiment configs shipped in `configs/`, loaded for tests.

use std::path::PathBuf;

use fedtune::experiment::ExperimentConfig;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&config_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Ten-round trailing moving averages of `xs`.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    xs.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect()
}
