//! Empirical (epsilon, delta) estimation for pairs of language models trained
//! on adjacent user sets.
//!
//! Sequences are sampled from the first model, the likelihood ratio
//! `c(s) = P(s | theta) / P(s | theta')` is formed for each, and the upper tail
//! of `c` is fitted with a Pareto law `P(c > x) = C x^-alpha`. Then
//! `P(c > e^eps) <= delta` for `eps = ln(C / delta) / alpha`.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::nn::{Network, RecurrentLM};
use crate::rng::{stream, Rng};
use crate::{Error, Result};

/// 5% critical value of the Lilliefors test for exponentiality (large k).
pub const LILLIEFORS_CRITICAL: f64 = 1.08;

const SAMPLE_CHUNK: usize = 64;

/// Likelihood ratios of `n` sequences of length `len` drawn from `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioSample {
    /// `ln c(s)` in sampling order.
    pub log_c: Vec<f64>,
    /// `c(s)` in sampling order.
    pub c: Vec<f64>,
    pub len: usize,
}

impl RatioSample {
    pub fn from_values(c: Vec<f64>) -> Result<Self> {
        if let Some(bad) = c.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Numeric(format!("ratio {bad} is not finite and positive")));
        }
        Ok(RatioSample { log_c: c.iter().map(|v| v.ln()).collect(), c, len: 0 })
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    /// Values sorted in decreasing order.
    pub fn descending(&self) -> Vec<f64> {
        let mut v = self.c.clone();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }
}

fn check_pair(theta: &RecurrentLM, theta_prime: &RecurrentLM) -> Result<()> {
    if theta.vocab_size() != theta_prime.vocab_size() || !theta.params().same_layout(theta_prime.params()) {
        return Err(Error::Input("the two models must share vocabulary and architecture".into()));
    }
    Ok(())
}

/// Sample `n` sequences of `len` tokens from `theta` and score them under both
/// models. Work is split into fixed chunks with their own generators, so the
/// result does not depend on `exec`.
pub fn sample_ratios(
    theta: &RecurrentLM,
    theta_prime: &RecurrentLM,
    n: usize,
    len: usize,
    rng: &mut Rng,
    exec: Execution,
) -> Result<RatioSample> {
    check_pair(theta, theta_prime)?;
    if n < 100 {
        return Err(Error::Input(format!("{n} samples are too few, need at least 100")));
    }
    if len == 0 {
        return Err(Error::Input("sequence length must be >= 1".into()));
    }
    let seed = rng.random::<u64>();
    let chunks = n.div_ceil(SAMPLE_CHUNK);
    let parts = exec.map_range(chunks, |j| -> Result<Vec<f64>> {
        let m = SAMPLE_CHUNK.min(n - j * SAMPLE_CHUNK);
        let mut rngs: Vec<Rng> = (0..m).map(|i| stream(seed, (j * SAMPLE_CHUNK + i) as u64)).collect();
        let seqs: Vec<u32> = theta.sample_batch(len, &mut rngs)?.concat();
        let a = theta.score_batch(&seqs, m)?;
        let b = theta_prime.score_batch(&seqs, m)?;
        Ok(a.iter().zip(&b).map(|(x, y)| x - y).collect())
    });
    let mut log_c = Vec::with_capacity(n);
    for p in parts {
        log_c.extend(p?);
    }
    let c: Vec<f64> = log_c.iter().map(|l| l.exp()).collect();
    if let Some(bad) = c.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Numeric(format!("likelihood ratio {bad} overflowed")));
    }
    Ok(RatioSample { log_c, c, len })
}

/// Tail size used for `n` samples: `2 floor(sqrt(n))`.
pub fn tail_size(n: usize) -> usize {
    2 * n.isqrt()
}

/// Top `k` values in decreasing order.
fn top_k(values: &[f64], k: usize) -> Result<Vec<f64>> {
    if k < 2 || k >= values.len() {
        return Err(Error::Input(format!("tail size {k} invalid for {} samples", values.len())));
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v.truncate(k);
    if !(v[k - 1] > 0.0) {
        return Err(Error::DegenerateTail(format!("threshold order statistic {} is not positive", v[k - 1])));
    }
    Ok(v)
}

fn log_excesses(top: &[f64]) -> Vec<f64> {
    let x0 = top[top.len() - 1];
    top.iter().map(|&c| (c / x0).ln()).collect()
}

/// Hill's estimator of the tail index from the `k` largest values.
pub fn hill_estimate(values: &[f64], k: usize) -> Result<f64> {
    let top = top_k(values, k)?;
    let denom: f64 = log_excesses(&top).iter().sum();
    if denom <= 0.0 {
        return Err(Error::DegenerateTail("the top order statistics are all equal".into()));
    }
    Ok(k as f64 / denom)
}

/// Kolmogorov-Smirnov distance, scaled by `sqrt(k)`, between the normalized
/// sample `r / mean(r)` and the unit exponential law.
pub fn exponential_ks_statistic(r: &[f64]) -> Result<f64> {
    let k = r.len();
    if k == 0 {
        return Err(Error::Input("empty sample".into()));
    }
    let mean = r.iter().sum::<f64>() / k as f64;
    if !(mean > 0.0) {
        return Err(Error::DegenerateTail("residuals have zero mean".into()));
    }
    let mut x: Vec<f64> = r.iter().map(|v| v / mean).collect();
    x.sort_by(f64::total_cmp);
    let kf = k as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &xi)| {
            let f = 1.0 - (-xi).exp();
            ((i + 1) as f64 / kf - f).max(f - i as f64 / kf)
        })
        .fold(0.0, f64::max);
    Ok(kf.sqrt() * d)
}

/// Lilliefors test that the log-excesses of the top `k` values over the
/// k-th are exponential. Returns the statistic and whether it is accepted at
/// [`LILLIEFORS_CRITICAL`].
pub fn lilliefors_test(values: &[f64], k: usize) -> Result<(f64, bool)> {
    if k < 10 {
        return Err(Error::Input(format!("tail size {k} too small for the goodness-of-fit test")));
    }
    let top = top_k(values, k)?;
    let stat = exponential_ks_statistic(&log_excesses(&top))?;
    Ok((stat, stat <= LILLIEFORS_CRITICAL))
}

/// `C = (k / n) x0^alpha`, with `x0` the k-th largest value.
pub fn c_estimate(values: &[f64], k: usize, alpha: f64) -> Result<f64> {
    let top = top_k(values, k)?;
    Ok(k as f64 / values.len() as f64 * top[k - 1].powf(alpha))
}

/// `eps = ln(C / delta) / alpha`, defined for `0 < delta < C`.
pub fn epsilon_for_delta(alpha: f64, c: f64, delta: f64) -> Result<f64> {
    if !(alpha > 0.0 && c > 0.0) {
        return Err(Error::Domain(format!("alpha {alpha} and C {c} must be positive")));
    }
    if !(delta > 0.0 && delta < c) {
        return Err(Error::Domain(format!("delta {delta} outside (0, C = {c})")));
    }
    Ok((c / delta).ln() / alpha)
}

/// Pareto fit of the upper tail of one ratio sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub k: usize,
    pub n: usize,
    pub x0: f64,
    pub alpha_hat: f64,
    #[serde(rename = "C_hat")]
    pub c_hat: f64,
    pub ks_statistic: f64,
    pub accepted: bool,
}

impl TailFit {
    /// Fitted `P(c > x)` for `x > x0`.
    pub fn tail_probability(&self, x: f64) -> f64 {
        self.c_hat * x.powf(-self.alpha_hat)
    }

    /// Epsilon at `delta`; zero when the fitted tail is already below `delta`
    /// at `x = 1`, i.e. `delta >= C`.
    pub fn epsilon(&self, delta: f64) -> Result<f64> {
        if delta >= self.c_hat {
            return Ok(0.0);
        }
        epsilon_for_delta(self.alpha_hat, self.c_hat, delta)
    }
}

pub fn fit_tail(values: &[f64]) -> Result<TailFit> {
    let n = values.len();
    let k = tail_size(n);
    let top = top_k(values, k)?;
    let alpha_hat = hill_estimate(values, k)?;
    let (ks_statistic, accepted) = lilliefors_test(values, k)?;
    Ok(TailFit { k, n, x0: top[k - 1], alpha_hat, c_hat: c_estimate(values, k, alpha_hat)?, ks_statistic, accepted })
}

/// Outcome for one adjacent pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub pair: usize,
    #[serde(flatten)]
    pub fit: Option<TailFit>,
    /// Why no fit exists, e.g. identical models.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degenerate: Option<String>,
}

impl PairReport {
    pub fn accepted(&self) -> bool {
        self.fit.is_some_and(|f| f.accepted)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRow {
    pub delta: f64,
    /// Largest epsilon over accepted pairs; absent when no pair is accepted.
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpReport {
    pub pairs: Vec<PairReport>,
    pub table: Vec<EpsilonRow>,
    pub accepted_pairs: usize,
    /// True when no pair passed the goodness-of-fit test.
    pub no_guarantee: bool,
}

/// Fit every sample and take, per delta, the largest epsilon among pairs whose
/// tail fit is accepted.
pub fn dp_report_from_samples(samples: &[RatioSample], deltas: &[f64]) -> Result<DpReport> {
    if samples.is_empty() {
        return Err(Error::Input("at least one pair is required".into()));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
        return Err(Error::Domain(format!("delta {d} outside (0, 1)")));
    }
    let mut pairs = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        match fit_tail(&s.c) {
            Ok(fit) => pairs.push(PairReport { pair: i, fit: Some(fit), degenerate: None }),
            Err(Error::DegenerateTail(why)) => pairs.push(PairReport { pair: i, fit: None, degenerate: Some(why) }),
            Err(e) => return Err(e),
        }
    }
    let accepted: Vec<TailFit> = pairs.iter().filter(|p| p.accepted()).filter_map(|p| p.fit).collect();
    let mut table = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let mut eps: Option<f64> = None;
        for f in &accepted {
            let e = f.epsilon(delta)?;
            eps = Some(eps.map_or(e, |m: f64| m.max(e)));
        }
        table.push(EpsilonRow { delta, epsilon: eps });
    }
    Ok(DpReport { accepted_pairs: accepted.len(), no_guarantee: accepted.is_empty(), pairs, table })
}

/// Full pipeline over model pairs, one independent generator per pair.
pub fn dp_report(
    pairs: &[(RecurrentLM, RecurrentLM)],
    deltas: &[f64],
    n: usize,
    len: usize,
    seed: u64,
    exec: Execution,
) -> Result<(DpReport, Vec<RatioSample>)> {
    let mut samples = Vec::with_capacity(pairs.len());
    for (i, (a, b)) in pairs.iter().enumerate() {
        samples.push(sample_ratios(a, b, n, len, &mut stream(seed, i as u64), exec)?);
    }
    Ok((dp_report_from_samples(&samples, deltas)?, samples))
}

/// `ln c(s)` per sample as CSV.
pub fn log_c_csv(sample: &RatioSample) -> String {
    let mut out = String::from("index,log_c\n");
    for (i, v) in sample.log_c.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    out
}

pub fn write_log_c_csv(sample: &RatioSample, path: &Path) -> Result<()> {
    std::fs::write(path, log_c_csv(sample))?;
    Ok(())
}

/// Result of checking the privacy inequality by exhaustive enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BruteForceCheck {
    pub sequences: usize,
    /// `P(c(s) > e^eps | theta)`, summed exactly.
    pub delta_exact: f64,
    pub subsets_tested: usize,
    pub violations: usize,
}

impl BruteForceCheck {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Enumerate all `V^len` sequences, compute the exact tail mass
/// `delta = P(c > e^eps | theta)`, and verify
/// `P(S | theta) <= e^eps P(S | theta') + delta` for the worst-case set
/// `{c > e^eps}` and `subsets` random sets.
pub fn verify_dp_bound_bruteforce(
    theta: &RecurrentLM,
    theta_prime: &RecurrentLM,
    epsilon: f64,
    len: usize,
    subsets: usize,
    rng: &mut Rng,
) -> Result<BruteForceCheck> {
    const LIMIT: usize = 100_000;
    check_pair(theta, theta_prime)?;
    let v = theta.vocab_size();
    let total = (0..len).try_fold(1usize, |acc, _| acc.checked_mul(v).filter(|&t| t <= LIMIT));
    let Some(total) = total.filter(|_| len > 0) else {
        return Err(Error::Size(format!("{v}^{len} sequences exceed the enumeration limit of {LIMIT}")));
    };
    let mut seqs = Vec::with_capacity(total * len);
    for idx in 0..total {
        let mut x = idx;
        let start = seqs.len();
        seqs.resize(start + len, 0);
        for t in (0..len).rev() {
            seqs[start + t] = (x % v) as u32;
            x /= v;
        }
    }
    let p: Vec<f64> = theta.score_batch(&seqs, total)?.into_iter().map(f64::exp).collect();
    let q: Vec<f64> = theta_prime.score_batch(&seqs, total)?.into_iter().map(f64::exp).collect();
    let bound = epsilon.exp();
    let tail: Vec<bool> = p.iter().zip(&q).map(|(a, b)| a / b > bound).collect();
    let delta_exact: f64 = p.iter().zip(&tail).filter(|(_, t)| **t).map(|(a, _)| a).sum();
    let holds = |member: &dyn Fn(usize) -> bool| {
        let (mut ps, mut qs) = (0.0, 0.0);
        for i in (0..total).filter(|&i| member(i)) {
            ps += p[i];
            qs += q[i];
        }
        ps <= bound * qs + delta_exact + 1e-12
    };
    let mut violations = usize::from(!holds(&|i| tail[i]));
    for _ in 0..subsets {
        let members: Vec<bool> = (0..total).map(|_| rng.random::<bool>()).collect();
        if !holds(&|i| members[i]) {
            violations += 1;
        }
    }
    Ok(BruteForceCheck { sequences: total, delta_exact, subsets_tested: subsets + 1, violations })
}
