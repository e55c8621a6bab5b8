//! Monte Carlo estimation of `beta(f)` from trajectories that survive to a
//! horizon, and the tradeoff between the number of trajectories and the
//! horizon.
//!
//! Trajectory `i` of a batch with seed `s` draws its `t`-th uniform from
//! ChaCha8 keyed by `s`, stream `i`, word position `2(t - 1)`. A trajectory is
//! therefore the same whichever worker simulates it.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ergodic::{optimal_t0, SamplingPlan};
use crate::error::{Error, Result};
use crate::markov::{check_state, SubStochasticKernel};
use crate::qprocess::Rates;
use crate::spectral::{fit_log_decay, SpectralTriple};

/// Trajectories simulated per parallel task.
const CHUNK: usize = 1 << 14;

/// Replications below which a sweep's median is not trusted.
pub const MIN_REPLICATIONS: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub seed: u64,
    pub x0: usize,
    pub horizon: usize,
    pub n_trajectories: usize,
    survivors: Vec<u64>,
    /// `survivors.len()` rows of `horizon + 1` states.
    paths: Vec<u32>,
    /// `(trajectory, step)` for every absorbed trajectory; `step` is the
    /// first step spent in the absorbing state.
    absorbed: Vec<(u64, u32)>,
}

impl TrajectoryBatch {
    /// `N_T`.
    pub fn n_survivors(&self) -> usize {
        self.survivors.len()
    }

    pub fn survivor_indices(&self) -> &[u64] {
        &self.survivors
    }

    /// States at steps `0..=T` of the `k`-th survivor.
    pub fn path(&self, k: usize) -> &[u32] {
        let len = self.horizon + 1;
        &self.paths[k * len..(k + 1) * len]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[u32]> {
        self.paths.chunks_exact(self.horizon + 1)
    }

    pub fn absorbed(&self) -> &[(u64, u32)] {
        &self.absorbed
    }
}

/// Cumulative transition probabilities per row; mass past the last entry
/// is absorption.
struct Sampler {
    cdf: Vec<Vec<f64>>,
}

impl Sampler {
    fn new(kernel: &SubStochasticKernel) -> Self {
        let cdf = kernel
            .matrix()
            .rows()
            .map(|row| {
                row.iter()
                    .scan(0.0, |acc, p| {
                        *acc += p;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        Sampler { cdf }
    }

    #[inline]
    fn step(&self, x: usize, u: f64) -> Option<usize> {
        self.cdf[x].iter().position(|&c| u < c)
    }
}

struct Chunk {
    survivors: Vec<u64>,
    paths: Vec<u32>,
    absorbed: Vec<(u64, u32)>,
}

/// Simulates `n` trajectories from `x0` for `horizon` steps.
pub fn simulate(kernel: &SubStochasticKernel, x0: usize, horizon: usize, n: usize, seed: u64) -> Result<TrajectoryBatch> {
    check_state(kernel, x0)?;
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one trajectory".into()));
    }
    if horizon >= u32::MAX as usize {
        return Err(Error::InvalidArgument(format!("horizon {horizon} too large")));
    }
    let sampler = Sampler::new(kernel);
    let base = ChaCha8Rng::seed_from_u64(seed);
    let chunks: Vec<Chunk> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut chunk = Chunk { survivors: Vec::new(), paths: Vec::new(), absorbed: Vec::new() };
            let mut path = Vec::with_capacity(horizon + 1);
            for i in (c * CHUNK..((c + 1) * CHUNK).min(n)).map(|i| i as u64) {
                let mut rng = base.clone();
                rng.set_stream(i);
                path.clear();
                path.push(x0 as u32);
                let mut x = x0;
                let mut died = None;
                for t in 1..=horizon {
                    match sampler.step(x, rng.random::<f64>()) {
                        Some(y) => {
                            x = y;
                            path.push(y as u32);
                        }
                        None => {
                            died = Some(t as u32);
                            break;
                        }
                    }
                }
                match died {
                    Some(t) => chunk.absorbed.push((i, t)),
                    None => {
                        chunk.survivors.push(i);
                        chunk.paths.extend_from_slice(&path);
                    }
                }
            }
            chunk
        })
        .collect();

    let mut batch = TrajectoryBatch {
        seed,
        x0,
        horizon,
        n_trajectories: n,
        survivors: Vec::new(),
        paths: Vec::new(),
        absorbed: Vec::new(),
    };
    for chunk in chunks {
        batch.survivors.extend(chunk.survivors);
        batch.paths.extend(chunk.paths);
        batch.absorbed.extend(chunk.absorbed);
    }
    Ok(batch)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n_survivors: usize,
}

/// Average over survivors of `sum_t w_t f(X_t)` with its standard error.
pub fn estimate_beta(batch: &TrajectoryBatch, f: &[f64], plan: &SamplingPlan) -> Result<Estimate> {
    if plan.horizon() != batch.horizon {
        return Err(Error::InvalidPlan(format!(
            "plan horizon {} differs from the batch horizon {}",
            plan.horizon(),
            batch.horizon
        )));
    }
    if let Some(&s) = batch.paths.iter().find(|&&s| s as usize >= f.len()) {
        return Err(Error::Dimension { expected: s as usize + 1, got: f.len() });
    }
    let n_survivors = batch.n_survivors();
    if n_survivors < 2 {
        return Err(Error::TooFewSurvivors { survivors: n_survivors, needed: 2 });
    }
    let values: Vec<f64> =
        batch.paths().map(|p| plan.atoms().iter().map(|&(t, w)| w * f[p[t] as usize]).sum()).collect();
    // shifted sums: exact for constant samples, stable otherwise
    let shift = values[0];
    let m = n_survivors as f64;
    let (s1, s2) = values.iter().fold((0.0, 0.0), |(a, b), v| (a + (v - shift), b + (v - shift) * (v - shift)));
    let mean_shift = s1 / m;
    let variance = ((s2 - s1 * mean_shift) / (m - 1.0)).max(0.0);
    Ok(Estimate { estimate: shift + mean_shift, stderr: (variance / m).sqrt(), n_survivors })
}

/// Computational budget to optimize over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Trajectories(f64),
    Horizon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffPrediction {
    /// Error exponent: the error scales like `N^-zeta`.
    pub zeta: f64,
    pub t_star: f64,
    pub n_star: f64,
    /// Error up to an unknown constant.
    pub predicted_error: f64,
}

/// Balances the bias `e^{-h T}`, `h = gamma gamma' / (gamma + gamma')`, of the
/// optimally placed sample against the noise `e^{lambda0 T / 2} / sqrt(N)`.
pub fn predict_tradeoff(lambda0: f64, gamma: f64, gamma_prime: f64, budget: Budget) -> Result<TradeoffPrediction> {
    if !(lambda0 >= 0.0 && lambda0.is_finite() && gamma > 0.0 && gamma_prime > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rates must be positive, got lambda0 = {lambda0}, gamma = {gamma}, gamma' = {gamma_prime}"
        )));
    }
    let h = 1.0 / (1.0 / gamma + 1.0 / gamma_prime);
    let zeta = if h.is_infinite() { 0.5 } else { h / (2.0 * h + lambda0) };
    let growth = lambda0 + 2.0 * h;
    Ok(match budget {
        Budget::Trajectories(n) => TradeoffPrediction {
            zeta,
            t_star: n.ln() / growth,
            n_star: n,
            predicted_error: n.powf(-zeta),
        },
        Budget::Horizon(t) => TradeoffPrediction {
            zeta,
            t_star: t,
            n_star: (growth * t).exp(),
            predicted_error: (-h * t).exp(),
        },
    })
}

/// One row of an error-versus-N sweep; medians over replications with at
/// least two survivors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub horizon: usize,
    pub t0: usize,
    pub n_survivors: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub exact: f64,
    pub abs_error: f64,
    pub predicted: f64,
    /// Replications that had fewer than two survivors.
    pub extinct: usize,
}

impl SweepRow {
    /// Every replication died out; the statistics are NaN.
    pub fn flagged(&self) -> bool {
        self.abs_error.is_nan()
    }
}

/// Seed of replication `r` at sweep point `point`.
pub fn replication_seed(seed: u64, point: usize, r: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(point as u64);
    rng.set_word_pos(2 * r as u128);
    rng.next_u64()
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// For each `N`, simulates `replications` batches at `T = round(T*(N))`,
/// estimates `beta(f)` at the optimal sampling time and records the median
/// absolute error.
#[allow(clippy::too_many_arguments)]
pub fn sweep_error_vs_n(
    kernel: &SubStochasticKernel,
    spectral: &SpectralTriple,
    rates: &Rates,
    x0: usize,
    f: &[f64],
    n_list: &[usize],
    replications: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("N list must be strictly increasing".into()));
    }
    if replications == 0 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    if f.len() != kernel.n() {
        return Err(Error::Dimension { expected: kernel.n(), got: f.len() });
    }
    let exact = spectral.beta.expect(f);
    n_list
        .iter()
        .enumerate()
        .map(|(point, &n)| {
            let prediction = predict_tradeoff(rates.lambda0, rates.gamma, rates.gamma_prime, Budget::Trajectories(n as f64))?;
            let horizon = prediction.t_star.round() as usize;
            let t0 = optimal_t0(rates.gamma, rates.gamma_prime, horizon);
            let plan = SamplingPlan::dirac(t0, horizon)?;
            let mut estimates = Vec::new();
            let mut survivors = Vec::new();
            let mut extinct = 0;
            for r in 0..replications {
                let batch = simulate(kernel, x0, horizon, n, replication_seed(seed, point, r))?;
                survivors.push(batch.n_survivors() as f64);
                match estimate_beta(&batch, f, &plan) {
                    Ok(e) => estimates.push(e),
                    Err(Error::TooFewSurvivors { .. }) => extinct += 1,
                    Err(e) => return Err(e),
                }
            }
            Ok(SweepRow {
                n,
                horizon,
                t0,
                n_survivors: median(survivors),
                estimate: median(estimates.iter().map(|e| e.estimate).collect()),
                stderr: median(estimates.iter().map(|e| e.stderr).collect()),
                exact,
                abs_error: median(estimates.iter().map(|e| (e.estimate - exact).abs()).collect()),
                predicted: prediction.predicted_error,
                extinct,
            })
        })
        .collect()
}

/// Least-squares slope of `ln abs_error` against `ln N` over unflagged rows
/// with positive error; `None` with fewer than three such rows.
pub fn loglog_slope(rows: &[SweepRow]) -> Option<f64> {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.abs_error > 0.0 && r.abs_error.is_finite())
        .map(|r| ((r.n as f64).ln(), r.abs_error.ln()))
        .collect();
    fit_log_decay(&points).ok().map(|fit| -fit.rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{conditioned_marginal, survival_vector};
    use crate::models::{t3, w3};

    fn within_4_sigma(count: usize, n: usize, p: f64) -> bool {
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        (count as f64 - n as f64 * p).abs() <= 4.0 * sd
    }

    #[test]
    fn survivor_counts_follow_survival_probability() {
        let one = SubStochasticKernel::from_rows(&[vec![0.5]], 1.0).unwrap();
        let b = simulate(&one, 0, 3, 100_000, 1).unwrap();
        assert!(within_4_sigma(b.n_survivors(), 100_000, 0.125));
        let b = simulate(&t3(), 0, 5, 100_000, 2).unwrap();
        assert!(within_4_sigma(b.n_survivors(), 100_000, 0.7f64.powi(5)));
        let k = w3();
        let b = simulate(&k, 1, 8, 100_000, 3).unwrap();
        assert!(within_4_sigma(b.n_survivors(), 100_000, survival_vector(&k, 8)[1]));
        assert_eq!(b.n_survivors() + b.absorbed().len(), 100_000);
        assert!(b.absorbed().iter().all(|&(_, t)| (1..=8).contains(&t)));
    }

    #[test]
    fn survivor_marginals_match_bridge_law() {
        let k = w3();
        let n = 200_000;
        let b = simulate(&k, 0, 6, n, 4).unwrap();
        let law = conditioned_marginal(&k, 0, 2, 6).unwrap();
        let m = b.n_survivors();
        for y in 0..3 {
            let count = b.paths().filter(|p| p[2] as usize == y).count();
            assert!(within_4_sigma(count, m, law.weights()[y]), "state {y}");
        }
    }

    #[test]
    fn batches_do_not_depend_on_thread_count() {
        let k = w3();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate(&k, 1, 10, 3 * CHUNK + 17, 99).unwrap())
        };
        let a = run(1);
        assert_eq!(a, run(4));
        // a prefix batch reproduces the same trajectories
        let small = simulate(&k, 1, 10, CHUNK + 5, 99).unwrap();
        let cut = small.n_survivors();
        assert_eq!(small.survivor_indices(), &a.survivor_indices()[..cut]);
        assert_ne!(a, simulate(&k, 1, 10, 3 * CHUNK + 17, 100).unwrap());
    }

    #[test]
    fn estimator_edge_cases() {
        let k = w3();
        let b = simulate(&k, 1, 6, 5000, 5).unwrap();
        let plan = SamplingPlan::dirac(3, 6).unwrap();
        let e = estimate_beta(&b, &[0.7; 3], &plan).unwrap();
        assert_eq!((e.estimate, e.stderr), (0.7, 0.0));
        assert!(estimate_beta(&b, &[0.7; 3], &SamplingPlan::dirac(3, 7).unwrap()).is_err());
        let one = SubStochasticKernel::from_rows(&[vec![0.01]], 1.0).unwrap();
        let dead = simulate(&one, 0, 10, 100, 6).unwrap();
        assert!(matches!(
            estimate_beta(&dead, &[1.0], &SamplingPlan::dirac(0, 10).unwrap()),
            Err(Error::TooFewSurvivors { .. })
        ));
    }

    #[test]
    fn symmetric_estimate_is_one_half() {
        let b = simulate(&t3(), 0, 12, 400_000, 8).unwrap();
        let e = estimate_beta(&b, &[1.0, 0.0], &SamplingPlan::dirac(10, 12).unwrap()).unwrap();
        assert!((e.estimate - 0.5).abs() <= 4.0 * e.stderr);
    }

    #[test]
    fn tradeoff_examples() {
        let p = predict_tradeoff(1.0, 1.0, 1.0, Budget::Trajectories(1e4)).unwrap();
        assert!((p.zeta - 0.25).abs() < 1e-15);
        let p = predict_tradeoff(1e-12, 0.5, 2.0, Budget::Horizon(3.0)).unwrap();
        assert!((p.zeta - 0.5).abs() < 1e-9);
        let p = predict_tradeoff(0.2, 0.7, 0.7, Budget::Trajectories(1e6)).unwrap();
        assert!((p.t_star - 1e6f64.ln() / 0.9).abs() < 1e-12);
        assert!((p.predicted_error - 1e6f64.powf(-p.zeta)).abs() < 1e-15);
        let q = predict_tradeoff(0.2, 0.7, 0.7, Budget::Horizon(p.t_star)).unwrap();
        assert!((q.n_star - 1e6).abs() < 1e-6);
        assert!(predict_tradeoff(0.1, 0.0, 1.0, Budget::Horizon(1.0)).is_err());
    }

    #[test]
    fn single_state_sweep_has_zero_error() {
        let one = SubStochasticKernel::from_rows(&[vec![0.9]], 1.0).unwrap();
        let s = crate::spectral::compute_spectral(&one, Default::default()).unwrap();
        let rates = Rates { lambda0: s.lambda0(), gamma: f64::INFINITY, gamma_prime: f64::INFINITY };
        let rows = sweep_error_vs_n(&one, &s, &rates, 0, &[2.5], &[100, 1000], 4, 1).unwrap();
        assert!(rows.iter().all(|r| r.abs_error == 0.0 && r.horizon == 0));
    }

    #[test]
    fn median_and_seeds() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(vec![]).is_nan());
        assert_ne!(replication_seed(1, 0, 0), replication_seed(1, 0, 1));
        assert_ne!(replication_seed(1, 0, 0), replication_seed(1, 1, 0));
        assert_eq!(replication_seed(1, 2, 3), replication_seed(1, 2, 3));
    }
}
