//! Kernel generators: population models that satisfy the uniform
//! conditions, truncations that degrade them, and seeded random kernels.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{parse_kernel, toml_error};
use crate::linalg::Matrix;
use crate::markov::{conditioned_evolve, uniformize, Distribution, Generator, SubStochasticKernel};

/// Largest state count a model spec may request.
pub const MAX_STATES: usize = 10_000;

/// Golden three-state logistic birth-death kernel.
pub const W3_KERNEL: &str = include_str!("../data/w3.kernel");

/// Symmetric two-state kernel with constant survival 0.7.
pub const T3_KERNEL: &str = include_str!("../data/t3.kernel");

pub fn w3() -> SubStochasticKernel {
    parse_kernel(W3_KERNEL).expect("golden W3 kernel is valid")
}

pub fn t3() -> SubStochasticKernel {
    parse_kernel(T3_KERNEL).expect("golden T3 kernel is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    BirthDeath,
    LogisticBd,
    RandomSubstochastic,
    LinearBdTruncated,
    OuDiscretized,
}

impl ModelKind {
    fn parameters(self) -> &'static [(&'static str, f64)] {
        match self {
            ModelKind::BirthDeath => &[("birth", 0.3), ("death", 0.3)],
            ModelKind::LogisticBd => &[
                ("birth", 0.4),
                ("birth_slope", 0.1),
                ("death", 0.3),
                ("competition", 0.1),
                ("catastrophe", 0.1),
            ],
            ModelKind::RandomSubstochastic => &[("min_absorb", 0.05), ("max_absorb", 0.5)],
            ModelKind::LinearBdTruncated => &[("birth_rate", 1.0), ("death_rate", 1.2)],
            ModelKind::OuDiscretized => &[("kappa", 1.0), ("sigma", 1.0), ("dx", 0.1)],
        }
    }
}

/// Model description; the config file schema is the TOML form of this
/// struct (`kind`, `n`, `seed`, `[params]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, n: usize) -> Self {
        ModelSpec { kind, n, seed: None, params: BTreeMap::new() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| toml_error(text, &e))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("model spec serializes")
    }

    /// Parameter values with defaults filled in; unknown names are rejected.
    pub fn resolved_params(&self) -> Result<BTreeMap<&'static str, f64>> {
        let known = self.kind.parameters();
        if let Some(name) = self.params.keys().find(|k| !known.iter().any(|(n, _)| n == k)) {
            return Err(Error::InvalidModel(format!("unknown parameter `{name}` for {:?}", self.kind)));
        }
        let mut out = BTreeMap::new();
        for &(name, default) in known {
            let v = self.params.get(name).copied().unwrap_or(default);
            if !v.is_finite() {
                return Err(Error::InvalidModel(format!("parameter `{name}` must be finite")));
            }
            out.insert(name, v);
        }
        Ok(out)
    }
}

/// Builds the kernel described by `spec`.
pub fn build(spec: &ModelSpec) -> Result<SubStochasticKernel> {
    if spec.n == 0 || spec.n > MAX_STATES {
        return Err(Error::InvalidModel(format!("n must be in 1..={MAX_STATES}, got {}", spec.n)));
    }
    let p = spec.resolved_params()?;
    match spec.kind {
        ModelKind::BirthDeath => {
            nonnegative(&p, &["birth", "death"])?;
            let (b, d) = (p["birth"], p["death"]);
            tridiagonal(spec.n, |_| b, |_| d, |_| 0.0)
        }
        ModelKind::LogisticBd => {
            nonnegative(&p, &["birth", "birth_slope", "death", "competition", "catastrophe"])?;
            let (b, bs, d, c, k) = (p["birth"], p["birth_slope"], p["death"], p["competition"], p["catastrophe"]);
            tridiagonal(
                spec.n,
                |i| (b - bs * (i - 1) as f64).max(0.0),
                |i| d + c * i.saturating_sub(2) as f64,
                |i| if i >= 2 { k } else { 0.0 },
            )
        }
        ModelKind::RandomSubstochastic => random_substochastic(spec, &p),
        ModelKind::LinearBdTruncated => {
            nonnegative(&p, &["birth_rate", "death_rate"])?;
            positive(&p, &["death_rate"])?;
            linear_bd(spec.n, p["birth_rate"], p["death_rate"])
        }
        ModelKind::OuDiscretized => {
            nonnegative(&p, &["kappa"])?;
            positive(&p, &["sigma", "dx"])?;
            ou(spec.n, p["kappa"], p["sigma"], p["dx"])
        }
    }
}

fn nonnegative(p: &BTreeMap<&'static str, f64>, names: &[&str]) -> Result<()> {
    match names.iter().find(|n| p[*n] < 0.0) {
        Some(n) => Err(Error::InvalidModel(format!("parameter `{n}` must be nonnegative, got {}", p[*n]))),
        None => Ok(()),
    }
}

fn positive(p: &BTreeMap<&'static str, f64>, names: &[&str]) -> Result<()> {
    match names.iter().find(|n| p[*n] <= 0.0) {
        Some(n) => Err(Error::InvalidModel(format!("parameter `{n}` must be positive, got {}", p[*n]))),
        None => Ok(()),
    }
}

/// Discrete-time population chain on sizes `1..=n` (state `i - 1` holds `i`
/// individuals). Births are suppressed at `n`, a death from size 1 is
/// absorption, and `kill(i)` sends size `i` straight to extinction.
fn tridiagonal(
    n: usize,
    birth: impl Fn(usize) -> f64,
    death: impl Fn(usize) -> f64,
    kill: impl Fn(usize) -> f64,
) -> Result<SubStochasticKernel> {
    let mut m = Matrix::zeros(n);
    for i in 1..=n {
        let up = if i < n { birth(i) } else { 0.0 };
        let down = death(i);
        let mut stay = 1.0 - up - down - kill(i);
        if stay < 0.0 {
            if stay < -1e-12 {
                return Err(Error::InvalidModel(format!(
                    "move probabilities out of size {i} exceed 1 (birth {up}, death {down}, kill {})",
                    kill(i)
                )));
            }
            stay = 0.0;
        }
        let x = i - 1;
        m.set(x, x, stay);
        if i < n {
            m.set(x, x + 1, up);
        }
        if i > 1 {
            m.set(x, x - 1, down);
        }
    }
    SubStochasticKernel::new(m, 1.0).map_err(|e| Error::InvalidModel(e.to_string()))
}

fn random_substochastic(spec: &ModelSpec, p: &BTreeMap<&'static str, f64>) -> Result<SubStochasticKernel> {
    let seed = spec.seed.ok_or_else(|| Error::InvalidModel("random_substochastic needs a seed".into()))?;
    let (lo, hi) = (p["min_absorb"], p["max_absorb"]);
    if !(0.0 < lo && lo <= hi && hi < 1.0) {
        return Err(Error::InvalidModel(format!("need 0 < min_absorb <= max_absorb < 1, got {lo}, {hi}")));
    }
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Matrix::zeros(n);
    for x in 0..n {
        // 1 - U[0,1) keeps every entry strictly positive
        let raw: Vec<f64> = (0..n).map(|_| 1.0 - rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let row_sum = 1.0 - (lo + (hi - lo) * rng.random::<f64>());
        for (y, r) in raw.iter().enumerate() {
            m.set(x, y, r / total * row_sum);
        }
    }
    SubStochasticKernel::new(m, 1.0)
}

/// Per-capita birth and death rates on sizes `1..=n`, uniformized at the
/// largest exit rate.
fn linear_bd(n: usize, birth: f64, death: f64) -> Result<SubStochasticKernel> {
    let mut g = Matrix::zeros(n);
    for i in 1..=n {
        let x = i - 1;
        let up = if i < n { birth * i as f64 } else { 0.0 };
        let down = death * i as f64;
        if i < n {
            g.set(x, x + 1, up);
        }
        if i > 1 {
            g.set(x, x - 1, down);
        }
        g.set(x, x, -(up + down));
    }
    let generator = Generator::new(g)?;
    uniformize(&generator, generator.max_exit_rate())?.into_kernel()
}

/// Upwind finite differences for `dX = -kappa X dt + sigma dW` on the grid
/// `(i - (n-1)/2) dx`, killed on leaving the grid.
fn ou(n: usize, kappa: f64, sigma: f64, dx: f64) -> Result<SubStochasticKernel> {
    let diffusion = sigma * sigma / (2.0 * dx * dx);
    let mut g = Matrix::zeros(n);
    for x in 0..n {
        let pos = (x as f64 - (n as f64 - 1.0) / 2.0) * dx;
        let drift = -kappa * pos;
        let right = diffusion + drift.max(0.0) / dx;
        let left = diffusion + (-drift).max(0.0) / dx;
        if x + 1 < n {
            g.set(x, x + 1, right);
        }
        if x > 0 {
            g.set(x, x - 1, left);
        }
        g.set(x, x, -(left + right));
    }
    let generator = Generator::new(g)?;
    uniformize(&generator, generator.max_exit_rate())?.into_kernel()
}

/// `c1(t0) = sum_y min_x P_x(X_t0 = y | t0 < tau)` for `t0 = 1..=t0_max`.
pub fn condition_quality(kernel: &SubStochasticKernel, t0_max: usize) -> Result<Vec<(usize, f64)>> {
    let n = kernel.n();
    let mut flows = (0..n)
        .map(|x| crate::markov::ConditionedFlow::new(kernel, &Distribution::dirac(n, x)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(t0_max);
    for t0 in 1..=t0_max {
        let mut floor = vec![f64::INFINITY; n];
        for flow in flows.iter_mut() {
            let state = flow.advance()?;
            floor.iter_mut().zip(state.law.weights()).for_each(|(f, w)| *f = f.min(*w));
        }
        out.push((t0, floor.iter().sum()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionRow {
    pub n: usize,
    pub t0: usize,
    pub c1: f64,
}

/// Best `c1` over `t0 <= t0_max` for each truncation size in `sizes`.
pub fn truncation_sweep(template: &ModelSpec, sizes: &[usize], t0_max: usize) -> Result<Vec<ConditionRow>> {
    sizes
        .iter()
        .map(|&n| {
            let kernel = build(&ModelSpec { n, ..template.clone() })?;
            let (t0, c1) = condition_quality(&kernel, t0_max)?
                .into_iter()
                .fold((0, f64::NEG_INFINITY), |best, row| if row.1 > best.1 { row } else { best });
            Ok(ConditionRow { n, t0, c1 })
        })
        .collect()
}

/// Conditioned law used by the quality table; exposed for diagnostics.
pub fn conditioned_row(kernel: &SubStochasticKernel, x: usize, t0: usize) -> Result<Distribution> {
    conditioned_evolve(kernel, &Distribution::dirac(kernel.n(), x), t0)
}
