#![allow(dead_code)]

use nalgebra::DMatrix;
use qsd_core::models::build;
use qsd_core::{ModelKind, ModelSpec, SubStochasticKernel};

pub fn random_kernels(count: u64) -> Vec<SubStochasticKernel> {
    (0..count)
        .map(|seed| {
            let n = 1 + (seed % 8) as usize;
            build(&ModelSpec::new(ModelKind::RandomSubstochastic, n).with_seed(seed)).unwrap()
        })
        .collect()
}

fn dense(k: &SubStochasticKernel) -> DMatrix<f64> {
    let n = k.n();
    DMatrix::from_fn(n, n, |i, j| k.get(i, j))
}

/// Unit null vector of `m` from its smallest singular value.
fn null_vector(m: DMatrix<f64>) -> Vec<f64> {
    let svd = m.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let (idx, _) = svd.singular_values.iter().enumerate().fold((0, f64::INFINITY), |b, (i, &s)| if s < b.1 { (i, s) } else { b });
    let v: Vec<f64> = v_t.row(idx).iter().copied().collect();
    let sign = if v.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    v.iter().map(|x| x * sign).collect()
}

/// `(rho, alpha, eta)` from a dense eigen solve: `rho` is the largest real
/// eigenvalue, the vectors are null vectors of `K - rho I` and its transpose.
pub fn dense_perron(k: &SubStochasticKernel) -> (f64, Vec<f64>, Vec<f64>) {
    let m = dense(k);
    let n = k.n();
    let rho = m
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() < 1e-9)
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let shifted = &m - DMatrix::identity(n, n) * rho;
    let left = null_vector(shifted.transpose());
    let right = null_vector(shifted);
    let total: f64 = left.iter().sum();
    let alpha: Vec<f64> = left.iter().map(|v| v / total).collect();
    let pairing: f64 = alpha.iter().zip(&right).map(|(a, h)| a * h).sum();
    let eta = right.iter().map(|h| h / pairing).collect();
    (rho, alpha, eta)
}

/// Calls `visit(path, weight)` for every path of `horizon` steps from `x`
/// that stays among the survivor states.
pub fn enumerate_paths(k: &SubStochasticKernel, x: usize, horizon: usize, mut visit: impl FnMut(&[usize], f64)) {
    fn go(k: &SubStochasticKernel, path: &mut Vec<usize>, w: f64, left: usize, visit: &mut dyn FnMut(&[usize], f64)) {
        if left == 0 {
            visit(path, w);
            return;
        }
        let x = *path.last().unwrap();
        for y in 0..k.n() {
            let p = k.get(x, y);
            if p > 0.0 {
                path.push(y);
                go(k, path, w * p, left - 1, visit);
                path.pop();
            }
        }
    }
    let mut path = vec![x];
    go(k, &mut path, 1.0, horizon, &mut visit);
}

/// `P_x(X_t = . | T < tau)` by enumeration.
pub fn enumerated_bridge(k: &SubStochasticKernel, x: usize, t: usize, horizon: usize) -> Vec<f64> {
    let mut law = vec![0.0; k.n()];
    enumerate_paths(k, x, horizon, |p, w| law[p[t]] += w);
    let total: f64 = law.iter().sum();
    law.iter().map(|v| v / total).collect()
}

pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
