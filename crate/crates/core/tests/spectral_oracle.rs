mod common;

use common::{dense_perron, random_kernels};
use qsd_core::models::w3;
use qsd_core::spectral::eigen_residual;
use qsd_core::{compute_spectral, conditioned_evolve, SpectralOptions, SubStochasticKernel};

// Dense eigen solve of the pinned three-state kernel.
const W3_RHO: f64 = 0.8546774823301284;
const W3_ALPHA: [f64; 3] = [0.22661258834935763, 0.4189896665664516, 0.35439774508419075];
const W3_ETA: [f64; 3] = [0.7342882911061458, 1.0182329515381234, 1.1483480088429943];

fn kernels() -> Vec<SubStochasticKernel> {
    let mut ks = vec![w3()];
    ks.extend(random_kernels(20));
    ks
}

#[test]
fn frozen_w3_values() {
    let (rho, alpha, eta) = dense_perron(&w3());
    let s = compute_spectral(&w3(), SpectralOptions::default()).unwrap();
    assert!((rho - W3_RHO).abs() < 1e-12);
    assert!((s.rho - W3_RHO).abs() < 1e-12);
    for i in 0..3 {
        assert!((alpha[i] - W3_ALPHA[i]).abs() < 1e-12);
        assert!((eta[i] - W3_ETA[i]).abs() < 1e-12);
        assert!((s.alpha.weights()[i] - W3_ALPHA[i]).abs() < 1e-12);
        assert!((s.eta[i] - W3_ETA[i]).abs() < 1e-12);
    }
}

#[test]
fn power_iteration_matches_dense_eigensolve() {
    for k in kernels() {
        let s = compute_spectral(&k, SpectralOptions::default()).unwrap();
        let (rho, alpha, eta) = dense_perron(&k);
        assert!((s.rho - rho).abs() < 1e-10);
        for i in 0..k.n() {
            assert!((s.alpha.weights()[i] - alpha[i]).abs() < 1e-10);
            assert!((s.eta[i] - eta[i]).abs() < 1e-10);
            assert_eq!(s.beta.weights()[i], s.eta[i] * s.alpha.weights()[i]);
        }
        let pairing: f64 = s.alpha.weights().iter().zip(&s.eta).map(|(a, h)| a * h).sum();
        assert!((pairing - 1.0).abs() < 1e-12);
        assert!(eigen_residual(k.matrix(), s.alpha.weights(), &s.eta, s.rho) <= 1e-12);
    }
}

#[test]
fn qsd_is_a_fixed_point_with_geometric_survival() {
    for k in kernels() {
        let s = compute_spectral(&k, SpectralOptions::default()).unwrap();
        let mut mass = s.alpha.weights().to_vec();
        for t in 1..=100 {
            mass = k.matrix().apply_left(&mass);
            let survival: f64 = mass.iter().sum();
            let expected = s.rho.powi(t);
            assert!((survival - expected).abs() <= 1e-10 * expected, "t={t}");
        }
        let evolved = conditioned_evolve(&k, &s.alpha, 100).unwrap();
        for (a, b) in evolved.weights().iter().zip(s.alpha.weights()) {
            assert!((a - b).abs() <= 1e-10 * b);
        }
    }
}
