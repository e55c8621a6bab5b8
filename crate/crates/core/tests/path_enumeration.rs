mod common;

use common::{enumerate_paths, enumerated_bridge, random_kernels, tv};
use qsd_core::converse::dobrushin_coeff;
use qsd_core::ergodic::{conditional_functional, SamplingPlan};
use qsd_core::markov::log_survival_probability;
use qsd_core::models::w3;
use qsd_core::{conditioned_marginal, survival_vector, Distribution};

#[test]
fn bridge_marginals_match_enumeration() {
    let k = w3();
    for x in 0..3 {
        for t in 0..=6 {
            let law = conditioned_marginal(&k, x, t, 6).unwrap();
            let oracle = enumerated_bridge(&k, x, t, 6);
            for y in 0..3 {
                assert!((law.weights()[y] - oracle[y]).abs() < 1e-14, "x={x} t={t}");
            }
        }
    }
}

#[test]
fn survival_matches_enumeration() {
    for k in std::iter::once(w3()).chain(random_kernels(6)) {
        for x in 0..k.n() {
            let mut total = 0.0;
            enumerate_paths(&k, x, 5, |_, w| total += w);
            assert!((survival_vector(&k, 5)[x] - total).abs() < 1e-14);
            let ln = log_survival_probability(&k, &Distribution::dirac(k.n(), x), 5).unwrap();
            assert!((ln.exp() - total).abs() < 1e-14);
        }
    }
}

#[test]
fn dobrushin_coefficient_matches_enumeration() {
    let k = w3();
    let rows: Vec<Vec<f64>> = (0..3).map(|x| enumerated_bridge(&k, x, 2, 10)).collect();
    let mut oracle = 0.0f64;
    for x in 0..3 {
        for y in 0..3 {
            oracle = oracle.max(tv(&rows[x], &rows[y]));
        }
    }
    assert!((dobrushin_coeff(&k, 2, 10).unwrap() - oracle).abs() < 1e-14);
}

#[test]
fn conditional_functional_matches_enumeration() {
    let k = w3();
    let f = [0.5, -1.0, 2.0];
    let plans = [
        SamplingPlan::uniform(6).unwrap(),
        SamplingPlan::dirac(4, 6).unwrap(),
        SamplingPlan::custom(6, vec![(0, 0.25), (3, 0.25), (6, 0.5)]).unwrap(),
    ];
    for plan in &plans {
        for x in 0..3 {
            let (mut num, mut den) = (0.0, 0.0);
            enumerate_paths(&k, x, 6, |p, w| {
                num += w * plan.atoms().iter().map(|&(t, a)| a * f[p[t]]).sum::<f64>();
                den += w;
            });
            let value = conditional_functional(&k, x, &f, plan).unwrap();
            assert!((value - num / den).abs() < 1e-13, "{plan:?} x={x}");
        }
    }
}
