use hardy_heat::constants::*;
use hardy_heat::special::{gamma, GL20};
use hardy_heat::stable::StableKernel;
use proptest::prelude::*;
use std::f64::consts::PI;

// frozen from a 30-digit mpmath evaluation of the Gamma-function formulas
const KSTAR_1_HALF: f64 = 0.139_999_677_452_482_630_866;
const KSTAR_2_1: f64 = 0.228_473_290_522_231_812_687;
const KAPPA_01_1_HALF: f64 = 0.093_155_575_103_745_686_229;
const KPRIME_01_1_HALF: f64 = 0.649_285_951_989_005_403_725;
const KSECOND_01_1_HALF: f64 = -5.014_551_832_305_523_288_71;
const KSECOND_CRIT_1_HALF: f64 = -4.005_835_677_746_359_205_10;
const KPRIME_05_3_1: f64 = 0.570_796_326_794_896_619_231;
const KSECOND_05_3_1: f64 = -1.348_383_106_634_907_167_51;
const RIESZ_1_HALF: f64 = 0.398_942_280_401_432_677_940;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn gamma_oracle_values() {
    assert!(rel(kappa_star(1, 0.5).unwrap(), KSTAR_1_HALF) < 1e-13);
    assert!(rel(kappa_star(2, 1.0).unwrap(), KSTAR_2_1) < 1e-13);
    let closed = 2.0 * gamma(0.75).powi(2) / gamma(0.25).powi(2);
    assert!(rel(kappa_star(2, 1.0).unwrap(), closed) < 1e-13);
    assert!(rel(kappa_of_delta(0.1, 1, 0.5).unwrap(), KAPPA_01_1_HALF) < 1e-13);
    assert!((kappa_of_delta(0.5, 3, 1.0).unwrap() - 0.5).abs() < 1e-14);
    assert!(rel(riesz_constant(1, 0.5).unwrap(), RIESZ_1_HALF) < 1e-13);
    assert!(rel(riesz_constant(2, 1.0).unwrap(), 1.0 / (2.0 * PI)) < 1e-14);
}

#[test]
fn critical_value_is_kappa_star() {
    for &(d, a) in &[(1usize, 0.5), (2, 1.0), (3, 1.0), (3, 1.7), (1, 0.1)] {
        let k = kappa_of_delta(0.5 * (d as f64 - a), d, a).unwrap();
        assert!(rel(k, kappa_star(d, a).unwrap()) < 1e-12);
        assert!((delta_of_kappa(kappa_star(d, a).unwrap(), d, a).unwrap() - 0.5 * (d as f64 - a)).abs() < 1e-12);
    }
    assert_eq!(delta_of_kappa(0.0, 1, 0.5).unwrap(), 0.0);
    assert!(delta_of_kappa(0.15, 1, 0.5).is_err());
    assert!(delta_of_kappa(-0.01, 1, 0.5).is_err());
    assert!(kappa_star(1, 1.0).is_err());
}

#[test]
fn derivatives_against_oracle() {
    assert!(rel(kappa_derivative(0.1, 1, 1, 0.5).unwrap(), KPRIME_01_1_HALF) < 1e-10);
    assert!(rel(kappa_derivative(0.1, 2, 1, 0.5).unwrap(), KSECOND_01_1_HALF) < 1e-10);
    assert!(rel(kappa_derivative(0.25, 2, 1, 0.5).unwrap(), KSECOND_CRIT_1_HALF) < 1e-10);
    assert!(kappa_derivative(0.25, 1, 1, 0.5).unwrap().abs() < 1e-12);
    assert!(rel(kappa_derivative(0.5, 1, 3, 1.0).unwrap(), KPRIME_05_3_1) < 1e-10);
    assert!(rel(kappa_derivative(0.5, 2, 3, 1.0).unwrap(), KSECOND_05_3_1) < 1e-10);
    assert!(kappa_derivative(0.3, 1, 1, 0.5).is_err());
    assert!(kappa_derivative(0.1, 3, 1, 0.5).is_err());
}

#[test]
fn riesz_consistency_at_zero() {
    for &(d, a) in &[(1usize, 0.5), (2, 1.0), (3, 1.0), (3, 0.4), (5, 1.9)] {
        let k0 = kappa_derivative(0.0, 1, d, a).unwrap();
        let df = d as f64;
        let lhs = gamma(0.5 * df) / (2.0 * PI.powf(0.5 * df) * k0);
        assert!(rel(lhs, riesz_constant(d, a).unwrap()) < 1e-10, "d={d} a={a}");
    }
}

#[test]
fn c_beta_time_integral_by_quadrature() {
    let (d, a, b) = (1usize, 0.5, 0.1);
    let k = StableKernel::shared(d, a).unwrap();
    let c = c_beta(b, d, a).unwrap();
    let g = (d as f64 - a - b) / a;
    // int_0^inf t^g p_t(1) dt in the variable v = ln t
    let mut s = 0.0;
    let mut v = -60.0;
    while v < 60.0 {
        s += GL20.integrate(v, v + 0.5, |v: f64| {
            let t = v.exp();
            t.powf(g + 1.0) * k.density(t, 1.0)
        });
        v += 0.5;
    }
    assert!((c * s - 1.0).abs() < 1e-4, "{}", c * s);
    assert!(c_beta(0.01, 1, 0.5).unwrap().is_finite());
    assert!(c_beta(0.01, 1, 0.5).unwrap() < c_beta(0.1, 1, 0.5).unwrap());
}

#[test]
fn monotone_on_grid() {
    for &(d, a) in &[(1usize, 0.5), (3, 1.0), (2, 1.5)] {
        let half = 0.5 * (d as f64 - a);
        let mut prev = -1.0;
        for i in 0..100 {
            let b = half * i as f64 / 99.0;
            let k = kappa_of_delta(b, d, a).unwrap();
            assert!(k > prev);
            prev = k;
            if i > 0 && i < 99 {
                assert!(kappa_derivative(b, 1, d, a).unwrap() > 0.0);
            }
        }
    }
}

proptest! {
    #[test]
    fn symmetry(b in 0.0f64..1.0, a in 0.05f64..0.95) {
        let (d, m) = (1usize, 1.0 - a);
        let b = b * m;
        let k1 = kappa_of_delta(b, d, a).unwrap();
        let k2 = kappa_of_delta(m - b, d, a).unwrap();
        prop_assert!((k1 - k2).abs() <= 1e-12 * k1.max(1e-300) + 1e-16);
    }

    #[test]
    fn round_trip(u in 0.0f64..1.0, a in 0.1f64..1.9, d in 2usize..5) {
        let b = u * 0.5 * (d as f64 - a);
        let k = kappa_of_delta(b, d, a).unwrap();
        let back = delta_of_kappa(k, d, a).unwrap();
        prop_assert!((back - b).abs() < 1e-10);
    }
}
