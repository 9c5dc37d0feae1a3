use hardy_heat::constants::ModelParams;
use hardy_heat::hardy_kernel::{
    chapman_kolmogorov_defect, h_invariance_defect, integrate_interval, mass, perturbation_term, ptilde_at, solve_duhamel,
    KernelTable, QuadratureOptions, SolverConfig,
};
use hardy_heat::stable::StableKernel;
use once_cell::sync::Lazy;

fn coarse(delta: f64) -> KernelTable {
    let p = ModelParams::from_delta(1, 0.5, delta).unwrap();
    solve_duhamel(&p, &SolverConfig::default().with_ratio(1.6), &[1.0, 2.0]).unwrap()
}

static WEAK: Lazy<KernelTable> = Lazy::new(|| coarse(0.05));
static MID: Lazy<KernelTable> = Lazy::new(|| coarse(0.1));

const PROBES: [f64; 7] = [-5.0, -0.7, -0.02, 0.01, 0.3, 1.0, 8.0];

#[test]
fn uncoupled_table_is_free_kernel() {
    let t = coarse(0.0);
    let k = StableKernel::shared(1, 0.5).unwrap();
    for &x in &PROBES {
        for &y in &PROBES {
            for &s in &[0.5, 1.0, 3.0] {
                let want = k.density(s, x - y);
                assert!((t.ptilde(s, x, y) / want - 1.0).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn symmetric_in_space_variables() {
    let t = &*MID;
    let mut worst: f64 = 0.0;
    for &x in &PROBES {
        for &y in &PROBES {
            worst = worst.max((t.ptilde(1.0, x, y) / t.ptilde(1.0, y, x) - 1.0).abs());
            worst = worst.max((t.ptilde(1.0, x, y) / t.ptilde(1.0, -x, -y) - 1.0).abs());
        }
    }
    assert!(worst < 1e-2, "asymmetry {worst:e}");
}

#[test]
fn increasing_in_coupling() {
    for &x in &PROBES {
        for &y in &PROBES {
            let free = WEAK.free(1.0, x, y);
            let a = WEAK.ptilde(1.0, x, y);
            let b = MID.ptilde(1.0, x, y);
            assert!(free <= a * (1.0 + 1e-9) && a <= b, "x={x} y={y}: {free} {a} {b}");
        }
    }
}

#[test]
fn h_is_invariant() {
    for &x in &[-3.0, 0.01, 0.2, 1.0, 20.0] {
        for &s in &[0.5, 1.0, 4.0] {
            let e = h_invariance_defect(&MID, s, x);
            assert!(e < 1e-3, "x={x} t={s}: {e:e}");
        }
    }
}

#[test]
fn mass_exceeds_one_and_grows_with_coupling() {
    for &x in &[0.05, 1.0, 10.0] {
        let a = mass(&WEAK, 1.0, x);
        let b = mass(&MID, 1.0, x);
        assert!(1.0 < a && a < b, "x={x}: {a} {b}");
    }
}

#[test]
fn chapman_kolmogorov() {
    for &(x, y) in &[(0.5, 1.5), (-1.0, 2.0), (0.05, 0.3)] {
        let e = chapman_kolmogorov_defect(&MID, 0.5, 1.0, x, y);
        assert!(e < 3e-2, "x={x} y={y}: {e:e}");
    }
}

#[test]
fn perturbation_partial_sums_stay_below_table() {
    let p = MID.params;
    let opts = QuadratureOptions::coarse();
    for &(x, y) in &[(1.0, 1.5), (-0.5, 2.0)] {
        let p0 = perturbation_term(&p, 0, 1.0, x, y, &opts).unwrap();
        let p1 = perturbation_term(&p, 1, 1.0, x, y, &opts).unwrap();
        assert!((p0 / MID.free(1.0, x, y) - 1.0).abs() < 1e-12);
        assert!(p1 > 0.0);
        assert!(p0 + p1 < MID.ptilde(1.0, x, y), "x={x} y={y}");
        let weak = perturbation_term(&WEAK.params, 1, 1.0, x, y, &opts).unwrap();
        let ratio = p1 / weak;
        let want = p.kappa / WEAK.params.kappa;
        assert!((ratio / want - 1.0).abs() < 1e-10, "first term not linear in the coupling");
    }
    assert!(perturbation_term(&p, 1, 1.0, 0.0, 1.0, &opts).is_err());
}

#[test]
fn second_perturbation_term_is_positive_and_bounded() {
    let p = MID.params;
    let opts = QuadratureOptions::coarse();
    let (x, y) = (1.0, 1.5);
    let p0 = perturbation_term(&p, 0, 1.0, x, y, &opts).unwrap();
    let p1 = perturbation_term(&p, 1, 1.0, x, y, &opts).unwrap();
    let p2 = perturbation_term(&p, 2, 1.0, x, y, &opts).unwrap();
    assert!(p2 > 0.0 && p0 + p1 + p2 <= MID.ptilde(1.0, x, y) * (1.0 + 1e-3));
}

#[test]
fn scaled_lookup_matches_stored_slices() {
    for &x in &[0.3, 1.0, -2.0] {
        let a = ptilde_at(&MID, 1.0, x, 0.7).unwrap();
        let b = MID.ptilde(1.0, x, 0.7);
        assert_eq!(a, b);
        let s = ptilde_at(&MID, 2.0, x, 0.7).unwrap();
        let c = 2f64.powf(-2.0);
        let want = c * MID.ptilde(1.0, x * c, 0.7 * c);
        assert!((s / want - 1.0).abs() < 1e-12);
    }
    assert!(ptilde_at(&MID, 1.0, 1e6, 1.0).is_err());
}

#[test]
fn interval_integral_against_dense_rule() {
    let t = &*MID;
    for &x in &[-1.0, 0.2, 1.4, 6.0] {
        let v = integrate_interval(t, 1.0, x, 1.0, 2.0).unwrap();
        let n = 20000;
        let h = 1.0 / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let y = 1.0 + i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * t.ptilde(1.0, x, y);
        }
        s *= h / 3.0;
        assert!((v / s - 1.0).abs() < 1e-6, "x={x}: {v} {s}");
    }
    assert!(integrate_interval(t, 1.0, 1.0, -1.0, 1.0).is_err());
}

#[test]
fn binary_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.bin");
    MID.write_binary(&path).unwrap();
    let back = KernelTable::read_binary(&path).unwrap();
    assert_eq!(back.params, MID.params);
    assert_eq!(back.times, MID.times);
    // The file stores p~ itself, so R comes back through one division.
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(u, v)| (u / v - 1.0).abs() < 1e-13);
    assert!(close(&back.same, &MID.same) && close(&back.opp, &MID.opp));
    assert!((back.ptilde(1.0, 0.3, -2.0) / MID.ptilde(1.0, 0.3, -2.0) - 1.0).abs() < 1e-13);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] ^= 0xff;
    std::fs::write(&path, &bytes).unwrap();
    assert!(KernelTable::read_binary(&path).is_err());
    std::fs::write(&path, &bytes[..100]).unwrap();
    assert!(KernelTable::read_binary(&path).is_err());
}
