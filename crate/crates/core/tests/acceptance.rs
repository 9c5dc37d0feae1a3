//! Acceptance criteria 1 to 7, one line each. Runs without the libtest harness so the
//! lines reach the console; any failure makes the process exit nonzero.

use hardy_heat::constants::{delta_of_kappa, kappa_of_delta, kappa_star, riesz_constant, ModelParams};
use hardy_heat::experiments::{dyadic_times, run_asymptotics, run_bound_verification, AsymptoticsConfig, InitialData};
use hardy_heat::hardy_kernel::{
    chapman_kolmogorov_defect, h_invariance_defect, integrate_interval, solve_duhamel, KernelTable, SolverConfig,
};
use hardy_heat::mc::{estimate_semigroup, MCConfig, Payoff};
use hardy_heat::selfsimilar::{
    critical_log_identity, ou_power_iteration, potential_constant, potential_target, psi1_fixed_point, psi1_from_kernel,
    relative_l1h, stationary_consistency, subcritical_identity, ProfileConfig, SelfSimilarSolution,
};
use hardy_heat::stable::{levy_density, StableKernel};
use once_cell::unsync::OnceCell;
use std::f64::consts::PI;
use std::time::Instant;

// Tolerances
const C1_SYMMETRY: f64 = 1e-12;
const C1_RIESZ: f64 = 1e-10;
const C1_ROUND_TRIP: f64 = 1e-10;
const C2_CAUCHY: f64 = 1e-6;
const C2_MASS: f64 = 1e-6;
const C2_TAIL: f64 = 1e-2;
const C2_RIESZ: f64 = 1e-4;
const C3_FREE: f64 = 1e-10;
const C3_H_INVARIANCE: f64 = 1e-2;
const C3_CHAPMAN: f64 = 3e-2;
const C3_DRIFT: f64 = 0.2;
const C4_FREE: f64 = 1e-3;
const C4_ROUTES: f64 = 2e-2;
const C4_NORMALIZATION: f64 = 1e-6;
const C4_PHI: f64 = 2e-2;
const C4_ORIGIN: f64 = 2e-2;
const C5_POTENTIAL: f64 = 2e-2;
const C5_CRITICAL: f64 = 5e-2;
const C6_SIGMAS: f64 = 3.0;
const C6_BAND: f64 = 2e-2;
const C7_RATIO: f64 = 0.2;
const C7_CONTROL: f64 = 10.0;

// Runtime limits in seconds
const LIMITS: [f64; 7] = [1.0, 30.0, 600.0, 300.0, 300.0, 600.0, 600.0];

fn coarse_profile() -> ProfileConfig {
    ProfileConfig { ratio: 1.2, r_min: 1e-5, r_max: 1e5, ..ProfileConfig::default() }
}

fn line(d: usize, alpha: f64, delta: f64) -> ModelParams {
    ModelParams::from_delta(d, alpha, delta).unwrap()
}

#[derive(Default)]
struct Shared {
    sub_coarse: OnceCell<KernelTable>,
    sub_fine: OnceCell<KernelTable>,
    sub_solution: OnceCell<SelfSimilarSolution>,
}

impl Shared {
    fn table(cell: &OnceCell<KernelTable>, ratio: f64) -> &KernelTable {
        cell.get_or_init(|| solve_duhamel(&line(1, 0.5, 0.1), &SolverConfig::default().with_ratio(ratio), &[1.0]).unwrap())
    }
    fn coarse(&self) -> &KernelTable {
        Self::table(&self.sub_coarse, 1.6)
    }
    fn fine(&self) -> &KernelTable {
        Self::table(&self.sub_fine, 1.3)
    }
    fn solution(&self) -> &SelfSimilarSolution {
        self.sub_solution.get_or_init(|| psi1_fixed_point(&line(1, 0.5, 0.1), &coarse_profile()).unwrap())
    }
}

type Outcome = Result<(bool, String), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn c1() -> Outcome {
    let mut worst_sym: f64 = 0.0;
    let mut worst_riesz: f64 = 0.0;
    let mut worst_trip: f64 = 0.0;
    let mut worst_star: f64 = 0.0;
    let mut monotone = true;
    for &(d, a) in &[(1usize, 0.5), (1, 0.8), (2, 1.0), (3, 1.0), (3, 1.5)] {
        let ks = kappa_star(d, a).map_err(err)?;
        let m = d as f64 - a;
        worst_star = worst_star.max((kappa_of_delta(0.5 * m, d, a).map_err(err)? / ks - 1.0).abs());
        let mut prev = -1.0;
        for k in 0..=40 {
            let delta = 0.5 * m * k as f64 / 40.0;
            let v = kappa_of_delta(delta, d, a).map_err(err)?;
            worst_sym = worst_sym.max((v - kappa_of_delta(m - delta, d, a).map_err(err)?).abs() / ks);
            monotone &= v > prev - C1_SYMMETRY * ks;
            prev = v;
            if k > 0 && k < 40 {
                worst_trip = worst_trip.max((delta_of_kappa(v, d, a).map_err(err)? - delta).abs());
            }
        }
        let t = potential_target(&ModelParams::from_delta(d, a, 0.0).map_err(err)?).map_err(err)?;
        worst_riesz = worst_riesz.max((t / riesz_constant(d, a).map_err(err)? - 1.0).abs());
    }
    let ok = worst_sym < C1_SYMMETRY && monotone && worst_star < C1_SYMMETRY && worst_riesz < C1_RIESZ && worst_trip < C1_ROUND_TRIP;
    Ok((ok, format!("symmetry {worst_sym:.1e}, critical {worst_star:.1e}, riesz {worst_riesz:.1e}, round trip {worst_trip:.1e}, monotone {monotone}")))
}

fn c2() -> Outcome {
    let k = StableKernel::shared(2, 1.0).map_err(err)?;
    let mut worst: f64 = 0.0;
    for i in 0..=1000 {
        let r = 50.0 * i as f64 / 1000.0;
        let want = 1.0 / (2.0 * PI) * (1.0 + r * r).powf(-1.5);
        worst = worst.max((k.p1(r) / want - 1.0).abs());
    }
    let mut mass: f64 = 0.0;
    let mut riesz: f64 = 0.0;
    for &(d, a) in &[(1usize, 0.5), (2, 1.0), (3, 1.0), (3, 1.5)] {
        let kk = StableKernel::shared(d, a).map_err(err)?;
        mass = mass.max((kk.mass() - 1.0).abs());
        for &r in &[0.1, 1.0, 10.0] {
            riesz = riesz.max((kk.riesz_potential_check(r).map_err(err)? - 1.0).abs());
        }
    }
    let tail = k.p1(50.0) / levy_density(2, 1.0, 50.0).map_err(err)?;
    let ok = worst < C2_CAUCHY && mass < C2_MASS && (tail - 1.0).abs() < C2_TAIL && riesz < C2_RIESZ;
    Ok((ok, format!("cauchy {worst:.1e}, mass {mass:.1e}, tail ratio {tail:.5}, riesz {riesz:.1e}")))
}

fn c3(s: &Shared) -> Outcome {
    let free = solve_duhamel(&line(1, 0.5, 0.0), &SolverConfig::default().with_ratio(1.6), &[1.0]).map_err(err)?;
    let k = StableKernel::shared(1, 0.5).map_err(err)?;
    let probes = [-20.0, -1.0, -0.01, 0.002, 0.5, 3.0, 100.0];
    let mut free_err: f64 = 0.0;
    for &x in &probes {
        for &y in &probes {
            for &t in &[0.25, 1.0, 4.0] {
                free_err = free_err.max((free.ptilde(t, x, y) / k.density(t, x - y) - 1.0).abs());
            }
        }
    }
    let crit_coarse = solve_duhamel(&line(1, 0.5, 0.25), &SolverConfig::default().with_ratio(1.6), &[1.0]).map_err(err)?;
    let crit_fine = solve_duhamel(&line(1, 0.5, 0.25), &SolverConfig::default().with_ratio(1.3), &[1.0]).map_err(err)?;
    let mut hdef: f64 = 0.0;
    let mut ck: f64 = 0.0;
    let mut drift: f64 = 0.0;
    let mut finite = true;
    for (coarse, fine) in [(s.coarse(), s.fine()), (&crit_coarse, &crit_fine)] {
        for &x in &[-10.0, -0.5, 0.01, 0.1, 1.0, 5.0, 50.0] {
            for &t in &[0.25, 1.0, 4.0] {
                hdef = hdef.max(h_invariance_defect(fine, t, x));
            }
        }
        for &(x, y) in &[(0.5, 1.5), (-1.0, 2.0), (0.05, 0.3), (3.0, -0.2)] {
            ck = ck.max(chapman_kolmogorov_defect(fine, 0.5, 1.0, x, y));
        }
        let rep = run_bound_verification(&fine.params, &[coarse, fine]).map_err(err)?;
        finite &= rep.rows.iter().all(|r| r[2].is_finite() && r[3].is_finite() && r[2] > 0.0);
        drift = drift.max(rep.fitted["refinement_drift"]);
    }
    let ok = free_err < C3_FREE && hdef < C3_H_INVARIANCE && ck < C3_CHAPMAN && finite && drift < C3_DRIFT;
    Ok((ok, format!("free {free_err:.1e}, h-invariance {hdef:.1e}, chapman-kolmogorov {ck:.1e}, comparability drift {drift:.1e}")))
}

fn c4(s: &Shared) -> Outcome {
    let free = psi1_fixed_point(&line(1, 0.5, 0.0), &coarse_profile()).map_err(err)?;
    let k = StableKernel::shared(1, 0.5).map_err(err)?;
    let free_err = free
        .psi1
        .grid
        .nodes
        .iter()
        .zip(&free.psi1.values)
        .map(|(&r, &v)| (v / k.p1(r) - 1.0).abs())
        .fold(0.0, f64::max);
    let sol = s.solution();
    let table = s.fine();
    let kernel_route = psi1_from_kernel(table).map_err(err)?;
    let routes = relative_l1h(&kernel_route, &sol.psi1, 0.1);
    let norm = (sol.normalization() - 1.0).abs();
    let (phi, _) = ou_power_iteration(table, 1e-9, 400).map_err(err)?;
    let phi_gap = relative_l1h(&phi, &sol.phi, 0.2);
    let (phi0, rhs) = stationary_consistency(&sol.phi, &sol.params).map_err(err)?;
    let origin = (phi0 / rhs - 1.0).abs();
    let ok = free_err < C4_FREE && routes < C4_ROUTES && norm < C4_NORMALIZATION && phi_gap < C4_PHI && origin < C4_ORIGIN;
    Ok((ok, format!("free {free_err:.1e}, routes {routes:.1e}, normalization {norm:.1e}, phi {phi_gap:.1e}, phi(0) {origin:.1e}")))
}

fn c5(s: &Shared) -> Outcome {
    let one = potential_constant(s.solution()).map_err(err)?;
    let three = potential_constant(&psi1_fixed_point(&line(3, 1.0, 0.5), &coarse_profile()).map_err(err)?).map_err(err)?;
    let zero = potential_constant(&psi1_fixed_point(&line(1, 0.5, 0.0), &coarse_profile()).map_err(err)?).map_err(err)?;
    let riesz = zero.moment / riesz_constant(1, 0.5).map_err(err)?;
    let mut sub: f64 = 0.0;
    for &(t, x) in &[(1.0, 1.0), (4.0, 0.3)] {
        sub = sub.max((subcritical_identity(s.solution(), s.fine(), t, x).map_err(err)?.ratio - 1.0).abs());
    }
    let crit = line(1, 0.5, 0.25);
    let cfg = SolverConfig { r_min: 1e-4, ..SolverConfig::default().with_ratio(1.6) };
    let table = solve_duhamel(&crit, &cfg, &[1.0]).map_err(err)?;
    let csol = psi1_fixed_point(&crit, &coarse_profile()).map_err(err)?;
    let log = critical_log_identity(&csol, &table, 1.0, 1.0).map_err(err)?.ratio;
    let ok = (one.ratio - 1.0).abs() < C5_POTENTIAL
        && (three.ratio - 1.0).abs() < C5_POTENTIAL
        && (riesz - 1.0).abs() < C5_POTENTIAL
        && (log - 1.0).abs() < C5_CRITICAL;
    Ok((ok, format!(
        "d=1 {:.5}, d=3 {:.5}, uncoupled {riesz:.5}, mu_t identity {sub:.1e}, critical log {log:.4}",
        one.ratio, three.ratio
    )))
}

fn c6(s: &Shared) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for &(d, alpha) in &[(1usize, 0.5), (3, 1.0)] {
        for &frac in &[0.5, 0.8] {
            let p = ModelParams::from_kappa(d, alpha, frac * kappa_star(d, alpha).map_err(err)?).map_err(err)?;
            let mut x = vec![0.0; d];
            x[0] = 1.0;
            let est = estimate_semigroup(&x, 1.0, &|y| Payoff::H.eval(p.delta, y), &MCConfig::new(p, 100_000, 1e-2, 2024)).map_err(err)?;
            let dev = (est.mean - 1.0).abs();
            ok &= dev <= C6_SIGMAS * est.std_error + C6_BAND;
            parts.push(format!("d={d} {frac}k* {:.4}+-{:.4}", est.mean, est.std_error));
        }
    }
    let table = s.fine();
    let p = table.params;
    let want = integrate_interval(table, 1.0, 0.5, 1.0, 2.0).map_err(err)?;
    let est = estimate_semigroup(&[0.5], 1.0, &|y| Payoff::Indicator(1.0, 2.0).eval(p.delta, y), &MCConfig::new(p, 100_000, 2.5e-3, 77)).map_err(err)?;
    let z = (est.mean - want) / est.std_error;
    ok &= z.abs() <= C6_SIGMAS;
    parts.push(format!("semigroup z = {z:.2}"));
    Ok((ok, parts.join(", ")))
}

fn c7(s: &Shared) -> Outcome {
    let p = line(1, 0.5, 0.1);
    let cfg = AsymptoticsConfig {
        params: p,
        data: InitialData::Indicator { a: 1.0, b: 2.0 },
        q: 2.0,
        times: dyadic_times(256.0),
        solver: SolverConfig::default().with_ratio(1.3),
        profile: coarse_profile(),
    };
    let rep = run_asymptotics(&cfg, s.fine(), s.solution()).map_err(err)?;
    let e = rep.column("rescaled_error").unwrap();
    let floor = rep.column("floor").unwrap();
    let control = rep.column("control").unwrap();
    let ratio = e[e.len() - 1] / e[0];
    let worst = control.iter().zip(&floor).map(|(c, f)| c / f).fold(0.0, f64::max);
    let ok = rep.pass && ratio < C7_RATIO && worst < C7_CONTROL;
    Ok((ok, format!("e(256)/e(1) = {ratio:.3e}, control/floor max {worst:.2}, floor {:.2e} (decay proxy for the limit)", floor[0])))
}

fn main() {
    let shared = Shared::default();
    let criteria: [(&str, &dyn Fn() -> Outcome); 7] = [
        ("constants", &c1),
        ("stable kernel", &c2),
        ("hardy kernel", &|| c3(&shared)),
        ("self-similar profile", &|| c4(&shared)),
        ("potential identities", &|| c5(&shared)),
        ("monte carlo", &|| c6(&shared)),
        ("large-time asymptotics", &|| c7(&shared)),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| f()))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = start.elapsed().as_secs_f64();
        let (ok, detail) = match outcome {
            Ok((ok, d)) => (ok && secs < LIMITS[k], d),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!("C{} {} {name}: {detail} [{secs:.1}s, limit {:.0}s]", k + 1, if ok { "PASS" } else { "FAIL" }, LIMITS[k]);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
