//! Scripted experiments: large-time asymptotics, norm scaling with the hypercontractive
//! bound, and two-sided kernel bounds under refinement.

use crate::constants::ModelParams;
use crate::error::{domain, Error, Result};
use crate::hardy_kernel::{comparability_report, h_invariance_defect, integrate_against, integrate_interval, KernelTable, SolverConfig};
use crate::numerics::{make_radial_grid, weighted_norm, SignedProfile};
use crate::selfsimilar::{ProfileConfig, SelfSimilarSolution};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub id: String,
    pub params: ModelParams,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub fitted: BTreeMap<String, f64>,
    pub pass: bool,
    pub criterion: String,
    pub notes: Vec<String>,
    pub config: serde_json::Value,
    pub config_hash: String,
}

/// SHA-256 of the compact JSON form.
pub fn config_hash(config: &serde_json::Value) -> String {
    let digest = Sha256::digest(config.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl ExperimentReport {
    fn new(id: &str, params: ModelParams, columns: &[&str], config: serde_json::Value) -> Self {
        let config_hash = config_hash(&config);
        ExperimentReport {
            id: id.to_string(),
            params,
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            fitted: BTreeMap::new(),
            pass: false,
            criterion: String::new(),
            notes: Vec::new(),
            config,
            config_hash,
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "{}", self.columns.join(","))?;
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|v| format!("{v:.10e}")).collect();
            writeln!(f, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        format!("{} [{}] {}", self.id, if self.pass { "PASS" } else { "FAIL" }, self.criterion)
    }
}

/// Initial data on the line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitialData {
    Indicator { a: f64, b: f64 },
    /// `1_[a,b] - w 1_[b,c]` with `w` chosen so that `int f h = 0`.
    Balanced { a: f64, b: f64, c: f64 },
    Psi1,
}

fn h_integral(delta: f64, a: f64, b: f64) -> f64 {
    (b.powf(1.0 - delta) - a.powf(1.0 - delta)) / (1.0 - delta)
}

impl InitialData {
    /// Parses `indicator:a,b`, `balanced:a,b,c` or `psi1`.
    pub fn parse(s: &str) -> Result<InitialData> {
        if s == "psi1" {
            return Ok(InitialData::Psi1);
        }
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Domain(format!("unknown initial data '{s}'")))?;
        let v: Vec<f64> = rest
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| Error::Domain(format!("bad number '{x}' in '{s}'"))))
            .collect::<Result<_>>()?;
        let data = match (kind, v.as_slice()) {
            ("indicator", &[a, b]) => InitialData::Indicator { a, b },
            ("balanced", &[a, b, c]) => InitialData::Balanced { a, b, c },
            _ => return domain(format!("cannot read initial data '{s}'")),
        };
        data.check()?;
        Ok(data)
    }

    fn balance(&self, delta: f64) -> f64 {
        match *self {
            InitialData::Balanced { a, b, c } => h_integral(delta, a, b) / h_integral(delta, b, c),
            _ => 0.0,
        }
    }

    fn check(&self) -> Result<()> {
        match *self {
            InitialData::Indicator { a, b } if !(0.0 < a && a < b) => domain("indicator needs 0 < a < b"),
            InitialData::Balanced { a, b, c } if !(0.0 < a && a < b && b < c) => domain("balanced data needs 0 < a < b < c"),
            _ => Ok(()),
        }
    }

    /// `(int f h, int |f| h, int |f|)`.
    fn integrals(&self, sol: &SelfSimilarSolution) -> (f64, f64, f64) {
        let delta = sol.params.delta;
        match *self {
            InitialData::Indicator { a, b } => {
                let m = h_integral(delta, a, b);
                (m, m, b - a)
            }
            InitialData::Balanced { a, b, c } => {
                let w = self.balance(delta);
                (0.0, 2.0 * h_integral(delta, a, b), (b - a) + w * (c - b))
            }
            InitialData::Psi1 => {
                let l1 = crate::numerics::integrate_radial(&sol.psi1, 1);
                (1.0, 1.0, l1)
            }
        }
    }

    /// `P~_t f(x)`.
    fn evolve(&self, table: &KernelTable, sol: &SelfSimilarSolution, t: f64, x: f64) -> Result<f64> {
        let p = &table.params;
        Ok(match *self {
            InitialData::Indicator { a, b } => integrate_interval(table, t, x, a, b)?,
            InitialData::Balanced { a, b, c } => {
                integrate_interval(table, t, x, a, b)? - self.balance(p.delta) * integrate_interval(table, t, x, b, c)?
            }
            InitialData::Psi1 if t >= 1.0 => {
                let g = &sol.psi1.grid;
                let side = |s: f64| g.nodes.iter().zip(&sol.psi1.values).map(|(&y, &v)| table.ptilde(t, x, s * y) * v).collect();
                SignedProfile { grid: g.clone(), pos: side(1.0), neg: side(-1.0) }.integral()
            }
            InitialData::Psi1 => integrate_against(table, t, x, p.delta, 1.0 + p.alpha, |y| sol.psi1.eval(y.abs())),
        })
    }
}

/// `P~_t f` on the table grid scaled by `t^{1/a}`, together with `Psi_t` on the same nodes.
fn evolved_profiles(table: &KernelTable, sol: &SelfSimilarSolution, data: &InitialData, t: f64, psi_time: f64) -> Result<(SignedProfile, SignedProfile)> {
    let p = &table.params;
    let s = t.powf(1.0 / p.alpha);
    let g = &table.grid;
    let grid = make_radial_grid(s * g.r_min(), s * g.r_max(), g.len(), 1)?;
    let mut u = SignedProfile { grid: grid.clone(), pos: Vec::new(), neg: Vec::new() };
    let mut psi = SignedProfile { grid: grid.clone(), pos: Vec::new(), neg: Vec::new() };
    for &x in &grid.nodes {
        u.pos.push(data.evolve(table, sol, t, x)?);
        u.neg.push(data.evolve(table, sol, t, -x)?);
        let v = sol.psi_t(psi_time, x)?;
        psi.pos.push(v);
        psi.neg.push(v);
    }
    Ok((u, psi))
}

fn combine(a: &SignedProfile, b: &SignedProfile, cb: f64) -> SignedProfile {
    SignedProfile {
        grid: a.grid.clone(),
        pos: a.pos.iter().zip(&b.pos).map(|(x, y)| x - cb * y).collect(),
        neg: a.neg.iter().zip(&b.neg).map(|(x, y)| x - cb * y).collect(),
    }
}

fn h_weighted(u: &SignedProfile, delta: f64) -> SignedProfile {
    SignedProfile {
        grid: u.grid.clone(),
        pos: u.pos.iter().zip(&u.grid.nodes).map(|(v, r)| v * r.powf(-delta)).collect(),
        neg: u.neg.iter().zip(&u.grid.nodes).map(|(v, r)| v * r.powf(-delta)).collect(),
    }
}

/// Rescaling power `(d - 2 delta)/a (1 - 1/q)`.
pub fn rescaling_power(params: &ModelParams, q: f64) -> f64 {
    (params.d as f64 - 2.0 * params.delta) / params.alpha * (1.0 - 1.0 / q)
}

/// `||Psi_1^0 - Psi_1||_{q,h}` on the table grid, where `Psi_1^0(x)` is the even part of
/// `p~(1, x, r_0) r_0^delta` at the smallest node. Data started near the origin of the
/// rescaled frame see this profile, so `e(t)` levels off at `|A|` times this gap.
pub fn resolution_floor(table: &KernelTable, sol: &SelfSimilarSolution, q: f64) -> Result<f64> {
    let g = &table.grid;
    let (r0, delta) = (g.nodes[0], table.params.delta);
    let diff: Vec<f64> = g
        .nodes
        .iter()
        .map(|&x| 0.5 * (table.ptilde(1.0, x, r0) + table.ptilde(1.0, x, -r0)) * r0.powf(delta) - sol.psi1.eval(x))
        .collect();
    SignedProfile { grid: g.clone(), pos: diff.clone(), neg: diff }.weighted_norm(q, delta)
}

/// Largest relative defect of `int p~(1, x, y) h(y) dy = h(x)` over the table nodes.
pub fn table_accuracy(table: &KernelTable) -> f64 {
    if table.params.kappa == 0.0 {
        return 0.0;
    }
    let g = &table.grid;
    (0..g.len())
        .step_by(4)
        .map(|k| h_invariance_defect(table, 1.0, g.nodes[k]))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AsymptoticsConfig {
    pub params: ModelParams,
    pub data: InitialData,
    pub q: f64,
    pub times: Vec<f64>,
    pub solver: SolverConfig,
    pub profile: ProfileConfig,
}

impl AsymptoticsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.params.d != 1 {
            return domain("asymptotics experiment runs in one dimension");
        }
        if self.q.is_infinite() {
            return domain("q = infinity is excluded: the rescaled error does not tend to zero in the sup norm; use a finite q");
        }
        if !(self.q >= 1.0) {
            return domain(format!("q = {} must be at least 1", self.q));
        }
        self.data.check()?;
        if self.times.len() < 2 || self.times.iter().any(|t| !(*t > 0.0)) {
            return domain("need at least two positive times");
        }
        Ok(())
    }
}

pub fn dyadic_times(t_max: f64) -> Vec<f64> {
    let mut v = vec![1.0];
    while *v.last().unwrap() < t_max {
        let n = 2.0 * v.last().unwrap();
        v.push(n);
    }
    v
}

/// Rescaled error `e(t) = t^g ||P~_t f - A Psi_t||_{q,h}` over the configured times.
///
/// The control column is `t^g ||P~_t Psi_1 - Psi_{t+1}||_{q,h}` and the floor column is
/// the [`resolution_floor`] scaled by `max(|A|, 1)`.
pub fn run_asymptotics(cfg: &AsymptoticsConfig, table: &KernelTable, sol: &SelfSimilarSolution) -> Result<ExperimentReport> {
    cfg.validate()?;
    let p = cfg.params;
    let g = rescaling_power(&p, cfg.q);
    let (a_mass, _, _) = cfg.data.integrals(sol);
    let eps = table_accuracy(table);
    let gap = resolution_floor(table, sol, cfg.q)?;
    let mut rep = ExperimentReport::new(
        "asymptotics",
        p,
        &["t", "rescaled_error", "control", "floor", "mass_defect"],
        serde_json::to_value(cfg)?,
    );
    for &t in &cfg.times {
        let (u, psi) = evolved_profiles(table, sol, &cfg.data, t, t)?;
        let e = t.powf(g) * combine(&u, &psi, a_mass).weighted_norm(cfg.q, p.delta)?;
        let mass = h_weighted(&u, p.delta).integral();
        let mass_defect = if a_mass != 0.0 { (mass - a_mass).abs() / a_mass.abs() } else { mass.abs() };
        if a_mass != 0.0 && mass_defect > 5e-2 {
            return Err(Error::Check(format!(
                "mass audit failed at t = {t}: int u h = {mass:.4e} against {a_mass:.4e}; the grid does not hold the solution"
            )));
        }
        let (uc, next) = evolved_profiles(table, sol, &InitialData::Psi1, t, t + 1.0)?;
        let control = t.powf(g) * combine(&uc, &next, 1.0).weighted_norm(cfg.q, p.delta)?;
        let floor = a_mass.abs().max(1.0) * gap;
        rep.rows.push(vec![t, e, control, floor, mass_defect]);
    }
    let e = rep.column("rescaled_error").unwrap();
    let n = e.len();
    let floor = rep.rows[0][3];
    let tail_decreasing = e[n / 2..].windows(2).all(|w| w[1] <= w[0] || w[1] <= 2.0 * floor);
    let ratio = e[n - 1] / e[0];
    let control_ok = rep.rows.iter().all(|r| r[2] <= 10.0 * r[3]);
    rep.fitted.insert("error_ratio".into(), ratio);
    rep.fitted.insert("table_accuracy".into(), eps);
    rep.fitted.insert("resolution_floor".into(), gap);
    rep.fitted.insert("rescaling_power".into(), g);
    rep.pass = tail_decreasing && ratio < 0.2 && control_ok;
    rep.criterion = format!(
        "e(t) decreasing over the second half of the times down to twice the floor ({tail_decreasing}), e(t_max)/e(t_min) = {ratio:.3e} < 0.2, control within 10x the floor ({control_ok})"
    );
    rep.notes.push("the t -> infinity limit is replaced by monotone decay over the sampled times".into());
    Ok(rep)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub params: ModelParams,
    pub q_list: Vec<f64>,
    pub times: Vec<f64>,
    pub data: Vec<InitialData>,
}

/// Norm scaling of `Psi_t` and the smallest constant in the hypercontractive bound
/// `||P~_t f||_{q,h} <= C t^{-g} ||f||_{L^1(h)} + C t^{-g - delta/a} ||f||_{L^1}` for each table.
pub fn run_scaling_norm_check(cfg: &ScalingConfig, sol: &SelfSimilarSolution, tables: &[&KernelTable]) -> Result<ExperimentReport> {
    let p = cfg.params;
    let mut rep = ExperimentReport::new(
        "scaling",
        p,
        &["q", "t", "psi_norm", "predicted", "table", "hyper_constant"],
        serde_json::to_value(cfg)?,
    );
    let mut ok = true;
    let base = sol.psi_t_profile(1.0)?;
    for &q in &cfg.q_list {
        let g = rescaling_power(&p, q);
        let n1 = weighted_norm(&base, q, p.delta)?;
        let quarter = weighted_norm(&sol.psi_t_profile(0.25)?, q, p.delta)?;
        let four = weighted_norm(&sol.psi_t_profile(4.0)?, q, p.delta)?;
        rep.rows.push(vec![q, 0.25, quarter, n1 * 0.25f64.powf(-g), f64::NAN, f64::NAN]);
        rep.rows.push(vec![q, 4.0, four, n1 * 4f64.powf(-g), f64::NAN, f64::NAN]);
        let fitted = (four / quarter).ln() / 16f64.ln();
        rep.fitted.insert(format!("exponent_q{q}"), fitted);
        ok &= (fitted + g).abs() < 1e-3;
        if q.is_infinite() || q == 1.0 {
            continue;
        }
        let mut consts = Vec::new();
        for (k, table) in tables.iter().enumerate() {
            let mut c_max: f64 = 0.0;
            for data in &cfg.data {
                let (_, l1h, l1) = data.integrals(sol);
                for &t in &cfg.times {
                    let (u, _) = evolved_profiles(table, sol, data, t, t)?;
                    let lhs = u.weighted_norm(q, p.delta)?;
                    let bound = t.powf(-g) * l1h + t.powf(-g - p.delta / p.alpha) * l1;
                    c_max = c_max.max(lhs / bound);
                }
            }
            rep.rows.push(vec![q, f64::NAN, f64::NAN, f64::NAN, k as f64, c_max]);
            consts.push(c_max);
        }
        for w in consts.windows(2) {
            let drift = (w[1] / w[0] - 1.0).abs();
            rep.fitted.insert(format!("hyper_drift_q{q}"), drift);
            ok &= drift < 0.1;
        }
        ok &= consts.iter().all(|c| c.is_finite() && *c > 0.0);
    }
    rep.pass = ok;
    rep.criterion = "fitted norm exponents within 1e-3 and hypercontractive constants finite and stable within 10%".into();
    Ok(rep)
}

/// Extreme ratios of the perturbed kernel to the two-sided bound for each table.
pub fn run_bound_verification(params: &ModelParams, tables: &[&KernelTable]) -> Result<ExperimentReport> {
    if tables.is_empty() {
        return domain("need at least one table");
    }
    let ratios: Vec<f64> = tables.iter().map(|t| t.grid.grading).collect();
    let mut rep = ExperimentReport::new(
        "bounds",
        *params,
        &["table", "t", "min_ratio", "max_ratio"],
        serde_json::json!({ "params": params, "grid_ratios": ratios, "times": [0.25, 1.0, 4.0] }),
    );
    let mut ok = true;
    let mut per_table = Vec::new();
    for (k, table) in tables.iter().enumerate() {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for &t in &[0.25, 1.0, 4.0] {
            let r = comparability_report(table, t);
            ok &= r.min.is_finite() && r.max.is_finite() && r.min > 0.0;
            lo = lo.min(r.min);
            hi = hi.max(r.max);
            rep.rows.push(vec![k as f64, t, r.min, r.max]);
        }
        per_table.push((lo, hi));
    }
    for w in per_table.windows(2) {
        let drift = (w[1].0 / w[0].0 - 1.0).abs().max((w[1].1 / w[0].1 - 1.0).abs());
        rep.fitted.insert("refinement_drift".into(), drift);
        ok &= drift < 0.2;
    }
    rep.pass = ok;
    rep.criterion = "ratios finite and positive, drift under refinement below 20%".into();
    Ok(rep)
}
