use clap::{Args, Parser, Subcommand};
use hardy_heat::constants::{delta_of_kappa, kappa_of_delta, kappa_star, riesz_constant, ModelParams};
use hardy_heat::experiments::{
    config_hash, dyadic_times, run_asymptotics, run_bound_verification, run_scaling_norm_check, AsymptoticsConfig,
    ExperimentReport, InitialData, ScalingConfig,
};
use hardy_heat::hardy_kernel::{solve_duhamel, KernelTable, SolverConfig};
use hardy_heat::mc::{estimate_semigroup, MCConfig, Payoff};
use hardy_heat::numerics::{make_radial_grid, Profile};
use hardy_heat::selfsimilar::{
    mu_t, ou_power_iteration, potential_constant, potential_target, psi1_fixed_point, psi1_from_kernel, ProfileConfig,
    SelfSimilarSolution,
};
use hardy_heat::stable::StableKernel;
use hardy_heat::{Error, Result};
use serde_json::{json, Map, Value};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const CONFIG_VERSION: u64 = 1;

#[derive(Parser)]
#[command(name = "hardy-heat", version, about = "Heat kernel of the fractional Laplacian with a Hardy potential")]
struct Cli {
    /// JSON file with default values; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Model {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, conflicts_with = "delta")]
    kappa: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args, Clone)]
struct Grid {
    /// Geometric ratio of the kernel table grid.
    #[arg(long)]
    ratio: Option<f64>,
    /// Node count; overrides the ratio.
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    rmin: Option<f64>,
    #[arg(long)]
    rmax: Option<f64>,
    /// Previously written binary table.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Free stable density on a radial grid.
    Kernel {
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        rmin: Option<f64>,
        #[arg(long)]
        rmax: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Perturbed kernel table in one dimension.
    Solve {
        #[command(flatten)]
        model: Model,
        #[command(flatten)]
        grid: Grid,
        #[arg(long)]
        tmax: Option<f64>,
        #[arg(long)]
        nt: Option<usize>,
        /// Also write a CSV slice, e.g. `t=1`.
        #[arg(long)]
        slice: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Self-similar profile.
    Profile {
        #[command(flatten)]
        model: Model,
        #[command(flatten)]
        grid: Grid,
        #[arg(long, value_parser = ["fixedpoint", "kernel", "ou"])]
        route: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time potential of the self-similar solution.
    Potential {
        #[command(flatten)]
        model: Model,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        x: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo estimate of the perturbed semigroup.
    Mc {
        #[command(flatten)]
        model: Model,
        #[arg(long)]
        t: Option<f64>,
        /// Start point, comma separated.
        #[arg(long)]
        x: Option<String>,
        /// one, h or indicator:a,b
        #[arg(long)]
        f: Option<String>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        clip: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rescaled distance to the self-similar solution over dyadic times.
    Asymptotics {
        #[command(flatten)]
        model: Model,
        #[command(flatten)]
        grid: Grid,
        /// Norm exponent; infinity is rejected.
        #[arg(long)]
        q: Option<f64>,
        /// indicator:a,b, balanced:a,b,c or psi1
        #[arg(long)]
        f: Option<String>,
        #[arg(long)]
        tmax: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Built-in check suites.
    Verify {
        #[arg(long, value_parser = ["constants", "kernel", "bounds", "scaling"])]
        suite: String,
        #[command(flatten)]
        model: Model,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flag values with fallbacks from the config file.
struct Defaults(Map<String, Value>);

impl Defaults {
    fn load(path: Option<&Path>) -> Result<Defaults> {
        let Some(path) = path else { return Ok(Defaults(Map::new())) };
        let v: Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let Value::Object(map) = v else {
            return Err(Error::Format("config must be a JSON object".into()));
        };
        match map.get("version").and_then(Value::as_u64) {
            Some(CONFIG_VERSION) | None => Ok(Defaults(map)),
            Some(v) => Err(Error::Format(format!("config version {v} is not supported"))),
        }
    }

    fn f64(&self, key: &str, flag: Option<f64>) -> Option<f64> {
        flag.or_else(|| self.0.get(key).and_then(Value::as_f64))
    }

    fn num(&self, key: &str, flag: Option<f64>, default: f64) -> f64 {
        self.f64(key, flag).unwrap_or(default)
    }

    fn int(&self, key: &str, flag: Option<usize>, default: usize) -> usize {
        flag.or_else(|| self.0.get(key).and_then(Value::as_u64).map(|v| v as usize)).unwrap_or(default)
    }

    fn text(&self, key: &str, flag: Option<String>, default: &str) -> String {
        flag.or_else(|| self.0.get(key).and_then(Value::as_str).map(String::from))
            .unwrap_or_else(|| default.to_string())
    }

    fn params(&self, m: &Model) -> Result<ModelParams> {
        let d = self.int("d", m.d, 1);
        let alpha = self.num("alpha", m.alpha, 0.5);
        match (m.kappa, m.delta) {
            (Some(k), _) => ModelParams::from_kappa(d, alpha, k),
            (None, Some(delta)) => ModelParams::from_delta(d, alpha, delta),
            (None, None) => match self.f64("kappa", None) {
                Some(k) => ModelParams::from_kappa(d, alpha, k),
                None => ModelParams::from_delta(d, alpha, self.num("delta", None, 0.1)),
            },
        }
    }

    fn solver(&self, g: &Grid) -> SolverConfig {
        let mut c = SolverConfig::default();
        c.r_min = self.num("rmin", g.rmin, c.r_min);
        c.r_max = self.num("rmax", g.rmax, c.r_max);
        c.ratio = self.num("ratio", g.ratio, 1.3);
        if let Some(n) = g.nx.or_else(|| self.0.get("nx").and_then(Value::as_u64).map(|v| v as usize)) {
            c.ratio = (c.r_max / c.r_min).powf(1.0 / (n.max(2) - 1) as f64);
        }
        c
    }

    fn table(&self, p: &ModelParams, g: &Grid) -> Result<KernelTable> {
        if let Some(path) = g.table.clone().or_else(|| self.0.get("table").and_then(Value::as_str).map(PathBuf::from)) {
            let t = KernelTable::read_binary(&path)?;
            if t.params.d != p.d || t.params.alpha != p.alpha || (t.params.kappa - p.kappa).abs() > 1e-12 * p.kappa.max(1.0) {
                return Err(Error::Domain(format!("table {} was built for other parameters", path.display())));
            }
            return Ok(t);
        }
        solve_duhamel(p, &self.solver(g), &[1.0])
    }
}

fn emit(value: &Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => writeln!(std::io::stdout().lock(), "{text}")?,
    }
    Ok(())
}

fn finish_report(rep: &ExperimentReport, out: Option<&Path>) -> Result<bool> {
    if let Some(p) = out {
        rep.write_csv(p)?;
        rep.write_json(&p.with_extension("json"))?;
    } else {
        let mut o = std::io::stdout().lock();
        writeln!(o, "{}", rep.columns.join(","))?;
        for r in &rep.rows {
            let line: Vec<String> = r.iter().map(|v| format!("{v:.6e}")).collect();
            writeln!(o, "{}", line.join(","))?;
        }
    }
    println!("{}", rep.summary());
    Ok(rep.pass)
}

fn check(name: &str, ok: bool, detail: String, all: &mut bool) {
    println!("{:<40} {} {detail}", name, if ok { "PASS" } else { "FAIL" });
    *all &= ok;
}

fn constants_suite() -> Result<bool> {
    let mut ok = true;
    for &(d, a) in &[(1usize, 0.5), (2, 1.0), (3, 1.0), (3, 1.5)] {
        let ks = kappa_star(d, a)?;
        let dc = 0.5 * (d as f64 - a);
        let kc = kappa_of_delta(dc, d, a)?;
        check(&format!("critical coupling d={d} a={a}"), (kc / ks - 1.0).abs() < 1e-10, format!("{kc:.12e} vs {ks:.12e}"), &mut ok);
        let mut sym: f64 = 0.0;
        let mut back: f64 = 0.0;
        let mut mono = true;
        let mut prev = -1.0;
        for k in 0..=20 {
            let delta = dc * k as f64 / 20.0;
            let v = kappa_of_delta(delta, d, a)?;
            sym = sym.max((v - kappa_of_delta(d as f64 - a - delta, d, a)?).abs() / ks);
            if k < 20 {
                back = back.max((delta_of_kappa(v, d, a)? - delta).abs());
            }
            mono &= v > prev;
            prev = v;
        }
        check(&format!("reflection symmetry d={d} a={a}"), sym < 1e-12, format!("{sym:.2e}"), &mut ok);
        check(&format!("inverse round trip d={d} a={a}"), back < 1e-9, format!("{back:.2e}"), &mut ok);
        check(&format!("monotone on [0, critical] d={d} a={a}"), mono, String::new(), &mut ok);
        let target = potential_target(&ModelParams::from_delta(d, a, 0.0)?)?;
        let riesz = riesz_constant(d, a)?;
        check(&format!("uncoupled potential d={d} a={a}"), (target / riesz - 1.0).abs() < 1e-6, format!("{target:.10e} vs {riesz:.10e}"), &mut ok);
    }
    Ok(ok)
}

fn kernel_suite() -> Result<bool> {
    let mut ok = true;
    for &(d, a) in &[(1usize, 0.5), (3, 1.0), (3, 1.5)] {
        let k = StableKernel::shared(d, a)?;
        let m = k.mass();
        check(&format!("mass d={d} a={a}"), (m - 1.0).abs() < 1e-6, format!("{m:.10}"), &mut ok);
        let radii: Vec<f64> = (0..=80).map(|i| 10f64.powf(-3.0 + 0.1 * i as f64)).collect();
        let (lo, hi) = k.comparison_constant(&radii);
        check(&format!("two-sided comparison d={d} a={a}"), lo > 0.0 && hi.is_finite(), format!("[{lo:.3e}, {hi:.3e}]"), &mut ok);
        let r = k.riesz_potential_check(1.0)?;
        check(&format!("time potential d={d} a={a}"), (r - 1.0).abs() < 1e-4, format!("{r:.8}"), &mut ok);
    }
    Ok(ok)
}

fn refined_tables(p: &ModelParams) -> Result<(KernelTable, KernelTable)> {
    let c = SolverConfig::default();
    Ok((solve_duhamel(p, &c.clone().with_ratio(1.6), &[1.0])?, solve_duhamel(p, &c.with_ratio(1.3), &[1.0])?))
}

fn solution(p: &ModelParams) -> Result<SelfSimilarSolution> {
    psi1_fixed_point(p, &ProfileConfig { r_min: 1e-5, r_max: 1e5, ratio: 1.2, ..ProfileConfig::default() })
}

fn run(cli: Cli) -> Result<bool> {
    let defaults = Defaults::load(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Kernel { d, alpha, t, rmin, rmax, n, out } => {
            let d = defaults.int("d", d, 1);
            let alpha = defaults.num("alpha", alpha, 0.5);
            let t = defaults.num("t", t, 1.0);
            let grid = make_radial_grid(defaults.num("rmin", rmin, 1e-3), defaults.num("rmax", rmax, 1e3), defaults.int("n", n, 200), d)?;
            let k = StableKernel::shared(d, alpha)?;
            let mut f = std::fs::File::create(&out)?;
            writeln!(f, "r,free_density")?;
            for &r in &grid.nodes {
                writeln!(f, "{r:.17e},{:.17e}", k.p_t(t, r)?)?;
            }
            println!("wrote {} radii to {}", grid.len(), out.display());
            Ok(true)
        }
        Cmd::Solve { model, grid, tmax, nt, slice, out } => {
            let p = defaults.params(&model)?;
            let tmax = defaults.num("tmax", tmax, 1.0);
            let nt = defaults.int("nt", nt, 1).max(1);
            let times: Vec<f64> = (1..=nt).map(|k| tmax * k as f64 / nt as f64).collect();
            let cfg = defaults.solver(&grid);
            let table = solve_duhamel(&p, &cfg, &times)?;
            table.write_binary(&out)?;
            if let Some(s) = slice {
                let t: f64 = s
                    .strip_prefix("t=")
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Domain(format!("slice must look like t=1, got '{s}'")))?;
                table.write_slice_csv(t, &out.with_extension("slice.csv"))?;
            }
            let conf = json!({ "version": CONFIG_VERSION, "params": p, "solver": cfg, "times": times });
            emit(&json!({ "config": conf, "config_hash": config_hash(&conf), "diagnostics": table.diagnostics }), None)?;
            Ok(true)
        }
        Cmd::Profile { model, grid, route, out } => {
            let p = defaults.params(&model)?;
            let route = defaults.text("route", route, "fixedpoint");
            let (profile, info): (Profile, Value) = match route.as_str() {
                "fixedpoint" => {
                    let cfg = ProfileConfig::default();
                    let sol = psi1_fixed_point(&p, &cfg)?;
                    let info = json!({ "normalization": sol.normalization(), "head_slope": sol.head_slope(), "diagnostics": sol.diagnostics, "profile": cfg });
                    (sol.psi1, info)
                }
                "kernel" => {
                    let table = defaults.table(&p, &grid)?;
                    let profile = psi1_from_kernel(&table)?;
                    let info = json!({ "normalization": SelfSimilarSolution::from_psi1(&p, profile.clone()).normalization() });
                    (profile, info)
                }
                _ => {
                    let table = defaults.table(&p, &grid)?;
                    let (phi, diag) = ou_power_iteration(&table, 1e-8, 400)?;
                    (phi, json!({ "diagnostics": diag, "quantity": "stationary density" }))
                }
            };
            profile.write_csv(&out)?;
            emit(&json!({ "params": p, "route": route, "info": info }), None)?;
            Ok(true)
        }
        Cmd::Potential { model, t, x, out } => {
            let p = defaults.params(&model)?;
            let sol = solution(&p)?;
            let mut v = json!({ "params": p });
            let mut pass = true;
            if let Some(t) = defaults.f64("t", t) {
                let x = defaults.num("x", x, 1.0);
                v["mu_t"] = json!({ "t": t, "x": x, "value": mu_t(&sol, t, x)? });
            }
            if !p.is_critical() && p.delta < p.critical_delta() {
                let c = potential_constant(&sol)?;
                pass = (c.ratio - 1.0).abs() < 2e-2;
                v["potential"] = serde_json::to_value(c)?;
            }
            v["pass"] = json!(pass);
            emit(&v, out.as_deref())?;
            Ok(pass)
        }
        Cmd::Mc { model, t, x, f, paths, dt, seed, clip, out } => {
            let p = defaults.params(&model)?;
            let t = defaults.num("t", t, 1.0);
            let xs = defaults.text("x", x, "1");
            let mut start: Vec<f64> = xs
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Domain(format!("bad coordinate '{s}'"))))
                .collect::<Result<_>>()?;
            if start.len() == 1 && p.d > 1 {
                start.resize(p.d, 0.0);
            }
            let payoff_name = defaults.text("f", f, "h");
            let payoff = Payoff::parse(&payoff_name)?;
            let mut cfg = MCConfig::new(p, defaults.int("paths", paths, 100_000), defaults.num("dt", dt, 1e-2), seed.or_else(|| defaults.0.get("seed").and_then(Value::as_u64)).unwrap_or(1));
            cfg.clip_radius = defaults.f64("clip", clip);
            let est = estimate_semigroup(&start, t, &|y| payoff.eval(p.delta, y), &cfg)?;
            let conf = json!({ "version": CONFIG_VERSION, "mc": cfg, "t": t, "x": start, "f": payoff_name });
            emit(&json!({ "config": conf, "config_hash": config_hash(&conf), "estimate": est }), out.as_deref())?;
            Ok(true)
        }
        Cmd::Asymptotics { model, grid, q, f, tmax, out } => {
            let p = defaults.params(&model)?;
            let q = defaults.num("q", q, 2.0);
            let data = InitialData::parse(&defaults.text("f", f, "indicator:1,2"))?;
            let solver = defaults.solver(&grid);
            let profile = ProfileConfig { r_min: 1e-5, r_max: 1e5, ratio: 1.2, ..ProfileConfig::default() };
            let cfg = AsymptoticsConfig { params: p, data, q, times: dyadic_times(defaults.num("tmax", tmax, 256.0)), solver, profile };
            cfg.validate()?;
            let table = defaults.table(&p, &grid)?;
            let sol = psi1_fixed_point(&p, &cfg.profile)?;
            let rep = run_asymptotics(&cfg, &table, &sol)?;
            finish_report(&rep, out.as_deref())
        }
        Cmd::Verify { suite, model, out } => match suite.as_str() {
            "constants" => constants_suite(),
            "kernel" => kernel_suite(),
            "bounds" => {
                let p = defaults.params(&model)?;
                let (a, b) = refined_tables(&p)?;
                finish_report(&run_bound_verification(&p, &[&a, &b])?, out.as_deref())
            }
            _ => {
                let p = defaults.params(&model)?;
                let (a, b) = refined_tables(&p)?;
                let sol = solution(&p)?;
                let cfg = ScalingConfig {
                    params: p,
                    q_list: vec![1.0, 2.0, 4.0, f64::INFINITY],
                    times: vec![0.25, 1.0, 4.0],
                    data: vec![InitialData::Indicator { a: 1.0, b: 2.0 }, InitialData::Indicator { a: 0.01, b: 0.02 }],
                };
                finish_report(&run_scaling_norm_check(&cfg, &sol, &[&a, &b])?, out.as_deref())
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e @ (Error::Domain(_) | Error::Format(_) | Error::Io(_) | Error::Json(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
