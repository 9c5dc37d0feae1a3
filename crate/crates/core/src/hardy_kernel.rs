//! Perturbed heat kernel on the line.
//!
//! At unit time the ratio `R(x, y) = p~(1, x, y) / p(1, x, y)` solves
//! `R(x, y) = 1 + p(1, x, y)^{-1} int_0^1 int p(s, x, z) q(z) p(r, z, y) R(r^{-1/a} z, r^{-1/a} y) dz ds`
//! with `r = 1 - s`, and other times follow from `p~(t, x, y) = p(t, x, y) R(t^{-1/a} x, t^{-1/a} y)`.
//! `R` is stored for `x > 0` on both half-lines of `y` as two symmetric matrices over a
//! geometric grid, extended by `(r_min / |x|)^delta` below the grid and held constant beyond it.

use crate::constants::ModelParams;
use crate::error::{domain, Error, Result};
use crate::numerics::{cubic_weights, gmres_identity_minus, make_graded_grid, RadialGrid};
use crate::special::GaussRule;
use crate::stable::StableKernel;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

const MAGIC: &[u8; 4] = b"HHKT";
const FORMAT_VERSION: u32 = 1;
/// Half-width of the central peak of `p_1` relative to the scale `t^{1/a}`.
const PEAK_WIDTH: f64 = 0.1;

/// Panel layout of the space and time quadratures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureOptions {
    pub z_points: usize,
    pub z_ratio: f64,
    pub s_points: usize,
    pub s_ratio: f64,
    /// Time integrals start at `s_floor * min(1, |x|^a)`; the rest uses the endpoint limit.
    pub s_floor: f64,
    /// Space integrals are truncated at `far * max(1, |x|, |y|)`.
    pub far: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions { z_points: 6, z_ratio: 3.0, s_points: 5, s_ratio: 4.0, s_floor: 1e-4, far: 1e4 }
    }
}

impl QuadratureOptions {
    pub fn coarse() -> Self {
        QuadratureOptions { z_points: 3, z_ratio: 4.0, s_points: 3, s_ratio: 8.0, s_floor: 1e-3, far: 1e3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub ratio: f64,
    pub tol: f64,
    pub restart: usize,
    pub max_products: usize,
    pub quadrature: QuadratureOptions,
    /// Number of mirrored rows used for the transposed Duhamel residual.
    pub residual_samples: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            r_min: 1e-3,
            r_max: 1e3,
            ratio: 1.2,
            tol: 1e-10,
            restart: 40,
            max_products: 2000,
            quadrature: QuadratureOptions::default(),
            residual_samples: 24,
        }
    }
}

impl SolverConfig {
    pub fn with_ratio(mut self, ratio: f64) -> Self {
        self.ratio = ratio;
        self
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub unknowns: usize,
    pub matrix_products: usize,
    pub residual: f64,
    /// Max relative defect of the transposed Duhamel equation on mirrored rows.
    pub transpose_residual: f64,
    pub transpose_worst: (f64, f64),
    pub assembly_seconds: f64,
    pub solve_seconds: f64,
}

/// Quadrature on the real line adapted to peaks and an origin singularity.
pub(crate) struct LineRule {
    rule: GaussRule,
    ratio: f64,
    far: f64,
    /// Decay power of the integrand beyond the truncation point, if a tail panel is wanted.
    tail: Option<f64>,
}

impl LineRule {
    pub(crate) fn new(points: usize, ratio: f64, far: f64) -> Self {
        LineRule { rule: GaussRule::new(points), ratio, far, tail: None }
    }

    /// Adds panels on `|z| > far` for an integrand decaying like `|z|^{-decay}` (`decay > 1`).
    pub(crate) fn with_tail(mut self, decay: f64) -> Self {
        self.tail = Some(decay);
        self
    }

    pub(crate) fn from_options(o: &QuadratureOptions) -> Self {
        Self::new(o.z_points, o.z_ratio, o.far)
    }

    /// Nodes for `int_R g(z) dz` where `g` has peaks of width `w` at `c` and behaves like
    /// `|z|^{-sigma}` times a smooth factor within `origin_w` of zero.
    pub(crate) fn build(&self, peaks: &[(f64, f64)], origin_w: f64, sigma: f64, out: &mut Vec<(f64, f64)>) {
        out.clear();
        let mut f = [(0.0f64, origin_w, true); 4];
        let mut len = 1;
        let mut scale: f64 = 1.0;
        for &(c, w) in peaks {
            if c == 0.0 {
                continue;
            }
            scale = scale.max(c.abs());
            match f[..len].iter_mut().find(|g| !g.2 && (g.0 - c).abs() <= 1e-12 * c.abs()) {
                Some(g) => g.1 = g.1.min(PEAK_WIDTH * w),
                None => {
                    f[len] = (c, PEAK_WIDTH * w, false);
                    len += 1;
                }
            }
        }
        let f = &mut f[..len];
        f.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let far = self.far * scale;
        for k in 0..len {
            let (c, w, origin) = f[k];
            let lo = if k == 0 { -far } else { 0.5 * (f[k - 1].0 + c) };
            let hi = if k + 1 == len { far } else { 0.5 * (c + f[k + 1].0) };
            self.side(c, w, hi - c, 1.0, origin, sigma, out);
            self.side(c, w, c - lo, -1.0, origin, sigma, out);
        }
        if let Some(decay) = self.tail {
            let m = 1.0 / (decay - 1.0);
            for (u, wu) in self.rule.points(0.0, 1.0) {
                let z = far * u.powf(-m);
                let w = wu * far * m * u.powf(-m - 1.0);
                out.push((z, w));
                out.push((-z, w));
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn side(&self, c: f64, w: f64, len: f64, dir: f64, origin: bool, sigma: f64, out: &mut Vec<(f64, f64)>) {
        if !(len > 0.0) {
            return;
        }
        let first = if origin { w.min(len) } else { w.min(len).min((self.ratio - 1.0) * c.abs()) };
        if origin {
            let m = 1.0 / (1.0 - sigma);
            for (u, wu) in self.rule.points(0.0, 1.0) {
                out.push((c + dir * first * u.powf(m), wu * first * m * u.powf(m - 1.0)));
            }
        } else {
            self.panel(c, c + dir * first, out);
        }
        let mut a = first;
        while a < len {
            let step = (a * (self.ratio - 1.0)).min((self.ratio - 1.0) * (c + dir * a).abs());
            let mut b = (a + step).min(len);
            if len - b < 0.25 * step {
                b = len;
            }
            self.panel(c + dir * a, c + dir * b, out);
            a = b;
        }
    }

    fn panel(&self, a: f64, b: f64, out: &mut Vec<(f64, f64)>) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        out.extend(self.rule.points(lo, hi));
    }
}

/// Nodes on `[floor, 1/2]` from geometric panels.
fn half_interval(floor: f64, ratio: f64, rule: &GaussRule, out: &mut Vec<(f64, f64)>) {
    let mut b = 0.5;
    while b > floor {
        let mut a = b / ratio;
        if a < floor * 1.25 {
            a = floor;
        }
        out.extend(rule.points(a, b));
        b = a;
    }
}

/// Time nodes `(s, 1 - s, weight)` on `(0, 1)`, without the two endpoint intervals.
fn time_nodes(s_lo: f64, t_lo: f64, ratio: f64, rule: &GaussRule) -> Vec<(f64, f64, f64)> {
    let mut a = Vec::new();
    half_interval(s_lo, ratio, rule, &mut a);
    let mut out: Vec<(f64, f64, f64)> = a.iter().map(|&(s, w)| (s, 1.0 - s, w)).collect();
    a.clear();
    half_interval(t_lo, ratio, rule, &mut a);
    out.extend(a.iter().map(|&(r, w)| (1.0 - r, r, w)));
    out
}

#[derive(Clone, Copy)]
struct Stencil {
    idx: [usize; 4],
    w: [f64; 4],
    len: usize,
}

/// Geometric grid geometry shared by interpolation and assembly.
#[derive(Clone, Copy, Debug)]
struct LogGrid {
    n: usize,
    ln_r0: f64,
    h: f64,
    r_min: f64,
    delta: f64,
}

impl LogGrid {
    #[inline]
    fn stencil(&self, r: f64) -> Stencil {
        let n = self.n;
        if r < self.r_min {
            return Stencil { idx: [0; 4], w: [(self.r_min / r).powf(self.delta), 0.0, 0.0, 0.0], len: 1 };
        }
        let pos = (r.ln() - self.ln_r0) / self.h;
        if pos >= (n - 1) as f64 {
            return Stencil { idx: [n - 1; 4], w: [1.0, 0.0, 0.0, 0.0], len: 1 };
        }
        let i = pos.floor() as usize;
        let start = i.saturating_sub(1).min(n - 4);
        let w = cubic_weights(pos - start as f64);
        Stencil { idx: [start, start + 1, start + 2, start + 3], w, len: 4 }
    }

    /// Interpolated `R(x, y)` from the two ratio matrices.
    fn eval(&self, same: &[f64], opp: &[f64], x: f64, y: f64) -> f64 {
        let (x, y) = if x < 0.0 { (-x, -y) } else { (x, y) };
        let m = if y > 0.0 { same } else { opp };
        let sx = self.stencil(x);
        let sy = self.stencil(y.abs());
        let mut v = 0.0;
        for a in 0..sx.len {
            for b in 0..sy.len {
                v += sx.w[a] * sy.w[b] * m[sx.idx[a] * self.n + sy.idx[b]];
            }
        }
        v
    }
}

/// Builds the discrete Duhamel operator row by row.
struct Assembler {
    kernel: Arc<StableKernel>,
    alpha: f64,
    kappa: f64,
    delta: f64,
    grid: LogGrid,
    line: LineRule,
    srule: GaussRule,
    opts: QuadratureOptions,
}

impl Assembler {
    /// Coefficients `c` with `(K R)(x, y) = sum c_k R_k` over the full `2 n^2` layout
    /// (`same` block first, then `opp`).
    fn row(&self, x: f64, y: f64, buf: &mut [f64], nodes: &mut Vec<(f64, f64)>) {
        buf.iter_mut().for_each(|v| *v = 0.0);
        let n = self.grid.n;
        let k = &*self.kernel;
        let a = self.alpha;
        let inv = 1.0 / k.p1(x - y);
        let s_lo = self.opts.s_floor * x.abs().powf(a).min(1.0);
        let t_lo = self.opts.s_floor * y.abs().powf(a).min(1.0);
        for (s, r, ws) in time_nodes(s_lo, t_lo, self.opts.s_ratio, &self.srule) {
            let cs = s.powf(-1.0 / a);
            let ct = r.powf(-1.0 / a);
            self.line.build(&[(x, 1.0 / cs), (y, 1.0 / ct)], self.grid.r_min / ct, a + self.delta, nodes);
            let ys = y * ct;
            let sy = self.grid.stencil(ys.abs());
            let pre = ws * cs * ct * self.kappa * inv;
            for &(z, wz) in nodes.iter() {
                let g = pre * wz * k.p1((x - z) * cs) * z.abs().powf(-a) * k.p1((z - y) * ct);
                let zs = z * ct;
                let (za, same) = if zs >= 0.0 { (zs, ys > 0.0) } else { (-zs, ys < 0.0) };
                let off = if same { 0 } else { n * n };
                let sz = self.grid.stencil(za);
                for i in 0..sz.len {
                    let gi = g * sz.w[i];
                    let base = off + sz.idx[i] * n;
                    for j in 0..sy.len {
                        buf[base + sy.idx[j]] += gi * sy.w[j];
                    }
                }
            }
        }
        let (xa, ya) = if x < 0.0 { (-x, -y) } else { (x, y) };
        let off = if ya > 0.0 { 0 } else { n * n };
        let sx = self.grid.stencil(xa);
        let sy = self.grid.stencil(ya.abs());
        let head = s_lo * self.kappa * x.abs().powf(-a);
        for i in 0..sx.len {
            for j in 0..sy.len {
                buf[off + sx.idx[i] * n + sy.idx[j]] += head * sx.w[i] * sy.w[j];
            }
        }
        buf[(n - 1) * n + n - 1] += t_lo * self.kappa * y.abs().powf(-a);
    }
}

/// Discretized `p~` on a signed geometric grid.
#[derive(Clone)]
pub struct KernelTable {
    pub params: ModelParams,
    /// Positive half of the space grid; the table covers `-grid` and `+grid`.
    pub grid: RadialGrid,
    pub times: Vec<f64>,
    /// `R(x_i, x_j)` for `x_i, x_j > 0`, row-major `n x n`.
    pub same: Vec<f64>,
    /// `R(x_i, -x_j)`, row-major `n x n`.
    pub opp: Vec<f64>,
    pub diagnostics: SolverDiagnostics,
    kernel: Arc<StableKernel>,
    geo: LogGrid,
}

impl std::fmt::Debug for KernelTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelTable")
            .field("params", &self.params)
            .field("n", &self.grid.len())
            .field("times", &self.times)
            .field("diagnostics", &self.diagnostics)
            .finish()
    }
}

fn check_params(params: &ModelParams) -> Result<()> {
    params.validate()?;
    if params.d != 1 {
        return domain(format!("the kernel table is one-dimensional, got d = {}", params.d));
    }
    if !(params.alpha < 1.0) {
        return domain(format!("alpha = {} must be below 1 for d = 1", params.alpha));
    }
    Ok(())
}

fn normalize_times(times: &[f64]) -> Result<Vec<f64>> {
    if times.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return domain("times must be positive and finite");
    }
    let mut t = times.to_vec();
    if !t.iter().any(|&v| v == 1.0) {
        t.push(1.0);
    }
    t.sort_by(|a, b| a.partial_cmp(b).unwrap());
    t.dedup();
    Ok(t)
}

/// Solves the stationary Duhamel equation for `R` and wraps it in a table.
pub fn solve_duhamel(params: &ModelParams, config: &SolverConfig, times: &[f64]) -> Result<KernelTable> {
    check_params(params)?;
    let times = normalize_times(times)?;
    let grid = make_graded_grid(config.r_min, config.r_max, config.ratio, 1)?;
    let n = grid.len();
    let kernel = StableKernel::shared(1, params.alpha)?;
    let geo = LogGrid { n, ln_r0: grid.nodes[0].ln(), h: grid.grading.ln(), r_min: grid.nodes[0], delta: params.delta };
    if params.kappa == 0.0 {
        return Ok(KernelTable {
            params: *params,
            grid,
            times,
            same: vec![1.0; n * n],
            opp: vec![1.0; n * n],
            diagnostics: SolverDiagnostics::default(),
            kernel,
            geo,
        });
    }
    let asm = Assembler {
        kernel: kernel.clone(),
        alpha: params.alpha,
        kappa: params.kappa,
        delta: params.delta,
        grid: geo,
        line: LineRule::from_options(&config.quadrature),
        srule: GaussRule::new(config.quadrature.s_points),
        opts: config.quadrature,
    };
    let mut reduced = vec![usize::MAX; 2 * n * n];
    let mut rows = Vec::new();
    for kind in 0..2 {
        for i in 0..n {
            for j in i..n {
                let r = rows.len();
                reduced[kind * n * n + i * n + j] = r;
                reduced[kind * n * n + j * n + i] = r;
                rows.push((kind, i, j));
            }
        }
    }
    let m = rows.len();
    let started = Instant::now();
    let mut mat = vec![0.0; m * m];
    let mut buf = vec![0.0; 2 * n * n];
    let mut nodes = Vec::new();
    let point = |kind: usize, i: usize, j: usize| {
        let x = grid.nodes[i];
        let y = if kind == 0 { grid.nodes[j] } else { -grid.nodes[j] };
        (x, y)
    };
    for (r, &(kind, i, j)) in rows.iter().enumerate() {
        let (x, y) = point(kind, i, j);
        asm.row(x, y, &mut buf, &mut nodes);
        let out = &mut mat[r * m..(r + 1) * m];
        for (f, &c) in buf.iter().enumerate() {
            if c != 0.0 {
                out[reduced[f]] += c;
            }
        }
    }
    let assembly_seconds = started.elapsed().as_secs_f64();
    let started = Instant::now();
    let rhs = vec![1.0; m];
    let (u, products, residual) =
        gmres_identity_minus(&mat, &rhs, config.restart, config.tol, config.max_products)?;
    let solve_seconds = started.elapsed().as_secs_f64();
    drop(mat);
    let mut same = vec![0.0; n * n];
    let mut opp = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            same[i * n + j] = u[reduced[i * n + j]];
            opp[i * n + j] = u[reduced[n * n + i * n + j]];
        }
    }
    if u.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Check("solver produced a non-positive ratio".into()));
    }
    let mut transpose_residual: f64 = 0.0;
    let mut transpose_worst = (0.0, 0.0);
    let step = (n / config.residual_samples.max(1)).max(1);
    let mut count = 0;
    'outer: for kind in 0..2 {
        for i in (0..n).step_by(step) {
            for j in (0..i).step_by(step.max(2)) {
                if count >= config.residual_samples {
                    break 'outer;
                }
                count += 1;
                let x = grid.nodes[i];
                let y = if kind == 0 { grid.nodes[j] } else { -grid.nodes[j] };
                asm.row(x, y, &mut buf, &mut nodes);
                let ku: f64 = buf.iter().enumerate().filter(|(_, &c)| c != 0.0).map(|(f, c)| c * u[reduced[f]]).sum();
                let lhs = geo.eval(&same, &opp, x, y);
                let res = ((lhs - 1.0 - ku) / lhs).abs();
                if res > transpose_residual {
                    transpose_residual = res;
                    transpose_worst = (x, y);
                }
            }
        }
    }
    Ok(KernelTable {
        params: *params,
        grid,
        times,
        same,
        opp,
        diagnostics: SolverDiagnostics {
            unknowns: m,
            matrix_products: products,
            residual,
            transpose_residual,
            transpose_worst,
            assembly_seconds,
            solve_seconds,
        },
        kernel,
        geo,
    })
}

impl KernelTable {
    pub fn kernel(&self) -> &StableKernel {
        &self.kernel
    }

    /// `R(x, y) = p~(1, x, y) / p(1, x, y)` with grid extensions.
    #[inline]
    pub fn ratio(&self, x: f64, y: f64) -> f64 {
        self.geo.eval(&self.same, &self.opp, x, y)
    }

    /// Free kernel `p(t, x, y)`.
    #[inline]
    pub fn free(&self, t: f64, x: f64, y: f64) -> f64 {
        self.kernel.density(t, x - y)
    }

    /// `p~(t, x, y)` by scaling, without range checks.
    #[inline]
    pub fn ptilde(&self, t: f64, x: f64, y: f64) -> f64 {
        let c = t.powf(-1.0 / self.params.alpha);
        c * self.kernel.p1((x - y) * c) * self.ratio(x * c, y * c)
    }

    /// Doob-conditioned density `rho_t(x, y) = p~(t, x, y) |x|^delta |y|^delta`.
    pub fn rho(&self, t: f64, x: f64, y: f64) -> f64 {
        let d = self.params.delta;
        self.ptilde(t, x, y) * x.abs().powf(d) * y.abs().powf(d)
    }

    /// Signed nodes `-r_{n-1}, ..., -r_0, r_0, ..., r_{n-1}`.
    pub fn signed_nodes(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.grid.nodes.iter().rev().map(|r| -r).collect();
        v.extend(self.grid.nodes.iter());
        v
    }

    /// `p~(t, x_j, x_k)` on the signed grid, row-major.
    pub fn slice(&self, t: f64) -> Vec<f64> {
        let xs = self.signed_nodes();
        let mut out = Vec::with_capacity(xs.len() * xs.len());
        for &x in &xs {
            for &y in &xs {
                out.push(self.ptilde(t, x, y));
            }
        }
        out
    }

    /// Quadrature nodes for an integral in `y` of `p~(t, x, y) g(y)` where `g` is smooth
    /// away from the origin and the product behaves like `|y|^{-sigma}` there.
    pub(crate) fn line_nodes(
        &self,
        peaks: &[(f64, f64)],
        t_min: f64,
        sigma: f64,
        decay: Option<f64>,
        opts: &QuadratureOptions,
    ) -> Vec<(f64, f64)> {
        let mut line = LineRule::from_options(opts);
        if let Some(d) = decay {
            line = line.with_tail(d);
        }
        let mut out = Vec::new();
        line.build(peaks, self.grid.r_min() * t_min.powf(1.0 / self.params.alpha), sigma, &mut out);
        out
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(MAGIC)?;
        f.write_all(&FORMAT_VERSION.to_le_bytes())?;
        f.write_all(&(self.params.d as u32).to_le_bytes())?;
        for v in [self.params.alpha, self.params.delta, self.params.kappa, self.grid.r_min(), self.grid.grading] {
            f.write_all(&v.to_le_bytes())?;
        }
        f.write_all(&(self.grid.len() as u32).to_le_bytes())?;
        f.write_all(&(self.times.len() as u32).to_le_bytes())?;
        for &t in &self.times {
            f.write_all(&t.to_le_bytes())?;
        }
        for &t in &self.times {
            for v in self.slice(t) {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<KernelTable> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        f.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a kernel table file".into()));
        }
        let version = read_u32(&mut f)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported table version {version}")));
        }
        let d = read_u32(&mut f)? as usize;
        let alpha = read_f64(&mut f)?;
        let delta = read_f64(&mut f)?;
        let kappa = read_f64(&mut f)?;
        let r_min = read_f64(&mut f)?;
        let ratio = read_f64(&mut f)?;
        let n = read_u32(&mut f)? as usize;
        let nt = read_u32(&mut f)? as usize;
        let times = (0..nt).map(|_| read_f64(&mut f)).collect::<Result<Vec<f64>>>()?;
        let params = ModelParams { d, alpha, delta, kappa };
        check_params(&params)?;
        let unit = times
            .iter()
            .position(|&t| t == 1.0)
            .ok_or_else(|| Error::Format("table has no unit-time slice".into()))?;
        let grid = make_radial_grid_exact(r_min, ratio, n)?;
        let side = 2 * n;
        let mut slice = vec![0.0; side * side];
        for k in 0..nt {
            for v in slice.iter_mut() {
                *v = read_f64(&mut f)?;
            }
            if k == unit {
                break;
            }
        }
        let kernel = StableKernel::shared(1, alpha)?;
        let mut same = vec![0.0; n * n];
        let mut opp = vec![0.0; n * n];
        for i in 0..n {
            let x = grid.nodes[i];
            let row = (n + i) * side;
            for j in 0..n {
                let y = grid.nodes[j];
                same[i * n + j] = slice[row + n + j] / kernel.p1(x - y);
                opp[i * n + j] = slice[row + n - 1 - j] / kernel.p1(x + y);
            }
        }
        let geo = LogGrid { n, ln_r0: r_min.ln(), h: ratio.ln(), r_min, delta };
        Ok(KernelTable { params, grid, times, same, opp, diagnostics: SolverDiagnostics::default(), kernel, geo })
    }

    /// Writes `x,y,ptilde,free,ratio` for all signed node pairs at time `t`.
    pub fn write_slice_csv(&self, t: f64, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "x,y,ptilde,free,ratio")?;
        let xs = self.signed_nodes();
        for &x in &xs {
            for &y in &xs {
                let pt = self.ptilde(t, x, y);
                let p = self.free(t, x, y);
                writeln!(f, "{x:.17e},{y:.17e},{pt:.17e},{p:.17e},{:.17e}", pt / p)?;
            }
        }
        Ok(())
    }
}

fn make_radial_grid_exact(r_min: f64, ratio: f64, n: usize) -> Result<RadialGrid> {
    crate::numerics::make_radial_grid(r_min, r_min * ratio.powi(n as i32 - 1), n, 1)
}

fn read_u32(f: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    f.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(f: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    f.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// `p~(t, x, y)` with the scaled arguments required to lie in the table range.
pub fn ptilde_at(table: &KernelTable, t: f64, x: f64, y: f64) -> Result<f64> {
    if !(t > 0.0) {
        return domain(format!("time t = {t} must be positive"));
    }
    let c = t.powf(-1.0 / table.params.alpha);
    let (lo, hi) = (table.grid.r_min(), table.grid.r_max());
    for v in [x * c, y * c] {
        let a = v.abs();
        if a < lo * (1.0 - 1e-12) || a > hi * (1.0 + 1e-12) {
            return Err(Error::Extrapolation(format!(
                "scaled point {v:e} outside the table range [{lo:e}, {hi:e}]"
            )));
        }
    }
    Ok(table.ptilde(t, x, y))
}

/// Term `p_n` of the perturbation series by nested quadrature.
pub fn perturbation_term(params: &ModelParams, n: u8, t: f64, x: f64, y: f64, opts: &QuadratureOptions) -> Result<f64> {
    check_params(params)?;
    if x == 0.0 || y == 0.0 {
        return domain("the perturbation terms are evaluated off the origin");
    }
    if !(t > 0.0) {
        return domain(format!("time t = {t} must be positive"));
    }
    let k = StableKernel::shared(1, params.alpha)?;
    let c = t.powf(-1.0 / params.alpha);
    let (x, y) = (x * c, y * c);
    let v = match n {
        0 => k.p1(x - y),
        1 => first_term(&k, params, x, y, opts),
        2 => second_term(&k, params, x, y, opts),
        _ => return domain(format!("perturbation order {n} not in 0..=2")),
    };
    Ok(c * v)
}

fn first_term(k: &StableKernel, params: &ModelParams, x: f64, y: f64, opts: &QuadratureOptions) -> f64 {
    let a = params.alpha;
    let line = LineRule::from_options(opts);
    let rule = GaussRule::new(opts.s_points);
    let s_lo = opts.s_floor * x.abs().powf(a).min(1.0);
    let t_lo = opts.s_floor * y.abs().powf(a).min(1.0);
    let q = |z: f64| params.kappa * z.abs().powf(-a);
    let mut nodes = Vec::new();
    let mut sum = (s_lo * q(x) + t_lo * q(y)) * k.p1(x - y);
    let origin_w = x.abs().min(y.abs());
    for (s, r, ws) in time_nodes(s_lo, t_lo, opts.s_ratio, &rule) {
        let cs = s.powf(-1.0 / a);
        let ct = r.powf(-1.0 / a);
        line.build(&[(x, 1.0 / cs), (y, 1.0 / ct)], origin_w, a, &mut nodes);
        let mut inner = 0.0;
        for &(z, wz) in &nodes {
            inner += wz * k.p1((x - z) * cs) * q(z) * k.p1((z - y) * ct);
        }
        sum += ws * cs * ct * inner;
    }
    sum
}

fn second_term(k: &StableKernel, params: &ModelParams, x: f64, y: f64, opts: &QuadratureOptions) -> f64 {
    let a = params.alpha;
    let inner_opts = QuadratureOptions::coarse();
    let line = LineRule::from_options(opts);
    let rule = GaussRule::new(opts.s_points);
    let s_lo = opts.s_floor * x.abs().powf(a).min(1.0);
    let t_lo = opts.s_floor * y.abs().powf(a).min(1.0);
    let q = |z: f64| params.kappa * z.abs().powf(-a);
    let mut nodes = Vec::new();
    let mut sum = s_lo * q(x) * first_term(k, params, x, y, &inner_opts);
    let origin_w = x.abs().min(y.abs());
    for (s, r, ws) in time_nodes(s_lo, t_lo, opts.s_ratio, &rule) {
        let cs = s.powf(-1.0 / a);
        let ct = r.powf(-1.0 / a);
        line.build(&[(x, 1.0 / cs), (y, 1.0 / ct)], origin_w, a, &mut nodes);
        let mut inner = 0.0;
        for &(z, wz) in &nodes {
            let p1 = ct * first_term(k, params, z * ct, y * ct, &inner_opts);
            inner += wz * k.p1((x - z) * cs) * q(z) * p1;
        }
        sum += ws * cs * inner;
    }
    sum
}

/// Extremes of `p~ / [(t^{-1/a} ∧ t |x-y|^{-1-a}) (1 + t^{delta/a} |x|^{-delta}) (1 + t^{delta/a} |y|^{-delta})]`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ComparabilityReport {
    pub t: f64,
    pub min: f64,
    pub max: f64,
    pub argmin: (f64, f64),
    pub argmax: (f64, f64),
}

impl ComparabilityReport {
    pub fn spread(&self) -> f64 {
        self.max / self.min
    }
}

/// Comparability of the table with the two-sided bound over the grid points scaled to time `t`.
pub fn comparability_report(table: &KernelTable, t: f64) -> ComparabilityReport {
    let a = table.params.alpha;
    let d = table.params.delta;
    let c = t.powf(1.0 / a);
    let xs: Vec<f64> = table.signed_nodes().iter().map(|v| v * c).collect();
    let mut rep = ComparabilityReport { t, min: f64::INFINITY, max: 0.0, argmin: (0.0, 0.0), argmax: (0.0, 0.0) };
    let td = t.powf(d / a);
    for &x in &xs {
        for &y in &xs {
            let free = t.powf(-1.0 / a).min(t * (x - y).abs().powf(-1.0 - a));
            let hx = 1.0 + td * x.abs().powf(-d);
            let hy = 1.0 + td * y.abs().powf(-d);
            let r = table.ptilde(t, x, y) / (free * hx * hy);
            if r < rep.min {
                rep.min = r;
                rep.argmin = (x, y);
            }
            if r > rep.max {
                rep.max = r;
                rep.argmax = (x, y);
            }
        }
    }
    rep
}

/// `int p~(t, x, y) g(y) dy` where `g` behaves like `|y|^{-gamma}` near zero and like
/// `|y|^{-gamma_far}` at infinity.
pub fn integrate_against(table: &KernelTable, t: f64, x: f64, gamma: f64, gamma_far: f64, g: impl Fn(f64) -> f64) -> f64 {
    let opts = QuadratureOptions::default();
    let w = t.powf(1.0 / table.params.alpha);
    let decay = 1.0 + table.params.alpha + gamma_far;
    let nodes = table.line_nodes(&[(x, w)], t, table.params.delta + gamma, Some(decay), &opts);
    nodes.iter().map(|&(y, wy)| wy * table.ptilde(t, x, y) * g(y)).sum()
}

/// `int_a^b p~(t, x, y) dy` for `0 < a < b` or `a < b < 0`, graded toward `x` when it lies inside.
pub fn integrate_interval(table: &KernelTable, t: f64, x: f64, a: f64, b: f64) -> Result<f64> {
    if !(a < b) || (a <= 0.0 && b >= 0.0) {
        return domain(format!("interval [{a}, {b}] must avoid the origin"));
    }
    let rule = GaussRule::new(8);
    let w = PEAK_WIDTH * t.powf(1.0 / table.params.alpha);
    let mut total = 0.0;
    let mut graded = |lo: f64, hi: f64, toward_lo: bool| {
        let len = hi - lo;
        let mut u = 0.0;
        let mut step = w.min(len);
        while u < len {
            let v = (u + step).min(len);
            let (p, q) = if toward_lo { (lo + u, lo + v) } else { (hi - v, hi - u) };
            total += rule.integrate(p, q, |y| table.ptilde(t, x, y));
            u = v;
            step = (2.0 * step).min(len);
        }
    };
    if x > a && x < b {
        graded(a, x, false);
        graded(x, b, true);
    } else if x <= a {
        graded(a, b, true);
    } else {
        graded(a, b, false);
    }
    Ok(total)
}

/// Relative defect `|int p~(t, x, y) |y|^{-delta} dy - |x|^{-delta}| / |x|^{-delta}`.
pub fn h_invariance_defect(table: &KernelTable, t: f64, x: f64) -> f64 {
    let d = table.params.delta;
    let v = integrate_against(table, t, x, d, d, |y| y.abs().powf(-d));
    let h = x.abs().powf(-d);
    (v - h).abs() / h
}

/// `int p~(t, x, y) dy`.
pub fn mass(table: &KernelTable, t: f64, x: f64) -> f64 {
    integrate_against(table, t, x, 0.0, 0.0, |_| 1.0)
}

/// Relative defect of `int p~(s, x, z) p~(t, z, y) dz = p~(s + t, x, y)`.
pub fn chapman_kolmogorov_defect(table: &KernelTable, s: f64, t: f64, x: f64, y: f64) -> f64 {
    let a = table.params.alpha;
    let opts = QuadratureOptions::default();
    let nodes = table.line_nodes(&[(x, s.powf(1.0 / a)), (y, t.powf(1.0 / a))], s.min(t), 2.0 * table.params.delta, Some(2.0 + 2.0 * table.params.alpha), &opts);
    let v: f64 = nodes.iter().map(|&(z, w)| w * table.ptilde(s, x, z) * table.ptilde(t, z, y)).sum();
    let want = table.ptilde(s + t, x, y);
    (v - want).abs() / want
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_rule_integrates_model_functions() {
        let line = LineRule::new(5, 3.0, 1e4);
        let mut nodes = Vec::new();
        line.build(&[(0.7, 1e-3), (-2.0, 0.3)], 1e-3, 0.75, &mut nodes);
        let v: f64 = nodes.iter().map(|&(z, w)| w * z.abs().powf(-0.75) * (-z * z).exp()).sum();
        let exact = crate::special::gamma(0.125);
        assert!((v / exact - 1.0).abs() < 1e-5, "{v} vs {exact}");
        let cauchy: f64 = nodes.iter().map(|&(z, w)| w * 1e-4 / std::f64::consts::PI / ((z - 0.7).powi(2) + 1e-8)).sum();
        assert!((cauchy - 1.0).abs() < 1e-3, "{cauchy}");
    }

    #[test]
    fn free_chapman_kolmogorov_through_rule() {
        let k = StableKernel::shared(1, 0.5).unwrap();
        let line = LineRule::new(5, 3.0, 1e4);
        let mut nodes = Vec::new();
        let (s, t, x, y) = (0.01f64, 0.3f64, 0.2, -1.5);
        line.build(&[(x, s * s), (y, t * t)], 1e-3, 0.0, &mut nodes);
        let v: f64 = nodes.iter().map(|&(z, w)| w * k.density(s, x - z) * k.density(t, z - y)).sum();
        let want = k.density(s + t, x - y);
        assert!((v / want - 1.0).abs() < 1e-5, "{v} vs {want}");
    }

    #[test]
    fn interpolation_reproduces_nodes_and_extension() {
        let g = LogGrid { n: 10, ln_r0: 1e-3f64.ln(), h: 2f64.ln(), r_min: 1e-3, delta: 0.2 };
        let mut same = vec![0.0; 100];
        for i in 0..10 {
            for j in 0..10 {
                same[i * 10 + j] = 1.0 + i as f64 + 10.0 * j as f64;
            }
        }
        let opp = same.clone();
        let r = |i: usize| 1e-3 * 2f64.powi(i as i32);
        assert!((g.eval(&same, &opp, r(3), r(5)) - 54.0).abs() < 1e-10);
        assert!((g.eval(&same, &opp, -r(3), r(5)) - 54.0).abs() < 1e-10);
        let below = g.eval(&same, &opp, 1e-4, r(2));
        assert!((below - 21.0 * 10f64.powf(0.2)).abs() < 1e-10);
        assert!((g.eval(&same, &opp, 1e6, r(0)) - 10.0).abs() < 1e-10);
    }
}

