//! Logarithmic radial grids, profile quadrature, weighted norms and zero extrapolation.

use crate::error::{domain, Error, Result};
use crate::special::{sphere_area, GL8};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Geometric grid on `[r_min, r_max]` with cell weights for `int f(r) r^{d-1} dr`.
///
/// On each cell the integrand is replaced by the cubic through the four nearest nodes
/// (in `log r`) and integrated exactly against `r^{d-1} dr`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub d: usize,
    pub grading: f64,
}

impl RadialGrid {
    pub fn r_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn r_max(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Fractional index of radius `r` in log coordinates.
    #[inline]
    pub fn position(&self, r: f64) -> f64 {
        (r / self.nodes[0]).ln() / self.grading.ln()
    }

    /// Same grid with the weights recomputed for another dimension.
    pub fn with_dimension(&self, d: usize) -> RadialGrid {
        let mut g = self.clone();
        g.d = d;
        g.weights = cell_weights(&g.nodes, d);
        g
    }
}

/// Builds a log-spaced grid with `n_nodes` nodes.
pub fn make_radial_grid(r_min: f64, r_max: f64, n_nodes: usize, d: usize) -> Result<RadialGrid> {
    if !(r_min > 0.0 && r_max > r_min && r_max.is_finite()) {
        return domain(format!("grid needs 0 < r_min < r_max, got {r_min}, {r_max}"));
    }
    if n_nodes < 16 {
        return domain(format!("grid needs at least 16 nodes, got {n_nodes}"));
    }
    if d == 0 {
        return domain("dimension must be positive");
    }
    let ratio = (r_max / r_min).powf(1.0 / (n_nodes - 1) as f64);
    let nodes: Vec<f64> = (0..n_nodes)
        .map(|i| if i + 1 == n_nodes { r_max } else { r_min * ratio.powi(i as i32) })
        .collect();
    let weights = cell_weights(&nodes, d);
    Ok(RadialGrid { nodes, weights, d, grading: ratio })
}

/// Builds a geometric grid with the given ratio, extending `r_max` to a whole number of steps.
pub fn make_graded_grid(r_min: f64, r_max: f64, ratio: f64, d: usize) -> Result<RadialGrid> {
    if !(ratio > 1.0) {
        return domain("grading ratio must exceed 1");
    }
    let steps = ((r_max / r_min).ln() / ratio.ln()).ceil() as usize;
    make_radial_grid(r_min, r_min * ratio.powi(steps as i32), steps + 1, d)
}

fn cell_weights(nodes: &[f64], d: usize) -> Vec<f64> {
    let n = nodes.len();
    let u: Vec<f64> = nodes.iter().map(|r| r.ln()).collect();
    let mut w = vec![0.0; n];
    for c in 0..n - 1 {
        let start = c.saturating_sub(1).min(n - 4);
        let idx = [start, start + 1, start + 2, start + 3];
        for (uq, wq) in GL8.points(u[c], u[c + 1]) {
            let meas = wq * (d as f64 * uq).exp();
            for (a, &ia) in idx.iter().enumerate() {
                let mut l = 1.0;
                for (b, &ib) in idx.iter().enumerate() {
                    if a != b {
                        l *= (uq - u[ib]) / (u[ia] - u[ib]);
                    }
                }
                w[ia] += l * meas;
            }
        }
    }
    if w.iter().all(|&v| v > 0.0) {
        return w;
    }
    // Very coarse grids: piecewise linear in log r keeps every weight positive.
    let mut w = vec![0.0; n];
    for c in 0..n - 1 {
        let h = u[c + 1] - u[c];
        for (uq, wq) in GL8.points(u[c], u[c + 1]) {
            let meas = wq * (d as f64 * uq).exp();
            let t = (uq - u[c]) / h;
            w[c] += (1.0 - t) * meas;
            w[c + 1] += t * meas;
        }
    }
    w
}

/// Radial function sampled on a grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Profile {
    pub grid: RadialGrid,
    pub values: Vec<f64>,
    pub label: String,
    /// Power `r^g` used below the first node; fitted from the first two nodes when absent.
    pub head_exponent: Option<f64>,
    /// Power `r^g` used beyond the last node; fitted from the last two nodes when absent.
    pub tail_exponent: Option<f64>,
}

impl Profile {
    pub fn new(grid: RadialGrid, values: Vec<f64>, label: &str) -> Self {
        Profile { grid, values, label: label.to_string(), head_exponent: None, tail_exponent: None }
    }

    pub fn from_fn(grid: &RadialGrid, label: &str, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes.iter().map(|&r| f(r)).collect();
        Profile::new(grid.clone(), values, label)
    }

    pub fn with_exponents(mut self, head: Option<f64>, tail: Option<f64>) -> Self {
        self.head_exponent = head;
        self.tail_exponent = tail;
        self
    }

    pub fn map(&self, label: &str, f: impl Fn(f64, f64) -> f64) -> Profile {
        let values = self.grid.nodes.iter().zip(&self.values).map(|(&r, &v)| f(r, v)).collect();
        Profile {
            grid: self.grid.clone(),
            values,
            label: label.to_string(),
            head_exponent: None,
            tail_exponent: None,
        }
    }

    fn positive(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }

    pub fn head_power(&self) -> f64 {
        self.head_exponent.unwrap_or_else(|| fitted_power(&self.grid.nodes[..2], &self.values[..2]))
    }

    pub fn tail_power(&self) -> f64 {
        let n = self.values.len();
        self.tail_exponent
            .unwrap_or_else(|| fitted_power(&self.grid.nodes[n - 2..], &self.values[n - 2..]))
    }

    /// Interpolated value; cubic in log-log for positive profiles, power-law extensions outside.
    pub fn eval(&self, r: f64) -> f64 {
        let g = &self.grid;
        let n = g.len();
        let r = r.abs();
        if r <= g.nodes[0] {
            return self.values[0] * if r == g.nodes[0] { 1.0 } else { (r / g.nodes[0]).powf(self.head_power()) };
        }
        if r >= g.nodes[n - 1] {
            return self.values[n - 1] * (r / g.nodes[n - 1]).powf(self.tail_power());
        }
        let pos = g.position(r).clamp(0.0, (n - 1) as f64);
        if self.positive() {
            cubic_at(pos, n, |i| self.values[i].ln()).exp()
        } else {
            cubic_at(pos, n, |i| self.values[i])
        }
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "r,value")?;
        for (r, v) in self.grid.nodes.iter().zip(&self.values) {
            writeln!(f, "{r:.17e},{v:.17e}")?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "label": self.label,
            "grid": {
                "d": self.grid.d,
                "r_min": self.grid.r_min(),
                "r_max": self.grid.r_max(),
                "n_nodes": self.grid.len(),
                "grading": self.grid.grading,
            },
            "r": self.grid.nodes,
            "value": self.values,
        })
    }
}

fn fitted_power(r: &[f64], v: &[f64]) -> f64 {
    if v[0] > 0.0 && v[1] > 0.0 {
        (v[1] / v[0]).ln() / (r[1] / r[0]).ln()
    } else {
        0.0
    }
}

/// Four-point Lagrange interpolation at fractional index `pos` of a uniform sequence.
#[inline]
pub fn cubic_at(pos: f64, n: usize, value: impl Fn(usize) -> f64) -> f64 {
    let i = (pos.floor() as usize).min(n - 2);
    let start = i.saturating_sub(1).min(n.saturating_sub(4));
    let t = pos - start as f64;
    let w = cubic_weights(t);
    (0..4).map(|k| w[k] * value(start + k)).sum()
}

/// Lagrange weights for nodes 0,1,2,3 evaluated at `t`.
#[inline]
pub fn cubic_weights(t: f64) -> [f64; 4] {
    let a = t;
    let b = t - 1.0;
    let c = t - 2.0;
    let e = t - 3.0;
    [-b * c * e / 6.0, a * c * e / 2.0, -a * b * e / 2.0, a * b * c / 6.0]
}

/// `omega_{d-1} int_0^inf f(r) r^{d-1} dr`, with power-law head and tail pieces.
///
/// The head below the first node is always added. The tail beyond the last node is added
/// only when the tail power is integrable.
pub fn integrate_radial(f: &Profile, d: usize) -> f64 {
    let grid = if f.grid.d == d { f.grid.clone() } else { f.grid.with_dimension(d) };
    let mut s: f64 = grid.weights.iter().zip(&f.values).map(|(w, v)| w * v).sum();
    let df = d as f64;
    let g0 = f.head_power();
    if g0 + df > 0.0 {
        s += f.values[0] * grid.nodes[0].powf(df) / (g0 + df);
    }
    let n = grid.len();
    let g1 = f.tail_power();
    if g1 + df < 0.0 && f.tail_exponent.is_some() || g1 + df < -1e-3 && f.tail_exponent.is_none() && decaying(f) {
        s += f.values[n - 1] * grid.nodes[n - 1].powf(df) / (-(g1 + df));
    }
    sphere_area(d) * s
}

fn decaying(f: &Profile) -> bool {
    let n = f.values.len();
    f.values[n - 1].abs() < f.values[n - 2].abs()
}

/// Same as [`integrate_radial`] without any tail contribution beyond the last node.
pub fn integrate_radial_truncated(f: &Profile, d: usize) -> f64 {
    let grid = if f.grid.d == d { f.grid.clone() } else { f.grid.with_dimension(d) };
    let mut s: f64 = grid.weights.iter().zip(&f.values).map(|(w, v)| w * v).sum();
    let g0 = f.head_power();
    if g0 + d as f64 > 0.0 {
        s += f.values[0] * grid.nodes[0].powf(d as f64) / (g0 + d as f64);
    }
    sphere_area(d) * s
}

/// `||f||_{q,h} = (int |f|^q |x|^{-delta(2-q)} dx)^{1/q}`, or the grid sup of `|f| |x|^delta`.
pub fn weighted_norm(f: &Profile, q: f64, delta: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return domain(format!("norm exponent q = {q} must be at least 1"));
    }
    let d = f.grid.d;
    if q.is_infinite() {
        return Ok(f
            .grid
            .nodes
            .iter()
            .zip(&f.values)
            .map(|(&r, &v)| v.abs() * r.powf(delta))
            .fold(0.0, f64::max));
    }
    let g = f.map("norm", |r, v| v.abs().powf(q) * r.powf(-delta * (2.0 - q)));
    let g = match (f.head_exponent, f.tail_exponent) {
        (Some(a), Some(b)) => {
            let (a, b) = (a * q - delta * (2.0 - q), b * q - delta * (2.0 - q));
            g.with_exponents(Some(a), Some(b))
        }
        _ => g,
    };
    Ok(integrate_radial(&g, d).powf(1.0 / q))
}

/// Function on the signed line sampled at `±grid.nodes`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignedProfile {
    pub grid: RadialGrid,
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

impl SignedProfile {
    pub fn half(&self, positive: bool) -> Profile {
        Profile::new(self.grid.clone(), if positive { self.pos.clone() } else { self.neg.clone() }, "half")
    }

    /// `int_R f(x) dx` over both half-lines.
    pub fn integral(&self) -> f64 {
        0.5 * (integrate_radial(&self.half(true), 1) + integrate_radial(&self.half(false), 1))
    }

    /// Weighted norm over the line.
    pub fn weighted_norm(&self, q: f64, delta: f64) -> Result<f64> {
        if !(q >= 1.0) {
            return domain(format!("norm exponent q = {q} must be at least 1"));
        }
        if q.is_infinite() {
            let a = weighted_norm(&self.half(true), q, delta)?;
            let b = weighted_norm(&self.half(false), q, delta)?;
            return Ok(a.max(b));
        }
        let a = weighted_norm(&self.half(true), q, delta)?.powf(q);
        let b = weighted_norm(&self.half(false), q, delta)?.powf(q);
        Ok((0.5 * (a + b)).powf(1.0 / q))
    }
}

/// Result of a zero-radius extrapolation.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Extrapolated {
    pub value: f64,
    pub exponent: f64,
    pub residual: f64,
}

/// Extrapolates `v(r) = v0 + c r^g` to `r = 0` from geometrically decreasing samples.
pub fn extrapolate_to_zero(samples: &[(f64, f64)]) -> Result<Extrapolated> {
    if samples.len() < 3 {
        return Err(Error::Extrapolation("need at least three samples".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let n = s.len();
    let (r0, v0) = s[n - 3];
    let (r1, v1) = s[n - 2];
    let (r2, v2) = s[n - 1];
    let g = r0 / r1;
    if ((r1 / r2) / g - 1.0).abs() > 1e-6 || !(g > 1.0) {
        return Err(Error::Extrapolation("radii are not geometric".into()));
    }
    let d1 = v0 - v1;
    let d2 = v1 - v2;
    let scale = v0.abs().max(v1.abs()).max(v2.abs()).max(1e-300);
    if d1.abs() < 1e-13 * scale && d2.abs() < 1e-13 * scale {
        return Ok(Extrapolated { value: v2, exponent: f64::INFINITY, residual: 0.0 });
    }
    let ratio = d1 / d2;
    if !(ratio > 1.0 + 1e-9) || !ratio.is_finite() {
        return Err(Error::Extrapolation(format!("differences {d1:e}, {d2:e} not geometrically decaying")));
    }
    let exponent = ratio.ln() / g.ln();
    let value = v2 - d2 / (ratio - 1.0);
    let c = d2 / (r1.powf(exponent) - r2.powf(exponent));
    let residual = if n >= 4 {
        let (r3, v3) = s[n - 4];
        (value + c * r3.powf(exponent) - v3).abs() / scale
    } else {
        0.0
    };
    Ok(Extrapolated { value, exponent, residual })
}

/// Restarted GMRES for `u - K u = b` with `K` dense and row-major.
///
/// Returns the solution, the number of matrix products and the final relative residual.
pub fn gmres_identity_minus(
    k: &[f64],
    b: &[f64],
    restart: usize,
    tol: f64,
    max_products: usize,
) -> Result<(Vec<f64>, usize, f64)> {
    let n = b.len();
    assert_eq!(k.len(), n * n);
    let apply = |u: &[f64], out: &mut [f64]| {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &k[i * n..(i + 1) * n];
            *o = u[i] - row.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
        }
    };
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let mut u = b.to_vec();
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut products = 0;
    loop {
        apply(&u, &mut w);
        products += 1;
        for i in 0..n {
            r[i] = b[i] - w[i];
        }
        let beta = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if beta / nb < tol {
            return Ok((u, products, beta / nb));
        }
        if products >= max_products {
            return Err(Error::NoConvergence { iterations: products, defect: beta / nb });
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut m = 0;
        while m < restart && products < max_products {
            apply(&v[m], &mut w);
            products += 1;
            for (j, vj) in v.iter().enumerate() {
                let hj = w.iter().zip(vj).map(|(a, b)| a * b).sum::<f64>();
                h[j][m] = hj;
                for (wi, vi) in w.iter_mut().zip(vj) {
                    *wi -= hj * vi;
                }
            }
            let hn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            h[m + 1][m] = hn;
            for j in 0..m {
                let t = cs[j] * h[j][m] + sn[j] * h[j + 1][m];
                h[j + 1][m] = -sn[j] * h[j][m] + cs[j] * h[j + 1][m];
                h[j][m] = t;
            }
            let den = (h[m][m] * h[m][m] + h[m + 1][m] * h[m + 1][m]).sqrt();
            cs[m] = h[m][m] / den;
            sn[m] = h[m + 1][m] / den;
            h[m][m] = den;
            h[m + 1][m] = 0.0;
            g[m + 1] = -sn[m] * g[m];
            g[m] *= cs[m];
            m += 1;
            if g[m].abs() / nb < tol || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|x| x / hn).collect());
        }
        let mut y = vec![0.0; m];
        for i in (0..m).rev() {
            let mut s = g[i];
            for j in i + 1..m {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (ui, vi) in u.iter_mut().zip(&v[j]) {
                *ui += yj * vi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ball_volume() {
        for d in 1..=3 {
            let g = make_radial_grid(1e-3, 10.0, 256, d).unwrap();
            let one = Profile::from_fn(&g, "one", |_| 1.0).with_exponents(Some(0.0), Some(0.0));
            let vol = integrate_radial_truncated(&one, d);
            let exact = sphere_area(d) * 10f64.powi(d as i32) / d as f64;
            assert!((vol / exact - 1.0).abs() < 1e-6, "d={d}: {vol} vs {exact}");
        }
    }

    #[test]
    fn power_and_exponential_integrals() {
        let g = make_radial_grid(1e-3, 1.0, 256, 1).unwrap();
        let p = Profile::from_fn(&g, "p", |r| r.powf(-0.25));
        let v = integrate_radial_truncated(&p, 1);
        assert!((v / (2.0 / 0.75) - 1.0).abs() < 1e-5);
        let g3 = make_radial_grid(1e-3, 10.0, 256, 3).unwrap();
        let e = Profile::from_fn(&g3, "e", |r| (-r).exp());
        let v = integrate_radial_truncated(&e, 3);
        let exact = 4.0 * PI * (2.0 - (-10f64).exp() * 122.0);
        assert!((v / exact - 1.0).abs() < 1e-5, "{v} vs {exact}");
    }

    #[test]
    fn extrapolation_examples() {
        let s: Vec<(f64, f64)> = [1e-2, 1e-3, 1e-4].iter().map(|&r| (r, 3.0 + r)).collect();
        assert!((extrapolate_to_zero(&s).unwrap().value - 3.0).abs() < 1e-8);
        let s: Vec<(f64, f64)> = [1e-2, 1e-3, 1e-4].iter().map(|&r: &f64| (r, 1.0 + r.sqrt())).collect();
        let e = extrapolate_to_zero(&s).unwrap();
        assert!((e.value - 1.0).abs() < 1e-4);
        assert!((e.exponent - 0.5).abs() < 1e-8);
        let bad = vec![(1e-2, 1.0), (1e-3, 2.0), (1e-4, 1.0)];
        assert!(extrapolate_to_zero(&bad).is_err());
    }

    #[test]
    fn gmres_small_system() {
        let n = 40;
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                k[i * n + j] = 0.9 / n as f64 * (1.0 + ((i * 7 + j * 3) % 5) as f64 * 0.1);
            }
        }
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.01).collect();
        let (u, _, res) = gmres_identity_minus(&k, &b, 8, 1e-12, 500).unwrap();
        assert!(res < 1e-12);
        for i in 0..n {
            let ku: f64 = (0..n).map(|j| k[i * n + j] * u[j]).sum();
            assert!((u[i] - ku - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn norm_q2_and_q1() {
        let g = make_radial_grid(1e-4, 1e3, 300, 1).unwrap();
        let f = Profile::from_fn(&g, "f", |r| (-r * r).exp());
        let n2 = weighted_norm(&f, 2.0, 0.3).unwrap();
        assert!((n2 - (PI / 2.0).sqrt().sqrt()).abs() < 1e-6);
        assert!(weighted_norm(&f, 0.5, 0.3).is_err());
    }
}
