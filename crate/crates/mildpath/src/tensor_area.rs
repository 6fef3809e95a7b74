//! Second-level objects: path areas `(u (x) omega)`, the semigroup-twisted
//! area `omega (x)_S omega`, the maps `omega_S`, `S_omega`, the mixed object
//! `omega_S(t) (x) omega` and `w = u (x) (omega (x)_S omega)`, together with
//! the Chen equalities they satisfy.
//!
//! For a piecewise-linear driver every twisted object is a finite sum of
//! exponential moments over cells, evaluated here in closed form.

use crate::error::{MildError, Result};
use crate::frac_calc::{compensated_right, frac_deriv_left, frac_deriv_right, iterated_tensor_deriv, young_integral};
use crate::mild_solver::SolutionPair;
use crate::paths::{FnPath, GridPath, HolderParams, PathFn, TimeGrid, WithBreaks};
use crate::quadrature::{jacobi_rule, QuadratureSpec};
use crate::spectral::{frobenius, HSMap, ModeTensor, ModeVector, SpectralOperator};
use std::io::Write;

/// Two-parameter function `(x, y) -> V (x) V` (or any flat array), `x <= y`.
pub trait AreaFn: Sync {
    fn dim(&self) -> usize;
    fn eval_into(&self, x: f64, y: f64, out: &mut [f64]);
    fn breakpoints(&self, _a: f64, _b: f64) -> Vec<f64> {
        Vec::new()
    }
}

/// Closure-backed area.
pub struct FnArea<F: Fn(f64, f64, &mut [f64]) + Sync> {
    pub dim: usize,
    pub f: F,
    pub breaks: Vec<f64>,
}

impl<F: Fn(f64, f64, &mut [f64]) + Sync> AreaFn for FnArea<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval_into(&self, x: f64, y: f64, out: &mut [f64]) {
        (self.f)(x, y, out)
    }
    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        self.breaks.iter().copied().filter(|x| *x > a && *x < b).collect()
    }
}

/// Tensor field on grid pairs `(t_a, t_b)`, `1 <= a <= b <= M`, stored by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GridArea {
    pub grid: TimeGrid,
    pub n: usize,
    pub values: Vec<f64>,
    /// Declared exponents `(beta, beta')`.
    pub exponents: (f64, f64),
}

impl GridArea {
    pub fn zeros(grid: TimeGrid, n: usize) -> Self {
        let m = grid.cells;
        GridArea { grid, n, values: vec![0.0; m * (m + 1) / 2 * n * n], exponents: (0.36, 0.40) }
    }

    fn offset(&self, a: usize) -> usize {
        let m = self.grid.cells;
        (a - 1) * (m + 1) - (a - 1) * a / 2
    }

    fn index(&self, a: usize, b: usize) -> usize {
        debug_assert!(a >= 1 && a <= b && b <= self.grid.cells);
        (self.offset(a) + (b - a)) * self.n * self.n
    }

    pub fn get(&self, a: usize, b: usize) -> &[f64] {
        let k = self.index(a, b);
        &self.values[k..k + self.n * self.n]
    }

    pub fn get_mut(&mut self, a: usize, b: usize) -> &mut [f64] {
        let k = self.index(a, b);
        let nn = self.n * self.n;
        &mut self.values[k..k + nn]
    }

    pub fn tensor(&self, a: usize, b: usize) -> ModeTensor {
        ModeTensor::from_vec(self.n, self.get(a, b).to_vec())
    }

    /// Fills every pair from `f(a, b, out)`.
    pub fn from_fn(grid: TimeGrid, n: usize, mut f: impl FnMut(usize, usize, &mut [f64])) -> Self {
        let mut v = Self::zeros(grid, n);
        for a in 1..=grid.cells {
            for b in a..=grid.cells {
                f(a, b, v.get_mut(a, b));
            }
        }
        v
    }

    /// Exact area `int_s^t (u(q) - u(s)) (x) omega'(q) dq` of two piecewise-linear paths.
    pub fn from_product(u: &GridPath, omega: &GridPath) -> Result<Self> {
        omega.require_linear()?;
        u.require_linear()?;
        if u.grid != omega.grid {
            return Err(MildError::Grid("u and omega must share one grid".into()));
        }
        let grid = u.grid;
        let n = u.dim;
        let m = grid.cells;
        let mut v = Self::zeros(grid, n);
        for a in 1..m {
            let mut acc = vec![0.0; n * n];
            for b in a..m {
                let du: Vec<f64> = (0..n).map(|i| u.at(b)[i] - u.at(a)[i]).collect();
                let cu: Vec<f64> = (0..n).map(|i| u.at(b + 1)[i] - u.at(b)[i]).collect();
                let dw: Vec<f64> = (0..omega.dim).map(|l| omega.at(b + 1)[l] - omega.at(b)[l]).collect();
                for i in 0..n {
                    for l in 0..n {
                        acc[i * n + l] += (du[i] + 0.5 * cu[i]) * dw[l];
                    }
                }
                v.get_mut(a, b + 1).copy_from_slice(&acc);
            }
        }
        Ok(v)
    }

    pub fn sub(&self, other: &GridArea) -> GridArea {
        GridArea { grid: self.grid, n: self.n, values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(), exponents: self.exponents }
    }

    /// Largest Frobenius norm over all stored pairs.
    pub fn max_norm(&self) -> f64 {
        self.values.chunks(self.n * self.n).map(frobenius).fold(0.0, f64::max)
    }

    /// `sup_{0<s<t} s^beta |v(s,t)| / (t-s)^{beta + beta'}` over grid pairs.
    pub fn weighted_norm(&self, beta: f64, beta_p: f64) -> f64 {
        let g = self.grid;
        let mut best: f64 = 0.0;
        for a in 1..g.cells {
            let s = g.t(a);
            let w = s.powf(beta);
            for b in a + 1..=g.cells {
                let v = w * frobenius(self.get(a, b)) / (g.t(b) - s).powf(beta + beta_p);
                best = best.max(v);
            }
        }
        best
    }

    /// Unweighted `sup |v(s,t)| / (t-s)^e` over grid pairs with `s > 0`.
    pub fn holder_norm(&self, e: f64) -> f64 {
        let g = self.grid;
        let mut best: f64 = 0.0;
        for a in 1..g.cells {
            for b in a + 1..=g.cells {
                best = best.max(frobenius(self.get(a, b)) / (g.t(b) - g.t(a)).powf(e));
            }
        }
        best
    }

    /// CSV export with columns `s, t, frobenius`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["s", "t", "frobenius"])?;
        let g = self.grid;
        for a in 1..=g.cells {
            for b in a..=g.cells {
                wr.write_record(&[format!("{}", g.t(a)), format!("{}", g.t(b)), format!("{}", frobenius(self.get(a, b)))])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// A [`GridArea`] extended off the grid through the Chen relation with its
/// path `u` and driver `omega`. Inside one cell the area is the quadratic
/// model `d^2/2 du (x) dw + d (V_c - du (x) dw / 2)`, `d = (y - x)/h`, where
/// `V_c` is the stored cell value (the exact product value on the first cell).
pub struct AreaView<'a> {
    pub area: &'a GridArea,
    pub u: &'a GridPath,
    pub omega: &'a GridPath,
}

impl<'a> AreaView<'a> {
    pub fn new(area: &'a GridArea, u: &'a GridPath, omega: &'a GridPath) -> Result<Self> {
        if area.grid != u.grid || u.grid != omega.grid {
            return Err(MildError::Grid("area, path and driver must share one grid".into()));
        }
        omega.require_linear()?;
        u.require_linear()?;
        Ok(AreaView { area, u, omega })
    }

    fn cell_model(&self, c: usize, d: f64, out: &mut [f64]) {
        let n = self.area.n;
        let (u0, u1) = (self.u.at(c), self.u.at(c + 1));
        let (w0, w1) = (self.omega.at(c), self.omega.at(c + 1));
        for i in 0..n {
            for l in 0..n {
                let p = (u1[i] - u0[i]) * (w1[l] - w0[l]);
                let vc = if c == 0 { 0.5 * p } else { self.area.get(c, c + 1)[i * n + l] };
                out[i * n + l] = 0.5 * d * d * p + d * (vc - 0.5 * p);
            }
        }
    }

    /// Value at grid indices `a <= b`, including the unstored row `a = 0`.
    fn grid_value(&self, a: usize, b: usize, out: &mut [f64]) {
        let n = self.area.n;
        if a == b {
            out.iter_mut().for_each(|o| *o = 0.0);
        } else if a >= 1 {
            out.copy_from_slice(self.area.get(a, b));
        } else {
            self.cell_model(0, 1.0, out);
            if b > 1 {
                let tail = self.area.get(1, b);
                let (u0, u1) = (self.u.at(0), self.u.at(1));
                let (w1, wb) = (self.omega.at(1), self.omega.at(b));
                for i in 0..n {
                    for l in 0..n {
                        out[i * n + l] += tail[i * n + l] + (u1[i] - u0[i]) * (wb[l] - w1[l]);
                    }
                }
            }
        }
    }
}

fn snap(grid: &TimeGrid, x: f64) -> Option<usize> {
    let k = (x / grid.h()).round();
    if k >= 0.0 && (k as usize) <= grid.cells && (x - grid.t(k as usize)).abs() <= 1e-12 * grid.horizon {
        Some(k as usize)
    } else {
        None
    }
}

impl AreaFn for AreaView<'_> {
    fn dim(&self) -> usize {
        self.area.n * self.area.n
    }

    fn eval_into(&self, x: f64, y: f64, out: &mut [f64]) {
        let g = self.area.grid;
        let n = self.area.n;
        if y <= x {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let xi = snap(&g, x);
        let yi = snap(&g, y);
        if let (Some(a), Some(b)) = (xi, yi) {
            self.grid_value(a, b, out);
            return;
        }
        let h = g.h();
        let xh = xi.unwrap_or_else(|| g.cell_of(x) + 1);
        let yh = yi.unwrap_or_else(|| g.cell_of(y));
        if xh > yh {
            let c = g.cell_of(x);
            self.cell_model(c, (y - x) / h, out);
            return;
        }
        let mut buf = vec![0.0; n * n];
        out.iter_mut().for_each(|o| *o = 0.0);
        if xi.is_none() {
            self.cell_model(xh - 1, (g.t(xh) - x) / h, &mut buf);
            out.iter_mut().zip(&buf).for_each(|(o, b)| *o += b);
        }
        self.grid_value(xh, yh, &mut buf);
        out.iter_mut().zip(&buf).for_each(|(o, b)| *o += b);
        if yi.is_none() {
            self.cell_model(yh, (y - g.t(yh)) / h, &mut buf);
            out.iter_mut().zip(&buf).for_each(|(o, b)| *o += b);
        }
        let ux = self.u.eval(x);
        let wy = self.omega.eval(y);
        let (uxh, uyh) = (self.u.at(xh), self.u.at(yh));
        let (wxh, wyh) = (self.omega.at(xh), self.omega.at(yh));
        for i in 0..n {
            for l in 0..n {
                out[i * n + l] += (uxh[i] - ux[i]) * (wy[l] - wxh[l]) + (uyh[i] - uxh[i]) * (wy[l] - wyh[l]);
            }
        }
    }

    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        self.u.breakpoints(a, b)
    }
}

/// Exact `int_s^t (u(q) - u(s)) (x) omega'(q) dq` for piecewise-linear paths.
pub fn area_u_omega(u: &GridPath, omega: &GridPath, s: f64, t: f64) -> Result<ModeTensor> {
    omega.require_linear()?;
    u.require_linear()?;
    if u.grid != omega.grid {
        return Err(MildError::Grid("u and omega must share one grid".into()));
    }
    if t < s {
        return Err(MildError::Domain(format!("area needs s <= t, got {s} > {t}")));
    }
    let n = u.dim;
    let nw = omega.dim;
    let us = u.eval(s);
    let mut out = vec![0.0; n * nw];
    for (c0, c1, c) in segments(&u.grid, s, t) {
        let l = c1 - c0;
        let u0 = u.eval(c0);
        let du = u.slope(c);
        let dw = omega.slope(c);
        for i in 0..n {
            let coef = (u0[i] - us[i]) * l + 0.5 * du[i] * l * l;
            for k in 0..nw {
                out[i * nw + k] += coef * dw[k];
            }
        }
    }
    Ok(ModeTensor { n, coords: out })
}

/// Sub-intervals of `[s, t]` cut at grid points, with their cell index.
pub fn segments(grid: &TimeGrid, s: f64, t: f64) -> Vec<(f64, f64, usize)> {
    let mut out = Vec::new();
    if t <= s {
        return out;
    }
    let mut x = s;
    let mut c = grid.cell_of(s);
    if let Some(k) = snap(grid, s) {
        x = grid.t(k);
        c = k.min(grid.cells - 1);
    }
    loop {
        let end = grid.t(c + 1).min(t);
        if end > x {
            out.push((x, end, c));
        }
        if end >= t || c + 1 >= grid.cells {
            break;
        }
        x = end;
        c += 1;
    }
    if let Some(k) = snap(grid, t) {
        if let Some(last) = out.last_mut() {
            last.1 = grid.t(k);
        }
    }
    out
}

/// Path Chen residual `|v(a,b) + v(b,c) + (u(b)-u(a)) (x) (w(c)-w(b)) - v(a,c)|` at grid indices.
pub fn chen_residual_path(v: &GridArea, u: &GridPath, omega: &GridPath, a: usize, b: usize, c: usize) -> f64 {
    let n = v.n;
    let (vab, vbc, vac) = (v.get(a, b), v.get(b, c), v.get(a, c));
    let mut s = 0.0;
    for i in 0..n {
        for l in 0..n {
            let k = i * n + l;
            let d = vab[k] + vbc[k] + (u.at(b)[i] - u.at(a)[i]) * (omega.at(c)[l] - omega.at(b)[l]) - vac[k];
            s += d * d;
        }
    }
    s.sqrt()
}

/// `(1 - e^{-lambda L}) / lambda`.
pub fn a1(lambda: f64, l: f64) -> f64 {
    let x = lambda * l;
    if x < 1e-8 {
        l * (1.0 - 0.5 * x + x * x / 6.0)
    } else {
        -(-x).exp_m1() / lambda
    }
}

/// `int_0^L (1 - e^{-lambda x}) / lambda dx = (L - a1) / lambda`.
pub fn a2(lambda: f64, l: f64) -> f64 {
    let x = lambda * l;
    if x < 1e-3 {
        l * l * (0.5 - x / 6.0 + x * x / 24.0 - x * x * x / 120.0 + x * x * x * x / 720.0)
    } else {
        (l - a1(lambda, l)) / lambda
    }
}

/// Method for the inner integral `int_s^tau (S(tau - r) - id) E d omega(r)` of the mixed object.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerIntegral {
    /// Closed-form exponential moments (exact for piecewise-linear drivers).
    Exact,
    /// Fractional Young integral of the semigroup increment.
    Fractional,
    /// Fractional Young integral with the `(-A)^{beta'}` / `(-A)^{-beta'}` split.
    FractionalSplit,
}

/// Evaluator of the twisted objects of a piecewise-linear driver.
#[derive(Debug, Clone)]
pub struct AreaOperator {
    pub driver: GridPath,
    pub op: SpectralOperator,
    /// Per mode: `(e^{-lambda h}, a1(lambda, h), a2(lambda, h))` for the full cell width.
    memo: Vec<(f64, f64, f64)>,
    slopes: Vec<f64>,
}

impl AreaOperator {
    pub fn new(driver: GridPath, op: SpectralOperator) -> Result<Self> {
        driver.require_linear()?;
        op.check_dim(driver.dim)?;
        let h = driver.grid.h();
        let memo = op.eigenvalues().iter().map(|&l| ((-l * h).exp(), a1(l, h), a2(l, h))).collect();
        let slopes = driver.slopes();
        Ok(AreaOperator { driver, op, memo, slopes })
    }

    pub fn n(&self) -> usize {
        self.op.dim()
    }

    fn slope(&self, c: usize) -> &[f64] {
        let n = self.n();
        &self.slopes[c * n..(c + 1) * n]
    }

    fn moments(&self, i: usize, l: f64, cached: bool) -> (f64, f64, f64) {
        let h = self.driver.grid.h();
        if cached && (l - h).abs() <= 1e-14 * h {
            self.memo[i]
        } else {
            let lam = self.op.lambda(i);
            let hh = if (l - h).abs() <= 1e-14 * h { h } else { l };
            ((-lam * hh).exp(), a1(lam, hh), a2(lam, hh))
        }
    }

    /// `Phi_il(s,t) = int_s^t e^{-lambda_i (xi - s)} omega'_l(xi) d xi`.
    pub fn phi(&self, s: f64, t: f64) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n * n];
        for (c0, c1, c) in segments(&self.driver.grid, s, t) {
            let w = self.slope(c);
            for i in 0..n {
                let lam = self.op.lambda(i);
                let f = (-lam * (c0 - s)).exp() * a1(lam, c1 - c0);
                for l in 0..n {
                    out[i * n + l] += f * w[l];
                }
            }
        }
        out
    }

    /// `Psi_ik(s,t) = int_s^t e^{-lambda_i (t - r)} omega'_k(r) dr`.
    pub fn psi(&self, s: f64, t: f64) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n * n];
        for (c0, c1, c) in segments(&self.driver.grid, s, t) {
            let w = self.slope(c);
            for i in 0..n {
                let lam = self.op.lambda(i);
                let f = (-lam * (t - c1)).exp() * a1(lam, c1 - c0);
                for k in 0..n {
                    out[i * n + k] += f * w[k];
                }
            }
        }
        out
    }

    /// `K_ikl(s,t) = int_s^t int_s^xi e^{-lambda_i (xi - r)} omega'_k(r) dr omega'_l(xi) d xi`.
    pub fn kernel(&self, s: f64, t: f64) -> Vec<f64> {
        self.kernel_impl(s, t, true)
    }

    /// Same as [`Self::kernel`] bypassing the per-mode memo.
    pub fn kernel_uncached(&self, s: f64, t: f64) -> Vec<f64> {
        self.kernel_impl(s, t, false)
    }

    /// `K(t_a, t_b)` for `b = a+1, ..., M` in one sweep over the cells.
    pub fn kernel_row(&self, a: usize) -> Vec<Vec<f64>> {
        let n = self.n();
        let m = self.driver.grid.cells;
        let mut k = vec![0.0; n * n * n];
        let mut run = vec![0.0; n * n];
        let mut rows = Vec::with_capacity(m.saturating_sub(a));
        for c in a..m {
            let w = self.slope(c);
            for i in 0..n {
                let (e, m1, m2) = self.memo[i];
                for kk in 0..n {
                    let base = run[i * n + kk] * m1 + w[kk] * m2;
                    for l in 0..n {
                        k[(i * n + kk) * n + l] += base * w[l];
                    }
                    run[i * n + kk] = e * run[i * n + kk] + m1 * w[kk];
                }
            }
            rows.push(k.clone());
        }
        rows
    }

    fn kernel_impl(&self, s: f64, t: f64, cached: bool) -> Vec<f64> {
        let n = self.n();
        let mut k = vec![0.0; n * n * n];
        let mut run = vec![0.0; n * n];
        for (c0, c1, c) in segments(&self.driver.grid, s, t) {
            let w = self.slope(c);
            for i in 0..n {
                let (e, m1, m2) = self.moments(i, c1 - c0, cached);
                for kk in 0..n {
                    let base = run[i * n + kk] * m1 + w[kk] * m2;
                    for l in 0..n {
                        k[(i * n + kk) * n + l] += base * w[l];
                    }
                    run[i * n + kk] = e * run[i * n + kk] + m1 * w[kk];
                }
            }
        }
        k
    }

    /// `omega_S(s,t) e`, components `e_i Phi_il(s,t)`.
    pub fn omega_s_apply(&self, s: f64, t: f64, e: &ModeVector) -> Result<ModeTensor> {
        self.check_times(s, t)?;
        let n = self.n();
        let p = self.phi(s, t);
        Ok(ModeTensor::from_vec(n, (0..n * n).map(|k| e.coords[k / n] * p[k]).collect()))
    }

    /// `S_omega(s,t) E = int_s^t S(t - r) E omega'(r) dr`.
    pub fn s_omega_apply(&self, s: f64, t: f64, e: &HSMap) -> Result<ModeVector> {
        self.check_times(s, t)?;
        let n = self.n();
        let p = self.psi(s, t);
        Ok(ModeVector::new((0..n).map(|i| (0..n).map(|k| e.get(i, k) * p[i * n + k]).sum()).collect()))
    }

    /// `E (omega (x)_S omega)(s,t)`.
    pub fn omega_s_omega_apply(&self, s: f64, t: f64, e: &HSMap) -> Result<ModeTensor> {
        self.check_times(s, t)?;
        Ok(contract_kernel(&self.kernel(s, t), e))
    }

    /// `L_2`-operator norm of `E -> E(omega (x)_S omega)(s,t)` over the
    /// `V_hat`-normalized basis of Hilbert-Schmidt maps.
    pub fn twisted_area_norm(&self, s: f64, t: f64) -> f64 {
        let n = self.n();
        let k = self.kernel(s, t);
        let kappa = self.op.kappa_hat();
        let mut acc = 0.0;
        for i in 0..n {
            let w = self.op.lambda(i).powf(-2.0 * kappa);
            for kl in 0..n * n {
                acc += w * k[i * n * n + kl].powi(2);
            }
        }
        acc.sqrt()
    }

    fn check_times(&self, s: f64, t: f64) -> Result<()> {
        if t < s {
            return Err(MildError::Domain(format!("need s <= t, got {s} > {t}")));
        }
        Ok(())
    }

    /// Inner vector `int_s^tau (S(tau - r) - id) E d omega(r)`.
    pub fn semigroup_increment_integral(
        &self,
        s: f64,
        tau: f64,
        e: &HSMap,
        method: InnerIntegral,
        params: &HolderParams,
        spec: &QuadratureSpec,
    ) -> Result<ModeVector> {
        let n = self.n();
        if tau <= s {
            return Ok(ModeVector::zeros(n));
        }
        let mut out = vec![0.0; n];
        match method {
            InnerIntegral::Exact => {
                let p = self.psi(s, tau);
                let ws = self.driver.eval(s);
                let wt = self.driver.eval(tau);
                for i in 0..n {
                    out[i] = (0..n).map(|k| e.get(i, k) * (p[i * n + k] - (wt[k] - ws[k]))).sum();
                }
            }
            InnerIntegral::Fractional | InnerIntegral::FractionalSplit => {
                let bp = if method == InnerIntegral::FractionalSplit { params.beta_p } else { 0.0 };
                for i in 0..n {
                    let lam = self.op.lambda(i);
                    let pre = lam.powf(-bp);
                    let integrand = crate::paths::scalar_path(move |r: f64| pre * ((-lam * (tau - r)).exp() - 1.0));
                    let y = young_integral(&integrand, &self.driver, s, tau, params.alpha, None, spec)?;
                    let post = lam.powf(bp);
                    out[i] = post * (0..n).map(|k| e.get(i, k) * y[k]).sum::<f64>();
                }
            }
        }
        Ok(ModeVector::new(out))
    }

    /// Basis tensor `Y_ikl(s,tau)` of the mixed object, so that
    /// `E(omega_S(t) (x) omega)(s,tau)_il = sum_k E_ik Y_ikl(s,tau)`.
    pub fn mixed_kernel(&self, t_outer: f64, s: f64, tau: f64) -> Vec<f64> {
        let n = self.n();
        let phi_tau = self.phi(tau, t_outer);
        let phi_s = self.phi(s, t_outer);
        let psi = self.psi(s, tau);
        let k = self.kernel(s, tau);
        let ws = self.driver.eval(s);
        let wt = self.driver.eval(tau);
        let mut out = k;
        for i in 0..n {
            for kk in 0..n {
                let dw = wt[kk] - ws[kk];
                for l in 0..n {
                    out[(i * n + kk) * n + l] += phi_tau[i * n + l] * (psi[i * n + kk] - dw) + (phi_tau[i * n + l] - phi_s[i * n + l]) * dw;
                }
            }
        }
        out
    }

    /// `E(omega_S(t) (x) omega)(s, tau)` by the three-term decomposition.
    pub fn omega_s_tensor_omega_apply(
        &self,
        t_outer: f64,
        s: f64,
        tau: f64,
        e: &HSMap,
        params: &HolderParams,
        method: InnerIntegral,
        spec: &QuadratureSpec,
    ) -> Result<ModeTensor> {
        if !(s <= tau && tau <= t_outer) {
            return Err(MildError::Domain(format!("need s <= tau <= t, got {s}, {tau}, {t_outer}")));
        }
        params.validate()?;
        let n = self.n();
        let inner = self.semigroup_increment_integral(s, tau, e, method, params, spec)?;
        let phi_tau = self.phi(tau, t_outer);
        let phi_s = self.phi(s, t_outer);
        let twisted = self.omega_s_omega_apply(s, tau, e)?;
        let ws = self.driver.eval(s);
        let wt = self.driver.eval(tau);
        let edw: Vec<f64> = (0..n).map(|i| (0..n).map(|k| e.get(i, k) * (wt[k] - ws[k])).sum()).collect();
        let mut out = twisted.coords;
        for i in 0..n {
            for l in 0..n {
                out[i * n + l] += phi_tau[i * n + l] * inner.coords[i] + (phi_tau[i * n + l] - phi_s[i * n + l]) * edw[i];
            }
        }
        Ok(ModeTensor::from_vec(n, out))
    }

    /// Direct closed form of `w` for piecewise-linear `u` and driver:
    /// `W_ikml(t,s,q) = - int_s^q (u_k(r) - u_k(s)) omega'_m(r) Phi_il(r,t) dr`,
    /// so that `(E~ w)(t,s,q)_il = sum_km E~_ikm W_ikml`.
    pub fn w_direct(&self, u: &GridPath, t: f64, s: f64, q: f64) -> Result<Vec<f64>> {
        if !(s <= q && q <= t) {
            return Err(MildError::Domain(format!("need s <= q <= t, got {s}, {q}, {t}")));
        }
        let n = self.n();
        let mut out = vec![0.0; n * n * n * n];
        let us = u.eval(s);
        for (c0, c1, c) in segments(&self.driver.grid, s, q) {
            let len = c1 - c0;
            let wv = self.slope(c);
            let du = u.slope(c);
            let u0 = u.eval(c0);
            // Phi_il(r,t) = a1(lam, c1 - r) w_l + e^{-lam (c1 - r)} Phi_il(c1, t).
            let phi_c1 = self.phi(c1, t);
            for i in 0..n {
                let lam = self.op.lambda(i);
                // Moments over r in [c0, c1], x = r - c0:
                //   m0 = int a1(lam, len - x) dx,       m1 = int x a1(lam, len - x) dx,
                //   e0 = int e^{-lam (len - x)} dx,     e1 = int x e^{-lam (len - x)} dx.
                let (m0, m1, e0, e1) = cell_moments(lam, len);
                for k in 0..n {
                    let base = u0[k] - us[k];
                    let sl = du[k];
                    for m in 0..n {
                        let wm = wv[m];
                        for l in 0..n {
                            let own = wv[l] * (base * m0 + sl * m1);
                            let far = phi_c1[i * n + l] * (base * e0 + sl * e1);
                            out[((i * n + k) * n + m) * n + l] -= wm * (own + far);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// `w` by its defining fractional three-integral formula.
    #[allow(clippy::too_many_arguments)]
    pub fn w_apply(&self, pair: &SolutionPair, t: f64, s: f64, q: f64, etilde: &[f64], params: &HolderParams, spec: &QuadratureSpec) -> Result<ModeTensor> {
        if s <= 0.0 {
            return Err(MildError::Domain("w is defined for s > 0 only".into()));
        }
        if !(s <= q && q <= t) {
            return Err(MildError::Domain(format!("need s <= q <= t, got {s}, {q}, {t}")));
        }
        let n = self.n();
        if q <= s {
            return Ok(ModeTensor::zeros(n));
        }
        let alpha = params.alpha;
        let u = &pair.u;
        let us = u.eval(s);
        let h_of = |x: f64| -> Vec<f64> {
            // H_im(x) = sum_k E~_ikm (u_k(x) - u_k(s))
            let ux = u.eval(x);
            let mut hm = vec![0.0; n * n];
            for i in 0..n {
                for k in 0..n {
                    let d = ux[k] - us[k];
                    if d == 0.0 {
                        continue;
                    }
                    for m in 0..n {
                        hm[i * n + m] += etilde[(i * n + k) * n + m] * d;
                    }
                }
            }
            hm
        };
        let breaks: Vec<f64> = u.breakpoints(s, q);
        let mut out = vec![0.0; n * n];

        // First term: + int D^_alpha F[r] D^{1-alpha}_{q-} omega_{q-}[r] dr with
        // F(x)_ilm = Phi_il(x,t) H_im(x), compensated by (dPhi)(dH).
        let rule = jacobi_rule(s, q, -alpha, alpha, (true, true), spec, &breaks);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let r = *x;
            let phi_r = self.phi(r, t);
            let h_r = h_of(r);
            let mut fr = vec![0.0; n * n * n];
            for i in 0..n {
                for l in 0..n {
                    for m in 0..n {
                        fr[(i * n + l) * n + m] = phi_r[i * n + l] * h_r[i * n + m];
                    }
                }
            }
            let dh = compensated_right(s, r, alpha, spec, &breaks, &fr, |rho, outv| {
                let phi_p = self.phi(rho, t);
                let h_p = h_of(rho);
                let y2 = (r - rho) * (r - rho);
                for i in 0..n {
                    for l in 0..n {
                        let dp = phi_r[i * n + l] - phi_p[i * n + l];
                        for m in 0..n {
                            outv[(i * n + l) * n + m] = dp * (h_r[i * n + m] - h_p[i * n + m]) / y2;
                        }
                    }
                }
            });
            let lw = frac_deriv_left(&self.driver, q, 1.0 - alpha, r, spec)?.value;
            let scale = (r - s).powf(alpha) * (q - r).powf(-alpha);
            for il in 0..n * n {
                let acc: f64 = (0..n).map(|m| dh[il * n + m] * lw[m]).sum();
                out[il] += w * scale * acc;
            }
        }

        // Second and third terms share the order 2 alpha - 1 rule.
        let e2 = 2.0 * alpha - 1.0;
        let rule2 = jacobi_rule(s, q, -e2, e2, (true, true), spec, &breaks);
        let hpath = WithBreaks { path: FnPath { dim: n * n, f: |x: f64, o: &mut [f64]| o.copy_from_slice(&h_of(x)) }, breaks: breaks.clone() };
        let phipath = WithBreaks { path: FnPath { dim: n * n, f: |x: f64, o: &mut [f64]| o.copy_from_slice(&self.phi(x, t)) }, breaks: breaks.clone() };
        let mixed =
            FnArea { dim: n * n * n, f: |a: f64, b: f64, o: &mut [f64]| o.copy_from_slice(&self.mixed_kernel(t, a, b)), breaks: self.driver.breakpoints(s, q) };
        let view = AreaView::new(&pair.v, u, &self.driver)?;
        for (x, w) in rule2.nodes.iter().zip(&rule2.weights) {
            let r = *x;
            let scale = (r - s).powf(e2) * (q - r).powf(-e2);
            let p = frac_deriv_right(&hpath, s, e2, r, spec)?.value;
            let y = iterated_tensor_deriv(&mixed, q, alpha, r, spec)?;
            let qd = frac_deriv_right(&phipath, s, e2, r, spec)?.value;
            let xv = iterated_tensor_deriv(&view, q, alpha, r, spec)?;
            for i in 0..n {
                let z: f64 = (0..n * n).map(|km| etilde[i * n * n + km] * xv[km]).sum();
                for l in 0..n {
                    let b: f64 = (0..n).map(|m| p[i * n + m] * y[(i * n + m) * n + l]).sum();
                    out[i * n + l] -= w * scale * (b + qd[i * n + l] * z);
                }
            }
        }
        Ok(ModeTensor::from_vec(n, out))
    }
}

/// `int_0^L a1(lam, L - x) {1, x} dx` and `int_0^L e^{-lam (L - x)} {1, x} dx`.
fn cell_moments(lam: f64, len: f64) -> (f64, f64, f64, f64) {
    let x = lam * len;
    if x < 1e-3 {
        let l2 = len * len;
        let l3 = l2 * len;
        let e0 = len * (1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0);
        let e1 = l2 * (0.5 - x / 6.0 + x * x / 24.0 - x * x * x / 120.0);
        // a1(lam, y) = y - lam y^2/2 + lam^2 y^3/6 - ...
        let m0 = l2 * (0.5 - x / 6.0 + x * x / 24.0 - x * x * x / 120.0);
        let m1 = l3 * (1.0 / 6.0 - x / 24.0 + x * x / 120.0 - x * x * x / 720.0);
        (m0, m1, e0, e1)
    } else {
        let e0 = -(-x).exp_m1() / lam;
        // int_0^L x e^{-lam(L-x)} dx = L/lam - (1 - e^{-lam L})/lam^2
        let e1 = len / lam - e0 / lam;
        let m0 = (len - e0) / lam;
        // int_0^L x (1 - e^{-lam (L-x)}) / lam dx = (L^2/2 - e1) / lam
        let m1 = (0.5 * len * len - e1) / lam;
        (m0, m1, e0, e1)
    }
}

/// `(E K)_il = sum_k E_ik K_ikl`.
pub fn contract_kernel(k: &[f64], e: &HSMap) -> ModeTensor {
    let n = e.n;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for kk in 0..n {
            let c = e.get(i, kk);
            if c == 0.0 {
                continue;
            }
            for l in 0..n {
                out[i * n + l] += c * k[(i * n + kk) * n + l];
            }
        }
    }
    ModeTensor::from_vec(n, out)
}

/// Which Chen equality to check.
pub enum ChenKind<'a> {
    /// Path/area Chen equality of `(u, v)` against `omega`, at grid indices.
    Path { v: &'a GridArea, u: &'a GridPath, omega: &'a GridPath },
    /// Twisted Chen equality of `omega (x)_S omega` contracted with `E`.
    Twisted { a: &'a AreaOperator, e: &'a HSMap },
    /// Chen equality of `w` with `E~`, using the direct closed form.
    W { a: &'a AreaOperator, u: &'a GridPath, etilde: &'a [f64], t: f64 },
}

/// Norm of the left-minus-right side of the requested Chen equality at `s <= r <= t`
/// (for [`ChenKind::W`] the last argument is `q`).
pub fn chen_residual(kind: &ChenKind<'_>, s: f64, r: f64, t: f64) -> Result<f64> {
    if !(s <= r && r <= t) {
        return Err(MildError::Domain(format!("need s <= r <= t, got {s}, {r}, {t}")));
    }
    match kind {
        ChenKind::Path { v, u, omega } => {
            let view = AreaView::new(v, u, omega)?;
            let n = v.n;
            let mut vsr = vec![0.0; n * n];
            let mut vrt = vec![0.0; n * n];
            let mut vst = vec![0.0; n * n];
            view.eval_into(s, r, &mut vsr);
            view.eval_into(r, t, &mut vrt);
            view.eval_into(s, t, &mut vst);
            let (us, ur) = (u.eval(s), u.eval(r));
            let (wr, wt) = (omega.eval(r), omega.eval(t));
            let mut acc = 0.0;
            for i in 0..n {
                for l in 0..n {
                    let k = i * n + l;
                    let d = vsr[k] + vrt[k] + (ur[i] - us[i]) * (wt[l] - wr[l]) - vst[k];
                    acc += d * d;
                }
            }
            Ok(acc.sqrt())
        }
        ChenKind::Twisted { a, e } => {
            let lhs1 = a.omega_s_omega_apply(s, r, e)?;
            let lhs2 = a.omega_s_omega_apply(r, t, e)?;
            let corr = a.omega_s_apply(r, t, &a.s_omega_apply(s, r, e)?)?;
            let rhs = a.omega_s_omega_apply(s, t, e)?;
            Ok(lhs1.add(&lhs2).add(&corr).sub(&rhs).norm())
        }
        ChenKind::W { a, u, etilde, t: tt } => {
            // E~w(t,s,r) + E~w(t,r,q) = E~w(t,s,q) + H (omega (x)_S omega)(r,q)
            //     + omega_S(q,t) S_omega(r,q) H,   H = E~(u(r) - u(s), .)
            let n = a.n();
            let q = t;
            let (s0, r0) = (s, r);
            let w_sr = a.w_direct(u, *tt, s0, r0)?;
            let w_rq = a.w_direct(u, *tt, r0, q)?;
            let w_sq = a.w_direct(u, *tt, s0, q)?;
            let us = u.eval(s0);
            let ur = u.eval(r0);
            let mut hmap = vec![0.0; n * n];
            for i in 0..n {
                for k in 0..n {
                    for m in 0..n {
                        hmap[i * n + m] += etilde[(i * n + k) * n + m] * (ur[k] - us[k]);
                    }
                }
            }
            let hm = HSMap::from_vec(n, hmap);
            let twisted = a.omega_s_omega_apply(r0, q, &hm)?;
            let corr = a.omega_s_apply(q, *tt, &a.s_omega_apply(r0, q, &hm)?)?;
            let apply = |w: &[f64]| -> Vec<f64> {
                let mut o = vec![0.0; n * n];
                for i in 0..n {
                    for k in 0..n {
                        for m in 0..n {
                            let e = etilde[(i * n + k) * n + m];
                            if e == 0.0 {
                                continue;
                            }
                            for l in 0..n {
                                o[i * n + l] += e * w[((i * n + k) * n + m) * n + l];
                            }
                        }
                    }
                }
                o
            };
            let (a1v, a2v, a3v) = (apply(&w_sr), apply(&w_rq), apply(&w_sq));
            let mut acc = 0.0;
            for k in 0..n * n {
                let d = a1v[k] + a2v[k] - twisted.coords[k] - a3v[k] - corr.coords[k];
                acc += d * d;
            }
            Ok(acc.sqrt())
        }
    }
}
