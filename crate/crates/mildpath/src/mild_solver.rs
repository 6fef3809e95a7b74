//! Pathwise mild solutions of `du = A u dt + G(u) d omega`.
//!
//! The fixed-point map sends a pair `U = (u, v)` to
//! `T1(U)(t) = S(t) u0 + int_0^t S(t - r) G(u(r)) d omega(r)` and to the area
//! `T2(U)(s, t)` of `T1(U)` against `omega`, split as
//! `int_s^t (S(xi - s) - id) T1(U)(s) (x) d omega(xi) + int_s^t int_s^xi S(xi - r) G(u(r)) d omega(r) (x) d omega(xi)`.
//!
//! Two evaluations are offered. [`Evaluation::CellExact`] uses that, for a
//! piecewise-linear driver and a Chen-consistent pair, the rough integral
//! reduces to `int S(t - r) (G(u(r)) omega'(r) + DG(u(r)) eps'(r)) dr`, where
//! `eps'` is the per-cell excess of the stored cell areas over the product
//! area; the integrals are then exponential moments over cells.
//! [`Evaluation::Fractional`] evaluates the defining fractional integrals by
//! product quadrature and serves as a slow cross-check.

use crate::error::{MildError, Result};
use crate::frac_calc::{
    compensated_deriv, compensated_right, dg_right_deriv, frac_deriv_left, frac_deriv_right, iterated_tensor_deriv, left_deriv, young_integral,
};
use crate::frac_calc::{merged_breaks, right_integral};
use crate::nonlinearity::NonlinearityG;
use crate::paths::{path_norm, FnPath, GridPath, HolderParams, PathFn, TimeGrid, WithBreaks};
use crate::quadrature::{gamma, gauss_legendre, graded_mesh, jacobi_rule, QuadratureSpec};
use crate::spectral::{ModeVector, SpectralOperator};
use crate::tensor_area::{a1, a2, chen_residual_path, segments, AreaFn, AreaOperator, AreaView, FnArea, GridArea};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Weighted norms of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairNorms {
    /// `||u||_{beta,~}`: sup norm plus the `s^beta`-weighted Hölder seminorm.
    pub path: f64,
    /// `||v||_{beta+beta',~}`.
    pub area: f64,
    pub total: f64,
}

/// A path `u` together with its area `v = u (x) omega` on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPair {
    pub u: GridPath,
    pub v: GridArea,
    /// Declared `(beta, beta')`.
    pub exponents: (f64, f64),
    pub norms: PairNorms,
}

fn scan_norms(u: &GridPath, v: &GridArea, (beta, beta_p): (f64, f64)) -> PairNorms {
    let path = path_norm(u, beta, true).full;
    let area = v.weighted_norm(beta, beta_p);
    PairNorms { path, area, total: path + area }
}

impl SolutionPair {
    /// Builds a pair with the exponents declared on `v`.
    pub fn new(u: GridPath, v: GridArea) -> Result<Self> {
        if u.grid != v.grid {
            return Err(MildError::Grid("path and area must share one grid".into()));
        }
        if u.dim != v.n {
            return Err(MildError::Dimension { expected: u.dim, got: v.n });
        }
        let exponents = v.exponents;
        let norms = scan_norms(&u, &v, exponents);
        Ok(SolutionPair { u, v, exponents, norms })
    }

    /// Same pair with new declared exponents (norms recomputed).
    pub fn with_exponents(mut self, beta: f64, beta_p: f64) -> Self {
        self.exponents = (beta, beta_p);
        self.v.exponents = (beta, beta_p);
        self.norms = scan_norms(&self.u, &self.v, self.exponents);
        self
    }

    pub fn zero(grid: TimeGrid, n: usize, beta: f64, beta_p: f64) -> Self {
        let u = GridPath::zeros(grid, n);
        let mut v = GridArea::zeros(grid, n);
        v.exponents = (beta, beta_p);
        Self::new(u, v).expect("matching shapes")
    }

    /// `||U - other||_W` with the exponents of `self`.
    pub fn distance(&self, other: &SolutionPair) -> f64 {
        scan_norms(&self.u.sub(&other.u), &self.v.sub(&other.v), self.exponents).total
    }

    /// Largest path Chen residual over strided grid triples, and the largest
    /// diagonal entry of `v`.
    pub fn consistency(&self, omega: &GridPath) -> (f64, f64) {
        let m = self.u.grid.cells;
        let stride = (m / 24).max(1);
        let mut worst: f64 = 0.0;
        for a in (1..m).step_by(stride) {
            for b in (a + 1..m).step_by(stride) {
                for c in (b + 1..=m).step_by(stride) {
                    worst = worst.max(chen_residual_path(&self.v, &self.u, omega, a, b, c));
                }
            }
        }
        let diag = (1..=m).flat_map(|a| self.v.get(a, a).iter().map(|x| x.abs())).fold(0.0, f64::max);
        (worst, diag)
    }

    /// Fails with [`MildError::InconsistentPair`] when the Chen residual
    /// exceeds `tol * max(1, max |v|)` or the diagonal of `v` is not zero.
    pub fn check(&self, omega: &GridPath, tol: f64) -> Result<()> {
        if omega.grid != self.u.grid {
            return Err(MildError::Grid("pair and driver must share one grid".into()));
        }
        let (chen, diag) = self.consistency(omega);
        let scale = self.v.max_norm().max(1.0);
        if chen > tol * scale {
            return Err(MildError::InconsistentPair(chen));
        }
        if diag > 0.0 {
            return Err(MildError::InvalidArea(format!("diagonal value {diag:e} is not zero")));
        }
        Ok(())
    }
}

/// Fresh scan of `(||u||_{beta,~}, ||v||_{beta+beta',~}, sum)`.
pub fn pair_norm(pair: &SolutionPair) -> (f64, f64, f64) {
    let n = scan_norms(&pair.u, &pair.v, pair.exponents);
    (n.path, n.area, n.total)
}

/// How the fixed-point map is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Evaluation {
    /// Closed-form cell moments, exact up to the Gauss rule in each cell.
    CellExact,
    /// Product quadrature of the fractional integral formulas.
    Fractional,
}

/// Solver parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Requested horizon `T`; must not exceed the driver horizon.
    pub horizon: f64,
    /// Stop when `||U_{k+1} - U_k||_W <= tol (1 + ||U_{k+1}||_W)`.
    pub tol: f64,
    pub max_iter: usize,
    pub quadrature: QuadratureSpec,
    /// Admissible path Chen residual, relative to `max(1, max |v|)`.
    pub pair_tol: f64,
    pub evaluation: Evaluation,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { horizon: 1.0, tol: 1e-8, max_iter: 60, quadrature: QuadratureSpec::default(), pair_tol: 1e-8, evaluation: Evaluation::CellExact }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(MildError::Config(format!("horizon {} must be positive", self.horizon)));
        }
        if !(self.tol > 0.0 && self.pair_tol > 0.0) {
            return Err(MildError::Config("tolerances must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(MildError::Config("max_iter must be at least 1".into()));
        }
        self.quadrature.validate()
    }
}

fn check_shapes(pair: &SolutionPair, a: &AreaOperator, u0: &ModeVector, g: &NonlinearityG) -> Result<()> {
    let n = a.n();
    for got in [pair.u.dim, u0.dim(), g.n] {
        if got != n {
            return Err(MildError::Dimension { expected: n, got });
        }
    }
    if pair.u.grid != a.driver.grid {
        return Err(MildError::Grid("pair and driver must share one grid".into()));
    }
    pair.u.require_linear()
}

/// Per-cell excess `(V_c - du (x) dw / 2) / h` of the stored cell areas, `M x N x N`.
fn cell_excess(pair: &SolutionPair, omega: &GridPath) -> Vec<f64> {
    let g = pair.u.grid;
    let n = pair.u.dim;
    let h = g.h();
    let mut out = vec![0.0; g.cells * n * n];
    for c in 1..g.cells {
        let vc = pair.v.get(c, c + 1);
        let (u0, u1) = (pair.u.at(c), pair.u.at(c + 1));
        let (w0, w1) = (omega.at(c), omega.at(c + 1));
        for k in 0..n {
            for l in 0..n {
                out[(c * n + k) * n + l] = (vc[k * n + l] - 0.5 * (u1[k] - u0[k]) * (w1[l] - w0[l])) / h;
            }
        }
    }
    out
}

fn lagrange(nodes: &[f64], j: usize, y: f64) -> f64 {
    nodes.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, x)| (y - x) / (nodes[j] - x)).product()
}

/// Weights with `int_0^h K(h - x) p(x) dx = sum_g w_g p(h y_g)` for polynomials
/// of degree below `y.len()`, for `K(d) = e^{-lam d}` and `K(d) = a1(lam, d)`.
fn cell_weights(lam: f64, h: f64, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mesh = graded_mesh(0.0, 1.0, false, true, 16, 3.0, &[]);
    let (gx, gw) = gauss_legendre(8);
    let q = y.len();
    let mut we = vec![0.0; q];
    let mut wa = vec![0.0; q];
    for cell in mesh.windows(2) {
        let len = cell[1] - cell[0];
        for (x, w) in gx.iter().zip(&gw) {
            let z = cell[0] + len * x;
            let d = h * (1.0 - z);
            let (ke, ka) = ((-lam * d).exp(), a1(lam, d));
            for j in 0..q {
                let l = w * len * h * lagrange(y, j, z);
                we[j] += l * ke;
                wa[j] += l * ka;
            }
        }
    }
    (we, wa)
}

/// `b_ci = int_cell e^{-lam_i (t_{c+1} - r)} f_i(r) dr` and
/// `a_ci = int_cell a1(lam_i, t_{c+1} - r) f_i(r) dr` for the effective integrand
/// `f = G(u) omega' + DG(u) eps'`.
struct CellIntegrals {
    b: Vec<f64>,
    a: Vec<f64>,
}

fn cell_integrals(pair: &SolutionPair, a: &AreaOperator, g: &NonlinearityG, spec: &QuadratureSpec) -> CellIntegrals {
    let omega = &a.driver;
    let grid = omega.grid;
    let (n, m, h) = (a.n(), grid.cells, grid.h());
    let (y, _) = gauss_legendre(spec.gauss.max(2));
    let weights: Vec<(Vec<f64>, Vec<f64>)> = a.op.eigenvalues().iter().map(|&l| cell_weights(l, h, &y)).collect();
    let excess = cell_excess(pair, omega);
    let mut out = CellIntegrals { b: vec![0.0; m * n], a: vec![0.0; m * n] };
    let mut ur = vec![0.0; n];
    let mut gm = vec![0.0; n * n];
    let mut dg = vec![0.0; n * n * n];
    let mut f = vec![0.0; n];
    for c in 0..m {
        let ws = omega.slope(c);
        let eps = &excess[c * n * n..(c + 1) * n * n];
        let with_eps = eps.iter().any(|e| *e != 0.0);
        let (u0, u1) = (pair.u.at(c), pair.u.at(c + 1));
        for (j, yj) in y.iter().enumerate() {
            for k in 0..n {
                ur[k] = u0[k] + yj * (u1[k] - u0[k]);
            }
            g.g_matrix_into(&ur, &mut gm);
            for i in 0..n {
                f[i] = (0..n).map(|l| gm[i * n + l] * ws[l]).sum();
            }
            if with_eps {
                g.dg_tensor_into(&ur, &mut dg);
                for i in 0..n {
                    f[i] += (0..n * n).map(|kl| dg[i * n * n + kl] * eps[kl]).sum::<f64>();
                }
            }
            for i in 0..n {
                out.b[c * n + i] += weights[i].0[j] * f[i];
                out.a[c * n + i] += weights[i].1[j] * f[i];
            }
        }
    }
    out
}

fn t1_exact(ci: &CellIntegrals, a: &AreaOperator, u0: &ModeVector) -> Result<GridPath> {
    let grid = a.driver.grid;
    let (n, h) = (a.n(), grid.h());
    let decay: Vec<f64> = a.op.eigenvalues().iter().map(|l| (-l * h).exp()).collect();
    let mut values = Vec::with_capacity((grid.cells + 1) * n);
    let mut acc = vec![0.0; n];
    for j in 0..=grid.cells {
        if j > 0 {
            for i in 0..n {
                acc[i] = decay[i] * acc[i] + ci.b[(j - 1) * n + i];
            }
        }
        let t = grid.t(j);
        for i in 0..n {
            values.push((-a.op.lambda(i) * t).exp() * u0.coords[i] + acc[i]);
        }
    }
    GridPath::new(grid, n, values)
}

/// Area of the continuous mild path through the nodes of `x` against the driver.
fn t2_exact(x: &GridPath, ci: &CellIntegrals, a: &AreaOperator, exponents: (f64, f64)) -> GridArea {
    let omega = &a.driver;
    let grid = omega.grid;
    let (n, m, h) = (a.n(), grid.cells, grid.h());
    let lam = a.op.eigenvalues();
    let decay: Vec<f64> = lam.iter().map(|l| (-l * h).exp()).collect();
    let step: Vec<f64> = lam.iter().map(|&l| a1(l, h)).collect();
    let slopes = omega.slopes();
    let mut v = GridArea::zeros(grid, n);
    v.exponents = exponents;
    let mut p = vec![0.0; n * n];
    let mut acc = vec![0.0; n * n];
    for b in 2..=m {
        p.iter_mut().for_each(|z| *z = 0.0);
        acc.iter_mut().for_each(|z| *z = 0.0);
        let wb = omega.at(b);
        for c in (1..b).rev() {
            let ws = &slopes[c * n..(c + 1) * n];
            for i in 0..n {
                let (bi, ai) = (ci.b[c * n + i], ci.a[c * n + i]);
                for l in 0..n {
                    let k = i * n + l;
                    acc[k] += ws[l] * ai + p[k] * bi;
                    p[k] = step[i] * ws[l] + decay[i] * p[k];
                }
            }
            let xa = x.at(c);
            let wa = omega.at(c);
            let out = v.get_mut(c, b);
            for i in 0..n {
                for l in 0..n {
                    let k = i * n + l;
                    out[k] = xa[i] * (p[k] - (wb[l] - wa[l])) + acc[k];
                }
            }
        }
    }
    v
}

fn grid_breaks(grid: &TimeGrid, s: f64, t: f64) -> Vec<f64> {
    (0..=grid.cells).map(|k| grid.t(k)).filter(|x| *x > s && *x < t).collect()
}

/// `int_s^t S(t - r) G(u(r)) d omega(r)` by the two fractional integrals, with
/// the semigroup applied mode-wise inside both integrands.
pub fn fractional_convolution(
    pair: &SolutionPair,
    a: &AreaOperator,
    g: &NonlinearityG,
    params: &HolderParams,
    spec: &QuadratureSpec,
    s: f64,
    t: f64,
) -> Result<Vec<f64>> {
    params.validate()?;
    if t <= s {
        return Err(MildError::Domain(format!("integral needs s < t, got s = {s}, t = {t}")));
    }
    let view = AreaView::new(&pair.v, &pair.u, &a.driver)?;
    fractional_convolution_fn(&pair.u, &a.driver, &view, a.op.eigenvalues(), g, params.alpha, spec, s, t)
}

/// [`fractional_convolution`] for arbitrary path, driver and area inputs,
/// with the semigroup given by its eigenvalues.
#[allow(clippy::too_many_arguments)]
pub fn fractional_convolution_fn(
    u: &dyn PathFn,
    omega: &dyn PathFn,
    area: &dyn AreaFn,
    lam: &[f64],
    g: &NonlinearityG,
    alpha: f64,
    spec: &QuadratureSpec,
    s: f64,
    t: f64,
) -> Result<Vec<f64>> {
    if t <= s {
        return Err(MildError::Domain(format!("integral needs s < t, got s = {s}, t = {t}")));
    }
    let n = g.n;
    let sg = |x: f64, i: usize| (-lam[i] * (t - x)).exp();
    let breaks = merged_breaks(s, t, &[u.breakpoints(s, t), omega.breakpoints(s, t), area.breakpoints(s, t)]);
    let mut out = vec![0.0; n];

    let r1 = jacobi_rule(s, t, -alpha, alpha, (true, true), spec, &breaks);
    let mut uq = vec![0.0; n];
    for (x, w) in r1.nodes.iter().zip(&r1.weights) {
        let r = *x;
        let ur = u.eval(r);
        let gr = g.g_matrix(&ur);
        let fr: Vec<f64> = (0..n * n).map(|k| sg(r, k / n) * gr[k]).collect();
        let (semi, _) = right_integral(n * n, s, r, alpha, 1.0, spec, &breaks, |q, o| {
            for k in 0..n * n {
                o[k] = (sg(r, k / n) - sg(q, k / n)) * gr[k] / (r - q);
            }
        });
        let comp = compensated_right(s, r, alpha, spec, &breaks, &fr, |q, o| {
            u.eval_into(q, &mut uq);
            let d: Vec<f64> = ur.iter().zip(&uq).map(|(p, q)| p - q).collect();
            let gq = g.g_matrix(&uq);
            let dgq = g.deriv_matrix(&uq, &[&d]);
            let y2 = (r - q) * (r - q);
            for k in 0..n * n {
                o[k] = sg(q, k / n) * (gr[k] - gq[k] - dgq[k]) / y2;
            }
        });
        let c = 1.0 / gamma(1.0 - alpha);
        let dh: Vec<f64> = comp.iter().zip(&semi).map(|(x, y)| x + c * y).collect();
        let l = frac_deriv_left(omega, t, 1.0 - alpha, r, spec)?.value;
        let scale = (r - s).powf(alpha) * (t - r).powf(-alpha);
        for i in 0..n {
            out[i] -= w * scale * (0..n).map(|k| dh[i * n + k] * l[k]).sum::<f64>();
        }
    }

    let e2 = 2.0 * alpha - 1.0;
    let r2 = jacobi_rule(s, t, -e2, e2, (true, true), spec, &breaks);
    let dgpath = WithBreaks {
        path: FnPath {
            dim: n * n * n,
            f: |q: f64, o: &mut [f64]| {
                g.dg_tensor_into(&u.eval(q), o);
                for (k, z) in o.iter_mut().enumerate() {
                    *z *= sg(q, k / (n * n));
                }
            },
        },
        breaks: breaks.clone(),
    };
    for (x, w) in r2.nodes.iter().zip(&r2.weights) {
        let r = *x;
        let dgs = frac_deriv_right(&dgpath, s, e2, r, spec)?.value;
        let it = iterated_tensor_deriv(area, t, alpha, r, spec)?;
        let scale = (r - s).powf(e2) * (t - r).powf(-e2);
        for i in 0..n {
            out[i] += w * scale * (0..n * n).map(|kl| dgs[i * n * n + kl] * it[kl]).sum::<f64>();
        }
    }
    Ok(out)
}

/// `T2(U)(s, t)` at one grid pair by the three fractional terms: the
/// semigroup-increment term of `x = T1(U)(s)`, the compensated derivative of
/// `G(u)` against the twisted area `(omega (x)_S omega)(., t)`, and
/// `D^{2 alpha - 1} DG(u)` against the iterated derivative of the area of `u`
/// against `r -> omega(r) Phi(r, t)` (the negative of `w`).
#[allow(clippy::too_many_arguments)]
pub fn fractional_area_entry(
    pair: &SolutionPair,
    a: &AreaOperator,
    g: &NonlinearityG,
    params: &HolderParams,
    spec: &QuadratureSpec,
    x: &[f64],
    sa: usize,
    tb: usize,
) -> Result<Vec<f64>> {
    params.validate()?;
    let grid = a.driver.grid;
    if !(1 <= sa && sa < tb && tb <= grid.cells) {
        return Err(MildError::Domain(format!("need 1 <= a < b <= M, got a = {sa}, b = {tb}")));
    }
    let (s, t) = (grid.t(sa), grid.t(tb));
    let alpha = params.alpha;
    let n = g.n;
    let u = &pair.u;
    let omega = &a.driver;
    let lam = a.op.eigenvalues();
    let breaks = grid_breaks(&grid, s, t);
    let mut out = vec![0.0; n * n];

    let incr = FnPath {
        dim: n,
        f: |xi: f64, o: &mut [f64]| {
            for i in 0..n {
                o[i] = (-lam[i] * (xi - s)).exp_m1() * x[i];
            }
        },
    };
    let b1 = young_integral(&incr, omega, s, t, alpha, None, spec)?;
    out.iter_mut().zip(&b1).for_each(|(o, b)| *o += b);

    let kpath = WithBreaks { path: FnPath { dim: n * n * n, f: |q: f64, o: &mut [f64]| o.copy_from_slice(&a.kernel(q.min(t), t)) }, breaks: breaks.clone() };
    let r1 = jacobi_rule(s, t, -alpha, alpha, (true, true), spec, &breaks);
    for (xr, w) in r1.nodes.iter().zip(&r1.weights) {
        let r = *xr;
        let dh = compensated_deriv(g, u, s, alpha, r, spec)?;
        let lk = left_deriv(&kpath, t, 1.0 - alpha, r, spec)?.value;
        let scale = (r - s).powf(alpha) * (t - r).powf(-alpha);
        for i in 0..n {
            for l in 0..n {
                out[i * n + l] += w * scale * (0..n).map(|k| dh.get(i, k) * lk[(i * n + k) * n + l]).sum::<f64>();
            }
        }
    }

    let excess = cell_excess(pair, omega);
    let lam_area = FnArea {
        dim: n * n * n * n,
        f: |p: f64, q: f64, o: &mut [f64]| {
            o.iter_mut().for_each(|z| *z = 0.0);
            if q <= p {
                return;
            }
            let wd = a.w_direct(u, t, p, q).expect("ordered times");
            for (z, w) in o.iter_mut().zip(&wd) {
                *z = -w;
            }
            for (c0, c1, c) in segments(&grid, p, q) {
                let len = c1 - c0;
                let ws = omega.slope(c);
                let phi = a.phi(c1, t);
                for i in 0..n {
                    let (m2, m1) = (a2(lam[i], len), a1(lam[i], len));
                    for km in 0..n * n {
                        let e = excess[c * n * n + km];
                        if e == 0.0 {
                            continue;
                        }
                        for l in 0..n {
                            o[(i * n * n + km) * n + l] += e * (ws[l] * m2 + phi[i * n + l] * m1);
                        }
                    }
                }
            }
        },
        breaks: breaks.clone(),
    };
    let e2 = 2.0 * alpha - 1.0;
    let r2 = jacobi_rule(s, t, -e2, e2, (true, true), spec, &breaks);
    for (xr, w) in r2.nodes.iter().zip(&r2.weights) {
        let r = *xr;
        let dg = dg_right_deriv(g, u, s, e2, r, spec)?;
        let it = iterated_tensor_deriv(&lam_area, t, alpha, r, spec)?;
        let scale = (r - s).powf(e2) * (t - r).powf(-e2);
        for i in 0..n {
            for l in 0..n {
                let acc: f64 = (0..n * n).map(|km| dg[i * n * n + km] * it[(i * n * n + km) * n + l]).sum();
                out[i * n + l] += w * scale * acc;
            }
        }
    }
    Ok(out)
}

/// `T1(U)` on every grid point.
pub fn apply_t1(pair: &SolutionPair, a: &AreaOperator, u0: &ModeVector, g: &NonlinearityG, params: &HolderParams, config: &SolverConfig) -> Result<GridPath> {
    params.validate()?;
    check_shapes(pair, a, u0, g)?;
    pair.check(&a.driver, config.pair_tol)?;
    match config.evaluation {
        Evaluation::CellExact => t1_exact(&cell_integrals(pair, a, g, &config.quadrature), a, u0),
        Evaluation::Fractional => {
            let grid = a.driver.grid;
            let mut out = GridPath::zeros(grid, a.n());
            out.at_mut(0).copy_from_slice(&u0.coords);
            for j in 1..=grid.cells {
                let t = grid.t(j);
                let conv = fractional_convolution(pair, a, g, params, &config.quadrature, 0.0, t)?;
                for (i, o) in out.at_mut(j).iter_mut().enumerate() {
                    *o = (-a.op.lambda(i) * t).exp() * u0.coords[i] + conv[i];
                }
            }
            Ok(out)
        }
    }
}

/// `T2(U)` on every grid pair with `s > 0`.
pub fn apply_t2(pair: &SolutionPair, a: &AreaOperator, u0: &ModeVector, g: &NonlinearityG, params: &HolderParams, config: &SolverConfig) -> Result<GridArea> {
    Ok(apply_t(pair, a, u0, g, params, config)?.v)
}

/// Both components of the fixed-point map.
pub fn apply_t(
    pair: &SolutionPair,
    a: &AreaOperator,
    u0: &ModeVector,
    g: &NonlinearityG,
    params: &HolderParams,
    config: &SolverConfig,
) -> Result<SolutionPair> {
    params.validate()?;
    check_shapes(pair, a, u0, g)?;
    pair.check(&a.driver, config.pair_tol)?;
    let exps = (params.beta, params.beta_p);
    match config.evaluation {
        Evaluation::CellExact => {
            let ci = cell_integrals(pair, a, g, &config.quadrature);
            let u = t1_exact(&ci, a, u0)?;
            let v = t2_exact(&u, &ci, a, exps);
            SolutionPair::new(u, v)
        }
        Evaluation::Fractional => {
            let u = apply_t1(pair, a, u0, g, params, config)?;
            let grid = a.driver.grid;
            let mut v = GridArea::zeros(grid, a.n());
            v.exponents = exps;
            for sa in 1..grid.cells {
                for tb in sa + 1..=grid.cells {
                    let e = fractional_area_entry(pair, a, g, params, &config.quadrature, u.at(sa), sa, tb)?;
                    v.get_mut(sa, tb).copy_from_slice(&e);
                }
            }
            SolutionPair::new(u, v)
        }
    }
}

/// `(t -> S(t) u0, area of that path)`, the starting point of the iteration.
pub fn initial_pair(a: &AreaOperator, u0: &ModeVector, params: &HolderParams) -> Result<SolutionPair> {
    let grid = a.driver.grid;
    let n = a.n();
    if u0.dim() != n {
        return Err(MildError::Dimension { expected: n, got: u0.dim() });
    }
    let ci = CellIntegrals { b: vec![0.0; grid.cells * n], a: vec![0.0; grid.cells * n] };
    let u = t1_exact(&ci, a, u0)?;
    let v = t2_exact(&u, &ci, a, (params.beta, params.beta_p));
    SolutionPair::new(u, v)
}

/// One row of the iteration history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub delta: f64,
    /// `delta_k / delta_{k-1}`, absent on the first step after a (re)start.
    pub ratio: Option<f64>,
    pub horizon: f64,
}

/// Writes the history with columns `iter, delta_w, ratio, horizon`.
pub fn write_history_csv<W: Write>(rows: &[HistoryRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["iter", "delta_w", "ratio", "horizon"])?;
    for r in rows {
        let ratio = r.ratio.map(|x| format!("{x}")).unwrap_or_default();
        wr.write_record(&[r.iter.to_string(), format!("{}", r.delta), ratio, format!("{}", r.horizon)])?;
    }
    wr.flush()?;
    Ok(())
}

/// Result of [`solve_fixed_point`].
#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub pair: SolutionPair,
    pub history: Vec<HistoryRow>,
    /// Horizon actually reached after halvings.
    pub horizon: f64,
    /// Driver restricted to that horizon, with its operator.
    pub area_op: AreaOperator,
    /// `||T(U*) - U*||_W`.
    pub residual: f64,
    /// The stopping threshold `tol (1 + ||U*||_W)`.
    pub threshold: f64,
}

/// The first `cells` cells of a grid path.
pub fn truncate(path: &GridPath, cells: usize) -> Result<GridPath> {
    let grid = TimeGrid::new(cells as f64 * path.grid.h(), cells)?;
    let values = path.values[..(cells + 1) * path.dim].to_vec();
    Ok(GridPath { grid, dim: path.dim, values, interpolation: path.interpolation })
}

/// Picard iteration `U_{k+1} = T(U_k)` from [`initial_pair`], halving the
/// horizon after three consecutive non-contracting steps.
pub fn solve_fixed_point(a: &AreaOperator, u0: &ModeVector, g: &NonlinearityG, params: &HolderParams, config: &SolverConfig) -> Result<FixedPoint> {
    solve_from(a, u0, g, params, config, None)
}

/// [`solve_fixed_point`] with an optional custom first iterate on the full grid.
pub fn solve_from(
    a: &AreaOperator,
    u0: &ModeVector,
    g: &NonlinearityG,
    params: &HolderParams,
    config: &SolverConfig,
    start: Option<&SolutionPair>,
) -> Result<FixedPoint> {
    config.validate()?;
    params.validate()?;
    let h = a.driver.grid.h();
    if config.horizon > a.driver.grid.horizon * (1.0 + 1e-12) {
        return Err(MildError::Config(format!("horizon {} exceeds the driver horizon {}", config.horizon, a.driver.grid.horizon)));
    }
    let mut cells = ((config.horizon / h) + 1e-9).floor() as usize;
    let mut history = Vec::new();
    let mut iter = 0;
    loop {
        if cells < 4 {
            return Err(MildError::NoLocalSolution(format!("horizon fell below 4 cells of width {h} without contraction")));
        }
        let horizon = cells as f64 * h;
        let op = if cells == a.driver.grid.cells { a.clone() } else { AreaOperator::new(truncate(&a.driver, cells)?, a.op.clone())? };
        let mut cur = match start {
            Some(p) if p.u.grid.cells == a.driver.grid.cells && cells == a.driver.grid.cells => p.clone().with_exponents(params.beta, params.beta_p),
            Some(p) => restrict_pair(p, cells)?.with_exponents(params.beta, params.beta_p),
            None => initial_pair(&op, u0, params)?,
        };
        let mut prev: Option<f64> = None;
        let mut bad = 0;
        let mut done = None;
        for _ in 0..config.max_iter {
            iter += 1;
            let next = apply_t(&cur, &op, u0, g, params, config)?;
            let delta = next.distance(&cur);
            let ratio = prev.map(|p| if p > 0.0 { delta / p } else { 0.0 });
            history.push(HistoryRow { iter, delta, ratio, horizon });
            if !delta.is_finite() {
                break;
            }
            let threshold = config.tol * (1.0 + next.norms.total);
            if delta <= threshold {
                done = Some((next, threshold));
                break;
            }
            bad = if ratio.is_some_and(|r| r >= 1.0) { bad + 1 } else { 0 };
            if bad >= 3 {
                break;
            }
            prev = Some(delta);
            cur = next;
        }
        if let Some((pair, threshold)) = done {
            let again = apply_t(&pair, &op, u0, g, params, config)?;
            let residual = again.distance(&pair);
            return Ok(FixedPoint { pair, history, horizon, area_op: op, residual, threshold });
        }
        cells /= 2;
    }
}

/// The pair restricted to the first `cells` cells.
pub fn restrict_pair(p: &SolutionPair, cells: usize) -> Result<SolutionPair> {
    let u = truncate(&p.u, cells)?;
    let mut v = GridArea::zeros(u.grid, p.v.n);
    v.exponents = p.exponents;
    for sa in 1..=cells {
        for tb in sa..=cells {
            v.get_mut(sa, tb).copy_from_slice(p.v.get(sa, tb));
        }
    }
    SolutionPair::new(u, v)
}

/// Exponential Euler `u_{k+1} = S(h)(u_k + G(u_k)(omega(t_{k+1}) - omega(t_k)))`
/// with `substeps` steps per driver cell, reported on the driver grid.
/// With `richardson` the first-order error is extrapolated away using the
/// run with twice as many steps.
pub fn reference_mild_smooth(
    omega: &GridPath,
    op: &SpectralOperator,
    u0: &ModeVector,
    g: &NonlinearityG,
    substeps: usize,
    richardson: bool,
) -> Result<GridPath> {
    omega.require_linear()?;
    let n = op.dim();
    for got in [omega.dim, u0.dim(), g.n] {
        if got != n {
            return Err(MildError::Dimension { expected: n, got });
        }
    }
    if substeps == 0 {
        return Err(MildError::Config("substeps must be positive".into()));
    }
    let grid = omega.grid;
    let run = |k: usize| -> Vec<f64> {
        let hs = grid.h() / k as f64;
        let decay: Vec<f64> = op.eigenvalues().iter().map(|l| (-l * hs).exp()).collect();
        let mut u = u0.coords.clone();
        let mut gm = vec![0.0; n * n];
        let mut out = u.clone();
        for c in 0..grid.cells {
            let dw: Vec<f64> = omega.slope(c).iter().map(|s| s * hs).collect();
            for _ in 0..k {
                g.g_matrix_into(&u, &mut gm);
                for i in 0..n {
                    let du: f64 = (0..n).map(|l| gm[i * n + l] * dw[l]).sum();
                    u[i] = decay[i] * (u[i] + du);
                }
            }
            out.extend_from_slice(&u);
        }
        out
    };
    let coarse = run(substeps);
    let values = if richardson {
        let fine = run(2 * substeps);
        fine.iter().zip(&coarse).map(|(f, c)| 2.0 * f - c).collect()
    } else {
        coarse
    };
    GridPath::new(grid, n, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frac_calc::{rough_integral, RoughOptions};
    use crate::nonlinearity::Profile;
    use crate::paths::generate_fbm;
    use crate::tensor_area::area_u_omega;

    fn params() -> HolderParams {
        HolderParams::default()
    }

    fn smooth_driver(n: usize, m: usize, horizon: f64) -> GridPath {
        GridPath::from_fn(TimeGrid::new(horizon, m).unwrap(), n, |t, o| {
            for (k, x) in o.iter_mut().enumerate() {
                *x = (2.0 * t + k as f64).sin() - (k as f64).sin() + 0.5 * t * t;
            }
        })
    }

    fn fbm_driver(op: &SpectralOperator, m: usize, seed: u64) -> GridPath {
        let w: Vec<f64> = op.eigenvalues().iter().map(|l| l.powf(-0.5)).collect();
        generate_fbm(0.45, op, TimeGrid::new(1.0, m).unwrap(), &w, seed).unwrap()
    }

    fn setup(n: usize, driver: GridPath, amp: f64) -> (AreaOperator, NonlinearityG, ModeVector) {
        let op = SpectralOperator::squares(n, 0.25).unwrap();
        let g = NonlinearityG::example(&op, 1.5, Profile::Tanh, amp, 7).unwrap();
        let u0 = ModeVector::new((0..n).map(|i| 0.5 / (i + 1) as f64).collect());
        (AreaOperator::new(driver, op).unwrap(), g, u0)
    }

    /// Smooth Chen-consistent pair whose cell areas carry an additive excess.
    fn pair_with_excess(driver: &GridPath, eps: f64) -> SolutionPair {
        let n = driver.dim;
        let u = GridPath::from_fn(driver.grid, n, |t, o| {
            for (k, x) in o.iter_mut().enumerate() {
                *x = 0.4 * (3.0 * t + k as f64).cos() + 0.2 * t;
            }
        });
        let mut v = GridArea::from_product(&u, driver).unwrap();
        let m = driver.grid.cells;
        let h = driver.grid.h();
        for a in 1..=m {
            for b in a + 1..=m {
                let out = v.get_mut(a, b);
                for (kl, z) in out.iter_mut().enumerate() {
                    *z += eps * (b - a) as f64 * h * (1.0 + kl as f64);
                }
            }
        }
        SolutionPair::new(u, v).unwrap().with_exponents(0.36, 0.40)
    }

    fn rel(a: &[f64], b: &[f64]) -> f64 {
        let d = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let s = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        d / s.max(1e-300)
    }

    fn sup_rel(a: &GridPath, b: &GridPath) -> f64 {
        let d = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let s = b.values.iter().map(|y| y.abs()).fold(0.0, f64::max);
        d / s
    }

    #[test]
    fn zero_nonlinearity_or_driver_gives_semigroup_orbit() {
        let n = 3;
        let (a, _, u0) = setup(n, fbm_driver(&SpectralOperator::squares(n, 0.25).unwrap(), 32, 1), 1.0);
        let g0 = NonlinearityG::zero(&a.op);
        let start = initial_pair(&a, &u0, &params()).unwrap();
        let cfg = SolverConfig::default();
        let u = apply_t1(&start, &a, &u0, &g0, &params(), &cfg).unwrap();
        for j in 0..=32 {
            let t = a.driver.grid.t(j);
            for i in 0..n {
                assert_eq!(u.at(j)[i], (-a.op.lambda(i) * t).exp() * u0.coords[i]);
            }
        }
        let flat = GridPath::zeros(a.driver.grid, n);
        let (af, g, _) = setup(n, flat.clone(), 1.0);
        let zero_pair = SolutionPair::new(GridPath::zeros(flat.grid, n), GridArea::zeros(flat.grid, n)).unwrap();
        let uf = apply_t1(&zero_pair, &af, &u0, &g, &params(), &cfg).unwrap();
        assert_eq!(uf, u);
        let v = apply_t2(&SolutionPair::zero(flat.grid, n, 0.36, 0.4), &af, &ModeVector::zeros(n), &NonlinearityG::zero(&af.op), &params(), &cfg).unwrap();
        assert_eq!(v.max_norm(), 0.0);
    }

    #[test]
    fn pair_norm_examples() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        assert_eq!(pair_norm(&SolutionPair::zero(grid, 2, 0.36, 0.4)), (0.0, 0.0, 0.0));
        let driver = smooth_driver(2, 16, 1.0);
        let p = pair_with_excess(&driver, 0.1);
        let only_u = SolutionPair::new(p.u.clone(), GridArea::zeros(grid, 2)).unwrap();
        assert_eq!(pair_norm(&only_u).1, 0.0);
        let (x, y, z) = pair_norm(&p);
        assert_eq!((x, y, z), (p.norms.path, p.norms.area, p.norms.total));
        assert!(x > 0.0 && y > 0.0);
    }

    #[test]
    fn area_component_is_chen_consistent_with_path_component() {
        let n = 3;
        let op = SpectralOperator::squares(n, 0.25).unwrap();
        let (a, g, u0) = setup(n, fbm_driver(&op, 64, 3), 1.0);
        let start = initial_pair(&a, &u0, &params()).unwrap();
        let next = apply_t(&start, &a, &u0, &g, &params(), &SolverConfig::default()).unwrap();
        let (chen, diag) = next.consistency(&a.driver);
        assert!(chen <= 1e-13 * next.v.max_norm().max(1.0), "{chen}");
        assert_eq!(diag, 0.0);
    }

    #[test]
    fn area_component_matches_product_area_for_smooth_driver() {
        let n = 2;
        let (a, g, u0) = setup(n, smooth_driver(n, 256, 1.0), 1.0);
        let pair = pair_with_excess(&a.driver, 0.0);
        let next = apply_t(&pair, &a, &u0, &g, &params(), &SolverConfig::default()).unwrap();
        let grid = a.driver.grid;
        for (sa, tb) in [(1, 256), (64, 192), (100, 101), (128, 256), (10, 40)] {
            let direct = area_u_omega(&next.u, &a.driver, grid.t(sa), grid.t(tb)).unwrap();
            let err = rel(next.v.get(sa, tb), &direct.coords);
            assert!(err <= 5e-3, "({sa},{tb}): {err}");
        }
    }

    #[test]
    fn cell_exact_integral_matches_rough_integral_in_flat_limit() {
        let n = 2;
        let driver = smooth_driver(n, 16, 1.0);
        let op = SpectralOperator::new(vec![1e-10, 2e-10], 0.25).unwrap();
        let g = NonlinearityG::example(&op, 1.5, Profile::Tanh, 1.0, 3).unwrap();
        let a = AreaOperator::new(driver.clone(), op).unwrap();
        let u0 = ModeVector::zeros(n);
        let pair = pair_with_excess(&driver, 0.3);
        let cfg = SolverConfig::default();
        let t1 = apply_t1(&pair, &a, &u0, &g, &params(), &cfg).unwrap();
        for j in [5, 11, 16] {
            let t = driver.grid.t(j);
            let rough = rough_integral(&g, &pair, &driver, 0.0, t, &params(), &cfg.quadrature, RoughOptions::default()).unwrap();
            let err = rel(t1.at(j), &rough.coords);
            assert!(err <= 1e-3, "t = {t}: {err} {:?} vs {:?}", t1.at(j), rough.coords);
        }
    }

    #[test]
    fn fractional_path_component_matches_cell_exact() {
        let n = 2;
        let op = SpectralOperator::squares(n, 0.25).unwrap();
        let (a, g, u0) = setup(n, fbm_driver(&op, 8, 5), 1.0);
        let pair = pair_with_excess(&a.driver, 0.2);
        let exact = apply_t1(&pair, &a, &u0, &g, &params(), &SolverConfig::default()).unwrap();
        let frac_cfg = SolverConfig { evaluation: Evaluation::Fractional, ..SolverConfig::default() };
        let frac = apply_t1(&pair, &a, &u0, &g, &params(), &frac_cfg).unwrap();
        let err = sup_rel(&frac, &exact);
        assert!(err <= 2e-4, "{err}");
    }

    #[test]
    fn fractional_area_terms_match_cell_exact() {
        let n = 2;
        let op = SpectralOperator::squares(n, 0.25).unwrap();
        let (a, g, u0) = setup(n, fbm_driver(&op, 8, 5), 1.0);
        let pair = pair_with_excess(&a.driver, 0.2);
        let exact = apply_t(&pair, &a, &u0, &g, &params(), &SolverConfig::default()).unwrap();
        let spec = QuadratureSpec::default();
        for (sa, tb) in [(1, 8), (3, 6), (4, 5)] {
            let frac = fractional_area_entry(&pair, &a, &g, &params(), &spec, exact.u.at(sa), sa, tb).unwrap();
            let err = rel(&frac, exact.v.get(sa, tb));
            assert!(err <= 1e-3, "({sa},{tb}): {err} {frac:?} vs {:?}", exact.v.get(sa, tb));
        }
    }

    #[test]
    fn fractional_convolution_is_additive() {
        let n = 2;
        let op = SpectralOperator::squares(n, 0.25).unwrap();
        let (a, g, _) = setup(n, fbm_driver(&op, 8, 9), 1.0);
        let pair = pair_with_excess(&a.driver, 0.1);
        let spec = QuadratureSpec::default();
        let (s, t) = (0.375, 0.875);
        let i0s = fractional_convolution(&pair, &a, &g, &params(), &spec, 0.0, s).unwrap();
        let ist = fractional_convolution(&pair, &a, &g, &params(), &spec, s, t).unwrap();
        let i0t = fractional_convolution(&pair, &a, &g, &params(), &spec, 0.0, t).unwrap();
        let lhs: Vec<f64> = (0..n).map(|i| (-a.op.lambda(i) * (t - s)).exp() * i0s[i] + ist[i]).collect();
        let fine = fractional_convolution(&pair, &a, &g, &params(), &spec.refined(), 0.0, t).unwrap();
        let qtol = rel(&i0t, &fine).max(1e-6);
        assert!(rel(&lhs, &i0t) <= 2.0 * qtol.max(1e-4), "{} vs {qtol}", rel(&lhs, &i0t));
    }

    #[test]
    fn inconsistent_pair_is_rejected() {
        let n = 2;
        let driver = smooth_driver(n, 16, 1.0);
        let (a, g, u0) = setup(n, driver.clone(), 1.0);
        let mut pair = pair_with_excess(&driver, 0.0);
        pair.v.get_mut(3, 9)[0] += 1e-3;
        let e = apply_t(&pair, &a, &u0, &g, &params(), &SolverConfig::default()).unwrap_err();
        assert!(matches!(e, MildError::InconsistentPair(_)), "{e}");
    }

    #[test]
    fn reference_scheme_examples() {
        let n = 2;
        let driver = smooth_driver(n, 32, 1.0);
        let op = SpectralOperator::squares(n, 0.25).unwrap();
        let u0 = ModeVector::new(vec![1.0, -0.5]);
        let r = reference_mild_smooth(&driver, &op, &u0, &NonlinearityG::zero(&op), 3, false).unwrap();
        for j in 0..=32 {
            for i in 0..n {
                let e = (-op.lambda(i) * driver.grid.t(j)).exp() * u0.coords[i];
                assert!((r.at(j)[i] - e).abs() <= 1e-13);
            }
        }
        let flat = SpectralOperator::new(vec![1e-12], 0.25).unwrap();
        let g = NonlinearityG::from_parts(&flat, vec![1.0], vec![1.0], Profile::Sin).unwrap();
        let line = GridPath::from_fn(TimeGrid::new(1.0, 8).unwrap(), 1, |t, o| o[0] = t);
        let x0 = ModeVector::new(vec![1e-4]);
        let err = |k: usize| (reference_mild_smooth(&line, &flat, &x0, &g, k, false).unwrap().at(8)[0] / (1e-4 * 1f64.exp()) - 1.0).abs();
        let (e1, e2) = (err(16), err(32));
        assert!(e1 <= 0.05, "{e1}");
        assert!((e1 / e2 - 2.0).abs() <= 0.1, "{e1} {e2}");
        let rich = reference_mild_smooth(&line, &flat, &x0, &g, 16, true).unwrap().at(8)[0];
        assert!((rich / (1e-4 * 1f64.exp()) - 1.0).abs() <= e2 / 10.0);
    }

    #[test]
    fn zero_nonlinearity_converges_in_one_step() {
        let n = 3;
        let op = SpectralOperator::squares(n, 0.25).unwrap();
        let (a, _, u0) = setup(n, fbm_driver(&op, 32, 2), 1.0);
        let g0 = NonlinearityG::zero(&a.op);
        let fp = solve_fixed_point(&a, &u0, &g0, &params(), &SolverConfig::default()).unwrap();
        assert_eq!(fp.history.len(), 1);
        assert_eq!(fp.pair, initial_pair(&a, &u0, &params()).unwrap());
        assert!(fp.residual <= fp.threshold);
    }

    #[test]
    fn fixed_point_matches_classical_mild_solution() {
        let n = 2;
        let (a, g, u0) = setup(n, smooth_driver(n, 512, 1.0), 1.0);
        let fp = solve_fixed_point(&a, &u0, &g, &params(), &SolverConfig::default()).unwrap();
        assert_eq!(fp.horizon, 1.0);
        let reference = reference_mild_smooth(&a.driver, &a.op, &u0, &g, 4, true).unwrap();
        let err = sup_rel(&fp.pair.u, &reference);
        assert!(err <= 5e-3, "{err}");
        assert!(fp.residual <= 10.0 * fp.threshold, "{} {}", fp.residual, fp.threshold);
    }

    #[test]
    fn fixed_point_is_unique_and_lipschitz_in_data() {
        let n = 3;
        let op = SpectralOperator::squares(n, 0.25).unwrap();
        let (a, g, u0) = setup(n, fbm_driver(&op, 64, 4), 1.0);
        let cfg = SolverConfig { horizon: 0.5, ..SolverConfig::default() };
        let fp = solve_fixed_point(&a, &u0, &g, &params(), &cfg).unwrap();
        let mirrored = initial_pair(&a, &u0.scale(-1.0), &params()).unwrap();
        let other = solve_from(&a, &u0, &g, &params(), &cfg, Some(&mirrored)).unwrap();
        assert!(other.history[0].delta > 1e3 * fp.threshold);
        let d = fp.pair.distance(&other.pair);
        assert!(d > 0.0 && d <= 100.0 * fp.threshold, "{d}");
        let shifted = |d: f64| {
            let mut x = u0.clone();
            x.coords[0] += d;
            solve_fixed_point(&a, &x, &g, &params(), &cfg).unwrap().pair.distance(&fp.pair) / d
        };
        let (c1, c2) = (shifted(1e-3), shifted(5e-4));
        assert!(c1.is_finite() && c1 > 0.0);
        assert!((c1 / c2 - 1.0).abs() <= 0.05, "{c1} {c2}");
    }

    #[test]
    fn non_contraction_halves_until_underflow() {
        let n = 2;
        let op = SpectralOperator::squares(n, 0.25).unwrap();
        let (a, g, u0) = setup(n, fbm_driver(&op, 32, 4), 1.0);
        let cfg = SolverConfig { tol: 1e-300, max_iter: 2, ..SolverConfig::default() };
        let e = solve_fixed_point(&a, &u0, &g, &params(), &cfg).unwrap_err();
        assert!(matches!(e, MildError::NoLocalSolution(_)), "{e}");
        let mut buf = Vec::new();
        let rows = [HistoryRow { iter: 1, delta: 0.5, ratio: None, horizon: 1.0 }, HistoryRow { iter: 2, delta: 0.25, ratio: Some(0.5), horizon: 1.0 }];
        write_history_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iter,delta_w,ratio,horizon\n1,0.5,,1\n2,0.25,0.5,1\n");
    }
}
