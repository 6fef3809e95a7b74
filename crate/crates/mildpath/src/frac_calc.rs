//! Weyl-Marchaud fractional derivatives and the fractional Young and rough
//! integrals built from them.
//!
//! Real sign convention: the complex prefactors `(-1)^alpha`, `(-1)^{1-alpha}`
//! are dropped, and every pairing of a right derivative with a left
//! derivative carries one factor `-1`. With this choice
//! `int_s^t 1 d omega = omega(t) - omega(s)` and `int_0^1 q dq = 1/2`.
//!
//! Right derivative, anchored at `s`:
//! `D^a_{s+} f[r] = (f(r)(r-s)^{-a} + a int_s^r (f(r)-f(q))(r-q)^{-1-a} dq) / Gamma(1-a)`.
//!
//! Left derivative of a path `g` on `[r, t]`:
//! `D^a_{t-} g[r] = (g(r)(t-r)^{-a} + a int_r^t (g(r)-g(q))(q-r)^{-1-a} dq) / Gamma(1-a)`,
//! applied to `omega_{t-} = omega(.) - omega(t)` for drivers.

use crate::error::{MildError, Result};
use crate::mild_solver::SolutionPair;
use crate::nonlinearity::NonlinearityG;
use crate::paths::{HolderParams, PathFn};
use crate::quadrature::{gamma, jacobi_rule, QuadratureSpec};
use crate::spectral::{HSMap, ModeTensor, ModeVector};
use crate::tensor_area::{chen_residual_path, AreaFn, AreaView};

/// Which endpoint the derivative is anchored at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivSide {
    /// `D_{s+}`, anchored at the left end `s`.
    Right,
    /// `D_{t-}`, anchored at the right end `t`.
    Left,
}

/// A fractional derivative evaluated at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FracDerivSample {
    pub r: f64,
    pub value: Vec<f64>,
    pub order: f64,
    pub anchor: f64,
    pub side: DerivSide,
    /// Set when the operand looks rougher than the derivative order near `r`.
    pub accuracy_warning: bool,
}

fn check_order(a: f64) -> Result<()> {
    if !(a > 0.0 && a < 1.0) {
        return Err(MildError::Domain(format!("derivative order {a} must lie in (0, 1)")));
    }
    Ok(())
}

pub(crate) fn merged_breaks(a: f64, b: f64, lists: &[Vec<f64>]) -> Vec<f64> {
    let mut out: Vec<f64> = lists.iter().flatten().copied().filter(|x| *x > a && *x < b).collect();
    out.sort_by(|x, y| x.total_cmp(y));
    out.dedup();
    out
}

/// Local Hölder exponent of a difference profile from its two samples
/// closest to the singular point; `None` when undecidable.
fn local_exponent(samples: &[(f64, f64)]) -> Option<f64> {
    let mut s: Vec<(f64, f64)> = samples.iter().copied().filter(|(y, n)| *y > 0.0 && *n > 0.0).collect();
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    if s.len() < 2 || s[1].0 / s[0].0 < 1.05 {
        return None;
    }
    Some((s[1].1 / s[0].1).ln() / (s[1].0 / s[0].0).ln())
}

/// Core of every right derivative: `numer(q)` must return the difference
/// `f(r) - f(q)` (or a compensated version of it) divided by `(r-q)^power`.
/// The integral term is `a int_s^r numer(q) (r-q)^{power-1-a} dq`.
pub(crate) fn right_integral<F>(dim: usize, s: f64, r: f64, a: f64, power: f64, spec: &QuadratureSpec, breaks: &[f64], mut numer: F) -> (Vec<f64>, bool)
where
    F: FnMut(f64, &mut [f64]),
{
    let rule = jacobi_rule(s, r, 0.0, power - 1.0 - a, (false, true), spec, breaks);
    let mut acc = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    let mut probe = Vec::with_capacity(2);
    let n = rule.nodes.len();
    for (j, (x, w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        numer(*x, &mut buf);
        for k in 0..dim {
            acc[k] += a * w * buf[k];
        }
        if j + 2 >= n {
            let y = r - x;
            let mag = buf.iter().map(|v| v * v).sum::<f64>().sqrt() * y.powf(power);
            probe.push((y, mag));
        }
    }
    let warn = local_exponent(&probe).map(|e| e <= a + 1e-3 && power <= 1.0).unwrap_or(false);
    (acc, warn)
}

/// Integral term of every left derivative: `a int_r^t numer(q) (q-r)^{power-1-a} dq`.
pub(crate) fn left_integral<F>(dim: usize, r: f64, t: f64, a: f64, power: f64, spec: &QuadratureSpec, breaks: &[f64], mut numer: F) -> (Vec<f64>, bool)
where
    F: FnMut(f64, &mut [f64]),
{
    let rule = jacobi_rule(r, t, power - 1.0 - a, 0.0, (true, true), spec, breaks);
    let mut acc = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    let mut probe = Vec::with_capacity(2);
    for (j, (x, w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        numer(*x, &mut buf);
        for k in 0..dim {
            acc[k] += a * w * buf[k];
        }
        if j < 2 {
            let y = x - r;
            let mag = buf.iter().map(|v| v * v).sum::<f64>().sqrt() * y.powf(power);
            probe.push((y, mag));
        }
    }
    let warn = local_exponent(&probe).map(|e| e <= a + 1e-3 && power <= 1.0).unwrap_or(false);
    (acc, warn)
}

/// `D^alpha_{s+} f[r]` for any path.
pub fn frac_deriv_right(f: &dyn PathFn, s: f64, alpha: f64, r: f64, spec: &QuadratureSpec) -> Result<FracDerivSample> {
    check_order(alpha)?;
    if r <= s {
        return Err(MildError::Domain(format!("right derivative needs s < r, got s = {s}, r = {r}")));
    }
    let dim = f.dim();
    let fr = f.eval(r);
    let breaks = f.breakpoints(s, r);
    let (integral, warn) = right_integral(dim, s, r, alpha, 1.0, spec, &breaks, |q, out| {
        f.eval_into(q, out);
        let y = r - q;
        for k in 0..dim {
            out[k] = (fr[k] - out[k]) / y;
        }
    });
    let c = 1.0 / gamma(1.0 - alpha);
    let p = (r - s).powf(-alpha);
    let value = (0..dim).map(|k| c * (fr[k] * p + integral[k])).collect();
    Ok(FracDerivSample { r, value, order: alpha, anchor: s, side: DerivSide::Right, accuracy_warning: warn })
}

/// Left derivative of order `a` of an arbitrary path `g` (no re-anchoring).
pub fn left_deriv(g: &dyn PathFn, t: f64, a: f64, r: f64, spec: &QuadratureSpec) -> Result<FracDerivSample> {
    check_order(a)?;
    if r >= t {
        return Err(MildError::Domain(format!("left derivative needs r < t, got r = {r}, t = {t}")));
    }
    let dim = g.dim();
    let gr = g.eval(r);
    let breaks = g.breakpoints(r, t);
    let (integral, warn) = left_integral(dim, r, t, a, 1.0, spec, &breaks, |q, out| {
        g.eval_into(q, out);
        let y = q - r;
        for k in 0..dim {
            out[k] = (gr[k] - out[k]) / y;
        }
    });
    let c = 1.0 / gamma(1.0 - a);
    let p = (t - r).powf(-a);
    let value = (0..dim).map(|k| c * (gr[k] * p + integral[k])).collect();
    Ok(FracDerivSample { r, value, order: a, anchor: t, side: DerivSide::Left, accuracy_warning: warn })
}

/// `D^{1-alpha}_{t-} f_{t-}[r]` with `f_{t-} = f(.) - f(t)`.
pub fn frac_deriv_left(f: &dyn PathFn, t: f64, one_minus_alpha: f64, r: f64, spec: &QuadratureSpec) -> Result<FracDerivSample> {
    let ft = f.eval(t);
    let shifted = Shifted { inner: f, offset: &ft };
    left_deriv(&shifted, t, one_minus_alpha, r, spec)
}

struct Shifted<'a> {
    inner: &'a dyn PathFn,
    offset: &'a [f64],
}

impl PathFn for Shifted<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval_into(&self, t: f64, out: &mut [f64]) {
        self.inner.eval_into(t, out);
        for (o, c) in out.iter_mut().zip(self.offset) {
            *o -= c;
        }
    }
    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        self.inner.breakpoints(a, b)
    }
}

/// `D^alpha_{s+}` of `G(u(.))` with the first-order Taylor term removed:
/// `(G(u(r))(r-s)^{-alpha} + alpha int_s^r (G(u(r)) - G(u(q)) - DG(u(q))(u(r)-u(q), .))(r-q)^{-1-alpha} dq) / Gamma(1-alpha)`.
pub fn compensated_deriv(g: &NonlinearityG, u: &dyn PathFn, s: f64, alpha: f64, r: f64, spec: &QuadratureSpec) -> Result<HSMap> {
    check_order(alpha)?;
    if r <= s {
        return Err(MildError::Domain(format!("compensated derivative needs s < r, got s = {s}, r = {r}")));
    }
    let n = g.n;
    if u.dim() != n {
        return Err(MildError::Dimension { expected: n, got: u.dim() });
    }
    let ur = u.eval(r);
    let gr = g.g_matrix(&ur);
    let breaks = u.breakpoints(s, r);
    let mut uq = vec![0.0; n];
    let (integral, _) = right_integral(n * n, s, r, alpha, 2.0, spec, &breaks, |q, out| {
        u.eval_into(q, &mut uq);
        let d: Vec<f64> = ur.iter().zip(&uq).map(|(a, b)| a - b).collect();
        let gq = g.g_matrix(&uq);
        let dg = g.deriv_matrix(&uq, &[&d]);
        let y2 = (r - q) * (r - q);
        for k in 0..n * n {
            out[k] = (gr[k] - gq[k] - dg[k]) / y2;
        }
    });
    let c = 1.0 / gamma(1.0 - alpha);
    let p = (r - s).powf(-alpha);
    Ok(HSMap::from_vec(n, (0..n * n).map(|k| c * (gr[k] * p + integral[k])).collect()))
}

/// Generic compensated right derivative: `fr` is the value at `r`, and
/// `numer(q)` returns the compensated difference divided by `(r-q)^2`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn compensated_right<F>(s: f64, r: f64, alpha: f64, spec: &QuadratureSpec, breaks: &[f64], fr: &[f64], numer: F) -> Vec<f64>
where
    F: FnMut(f64, &mut [f64]),
{
    let (integral, _) = right_integral(fr.len(), s, r, alpha, 2.0, spec, breaks, numer);
    let c = 1.0 / gamma(1.0 - alpha);
    let p = (r - s).powf(-alpha);
    fr.iter().zip(&integral).map(|(f, i)| c * (f * p + i)).collect()
}

/// `D^a_{s+}` of the `DG(u(.))` array (`[i][k][l]` layout), used with `a = 2 alpha - 1`.
pub fn dg_right_deriv(g: &NonlinearityG, u: &dyn PathFn, s: f64, a: f64, r: f64, spec: &QuadratureSpec) -> Result<Vec<f64>> {
    let view = DgPath { g, u };
    Ok(frac_deriv_right(&view, s, a, r, spec)?.value)
}

struct DgPath<'a> {
    g: &'a NonlinearityG,
    u: &'a dyn PathFn,
}

impl PathFn for DgPath<'_> {
    fn dim(&self) -> usize {
        self.g.n * self.g.n * self.g.n
    }
    fn eval_into(&self, t: f64, out: &mut [f64]) {
        let u = self.u.eval(t);
        self.g.dg_tensor_into(&u, out);
    }
    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        self.u.breakpoints(a, b)
    }
}

/// `D_{t-}^{a} v[r] = (v(r,t)(t-r)^{-a} + a int_r^t v(r,q)(q-r)^{-1-a} dq) / Gamma(1-a)`.
pub fn tensor_deriv(v: &dyn AreaFn, t: f64, one_minus_alpha: f64, r: f64, spec: &QuadratureSpec) -> Result<Vec<f64>> {
    let a = one_minus_alpha;
    check_order(a)?;
    if r >= t {
        return Err(MildError::Domain(format!("tensor derivative needs r < t, got r = {r}, t = {t}")));
    }
    let dim = v.dim();
    let mut diag = vec![0.0; dim];
    v.eval_into(r, r, &mut diag);
    let dn = diag.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if dn > 1e-12 {
        return Err(MildError::InvalidArea(format!("diagonal value {dn:e} at r = {r} is not zero")));
    }
    let mut vrt = vec![0.0; dim];
    v.eval_into(r, t, &mut vrt);
    let breaks = v.breakpoints(r, t);
    let (integral, _) = left_integral(dim, r, t, a, 1.0, spec, &breaks, |q, out| {
        v.eval_into(r, q, out);
        let y = q - r;
        for o in out.iter_mut() {
            *o /= y;
        }
    });
    let c = 1.0 / gamma(1.0 - a);
    let p = (t - r).powf(-a);
    Ok((0..dim).map(|k| c * (vrt[k] * p + integral[k])).collect())
}

/// `D^{1-alpha}_{t-}` applied to `theta -> D^{1-alpha}_{t-} v[theta]`.
pub fn iterated_tensor_deriv(v: &dyn AreaFn, t: f64, alpha: f64, r: f64, spec: &QuadratureSpec) -> Result<Vec<f64>> {
    let a = 1.0 - alpha;
    check_order(a)?;
    if r >= t {
        return Err(MildError::Domain(format!("iterated tensor derivative needs r < t, got r = {r}, t = {t}")));
    }
    let inner = TensorDerivPath { v, t, a, spec: *spec };
    Ok(left_deriv(&inner, t, a, r, spec)?.value)
}

struct TensorDerivPath<'a> {
    v: &'a dyn AreaFn,
    t: f64,
    a: f64,
    spec: QuadratureSpec,
}

impl PathFn for TensorDerivPath<'_> {
    fn dim(&self) -> usize {
        self.v.dim()
    }
    fn eval_into(&self, x: f64, out: &mut [f64]) {
        if x >= self.t {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let val = tensor_deriv(self.v, self.t, self.a, x, &self.spec).expect("valid area");
        out.copy_from_slice(&val);
    }
    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        self.v.breakpoints(a, b)
    }
}

/// Declared Hölder exponents of an integrand/integrator pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoungExponents {
    pub integrand: f64,
    pub integrator: f64,
}

/// `int_s^t u (x) d omega = - int_s^t D^alpha_{s+} u[r] (x) D^{1-alpha}_{t-} omega_{t-}[r] dr`,
/// returned as a `dim(u) x dim(omega)` row-major matrix.
pub fn young_integral(u: &dyn PathFn, omega: &dyn PathFn, s: f64, t: f64, alpha: f64, exps: Option<YoungExponents>, spec: &QuadratureSpec) -> Result<Vec<f64>> {
    check_order(alpha)?;
    if let Some(e) = exps {
        if alpha + e.integrator <= 1.0 {
            return Err(MildError::Config(format!("alpha + beta' = {} must exceed 1", alpha + e.integrator)));
        }
        if e.integrand <= alpha {
            return Err(MildError::Config(format!("integrand exponent {} must exceed alpha = {alpha}", e.integrand)));
        }
    }
    if t <= s {
        return Err(MildError::Domain(format!("integral needs s < t, got s = {s}, t = {t}")));
    }
    let (du, dw) = (u.dim(), omega.dim());
    let breaks = merged_breaks(s, t, &[u.breakpoints(s, t), omega.breakpoints(s, t)]);
    let rule = jacobi_rule(s, t, -alpha, alpha, (true, true), spec, &breaks);
    let mut out = vec![0.0; du * dw];
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let d = frac_deriv_right(u, s, alpha, *x, spec)?.value;
        let l = frac_deriv_left(omega, t, 1.0 - alpha, *x, spec)?.value;
        let scale = (x - s).powf(alpha) * (t - x).powf(-alpha);
        for i in 0..du {
            for j in 0..dw {
                out[i * dw + j] -= w * scale * d[i] * l[j];
            }
        }
    }
    Ok(out)
}

/// Options of [`rough_integral`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoughOptions {
    /// Largest admissible path Chen residual of the pair, relative to the area scale.
    pub chen_tol: f64,
}

impl Default for RoughOptions {
    fn default() -> Self {
        RoughOptions { chen_tol: 1e-8 }
    }
}

/// The two-term rough integral
/// `int_s^t G(u) d omega = - int D^_alpha G(u)[r] D^{1-alpha}_{t-} omega_{t-}[r] dr
///                         + int D^{2alpha-1}_{s+} DG(u)[r] D^{1-alpha}_{t-} D^{1-alpha}_{t-} v[r] dr`.
pub fn rough_integral(
    g: &NonlinearityG,
    pair: &SolutionPair,
    omega: &crate::paths::GridPath,
    s: f64,
    t: f64,
    params: &HolderParams,
    spec: &QuadratureSpec,
    opts: RoughOptions,
) -> Result<ModeVector> {
    params.validate()?;
    if t <= s {
        return Err(MildError::Domain(format!("integral needs s < t, got s = {s}, t = {t}")));
    }
    omega.require_linear()?;
    let alpha = params.alpha;
    let u = &pair.u;
    let view = AreaView::new(&pair.v, u, omega)?;
    let m = u.grid.cells;
    let scale = pair.v.max_norm().max(1e-300);
    let stride = (m / 16).max(1);
    let mut worst: f64 = 0.0;
    for a in (1..m).step_by(stride) {
        for b in (a + 1..m).step_by(stride) {
            for c in (b + 1..=m).step_by(stride) {
                worst = worst.max(chen_residual_path(&pair.v, u, omega, a, b, c));
            }
        }
    }
    if worst > opts.chen_tol * scale.max(1.0) {
        return Err(MildError::InconsistentPair(worst));
    }
    rough_integral_fn(g, u, omega, &view, s, t, alpha, spec)
}

/// The two-term rough integral for arbitrary path, driver and area inputs.
/// No Chen consistency check is made on `area`.
#[allow(clippy::too_many_arguments)]
pub fn rough_integral_fn(
    g: &NonlinearityG,
    u: &dyn PathFn,
    omega: &dyn PathFn,
    area: &dyn AreaFn,
    s: f64,
    t: f64,
    alpha: f64,
    spec: &QuadratureSpec,
) -> Result<ModeVector> {
    if t <= s {
        return Err(MildError::Domain(format!("integral needs s < t, got s = {s}, t = {t}")));
    }
    let n = g.n;
    let breaks = merged_breaks(s, t, &[u.breakpoints(s, t), omega.breakpoints(s, t), area.breakpoints(s, t)]);
    let mut out = vec![0.0; n];
    let r1 = jacobi_rule(s, t, -alpha, alpha, (true, true), spec, &breaks);
    for (x, w) in r1.nodes.iter().zip(&r1.weights) {
        let dh = compensated_deriv(g, u, s, alpha, *x, spec)?;
        let l = frac_deriv_left(omega, t, 1.0 - alpha, *x, spec)?.value;
        let scale = (x - s).powf(alpha) * (t - x).powf(-alpha);
        let img = dh.apply(&ModeVector::new(l));
        for i in 0..n {
            out[i] -= w * scale * img.coords[i];
        }
    }
    let e2 = 2.0 * alpha - 1.0;
    let r2 = jacobi_rule(s, t, -e2, e2, (true, true), spec, &breaks);
    for (x, w) in r2.nodes.iter().zip(&r2.weights) {
        let dg = dg_right_deriv(g, u, s, e2, *x, spec)?;
        let it = iterated_tensor_deriv(area, t, alpha, *x, spec)?;
        let scale = (x - s).powf(e2) * (t - x).powf(-e2);
        for i in 0..n {
            let mut acc = 0.0;
            for kl in 0..n * n {
                acc += dg[i * n * n + kl] * it[kl];
            }
            out[i] += w * scale * acc;
        }
    }
    Ok(ModeVector::new(out))
}

/// Contracts `DG`-shaped arrays (`[i][k][l]`) against a tensor.
pub fn contract_dg(dg: &[f64], x: &ModeTensor) -> ModeVector {
    let n = x.n;
    ModeVector::new((0..n).map(|i| (0..n * n).map(|kl| dg[i * n * n + kl] * x.coords[kl]).sum()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{scalar_path, FnPath};

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn trig_u(q: f64) -> f64 {
        (2.0 * std::f64::consts::PI * q).sin() + 0.5 * (6.0 * q).cos()
    }

    fn trig_w(q: f64) -> f64 {
        (3.0 * q).cos() + 0.3 * (5.0 * q).sin()
    }

    fn riemann_stieltjes(s: f64, t: f64, n: usize) -> f64 {
        let h = (t - s) / n as f64;
        (0..n)
            .map(|j| {
                let (a, b) = (s + j as f64 * h, s + (j + 1) as f64 * h);
                trig_u(0.5 * (a + b)) * (trig_w(b) - trig_w(a))
            })
            .sum()
    }

    #[test]
    fn right_derivative_of_constant_and_identity() {
        let a = 0.66;
        let c = frac_deriv_right(&scalar_path(|_| 2.5), 0.2, a, 0.7, &spec()).unwrap();
        let exact = 2.5 / (gamma(1.0 - a) * 0.5f64.powf(a));
        assert!((c.value[0] - exact).abs() < 1e-12);
        for r in [0.1, 0.5, 1.0] {
            let d = frac_deriv_right(&scalar_path(|q| q), 0.0, a, r, &spec()).unwrap();
            let exact = r.powf(1.0 - a) / gamma(2.0 - a);
            assert!((d.value[0] - exact).abs() < 1e-9 * exact, "{} vs {exact}", d.value[0]);
            assert!(!d.accuracy_warning);
        }
    }

    #[test]
    fn right_derivative_of_powers() {
        let a = 0.32;
        for p in [0.5, 1.5, 2.0] {
            let d = frac_deriv_right(&scalar_path(move |q: f64| (q - 0.1).max(0.0).powf(p)), 0.1, a, 0.8, &spec()).unwrap();
            let exact = gamma(p + 1.0) / gamma(p + 1.0 - a) * 0.7f64.powf(p - a);
            assert!((d.value[0] - exact).abs() < 1e-4 * exact, "p={p}: {} vs {exact}", d.value[0]);
        }
    }

    #[test]
    fn left_derivative_examples() {
        let c = frac_deriv_left(&scalar_path(|_| 4.0), 1.0, 0.34, 0.3, &spec()).unwrap();
        assert_eq!(c.value[0], 0.0);
        let alpha = 0.66;
        for r in [0.0, 0.4, 0.9] {
            let d = frac_deriv_left(&scalar_path(|q| q), 1.0, 1.0 - alpha, r, &spec()).unwrap();
            let exact = -(1.0 - r).powf(alpha) / gamma(alpha + 1.0);
            assert!((d.value[0] - exact).abs() < 1e-9, "{} vs {exact}", d.value[0]);
        }
        let a = 0.4;
        for p in [1.0, 2.5] {
            let d = left_deriv(&scalar_path(move |q: f64| (1.0 - q).powf(p)), 1.0, a, 0.25, &spec()).unwrap();
            let exact = gamma(p + 1.0) / gamma(p + 1.0 - a) * 0.75f64.powf(p - a);
            assert!((d.value[0] - exact).abs() < 1e-6 * exact);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(frac_deriv_right(&scalar_path(|q| q), 0.5, 0.5, 0.5, &spec()).is_err());
        assert!(frac_deriv_left(&scalar_path(|q| q), 0.5, 0.5, 0.6, &spec()).is_err());
        assert!(frac_deriv_right(&scalar_path(|q| q), 0.0, 1.2, 0.5, &spec()).is_err());
    }

    #[test]
    fn rough_operand_raises_warning() {
        let d = frac_deriv_right(&scalar_path(|q: f64| (0.5 - q).abs().powf(0.2)), 0.0, 0.66, 0.5, &spec()).unwrap();
        assert!(d.accuracy_warning);
    }

    #[test]
    fn sign_anchors() {
        let one = scalar_path(|_| 1.0);
        for (s, t) in [(0.0, 1.0), (0.2, 0.9), (0.45, 0.5)] {
            let w = young_integral(&one, &scalar_path(trig_w), s, t, 0.66, None, &spec()).unwrap()[0];
            assert!((w - (trig_w(t) - trig_w(s))).abs() < 1e-6, "{w}");
        }
        let id = scalar_path(|q| q);
        let half = young_integral(&id, &id, 0.0, 1.0, 0.66, None, &spec()).unwrap()[0];
        assert!((half - 0.5).abs() < 1e-6, "{half}");
    }

    #[test]
    fn young_matches_riemann_stieltjes() {
        let rs = riemann_stieltjes(0.0, 1.0, 1 << 16);
        let y = young_integral(&scalar_path(trig_u), &scalar_path(trig_w), 0.0, 1.0, 0.66, None, &spec()).unwrap()[0];
        assert!((y - rs).abs() <= 1e-3 * rs.abs(), "{y} vs {rs}");
        let y2 = young_integral(&scalar_path(trig_u), &scalar_path(trig_w), 0.0, 1.0, 0.66, None, &spec().refined()).unwrap()[0];
        assert!((y2 - rs).abs() <= 1e-4 * rs.abs(), "{y2} vs {rs}");
    }

    #[test]
    fn young_exponent_preconditions() {
        let bad = YoungExponents { integrand: 0.5, integrator: 0.3 };
        assert!(matches!(young_integral(&scalar_path(trig_u), &scalar_path(trig_w), 0.0, 1.0, 0.66, Some(bad), &spec()), Err(MildError::Config(_))));
    }

    #[test]
    fn young_additivity() {
        let u = scalar_path(trig_u);
        let w = scalar_path(trig_w);
        let f = |s, t| young_integral(&u, &w, s, t, 0.66, None, &spec()).unwrap()[0];
        let err = |s, t| (f(s, t) - riemann_stieltjes(s, t, 1 << 16)).abs();
        let single = err(0.1, 0.9).max(err(0.1, 0.4)).max(err(0.4, 0.9));
        let whole = f(0.1, 0.9);
        let parts = f(0.1, 0.4) + f(0.4, 0.9);
        assert!((whole - parts).abs() <= 2.0 * single, "{whole} vs {parts}, single error {single}");
    }

    #[test]
    fn integration_by_parts() {
        let a = 0.4;
        let (s, t) = (0.15, 0.85);
        let f = scalar_path(trig_u);
        let g = scalar_path(trig_w);
        let left = jacobi_rule(s, t, -a, 0.0, (true, true), &spec(), &[]);
        let lhs = left.apply(|x| (x - s).powf(a) * frac_deriv_right(&f, s, a, x, &spec()).unwrap().value[0] * trig_w(x));
        let right = jacobi_rule(s, t, 0.0, -a, (true, true), &spec(), &[]);
        let rhs = right.apply(|x| (t - x).powf(a) * trig_u(x) * left_deriv(&g, t, a, x, &spec()).unwrap().value[0]);
        assert!((lhs - rhs).abs() < 1e-6, "{lhs} vs {rhs}");
    }

    #[test]
    fn quadrature_self_difference_shrinks() {
        let u = scalar_path(trig_u);
        let w = scalar_path(trig_w);
        let s0 = spec();
        let vals: Vec<f64> = [s0, s0.refined(), s0.refined().refined()].iter().map(|sp| young_integral(&u, &w, 0.0, 1.0, 0.66, None, sp).unwrap()[0]).collect();
        let d1 = (vals[0] - vals[1]).abs();
        let d2 = (vals[1] - vals[2]).abs();
        assert!(d1 >= 1.8 * d2, "{d1} {d2}");
    }

    #[test]
    fn tensor_derivative_of_linear_area() {
        let alpha = 0.66;
        let v = crate::tensor_area::FnArea {
            dim: 4,
            f: |x: f64, y: f64, o: &mut [f64]| {
                o.iter_mut().for_each(|z| *z = 0.0);
                o[0] = y - x;
            },
            breaks: vec![],
        };
        for r in [0.0, 0.3, 0.8] {
            let d = tensor_deriv(&v, 1.0, 1.0 - alpha, r, &spec()).unwrap();
            let exact = (1.0 - r).powf(alpha) / (alpha * gamma(alpha));
            assert!((d[0] - exact).abs() < 1e-9 * exact);
            assert_eq!(d[1], 0.0);
        }
        let bad = crate::tensor_area::FnArea { dim: 1, f: |_: f64, _: f64, o: &mut [f64]| o[0] = 1.0, breaks: vec![] };
        assert!(matches!(tensor_deriv(&bad, 1.0, 0.34, 0.2, &spec()), Err(MildError::InvalidArea(_))));
    }

    #[test]
    fn iterated_tensor_derivative_closed_form() {
        let alpha = 0.66;
        let v = crate::tensor_area::FnArea { dim: 1, f: |x: f64, y: f64, o: &mut [f64]| o[0] = 0.5 * (y - x) * (y - x), breaks: vec![] };
        let t = 1.0;
        for r in [0.1, 0.5] {
            let d = iterated_tensor_deriv(&v, t, alpha, r, &spec()).unwrap()[0];
            let c = 1.0 / ((alpha + 1.0) * gamma(alpha));
            let exact = c * gamma(2.0 + alpha) / gamma(1.0 + 2.0 * alpha) * (t - r).powf(2.0 * alpha);
            assert!((d - exact).abs() < 1e-5 * exact, "{d} vs {exact}");
        }
    }

    #[test]
    fn split_bound_holds_for_matrix_integrands() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let alpha = 0.66;
        for _ in 0..5 {
            let coef: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c2 = coef.clone();
            let f = FnPath {
                dim: 4,
                f: move |q: f64, o: &mut [f64]| {
                    for k in 0..4 {
                        o[k] = c2[2 * k] * (3.0 * q + k as f64).sin() + c2[2 * k + 1] * q * q;
                    }
                },
            };
            let xi = scalar_path(trig_w);
            let (s, t) = (0.1, 0.9);
            let rule = jacobi_rule(s, t, -alpha, alpha, (true, true), &spec(), &[]);
            let mut lhs = [0.0; 4];
            let mut rhs = 0.0;
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let sc = (x - s).powf(alpha) * (t - x).powf(-alpha);
                let d = frac_deriv_right(&f, s, alpha, *x, &spec()).unwrap().value;
                let l = frac_deriv_left(&xi, t, 1.0 - alpha, *x, &spec()).unwrap().value[0];
                for k in 0..4 {
                    lhs[k] -= w * sc * d[k] * l;
                }
                rhs += w * sc * d.iter().map(|z| z * z).sum::<f64>().sqrt() * l.abs();
            }
            let n = lhs.iter().map(|z| z * z).sum::<f64>().sqrt();
            assert!(n <= rhs * (1.0 + 1e-12));
        }
    }

    fn smooth_pair(m: usize, n: usize) -> (crate::paths::GridPath, crate::paths::GridPath, SolutionPair) {
        use crate::paths::{GridPath, TimeGrid};
        let grid = TimeGrid::new(1.0, m).unwrap();
        let u = GridPath::from_fn(grid, n, |t, o| {
            for (k, x) in o.iter_mut().enumerate() {
                *x = 0.8 * (2.0 * t + k as f64).sin() + 0.3 * t;
            }
        });
        let w = GridPath::from_fn(grid, n, |t, o| {
            for (k, x) in o.iter_mut().enumerate() {
                *x = (3.0 * t * (k as f64 + 1.0)).cos() - 1.0;
            }
        });
        let v = crate::tensor_area::GridArea::from_product(&u, &w).unwrap();
        (u.clone(), w, SolutionPair::new(u, v).unwrap())
    }

    fn riemann_stieltjes_g(g: &NonlinearityG, u: &crate::paths::GridPath, w: &crate::paths::GridPath, s: f64, t: f64) -> Vec<f64> {
        let n = g.n;
        let mut out = vec![0.0; n];
        let (gx, gw) = crate::quadrature::gauss_legendre(8);
        for (c0, c1, c) in crate::tensor_area::segments(&u.grid, s, t) {
            let sl = w.slope(c);
            for (x, wt) in gx.iter().zip(&gw) {
                let q = c0 + (c1 - c0) * x;
                let gm = g.g_matrix(&u.eval(q));
                for i in 0..n {
                    for l in 0..n {
                        out[i] += wt * (c1 - c0) * gm[i * n + l] * sl[l];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn rough_integral_matches_smooth_oracle() {
        use crate::nonlinearity::Profile;
        use crate::spectral::SpectralOperator;
        let op = SpectralOperator::squares(2, 0.75).unwrap();
        let g = NonlinearityG::example(&op, 1.0, Profile::Tanh, 1.0, 3).unwrap();
        let (u, w, pair) = smooth_pair(16, 2);
        let params = HolderParams::default();
        for (s, t) in [(0.0, 1.0), (0.25, 0.8)] {
            let r = rough_integral(&g, &pair, &w, s, t, &params, &spec(), RoughOptions::default()).unwrap();
            let o = riemann_stieltjes_g(&g, &u, &w, s, t);
            let err = r.coords.iter().zip(&o).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let nrm = o.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(err <= 1e-3 * nrm, "{:?} vs {o:?}", r.coords);
        }
    }

    #[test]
    fn rough_integral_rejects_inconsistent_pair() {
        use crate::nonlinearity::Profile;
        use crate::spectral::SpectralOperator;
        let op = SpectralOperator::squares(2, 0.75).unwrap();
        let g = NonlinearityG::example(&op, 1.0, Profile::Sin, 1.0, 3).unwrap();
        let (_, w, mut pair) = smooth_pair(16, 2);
        pair.v.get_mut(3, 9)[0] += 0.5;
        let r = rough_integral(&g, &pair, &w, 0.0, 1.0, &HolderParams::default(), &spec(), RoughOptions::default());
        assert!(matches!(r, Err(MildError::InconsistentPair(_))));
        let zero = NonlinearityG::zero(&op);
        let (_, w, pair) = smooth_pair(16, 2);
        let r = rough_integral(&zero, &pair, &w, 0.0, 1.0, &HolderParams::default(), &spec(), RoughOptions::default()).unwrap();
        assert!(r.norm() == 0.0);
    }
}
