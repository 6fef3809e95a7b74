//! Product-integration rules for weakly singular kernels on graded meshes.
//!
//! A rule for `int_a^b (x-a)^{ea} (b-x)^{eb} F(x) dx` places Gauss-Legendre
//! nodes in every cell of a mesh graded toward the endpoints and replaces the
//! plain Gauss weights by exact kernel moments of the Lagrange basis in the
//! cells close to a singular endpoint. Nodes never sit on an endpoint.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma as gamma_fn;

/// Mesh parameters shared by every fractional integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    /// Cells per unit length, with a floor of `base / 2` cells per interval.
    pub base: usize,
    /// Grading exponent toward singular endpoints.
    pub grading: f64,
    /// Gauss points per cell.
    pub gauss: usize,
    /// Graded sub-cells on each side of an interior breakpoint (1 disables).
    pub break_cells: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { base: 16, grading: 3.0, gauss: 3, break_cells: 2 }
    }
}

impl QuadratureSpec {
    /// Same rule on a mesh with half the cell width.
    pub fn refined(&self) -> Self {
        QuadratureSpec { base: self.base * 2, ..*self }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.base < 4 || self.grading < 1.0 || self.gauss == 0 || self.gauss > 8 || self.break_cells == 0 {
            return Err(crate::MildError::Config(format!("quadrature spec needs base >= 4, grading >= 1 and 1..=8 Gauss points, got {self:?}")));
        }
        Ok(())
    }

    /// Number of cells used on an interval of length `len`.
    pub fn cells_for(&self, len: f64) -> usize {
        let n = (self.base as f64 * len.max(0.5)).ceil() as usize;
        n.max(4)
    }
}

pub fn gamma(x: f64) -> f64 {
    gamma_fn(x)
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; q];
    let mut ws = vec![0.0; q];
    for i in 0..q {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=q {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if q == 1 { x } else { p1 };
            let pm = if q == 1 { 1.0 } else { p0 };
            dp = q as f64 * (x * p - pm) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs[q - 1 - i] = 0.5 * (x + 1.0);
        ws[q - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

/// Weights `w` with `sum_j w_j p(z_j) = int_{z0}^1 z^e p(z) dz` for every
/// polynomial `p` of degree below the number of nodes.
pub fn power_weights(z0: f64, e: f64, nodes: &[f64]) -> Vec<f64> {
    let q = nodes.len();
    let mut a = nalgebra::DMatrix::<f64>::zeros(q, q);
    let mut m = nalgebra::DVector::<f64>::zeros(q);
    for k in 0..q {
        let p = e + k as f64 + 1.0;
        m[k] = (1.0 - z0.powf(p)) / p;
        for j in 0..q {
            a[(k, j)] = nodes[j].powi(k as i32);
        }
    }
    a.lu().solve(&m).expect("distinct quadrature nodes").iter().copied().collect()
}

/// Smallest admissible cell width on `[a, b]`.
fn mesh_tol(a: f64, b: f64) -> f64 {
    (1e-13 * (b - a)).max(256.0 * f64::EPSILON * a.abs().max(b.abs())).max(1e-300)
}

/// Mesh of `[a, b]` graded toward the flagged endpoints and containing the
/// given interior breakpoints.
pub fn graded_mesh(a: f64, b: f64, grade_a: bool, grade_b: bool, n: usize, grading: f64, breaks: &[f64]) -> Vec<f64> {
    let len = b - a;
    let mut pts = Vec::with_capacity(n + 1 + breaks.len());
    let map = |u: f64| -> f64 {
        match (grade_a, grade_b) {
            (false, false) => u,
            (true, false) => u.powf(grading),
            (false, true) => 1.0 - (1.0 - u).powf(grading),
            (true, true) => {
                if u <= 0.5 {
                    0.5 * (2.0 * u).powf(grading)
                } else {
                    1.0 - 0.5 * (2.0 * (1.0 - u)).powf(grading)
                }
            }
        }
    };
    for k in 0..=n {
        pts.push(a + len * map(k as f64 / n as f64));
    }
    let tol = mesh_tol(a, b);
    for &x in breaks {
        if x > a + tol && x < b - tol {
            pts.push(x);
        }
    }
    pts.sort_by(|x, y| x.total_cmp(y));
    pts.dedup_by(|x, y| (*x - *y).abs() <= tol);
    if pts.len() < 2 {
        return vec![a, b];
    }
    *pts.first_mut().unwrap() = a;
    *pts.last_mut().unwrap() = b;
    pts
}

/// Splits the mesh cells touching an interior breakpoint into `k` sub-cells
/// graded toward the breakpoint.
pub fn grade_at_breaks(mesh: &[f64], breaks: &[f64], k: usize, grading: f64) -> Vec<f64> {
    let mut out = mesh.to_vec();
    let tol = mesh_tol(mesh[0], mesh[mesh.len() - 1]);
    for (j, &x) in mesh.iter().enumerate() {
        if !breaks.iter().any(|b| (b - x).abs() <= tol) {
            continue;
        }
        for nb in [j.checked_sub(1), Some(j + 1)].into_iter().flatten() {
            if nb >= mesh.len() {
                continue;
            }
            let h = mesh[nb] - x;
            for p in 1..k {
                out.push(x + h * (p as f64 / k as f64).powf(grading));
            }
        }
    }
    out.sort_by(|x, y| x.total_cmp(y));
    out.dedup_by(|x, y| (*x - *y).abs() <= tol);
    if out.len() < 2 {
        return vec![mesh[0], mesh[mesh.len() - 1]];
    }
    *out.last_mut().unwrap() = mesh[mesh.len() - 1];
    out
}

/// Nodes and weights for `int_a^b (x-a)^{ea} (b-x)^{eb} F(x) dx ~ sum w_j F(x_j)`.
#[derive(Debug, Clone, Default)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn apply<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Cells within this many widths of a singular endpoint use product weights.
const NEAR_RATIO: f64 = 9.0;

/// Builds a [`Rule`] on an explicit mesh.
pub fn jacobi_rule_on_mesh(mesh: &[f64], ea: f64, eb: f64, q: usize) -> Rule {
    let (gx, gw) = gauss_legendre(q);
    let a = mesh[0];
    let b = *mesh.last().unwrap();
    let mut rule = Rule { nodes: Vec::with_capacity(q * mesh.len()), weights: Vec::with_capacity(q * mesh.len()) };
    for cell in mesh.windows(2) {
        let (c0, c1) = (cell[0], cell[1]);
        let h = c1 - c0;
        if h <= 0.0 {
            continue;
        }
        let xs: Vec<f64> = gx.iter().map(|g| c0 + h * g).collect();
        let da = c0 - a;
        let db = b - c1;
        let near_a = ea != 0.0 && da <= NEAR_RATIO * h;
        let near_b = eb != 0.0 && db <= NEAR_RATIO * h;
        let use_a = near_a && (!near_b || da <= db);
        let ws: Vec<f64> = if use_a {
            // y = x - a in [da, da + h]
            let y1 = c1 - a;
            let z: Vec<f64> = gx.iter().map(|g| (da + h * g) / y1).collect();
            let pw = power_weights(da / y1, ea, &z);
            let s = y1.powf(ea + 1.0);
            pw.iter().zip(&xs).map(|(w, x)| w * s * (b - x).powf(eb)).collect()
        } else if near_b {
            let y1 = b - c0;
            let z: Vec<f64> = gx.iter().map(|g| (db + h * (1.0 - g)) / y1).collect();
            let pw = power_weights(db / y1, eb, &z);
            let s = y1.powf(eb + 1.0);
            pw.iter().zip(&xs).map(|(w, x)| w * s * (x - a).powf(ea)).collect()
        } else {
            gw.iter().zip(&xs).map(|(w, x)| w * h * (x - a).powf(ea) * (b - x).powf(eb)).collect()
        };
        rule.nodes.extend(xs);
        rule.weights.extend(ws);
    }
    rule
}

/// Rule on `[a, b]` with automatic graded mesh; grading is applied at every
/// endpoint whose exponent is nonzero or that is flagged in `grade`.
pub fn jacobi_rule(a: f64, b: f64, ea: f64, eb: f64, grade: (bool, bool), spec: &QuadratureSpec, breaks: &[f64]) -> Rule {
    let n = spec.cells_for(b - a);
    let mut mesh = graded_mesh(a, b, grade.0 || ea != 0.0, grade.1 || eb != 0.0, n, spec.grading, breaks);
    if spec.break_cells > 1 && !breaks.is_empty() {
        mesh = grade_at_breaks(&mesh, breaks, spec.break_cells, spec.grading);
    }
    jacobi_rule_on_mesh(&mesh, ea, eb, spec.gauss)
}
