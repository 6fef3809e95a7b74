//! Rank-structured nonlinearity `G(u)v = (sum_j g_ij(u) v_j)_i` with
//! `g_ij(u) = mu_ij phi((u, h_ij))`, its exact derivatives and the seven
//! Lipschitz/Taylor inequalities they satisfy.

use crate::error::{MildError, Result};
use crate::spectral::{HSMap, ModeVector, SpectralOperator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Scalar profile `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Sin,
    Tanh,
}

impl Profile {
    /// `phi^{(m)}(x)` for `m = 0..=4`.
    pub fn deriv(self, m: usize, x: f64) -> f64 {
        match self {
            Profile::Sin => match m % 4 {
                0 => x.sin(),
                1 => x.cos(),
                2 => -x.sin(),
                _ => -x.cos(),
            },
            Profile::Tanh => {
                let t = x.tanh();
                let s = 1.0 - t * t;
                match m {
                    0 => t,
                    1 => s,
                    2 => -2.0 * t * s,
                    3 => s * (6.0 * t * t - 2.0),
                    4 => 8.0 * t * s * (2.0 - 3.0 * t * t),
                    _ => panic!("profile derivative order {m} not available"),
                }
            }
        }
    }

    /// `sup_x |phi^{(m)}(x)|` in closed form.
    pub fn sup_deriv(self, m: usize) -> f64 {
        match self {
            Profile::Sin => 1.0,
            Profile::Tanh => match m {
                0 | 1 => 1.0,
                2 => 4.0 / (3.0 * 3f64.sqrt()),
                3 => 2.0,
                4 => {
                    let t2 = (15.0 - 105f64.sqrt()) / 30.0;
                    8.0 * t2.sqrt() * (1.0 - t2) * (2.0 - 3.0 * t2)
                }
                _ => panic!("profile derivative order {m} not available"),
            },
        }
    }
}

/// `G` together with its computed bound constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityG {
    pub n: usize,
    /// `mu_ij`, row-major.
    pub mu: Vec<f64>,
    /// `h_ij`, stored as `[(i * n + j) * n + k]`.
    pub h: Vec<f64>,
    pub profile: Profile,
    /// `lambda_i^{2 kappa_hat}`.
    pub weights: Vec<f64>,
    pub c_g: f64,
    pub c_dg: f64,
    pub c_d2g: f64,
    pub c_d3g: f64,
    pub c_d4g: f64,
}

impl NonlinearityG {
    /// Builds `G` from explicit coefficients and unit directions.
    pub fn from_parts(op: &SpectralOperator, mu: Vec<f64>, h: Vec<f64>, profile: Profile) -> Result<Self> {
        let n = op.dim();
        if mu.len() != n * n {
            return Err(MildError::Dimension { expected: n * n, got: mu.len() });
        }
        if h.len() != n * n * n {
            return Err(MildError::Dimension { expected: n * n * n, got: h.len() });
        }
        let weights: Vec<f64> = op.eigenvalues().iter().map(|l| l.powf(2.0 * op.kappa_hat())).collect();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let hn: f64 = h[(i * n + j) * n..(i * n + j + 1) * n].iter().map(|x| x * x).sum();
                s += weights[i] * mu[i * n + j].powi(2) * hn;
            }
        }
        if !s.is_finite() {
            return Err(MildError::Config("weighted coefficient sum diverges".into()));
        }
        let root = s.sqrt();
        let mut g = NonlinearityG {
            n,
            mu,
            h,
            profile,
            weights,
            c_g: 0.0,
            c_dg: root * profile.sup_deriv(1),
            c_d2g: root * profile.sup_deriv(2),
            c_d3g: root * profile.sup_deriv(3),
            c_d4g: root * profile.sup_deriv(4),
        };
        g.c_g = g.hs_norm(&g.g_matrix(&vec![0.0; n]));
        Ok(g)
    }

    /// The zero nonlinearity.
    pub fn zero(op: &SpectralOperator) -> Self {
        let n = op.dim();
        let mut h = vec![0.0; n * n * n];
        for ij in 0..n * n {
            h[ij * n] = 1.0;
        }
        Self::from_parts(op, vec![0.0; n * n], h, Profile::Sin).expect("zero nonlinearity")
    }

    /// `mu_ij = +-(i j)^{-p} lambda_i^{-kappa} * amplitude`, random signs and
    /// random unit directions drawn from `seed`.
    pub fn example(op: &SpectralOperator, decay: f64, profile: Profile, amplitude: f64, seed: u64) -> Result<Self> {
        let n = op.dim();
        let kappa = op.kappa_hat();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mu = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                mu[i * n + j] = amplitude * sign * (((i + 1) * (j + 1)) as f64).powf(-decay) * op.lambda(i).powf(-kappa);
            }
        }
        let mut h = vec![0.0; n * n * n];
        for ij in 0..n * n {
            let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for k in 0..n {
                h[ij * n + k] = v[k] / norm;
            }
        }
        Self::from_parts(op, mu, h, profile)
    }

    fn dir(&self, i: usize, j: usize) -> &[f64] {
        let n = self.n;
        &self.h[(i * n + j) * n..(i * n + j + 1) * n]
    }

    fn proj(&self, i: usize, j: usize, u: &[f64]) -> f64 {
        self.dir(i, j).iter().zip(u).map(|(a, b)| a * b).sum()
    }

    /// `||E||_{L_2(V, V_hat)}` using the cached weights.
    pub fn hs_norm(&self, e: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += self.weights[i] * e[i * n + j].powi(2);
            }
        }
        s.sqrt()
    }

    /// Entries `g_ij(u)`.
    pub fn g_matrix(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.n];
        self.g_matrix_into(u, &mut out);
        out
    }

    pub fn g_matrix_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                let m = self.mu[i * n + j];
                out[i * n + j] = if m == 0.0 { 0.0 } else { m * self.profile.deriv(0, self.proj(i, j, u)) };
            }
        }
    }

    /// `D G(u)` as the array `E[i][k][l] = d_k g_il(u)`, so that for a tensor
    /// `x` the image `DG(u)x` has components `sum_kl E[i][k][l] x_kl`.
    pub fn dg_tensor_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            for l in 0..n {
                let m = self.mu[i * n + l];
                let d = if m == 0.0 { 0.0 } else { m * self.profile.deriv(1, self.proj(i, l, u)) };
                let h = self.dir(i, l);
                for k in 0..n {
                    out[(i * n + k) * n + l] = d * h[k];
                }
            }
        }
    }

    pub fn dg_tensor(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.n * self.n];
        self.dg_tensor_into(u, &mut out);
        out
    }

    /// `D^m G(u)(d_1, ..., d_m)` as a matrix.
    pub fn deriv_matrix(&self, u: &[f64], dirs: &[&[f64]]) -> Vec<f64> {
        let n = self.n;
        let m = dirs.len();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mu = self.mu[i * n + j];
                if mu == 0.0 {
                    continue;
                }
                let mut projs: Vec<f64> = dirs.iter().map(|d| self.proj(i, j, d)).collect();
                projs.sort_by(|a, b| a.total_cmp(b));
                out[i * n + j] = projs.iter().fold(mu * self.profile.deriv(m, self.proj(i, j, u)), |p, x| p * x);
            }
        }
        out
    }

    /// Order-`m` evaluation with exactly `m` directions, returned as an [`HSMap`].
    pub fn apply(&self, u: &ModeVector, order: usize, directions: &[ModeVector]) -> Result<HSMap> {
        if order > 3 {
            return Err(MildError::Arity { order, got: directions.len() });
        }
        if directions.len() != order {
            return Err(MildError::Arity { order, got: directions.len() });
        }
        if u.dim() != self.n {
            return Err(MildError::Dimension { expected: self.n, got: u.dim() });
        }
        let dirs: Vec<&[f64]> = directions.iter().map(|d| d.coords.as_slice()).collect();
        Ok(HSMap::from_vec(self.n, self.deriv_matrix(&u.coords, &dirs)))
    }
}

/// Outcome of checking the seven inequalities on random samples.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub holds: [bool; 7],
    /// Largest observed `lhs / rhs` per inequality (0 when both sides vanish).
    pub worst_ratio: [f64; 7],
    pub max_lhs: [f64; 7],
}

impl BoundsReport {
    pub fn all_hold(&self) -> bool {
        self.holds.iter().all(|b| *b)
    }
}

fn vnorm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn vsub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn msub(a: &[f64], b: &[f64]) -> Vec<f64> {
    vsub(a, b)
}

/// Evaluates the seven Lipschitz/Taylor inequalities on `samples` random
/// quadruples `(u1, u2, v1, v2)`.
pub fn bounds_check(g: &NonlinearityG, samples: usize, seed: u64) -> BoundsReport {
    let n = g.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 7];
    let mut max_lhs = [0.0f64; 7];
    let mut holds = [true; 7];
    let tol = 1e-12;
    // ||DG(x) - DG(y)|| in L_2(V x V, V_hat): sum over both slots.
    let dg_diff = |x: &[f64], y: &[f64]| -> f64 {
        let a = g.dg_tensor(x);
        let b = g.dg_tensor(y);
        let mut s = 0.0;
        for i in 0..n {
            for kl in 0..n * n {
                s += g.weights[i] * (a[i * n * n + kl] - b[i * n * n + kl]).powi(2);
            }
        }
        s.sqrt()
    };
    let taylor = |x: &[f64], y: &[f64]| -> Vec<f64> {
        let d = vsub(x, y);
        let gx = g.g_matrix(x);
        let gy = g.g_matrix(y);
        let dg = g.deriv_matrix(y, &[&d]);
        (0..n * n).map(|k| gx[k] - gy[k] - dg[k]).collect()
    };
    for _ in 0..samples {
        let scale = 2f64.powf(rng.random_range(-6.0..2.0));
        let mut draw = || -> Vec<f64> { (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect() };
        let (u1, u2, v1, v2) = (draw(), draw(), draw(), draw());
        let d11 = vnorm(&vsub(&u1, &v1));
        let d12 = vnorm(&vsub(&u1, &u2));
        let d22 = vnorm(&vsub(&u2, &v2));
        let dv = vnorm(&vsub(&v1, &v2));
        let cross = vnorm(&vsub(&vsub(&u1, &v1), &vsub(&u2, &v2)));
        let gu1 = g.g_matrix(&u1);
        let gv1 = g.g_matrix(&v1);
        let gu2 = g.g_matrix(&u2);
        let gv2 = g.g_matrix(&v2);
        let lhs = [
            g.hs_norm(&gu1),
            g.hs_norm(&msub(&gu1, &gv1)),
            dg_diff(&u1, &v1),
            g.hs_norm(&taylor(&u1, &u2)),
            g.hs_norm(&msub(&msub(&gu1, &gv1), &msub(&gu2, &gv2))),
            {
                let a = g.dg_tensor(&u1);
                let b = g.dg_tensor(&v1);
                let c = g.dg_tensor(&u2);
                let d = g.dg_tensor(&v2);
                let mut s = 0.0;
                for i in 0..n {
                    for kl in 0..n * n {
                        let k = i * n * n + kl;
                        s += g.weights[i] * (a[k] - b[k] - c[k] + d[k]).powi(2);
                    }
                }
                s.sqrt()
            },
            g.hs_norm(&msub(&taylor(&u1, &u2), &taylor(&v1, &v2))),
        ];
        let rhs = [
            g.c_g + g.c_dg * vnorm(&u1),
            g.c_dg * d11,
            g.c_d2g * d11,
            g.c_d2g * d12 * d12,
            g.c_dg * cross + g.c_d2g * d12 * (d11 + d22),
            g.c_d2g * cross + g.c_d3g * d12 * (d11 + d22),
            g.c_d2g * (d12 + dv) * cross + g.c_d3g * dv * d22 * (d12 + cross),
        ];
        for k in 0..7 {
            max_lhs[k] = max_lhs[k].max(lhs[k]);
            if lhs[k] > rhs[k] * (1.0 + tol) + tol {
                holds[k] = false;
            }
            if rhs[k] > 0.0 {
                worst[k] = worst[k].max(lhs[k] / rhs[k]);
            }
        }
    }
    BoundsReport { holds, worst_ratio: worst, max_lhs }
}
