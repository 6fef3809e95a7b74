//! Finite-mode realization of the state space, the generator `A`, the semigroup
//! `S(t) = exp(tA)` and the fractional powers `(-A)^kappa`.
//!
//! Everything is expressed in the eigenbasis `(e_i)` of `-A`, where
//! `-A e_i = lambda_i e_i`. Coordinates of vectors in `V_kappa` are stored in the
//! `V` basis; the `kappa` weights only enter norms.

use crate::error::{MildError, Result};
use serde::{Deserialize, Serialize};

/// Diagonal generator with sorted positive eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralOperator {
    eigenvalues: Vec<f64>,
    kappa_hat: f64,
    c_v_vhat_sq: f64,
}

/// Coordinates of a vector against `(e_i)`, tagged with the exponent of the
/// space `V_kappa` the vector is regarded in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeVector {
    pub coords: Vec<f64>,
    pub space_tag: f64,
}

/// Element of `V (x) V`, row-major `N x N` coordinates against `e_i (x) e_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTensor {
    pub n: usize,
    pub coords: Vec<f64>,
}

/// Hilbert-Schmidt map `V -> V_hat`; entry `(i, j)` is the `e_i` coefficient of
/// the image of `e_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HSMap {
    pub n: usize,
    pub matrix: Vec<f64>,
}

/// Operand of [`SpectralOperator::semigroup_apply`].
#[derive(Debug, Clone, PartialEq)]
pub enum ModeValue {
    Vector(ModeVector),
    Tensor(ModeTensor),
}

/// How the semigroup acts on a tensor operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Vector,
    TensorLeft,
}

impl ModeVector {
    pub fn new(coords: Vec<f64>) -> Self {
        ModeVector { coords, space_tag: 0.0 }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![0.0; n])
    }

    /// Unit vector `e_k` (zero-based index).
    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = Self::zeros(n);
        v.coords[k] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Euclidean norm, i.e. the `V` norm.
    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &ModeVector) -> f64 {
        self.coords.iter().zip(&other.coords).map(|(a, b)| a * b).sum()
    }

    pub fn sub(&self, other: &ModeVector) -> ModeVector {
        ModeVector::new(self.coords.iter().zip(&other.coords).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &ModeVector) -> ModeVector {
        ModeVector::new(self.coords.iter().zip(&other.coords).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, c: f64) -> ModeVector {
        ModeVector::new(self.coords.iter().map(|a| a * c).collect())
    }

    /// Outer product `self (x) other`.
    pub fn outer(&self, other: &ModeVector) -> ModeTensor {
        let n = self.dim();
        let mut coords = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                coords[i * n + j] = self.coords[i] * other.coords[j];
            }
        }
        ModeTensor { n, coords }
    }
}

impl ModeTensor {
    pub fn zeros(n: usize) -> Self {
        ModeTensor { n, coords: vec![0.0; n * n] }
    }

    pub fn from_vec(n: usize, coords: Vec<f64>) -> Self {
        assert_eq!(coords.len(), n * n);
        ModeTensor { n, coords }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.coords[i * self.n + j]
    }

    /// Frobenius norm, the norm of `V (x) V`.
    pub fn norm(&self) -> f64 {
        frobenius(&self.coords)
    }

    pub fn sub(&self, other: &ModeTensor) -> ModeTensor {
        ModeTensor { n: self.n, coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a - b).collect() }
    }

    pub fn add(&self, other: &ModeTensor) -> ModeTensor {
        ModeTensor { n: self.n, coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a + b).collect() }
    }

    pub fn scale(&self, c: f64) -> ModeTensor {
        ModeTensor { n: self.n, coords: self.coords.iter().map(|a| a * c).collect() }
    }
}

impl HSMap {
    pub fn zeros(n: usize) -> Self {
        HSMap { n, matrix: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.matrix[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(n: usize, matrix: Vec<f64>) -> Self {
        assert_eq!(matrix.len(), n * n);
        HSMap { n, matrix }
    }

    /// The map sending `e_j` to `e_i` and every other basis vector to zero.
    pub fn basis(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n);
        m.matrix[i * n + j] = 1.0;
        m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.n + j]
    }

    pub fn apply(&self, x: &ModeVector) -> ModeVector {
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            out[i] = (0..n).map(|j| self.matrix[i * n + j] * x.coords[j]).sum();
        }
        ModeVector::new(out)
    }

    pub fn frobenius(&self) -> f64 {
        frobenius(&self.matrix)
    }

    pub fn sub(&self, other: &HSMap) -> HSMap {
        HSMap { n: self.n, matrix: self.matrix.iter().zip(&other.matrix).map(|(a, b)| a - b).collect() }
    }

    pub fn add(&self, other: &HSMap) -> HSMap {
        HSMap { n: self.n, matrix: self.matrix.iter().zip(&other.matrix).map(|(a, b)| a + b).collect() }
    }

    pub fn scale(&self, c: f64) -> HSMap {
        HSMap { n: self.n, matrix: self.matrix.iter().map(|a| a * c).collect() }
    }
}

pub(crate) fn frobenius(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl SpectralOperator {
    /// Builds the operator and caches `c_{V,V_hat}^2 = sum_i lambda_i^{-2 kappa}`.
    pub fn new(eigenvalues: Vec<f64>, kappa_hat: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(MildError::InvalidSpectrum("empty spectrum".into()));
        }
        if let Some(bad) = eigenvalues.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(MildError::InvalidSpectrum(format!("eigenvalue {bad} is not strictly positive")));
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(MildError::InvalidSpectrum("eigenvalues are not sorted nondecreasingly".into()));
        }
        if !kappa_hat.is_finite() || kappa_hat < 0.0 {
            return Err(MildError::InvalidSpectrum(format!("kappa_hat = {kappa_hat} must be finite and >= 0")));
        }
        let c: f64 = eigenvalues.iter().map(|l| l.powf(-2.0 * kappa_hat)).sum();
        if !c.is_finite() {
            return Err(MildError::InvalidSpectrum("sum of lambda_i^(-2 kappa) overflows".into()));
        }
        Ok(SpectralOperator { eigenvalues, kappa_hat, c_v_vhat_sq: c })
    }

    /// `lambda_i = i^2`, the Dirichlet-Laplacian-like default.
    pub fn squares(n: usize, kappa_hat: f64) -> Result<Self> {
        Self::new((1..=n).map(|i| (i * i) as f64).collect(), kappa_hat)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.eigenvalues[i]
    }

    pub fn kappa_hat(&self) -> f64 {
        self.kappa_hat
    }

    /// `c_{V,V_hat}^2`, the squared Hilbert-Schmidt norm of the embedding `V_hat -> V`.
    pub fn c_v_vhat_sq(&self) -> f64 {
        self.c_v_vhat_sq
    }

    fn check_time(t: f64) -> Result<()> {
        if t < 0.0 || !t.is_finite() {
            return Err(MildError::Domain(format!("semigroup time t = {t} must be >= 0")));
        }
        Ok(())
    }

    /// `S(t)` on a vector, or `S(t) (x) id` on a tensor.
    pub fn semigroup_apply(&self, t: f64, x: &ModeValue, side: Side) -> Result<ModeValue> {
        Self::check_time(t)?;
        match (x, side) {
            (ModeValue::Vector(v), Side::Vector) => Ok(ModeValue::Vector(self.semigroup_vec(t, v)?)),
            (ModeValue::Tensor(m), Side::TensorLeft) => Ok(ModeValue::Tensor(self.semigroup_tensor_left(t, m)?)),
            _ => Err(MildError::Domain("operand kind does not match the requested side".into())),
        }
    }

    pub fn semigroup_vec(&self, t: f64, x: &ModeVector) -> Result<ModeVector> {
        Self::check_time(t)?;
        self.check_dim(x.dim())?;
        let coords = x.coords.iter().zip(&self.eigenvalues).map(|(xi, l)| (-l * t).exp() * xi).collect();
        Ok(ModeVector { coords, space_tag: x.space_tag })
    }

    pub fn semigroup_tensor_left(&self, t: f64, x: &ModeTensor) -> Result<ModeTensor> {
        Self::check_time(t)?;
        self.check_dim(x.n)?;
        let n = x.n;
        let mut coords = x.coords.clone();
        for i in 0..n {
            let f = (-self.eigenvalues[i] * t).exp();
            for j in 0..n {
                coords[i * n + j] *= f;
            }
        }
        Ok(ModeTensor { n, coords })
    }

    /// `(-A)^kappa x`; `kappa` may be negative.
    pub fn frac_power_apply(&self, kappa: f64, x: &ModeVector) -> Result<ModeVector> {
        self.check_dim(x.dim())?;
        let coords = x.coords.iter().zip(&self.eigenvalues).map(|(xi, l)| l.powf(kappa) * xi).collect();
        Ok(ModeVector { coords, space_tag: x.space_tag })
    }

    /// `|x|_{V_kappa} = (sum_i lambda_i^{2 kappa} x_i^2)^{1/2}`.
    pub fn norm_kappa(&self, x: &ModeVector, kappa: f64) -> f64 {
        x.coords.iter().zip(&self.eigenvalues).map(|(xi, l)| l.powf(2.0 * kappa) * xi * xi).sum::<f64>().sqrt()
    }

    /// `|x|_{V_hat}`.
    pub fn norm_hat(&self, x: &ModeVector) -> f64 {
        self.norm_kappa(x, self.kappa_hat)
    }

    /// `||E||_{L_2(V, V_hat)}`.
    pub fn hs_norm(&self, e: &HSMap) -> Result<f64> {
        self.check_dim(e.n)?;
        let n = e.n;
        let mut s = 0.0;
        for i in 0..n {
            let w = self.eigenvalues[i].powf(2.0 * self.kappa_hat);
            for j in 0..n {
                s += w * e.matrix[i * n + j].powi(2);
            }
        }
        Ok(s.sqrt())
    }

    /// Operator norm of the diagonal map `diag(d_i)` from `V_kappa` to `V_gamma`.
    pub fn diag_op_norm(&self, d: &[f64], kappa: f64, gamma: f64) -> f64 {
        d.iter().zip(&self.eigenvalues).map(|(di, l)| (di * l.powf(gamma - kappa)).abs()).fold(0.0, f64::max)
    }

    pub(crate) fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(MildError::Dimension { expected: self.dim(), got });
        }
        Ok(())
    }
}
