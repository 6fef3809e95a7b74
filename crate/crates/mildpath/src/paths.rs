//! Uniform time grids, grid paths with values in the mode space, Hölder
//! exponent bookkeeping, fractional Brownian drivers and dyadic refinement.

use crate::error::{MildError, Result};
use crate::spectral::{ModeVector, SpectralOperator};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// `M + 1` equally spaced points `t_k = k T / M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub cells: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, cells: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(MildError::Grid(format!("horizon {horizon} must be positive")));
        }
        if cells < 2 {
            return Err(MildError::Grid(format!("need at least 2 cells, got {cells}")));
        }
        Ok(TimeGrid { horizon, cells })
    }

    pub fn h(&self) -> f64 {
        self.horizon / self.cells as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.cells {
            self.horizon
        } else {
            k as f64 * self.h()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.cells).map(|k| self.t(k)).collect()
    }

    /// Cell index containing `t`, clamped to `[0, M-1]`.
    pub fn cell_of(&self, t: f64) -> usize {
        let c = (t / self.h()).floor();
        if c < 0.0 {
            0
        } else {
            (c as usize).min(self.cells - 1)
        }
    }
}

/// How values between grid points are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpolation {
    PiecewiseLinear,
    SampleOnly,
}

/// Values of a mode-space valued path on a uniform grid, stored row-major
/// as `(M + 1) x N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPath {
    pub grid: TimeGrid,
    pub dim: usize,
    pub values: Vec<f64>,
    pub interpolation: Interpolation,
}

/// Anything that can be evaluated as a `dim`-valued function of time.
pub trait PathFn: Sync {
    fn dim(&self) -> usize;
    fn eval_into(&self, t: f64, out: &mut [f64]);
    /// Points where the path may fail to be smooth, used to align quadrature meshes.
    fn breakpoints(&self, _a: f64, _b: f64) -> Vec<f64> {
        Vec::new()
    }
    fn eval(&self, t: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.eval_into(t, &mut v);
        v
    }
}

/// Closure-backed path.
pub struct FnPath<F: Fn(f64, &mut [f64]) + Sync> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(f64, &mut [f64]) + Sync> PathFn for FnPath<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval_into(&self, t: f64, out: &mut [f64]) {
        (self.f)(t, out)
    }
}

/// A path whose kinks are known: quadrature meshes are cut at `breaks`.
pub struct WithBreaks<P: PathFn> {
    pub path: P,
    pub breaks: Vec<f64>,
}

impl<P: PathFn> PathFn for WithBreaks<P> {
    fn dim(&self) -> usize {
        self.path.dim()
    }
    fn eval_into(&self, t: f64, out: &mut [f64]) {
        self.path.eval_into(t, out)
    }
    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        self.breaks.iter().copied().filter(|x| *x > a && *x < b).collect()
    }
}

/// Scalar closure viewed as a one-mode path.
pub fn scalar_path<F: Fn(f64) -> f64 + Sync>(f: F) -> FnPath<impl Fn(f64, &mut [f64]) + Sync> {
    FnPath { dim: 1, f: move |t: f64, out: &mut [f64]| out[0] = f(t) }
}

impl GridPath {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != (grid.cells + 1) * dim {
            return Err(MildError::Dimension { expected: (grid.cells + 1) * dim, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MildError::Domain("path values must be finite".into()));
        }
        Ok(GridPath { grid, dim, values, interpolation: Interpolation::PiecewiseLinear })
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        GridPath { grid, dim, values: vec![0.0; (grid.cells + 1) * dim], interpolation: Interpolation::PiecewiseLinear }
    }

    /// Samples `f` at the grid points.
    pub fn from_fn(grid: TimeGrid, dim: usize, f: impl Fn(f64, &mut [f64])) -> Self {
        let mut p = Self::zeros(grid, dim);
        for k in 0..=grid.cells {
            let t = grid.t(k);
            f(t, &mut p.values[k * dim..(k + 1) * dim]);
        }
        p
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    pub fn require_linear(&self) -> Result<()> {
        if self.interpolation != Interpolation::PiecewiseLinear {
            return Err(MildError::NeedsInterpolation);
        }
        Ok(())
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn at_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn vector_at(&self, k: usize) -> ModeVector {
        ModeVector::new(self.at(k).to_vec())
    }

    /// Constant slope of the path on cell `c`.
    pub fn slope(&self, c: usize) -> Vec<f64> {
        let h = self.grid.h();
        self.at(c + 1).iter().zip(self.at(c)).map(|(b, a)| (b - a) / h).collect()
    }

    /// All cell slopes, row-major `M x N`.
    pub fn slopes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.cells * self.dim);
        for c in 0..self.grid.cells {
            out.extend(self.slope(c));
        }
        out
    }

    pub fn sub(&self, other: &GridPath) -> GridPath {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        GridPath { grid: self.grid, dim: self.dim, values, interpolation: self.interpolation }
    }

    /// Writes the CSV export with columns `t, mode_1, ..., mode_N`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|i| format!("mode_{i}")));
        wr.write_record(&header)?;
        for k in 0..=self.grid.cells {
            let mut row = vec![format!("{}", self.grid.t(k))];
            row.extend(self.at(k).iter().map(|v| format!("{v}")));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

impl PathFn for GridPath {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        let g = self.grid;
        let c = g.cell_of(t);
        let th = ((t - g.t(c)) / g.h()).clamp(0.0, 1.0);
        let (a, b) = (self.at(c), self.at(c + 1));
        match self.interpolation {
            Interpolation::PiecewiseLinear => {
                for i in 0..self.dim {
                    out[i] = a[i] + th * (b[i] - a[i]);
                }
            }
            Interpolation::SampleOnly => {
                let src = if th < 0.5 { a } else { b };
                out.copy_from_slice(src);
            }
        }
    }

    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let g = self.grid;
        (0..=g.cells).map(|k| g.t(k)).filter(|t| *t > a && *t < b).collect()
    }
}

/// The exponent tuple `(H, beta, beta', beta'', alpha, gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HolderParams {
    pub hurst: f64,
    pub beta: f64,
    pub beta_p: f64,
    pub beta_pp: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for HolderParams {
    fn default() -> Self {
        HolderParams { hurst: 0.45, beta: 0.36, beta_p: 0.40, beta_pp: 0.425, alpha: 0.66, gamma: 0.8 }
    }
}

impl HolderParams {
    /// Checks every admissibility inequality and names the first violated one.
    pub fn validate(&self) -> Result<()> {
        let HolderParams { hurst: h, beta: b, beta_p: bp, beta_pp: bpp, alpha: a, gamma: g } = *self;
        let checks: [(bool, &str); 10] = [
            (1.0 / 3.0 < b, "1/3 < beta"),
            (b <= bp, "beta <= beta'"),
            (bp < h, "beta' < H"),
            (h <= 0.5, "H <= 1/2"),
            (1.0 - b < a, "1 - beta < alpha"),
            (a < 2.0 * b, "alpha < 2 beta"),
            (a < (b + 1.0) / 2.0, "alpha < (beta + 1)/2"),
            (b < a, "beta < alpha"),
            (bp < bpp && bpp < h, "beta' < beta'' < H"),
            (a < g && g < 1.0, "alpha < gamma < 1"),
        ];
        for (ok, name) in checks {
            if !ok {
                return Err(MildError::Config(format!("exponent inequality violated: {name}")));
            }
        }
        if a + bp <= 1.0 {
            return Err(MildError::Config("exponent inequality violated: alpha + beta' > 1".into()));
        }
        Ok(())
    }
}

/// Exact fractional Brownian motion by Cholesky factorization of the grid
/// covariance. Mode `i` is an independent scalar fBm scaled by `q_i`.
pub fn generate_fbm(hurst: f64, op: &SpectralOperator, grid: TimeGrid, mode_weights: &[f64], seed: u64) -> Result<GridPath> {
    FbmSampler::new(hurst, grid)?.sample(op, mode_weights, seed)
}

/// Reusable Cholesky factor for repeated fBm sampling on one grid.
#[derive(Debug, Clone)]
pub struct FbmSampler {
    grid: TimeGrid,
    factor: DMatrix<f64>,
}

impl FbmSampler {
    pub fn new(hurst: f64, grid: TimeGrid) -> Result<Self> {
        if !(hurst > 0.0 && hurst <= 0.5) {
            return Err(MildError::Config(format!("Hurst parameter {hurst} must lie in (0, 1/2]")));
        }
        Ok(FbmSampler { grid, factor: fbm_cholesky(hurst, grid)? })
    }

    pub fn sample(&self, op: &SpectralOperator, mode_weights: &[f64], seed: u64) -> Result<GridPath> {
        let n = op.dim();
        if mode_weights.len() != n {
            return Err(MildError::Dimension { expected: n, got: mode_weights.len() });
        }
        if mode_weights.iter().any(|q| !q.is_finite()) {
            return Err(MildError::Config("mode weights must be finite".into()));
        }
        let m = self.grid.cells;
        let l = &self.factor;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut path = GridPath::zeros(self.grid, n);
        let mut z = vec![0.0; m];
        for i in 0..n {
            for zk in z.iter_mut() {
                *zk = StandardNormal.sample(&mut rng);
            }
            if mode_weights[i] == 0.0 {
                continue;
            }
            for k in 0..m {
                let mut s = 0.0;
                for j in 0..=k {
                    s += l[(k, j)] * z[j];
                }
                path.values[(k + 1) * n + i] = mode_weights[i] * s;
            }
        }
        Ok(path)
    }
}

/// Lower Cholesky factor of `R(t_j, t_k)`, `j, k = 1..M`.
pub fn fbm_cholesky(hurst: f64, grid: TimeGrid) -> Result<DMatrix<f64>> {
    let m = grid.cells;
    let h2 = 2.0 * hurst;
    let cov = DMatrix::from_fn(m, m, |j, k| {
        let (s, t) = (grid.t(j + 1), grid.t(k + 1));
        0.5 * (s.powf(h2) + t.powf(h2) - (t - s).abs().powf(h2))
    });
    if let Some(c) = cov.clone().cholesky() {
        return Ok(c.l());
    }
    let jitter = 1e-12 * cov.trace() / m as f64;
    let reg = cov + DMatrix::identity(m, m) * jitter;
    reg.cholesky().map(|c| c.l()).ok_or_else(|| MildError::Regularization(format!("covariance with M = {m} is not positive definite")))
}

/// Piecewise-linear interpolation `omega^n` through the `2^level_to + 1`
/// subsampled points of a path given on `2^level_from` cells.
pub fn refine_dyadic(path: &GridPath, level_from: u32, level_to: u32) -> Result<GridPath> {
    let m = path.grid.cells;
    if level_to > level_from || (1usize << level_from) != m {
        return Err(MildError::Grid(format!("levels {level_from} -> {level_to} incompatible with {m} cells")));
    }
    refine_to_cells(path, 1usize << level_to)
}

/// Same as [`refine_dyadic`] with the coarse cell count given directly.
pub fn refine_to_cells(path: &GridPath, coarse: usize) -> Result<GridPath> {
    let m = path.grid.cells;
    if coarse == 0 || !m.is_multiple_of(coarse) {
        return Err(MildError::Grid(format!("{coarse} coarse cells do not divide {m}")));
    }
    let stride = m / coarse;
    let n = path.dim;
    let mut out = GridPath::zeros(path.grid, n);
    out.interpolation = Interpolation::PiecewiseLinear;
    for c in 0..coarse {
        let (a, b) = (path.at(c * stride).to_vec(), path.at((c + 1) * stride).to_vec());
        for j in 0..=stride {
            let th = j as f64 / stride as f64;
            let dst = out.at_mut(c * stride + j);
            for i in 0..n {
                dst[i] = if j == stride { b[i] } else { a[i] + th * (b[i] - a[i]) };
            }
        }
    }
    Ok(out)
}

/// Subsamples a path onto a coarser grid (every `m/coarse`-th point).
pub fn subsample(path: &GridPath, coarse: usize) -> Result<GridPath> {
    let m = path.grid.cells;
    if coarse == 0 || !m.is_multiple_of(coarse) {
        return Err(MildError::Grid(format!("{coarse} coarse cells do not divide {m}")));
    }
    let stride = m / coarse;
    let grid = TimeGrid::new(path.grid.horizon, coarse)?;
    let mut values = Vec::with_capacity((coarse + 1) * path.dim);
    for k in 0..=coarse {
        values.extend_from_slice(path.at(k * stride));
    }
    Ok(GridPath { grid, dim: path.dim, values, interpolation: path.interpolation })
}

/// Sup-norm, Hölder seminorm and their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathNorms {
    pub sup: f64,
    pub seminorm: f64,
    pub full: f64,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Discrete Hölder norms over all grid pairs `s < t`. In the weighted variant
/// only pairs with `s > 0` enter, with weight `s^beta`.
pub fn path_norm(path: &GridPath, beta: f64, weighted: bool) -> PathNorms {
    let g = path.grid;
    let m = g.cells;
    let zero = vec![0.0; path.dim];
    let sup = (0..=m).map(|k| dist(path.at(k), &zero)).fold(0.0, f64::max);
    let mut semi: f64 = 0.0;
    let start = if weighted { 1 } else { 0 };
    for a in start..m {
        let s = g.t(a);
        let w = if weighted { s.powf(beta) } else { 1.0 };
        for b in a + 1..=m {
            let d = dist(path.at(b), path.at(a));
            let v = w * d / (g.t(b) - s).powf(beta);
            semi = semi.max(v);
        }
    }
    PathNorms { sup, seminorm: semi, full: sup + semi }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op8() -> SpectralOperator {
        SpectralOperator::squares(8, 0.75).unwrap()
    }

    fn weights(op: &SpectralOperator) -> Vec<f64> {
        op.eigenvalues().iter().map(|l| l.powf(-0.75)).collect()
    }

    #[test]
    fn default_params_admissible_and_violations_named() {
        HolderParams::default().validate().unwrap();
        let mut p = HolderParams::default();
        p.alpha = 0.6;
        let e = p.validate().unwrap_err().to_string();
        assert!(e.contains("1 - beta < alpha"), "{e}");
        let mut p = HolderParams::default();
        p.beta = 0.3;
        assert!(p.validate().unwrap_err().to_string().contains("1/3 < beta"));
    }

    #[test]
    fn zero_weights_zero_path() {
        let op = op8();
        let g = TimeGrid::new(1.0, 32).unwrap();
        let p = generate_fbm(0.45, &op, g, &[0.0; 8], 5).unwrap();
        assert!(p.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fbm_deterministic_per_seed() {
        let op = op8();
        let g = TimeGrid::new(1.0, 64).unwrap();
        let a = generate_fbm(0.45, &op, g, &weights(&op), 9).unwrap();
        let b = generate_fbm(0.45, &op, g, &weights(&op), 9).unwrap();
        let c = generate_fbm(0.45, &op, g, &weights(&op), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.at(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn brownian_increments_uncorrelated() {
        let op = SpectralOperator::new(vec![1.0], 0.0).unwrap();
        let g = TimeGrid::new(1.0, 8).unwrap();
        let samples = 4000;
        let mut c01 = 0.0;
        let mut v0 = 0.0;
        for s in 0..samples {
            let p = generate_fbm(0.5, &op, g, &[1.0], s as u64).unwrap();
            let d0 = p.at(1)[0] - p.at(0)[0];
            let d1 = p.at(2)[0] - p.at(1)[0];
            c01 += d0 * d1;
            v0 += d0 * d0;
        }
        let corr = c01 / v0;
        assert!(corr.abs() < 3.0 / (samples as f64).sqrt(), "corr {corr}");
    }

    #[test]
    fn fbm_variance_matches_covariance() {
        let op = SpectralOperator::new(vec![1.0, 4.0], 0.0).unwrap();
        let g = TimeGrid::new(1.0, 512).unwrap();
        let q = [1.0, 0.5];
        let samples = 1000;
        let sampler = FbmSampler::new(0.4, g).unwrap();
        let lags = [1usize, 8, 64, 256];
        let mut acc = vec![[0.0f64; 2]; lags.len()];
        let mut counts = vec![0usize; lags.len()];
        for s in 0..samples {
            let p = sampler.sample(&op, &q, 1000 + s as u64).unwrap();
            for (li, &d) in lags.iter().enumerate() {
                for k in (0..=512 - d).step_by(d) {
                    for mode in 0..2 {
                        acc[li][mode] += (p.at(k + d)[mode] - p.at(k)[mode]).powi(2);
                    }
                    counts[li] += 1;
                }
            }
        }
        for (li, &d) in lags.iter().enumerate() {
            let dt = g.t(d);
            for (mode, qi) in q.iter().enumerate() {
                let emp = acc[li][mode] / counts[li] as f64;
                let exact = qi * qi * dt.powf(0.8);
                assert!((emp / exact - 1.0).abs() < 0.1, "lag {d} mode {mode}: {emp} vs {exact}");
            }
        }
    }

    #[test]
    fn refine_identity_and_linear_invariance() {
        let op = op8();
        let g = TimeGrid::new(1.0, 64).unwrap();
        let p = generate_fbm(0.45, &op, g, &weights(&op), 1).unwrap();
        assert_eq!(refine_dyadic(&p, 6, 6).unwrap(), p);
        let lin = GridPath::from_fn(g, 2, |t, o| {
            o[0] = 2.0 * t;
            o[1] = 1.0 - t;
        });
        let r = refine_dyadic(&lin, 6, 2).unwrap();
        for (a, b) in r.values.iter().zip(&lin.values) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(refine_dyadic(&p, 5, 3).is_err());
    }

    #[test]
    fn refine_is_piecewise_linear_and_interpolates() {
        let op = op8();
        let g = TimeGrid::new(1.0, 64).unwrap();
        let p = generate_fbm(0.45, &op, g, &weights(&op), 2).unwrap();
        let r = refine_dyadic(&p, 6, 3).unwrap();
        for k in (0..=64).step_by(8) {
            assert_eq!(r.at(k), p.at(k));
        }
        for c in 0..8 {
            for j in 1..8 {
                let k = c * 8 + j;
                for i in 0..8 {
                    let d2 = r.at(k + 1)[i] - 2.0 * r.at(k)[i] + r.at(k - 1)[i];
                    assert!(d2.abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn refinement_error_decreases() {
        let op = op8();
        let g = TimeGrid::new(1.0, 1024).unwrap();
        let p = generate_fbm(0.45, &op, g, &weights(&op), 4).unwrap();
        let mut last = f64::INFINITY;
        for lvl in [2u32, 3, 4, 5, 6, 7] {
            let r = refine_dyadic(&p, 10, lvl).unwrap();
            let e = path_norm(&p.sub(&r), 0.40, false).full;
            assert!(e <= 1.1 * last, "level {lvl}: {e} vs {last}");
            last = e;
        }
    }

    #[test]
    fn norm_examples() {
        let g = TimeGrid::new(1.0, 16).unwrap();
        let c = GridPath::from_fn(g, 2, |_, o| {
            o[0] = 3.0;
            o[1] = 4.0;
        });
        let n = path_norm(&c, 0.5, false);
        assert_eq!(n.seminorm, 0.0);
        assert!((n.full - 5.0).abs() < 1e-15);
        let lin = GridPath::from_fn(g, 1, |t, o| o[0] = t);
        assert!((path_norm(&lin, 0.5, false).seminorm - 1.0).abs() < 1e-14);
    }

    #[test]
    fn weighted_norm_handles_semigroup_orbit() {
        // The stiffest mode of a truncation that resolves the grid has lambda ~ M; its orbit
        // S(.)e_N keeps a bounded weighted norm while the unweighted seminorm grows like M^beta.
        let beta = 0.36;
        let levels = [4u32, 6, 8, 10];
        let mut unweighted = Vec::new();
        let mut weighted = Vec::new();
        for &lvl in &levels {
            let m = 1usize << lvl;
            let lam = m as f64;
            let g = TimeGrid::new(1.0, m).unwrap();
            let p = GridPath::from_fn(g, 1, |t, o| o[0] = (-lam * t).exp());
            unweighted.push(path_norm(&p, beta, false).seminorm);
            weighted.push(path_norm(&p, beta, true).full);
        }
        for w in weighted.windows(2) {
            assert!(w[1] / w[0] < 1.2, "{weighted:?}");
        }
        let span = (levels[3] - levels[0]) as f64;
        let ratio = unweighted[3] / unweighted[0];
        assert!(ratio >= 2f64.powf(beta * span - 1.0), "ratio {ratio}");
    }

    #[test]
    fn coarsening_lowers_norm_and_increments_add() {
        let op = op8();
        let g = TimeGrid::new(1.0, 128).unwrap();
        let p = generate_fbm(0.45, &op, g, &weights(&op), 8).unwrap();
        let fine = path_norm(&p, 0.4, true).full;
        let coarse = path_norm(&subsample(&p, 32).unwrap(), 0.4, true).full;
        assert!(coarse <= fine);
        let (s, r, t) = (3, 50, 111);
        for i in 0..8 {
            let lhs = p.at(t)[i] - p.at(s)[i];
            let rhs = (p.at(t)[i] - p.at(r)[i]) + (p.at(r)[i] - p.at(s)[i]);
            assert!((lhs - rhs).abs() < 1e-15);
        }
    }

    #[test]
    fn csv_export_has_mode_columns() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let p = GridPath::from_fn(g, 2, |t, o| {
            o[0] = t;
            o[1] = 2.0 * t;
        });
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().next().unwrap(), "t,mode_1,mode_2");
        assert_eq!(s.lines().count(), 4);
    }
}
