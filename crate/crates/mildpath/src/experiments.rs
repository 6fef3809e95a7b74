//! Experiment configuration, the four experiment kinds and their reports.
//!
//! Every run produces a list of criteria `(name, value, threshold, pass)`,
//! named detail CSV files and a manifest echoing the effective config.

use crate::error::{MildError, Result};
use crate::frac_calc::{frac_deriv_right, left_deriv};
use crate::mild_solver::{
    apply_t, fractional_convolution, initial_pair, reference_mild_smooth, restrict_pair, solve_fixed_point, solve_from, write_history_csv, Evaluation,
    FixedPoint, SolutionPair, SolverConfig,
};
use crate::nonlinearity::{bounds_check, NonlinearityG, Profile};
use crate::paths::{generate_fbm, path_norm, refine_to_cells, subsample, FnPath, GridPath, HolderParams, TimeGrid};
use crate::quadrature::{jacobi_rule, QuadratureSpec};
use crate::spectral::{HSMap, ModeVector, SpectralOperator};
use crate::tensor_area::{area_u_omega, chen_residual, AreaOperator, ChenKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Solve,
    ValidateSmooth,
    ConvergenceH3,
    Invariants,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Solve => "solve",
            ExperimentKind::ValidateSmooth => "validate-smooth",
            ExperimentKind::ConvergenceH3 => "convergence-h3",
            ExperimentKind::Invariants => "invariants",
        }
    }

    /// Grid level used when the config leaves `path.level` unset.
    pub fn default_level(self) -> u32 {
        match self {
            ExperimentKind::Solve => 6,
            ExperimentKind::ValidateSmooth => 9,
            ExperimentKind::ConvergenceH3 => 7,
            ExperimentKind::Invariants => 5,
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Eigenvalue sequence of `-A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaRule {
    /// `lambda_i = i^2`.
    Squares,
    /// `lambda_i = i`.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    pub n: usize,
    pub lambda_rule: LambdaRule,
    pub kappa_hat: f64,
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection { n: 8, lambda_rule: LambdaRule::Squares, kappa_hat: 0.25 }
    }
}

/// Driver sample: fBm of index `hurst` on `[0, horizon]` with `2^level`
/// cells, mode `i` scaled by `lambda_i^{-q_exponent}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSection {
    pub hurst: f64,
    pub horizon: f64,
    pub level: Option<u32>,
    pub seed: u64,
    pub q_exponent: f64,
}

impl Default for PathSection {
    fn default() -> Self {
        PathSection { hurst: 0.45, horizon: 1.0, level: None, seed: 1, q_exponent: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GSection {
    pub decay: f64,
    pub profile: Profile,
    pub amplitude: f64,
    pub seed: u64,
    /// Replace `G` by the zero map.
    pub zero: bool,
}

impl Default for GSection {
    fn default() -> Self {
        GSection { decay: 1.5, profile: Profile::Tanh, amplitude: 1.0, seed: 7, zero: false }
    }
}

/// Initial value `u0_i = scale (i + 1)^{-decay}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub scale: f64,
    pub decay: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection { scale: 1.0, decay: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvariantSection {
    /// Random samples for the inequality and by-parts suites.
    pub samples: usize,
    pub seed: u64,
    /// Relative perturbation of `u0` in the Lipschitz check.
    pub delta: f64,
}

impl Default for InvariantSection {
    fn default() -> Self {
        InvariantSection { samples: 500, seed: 11, delta: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct ExperimentConfig {
    pub kind: Option<ExperimentKind>,
    pub spectral: SpectralSection,
    pub path: PathSection,
    /// `hurst` is taken from the `path` section.
    pub exponents: HolderParams,
    pub g: GSection,
    pub initial: InitialSection,
    /// Used for every fractional integral, including inside the solver.
    pub quadrature: QuadratureSpec,
    pub solver: SolverConfig,
    pub invariants: InvariantSection,
    pub out_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| MildError::Config(format!("invalid config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn kind(&self) -> Result<ExperimentKind> {
        self.kind.ok_or_else(|| MildError::Config("no experiment kind given".into()))
    }

    pub fn params(&self) -> HolderParams {
        HolderParams { hurst: self.path.hurst, ..self.exponents }
    }

    pub fn level(&self) -> Result<u32> {
        Ok(self.path.level.unwrap_or(self.kind()?.default_level()))
    }

    pub fn cells(&self) -> Result<usize> {
        Ok(1usize << self.level()?)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig { quadrature: self.quadrature, ..self.solver }
    }

    /// Rejects every inconsistent setting before any computation.
    pub fn validate(&self) -> Result<()> {
        let kind = self.kind()?;
        self.params().validate()?;
        self.quadrature.validate()?;
        self.solver_config().validate()?;
        let s = &self.spectral;
        if s.n == 0 || s.n > 64 {
            return Err(MildError::Config(format!("spectral.n = {} must lie in 1..=64", s.n)));
        }
        if !(s.kappa_hat >= 0.0 && s.kappa_hat.is_finite()) {
            return Err(MildError::Config("spectral.kappa_hat must be non-negative".into()));
        }
        let p = &self.path;
        if !(p.horizon > 0.0 && p.horizon.is_finite()) {
            return Err(MildError::Config("path.horizon must be positive".into()));
        }
        if self.solver.horizon > p.horizon {
            return Err(MildError::Config(format!("solver.horizon {} exceeds path.horizon {}", self.solver.horizon, p.horizon)));
        }
        let level = self.level()?;
        let min_level = if matches!(kind, ExperimentKind::ConvergenceH3 | ExperimentKind::Invariants) { 4 } else { 2 };
        if !(min_level..=11).contains(&level) {
            return Err(MildError::Config(format!("level {level} must lie in {min_level}..=11 for {kind}")));
        }
        if !(self.g.amplitude.is_finite() && self.g.decay.is_finite()) {
            return Err(MildError::Config("g.amplitude and g.decay must be finite".into()));
        }
        if !(self.initial.scale.is_finite() && self.initial.decay.is_finite()) {
            return Err(MildError::Config("initial.scale and initial.decay must be finite".into()));
        }
        let inv = &self.invariants;
        if inv.samples == 0 || !(inv.delta > 0.0 && inv.delta < 1.0) {
            return Err(MildError::Config("invariants need samples >= 1 and 0 < delta < 1".into()));
        }
        Ok(())
    }

    pub fn operator(&self) -> Result<SpectralOperator> {
        let s = &self.spectral;
        match s.lambda_rule {
            LambdaRule::Squares => SpectralOperator::squares(s.n, s.kappa_hat),
            LambdaRule::Linear => SpectralOperator::new((1..=s.n).map(|i| i as f64).collect(), s.kappa_hat),
        }
    }

    pub fn mode_weights(&self, op: &SpectralOperator) -> Vec<f64> {
        op.eigenvalues().iter().map(|l| l.powf(-self.path.q_exponent)).collect()
    }

    pub fn nonlinearity(&self, op: &SpectralOperator) -> Result<NonlinearityG> {
        if self.g.zero {
            Ok(NonlinearityG::zero(op))
        } else {
            NonlinearityG::example(op, self.g.decay, self.g.profile, self.g.amplitude, self.g.seed)
        }
    }

    pub fn initial_value(&self) -> ModeVector {
        let i = &self.initial;
        ModeVector::new((0..self.spectral.n).map(|k| i.scale * ((k + 1) as f64).powf(-i.decay)).collect())
    }

    pub fn fbm_driver(&self, op: &SpectralOperator, cells: usize) -> Result<GridPath> {
        let grid = TimeGrid::new(self.path.horizon, cells)?;
        generate_fbm(self.path.hurst, op, grid, &self.mode_weights(op), self.path.seed)
    }

    /// Smooth deterministic driver `q_l (sin(2t + l) - sin l + t^2/2)`.
    pub fn smooth_driver(&self, op: &SpectralOperator, cells: usize) -> Result<GridPath> {
        let q = self.mode_weights(op);
        let grid = TimeGrid::new(self.path.horizon, cells)?;
        Ok(GridPath::from_fn(grid, op.dim(), |t, o| {
            for (l, x) in o.iter_mut().enumerate() {
                let lf = l as f64;
                *x = q[l] * ((2.0 * t + lf).sin() - lf.sin() + 0.5 * t * t);
            }
        }))
    }
}

/// One acceptance line of a report.
#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Criterion {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Criterion { name: name.into(), value, threshold, pass: value <= threshold }
    }

    /// Passes when `value < threshold`.
    pub fn below(name: &str, value: f64, threshold: f64) -> Self {
        Criterion { name: name.into(), value, threshold, pass: value < threshold }
    }
}

/// Outcome of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub kind: ExperimentKind,
    pub criteria: Vec<Criterion>,
    /// `(file name, contents)` of the detail CSVs.
    pub details: Vec<(String, Vec<u8>)>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x}")
}

/// Writes the criteria as CSV with columns `criterion, value, threshold, pass`.
pub fn write_summary_csv<W: std::io::Write>(criteria: &[Criterion], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["criterion", "value", "threshold", "pass"])?;
    for c in criteria {
        wr.write_record(&[c.name.clone(), fmt_f(c.value), fmt_f(c.threshold), c.pass.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    kind: &'a str,
    seed: u64,
    level: u32,
    version: &'a str,
    passed: bool,
    config: &'a ExperimentConfig,
}

/// Writes `summary.csv`, the detail CSVs and `manifest.json` into `dir`.
pub fn emit_report(report: &Report, config: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut summary = Vec::new();
    write_summary_csv(&report.criteria, &mut summary)?;
    std::fs::write(dir.join("summary.csv"), summary)?;
    for (name, bytes) in &report.details {
        std::fs::write(dir.join(name), bytes)?;
    }
    let manifest = Manifest {
        kind: report.kind.name(),
        seed: config.path.seed,
        level: config.level()?,
        version: env!("CARGO_PKG_VERSION"),
        passed: report.passed(),
        config,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| MildError::Config(e.to_string()))?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

/// Validates the config and runs the experiment it names.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    match config.kind()? {
        ExperimentKind::Solve => run_solve(config),
        ExperimentKind::ValidateSmooth => run_validate_smooth(config),
        ExperimentKind::ConvergenceH3 => run_convergence(config),
        ExperimentKind::Invariants => run_invariants(config),
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Largest contraction ratio recorded on the final horizon (0 if none).
pub fn final_horizon_ratio(fp: &FixedPoint) -> f64 {
    fp.history.iter().filter(|r| r.horizon == fp.horizon).filter_map(|r| r.ratio).fold(0.0, f64::max)
}

/// `||U1 - U2||_W` over the common part of two horizons.
pub fn common_distance(a: &SolutionPair, b: &SolutionPair) -> Result<f64> {
    let cells = a.u.grid.cells.min(b.u.grid.cells);
    let ra = if a.u.grid.cells == cells { a.clone() } else { restrict_pair(a, cells)? };
    let rb = if b.u.grid.cells == cells { b.clone() } else { restrict_pair(b, cells)? };
    Ok(ra.distance(&rb))
}

fn chen_relative(pair: &SolutionPair, omega: &GridPath) -> f64 {
    let (chen, diag) = pair.consistency(omega);
    chen.max(diag) / pair.v.max_norm().max(1.0)
}

fn run_solve(config: &ExperimentConfig) -> Result<Report> {
    let op = config.operator()?;
    let cells = config.cells()?;
    let driver = config.fbm_driver(&op, cells)?;
    let g = config.nonlinearity(&op)?;
    let u0 = config.initial_value();
    let params = config.params();
    let cfg = config.solver_config();
    let a = AreaOperator::new(driver, op)?;
    let fp = solve_fixed_point(&a, &u0, &g, &params, &cfg)?;
    let mirrored = initial_pair(&a, &u0.scale(-1.0), &params)?;
    let other = solve_from(&a, &u0, &g, &params, &cfg, Some(&mirrored))?;
    let criteria = vec![
        Criterion::at_most("fixed_point_residual", fp.residual, 10.0 * fp.threshold),
        Criterion::below("contraction_ratio_final_horizon", final_horizon_ratio(&fp), 1.0),
        Criterion::at_most("uniqueness_distance", common_distance(&fp.pair, &other.pair)?, 100.0 * fp.threshold),
        Criterion::at_most("chen_residual", chen_relative(&fp.pair, &fp.area_op.driver), 1e-10),
    ];
    let details = vec![
        ("paths.csv".to_string(), csv_bytes(|b| fp.pair.u.write_csv(b))?),
        ("areas.csv".to_string(), csv_bytes(|b| fp.pair.v.write_csv(b))?),
        ("history.csv".to_string(), csv_bytes(|b| write_history_csv(&fp.history, b))?),
        ("driver.csv".to_string(), csv_bytes(|b| fp.area_op.driver.write_csv(b))?),
    ];
    Ok(Report { kind: ExperimentKind::Solve, criteria, details })
}

/// Sup-norm relative error `max |a - b| / max |b|`.
pub fn sup_relative(a: &GridPath, b: &GridPath) -> f64 {
    let d = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let s = b.values.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if s == 0.0 {
        d
    } else {
        d / s
    }
}

fn frob(x: &[f64]) -> f64 {
    x.iter().map(|z| z * z).sum::<f64>().sqrt()
}

/// Grid pairs used to compare areas: a strided lattice plus the neighbouring pairs.
pub fn comparison_pairs(cells: usize) -> Vec<(usize, usize)> {
    let stride = (cells / 32).max(1);
    let mut out = Vec::new();
    for a in (1..cells).step_by(stride) {
        for b in (a + stride..=cells).step_by(stride) {
            out.push((a, b));
        }
        out.push((a, a + 1));
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn run_validate_smooth(config: &ExperimentConfig) -> Result<Report> {
    let op = config.operator()?;
    let cells = config.cells()?;
    let driver = config.smooth_driver(&op, cells)?;
    let g = config.nonlinearity(&op)?;
    let u0 = config.initial_value();
    let params = config.params();
    let cfg = config.solver_config();
    let a = AreaOperator::new(driver, op)?;
    let fp = solve_fixed_point(&a, &u0, &g, &params, &cfg)?;
    let used = &fp.area_op;
    let reference = reference_mild_smooth(&used.driver, &used.op, &u0, &g, 4, true)?;
    let path_err = sup_relative(&fp.pair.u, &reference);
    let next = apply_t(&fp.pair, used, &u0, &g, &params, &cfg)?;
    let grid = used.driver.grid;
    let (mut num, mut den) = (0.0, 0.0);
    let mut rows = Vec::new();
    for (sa, tb) in comparison_pairs(grid.cells) {
        let direct = area_u_omega(&next.u, &used.driver, grid.t(sa), grid.t(tb))?;
        let diff: Vec<f64> = next.v.get(sa, tb).iter().zip(&direct.coords).map(|(x, y)| x - y).collect();
        let (d, scale) = (frob(&diff), frob(&direct.coords));
        num += d * d;
        den += scale * scale;
        rows.push((grid.t(sa), grid.t(tb), if scale > 0.0 { d / scale } else { d }));
    }
    let area_err = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
    let criteria = vec![
        Criterion::at_most("path_vs_exponential_euler", path_err, 5e-3),
        Criterion::at_most("area_vs_product_area", area_err, 5e-3),
        Criterion::below("horizon_shortfall", 1.0 - fp.horizon / config.solver.horizon, 1e-12),
    ];
    let area_rows = csv_bytes(|b| {
        let mut wr = csv::Writer::from_writer(b);
        wr.write_record(["s", "t", "rel_err"])?;
        for (s, t, e) in &rows {
            wr.write_record(&[fmt_f(*s), fmt_f(*t), fmt_f(*e)])?;
        }
        wr.flush()?;
        Ok(())
    })?;
    let details = vec![
        ("paths.csv".to_string(), csv_bytes(|b| fp.pair.u.write_csv(b))?),
        ("reference.csv".to_string(), csv_bytes(|b| reference.write_csv(b))?),
        ("areas.csv".to_string(), csv_bytes(|b| fp.pair.v.write_csv(b))?),
        ("area_errors.csv".to_string(), area_rows),
        ("history.csv".to_string(), csv_bytes(|b| write_history_csv(&fp.history, b))?),
    ];
    Ok(Report { kind: ExperimentKind::ValidateSmooth, criteria, details })
}

/// `sup_{s<t} |lambda^{-2 kappa} (K1 - K2)(s,t)| / (t-s)^e` over all grid pairs.
pub fn twisted_difference_norm(a1: &AreaOperator, a2: &AreaOperator, e: f64) -> Result<f64> {
    if a1.driver.grid != a2.driver.grid || a1.op != a2.op {
        return Err(MildError::Grid("twisted areas must share grid and operator".into()));
    }
    let n = a1.n();
    let grid = a1.driver.grid;
    let w: Vec<f64> = (0..n).map(|i| a1.op.lambda(i).powf(-2.0 * a1.op.kappa_hat())).collect();
    let mut best: f64 = 0.0;
    for s in 0..grid.cells {
        let r1 = a1.kernel_row(s);
        let r2 = a2.kernel_row(s);
        for (j, (k1, k2)) in r1.iter().zip(&r2).enumerate() {
            let mut acc = 0.0;
            for i in 0..n {
                for kl in 0..n * n {
                    let d = k1[i * n * n + kl] - k2[i * n * n + kl];
                    acc += w[i] * d * d;
                }
            }
            let len = grid.t(s + j + 1) - grid.t(s);
            best = best.max(acc.sqrt() / len.powf(e));
        }
    }
    Ok(best)
}

/// Largest ratio `d_{k+1} / d_k` of a sequence (0 when every term vanishes).
pub fn max_successive_ratio(d: &[f64]) -> f64 {
    d.windows(2)
        .map(|w| {
            if w[0] > 0.0 {
                w[1] / w[0]
            } else if w[1] > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// One row of the dyadic Cauchy table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyRow {
    pub n: usize,
    pub path_diff: f64,
    pub area_diff: f64,
    pub fixed_point_diff: f64,
}

/// Differences between the dyadic approximations `omega^n` and `omega^{2n}`,
/// `n = 4, 8, ..., M/2`, of one sample with `M` cells, all expressed on the
/// fine grid, together with the W-distance of the corresponding fixed points.
pub fn cauchy_table(config: &ExperimentConfig) -> Result<Vec<CauchyRow>> {
    let op = config.operator()?;
    let cells = config.cells()?;
    let fine = config.fbm_driver(&op, cells)?;
    let g = config.nonlinearity(&op)?;
    let u0 = config.initial_value();
    let params = config.params();
    let cfg = config.solver_config();
    let mut ns = Vec::new();
    let mut n = 4;
    while n <= cells {
        ns.push(n);
        n *= 2;
    }
    let mut ops = Vec::new();
    let mut fps = Vec::new();
    for &n in &ns {
        let a = AreaOperator::new(refine_to_cells(&fine, n)?, op.clone())?;
        fps.push(solve_fixed_point(&a, &u0, &g, &params, &cfg)?.pair);
        ops.push(a);
    }
    let mut rows = Vec::new();
    for k in 0..ns.len() - 1 {
        let diff = ops[k + 1].driver.sub(&ops[k].driver);
        rows.push(CauchyRow {
            n: ns[k],
            path_diff: path_norm(&diff, params.beta_p, false).full,
            area_diff: twisted_difference_norm(&ops[k + 1], &ops[k], 2.0 * params.beta_p)?,
            fixed_point_diff: common_distance(&fps[k + 1], &fps[k])?,
        });
    }
    Ok(rows)
}

fn run_convergence(config: &ExperimentConfig) -> Result<Report> {
    let rows = cauchy_table(config)?;
    let col = |f: fn(&CauchyRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let criteria = vec![
        Criterion::at_most("path_cauchy_ratio", max_successive_ratio(&col(|r| r.path_diff)), 1.1),
        Criterion::at_most("twisted_area_cauchy_ratio", max_successive_ratio(&col(|r| r.area_diff)), 1.1),
        Criterion::at_most("fixed_point_cauchy_ratio", max_successive_ratio(&col(|r| r.fixed_point_diff)), 1.1),
    ];
    let table = csv_bytes(|b| {
        let mut wr = csv::Writer::from_writer(b);
        wr.write_record(["n", "path_diff", "twisted_area_diff", "fixed_point_diff"])?;
        for r in &rows {
            wr.write_record(&[r.n.to_string(), fmt_f(r.path_diff), fmt_f(r.area_diff), fmt_f(r.fixed_point_diff)])?;
        }
        wr.flush()?;
        Ok(())
    })?;
    Ok(Report { kind: ExperimentKind::ConvergenceH3, criteria, details: vec![("convergence.csv".to_string(), table)] })
}

/// Random trigonometric polynomial `sum_k c_k sin(k x + p_k)`, `k = 1..=3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigPoly {
    pub coef: [f64; 3],
    pub phase: [f64; 3],
}

impl TrigPoly {
    pub fn random(rng: &mut impl Rng) -> Self {
        let mut p = TrigPoly { coef: [0.0; 3], phase: [0.0; 3] };
        for k in 0..3 {
            p.coef[k] = rng.random_range(-1.0..1.0);
            p.phase[k] = rng.random_range(0.0..std::f64::consts::TAU);
        }
        p
    }

    pub fn eval(&self, x: f64) -> f64 {
        (0..3).map(|k| self.coef[k] * ((k + 1) as f64 * x + self.phase[k]).sin()).sum()
    }
}

/// `int_s^t D^a_{s+} f * g - int_s^t f * D^a_{t-} g`.
pub fn by_parts_residual(f: &TrigPoly, g: &TrigPoly, a: f64, s: f64, t: f64, spec: &QuadratureSpec) -> Result<f64> {
    let fp = FnPath { dim: 1, f: |x: f64, o: &mut [f64]| o[0] = f.eval(x) };
    let gp = FnPath { dim: 1, f: |x: f64, o: &mut [f64]| o[0] = g.eval(x) };
    let left = jacobi_rule(s, t, -a, 0.0, (true, true), spec, &[]);
    let mut lhs = 0.0;
    for (x, w) in left.nodes.iter().zip(&left.weights) {
        lhs += w * (x - s).powf(a) * frac_deriv_right(&fp, s, a, *x, spec)?.value[0] * g.eval(*x);
    }
    let right = jacobi_rule(s, t, 0.0, -a, (true, true), spec, &[]);
    let mut rhs = 0.0;
    for (x, w) in right.nodes.iter().zip(&right.weights) {
        rhs += w * (t - x).powf(a) * f.eval(*x) * left_deriv(&gp, t, a, *x, spec)?.value[0];
    }
    Ok((lhs - rhs).abs())
}

/// Largest by-parts residual over random polynomials, orders and intervals.
pub fn by_parts_suite(samples: usize, seed: u64, params: &HolderParams, spec: &QuadratureSpec) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let orders = [params.alpha, 1.0 - params.alpha, 2.0 * params.alpha - 1.0];
    let mut worst: f64 = 0.0;
    for k in 0..samples {
        let f = TrigPoly::random(&mut rng);
        let g = TrigPoly::random(&mut rng);
        let s = rng.random_range(0.0..0.5);
        let t = rng.random_range(s + 0.1..1.0);
        worst = worst.max(by_parts_residual(&f, &g, orders[k % 3], s, t, spec)?);
    }
    Ok(worst)
}

/// Largest path, twisted and `w` Chen residuals at random triples, relative
/// to `max(1, scale)` of the objects involved.
pub fn exact_chen_suite(pair: &SolutionPair, a: &AreaOperator, triples: usize, seed: u64) -> Result<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = a.n();
    let horizon = a.driver.grid.horizon;
    let e = HSMap::from_vec(n, (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect());
    let et: Vec<f64> = (0..n * n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let scale = pair.v.max_norm().max(1.0);
    let (mut p, mut tw, mut w) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..triples {
        let mut x = [rng.random_range(0.0..horizon), rng.random_range(0.0..horizon), rng.random_range(0.0..horizon)];
        x.sort_by(|a, b| a.total_cmp(b));
        let [s, r, t] = x;
        p = p.max(chen_residual(&ChenKind::Path { v: &pair.v, u: &pair.u, omega: &a.driver }, s, r, t)? / scale);
        tw = tw.max(chen_residual(&ChenKind::Twisted { a, e: &e }, s, r, t)?);
        let tt = rng.random_range(t..=horizon);
        w = w.max(chen_residual(&ChenKind::W { a, u: &pair.u, etilde: &et, t: tt }, s, r, t)?);
    }
    Ok((p, tw, w))
}

/// Relative Chen residual of the pair produced by the fractional evaluation
/// of the fixed-point map on a coarse grid.
pub fn fractional_chen(config: &ExperimentConfig) -> Result<f64> {
    let small = ExperimentConfig { spectral: SpectralSection { n: 2, ..config.spectral }, ..config.clone() };
    let op = small.operator()?;
    let driver = small.fbm_driver(&op, 8)?;
    let g = small.nonlinearity(&op)?;
    let u0 = small.initial_value();
    let params = small.params();
    let a = AreaOperator::new(driver, op)?;
    let start = initial_pair(&a, &u0, &params)?;
    let cfg = SolverConfig { evaluation: Evaluation::Fractional, ..small.solver_config() };
    let next = apply_t(&start, &a, &u0, &g, &params, &cfg)?;
    let m = a.driver.grid.cells;
    let mut worst: f64 = 0.0;
    let scale = next.v.max_norm().max(1e-300);
    for s in 1..m {
        for r in s..m {
            for t in r + 1..=m {
                worst = worst.max(crate::tensor_area::chen_residual_path(&next.v, &next.u, &a.driver, s, r, t) / scale);
            }
        }
    }
    Ok(worst)
}

/// Additivity residual `|S(t-s) I(0,s) + I(s,t) - I(0,t)|` of the fractional
/// convolution integral, and the quadrature tolerance (mesh-halving self-difference).
pub fn additivity_check(config: &ExperimentConfig) -> Result<(f64, f64)> {
    let small = ExperimentConfig { spectral: SpectralSection { n: 2, ..config.spectral }, ..config.clone() };
    let op = small.operator()?;
    let a = AreaOperator::new(small.fbm_driver(&op, 8)?, op)?;
    let g = small.nonlinearity(&a.op)?;
    let params = small.params();
    let pair = initial_pair(&a, &small.initial_value(), &params)?;
    let spec = small.quadrature;
    let h = a.driver.grid.horizon;
    let (s, t) = (0.375 * h, 0.875 * h);
    let i0s = fractional_convolution(&pair, &a, &g, &params, &spec, 0.0, s)?;
    let ist = fractional_convolution(&pair, &a, &g, &params, &spec, s, t)?;
    let i0t = fractional_convolution(&pair, &a, &g, &params, &spec, 0.0, t)?;
    let fine = fractional_convolution(&pair, &a, &g, &params, &spec.refined(), 0.0, t)?;
    let lhs: Vec<f64> = (0..a.n()).map(|i| (-a.op.lambda(i) * (t - s)).exp() * i0s[i] + ist[i]).collect();
    let res = frob(&lhs.iter().zip(&i0t).map(|(x, y)| x - y).collect::<Vec<_>>());
    let tol = frob(&i0t.iter().zip(&fine).map(|(x, y)| x - y).collect::<Vec<_>>());
    Ok((res, tol))
}

/// `||U(u0 + d e_1) - U(u0)||_W / d` for `d = delta` and `delta / 2`.
pub fn lipschitz_constants(a: &AreaOperator, u0: &ModeVector, g: &NonlinearityG, params: &HolderParams, cfg: &SolverConfig, delta: f64) -> Result<(f64, f64)> {
    let base = solve_fixed_point(a, u0, g, params, cfg)?;
    let scale = u0.norm().max(1.0);
    let shifted = |d: f64| -> Result<f64> {
        let mut x = u0.clone();
        x.coords[0] += d * scale;
        let fp = solve_fixed_point(a, &x, g, params, cfg)?;
        Ok(common_distance(&fp.pair, &base.pair)? / (d * scale))
    };
    Ok((shifted(delta)?, shifted(0.5 * delta)?))
}

/// `sup_t |(-A)^beta (u(t) - S(t) u0)|` and the reached horizon of fixed
/// points on `M/4`, `M/2` and `M` cells of one driver sample. The sup runs
/// over the coarsest grid and the horizon common to all three.
pub fn regularity_norms(config: &ExperimentConfig) -> Result<Vec<(f64, f64)>> {
    let op = config.operator()?;
    let top = config.cells()?;
    let fine = config.fbm_driver(&op, top)?;
    let g = config.nonlinearity(&op)?;
    let u0 = config.initial_value();
    let params = config.params();
    let cfg = config.solver_config();
    let mut solutions = Vec::new();
    for stride in [1, 2, 4] {
        let a = AreaOperator::new(subsample(&fine, stride * top / 4)?, op.clone())?;
        solutions.push((stride, solve_fixed_point(&a, &u0, &g, &params, &cfg)?));
    }
    let common = solutions.iter().map(|(_, fp)| fp.horizon).fold(f64::INFINITY, f64::min);
    let out = solutions
        .iter()
        .map(|(stride, fp)| {
            let grid = fp.pair.u.grid;
            let mut best: f64 = 0.0;
            for j in (0..=grid.cells).step_by(*stride) {
                let t = grid.t(j);
                if t > common * (1.0 + 1e-12) {
                    break;
                }
                let z: Vec<f64> = (0..op.dim()).map(|i| fp.pair.u.at(j)[i] - (-op.lambda(i) * t).exp() * u0.coords[i]).collect();
                best = best.max(op.norm_kappa(&ModeVector::new(z), params.beta));
            }
            (best, fp.horizon)
        })
        .collect();
    Ok(out)
}

fn run_invariants(config: &ExperimentConfig) -> Result<Report> {
    let op = config.operator()?;
    let g = config.nonlinearity(&op)?;
    let params = config.params();
    let cfg = config.solver_config();
    let inv = config.invariants;
    let bounds = bounds_check(&g, inv.samples, inv.seed);
    let worst_bound = bounds.worst_ratio.iter().copied().fold(0.0, f64::max);
    let by_parts = by_parts_suite(inv.samples, inv.seed, &params, &config.quadrature.refined())?;

    let a = AreaOperator::new(config.fbm_driver(&op, config.cells()?)?, op.clone())?;
    let u0 = config.initial_value();
    let fp = solve_fixed_point(&a, &u0, &g, &params, &cfg)?;
    let (chen_path, chen_twisted, chen_w) = exact_chen_suite(&fp.pair, &fp.area_op, 20, inv.seed)?;
    let chen_frac = fractional_chen(config)?;
    let (add_res, add_tol) = additivity_check(config)?;
    let (c1, c2) = lipschitz_constants(&a, &u0, &g, &params, &cfg, inv.delta)?;
    let reg = regularity_norms(config)?;

    let criteria = vec![
        Criterion { name: "nonlinearity_bounds_worst_ratio".into(), value: worst_bound, threshold: 1.0, pass: bounds.all_hold() },
        Criterion::at_most("integration_by_parts", by_parts, 1e-6),
        Criterion::at_most("chen_path_exact", chen_path, 1e-10),
        Criterion::at_most("chen_twisted_exact", chen_twisted, 1e-10),
        Criterion::at_most("chen_w_exact", chen_w, 1e-10),
        Criterion::at_most("chen_path_quadrature", chen_frac, 5e-3),
        Criterion::at_most("additivity", add_res, 2.0 * add_tol.max(1e-12)),
        Criterion::at_most("lipschitz_stability", (c1 / c2 - 1.0).abs(), 0.05),
        Criterion::at_most("regularity_ratio", max_successive_ratio(&reg.iter().map(|r| r.0).collect::<Vec<_>>()), 1.2),
    ];
    let table = csv_bytes(|b| {
        let mut wr = csv::Writer::from_writer(b);
        wr.write_record(["cells", "integral_norm_beta", "horizon"])?;
        let top = config.cells()?;
        for (k, (v, h)) in reg.iter().enumerate() {
            wr.write_record(&[(top >> (2 - k)).to_string(), fmt_f(*v), fmt_f(*h)])?;
        }
        wr.flush()?;
        Ok(())
    })?;
    let bounds_rows = csv_bytes(|b| {
        let mut wr = csv::Writer::from_writer(b);
        wr.write_record(["inequality", "worst_ratio", "max_lhs", "holds"])?;
        for k in 0..7 {
            wr.write_record(&[(k + 1).to_string(), fmt_f(bounds.worst_ratio[k]), fmt_f(bounds.max_lhs[k]), bounds.holds[k].to_string()])?;
        }
        wr.flush()?;
        Ok(())
    })?;
    let details = vec![
        ("regularity.csv".to_string(), table),
        ("bounds.csv".to_string(), bounds_rows),
        ("paths.csv".to_string(), csv_bytes(|b| fp.pair.u.write_csv(b))?),
        ("history.csv".to_string(), csv_bytes(|b| write_history_csv(&fp.history, b))?),
    ];
    Ok(Report { kind: ExperimentKind::Invariants, criteria, details })
}
