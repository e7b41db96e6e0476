//! Matrix weights, A_p characteristics, reducing operators and A_p-dimension
//! estimates on finite lattice windows.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicCube, LatticeWindow};
use crate::error::{precondition, Error, Result};
use crate::linalg::{self, c, CMat, CVec};
use crate::params::WeightDims;
use crate::rng;

/// `x -> W(x)`, a Hermitian nonnegative `m x m` matrix on `R^n`.
pub trait MatrixWeight: Send + Sync + fmt::Debug {
    fn m(&self) -> usize;
    fn n(&self) -> usize;
    fn eval(&self, x: &[f64]) -> CMat;
    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "custom", "m": self.m(), "n": self.n() })
    }
}

pub type SharedWeight = Arc<dyn MatrixWeight>;

#[derive(Clone, Debug)]
pub struct ConstantWeight {
    pub n: usize,
    pub matrix: CMat,
}

impl ConstantWeight {
    pub fn identity(m: usize, n: usize) -> Self {
        Self { n, matrix: linalg::identity(m) }
    }
}

impl MatrixWeight for ConstantWeight {
    fn m(&self) -> usize {
        self.matrix.nrows()
    }
    fn n(&self) -> usize {
        self.n
    }
    fn eval(&self, _x: &[f64]) -> CMat {
        self.matrix.clone()
    }
    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "constant", "m": self.m(), "n": self.n })
    }
}

/// `diag(max(r(x), floor)^{a_1}, ..., max(r(x), floor)^{a_m})` where `r(x)` is
/// `|x - center|` or, with `axis`, `|x_axis - center_axis|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagPowerWeight {
    pub n: usize,
    pub exponents: Vec<f64>,
    #[serde(default)]
    pub floor: f64,
    #[serde(default)]
    pub axis: Option<usize>,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
}

impl DiagPowerWeight {
    pub fn radial(n: usize, exponents: Vec<f64>, floor: f64) -> Self {
        Self { n, exponents, floor, axis: None, center: None }
    }

    pub fn along_axis(n: usize, axis: usize, exponents: Vec<f64>, floor: f64) -> Self {
        Self { n, exponents, floor, axis: Some(axis), center: None }
    }

    fn radius(&self, x: &[f64]) -> f64 {
        let c = |i: usize| self.center.as_ref().map_or(0.0, |c| c[i]);
        match self.axis {
            Some(a) => (x[a] - c(a)).abs(),
            None => x.iter().enumerate().map(|(i, xi)| (xi - c(i)).powi(2)).sum::<f64>().sqrt(),
        }
    }

    pub fn diagonal(&self, x: &[f64]) -> Vec<f64> {
        let r = self.radius(x).max(self.floor);
        self.exponents.iter().map(|&a| r.powf(a)).collect()
    }
}

impl MatrixWeight for DiagPowerWeight {
    fn m(&self) -> usize {
        self.exponents.len()
    }
    fn n(&self) -> usize {
        self.n
    }
    fn eval(&self, x: &[f64]) -> CMat {
        linalg::diag(&self.diagonal(x))
    }
    fn describe(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("serializable");
        v["kind"] = "diag-power".into();
        v["m"] = self.m().into();
        v
    }
}

/// Piecewise constant on the level-`level` cubes with index bounds `[lo, hi)`;
/// points outside the box take the value of the nearest cell.
#[derive(Clone, Debug)]
pub struct GridWeight {
    pub n: usize,
    pub m: usize,
    pub level: i32,
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
    pub cells: Vec<CMat>,
}

impl GridWeight {
    pub fn new(level: i32, lo: Vec<i64>, hi: Vec<i64>, cells: Vec<CMat>) -> Result<Self> {
        let n = lo.len();
        if hi.len() != n || n == 0 {
            return Err(Error::Dimension("grid bounds must have one entry per axis".into()));
        }
        let count: i64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
        if count <= 0 || count as usize != cells.len() {
            return Err(Error::Dimension(format!(
                "grid box holds {count} cells but {} matrices were given",
                cells.len()
            )));
        }
        let m = cells[0].nrows();
        for (i, cm) in cells.iter().enumerate() {
            if cm.nrows() != m || cm.ncols() != m {
                return Err(Error::Dimension(format!("grid cell {i} is not {m}x{m}")));
            }
            if linalg::hermitian_defect(cm) > 1e-12 {
                return Err(precondition(format!("grid cell {i} is not Hermitian")));
            }
            let nrm = linalg::spectral_norm(cm);
            if linalg::min_eigenvalue(cm) < -1e-12 * nrm {
                return Err(precondition(format!("grid cell {i} is not nonnegative definite")));
            }
        }
        Ok(Self { n, m, level, lo, hi, cells })
    }

    fn cell_index(&self, x: &[f64]) -> usize {
        let s = crate::dyadic::pow2(self.level);
        let mut flat = 0usize;
        for a in 0..self.n {
            let k = ((x[a] * s).floor() as i64).clamp(self.lo[a], self.hi[a] - 1);
            flat = flat * (self.hi[a] - self.lo[a]) as usize + (k - self.lo[a]) as usize;
        }
        flat
    }
}

impl MatrixWeight for GridWeight {
    fn m(&self) -> usize {
        self.m
    }
    fn n(&self) -> usize {
        self.n
    }
    fn eval(&self, x: &[f64]) -> CMat {
        self.cells[self.cell_index(x)].clone()
    }
    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "grid", "m": self.m, "n": self.n, "level": self.level,
                            "lo": self.lo, "hi": self.hi })
    }
}

type WeightFn = dyn Fn(&[f64]) -> CMat + Send + Sync;

/// A weight given by a closure.
#[derive(Clone)]
pub struct FnWeight {
    pub m: usize,
    pub n: usize,
    pub label: String,
    f: Arc<WeightFn>,
}

impl FnWeight {
    pub fn new(m: usize, n: usize, label: &str, f: impl Fn(&[f64]) -> CMat + Send + Sync + 'static) -> Self {
        Self { m, n, label: label.into(), f: Arc::new(f) }
    }
}

impl fmt::Debug for FnWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnWeight({}, m={}, n={})", self.label, self.m, self.n)
    }
}

impl MatrixWeight for FnWeight {
    fn m(&self) -> usize {
        self.m
    }
    fn n(&self) -> usize {
        self.n
    }
    fn eval(&self, x: &[f64]) -> CMat {
        (self.f)(x)
    }
    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "function", "label": self.label, "m": self.m, "n": self.n })
    }
}

/// `W(x', x_n) = V(x')`.
#[derive(Clone, Debug)]
pub struct CylindricalWeight {
    pub base: SharedWeight,
}

impl MatrixWeight for CylindricalWeight {
    fn m(&self) -> usize {
        self.base.m()
    }
    fn n(&self) -> usize {
        self.base.n() + 1
    }
    fn eval(&self, x: &[f64]) -> CMat {
        self.base.eval(&x[..x.len() - 1])
    }
    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "cylindrical", "base": self.base.describe() })
    }
}

/// `c W(x)` for `c > 0`.
#[derive(Clone, Debug)]
pub struct ScaledWeight {
    pub factor: f64,
    pub base: SharedWeight,
}

impl MatrixWeight for ScaledWeight {
    fn m(&self) -> usize {
        self.base.m()
    }
    fn n(&self) -> usize {
        self.base.n()
    }
    fn eval(&self, x: &[f64]) -> CMat {
        self.base.eval(x) * c(self.factor)
    }
    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "scaled", "factor": self.factor, "base": self.base.describe() })
    }
}

/// JSON description of a weight.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightSpec {
    Constant {
        m: usize,
        n: usize,
        /// Row-major real entries; identity when absent.
        #[serde(default)]
        matrix: Option<Vec<f64>>,
    },
    DiagPower {
        m: usize,
        n: usize,
        exponents: Vec<f64>,
        #[serde(default)]
        floor: f64,
        #[serde(default)]
        axis: Option<usize>,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    Grid {
        m: usize,
        n: usize,
        level: i32,
        lo: Vec<i64>,
        hi: Vec<i64>,
        /// Row-major real matrices, one after another.
        #[serde(default)]
        values: Option<Vec<f64>>,
        /// CSV with one cell per line: `re, im` pairs of the row-major matrix.
        #[serde(default)]
        file: Option<String>,
    },
    Cylindrical {
        base: Box<WeightSpec>,
    },
    Scaled {
        factor: f64,
        base: Box<WeightSpec>,
    },
}

impl WeightSpec {
    pub fn identity(m: usize, n: usize) -> Self {
        WeightSpec::Constant { m, n, matrix: None }
    }

    /// Build the weight; relative grid file paths resolve against `base_dir`.
    pub fn build(&self, base_dir: Option<&Path>) -> Result<SharedWeight> {
        Ok(match self {
            WeightSpec::Constant { m, n, matrix } => {
                let mat = match matrix {
                    None => linalg::identity(*m),
                    Some(v) if v.len() == m * m => linalg::from_real(*m, v),
                    Some(v) => {
                        return Err(Error::Dimension(format!("constant weight needs {} entries, got {}", m * m, v.len())))
                    }
                };
                if linalg::hermitian_defect(&mat) > 1e-12 {
                    return Err(precondition("constant weight matrix is not symmetric"));
                }
                Arc::new(ConstantWeight { n: *n, matrix: mat })
            }
            WeightSpec::DiagPower { m, n, exponents, floor, axis, center } => {
                if exponents.len() != *m {
                    return Err(Error::Dimension(format!("diag-power weight needs {m} exponents")));
                }
                if let Some(a) = axis {
                    if *a >= *n {
                        return Err(Error::Dimension(format!("axis {a} out of range for n = {n}")));
                    }
                }
                Arc::new(DiagPowerWeight {
                    n: *n,
                    exponents: exponents.clone(),
                    floor: *floor,
                    axis: *axis,
                    center: center.clone(),
                })
            }
            WeightSpec::Grid { m, n, level, lo, hi, values, file } => {
                if lo.len() != *n {
                    return Err(Error::Dimension("grid bounds must have n entries".into()));
                }
                let cells = match (values, file) {
                    (Some(v), None) => {
                        if v.len() % (m * m) != 0 {
                            return Err(Error::Dimension("grid values length is not a multiple of m^2".into()));
                        }
                        v.chunks(m * m).map(|ch| linalg::from_real(*m, ch)).collect()
                    }
                    (None, Some(f)) => {
                        let path = match base_dir {
                            Some(d) if Path::new(f).is_relative() => d.join(f),
                            _ => Path::new(f).to_path_buf(),
                        };
                        read_grid_csv(&path, *m)?
                    }
                    _ => return Err(Error::Parse("grid weight needs exactly one of `values` or `file`".into())),
                };
                Arc::new(GridWeight::new(*level, lo.clone(), hi.clone(), cells)?)
            }
            WeightSpec::Cylindrical { base } => Arc::new(CylindricalWeight { base: base.build(base_dir)? }),
            WeightSpec::Scaled { factor, base } => {
                if *factor <= 0.0 {
                    return Err(precondition("weight scale factor must be positive"));
                }
                Arc::new(ScaledWeight { factor: *factor, base: base.build(base_dir)? })
            }
        })
    }
}

fn read_grid_csv(path: &Path, m: usize) -> Result<Vec<CMat>> {
    let text = std::fs::read_to_string(path)?;
    let mut cells = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let nums: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), ln + 1)))?;
        if nums.len() != 2 * m * m {
            return Err(Error::Parse(format!(
                "{}:{}: expected {} numbers, got {}",
                path.display(),
                ln + 1,
                2 * m * m,
                nums.len()
            )));
        }
        let it = nums.chunks(2).map(|p| Complex64::new(p[0], p[1]));
        cells.push(CMat::from_row_iterator(m, m, it));
    }
    Ok(cells)
}

/// Tensor midpoint rule: `points * 2^depth` nodes per axis on every cube.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub points: usize,
    pub depth: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { points: 4, depth: 2 }
    }
}

impl QuadratureSpec {
    pub fn new(points: usize, depth: u32) -> Self {
        Self { points: points.max(1), depth }
    }

    pub fn per_axis(&self) -> usize {
        self.points << self.depth
    }

    /// Parse `pts:depth`.
    pub fn parse(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("quadrature `{s}` must look like pts:depth")))?;
        let points = a.trim().parse().map_err(|e| Error::Parse(format!("quadrature points: {e}")))?;
        let depth = b.trim().parse().map_err(|e| Error::Parse(format!("quadrature depth: {e}")))?;
        if points == 0 {
            return Err(precondition("quadrature needs at least one point per axis"));
        }
        Ok(Self { points, depth })
    }

    pub fn refined(&self) -> Self {
        Self { points: self.points, depth: self.depth + 1 }
    }
}

impl fmt::Display for QuadratureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.points, self.depth)
    }
}

/// Midpoints of the `per_axis^n` equal subcubes of `corner + [0, side)^n`,
/// row-major with the last axis fastest.
pub fn box_nodes(corner: &[f64], side: f64, per_axis: usize) -> Vec<Vec<f64>> {
    let n = corner.len();
    let h = side / per_axis as f64;
    let total = per_axis.pow(n as u32);
    (0..total)
        .map(|flat| {
            let mut rem = flat;
            let mut x = vec![0.0; n];
            for a in (0..n).rev() {
                x[a] = corner[a] + (((rem % per_axis) as f64) + 0.5) * h;
                rem /= per_axis;
            }
            x
        })
        .collect()
}

pub fn cube_nodes(q: &DyadicCube, quad: &QuadratureSpec) -> Vec<Vec<f64>> {
    box_nodes(&q.corner(), q.side(), quad.per_axis())
}

/// Concentric dilate `2^i Q` as `(corner, side)`.
pub fn dilate(q: &DyadicCube, i: u32) -> (Vec<f64>, f64) {
    let side = q.side() * (1u64 << i) as f64;
    let corner = q.center().iter().map(|c| c - side / 2.0).collect();
    (corner, side)
}

fn check_dims(w: &dyn MatrixWeight, n: usize) -> Result<()> {
    if w.n() != n {
        return Err(Error::Dimension(format!("weight lives on R^{} but the window on R^{n}", w.n())));
    }
    Ok(())
}

/// `(W^{1/p}, W^{-1/p})` at each node, refusing singular samples.
pub fn power_pairs(w: &dyn MatrixWeight, p: f64, nodes: &[Vec<f64>]) -> Result<Vec<(CMat, CMat)>> {
    nodes.iter().map(|x| linalg::herm_power_pair(&w.eval(x), 1.0 / p, x)).collect()
}

/// The defining average of the A_p condition with `x` over `xs` and `y` over `ys`.
pub fn ap_average(xs: &[CMat], ys: &[CMat], p: f64) -> f64 {
    let nx = xs.len() as f64;
    let ny = ys.len() as f64;
    if p <= 1.0 {
        ys.par_iter()
            .map(|b| xs.iter().map(|a| linalg::spectral_norm(&(a * b)).powf(p)).sum::<f64>() / nx)
            .reduce(|| 0.0, f64::max)
    } else {
        let pd = p / (p - 1.0);
        xs.par_iter()
            .map(|a| {
                let inner = ys.iter().map(|b| linalg::spectral_norm(&(a * b)).powf(pd)).sum::<f64>() / ny;
                inner.powf(p / pd)
            })
            .sum::<f64>()
            / nx
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ApReport {
    pub value: f64,
    pub attaining: DyadicCube,
    /// Largest per-cube value at each level.
    pub per_level: Vec<(i32, f64)>,
}

/// Discretized `[W]_{A_p}`: the sup over window cubes of the defining average.
pub fn ap_characteristic(w: &dyn MatrixWeight, p: f64, window: &LatticeWindow, quad: &QuadratureSpec) -> Result<ApReport> {
    if p <= 0.0 {
        return Err(precondition(format!("p > 0 required, got {p}")));
    }
    check_dims(w, window.dim)?;
    let cubes = window.cubes();
    let vals: Vec<f64> = cubes
        .par_iter()
        .map(|q| {
            let nodes = cube_nodes(q, quad);
            let pairs = power_pairs(w, p, &nodes)?;
            let (pos, neg): (Vec<CMat>, Vec<CMat>) = pairs.into_iter().unzip();
            Ok(ap_average(&pos, &neg, p))
        })
        .collect::<Result<_>>()?;
    let mut best = 0usize;
    for (i, v) in vals.iter().enumerate() {
        if *v > vals[best] {
            best = i;
        }
    }
    let per_level = window
        .levels()
        .map(|j| {
            let m = cubes
                .iter()
                .zip(&vals)
                .filter(|(q, _)| q.level() == j)
                .map(|(_, v)| *v)
                .fold(0.0, f64::max);
            (j, m)
        })
        .collect();
    Ok(ApReport { value: vals[best], attaining: cubes[best].clone(), per_level })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReducingMethod {
    Scalar,
    SquareRoot,
    JohnFit,
}

/// A reducing operator with the two-sided constants of
/// `c_lo |A z| <= (avg |W^{1/p} z|^p)^{1/p} <= c_hi |A z|`.
#[derive(Clone, Debug, Serialize)]
pub struct ReducingFit {
    #[serde(skip)]
    pub matrix: CMat,
    pub method: ReducingMethod,
    pub lower: f64,
    pub upper: f64,
    pub certified: bool,
}

/// `(avg_x |W^{1/p}(x) z|^p)^{1/p}` over precomputed `W^{1/p}` samples.
pub fn average_norm(wpow: &[CMat], z: &CVec, p: f64) -> f64 {
    let s: f64 = wpow.iter().map(|a| (a * z).norm().powf(p)).sum::<f64>() / wpow.len() as f64;
    s.powf(1.0 / p)
}

/// Minimum-volume centered complex ellipsoid `{z : z^* M z <= 1}` containing
/// `points` (Khachiyan's algorithm); returns `M`.
pub fn john_fit(points: &[CVec], tol: f64) -> Result<CMat> {
    let m = points.first().map(|v| v.len()).ok_or_else(|| precondition("john_fit needs points"))?;
    let k = points.len();
    let mut wts = vec![1.0 / k as f64; k];
    let build = |wts: &[f64]| {
        let mut x = CMat::zeros(m, m);
        for (u, &wi) in points.iter().zip(wts) {
            x += (u * u.adjoint()) * c(wi);
        }
        x
    };
    let gains = |xinv: &CMat| -> Vec<f64> { points.iter().map(|u| (u.adjoint() * xinv * u)[(0, 0)].re).collect() };
    for _ in 0..100_000 {
        let xinv = linalg::inverse(&build(&wts))?;
        let g = gains(&xinv);
        let mm = m as f64;
        let (jmax, gmax) = g.iter().cloned().enumerate().fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
        let (jmin, gmin) = g
            .iter()
            .cloned()
            .enumerate()
            .filter(|&(i, _)| wts[i] > 0.0)
            .fold((0, f64::MAX), |a, b| if b.1 < a.1 { b } else { a });
        if gmax <= mm * (1.0 + tol) {
            break;
        }
        // toward the worst point, or away from the least useful one
        let (j, step) = if gmax - mm >= mm - gmin {
            (jmax, (gmax - mm) / (mm * (gmax - 1.0)))
        } else {
            let full = (gmin - mm) / (mm * (gmin - 1.0));
            (jmin, full.max(-wts[jmin] / (1.0 - wts[jmin])))
        };
        for wi in wts.iter_mut() {
            *wi *= 1.0 - step;
        }
        wts[j] += step;
        if wts[j] < 1e-300 {
            wts[j] = 0.0;
        }
    }
    let xinv = linalg::inverse(&build(&wts))?;
    let gmax = gains(&xinv).into_iter().fold(f64::MIN, f64::max);
    Ok(linalg::hermitian_part(&(xinv * c(1.0 / gmax))))
}

/// Relative slack of the John fit; near-constant weights converge slowly below this.
pub const JOHN_TOL: f64 = 1e-4;

/// Reducing operator of order `p` on the box `corner + [0, side)^n`.
pub fn reducing_operator_on(
    w: &dyn MatrixWeight,
    p: f64,
    corner: &[f64],
    side: f64,
    quad: &QuadratureSpec,
) -> Result<ReducingFit> {
    if p <= 0.0 {
        return Err(precondition(format!("p > 0 required, got {p}")));
    }
    let nodes = box_nodes(corner, side, quad.per_axis());
    let m = w.m();
    let samples: Vec<CMat> = nodes.iter().map(|x| w.eval(x)).collect();
    let fit = if m == 1 {
        let avg = samples.iter().map(|s| s[(0, 0)].re.max(0.0)).sum::<f64>() / samples.len() as f64;
        ReducingFit {
            matrix: linalg::diag(&[avg.powf(1.0 / p)]),
            method: ReducingMethod::Scalar,
            lower: 1.0,
            upper: 1.0,
            certified: true,
        }
    } else if p == 2.0 {
        let mut avg = CMat::zeros(m, m);
        for s in &samples {
            avg += s;
        }
        avg *= c(1.0 / samples.len() as f64);
        ReducingFit {
            matrix: linalg::sqrt_psd(&avg),
            method: ReducingMethod::SquareRoot,
            lower: 1.0,
            upper: 1.0,
            certified: true,
        }
    } else {
        let wpow: Vec<CMat> = samples.iter().map(|s| linalg::herm_power(s, 1.0 / p)).collect();
        let count = (32 * m * m).max(128);
        let mut r = rng::stream(0x5eed_0f_10a1, m as u64);
        let pts: Vec<CVec> = (0..count)
            .map(|_| {
                let z = CVec::from_vec(rng::unit_complex(&mut r, m));
                let rho = average_norm(&wpow, &z, p);
                z * c(1.0 / rho)
            })
            .collect();
        let mm = john_fit(&pts, JOHN_TOL)?;
        ReducingFit {
            matrix: linalg::sqrt_psd(&mm),
            method: ReducingMethod::JohnFit,
            lower: 1.0,
            upper: (m as f64 * (1.0 + JOHN_TOL)).sqrt(),
            certified: p >= 1.0,
        }
    };
    if linalg::min_eigenvalue(&fit.matrix) <= 0.0 {
        return Err(Error::Numerical("reducing operator is not positive definite".into()));
    }
    Ok(fit)
}

pub fn reducing_operator(w: &dyn MatrixWeight, p: f64, cube: &DyadicCube, quad: &QuadratureSpec) -> Result<ReducingFit> {
    check_dims(w, cube.dim())?;
    reducing_operator_on(w, p, &cube.corner(), cube.side(), quad)
}

/// `min` and `max` over directions of `(avg |W^{1/p} z|^p)^{1/p} / |A z|`.
pub fn direction_ratios(
    w: &dyn MatrixWeight,
    p: f64,
    cube: &DyadicCube,
    quad: &QuadratureSpec,
    a: &CMat,
    directions: usize,
    seed: u64,
) -> (f64, f64) {
    let nodes = cube_nodes(cube, quad);
    let wpow: Vec<CMat> = nodes.iter().map(|x| linalg::herm_power(&w.eval(x), 1.0 / p)).collect();
    let mut r = rng::stream(seed, 1);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for _ in 0..directions {
        let z = CVec::from_vec(rng::unit_complex(&mut r, w.m()));
        let ratio = average_norm(&wpow, &z, p) / (a * &z).norm();
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    (lo, hi)
}

/// Reducing operators `A_Q` (and inverses) for every cube of a window.
#[derive(Clone, Debug)]
pub struct ReducingFamily {
    pub p: f64,
    pub m: usize,
    pub certified: bool,
    ops: BTreeMap<DyadicCube, (CMat, CMat)>,
}

impl ReducingFamily {
    pub fn build(w: &dyn MatrixWeight, p: f64, window: &LatticeWindow, quad: &QuadratureSpec) -> Result<Self> {
        check_dims(w, window.dim)?;
        let cubes = window.cubes();
        let fits: Vec<(DyadicCube, ReducingFit)> = cubes
            .into_par_iter()
            .map(|q| reducing_operator(w, p, &q, quad).map(|f| (q, f)))
            .collect::<Result<_>>()?;
        let certified = fits.iter().all(|(_, f)| f.certified);
        let ops = fits
            .into_iter()
            .map(|(q, f)| {
                let inv = linalg::inverse(&f.matrix)?;
                Ok((q, (f.matrix, inv)))
            })
            .collect::<Result<_>>()?;
        Ok(Self { p, m: w.m(), certified, ops })
    }

    /// Family with `A_Q = I` on every window cube.
    pub fn identity(m: usize, p: f64, window: &LatticeWindow) -> Self {
        let ops = window.cubes().into_iter().map(|q| (q, (linalg::identity(m), linalg::identity(m)))).collect();
        Self { p, m, certified: true, ops }
    }

    pub fn from_map(m: usize, p: f64, map: BTreeMap<DyadicCube, CMat>) -> Result<Self> {
        let ops = map
            .into_iter()
            .map(|(q, a)| {
                let inv = linalg::inverse(&a)?;
                Ok((q, (a, inv)))
            })
            .collect::<Result<_>>()?;
        Ok(Self { p, m, certified: false, ops })
    }

    pub fn get(&self, q: &DyadicCube) -> Result<&CMat> {
        self.ops.get(q).map(|(a, _)| a).ok_or_else(|| Error::MissingCube(q.to_string()))
    }

    pub fn inverse(&self, q: &DyadicCube) -> Result<&CMat> {
        self.ops.get(q).map(|(_, b)| b).ok_or_else(|| Error::MissingCube(q.to_string()))
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn cubes(&self) -> impl Iterator<Item = &DyadicCube> {
        self.ops.keys()
    }
}

/// `||A_Q A_R^{-1}||` and the dimension-based upper envelope.
pub fn reducing_ratio_bound(fam: &ReducingFamily, wd: &WeightDims, q: &DyadicCube, r: &DyadicCube) -> Result<(f64, f64)> {
    let ratio = linalg::spectral_norm(&(fam.get(q)? * fam.inverse(r)?));
    let p = fam.p;
    let (lq, lr) = (q.side(), r.side());
    let dual = if p > 1.0 { wd.d_tilde * (p - 1.0) / p } else { 0.0 };
    let scale = f64::max((lr / lq).powf(wd.d / p), (lq / lr).powf(dual));
    let dist: f64 = q.center().iter().zip(r.center()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let bound = scale * (1.0 + dist / lq.max(lr)).powf(wd.delta);
    Ok((ratio, bound))
}

#[derive(Clone, Debug, Serialize)]
pub struct CubeSlope {
    pub cube: DyadicCube,
    pub slope: f64,
    pub residual: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DimensionReport {
    pub d_est: f64,
    pub steps: u32,
    pub cubes: Vec<CubeSlope>,
}

/// Least-squares slope and RMS residual of `ys` against `0, 1, 2, ...`.
pub fn ls_slope(ys: &[f64]) -> (f64, f64) {
    let k = ys.len() as f64;
    let mx = (k - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = ys.iter().enumerate().map(|(i, y)| (i as f64 - mx) * (y - my)).sum();
    let sxx: f64 = (0..ys.len()).map(|i| (i as f64 - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let res = (ys.iter().enumerate().map(|(i, y)| (y - my - slope * (i as f64 - mx)).powi(2)).sum::<f64>() / k).sqrt();
    (slope, res)
}

/// The A_p-dimension defining average with `x` over `Q` and `y` over `2^i Q`.
pub fn dimension_average(w: &dyn MatrixWeight, p: f64, q: &DyadicCube, i: u32, quad: &QuadratureSpec) -> Result<f64> {
    let xs = cube_nodes(q, quad);
    let (corner, side) = dilate(q, i);
    let per = (quad.per_axis() << i).min(256.max(quad.per_axis()));
    let ys = box_nodes(&corner, side, per);
    let pos: Vec<CMat> = power_pairs(w, p, &xs)?.into_iter().map(|(a, _)| a).collect();
    let neg: Vec<CMat> = power_pairs(w, p, &ys)?.into_iter().map(|(_, b)| b).collect();
    Ok(ap_average(&pos, &neg, p))
}

/// Estimate `d` from the growth of the defining averages over `2^i Q`,
/// `i = 0..=depth`, for base cubes `Q` at the finest window level.
pub fn ap_dimension_estimate(w: &dyn MatrixWeight, p: f64, window: &LatticeWindow, quad: &QuadratureSpec) -> Result<DimensionReport> {
    check_dims(w, window.dim)?;
    let steps = window.depth();
    if steps < 4 {
        return Err(precondition(format!("dimension estimate needs at least 4 doubling steps, window depth is {steps}")));
    }
    let steps = steps as u32;
    let base = window.cubes_at(window.j_max);
    let cubes: Vec<CubeSlope> = base
        .into_par_iter()
        .map(|q| {
            let values = (0..=steps).map(|i| dimension_average(w, p, &q, i, quad)).collect::<Result<Vec<_>>>()?;
            let logs: Vec<f64> = values.iter().map(|v| v.log2()).collect();
            let (slope, residual) = ls_slope(&logs);
            Ok(CubeSlope { cube: q, slope, residual, values })
        })
        .collect::<Result<_>>()?;
    let d_est = cubes.iter().map(|c| c.slope).fold(f64::MIN, f64::max);
    Ok(DimensionReport { d_est, steps, cubes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sqrt_weight() -> FnWeight {
        FnWeight::new(1, 1, "sqrt", |x: &[f64]| linalg::diag(&[x[0].abs().sqrt()]))
    }

    #[test]
    fn identity_characteristic_is_one() {
        for p in [0.5, 1.0, 2.0, 3.5] {
            let w = ConstantWeight::identity(2, 1);
            let r = ap_characteristic(&w, p, &LatticeWindow::unit(1, 2), &QuadratureSpec::new(2, 1)).unwrap();
            assert!((r.value - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn scalar_reducing_closed_form() {
        let fit = reducing_operator(&sqrt_weight(), 1.0, &DyadicCube::unit(1), &QuadratureSpec::new(16, 16)).unwrap();
        assert_eq!(fit.method, ReducingMethod::Scalar);
        assert!((fit.matrix[(0, 0)].re - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn square_root_for_p2() {
        let w = DiagPowerWeight::radial(1, vec![0.0, 1.0], 0.0);
        let fit = reducing_operator(&w, 2.0, &DyadicCube::unit(1), &QuadratureSpec::new(1, 4)).unwrap();
        assert!((fit.matrix[(0, 0)].re - 1.0).abs() < 1e-14);
        assert!((fit.matrix[(1, 1)].re - 0.5f64.sqrt()).abs() < 1e-14);
        assert!(fit.matrix[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn john_fit_of_a_ball_is_the_ball() {
        let mut r = rng::stream(1, 0);
        let pts: Vec<CVec> = (0..200).map(|_| CVec::from_vec(rng::unit_complex(&mut r, 2))).collect();
        let m = john_fit(&pts, 1e-10).unwrap();
        assert!((m - linalg::identity(2)).norm() < 0.05);
    }

    #[test]
    fn dimension_of_identity_is_zero() {
        let w = ConstantWeight::identity(1, 1);
        let rep = ap_dimension_estimate(&w, 2.0, &LatticeWindow::unit(1, 4), &QuadratureSpec::new(2, 0)).unwrap();
        assert!(rep.d_est.abs() < 1e-9);
    }

    #[test]
    fn grid_weight_is_piecewise_constant() {
        let cells = vec![linalg::diag(&[1.0]), linalg::diag(&[4.0])];
        let g = GridWeight::new(1, vec![0], vec![2], cells).unwrap();
        assert_eq!(g.eval(&[0.3])[(0, 0)].re, 1.0);
        assert_eq!(g.eval(&[0.7])[(0, 0)].re, 4.0);
        assert_eq!(g.eval(&[5.0])[(0, 0)].re, 4.0);
        let fit = reducing_operator(&g, 2.0, &DyadicCube::unit(1), &QuadratureSpec::new(1, 1)).unwrap();
        assert!((fit.matrix[(0, 0)].re - 2.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn weight_spec_json() {
        let spec: WeightSpec =
            serde_json::from_str(r#"{"kind":"diag-power","m":2,"n":1,"exponents":[0.5,-0.25],"floor":0.01}"#).unwrap();
        let w = spec.build(None).unwrap();
        assert_eq!(w.m(), 2);
        assert!((w.eval(&[4.0])[(0, 0)].re - 2.0).abs() < 1e-15);
        let bad: WeightSpec = serde_json::from_str(r#"{"kind":"constant","m":2,"n":1,"matrix":[1,2,0,1]}"#).unwrap();
        assert!(bad.build(None).is_err());
    }
}
