//! Calderón–Zygmund kernel conditions, far-field action on atoms, parameter
//! conversion and pseudo-differential operators.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{precondition, Error, Result};
use crate::molecules::MoleculeCandidate;
use crate::params::{rounding_profile, ConstraintSet, Evaluation, Inequality, MoleculeParams};
use crate::rng;
use crate::scalar::Scalar;
use crate::wavelets::{multi_indices, FunctionSample};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

type KernelFn = dyn Fn(&[f64], &[f64]) -> Complex64 + Send + Sync;
type KernelDerivFn = dyn Fn(&[usize], &[usize], &[f64], &[f64]) -> Complex64 + Send + Sync;

fn strict_floor(r: f64) -> i64 {
    rounding_profile(&r).strict_floor as i64
}

fn strict_frac(r: f64) -> f64 {
    rounding_profile(&r).strict_frac
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn binomial(k: usize, i: usize) -> f64 {
    (0..i).fold(1.0, |acc, t| acc * (k - t) as f64 / (t + 1) as f64)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|t| t as f64).product()
}

/// Multi-indices with `|gamma| == order`.
fn exact_indices(n: usize, order: usize) -> Vec<Vec<usize>> {
    multi_indices(n, order).into_iter().filter(|g| g.iter().sum::<usize>() == order).collect()
}

/// Tensor central difference `prod_a delta_{h_a}^{k_a} f / h_a^{k_a}`.
fn central_difference(f: &dyn Fn(&[f64]) -> Complex64, z: &[f64], orders: &[usize], steps: &[f64]) -> Complex64 {
    let axes: Vec<usize> = (0..z.len()).filter(|&a| orders[a] > 0).collect();
    if axes.is_empty() {
        return f(z);
    }
    let counts: Vec<usize> = axes.iter().map(|&a| orders[a] + 1).collect();
    let combos: usize = counts.iter().product();
    let mut pt = z.to_vec();
    let mut total = ZERO;
    for c in 0..combos {
        let mut rem = c;
        let mut w = 1.0;
        for (ai, &a) in axes.iter().enumerate() {
            let i = rem % counts[ai];
            rem /= counts[ai];
            let k = orders[a];
            pt[a] = z[a] + (k as f64 / 2.0 - i as f64) * steps[a];
            let sign = if i % 2 == 1 { -1.0 } else { 1.0 };
            w *= sign * binomial(k, i) / steps[a].powi(k as i32);
        }
        total += f(&pt) * w;
    }
    total
}

/// Relative step for a difference quotient of total order `k`.
fn relative_step(base: f64, k: usize) -> f64 {
    base.max(f64::EPSILON.powf(1.0 / (k as f64 + 2.0)))
}

/// A kernel `K(x, y)` off the diagonal with derivatives up to declared orders,
/// in closed form or by central differences with step `fd_step |x - y|`.
#[derive(Clone)]
pub struct Kernel {
    pub name: String,
    pub n: usize,
    pub x_order: usize,
    pub y_order: usize,
    pub homogeneity: Option<f64>,
    pub fd_step: f64,
    eval: Arc<KernelFn>,
    closed: Option<Arc<KernelDerivFn>>,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("x_order", &self.x_order)
            .field("y_order", &self.y_order)
            .field("closed_form", &self.closed.is_some())
            .finish()
    }
}

impl Kernel {
    pub fn new(
        name: &str,
        n: usize,
        x_order: usize,
        y_order: usize,
        f: impl Fn(&[f64], &[f64]) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), n, x_order, y_order, homogeneity: None, fd_step: 1e-3, eval: Arc::new(f), closed: None }
    }

    pub fn with_derivatives(mut self, d: impl Fn(&[usize], &[usize], &[f64], &[f64]) -> Complex64 + Send + Sync + 'static) -> Self {
        self.closed = Some(Arc::new(d));
        self
    }

    pub fn with_homogeneity(mut self, h: f64) -> Self {
        self.homogeneity = Some(h);
        self
    }

    /// `1/(x - y)` on the line, derivatives `(-1)^a (a + b)! (x - y)^{-1-a-b}`.
    pub fn hilbert() -> Self {
        Self::new("hilbert", 1, 16, 16, |x, y| Complex64::new(1.0 / (x[0] - y[0]), 0.0))
            .with_derivatives(|a, b, x, y| {
                let (a, b) = (a[0], b[0]);
                let sign = if a % 2 == 1 { -1.0 } else { 1.0 };
                Complex64::new(sign * factorial(a + b) * (x[0] - y[0]).powi(-1 - a as i32 - b as i32), 0.0)
            })
            .with_homogeneity(-1.0)
    }

    /// `(x_i - y_i) |x - y|^{-n-1}` (component `i` is zero-based).
    pub fn riesz(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(precondition(format!("Riesz component {} out of range for n = {n}", i + 1)));
        }
        Ok(Self::new(&format!("riesz-{}", i + 1), n, 4, 4, move |x, y| {
            let d = sub(x, y);
            Complex64::new(d[i] * norm(&d).powi(-(n as i32) - 1), 0.0)
        })
        .with_homogeneity(-(n as f64)))
    }

    /// `1_{|x - y| > 1} / (x - y)` on the line.
    pub fn truncated() -> Self {
        Self::new("truncated", 1, 4, 4, |x, y| {
            let d = x[0] - y[0];
            Complex64::new(if d.abs() > 1.0 { 1.0 / d } else { 0.0 }, 0.0)
        })
    }

    /// Convolution kernel `k(x - y)` with `k` interpolated from samples
    /// (component 0); zero outside the grid box.
    pub fn from_grid(sample: Arc<FunctionSample>) -> Self {
        let n = sample.n;
        Self::new("custom-grid", n, 2, 2, move |x, y| sample.interpolate(0, &sub(x, y)))
    }

    /// Registered kernels: `hilbert`, `riesz-<i>` (one-based, `riesz-i` is the
    /// first component) and `truncated`.
    pub fn plugin(name: &str, n: usize) -> Result<Self> {
        match name {
            "hilbert" | "truncated" if n != 1 => Err(Error::Dimension(format!("{name} kernel lives in n = 1"))),
            "hilbert" => Ok(Self::hilbert()),
            "truncated" => Ok(Self::truncated()),
            "riesz-i" => Self::riesz(n, 0),
            _ => match name.strip_prefix("riesz-").map(str::parse::<usize>) {
                Some(Ok(i)) if i >= 1 => Self::riesz(n, i - 1),
                _ => Err(Error::Parse(format!("unknown kernel '{name}' (expected hilbert, riesz-<i>, truncated or custom-grid)"))),
            },
        }
    }

    /// `lambda^n K(lambda x, lambda y)`.
    pub fn dilated(&self, lambda: f64) -> Self {
        let n = self.n;
        let base = self.eval.clone();
        let scale = lambda.powi(n as i32);
        let mut out = Self {
            name: format!("{} dilated by {lambda}", self.name),
            eval: Arc::new(move |x, y| {
                let xs: Vec<f64> = x.iter().map(|v| v * lambda).collect();
                let ys: Vec<f64> = y.iter().map(|v| v * lambda).collect();
                base(&xs, &ys) * scale
            }),
            closed: None,
            ..self.clone()
        };
        if let Some(d) = self.closed.clone() {
            out.closed = Some(Arc::new(move |a, b, x, y| {
                let k: usize = a.iter().chain(b).sum();
                let xs: Vec<f64> = x.iter().map(|v| v * lambda).collect();
                let ys: Vec<f64> = y.iter().map(|v| v * lambda).collect();
                d(a, b, &xs, &ys) * (scale * lambda.powi(k as i32))
            }));
        }
        out
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Complex64 {
        (self.eval)(x, y)
    }

    fn check_orders(&self, ax: usize, by: usize) -> Result<()> {
        if ax > self.x_order || by > self.y_order {
            return Err(precondition(format!(
                "kernel '{}' declares derivatives up to ({}, {}) but ({ax}, {by}) are needed",
                self.name, self.x_order, self.y_order
            )));
        }
        Ok(())
    }

    /// `D_x^alpha D_y^beta K(x, y)`.
    pub fn deriv(&self, alpha: &[usize], beta: &[usize], x: &[f64], y: &[f64]) -> Result<Complex64> {
        if alpha.len() != self.n || beta.len() != self.n || x.len() != self.n || y.len() != self.n {
            return Err(Error::Dimension(format!("kernel '{}' lives in n = {}", self.name, self.n)));
        }
        self.check_orders(alpha.iter().sum(), beta.iter().sum())?;
        Ok(self.deriv_unchecked(alpha, beta, x, y))
    }

    fn deriv_unchecked(&self, alpha: &[usize], beta: &[usize], x: &[f64], y: &[f64]) -> Complex64 {
        if alpha.iter().chain(beta).all(|&k| k == 0) {
            return self.eval(x, y);
        }
        if let Some(d) = &self.closed {
            return d(alpha, beta, x, y);
        }
        let n = self.n;
        let k: usize = alpha.iter().chain(beta).sum();
        let h = relative_step(self.fd_step, k) * norm(&sub(x, y));
        let z: Vec<f64> = x.iter().chain(y).copied().collect();
        let orders: Vec<usize> = alpha.iter().chain(beta).copied().collect();
        let f = |z: &[f64]| self.eval(&z[..n], &z[n..]);
        central_difference(&f, &z, &orders, &vec![h; 2 * n])
    }
}

/// Sampling plan for kernel checks: shells `|x - y| = 2^k`, the same scaled
/// configuration on every shell, and increments of relative size `offsets`.
#[derive(Clone, Debug, Serialize)]
pub struct ShellGeometry {
    pub min_exp: i32,
    pub max_exp: i32,
    pub directions: usize,
    pub offsets: Vec<f64>,
    pub offset_directions: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for ShellGeometry {
    fn default() -> Self {
        Self {
            min_exp: -7,
            max_exp: 7,
            directions: 64,
            offsets: (0..7).map(|i| 0.49 * 0.5f64.powi(i)).collect(),
            offset_directions: 4,
            tol: 0.02,
            seed: 0,
        }
    }
}

impl ShellGeometry {
    pub fn decades(&self) -> f64 {
        (self.max_exp - self.min_exp) as f64 * 2f64.log10()
    }

    fn validate(&self) -> Result<()> {
        if self.decades() < 4.0 - 1e-12 {
            return Err(precondition(format!("shells 2^{}..2^{} span {:.2} decades, at least 4 are needed", self.min_exp, self.max_exp, self.decades())));
        }
        if self.offsets.len() < 2 || self.offsets.iter().any(|&f| !(f > 0.0 && f < 0.5)) {
            return Err(precondition("need at least two offsets in (0, 1/2)"));
        }
        if self.directions == 0 || self.offset_directions == 0 {
            return Err(precondition("need at least one direction"));
        }
        Ok(())
    }

    fn radii(&self) -> Vec<f64> {
        (self.min_exp..=self.max_exp).map(|k| 2f64.powi(k)).collect()
    }

    /// Unit-scale configurations `(y, theta, increment directions)`.
    fn configurations(&self, n: usize) -> Vec<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
        let mut r = rng::stream(self.seed, 0);
        (0..self.directions)
            .map(|_| {
                let theta = rng::unit_real(&mut r, n);
                let y: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut r, -1.0..1.0)).collect();
                let mut dirs = vec![theta.clone(), theta.iter().map(|t| -t).collect()];
                while dirs.len() < 2 * self.offset_directions.max(1) {
                    let w = rng::unit_real(&mut r, n);
                    dirs.push(w.iter().map(|t| -t).collect());
                    dirs.push(w);
                }
                (y, theta, dirs)
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Option<Vec<f64>>,
    pub v: Option<Vec<f64>>,
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ShellConstant {
    pub radius: f64,
    pub constant: f64,
}

/// Fitted constant of one condition.
///
/// `drift` is `max/min - 1` over shells, `end_growth` compares the outermost
/// shells with those three steps inward and `refinement_growth` compares the
/// two smallest increments; growth above the tolerance means the bound fails.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionFit {
    pub name: String,
    pub constant: f64,
    pub shells: Vec<ShellConstant>,
    pub drift: f64,
    pub end_growth: f64,
    pub refinement_growth: f64,
    pub witness: Option<Witness>,
    pub pass: bool,
}

fn growth(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else if b == 0.0 {
        f64::INFINITY
    } else {
        a / b - 1.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Size,
    XDiff { hold: f64 },
    YDiff { hold: f64 },
    Mixed { hold_u: f64, hold_v: f64 },
}

struct Condition {
    name: String,
    shape: Shape,
    /// `(alpha, beta)` pairs and the power `P` with bounds `C |x - y|^{-P}` times increments.
    combos: Vec<(Vec<usize>, Vec<usize>)>,
    decay: f64,
}

#[derive(Clone)]
struct Acc {
    sup: f64,
    per_offset: Vec<f64>,
    witness: Option<Witness>,
}

impl Acc {
    fn new(k: usize) -> Self {
        Self { sup: 0.0, per_offset: vec![0.0; k], witness: None }
    }

    fn push(&mut self, ratio: f64, slot: Option<usize>, w: impl FnOnce() -> Witness) {
        let ratio = if ratio.is_nan() { f64::INFINITY } else { ratio };
        if let Some(i) = slot {
            self.per_offset[i] = self.per_offset[i].max(ratio);
        }
        if ratio > self.sup || self.witness.is_none() {
            self.sup = self.sup.max(ratio);
            let mut wit = w();
            wit.ratio = ratio;
            self.witness = Some(wit);
        }
    }
}

fn run_condition(k: &Kernel, c: &Condition, geom: &ShellGeometry) -> ConditionFit {
    let n = k.n;
    let configs = geom.configurations(n);
    let radii = geom.radii();
    let per_shell: Vec<Acc> = radii
        .par_iter()
        .map(|&r| {
            let mut acc = Acc::new(geom.offsets.len());
            for (y0, theta, dirs) in &configs {
                let y: Vec<f64> = y0.iter().map(|t| t * r).collect();
                let x: Vec<f64> = y.iter().zip(theta).map(|(a, t)| a + r * t).collect();
                let dist = norm(&sub(&x, &y));
                for (alpha, beta) in &c.combos {
                    let d = |x: &[f64], y: &[f64]| k.deriv_unchecked(alpha, beta, x, y);
                    let base = d(&x, &y);
                    let wit = |u: Option<Vec<f64>>, v: Option<Vec<f64>>| Witness {
                        x: x.clone(),
                        y: y.clone(),
                        u,
                        v,
                        alpha: alpha.clone(),
                        beta: beta.clone(),
                        ratio: 0.0,
                    };
                    match c.shape {
                        Shape::Size => acc.push(base.norm() * dist.powf(c.decay), None, || wit(None, None)),
                        Shape::XDiff { hold } | Shape::YDiff { hold } => {
                            let on_x = matches!(c.shape, Shape::XDiff { .. });
                            for (i, &f) in geom.offsets.iter().enumerate() {
                                for w in dirs {
                                    let h: Vec<f64> = w.iter().map(|t| t * f * dist).collect();
                                    let moved = if on_x { d(&add(&x, &h), &y) } else { d(&x, &add(&y, &h)) };
                                    let ratio = (base - moved).norm() * dist.powf(c.decay) / norm(&h).powf(hold);
                                    acc.push(ratio, Some(i), || if on_x { wit(Some(h.clone()), None) } else { wit(None, Some(h.clone())) });
                                }
                            }
                        }
                        Shape::Mixed { hold_u, hold_v } => {
                            for (i, &f) in geom.offsets.iter().enumerate() {
                                for (a, wu) in dirs.iter().enumerate() {
                                    let wv = &dirs[(a + 2) % dirs.len()];
                                    let u: Vec<f64> = wu.iter().map(|t| t * f * dist / 2.0).collect();
                                    let v: Vec<f64> = wv.iter().map(|t| t * f * dist / 2.0).collect();
                                    let xu = add(&x, &u);
                                    let yv = add(&y, &v);
                                    let dd = base - d(&xu, &y) - d(&x, &yv) + d(&xu, &yv);
                                    let ratio = dd.norm() * dist.powf(c.decay) / (norm(&u).powf(hold_u) * norm(&v).powf(hold_v));
                                    acc.push(ratio, Some(i), || wit(Some(u.clone()), Some(v.clone())));
                                }
                            }
                        }
                    }
                }
            }
            acc
        })
        .collect();

    let shells: Vec<ShellConstant> = radii.iter().zip(&per_shell).map(|(&radius, a)| ShellConstant { radius, constant: a.sup }).collect();
    let cs: Vec<f64> = shells.iter().map(|s| s.constant).collect();
    let constant = cs.iter().copied().fold(0.0, f64::max);
    let min = cs.iter().copied().fold(f64::INFINITY, f64::min);
    let drift = growth(constant, min);
    let m = cs.len();
    let end_growth = if m >= 4 { growth(cs[0], cs[3]).max(growth(cs[m - 1], cs[m - 4])) } else { 0.0 };
    let refinement_growth = if matches!(c.shape, Shape::Size) {
        0.0
    } else {
        let k = geom.offsets.len();
        let mut worst = 0.0f64;
        for a in &per_shell {
            worst = worst.max(growth(a.per_offset[k - 1], a.per_offset[k - 2]));
        }
        worst
    };
    let witness = per_shell
        .iter()
        .filter_map(|a| a.witness.clone())
        .max_by(|a, b| a.ratio.total_cmp(&b.ratio));
    let pass = constant.is_finite() && end_growth <= geom.tol && refinement_growth <= geom.tol;
    ConditionFit { name: c.name.clone(), constant, shells, drift, end_growth, refinement_growth, witness, pass }
}

/// `T in CZK(E; F)` falls into one of these cases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Factorization {
    /// `E <= 0` and `F <= 0`: only the size bound remains.
    SizeOnly,
    /// `F <= 0 < E`: `T in CZO(E)` only.
    CzoEOnly,
    /// `E <= 0 < F`: `T* in CZO(F)` only.
    AdjointFOnly,
    /// `0 < F < min(E, 1)`, or `0 < E < min(F, 1)` with `sigma = 0`.
    Factorizes,
    /// `sigma = 1` and `F > E > 0`: the mixed difference condition is active.
    MixedRequired,
    /// `E, F > 0` outside the cases above.
    General,
}

impl fmt::Display for Factorization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Factorization::SizeOnly => "size bound only",
            Factorization::CzoEOnly => "T in CZO(E) only",
            Factorization::AdjointFOnly => "T* in CZO(F) only",
            Factorization::Factorizes => "factorizes into T in CZO(E) and T* in CZO(F)",
            Factorization::MixedRequired => "mixed-required",
            Factorization::General => "general",
        })
    }
}

pub fn classify_factorization(e: f64, f: f64, sigma: u8) -> Factorization {
    match (e > 0.0, f > 0.0) {
        (false, false) => Factorization::SizeOnly,
        (true, false) => Factorization::CzoEOnly,
        (false, true) => Factorization::AdjointFOnly,
        (true, true) => {
            if sigma >= 1 && f > e {
                Factorization::MixedRequired
            } else if f < e.min(1.0) || (sigma == 0 && e < f.min(1.0)) {
                Factorization::Factorizes
            } else {
                Factorization::General
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CzkReport {
    pub kernel: String,
    pub e: f64,
    pub f: f64,
    pub sigma: u8,
    pub factorization: Factorization,
    pub decades: f64,
    pub conditions: Vec<ConditionFit>,
    pub pass: bool,
}

impl CzkReport {
    pub fn condition(&self, prefix: &str) -> Vec<&ConditionFit> {
        self.conditions.iter().filter(|c| c.name.starts_with(prefix)).collect()
    }

    /// Largest shell drift over all conditions.
    pub fn max_drift(&self) -> f64 {
        self.conditions.iter().map(|c| c.drift).fold(0.0, f64::max)
    }
}

fn combos(n: usize, a: usize, b: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut out = Vec::new();
    for al in exact_indices(n, a) {
        for be in exact_indices(n, b) {
            out.push((al.clone(), be));
        }
    }
    out
}

/// Fit the constants of the size, `x`-, `y`- and (for `sigma = 1`, `F > E > 0`)
/// mixed difference conditions over the shells of `geom`.
pub fn czk_check(k: &Kernel, e: f64, f: f64, sigma: u8, geom: &ShellGeometry) -> Result<CzkReport> {
    geom.validate()?;
    let n = k.n;
    let nf = n as f64;
    let top_x = strict_floor(e);
    let a0 = top_x.max(0) as usize;
    let mut conds = Vec::new();
    let mut need_y = 0usize;
    for a in 0..=a0 {
        conds.push(Condition { name: format!("CZK0 |alpha|={a}"), shape: Shape::Size, combos: combos(n, a, 0), decay: nf + a as f64 });
    }
    if top_x >= 0 {
        let a = top_x as usize;
        conds.push(Condition { name: format!("CZKx |alpha|={a}"), shape: Shape::XDiff { hold: e - a as f64 }, combos: combos(n, a, 0), decay: nf + e });
    }
    for a in 0..=a0 {
        let b = strict_floor(f - a as f64);
        if b < 0 {
            continue;
        }
        let b = b as usize;
        need_y = need_y.max(b);
        conds.push(Condition {
            name: format!("CZKy |alpha|={a} |beta|={b}"),
            shape: Shape::YDiff { hold: strict_frac(f - a as f64) },
            combos: combos(n, a, b),
            decay: nf + f,
        });
    }
    if sigma >= 1 && f > e && e > 0.0 {
        let a = top_x as usize;
        let b = strict_floor(f - e) as usize;
        need_y = need_y.max(b);
        conds.push(Condition {
            name: format!("CZKxy |alpha|={a} |beta|={b}"),
            shape: Shape::Mixed { hold_u: strict_frac(e), hold_v: strict_frac(f - e) },
            combos: combos(n, a, b),
            decay: nf + f,
        });
    }
    k.check_orders(a0, need_y)?;
    let conditions: Vec<ConditionFit> = conds.iter().map(|c| run_condition(k, c, geom)).collect();
    let pass = conditions.iter().all(|c| c.pass);
    Ok(CzkReport {
        kernel: k.name.clone(),
        e,
        f,
        sigma,
        factorization: classify_factorization(e, f, sigma),
        decades: geom.decades(),
        conditions,
        pass,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct IntermediateReport {
    pub kernel: String,
    pub f: f64,
    pub orders: Vec<ConditionFit>,
    /// Smallest `|beta|` whose bound fails.
    pub failing_order: Option<usize>,
    pub pass: bool,
}

/// Sample `|D_y^beta K(x, y)| |x - y|^{n + |beta|}` for `|beta| <= strict_floor(F)`.
pub fn intermediate_derivative_check(k: &Kernel, f: f64, geom: &ShellGeometry) -> Result<IntermediateReport> {
    geom.validate()?;
    let top = strict_floor(f);
    if top >= 0 {
        k.check_orders(0, top as usize)?;
    }
    let n = k.n;
    let orders: Vec<ConditionFit> = (0..=top.max(-1))
        .filter(|&b| b >= 0)
        .map(|b| {
            let b = b as usize;
            let c = Condition { name: format!("|beta|={b}"), shape: Shape::Size, combos: combos(n, 0, b), decay: n as f64 + b as f64 };
            run_condition(k, &c, geom)
        })
        .collect();
    let failing_order = orders.iter().position(|c| !c.pass);
    Ok(IntermediateReport { kernel: k.name.clone(), f, pass: failing_order.is_none(), orders, failing_order })
}

/// `(E, F, sigma)` of a kernel assumption.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CzkExponents {
    pub e: f64,
    pub f: f64,
    pub sigma: u8,
}

/// Trapezoid nodes on the support box of an atom.
struct AtomQuadrature {
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
    values: Vec<Complex64>,
    per_side: usize,
}

impl AtomQuadrature {
    fn build(atom: &MoleculeCandidate, per_side: usize) -> Result<Self> {
        let (lo, hi) = atom.support.clone().ok_or_else(|| precondition("far-field quadrature needs an atom with bounded support"))?;
        let n = lo.len();
        let count = (per_side + 1).pow(n as u32);
        let mut nodes = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        for flat in 0..count {
            let mut rem = flat;
            let mut pt = vec![0.0; n];
            let mut w = 1.0;
            for a in 0..n {
                let i = rem % (per_side + 1);
                rem /= per_side + 1;
                let h = (hi[a] - lo[a]) / per_side as f64;
                pt[a] = lo[a] + i as f64 * h;
                w *= if i == 0 || i == per_side { h / 2.0 } else { h };
            }
            nodes.push(pt);
            weights.push(w);
        }
        let values: Vec<Complex64> = nodes.par_iter().map(|y| atom.eval(y)).collect();
        Ok(Self { nodes, weights, values, per_side })
    }

    fn integrate(&self, g: impl Fn(&[f64]) -> Complex64 + Sync) -> (Complex64, f64) {
        let mut s = ZERO;
        let mut abs = 0.0;
        for ((y, w), a) in self.nodes.iter().zip(&self.weights).zip(&self.values) {
            if *a == ZERO {
                continue;
            }
            let t = g(y) * a * *w;
            s += t;
            abs += t.norm();
        }
        (s, abs)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FarFieldReport {
    pub alpha: Vec<usize>,
    pub taylor_order: i64,
    pub center: Vec<f64>,
    pub per_side: usize,
    pub points: Vec<Vec<f64>>,
    pub raw: Vec<Complex64>,
    pub subtracted: Vec<Complex64>,
    pub max_relative_disagreement: f64,
}

impl FarFieldReport {
    /// `decay_fit` of `|subtracted|` against the distance to the atom center.
    pub fn decay_fit(&self) -> Result<DecayFit> {
        let r: Vec<f64> = self.points.iter().map(|x| norm(&sub(x, &self.center))).collect();
        let v: Vec<f64> = self.subtracted.iter().map(|z| z.norm()).collect();
        decay_fit(&r, &v)
    }
}

fn taylor_terms(k: &Kernel, alpha: &[usize], order: i64, x: &[f64], c: &[f64]) -> Vec<(Vec<usize>, Complex64)> {
    if order < 0 {
        return Vec::new();
    }
    multi_indices(k.n, order as usize)
        .into_iter()
        .map(|g| {
            let fact: f64 = g.iter().map(|&t| factorial(t)).product();
            let d = k.deriv_unchecked(alpha, &g, x, c) / fact;
            (g, d)
        })
        .collect()
}

fn ta_at(k: &Kernel, q: &AtomQuadrature, alpha: &[usize], taylor: &[(Vec<usize>, Complex64)], x: &[f64], c: &[f64]) -> (Complex64, Complex64, f64) {
    let zero_beta = vec![0; k.n];
    let (raw, abs) = q.integrate(|y| k.deriv_unchecked(alpha, &zero_beta, x, y));
    let (subtracted, _) = q.integrate(|y| {
        let mut t = k.deriv_unchecked(alpha, &zero_beta, x, y);
        for (g, d) in taylor {
            let mono: f64 = g.iter().zip(y).zip(c).map(|((&e, yi), ci)| (yi - ci).powi(e as i32)).product();
            t -= d * mono;
        }
        t
    });
    (raw, subtracted, abs)
}

/// Quadrature of `int D_x^alpha K(x, y) a(y) dy` at far-field points, raw and
/// with the Taylor polynomial of order `strict_floor(F - |alpha|)` around the
/// atom center subtracted.
///
/// Points must satisfy `|x - c_Q| > 4 sqrt(n) l(Q)`. The trapezoid rule on the
/// support box is refined until the value at the nearest point settles; a
/// relative disagreement above 1% between the two forms is an error.
pub fn apply_to_atom_farfield(k: &Kernel, atom: &MoleculeCandidate, alpha: &[usize], exps: CzkExponents, points: &[Vec<f64>]) -> Result<FarFieldReport> {
    let n = k.n;
    if atom.dim() != n || alpha.len() != n || points.iter().any(|x| x.len() != n) {
        return Err(Error::Dimension("kernel, atom, multi-index and points must share n".into()));
    }
    let a_abs: usize = alpha.iter().sum();
    if a_abs as i64 > strict_floor(exps.e).max(0) {
        return Err(precondition(format!("|alpha| = {a_abs} exceeds strict_floor(E)_+ for E = {}", exps.e)));
    }
    let c = atom.cube.center();
    let radius = 4.0 * (n as f64).sqrt() * atom.cube.side();
    if let Some(x) = points.iter().find(|x| norm(&sub(x, &c)) <= radius) {
        return Err(precondition(format!("point {x:?} is within 4 sqrt(n) l(Q) = {radius} of the atom center")));
    }
    if points.is_empty() {
        return Err(precondition("no far-field points"));
    }
    let order = strict_floor(exps.f - a_abs as f64);
    k.check_orders(a_abs, order.max(0) as usize)?;

    let nearest = points.iter().min_by(|a, b| norm(&sub(a, &c)).total_cmp(&norm(&sub(b, &c)))).unwrap();
    let taylor_near = taylor_terms(k, alpha, order, nearest, &c);
    let cap = match n {
        1 => 1 << 16,
        2 => 1 << 9,
        _ => 1 << 6,
    };
    let mut per_side = 32;
    let mut q = AtomQuadrature::build(atom, per_side)?;
    let mut prev = ta_at(k, &q, alpha, &taylor_near, nearest, &c);
    loop {
        if per_side * 2 > cap {
            return Err(Error::Quadrature(format!("far-field quadrature did not settle with {per_side} points per side")));
        }
        per_side *= 2;
        q = AtomQuadrature::build(atom, per_side)?;
        let cur = ta_at(k, &q, alpha, &taylor_near, nearest, &c);
        let change = (cur.1 - prev.1).norm();
        prev = cur;
        if change <= 1e-13 * prev.2.max(f64::MIN_POSITIVE) {
            break;
        }
    }

    let results: Vec<(Complex64, Complex64, f64)> = points
        .par_iter()
        .map(|x| {
            let taylor = taylor_terms(k, alpha, order, x, &c);
            ta_at(k, &q, alpha, &taylor, x, &c)
        })
        .collect();
    let mut worst = 0.0f64;
    for (raw, s, abs) in &results {
        let scale = s.norm().max(raw.norm()).max(1e-12 * abs);
        if scale > 0.0 {
            worst = worst.max((raw - s).norm() / scale);
        }
    }
    if worst > 1e-2 {
        return Err(Error::Quadrature(format!(
            "raw and Taylor-subtracted far field disagree by {worst:.3e}; the atom lacks moments or resolution"
        )));
    }
    Ok(FarFieldReport {
        alpha: alpha.to_vec(),
        taylor_order: order,
        center: c,
        per_side: q.per_side,
        points: points.to_vec(),
        raw: results.iter().map(|r| r.0).collect(),
        subtracted: results.iter().map(|r| r.1).collect(),
        max_relative_disagreement: worst,
    })
}

/// Least-squares fit `ln|v| = intercept + slope ln r`.
#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub decades: f64,
    pub max_residual: f64,
    pub points: usize,
}

impl DecayFit {
    /// `|slope - target|`.
    pub fn deviation(&self, target: f64) -> f64 {
        (self.slope - target).abs()
    }

    pub fn predict(&self, r: f64) -> f64 {
        (self.intercept + self.slope * r.ln()).exp()
    }
}

pub fn decay_fit(radii: &[f64], values: &[f64]) -> Result<DecayFit> {
    if radii.len() != values.len() || radii.len() < 3 {
        return Err(precondition("decay fit needs at least three (radius, value) pairs"));
    }
    if radii.iter().chain(values).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Numerical("decay fit needs positive finite radii and values".into()));
    }
    let lo = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = radii.iter().copied().fold(0.0, f64::max);
    let decades = (hi / lo).log10();
    if decades < 3.0 - 1e-9 {
        return Err(precondition(format!("decay fit needs 3 decades of |x|, got {decades:.2}")));
    }
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).abs()).fold(0.0, f64::max);
    Ok(DecayFit { slope, intercept, decades, max_residual, points: radii.len() })
}

#[derive(Clone, Debug, Serialize)]
pub struct TaMoment {
    pub gamma: Vec<usize>,
    pub value: Complex64,
    /// `int |(x - c)^gamma Ta(x)| dx` over the same domain.
    pub scale: f64,
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Bound for `|x - c| > outer_radius` from the decay fit.
    pub tail_bound: f64,
    pub nodes: usize,
}

/// `int (x - c)^gamma Ta(x) dx` over `inner < |x - c| < outer` (`n <= 2`),
/// composite Simpson in `ln |x - c|` and, for `n = 2`, the trapezoid rule in angle.
pub fn moment_of_ta(
    k: &Kernel,
    atom: &MoleculeCandidate,
    gamma: &[usize],
    exps: CzkExponents,
    fit: &DecayFit,
    inner_radius: f64,
    outer_radius: f64,
) -> Result<TaMoment> {
    let n = k.n;
    if n > 2 || gamma.len() != n {
        return Err(Error::Dimension("moments of Ta are computed for n <= 2".into()));
    }
    let g_abs: usize = gamma.iter().sum();
    let rate = -fit.slope;
    if rate <= (g_abs + n) as f64 {
        return Err(precondition(format!(
            "decay exponent {rate:.3} does not exceed |gamma| + n = {}; the moment is not integrable",
            g_abs + n
        )));
    }
    if !(outer_radius > inner_radius) {
        return Err(precondition("outer radius must exceed inner radius"));
    }
    let c = atom.cube.center();
    let decades = (outer_radius / inner_radius).log10();
    let panels = ((decades * 48.0).ceil() as usize).max(8) * 2;
    let dt = (outer_radius / inner_radius).ln() / panels as f64;
    let angles = if n == 2 { 64 } else { 2 };
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for i in 0..=panels {
        let t = inner_radius.ln() + i as f64 * dt;
        let r = t.exp();
        let simpson = if i == 0 || i == panels { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let jac = r.powi(n as i32) * dt / 3.0 * simpson;
        for a in 0..angles {
            let (dir, w) = if n == 1 {
                (vec![if a == 0 { 1.0 } else { -1.0 }], 1.0)
            } else {
                let th = 2.0 * std::f64::consts::PI * a as f64 / angles as f64;
                (vec![th.cos(), th.sin()], 2.0 * std::f64::consts::PI / angles as f64)
            };
            points.push(c.iter().zip(&dir).map(|(ci, d)| ci + r * d).collect::<Vec<f64>>());
            weights.push(jac * w);
        }
    }
    let alpha = vec![0; n];
    let far = apply_to_atom_farfield(k, atom, &alpha, exps, &points)?;
    let mut value = ZERO;
    let mut scale = 0.0;
    for ((x, ta), w) in points.iter().zip(&far.subtracted).zip(&weights) {
        let mono: f64 = gamma.iter().zip(x).zip(&c).map(|((&e, xi), ci)| (xi - ci).powi(e as i32)).product();
        value += ta * (mono * w);
        scale += (ta * mono).norm() * w;
    }
    let excess = rate - (g_abs + n) as f64;
    let sphere = if n == 1 { 2.0 } else { 2.0 * std::f64::consts::PI };
    let tail_bound = sphere * fit.predict(outer_radius) * outer_radius.powi((g_abs + n) as i32) / excess;
    Ok(TaMoment { gamma: gamma.to_vec(), value, scale, inner_radius, outer_radius, tail_bound, nodes: points.len() })
}

/// Which branch of the conversion applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixedCase {
    /// `frac(J) >= frac(s)`.
    Aligned,
    /// `frac(J) < frac(s)`.
    Carry,
}

/// Mixed difference exponents `|u|^{s* + eps} |v|^{(J - s)* + eta} |x - y|^{-J - eps - eta}`
/// for `|alpha| = floor(s)`, `|beta| = floor(J - n - s)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixedExponents<T = f64> {
    pub case: MixedCase,
    pub kappa: Option<T>,
    pub epsilon: T,
    pub eta: T,
    pub alpha_order: T,
    pub beta_order: T,
    pub u_exponent: T,
    pub v_exponent: T,
    pub distance_exponent: T,
}

impl<T: Scalar> MixedExponents<T> {
    /// Homogeneity: `u + v - distance = -(n + |alpha| + |beta|)`.
    pub fn identity_holds(&self, n: usize) -> bool {
        self.u_exponent.clone() + self.v_exponent.clone() - self.distance_exponent.clone()
            == T::zero() - T::from_i64(n as i64) - self.alpha_order.clone() - self.beta_order.clone()
    }
}

fn frac<T: Scalar>(r: &T) -> T {
    r.clone() - Scalar::floor(r)
}

/// Convert the separate smoothness exponents `(delta, rho)` of the classical
/// assumptions (`J - n > s >= 0`) into mixed exponents `(eps, eta)`.
///
/// Aligned: `kappa = min(delta, rho)`, `eps = eta = (kappa - J*)/2`.
/// Carry: `eps = delta - s*`, `eta = (s* - J*)/2`.
pub fn legacy_to_mixed<T: Scalar>(s: &T, j: &T, delta: &T, rho: &T, n: usize) -> Result<MixedExponents<T>> {
    let nn = T::from_i64(n as i64);
    let two = T::from_i64(2);
    if !(j.clone() - nn.clone() > s.clone()) {
        return Err(precondition("J - n > s fails"));
    }
    if s.clone() < T::zero() {
        return Err(precondition("s >= 0 fails"));
    }
    let s_star = frac(s);
    let j_star = frac(j);
    if !(delta.clone() > T::max_of(s_star.clone(), j_star.clone())) {
        return Err(precondition("delta > max(s*, J*) fails"));
    }
    if !(rho.clone() > j_star.clone()) {
        return Err(precondition("rho > J* fails"));
    }
    let (case, kappa, epsilon, eta) = if j_star >= s_star {
        let kappa = T::min_of(delta.clone(), rho.clone());
        let half = (kappa.clone() - j_star.clone()) / two;
        (MixedCase::Aligned, Some(kappa), half.clone(), half)
    } else {
        (MixedCase::Carry, None, delta.clone() - s_star.clone(), (s_star.clone() - j_star.clone()) / two)
    };
    let js = j.clone() - s.clone();
    Ok(MixedExponents {
        case,
        kappa,
        alpha_order: Scalar::floor(s),
        beta_order: Scalar::floor(&(js.clone() - nn)),
        u_exponent: s_star + epsilon.clone(),
        v_exponent: frac(&js) + eta.clone(),
        distance_exponent: j.clone() + epsilon.clone() + eta.clone(),
        epsilon,
        eta,
    })
}

/// `(sigma, E, F, G, H)` of `T in CZO^sigma(E, F, G, H)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CzoParams {
    pub sigma: u8,
    pub e: f64,
    pub f: f64,
    pub g: f64,
    pub h: f64,
}

impl CzoParams {
    pub fn assignment(&self) -> [(&'static str, f64); 5] {
        [("sigma", self.sigma as f64), ("E", self.e), ("F", self.f), ("G", self.g), ("H", self.h)]
    }
}

/// Conditions under which `T in CZO^sigma(E, F, G, H)` maps regular atoms to
/// `(K, L, M, N)`-molecules.
pub fn czo_molecule_conditions(cz: &CzoParams, mp: &MoleculeParams, n: usize) -> Result<Evaluation> {
    let nf = n as f64;
    let fl_n = mp.n.floor().max(0.0);
    let fl_l = mp.l.floor();
    let set = ConstraintSet::new(
        "atoms to molecules",
        vec![
            Inequality::ge("sigma", if mp.n > 0.0 { 1.0 } else { 0.0 }, "1_(0,inf)(N)"),
            Inequality::ge("E", mp.n, "N"),
            Inequality::gt("E", fl_n, "floor(N)_+"),
            Inequality::ge("F", mp.k.max(mp.m) - nf, "max(K, M) - n"),
            Inequality::gt("F", fl_l, "floor(L)"),
            Inequality::ge("G", fl_n, "floor(N)_+"),
            Inequality::ge("H", fl_l, "floor(L)"),
        ],
    );
    set.evaluate_pairs(&cz.assignment())
}

/// Molecule targets `(K, L, M, N)` for `(J, s)`-molecules, chosen inside the
/// admissible intervals: `K`, `M` midway to `F + n`, `L = J - n - s` and `N`
/// midway between `s` and `min(strict_ceil(s), E)` (`N = 0` for `s < 0`).
pub fn js_molecule_targets(j: f64, s: f64, n: usize, cz: &CzoParams) -> Result<MoleculeParams> {
    let nf = n as f64;
    let s_minus = (-s).max(0.0);
    if !(cz.e > s.max(0.0)) {
        return Err(precondition("E > s_+ fails"));
    }
    if !(cz.f > j - nf + s_minus) {
        return Err(precondition("F > J - n + s_- fails"));
    }
    let k = (j + s_minus + cz.f + nf) / 2.0;
    let m = (j + cz.f + nf) / 2.0;
    let l = j - nf - s;
    let n_target = if s < 0.0 { 0.0 } else { (s + (s.floor() + 1.0).min(cz.e)) / 2.0 };
    Ok(MoleculeParams::new(k, l, m, n_target))
}

type SymbolFn = dyn Fn(&[f64], &[f64]) -> Complex64 + Send + Sync;
type SymbolDerivFn = dyn Fn(&[usize], &[usize], &[f64], &[f64]) -> Complex64 + Send + Sync;

/// A symbol `a(x, xi)` of order `u`; derivatives in closed form or by central
/// differences with steps `fd_step |xi|` in `xi` and `fd_step / |xi|` in `x`.
#[derive(Clone)]
pub struct SymbolS11u {
    pub name: String,
    pub n: usize,
    pub u: u32,
    pub x_independent: bool,
    pub x_order: usize,
    pub xi_order: usize,
    pub fd_step: f64,
    eval: Arc<SymbolFn>,
    closed: Option<Arc<SymbolDerivFn>>,
}

impl fmt::Debug for SymbolS11u {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymbolS11u").field("name", &self.name).field("n", &self.n).field("u", &self.u).finish()
    }
}

impl SymbolS11u {
    pub fn new(
        name: &str,
        n: usize,
        u: u32,
        x_independent: bool,
        f: impl Fn(&[f64], &[f64]) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), n, u, x_independent, x_order: 4, xi_order: 4, fd_step: 1e-3, eval: Arc::new(f), closed: None }
    }

    pub fn with_derivatives(mut self, d: impl Fn(&[usize], &[usize], &[f64], &[f64]) -> Complex64 + Send + Sync + 'static) -> Self {
        self.closed = Some(Arc::new(d));
        self
    }

    pub fn identity(n: usize) -> Self {
        Self::new("identity", n, 0, true, |_, _| Complex64::new(1.0, 0.0)).with_derivatives(|a, b, _, _| {
            if a.iter().chain(b).all(|&k| k == 0) {
                Complex64::new(1.0, 0.0)
            } else {
                ZERO
            }
        })
    }

    /// `i xi_axis`, the symbol of `D_axis`.
    pub fn derivative(n: usize, axis: usize) -> Self {
        Self::new("derivative", n, 1, true, move |_, xi| Complex64::new(0.0, xi[axis])).with_derivatives(move |a, b, _, xi| {
            let total: usize = a.iter().chain(b).sum();
            match total {
                0 => Complex64::new(0.0, xi[axis]),
                1 if b[axis] == 1 => Complex64::new(0.0, 1.0),
                _ => ZERO,
            }
        })
    }

    /// `|xi|^u`.
    pub fn abs_power(n: usize, u: u32) -> Self {
        Self::new("abs-power", n, u, true, move |_, xi| Complex64::new(norm(xi).powi(u as i32), 0.0))
    }

    /// `(1 + |xi|^2)^{u/2}`, not homogeneous near `xi = 0`.
    pub fn bracket(n: usize, u: u32) -> Self {
        Self::new("bracket", n, u, true, move |_, xi| Complex64::new((1.0 + norm(xi).powi(2)).powf(u as f64 / 2.0), 0.0))
    }

    /// Registered symbols: `identity`, `derivative` (axis 0), `abs-power`, `bracket`.
    pub fn plugin(name: &str, n: usize, u: u32) -> Result<Self> {
        match name {
            "identity" => Ok(Self::identity(n)),
            "derivative" => Ok(Self::derivative(n, 0)),
            "abs-power" => Ok(Self::abs_power(n, u)),
            "bracket" => Ok(Self::bracket(n, u)),
            _ => Err(Error::Parse(format!("unknown symbol '{name}' (expected identity, derivative, abs-power or bracket)"))),
        }
    }

    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Complex64 {
        (self.eval)(x, xi)
    }

    /// `D_x^alpha D_xi^beta a(x, xi)`.
    pub fn deriv(&self, alpha: &[usize], beta: &[usize], x: &[f64], xi: &[f64]) -> Result<Complex64> {
        let (ax, bx): (usize, usize) = (alpha.iter().sum(), beta.iter().sum());
        if ax > self.x_order || bx > self.xi_order {
            return Err(precondition(format!(
                "symbol '{}' declares derivatives up to ({}, {}) but ({ax}, {bx}) are needed",
                self.name, self.x_order, self.xi_order
            )));
        }
        if self.x_independent && ax > 0 {
            return Ok(ZERO);
        }
        if ax + bx == 0 {
            return Ok(self.eval(x, xi));
        }
        if let Some(d) = &self.closed {
            return Ok(d(alpha, beta, x, xi));
        }
        let n = self.n;
        let r = norm(xi);
        let rel = relative_step(self.fd_step, ax + bx);
        let steps: Vec<f64> = (0..2 * n).map(|a| if a < n { rel / r } else { rel * r }).collect();
        let z: Vec<f64> = x.iter().chain(xi).copied().collect();
        let orders: Vec<usize> = alpha.iter().chain(beta).copied().collect();
        let f = |z: &[f64]| self.eval(&z[..n], &z[n..]);
        Ok(central_difference(&f, &z, &orders, &steps))
    }
}

fn fft_axis(values: &mut [Complex64], extents: &[usize], axis: usize, inverse: bool, planner: &mut FftPlanner<f64>) {
    let len = extents[axis];
    let stride: usize = extents[axis + 1..].iter().product();
    let outer: usize = extents[..axis].iter().product();
    let fft = if inverse { planner.plan_fft_inverse(len) } else { planner.plan_fft_forward(len) };
    let mut line = vec![ZERO; len];
    for o in 0..outer {
        for s in 0..stride {
            let base = o * len * stride + s;
            for (i, v) in line.iter_mut().enumerate() {
                *v = values[base + i * stride];
            }
            fft.process(&mut line);
            for (i, v) in line.iter().enumerate() {
                values[base + i * stride] = *v;
            }
        }
    }
}

fn fft_nd(values: &mut [Complex64], extents: &[usize], inverse: bool) {
    let mut planner = FftPlanner::new();
    for a in 0..extents.len() {
        fft_axis(values, extents, a, inverse, &mut planner);
    }
    if inverse {
        let total = values.len() as f64;
        values.iter_mut().for_each(|v| *v /= total);
    }
}

fn signed_mode(i: usize, len: usize) -> i64 {
    if i < len.div_ceil(2) {
        i as i64
    } else {
        i as i64 - len as i64
    }
}

/// Spectral energy fraction above `N/4` on any axis.
pub const ALIASING_TOL: f64 = 1e-8;

/// `a(x, D) f(x) = int a(x, xi) f^(xi) e^{i x xi} d xi` with `f^(xi) = (2 pi)^{-n} int f e^{-i x xi}`,
/// on the periodic grid of `f` with frequencies `2 pi k / (N h)`.
///
/// The zero mode uses the evaluator at `xi = 0`. Symbols that depend on `x`
/// are summed directly per output point, so grids are limited to `2^16` points.
pub fn apply_pdo(a: &SymbolS11u, f: &FunctionSample) -> Result<FunctionSample> {
    if a.n != f.n {
        return Err(Error::Dimension(format!("symbol lives in n = {}, samples in n = {}", a.n, f.n)));
    }
    let count = f.count();
    if !a.x_independent && count > 1 << 16 {
        return Err(precondition("x-dependent symbols are applied on grids of at most 2^16 points"));
    }
    let n = f.n;
    let freqs: Vec<Vec<f64>> = (0..count)
        .map(|flat| {
            f.multi(flat)
                .iter()
                .zip(&f.extents)
                .map(|(&i, &len)| 2.0 * std::f64::consts::PI * signed_mode(i, len) as f64 / (len as f64 * f.spacing))
                .collect()
        })
        .collect();
    let high: Vec<bool> = (0..count)
        .map(|flat| f.multi(flat).iter().zip(&f.extents).any(|(&i, &len)| 4 * signed_mode(i, len).unsigned_abs() as usize > len))
        .collect();
    let mut out = vec![ZERO; count * f.m];
    for c in 0..f.m {
        let mut spec: Vec<Complex64> = (0..count).map(|i| f.values[i * f.m + c]).collect();
        fft_nd(&mut spec, &f.extents, false);
        let total: f64 = spec.iter().map(|z| z.norm_sqr()).sum();
        let above: f64 = spec.iter().zip(&high).filter(|(_, h)| **h).map(|(z, _)| z.norm_sqr()).sum();
        if total > 0.0 && above > ALIASING_TOL * total {
            return Err(precondition(format!(
                "component {c} has spectral energy fraction {:.2e} above N/4, over the aliasing tolerance {ALIASING_TOL:.0e}",
                above / total
            )));
        }
        let vals: Vec<Complex64> = if a.x_independent {
            let x0 = vec![0.0; n];
            let mut g: Vec<Complex64> = spec.iter().zip(&freqs).map(|(s, xi)| s * a.eval(&x0, xi)).collect();
            fft_nd(&mut g, &f.extents, true);
            g
        } else {
            let scale = 1.0 / count as f64;
            (0..count)
                .into_par_iter()
                .map(|j| {
                    let x = f.point(j);
                    let dx: Vec<f64> = x.iter().zip(&f.origin).map(|(a, o)| a - o).collect();
                    let mut s = ZERO;
                    for (k, xi) in freqs.iter().enumerate() {
                        let phase: f64 = dx.iter().zip(xi).map(|(a, b)| a * b).sum();
                        s += spec[k] * a.eval(&x, xi) * Complex64::from_polar(1.0, phase);
                    }
                    s * scale
                })
                .collect()
        };
        for (i, v) in vals.into_iter().enumerate() {
            out[i * f.m + c] = v;
        }
    }
    Ok(f.like(out))
}

/// Sampling plan for symbol checks: shells `|xi| = 2^k` with random directions
/// and random `x` in `[-x_extent, x_extent]^n`.
#[derive(Clone, Debug, Serialize)]
pub struct SymbolGeometry {
    pub min_exp: i32,
    pub max_exp: i32,
    pub directions: usize,
    pub x_samples: usize,
    pub x_extent: f64,
    pub tol: f64,
    pub seed: u64,
}

impl Default for SymbolGeometry {
    fn default() -> Self {
        Self { min_exp: -8, max_exp: 8, directions: 16, x_samples: 8, x_extent: 4.0, tol: 0.1, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SymbolRow {
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
    pub constant: f64,
    pub shells: Vec<ShellConstant>,
    pub end_growth: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SymbolReport {
    pub symbol: String,
    pub u: u32,
    pub rows: Vec<SymbolRow>,
    pub pass: bool,
}

/// Sampled `sup |xi|^{-u - |alpha| + |beta|} |D_x^alpha D_xi^beta a|` per shell
/// for `|alpha| <= max_alpha`, `|beta| <= max_beta`.
pub fn symbol_class_check(a: &SymbolS11u, max_alpha: usize, max_beta: usize, geom: &SymbolGeometry) -> Result<SymbolReport> {
    if max_alpha > a.x_order || max_beta > a.xi_order {
        return Err(precondition(format!(
            "symbol '{}' declares derivatives up to ({}, {}) but ({max_alpha}, {max_beta}) are requested",
            a.name, a.x_order, a.xi_order
        )));
    }
    let n = a.n;
    let mut r = rng::stream(geom.seed, 0);
    let dirs: Vec<Vec<f64>> = (0..geom.directions).map(|_| rng::unit_real(&mut r, n)).collect();
    let xs: Vec<Vec<f64>> = (0..geom.x_samples)
        .map(|_| (0..n).map(|_| rand::Rng::random_range(&mut r, -geom.x_extent..geom.x_extent)).collect())
        .collect();
    let mut rows = Vec::new();
    for alpha in multi_indices(n, max_alpha) {
        for beta in multi_indices(n, max_beta) {
            let weight = -(a.u as f64) - alpha.iter().sum::<usize>() as f64 + beta.iter().sum::<usize>() as f64;
            let shells: Vec<ShellConstant> = (geom.min_exp..=geom.max_exp)
                .into_par_iter()
                .map(|k| {
                    let rad = 2f64.powi(k);
                    let mut sup = 0.0f64;
                    for d in &dirs {
                        let xi: Vec<f64> = d.iter().map(|t| t * rad).collect();
                        for x in &xs {
                            let v = a.deriv(&alpha, &beta, x, &xi).map(|z| z.norm()).unwrap_or(f64::INFINITY);
                            sup = sup.max(rad.powf(weight) * v);
                        }
                    }
                    ShellConstant { radius: rad, constant: sup }
                })
                .collect();
            let cs: Vec<f64> = shells.iter().map(|s| s.constant).collect();
            let m = cs.len();
            let constant = cs.iter().copied().fold(0.0, f64::max);
            let end_growth = if m >= 4 { growth(cs[0], cs[3]).max(growth(cs[m - 1], cs[m - 4])) } else { 0.0 };
            let pass = constant.is_finite() && end_growth <= geom.tol;
            rows.push(SymbolRow { alpha: alpha.clone(), beta, constant, shells, end_growth, pass });
        }
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(SymbolReport { symbol: a.name.clone(), u: a.u, rows, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::DyadicCube;
    use crate::molecules::make_atom;
    use crate::params::{czo_conditions, derived_indices, is_js_molecule_params, SpaceParams};
    use crate::scalar::ratio;
    use num_rational::BigRational;
    use proptest::prelude::*;

    fn small_geom() -> ShellGeometry {
        ShellGeometry { directions: 8, offset_directions: 2, ..Default::default() }
    }

    #[test]
    fn hilbert_closed_form_matches_differences() {
        let k = Kernel::hilbert();
        let mut fd = k.clone();
        fd.closed = None;
        for (a, b) in [(0, 1), (1, 0), (1, 1), (2, 0), (0, 2)] {
            let x = [0.7];
            let y = [-0.4];
            let c = k.deriv(&[a], &[b], &x, &y).unwrap();
            let d = fd.deriv(&[a], &[b], &x, &y).unwrap();
            assert!((c - d).norm() < 1e-5 * c.norm(), "{a} {b}: {c} vs {d}");
        }
        // |D_x^a K| = a! |x - y|^{-1-a}
        let v = k.deriv(&[3], &[0], &[2.0], &[0.0]).unwrap();
        assert!((v.norm() - 6.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn riesz_differences_match_symbolic_first_and_second_derivatives() {
        let k = Kernel::riesz(2, 0).unwrap();
        let x = [0.9, -0.3];
        let y = [0.1, 0.4];
        let d = sub(&x, &y);
        let r2 = d[0] * d[0] + d[1] * d[1];
        // K = d0 r^{-3}; D_{x0} K = r^{-3} - 3 d0^2 r^{-5}
        let exact = r2.powf(-1.5) - 3.0 * d[0] * d[0] * r2.powf(-2.5);
        let got = k.deriv(&[1, 0], &[0, 0], &x, &y).unwrap().re;
        assert!((got - exact).abs() < 1e-5 * exact.abs());
        // D_{x1} K = -3 d0 d1 r^{-5}; D_{y1} D_{x1} K = 3 d0 r^{-5} - 15 d0 d1^2 r^{-7}
        let exact2 = 3.0 * d[0] * r2.powf(-2.5) - 15.0 * d[0] * d[1] * d[1] * r2.powf(-3.5);
        let got2 = k.deriv(&[0, 1], &[0, 1], &x, &y).unwrap().re;
        assert!((got2 - exact2).abs() < 1e-5 * exact2.abs(), "{got2} vs {exact2}");
    }

    #[test]
    fn hilbert_passes_with_stable_constants() {
        for (e, f) in [(0.5, 0.5), (1.5, 0.7), (0.4, 1.3)] {
            let rep = czk_check(&Kernel::hilbert(), e, f, 1, &small_geom()).unwrap();
            assert!(rep.pass, "{e} {f}: {:?}", rep.conditions.iter().filter(|c| !c.pass).collect::<Vec<_>>());
            assert!(rep.max_drift() < 0.02);
            assert!(rep.conditions.iter().all(|c| c.constant.is_finite() && c.constant > 0.0));
        }
        let size = czk_check(&Kernel::hilbert(), 0.5, 0.5, 0, &small_geom()).unwrap();
        assert!((size.condition("CZK0")[0].constant - 1.0).abs() < 1e-12);
    }

    #[test]
    fn riesz_passes_in_two_dimensions() {
        let rep = czk_check(&Kernel::riesz(2, 1).unwrap(), 1.5, 0.6, 1, &small_geom()).unwrap();
        assert!(rep.pass);
        assert!(rep.max_drift() < 0.02, "{}", rep.max_drift());
    }

    #[test]
    fn truncated_kernel_fails_at_the_shell() {
        let rep = czk_check(&Kernel::truncated(), 0.5, 0.5, 0, &small_geom()).unwrap();
        assert!(!rep.pass);
        let x = rep.condition("CZKx")[0];
        assert!(!x.pass);
        let w = x.witness.as_ref().unwrap();
        assert!((norm(&sub(&w.x, &w.y)) - 1.0).abs() < 1e-9, "{w:?}");
    }

    #[test]
    fn order_deficit_and_narrow_sampling_are_refused() {
        let k = Kernel::new("flat", 1, 0, 0, |x, y| Complex64::new(1.0 / (x[0] - y[0]), 0.0));
        assert!(czk_check(&k, 1.5, 0.5, 0, &small_geom()).is_err());
        let narrow = ShellGeometry { min_exp: -3, max_exp: 3, ..small_geom() };
        assert!(czk_check(&Kernel::hilbert(), 0.5, 0.5, 0, &narrow).is_err());
    }

    #[test]
    fn constants_are_dilation_invariant() {
        let k = Kernel::riesz(2, 0).unwrap();
        let a = czk_check(&k, 0.7, 0.4, 0, &small_geom()).unwrap();
        let b = czk_check(&k.dilated(3.0), 0.7, 0.4, 0, &small_geom()).unwrap();
        for (p, q) in a.conditions.iter().zip(&b.conditions) {
            assert!((p.constant / q.constant - 1.0).abs() < 0.02, "{}: {} vs {}", p.name, p.constant, q.constant);
        }
    }

    #[test]
    fn intermediate_bounds() {
        let rep = intermediate_derivative_check(&Kernel::hilbert(), 2.5, &small_geom()).unwrap();
        assert!(rep.pass);
        // |D_y^b K| |x - y|^{1+b} = b!
        for (b, c) in rep.orders.iter().enumerate() {
            assert!((c.constant - factorial(b)).abs() < 1e-9 * factorial(b));
        }
        let log = Kernel::new("log", 1, 2, 2, |x, y| {
            let d: f64 = x[0] - y[0];
            Complex64::new(d.abs().ln() / d, 0.0)
        });
        let rep = intermediate_derivative_check(&log, 1.5, &small_geom()).unwrap();
        assert_eq!(rep.failing_order, Some(0));
        // dilation leaves the constants unchanged
        let dil = intermediate_derivative_check(&Kernel::hilbert().dilated(0.25), 2.5, &small_geom()).unwrap();
        for (b, c) in dil.orders.iter().enumerate() {
            assert!((c.constant / factorial(b) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn factorization_cases() {
        assert_eq!(classify_factorization(1.5, -1.0, 0), Factorization::CzoEOnly);
        assert_eq!(classify_factorization(0.4, 0.9, 1), Factorization::MixedRequired);
        assert_eq!(classify_factorization(0.9, 0.4, 1), Factorization::Factorizes);
        assert_eq!(classify_factorization(0.4, 0.9, 0), Factorization::Factorizes);
        assert_eq!(classify_factorization(-1.0, 0.5, 0), Factorization::AdjointFOnly);
        assert_eq!(classify_factorization(0.0, 0.0, 1), Factorization::SizeOnly);
        assert_eq!(classify_factorization(2.0, 1.5, 0), Factorization::General);
    }

    fn unit_atom(l: f64) -> MoleculeCandidate {
        make_atom(&DyadicCube::unit(1), 1.0, l, 2.0).unwrap()
    }

    #[test]
    fn odd_kernel_on_even_atom_is_antisymmetric() {
        let a = unit_atom(1.0);
        let pts: Vec<Vec<f64>> = [5.0, 8.0, 20.0].iter().flat_map(|t| [vec![0.5 + t], vec![0.5 - t]]).collect();
        let exps = CzkExponents { e: 0.5, f: 2.0, sigma: 0 };
        let rep = apply_to_atom_farfield(&Kernel::hilbert(), &a, &[0], exps, &pts).unwrap();
        for i in 0..3 {
            let (p, m) = (rep.raw[2 * i], rep.raw[2 * i + 1]);
            assert!((p + m).norm() < 1e-8 * p.norm().max(1e-300), "{p} {m}");
        }
    }

    #[test]
    fn raw_and_subtracted_agree_and_decay_fits() {
        let a = unit_atom(1.0);
        let exps = CzkExponents { e: 0.5, f: 2.0, sigma: 0 };
        let at10 = apply_to_atom_farfield(&Kernel::hilbert(), &a, &[0], exps, &[vec![10.5]]).unwrap();
        assert!(at10.max_relative_disagreement < 1e-6);
        let pts: Vec<Vec<f64>> = (0..16).map(|i| vec![0.5 + 10f64.powf(1.0 + 3.0 * i as f64 / 15.0)]).collect();
        let rep = apply_to_atom_farfield(&Kernel::hilbert(), &a, &[0], exps, &pts).unwrap();
        let fit = rep.decay_fit().unwrap();
        assert!(fit.deviation(-3.0) < 0.3, "{fit:?}");
        // denser points leave the slope in place
        let pts2: Vec<Vec<f64>> = (0..31).map(|i| vec![0.5 + 10f64.powf(1.0 + 3.0 * i as f64 / 30.0)]).collect();
        let fit2 = apply_to_atom_farfield(&Kernel::hilbert(), &a, &[0], exps, &pts2).unwrap().decay_fit().unwrap();
        assert!((fit.slope - fit2.slope).abs() < 0.05);
    }

    #[test]
    fn far_field_preconditions() {
        let a = unit_atom(1.0);
        let exps = CzkExponents { e: 0.5, f: 2.0, sigma: 0 };
        assert!(apply_to_atom_farfield(&Kernel::hilbert(), &a, &[0], exps, &[vec![2.0]]).is_err());
        assert!(apply_to_atom_farfield(&Kernel::hilbert(), &a, &[1], exps, &[vec![20.0]]).is_err());
    }

    #[test]
    fn exact_power_law_fit() {
        let r: Vec<f64> = (0..20).map(|i| 10f64.powf(i as f64 * 0.2)).collect();
        let v: Vec<f64> = r.iter().map(|x| 7.0 * x.powi(-3)).collect();
        let fit = decay_fit(&r, &v).unwrap();
        assert!(fit.deviation(-3.0) < 1e-3);
        assert!(decay_fit(&r[..10], &v[..10]).is_err());
    }

    #[test]
    fn moment_of_ta_symmetry_linearity_and_refusal() {
        let a = unit_atom(1.0);
        let k = Kernel::hilbert();
        let exps = CzkExponents { e: 0.5, f: 2.0, sigma: 0 };
        let pts: Vec<Vec<f64>> = (0..8).map(|i| vec![0.5 + 10f64.powf(1.0 + 3.0 * i as f64 / 7.0)]).collect();
        let fit = apply_to_atom_farfield(&k, &a, &[0], exps, &pts).unwrap().decay_fit().unwrap();
        let m = moment_of_ta(&k, &a, &[0], exps, &fit, 5.0, 1e3).unwrap();
        assert!(m.value.norm() <= 1e-4 * m.scale, "{m:?}");
        let m1 = moment_of_ta(&k, &a, &[1], exps, &fit, 5.0, 1e3).unwrap();
        let m2 = moment_of_ta(&k, &a.scaled(2.0), &[1], exps, &fit, 5.0, 1e3).unwrap();
        assert!((m2.value - m1.value * 2.0).norm() <= 1e-12 * m2.scale);
        assert!(moment_of_ta(&k, &a, &[3], exps, &fit, 5.0, 1e3).is_err());
    }

    #[test]
    fn legacy_conversion_cases() {
        let r = |a, b| ratio(a, b);
        // J* = s* = 1/2, delta = rho = J* + 2/5
        let out = legacy_to_mixed(&r(1, 2), &r(7, 2), &r(9, 10), &r(9, 10), 2).unwrap();
        assert_eq!(out.case, MixedCase::Aligned);
        assert_eq!(out.epsilon.clone() + out.eta.clone(), r(2, 5));
        assert!(out.identity_holds(2));
        // delta = s* exactly
        assert!(legacy_to_mixed(&r(3, 10), &r(7, 2), &r(3, 10), &r(9, 10), 2).is_err());
        let carry = legacy_to_mixed(&r(7, 10), &r(5, 2), &r(9, 10), &r(3, 5), 1).unwrap();
        assert_eq!(carry.case, MixedCase::Carry);
        assert_eq!(carry.epsilon, r(1, 5));
        assert!(carry.eta > r(0, 1) && carry.eta < r(1, 5));
        assert!(carry.identity_holds(1));
    }

    proptest! {
        #[test]
        fn legacy_identity_always_holds(s in 0i64..40, extra in 1i64..60, d in 1i64..20, rho in 1i64..20, n in 1usize..4) {
            let s = ratio(s, 10);
            let j: BigRational = s.clone() + ratio(n as i64, 1) + ratio(extra, 10);
            let sf = frac(&s);
            let jf = frac(&j);
            let delta = BigRational::max_of(sf, jf.clone()) + ratio(d, 20);
            let rho = jf + ratio(rho, 20);
            let out = legacy_to_mixed(&s, &j, &delta, &rho, n).unwrap();
            prop_assert!(out.identity_holds(n));
            prop_assert!(out.epsilon > ratio(0, 1) && out.eta > ratio(0, 1));
        }

        #[test]
        fn classification_is_a_partition(e in -3.0f64..3.0, f in -3.0f64..3.0, sigma in 0u8..2) {
            let c = classify_factorization(e, f, sigma);
            let mixed = sigma == 1 && f > e && e > 0.0;
            prop_assert_eq!(c == Factorization::MixedRequired, mixed);
        }
    }

    #[test]
    fn molecule_condition_lines() {
        let mp = MoleculeParams::new(3.0, 1.0, 3.0, 0.0);
        let cz = CzoParams { sigma: 0, e: 0.5, f: 2.5, g: 0.0, h: 1.0 };
        assert!(czo_molecule_conditions(&cz, &mp, 1).unwrap().holds);
        let mp2 = MoleculeParams::new(3.0, 1.0, 3.0, 2.0);
        let cz2 = CzoParams { sigma: 1, e: 2.0, f: 2.5, g: 2.0, h: 1.0 };
        let ev = czo_molecule_conditions(&cz2, &mp2, 1).unwrap();
        assert_eq!(ev.failing(), vec!["E > floor(N)_+".to_string()]);
    }

    #[test]
    fn t1_parameters_imply_molecule_conditions() {
        let mut r = rng::stream(5, 0);
        let mut checked = 0;
        while checked < 200 {
            use rand::Rng;
            let sp = SpaceParams::besov(r.random_range(-2.0..2.0), r.random_range(0.0..0.6), r.random_range(0.3..4.0), Some(1.0)).unwrap();
            let n = r.random_range(1..4usize);
            let Ok(di) = derived_indices(&sp, n, r.random_range(0.0..n as f64 * 0.9)) else { continue };
            let st = di.s_tilde;
            let cz = CzoParams {
                sigma: if st >= 0.0 { 1 } else { r.random_range(0..2) },
                e: st.max(0.0) + r.random_range(0.01..1.5),
                f: di.j_tilde - n as f64 + (-st).max(0.0) + r.random_range(0.01..1.5),
                g: st.floor().max(0.0) + r.random_range(0..2) as f64,
                h: (di.j_tilde - n as f64 - st).floor() + r.random_range(0..2) as f64,
            };
            assert!(czo_conditions(&di, n, false).holds(&cz.assignment()));
            let mp = js_molecule_targets(di.j_tilde, st, n, &cz).unwrap();
            assert!(is_js_molecule_params(&mp, &di.j_tilde, &st, n), "{mp:?}");
            let ev = czo_molecule_conditions(&cz, &mp, n).unwrap();
            assert!(ev.holds, "{:?} {:?} {:?}", cz, mp, ev.failing());
            checked += 1;
        }
    }

    fn gaussian_grid(len: usize, h: f64) -> FunctionSample {
        let origin = -(len as f64) * h / 2.0;
        FunctionSample::from_fn(1, vec![origin], h, vec![len], |x| vec![Complex64::new((-x[0] * x[0]).exp() * (1.0 + 0.3 * x[0]), 0.0)]).unwrap()
    }

    #[test]
    fn identity_and_derivative_symbols() {
        let f = gaussian_grid(256, 0.125);
        let same = apply_pdo(&SymbolS11u::identity(1), &f).unwrap();
        assert!(same.max_diff(&f) < 1e-10);
        let d = apply_pdo(&SymbolS11u::derivative(1, 0), &f).unwrap();
        let exact = FunctionSample::from_fn(1, f.origin.clone(), f.spacing, f.extents.clone(), |x| {
            let t = x[0];
            vec![Complex64::new((-t * t).exp() * (0.3 - 2.0 * t * (1.0 + 0.3 * t)), 0.0)]
        })
        .unwrap();
        assert!(d.max_diff(&exact) < 1e-6, "{}", d.max_diff(&exact));
        // the x-dependent path agrees with the multiplier path
        let mut slow = SymbolS11u::derivative(1, 0);
        slow.x_independent = false;
        assert!(apply_pdo(&slow, &f).unwrap().max_diff(&d) < 1e-10);
    }

    #[test]
    fn aliasing_is_refused() {
        let f = FunctionSample::from_fn(1, vec![0.0], 1.0, vec![64], |x| vec![Complex64::new((3.0 * x[0]).cos(), 0.0)]).unwrap();
        assert!(apply_pdo(&SymbolS11u::identity(1), &f).is_err());
    }

    #[test]
    fn symbol_classes() {
        let g = SymbolGeometry::default();
        let rep = symbol_class_check(&SymbolS11u::abs_power(2, 1), 1, 2, &g).unwrap();
        assert!(rep.pass, "{:?}", rep.rows.iter().filter(|r| !r.pass).collect::<Vec<_>>());
        for row in &rep.rows {
            if row.alpha.iter().sum::<usize>() > 0 {
                assert_eq!(row.constant, 0.0);
            }
        }
        let br = symbol_class_check(&SymbolS11u::bracket(1, 1), 0, 1, &g).unwrap();
        assert!(!br.pass);
        let first = &br.rows[0];
        assert!(first.shells[0].constant > first.shells[8].constant * 10.0);
        assert!(symbol_class_check(&SymbolS11u::abs_power(1, 1), 5, 0, &g).is_err());
    }
}
