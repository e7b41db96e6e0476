//! Molecule and atom validation on sampled candidates, the `(M, G, H)`
//! inner-product bound, and construction of smooth atoms.

use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dyadic::DyadicCube;
use crate::error::{precondition, Error, Result};
use crate::params::{molecule_param_sets, strict_ceil, strict_floor, DerivedIndices, Evaluation, MoleculeParams};
use crate::wavelets::{multi_indices, FunctionSample};

type DerivFn = dyn Fn(&[usize], &[f64]) -> Complex64 + Send + Sync;

/// A function attached to a cube, with derivatives `(gamma, x) -> D^gamma f(x)`
/// available up to `order`.
#[derive(Clone)]
pub struct MoleculeCandidate {
    pub cube: DyadicCube,
    pub label: String,
    pub order: usize,
    /// Closed box containing the support; `None` for unbounded support.
    pub support: Option<(Vec<f64>, Vec<f64>)>,
    /// Spacing of the sample grid for functions defined by grid samples;
    /// integrals then use Riemann sums on that grid.
    pub native_cell: Option<f64>,
    f: Arc<DerivFn>,
}

impl fmt::Debug for MoleculeCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MoleculeCandidate({} on {}, order {})", self.label, self.cube, self.order)
    }
}

impl MoleculeCandidate {
    pub fn new(
        cube: DyadicCube,
        label: &str,
        order: usize,
        support: Option<(Vec<f64>, Vec<f64>)>,
        f: impl Fn(&[usize], &[f64]) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Self { cube, label: label.into(), order, support, native_cell: None, f: Arc::new(f) }
    }

    /// Derivatives by central differences of `f` with step `step * l(Q)`.
    pub fn finite_difference(
        cube: DyadicCube,
        label: &str,
        order: usize,
        support: Option<(Vec<f64>, Vec<f64>)>,
        step: f64,
        f: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        let h = step * cube.side();
        let g = move |gamma: &[usize], x: &[f64]| fd_derivative(&f, gamma, x, h);
        Self::new(cube, label, order, support, g)
    }

    /// Component `c` of a grid sample, interpolated multilinearly; derivatives
    /// by central differences with the grid spacing.
    pub fn from_sample(cube: DyadicCube, sample: Arc<FunctionSample>, c: usize, order: usize) -> Result<Self> {
        if sample.n != cube.dim() || c >= sample.m {
            return Err(Error::Dimension(format!("sample of {} components on R^{} does not fit component {c} on R^{}", sample.m, sample.n, cube.dim())));
        }
        let h = sample.spacing;
        let lo = sample.origin.clone();
        let hi: Vec<f64> = lo.iter().zip(&sample.extents).map(|(o, e)| o + (*e as f64 - 1.0) * h).collect();
        let aligned = lo.iter().all(|o| (o / h - (o / h).round()).abs() < 1e-9);
        let s = Arc::clone(&sample);
        let g = move |gamma: &[usize], x: &[f64]| fd_derivative(&|y: &[f64]| s.interpolate(c, y), gamma, x, h);
        let out = Self::new(cube, "sample", order, Some((lo, hi)), g);
        Ok(if aligned { out.with_native_cell(h) } else { out })
    }

    pub fn zero(cube: DyadicCube) -> Self {
        let n = cube.dim();
        let c = cube.corner();
        Self::new(cube, "zero", usize::MAX, Some((c.clone(), c)), move |_, _| Complex64::new(0.0, 0.0 * n as f64))
    }

    pub fn is_zero(&self) -> bool {
        self.label == "zero"
    }

    pub fn with_native_cell(mut self, h: f64) -> Self {
        self.native_cell = Some(h);
        self
    }

    pub fn dim(&self) -> usize {
        self.cube.dim()
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        (self.f)(&vec![0; self.dim()], x)
    }

    pub fn deriv(&self, gamma: &[usize], x: &[f64]) -> Result<Complex64> {
        let k: usize = gamma.iter().sum();
        if k > self.order {
            return Err(precondition(format!("{} provides derivatives up to order {}, {k} requested", self.label, self.order)));
        }
        Ok((self.f)(gamma, x))
    }

    /// `c f`.
    pub fn scaled(&self, c: f64) -> Self {
        let f = Arc::clone(&self.f);
        let mut out = self.clone();
        out.f = Arc::new(move |g, x| f(g, x) * c);
        out
    }
}

fn fd_derivative(f: &(impl Fn(&[f64]) -> Complex64 + ?Sized), gamma: &[usize], x: &[f64], h: f64) -> Complex64 {
    match gamma.iter().position(|&g| g > 0) {
        None => f(x),
        Some(a) => {
            let mut lower = gamma.to_vec();
            lower[a] -= 1;
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[a] += h / 2.0;
            xm[a] -= h / 2.0;
            (fd_derivative(f, &lower, &xp, h) - fd_derivative(f, &lower, &xm, h)) / h
        }
    }
}

/// Functions attached to every cube of a lattice.
pub trait MoleculeFamily: Send + Sync {
    fn dim(&self) -> usize;
    fn molecule(&self, q: &DyadicCube) -> MoleculeCandidate;
}

/// `(u_K)_Q(x) = |Q|^{-1/2} (1 + |x - x_Q| / l(Q))^{-K}`.
pub fn u_q(q: &DyadicCube, k: f64, x: &[f64]) -> f64 {
    let r = dist(x, &q.corner()) / q.side();
    q.measure().powf(-0.5) * (1.0 + r).powf(-k)
}

/// `sup_{|z| <= delta} (u_K)_Q(x + z)`.
pub fn u_q_sup(q: &DyadicCube, k: f64, x: &[f64], delta: f64) -> f64 {
    let r = (dist(x, &q.corner()) - delta).max(0.0) / q.side();
    q.measure().powf(-0.5) * (1.0 + r).powf(-k)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Sampling geometry for validation: `per_side` points per `l(Q)` on the box of
/// half-width `extent l(Q)` around the cube center.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ValidationGrid {
    pub per_side: usize,
    pub extent: f64,
    /// Number of dyadic separations `l(Q) 2^{-i}` for the Hölder condition.
    pub separations: usize,
    pub tol: f64,
}

impl Default for ValidationGrid {
    fn default() -> Self {
        Self { per_side: 16, extent: 8.0, separations: 8, tol: 1e-9 }
    }
}

impl ValidationGrid {
    fn points(&self, q: &DyadicCube) -> Result<Vec<Vec<f64>>> {
        if self.per_side < 8 {
            return Err(Error::Quadrature(format!("grid with {} points per side does not resolve l(Q)/8", self.per_side)));
        }
        let l = q.side();
        let c = q.center();
        let count = (2.0 * self.extent * self.per_side as f64).round() as usize + 1;
        let n = q.dim();
        let total = count.pow(n as u32);
        Ok((0..total)
            .map(|mut flat| {
                let mut x = vec![0.0; n];
                for a in (0..n).rev() {
                    let i = flat % count;
                    flat /= count;
                    x[a] = c[a] + (i as f64 / self.per_side as f64 - self.extent) * l;
                }
                x
            })
            .collect())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub name: String,
    pub pass: bool,
    /// Smallest multiplicative constant that works on the samples.
    pub constant: f64,
    pub witness: Option<Vec<f64>>,
    pub multi_index: Option<Vec<usize>>,
    pub detail: String,
}

impl ConditionReport {
    fn vacuous(name: &str) -> Self {
        Self { name: name.into(), pass: true, constant: 0.0, witness: None, multi_index: None, detail: "vacuous".into() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MoleculeReport {
    pub label: String,
    pub cube: DyadicCube,
    pub params: MoleculeParams,
    pub decay: ConditionReport,
    pub cancellation: ConditionReport,
    pub smoothness: ConditionReport,
    pub holder: ConditionReport,
    pub constant: f64,
    pub pass: bool,
}

/// Ratio maximum over the inner and outer halves of the grid; a decay bound
/// holds when the ratio does not grow toward the edge.
struct TailMax {
    inner: (f64, usize),
    outer: (f64, usize),
}

impl TailMax {
    fn new(ratios: &[f64], radii: &[f64], cut: f64) -> Self {
        let mut inner = (0.0, 0);
        let mut outer = (0.0, 0);
        for (i, (&v, &r)) in ratios.iter().zip(radii).enumerate() {
            let slot = if r <= cut { &mut inner } else { &mut outer };
            if v > slot.0 {
                *slot = (v, i);
            }
        }
        Self { inner, outer }
    }

    fn best(&self) -> (f64, usize) {
        if self.outer.0 > self.inner.0 {
            self.outer
        } else {
            self.inner
        }
    }

    fn grows(&self, bounded: bool) -> bool {
        !bounded && self.outer.0 > self.inner.0 * (1.0 + 1e-9)
    }
}

fn check_order(f: &MoleculeCandidate, needed: usize) -> Result<()> {
    if f.order < needed {
        return Err(precondition(format!(
            "{} provides derivatives up to order {}, the condition needs {needed}",
            f.label, f.order
        )));
    }
    Ok(())
}

/// Moments `int ((x - c_Q)/l)^gamma f(x) dx` for `|gamma| <= order`, with the
/// size scale `||f||_inf |box| max |monomial|` used for tolerances.
pub fn moments(f: &MoleculeCandidate, order: usize, grid: &ValidationGrid) -> Result<(Vec<(Vec<usize>, Complex64)>, f64)> {
    let q = &f.cube;
    let n = q.dim();
    let l = q.side();
    let c = q.center();
    let (lo, hi) = match &f.support {
        Some(b) => b.clone(),
        None => (c.iter().map(|x| x - grid.extent * l).collect(), c.iter().map(|x| x + grid.extent * l).collect()),
    };
    let gammas = multi_indices(n, order);
    let mono_max = (0..n)
        .map(|a| ((lo[a] - c[a]).abs().max((hi[a] - c[a]).abs()) / l).max(1.0))
        .fold(1.0, f64::max)
        .powi(order as i32);
    let integrate = |nodes: &[Vec<(f64, f64)>]| -> (Vec<Complex64>, f64) {
        // tensor rule; nodes[a] = (x, weight)
        let total: usize = nodes.iter().map(|v| v.len()).product();
        let (sums, sup) = (0..total)
            .into_par_iter()
            .fold(
                || (vec![Complex64::new(0.0, 0.0); gammas.len()], 0.0f64),
                |(mut acc, mut sup), mut flat| {
                    let mut x = vec![0.0; n];
                    let mut w = 1.0;
                    for a in (0..n).rev() {
                        let (xa, wa) = nodes[a][flat % nodes[a].len()];
                        flat /= nodes[a].len();
                        x[a] = xa;
                        w *= wa;
                    }
                    let v = f.eval(&x);
                    sup = sup.max(v.norm());
                    for (g, slot) in gammas.iter().zip(acc.iter_mut()) {
                        let mono: f64 = (0..n).map(|a| ((x[a] - c[a]) / l).powi(g[a] as i32)).product();
                        *slot += v * (mono * w);
                    }
                    (acc, sup)
                },
            )
            .reduce(
                || (vec![Complex64::new(0.0, 0.0); gammas.len()], 0.0f64),
                |(a, s), (b, t)| (a.iter().zip(&b).map(|(x, y)| x + y).collect(), s.max(t)),
            );
        (sums, sup)
    };
    let volume: f64 = (0..n).map(|a| hi[a] - lo[a]).product();
    let result = if let Some(h) = f.native_cell {
        let nodes: Vec<Vec<(f64, f64)>> = (0..n)
            .map(|a| {
                let first = (lo[a] / h).ceil() as i64;
                let last = (hi[a] / h).floor() as i64;
                (first..=last).map(|i| (i as f64 * h, h)).collect()
            })
            .collect();
        let (s, sup) = integrate(&nodes);
        (s, sup)
    } else {
        // trapezoid rule: spectrally accurate for smooth functions vanishing at the box edges
        let mut cells = (0..n).map(|a| ((hi[a] - lo[a]) / l * grid.per_side as f64).ceil().max(1.0) as usize).collect::<Vec<_>>();
        let mut prev: Option<Vec<Complex64>> = None;
        loop {
            let nodes: Vec<Vec<(f64, f64)>> = (0..n).map(|a| trapezoid_nodes(lo[a], hi[a], cells[a])).collect();
            let (s, sup) = integrate(&nodes);
            let scale = sup * volume * mono_max;
            let done = prev.as_ref().is_some_and(|p| {
                p.iter().zip(&s).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) <= grid.tol * scale
            });
            let total: usize = cells.iter().map(|c| 2 * c + 1).product();
            if done || total > 1 << 24 {
                break (s, sup);
            }
            prev = Some(s);
            cells.iter_mut().for_each(|c| *c *= 2);
        }
    };
    let (sums, sup) = result;
    Ok((gammas.into_iter().zip(sums).collect(), sup * volume * mono_max))
}

fn trapezoid_nodes(a: f64, b: f64, cells: usize) -> Vec<(f64, f64)> {
    let h = (b - a) / cells as f64;
    (0..=cells).map(|i| (a + i as f64 * h, if i == 0 || i == cells { h / 2.0 } else { h })).collect()
}

/// Check the four molecule conditions for `(K, L, M, N)` and report the
/// smallest constants that work on the sample grid.
pub fn validate_molecule(f: &MoleculeCandidate, mp: &MoleculeParams, grid: &ValidationGrid) -> Result<MoleculeReport> {
    let q = &f.cube;
    let n = q.dim();
    let l = q.side();
    let smooth_top = if mp.n > 0.0 { strict_floor(&mp.n) as usize } else { 0 };
    if mp.n > 0.0 {
        check_order(f, smooth_top)?;
    }
    let pts = grid.points(q)?;
    let corner = q.corner();
    let radii: Vec<f64> = pts.iter().map(|x| dist(x, &corner) / l).collect();
    let cut = grid.extent / 2.0;
    let bounded = f.support.is_some();

    // (a) decay
    let vals: Vec<Complex64> = pts.par_iter().map(|x| f.eval(x)).collect();
    let ratios: Vec<f64> = pts.iter().zip(&vals).map(|(x, v)| v.norm() / u_q(q, mp.k, x)).collect();
    let tail = TailMax::new(&ratios, &radii, cut);
    let (c_a, at) = tail.best();
    let decay = ConditionReport {
        name: "decay".into(),
        pass: !tail.grows(bounded),
        constant: c_a,
        witness: Some(pts[if tail.grows(bounded) { tail.outer.1 } else { at }].clone()),
        multi_index: None,
        detail: format!("inner max {:.3e}, outer max {:.3e}", tail.inner.0, tail.outer.0),
    };

    // (b) cancellation
    let cancellation = if mp.l >= 0.0 {
        let top = mp.l.floor() as usize;
        let (ms, scale) = moments(f, top, grid)?;
        let (worst_g, worst) = ms
            .iter()
            .map(|(g, v)| (g.clone(), v.norm()))
            .fold((vec![0; n], 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        ConditionReport {
            name: "cancellation".into(),
            pass: worst <= grid.tol * scale,
            constant: worst / scale.max(f64::MIN_POSITIVE),
            witness: None,
            multi_index: Some(worst_g),
            detail: format!("largest moment {worst:.3e} against scale {scale:.3e}"),
        }
    } else {
        ConditionReport::vacuous("cancellation")
    };

    // (c) derivative decay for |gamma| < N
    let smoothness = if mp.n > 0.0 {
        let gammas = multi_indices(n, smooth_top);
        let mut best = (0.0, 0usize, vec![0; n]);
        let mut grows = false;
        let mut detail = String::new();
        for g in gammas {
            let k: usize = g.iter().sum();
            if k as f64 >= mp.n {
                continue;
            }
            let ratios: Vec<f64> = pts
                .par_iter()
                .map(|x| f.deriv(&g, x).map(|v| v.norm() * l.powi(k as i32) / u_q(q, mp.m, x)))
                .collect::<Result<_>>()?;
            let tail = TailMax::new(&ratios, &radii, cut);
            if tail.grows(bounded) {
                grows = true;
                detail = format!("ratio grows toward the grid edge for gamma = {g:?}");
            }
            let (v, i) = tail.best();
            if v > best.0 {
                best = (v, i, g);
            }
        }
        ConditionReport {
            name: "smoothness".into(),
            pass: !grows,
            constant: best.0,
            witness: Some(pts[best.1].clone()),
            multi_index: Some(best.2),
            detail,
        }
    } else {
        ConditionReport::vacuous("smoothness")
    };

    // (d) Hölder condition at |gamma| = strict floor of N
    let holder = if mp.n > 0.0 { holder_check(f, mp, grid, &pts, smooth_top)? } else { ConditionReport::vacuous("holder") };

    let constant = [decay.constant, smoothness.constant, holder.constant].into_iter().fold(0.0, f64::max);
    let pass = decay.pass && cancellation.pass && smoothness.pass && holder.pass;
    Ok(MoleculeReport {
        label: f.label.clone(),
        cube: q.clone(),
        params: mp.clone(),
        decay,
        cancellation,
        smoothness,
        holder,
        constant,
        pass,
    })
}

/// Largest allowed growth rate of the Hölder ratio per halving of the separation.
pub const HOLDER_SLOPE_TOL: f64 = 0.2;

fn holder_check(f: &MoleculeCandidate, mp: &MoleculeParams, grid: &ValidationGrid, pts: &[Vec<f64>], top: usize) -> Result<ConditionReport> {
    let q = &f.cube;
    let n = q.dim();
    let l = q.side();
    let expo = mp.n - top as f64;
    let min_sep = f.native_cell.map_or(0.0, |h| 4.0 * h).max(l / grid.per_side as f64 / 64.0);
    let seps: Vec<f64> = (1..=grid.separations).map(|i| l * 0.5f64.powi(i as i32)).filter(|&d| d >= min_sep).collect();
    if seps.len() < 3 {
        return Err(Error::Quadrature("fewer than three resolvable separations for the Hölder condition".into()));
    }
    let mut dirs: Vec<Vec<f64>> = (0..n).map(|a| (0..n).map(|b| if a == b { 1.0 } else { 0.0 }).collect()).collect();
    if n > 1 {
        dirs.push(vec![1.0 / (n as f64).sqrt(); n]);
    }
    let gammas: Vec<Vec<usize>> = multi_indices(n, top).into_iter().filter(|g| g.iter().sum::<usize>() == top).collect();
    let mut per_sep = Vec::new();
    let mut best = (0.0, vec![0.0; n], vec![0; n]);
    for &delta in &seps {
        let mut level_max: f64 = 0.0;
        for g in &gammas {
            for d in &dirs {
                let (v, i) = pts
                    .par_iter()
                    .enumerate()
                    .map(|(i, x)| {
                        let y: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + delta * b).collect();
                        let diff = (f.deriv(g, x)? - f.deriv(g, &y)?).norm() * l.powi(top as i32);
                        let bound = (delta / l).powf(expo) * u_q_sup(q, mp.m, x, delta);
                        Ok((diff / bound, i))
                    })
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .fold((0.0, 0), |acc, x| if x.0 > acc.0 { x } else { acc });
                level_max = level_max.max(v);
                if v > best.0 {
                    best = (v, pts[i].clone(), g.clone());
                }
            }
        }
        per_sep.push(level_max);
    }
    // growth of log2 c_i in i = log2(l / delta), over the finer half of the separations
    let tail = (seps.len() / 2).max(3);
    let first = seps.len() - tail;
    let xs: Vec<f64> = seps[first..].iter().map(|d| (l / d).log2()).collect();
    let ys: Vec<f64> = per_sep[first..].iter().map(|c| c.max(f64::MIN_POSITIVE).log2()).collect();
    let slope = ls_slope(&xs, &ys);
    Ok(ConditionReport {
        name: "holder".into(),
        pass: slope <= HOLDER_SLOPE_TOL,
        constant: best.0,
        witness: Some(best.1),
        multi_index: Some(best.2),
        detail: format!("exponent {expo}, constants per separation {per_sep:?}, growth slope {slope:.3}"),
    })
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, Serialize)]
pub struct AtomReport {
    pub support: ConditionReport,
    pub cancellation: ConditionReport,
    pub derivatives: ConditionReport,
    pub pass: bool,
}

/// `(r, L, N)`-atom conditions: `supp f` in `rQ`, moments through `floor(L)`,
/// and `|D^gamma f| <= |Q|^{-1/2 - |gamma|/n}` for `|gamma| <= N`.
pub fn validate_atom(f: &MoleculeCandidate, r: f64, l_moments: f64, n_smooth: f64, grid: &ValidationGrid) -> Result<AtomReport> {
    let q = &f.cube;
    let n = q.dim();
    let l = q.side();
    let top = if n_smooth >= 0.0 { n_smooth.floor() as usize } else { 0 };
    check_order(f, top)?;
    let pts = grid.points(q)?;
    let c = q.center();
    let half = r * l / 2.0;
    let inside = |x: &[f64]| x.iter().zip(&c).all(|(a, b)| (a - b).abs() < half);

    let outside: Vec<(usize, f64)> = pts
        .par_iter()
        .enumerate()
        .filter(|(_, x)| !inside(x))
        .map(|(i, x)| (i, f.eval(x).norm()))
        .filter(|(_, v)| *v > 0.0)
        .collect();
    let support = ConditionReport {
        name: "support".into(),
        pass: outside.is_empty(),
        constant: outside.iter().map(|x| x.1).fold(0.0, f64::max),
        witness: outside.first().map(|(i, _)| pts[*i].clone()),
        multi_index: None,
        detail: format!("{} grid points outside rQ carry nonzero values", outside.len()),
    };

    let cancellation = if l_moments >= 0.0 {
        let (ms, scale) = moments(f, l_moments.floor() as usize, grid)?;
        let (g, worst) = ms.iter().map(|(g, v)| (g.clone(), v.norm())).fold((vec![0; n], 0.0), |a, x| if x.1 > a.1 { x } else { a });
        ConditionReport {
            name: "cancellation".into(),
            pass: worst <= grid.tol * scale,
            constant: worst / scale.max(f64::MIN_POSITIVE),
            witness: None,
            multi_index: Some(g),
            detail: format!("largest moment {worst:.3e} against scale {scale:.3e}"),
        }
    } else {
        ConditionReport::vacuous("cancellation")
    };

    let mut best = (0.0, 0usize, vec![0; n]);
    for g in multi_indices(n, top) {
        let k: usize = g.iter().sum();
        let bound = q.measure().powf(-0.5) * l.powi(-(k as i32));
        let (v, i) = pts
            .par_iter()
            .enumerate()
            .map(|(i, x)| Ok((f.deriv(&g, x)?.norm() / bound, i)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold((0.0, 0), |a, x| if x.0 > a.0 { x } else { a });
        if v > best.0 {
            best = (v, i, g);
        }
    }
    let derivatives = ConditionReport {
        name: "derivatives".into(),
        pass: best.0 <= 1.0 + 1e-12,
        constant: best.0,
        witness: Some(pts[best.1].clone()),
        multi_index: Some(best.2),
        detail: "constant must not exceed 1".into(),
    };
    let pass = support.pass && cancellation.pass && derivatives.pass;
    Ok(AtomReport { support, cancellation, derivatives, pass })
}

/// The bound parameters of `|<m_Q, b_P>| <= C b^{MGH}_{Q,P}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MghBound {
    pub m: f64,
    pub g: f64,
    pub h: f64,
}

/// `M = K_m ^ M_m ^ K_b ^ M_b`, `G = n/2 + [N_b ^ ceil(L_m) ^ (K_m - n - alpha)]_+`,
/// `H = n/2 + [N_m ^ ceil(L_b) ^ (K_b - n - alpha)]_+` with strict ceilings.
pub fn mgh_bound(pm: &MoleculeParams, pb: &MoleculeParams, n: usize, alpha: f64) -> Result<MghBound> {
    let nn = n as f64;
    if pm.k <= nn || pb.k <= nn || pm.m <= nn || pb.m <= nn {
        return Err(precondition(format!("the inner-product bound needs K, M > n = {n}")));
    }
    if !(alpha > 0.0) {
        return Err(precondition(format!("alpha must be positive, got {alpha}")));
    }
    let m = pm.k.min(pm.m).min(pb.k).min(pb.m);
    let g = nn / 2.0 + pb.n.min(strict_ceil(&pm.l)).min(pm.k - nn - alpha).max(0.0);
    let h = nn / 2.0 + pm.n.min(strict_ceil(&pb.l)).min(pb.k - nn - alpha).max(0.0);
    Ok(MghBound { m, g, h })
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilyCheck {
    pub holds: bool,
    pub failing: Vec<String>,
    pub synthesis: Evaluation,
    pub analysis: Evaluation,
}

/// Whether analysis (`_m`) and synthesis (`_b`) molecule parameters meet the
/// almost-diagonality conditions of the space.
pub fn families_ad_check(analysis: &MoleculeParams, synthesis: &MoleculeParams, di: &DerivedIndices, n: usize) -> Result<FamilyCheck> {
    let (syn_set, ana_set) = molecule_param_sets(di, n);
    let synthesis = synthesis.evaluate(&syn_set, "_b")?;
    let analysis = analysis.evaluate(&ana_set, "_m")?;
    let mut failing = synthesis.failing();
    failing.extend(analysis.failing());
    Ok(FamilyCheck { holds: failing.is_empty(), failing, synthesis, analysis })
}

/// `exp(-1/(1 - t^2))` on `(-1, 1)`.
fn bump_poly(k: usize) -> &'static [f64] {
    static TABLE: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    &TABLE.get_or_init(|| {
        // D^k b = P_k(t) (1 - t^2)^{-2k} b, P_{k+1} = P_k'(1-t^2)^2 + 4kt P_k (1-t^2) - 2t P_k
        let mut out = vec![vec![1.0]];
        for k in 0..MAX_BUMP_ORDER {
            let p = &out[k];
            let deg = p.len() + 3;
            let mut next = vec![0.0; deg + 1];
            for (i, &c) in p.iter().enumerate() {
                if i > 0 {
                    // i c t^{i-1} (1 - 2t^2 + t^4)
                    let a = i as f64 * c;
                    next[i - 1] += a;
                    next[i + 1] -= 2.0 * a;
                    next[i + 3] += a;
                }
                // 4k c t^{i+1} (1 - t^2) - 2 c t^{i+1}
                next[i + 1] += (4.0 * k as f64 - 2.0) * c;
                next[i + 3] -= 4.0 * k as f64 * c;
            }
            while next.len() > 1 && *next.last().unwrap() == 0.0 {
                next.pop();
            }
            out.push(next);
        }
        out
    })[k]
}

const MAX_BUMP_ORDER: usize = 20;

/// `D^k exp(-1/(1 - t^2))`, zero outside `(-1, 1)`.
pub fn bump_derivative(k: usize, t: f64) -> f64 {
    if t.abs() >= 1.0 {
        return 0.0;
    }
    let w = 1.0 - t * t;
    let p = bump_poly(k).iter().rev().fold(0.0, |acc, c| acc * t + c);
    p * (-1.0 / w - 2.0 * k as f64 * w.ln()).exp()
}

/// `sup |D^k bump|`, from a dense sample.
fn bump_sup(k: usize) -> f64 {
    static SUPS: OnceLock<Vec<f64>> = OnceLock::new();
    SUPS.get_or_init(|| {
        (0..=MAX_BUMP_ORDER)
            .into_par_iter()
            .map(|k| (0..=200_000).map(|i| bump_derivative(k, -1.0 + i as f64 * 1e-5).abs()).fold(0.0, f64::max))
            .collect()
    })[k]
}

/// A smooth `(r, L, N)`-atom on `Q`: `c D_1^{floor(L)+1}` of a tensor bump on
/// `rQ`, scaled so that `sup |D^gamma a| <= |Q|^{-1/2} l(Q)^{-|gamma|}` for `|gamma| <= N`.
pub fn make_atom(q: &DyadicCube, r: f64, l_moments: f64, n_smooth: f64) -> Result<MoleculeCandidate> {
    if !(r >= 1.0) {
        return Err(precondition(format!("atoms need r >= 1, got {r}")));
    }
    if n_smooth < 0.0 || l_moments < -1.0 {
        return Err(precondition("atoms need N >= 0 and L >= -1"));
    }
    let lift = if l_moments >= 0.0 { l_moments.floor() as usize + 1 } else { 0 };
    let top = n_smooth.floor() as usize;
    if lift + top > MAX_BUMP_ORDER {
        return Err(precondition(format!("L = {l_moments} with N = {n_smooth} needs {} bump derivatives, above {MAX_BUMP_ORDER}", lift + top)));
    }
    let n = q.dim();
    let l = q.side();
    let rho = r * l / 2.0;
    let center = q.center();
    let orders = |g: &[usize]| -> Vec<usize> { (0..n).map(|a| g[a] + if a == 0 { lift } else { 0 }).collect() };
    let mut amp = f64::INFINITY;
    for g in multi_indices(n, top) {
        let k: usize = g.iter().sum();
        let sup: f64 = orders(&g).iter().map(|&o| bump_sup(o) * rho.powi(-(o as i32))).product();
        amp = amp.min(q.measure().powf(-0.5) * l.powi(-(k as i32)) / sup);
    }
    amp *= 1.0 - 1e-6;
    let lo: Vec<f64> = center.iter().map(|c| c - rho).collect();
    let hi: Vec<f64> = center.iter().map(|c| c + rho).collect();
    Ok(MoleculeCandidate::new(
        q.clone(),
        &format!("atom(r={r}, L={l_moments}, N={n_smooth})"),
        MAX_BUMP_ORDER - lift,
        Some((lo, hi)),
        move |gamma: &[usize], x: &[f64]| {
            let mut v = amp;
            for a in 0..n {
                let o = gamma[a] + if a == 0 { lift } else { 0 };
                v *= bump_derivative(o, (x[a] - center[a]) / rho) * rho.powi(-(o as i32));
                if v == 0.0 {
                    break;
                }
            }
            Complex64::new(v, 0.0)
        },
    ))
}

/// `make_atom` on every cube.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AtomFamily {
    pub dim: usize,
    pub r: f64,
    pub l: f64,
    pub n: f64,
}

impl MoleculeFamily for AtomFamily {
    fn dim(&self) -> usize {
        self.dim
    }

    fn molecule(&self, q: &DyadicCube) -> MoleculeCandidate {
        make_atom(q, self.r, self.l, self.n).expect("atom family parameters were validated")
    }
}

impl AtomFamily {
    pub fn new(dim: usize, r: f64, l: f64, n: f64) -> Result<Self> {
        make_atom(&DyadicCube::unit(dim), r, l, n)?;
        Ok(Self { dim, r, l, n })
    }
}
