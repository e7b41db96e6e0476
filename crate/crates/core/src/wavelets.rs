//! Compactly supported Daubechies wavelets: filters by spectral factorization,
//! exact dyadic samples of `phi` and `psi`, tensor wavelets, and separable
//! analysis/synthesis of sampled `C^m`-valued functions.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dyadic::{pow2, DyadicCube, LatticeWindow};
use crate::error::{precondition, Error, Result};
use crate::molecules::{MoleculeCandidate, MoleculeFamily};
use crate::params::{derived_indices, wavelet_smoothness_required, SpaceParams};
use crate::seq::{CoeffField, NormRoute};

pub const MAX_ORDER: usize = 20;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Hölder exponents of the Daubechies scaling functions for orders 2..=10
/// (Rioul's estimates); later orders use the asymptotic line.
const REGULARITY: [f64; 9] = [0.5500, 1.0878, 1.6179, 1.9690, 2.1891, 2.4604, 2.7608, 3.0736, 3.3614];

pub fn regularity_estimate(order: usize) -> f64 {
    match order {
        0 | 1 => 0.0,
        2..=10 => REGULARITY[order - 2],
        _ => 0.2075 * order as f64 + 1.2864,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilterPair {
    pub order: usize,
    pub h: Vec<f64>,
    pub g: Vec<f64>,
    pub vanishing_moments: usize,
    pub regularity: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FilterDefects {
    /// `|sum h - sqrt 2|`
    pub sum: f64,
    /// `max_m |sum_k h_k h_{k+2m} - delta_m|`
    pub orthogonality: f64,
    /// `max_{j < order} |sum_k t_k^j g_k|` with `t_k` the taps rescaled to `[-1, 1]`
    pub moments: f64,
}

impl FilterPair {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// Right end of the supports of `phi` and `psi`.
    pub fn support(&self) -> usize {
        self.h.len() - 1
    }

    pub fn defects(&self) -> FilterDefects {
        let len = self.h.len();
        let sum = (self.h.iter().sum::<f64>() - std::f64::consts::SQRT_2).abs();
        let mut orthogonality: f64 = 0.0;
        for shift in 0..len / 2 {
            let dot: f64 = (0..len - 2 * shift).map(|k| self.h[k] * self.h[k + 2 * shift]).sum();
            let target = if shift == 0 { 1.0 } else { 0.0 };
            orthogonality = orthogonality.max((dot - target).abs());
        }
        let span = (len - 1).max(1) as f64;
        let mut moments: f64 = 0.0;
        for j in 0..self.vanishing_moments {
            let m: f64 = self
                .g
                .iter()
                .enumerate()
                .map(|(k, gk)| ((2.0 * k as f64 - span) / span).powi(j as i32) * gk)
                .sum();
            moments = moments.max(m.abs());
        }
        FilterDefects { sum, orthogonality, moments }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn horner(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    // value and derivative of sum coeffs[i] z^i
    let mut v = ZERO;
    let mut d = ZERO;
    for &c in coeffs.iter().rev() {
        d = d * z + v;
        v = v * z + c;
    }
    (v, d)
}

/// Roots of `sum coeffs[i] z^i` from the companion matrix, polished by Newton steps.
fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let deg = coeffs.len() - 1;
    let lead = coeffs[deg];
    let mut comp = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -coeffs[i] / lead;
    }
    comp.complex_eigenvalues()
        .iter()
        .map(|&z0| {
            let mut z = z0;
            for _ in 0..8 {
                let (v, d) = horner(coeffs, z);
                if d.norm() == 0.0 {
                    break;
                }
                let step = v / d;
                z -= step;
                if step.norm() <= 1e-16 * z.norm().max(1.0) {
                    break;
                }
            }
            z
        })
        .collect()
}

/// Multiply a descending-coefficient polynomial by `(z - r)`.
fn times_linear(poly: &[Complex64], r: Complex64) -> Vec<Complex64> {
    let mut out = vec![ZERO; poly.len() + 1];
    for (i, &c) in poly.iter().enumerate() {
        out[i] += c;
        out[i + 1] -= r * c;
    }
    out
}

/// The minimum-phase Daubechies filter with `order` vanishing moments.
pub fn daubechies_filter(order: usize) -> Result<FilterPair> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(precondition(format!("filter order must lie in [1, {MAX_ORDER}], got {order}")));
    }
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    if order > 1 {
        // P(y) = sum_k C(N-1+k, k) y^k with y = (2 - z - 1/z)/4
        let p: Vec<f64> = (0..order).map(|k| binomial(order - 1 + k, k)).collect();
        for y in poly_roots(&p) {
            let b = Complex64::new(2.0, 0.0) - y * 4.0;
            let disc = (b * b - 4.0).sqrt();
            let (z1, z2) = ((b + disc) * 0.5, (b - disc) * 0.5);
            poly = times_linear(&poly, if z1.norm() < z2.norm() { z1 } else { z2 });
        }
    }
    for _ in 0..order {
        poly = times_linear(&poly, Complex64::new(-1.0, 0.0));
    }
    let imag = poly.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    let scale = poly.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
    if imag > 1e-8 * scale {
        return Err(Error::Numerical(format!("filter of order {order} has imaginary residue {imag:e}")));
    }
    let total: f64 = poly.iter().map(|c| c.re).sum();
    let h: Vec<f64> = poly.iter().map(|c| c.re * std::f64::consts::SQRT_2 / total).collect();
    let len = h.len();
    let g = (0..len).map(|k| if k % 2 == 0 { h[len - 1 - k] } else { -h[len - 1 - k] }).collect();
    Ok(FilterPair { order, h, g, vanishing_moments: order, regularity: regularity_estimate(order) })
}

/// Values of `phi` and `psi` at `m 2^{-R}`, `m = 0..=support 2^R`.
#[derive(Clone, Debug)]
pub struct Cascade {
    pub resolution: u32,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl Cascade {
    /// `sup |phi(t) - sqrt 2 sum_k h_k phi(2t - k)|` over grid points `t`.
    pub fn refinement_residual(&self, fp: &FilterPair) -> f64 {
        let step = 1usize << self.resolution;
        let last = self.phi.len() - 1;
        let mut worst: f64 = 0.0;
        for (m, &v) in self.phi.iter().enumerate() {
            let mut acc = 0.0;
            for (k, hk) in fp.h.iter().enumerate() {
                let idx = 2 * m as i64 - (k * step) as i64;
                if idx >= 0 && idx as usize <= last {
                    acc += hk * self.phi[idx as usize];
                }
            }
            worst = worst.max((v - std::f64::consts::SQRT_2 * acc).abs());
        }
        worst
    }

    /// Riemann sum of `phi` on the sample grid.
    pub fn phi_integral(&self) -> f64 {
        self.phi.iter().sum::<f64>() * pow2(-(self.resolution as i32))
    }
}

/// `phi` at the integers, normalized to sum to one.
fn integer_values(fp: &FilterPair) -> Result<Vec<f64>> {
    let s = fp.support();
    if fp.order == 1 {
        return Ok(vec![1.0, 0.0]);
    }
    // phi(i) = sqrt2 sum_j h_{2i-j} phi(j) restricted to the interior 1..s-1
    let k = s - 1;
    let mut a = DMatrix::<f64>::zeros(k, k);
    for i in 1..s {
        for j in 1..s {
            let idx = 2 * i as i64 - j as i64;
            if idx >= 0 && (idx as usize) < fp.len() {
                a[(i - 1, j - 1)] = std::f64::consts::SQRT_2 * fp.h[idx as usize];
            }
        }
        a[(i - 1, i - 1)] -= 1.0;
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
    let (pos, smin) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    if smin > 1e-8 {
        return Err(Error::Numerical(format!("cascade does not converge: refinement matrix has no eigenvalue 1 (gap {smin:e})")));
    }
    let v: Vec<f64> = vt.row(pos).iter().copied().collect();
    let total: f64 = v.iter().sum();
    if total.abs() < 1e-12 {
        return Err(Error::Numerical("integer values of phi sum to zero".into()));
    }
    let mut out = vec![0.0; s + 1];
    for (i, x) in v.iter().enumerate() {
        out[i + 1] = x / total;
    }
    Ok(out)
}

/// Exact dyadic refinement from the integer values.
pub fn cascade(fp: &FilterPair, resolution: u32) -> Result<Cascade> {
    if resolution > 24 {
        return Err(precondition("cascade resolution above 24 is not supported"));
    }
    let s = fp.support();
    let mut phi = integer_values(fp)?;
    for r in 1..=resolution {
        let half = 1usize << (r - 1);
        let len = s * (1usize << r) + 1;
        let mut next = vec![0.0; len];
        for (m, slot) in next.iter_mut().enumerate() {
            if m % 2 == 0 {
                *slot = phi[m / 2];
                continue;
            }
            let mut acc = 0.0;
            for (k, hk) in fp.h.iter().enumerate() {
                let idx = m as i64 - (k * half) as i64;
                if idx >= 0 && (idx as usize) < phi.len() {
                    acc += hk * phi[idx as usize];
                }
            }
            *slot = std::f64::consts::SQRT_2 * acc;
        }
        phi = next;
    }
    let step = 1usize << resolution;
    let psi = (0..phi.len())
        .map(|m| {
            let mut acc = 0.0;
            for (k, gk) in fp.g.iter().enumerate() {
                let idx = 2 * m as i64 - (k * step) as i64;
                if idx >= 0 && (idx as usize) < phi.len() {
                    acc += gk * phi[idx as usize];
                }
            }
            std::f64::consts::SQRT_2 * acc
        })
        .collect();
    Ok(Cascade { resolution, phi, psi })
}

/// The integer `k0` maximizing `|phi(-k0)|`.
pub fn find_k0(c: &Cascade) -> Result<i64> {
    let step = 1usize << c.resolution;
    let (best, val) = (0..=(c.phi.len() - 1) / step)
        .map(|i| (i, c.phi[i * step].abs()))
        .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    if val <= 1e-6 {
        return Err(Error::Numerical("phi vanishes at every integer; resolution too coarse".into()));
    }
    Ok(-(best as i64))
}

/// `lambda_i`, with bit `n-1-i` of `lambda` holding the type along axis `i`.
pub fn channel_bit(lambda: u32, n: usize, i: usize) -> usize {
    ((lambda >> (n - 1 - i)) & 1) as usize
}

/// A Daubechies system on `R^n` sampled at resolution `2^{-resolution}`.
#[derive(Clone, Debug)]
pub struct WaveletSystem {
    pub n: usize,
    pub filter: FilterPair,
    pub resolution: u32,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub k0: i64,
}

impl WaveletSystem {
    pub fn new(order: usize, n: usize, resolution: u32) -> Result<Self> {
        if n == 0 {
            return Err(precondition("wavelet dimension must be positive"));
        }
        if resolution < 4 {
            return Err(precondition(format!("cascade resolution must be at least 4, got {resolution}")));
        }
        let filter = daubechies_filter(order)?;
        let c = cascade(&filter, resolution)?;
        let k0 = find_k0(&c)?;
        Ok(Self { n, filter, resolution, phi: c.phi, psi: c.psi, k0 })
    }

    /// Resolution at which every window level is sampled exactly on a grid of
    /// spacing `2^{-(j_max + r0)}`.
    pub fn resolution_for(window: &LatticeWindow, r0: u32) -> u32 {
        r0 + (window.j_max - window.j_min) as u32
    }

    pub fn support(&self) -> usize {
        self.filter.support()
    }

    pub fn order(&self) -> usize {
        self.filter.order
    }

    /// The nonzero channels `1..2^n`.
    pub fn channels(&self) -> std::ops::Range<u32> {
        1..(1u32 << self.n)
    }

    fn table(&self, kind: usize) -> &[f64] {
        if kind == 0 {
            &self.phi
        } else {
            &self.psi
        }
    }

    /// `phi` (`kind = 0`) or `psi` (`kind = 1`) at `t`; linear interpolation
    /// between grid points, exact on them.
    pub fn sample1(&self, kind: usize, t: f64) -> f64 {
        let s = self.support() as f64;
        if !(0.0..=s).contains(&t) {
            return 0.0;
        }
        let tab = self.table(kind);
        let pos = t * pow2(self.resolution as i32);
        let near = pos.round();
        if (pos - near).abs() < 1e-9 {
            return tab[near as usize];
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        let b = tab.get(i + 1).copied().unwrap_or(0.0);
        tab[i] * (1.0 - frac) + b * frac
    }

    /// `phi(i)` at an integer.
    pub fn phi_at(&self, i: i64) -> f64 {
        if i < 0 || i as usize > self.support() {
            0.0
        } else {
            self.phi[(i as usize) << self.resolution]
        }
    }

    /// Central finite difference of order `order` with step `2^{1-resolution}`.
    pub fn derivative1(&self, kind: usize, order: usize, t: f64) -> f64 {
        if order == 0 {
            return self.sample1(kind, t);
        }
        let h = pow2(1 - self.resolution as i32);
        let mut acc = 0.0;
        for i in 0..=order {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let off = (order as f64 / 2.0 - i as f64) * h;
            acc += sign * binomial(order, i) * self.sample1(kind, t + off);
        }
        acc / h.powi(order as i32)
    }

    /// `sup_t |D^order phi^{(kind)}(t)|` over the sample grid.
    pub fn derivative_sup(&self, kind: usize, order: usize) -> f64 {
        let step = pow2(-(self.resolution as i32));
        (0..self.phi.len()).map(|m| self.derivative1(kind, order, m as f64 * step).abs()).fold(0.0, f64::max)
    }

    /// `theta^{(lambda)}(x) = prod_i phi^{(lambda_i)}(x_i)`.
    pub fn theta(&self, lambda: u32, x: &[f64]) -> f64 {
        x.iter().enumerate().map(|(i, &xi)| self.sample1(channel_bit(lambda, self.n, i), xi)).product()
    }

    /// `theta_Q = |Q|^{-1/2} theta((x - x_Q)/l(Q))`.
    pub fn theta_q(&self, lambda: u32, q: &DyadicCube, x: &[f64]) -> f64 {
        let l = q.side();
        let t: Vec<f64> = x.iter().zip(q.corner()).map(|(xi, ci)| (xi - ci) / l).collect();
        q.measure().powf(-0.5) * self.theta(lambda, &t)
    }

    /// `theta^{(lambda)}_Q` as a molecule candidate, derivatives by finite differences.
    pub fn theta_candidate(self: &Arc<Self>, lambda: u32, q: &DyadicCube, factor: f64) -> MoleculeCandidate {
        let sys = Arc::clone(self);
        let corner = q.corner();
        let l = q.side();
        let amp = factor * q.measure().powf(-0.5);
        let s = self.support() as f64;
        let lo = corner.clone();
        let hi: Vec<f64> = corner.iter().map(|c| c + s * l).collect();
        let n = self.n;
        MoleculeCandidate::new(
            q.clone(),
            &format!("daubechies-{} channel {lambda}", self.order()),
            2,
            Some((lo, hi)),
            move |gamma: &[usize], x: &[f64]| {
                let mut v = amp;
                for i in 0..n {
                    let t = (x[i] - corner[i]) / l;
                    v *= sys.derivative1(channel_bit(lambda, n, i), gamma[i], t) / l.powi(gamma[i] as i32);
                    if v == 0.0 {
                        break;
                    }
                }
                Complex64::new(v, 0.0)
            },
        )
        .with_native_cell(l * pow2(-(self.resolution as i32)))
    }
}

/// Samples of a `C^m`-valued function on the grid `origin + i spacing`,
/// row-major in `i` (last axis fastest) with the `m` components innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionSample {
    pub n: usize,
    pub m: usize,
    pub origin: Vec<f64>,
    pub spacing: f64,
    pub extents: Vec<usize>,
    pub values: Vec<Complex64>,
}

impl FunctionSample {
    pub fn zeros(m: usize, origin: Vec<f64>, spacing: f64, extents: Vec<usize>) -> Result<Self> {
        let n = origin.len();
        if extents.len() != n || n == 0 {
            return Err(Error::Dimension("grid origin and extents must have one entry per axis".into()));
        }
        if !(spacing > 0.0) || extents.iter().any(|&e| e == 0) || m == 0 {
            return Err(precondition("grid needs positive spacing, extents and m"));
        }
        let count: usize = extents.iter().product();
        Ok(Self { n, m, origin, spacing, extents, values: vec![ZERO; count * m] })
    }

    pub fn from_fn(
        m: usize,
        origin: Vec<f64>,
        spacing: f64,
        extents: Vec<usize>,
        f: impl Fn(&[f64]) -> Vec<Complex64> + Sync,
    ) -> Result<Self> {
        let mut out = Self::zeros(m, origin, spacing, extents)?;
        let pts: Vec<Vec<f64>> = (0..out.count()).map(|i| out.point(i)).collect();
        let vals: Vec<Vec<Complex64>> = pts.par_iter().map(|x| f(x)).collect();
        for (i, v) in vals.into_iter().enumerate() {
            if v.len() != m {
                return Err(Error::Dimension(format!("function returned {} components, expected {m}", v.len())));
            }
            out.values[i * m..(i + 1) * m].copy_from_slice(&v);
        }
        Ok(out)
    }

    /// Same grid, new values.
    pub fn like(&self, values: Vec<Complex64>) -> Self {
        Self { values, ..self.clone() }
    }

    pub fn count(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn multi(&self, flat: usize) -> Vec<usize> {
        let mut rem = flat;
        let mut idx = vec![0; self.n];
        for a in (0..self.n).rev() {
            idx[a] = rem % self.extents[a];
            rem /= self.extents[a];
        }
        idx
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.extents).fold(0, |acc, (i, e)| acc * e + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi(flat).iter().zip(&self.origin).map(|(&i, o)| o + i as f64 * self.spacing).collect()
    }

    pub fn value(&self, flat: usize) -> &[Complex64] {
        &self.values[flat * self.m..(flat + 1) * self.m]
    }

    /// `h^n sum |f|^2`.
    pub fn energy(&self) -> f64 {
        self.spacing.powi(self.n as i32) * self.values.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_diff(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.n == other.n
            && self.m == other.m
            && self.extents == other.extents
            && self.spacing == other.spacing
            && self.origin == other.origin
    }

    /// Multilinear interpolation of component `c`; zero outside the grid box.
    pub fn interpolate(&self, c: usize, x: &[f64]) -> Complex64 {
        let mut base = vec![0usize; self.n];
        let mut frac = vec![0.0; self.n];
        for a in 0..self.n {
            let t = (x[a] - self.origin[a]) / self.spacing;
            let last = self.extents[a] - 1;
            if !(t >= 0.0 && t <= last as f64) {
                return Complex64::new(0.0, 0.0);
            }
            let i = (t.floor() as usize).min(last.saturating_sub(1));
            base[a] = i;
            frac[a] = if last == 0 { 0.0 } else { t - i as f64 };
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for corner in 0..(1usize << self.n) {
            let mut w = 1.0;
            let mut idx = base.clone();
            for a in 0..self.n {
                if (corner >> a) & 1 == 1 {
                    w *= frac[a];
                    idx[a] = (idx[a] + 1).min(self.extents[a] - 1);
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w != 0.0 {
                acc += self.values[self.flat(&idx) * self.m + c] * w;
            }
        }
        acc
    }

    /// Discrete inner product `h^n sum <f(x), g(x)>` (conjugate-linear in `other`).
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        if !self.same_grid(other) {
            return Err(Error::Dimension("samples live on different grids".into()));
        }
        let s: Complex64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum();
        Ok(s * self.spacing.powi(self.n as i32))
    }
}

/// Per-channel coefficient fields `{<f, theta^{(lambda)}_Q>}`; channel `0`
/// holds scaling-function coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletCoeffs {
    pub n: usize,
    pub m: usize,
    pub window: LatticeWindow,
    pub channels: BTreeMap<u32, CoeffField>,
}

impl WaveletCoeffs {
    pub fn new(window: LatticeWindow, m: usize) -> Self {
        Self { n: window.dim, m, window, channels: BTreeMap::new() }
    }

    pub fn channel_mut(&mut self, lambda: u32) -> &mut CoeffField {
        let (w, m) = (self.window.clone(), self.m);
        self.channels.entry(lambda).or_insert_with(|| CoeffField::new(w, m))
    }

    pub fn channel(&self, lambda: u32) -> Option<&CoeffField> {
        self.channels.get(&lambda)
    }

    pub fn insert(&mut self, lambda: u32, q: DyadicCube, v: Vec<Complex64>) -> Result<()> {
        self.channel_mut(lambda).insert(q, v)
    }

    pub fn l2_sq(&self) -> f64 {
        self.channels.values().map(|c| c.l2_sq()).sum()
    }

    pub fn len(&self) -> usize {
        self.channels.values().map(|c| c.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_diff(&self, other: &Self) -> f64 {
        let mut keys: Vec<u32> = self.channels.keys().chain(other.channels.keys()).copied().collect();
        keys.sort();
        keys.dedup();
        let empty = CoeffField::new(self.window.clone(), self.m);
        keys.iter()
            .map(|k| {
                let a = self.channels.get(k).unwrap_or(&empty);
                let b = other.channels.get(k).unwrap_or(&empty);
                a.max_diff(b)
            })
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        let channels = self.channels.iter().map(|(k, c)| (*k, c.scaled(s))).collect();
        Self { channels, ..self.clone() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        for (k, c) in &other.channels {
            let merged = out.channel_mut(*k).add(c)?;
            out.channels.insert(*k, merged);
        }
        Ok(out)
    }
}

/// One 1D basis function restricted to the grid: nodes `start..start + w.len()`.
struct Row {
    start: usize,
    w: Vec<f64>,
}

/// Rows of `2^{j/2} phi^{(kind)}(2^j x - k)` for `k in k_lo..k_hi`, times `weight`.
#[allow(clippy::too_many_arguments)]
fn basis_rows(sys: &WaveletSystem, kind: usize, j: i32, origin: f64, h: f64, nodes: usize, k_lo: i64, k_hi: i64, weight: f64) -> Vec<Row> {
    let s = sys.support() as f64;
    let scale = pow2(j);
    let amp = scale.sqrt() * weight;
    (k_lo..k_hi)
        .map(|k| {
            let a = k as f64 / scale;
            let b = (k as f64 + s) / scale;
            let lo = ((a - origin) / h - 1e-9).ceil().max(0.0);
            let hi = ((b - origin) / h + 1e-9).floor().min(nodes as f64 - 1.0);
            if hi < lo {
                return Row { start: 0, w: Vec::new() };
            }
            let (lo, hi) = (lo as usize, hi as usize);
            let w = (lo..=hi)
                .map(|i| amp * sys.sample1(kind, (origin + i as f64 * h) * scale - k as f64))
                .collect();
            Row { start: lo, w }
        })
        .collect()
}

/// Range of `k` whose support `[k, k + s] 2^{-j}` meets `[origin, origin + (nodes-1) h]`,
/// intersected with `[lo, hi)`.
fn k_range(sys: &WaveletSystem, j: i32, origin: f64, h: f64, nodes: usize, lo: i64, hi: i64) -> (i64, i64) {
    let scale = pow2(j);
    let s = sys.support() as i64;
    let first = (origin * scale).floor() as i64 - s;
    let last = ((origin + (nodes - 1) as f64 * h) * scale).ceil() as i64 + 1;
    (first.max(lo), last.min(hi).max(first.max(lo)))
}

/// `out[o, r, in] = sum_t w_r[t] data[o, start_r + t, in]`.
fn contract_axis(data: &[Complex64], shape: &[usize], axis: usize, rows: &[Row]) -> Vec<Complex64> {
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let nr = rows.len();
    let mut out = vec![ZERO; outer * nr * inner];
    out.par_chunks_mut(inner).enumerate().for_each(|(idx, chunk)| {
        let (o, r) = (idx / nr, idx % nr);
        let row = &rows[r];
        for (t, &w) in row.w.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let base = (o * len + row.start + t) * inner;
            for (c, s) in chunk.iter_mut().zip(&data[base..base + inner]) {
                *c += s * w;
            }
        }
    });
    out
}

/// Adjoint of [`contract_axis`]: `out[o, i, in] = sum_r w_r[i - start_r] data[o, r, in]`.
fn expand_axis(data: &[Complex64], shape: &[usize], axis: usize, rows: &[Row], len_out: usize) -> Vec<Complex64> {
    let nr = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut cover: Vec<Vec<(usize, f64)>> = vec![Vec::new(); len_out];
    for (r, row) in rows.iter().enumerate() {
        for (t, &w) in row.w.iter().enumerate() {
            if w != 0.0 {
                cover[row.start + t].push((r, w));
            }
        }
    }
    let mut out = vec![ZERO; outer * len_out * inner];
    out.par_chunks_mut(inner).enumerate().for_each(|(idx, chunk)| {
        let (o, i) = (idx / len_out, idx % len_out);
        for &(r, w) in &cover[i] {
            let base = (o * nr + r) * inner;
            for (c, s) in chunk.iter_mut().zip(&data[base..base + inner]) {
                *c += s * w;
            }
        }
    });
    out
}

fn check_system(sys: &WaveletSystem, n: usize) -> Result<()> {
    if sys.n != n {
        return Err(Error::Dimension(format!("wavelet system on R^{} used on R^{n}", sys.n)));
    }
    Ok(())
}

/// `<f, theta^{(lambda)}_Q>` for every nonzero channel and window cube, by
/// Riemann sums on the sample grid; with `scaling`, also the channel-0
/// coefficients at level `j_min` so that the expansion is complete.
pub fn analyze(f: &FunctionSample, sys: &WaveletSystem, window: &LatticeWindow, scaling: bool) -> Result<WaveletCoeffs> {
    check_system(sys, f.n)?;
    if window.dim != f.n {
        return Err(Error::Dimension("window and sample dimensions differ".into()));
    }
    if f.spacing > pow2(-(window.j_max + 4)) * (1.0 + 1e-12) {
        return Err(precondition(format!(
            "sample spacing {} is coarser than 2^-(j_max + 4) = {}",
            f.spacing,
            pow2(-(window.j_max + 4))
        )));
    }
    let n = f.n;
    let mut out = WaveletCoeffs::new(window.clone(), f.m);
    let mut shape = f.extents.clone();
    shape.push(f.m);
    for j in window.levels() {
        let with_zero = scaling && j == window.j_min;
        let (lo, hi) = window.bounds_at(j);
        let ranges: Vec<(i64, i64)> =
            (0..n).map(|a| k_range(sys, j, f.origin[a], f.spacing, f.extents[a], lo[a], hi[a])).collect();
        if ranges.iter().any(|(a, b)| a >= b) {
            continue;
        }
        let rows: Vec<[Vec<Row>; 2]> = (0..n)
            .map(|a| {
                let mk = |kind| basis_rows(sys, kind, j, f.origin[a], f.spacing, f.extents[a], ranges[a].0, ranges[a].1, f.spacing);
                [mk(0), mk(1)]
            })
            .collect();
        let mut leaves = Vec::new();
        descend(&f.values, &shape, 0, 0, &rows, with_zero, &mut leaves);
        for (lambda, data) in leaves {
            let ext: Vec<usize> = ranges.iter().map(|(a, b)| (b - a) as usize).collect();
            let count: usize = ext.iter().product();
            let field = out.channel_mut(lambda);
            for flat in 0..count {
                let v = &data[flat * f.m..(flat + 1) * f.m];
                if v.iter().all(|z| *z == ZERO) {
                    continue;
                }
                let mut rem = flat;
                let mut k = vec![0i64; n];
                for a in (0..n).rev() {
                    k[a] = ranges[a].0 + (rem % ext[a]) as i64;
                    rem /= ext[a];
                }
                field.insert(DyadicCube::new(j, k)?, v.to_vec())?;
            }
        }
    }
    Ok(out)
}

fn descend(
    data: &[Complex64],
    shape: &[usize],
    axis: usize,
    lambda: u32,
    rows: &[[Vec<Row>; 2]],
    with_zero: bool,
    leaves: &mut Vec<(u32, Vec<Complex64>)>,
) {
    let n = rows.len();
    for kind in 0..2 {
        let lam = (lambda << 1) | kind as u32;
        if axis + 1 == n && lam == 0 && !with_zero {
            continue;
        }
        let d = contract_axis(data, shape, axis, &rows[axis][kind]);
        let mut sh = shape.to_vec();
        sh[axis] = rows[axis][kind].len();
        if axis + 1 == n {
            leaves.push((lam, d));
        } else {
            descend(&d, &sh, axis + 1, lam, rows, with_zero, leaves);
        }
    }
}

/// `sum_{lambda, Q} c^{(lambda)}_Q theta^{(lambda)}_Q` sampled on `grid`
/// (only its geometry is used).
pub fn synthesize(coefs: &WaveletCoeffs, sys: &WaveletSystem, grid: &FunctionSample) -> Result<FunctionSample> {
    check_system(sys, grid.n)?;
    let n = grid.n;
    if coefs.n != n {
        return Err(Error::Dimension("coefficients and grid dimensions differ".into()));
    }
    let m = coefs.m;
    let mut total = vec![ZERO; grid.count() * m];
    for (&lambda, field) in &coefs.channels {
        let mut by_level: BTreeMap<i32, Vec<(&DyadicCube, &Vec<Complex64>)>> = BTreeMap::new();
        for (q, v) in field.iter() {
            by_level.entry(q.level()).or_default().push((q, v));
        }
        for (j, entries) in by_level {
            let mut lo = vec![i64::MAX; n];
            let mut hi = vec![i64::MIN; n];
            for (q, _) in &entries {
                for a in 0..n {
                    lo[a] = lo[a].min(q.index()[a]);
                    hi[a] = hi[a].max(q.index()[a] + 1);
                }
            }
            let ext: Vec<usize> = (0..n).map(|a| (hi[a] - lo[a]) as usize).collect();
            let count: usize = ext.iter().product();
            let mut data = vec![ZERO; count * m];
            for (q, v) in &entries {
                let flat = (0..n).fold(0usize, |acc, a| acc * ext[a] + (q.index()[a] - lo[a]) as usize);
                data[flat * m..(flat + 1) * m].copy_from_slice(v);
            }
            let mut shape = ext.clone();
            shape.push(m);
            for a in 0..n {
                let kind = channel_bit(lambda, n, a);
                let rows = basis_rows(sys, kind, j, grid.origin[a], grid.spacing, grid.extents[a], lo[a], hi[a], 1.0);
                data = expand_axis(&data, &shape, a, &rows, grid.extents[a]);
                shape[a] = grid.extents[a];
            }
            for (t, d) in total.iter_mut().zip(&data) {
                *t += d;
            }
        }
    }
    Ok(grid.like(total))
}

#[derive(Clone, Debug, Serialize)]
pub struct WaveletNormReport {
    pub value: f64,
    pub per_channel: Vec<(u32, f64)>,
    pub order: usize,
    pub required_order: i64,
    pub regularity: f64,
    /// The filter order is below the smoothness the space requires.
    pub order_flag: bool,
    /// The regularity estimate exceeds the requirement by less than 0.1.
    pub regularity_flag: bool,
}

/// `sum_{lambda != 0}` of the sequence norms of the channel fields.
pub fn wavelet_norm_of(coefs: &WaveletCoeffs, sys: &WaveletSystem, sp: &SpaceParams, route: NormRoute<'_>, d: f64) -> Result<WaveletNormReport> {
    let di = derived_indices(sp, coefs.n, d)?;
    let required = wavelet_smoothness_required(&di, coefs.n);
    let mut per_channel = Vec::new();
    let mut value = 0.0;
    for lambda in 1..(1u32 << coefs.n) {
        let v = match coefs.channel(lambda) {
            Some(f) => route.eval(f, sp)?.value,
            None => 0.0,
        };
        value += v;
        per_channel.push((lambda, v));
    }
    let regularity = sys.filter.regularity;
    Ok(WaveletNormReport {
        value,
        per_channel,
        order: sys.order(),
        required_order: required,
        regularity,
        order_flag: (sys.order() as i64) < required,
        regularity_flag: regularity - (required as f64) < 0.1,
    })
}

pub fn wavelet_norm(
    f: &FunctionSample,
    sys: &WaveletSystem,
    window: &LatticeWindow,
    sp: &SpaceParams,
    route: NormRoute<'_>,
    d: f64,
) -> Result<WaveletNormReport> {
    let coefs = analyze(f, sys, window, false)?;
    wavelet_norm_of(&coefs, sys, sp, route, d)
}

/// Atoms `a_R = c theta^{(i)}_Q` on the children `R = Q_i` of wavelet cubes.
#[derive(Clone, Debug)]
pub struct WaveletAtomFamily {
    pub sys: Arc<WaveletSystem>,
    pub constant: f64,
    /// Dilation factor `r` with `supp a_R` inside `rR`.
    pub dilation: f64,
    pub smoothness: usize,
}

impl WaveletAtomFamily {
    pub fn new(sys: Arc<WaveletSystem>, smoothness: usize) -> Self {
        let n = sys.n;
        // c = 2^{n/2} / max_{|gamma| <= smoothness} 2^{-|gamma|} sup |D^gamma theta|
        let sups: Vec<Vec<f64>> = (0..=smoothness).map(|k| vec![sys.derivative_sup(0, k), sys.derivative_sup(1, k)]).collect();
        let mut worst: f64 = 0.0;
        for lambda in sys.channels() {
            for gamma in multi_indices(n, smoothness) {
                let v: f64 = (0..n).map(|i| sups[gamma[i]][channel_bit(lambda, n, i)]).product();
                worst = worst.max(v * pow2(-(gamma.iter().sum::<usize>() as i32)));
            }
        }
        let constant = pow2(n as i32).sqrt() / worst;
        let dilation = (4 * sys.support()) as f64;
        Self { sys, constant, dilation, smoothness }
    }

    /// Parent cube and channel for a child slot; the last slot carries no atom.
    pub fn slot(&self, r: &DyadicCube) -> (DyadicCube, Option<u32>) {
        let pos = r.child_position();
        let last = (1usize << self.sys.n) - 1;
        (r.parent(), if pos == last { None } else { Some(pos as u32 + 1) })
    }
}

impl MoleculeFamily for WaveletAtomFamily {
    fn dim(&self) -> usize {
        self.sys.n
    }

    fn molecule(&self, r: &DyadicCube) -> MoleculeCandidate {
        match self.slot(r) {
            (q, Some(lambda)) => {
                let mut c = self.sys.theta_candidate(lambda, &q, self.constant);
                c.cube = r.clone();
                c
            }
            (_, None) => MoleculeCandidate::zero(r.clone()),
        }
    }
}

/// All multi-indices of length `n` with `|gamma| <= order`.
pub fn multi_indices(n: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for g in &out {
            let used: usize = g.iter().sum();
            for k in 0..=(order - used) {
                let mut h = g.clone();
                h.push(k);
                next.push(h);
            }
        }
        out = next;
    }
    out.sort_by_key(|g| (g.iter().sum::<usize>(), g.clone()));
    out
}

/// Re-index `{c^{(i)}_Q theta^{(i)}_Q}` as `{t_R a_R}` over child cubes with
/// `a_{Q_i} = c theta^{(i)}_Q` and `t_{Q_i} = c^{-1} c^{(i)}_Q`.
pub fn atoms_from_wavelets(coefs: &WaveletCoeffs, sys: &Arc<WaveletSystem>, smoothness: usize) -> Result<(CoeffField, WaveletAtomFamily)> {
    check_system(sys, coefs.n)?;
    let fam = WaveletAtomFamily::new(Arc::clone(sys), smoothness);
    let w = &coefs.window;
    let window = w.with_levels(w.j_min, w.j_max + 1)?;
    let mut t = CoeffField::new(window, coefs.m);
    let inv = Complex64::new(1.0 / fam.constant, 0.0);
    for (&lambda, field) in &coefs.channels {
        if lambda == 0 {
            return Err(precondition("re-indexing is defined for the nonzero channels only"));
        }
        for (q, v) in field.iter() {
            let r = q.child(lambda as usize - 1);
            t.insert(r, v.iter().map(|z| z * inv).collect())?;
        }
    }
    Ok((t, fam))
}

/// Synthesis of a re-indexed atom expansion `sum_R t_R a_R` on `grid`.
pub fn synthesize_atoms(t: &CoeffField, fam: &WaveletAtomFamily, grid: &FunctionSample) -> Result<FunctionSample> {
    let w = &t.window;
    let parent_window = w.with_levels(w.j_min, (w.j_max - 1).max(w.j_min))?;
    let mut coefs = WaveletCoeffs::new(parent_window, t.m);
    let c = Complex64::new(fam.constant, 0.0);
    for (r, v) in t.iter() {
        if let (q, Some(lambda)) = fam.slot(r) {
            coefs.channel_mut(lambda).accumulate(q, &v.iter().map(|z| z * c).collect::<Vec<_>>())?;
        }
    }
    synthesize(&coefs, &fam.sys, grid)
}
