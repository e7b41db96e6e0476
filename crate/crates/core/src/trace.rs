//! Coefficient-level trace onto `R^{n-1} x {0}` and the matching extension,
//! weight compatibility between the two sides, and trace norm-ratio probes.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dyadic::{stack_cube, DyadicCube, LatticeWindow};
use crate::error::{precondition, Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::params::{trace_admissible, trace_target, trace_threshold, SpaceParams};
use crate::rng;
use crate::seq::NormSpec;
use crate::weights::{cube_nodes, MatrixWeight, QuadratureSpec};
use crate::wavelets::{analyze, synthesize, wavelet_norm_of, FunctionSample, WaveletCoeffs, WaveletSystem};

/// Wavelet systems on `R^n` and `R^{n-1}` built from one filter.
#[derive(Clone, Debug)]
pub struct TracePair {
    pub source: Arc<WaveletSystem>,
    pub target: Arc<WaveletSystem>,
    pub k0: i64,
    /// `supp theta` lies in `[0, support_width]^n`.
    pub support_width: i64,
}

impl TracePair {
    pub fn new(order: usize, n: usize, resolution: u32) -> Result<Self> {
        if n < 2 {
            return Err(precondition("trace needs n >= 2"));
        }
        let source = Arc::new(WaveletSystem::new(order, n, resolution)?);
        let target = Arc::new(WaveletSystem::new(order, n - 1, resolution)?);
        let k0 = source.k0;
        let support_width = source.support() as i64;
        Ok(Self { source, target, k0, support_width })
    }

    pub fn n(&self) -> usize {
        self.source.n
    }

    /// `phi^{(kind)}(-k)`.
    fn boundary_value(&self, kind: usize, k: i64) -> f64 {
        if k.abs() > self.support_width {
            return 0.0;
        }
        self.source.sample1(kind, -k as f64)
    }

    /// Target window: the first `n-1` axes of `window`.
    pub fn target_window(&self, window: &LatticeWindow) -> Result<LatticeWindow> {
        let n = self.n();
        if window.dim != n {
            return Err(Error::Dimension(format!("window lives on R^{}, trace pair on R^{n}", window.dim)));
        }
        LatticeWindow::new(n - 1, window.j_min, window.j_max, window.lo[..n - 1].to_vec(), window.hi[..n - 1].to_vec())
    }
}

/// `theta^{(lambda)}_Q(x', 0) = factor theta^{(lambda')}_{I(Q)}(x')`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceFactor {
    pub lambda: u32,
    pub cube: DyadicCube,
    pub factor: f64,
}

/// For `Q = Q(I, k)`: `lambda' = lambda >> 1`, `factor = l(Q)^{-1/2} phi^{(lambda_n)}(-k)`,
/// zero when `|k|` exceeds the support width.
pub fn trace_wavelet(pair: &TracePair, lambda: u32, q: &DyadicCube) -> Result<TraceFactor> {
    if q.dim() != pair.n() {
        return Err(Error::Dimension(format!("cube {q} is not in R^{}", pair.n())));
    }
    let k = q.last_index();
    let factor = q.side().powf(-0.5) * pair.boundary_value((lambda & 1) as usize, k);
    Ok(TraceFactor { lambda: lambda >> 1, cube: q.base()?, factor })
}

/// Placement of `theta^{(lambda')}_I` in the source: channel `(lambda', 0)` at
/// `Q(I, k0)` with mass `l(I)^{1/2} / phi(-k0)`.
pub fn ext_wavelet(pair: &TracePair, lambda: u32, i: &DyadicCube) -> TraceFactor {
    let factor = i.side().sqrt() / pair.boundary_value(0, pair.k0);
    TraceFactor { lambda: lambda << 1, cube: stack_cube(i, pair.k0), factor }
}

/// Trace of a coefficient expansion: every source coefficient is moved to its
/// base cube with the [`trace_wavelet`] factor. Channel `0` of the target holds
/// coefficients of tensor scaling functions, which are not in the target basis.
pub fn trace_coeffs(pair: &TracePair, c: &WaveletCoeffs) -> Result<WaveletCoeffs> {
    let window = pair.target_window(&c.window)?;
    let mut out = WaveletCoeffs::new(window, c.m);
    for (&lambda, field) in &c.channels {
        for (q, v) in field.iter() {
            let tf = trace_wavelet(pair, lambda, q)?;
            if tf.factor == 0.0 {
                continue;
            }
            let scaled: Vec<Complex64> = v.iter().map(|z| z * tf.factor).collect();
            out.channel_mut(tf.lambda).accumulate(tf.cube, &scaled)?;
        }
    }
    Ok(out)
}

/// Extension into `window` on `R^n`: each target coefficient is placed at
/// `Q(I, k0)` in channel `(lambda', 0)`.
pub fn ext_coeffs(pair: &TracePair, c: &WaveletCoeffs, window: &LatticeWindow) -> Result<WaveletCoeffs> {
    if c.n + 1 != pair.n() {
        return Err(Error::Dimension("extension expects coefficients on R^{n-1}".into()));
    }
    let mut out = WaveletCoeffs::new(window.clone(), c.m);
    for (&lambda, field) in &c.channels {
        for (i, v) in field.iter() {
            let place = ext_wavelet(pair, lambda, i);
            if !window.contains(&place.cube) {
                return Err(precondition(format!("extension window {window} misses {}", place.cube)));
            }
            let scaled: Vec<Complex64> = v.iter().map(|z| z * place.factor).collect();
            out.channel_mut(place.lambda).insert(place.cube, scaled)?;
        }
    }
    Ok(out)
}

/// Values on the hyperplane `x_n = 0`, which must be a grid row.
pub fn restrict_to_hyperplane(f: &FunctionSample) -> Result<FunctionSample> {
    let n = f.n;
    if n < 2 {
        return Err(precondition("restriction needs n >= 2"));
    }
    let t = -f.origin[n - 1] / f.spacing;
    let row = t.round();
    if (t - row).abs() > 1e-9 || row < 0.0 || row as usize >= f.extents[n - 1] {
        return Err(precondition("x_n = 0 is not a row of the sample grid"));
    }
    let row = row as usize;
    let mut out = FunctionSample::zeros(f.m, f.origin[..n - 1].to_vec(), f.spacing, f.extents[..n - 1].to_vec())?;
    let mut values = Vec::with_capacity(out.count() * f.m);
    for flat in 0..out.count() {
        let mut idx = out.multi(flat);
        idx.push(row);
        values.extend_from_slice(f.value(f.flat(&idx)));
    }
    out = out.like(values);
    Ok(out)
}

/// Grid on `R^{n-1}` with the first `n-1` axes of `f`.
pub fn hyperplane_grid(f: &FunctionSample) -> Result<FunctionSample> {
    let n = f.n;
    if n < 2 {
        return Err(precondition("hyperplane grid needs n >= 2"));
    }
    FunctionSample::zeros(f.m, f.origin[..n - 1].to_vec(), f.spacing, f.extents[..n - 1].to_vec())
}

#[derive(Clone, Debug, Serialize)]
pub struct WeightCompat {
    /// `sup avg_I |V^{1/p} z|^p / avg_{Q(I,0)} |W^{1/p} z|^p`.
    pub c116: f64,
    /// The reverse ratio.
    pub c127: f64,
    pub cubes: usize,
    pub directions: usize,
}

fn test_directions(m: usize, seed: u64, random: usize) -> Vec<CVec> {
    let mut dirs = Vec::new();
    let unit = |i: usize| CVec::from_fn(m, |r, _| Complex64::new(if r == i { 1.0 } else { 0.0 }, 0.0));
    for i in 0..m {
        dirs.push(unit(i));
        for j in i + 1..m {
            for ph in [Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0), Complex64::new(0.0, 1.0)] {
                dirs.push((unit(i) + unit(j) * ph).unscale(2f64.sqrt()));
            }
        }
    }
    let mut g = rng::stream(seed, 0x7ace);
    for _ in 0..random {
        dirs.push(CVec::from_vec(rng::unit_complex(&mut g, m)));
    }
    dirs
}

fn power_average(w: &dyn MatrixWeight, nodes: &[Vec<f64>], p: f64, dirs: &[CVec]) -> Result<Vec<f64>> {
    let pows: Vec<CMat> = nodes.iter().map(|x| linalg::herm_power_checked(&w.eval(x), 1.0 / p, x)).collect::<Result<_>>()?;
    Ok(dirs
        .iter()
        .map(|z| pows.iter().map(|a| linalg::vec_norm(&(a * z)).powf(p)).sum::<f64>() / pows.len() as f64)
        .collect())
}

/// Compatibility constants of `V` on `R^{n-1}` and `W` on `R^n` over the cubes
/// `I` of `window`, comparing averages over `I` and over `Q(I, 0)`.
pub fn weight_compat_check(
    v: &dyn MatrixWeight,
    w: &dyn MatrixWeight,
    p: f64,
    window: &LatticeWindow,
    quad: &QuadratureSpec,
    seed: u64,
) -> Result<WeightCompat> {
    if v.m() != w.m() {
        return Err(Error::Dimension(format!("weights have sizes {} and {}", v.m(), w.m())));
    }
    if v.n() + 1 != w.n() || window.dim != v.n() {
        return Err(Error::Dimension("V must live on R^{n-1}, W on R^n, the window on R^{n-1}".into()));
    }
    let dirs = test_directions(v.m(), seed, 8);
    let cubes = window.cubes();
    let ratios: Vec<(f64, f64)> = cubes
        .par_iter()
        .map(|i| {
            let q = stack_cube(i, 0);
            let a = power_average(v, &cube_nodes(i, quad), p, &dirs)?;
            let b = power_average(w, &cube_nodes(&q, quad), p, &dirs)?;
            let mut out = (0.0f64, 0.0f64);
            for (x, y) in a.iter().zip(&b) {
                if *x <= 0.0 || *y <= 0.0 {
                    return Err(Error::Numerical(format!("vanishing weight average on {i}")));
                }
                out = (out.0.max(x / y), out.1.max(y / x));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let (c116, c127) = ratios.iter().fold((0.0f64, 0.0f64), |acc, r| (acc.0.max(r.0), acc.1.max(r.1)));
    Ok(WeightCompat { c116, c127, cubes: cubes.len(), directions: dirs.len() })
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceNormReport {
    pub source: SpaceParams,
    pub target: SpaceParams,
    pub threshold: f64,
    pub depths: Vec<i32>,
    pub max_ratios: Vec<f64>,
    /// `max_ratios[i] / max_ratios[0]`.
    pub growth_factors: Vec<f64>,
    pub note: String,
}

impl TraceNormReport {
    pub fn growth(&self) -> f64 {
        *self.growth_factors.last().unwrap_or(&1.0)
    }
}

/// Ratio `||Tr f||_target / ||f||_source` over an ensemble, per window. Source
/// norms come from the wavelet coefficients of `f`; the trace is synthesized
/// on the hyperplane and re-analyzed in the `R^{n-1}` basis.
pub fn trace_norm_report(
    pair: &TracePair,
    ensemble: &[FunctionSample],
    sp: &SpaceParams,
    source_norm: &NormSpec,
    target_norm: &NormSpec,
    windows: &[LatticeWindow],
    d: f64,
) -> Result<TraceNormReport> {
    let n = pair.n();
    let threshold = trace_threshold(sp, n)?;
    if !trace_admissible(sp, n)? {
        return Err(precondition(format!(
            "trace needs s > 1/p + E: s = {}, 1/p + E = {}",
            sp.s,
            1.0 / sp.p + threshold
        )));
    }
    let target = trace_target(sp, n)?;
    if ensemble.is_empty() || windows.is_empty() {
        return Err(precondition("trace_norm_report needs samples and windows"));
    }
    let mut max_ratios = Vec::new();
    for window in windows {
        let twin = pair.target_window(window)?;
        let src = source_norm.prepare(window, sp.p)?;
        let tgt = target_norm.prepare(&twin, target.p)?;
        let mut best: f64 = 0.0;
        for f in ensemble {
            let c = analyze(f, &pair.source, window, true)?;
            let den = wavelet_norm_of(&c, &pair.source, sp, src.route(), d)?.value;
            if den == 0.0 {
                continue;
            }
            let tr = synthesize(&trace_coeffs(pair, &c)?, &pair.target, &hyperplane_grid(f)?)?;
            let tc = analyze(&tr, &pair.target, &twin, false)?;
            let num = wavelet_norm_of(&tc, &pair.target, &target, tgt.route(), d)?.value;
            best = best.max(num / den);
        }
        max_ratios.push(best);
    }
    if max_ratios[0] == 0.0 {
        return Err(Error::Numerical("every sample has zero source norm".into()));
    }
    Ok(TraceNormReport {
        source: sp.clone(),
        target,
        threshold,
        depths: windows.iter().map(|w| w.depth()).collect(),
        growth_factors: max_ratios.iter().map(|r| r / max_ratios[0]).collect(),
        max_ratios,
        note: "finite-window ratios; stability across depths is evidence, not proof".into(),
    })
}
