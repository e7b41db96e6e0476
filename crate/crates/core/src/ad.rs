//! Almost-diagonal matrices on the dyadic lattice: the model entries
//! `b^{DEF}`, application to coefficient fields, certificates, composition,
//! empirical boundedness probes and Gram matrices of molecule families.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dyadic::{distance_term, DyadicCube, LatticeWindow};
use crate::error::{precondition, Error, Result};
use crate::molecules::{mgh_bound, MghBound, MoleculeCandidate, MoleculeFamily};
use crate::params::{ad_region, DerivedIndices, MoleculeParams, SpaceParams};
use crate::rng;
use crate::seq::{CoeffField, NormSpec};
use crate::weights::QuadratureSpec;

/// Decay `D`, coarse-to-fine exponent `E` and fine-to-coarse exponent `F`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DefExponents {
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl DefExponents {
    pub fn new(d: f64, e: f64, f: f64) -> Self {
        Self { d, e, f }
    }

    fn assignment(&self) -> [(&'static str, f64); 3] {
        [("D", self.d), ("E", self.e), ("F", self.f)]
    }
}

impl fmt::Display for DefExponents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(D, E, F) = ({}, {}, {})", self.d, self.e, self.f)
    }
}

/// `(1 + |x_Q - x_R| / max l)^{-D}` times `(l(Q)/l(R))^E` when `l(Q) <= l(R)`,
/// else `(l(R)/l(Q))^F`.
pub fn bdef_entry(q: &DyadicCube, r: &DyadicCube, def: &DefExponents) -> Result<f64> {
    let dist = distance_term(q, r)?;
    let (lq, lr) = (q.side(), r.side());
    let size = if lq <= lr { (lq / lr).powf(def.e) } else { (lr / lq).powf(def.f) };
    Ok(dist.powf(-def.d) * size)
}

/// Margins `(D - D_0, E - E_0, F - F_0)` over the region thresholds.
pub fn region_margins(def: &DefExponents, di: &DerivedIndices, n: usize) -> Result<[f64; 3]> {
    let ev = ad_region(di, n).evaluate_pairs(&def.assignment())?;
    Ok([ev.lines[0].margin, ev.lines[1].margin, ev.lines[2].margin])
}

fn region_thresholds(di: &DerivedIndices, n: usize) -> [f64; 3] {
    let set = ad_region(di, n);
    [set.items[0].bound, set.items[1].bound, set.items[2].bound]
}

/// `|b_{Q,R}| <= constant b^{DEF}_{Q,R}` on the sampled pairs.
#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub exponents: DefExponents,
    pub constant: f64,
    pub pairs: usize,
    /// Pair attaining the constant.
    pub worst: Option<(DyadicCube, DyadicCube)>,
}

type EntryFn = dyn Fn(&DyadicCube, &DyadicCube) -> Complex64 + Send + Sync;

/// A matrix indexed by dyadic cubes, given by an entry evaluator.
#[derive(Clone)]
pub struct AdMatrix {
    pub label: String,
    entry: Arc<EntryFn>,
    pub certificate: Option<Certificate>,
}

impl fmt::Debug for AdMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AdMatrix({})", self.label)
    }
}

impl AdMatrix {
    pub fn new(label: &str, entry: impl Fn(&DyadicCube, &DyadicCube) -> Complex64 + Send + Sync + 'static) -> Self {
        Self { label: label.into(), entry: Arc::new(entry), certificate: None }
    }

    pub fn identity() -> Self {
        Self::new("identity", |q, r| Complex64::new(if q == r { 1.0 } else { 0.0 }, 0.0))
    }

    /// The model matrix `B^{DEF}`, certified with constant 1.
    pub fn bdef(def: DefExponents) -> Self {
        let mut b = Self::new(&format!("B^DEF {def}"), move |q, r| {
            Complex64::new(bdef_entry(q, r, &def).unwrap_or(0.0), 0.0)
        });
        b.certificate = Some(Certificate { exponents: def, constant: 1.0, pairs: 0, worst: None });
        b
    }

    /// Entries from a dense matrix over the cubes of `window`, zero elsewhere.
    pub fn from_dense(label: &str, window: LatticeWindow, dense: Vec<Complex64>) -> Result<Self> {
        let size = window.count();
        if dense.len() != size * size {
            return Err(Error::Dimension(format!("dense matrix has {} entries, window has {size} cubes", dense.len())));
        }
        Ok(Self::new(label, move |q, r| match (window.global_position(q), window.global_position(r)) {
            (Some(i), Some(j)) => dense[i * size + j],
            _ => Complex64::new(0.0, 0.0),
        }))
    }

    pub fn entry(&self, q: &DyadicCube, r: &DyadicCube) -> Complex64 {
        (self.entry)(q, r)
    }

    /// Row-major entries over the cubes of `window` in window order.
    pub fn dense(&self, window: &LatticeWindow) -> Vec<Complex64> {
        let cubes = window.cubes();
        cubes.par_iter().flat_map_iter(|q| cubes.iter().map(|r| self.entry(q, r)).collect::<Vec<_>>()).collect()
    }

    /// `(Bt)_Q = sum_R b_{Q,R} t_R` for `Q` in `out`; block-diagonal in the components.
    pub fn apply_on(&self, t: &CoeffField, out: &LatticeWindow) -> Result<CoeffField> {
        if out.dim != t.window.dim {
            return Err(Error::Dimension("output window and field live in different dimensions".into()));
        }
        let support: Vec<(&DyadicCube, &Vec<Complex64>)> = t.iter().collect();
        let rows: Vec<(DyadicCube, Vec<Complex64>)> = out
            .cubes()
            .into_par_iter()
            .filter_map(|q| {
                let mut acc = vec![Complex64::new(0.0, 0.0); t.m];
                let mut touched = false;
                for (r, v) in &support {
                    let b = self.entry(&q, r);
                    if b.norm_sqr() == 0.0 {
                        continue;
                    }
                    touched = true;
                    for (a, x) in acc.iter_mut().zip(v.iter()) {
                        *a += b * x;
                    }
                }
                touched.then_some((q, acc))
            })
            .collect();
        let mut f = CoeffField::new(out.clone(), t.m);
        for (q, v) in rows {
            f.insert(q, v)?;
        }
        Ok(f)
    }

    pub fn apply(&self, t: &CoeffField) -> Result<CoeffField> {
        self.apply_on(t, &t.window.clone())
    }

    /// Smallest `C` with `|b_{Q,R}| <= C b^{DEF}_{Q,R}` over all pairs of window
    /// cubes, or over `samples` random pairs when there are more.
    pub fn fit_constant(&self, def: &DefExponents, window: &LatticeWindow, samples: usize, seed: u64) -> Result<Certificate> {
        let cubes = window.cubes();
        let total = cubes.len() * cubes.len();
        let pairs: Vec<(usize, usize)> = if total <= samples {
            (0..total).map(|k| (k / cubes.len(), k % cubes.len())).collect()
        } else {
            let mut g = rng::stream(seed, 0xad);
            (0..samples).map(|_| (g.random_range(0..cubes.len()), g.random_range(0..cubes.len()))).collect()
        };
        let (constant, worst) = pairs
            .par_iter()
            .map(|&(i, j)| {
                let (q, r) = (&cubes[i], &cubes[j]);
                Ok((self.entry(q, r).norm() / bdef_entry(q, r, def)?, (i, j)))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold((0.0, None), |acc, (v, p)| if v > acc.0 { (v, Some(p)) } else { acc });
        Ok(Certificate {
            exponents: *def,
            constant,
            pairs: pairs.len(),
            worst: worst.map(|(i, j)| (cubes[i].clone(), cubes[j].clone())),
        })
    }

    /// Attach a certificate fitted on `window`.
    pub fn certify(mut self, def: &DefExponents, window: &LatticeWindow, samples: usize, seed: u64) -> Result<Self> {
        self.certificate = Some(self.fit_constant(def, window, samples, seed)?);
        Ok(self)
    }

    /// `self * other` truncated to the cubes of `window`.
    pub fn compose_on(&self, other: &Self, window: &LatticeWindow) -> Result<Self> {
        let size = window.count();
        let a = self.dense(window);
        let b = other.dense(window);
        let prod: Vec<Complex64> = (0..size)
            .into_par_iter()
            .flat_map_iter(|i| {
                let row = &a[i * size..(i + 1) * size];
                (0..size).map(|j| row.iter().enumerate().map(|(k, x)| x * b[k * size + j]).sum()).collect::<Vec<_>>()
            })
            .collect();
        Self::from_dense(&format!("({}) * ({})", self.label, other.label), window.clone(), prod)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CompositionReport {
    pub exponents: DefExponents,
    pub margins: [f64; 3],
    pub certificate: Certificate,
}

/// Exponents certified for `B_1 B_2` when `B_i` carries `c_i` strictly inside
/// the region: halfway from the threshold to the componentwise minimum, with a
/// fitted constant for the product of the model matrices on `window`.
pub fn compose_certificate(
    c1: &DefExponents,
    c2: &DefExponents,
    di: &DerivedIndices,
    n: usize,
    window: &LatticeWindow,
) -> Result<CompositionReport> {
    let region = ad_region(di, n);
    for (name, c) in [("first", c1), ("second", c2)] {
        let ev = region.evaluate_pairs(&c.assignment())?;
        if !ev.holds {
            return Err(precondition(format!("{name} certificate {c} fails {}", ev.failing().join(", "))));
        }
    }
    let thr = region_thresholds(di, n);
    let mins = [c1.d.min(c2.d), c1.e.min(c2.e), c1.f.min(c2.f)];
    let out = DefExponents::new(
        thr[0] + (mins[0] - thr[0]) / 2.0,
        thr[1] + (mins[1] - thr[1]) / 2.0,
        thr[2] + (mins[2] - thr[2]) / 2.0,
    );
    let product = AdMatrix::bdef(*c1).compose_on(&AdMatrix::bdef(*c2), window)?;
    let certificate = product.fit_constant(&out, window, usize::MAX, 0)?;
    Ok(CompositionReport { exponents: out, margins: region_margins(&out, di, n)?, certificate })
}

/// Trial fields used by [`empirical_norm`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Ensemble {
    pub random: usize,
    /// Single-cube fields; all cubes when at most this many, else a sample.
    pub deltas: usize,
    /// Vertical stacks through a few points, normalized to unit level norms.
    pub stacks: bool,
    pub seed: u64,
}

impl Default for Ensemble {
    fn default() -> Self {
        Self { random: 32, deltas: 256, stacks: false, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AdProbeReport {
    pub depths: Vec<i32>,
    pub estimates: Vec<f64>,
    /// `estimate[i] / estimate[0]`.
    pub growth_factors: Vec<f64>,
    pub region_margins: Option<[f64; 3]>,
    /// Label of the field attaining each estimate.
    pub attained_by: Vec<String>,
    pub note: String,
}

impl AdProbeReport {
    pub fn growth(&self) -> f64 {
        *self.growth_factors.last().unwrap_or(&1.0)
    }
}

const FINITE_WINDOW_NOTE: &str =
    "finite-window lower bounds for the operator norm; growth across depths is evidence, not proof";

fn nested(a: &LatticeWindow, b: &LatticeWindow) -> bool {
    a.dim == b.dim && b.j_min <= a.j_min && b.j_max >= a.j_max && a.cubes().iter().all(|q| b.contains(q))
}

/// Cubes containing `x` at every window level, with coefficients `|R|^{s/n + 1/2 - 1/p}`.
fn vertical_stack(window: &LatticeWindow, x: &[f64], sp: &SpaceParams, m: usize) -> Result<CoeffField> {
    let n = window.dim as f64;
    let mut f = CoeffField::new(window.clone(), m);
    for j in window.levels() {
        let q = DyadicCube::containing(x, j);
        if window.contains(&q) {
            let c = q.measure().powf(sp.s / n + 0.5 - 1.0 / sp.p);
            f.insert(q, vec![Complex64::new(c, 0.0); m])?;
        }
    }
    Ok(f)
}

/// Per-depth lower bounds `max ||Bt|| / ||t||` over a trial ensemble. Fields
/// from shallower windows are carried forward, so the estimates never decrease.
pub fn empirical_norm(
    b: &AdMatrix,
    sp: &SpaceParams,
    norm: &NormSpec,
    windows: &[LatticeWindow],
    m: usize,
    ens: &Ensemble,
    di: Option<&DerivedIndices>,
) -> Result<AdProbeReport> {
    if windows.is_empty() {
        return Err(precondition("empirical_norm needs at least one window"));
    }
    for w in windows.windows(2) {
        if !nested(&w[0], &w[1]) {
            return Err(precondition(format!("windows {} and {} are not nested", w[0], w[1])));
        }
    }
    let mut carried: Vec<(String, CoeffField)> = Vec::new();
    let mut estimates = Vec::new();
    let mut attained_by = Vec::new();
    for (wi, window) in windows.iter().enumerate() {
        let prepared = norm.prepare(window, sp.p)?;
        let route = prepared.route();
        let mut trials: Vec<(String, CoeffField)> =
            carried.iter().map(|(l, f)| (l.clone(), f.rewindowed(window.clone()))).collect();
        for k in 0..ens.random {
            trials.push((format!("random #{k} (depth {wi})"), CoeffField::random(window.clone(), m, ens.seed, (wi * 10_000 + k) as u64)));
        }
        let cubes = window.cubes();
        let picks: Vec<usize> = if cubes.len() <= ens.deltas {
            (0..cubes.len()).collect()
        } else {
            let mut g = rng::stream(ens.seed, 0xde17a + wi as u64);
            (0..ens.deltas).map(|_| g.random_range(0..cubes.len())).collect()
        };
        for i in picks {
            let mut v = vec![Complex64::new(0.0, 0.0); m];
            v[0] = Complex64::new(1.0, 0.0);
            trials.push((format!("delta at {}", cubes[i]), CoeffField::delta(window.clone(), cubes[i].clone(), v)?));
        }
        if ens.stacks {
            let (lo, hi) = window.bounds_at(window.j_min);
            let side = crate::dyadic::pow2(-window.j_min);
            let corner: Vec<f64> = lo.iter().map(|&k| k as f64 * side + 1e-9 * side).collect();
            let middle: Vec<f64> = lo.iter().zip(&hi).map(|(&a, &b)| (a + b) as f64 / 2.0 * side + 1e-9 * side).collect();
            for (name, x) in [("corner", corner), ("middle", middle)] {
                trials.push((format!("vertical stack at the {name}"), vertical_stack(window, &x, sp, m)?));
            }
        }
        let results: Vec<(f64, usize)> = trials
            .par_iter()
            .enumerate()
            .map(|(i, (_, t))| {
                let den = route.eval(t, sp)?.value;
                if den == 0.0 {
                    return Ok((0.0, i));
                }
                let bt = b.apply_on(t, window)?;
                Ok((route.eval(&bt, sp)?.value / den, i))
            })
            .collect::<Result<_>>()?;
        let (best, at) = results.iter().copied().fold((0.0, usize::MAX), |acc, x| if x.0 > acc.0 { x } else { acc });
        if at == usize::MAX {
            return Err(Error::Numerical("every trial field has zero norm".into()));
        }
        estimates.push(best);
        attained_by.push(trials[at].0.clone());
        // keep the best few for the next depth
        let mut order: Vec<(f64, usize)> = results;
        order.sort_by(|a, b| b.0.total_cmp(&a.0));
        carried = order.iter().take(8).map(|&(_, i)| trials[i].clone()).collect();
    }
    let growth_factors = estimates.iter().map(|e| e / estimates[0]).collect();
    let region_margins = match (di, &b.certificate) {
        (Some(di), Some(c)) => Some(region_margins(&c.exponents, di, windows[0].dim)?),
        _ => None,
    };
    Ok(AdProbeReport {
        depths: windows.iter().map(|w| w.depth()).collect(),
        estimates,
        growth_factors,
        region_margins,
        attained_by,
        note: FINITE_WINDOW_NOTE.into(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct UnderResolved {
    pub analysis: DyadicCube,
    pub synthesis: DyadicCube,
    pub relative_change: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GramReport {
    pub bound: MghBound,
    pub constant: f64,
    pub pairs: usize,
    pub nonzero: usize,
    pub worst: Option<(DyadicCube, DyadicCube)>,
    pub flagged: Vec<UnderResolved>,
    #[serde(skip)]
    pub matrix: Option<AdMatrix>,
}

/// Box used for integration: declared support, or `extent l(Q)` around the
/// center for unbounded candidates.
fn integration_box(f: &MoleculeCandidate, extent: f64) -> (Vec<f64>, Vec<f64>) {
    f.support.clone().unwrap_or_else(|| {
        let c = f.cube.center();
        let l = f.cube.side();
        (c.iter().map(|x| x - extent * l).collect(), c.iter().map(|x| x + extent * l).collect())
    })
}

/// Half-width, in units of `l(Q)`, of the integration box of unbounded candidates.
pub const GRAM_EXTENT: f64 = 8.0;

fn coarser_dyadic(h1: f64, h2: f64) -> Option<f64> {
    let r = (h1 / h2).log2();
    ((r - r.round()).abs() < 1e-12).then_some(h1.max(h2))
}

/// `(int m conj(b), int |m| |b|)` on the common box. Riemann sums on the coarser
/// native grid when both grids are dyadically nested, else the midpoint rule
/// with `quad.per_axis()` nodes per smaller side.
pub fn pair_integral(a: &MoleculeCandidate, b: &MoleculeCandidate, quad: &QuadratureSpec) -> (Complex64, f64) {
    let n = a.dim();
    let (alo, ahi) = integration_box(a, GRAM_EXTENT);
    let (blo, bhi) = integration_box(b, GRAM_EXTENT);
    let lo: Vec<f64> = (0..n).map(|i| alo[i].max(blo[i])).collect();
    let hi: Vec<f64> = (0..n).map(|i| ahi[i].min(bhi[i])).collect();
    if lo.iter().zip(&hi).any(|(l, h)| l >= h) {
        return (Complex64::new(0.0, 0.0), 0.0);
    }
    let shared = match (a.native_cell, b.native_cell) {
        (Some(h1), Some(h2)) => coarser_dyadic(h1, h2),
        _ => None,
    };
    let nodes: Vec<Vec<(f64, f64)>> = match shared {
        Some(h1) => (0..n)
            .map(|i| {
                let first = (lo[i] / h1).ceil() as i64;
                let last = (hi[i] / h1).floor() as i64;
                (first..=last).map(|k| (k as f64 * h1, h1)).collect()
            })
            .collect(),
        _ => {
            let h = a.cube.side().min(b.cube.side()) / quad.per_axis() as f64;
            (0..n)
                .map(|i| {
                    let cells = ((hi[i] - lo[i]) / h).ceil().max(1.0) as usize;
                    let w = (hi[i] - lo[i]) / cells as f64;
                    (0..cells).map(|k| (lo[i] + (k as f64 + 0.5) * w, w)).collect()
                })
                .collect()
        }
    };
    let total: usize = nodes.iter().map(|v| v.len()).product();
    (0..total).fold((Complex64::new(0.0, 0.0), 0.0), |(v, s), mut flat| {
        let mut x = vec![0.0; n];
        let mut w = 1.0;
        for i in (0..n).rev() {
            let (xi, wi) = nodes[i][flat % nodes[i].len()];
            flat /= nodes[i].len();
            x[i] = xi;
            w *= wi;
        }
        let (fa, fb) = (a.eval(&x), b.eval(&x));
        (v + fa * fb.conj() * w, s + fa.norm() * fb.norm() * w)
    })
}

/// Changes below this fraction of `int |m| |b|` are never flagged.
pub const GRAM_FLOOR: f64 = 1e-6;

/// Gram matrix `<m_Q, b_P>` over the window with the `(M, G, H)` bound of the
/// two parameter sets and the fitted constant of `|<m_Q, b_P>| <= C b^{MGH}`.
/// Entries whose value moves by more than 1% under one refinement are flagged.
#[allow(clippy::too_many_arguments)]
pub fn gram_matrix(
    analysis: &dyn MoleculeFamily,
    synthesis: &dyn MoleculeFamily,
    window: &LatticeWindow,
    quad: &QuadratureSpec,
    params_m: &MoleculeParams,
    params_b: &MoleculeParams,
    alpha: f64,
) -> Result<GramReport> {
    let n = window.dim;
    if analysis.dim() != n || synthesis.dim() != n {
        return Err(Error::Dimension("families and window live in different dimensions".into()));
    }
    let bound = mgh_bound(params_m, params_b, n, alpha)?;
    let cubes = window.cubes();
    let ms: Vec<MoleculeCandidate> = cubes.par_iter().map(|q| analysis.molecule(q)).collect();
    let bs: Vec<MoleculeCandidate> = cubes.par_iter().map(|q| synthesis.molecule(q)).collect();
    let fine = quad.refined();
    let size = cubes.len();
    let entries: Vec<(Complex64, Option<f64>)> = (0..size * size)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / size, k % size);
            let (a, b) = (&ms[i], &bs[j]);
            if a.is_zero() || b.is_zero() {
                return (Complex64::new(0.0, 0.0), None);
            }
            let (v, _) = pair_integral(a, b, quad);
            if let (Some(h1), Some(h2)) = (a.native_cell, b.native_cell) {
                if coarser_dyadic(h1, h2).is_some() {
                    return (v, None);
                }
            }
            let (w, scale) = pair_integral(a, b, &fine);
            let change = (w - v).norm();
            let flag = (change > 0.01 * w.norm() && change > GRAM_FLOOR * scale).then_some(change / w.norm().max(f64::MIN_POSITIVE));
            (w, flag)
        })
        .collect();
    let mgh = DefExponents::new(bound.m, bound.g, bound.h);
    let mut constant: f64 = 0.0;
    let mut worst = None;
    let mut flagged = Vec::new();
    let mut nonzero = 0;
    for (k, (v, flag)) in entries.iter().enumerate() {
        let (i, j) = (k / size, k % size);
        if v.norm() > 0.0 {
            nonzero += 1;
        }
        let ratio = v.norm() / bdef_entry(&cubes[i], &cubes[j], &mgh)?;
        if ratio > constant {
            constant = ratio;
            worst = Some((cubes[i].clone(), cubes[j].clone()));
        }
        if let Some(rel) = flag {
            flagged.push(UnderResolved { analysis: cubes[i].clone(), synthesis: cubes[j].clone(), relative_change: *rel });
        }
    }
    let dense: Vec<Complex64> = entries.into_iter().map(|(v, _)| v).collect();
    let mut matrix = AdMatrix::from_dense("gram", window.clone(), dense)?;
    matrix.certificate = Some(Certificate { exponents: mgh, constant, pairs: size * size, worst: worst.clone() });
    Ok(GramReport { bound, constant, pairs: size * size, nonzero, worst, flagged, matrix: Some(matrix) })
}

/// `<m_Q, b_P>` for every pair, as a map; convenient for sparse inspection.
pub fn gram_entries(report: &GramReport, window: &LatticeWindow) -> BTreeMap<(DyadicCube, DyadicCube), Complex64> {
    let mut out = BTreeMap::new();
    if let Some(m) = &report.matrix {
        let cubes = window.cubes();
        for q in &cubes {
            for r in &cubes {
                let v = m.entry(q, r);
                if v.norm() > 0.0 {
                    out.insert((q.clone(), r.clone()), v);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molecules::AtomFamily;
    use crate::params::derived_indices;
    use crate::wavelets::{WaveletAtomFamily, WaveletSystem};
    use proptest::prelude::*;

    fn cube(j: i32, k: &[i64]) -> DyadicCube {
        DyadicCube::new(j, k.to_vec()).unwrap()
    }

    #[test]
    fn bdef_examples() {
        let def = DefExponents::new(1.3, 0.7, 2.1);
        let q = cube(2, &[3, -1]);
        assert_eq!(bdef_entry(&q, &q, &def).unwrap(), 1.0);
        let v = bdef_entry(&cube(1, &[0]), &cube(0, &[1]), &def).unwrap();
        assert!((v - 2f64.powf(-1.3) * 2f64.powf(-0.7)).abs() < 1e-15);
        let swapped = DefExponents::new(1.3, 2.1, 0.7);
        let (a, b) = (cube(3, &[5, 1]), cube(1, &[0, 2]));
        assert!((bdef_entry(&a, &b, &def).unwrap() - bdef_entry(&b, &a, &swapped).unwrap()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn bdef_decays_with_distance(j in -3i32..4, k in -20i64..20, shift in 1i64..30) {
            let def = DefExponents::new(1.5, 0.6, 0.9);
            let q = cube(0, &[0]);
            let near = cube(j, &[k]);
            let far = cube(j, &[if k >= 0 { k + shift } else { k - shift }]);
            prop_assert!(bdef_entry(&q, &far, &def).unwrap() <= bdef_entry(&q, &near, &def).unwrap());
        }
    }

    #[test]
    fn apply_identity_delta_and_linearity() {
        let w = LatticeWindow::new(1, 0, 3, vec![0], vec![4]).unwrap();
        let t = CoeffField::random(w.clone(), 2, 7, 0);
        assert_eq!(AdMatrix::identity().apply(&t).unwrap().max_diff(&t), 0.0);
        let def = DefExponents::new(1.5, 0.8, 0.9);
        let b = AdMatrix::bdef(def);
        let r = cube(2, &[5]);
        let d = CoeffField::delta(w.clone(), r.clone(), vec![Complex64::new(2.0, -1.0), Complex64::new(0.0, 3.0)]).unwrap();
        let out = b.apply(&d).unwrap();
        for q in w.cubes() {
            let e = bdef_entry(&q, &r, &def).unwrap();
            let v = out.get(&q).unwrap();
            assert!((v[0] - Complex64::new(2.0 * e, -e)).norm() < 1e-14 && (v[1] - Complex64::new(0.0, 3.0 * e)).norm() < 1e-14);
        }
        let u = CoeffField::random(w.clone(), 2, 7, 1);
        let c = Complex64::new(0.3, -1.7);
        let lhs = b.apply(&t.scaled(c).add(&u).unwrap()).unwrap();
        let rhs = b.apply(&t).unwrap().scaled(c).add(&b.apply(&u).unwrap()).unwrap();
        assert!(lhs.max_diff(&rhs) < 1e-12);
    }

    #[test]
    fn certificate_of_scaled_model_matrix() {
        let def = DefExponents::new(2.0, 1.0, 1.0);
        let w = LatticeWindow::new(2, 0, 2, vec![0, 0], vec![2, 2]).unwrap();
        let inner = AdMatrix::bdef(def);
        let scaled = AdMatrix::new("3 B", move |q, r| inner.entry(q, r) * 3.0).certify(&def, &w, 10_000, 1).unwrap();
        let c = scaled.certificate.unwrap();
        assert!((c.constant - 3.0).abs() < 1e-12 && c.pairs == 84 * 84);
    }

    fn besov_setup() -> (SpaceParams, DerivedIndices) {
        let sp = SpaceParams::besov(0.0, 0.0, 2.0, None).unwrap();
        let di = derived_indices(&sp, 1, 0.0).unwrap();
        (sp, di)
    }

    #[test]
    fn composition_stays_inside_and_rejects_boundary() {
        let (_, di) = besov_setup();
        let w = LatticeWindow::new(1, 0, 4, vec![0], vec![8]).unwrap();
        let c = DefExponents::new(1.3, 0.8, 0.9);
        let rep = compose_certificate(&c, &c, &di, 1, &w).unwrap();
        assert!(rep.margins.iter().all(|&m| m > 0.0));
        assert_eq!(rep.certificate.pairs, 248 * 248);
        assert!(rep.certificate.constant.is_finite() && rep.certificate.constant > 0.0);
        let edge = DefExponents::new(1.0, 0.8, 0.9);
        assert!(compose_certificate(&edge, &c, &di, 1, &w).is_err());
    }

    #[test]
    fn identity_probe_is_one() {
        let (sp, _) = besov_setup();
        let ws: Vec<LatticeWindow> = (1..=3).map(|d| LatticeWindow::new(1, 0, d, vec![0], vec![4]).unwrap()).collect();
        let rep = empirical_norm(&AdMatrix::identity(), &sp, &NormSpec::Plain, &ws, 1, &Ensemble::default(), None).unwrap();
        assert!(rep.estimates.iter().all(|e| (e - 1.0).abs() < 1e-12), "{rep:?}");
    }

    #[test]
    fn probe_estimates_are_monotone() {
        let (sp, di) = besov_setup();
        let ws: Vec<LatticeWindow> = (2..=4).map(|d| LatticeWindow::new(1, 0, d, vec![0], vec![4]).unwrap()).collect();
        let b = AdMatrix::bdef(DefExponents::new(1.1, 0.6, 0.6));
        let rep = empirical_norm(&b, &sp, &NormSpec::Plain, &ws, 1, &Ensemble { random: 8, ..Default::default() }, Some(&di)).unwrap();
        assert!(rep.estimates.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)), "{rep:?}");
        let mg = rep.region_margins.unwrap();
        assert!(mg.iter().all(|m| (m - 0.1).abs() < 1e-12));
    }

    #[test]
    fn wavelet_gram_is_identity() {
        let w = LatticeWindow::new(1, 0, 3, vec![0], vec![2]).unwrap();
        let sys = Arc::new(WaveletSystem::new(4, 1, WaveletSystem::resolution_for(&w, 8)).unwrap());
        let fam = WaveletAtomFamily::new(Arc::clone(&sys), 1);
        // the re-indexed family on level j+1 is the wavelet family on level j
        let mp = MoleculeParams::new(10.0, 3.0, 10.0, 1.0);
        let rep = gram_matrix(&fam, &fam, &w, &QuadratureSpec::default(), &mp, &mp, 0.5).unwrap();
        let m = rep.matrix.unwrap();
        let cubes = w.cubes();
        let mut worst: f64 = 0.0;
        for q in &cubes {
            for r in &cubes {
                let a = fam.molecule(q);
                let b = fam.molecule(r);
                let target = if !a.is_zero() && !b.is_zero() && q == r { 1.0 } else { 0.0 };
                worst = worst.max((m.entry(q, r).re / (fam.constant * fam.constant) - target).abs());
            }
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn atom_gram_fits_one_constant_and_monotone_in_d() {
        let w = LatticeWindow::new(1, 0, 3, vec![0], vec![4]).unwrap();
        let fam = AtomFamily::new(1, 2.0, 1.0, 2.0).unwrap();
        let mp = MoleculeParams::new(20.0, 1.0, 20.0, 2.0);
        let coarse = gram_matrix(&fam, &fam, &w, &QuadratureSpec::new(4, 1), &mp, &mp, 0.5).unwrap();
        assert!(!coarse.flagged.is_empty());
        let rep = gram_matrix(&fam, &fam, &w, &QuadratureSpec::new(4, 4), &mp, &mp, 0.5).unwrap();
        assert!(rep.flagged.is_empty(), "{:?}", &rep.flagged[..rep.flagged.len().min(3)]);
        assert!(rep.constant.is_finite() && rep.nonzero > 0);
        let m = rep.matrix.as_ref().unwrap();
        let c = m.certificate.as_ref().unwrap();
        let doubled = DefExponents::new(2.0 * c.exponents.d, c.exponents.e, c.exponents.f);
        let refit = m.fit_constant(&doubled, &w, usize::MAX, 0).unwrap();
        assert!(refit.constant >= c.constant);
    }
}
