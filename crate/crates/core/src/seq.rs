//! Coefficient fields on lattice windows and the Besov/Triebel–Lizorkin-type
//! sequence norms built from the mixed `sup_P |P|^{-tau} (...)` norms.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dyadic::{pow2, DyadicCube, LatticeWindow};
use crate::error::{precondition, Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::params::{Exponent, Family, SpaceParams};
use crate::rng;
use crate::weights::{MatrixWeight, QuadratureSpec, ReducingFamily, SharedWeight};

/// Finitely supported `{t_Q}` with values in `C^m`; absent cubes are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffField {
    pub window: LatticeWindow,
    pub m: usize,
    coeffs: BTreeMap<DyadicCube, Vec<Complex64>>,
}

impl CoeffField {
    pub fn new(window: LatticeWindow, m: usize) -> Self {
        Self { window, m, coeffs: BTreeMap::new() }
    }

    pub fn insert(&mut self, q: DyadicCube, v: Vec<Complex64>) -> Result<()> {
        if v.len() != self.m {
            return Err(Error::Dimension(format!("coefficient at {q} has {} entries, expected {}", v.len(), self.m)));
        }
        if !self.window.contains(&q) {
            return Err(precondition(format!("cube {q} lies outside window {}", self.window)));
        }
        self.coeffs.insert(q, v);
        Ok(())
    }

    /// Add `v` to the coefficient at `q`.
    pub fn accumulate(&mut self, q: DyadicCube, v: &[Complex64]) -> Result<()> {
        if !self.window.contains(&q) {
            return Err(precondition(format!("cube {q} lies outside window {}", self.window)));
        }
        let e = self.coeffs.entry(q).or_insert_with(|| vec![Complex64::new(0.0, 0.0); v.len()]);
        for (a, b) in e.iter_mut().zip(v) {
            *a += b;
        }
        Ok(())
    }

    pub fn delta(window: LatticeWindow, q: DyadicCube, v: Vec<Complex64>) -> Result<Self> {
        let mut f = Self::new(window, v.len());
        f.insert(q, v)?;
        Ok(f)
    }

    /// Independent standard complex Gaussian entries on every window cube.
    pub fn random(window: LatticeWindow, m: usize, seed: u64, counter: u64) -> Self {
        let mut r = rng::stream(seed, counter);
        let mut f = Self::new(window.clone(), m);
        for q in window.cubes() {
            let v = (0..m).map(|_| rng::complex_normal(&mut r)).collect();
            f.coeffs.insert(q, v);
        }
        f
    }

    pub fn get(&self, q: &DyadicCube) -> Option<&[Complex64]> {
        self.coeffs.get(q).map(|v| v.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DyadicCube, &Vec<Complex64>)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.values().all(|v| v.iter().all(|z| z.norm() == 0.0))
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        for v in out.coeffs.values_mut() {
            for z in v.iter_mut() {
                *z *= s;
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.m != other.m {
            return Err(Error::Dimension("fields have different m".into()));
        }
        let mut out = self.clone();
        for (q, v) in &other.coeffs {
            out.accumulate(q.clone(), v)?;
        }
        Ok(out)
    }

    /// `sum_Q |t_Q|^2`.
    pub fn l2_sq(&self) -> f64 {
        self.coeffs.values().flat_map(|v| v.iter()).map(|z| z.norm_sqr()).sum()
    }

    /// Largest entrywise difference to `other` (absent entries count as zero).
    pub fn max_diff(&self, other: &Self) -> f64 {
        let zero = vec![Complex64::new(0.0, 0.0); self.m.max(other.m)];
        let mut keys: Vec<&DyadicCube> = self.coeffs.keys().chain(other.coeffs.keys()).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .map(|q| {
                let a = self.coeffs.get(q).unwrap_or(&zero);
                let b = other.coeffs.get(q).unwrap_or(&zero);
                a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Same coefficients, larger or smaller window; entries outside are dropped.
    pub fn rewindowed(&self, window: LatticeWindow) -> Self {
        let coeffs = self.coeffs.iter().filter(|(q, _)| window.contains(q)).map(|(q, v)| (q.clone(), v.clone())).collect();
        Self { window, m: self.m, coeffs }
    }

    /// Drop exact zeros.
    pub fn pruned(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(_, v)| v.iter().any(|z| z.norm() != 0.0))
            .map(|(q, v)| (q.clone(), v.clone()))
            .collect();
        Self { window: self.window.clone(), m: self.m, coeffs }
    }

    /// Per-level dense vectors of `t_Q`, row-major over the window cubes.
    fn dense_level(&self, j: i32) -> Vec<Option<&[Complex64]>> {
        let count = self.window.count_at(j);
        let mut out = vec![None; count];
        for (q, v) in self.coeffs.range(DyadicCube::raw(j, vec![i64::MIN; self.window.dim])..) {
            if q.level() != j {
                break;
            }
            if let Some(pos) = self.window.position(q) {
                out[pos] = Some(v.as_slice());
            }
        }
        out
    }
}

/// Per-level functions `g_j`, each piecewise constant on the subcells of the
/// finest window level (`sub` subcells per axis per finest cube).
#[derive(Clone, Debug)]
pub struct LevelFunctionStack {
    pub window: LatticeWindow,
    pub sub: usize,
    pub levels: Vec<Vec<f64>>,
}

/// Grid bookkeeping shared by stacks and samplers.
#[derive(Clone, Debug)]
struct CellGrid {
    dim: usize,
    per_axis: Vec<usize>,
    total: usize,
    j_max: i32,
    sub: usize,
    lo_fine: Vec<i64>,
}

impl CellGrid {
    fn new(window: &LatticeWindow, sub: usize) -> Self {
        let ext = window.extent_at(window.j_max);
        let per_axis: Vec<usize> = ext.iter().map(|e| e * sub).collect();
        let total = per_axis.iter().product();
        let (lo_fine, _) = window.bounds_at(window.j_max);
        Self { dim: window.dim, per_axis, total, j_max: window.j_max, sub, lo_fine }
    }

    fn multi(&self, flat: usize) -> Vec<usize> {
        let mut rem = flat;
        let mut idx = vec![0; self.dim];
        for a in (0..self.dim).rev() {
            idx[a] = rem % self.per_axis[a];
            rem /= self.per_axis[a];
        }
        idx
    }

    fn cell_side(&self) -> f64 {
        pow2(-self.j_max) / self.sub as f64
    }

    fn midpoint(&self, flat: usize) -> Vec<f64> {
        let h = self.cell_side();
        let l = pow2(-self.j_max);
        self.multi(flat)
            .iter()
            .zip(&self.lo_fine)
            .map(|(&i, &lo)| lo as f64 * l + (i as f64 + 0.5) * h)
            .collect()
    }

    /// Row-major position among the window's level-`j` cubes of the cube
    /// containing each cell.
    fn owner_map(&self, window: &LatticeWindow, j: i32) -> Vec<usize> {
        let block = (1usize << (self.j_max - j)) * self.sub;
        let ext = window.extent_at(j);
        (0..self.total)
            .map(|flat| {
                let idx = self.multi(flat);
                let mut pos = 0usize;
                for a in 0..self.dim {
                    pos = pos * ext[a] + idx[a] / block;
                }
                pos
            })
            .collect()
    }

    /// Relative position in `[0,1)^n` of each cell midpoint inside its level-`j` cube.
    fn relative(&self, j: i32, flat: usize) -> Vec<f64> {
        let block = (1usize << (self.j_max - j)) * self.sub;
        self.multi(flat).iter().map(|&i| ((i % block) as f64 + 0.5) / block as f64).collect()
    }
}

impl LevelFunctionStack {
    pub fn zeros(window: &LatticeWindow, sub: usize) -> Self {
        let grid = CellGrid::new(window, sub);
        let levels = window.levels().map(|_| vec![0.0; grid.total]).collect();
        Self { window: window.clone(), sub, levels }
    }

    /// Sample `g(j, x)` at cell midpoints.
    pub fn from_fn(window: &LatticeWindow, sub: usize, g: impl Fn(i32, &[f64]) -> f64 + Sync) -> Self {
        let grid = CellGrid::new(window, sub);
        let levels = window
            .levels()
            .map(|j| (0..grid.total).into_par_iter().map(|c| g(j, &grid.midpoint(c))).collect())
            .collect();
        Self { window: window.clone(), sub, levels }
    }

    /// Stack constant on each level-`j` cube, from row-major per-cube values.
    pub fn from_cube_values(window: &LatticeWindow, sub: usize, per_level: &[Vec<f64>]) -> Self {
        let grid = CellGrid::new(window, sub);
        let levels = window
            .levels()
            .zip(per_level)
            .map(|(j, vals)| grid.owner_map(window, j).into_iter().map(|o| vals[o]).collect())
            .collect();
        Self { window: window.clone(), sub, levels }
    }

    pub fn level(&self, j: i32) -> &[f64] {
        &self.levels[(j - self.window.j_min) as usize]
    }

    pub fn cell_measure(&self) -> f64 {
        (pow2(-self.window.j_max) / self.sub as f64).powi(self.window.dim as i32)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NormReport {
    pub value: f64,
    pub attaining_p: DyadicCube,
    pub boundary_flag: bool,
}

/// Sums of `vals` over the level-`j` cubes.
fn block_sums(grid: &CellGrid, window: &LatticeWindow, j: i32, vals: &[f64]) -> Vec<f64> {
    let owner = grid.owner_map(window, j);
    let mut out = vec![0.0; window.count_at(j)];
    for (o, v) in owner.iter().zip(vals) {
        out[*o] += v;
    }
    out
}

/// `sup_P |P|^{-tau} ||{g_j}_{j >= j_P}||` over window cubes `P`, with the
/// `l^q(L^p)` norm for Besov and the `L^p(l^q)` norm for Triebel–Lizorkin.
pub fn la_norm(stack: &LevelFunctionStack, sp: &SpaceParams) -> Result<NormReport> {
    sp.validate()?;
    let window = &stack.window;
    if window.count() == 0 {
        return Err(precondition("empty window"));
    }
    let grid = CellGrid::new(window, stack.sub);
    let p = sp.p;
    let vol = stack.cell_measure();
    let levels: Vec<i32> = window.levels().collect();
    // per_p[J][P]: the (p-th power) quantity over P at level J
    let per_p: Vec<Vec<f64>> = match sp.family {
        Family::Besov => {
            // s_j(P) = int_P |g_j|^p for every data level j >= J
            let lp: Vec<Vec<f64>> = stack.levels.iter().map(|g| g.iter().map(|v| v.abs().powf(p) * vol).collect()).collect();
            levels
                .par_iter()
                .map(|&big_j| {
                    let mut acc = vec![0.0; window.count_at(big_j)];
                    for (idx, &j) in levels.iter().enumerate() {
                        if j < big_j {
                            continue;
                        }
                        let s = block_sums(&grid, window, big_j, &lp[idx]);
                        for (a, v) in acc.iter_mut().zip(s) {
                            let lpn = v.powf(1.0 / p);
                            match sp.q {
                                Exponent::Finite(q) => *a += lpn.powf(q),
                                Exponent::Infinite => *a = a.max(lpn),
                            }
                        }
                    }
                    acc.into_iter()
                        .map(|a| match sp.q {
                            Exponent::Finite(q) => a.powf(1.0 / q),
                            Exponent::Infinite => a,
                        })
                        .collect()
                })
                .collect()
        }
        Family::TriebelLizorkin => {
            let mut acc = vec![0.0; grid.total];
            let mut out = vec![Vec::new(); levels.len()];
            for (idx, &big_j) in levels.iter().enumerate().rev() {
                for (a, v) in acc.iter_mut().zip(&stack.levels[idx]) {
                    match sp.q {
                        Exponent::Finite(q) => *a += v.abs().powf(q),
                        Exponent::Infinite => *a = a.max(v.abs()),
                    }
                }
                let integrand: Vec<f64> = acc
                    .iter()
                    .map(|a| {
                        let lq = match sp.q {
                            Exponent::Finite(q) => a.powf(1.0 / q),
                            Exponent::Infinite => *a,
                        };
                        lq.powf(p) * vol
                    })
                    .collect();
                out[idx] = block_sums(&grid, window, big_j, &integrand).into_iter().map(|s| s.powf(1.0 / p)).collect();
            }
            out
        }
    };
    let mut best = (f64::MIN, 0usize, 0usize);
    for (li, &j) in levels.iter().enumerate() {
        let scale = pow2(-j * window.dim as i32).powf(-sp.tau);
        for (pi, v) in per_p[li].iter().enumerate() {
            let val = scale * v;
            if val > best.0 {
                best = (val, li, pi);
            }
        }
    }
    let cube = window.cubes_at(levels[best.1]).swap_remove(best.2);
    let value = best.0.max(0.0);
    Ok(NormReport { value, boundary_flag: value > 0.0 && cube.level() == window.j_min, attaining_p: cube })
}

/// Cached `W^{1/p}` at the cell midpoints of a window.
#[derive(Clone, Debug)]
pub struct WeightSampler {
    pub window: LatticeWindow,
    pub sub: usize,
    pub p: f64,
    pub m: usize,
    mats: Vec<CMat>,
}

impl WeightSampler {
    pub fn new(w: &dyn MatrixWeight, p: f64, window: &LatticeWindow, quad: &QuadratureSpec) -> Result<Self> {
        if w.n() != window.dim {
            return Err(Error::Dimension(format!("weight on R^{} but window on R^{}", w.n(), window.dim)));
        }
        if p <= 0.0 {
            return Err(precondition(format!("p > 0 required, got {p}")));
        }
        let sub = quad.per_axis();
        let grid = CellGrid::new(window, sub);
        let mats = (0..grid.total)
            .into_par_iter()
            .map(|c| linalg::herm_power(&w.eval(&grid.midpoint(c)), 1.0 / p))
            .collect();
        Ok(Self { window: window.clone(), sub, p, m: w.m(), mats })
    }
}

fn check_field(t: &CoeffField, window: &LatticeWindow, m: usize) -> Result<()> {
    if t.m != m {
        return Err(Error::Dimension(format!("field has m = {} but the weight has m = {m}", t.m)));
    }
    if t.window.dim != window.dim {
        return Err(Error::Dimension("field and weight live in different dimensions".into()));
    }
    Ok(())
}

/// Norm of `g_j(x) = 2^{js} |W^{1/p}(x) sum_{Q in level j} t_Q |Q|^{-1/2} 1_Q(x)|`.
pub fn seq_norm_weighted_with(t: &CoeffField, sampler: &WeightSampler, sp: &SpaceParams) -> Result<NormReport> {
    check_field(t, &sampler.window, sampler.m)?;
    if t.window != sampler.window {
        return Err(precondition(format!("field window {} differs from sampler window {}", t.window, sampler.window)));
    }
    if (sampler.p - sp.p).abs() > 0.0 {
        return Err(precondition(format!("sampler built for p = {} but space has p = {}", sampler.p, sp.p)));
    }
    let window = &sampler.window;
    let grid = CellGrid::new(window, sampler.sub);
    let n = window.dim as i32;
    let levels = window
        .levels()
        .map(|j| {
            let dense = t.dense_level(j);
            let amp = pow2(j).powf(sp.s) * pow2(j * n).sqrt();
            let vecs: Vec<Option<CVec>> = dense.iter().map(|v| v.map(|v| CVec::from_column_slice(v))).collect();
            let owner = grid.owner_map(window, j);
            owner
                .par_iter()
                .zip(sampler.mats.par_iter())
                .map(|(o, mat)| match &vecs[*o] {
                    Some(v) => amp * (mat * v).norm(),
                    None => 0.0,
                })
                .collect()
        })
        .collect();
    let stack = LevelFunctionStack { window: window.clone(), sub: sampler.sub, levels };
    la_norm(&stack, sp)
}

pub fn seq_norm_weighted(t: &CoeffField, w: &dyn MatrixWeight, sp: &SpaceParams, quad: &QuadratureSpec) -> Result<NormReport> {
    let sampler = WeightSampler::new(w, sp.p, &t.window, quad)?;
    seq_norm_weighted_with(t, &sampler, sp)
}

/// Norm of `g_j = 2^{js} sum_{Q in level j} |A_Q t_Q| |Q|^{-1/2} 1_Q`.
pub fn seq_norm_averaged(t: &CoeffField, fam: &ReducingFamily, sp: &SpaceParams) -> Result<NormReport> {
    if t.m != fam.m {
        return Err(Error::Dimension(format!("field has m = {} but the family has m = {}", t.m, fam.m)));
    }
    let window = &t.window;
    let n = window.dim as i32;
    let mut per_level = Vec::new();
    for j in window.levels() {
        let amp = pow2(j).powf(sp.s) * pow2(j * n).sqrt();
        let mut vals = vec![0.0; window.count_at(j)];
        let cubes = window.cubes_at(j);
        for (pos, v) in t.dense_level(j).into_iter().enumerate() {
            if let Some(v) = v {
                if v.iter().all(|z| z.norm() == 0.0) {
                    continue;
                }
                let a = fam.get(&cubes[pos])?;
                vals[pos] = amp * (a * CVec::from_column_slice(v)).norm();
            }
        }
        per_level.push(vals);
    }
    la_norm(&LevelFunctionStack::from_cube_values(window, 1, &per_level), sp)
}

/// Norm of `g_j = 2^{js} sum |t_Q| |Q|^{-1/2} 1_Q` (unweighted).
pub fn seq_norm_plain(t: &CoeffField, sp: &SpaceParams) -> Result<NormReport> {
    let fam = ReducingFamily::identity(t.m, sp.p, &t.window);
    seq_norm_averaged(t, &fam, sp)
}

/// Which of the equivalent sequence norms to evaluate.
#[derive(Clone, Copy, Debug)]
pub enum NormRoute<'a> {
    Plain,
    Weighted(&'a WeightSampler),
    Averaged(&'a ReducingFamily),
}

impl NormRoute<'_> {
    pub fn eval(&self, t: &CoeffField, sp: &SpaceParams) -> Result<NormReport> {
        match self {
            NormRoute::Plain => seq_norm_plain(t, sp),
            NormRoute::Weighted(s) => seq_norm_weighted_with(t, s, sp),
            NormRoute::Averaged(f) => seq_norm_averaged(t, f, sp),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NormRoute::Plain => "plain",
            NormRoute::Weighted(_) => "weighted",
            NormRoute::Averaged(_) => "averaged",
        }
    }
}

/// A norm choice that can be prepared on any window.
#[derive(Clone, Debug)]
pub enum NormSpec {
    Plain,
    Weighted { weight: SharedWeight, quad: QuadratureSpec },
    Averaged { weight: SharedWeight, quad: QuadratureSpec },
}

/// A [`NormSpec`] with its samplers or reducing operators built for one window.
#[derive(Clone, Debug)]
pub enum PreparedNorm {
    Plain,
    Weighted(WeightSampler),
    Averaged(ReducingFamily),
}

impl NormSpec {
    pub fn prepare(&self, window: &LatticeWindow, p: f64) -> Result<PreparedNorm> {
        Ok(match self {
            NormSpec::Plain => PreparedNorm::Plain,
            NormSpec::Weighted { weight, quad } => PreparedNorm::Weighted(WeightSampler::new(weight.as_ref(), p, window, quad)?),
            NormSpec::Averaged { weight, quad } => PreparedNorm::Averaged(ReducingFamily::build(weight.as_ref(), p, window, quad)?),
        })
    }
}

impl PreparedNorm {
    pub fn route(&self) -> NormRoute<'_> {
        match self {
            PreparedNorm::Plain => NormRoute::Plain,
            PreparedNorm::Weighted(s) => NormRoute::Weighted(s),
            PreparedNorm::Averaged(f) => NormRoute::Averaged(f),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceReport {
    pub ratios: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub spread: f64,
    pub excluded: usize,
}

/// Ratios weighted/averaged over an ensemble, skipping zero-norm fields.
pub fn equivalence_report(
    fields: &[CoeffField],
    sampler: &WeightSampler,
    fam: &ReducingFamily,
    sp: &SpaceParams,
) -> Result<EquivalenceReport> {
    if fields.is_empty() {
        return Err(precondition("equivalence report needs a nonempty ensemble"));
    }
    let pairs: Vec<Option<f64>> = fields
        .par_iter()
        .map(|t| {
            let a = seq_norm_weighted_with(t, sampler, sp)?.value;
            let b = seq_norm_averaged(t, fam, sp)?.value;
            Ok(if a == 0.0 || b == 0.0 { None } else { Some(a / b) })
        })
        .collect::<Result<_>>()?;
    let excluded = pairs.iter().filter(|r| r.is_none()).count();
    let ratios: Vec<f64> = pairs.into_iter().flatten().collect();
    if ratios.is_empty() {
        return Err(precondition("every field in the ensemble has zero norm"));
    }
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(EquivalenceReport { spread: max / min, min, max, excluded, ratios })
}

/// Norm of `g_j = 2^{j(s + n/2)} sum |t_Q| 1_{E_Q}` for scalar `t`, where
/// `select(Q, y)` says whether the point with relative position `y in [0,1)^n`
/// inside `Q` belongs to `E_Q`. Every `E_Q` must fill at least `delta |Q|`.
pub fn subset_norm(
    t: &CoeffField,
    select: &(dyn Fn(&DyadicCube, &[f64]) -> bool + Sync),
    delta: f64,
    sp: &SpaceParams,
    sub: usize,
) -> Result<NormReport> {
    if sp.family != Family::TriebelLizorkin {
        return Err(precondition("subset norms are defined for the Triebel–Lizorkin family"));
    }
    if t.m != 1 {
        return Err(Error::Dimension("subset norm needs a scalar field".into()));
    }
    let window = &t.window;
    let grid = CellGrid::new(window, sub);
    let n = window.dim as i32;
    let mut levels = Vec::new();
    for j in window.levels() {
        let dense = t.dense_level(j);
        let cubes = window.cubes_at(j);
        let owner = grid.owner_map(window, j);
        let amp = pow2(j).powf(sp.s) * pow2(j * n).sqrt();
        let inside: Vec<bool> =
            (0..grid.total).into_par_iter().map(|c| select(&cubes[owner[c]], &grid.relative(j, c))).collect();
        let mut filled = vec![0usize; cubes.len()];
        for (o, b) in owner.iter().zip(&inside) {
            if *b {
                filled[*o] += 1;
            }
        }
        let cells_per_cube = grid.total / cubes.len();
        for (pos, v) in dense.iter().enumerate() {
            if v.is_some() && (filled[pos] as f64) < delta * cells_per_cube as f64 - 1e-9 {
                return Err(precondition(format!(
                    "subset in {} fills {}/{} of the cube, below delta = {delta}",
                    cubes[pos], filled[pos], cells_per_cube
                )));
            }
        }
        levels.push(
            owner
                .iter()
                .zip(&inside)
                .map(|(o, b)| match (b, dense[*o]) {
                    (true, Some(v)) => amp * v[0].norm(),
                    _ => 0.0,
                })
                .collect(),
        );
    }
    la_norm(&LevelFunctionStack { window: window.clone(), sub, levels }, sp)
}

/// `2^{(1/p - 1)_+ + (1/q - 1)_+}`.
pub fn quasi_triangle_constant(p: f64, q: &Exponent<f64>) -> f64 {
    let a = (1.0 / p - 1.0).max(0.0);
    let b = (q.recip() - 1.0).max(0.0);
    2f64.powf(a + b)
}

/// `|Q|^{-tau - s/n + 1/p - 1/2}`, the norm of a unit coefficient at `Q` when
/// the supremum is attained at `P = Q`.
pub fn single_cube_norm(q: &DyadicCube, sp: &SpaceParams) -> f64 {
    let n = q.dim() as f64;
    q.measure().powf(-sp.tau - sp.s / n + 1.0 / sp.p - 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{ConstantWeight, DiagPowerWeight};

    fn one(v: f64) -> Vec<Complex64> {
        vec![Complex64::new(v, 0.0)]
    }

    fn cube(j: i32, k: &[i64]) -> DyadicCube {
        DyadicCube::new(j, k.to_vec()).unwrap()
    }

    #[test]
    fn zero_field_has_zero_norm() {
        let w = LatticeWindow::unit(1, 3);
        let t = CoeffField::new(w, 1);
        let sp = SpaceParams::besov(0.5, 0.1, 2.0, Some(1.0)).unwrap();
        assert_eq!(seq_norm_plain(&t, &sp).unwrap().value, 0.0);
    }

    #[test]
    fn single_coefficient_matches_closed_form() {
        let w = LatticeWindow::unit(2, 3);
        let q = cube(2, &[1, 3]);
        let t = CoeffField::delta(w, q.clone(), one(1.0)).unwrap();
        for sp in [
            SpaceParams::besov(0.7, 0.2, 1.5, Some(2.0)).unwrap(),
            SpaceParams::triebel(-0.3, 0.4, 0.8, None).unwrap(),
        ] {
            let r = seq_norm_weighted(&t, &ConstantWeight::identity(1, 2), &sp, &QuadratureSpec::new(1, 0)).unwrap();
            let expect = single_cube_norm(&q, &sp);
            assert!((r.value / expect - 1.0).abs() < 1e-12, "{} vs {}", r.value, expect);
            assert_eq!(r.attaining_p, q);
        }
    }

    #[test]
    fn weight_scaling_by_two_to_the_p() {
        let w = LatticeWindow::unit(1, 3);
        let t = CoeffField::random(w.clone(), 2, 3, 0);
        let sp = SpaceParams::besov(0.3, 0.0, 1.5, Some(1.0)).unwrap();
        let base = DiagPowerWeight::radial(1, vec![0.5, -0.3], 0.01);
        let a = seq_norm_weighted(&t, &base, &sp, &QuadratureSpec::new(2, 0)).unwrap().value;
        let wfn = crate::weights::ScaledWeight { factor: 2f64.powf(1.5), base: std::sync::Arc::new(base) };
        let b = seq_norm_weighted(&t, &wfn, &sp, &QuadratureSpec::new(2, 0)).unwrap().value;
        assert!((b / a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn besov_equals_triebel_when_p_equals_q() {
        let w = LatticeWindow::unit(1, 4);
        let t = CoeffField::random(w, 1, 5, 0);
        let b = SpaceParams::besov(0.4, 0.15, 1.7, Some(1.7)).unwrap();
        let f = SpaceParams::triebel(0.4, 0.15, 1.7, Some(1.7)).unwrap();
        let nb = seq_norm_plain(&t, &b).unwrap().value;
        let nf = seq_norm_plain(&t, &f).unwrap().value;
        assert!((nb / nf - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_disjoint_cubes_add_in_lp() {
        let w = LatticeWindow::unit(1, 2);
        let mut t = CoeffField::new(w, 1);
        t.insert(cube(2, &[0]), one(1.0)).unwrap();
        t.insert(cube(2, &[3]), one(2.0)).unwrap();
        let sp = SpaceParams::besov(0.5, 0.0, 1.5, Some(1.5)).unwrap();
        let a = single_cube_norm(&cube(2, &[0]), &sp);
        let expect = (a.powf(1.5) + (2.0 * a).powf(1.5)).powf(1.0 / 1.5);
        assert!((seq_norm_plain(&t, &sp).unwrap().value / expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn middle_third_subsets() {
        let w = LatticeWindow::unit(2, 2);
        let q = cube(1, &[1, 0]);
        let t = CoeffField::delta(w, q.clone(), one(1.0)).unwrap();
        let sp = SpaceParams::triebel(0.2, 0.1, 1.5, Some(2.0)).unwrap();
        let full = seq_norm_plain(&t, &sp).unwrap().value;
        let all = subset_norm(&t, &|_, _| true, 1.0, &sp, 3).unwrap().value;
        assert!((all / full - 1.0).abs() < 1e-12);
        let third = |_: &DyadicCube, y: &[f64]| y[1] >= 1.0 / 3.0 && y[1] < 2.0 / 3.0;
        let r = subset_norm(&t, &third, 1.0 / 3.0, &sp, 3).unwrap().value / full;
        assert!((r - (1.0f64 / 3.0).powf(1.0 / 1.5)).abs() < 1e-12);
        assert!(subset_norm(&t, &third, 0.5, &sp, 3).is_err());
    }

    #[test]
    fn quasi_triangle_values() {
        assert_eq!(quasi_triangle_constant(2.0, &Exponent::Infinite), 1.0);
        assert_eq!(quasi_triangle_constant(0.5, &Exponent::Finite(0.5)), 4.0);
    }
}
