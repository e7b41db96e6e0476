//! Dyadic cubes `2^{-j}([0,1)^n + k)` and finite lattice windows.
//!
//! Levels and indices are integers; side lengths are materialized as `f64`
//! only when a caller asks for geometry. With `|j| <= 40` every corner and
//! side is an exact binary fraction.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{precondition, Error, Result};

pub const MAX_LEVEL: i32 = 40;

/// `2^e` for small integer `e`, exact.
#[inline]
pub fn pow2(e: i32) -> f64 {
    2f64.powi(e)
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct DyadicCube {
    level: i32,
    index: Vec<i64>,
}

impl Ord for DyadicCube {
    fn cmp(&self, other: &Self) -> Ordering {
        self.level
            .cmp(&other.level)
            .then_with(|| self.index.cmp(&other.index))
    }
}

impl PartialOrd for DyadicCube {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl DyadicCube {
    pub fn new(level: i32, index: Vec<i64>) -> Result<Self> {
        if index.is_empty() {
            return Err(precondition("cube dimension must be positive"));
        }
        if level.abs() > MAX_LEVEL {
            return Err(precondition(format!("|level| <= {MAX_LEVEL} required, got {level}")));
        }
        Ok(Self { level, index })
    }

    /// Unchecked constructor for internal use where the level is known to be valid.
    pub(crate) fn raw(level: i32, index: Vec<i64>) -> Self {
        debug_assert!(!index.is_empty());
        Self { level, index }
    }

    pub fn unit(n: usize) -> Self {
        Self::raw(0, vec![0; n])
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn level(&self) -> i32 {
        self.level
    }

    pub fn index(&self) -> &[i64] {
        &self.index
    }

    pub fn side(&self) -> f64 {
        pow2(-self.level)
    }

    pub fn measure(&self) -> f64 {
        pow2(-self.level * self.dim() as i32)
    }

    pub fn corner(&self) -> Vec<f64> {
        let l = self.side();
        self.index.iter().map(|&k| k as f64 * l).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        let l = self.side();
        self.index.iter().map(|&k| (k as f64 + 0.5) * l).collect()
    }

    /// Half-open membership, exact: `floor(x_i 2^j) == k_i`.
    pub fn contains_point(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        let s = pow2(self.level);
        x.iter()
            .zip(&self.index)
            .all(|(&xi, &k)| (xi * s).floor() == k as f64)
    }

    /// Index of the level-`j` cube containing `x`.
    pub fn containing(x: &[f64], level: i32) -> Self {
        let s = pow2(level);
        Self::raw(level, x.iter().map(|&xi| (xi * s).floor() as i64).collect())
    }

    pub fn parent(&self) -> Self {
        self.ancestor(self.level - 1)
    }

    /// Dyadic ancestor at a coarser (or equal) level.
    pub fn ancestor(&self, level: i32) -> Self {
        assert!(level <= self.level, "ancestor level must not exceed cube level");
        let shift = (self.level - level) as u32;
        Self::raw(level, self.index.iter().map(|&k| k >> shift).collect())
    }

    /// The `2^n` children in lexicographic index order (last coordinate fastest).
    pub fn children(&self) -> Vec<Self> {
        let n = self.dim();
        (0..1usize << n).map(|c| self.child(c)).collect()
    }

    /// Child number `c` in `0..2^n`; bit `n-1-i` of `c` is the offset along axis `i`.
    pub fn child(&self, c: usize) -> Self {
        let n = self.dim();
        let index = self
            .index
            .iter()
            .enumerate()
            .map(|(i, &k)| 2 * k + ((c >> (n - 1 - i)) & 1) as i64)
            .collect();
        Self::raw(self.level + 1, index)
    }

    /// Inverse of [`DyadicCube::child`]: the position of `self` among its parent's children.
    pub fn child_position(&self) -> usize {
        let n = self.dim();
        self.index.iter().enumerate().map(|(i, &k)| ((k & 1) as usize) << (n - 1 - i)).sum()
    }

    pub fn contains_cube(&self, other: &Self) -> bool {
        other.dim() == self.dim() && other.level >= self.level && other.ancestor(self.level) == *self
    }

    /// `I(Q)`: drop the last coordinate.
    pub fn base(&self) -> Result<Self> {
        if self.dim() < 2 {
            return Err(precondition("base cube needs n >= 2"));
        }
        Ok(Self::raw(self.level, self.index[..self.dim() - 1].to_vec()))
    }

    pub fn last_index(&self) -> i64 {
        *self.index.last().unwrap()
    }

    pub fn translate(&self, shift: &[i64]) -> Self {
        Self::raw(
            self.level,
            self.index.iter().zip(shift).map(|(a, b)| a + b).collect(),
        )
    }
}

impl fmt::Display for DyadicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.level)?;
        for (i, k) in self.index.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        Ok(())
    }
}

impl FromStr for DyadicCube {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (j, ks) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("cube literal `{s}` lacks ':'")))?;
        let level = j
            .trim()
            .parse::<i32>()
            .map_err(|e| Error::Parse(format!("cube level in `{s}`: {e}")))?;
        let index = ks
            .split(',')
            .map(|k| k.trim().parse::<i64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("cube index in `{s}`: {e}")))?;
        Self::new(level, index)
    }
}

impl Serialize for DyadicCube {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DyadicCube {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn check_dims(q: &DyadicCube, r: &DyadicCube) -> Result<()> {
    if q.dim() != r.dim() {
        return Err(Error::Dimension(format!("cubes {q} and {r} live in different dimensions")));
    }
    Ok(())
}

/// `1 + |x_Q - x_R| / max(l(Q), l(R))`.
pub fn distance_term(q: &DyadicCube, r: &DyadicCube) -> Result<f64> {
    check_dims(q, r)?;
    let (a, b) = (q.corner(), r.corner());
    let dist = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    Ok(1.0 + dist / q.side().max(r.side()))
}

/// `Q(I,k) = I x [l(I)k, l(I)(k+1))`.
pub fn stack_cube(base: &DyadicCube, k: i64) -> DyadicCube {
    let mut index = base.index.clone();
    index.push(k);
    DyadicCube::raw(base.level, index)
}

/// Smallest `m >= 0` with `2^m >= v` (for `v >= 1`).
fn ceil_log2(v: u64) -> i32 {
    debug_assert!(v >= 1);
    (64 - (v - 1).leading_zeros()) as i32
}

/// A cube of `R^n` containing every `Q(I,k)` with `I` a dyadic subcube of `R`.
///
/// Side `2^{ceil(log2(k+1))} l(R)` for `k >= 0` and `2^{ceil(log2(-k))} l(R)` for
/// `k <= -1`; it sits on the slab `[0, .)` or `[-., 0)` above the ancestor of `R`.
pub fn covering_cube(r: &DyadicCube, k: i64) -> DyadicCube {
    let (m, last) = if k >= 0 {
        (ceil_log2(k as u64 + 1), 0)
    } else {
        (ceil_log2(k.unsigned_abs()), -1)
    };
    let anc = r.ancestor(r.level - m);
    stack_cube(&anc, last)
}

/// `|Q|^{-1/2} 1_Q(x)`.
pub fn normalized_indicator(q: &DyadicCube, x: &[f64]) -> f64 {
    if q.contains_point(x) {
        q.measure().powf(-0.5)
    } else {
        0.0
    }
}

/// A finite truncation of the dyadic lattice: levels `j_min..=j_max` over the
/// spatial box `prod_i [lo_i, hi_i) 2^{-j_min}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeWindow {
    pub dim: usize,
    pub j_min: i32,
    pub j_max: i32,
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl LatticeWindow {
    pub fn new(dim: usize, j_min: i32, j_max: i32, lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if dim == 0 {
            return Err(precondition("window dimension must be positive"));
        }
        if j_min > j_max {
            return Err(precondition(format!("window needs j_min <= j_max, got {j_min} > {j_max}")));
        }
        if j_min.abs() > MAX_LEVEL || j_max.abs() > MAX_LEVEL {
            return Err(precondition(format!("window levels must satisfy |j| <= {MAX_LEVEL}")));
        }
        if lo.len() != dim || hi.len() != dim {
            return Err(Error::Dimension("window box bounds must have one entry per axis".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            return Err(precondition("window box must be nonempty on every axis"));
        }
        Ok(Self { dim, j_min, j_max, lo, hi })
    }

    /// Window over the unit cube `[0,1)^n` at levels `0..=depth`.
    pub fn unit(dim: usize, depth: i32) -> Self {
        Self::new(dim, 0, depth, vec![0; dim], vec![1; dim]).expect("valid unit window")
    }

    /// Parse `j_min:j_max:box` where `box` is `lo..hi` (broadcast to every axis)
    /// or `lo1,..,lon..hi1,..,hin`, in level-`j_min` index units.
    pub fn parse(spec: &str, dim: usize) -> Result<Self> {
        let parts: Vec<&str> = spec.trim().splitn(3, ':').collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!("window `{spec}` must look like j_min:j_max:lo..hi")));
        }
        let j_min = parts[0]
            .trim()
            .parse::<i32>()
            .map_err(|e| Error::Parse(format!("window j_min: {e}")))?;
        let j_max = parts[1]
            .trim()
            .parse::<i32>()
            .map_err(|e| Error::Parse(format!("window j_max: {e}")))?;
        let (lo, hi) = parts[2]
            .split_once("..")
            .ok_or_else(|| Error::Parse(format!("window box `{}` lacks `..`", parts[2])))?;
        let list = |s: &str| -> Result<Vec<i64>> {
            let v = s
                .split(',')
                .map(|t| t.trim().parse::<i64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("window box: {e}")))?;
            match v.len() {
                1 => Ok(vec![v[0]; dim]),
                l if l == dim => Ok(v),
                l => Err(Error::Parse(format!("window box has {l} bounds for dimension {dim}"))),
            }
        };
        Self::new(dim, j_min, j_max, list(lo)?, list(hi)?)
    }

    pub fn depth(&self) -> i32 {
        self.j_max - self.j_min
    }

    pub fn with_levels(&self, j_min: i32, j_max: i32) -> Result<Self> {
        let (lo, hi) = if j_min <= self.j_min {
            let s = (self.j_min - j_min) as u32;
            // keep the same spatial box only if it stays lattice-aligned
            let lo: Vec<i64> = self.lo.iter().map(|&a| a.div_euclid(1 << s)).collect();
            let hi: Vec<i64> = self.hi.iter().map(|&b| -((-b).div_euclid(1 << s))).collect();
            (lo, hi)
        } else {
            let s = (j_min - self.j_min) as u32;
            (
                self.lo.iter().map(|&a| a << s).collect(),
                self.hi.iter().map(|&b| b << s).collect(),
            )
        };
        Self::new(self.dim, j_min, j_max, lo, hi)
    }

    pub fn with_depth(&self, depth: i32) -> Result<Self> {
        Self::new(self.dim, self.j_min, self.j_min + depth, self.lo.clone(), self.hi.clone())
    }

    pub fn levels(&self) -> std::ops::RangeInclusive<i32> {
        self.j_min..=self.j_max
    }

    /// Index bounds `[lo, hi)` per axis at level `j`.
    pub fn bounds_at(&self, j: i32) -> (Vec<i64>, Vec<i64>) {
        let s = (j - self.j_min) as u32;
        (
            self.lo.iter().map(|&a| a << s).collect(),
            self.hi.iter().map(|&b| b << s).collect(),
        )
    }

    /// Number of cubes per axis at level `j`.
    pub fn extent_at(&self, j: i32) -> Vec<usize> {
        let (lo, hi) = self.bounds_at(j);
        lo.iter().zip(&hi).map(|(a, b)| (b - a) as usize).collect()
    }

    pub fn count_at(&self, j: i32) -> usize {
        self.extent_at(j).iter().product()
    }

    pub fn count(&self) -> usize {
        self.levels().map(|j| self.count_at(j)).sum()
    }

    /// Cubes at level `j` in row-major order (last axis fastest).
    pub fn cubes_at(&self, j: i32) -> Vec<DyadicCube> {
        let (lo, _) = self.bounds_at(j);
        let ext = self.extent_at(j);
        let total: usize = ext.iter().product();
        let mut out = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut idx = vec![0i64; self.dim];
            for a in (0..self.dim).rev() {
                idx[a] = lo[a] + (rem % ext[a]) as i64;
                rem /= ext[a];
            }
            out.push(DyadicCube::raw(j, idx));
        }
        out
    }

    pub fn cubes(&self) -> Vec<DyadicCube> {
        self.levels().flat_map(|j| self.cubes_at(j)).collect()
    }

    /// Row-major position of `q` among the level-`q.level()` cubes, if inside.
    pub fn position(&self, q: &DyadicCube) -> Option<usize> {
        if !self.contains(q) {
            return None;
        }
        let (lo, _) = self.bounds_at(q.level());
        let ext = self.extent_at(q.level());
        let mut flat = 0usize;
        for a in 0..self.dim {
            flat = flat * ext[a] + (q.index()[a] - lo[a]) as usize;
        }
        Some(flat)
    }

    /// Position of `q` in [`Self::cubes`].
    pub fn global_position(&self, q: &DyadicCube) -> Option<usize> {
        let within = self.position(q)?;
        Some((self.j_min..q.level()).map(|j| self.count_at(j)).sum::<usize>() + within)
    }

    pub fn contains(&self, q: &DyadicCube) -> bool {
        if q.dim() != self.dim || q.level() < self.j_min || q.level() > self.j_max {
            return false;
        }
        let (lo, hi) = self.bounds_at(q.level());
        q.index()
            .iter()
            .zip(lo.iter().zip(&hi))
            .all(|(k, (a, b))| k >= a && k < b)
    }

    /// Whether the closure of `q` meets the boundary of the window box.
    pub fn touches_boundary(&self, q: &DyadicCube) -> bool {
        let (lo, hi) = self.bounds_at(q.level());
        q.index()
            .iter()
            .zip(lo.iter().zip(&hi))
            .any(|(k, (a, b))| *k == *a || *k == *b - 1)
    }

    pub fn box_lower(&self) -> Vec<f64> {
        let l = pow2(-self.j_min);
        self.lo.iter().map(|&a| a as f64 * l).collect()
    }

    pub fn box_upper(&self) -> Vec<f64> {
        let l = pow2(-self.j_min);
        self.hi.iter().map(|&b| b as f64 * l).collect()
    }
}

impl fmt::Display for LatticeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[i64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        write!(f, "{}:{}:{}..{}", self.j_min, self.j_max, join(&self.lo), join(&self.hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cube(j: i32, k: &[i64]) -> DyadicCube {
        DyadicCube::new(j, k.to_vec()).unwrap()
    }

    #[test]
    fn children_of_unit_interval() {
        assert_eq!(cube(0, &[0]).children(), vec![cube(1, &[0]), cube(1, &[1])]);
    }

    #[test]
    fn children_of_unit_square_are_lexicographic() {
        let ch = cube(0, &[0, 0]).children();
        let idx: Vec<Vec<i64>> = ch.iter().map(|c| c.index().to_vec()).collect();
        assert_eq!(idx, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert!(ch.iter().all(|c| c.level() == 1));
    }

    #[test]
    fn distance_term_examples() {
        let q = cube(1, &[0]);
        assert_eq!(distance_term(&q, &q).unwrap(), 1.0);
        assert_eq!(distance_term(&q, &cube(0, &[1])).unwrap(), 2.0);
        assert!(distance_term(&q, &cube(0, &[0, 0])).is_err());
    }

    #[test]
    fn stack_cube_examples() {
        let s = stack_cube(&cube(0, &[0]), 0);
        assert_eq!(s, cube(0, &[0, 0]));
        let s = stack_cube(&cube(2, &[1]), -3);
        assert_eq!(s.level(), 2);
        let lo = s.corner()[1];
        assert_eq!((lo, lo + s.side()), (-0.75, -0.5));
        assert_eq!(s.base().unwrap(), cube(2, &[1]));
    }

    #[test]
    fn covering_cube_sides() {
        let r = cube(3, &[5]);
        assert_eq!(covering_cube(&r, 0).side(), r.side());
        assert_eq!(covering_cube(&r, 3).side(), 4.0 * r.side());
        assert_eq!(covering_cube(&r, -3).side(), 4.0 * r.side());
        assert_eq!(covering_cube(&r, -1).side(), r.side());
        assert_eq!(covering_cube(&r, 1).side(), 2.0 * r.side());
    }

    #[test]
    fn normalized_indicator_values() {
        assert_eq!(normalized_indicator(&cube(0, &[0]), &[0.5]), 1.0);
        assert_eq!(normalized_indicator(&cube(1, &[0]), &[0.25]), 2f64.sqrt());
        assert_eq!(normalized_indicator(&cube(1, &[0]), &[0.5]), 0.0);
    }

    #[test]
    fn cube_literal_round_trip() {
        let q = cube(-3, &[4, -7]);
        assert_eq!(q.to_string(), "-3:4,-7");
        assert_eq!("-3:4,-7".parse::<DyadicCube>().unwrap(), q);
        assert!("3;1".parse::<DyadicCube>().is_err());
        assert!("41:0".parse::<DyadicCube>().is_err());
    }

    #[test]
    fn window_parse_and_tiling() {
        let w = LatticeWindow::parse("1:3:0..2", 2).unwrap();
        assert_eq!(w.count_at(1), 4);
        assert_eq!(w.count_at(3), 64);
        assert_eq!(w.count(), 4 + 16 + 64);
        for j in w.levels() {
            let cubes = w.cubes_at(j);
            // every cube's descendants at the finest level are in the window, and
            // the level partitions the box: total measure equals box measure
            let m: f64 = cubes.iter().map(|c| c.measure()).sum();
            assert_eq!(m, 1.0);
            for (pos, c) in cubes.iter().enumerate() {
                assert_eq!(w.position(c), Some(pos));
            }
        }
        for (pos, c) in w.cubes().iter().enumerate() {
            assert_eq!(w.global_position(c), Some(pos));
        }
        assert!(LatticeWindow::parse("3:1:0..1", 1).is_err());
        assert!(LatticeWindow::parse("0:1:1..1", 1).is_err());
    }

    #[test]
    fn covering_cube_contains_all_stacks_and_is_tight() {
        for rj in [0, 2] {
            for rk in [-2i64, 0, 3] {
                let r = cube(rj, &[rk]);
                for k in -16i64..=16 {
                    let p = covering_cube(&r, k);
                    let half = p.children();
                    let mut fits = vec![true; half.len()];
                    for depth in 0..=3 {
                        let j = rj + depth;
                        for ik in (rk << depth)..((rk + 1) << depth) {
                            let q = stack_cube(&cube(j, &[ik]), k);
                            assert!(p.contains_cube(&q), "{q} not in {p}");
                            for (f, h) in fits.iter_mut().zip(&half) {
                                *f &= h.contains_cube(&q);
                            }
                        }
                    }
                    let smaller_fails = !fits.iter().any(|&f| f);
                    assert!(smaller_fails, "covering cube for k={k} is not tight");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn children_partition_parent(j in -5i32..6, k0 in -20i64..20, k1 in -20i64..20) {
            let q = cube(j, &[k0, k1]);
            let ch = q.children();
            let l = q.side();
            let c = q.corner();
            // grid of points at a resolution finer than the children
            for a in 0..8 {
                for b in 0..8 {
                    let x = [c[0] + (a as f64 + 0.5) * l / 8.0, c[1] + (b as f64 + 0.5) * l / 8.0];
                    prop_assert!(q.contains_point(&x));
                    let hits = ch.iter().filter(|h| h.contains_point(&x)).count();
                    prop_assert_eq!(hits, 1);
                }
            }
            for h in &ch {
                prop_assert_eq!(h.parent(), q.clone());
            }
        }

        #[test]
        fn distance_term_symmetric(j1 in -4i32..5, j2 in -4i32..5, a in -30i64..30, b in -30i64..30) {
            let q = cube(j1, &[a]);
            let r = cube(j2, &[b]);
            let d1 = distance_term(&q, &r).unwrap();
            prop_assert_eq!(d1, distance_term(&r, &q).unwrap());
            prop_assert!(d1 >= 1.0);
        }

        #[test]
        fn stack_base_round_trip(j in -10i32..10, a in -100i64..100, b in -100i64..100, k in -50i64..50) {
            let i = cube(j, &[a, b]);
            let q = stack_cube(&i, k);
            prop_assert_eq!(q.base().unwrap(), i);
            prop_assert_eq!(q.last_index(), k);
        }
    }
}
