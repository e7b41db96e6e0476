//! Parameter calculus for the Besov-type and Triebel–Lizorkin-type scales:
//! rounding functions, derived indices, criticality, molecule parameter sets
//! and the admissibility regions for almost diagonal and CZ operators.
//!
//! Everything is generic over [`Scalar`] so the same code runs in `f64` and in
//! exact rationals (`BigRational`).

use std::fmt;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::scalar::{rational, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "B")]
    Besov,
    #[serde(rename = "F")]
    TriebelLizorkin,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Besov => "B",
            Family::TriebelLizorkin => "F",
        })
    }
}

/// A summability exponent in `(0, inf]`; infinity is its own variant.
#[derive(Clone, Debug, PartialEq)]
pub enum Exponent<T> {
    Finite(T),
    Infinite,
}

impl<T: Scalar> Exponent<T> {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Exponent::Infinite)
    }

    /// `1/q`, zero for `q = inf`.
    pub fn recip(&self) -> T {
        match self {
            Exponent::Finite(q) => q.recip(),
            Exponent::Infinite => T::zero(),
        }
    }

    pub fn finite(&self) -> Option<&T> {
        match self {
            Exponent::Finite(q) => Some(q),
            Exponent::Infinite => None,
        }
    }

    pub fn map<U, F: Fn(&T) -> U>(&self, f: F) -> Exponent<U> {
        match self {
            Exponent::Finite(q) => Exponent::Finite(f(q)),
            Exponent::Infinite => Exponent::Infinite,
        }
    }
}

impl<T: Scalar> fmt::Display for Exponent<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(q) => write!(f, "{q}"),
            Exponent::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpaceParams<T = f64> {
    pub family: Family,
    pub s: T,
    pub tau: T,
    pub p: T,
    pub q: Exponent<T>,
}

impl<T: Scalar> SpaceParams<T> {
    pub fn new(family: Family, s: T, tau: T, p: T, q: Exponent<T>) -> Result<Self> {
        let sp = Self { family, s, tau, p, q };
        sp.validate()?;
        Ok(sp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p <= T::zero() {
            return Err(precondition(format!("p > 0 required, got p = {}", self.p)));
        }
        if self.tau < T::zero() {
            return Err(precondition(format!("tau >= 0 required, got tau = {}", self.tau)));
        }
        if let Exponent::Finite(q) = &self.q {
            if *q <= T::zero() {
                return Err(precondition(format!("q > 0 required, got q = {q}")));
            }
        }
        Ok(())
    }

    pub fn inv_p(&self) -> T {
        self.p.recip()
    }

    pub fn to_f64(&self) -> SpaceParams<f64> {
        SpaceParams {
            family: self.family,
            s: self.s.to_f64(),
            tau: self.tau.to_f64(),
            p: self.p.to_f64(),
            q: self.q.map(|q| q.to_f64()),
        }
    }
}

impl SpaceParams<f64> {
    pub fn besov(s: f64, tau: f64, p: f64, q: Option<f64>) -> Result<Self> {
        Self::new(Family::Besov, s, tau, p, q.map_or(Exponent::Infinite, Exponent::Finite))
    }

    pub fn triebel(s: f64, tau: f64, p: f64, q: Option<f64>) -> Result<Self> {
        Self::new(Family::TriebelLizorkin, s, tau, p, q.map_or(Exponent::Infinite, Exponent::Finite))
    }

    /// `q` as a float, `inf` for the infinite exponent.
    pub fn q_f64(&self) -> f64 {
        self.q.finite().copied().unwrap_or(f64::INFINITY)
    }

    pub fn to_rational(&self) -> SpaceParams<BigRational> {
        SpaceParams {
            family: self.family,
            s: rational(self.s),
            tau: rational(self.tau),
            p: rational(self.p),
            q: self.q.map(|&q| rational(q)),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum QJson {
    Num(f64),
    Text(String),
}

#[derive(Serialize, Deserialize)]
struct SpaceJson {
    family: Family,
    s: f64,
    tau: f64,
    p: f64,
    q: QJson,
}

impl Serialize for SpaceParams<f64> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SpaceJson {
            family: self.family,
            s: self.s,
            tau: self.tau,
            p: self.p,
            q: match self.q {
                Exponent::Finite(q) => QJson::Num(q),
                Exponent::Infinite => QJson::Text("inf".into()),
            },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpaceParams<f64> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = SpaceJson::deserialize(d)?;
        let q = match raw.q {
            QJson::Num(q) if q.is_infinite() => Exponent::Infinite,
            QJson::Num(q) => Exponent::Finite(q),
            QJson::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "Infinity") => Exponent::Infinite,
            QJson::Text(t) => return Err(serde::de::Error::custom(format!("q must be a number or \"inf\", got {t:?}"))),
        };
        let sp = SpaceParams { family: raw.family, s: raw.s, tau: raw.tau, p: raw.p, q };
        sp.validate().map_err(serde::de::Error::custom)?;
        Ok(sp)
    }
}

/// The six rounding values of a real number.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundingProfile<T> {
    pub floor: T,
    pub strict_floor: T,
    pub ceil: T,
    pub strict_ceil: T,
    pub frac: T,
    pub strict_frac: T,
}

/// `floor(r)`, `max{k in Z : k < r}`, `ceil(r)`, `min{k in Z : k > r}`,
/// `r - floor(r)` and `r - strict_floor(r)`.
pub fn rounding_profile<T: Scalar>(r: &T) -> RoundingProfile<T> {
    let floor = Scalar::floor(r);
    let one = T::one();
    let integer = floor == *r;
    let strict_floor = if integer { floor.clone() - one.clone() } else { floor.clone() };
    let ceil = if integer { floor.clone() } else { floor.clone() + one.clone() };
    let strict_ceil = floor.clone() + one;
    RoundingProfile {
        frac: r.clone() - floor.clone(),
        strict_frac: r.clone() - strict_floor.clone(),
        floor,
        strict_floor,
        ceil,
        strict_ceil,
    }
}

pub fn strict_floor<T: Scalar>(r: &T) -> T {
    rounding_profile(r).strict_floor
}

pub fn strict_ceil<T: Scalar>(r: &T) -> T {
    Scalar::floor(r) + T::one()
}

pub fn strict_frac<T: Scalar>(r: &T) -> T {
    rounding_profile(r).strict_frac
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criticality {
    Supercritical,
    Critical,
    Subcritical,
}

impl fmt::Display for Criticality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criticality::Supercritical => "supercritical",
            Criticality::Critical => "critical",
            Criticality::Subcritical => "subcritical",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivedIndices<T = f64> {
    pub n: usize,
    pub d: T,
    pub j: T,
    pub j_tau: T,
    pub tau_hat: T,
    pub j_tilde: T,
    pub s_tilde: T,
    pub criticality: Criticality,
}

impl<T: Scalar> DerivedIndices<T> {
    pub fn n_scalar(&self) -> T {
        T::from_i64(self.n as i64)
    }

    pub fn to_f64(&self) -> DerivedIndices<f64> {
        DerivedIndices {
            n: self.n,
            d: self.d.to_f64(),
            j: self.j.to_f64(),
            j_tau: self.j_tau.to_f64(),
            tau_hat: self.tau_hat.to_f64(),
            j_tilde: self.j_tilde.to_f64(),
            s_tilde: self.s_tilde.to_f64(),
            criticality: self.criticality,
        }
    }
}

/// `n / min(1, p)` for Besov and `n / min(1, p, q)` for Triebel–Lizorkin.
pub fn j_index<T: Scalar>(sp: &SpaceParams<T>, n: usize) -> T {
    let nn = T::from_i64(n as i64);
    let mut m = T::min_of(T::one(), sp.p.clone());
    if sp.family == Family::TriebelLizorkin {
        if let Exponent::Finite(q) = &sp.q {
            m = T::min_of(m, q.clone());
        }
    }
    nn / m
}

pub fn criticality<T: Scalar>(sp: &SpaceParams<T>) -> Criticality {
    let inv_p = sp.inv_p();
    if sp.tau > inv_p {
        Criticality::Supercritical
    } else if sp.tau < inv_p {
        Criticality::Subcritical
    } else if sp.q.is_infinite() {
        Criticality::Supercritical
    } else if sp.family == Family::TriebelLizorkin {
        Criticality::Critical
    } else {
        Criticality::Subcritical
    }
}

/// `J_tau`: `n`, `n / min(1, q)` or `J` according to the criticality class.
pub fn j_tau<T: Scalar>(sp: &SpaceParams<T>, n: usize) -> T {
    let nn = T::from_i64(n as i64);
    match criticality(sp) {
        Criticality::Supercritical => nn,
        Criticality::Critical => {
            let q = sp.q.finite().expect("critical case has finite q").clone();
            nn / T::min_of(T::one(), q)
        }
        Criticality::Subcritical => j_index(sp, n),
    }
}

pub fn derived_indices<T: Scalar>(sp: &SpaceParams<T>, n: usize, d: T) -> Result<DerivedIndices<T>> {
    sp.validate()?;
    if n == 0 {
        return Err(precondition("dimension n must be positive"));
    }
    let nn = T::from_i64(n as i64);
    if d < T::zero() || d >= nn {
        return Err(precondition(format!("d must lie in [0, n) = [0, {n}), got {d}")));
    }
    let inv_p = sp.inv_p();
    let tau_hat = ((sp.tau.clone() - inv_p.clone()) + d.clone() / (nn.clone() * sp.p.clone())).pos();
    let jt = j_tau(sp, n);
    let j_tilde = jt.clone() + T::min_of(nn.clone() * tau_hat.clone(), d.clone() * inv_p);
    Ok(DerivedIndices {
        n,
        j: j_index(sp, n),
        j_tau: jt,
        s_tilde: sp.s.clone() + nn * tau_hat.clone(),
        tau_hat,
        j_tilde,
        criticality: criticality(sp),
        d,
    })
}

/// `s~ - J~ = s - J_tau + n (tau - 1/p)_+`, independent of `d`.
pub fn js_gap<T: Scalar>(sp: &SpaceParams<T>, n: usize) -> T {
    let nn = T::from_i64(n as i64);
    sp.s.clone() - j_tau(sp, n) + nn * (sp.tau.clone() - sp.inv_p()).pos()
}

/// The weight dimensions `d`, `d~` and `Delta = d/p + d~/p'`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightDims {
    pub d: f64,
    pub d_tilde: f64,
    pub delta: f64,
}

impl WeightDims {
    /// For `p <= 1` the dual dimension is forced to zero.
    pub fn new(d: f64, d_tilde: f64, p: f64, n: usize) -> Result<Self> {
        if !(0.0..n as f64).contains(&d) {
            return Err(precondition(format!("d must lie in [0, {n}), got {d}")));
        }
        if d_tilde < 0.0 {
            return Err(precondition(format!("d~ >= 0 required, got {d_tilde}")));
        }
        if p <= 0.0 {
            return Err(precondition(format!("p > 0 required, got {p}")));
        }
        let (d_tilde, delta) = if p <= 1.0 {
            (0.0, d / p)
        } else {
            let p_dual = p / (p - 1.0);
            (d_tilde, d / p + d_tilde / p_dual)
        };
        Ok(Self { d, d_tilde, delta })
    }
}

/// The lower threshold on `s` above which molecules need no cancellation.
pub fn cancellation_threshold<T: Scalar>(sp: &SpaceParams<T>, n: usize) -> T {
    let nn = T::from_i64(n as i64);
    match criticality(sp) {
        Criticality::Supercritical => -(nn * (sp.tau.clone() - sp.inv_p())),
        Criticality::Critical => nn * (sp.q.recip() - T::one()).pos(),
        Criticality::Subcritical => j_index(sp, n) - nn,
    }
}

pub fn cancellation_free<T: Scalar>(sp: &SpaceParams<T>, n: usize) -> bool {
    sp.s > cancellation_threshold(sp, n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Gt => ">",
            Relation::Ge => ">=",
        })
    }
}

/// `var (> | >=) bound`, with a symbolic name for the bound.
#[derive(Clone, Debug, PartialEq)]
pub struct Inequality<T = f64> {
    pub var: String,
    pub relation: Relation,
    pub bound: T,
    pub bound_label: String,
}

impl<T: Scalar> Inequality<T> {
    pub fn gt(var: &str, bound: T, bound_label: &str) -> Self {
        Self { var: var.into(), relation: Relation::Gt, bound, bound_label: bound_label.into() }
    }

    pub fn ge(var: &str, bound: T, bound_label: &str) -> Self {
        Self { var: var.into(), relation: Relation::Ge, bound, bound_label: bound_label.into() }
    }

    pub fn holds(&self, value: &T) -> bool {
        match self.relation {
            Relation::Gt => *value > self.bound,
            Relation::Ge => *value >= self.bound,
        }
    }

    pub fn label(&self) -> String {
        format!("{} {} {}", self.var, self.relation, self.bound_label)
    }
}

impl<T: Scalar> fmt::Display for Inequality<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (= {})", self.label(), self.bound)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvaluatedLine {
    pub inequality: String,
    pub value: f64,
    pub bound: f64,
    pub margin: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub name: String,
    pub lines: Vec<EvaluatedLine>,
    pub holds: bool,
}

impl Evaluation {
    pub fn failing(&self) -> Vec<String> {
        self.lines.iter().filter(|l| !l.holds).map(|l| l.inequality.clone()).collect()
    }
}

/// A conjunction of inequalities on named variables.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet<T = f64> {
    pub name: String,
    pub items: Vec<Inequality<T>>,
}

impl<T: Scalar> ConstraintSet<T> {
    pub fn new(name: &str, items: Vec<Inequality<T>>) -> Self {
        Self { name: name.into(), items }
    }

    pub fn variables(&self) -> Vec<&str> {
        let mut v: Vec<&str> = Vec::new();
        for it in &self.items {
            if !v.contains(&it.var.as_str()) {
                v.push(&it.var);
            }
        }
        v
    }

    /// Evaluate with a lookup for variable values; unknown variables are errors.
    pub fn evaluate(&self, lookup: impl Fn(&str) -> Option<T>) -> Result<Evaluation> {
        let mut lines = Vec::with_capacity(self.items.len());
        for it in &self.items {
            let v = lookup(&it.var)
                .ok_or_else(|| Error::Parse(format!("no value for `{}` in {}", it.var, self.name)))?;
            lines.push(EvaluatedLine {
                inequality: it.label(),
                value: v.to_f64(),
                bound: it.bound.to_f64(),
                margin: (v.clone() - it.bound.clone()).to_f64(),
                holds: it.holds(&v),
            });
        }
        let holds = lines.iter().all(|l| l.holds);
        Ok(Evaluation { name: self.name.clone(), lines, holds })
    }

    pub fn evaluate_pairs(&self, values: &[(&str, T)]) -> Result<Evaluation> {
        self.evaluate(|name| values.iter().find(|(k, _)| *k == name).map(|(_, v)| v.clone()))
    }

    pub fn holds(&self, values: &[(&str, T)]) -> bool {
        self.evaluate_pairs(values).map(|e| e.holds).unwrap_or(false)
    }
}

impl<T: Scalar> fmt::Display for ConstraintSet<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}:", self.name)?;
        for it in &self.items {
            writeln!(f, "  {it}")?;
        }
        Ok(())
    }
}

/// `D > J~`, `E > n/2 + s~`, `F > J~ - n/2 - s~`.
pub fn ad_region<T: Scalar>(di: &DerivedIndices<T>, n: usize) -> ConstraintSet<T> {
    let half_n = T::from_i64(n as i64) / T::from_i64(2);
    ConstraintSet::new(
        "almost diagonal region",
        vec![
            Inequality::gt("D", di.j_tilde.clone(), "J~"),
            Inequality::gt("E", half_n.clone() + di.s_tilde.clone(), "n/2 + s~"),
            Inequality::gt("F", di.j_tilde.clone() - half_n - di.s_tilde.clone(), "J~ - n/2 - s~"),
        ],
    )
}

/// Decay `K`, cancellation `L`, derivative decay `M` and smoothness `N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoleculeParams<T = f64> {
    pub k: T,
    pub l: T,
    pub m: T,
    pub n: T,
}

impl<T: Scalar> MoleculeParams<T> {
    pub fn new(k: T, l: T, m: T, n: T) -> Self {
        Self { k, l, m, n }
    }

    /// Variable assignment for constraint sets built with `suffix`.
    pub fn assignment(&self, suffix: &str) -> Vec<(String, T)> {
        vec![
            (format!("K{suffix}"), self.k.clone()),
            (format!("L{suffix}"), self.l.clone()),
            (format!("M{suffix}"), self.m.clone()),
            (format!("N{suffix}"), self.n.clone()),
        ]
    }

    pub fn evaluate(&self, set: &ConstraintSet<T>, suffix: &str) -> Result<Evaluation> {
        let a = self.assignment(suffix);
        set.evaluate(|name| a.iter().find(|(k, _)| k == name).map(|(_, v)| v.clone()))
    }
}

fn grouped(label: &str) -> String {
    if label.contains(' ') {
        format!("({label})")
    } else {
        label.to_string()
    }
}

/// `K > J + s_-`, `L >= J - n - s`, `M > J`, `N > s` on variables `K{suffix}` etc.
pub fn js_molecule_constraints<T: Scalar>(
    j: &T,
    s: &T,
    n: usize,
    suffix: &str,
    labels: (&str, &str),
) -> ConstraintSet<T> {
    let nn = T::from_i64(n as i64);
    let (jl, sl) = labels;
    let v = |c: &str| format!("{c}{suffix}");
    ConstraintSet::new(
        &format!("({jl}, {sl})-molecule"),
        vec![
            Inequality::gt(&v("K"), j.clone() + s.neg_part(), &format!("{jl} + ({sl})_-")),
            Inequality::ge(&v("L"), j.clone() - nn - s.clone(), &format!("{jl} - n - {}", grouped(sl))),
            Inequality::gt(&v("M"), j.clone(), jl),
            Inequality::gt(&v("N"), s.clone(), sl),
        ],
    )
}

pub fn is_js_molecule_params<T: Scalar>(mp: &MoleculeParams<T>, j: &T, s: &T, n: usize) -> bool {
    let set = js_molecule_constraints(j, s, n, "", ("J", "s"));
    mp.evaluate(&set, "").map(|e| e.holds).unwrap_or(false)
}

/// Synthesis `(J~, s~)` and analysis `(J~, J~ - n - s~)` molecule constraints,
/// on variables with suffixes `_b` and `_m` respectively.
pub fn molecule_param_sets<T: Scalar>(
    di: &DerivedIndices<T>,
    n: usize,
) -> (ConstraintSet<T>, ConstraintSet<T>) {
    let nn = T::from_i64(n as i64);
    let synth = js_molecule_constraints(&di.j_tilde, &di.s_tilde, n, "_b", ("J~", "s~"));
    let ana_s = di.j_tilde.clone() - nn - di.s_tilde.clone();
    let ana = js_molecule_constraints(&di.j_tilde, &ana_s, n, "_m", ("J~", "J~ - n - s~"));
    let rename = |mut c: ConstraintSet<T>, name: &str| {
        c.name = name.into();
        c
    };
    (rename(synth, "synthesis molecule"), rename(ana, "analysis molecule"))
}

/// `(r~, s~)` with `r~ = n / J~`.
pub fn classical_equivalent<T: Scalar>(di: &DerivedIndices<T>, n: usize) -> (T, T) {
    (T::from_i64(n as i64) / di.j_tilde.clone(), di.s_tilde.clone())
}

/// The unweighted `tau = 0` space with `p = q = r~` and smoothness `s~`.
pub fn classical_space<T: Scalar>(di: &DerivedIndices<T>, n: usize, family: Family) -> SpaceParams<T> {
    let (r, s) = classical_equivalent(di, n);
    SpaceParams { family, s, tau: T::zero(), p: r.clone(), q: Exponent::Finite(r) }
}

/// Smallest positive integer strictly above `max(J~ - n - s~, s~)`.
pub fn wavelet_smoothness_required<T: Scalar>(di: &DerivedIndices<T>, n: usize) -> i64 {
    let nn = T::from_i64(n as i64);
    let m = T::max_of(di.j_tilde.clone() - nn - di.s_tilde.clone(), di.s_tilde.clone());
    let above = Scalar::floor(&m).to_f64() as i64 + 1;
    above.max(1)
}

/// The threshold `E` with trace admissibility `s > 1/p + E` (needs `n >= 2`).
pub fn trace_threshold<T: Scalar>(sp: &SpaceParams<T>, n: usize) -> Result<T> {
    if n < 2 {
        return Err(precondition("trace needs n >= 2"));
    }
    let nn = T::from_i64(n as i64);
    let n1 = T::from_i64(n as i64 - 1);
    let inv_p = sp.inv_p();
    let lhs = nn.clone() * sp.tau.clone() / n1.clone();
    let third = n1.clone() * (inv_p.clone() - T::one()).pos();
    if lhs > inv_p {
        return Ok(n1 * inv_p - nn * sp.tau.clone());
    }
    if sp.family == Family::Besov && lhs == inv_p && sp.q.is_infinite() {
        return Ok(T::zero());
    }
    Ok(third)
}

pub fn trace_admissible<T: Scalar>(sp: &SpaceParams<T>, n: usize) -> Result<bool> {
    Ok(sp.s > sp.inv_p() + trace_threshold(sp, n)?)
}

/// Target parameters `(s - 1/p, n tau/(n-1), p, q)` for Besov and
/// `(s - 1/p, n tau/(n-1), p, p)` for Triebel–Lizorkin.
pub fn trace_target<T: Scalar>(sp: &SpaceParams<T>, n: usize) -> Result<SpaceParams<T>> {
    if n < 2 {
        return Err(precondition("trace needs n >= 2"));
    }
    let tau = T::from_i64(n as i64) * sp.tau.clone() / T::from_i64(n as i64 - 1);
    let q = match sp.family {
        Family::Besov => sp.q.clone(),
        Family::TriebelLizorkin => Exponent::Finite(sp.p.clone()),
    };
    SpaceParams::new(sp.family, sp.s.clone() - sp.inv_p(), tau, sp.p.clone(), q)
}

/// Conditions on `(sigma, E, F, G, H)` for boundedness of a kernel operator; `extended`
/// replaces the bound on `H` by its positive part.
pub fn czo_conditions<T: Scalar>(di: &DerivedIndices<T>, n: usize, extended: bool) -> ConstraintSet<T> {
    let nn = T::from_i64(n as i64);
    let st = &di.s_tilde;
    let sigma_min = if *st >= T::zero() { T::one() } else { T::zero() };
    let h = Scalar::floor(&(di.j_tilde.clone() - nn.clone() - st.clone()));
    let (h, h_label) = if extended {
        (h.pos(), "floor(J~ - n - s~)_+")
    } else {
        (h, "floor(J~ - n - s~)")
    };
    ConstraintSet::new(
        if extended { "CZ conditions (extended)" } else { "CZ conditions" },
        vec![
            Inequality::ge("sigma", sigma_min, "1_[0,inf)(s~)"),
            Inequality::gt("E", st.pos(), "(s~)_+"),
            Inequality::gt("F", di.j_tilde.clone() - nn + st.neg_part(), "J~ - n + (s~)_-"),
            Inequality::ge("G", Scalar::floor(st).pos(), "floor(s~)_+"),
            Inequality::ge("H", h, h_label),
        ],
    )
}
