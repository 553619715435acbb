//! Truncated multivariate Taylor series ("jets").
//!
//! A [`Jet`] stores every coefficient of total degree `<= order` in a dense
//! graded layout: all degree-0 terms, then all degree-1 terms, and so on.
//! Within one degree the exponents are ordered lexicographically with the
//! first variable descending. A consequence used throughout the crate is that
//! truncating to a lower order is a prefix of the coefficient vector.
//!
//! Layouts are shared between jets through an `Arc` and built once per
//! `(nvars, order)` pair. Small layouts (`nvars <= 4`, `order <= 8`) carry a
//! precomputed Cauchy-product table; larger ones multiply by walking the
//! non-zero coefficients and looking up the target index on the fly.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

/// Largest variable count that gets a precomputed product table.
pub const DENSE_MAX_VARS: usize = 4;
/// Largest order that gets a precomputed product table.
pub const DENSE_MAX_ORDER: usize = 8;
/// Default absolute tolerance for coefficient comparisons.
pub const COEFF_TOL: f64 = 1e-10;
/// Constant terms smaller than this are treated as zero when inverting.
pub const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JetError {
    #[error("variable count mismatch: {left} vs {right}")]
    VariableMismatch { left: usize, right: usize },
    #[error("constant term {value:e} is too close to zero to invert")]
    ZeroConstantTerm { value: f64 },
    #[error("{function} is not analytic at {point}")]
    OutsideDomain { function: &'static str, point: f64 },
    #[error("outer series must be univariate, got {nvars} variables")]
    NotUnivariate { nvars: usize },
}

/// Exponent vector `(a_1, ..., a_s)` of a monomial.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self(exponents)
    }

    pub fn zeros(nvars: usize) -> Self {
        Self(vec![0; nvars])
    }

    pub fn unit(nvars: usize, var: usize) -> Self {
        let mut e = vec![0; nvars];
        e[var] = 1;
        Self(e)
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        Self(v)
    }
}

struct Layout {
    nvars: usize,
    order: usize,
    exps: Vec<u32>,
    degree_start: Vec<usize>,
    lookup: HashMap<Vec<u32>, usize>,
    products: Option<Vec<[u32; 3]>>,
}

impl Layout {
    fn build(nvars: usize, order: usize) -> Self {
        let mut exps = Vec::new();
        let mut degree_start = Vec::with_capacity(order + 2);
        let mut buf = vec![0u32; nvars];
        for d in 0..=order {
            degree_start.push(exps.len() / nvars.max(1));
            push_compositions(d as u32, 0, &mut buf, &mut exps);
        }
        let terms = exps.len() / nvars;
        degree_start.push(terms);
        let lookup = (0..terms)
            .map(|i| (exps[i * nvars..(i + 1) * nvars].to_vec(), i))
            .collect::<HashMap<_, _>>();
        let mut layout = Layout {
            nvars,
            order,
            exps,
            degree_start,
            lookup,
            products: None,
        };
        if nvars <= DENSE_MAX_VARS && order <= DENSE_MAX_ORDER {
            layout.products = Some(layout.product_table());
        }
        layout
    }

    fn product_table(&self) -> Vec<[u32; 3]> {
        let mut table = Vec::new();
        let mut sum = vec![0u32; self.nvars];
        for di in 0..=self.order {
            for i in self.degree_range(di) {
                for dj in 0..=(self.order - di) {
                    for j in self.degree_range(dj) {
                        for (v, s) in sum.iter_mut().enumerate() {
                            *s = self.exp(i)[v] + self.exp(j)[v];
                        }
                        let k = self.lookup[&sum[..]];
                        table.push([i as u32, j as u32, k as u32]);
                    }
                }
            }
        }
        table
    }

    fn terms(&self) -> usize {
        self.degree_start[self.order + 1]
    }

    fn degree_range(&self, d: usize) -> std::ops::Range<usize> {
        self.degree_start[d]..self.degree_start[d + 1]
    }

    fn exp(&self, i: usize) -> &[u32] {
        &self.exps[i * self.nvars..(i + 1) * self.nvars]
    }

    fn degree_of(&self, i: usize) -> usize {
        self.degree_start.partition_point(|&s| s <= i) - 1
    }

    fn index_of(&self, exponents: &[u32]) -> Option<usize> {
        self.lookup.get(exponents).copied()
    }
}

fn push_compositions(remaining: u32, pos: usize, buf: &mut [u32], out: &mut Vec<u32>) {
    let n = buf.len();
    if pos + 1 == n {
        buf[pos] = remaining;
        out.extend_from_slice(buf);
        return;
    }
    for e in (0..=remaining).rev() {
        buf[pos] = e;
        push_compositions(remaining - e, pos + 1, buf, out);
    }
}

fn layout(nvars: usize, order: usize) -> Arc<Layout> {
    assert!(nvars >= 1, "a jet needs at least one variable");
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Layout>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(l) = cache.lock().unwrap().get(&(nvars, order)) {
        return l.clone();
    }
    let built = Arc::new(Layout::build(nvars, order));
    cache
        .lock()
        .unwrap()
        .entry((nvars, order))
        .or_insert(built)
        .clone()
}

/// Number of monomials of total degree `<= order` in `nvars` variables.
pub fn term_count(nvars: usize, order: usize) -> usize {
    layout(nvars, order).terms()
}

/// Truncated Taylor series in `nvars` variables about an implicit origin.
#[derive(Clone)]
pub struct Jet {
    layout: Arc<Layout>,
    coeffs: Vec<f64>,
}

impl Jet {
    pub fn zero(nvars: usize, order: usize) -> Self {
        let layout = layout(nvars, order);
        let coeffs = vec![0.0; layout.terms()];
        Self { layout, coeffs }
    }

    pub fn constant(nvars: usize, order: usize, value: f64) -> Self {
        let mut j = Self::zero(nvars, order);
        j.coeffs[0] = value;
        j
    }

    pub fn one(nvars: usize, order: usize) -> Self {
        Self::constant(nvars, order, 1.0)
    }

    /// The coordinate function `x_var` (zero at the origin).
    pub fn variable(nvars: usize, order: usize, var: usize) -> Self {
        Self::coordinate(nvars, order, var, 0.0)
    }

    /// `center + x_var`: a coordinate expressed about a point whose
    /// `var`-th coordinate is `center`.
    pub fn coordinate(nvars: usize, order: usize, var: usize, center: f64) -> Self {
        assert!(
            var < nvars,
            "variable {var} out of range for {nvars} variables"
        );
        let mut j = Self::constant(nvars, order, center);
        if order >= 1 {
            j.set_coeff(MultiIndex::unit(nvars, var).exponents(), 1.0);
        }
        j
    }

    /// Builds a jet from `(exponents, coefficient)` pairs. Terms above
    /// `order` are dropped.
    pub fn from_terms<'a, I>(nvars: usize, order: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (&'a [u32], f64)>,
    {
        let mut j = Self::zero(nvars, order);
        for (e, c) in terms {
            assert_eq!(e.len(), nvars);
            if let Some(i) = j.layout.index_of(e) {
                j.coeffs[i] += c;
            }
        }
        j
    }

    /// Univariate jet with the given power-series coefficients.
    pub fn univariate(coeffs: &[f64]) -> Self {
        assert!(!coeffs.is_empty());
        let mut j = Self::zero(1, coeffs.len() - 1);
        j.coeffs.copy_from_slice(coeffs);
        j
    }

    pub fn nvars(&self) -> usize {
        self.layout.nvars
    }

    pub fn order(&self) -> usize {
        self.layout.order
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Raw coefficients in graded order.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Exponents of the `i`-th stored coefficient.
    pub fn exponents_at(&self, i: usize) -> &[u32] {
        self.layout.exp(i)
    }

    /// Total degree of the `i`-th stored coefficient.
    pub fn degree_at(&self, i: usize) -> usize {
        self.layout.degree_of(i)
    }

    /// Storage index of a multi-index, if it is within the truncation.
    pub fn index_of(&self, exponents: &[u32]) -> Option<usize> {
        self.layout.index_of(exponents)
    }

    /// Iterates `(exponents, coefficient)` over all stored terms.
    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(i, &c)| (self.layout.exp(i), c))
    }

    pub fn coeff(&self, exponents: &[u32]) -> f64 {
        self.layout
            .index_of(exponents)
            .map_or(0.0, |i| self.coeffs[i])
    }

    /// Sets a coefficient. Returns `false` (and stores nothing) when the
    /// index lies above the truncation order.
    pub fn set_coeff(&mut self, exponents: &[u32], value: f64) -> bool {
        match self.layout.index_of(exponents) {
            Some(i) => {
                self.coeffs[i] = value;
                true
            }
            None => false,
        }
    }

    pub fn constant_term(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    fn same_layout(&self, other: &Jet) -> Result<(), JetError> {
        if self.nvars() != other.nvars() {
            return Err(JetError::VariableMismatch {
                left: self.nvars(),
                right: other.nvars(),
            });
        }
        Ok(())
    }

    /// Drops every term above `order`. Requests above the current order
    /// return the jet unchanged: orders are never promoted.
    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.order() {
            return self.clone();
        }
        let layout = layout(self.nvars(), order);
        let coeffs = self.coeffs[..layout.terms()].to_vec();
        Jet { layout, coeffs }
    }

    pub fn checked_add(&self, other: &Jet) -> Result<Jet, JetError> {
        self.same_layout(other)?;
        let order = self.order().min(other.order());
        let mut out = self.truncate(order);
        for (o, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *o += b;
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Jet) -> Result<Jet, JetError> {
        self.same_layout(other)?;
        let order = self.order().min(other.order());
        let mut out = self.truncate(order);
        for (o, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *o -= b;
        }
        Ok(out)
    }

    /// Cauchy product truncated to the smaller of the two orders.
    pub fn checked_mul(&self, other: &Jet) -> Result<Jet, JetError> {
        self.same_layout(other)?;
        let order = self.order().min(other.order());
        let target = layout(self.nvars(), order);
        let mut out = vec![0.0; target.terms()];
        if let Some(table) = &target.products {
            for &[i, j, k] in table {
                out[k as usize] += self.coeffs[i as usize] * other.coeffs[j as usize];
            }
        } else {
            let n = self.nvars();
            let mut sum = vec![0u32; n];
            for i in 0..target.terms() {
                let a = self.coeffs[i];
                if a == 0.0 {
                    continue;
                }
                let di = target.degree_of(i);
                for j in 0..target.degree_start[order - di + 1] {
                    let b = other.coeffs[j];
                    if b == 0.0 {
                        continue;
                    }
                    for (v, s) in sum.iter_mut().enumerate() {
                        *s = target.exp(i)[v] + target.exp(j)[v];
                    }
                    out[target.lookup[&sum[..]]] += a * b;
                }
            }
        }
        Ok(Jet {
            layout: target,
            coeffs: out,
        })
    }

    pub fn scale(&self, factor: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= factor);
        out
    }

    pub fn add_scalar(&self, value: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += value;
        out
    }

    /// Formal partial derivative. The result has order `order - 1`; the
    /// derivative of an order-0 jet is the order-0 zero jet.
    pub fn diff(&self, var: usize) -> Jet {
        assert!(var < self.nvars(), "variable {var} out of range");
        let order = self.order().saturating_sub(1);
        let mut out = Jet::zero(self.nvars(), order);
        if self.order() == 0 {
            return out;
        }
        let mut up = vec![0u32; self.nvars()];
        for i in 0..out.len() {
            up.copy_from_slice(out.layout.exp(i));
            up[var] += 1;
            let src = self
                .layout
                .index_of(&up)
                .expect("raised index within order");
            out.coeffs[i] = f64::from(up[var]) * self.coeffs[src];
        }
        out
    }

    /// `1 / self` via the geometric series about the constant term.
    pub fn reciprocal(&self) -> Result<Jet, JetError> {
        self.apply(Elementary::Recip)
    }

    /// Integer power. Negative exponents go through [`Jet::reciprocal`].
    pub fn powi(&self, exponent: i32) -> Result<Jet, JetError> {
        let base = if exponent < 0 {
            self.reciprocal()?
        } else {
            self.clone()
        };
        let mut e = exponent.unsigned_abs();
        let mut acc = Jet::one(self.nvars(), self.order());
        let mut sq = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &sq;
            }
            e >>= 1;
            if e > 0 {
                sq = &sq * &sq;
            }
        }
        Ok(acc)
    }

    /// Composes a univariate series with `self`.
    ///
    /// `outer` holds the Taylor coefficients of `f(c + t)` in `t`, where `c`
    /// is the constant term of `self`; the caller is responsible for having
    /// expanded `f` about that point. The result has order
    /// `min(self.order, outer.order)`.
    pub fn compose(&self, outer: &Jet) -> Result<Jet, JetError> {
        if outer.nvars() != 1 {
            return Err(JetError::NotUnivariate {
                nvars: outer.nvars(),
            });
        }
        let order = self.order().min(outer.order());
        let mut h = self.truncate(order);
        h.coeffs[0] = 0.0;
        let a = &outer.coeffs;
        let mut acc = Jet::constant(self.nvars(), order, a[order]);
        for k in (0..order).rev() {
            acc = (&acc * &h).add_scalar(a[k]);
        }
        Ok(acc)
    }

    /// Applies an elementary analytic function.
    pub fn apply(&self, f: Elementary) -> Result<Jet, JetError> {
        let outer = f.series_about(self.constant_term(), self.order())?;
        self.compose(&outer)
    }

    pub fn exp(&self) -> Jet {
        self.apply(Elementary::Exp).expect("exp is entire")
    }

    pub fn sin(&self) -> Jet {
        self.apply(Elementary::Sin).expect("sin is entire")
    }

    pub fn cos(&self) -> Jet {
        self.apply(Elementary::Cos).expect("cos is entire")
    }

    pub fn sqrt(&self) -> Result<Jet, JetError> {
        self.apply(Elementary::Sqrt)
    }

    /// Evaluates the truncated polynomial at `point` (offsets from the
    /// expansion origin).
    pub fn eval(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.nvars(), "point dimension mismatch");
        let order = self.order();
        let powers: Vec<Vec<f64>> = point
            .iter()
            .map(|&x| {
                let mut p = Vec::with_capacity(order + 1);
                let mut acc = 1.0;
                for _ in 0..=order {
                    p.push(acc);
                    acc *= x;
                }
                p
            })
            .collect();
        self.terms()
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(&powers)
                    .map(|(&k, p)| p[k as usize])
                    .product::<f64>()
            })
            .sum()
    }

    /// Substitutes a jet for every variable, treating `self` as a
    /// polynomial. The result lives in the variables of the substituted jets
    /// and has order `min(inner orders)`. Inner jets with nonzero constant
    /// terms are allowed; the identity is then one of polynomials, not of
    /// Taylor series.
    pub fn substitute(&self, inner: &[Jet]) -> Result<Jet, JetError> {
        assert_eq!(inner.len(), self.nvars(), "one substitute per variable");
        let nv = inner[0].nvars();
        for j in inner {
            if j.nvars() != nv {
                return Err(JetError::VariableMismatch {
                    left: nv,
                    right: j.nvars(),
                });
            }
        }
        let order = inner.iter().map(Jet::order).min().unwrap();
        let degree = self.order();
        let powers: Vec<Vec<Jet>> = inner
            .iter()
            .map(|j| {
                let j = j.truncate(order);
                let mut p = vec![Jet::one(nv, order)];
                for k in 1..=degree {
                    let next = &p[k - 1] * &j;
                    p.push(next);
                }
                p
            })
            .collect();
        let mut out = Jet::zero(nv, order);
        for (e, c) in self.terms() {
            if c == 0.0 {
                continue;
            }
            let mut term = Jet::constant(nv, order, c);
            for (v, &k) in e.iter().enumerate() {
                if k > 0 {
                    term = &term * &powers[v][k as usize];
                }
            }
            for (o, t) in out.coeffs.iter_mut().zip(&term.coeffs) {
                *o += t;
            }
        }
        Ok(out)
    }

    /// Re-expands the polynomial about `origin + delta`.
    pub fn shift(&self, delta: &[f64]) -> Jet {
        let n = self.nvars();
        let inner: Vec<Jet> = (0..n)
            .map(|v| Jet::coordinate(n, self.order(), v, delta[v]))
            .collect();
        self.substitute(&inner).expect("same variable count")
    }

    /// Embeds the jet into `nvars` variables, the old variables occupying
    /// the first positions.
    pub fn extend_vars(&self, nvars: usize) -> Jet {
        assert!(nvars >= self.nvars());
        let mut out = Jet::zero(nvars, self.order());
        let mut e = vec![0u32; nvars];
        for (src, c) in self.terms() {
            e[..src.len()].copy_from_slice(src);
            out.set_coeff(&e, c);
        }
        out
    }

    /// Sets the last variable to zero, returning a jet in one variable
    /// fewer.
    pub fn restrict_last(&self) -> Jet {
        let n = self.nvars();
        assert!(n >= 2, "cannot drop the only variable");
        let mut out = Jet::zero(n - 1, self.order());
        for (e, c) in self.terms() {
            if e[n - 1] == 0 {
                out.set_coeff(&e[..n - 1], c);
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    /// Largest coefficient magnitude among terms of degree `<= degree`.
    pub fn max_abs_through(&self, degree: usize) -> f64 {
        let d = degree.min(self.order());
        self.coeffs[..self.layout.degree_start[d + 1]]
            .iter()
            .fold(0.0f64, |m, c| m.max(c.abs()))
    }

    /// Largest coefficient magnitude per total degree `0..=order`.
    pub fn max_abs_by_degree(&self) -> Vec<f64> {
        (0..=self.order())
            .map(|d| {
                self.coeffs[self.layout.degree_range(d)]
                    .iter()
                    .fold(0.0f64, |m, c| m.max(c.abs()))
            })
            .collect()
    }

    /// Coefficient-wise comparison within `tol`, over the common order.
    pub fn approx_eq(&self, other: &Jet, tol: f64) -> bool {
        match self.checked_sub(other) {
            Ok(d) => d.max_abs() <= tol,
            Err(_) => false,
        }
    }
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.nvars() == other.nvars()
            && self.order() == other.order()
            && self.coeffs == other.coeffs
    }
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet[n={}, K={}](", self.nvars(), self.order())?;
        let mut first = true;
        for (e, c) in self.terms() {
            if c == 0.0 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for (v, &k) in e.iter().enumerate() {
                match k {
                    0 => {}
                    1 => write!(f, "*x{}", v + 1)?,
                    _ => write!(f, "*x{}^{}", v + 1, k)?,
                }
            }
        }
        if first {
            write!(f, "0")?;
        }
        write!(f, ")")
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $checked:ident) => {
        impl $tr<&Jet> for &Jet {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet {
                self.$checked(rhs).expect("jet variable counts must match")
            }
        }
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                (&self)
                    .$checked(&rhs)
                    .expect("jet variable counts must match")
            }
        }
    };
}

binop!(Add, add, checked_add);
binop!(Sub, sub, checked_sub);
binop!(Mul, mul, checked_mul);

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

/// Elementary analytic functions with known Taylor expansions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementary {
    Exp,
    Sin,
    Cos,
    Sqrt,
    Recip,
}

impl Elementary {
    pub fn name(self) -> &'static str {
        match self {
            Elementary::Exp => "exp",
            Elementary::Sin => "sin",
            Elementary::Cos => "cos",
            Elementary::Sqrt => "sqrt",
            Elementary::Recip => "reciprocal",
        }
    }

    /// Coefficients of `f(c + t)` in powers of `t` up to `order`.
    pub fn series_about(self, c: f64, order: usize) -> Result<Jet, JetError> {
        let mut a = vec![0.0; order + 1];
        match self {
            Elementary::Exp => {
                let mut term = c.exp();
                for (k, slot) in a.iter_mut().enumerate() {
                    if k > 0 {
                        term /= k as f64;
                    }
                    *slot = term;
                }
            }
            Elementary::Sin | Elementary::Cos => {
                let (s, co) = c.sin_cos();
                let cycle = if self == Elementary::Sin {
                    [s, co, -s, -co]
                } else {
                    [co, -s, -co, s]
                };
                let mut fact = 1.0;
                for (k, slot) in a.iter_mut().enumerate() {
                    if k > 0 {
                        fact *= k as f64;
                    }
                    *slot = cycle[k % 4] / fact;
                }
            }
            Elementary::Sqrt => {
                if c <= PIVOT_TOL {
                    return Err(JetError::OutsideDomain {
                        function: "sqrt",
                        point: c,
                    });
                }
                // (c + t)^(1/2) = sqrt(c) * sum binom(1/2, k) (t/c)^k
                let mut binom = 1.0;
                let mut cpow = c.sqrt();
                for (k, slot) in a.iter_mut().enumerate() {
                    if k > 0 {
                        binom *= (0.5 - (k - 1) as f64) / k as f64;
                        cpow /= c;
                    }
                    *slot = binom * cpow;
                }
            }
            Elementary::Recip => {
                if c.abs() < PIVOT_TOL {
                    return Err(JetError::ZeroConstantTerm { value: c });
                }
                let mut term = 1.0 / c;
                for slot in a.iter_mut() {
                    *slot = term;
                    term *= -1.0 / c;
                }
            }
        }
        Ok(Jet::univariate(&a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(order: usize) -> Jet {
        Jet::variable(1, order, 0)
    }

    #[test]
    fn graded_layout_is_prefix_stable() {
        let lo = layout(3, 2);
        let hi = layout(3, 5);
        assert_eq!(&hi.exps[..lo.exps.len()], &lo.exps[..]);
        assert_eq!(term_count(3, 2), 10);
        assert_eq!(term_count(4, 8), 495);
    }

    #[test]
    fn add_cancels_and_truncates() {
        let one_plus = x(3).add_scalar(1.0);
        let one_minus = (-x(3)).add_scalar(1.0);
        assert_eq!(&one_plus + &one_minus, Jet::constant(1, 3, 2.0));
        assert_eq!(&one_plus + &Jet::zero(1, 3), one_plus);

        let xv = Jet::variable(2, 2, 0);
        let y = Jet::variable(2, 2, 1);
        let y2 = &y * &y;
        let sum = &(&xv + &y2) + &y2;
        assert_eq!(sum.coeff(&[1, 0]), 1.0);
        assert_eq!(sum.coeff(&[0, 2]), 2.0);
        assert_eq!(sum.max_abs(), 2.0);
    }

    #[test]
    fn mismatched_variable_counts_are_rejected() {
        let a = Jet::one(1, 2);
        let b = Jet::one(2, 2);
        assert_eq!(
            a.checked_add(&b),
            Err(JetError::VariableMismatch { left: 1, right: 2 })
        );
        assert!(a.checked_mul(&b).is_err());
    }

    #[test]
    fn mixed_orders_truncate_to_min() {
        let a = x(5).add_scalar(1.0);
        let b = x(2).add_scalar(1.0);
        let p = &a * &b;
        assert_eq!(p.order(), 2);
        assert_eq!(p.coeffs(), &[1.0, 2.0, 1.0]);
    }

    #[test]
    fn products_match_hand_expansions() {
        let p = &x(2).add_scalar(1.0) * &(-x(2)).add_scalar(1.0);
        assert_eq!(p.coeffs(), &[1.0, 0.0, -1.0]);

        let s = &Jet::variable(2, 2, 0) + &Jet::variable(2, 2, 1);
        let sq = &s * &s;
        assert_eq!(sq.coeff(&[2, 0]), 1.0);
        assert_eq!(sq.coeff(&[1, 1]), 2.0);
        assert_eq!(sq.coeff(&[0, 2]), 1.0);
        assert_eq!(&sq * &Jet::one(2, 2), sq);
    }

    #[test]
    fn reciprocal_examples() {
        let r = x(3).add_scalar(1.0).reciprocal().unwrap();
        assert_eq!(r.coeffs(), &[1.0, -1.0, 1.0, -1.0]);
        assert_eq!(
            Jet::constant(1, 0, 2.0).reciprocal().unwrap().coeffs(),
            &[0.5]
        );

        let a = x(1).add_scalar(2.0);
        let r = a.reciprocal().unwrap();
        assert!((r.coeffs()[0] - 0.5).abs() < 1e-15);
        assert!((r.coeffs()[1] + 0.25).abs() < 1e-15);
        // multiply back
        assert!((&a * &r).approx_eq(&Jet::one(1, 1), 1e-15));

        assert!(matches!(
            x(2).reciprocal(),
            Err(JetError::ZeroConstantTerm { .. })
        ));
    }

    #[test]
    fn diff_examples() {
        let xv = Jet::variable(2, 3, 0);
        let y = Jet::variable(2, 3, 1);
        let f = &(&xv * &xv) * &y;
        let d = f.diff(0);
        assert_eq!(d.order(), 2);
        assert_eq!(d.coeff(&[1, 1]), 2.0);
        assert_eq!(d.max_abs(), 2.0);
        assert_eq!(Jet::constant(2, 3, 4.0).diff(1).max_abs(), 0.0);

        // exp series: derivative coefficients are k * c_k
        let e = x(3).exp();
        let de = e.diff(0);
        for k in 0..3 {
            let expected = (k + 1) as f64 * e.coeffs()[k + 1];
            assert!((de.coeffs()[k] - expected).abs() < 1e-15);
        }
        assert!(de.approx_eq(&x(2).exp(), 1e-15));
        assert_eq!(Jet::one(1, 0).diff(0), Jet::zero(1, 0));
    }

    #[test]
    fn compose_examples() {
        let exp = Elementary::Exp.series_about(0.0, 4).unwrap();
        assert_eq!(Jet::zero(2, 4).compose(&exp).unwrap(), Jet::one(2, 4));
        let e = x(2).compose(&exp).unwrap();
        assert_eq!(e.coeffs(), &[1.0, 1.0, 0.5]);
        assert!(matches!(
            Jet::variable(1, 3, 0).apply(Elementary::Sqrt),
            Err(JetError::OutsideDomain { .. })
        ));
        assert!(matches!(
            Jet::one(1, 3).compose(&Jet::one(2, 3)),
            Err(JetError::NotUnivariate { nvars: 2 })
        ));
    }

    #[test]
    fn sqrt_and_trig_identities() {
        let a = x(6).scale(0.3).add_scalar(2.0);
        let s = a.sqrt().unwrap();
        assert!((&s * &s).approx_eq(&a, 1e-14));
        let t = x(6).add_scalar(0.7);
        let id = &(&t.sin() * &t.sin()) + &(&t.cos() * &t.cos());
        assert!(id.approx_eq(&Jet::one(1, 6), 1e-14));
    }

    #[test]
    fn eval_examples() {
        assert_eq!(x(1).add_scalar(1.0).eval(&[2.0]), 3.0);
        let j = Jet::from_terms(2, 2, [(&[0u32, 0][..], 3.5), (&[1, 1][..], 2.0)]);
        assert_eq!(j.eval(&[0.0, 0.0]), 3.5);
        let g = Jet::univariate(&[1.0, -1.0, 1.0, -1.0]);
        let v = g.eval(&[0.1]);
        assert!((v - 0.9091).abs() < 1e-3);
        assert!((v - 1.0 / 1.1).abs() <= 0.1f64.powi(4));
    }

    #[test]
    fn powi_matches_repeated_product() {
        let a = x(5).add_scalar(1.5);
        let cube = &(&a * &a) * &a;
        assert!(a.powi(3).unwrap().approx_eq(&cube, 1e-13));
        let inv2 = a.powi(-2).unwrap();
        assert!((&inv2 * &(&a * &a)).approx_eq(&Jet::one(1, 5), 1e-13));
        assert_eq!(a.powi(0).unwrap(), Jet::one(1, 5));
    }

    #[test]
    fn shift_reexpands_polynomials_exactly() {
        let xv = Jet::variable(2, 3, 0);
        let y = Jet::variable(2, 3, 1);
        let p = &(&(&xv * &xv) * &y) + &y.scale(2.0);
        let shifted = p.shift(&[0.5, -1.0]);
        for pt in [[0.1, 0.2], [-0.3, 0.05]] {
            let a = shifted.eval(&pt);
            let b = p.eval(&[pt[0] + 0.5, pt[1] - 1.0]);
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn restrict_and_extend_round_trip() {
        let xv = Jet::variable(1, 3, 0);
        let e = xv.exp().extend_vars(2);
        assert_eq!(e.restrict_last(), xv.exp());
        assert_eq!(e.coeff(&[2, 0]), 0.5);
        assert_eq!(e.coeff(&[0, 1]), 0.0);
    }

    #[test]
    fn large_layout_uses_sparse_product() {
        let n = 5;
        let a = Jet::variable(n, 3, 0).add_scalar(1.0);
        let b = Jet::variable(n, 3, 4).add_scalar(2.0);
        assert!(layout(n, 3).products.is_none());
        let p = &a * &b;
        assert_eq!(p.coeff(&[0, 0, 0, 0, 0]), 2.0);
        assert_eq!(p.coeff(&[1, 0, 0, 0, 0]), 2.0);
        assert_eq!(p.coeff(&[0, 0, 0, 0, 1]), 1.0);
        assert_eq!(p.coeff(&[1, 0, 0, 0, 1]), 1.0);
    }

    #[test]
    fn degree_norms() {
        let j = Jet::from_terms(2, 2, [(&[0u32, 0][..], 1.0), (&[1, 1][..], -3.0)]);
        assert_eq!(j.max_abs_by_degree(), vec![1.0, 0.0, 3.0]);
        assert_eq!(j.max_abs_through(1), 1.0);
        assert_eq!(j.degree_at(j.index_of(&[1, 1]).unwrap()), 2);
    }
}
