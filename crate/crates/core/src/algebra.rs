//! Exact rationals, dense rational matrices, truncated series in `z` and
//! multivariate polynomials over graded κ/ψ generators.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Rat = BigRational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("singular matrix")]
    Singular,
    #[error("polynomial rings differ")]
    RingMismatch,
    #[error("cannot parse {0:?}")]
    Parse(String),
}

pub fn rat(p: i64, q: i64) -> Rat {
    Rat::new(BigInt::from(p), BigInt::from(q))
}

pub fn int(p: i64) -> Rat {
    Rat::from_integer(BigInt::from(p))
}

pub fn parse_rat(s: &str) -> Result<Rat, AlgebraError> {
    let t = s.trim();
    Rat::from_str(t).map_err(|_| AlgebraError::Parse(t.to_string()))
}

pub fn factorial(n: u32) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// `x^e` for a possibly negative exponent. Panics on `0^e` with `e < 0`.
pub fn pow_i(x: &Rat, e: i64) -> Rat {
    if e >= 0 {
        num_traits::pow(x.clone(), e as usize)
    } else {
        num_traits::pow(x.recip(), (-e) as usize)
    }
}

pub fn to_f64(x: &Rat) -> f64 {
    use num_traits::ToPrimitive;
    x.to_f64().unwrap_or(f64::NAN)
}

/// Dense square or rectangular matrix with rational entries, row major.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Rat>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![Rat::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Rat::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Rat>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        assert!(rows.iter().all(|x| x.len() == c), "ragged rows");
        Mat { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn diag(d: &[Rat]) -> Self {
        let mut m = Mat::zeros(d.len(), d.len());
        for (i, x) in d.iter().enumerate() {
            m.data[i * d.len() + i] = x.clone();
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> &Rat {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Rat) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Zero::is_zero)
    }

    pub fn to_rows(&self) -> Vec<Vec<Rat>> {
        self.data.chunks(self.cols.max(1)).map(|c| c.to_vec()).collect()
    }

    pub fn add(&self, o: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, o: &Mat) -> Mat {
        self.add(&o.scale(&-Rat::one()))
    }

    pub fn scale(&self, s: &Rat) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a * s).collect() }
    }

    pub fn mul(&self, o: &Mat) -> Mat {
        assert_eq!(self.cols, o.rows, "matrix product shape");
        let mut out = Mat::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..o.cols {
                    let b = o.get(k, j);
                    if !b.is_zero() {
                        out.data[i * o.cols + j] += a * b;
                    }
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Rat]) -> Vec<Rat> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| (0..self.cols).fold(Rat::zero(), |acc, j| acc + self.get(i, j) * &v[j]))
            .collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j).clone());
            }
        }
        t
    }

    /// Gauss-Jordan inverse.
    pub fn inverse(&self) -> Result<Mat, AlgebraError> {
        if self.rows != self.cols {
            return Err(AlgebraError::DimensionMismatch(self.rows, self.cols));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Mat::identity(n);
        for col in 0..n {
            let piv = (col..n).find(|&r| !a.get(r, col).is_zero()).ok_or(AlgebraError::Singular)?;
            if piv != col {
                for j in 0..n {
                    a.data.swap(piv * n + j, col * n + j);
                    inv.data.swap(piv * n + j, col * n + j);
                }
            }
            let p = a.get(col, col).recip();
            for j in 0..n {
                a.data[col * n + j] *= &p;
                inv.data[col * n + j] *= &p;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a.get(r, col).clone();
                if f.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let x = a.get(col, j) * &f;
                    a.data[r * n + j] -= x;
                    let y = inv.get(col, j) * &f;
                    inv.data[r * n + j] -= y;
                }
            }
        }
        Ok(inv)
    }

    /// Solve `self · x = b` for square invertible `self`.
    pub fn solve(&self, b: &[Rat]) -> Result<Vec<Rat>, AlgebraError> {
        Ok(self.inverse()?.mul_vec(b))
    }
}

/// Matrix-valued power series in `z`, truncated at `z^order`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeriesMat {
    pub dim: usize,
    pub coeffs: Vec<Mat>,
}

impl SeriesMat {
    pub fn new(dim: usize, coeffs: Vec<Mat>) -> Result<Self, AlgebraError> {
        if coeffs.is_empty() {
            return Err(AlgebraError::Parse("series needs at least one coefficient".into()));
        }
        for c in &coeffs {
            if c.rows != dim || c.cols != dim {
                return Err(AlgebraError::DimensionMismatch(dim, c.rows.max(c.cols)));
            }
        }
        Ok(SeriesMat { dim, coeffs })
    }

    pub fn identity(dim: usize, order: usize) -> Self {
        let mut coeffs = vec![Mat::zeros(dim, dim); order + 1];
        coeffs[0] = Mat::identity(dim);
        SeriesMat { dim, coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, k: usize) -> Mat {
        self.coeffs.get(k).cloned().unwrap_or_else(|| Mat::zeros(self.dim, self.dim))
    }

    pub fn truncate(&self, order: usize) -> SeriesMat {
        let mut c = self.coeffs.clone();
        c.resize(order + 1, Mat::zeros(self.dim, self.dim));
        c.truncate(order + 1);
        SeriesMat { dim: self.dim, coeffs: c }
    }

    pub fn is_group_like(&self) -> bool {
        self.coeffs[0] == Mat::identity(self.dim)
    }

    /// `R(-z)`.
    pub fn negate_z(&self) -> SeriesMat {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| if k % 2 == 1 { c.scale(&-Rat::one()) } else { c.clone() })
            .collect();
        SeriesMat { dim: self.dim, coeffs }
    }

    pub fn add(&self, o: &SeriesMat) -> Result<SeriesMat, AlgebraError> {
        self.check(o)?;
        let d = self.order().min(o.order());
        Ok(SeriesMat { dim: self.dim, coeffs: (0..=d).map(|k| self.coeffs[k].add(&o.coeffs[k])).collect() })
    }

    pub fn sub(&self, o: &SeriesMat) -> Result<SeriesMat, AlgebraError> {
        self.check(o)?;
        let d = self.order().min(o.order());
        Ok(SeriesMat { dim: self.dim, coeffs: (0..=d).map(|k| self.coeffs[k].sub(&o.coeffs[k])).collect() })
    }

    pub fn mul(&self, o: &SeriesMat) -> Result<SeriesMat, AlgebraError> {
        self.check(o)?;
        let d = self.order().min(o.order());
        let mut coeffs = vec![Mat::zeros(self.dim, self.dim); d + 1];
        for (i, a) in self.coeffs.iter().enumerate().take(d + 1) {
            if a.is_zero() {
                continue;
            }
            for (j, b) in o.coeffs.iter().enumerate().take(d + 1 - i) {
                coeffs[i + j] = coeffs[i + j].add(&a.mul(b));
            }
        }
        Ok(SeriesMat { dim: self.dim, coeffs })
    }

    pub fn invert(&self) -> Result<SeriesMat, AlgebraError> {
        let a0inv = self.coeffs[0].inverse()?;
        let d = self.order();
        let mut out: Vec<Mat> = vec![a0inv.clone()];
        for k in 1..=d {
            let mut acc = Mat::zeros(self.dim, self.dim);
            for j in 1..=k {
                acc = acc.add(&self.coeffs[j].mul(&out[k - j]));
            }
            out.push(a0inv.mul(&acc).scale(&-Rat::one()));
        }
        Ok(SeriesMat { dim: self.dim, coeffs: out })
    }

    pub fn apply(&self, v: &SeriesVec) -> Result<SeriesVec, AlgebraError> {
        if self.dim != v.dim {
            return Err(AlgebraError::DimensionMismatch(self.dim, v.dim));
        }
        let d = self.order().min(v.order());
        let mut coeffs = vec![vec![Rat::zero(); self.dim]; d + 1];
        for i in 0..=d {
            for j in 0..=(d - i) {
                let w = self.coeffs[i].mul_vec(&v.coeffs[j]);
                for (c, x) in coeffs[i + j].iter_mut().zip(w) {
                    *c += x;
                }
            }
        }
        Ok(SeriesVec { dim: self.dim, coeffs })
    }

    fn check(&self, o: &SeriesMat) -> Result<(), AlgebraError> {
        if self.dim != o.dim {
            Err(AlgebraError::DimensionMismatch(self.dim, o.dim))
        } else {
            Ok(())
        }
    }
}

/// Vector-valued power series in `z`, truncated at `z^order`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeriesVec {
    pub dim: usize,
    pub coeffs: Vec<Vec<Rat>>,
}

impl SeriesVec {
    pub fn new(dim: usize, coeffs: Vec<Vec<Rat>>) -> Result<Self, AlgebraError> {
        if coeffs.is_empty() {
            return Err(AlgebraError::Parse("series needs at least one coefficient".into()));
        }
        for c in &coeffs {
            if c.len() != dim {
                return Err(AlgebraError::DimensionMismatch(dim, c.len()));
            }
        }
        Ok(SeriesVec { dim, coeffs })
    }

    pub fn zero(dim: usize, order: usize) -> Self {
        SeriesVec { dim, coeffs: vec![vec![Rat::zero(); dim]; order + 1] }
    }

    pub fn constant(v: &[Rat], order: usize) -> Self {
        let mut s = SeriesVec::zero(v.len(), order);
        s.coeffs[0] = v.to_vec();
        s
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, k: usize) -> Vec<Rat> {
        self.coeffs.get(k).cloned().unwrap_or_else(|| vec![Rat::zero(); self.dim])
    }

    pub fn truncate(&self, order: usize) -> SeriesVec {
        let mut c = self.coeffs.clone();
        c.resize(order + 1, vec![Rat::zero(); self.dim]);
        c.truncate(order + 1);
        SeriesVec { dim: self.dim, coeffs: c }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().flatten().all(Zero::is_zero)
    }

    pub fn add(&self, o: &SeriesVec) -> Result<SeriesVec, AlgebraError> {
        if self.dim != o.dim {
            return Err(AlgebraError::DimensionMismatch(self.dim, o.dim));
        }
        let d = self.order().min(o.order());
        Ok(SeriesVec {
            dim: self.dim,
            coeffs: (0..=d)
                .map(|k| self.coeffs[k].iter().zip(&o.coeffs[k]).map(|(a, b)| a + b).collect())
                .collect(),
        })
    }

    pub fn scale(&self, s: &Rat) -> SeriesVec {
        SeriesVec {
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|c| c.iter().map(|x| x * s).collect()).collect(),
        }
    }

    /// Multiply by `z^k`, keeping the order.
    pub fn shift_up(&self, k: usize) -> SeriesVec {
        let mut out = SeriesVec::zero(self.dim, self.order());
        for i in 0..=self.order() {
            if i + k <= self.order() {
                out.coeffs[i + k] = self.coeffs[i].clone();
            }
        }
        out
    }
}

/// Generator of the κ/ψ polynomial rings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gen {
    /// κ_m, degree m.
    Kappa(u32),
    /// ψ at marked point i, degree 1.
    Psi(u32),
}

impl Gen {
    pub fn degree(self) -> u32 {
        match self {
            Gen::Kappa(m) => m,
            Gen::Psi(_) => 1,
        }
    }
}

impl fmt::Display for Gen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gen::Kappa(m) => write!(f, "k{m}"),
            Gen::Psi(i) => write!(f, "p{i}"),
        }
    }
}

impl FromStr for Gen {
    type Err = AlgebraError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AlgebraError::Parse(s.to_string());
        let (head, idx) = s.split_at(1.min(s.len()));
        let i: u32 = idx.parse().map_err(|_| bad())?;
        match head {
            "k" if i >= 1 => Ok(Gen::Kappa(i)),
            "p" if i >= 1 => Ok(Gen::Psi(i)),
            _ => Err(bad()),
        }
    }
}

/// Sparse polynomial with rational coefficients over an ordered list of
/// generators. Exponent vectors always have the ring's length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly {
    pub ring: Vec<Gen>,
    pub terms: BTreeMap<Vec<u32>, Rat>,
}

impl Poly {
    pub fn zero(ring: Vec<Gen>) -> Self {
        Poly { ring, terms: BTreeMap::new() }
    }

    pub fn constant(ring: Vec<Gen>, c: Rat) -> Self {
        let mut p = Poly::zero(ring);
        let n = p.ring.len();
        p.add_term(vec![0; n], c);
        p
    }

    pub fn gen(ring: Vec<Gen>, g: Gen) -> Result<Self, AlgebraError> {
        let pos = ring.iter().position(|&x| x == g).ok_or(AlgebraError::RingMismatch)?;
        let mut e = vec![0; ring.len()];
        e[pos] = 1;
        let mut p = Poly::zero(ring);
        p.add_term(e, Rat::one());
        Ok(p)
    }

    /// Ring `κ_1 … κ_m`.
    pub fn kappa_ring(m: u32) -> Vec<Gen> {
        (1..=m).map(Gen::Kappa).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, exps: Vec<u32>, c: Rat) {
        debug_assert_eq!(exps.len(), self.ring.len());
        if c.is_zero() {
            return;
        }
        match self.terms.entry(exps) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn coeff(&self, exps: &[u32]) -> Rat {
        self.terms.get(exps).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn term_degree(&self, exps: &[u32]) -> u32 {
        exps.iter().zip(&self.ring).map(|(e, g)| e * g.degree()).sum()
    }

    /// Maximal grading among the terms; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| self.term_degree(e)).max()
    }

    pub fn is_homogeneous(&self) -> bool {
        let mut it = self.terms.keys().map(|e| self.term_degree(e));
        match it.next() {
            None => true,
            Some(d) => it.all(|x| x == d),
        }
    }

    pub fn add(&self, o: &Poly) -> Result<Poly, AlgebraError> {
        if self.ring != o.ring {
            return Err(AlgebraError::RingMismatch);
        }
        let mut out = self.clone();
        for (e, c) in &o.terms {
            out.add_term(e.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, o: &Poly) -> Result<Poly, AlgebraError> {
        self.add(&o.scale(&-Rat::one()))
    }

    pub fn scale(&self, s: &Rat) -> Poly {
        if s.is_zero() {
            return Poly::zero(self.ring.clone());
        }
        Poly { ring: self.ring.clone(), terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect() }
    }

    pub fn mul(&self, o: &Poly) -> Result<Poly, AlgebraError> {
        if self.ring != o.ring {
            return Err(AlgebraError::RingMismatch);
        }
        let mut acc: BTreeMap<Vec<u32>, Rat> = BTreeMap::new();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &o.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                *acc.entry(e).or_insert_with(Rat::zero) += ca * cb;
            }
        }
        acc.retain(|_, c| !c.is_zero());
        Ok(Poly { ring: self.ring.clone(), terms: acc })
    }

    pub fn pow(&self, k: u32) -> Poly {
        let mut out = Poly::constant(self.ring.clone(), Rat::one());
        for _ in 0..k {
            out = out.mul(self).expect("same ring");
        }
        out
    }

    /// Drop terms of grading above `d`.
    pub fn truncate_degree(&self, d: u32) -> Poly {
        let mut p = self.clone();
        let ring = p.ring.clone();
        p.terms.retain(|e, _| e.iter().zip(&ring).map(|(x, g)| x * g.degree()).sum::<u32>() <= d);
        p
    }

    pub fn homogeneous_part(&self, d: u32) -> Poly {
        let mut p = self.clone();
        let ring = p.ring.clone();
        p.terms.retain(|e, _| e.iter().zip(&ring).map(|(x, g)| x * g.degree()).sum::<u32>() == d);
        p
    }
}

fn fmt_monomial(ring: &[Gen], exps: &[u32]) -> String {
    let parts: Vec<String> = ring
        .iter()
        .zip(exps)
        .filter(|(_, &e)| e > 0)
        .map(|(g, &e)| if e == 1 { g.to_string() } else { format!("{g}^{e}") })
        .collect();
    parts.join("*")
}

/// Canonical text form: monomials in lexicographic order of their printed
/// form, e.g. `-1/2*k1^2 + 3*k2`.
impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut items: Vec<(String, &Rat)> =
            self.terms.iter().map(|(e, c)| (fmt_monomial(&self.ring, e), c)).collect();
        items.sort_by(|a, b| a.0.cmp(&b.0));
        for (i, (m, c)) in items.iter().enumerate() {
            let neg = c.is_negative();
            let a = c.abs();
            if i == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            match (m.is_empty(), a.is_one()) {
                (true, _) => write!(f, "{a}")?,
                (false, true) => write!(f, "{m}")?,
                (false, false) => write!(f, "{a}*{m}")?,
            }
        }
        Ok(())
    }
}

impl Poly {
    /// Parse the canonical text form over `ring`.
    pub fn parse(ring: Vec<Gen>, s: &str) -> Result<Poly, AlgebraError> {
        let bad = || AlgebraError::Parse(s.to_string());
        let mut p = Poly::zero(ring.clone());
        let t = s.trim();
        if t == "0" {
            return Ok(p);
        }
        // Split into signed terms.
        let mut terms: Vec<(bool, String)> = Vec::new();
        let mut neg = false;
        let mut cur = String::new();
        for tok in t.split_whitespace() {
            match tok {
                "+" | "-" => {
                    if !cur.is_empty() {
                        terms.push((neg, std::mem::take(&mut cur)));
                    }
                    neg = tok == "-";
                }
                _ => cur.push_str(tok),
            }
        }
        if !cur.is_empty() {
            terms.push((neg, cur));
        }
        for (neg, mut body) in terms {
            let mut sign = if neg { -Rat::one() } else { Rat::one() };
            if let Some(rest) = body.strip_prefix('-') {
                sign = -sign;
                body = rest.to_string();
            }
            let mut coeff = Rat::one();
            let mut exps = vec![0u32; ring.len()];
            for (i, factor) in body.split('*').enumerate() {
                if i == 0 && factor.starts_with(|c: char| c.is_ascii_digit()) {
                    coeff = parse_rat(factor)?;
                    continue;
                }
                let (g, e) = match factor.split_once('^') {
                    Some((g, e)) => (g, e.parse::<u32>().map_err(|_| bad())?),
                    None => (factor, 1),
                };
                let g: Gen = g.parse()?;
                let pos = ring.iter().position(|&x| x == g).ok_or(AlgebraError::RingMismatch)?;
                exps[pos] += e;
            }
            p.add_term(exps, sign * coeff);
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2(a: i64, b: i64, c: i64, d: i64) -> Mat {
        Mat::from_rows(vec![vec![int(a), int(b)], vec![int(c), int(d)]])
    }

    #[test]
    fn identity_product() {
        let id = SeriesMat::identity(2, 4);
        assert_eq!(id.mul(&id).unwrap(), id);
    }

    #[test]
    fn difference_of_squares() {
        let e = m2(1, 2, -3, 5);
        let a = SeriesMat::new(2, vec![Mat::identity(2), e.clone(), Mat::zeros(2, 2)]).unwrap();
        let b = SeriesMat::new(2, vec![Mat::identity(2), e.scale(&int(-1)), Mat::zeros(2, 2)]).unwrap();
        let p = a.mul(&b).unwrap();
        assert_eq!(p.coeffs[1], Mat::zeros(2, 2));
        assert_eq!(p.coeffs[2], e.mul(&e).scale(&int(-1)));
    }

    #[test]
    fn geometric_inverse() {
        let e = rat(3, 7);
        let a = SeriesMat::new(1, vec![Mat::identity(1), Mat::diag(std::slice::from_ref(&e)), Mat::zeros(1, 1), Mat::zeros(1, 1)])
            .unwrap();
        let inv = a.invert().unwrap();
        for k in 0..=3 {
            assert_eq!(inv.coeffs[k].get(0, 0), &pow_i(&-e.clone(), k as i64));
        }
    }

    #[test]
    fn singular_constant_term() {
        let a = SeriesMat::new(2, vec![m2(1, 1, 1, 1)]).unwrap();
        assert_eq!(a.invert(), Err(AlgebraError::Singular));
    }

    #[test]
    fn mixed_order_truncates_to_min() {
        let a = SeriesMat::identity(1, 5);
        let b = SeriesMat::identity(1, 2);
        assert_eq!(a.mul(&b).unwrap().order(), 2);
    }

    #[test]
    fn kappa_psi_products() {
        let ring = vec![Gen::Kappa(1), Gen::Psi(1)];
        let k = Poly::gen(ring.clone(), Gen::Kappa(1)).unwrap();
        let p = Poly::gen(ring.clone(), Gen::Psi(1)).unwrap();
        let lhs = k.sub(&p).unwrap().mul(&k.add(&p).unwrap()).unwrap();
        let rhs = k.mul(&k).unwrap().sub(&p.mul(&p).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
        assert_eq!(lhs.to_string(), "k1^2 - p1^2");
    }

    #[test]
    fn text_round_trip() {
        let ring = vec![Gen::Kappa(1), Gen::Kappa(2), Gen::Psi(3)];
        let p = Poly::parse(ring.clone(), "5/2*k1^2*p3 - k2 + 7").unwrap();
        assert_eq!(p.to_string(), "7 + 5/2*k1^2*p3 - k2");
        assert_eq!(Poly::parse(ring, &p.to_string()).unwrap(), p);
    }

    #[test]
    fn ring_mismatch() {
        let a = Poly::zero(vec![Gen::Kappa(1)]);
        let b = Poly::zero(vec![Gen::Psi(1)]);
        assert_eq!(a.mul(&b), Err(AlgebraError::RingMismatch));
    }
}
