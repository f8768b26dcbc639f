//! Flat F-manifolds given by a vector potential F^μ(t): structure constants,
//! oriented WDVV, canonical frames at semisimple points, the differential
//! equations for R and T̂ with their flat-section and vacuum companions, and
//! conformal reconstruction of the group element.
//!
//! Canonical-frame matrices act on canonical components, and Ψ sends flat
//! components to canonical ones. H is never formed: every formula uses
//! (dH)H^{-1} = −½ d log α, with α^i the canonical components of α.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::algebra::{int, pow_i, rat, to_f64, AlgebraError, Mat, Rat, SeriesMat, SeriesVec};
use crate::ftft::{float_idempotents, toml_rat, AlgebraSpec, Frame, FtftError};
use crate::givental::{GiventalElement, GiventalError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FflatError {
    #[error("potential file: {0}")]
    Parse(String),
    #[error("dimension mismatch: {0}")]
    Dim(String),
    #[error("not semisimple at this point: {0}")]
    NotSemisimple(String),
    #[error("{0} is not defined at this point")]
    Undefined(&'static str),
    #[error("canonical coordinates u{0} and u{1} coincide")]
    Coincident(usize, usize),
    #[error("canonical coordinate u{0} vanishes")]
    ZeroEigenvalue(usize),
    #[error("resonance at order {k}: k + μ_{i}{i} = 0")]
    Resonance { k: usize, i: usize },
    #[error("the z^{k} equation has a nonzero diagonal entry at {i}; μ must have zero diagonal in the canonical frame")]
    Inconsistent { k: usize, i: usize },
    #[error("α has a vanishing canonical component {0}")]
    ZeroAlpha(usize),
    #[error("missing {0}")]
    Missing(&'static str),
    #[error("{0} must be a single Laurent monomial for the symbolic frame")]
    NotMonomial(&'static str),
    #[error("oriented WDVV fails in {0} components")]
    Wdvv(usize),
    #[error("the unit equation fails in {0} components")]
    Unit(usize),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Ftft(#[from] FtftError),
    #[error(transparent)]
    Givental(#[from] GiventalError),
}

/// Laurent polynomial in t^1…t^N with rational coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MPoly {
    pub nvars: usize,
    pub terms: BTreeMap<Vec<i32>, Rat>,
}

impl MPoly {
    pub fn zero(nvars: usize) -> Self {
        MPoly { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: Rat) -> Self {
        MPoly::monomial(vec![0; nvars], c)
    }

    pub fn monomial(exps: Vec<i32>, c: Rat) -> Self {
        let mut p = MPoly::zero(exps.len());
        p.add_term(exps, c);
        p
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        MPoly::monomial(e, Rat::one())
    }

    pub fn add_term(&mut self, exps: Vec<i32>, c: Rat) {
        debug_assert_eq!(exps.len(), self.nvars);
        if c.is_zero() {
            return;
        }
        let slot = self.terms.entry(exps.clone()).or_insert_with(Rat::zero);
        *slot += c;
        if slot.is_zero() {
            self.terms.remove(&exps);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, o: &MPoly) -> MPoly {
        let mut r = self.clone();
        for (e, c) in &o.terms {
            r.add_term(e.clone(), c.clone());
        }
        r
    }

    pub fn sub(&self, o: &MPoly) -> MPoly {
        self.add(&o.scale(&-Rat::one()))
    }

    pub fn scale(&self, s: &Rat) -> MPoly {
        if s.is_zero() {
            return MPoly::zero(self.nvars);
        }
        MPoly { nvars: self.nvars, terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect() }
    }

    pub fn mul(&self, o: &MPoly) -> MPoly {
        let mut r = MPoly::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &o.terms {
                r.add_term(ea.iter().zip(eb).map(|(x, y)| x + y).collect(), ca * cb);
            }
        }
        r
    }

    pub fn deriv(&self, i: usize) -> MPoly {
        let mut r = MPoly::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] != 0 {
                let mut e2 = e.clone();
                e2[i] -= 1;
                r.add_term(e2, c * int(e[i] as i64));
            }
        }
        r
    }

    /// `None` when a negative power meets a vanishing coordinate.
    pub fn eval(&self, t: &[Rat]) -> Option<Rat> {
        let mut total = Rat::zero();
        for (e, c) in &self.terms {
            let mut v = c.clone();
            for (x, &k) in t.iter().zip(e) {
                if k < 0 && x.is_zero() {
                    return None;
                }
                v *= pow_i(x, k as i64);
            }
            total += v;
        }
        Some(total)
    }

    pub fn eval_f64(&self, t: &[f64]) -> f64 {
        self.terms.iter().map(|(e, c)| to_f64(c) * t.iter().zip(e).map(|(x, &k)| x.powi(k)).product::<f64>()).sum()
    }

    pub fn as_monomial(&self) -> Option<(&[i32], &Rat)> {
        match self.terms.len() {
            1 => self.terms.iter().next().map(|(e, c)| (e.as_slice(), c)),
            _ => None,
        }
    }

    /// Inverse of a single monomial.
    pub fn inverse(&self) -> Option<MPoly> {
        let (e, c) = self.as_monomial()?;
        Some(MPoly::monomial(e.iter().map(|x| -x).collect(), c.recip()))
    }
}

impl fmt::Display for MPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for (i, &k) in e.iter().enumerate() {
                match k {
                    0 => {}
                    1 => write!(f, "*t{}", i + 1)?,
                    _ => write!(f, "*t{}^{}", i + 1, k)?,
                }
            }
        }
        Ok(())
    }
}

/// Coefficients of the residual formulas: exact rationals, floats, or
/// Laurent polynomials for the symbolic one-dimensional checks.
pub trait Ring: Clone {
    fn zero_like(&self) -> Self;
    fn one_like(&self) -> Self;
    fn plus(&self, o: &Self) -> Self;
    fn minus(&self, o: &Self) -> Self;
    fn times(&self, o: &Self) -> Self;
    fn scaled(&self, q: &Rat) -> Self;
    fn vanishes(&self) -> bool;
    /// Size used in residual reports.
    fn magnitude(&self) -> f64;
}

impl Ring for Rat {
    fn zero_like(&self) -> Self {
        Rat::zero()
    }
    fn one_like(&self) -> Self {
        Rat::one()
    }
    fn plus(&self, o: &Self) -> Self {
        self + o
    }
    fn minus(&self, o: &Self) -> Self {
        self - o
    }
    fn times(&self, o: &Self) -> Self {
        self * o
    }
    fn scaled(&self, q: &Rat) -> Self {
        self * q
    }
    fn vanishes(&self) -> bool {
        self.is_zero()
    }
    fn magnitude(&self) -> f64 {
        to_f64(self).abs()
    }
}

impl Ring for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn one_like(&self) -> Self {
        1.0
    }
    fn plus(&self, o: &Self) -> Self {
        self + o
    }
    fn minus(&self, o: &Self) -> Self {
        self - o
    }
    fn times(&self, o: &Self) -> Self {
        self * o
    }
    fn scaled(&self, q: &Rat) -> Self {
        self * to_f64(q)
    }
    fn vanishes(&self) -> bool {
        *self == 0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Ring for MPoly {
    fn zero_like(&self) -> Self {
        MPoly::zero(self.nvars)
    }
    fn one_like(&self) -> Self {
        MPoly::constant(self.nvars, Rat::one())
    }
    fn plus(&self, o: &Self) -> Self {
        self.add(o)
    }
    fn minus(&self, o: &Self) -> Self {
        self.sub(o)
    }
    fn times(&self, o: &Self) -> Self {
        self.mul(o)
    }
    fn scaled(&self, q: &Rat) -> Self {
        self.scale(q)
    }
    fn vanishes(&self) -> bool {
        self.is_zero()
    }
    fn magnitude(&self) -> f64 {
        self.terms.values().map(|c| to_f64(c).abs()).fold(0.0, f64::max)
    }
}

/// Row-major square matrix over a [`Ring`].
pub type Grid<S> = Vec<Vec<S>>;

fn gmul<S: Ring>(a: &Grid<S>, b: &Grid<S>) -> Grid<S> {
    a.iter()
        .map(|row| {
            (0..b[0].len())
                .map(|j| row.iter().zip(b).fold(row[0].zero_like(), |acc, (x, brow)| acc.plus(&x.times(&brow[j]))))
                .collect()
        })
        .collect()
}

fn gadd<S: Ring>(a: &Grid<S>, b: &Grid<S>) -> Grid<S> {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p.plus(q)).collect()).collect()
}

fn gsub<S: Ring>(a: &Grid<S>, b: &Grid<S>) -> Grid<S> {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p.minus(q)).collect()).collect()
}

fn gscale<S: Ring>(a: &Grid<S>, q: &Rat) -> Grid<S> {
    a.iter().map(|x| x.iter().map(|p| p.scaled(q)).collect()).collect()
}

fn gmulv<S: Ring>(a: &Grid<S>, v: &[S]) -> Vec<S> {
    a.iter().map(|row| row.iter().zip(v).fold(v[0].zero_like(), |acc, (x, y)| acc.plus(&x.times(y)))).collect()
}

/// a·diag(d) − diag(d)·a.
fn gcomm_diag<S: Ring>(a: &Grid<S>, d: &[S]) -> Grid<S> {
    a.iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().map(|(j, x)| x.times(&d[j].minus(&d[i]))).collect())
        .collect()
}

fn gidentity<S: Ring>(like: &S, n: usize) -> Grid<S> {
    (0..n).map(|i| (0..n).map(|j| if i == j { like.one_like() } else { like.zero_like() }).collect()).collect()
}

fn gzero<S: Ring>(like: &S, n: usize) -> Grid<S> {
    vec![vec![like.zero_like(); n]; n]
}

fn vhad<S: Ring>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(x, y)| x.times(y)).collect()
}

fn vadd<S: Ring>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(x, y)| x.plus(y)).collect()
}

fn vsub<S: Ring>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(x, y)| x.minus(y)).collect()
}

pub fn mat_to_grid(m: &Mat) -> Grid<Rat> {
    m.to_rows()
}

pub fn grid_to_mat(g: &Grid<Rat>) -> Mat {
    Mat::from_rows(g.clone())
}

/// Largest magnitude over a nested residual.
pub fn max_magnitude<S: Ring>(g: &[Grid<S>]) -> f64 {
    g.iter().flatten().flatten().map(Ring::magnitude).fold(0.0, f64::max)
}

pub fn all_vanish<S: Ring>(g: &[Grid<S>]) -> bool {
    g.iter().flatten().flatten().all(Ring::vanishes)
}

/// Inverse of a series with R_0 = Id, by R^{-1}_k = −Σ_{j≥1} R_j R^{-1}_{k−j}.
pub fn series_inverse<S: Ring>(r: &[Grid<S>]) -> Vec<Grid<S>> {
    let like = r[0][0][0].clone();
    let n = r[0].len();
    let mut out: Vec<Grid<S>> = vec![gidentity(&like, n)];
    for k in 1..r.len() {
        let mut acc = gzero(&like, n);
        for j in 1..=k {
            acc = gsub(&acc, &gmul(&r[j], &out[k - j]));
        }
        out.push(acc);
    }
    out
}

fn series_mul<S: Ring>(a: &[Grid<S>], b: &[Grid<S>]) -> Vec<Grid<S>> {
    let like = a[0][0][0].clone();
    let n = a[0].len();
    let len = a.len().min(b.len());
    (0..len)
        .map(|k| (0..=k).fold(gzero(&like, n), |acc, j| gadd(&acc, &gmul(&a[j], &b[k - j]))))
        .collect()
}

fn negate_z<S: Ring>(r: &[Grid<S>]) -> Vec<Grid<S>> {
    r.iter().enumerate().map(|(k, m)| if k % 2 == 1 { gscale(m, &-Rat::one()) } else { m.clone() }).collect()
}

/// Frame data along one flat direction ∂_β: `p` = (∂_βΨ)Ψ^{-1}, `h` the
/// diagonal of (∂_βH)H^{-1} = −½ ∂_β log α, and `du`^i = Ψ^i_β.
#[derive(Clone, Debug)]
pub struct DirData<S> {
    pub p: Grid<S>,
    pub h: Vec<S>,
    pub du: Vec<S>,
}

/// Coefficients of z^{−1}, z^0, …, z^{D−1} in
/// dR − R(dH)H^{-1} − (dΨ)Ψ^{-1}R + z^{-1}[R, dU] for R = Σ_{k≤D} R_k z^k.
pub fn r_equation_residual<S: Ring>(d: &DirData<S>, r: &[Grid<S>], dr: &[Grid<S>]) -> Vec<Grid<S>> {
    let mut out = vec![gcomm_diag(&r[0], &d.du)];
    for k in 0..r.len() - 1 {
        let rh: Grid<S> = r[k].iter().map(|row| vhad(row, &d.h)).collect();
        let mut e = gsub(&gsub(&dr[k], &rh), &gmul(&d.p, &r[k]));
        e = gadd(&e, &gcomm_diag(&r[k + 1], &d.du));
        out.push(e);
    }
    out
}

/// Coefficients of z^{−1}, …, z^{D−1} in
/// dT̂ − (dH)H^{-1}T̂ + z^{-1}T̂·(dŪ − T̂·R^{-1}[dŪ]), with the product taken
/// componentwise in the canonical frame.
pub fn that_residual<S: Ring>(d: &DirData<S>, that: &[Vec<S>], dthat: &[Vec<S>], r: &[Grid<S>]) -> Vec<Vec<S>> {
    let len = that.len().min(r.len());
    let rinv = series_inverse(&r[..len]);
    let w: Vec<Vec<S>> = rinv.iter().map(|m| gmulv(m, &d.du)).collect();
    let zero: Vec<S> = d.du.iter().map(|x| x.zero_like()).collect();
    let conv = |a: &[Vec<S>], b: &[Vec<S>], k: usize| (0..=k).fold(zero.clone(), |acc, j| vadd(&acc, &vhad(&a[j], &b[k - j])));
    let tw: Vec<Vec<S>> = (0..len).map(|k| conv(that, &w, k)).collect();
    let inner: Vec<Vec<S>> = (0..len).map(|k| if k == 0 { vsub(&d.du, &tw[0]) } else { vsub(&zero, &tw[k]) }).collect();
    let q: Vec<Vec<S>> = (0..len).map(|k| conv(that, &inner, k)).collect();
    let mut out = vec![q[0].clone()];
    for k in 0..len - 1 {
        out.push(vadd(&vsub(&dthat[k], &vhad(&d.h, &that[k])), &q[k + 1]));
    }
    out
}

/// (∇^{−z}ξ_j)·e^{−u_j/z}H^j for ξ_j = (Ψ^{-1}R H^{-1}e^{U/z})_j, from the
/// connection form dX − (dΨ)Ψ^{-1}X − z^{-1}(dU)X; indexed [j][power][i]
/// with powers z^{−1}, …, z^{D−1}.
pub fn flat_section_residual<S: Ring>(d: &DirData<S>, r: &[Grid<S>], dr: &[Grid<S>]) -> Vec<Vec<Vec<S>>> {
    let n = d.du.len();
    let col = |m: &Grid<S>, j: usize| -> Vec<S> { m.iter().map(|row| row[j].clone()).collect() };
    (0..n)
        .map(|j| {
            // e^{U/z} contributes z^{-1}du_j·X_j from d, and H^{-1} contributes −h_j·X_j.
            let shift = |x: &[S]| vsub(&x.iter().map(|v| v.times(&d.du[j])).collect::<Vec<_>>(), &vhad(&d.du, x));
            let mut out = vec![shift(&col(&r[0], j))];
            for k in 0..r.len() - 1 {
                let x = col(&r[k], j);
                let dx = col(&dr[k], j);
                let mut e = vsub(&dx, &x.iter().map(|v| v.times(&d.h[j])).collect::<Vec<_>>());
                e = vsub(&e, &gmulv(&d.p, &x));
                e = vadd(&e, &shift(&col(&r[k + 1], j)));
                out.push(e);
            }
            out
        })
        .collect()
}

/// Coefficients of z^{−1}, …, z^{D−1} in ∇^{−z}_{∂_β}Υ + z^{-1}∂_β.
pub fn vacuum_residual<S: Ring>(d: &DirData<S>, ups: &[Vec<S>], dups: &[Vec<S>]) -> Vec<Vec<S>> {
    let mut out = vec![vsub(&d.du, &vhad(&d.du, &ups[0]))];
    for k in 0..ups.len() - 1 {
        let e = vsub(&vsub(&dups[k], &gmulv(&d.p, &ups[k])), &vhad(&d.du, &ups[k + 1]));
        out.push(e);
    }
    out
}

/// S(z) = R(−z)^{-1}, the dual-convention matrix conjugated by H:
/// 𝖱(z) = H·S(z)·H^{-1}, which equals S in dimension one.
pub fn dual_convention<S: Ring>(r: &[Grid<S>]) -> Vec<Grid<S>> {
    series_inverse(&negate_z(r))
}

/// d S(z) for S = R(−z)^{-1}: −S·dR(−z)·S.
pub fn dual_derivative<S: Ring>(r: &[Grid<S>], dr: &[Grid<S>]) -> Vec<Grid<S>> {
    let s = dual_convention(r);
    let m = series_mul(&series_mul(&s, &negate_z(dr)), &s);
    m.iter().map(|x| gscale(x, &-Rat::one())).collect()
}

/// d(𝖱H) + 𝖱H(dΨ)Ψ^{-1} + z^{-1}[dU, 𝖱]H multiplied by H^{-1} on the left,
/// written through S: dS + (dH)H^{-1}S + S(dΨ)Ψ^{-1} + z^{-1}[dU, S].
pub fn dual_residual<S: Ring>(d: &DirData<S>, s: &[Grid<S>], ds: &[Grid<S>]) -> Vec<Grid<S>> {
    let neg = |g: Grid<S>| gscale(&g, &-Rat::one());
    let mut out = vec![neg(gcomm_diag(&s[0], &d.du))];
    for k in 0..s.len() - 1 {
        let hs: Grid<S> = s[k].iter().zip(&d.h).map(|(row, h)| row.iter().map(|x| h.times(x)).collect()).collect();
        let mut e = gadd(&gadd(&ds[k], &hs), &gmul(&s[k], &d.p));
        e = gadd(&e, &neg(gcomm_diag(&s[k + 1], &d.du)));
        out.push(e);
    }
    out
}

/// Euler data E = K + L[t] with scalar Δ.
#[derive(Clone, Debug, PartialEq)]
pub struct Euler {
    pub k: Vec<Rat>,
    pub l: Mat,
    pub delta: Rat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlatFJet {
    pub dim: usize,
    pub potential: Vec<MPoly>,
    pub base: Vec<Rat>,
    pub unit: Option<Vec<MPoly>>,
    pub alpha: Option<Vec<MPoly>>,
    pub euler: Option<Euler>,
}

impl FlatFJet {
    pub fn new(
        potential: Vec<MPoly>,
        base: Vec<Rat>,
        unit: Option<Vec<MPoly>>,
        alpha: Option<Vec<MPoly>>,
        euler: Option<Euler>,
    ) -> Result<Self, FflatError> {
        let dim = potential.len();
        let bad = |what: &str| FflatError::Dim(format!("{what} does not match dimension {dim}"));
        if dim == 0 {
            return Err(FflatError::Dim("empty potential".into()));
        }
        let fields_ok = |v: &[MPoly]| v.len() == dim && v.iter().all(|p| p.nvars == dim);
        if !fields_ok(&potential) {
            return Err(bad("potential"));
        }
        if base.len() != dim {
            return Err(bad("basepoint"));
        }
        if unit.as_deref().is_some_and(|u| !fields_ok(u)) {
            return Err(bad("unit"));
        }
        if alpha.as_deref().is_some_and(|a| !fields_ok(a)) {
            return Err(bad("alpha"));
        }
        if let Some(e) = &euler {
            if e.k.len() != dim || e.l.rows != dim || e.l.cols != dim {
                return Err(bad("Euler data"));
            }
        }
        Ok(FlatFJet { dim, potential, base, unit, alpha, euler })
    }

    /// F = A t^{r+1}/(r(r+1)), α = a t^{r−1}∂_t, 𝟙 = A^{-1}t^{1−r}∂_t,
    /// E = r^{-1}t∂_t, Δ = 2 − 2/r, based at t = 1.
    pub fn rspin(r: u32) -> Result<Self, FflatError> {
        if r < 2 {
            return Err(FflatError::Dim(format!("r must be at least 2, got {r}")));
        }
        let ri = r as i64;
        let a_prod = pow_i(&int(-ri), 1 - ri);
        let a = pow_i(&int(-ri), 2 - ri);
        let f = MPoly::monomial(vec![r as i32 + 1], &a_prod / int(ri * (ri + 1)));
        let alpha = MPoly::monomial(vec![r as i32 - 1], a);
        let unit = MPoly::monomial(vec![1 - r as i32], a_prod.recip());
        let euler = Euler { k: vec![Rat::zero()], l: Mat::diag(&[rat(1, ri)]), delta: int(2) - rat(2, ri) };
        FlatFJet::new(vec![f], vec![Rat::one()], Some(vec![unit]), Some(vec![alpha]), Some(euler))
    }

    /// `c[mu][nu][rho]` = ∂_μ∂_νF^ρ.
    pub fn structure_polys(&self) -> Vec<Vec<Vec<MPoly>>> {
        (0..self.dim)
            .map(|mu| (0..self.dim).map(|nu| self.potential.iter().map(|f| f.deriv(mu).deriv(nu)).collect()).collect())
            .collect()
    }

    /// E^σ = K^σ + L^σ_τ t^τ.
    pub fn euler_field(&self) -> Option<Vec<MPoly>> {
        let e = self.euler.as_ref()?;
        Some(
            (0..self.dim)
                .map(|s| {
                    let mut p = MPoly::constant(self.dim, e.k[s].clone());
                    for tau in 0..self.dim {
                        p = p.add(&MPoly::var(self.dim, tau).scale(e.l.get(s, tau)));
                    }
                    p
                })
                .collect(),
        )
    }

    /// μ = −L + (1 − Δ/2)Id in the flat basis.
    pub fn mu(&self) -> Option<Mat> {
        let e = self.euler.as_ref()?;
        let s = Rat::one() - &e.delta / int(2);
        Some(Mat::identity(self.dim).scale(&s).sub(&e.l))
    }

    /// The F-TFT at `t`: structure constants, α and (where defined) 𝟙.
    pub fn spec_at(&self, t: &[Rat]) -> Result<AlgebraSpec, FflatError> {
        let c = structure_constants(self, t)?;
        let alpha = self.alpha.as_ref().ok_or(FflatError::Missing("alpha"))?;
        let alpha = eval_all(alpha, t).ok_or(FflatError::Undefined("alpha"))?;
        let unit = self.unit.as_ref().and_then(|u| eval_all(u, t));
        Ok(AlgebraSpec { dim: self.dim, c, alpha, unit, idempotents: None })
    }

    /// Oriented WDVV and (if a unit is given) the unit equation.
    pub fn check(&self) -> Result<(), FflatError> {
        let w = wdvv_residual(self);
        if !w.is_empty() {
            return Err(FflatError::Wdvv(w.len()));
        }
        let u = unit_residual(self);
        if !u.is_empty() {
            return Err(FflatError::Unit(u.len()));
        }
        Ok(())
    }
}

fn eval_all(v: &[MPoly], t: &[Rat]) -> Option<Vec<Rat>> {
    v.iter().map(|p| p.eval(t)).collect()
}

pub fn structure_constants(j: &FlatFJet, t: &[Rat]) -> Result<Vec<Vec<Vec<Rat>>>, FflatError> {
    if t.len() != j.dim {
        return Err(FflatError::Dim(format!("point has {} coordinates, expected {}", t.len(), j.dim)));
    }
    j.structure_polys()
        .iter()
        .map(|a| {
            a.iter()
                .map(|b| b.iter().map(|p| p.eval(t).ok_or(FflatError::Undefined("∂²F"))).collect())
                .collect()
        })
        .collect()
}

/// Nonzero components of c^μ_{νβ}c^β_{ρλ} − c^μ_{ρβ}c^β_{νλ}, keyed (μ,ν,ρ,λ).
pub fn wdvv_residual(j: &FlatFJet) -> Vec<([usize; 4], MPoly)> {
    let c = j.structure_polys();
    let n = j.dim;
    let mut out = Vec::new();
    for mu in 0..n {
        for nu in 0..n {
            for rho in 0..n {
                for la in 0..n {
                    let mut e = MPoly::zero(n);
                    for b in 0..n {
                        e = e.add(&c[nu][b][mu].mul(&c[rho][la][b]));
                        e = e.sub(&c[rho][b][mu].mul(&c[nu][la][b]));
                    }
                    if !e.is_zero() {
                        out.push(([mu, nu, rho, la], e));
                    }
                }
            }
        }
    }
    out
}

/// Nonzero components of 𝟙^β c^μ_{βν} − δ^μ_ν, keyed (μ,ν).
pub fn unit_residual(j: &FlatFJet) -> Vec<([usize; 2], MPoly)> {
    let Some(unit) = &j.unit else { return vec![] };
    let c = j.structure_polys();
    let n = j.dim;
    let mut out = Vec::new();
    for mu in 0..n {
        for nu in 0..n {
            let mut e = if mu == nu { MPoly::constant(n, -Rat::one()) } else { MPoly::zero(n) };
            for b in 0..n {
                e = e.add(&unit[b].mul(&c[b][nu][mu]));
            }
            if !e.is_zero() {
                out.push(([mu, nu], e));
            }
        }
    }
    out
}

/// Canonical-frame data at one point. Directions are flat coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalFrame<S> {
    /// Canonical components of E, present with Euler data.
    pub u: Option<Vec<S>>,
    pub psi: Grid<S>,
    pub dpsi_psi_inv: Vec<Grid<S>>,
    /// `[beta][i]` = ∂_β log α^i.
    pub dlog_alpha: Vec<Vec<S>>,
    pub gamma: Grid<S>,
}

impl<S: Ring> CanonicalFrame<S> {
    pub fn dim(&self) -> usize {
        self.psi.len()
    }

    pub fn direction(&self, beta: usize) -> DirData<S> {
        DirData {
            p: self.dpsi_psi_inv[beta].clone(),
            h: self.dlog_alpha[beta].iter().map(|x| x.scaled(&rat(-1, 2))).collect(),
            du: self.psi.iter().map(|row| row[beta].clone()).collect(),
        }
    }

    /// (dΨ)Ψ^{-1} + (dH)H^{-1} − [γ, dU] along each flat direction.
    pub fn bracket_residual(&self) -> Vec<Grid<S>> {
        (0..self.dim())
            .map(|b| {
                let d = self.direction(b);
                let mut m = gsub(&d.p, &gcomm_diag(&self.gamma, &d.du));
                for (i, h) in d.h.iter().enumerate() {
                    m[i][i] = m[i][i].plus(h);
                }
                m
            })
            .collect()
    }
}

/// γ^i_j = Σ_β (Ψ^{-1})^β_j ((∂_βΨ)Ψ^{-1})^i_j off the diagonal.
fn gamma_from<S: Ring>(psi_inv: &Grid<S>, p: &[Grid<S>]) -> Grid<S> {
    let n = psi_inv.len();
    let like = psi_inv[0][0].clone();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|jj| {
                    if i == jj {
                        return like.zero_like();
                    }
                    (0..n).fold(like.zero_like(), |acc, b| acc.plus(&psi_inv[b][jj].times(&p[b][i][jj])))
                })
                .collect()
        })
        .collect()
}

/// Exact frame from rational idempotents (dimension ≤ 2, or 1 in general).
/// Derivatives of the idempotents solve (2e_i· − Id)∂e_i = −(∂c)(e_i, e_i).
pub fn canonical_frame_exact(j: &FlatFJet, t: &[Rat]) -> Result<CanonicalFrame<Rat>, FflatError> {
    let spec = j.spec_at(t)?;
    let idem = match spec.semisimple_frame(false) {
        Ok(Frame::Exact(e)) => e,
        Ok(Frame::Float(_)) => return Err(FflatError::NotSemisimple("no exact idempotents".into())),
        Err(FtftError::NotSemisimple(s)) => return Err(FflatError::NotSemisimple(s)),
        Err(e) => return Err(e.into()),
    };
    let n = j.dim;
    let psi_inv = Mat::from_rows((0..n).map(|b| (0..n).map(|i| idem[i][b].clone()).collect()).collect());
    let psi = psi_inv.inverse()?;
    let alpha_can = psi.mul_vec(&spec.alpha);
    if let Some(i) = alpha_can.iter().position(Zero::is_zero) {
        return Err(FflatError::ZeroAlpha(i));
    }
    let cp = j.structure_polys();
    let alpha = j.alpha.as_ref().ok_or(FflatError::Missing("alpha"))?;
    let mut p_all = Vec::new();
    let mut dlog = Vec::new();
    for b in 0..n {
        let dc: Vec<Vec<Vec<Rat>>> = cp
            .iter()
            .map(|x| x.iter().map(|y| y.iter().map(|q| q.deriv(b).eval(t).ok_or(FflatError::Undefined("∂³F"))).collect()).collect())
            .collect::<Result<_, _>>()?;
        let dspec = AlgebraSpec { dim: n, c: dc, alpha: vec![Rat::zero(); n], unit: None, idempotents: None };
        let mut dpsi_inv = Mat::zeros(n, n);
        for (i, e) in idem.iter().enumerate() {
            let m = spec.mult_matrix(e).scale(&int(2)).sub(&Mat::identity(n));
            let rhs: Vec<Rat> = dspec.mul(e, e).iter().map(|x| -x).collect();
            let de = m.solve(&rhs)?;
            for (bb, v) in de.into_iter().enumerate() {
                dpsi_inv.set(bb, i, v);
            }
        }
        let p = psi.mul(&dpsi_inv).scale(&-Rat::one());
        let dalpha: Vec<Rat> =
            alpha.iter().map(|a| a.deriv(b).eval(t).ok_or(FflatError::Undefined("dα"))).collect::<Result<_, _>>()?;
        let dcan: Vec<Rat> =
            p.mul_vec(&alpha_can).iter().zip(psi.mul_vec(&dalpha)).map(|(x, y)| x + y).collect();
        dlog.push(dcan.iter().zip(&alpha_can).map(|(x, y)| x / y).collect());
        p_all.push(mat_to_grid(&p));
    }
    let u = match j.euler_field() {
        Some(e) => Some(psi.mul_vec(&eval_all(&e, t).ok_or(FflatError::Undefined("E"))?)),
        None => None,
    };
    let gamma = gamma_from(&mat_to_grid(&psi_inv), &p_all);
    Ok(CanonicalFrame { u, psi: mat_to_grid(&psi), dpsi_psi_inv: p_all, dlog_alpha: dlog, gamma })
}

fn shifted(t: &[Rat], beta: usize, h: &Rat) -> Vec<Rat> {
    let mut s = t.to_vec();
    s[beta] += h;
    s
}

/// Central difference with one Richardson step: (4D(h/2) − D(h))/3.
fn richardson<F>(f: &F, t: &[Rat], beta: usize, h: &Rat) -> Result<Vec<f64>, FflatError>
where
    F: Fn(&[Rat]) -> Result<Vec<f64>, FflatError> + ?Sized,
{
    let central = |h: &Rat| -> Result<Vec<f64>, FflatError> {
        let a = f(&shifted(t, beta, h))?;
        let b = f(&shifted(t, beta, &-h))?;
        let w = 2.0 * to_f64(h);
        Ok(a.iter().zip(&b).map(|(x, y)| (x - y) / w).collect())
    };
    let d1 = central(h)?;
    let d2 = central(&(h / int(2)))?;
    Ok(d1.iter().zip(&d2).map(|(a, b)| (4.0 * b - a) / 3.0).collect())
}

fn from_dmatrix(m: &DMatrix<f64>) -> Grid<f64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Ψ and the canonical components of α at `t`, in floating point.
type FloatPoint = (DMatrix<f64>, DMatrix<f64>, Vec<f64>);

fn float_point(j: &FlatFJet, t: &[Rat]) -> Result<FloatPoint, FflatError> {
    let n = j.dim;
    let c = structure_constants(j, t)?;
    let fc: Vec<Vec<Vec<f64>>> = c.iter().map(|a| a.iter().map(|b| b.iter().map(to_f64).collect()).collect()).collect();
    let idem = float_idempotents(&fc).map_err(|e| match e {
        FtftError::NotSemisimple(s) => FflatError::NotSemisimple(s),
        e => e.into(),
    })?;
    let psi_inv = DMatrix::from_fn(n, n, |b, i| idem[i][b]);
    let psi = psi_inv.clone().try_inverse().ok_or_else(|| FflatError::NotSemisimple("singular idempotent basis".into()))?;
    let alpha = j.alpha.as_ref().ok_or(FflatError::Missing("alpha"))?;
    let a: Vec<f64> = eval_all(alpha, t).ok_or(FflatError::Undefined("alpha"))?.iter().map(to_f64).collect();
    let a_can: Vec<f64> = (&psi * nalgebra::DVector::from_vec(a)).iter().copied().collect();
    Ok((psi, psi_inv, a_can))
}

/// Floating-point frame; derivatives by central differences with one
/// Richardson step. `step` is rational so every sample point stays exact.
pub fn canonical_frame_float(j: &FlatFJet, t: &[Rat], step: &Rat) -> Result<CanonicalFrame<f64>, FflatError> {
    let n = j.dim;
    let (psi, psi_inv, a_can) = float_point(j, t)?;
    if let Some(i) = a_can.iter().position(|x| x.abs() < 1e-300) {
        return Err(FflatError::ZeroAlpha(i));
    }
    let sample = |s: &[Rat]| -> Result<Vec<f64>, FflatError> {
        let (p, _, a) = float_point(j, s)?;
        let mut v: Vec<f64> = (0..n * n).map(|k| p[(k / n, k % n)]).collect();
        v.extend(a);
        Ok(v)
    };
    let mut p_all = Vec::new();
    let mut dlog = Vec::new();
    for b in 0..n {
        let d = richardson(&sample, t, b, step)?;
        let dpsi = DMatrix::from_fn(n, n, |r, c| d[r * n + c]);
        p_all.push(from_dmatrix(&(dpsi * &psi_inv)));
        dlog.push((0..n).map(|i| d[n * n + i] / a_can[i]).collect());
    }
    let u = match j.euler_field() {
        Some(e) => {
            let ev: Vec<f64> = eval_all(&e, t).ok_or(FflatError::Undefined("E"))?.iter().map(to_f64).collect();
            Some((&psi * nalgebra::DVector::from_vec(ev)).iter().copied().collect())
        }
        None => None,
    };
    let gamma = gamma_from(&from_dmatrix(&psi_inv), &p_all);
    Ok(CanonicalFrame { u, psi: from_dmatrix(&psi), dpsi_psi_inv: p_all, dlog_alpha: dlog, gamma })
}

/// A field of matrix series over points, sampled in floating point; entries
/// are canonical-frame matrices R_0, R_1, ….
pub type FloatField<'a> = dyn Fn(&[Rat]) -> Result<Vec<Grid<f64>>, FflatError> + 'a;

/// Maximal residuals of the float checks over all directions.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatResiduals {
    pub bracket: f64,
    pub r_equation: f64,
    pub flat_sections: f64,
    pub dual: f64,
}

impl FloatResiduals {
    pub fn max(&self) -> f64 {
        self.bracket.max(self.r_equation).max(self.flat_sections).max(self.dual)
    }
}

fn flatten(series: &[Grid<f64>]) -> Vec<f64> {
    series.iter().flatten().flatten().copied().collect()
}

fn unflatten(v: &[f64], n: usize) -> Vec<Grid<f64>> {
    v.chunks(n * n).map(|c| c.chunks(n).map(|r| r.to_vec()).collect()).collect()
}

pub fn float_residuals(j: &FlatFJet, t: &[Rat], step: &Rat, r: &FloatField<'_>) -> Result<FloatResiduals, FflatError> {
    let n = j.dim;
    let frame = canonical_frame_float(j, t, step)?;
    let r0 = r(t)?;
    let s0 = dual_convention(&r0);
    let mut out = FloatResiduals {
        bracket: max_magnitude(&frame.bracket_residual()),
        r_equation: 0.0,
        flat_sections: 0.0,
        dual: 0.0,
    };
    let flat_r = |s: &[Rat]| r(s).map(|x| flatten(&x));
    let flat_s = |s: &[Rat]| r(s).map(|x| flatten(&dual_convention(&x)));
    for b in 0..n {
        let d = frame.direction(b);
        let dr = unflatten(&richardson(&flat_r, t, b, step)?, n);
        let ds = unflatten(&richardson(&flat_s, t, b, step)?, n);
        out.r_equation = out.r_equation.max(max_magnitude(&r_equation_residual(&d, &r0, &dr)));
        let fs = flat_section_residual(&d, &r0, &dr);
        out.flat_sections =
            out.flat_sections.max(fs.iter().flatten().flatten().map(|x| x.abs()).fold(0.0, f64::max));
        out.dual = out.dual.max(max_magnitude(&dual_residual(&d, &s0, &ds)));
    }
    Ok(out)
}

/// Frame fields of a one-dimensional jet as Laurent polynomials in t.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicFrame1 {
    pub psi: MPoly,
    pub p: MPoly,
    pub h: MPoly,
    pub u: Option<MPoly>,
}

impl SymbolicFrame1 {
    pub fn direction(&self) -> DirData<MPoly> {
        DirData { p: vec![vec![self.p.clone()]], h: vec![self.h.clone()], du: vec![self.psi.clone()] }
    }
}

/// Ψ = ∂²F, (dΨ)Ψ^{-1}, (dH)H^{-1} = −½ d log(Ψα) and u = ΨE; needs ∂²F and
/// α to be Laurent monomials.
pub fn symbolic_frame_1d(j: &FlatFJet) -> Result<SymbolicFrame1, FflatError> {
    if j.dim != 1 {
        return Err(FflatError::Dim(format!("symbolic frame needs dimension 1, got {}", j.dim)));
    }
    let c = j.structure_polys()[0][0][0].clone();
    let cinv = c.inverse().ok_or(FflatError::NotMonomial("∂²F"))?;
    let alpha = &j.alpha.as_ref().ok_or(FflatError::Missing("alpha"))?[0];
    let a_can = c.mul(alpha);
    let a_inv = a_can.inverse().ok_or(FflatError::NotMonomial("α"))?;
    Ok(SymbolicFrame1 {
        p: c.deriv(0).mul(&cinv),
        h: a_can.deriv(0).mul(&a_inv).scale(&rat(-1, 2)),
        u: j.euler_field().map(|e| e[0].mul(&c)),
        psi: c,
    })
}

pub fn d_series(s: &[Grid<MPoly>], beta: usize) -> Vec<Grid<MPoly>> {
    s.iter().map(|m| m.iter().map(|row| row.iter().map(|x| x.deriv(beta)).collect()).collect()).collect()
}

pub fn d_vec_series(s: &[Vec<MPoly>], beta: usize) -> Vec<Vec<MPoly>> {
    s.iter().map(|v| v.iter().map(|x| x.deriv(beta)).collect()).collect()
}

/// Closed forms of the one-dimensional r-spin fields in the canonical frame:
/// R = Id, Υ_m = Π_{j≤m}(jr − 1)(−A^{-1}t^{−r})^m and T̂ = Υ^{-1}.
pub type ClosedFields = (Vec<Grid<MPoly>>, Vec<Vec<MPoly>>, Vec<Vec<MPoly>>);

pub fn rspin_closed_fields(r: u32, order: usize) -> ClosedFields {
    let ri = r as i64;
    let a_prod = pow_i(&int(-ri), 1 - ri);
    let rr: Vec<Grid<MPoly>> = (0..=order)
        .map(|k| vec![vec![if k == 0 { MPoly::constant(1, Rat::one()) } else { MPoly::zero(1) }]])
        .collect();
    let ups: Vec<MPoly> = (0..=order)
        .map(|m| {
            let c = Rat::from_integer(crate::rspin::r_factorial(ri, m as u32)) * pow_i(&-a_prod.recip(), m as i64);
            MPoly::monomial(vec![-(ri as i32) * m as i32], c)
        })
        .collect();
    let mut that: Vec<MPoly> = vec![MPoly::constant(1, Rat::one())];
    for k in 1..=order {
        let mut acc = MPoly::zero(1);
        for jj in 1..=k {
            acc = acc.sub(&ups[jj].mul(&that[k - jj]));
        }
        that.push(acc);
    }
    (rr, ups.into_iter().map(|x| vec![x]).collect(), that.into_iter().map(|x| vec![x]).collect())
}

/// Output of [`conformal_reconstruct`]: R and Υ in the canonical frame, and
/// the group element in the flat basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub r_canonical: SeriesMat,
    pub upsilon_canonical: SeriesVec,
    pub upsilon: SeriesVec,
    pub element: GiventalElement,
}

fn check_u(u: &[Rat]) -> Result<(), FflatError> {
    for (i, x) in u.iter().enumerate() {
        if x.is_zero() {
            return Err(FflatError::ZeroEigenvalue(i));
        }
        if let Some(jj) = u[..i].iter().position(|y| y == x) {
            return Err(FflatError::Coincident(jj, i));
        }
    }
    Ok(())
}

/// Υ_{m+1} = −U^{-1}(μ + Δ/2 + m)Υ_m with Υ_0 = 𝟙, in the canonical frame.
pub fn upsilon_series(u: &[Rat], mu_can: &Mat, delta: &Rat, order: usize) -> Result<SeriesVec, FflatError> {
    for (i, x) in u.iter().enumerate() {
        if x.is_zero() {
            return Err(FflatError::ZeroEigenvalue(i));
        }
    }
    let n = u.len();
    let mut coeffs = vec![vec![Rat::one(); n]];
    for m in 0..order {
        let shift = delta / int(2) + int(m as i64);
        let prev = &coeffs[m];
        let v = mu_can.mul_vec(prev);
        coeffs.push((0..n).map(|i| -(&v[i] + &shift * &prev[i]) / &u[i]).collect());
    }
    Ok(SeriesVec::new(n, coeffs)?)
}

/// Unique R with R_0 = Id solving Rμ + z∂_zR = z^{-1}[R, U] order by order,
/// Υ from its recursion, and T from T̂^{-1} = R^{-1}[Υ], T = z(𝟙 − T̂^{-1}).
/// `mu` is given in the flat basis; K· is U by the choice E = Σu^i∂_i.
pub fn conformal_reconstruct(
    frame: &CanonicalFrame<Rat>,
    mu: &Mat,
    delta: &Rat,
    order: usize,
) -> Result<Reconstruction, FflatError> {
    let u = frame.u.as_ref().ok_or(FflatError::Missing("Euler data"))?;
    check_u(u)?;
    let n = u.len();
    let psi = grid_to_mat(&frame.psi);
    let psi_inv = psi.inverse()?;
    let mu_can = psi.mul(mu).mul(&psi_inv);
    let mut r = vec![Mat::identity(n)];
    for k in 0..order {
        let m = r[k].mul(&mu_can).add(&r[k].scale(&int(k as i64)));
        if let Some(i) = (0..n).find(|&i| !m.get(i, i).is_zero()) {
            return Err(FflatError::Inconsistent { k, i });
        }
        let mut next = Mat::zeros(n, n);
        for i in 0..n {
            for jj in 0..n {
                if i != jj {
                    next.set(i, jj, m.get(i, jj) / (&u[jj] - &u[i]));
                }
            }
        }
        for i in 0..n {
            let den = int(k as i64 + 1) + mu_can.get(i, i);
            if den.is_zero() {
                return Err(FflatError::Resonance { k: k + 1, i });
            }
            let mut s = Rat::zero();
            for jj in (0..n).filter(|&jj| jj != i) {
                s += next.get(i, jj) * mu_can.get(jj, i);
            }
            next.set(i, i, -s / den);
        }
        r.push(next);
    }
    let r_can = SeriesMat::new(n, r)?;
    let ups_can = upsilon_series(u, &mu_can, delta, order)?;
    let r_flat = SeriesMat::new(n, r_can.coeffs.iter().map(|m| psi_inv.mul(m).mul(&psi)).collect())?;
    let ups = SeriesVec::new(n, ups_can.coeffs.iter().map(|v| psi_inv.mul_vec(v)).collect())?;
    let unit = ups.coeffs[0].clone();
    let that_inv = r_flat.invert()?.apply(&ups)?;
    let mut t = SeriesVec::zero(n, order);
    for k in 0..order {
        let base = if k == 0 { unit.clone() } else { vec![Rat::zero(); n] };
        t.coeffs[k + 1] = base.iter().zip(&that_inv.coeffs[k]).map(|(a, b)| a - b).collect();
    }
    let element = GiventalElement::new(r_flat, t)?;
    Ok(Reconstruction { r_canonical: r_can, upsilon_canonical: ups_can, upsilon: ups, element })
}

/// Exact frame, reconstruction and the F-TFT at the basepoint of a
/// conformal jet.
pub fn reconstruct_at_base(j: &FlatFJet, order: usize) -> Result<(AlgebraSpec, Reconstruction), FflatError> {
    let euler = j.euler.as_ref().ok_or(FflatError::Missing("Euler data"))?;
    let frame = canonical_frame_exact(j, &j.base)?;
    let mu = j.mu().expect("Euler data present");
    let rec = conformal_reconstruct(&frame, &mu, &euler.delta, order)?;
    Ok((j.spec_at(&j.base)?, rec))
}

/// Nonzero residuals of L_E(·) = ·, L_Eα = (Δ−1)α and L_E𝟙 = −𝟙.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HomogeneityReport {
    pub product: Vec<([usize; 3], MPoly)>,
    pub alpha: Vec<(usize, MPoly)>,
    pub unit: Vec<(usize, MPoly)>,
}

impl HomogeneityReport {
    pub fn is_homogeneous(&self) -> bool {
        self.product.is_empty() && self.alpha.is_empty() && self.unit.is_empty()
    }
}

fn apply_field(e: &[MPoly], f: &MPoly) -> MPoly {
    e.iter().enumerate().fold(MPoly::zero(f.nvars), |acc, (s, es)| acc.add(&es.mul(&f.deriv(s))))
}

/// (L_E X)^ρ = E(X^ρ) − X^σ L^ρ_σ.
fn lie_vector(e: &[MPoly], l: &Mat, x: &[MPoly]) -> Vec<MPoly> {
    (0..x.len())
        .map(|rho| {
            let mut v = apply_field(e, &x[rho]);
            for (s, xs) in x.iter().enumerate() {
                v = v.sub(&xs.scale(l.get(rho, s)));
            }
            v
        })
        .collect()
}

pub fn homogeneity_check(j: &FlatFJet) -> Result<HomogeneityReport, FflatError> {
    let eu = j.euler.as_ref().ok_or(FflatError::Missing("Euler data"))?;
    let e = j.euler_field().expect("Euler data present");
    let l = &eu.l;
    let n = j.dim;
    let c = j.structure_polys();
    let mut rep = HomogeneityReport::default();
    for mu in 0..n {
        for nu in 0..n {
            for rho in 0..n {
                let mut v = apply_field(&e, &c[mu][nu][rho]);
                for s in 0..n {
                    v = v.sub(&c[mu][nu][s].scale(l.get(rho, s)));
                    v = v.add(&c[s][nu][rho].scale(l.get(s, mu)));
                    v = v.add(&c[mu][s][rho].scale(l.get(s, nu)));
                }
                v = v.sub(&c[mu][nu][rho]);
                if !v.is_zero() {
                    rep.product.push(([mu, nu, rho], v));
                }
            }
        }
    }
    if let Some(alpha) = &j.alpha {
        let dm1 = &eu.delta - Rat::one();
        for (i, v) in lie_vector(&e, l, alpha).into_iter().enumerate() {
            let res = v.sub(&alpha[i].scale(&dm1));
            if !res.is_zero() {
                rep.alpha.push((i, res));
            }
        }
    }
    if let Some(unit) = &j.unit {
        for (i, v) in lie_vector(&e, l, unit).into_iter().enumerate() {
            let res = v.add(&unit[i]);
            if !res.is_zero() {
                rep.unit.push((i, res));
            }
        }
    }
    Ok(rep)
}

/// Coefficients of (L_E + z∂_z)R = E(R_k) + kR_k for a symbolic R-field.
pub fn r_homogeneity_residual(j: &FlatFJet, r: &[Grid<MPoly>]) -> Result<Vec<Grid<MPoly>>, FflatError> {
    let e = j.euler_field().ok_or(FflatError::Missing("Euler data"))?;
    Ok(r.iter()
        .enumerate()
        .map(|(k, m)| m.iter().map(|row| row.iter().map(|x| apply_field(&e, x).add(&x.scale(&int(k as i64)))).collect()).collect())
        .collect())
}

/// η = Σ (du^i)²/α^i in the flat basis and its Frobenius residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub eta: Mat,
    /// η(∂_a·∂_b, ∂_c) − η(∂_a, ∂_b·∂_c) for all (a, b, c).
    pub compatibility: Vec<Rat>,
    /// S(z) = R(−z)^{-1}; the dual-convention 𝖱 is H·S·H^{-1}.
    pub dual: SeriesMat,
}

impl MetricReport {
    pub fn is_compatible(&self) -> bool {
        self.compatibility.iter().all(Zero::is_zero)
    }
}

pub fn metric_and_convention(
    frame: &CanonicalFrame<Rat>,
    spec: &AlgebraSpec,
    r: &SeriesMat,
) -> Result<MetricReport, FflatError> {
    let n = spec.dim;
    let psi = grid_to_mat(&frame.psi);
    let a_can = psi.mul_vec(&spec.alpha);
    if let Some(i) = a_can.iter().position(Zero::is_zero) {
        return Err(FflatError::ZeroAlpha(i));
    }
    let mut eta = Mat::zeros(n, n);
    for b in 0..n {
        for c in 0..n {
            let v = (0..n).fold(Rat::zero(), |acc, i| acc + psi.get(i, b) * psi.get(i, c) / &a_can[i]);
            eta.set(b, c, v);
        }
    }
    let pair = |x: &[Rat], y: &[Rat]| -> Rat {
        let ey = eta.mul_vec(y);
        x.iter().zip(&ey).map(|(a, b)| a * b).sum()
    };
    let mut compatibility = Vec::new();
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let (ea, eb, ec) = (spec.basis(a), spec.basis(b), spec.basis(c));
                compatibility.push(pair(&spec.mul(&ea, &eb), &ec) - pair(&ea, &spec.mul(&eb, &ec)));
            }
        }
    }
    let rg: Vec<Grid<Rat>> = r.coeffs.iter().map(mat_to_grid).collect();
    let dual = SeriesMat::new(n, dual_convention(&rg).iter().map(grid_to_mat).collect())?;
    Ok(MetricReport { eta, compatibility, dual })
}

fn parse_field(v: &toml::Value, dim: usize, what: &str) -> Result<Vec<MPoly>, FflatError> {
    let comps = v.as_array().ok_or_else(|| FflatError::Parse(format!("{what} must be an array")))?;
    comps
        .iter()
        .map(|comp| {
            let terms = comp.as_array().ok_or_else(|| FflatError::Parse(format!("{what}: component must be an array of terms")))?;
            let mut p = MPoly::zero(dim);
            for term in terms {
                let t = term.as_array().filter(|t| t.len() == dim + 1).ok_or_else(|| {
                    FflatError::Parse(format!("{what}: each term is [coefficient, {dim} exponents]"))
                })?;
                let c = toml_rat(&t[0]).map_err(|e| FflatError::Parse(e.to_string()))?;
                let exps = t[1..]
                    .iter()
                    .map(|x| x.as_integer().map(|k| k as i32).ok_or_else(|| FflatError::Parse(format!("{what}: exponents must be integers"))))
                    .collect::<Result<Vec<_>, _>>()?;
                p.add_term(exps, c);
            }
            Ok(p)
        })
        .collect()
}

fn rat_list(v: &toml::Value, what: &str) -> Result<Vec<Rat>, FflatError> {
    v.as_array()
        .ok_or_else(|| FflatError::Parse(format!("{what} must be an array")))?
        .iter()
        .map(|x| toml_rat(x).map_err(|e| FflatError::Parse(e.to_string())))
        .collect()
}

impl FlatFJet {
    /// TOML keys: `dim`, `basepoint`, `potential`, optional `alpha`, `unit`
    /// and an `[euler]` table with `k`, `l`, `delta`. Fields are arrays of
    /// components, each an array of terms `[coefficient, e_1, …, e_N]`.
    pub fn from_toml(text: &str) -> Result<Self, FflatError> {
        let v: toml::Table = text.parse().map_err(|e: toml::de::Error| FflatError::Parse(e.to_string()))?;
        let dim = v
            .get("dim")
            .and_then(toml::Value::as_integer)
            .filter(|&d| d > 0)
            .ok_or_else(|| FflatError::Parse("dim must be a positive integer".into()))? as usize;
        let req = |k: &'static str| v.get(k).ok_or_else(|| FflatError::Parse(format!("missing key {k}")));
        let potential = parse_field(req("potential")?, dim, "potential")?;
        let base = rat_list(req("basepoint")?, "basepoint")?;
        let alpha = v.get("alpha").map(|x| parse_field(x, dim, "alpha")).transpose()?;
        let unit = v.get("unit").map(|x| parse_field(x, dim, "unit")).transpose()?;
        let euler = match v.get("euler") {
            None => None,
            Some(e) => {
                let get = |k: &'static str| e.get(k).ok_or_else(|| FflatError::Parse(format!("euler: missing key {k}")));
                let l_rows = get("l")?
                    .as_array()
                    .ok_or_else(|| FflatError::Parse("euler.l must be a matrix".into()))?
                    .iter()
                    .map(|row| rat_list(row, "euler.l"))
                    .collect::<Result<Vec<_>, _>>()?;
                if l_rows.len() != dim || l_rows.iter().any(|r| r.len() != dim) {
                    return Err(FflatError::Dim("euler.l must be dim × dim".into()));
                }
                let delta = toml_rat(get("delta")?).map_err(|e| FflatError::Parse(e.to_string()))?;
                Some(Euler { k: rat_list(get("k")?, "euler.k")?, l: Mat::from_rows(l_rows), delta })
            }
        };
        FlatFJet::new(potential, base, unit, alpha, euler)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rspin::upsilon_closed;

    fn decoupled() -> FlatFJet {
        // Two r = 2 factors with different products: c^1_11 = −t1/2, c^2_22 = 3t2.
        let f1 = MPoly::monomial(vec![3, 0], rat(-1, 12));
        let f2 = MPoly::monomial(vec![0, 3], rat(1, 2));
        let alpha = vec![MPoly::monomial(vec![1, 0], int(1)), MPoly::monomial(vec![0, 1], int(2))];
        let euler = Euler { k: vec![Rat::zero(); 2], l: Mat::diag(&[rat(1, 2), rat(1, 2)]), delta: int(1) };
        FlatFJet::new(vec![f1, f2], vec![int(1), int(2)], None, Some(alpha), Some(euler)).unwrap()
    }

    #[test]
    fn structure_constants_examples() {
        for r in 2..=5u32 {
            let j = FlatFJet::rspin(r).unwrap();
            let c = &j.structure_polys()[0][0][0];
            let a = pow_i(&int(-(r as i64)), 1 - r as i64);
            assert_eq!(c, &MPoly::monomial(vec![r as i32 - 1], a));
        }
        let q = FlatFJet::new(vec![MPoly::monomial(vec![2], rat(3, 2))], vec![int(0)], None, None, None).unwrap();
        assert_eq!(structure_constants(&q, &[int(5)]).unwrap(), vec![vec![vec![int(3)]]]);
        let j = decoupled();
        let c = j.structure_polys();
        for mu in 0..2 {
            for nu in 0..2 {
                assert_eq!(c[mu][nu], c[nu][mu]);
            }
        }
    }

    #[test]
    fn wdvv_examples() {
        assert!(wdvv_residual(&FlatFJet::rspin(3).unwrap()).is_empty());
        assert!(wdvv_residual(&decoupled()).is_empty());
        let f1 = MPoly::monomial(vec![2, 1], int(1));
        let f2 = MPoly::monomial(vec![3, 0], int(1)).add(&MPoly::monomial(vec![1, 2], int(1)));
        let bad = FlatFJet::new(vec![f1, f2], vec![int(1), int(1)], None, None, None).unwrap();
        assert!(!wdvv_residual(&bad).is_empty());
        assert!(matches!(bad.check(), Err(FflatError::Wdvv(_))));
        assert!(FlatFJet::rspin(4).unwrap().check().is_ok());
    }

    #[test]
    fn rspin_frame() {
        for r in 2..=4u32 {
            let j = FlatFJet::rspin(r).unwrap();
            let a = pow_i(&int(-(r as i64)), 1 - r as i64);
            for t in [int(1), int(2), rat(-1, 3)] {
                let f = canonical_frame_exact(&j, std::slice::from_ref(&t)).unwrap();
                let u = f.u.as_ref().unwrap()[0].clone();
                assert_eq!(u, &a * pow_i(&t, r as i64) / int(r as i64));
                assert_eq!(f.dpsi_psi_inv[0][0][0], int(r as i64 - 1) / &t);
                assert!(all_vanish(&f.bracket_residual()));
            }
            assert!(matches!(canonical_frame_exact(&j, &[int(0)]), Err(FflatError::NotSemisimple(_))));
        }
    }

    #[test]
    fn decoupled_frames() {
        let j = decoupled();
        let t = [int(1), int(2)];
        let f = canonical_frame_exact(&j, &t).unwrap();
        assert!(f.gamma.iter().flatten().all(Zero::is_zero));
        assert!(all_vanish(&f.bracket_residual()));
        let mut diag: Vec<Rat> = (0..2).map(|i| f.psi[i].iter().sum()).collect();
        diag.sort();
        assert_eq!(diag, vec![rat(-1, 2), int(6)]);
        for (i, row) in f.psi.iter().enumerate() {
            assert_eq!(row.iter().filter(|x| !x.is_zero()).count(), 1, "row {i}");
        }
        let ff = canonical_frame_float(&j, &t, &rat(1, 10000)).unwrap();
        assert!(max_magnitude(&ff.bracket_residual()) < 1e-8);
    }

    fn float_const(m: Vec<Grid<f64>>) -> impl Fn(&[Rat]) -> Result<Vec<Grid<f64>>, FflatError> {
        move |_: &[Rat]| Ok(m.clone())
    }

    #[test]
    fn float_residuals_decoupled() {
        let j = decoupled();
        let t = [int(1), int(2)];
        let h = rat(1, 10000);
        let id = vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![vec![0.0; 2]; 2], vec![vec![0.0; 2]; 2]];
        let res = float_residuals(&j, &t, &h, &float_const(id.clone())).unwrap();
        assert!(res.max() < 1e-8, "{res:?}");
        // Constant diagonal right factor exp(D_1 z + D_2 z²).
        let (d1, d2) = ([0.3, -1.2], [0.7, 0.25]);
        let amb: Vec<Grid<f64>> = (0..3)
            .map(|k| {
                let mut m = vec![vec![0.0; 2]; 2];
                for i in 0..2 {
                    m[i][i] = [1.0, d1[i], d2[i] + d1[i] * d1[i] / 2.0][k];
                }
                m
            })
            .collect();
        let res = float_residuals(&j, &t, &h, &float_const(amb)).unwrap();
        assert!(res.max() < 1e-8, "{res:?}");
        let mut bad = id;
        bad[1][0][1] = 0.5;
        let res = float_residuals(&j, &t, &h, &float_const(bad)).unwrap();
        assert!(res.r_equation > 0.1 && res.flat_sections > 0.1 && res.dual > 0.1, "{res:?}");
    }

    #[test]
    fn float_reconstruction_field() {
        // R from conformal reconstruction at every sample point.
        let j = decoupled();
        let eu = j.euler.clone().unwrap();
        let mu = j.mu().unwrap();
        let field = |s: &[Rat]| -> Result<Vec<Grid<f64>>, FflatError> {
            let f = canonical_frame_exact(&j, s)?;
            let rec = conformal_reconstruct(&f, &mu, &eu.delta, 4)?;
            Ok(rec.r_canonical.coeffs.iter().map(|m| m.to_rows().iter().map(|r| r.iter().map(to_f64).collect()).collect()).collect())
        };
        let res = float_residuals(&j, &[int(1), int(2)], &rat(1, 10000), &field).unwrap();
        assert!(res.max() < 1e-8, "{res:?}");
    }

    #[test]
    fn rspin_symbolic_equations() {
        for r in 2..=5u32 {
            let j = FlatFJet::rspin(r).unwrap();
            let f = symbolic_frame_1d(&j).unwrap();
            let d = f.direction();
            let (rr, ups, that) = rspin_closed_fields(r, 6);
            assert!(all_vanish(&r_equation_residual(&d, &rr, &d_series(&rr, 0))));
            let tres = that_residual(&d, &that, &d_vec_series(&that, 0), &rr);
            assert!(tres.iter().flatten().all(MPoly::is_zero), "T̂ residual for r = {r}");
            let fs = flat_section_residual(&d, &rr, &d_series(&rr, 0));
            assert!(fs.iter().flatten().flatten().all(MPoly::is_zero));
            let vres = vacuum_residual(&d, &ups, &d_vec_series(&ups, 0));
            assert!(vres.iter().flatten().all(MPoly::is_zero), "vacuum for r = {r}");
            let s = dual_convention(&rr);
            assert!(all_vanish(&dual_residual(&d, &s, &dual_derivative(&rr, &d_series(&rr, 0)))));
            assert!(all_vanish(&r_homogeneity_residual(&j, &rr).unwrap()));
            // The z⁰ level reads [R_1, dU] = (dΨ)Ψ^{-1} + (dH)H^{-1}, both sides 0.
            assert!(f.p.add(&f.h).is_zero());
            let a = pow_i(&int(-(r as i64)), 1 - r as i64);
            assert_eq!(f.u.clone().unwrap(), MPoly::monomial(vec![r as i32], a / int(r as i64)));
        }
    }

    #[test]
    fn symbolic_diagonal_ambiguity() {
        let j = FlatFJet::rspin(3).unwrap();
        let d = symbolic_frame_1d(&j).unwrap().direction();
        // exp(2z − z²/3) truncated at z³.
        let e = [int(1), int(2), int(2) - rat(1, 3), rat(4, 3) - rat(2, 3)];
        let rr: Vec<Grid<MPoly>> = e.iter().map(|c| vec![vec![MPoly::constant(1, c.clone())]]).collect();
        assert!(all_vanish(&r_equation_residual(&d, &rr, &d_series(&rr, 0))));
        // A t-dependent perturbation is caught.
        let mut bad = rr.clone();
        bad[1][0][0] = MPoly::var(1, 0);
        assert!(!all_vanish(&r_equation_residual(&d, &bad, &d_series(&bad, 0))));
    }

    #[test]
    fn rspin_reconstruction() {
        for r in 2..=4u32 {
            let j = FlatFJet::rspin(r).unwrap();
            let (spec, rec) = reconstruct_at_base(&j, 8).unwrap();
            assert_eq!(rec.element.r, SeriesMat::identity(1, 8));
            assert_eq!(rec.upsilon, upsilon_closed(r, 8).unwrap());
            assert_eq!(rec.element, crate::rspin::rspin_element(r, 8).unwrap());
            assert_eq!(spec, crate::rspin::RspinParams::new(r).unwrap().shifted_spec());
        }
    }

    /// ∂^nF(1) for F = A t^{r+1}/(r(r+1)).
    fn rspin_potential_derivative(r: u32, n: u32) -> Rat {
        if n > r + 1 {
            return Rat::zero();
        }
        let a = pow_i(&int(-(r as i64)), 1 - r as i64);
        let falling: i64 = (0..n as i64).map(|i| r as i64 + 1 - i).product();
        a * int(falling) / int(r as i64 * (r as i64 + 1))
    }

    #[test]
    fn genus_zero_loop_closure() {
        for r in 2..=3u32 {
            let j = FlatFJet::rspin(r).unwrap();
            for n in 2..=r + 3 {
                let (spec, rec) = reconstruct_at_base(&j, n as usize).unwrap();
                let s = crate::givental::act_on_tft(&rec.element, &spec, 0, n).unwrap();
                let e = s.evaluate(0, &vec![vec![Rat::one()]; n as usize]);
                let v = crate::oracle0::integrate_tautexpr(&e).unwrap();
                assert_eq!(v, rspin_potential_derivative(r, n), "r = {r}, n = {n}");
            }
        }
    }

    fn manual_frame(u: Vec<Rat>) -> CanonicalFrame<Rat> {
        let n = u.len();
        let id = mat_to_grid(&Mat::identity(n));
        CanonicalFrame {
            u: Some(u),
            psi: id,
            dpsi_psi_inv: vec![mat_to_grid(&Mat::zeros(n, n)); n],
            dlog_alpha: vec![vec![Rat::zero(); n]; n],
            gamma: mat_to_grid(&Mat::zeros(n, n)),
        }
    }

    #[test]
    fn reconstruction_preconditions() {
        let zero = Mat::zeros(2, 2);
        let e = conformal_reconstruct(&manual_frame(vec![int(1), int(1)]), &zero, &int(0), 3);
        assert_eq!(e, Err(FflatError::Coincident(0, 1)));
        let e = conformal_reconstruct(&manual_frame(vec![int(0), int(1)]), &zero, &int(0), 3);
        assert_eq!(e, Err(FflatError::ZeroEigenvalue(0)));
        // A nonzero diagonal μ cannot satisfy [R_1, U] = μ.
        let mu = Mat::diag(&[rat(1, 2), rat(-1, 3)]);
        let e = conformal_reconstruct(&manual_frame(vec![int(1), int(2)]), &mu, &int(1), 3);
        assert_eq!(e, Err(FflatError::Inconsistent { k: 0, i: 0 }));
    }

    #[test]
    fn off_diagonal_mu_reconstruction() {
        // μ = [[0, a], [−a, 0]]: each order solves the commutator equation.
        let mu = Mat::from_rows(vec![vec![int(0), rat(1, 3)], vec![rat(-1, 3), int(0)]]);
        let f = manual_frame(vec![int(1), int(3)]);
        let rec = conformal_reconstruct(&f, &mu, &int(1), 5).unwrap();
        let r = &rec.r_canonical;
        let u = Mat::diag(&[int(1), int(3)]);
        for k in 0..5 {
            let lhs = r.coeffs[k].mul(&mu).add(&r.coeffs[k].scale(&int(k as i64)));
            let rhs = r.coeffs[k + 1].mul(&u).sub(&u.mul(&r.coeffs[k + 1]));
            assert_eq!(lhs, rhs, "order {k}");
        }
    }

    #[test]
    fn diagonal_mu_upsilon() {
        // Componentwise scalar recursion Υ_{m+1} = −(μ_ii + Δ/2 + m)Υ_m/u_i.
        let u = [int(2), rat(-1, 3)];
        let mu = [rat(1, 5), rat(-2, 7)];
        let delta = rat(3, 4);
        let s = upsilon_series(&u, &Mat::diag(&mu), &delta, 6).unwrap();
        for i in 0..2 {
            let mut y = Rat::one();
            for m in 0..=6usize {
                assert_eq!(s.coeffs[m][i], y);
                y = -(&mu[i] + &delta / int(2) + int(m as i64)) * &y / &u[i];
            }
        }
    }

    #[test]
    fn homogeneity_examples() {
        for r in 2..=5 {
            let rep = homogeneity_check(&FlatFJet::rspin(r).unwrap()).unwrap();
            assert!(rep.is_homogeneous(), "{rep:?}");
        }
        assert!(homogeneity_check(&decoupled()).unwrap().is_homogeneous());
        let euler = Euler { k: vec![Rat::zero()], l: Mat::diag(&[int(-1)]), delta: int(0) };
        let flat = FlatFJet::new(vec![MPoly::monomial(vec![2], rat(1, 2))], vec![int(0)], None, None, Some(euler)).unwrap();
        assert!(!homogeneity_check(&flat).unwrap().product.is_empty());
    }

    #[test]
    fn metric_examples() {
        let j = decoupled();
        let t = [int(1), int(2)];
        let f = canonical_frame_exact(&j, &t).unwrap();
        let spec = j.spec_at(&t).unwrap();
        let rep = metric_and_convention(&f, &spec, &SeriesMat::identity(2, 3)).unwrap();
        assert!(rep.is_compatible());
        assert_eq!(rep.dual, SeriesMat::identity(2, 3));
        let j = FlatFJet::rspin(3).unwrap();
        let f = canonical_frame_exact(&j, &[int(1)]).unwrap();
        let rep = metric_and_convention(&f, &j.spec_at(&[int(1)]).unwrap(), &SeriesMat::identity(1, 2)).unwrap();
        assert!(rep.is_compatible());
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
dim = 1
basepoint = [1]
potential = [[["-1/12", 3]]]
alpha = [[[1, 1]]]
unit = [[["-2", -1]]]
[euler]
k = [0]
l = [["1/2"]]
delta = 1
"#;
        let j = FlatFJet::from_toml(text).unwrap();
        assert_eq!(j, FlatFJet::rspin(2).unwrap());
        assert!(FlatFJet::from_toml("dim = 1\nbasepoint = [1]\npotential = [[[1, 2, 3]]]").is_err());
    }
}
