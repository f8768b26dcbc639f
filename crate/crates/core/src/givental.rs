//! The F-Givental group: elements (R, T), edge weights, translations in
//! κ-form, the R-action as a stable-tree sum, translation by forgetful
//! pushforward, composition, vacuum, and the rank-1 closed form.
//!
//! An element acts as written in RTω: translate first, then apply R.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use num_traits::{One, Zero};
use thiserror::Error;

use crate::algebra::{factorial, int, AlgebraError, Mat, Rat, SeriesMat, SeriesVec};
use crate::ftft::{AlgebraSpec, FtftError};
use crate::tautology::{forget_leaf, mul_monomial, one_vertex, AmbientMonomial, TautError, TautExpr};
use crate::trees::{enumerate_nodes, enumerate_nodes_bounded, is_stable, moduli_dim, Node, TreeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GiventalError {
    #[error("malformed group element: {0}")]
    Malformed(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("a unit is required for nonzero translations")]
    MissingUnit,
    #[error("series known to order {have}, need {needed}")]
    Truncated { needed: usize, have: usize },
    #[error("edge weight: numerator not divisible by z + z' (R is not group-like)")]
    NotDivisible,
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Taut(#[from] TautError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Ftft(#[from] FtftError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GiventalElement {
    pub r: SeriesMat,
    pub t: SeriesVec,
}

impl GiventalElement {
    pub fn new(r: SeriesMat, t: SeriesVec) -> Result<Self, GiventalError> {
        if r.dim != t.dim {
            return Err(GiventalError::DimensionMismatch(r.dim, t.dim));
        }
        if !r.is_group_like() {
            return Err(GiventalError::Malformed("R(0) is not the identity".into()));
        }
        if t.coeffs.iter().take(2).flatten().any(|x| !x.is_zero()) {
            return Err(GiventalError::Malformed("T must be O(z^2)".into()));
        }
        Ok(GiventalElement { r, t })
    }

    pub fn identity(dim: usize, order: usize) -> Self {
        GiventalElement { r: SeriesMat::identity(dim, order), t: SeriesVec::zero(dim, order) }
    }

    pub fn dim(&self) -> usize {
        self.r.dim
    }

    pub fn order(&self) -> usize {
        self.r.order().min(self.t.order())
    }

    pub fn is_identity(&self) -> bool {
        self.r == SeriesMat::identity(self.r.dim, self.r.order()) && self.t.is_zero()
    }
}

/// Group product `a∘b` (act by b first): R = R_a R_b, T = T_b + R_b^{-1}[T_a].
pub fn compose(a: &GiventalElement, b: &GiventalElement) -> Result<GiventalElement, GiventalError> {
    if a.dim() != b.dim() {
        return Err(GiventalError::DimensionMismatch(a.dim(), b.dim()));
    }
    let r = a.r.mul(&b.r)?;
    let t = b.t.add(&b.r.invert()?.apply(&a.t)?)?;
    GiventalElement::new(r, t)
}

/// Product of algebra-valued series.
pub fn alg_series_mul(spec: &AlgebraSpec, a: &SeriesVec, b: &SeriesVec) -> SeriesVec {
    let d = a.order().min(b.order());
    let mut out = SeriesVec::zero(spec.dim, d);
    for i in 0..=d {
        for j in 0..=(d - i) {
            let p = spec.mul(&a.coeffs[i], &b.coeffs[j]);
            for (o, x) in out.coeffs[i + j].iter_mut().zip(p) {
                *o += x;
            }
        }
    }
    out
}

/// Multiplicative inverse of an algebra-valued series with invertible constant term.
pub fn alg_series_inv(spec: &AlgebraSpec, a: &SeriesVec) -> Result<SeriesVec, GiventalError> {
    let unit = spec.find_unit().ok_or(GiventalError::MissingUnit)?;
    let m0inv = spec.mult_matrix(&a.coeffs[0]).inverse()?;
    let d = a.order();
    let mut out = SeriesVec::zero(spec.dim, d);
    out.coeffs[0] = m0inv.mul_vec(&unit);
    for k in 1..=d {
        let mut acc = vec![Rat::zero(); spec.dim];
        for j in 1..=k {
            for (x, y) in acc.iter_mut().zip(spec.mul(&a.coeffs[j], &out.coeffs[k - j])) {
                *x += y;
            }
        }
        out.coeffs[k] = m0inv.mul_vec(&acc).into_iter().map(|x| -x).collect();
    }
    Ok(out)
}

/// l_1…l_D with a(z) = exp(Σ l_m z^m), for a(0) = 𝟙.
pub fn alg_series_log(spec: &AlgebraSpec, a: &SeriesVec) -> Vec<Vec<Rat>> {
    // k a_k = Σ_{j=1}^{k} j l_j a_{k-j}
    let d = a.order();
    let mut l: Vec<Vec<Rat>> = vec![vec![Rat::zero(); spec.dim]; d + 1];
    for k in 1..=d {
        let mut acc: Vec<Rat> = a.coeffs[k].iter().map(|x| x * int(k as i64)).collect();
        for j in 1..k {
            let p = spec.mul(&l[j], &a.coeffs[k - j]);
            for (x, y) in acc.iter_mut().zip(p) {
                *x -= y * int(j as i64);
            }
        }
        l[k] = acc.into_iter().map(|x| x / int(k as i64)).collect();
    }
    l.remove(0);
    l
}

/// exp(Σ l_m z^m) truncated at `order`.
pub fn alg_series_exp(spec: &AlgebraSpec, l: &[Vec<Rat>], order: usize) -> Result<SeriesVec, GiventalError> {
    let unit = spec.find_unit().ok_or(GiventalError::MissingUnit)?;
    let mut e = SeriesVec::zero(spec.dim, order);
    e.coeffs[0] = unit;
    for k in 1..=order {
        let mut acc = vec![Rat::zero(); spec.dim];
        for j in 1..=k.min(l.len()) {
            let p = spec.mul(&l[j - 1], &e.coeffs[k - j]);
            for (x, y) in acc.iter_mut().zip(p) {
                *x += y * int(j as i64);
            }
        }
        e.coeffs[k] = acc.into_iter().map(|x| x / int(k as i64)).collect();
    }
    Ok(e)
}

/// T̂(z) = (𝟙 − T(z)/z)^{-1}, one order lower than T.
pub fn hat_t(t: &SeriesVec, spec: &AlgebraSpec) -> Result<SeriesVec, GiventalError> {
    alg_series_inv(spec, &t_hat_inverse(t, spec)?)
}

/// T̂^{-1}(z) = 𝟙 − T(z)/z.
pub fn t_hat_inverse(t: &SeriesVec, spec: &AlgebraSpec) -> Result<SeriesVec, GiventalError> {
    let unit = spec.find_unit().ok_or(GiventalError::MissingUnit)?;
    let d = t.order().max(1) - 1;
    let mut s = SeriesVec::zero(spec.dim, d);
    s.coeffs[0] = unit;
    for k in 0..=d {
        if let Some(c) = t.coeffs.get(k + 1) {
            for (x, y) in s.coeffs[k].iter_mut().zip(c) {
                *x -= y;
            }
        }
    }
    Ok(s)
}

/// t̂_1, t̂_2, … with T̂(z) = exp(Σ t̂_m z^m). Empty when T = 0.
pub fn hatt(t: &SeriesVec, spec: &AlgebraSpec) -> Result<Vec<Vec<Rat>>, GiventalError> {
    if t.is_zero() {
        return Ok(vec![]);
    }
    Ok(alg_series_log(spec, &hat_t(t, spec)?))
}

/// Inverse of [`hatt`]: T(z) = z(𝟙 − T̂^{-1}(z)).
pub fn t_from_hatt(hatt: &[Vec<Rat>], spec: &AlgebraSpec, order: usize) -> Result<SeriesVec, GiventalError> {
    let neg: Vec<Vec<Rat>> = hatt.iter().map(|v| v.iter().map(|x| -x).collect()).collect();
    let inv = alg_series_exp(spec, &neg, order.saturating_sub(1))?;
    let unit = spec.find_unit().ok_or(GiventalError::MissingUnit)?;
    let mut t = SeriesVec::zero(spec.dim, order);
    for k in 0..order {
        let u = if k == 0 { unit.clone() } else { vec![Rat::zero(); spec.dim] };
        t.coeffs[k + 1] = u.iter().zip(&inv.coeffs[k]).map(|(a, b)| a - b).collect();
    }
    Ok(t)
}

/// Υ(z) = R(z)[T̂^{-1}(z)].
pub fn vacuum(elem: &GiventalElement, spec: &AlgebraSpec) -> Result<SeriesVec, GiventalError> {
    Ok(elem.r.apply(&t_hat_inverse(&elem.t, spec)?)?)
}

/// Translation preserving the flat unit when composed after R: T_B(z) = z(𝟙 − R^{-1}(z)[𝟙]).
pub fn flat_unit_t(r: &SeriesMat, unit: &[Rat]) -> Result<SeriesVec, GiventalError> {
    let u = SeriesVec::constant(unit, r.order());
    let w = r.invert()?.apply(&u)?;
    let mut t = SeriesVec::zero(r.dim, r.order());
    for k in 0..r.order() {
        t.coeffs[k + 1] = u.coeffs[k].iter().zip(&w.coeffs[k]).map(|(a, b)| a - b).collect();
    }
    Ok(t)
}

/// T_A(z) = R(z)[T_B(z)].
pub fn move_translation(r: &SeriesMat, t_b: &SeriesVec) -> Result<SeriesVec, GiventalError> {
    Ok(r.apply(t_b)?)
}

/// Coefficients `E[a][b]` of ψ^a ψ′^b in E_R(ψ,ψ′) = (Id − R^{-1}(ψ)R(−ψ′))/(ψ+ψ′)
/// for a ≤ `deg_psi`, b ≤ `deg_psi2`. Entries with a+b ≥ order(R) are left at zero.
pub fn edge_weight(r: &SeriesMat, deg_psi: usize, deg_psi2: usize) -> Result<Vec<Vec<Mat>>, GiventalError> {
    if !r.is_group_like() {
        return Err(GiventalError::NotDivisible);
    }
    let d = r.order();
    let n = r.dim;
    let rinv = r.invert()?;
    let rneg = r.negate_z();
    // Numerator coefficients N[i][j], i + j ≤ d.
    let num = |i: usize, j: usize| -> Mat {
        let mut m = rinv.coeffs[i].mul(&rneg.coeffs[j]).scale(&-Rat::one());
        if i == 0 && j == 0 {
            m = m.add(&Mat::identity(n));
        }
        m
    };
    let size = d.max(deg_psi.max(deg_psi2) + 1);
    let mut e = vec![vec![Mat::zeros(n, n); size + 1]; size + 1];
    for tot in 0..d {
        // N[i][j] = E[i-1][j] + E[i][j-1] along the anti-diagonal i + j = tot + 1.
        e[tot][0] = num(tot + 1, 0);
        for a in (0..tot).rev() {
            let b = tot - a;
            e[a][b] = num(a + 1, b).sub(&e[a + 1][b - 1]);
        }
        if num(0, tot + 1) != e[0][tot] {
            return Err(GiventalError::NotDivisible);
        }
    }
    let out = (0..=deg_psi).map(|a| (0..=deg_psi2).map(|b| e[a][b].clone()).collect()).collect();
    Ok(out)
}

/// Values of a family at (g, 1+n): entry `(ν, μ)` is the ν-component of
/// Ω_{g,1+n}(∂_{μ_1} ⊗ ⋯ ⊗ ∂_{μ_n}). Missing entries are zero. All terms of
/// degree ≤ `cap` are present.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Slice {
    pub g: u32,
    pub n: u32,
    pub dim: usize,
    pub cap: i64,
    pub entries: BTreeMap<(usize, Vec<usize>), TautExpr>,
}

impl Slice {
    fn new(g: u32, n: u32, dim: usize, cap: i64) -> Self {
        Slice { g, n, dim, cap, entries: BTreeMap::new() }
    }

    pub fn get(&self, nu: usize, mu: &[usize]) -> Option<&TautExpr> {
        self.entries.get(&(nu, mu.to_vec()))
    }

    fn add(&mut self, nu: usize, mu: &[usize], e: &TautExpr, s: &Rat) {
        if e.is_zero() || s.is_zero() {
            return;
        }
        let key = (nu, mu.to_vec());
        let ent = self.entries.entry(key.clone()).or_insert_with(|| TautExpr::zero(self.g, self.n));
        ent.add_scaled(e, s);
        if ent.is_zero() {
            self.entries.remove(&key);
        }
    }

    /// Keep only terms of degree ≤ `cap`.
    pub fn truncated(&self, cap: i64) -> Slice {
        let mut out = Slice::new(self.g, self.n, self.dim, cap.min(self.cap));
        for (k, e) in &self.entries {
            let mut t = TautExpr::zero(self.g, self.n);
            for (node, c) in &e.terms {
                if node.degree() <= cap {
                    t.add_term(node.clone(), c.clone());
                }
            }
            if !t.is_zero() {
                out.entries.insert(k.clone(), t);
            }
        }
        out
    }

    pub fn same_classes(&self, o: &Slice) -> bool {
        self.entries == o.entries
    }

    /// Evaluate on arbitrary input vectors (multilinear extension), component ν.
    pub fn evaluate(&self, nu: usize, inputs: &[Vec<Rat>]) -> TautExpr {
        let mut out = TautExpr::zero(self.g, self.n);
        for ((k_nu, mu), e) in &self.entries {
            if *k_nu != nu {
                continue;
            }
            let c = mu.iter().zip(inputs).fold(Rat::one(), |acc, (&m, v)| acc * &v[m]);
            out.add_scaled(e, &c);
        }
        out
    }
}

/// A family of classes Ω_{g,1+n} computed on demand.
pub trait Family: Send + Sync {
    fn dim(&self) -> usize;
    fn slice(&self, g: u32, n: u32, cap: i64) -> Result<Arc<Slice>, GiventalError>;
}

#[derive(Default)]
struct SliceCache(Mutex<HashMap<(u32, u32, i64), Arc<Slice>>>);

impl SliceCache {
    fn get_or<F>(&self, g: u32, n: u32, cap: i64, f: F) -> Result<Arc<Slice>, GiventalError>
    where
        F: FnOnce(i64) -> Result<Slice, GiventalError>,
    {
        if !is_stable(g, n) {
            return Err(TreeError::Unstable { g, n }.into());
        }
        let cap = cap.min(moduli_dim(g, n));
        if let Some(s) = self.0.lock().unwrap().get(&(g, n, cap)) {
            return Ok(s.clone());
        }
        let s = Arc::new(f(cap)?);
        self.0.lock().unwrap().insert((g, n, cap), s.clone());
        Ok(s)
    }
}

fn tuples(dim: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out.into_iter().flat_map(|t| (0..dim).map(move |i| [t.clone(), vec![i]].concat())).collect();
    }
    out
}

/// V-valued polynomial in κ_1, κ_2, … keyed by `(m, exponent)` lists.
pub type KappaVec = BTreeMap<Vec<(u32, u32)>, Vec<Rat>>;

fn kappa_monomial_mul(a: &[(u32, u32)], b: &[(u32, u32)]) -> Vec<(u32, u32)> {
    let mut m: BTreeMap<u32, u32> = a.iter().copied().collect();
    for &(k, e) in b {
        *m.entry(k).or_insert(0) += e;
    }
    m.into_iter().collect()
}

fn kappa_degree(a: &[(u32, u32)]) -> i64 {
    a.iter().map(|(m, e)| (m * e) as i64).sum()
}

/// T̂(κ) = exp(Σ t̂_m κ_m) up to κ-degree `cap`.
pub fn hat_t_kappa(spec: &AlgebraSpec, hatt: &[Vec<Rat>], cap: i64) -> Result<KappaVec, GiventalError> {
    let unit = spec.find_unit().ok_or(GiventalError::MissingUnit)?;
    let mut x: KappaVec = BTreeMap::new();
    for (i, v) in hatt.iter().enumerate() {
        let m = i as u32 + 1;
        if (m as i64) <= cap && v.iter().any(|c| !c.is_zero()) {
            x.insert(vec![(m, 1)], v.clone());
        }
    }
    let mut result: KappaVec = BTreeMap::from([(vec![], unit.clone())]);
    let mut power: KappaVec = BTreeMap::from([(vec![], unit)]);
    for k in 1..=cap.max(0) {
        let mut next: KappaVec = BTreeMap::new();
        for (ma, va) in &power {
            for (mb, vb) in &x {
                let m = kappa_monomial_mul(ma, mb);
                if kappa_degree(&m) > cap {
                    continue;
                }
                let p = spec.mul(va, vb);
                let e = next.entry(m).or_insert_with(|| vec![Rat::zero(); spec.dim]);
                for (a, b) in e.iter_mut().zip(p) {
                    *a += b;
                }
            }
        }
        if next.is_empty() {
            break;
        }
        let inv_fact = Rat::new(1.into(), factorial(k as u32));
        for (m, v) in &next {
            let e = result.entry(m.clone()).or_insert_with(|| vec![Rat::zero(); spec.dim]);
            for (a, b) in e.iter_mut().zip(v) {
                *a += b * &inv_fact;
            }
        }
        power = next;
    }
    Ok(result)
}

/// The F-TFT of `spec`, translated in κ-form: Ω = T̂(κ)·ω.
pub struct TftFamily {
    pub spec: AlgebraSpec,
    pub hatt: Vec<Vec<Rat>>,
    cache: SliceCache,
}

impl TftFamily {
    pub fn new(spec: AlgebraSpec, hatt: Vec<Vec<Rat>>) -> Self {
        TftFamily { spec, hatt, cache: SliceCache::default() }
    }
}

impl Family for TftFamily {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn slice(&self, g: u32, n: u32, cap: i64) -> Result<Arc<Slice>, GiventalError> {
        self.cache.get_or(g, n, cap, |cap| {
            let translated = self.hatt.iter().flatten().any(|x| !x.is_zero());
            let hk = if translated { Some(hat_t_kappa(&self.spec, &self.hatt, cap)?) } else { None };
            let mut s = Slice::new(g, n, self.spec.dim, cap);
            for mu in tuples(self.spec.dim, n as usize) {
                let inputs: Vec<Vec<Rat>> = mu.iter().map(|&i| self.spec.basis(i)).collect();
                let w = self.spec.evaluate(g, &inputs)?;
                let mut per_nu: Vec<TautExpr> = vec![TautExpr::zero(g, n); self.spec.dim];
                match &hk {
                    None => {
                        for (nu, x) in w.iter().enumerate() {
                            per_nu[nu].add_term(one_vertex(g, n), x.clone());
                        }
                    }
                    Some(hk) => {
                        for (km, tv) in hk {
                            let v = self.spec.mul(tv, &w);
                            let mut node = one_vertex(g, n);
                            for &(m, e) in km {
                                node.add_kappa(m, e);
                            }
                            for (nu, x) in v.iter().enumerate() {
                                per_nu[nu].add_term(node.clone(), x.clone());
                            }
                        }
                    }
                }
                for (nu, e) in per_nu.iter().enumerate() {
                    s.add(nu, &mu, e, &Rat::one());
                }
            }
            Ok(s)
        })
    }
}

/// What sits at an ingoing leg of an outer vertex after expansion.
#[derive(Clone, Debug)]
enum Leg {
    Leaf(u32),
    Sub(Node),
}

/// Packet for one ingoing leg: (input index at the vertex, ψ exponent on the
/// vertex side) ↦ weighted contents.
type Packet = BTreeMap<(usize, u32), Vec<(Leg, Rat)>>;

/// R acting on an arbitrary family by the stable-tree sum.
pub struct RActFamily {
    pub r: SeriesMat,
    rinv: SeriesMat,
    pub inner: Arc<dyn Family>,
    cache: SliceCache,
}

impl RActFamily {
    pub fn new(r: SeriesMat, inner: Arc<dyn Family>) -> Result<Self, GiventalError> {
        if r.dim != inner.dim() {
            return Err(GiventalError::DimensionMismatch(r.dim, inner.dim()));
        }
        if !r.is_group_like() {
            return Err(GiventalError::Malformed("R(0) is not the identity".into()));
        }
        let rinv = r.invert()?;
        Ok(RActFamily { r, rinv, inner, cache: SliceCache::default() })
    }

    fn compute(&self, g: u32, n: u32, cap: i64) -> Result<Slice, GiventalError> {
        let dim = self.r.dim;
        let mut s = Slice::new(g, n, dim, cap);
        let cu = cap.max(0) as usize;
        if self.r.order() < cu {
            return Err(GiventalError::Truncated { needed: cu, have: self.r.order() });
        }
        let ew = edge_weight(&self.r, cu, cu)?;
        for tree in enumerate_nodes_bounded(g, n, cu as u32)? {
            let w = Rat::new(1.into(), tree.aut_order().into());
            for mu in tuples(dim, n as usize) {
                let ctx = Ctx { fam: self, ew: &ew, mu: &mu };
                let mut out: Vec<TautExpr> = vec![TautExpr::zero(g, n); dim];
                for b in 0..=cu.min(self.r.order()) {
                    let rb = self.r.coeffs[b].scale(&if b % 2 == 0 { Rat::one() } else { -Rat::one() });
                    if rb.is_zero() {
                        continue;
                    }
                    let sub = ctx.eval(&tree, b as u32, cap)?;
                    for (nu_in, terms) in sub {
                        for nu in 0..dim {
                            let c = rb.get(nu, nu_in);
                            if c.is_zero() {
                                continue;
                            }
                            for (node, x) in &terms {
                                out[nu].add_term(node.clone(), x * c);
                            }
                        }
                    }
                }
                for (nu, e) in out.iter().enumerate() {
                    s.add(nu, &mu, e, &w);
                }
            }
        }
        Ok(s)
    }
}

struct Ctx<'a> {
    fam: &'a RActFamily,
    ew: &'a [Vec<Mat>],
    mu: &'a [usize],
}

impl Ctx<'_> {
    /// Expansion of the subtree at `v` with ψ^{b_out} on its outgoing leg,
    /// before the edge (or root) factor: ν ↦ decorated subtrees.
    fn eval(&self, v: &Node, b_out: u32, budget: i64) -> Result<BTreeMap<usize, BTreeMap<Node, Rat>>, GiventalError> {
        let dim = self.fam.r.dim;
        let order = self.fam.r.order();
        let mut packets: Vec<Packet> = Vec::new();
        for &(l, _) in &v.leaves {
            let mut p: Packet = BTreeMap::new();
            let input = self.mu[l as usize - 2];
            for k in 0..=(budget.max(0) as usize).min(order) {
                for m in 0..dim {
                    let c = self.fam.rinv.coeffs[k].get(m, input);
                    if !c.is_zero() {
                        p.entry((m, k as u32)).or_default().push((Leg::Leaf(l), c.clone()));
                    }
                }
            }
            packets.push(p);
        }
        for (_, c) in &v.children {
            let mut p: Packet = BTreeMap::new();
            let cb = budget - 1;
            for b in 0..=cb.max(-1) {
                let sub = self.eval(c, b as u32, cb)?;
                for a in 0..=(cb - b).max(-1) {
                    let (a, bu) = (a as usize, b as usize);
                    if a >= self.ew.len() || bu >= self.ew[a].len() {
                        continue;
                    }
                    let e = &self.ew[a][bu];
                    if e.is_zero() {
                        continue;
                    }
                    for (nu, terms) in &sub {
                        for m in 0..dim {
                            let x = e.get(m, *nu);
                            if x.is_zero() {
                                continue;
                            }
                            for (node, y) in terms {
                                if node.degree() + 1 + a as i64 <= budget {
                                    p.entry((m, a as u32)).or_default().push((Leg::Sub(node.clone()), x * y));
                                }
                            }
                        }
                    }
                }
            }
            packets.push(p);
        }
        let k = packets.len() as u32;
        let cap_v = budget.min(moduli_dim(v.g, k));
        let omega = self.fam.inner.slice(v.g, k, cap_v)?;
        let mut out: BTreeMap<usize, BTreeMap<Node, Rat>> = BTreeMap::new();
        let keys: Vec<Vec<(usize, u32)>> = packets.iter().map(|p| p.keys().copied().collect()).collect();
        let mut choice = vec![0usize; packets.len()];
        if keys.iter().any(|k| k.is_empty()) {
            return Ok(out);
        }
        loop {
            let sel: Vec<(usize, u32)> = choice.iter().zip(&keys).map(|(&i, k)| k[i]).collect();
            let psi_total: i64 = b_out as i64 + sel.iter().map(|s| s.1 as i64).sum::<i64>();
            if psi_total <= budget {
                let mu_local: Vec<usize> = sel.iter().map(|s| s.0).collect();
                let mut psi = vec![b_out];
                psi.extend(sel.iter().map(|s| s.1));
                let mono = AmbientMonomial::new(psi, &[]);
                for nu in 0..dim {
                    let Some(entry) = omega.get(nu, &mu_local) else { continue };
                    let prod = mul_monomial(entry, &mono);
                    let contents: Vec<&Vec<(Leg, Rat)>> =
                        sel.iter().zip(&packets).map(|(s, p)| p.get(s).unwrap()).collect();
                    let target = out.entry(nu).or_default();
                    for (inner, c) in &prod.terms {
                        graft_all(inner, &contents, c, budget, target);
                    }
                }
            }
            let mut p = 0;
            while p < choice.len() {
                choice[p] += 1;
                if choice[p] < keys[p].len() {
                    break;
                }
                choice[p] = 0;
                p += 1;
            }
            if p == choice.len() {
                break;
            }
        }
        for m in out.values_mut() {
            m.retain(|_, c| !c.is_zero());
        }
        Ok(out)
    }
}

/// Substitute leg contents into the leaves 2, 3, … of an inner decorated
/// tree, over the Cartesian product of the contents.
fn graft_all(inner: &Node, contents: &[&Vec<(Leg, Rat)>], c: &Rat, budget: i64, target: &mut BTreeMap<Node, Rat>) {
    let mut idx = vec![0usize; contents.len()];
    loop {
        let mut coeff = c.clone();
        let chosen: Vec<&Leg> = idx
            .iter()
            .zip(contents)
            .map(|(&i, cs)| {
                coeff *= &cs[i].1;
                &cs[i].0
            })
            .collect();
        let node = graft(inner, &chosen).canonical();
        if node.degree() <= budget && !coeff.is_zero() {
            let e = target.entry(node).or_insert_with(Rat::zero);
            *e += coeff;
        }
        let mut p = 0;
        while p < idx.len() {
            idx[p] += 1;
            if idx[p] < contents[p].len() {
                break;
            }
            idx[p] = 0;
            p += 1;
        }
        if p == idx.len() {
            break;
        }
    }
}

fn graft(inner: &Node, legs: &[&Leg]) -> Node {
    let mut out = Node { leaves: Vec::new(), children: Vec::new(), ..inner.clone() };
    for &(label, e) in &inner.leaves {
        match legs[label as usize - 2] {
            Leg::Leaf(l) => out.leaves.push((*l, e)),
            Leg::Sub(s) => out.children.push((e, s.clone())),
        }
    }
    for (e, c) in &inner.children {
        out.children.push((*e, graft(c, legs)));
    }
    out
}

impl Family for RActFamily {
    fn dim(&self) -> usize {
        self.r.dim
    }

    fn slice(&self, g: u32, n: u32, cap: i64) -> Result<Arc<Slice>, GiventalError> {
        self.cache.get_or(g, n, cap, |cap| self.compute(g, n, cap))
    }
}

/// T acting on an arbitrary family by pushing forward along the forgetful maps:
/// Σ_m 1/m! π_{m*} Ω_{g,1+n+m}(⋯ ⊗ T(ψ_{n+2}) ⊗ ⋯ ⊗ T(ψ_{n+1+m})).
pub struct TranslateFamily {
    pub t: SeriesVec,
    pub inner: Arc<dyn Family>,
    cache: SliceCache,
}

impl TranslateFamily {
    pub fn new(t: SeriesVec, inner: Arc<dyn Family>) -> Result<Self, GiventalError> {
        if t.dim != inner.dim() {
            return Err(GiventalError::DimensionMismatch(t.dim, inner.dim()));
        }
        if t.coeffs.iter().take(2).flatten().any(|x| !x.is_zero()) {
            return Err(GiventalError::Malformed("T must be O(z^2)".into()));
        }
        Ok(TranslateFamily { t, inner, cache: SliceCache::default() })
    }

    fn compute(&self, g: u32, n: u32, cap: i64) -> Result<Slice, GiventalError> {
        let dim = self.t.dim;
        let need = (cap + 1).max(0) as usize;
        if !self.t.is_zero() && self.t.order() < need {
            return Err(GiventalError::Truncated { needed: need, have: self.t.order() });
        }
        let base = self.inner.slice(g, n, cap)?;
        let mut s = (*base).clone();
        if self.t.is_zero() {
            return Ok(s);
        }
        // (k, ρ) ↦ T_k^ρ for k ≥ 2.
        let mut tk: Vec<(u32, usize, Rat)> = Vec::new();
        for k in 2..=need.min(self.t.order()) {
            for (rho, x) in self.t.coeffs[k].iter().enumerate() {
                if !x.is_zero() {
                    tk.push((k as u32, rho, x.clone()));
                }
            }
        }
        if tk.is_empty() {
            return Ok(s);
        }
        for m in 1..=cap.max(0) as u32 {
            let inner = self.inner.slice(g, n + m, cap - m as i64)?;
            let inv_fact = Rat::new(1.into(), factorial(m));
            let mut acc: BTreeMap<(usize, Vec<usize>), TautExpr> = BTreeMap::new();
            let mut choice = vec![0usize; m as usize];
            loop {
                let ks: u32 = choice.iter().map(|&i| tk[i].0).sum();
                if ks as i64 <= cap + m as i64 {
                    let rho: Vec<usize> = choice.iter().map(|&i| tk[i].1).collect();
                    let coeff = choice.iter().fold(inv_fact.clone(), |a, &i| a * &tk[i].2);
                    let mut psi = vec![0u32; 1 + n as usize];
                    psi.extend(choice.iter().map(|&i| tk[i].0));
                    let mono = AmbientMonomial::new(psi, &[]);
                    for mu in tuples(dim, n as usize) {
                        let full = [mu.clone(), rho.clone()].concat();
                        for nu in 0..dim {
                            let Some(e) = inner.get(nu, &full) else { continue };
                            let p = mul_monomial(e, &mono);
                            if p.is_zero() {
                                continue;
                            }
                            let ent = acc.entry((nu, mu.clone())).or_insert_with(|| TautExpr::zero(g, n + m));
                            ent.add_scaled(&p, &coeff);
                        }
                    }
                }
                let mut p = 0;
                while p < choice.len() {
                    choice[p] += 1;
                    if choice[p] < tk.len() {
                        break;
                    }
                    choice[p] = 0;
                    p += 1;
                }
                if p == choice.len() {
                    break;
                }
            }
            for ((nu, mu), mut e) in acc {
                for label in (n + 2..=n + 1 + m).rev() {
                    e = forget_leaf(&e, label)?;
                }
                s.add(nu, &mu, &e, &Rat::one());
            }
        }
        Ok(s)
    }
}

impl Family for TranslateFamily {
    fn dim(&self) -> usize {
        self.t.dim
    }

    fn slice(&self, g: u32, n: u32, cap: i64) -> Result<Arc<Slice>, GiventalError> {
        self.cache.get_or(g, n, cap, |cap| self.compute(g, n, cap))
    }
}

/// The family (R, T)·ω with T taken in κ-form: R·(T̂(κ)ω).
pub fn action_family(elem: &GiventalElement, spec: &AlgebraSpec) -> Result<RActFamily, GiventalError> {
    if elem.dim() != spec.dim {
        return Err(GiventalError::DimensionMismatch(elem.dim(), spec.dim));
    }
    let h = hatt(&elem.t, spec)?;
    RActFamily::new(elem.r.clone(), Arc::new(TftFamily::new(spec.clone(), h)))
}

/// All classes of (R, T)·ω on M̄_{g,1+n}.
pub fn act_on_tft(elem: &GiventalElement, spec: &AlgebraSpec, g: u32, n: u32) -> Result<Slice, GiventalError> {
    let cap = moduli_dim(g, n);
    check_order(elem, cap)?;
    Ok((*action_family(elem, spec)?.slice(g, n, cap)?).clone())
}

fn check_order(elem: &GiventalElement, cap: i64) -> Result<(), GiventalError> {
    let need = (cap + 1).max(0) as usize;
    if !elem.t.is_zero() && elem.t.order() < need {
        return Err(GiventalError::Truncated { needed: need, have: elem.t.order() });
    }
    Ok(())
}

/// Semidirect identity: (R, T_B)·ω computed in κ-form equals translating
/// R·ω by T_A = R[T_B].
pub fn semidirect_sides(r: &SeriesMat, t_b: &SeriesVec, spec: &AlgebraSpec, g: u32, n: u32) -> Result<(Slice, Slice), GiventalError> {
    let cap = moduli_dim(g, n);
    let lhs = act_on_tft(&GiventalElement::new(r.clone(), t_b.clone())?, spec, g, n)?;
    let t_a = move_translation(r, t_b)?;
    let ract = Arc::new(RActFamily::new(r.clone(), Arc::new(TftFamily::new(spec.clone(), vec![])))?);
    let rhs = TranslateFamily::new(t_a, ract)?.slice(g, n, cap)?;
    Ok((lhs, (*rhs).clone()))
}

/// Group law: (a∘b)·ω against a·(b·ω), where a acts on the family b·ω by
/// translating with T_a and then applying R_a.
pub fn composition_sides(
    a: &GiventalElement,
    b: &GiventalElement,
    spec: &AlgebraSpec,
    g: u32,
    n: u32,
) -> Result<(Slice, Slice), GiventalError> {
    let cap = moduli_dim(g, n);
    let lhs = act_on_tft(&compose(a, b)?, spec, g, n)?;
    let bw: Arc<dyn Family> = Arc::new(action_family(b, spec)?);
    let translated: Arc<dyn Family> = Arc::new(TranslateFamily::new(a.t.clone(), bw)?);
    let rhs = RActFamily::new(a.r.clone(), translated)?.slice(g, n, cap)?;
    Ok((lhs, (*rhs).clone()))
}

/// Recover (R, T) from the classes of (R, T)·ω. On the one-vertex stratum of
/// M̄_{0,1+(k+2)} with inputs (∂_μ, 𝟙, …, 𝟙) the κ-free ψ_1^k coefficient is
/// (−1)^k R_k ∂_μ; with all inputs 𝟙 the κ_m coefficient on M̄_{0,1+(m+2)} is t̂_m.
pub fn extract_element(family: &dyn Family, spec: &AlgebraSpec, order: usize) -> Result<GiventalElement, GiventalError> {
    let dim = spec.dim;
    let unit = spec.find_unit().ok_or(GiventalError::MissingUnit)?;
    // Coefficient of a one-vertex decoration in the evaluation on given inputs.
    let coeff_of = |g: u32, n: u32, cap: i64, node: &Node, inputs: &[Vec<Rat>]| -> Result<Vec<Rat>, GiventalError> {
        let s = family.slice(g, n, cap)?;
        let key = node.clone().canonical();
        Ok((0..dim).map(|nu| s.evaluate(nu, inputs).terms.get(&key).cloned().unwrap_or_else(Rat::zero)).collect())
    };
    let mut r = SeriesMat::identity(dim, order);
    for k in 1..=order {
        let n = (k + 2) as u32;
        let mut node = one_vertex(0, n);
        node.psi_out = k as u32;
        let mut col = Mat::zeros(dim, dim);
        for mu in 0..dim {
            let mut inputs = vec![spec.basis(mu)];
            inputs.extend(std::iter::repeat_n(unit.clone(), n as usize - 1));
            let v = coeff_of(0, n, k as i64, &node, &inputs)?;
            for (nu, x) in v.into_iter().enumerate() {
                col.set(nu, mu, if k % 2 == 0 { x } else { -x });
            }
        }
        r.coeffs[k] = col;
    }
    let t = extract_translation(family, spec, order)?;
    GiventalElement::new(r, t)
}

fn extract_translation(family: &dyn Family, spec: &AlgebraSpec, order: usize) -> Result<SeriesVec, GiventalError> {
    let dim = spec.dim;
    let unit = spec.find_unit().ok_or(GiventalError::MissingUnit)?;
    let mut hatt_v: Vec<Vec<Rat>> = Vec::new();
    for m in 1..order {
        let n = (m + 2) as u32;
        let mut node = one_vertex(0, n);
        node.add_kappa(m as u32, 1);
        let inputs: Vec<Vec<Rat>> = std::iter::repeat_n(unit.clone(), n as usize).collect();
        let s = family.slice(0, n, m as i64)?;
        let key = node.canonical();
        let v: Vec<Rat> = (0..dim).map(|nu| s.evaluate(nu, &inputs).terms.get(&key).cloned().unwrap_or_else(Rat::zero)).collect();
        hatt_v.push(v);
    }
    t_from_hatt(&hatt_v, spec, order)
}

fn random_rat<G: rand::Rng + ?Sized>(rng: &mut G) -> Rat {
    Rat::new(rng.gen_range(-5i64..=5).into(), rng.gen_range(1i64..=4).into())
}

/// A random non-identity element with entries p/q, |p| ≤ 5, 1 ≤ q ≤ 4, in
/// R_1…R_order and T_2…T_order.
pub fn random_element<G: rand::Rng + ?Sized>(rng: &mut G, dim: usize, order: usize) -> GiventalElement {
    loop {
        let mut r = SeriesMat::identity(dim, order);
        let mut t = SeriesVec::zero(dim, order);
        for k in 1..=order {
            let rows = (0..dim).map(|_| (0..dim).map(|_| random_rat(rng)).collect()).collect();
            r.coeffs[k] = Mat::from_rows(rows);
            if k >= 2 {
                t.coeffs[k] = (0..dim).map(|_| random_rat(rng)).collect();
            }
        }
        let e = GiventalElement { r, t };
        if !e.is_identity() {
            return e;
        }
    }
}

/// Number of coefficients where E_{R_aR_b}(z,z′) and
/// R_b^{-1}(z)E_{R_a}(z,z′)R_b(−z′) + E_{R_b}(z,z′) differ, over total degree
/// below the common order.
pub fn edge_cocycle_defect(a: &SeriesMat, b: &SeriesMat) -> Result<usize, GiventalError> {
    let ab = a.mul(b)?;
    let d = ab.order();
    if d == 0 {
        return Ok(0);
    }
    let top = d - 1;
    let e_ab = edge_weight(&ab, top, top)?;
    let e_a = edge_weight(&a.truncate(d), top, top)?;
    let e_b = edge_weight(&b.truncate(d), top, top)?;
    let binv = b.invert()?;
    let bneg = b.negate_z();
    let mut defects = 0;
    for tot in 0..=top {
        for i in 0..=tot {
            let j = tot - i;
            let mut rhs = e_b[i][j].clone();
            for p in 0..=i {
                for q in 0..=j {
                    rhs = rhs.add(&binv.coeffs[p].mul(&e_a[i - p][j - q]).mul(&bneg.coeffs[q]));
                }
            }
            if rhs != e_ab[i][j] {
                defects += 1;
            }
        }
    }
    Ok(defects)
}

fn relabel(node: &Node, map: &BTreeMap<u32, u32>) -> Node {
    Node {
        leaves: node.leaves.iter().map(|&(l, e)| (map[&l], e)).collect(),
        children: node.children.iter().map(|(e, c)| (*e, relabel(c, map))).collect(),
        ..node.clone()
    }
}

/// Permuting the inputs μ equals relabelling leaves 2…1+n, checked on
/// adjacent transpositions.
pub fn is_equivariant(s: &Slice) -> bool {
    let n = s.n as usize;
    for i in 0..n.saturating_sub(1) {
        let map: BTreeMap<u32, u32> = (0..n as u32)
            .map(|k| {
                let t = if k as usize == i { k + 1 } else if k as usize == i + 1 { k - 1 } else { k };
                (k + 2, t + 2)
            })
            .collect();
        for ((nu, mu), e) in &s.entries {
            let mut swapped = mu.clone();
            swapped.swap(i, i + 1);
            let mut moved = TautExpr::zero(s.g, s.n);
            for (node, c) in &e.terms {
                moved.add_term(relabel(node, &map), c.clone());
            }
            if s.get(*nu, &swapped) != Some(&moved) {
                return false;
            }
        }
    }
    true
}

/// exp(Σ_{k≥1} c_k z^k) up to z^order, for a scalar series given by c_1, c_2, ….
pub fn scalar_exp(c: &[Rat], order: usize) -> Vec<Rat> {
    let mut e = vec![Rat::zero(); order + 1];
    e[0] = Rat::one();
    for k in 1..=order {
        let mut acc = Rat::zero();
        for j in 1..=k.min(c.len()) {
            acc += &c[j - 1] * &e[k - j] * int(j as i64);
        }
        e[k] = acc / int(k as i64);
    }
    e
}

/// Inverse of `scalar_exp`: log R as c_1, c_2, … for a scalar series R with R_0 = 1.
pub fn scalar_log(r: &[Rat]) -> Vec<Rat> {
    let mut c: Vec<Rat> = Vec::with_capacity(r.len().saturating_sub(1));
    for k in 1..r.len() {
        let mut acc = &r[k] * int(k as i64);
        for j in 1..k {
            acc -= &c[j - 1] * &r[k - j] * int(j as i64);
        }
        c.push(acc / int(k as i64));
    }
    c
}

/// Coefficients of (1 − exp(r(−y) − r(x)))/(x + y) up to total degree `d`.
fn rank1_edge_kernel(r: &[Rat], d: usize) -> Vec<Vec<Rat>> {
    let top = d + 1;
    let zero = || vec![vec![Rat::zero(); top + 1]; top + 1];
    let mut f = zero();
    for (i, rk) in r.iter().enumerate().take(top) {
        let k = i + 1;
        f[k][0] -= rk;
        f[0][k] += if k % 2 == 0 { rk.clone() } else { -rk.clone() };
    }
    // 1 − exp(F) = −Σ_{j≥1} F^j/j!
    let mut num = zero();
    let mut pow = zero();
    pow[0][0] = Rat::one();
    for j in 1..=top {
        let mut next = zero();
        for a in 0..=top {
            for b in 0..=top - a {
                if pow[a][b].is_zero() {
                    continue;
                }
                for c in 0..=top - a - b {
                    for e in 0..=top - a - b - c {
                        if !f[c][e].is_zero() {
                            next[a + c][b + e] += &pow[a][b] * &f[c][e];
                        }
                    }
                }
            }
        }
        let inv = Rat::new(1.into(), factorial(j as u32));
        for a in 0..=top {
            for b in 0..=top - a {
                num[a][b] -= &next[a][b] * &inv;
            }
        }
        pow = next;
    }
    // num = (x + y)·q
    let mut q = vec![vec![Rat::zero(); d + 1]; d + 1];
    for tot in 0..=d {
        q[tot][0] = num[tot + 1][0].clone();
        for a in (0..tot).rev() {
            let b = tot - a;
            q[a][b] = &num[a + 1][b] - &q[a + 1][b - 1];
        }
    }
    q
}

struct Rank1 {
    root: Vec<Rat>,
    leaf: Vec<Rat>,
    kernel: Vec<Vec<Rat>>,
    hatt: Vec<Rat>,
}

impl Rank1 {
    fn kappa_options(&self, max_deg: i64) -> Vec<(Vec<(u32, u32)>, Rat)> {
        let mut out = vec![(vec![], Rat::one())];
        for (i, t) in self.hatt.iter().enumerate() {
            let m = i as u32 + 1;
            if t.is_zero() || m as i64 > max_deg {
                continue;
            }
            let mut next = Vec::new();
            for (mono, c) in &out {
                let used = kappa_degree(mono);
                let mut e = 0u32;
                let mut tp = c.clone();
                while used + (e * m) as i64 <= max_deg {
                    let mut mm = mono.clone();
                    if e > 0 {
                        mm.push((m, e));
                    }
                    next.push((mm, &tp / Rat::from_integer(factorial(e))));
                    e += 1;
                    tp *= t;
                }
            }
            out = next;
        }
        out
    }

    fn expand(&self, v: &Node, b_out: u32) -> Vec<(Node, Rat)> {
        let dim_v = v.vertex_dim();
        if b_out as i64 > dim_v {
            return vec![];
        }
        let mut base = Node { psi_out: b_out, kappa: vec![], leaves: vec![], children: vec![], ..v.clone() };
        base.leaves.clear();
        let mut partial: Vec<(Node, Rat, i64)> = vec![(base, Rat::one(), b_out as i64)];
        for &(l, _) in &v.leaves {
            let mut next = Vec::new();
            for (node, c, used) in &partial {
                for (k, x) in self.leaf.iter().enumerate() {
                    if used + k as i64 > dim_v {
                        break;
                    }
                    if x.is_zero() {
                        continue;
                    }
                    let mut nn = node.clone();
                    nn.leaves.push((l, k as u32));
                    next.push((nn, c * x, used + k as i64));
                }
            }
            partial = next;
        }
        for (_, child) in &v.children {
            let mut subs: Vec<(u32, Node, Rat)> = Vec::new();
            for (a, row) in self.kernel.iter().enumerate() {
                for (b, q) in row.iter().enumerate() {
                    if q.is_zero() || a as i64 > dim_v {
                        continue;
                    }
                    for (s, c) in self.expand(child, b as u32) {
                        subs.push((a as u32, s, q * c));
                    }
                }
            }
            let mut next = Vec::new();
            for (node, c, used) in &partial {
                for (a, s, x) in &subs {
                    if used + *a as i64 > dim_v {
                        continue;
                    }
                    let mut nn = node.clone();
                    nn.children.push((*a, s.clone()));
                    next.push((nn, c * x, used + *a as i64));
                }
            }
            partial = next;
        }
        let mut out = Vec::new();
        for (node, c, used) in partial {
            for (mono, x) in self.kappa_options(dim_v - used) {
                let mut nn = node.clone();
                for (m, e) in mono {
                    nn.add_kappa(m, e);
                }
                out.push((nn, &c * x));
            }
        }
        out
    }
}

/// (R, T)·𝟙 for the trivial rank-1 F-TFT with R = exp(r(z)), expanded
/// directly from exp(Σ t̂_k κ_k + r(−ψ_1) − Σ r(ψ_i) + Σ_Γ gl_Γ* (r(ψ) − r(−ψ′))/(ψ+ψ′)).
/// The exponential of a boundary divisor term turns its kernel into
/// (1 − e^{r(−ψ′) − r(ψ)})/(ψ+ψ′) on every edge.
pub fn rank1_closed_form(r: &[Rat], hatt: &[Rat], g: u32, n: u32) -> Result<TautExpr, GiventalError> {
    let d = moduli_dim(g, n).max(0) as usize;
    let rneg: Vec<Rat> = r.iter().enumerate().map(|(i, x)| if i % 2 == 0 { -x } else { x.clone() }).collect();
    let mneg: Vec<Rat> = r.iter().map(|x| -x).collect();
    let ctx = Rank1 {
        root: scalar_exp(&rneg, d),
        leaf: scalar_exp(&mneg, d),
        kernel: rank1_edge_kernel(r, d),
        hatt: hatt.to_vec(),
    };
    let mut out = TautExpr::zero(g, n);
    for tree in enumerate_nodes(g, n)? {
        let w = Rat::new(1.into(), tree.aut_order().into());
        for (k, c) in ctx.root.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            for (node, x) in ctx.expand(&tree, k as u32) {
                if node.degree() <= d as i64 {
                    out.add_term(node, &w * c * x);
                }
            }
        }
    }
    Ok(out)
}
