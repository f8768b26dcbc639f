//! The extended r-spin direction: s_m coefficients, the κ-polynomials P_m^{(r)},
//! compact-type vanishing certificates and the constants of c^{r,⋆}.
//!
//! Types follow the (g, 1+n) convention: n counts the inputs, so the moduli
//! space has 1+n marked points.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::algebra::{factorial, int, pow_i, AlgebraError, Gen, Poly, Rat, SeriesMat, SeriesVec};
use crate::ftft::AlgebraSpec;
use crate::givental::{act_on_tft, GiventalElement, GiventalError};
use crate::oracle0::{pair_with_all, OracleError};
use crate::tautology::{one_vertex, TautExpr};
use crate::trees::{is_stable, moduli_dim, TreeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RspinError {
    #[error("r must be at least {min}, got {r}")]
    BadR { r: i64, min: i64 },
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Givental(#[from] GiventalError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// A = (−r)^{1−r}, a = (−r)^{2−r}, Δ = 2 − 2/r.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RspinParams {
    pub r: u32,
    pub a_prod: Rat,
    pub a: Rat,
    pub delta: Rat,
}

impl RspinParams {
    pub fn new(r: u32) -> Result<Self, RspinError> {
        if r < 2 {
            return Err(RspinError::BadR { r: r as i64, min: 2 });
        }
        let mr = int(-(r as i64));
        Ok(RspinParams {
            r,
            a_prod: pow_i(&mr, 1 - r as i64),
            a: pow_i(&mr, 2 - r as i64),
            delta: int(2) - Rat::new(2.into(), r.into()),
        })
    }

    /// The one-dimensional F-TFT of the formal shift at t = 1: ∂·∂ = A∂, α = a∂.
    pub fn shifted_spec(&self) -> AlgebraSpec {
        AlgebraSpec::rank_one(self.a_prod.clone(), self.a.clone())
    }
}

/// s_1, …, s_M from s_1 = r − 1 and
/// (m+1)s_{m+1} = m(r(m+2) − 1)s_m + r Σ_{ℓ+ℓ′=m} ℓℓ′ s_ℓ s_ℓ′.
pub fn s_coeffs(r: i64, m_max: usize) -> Vec<Rat> {
    let rr = int(r);
    let mut s = vec![Rat::zero(); m_max + 1];
    if m_max == 0 {
        return vec![];
    }
    s[1] = int(r - 1);
    for m in 1..m_max {
        let mut acc = int(m as i64) * (&rr * int(m as i64 + 2) - Rat::one()) * &s[m];
        let mut conv = Rat::zero();
        for l in 1..m {
            conv += int((l * (m - l)) as i64) * &s[l] * &s[m - l];
        }
        acc += &rr * conv;
        s[m + 1] = acc / int(m as i64 + 1);
    }
    s.remove(0);
    s
}

/// (rm − 1)!^{(r)} = (rm − 1)(rm − r − 1)⋯(r − 1), and 1 for m = 0.
pub fn r_factorial(r: i64, m: u32) -> BigInt {
    (1..=m as i64).map(|j| BigInt::from(j * r - 1)).product()
}

/// Σ (rm−1)!^{(r)} z^m = exp(Σ s_m z^m) on the first M+1 coefficients.
pub fn factorial_series_check(r: i64, m_max: usize) -> bool {
    let s = s_coeffs(r, m_max);
    let mut e = vec![Rat::zero(); m_max + 1];
    e[0] = Rat::one();
    for k in 1..=m_max {
        let mut acc = Rat::zero();
        for j in 1..=k {
            acc += int(j as i64) * &s[j - 1] * &e[k - j];
        }
        e[k] = acc / int(k as i64);
    }
    (0..=m_max).all(|m| e[m] == Rat::from_integer(r_factorial(r, m as u32)))
}

/// P_1, …, P_M from exp(−Σ s_m κ_m) = 1 + Σ P_m, as polynomials in κ_1…κ_M.
pub fn p_polynomials(r: i64, m_max: usize) -> Vec<Poly> {
    let ring = Poly::kappa_ring(m_max as u32);
    let s = s_coeffs(r, m_max);
    let mut x = Poly::zero(ring.clone());
    for (i, sm) in s.iter().enumerate() {
        let mut e = vec![0u32; m_max];
        e[i] = 1;
        x.add_term(e, -sm.clone());
    }
    let mut total = Poly::constant(ring.clone(), Rat::one());
    let mut power = Poly::constant(ring.clone(), Rat::one());
    for k in 1..=m_max as u32 {
        power = power.mul(&x).expect("same ring").truncate_degree(m_max as u32);
        total = total.add(&power.scale(&Rat::new(1.into(), factorial(k)))).expect("same ring");
    }
    (1..=m_max as u32).map(|m| total.homogeneous_part(m)).collect()
}

/// P̃_m with P_m = −(r−1)/m!·P̃_m.
pub fn p_tilde(r: i64, m: usize) -> Poly {
    let p = p_polynomials(r, m).pop().expect("m ≥ 1");
    p.scale(&(-Rat::from_integer(factorial(m as u32)) / int(r - 1)))
}

/// Turn a κ-polynomial into a one-vertex class on M̄_{g,1+n}.
pub fn kappa_poly_to_expr(p: &Poly, g: u32, n: u32) -> TautExpr {
    let mut e = TautExpr::zero(g, n);
    for (exps, c) in &p.terms {
        let mut node = one_vertex(g, n);
        for (gen, &k) in p.ring.iter().zip(exps) {
            if let (Gen::Kappa(m), true) = (gen, k > 0) {
                node.add_kappa(*m, k);
            }
        }
        e.add_term(node, c.clone());
    }
    e
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertStatus {
    StrictVanishing,
    EqualityCase,
    NotApplicable,
}

impl std::fmt::Display for CertStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CertStatus::StrictVanishing => "strict-vanishing",
            CertStatus::EqualityCase => "equality-case",
            CertStatus::NotApplicable => "not-applicable",
        })
    }
}

#[derive(Clone, Debug)]
pub struct RelationCertificate {
    pub r: u32,
    pub g: u32,
    pub n: u32,
    pub m: u32,
    pub class: Poly,
    pub status: CertStatus,
    pub trivial_by_dimension: bool,
    /// `Some(true)` when every recorded genus-0 pairing vanishes; `None`
    /// when nothing was checked (positive genus or not strict).
    pub verified: Option<bool>,
    pub witnesses: Vec<(String, Rat)>,
}

pub fn classify(r: u32, g: u32, n: u32, m: u32) -> CertStatus {
    let lhs = (r as i64 - 1) * (2 * g as i64 - 1 + n as i64);
    let rhs = r as i64 * m as i64;
    match lhs.cmp(&rhs) {
        std::cmp::Ordering::Less => CertStatus::StrictVanishing,
        std::cmp::Ordering::Equal => CertStatus::EqualityCase,
        std::cmp::Ordering::Greater => CertStatus::NotApplicable,
    }
}

/// Classify (r, g, n, m) and, in genus 0 where compact type is everything,
/// pair P_m^{(r)} against every complementary ψκ-monomial on M̄_{0,1+n}.
pub fn vanishing_certificate(r: u32, g: u32, n: u32, m: u32, verify: bool) -> Result<RelationCertificate, RspinError> {
    if r < 2 {
        return Err(RspinError::BadR { r: r as i64, min: 2 });
    }
    if !is_stable(g, n) {
        return Err(TreeError::Unstable { g, n }.into());
    }
    let class = p_polynomials(r as i64, m.max(1) as usize).pop().expect("m ≥ 1");
    let status = classify(r, g, n, m);
    let trivial_by_dimension = m as i64 > moduli_dim(g, n);
    let mut cert = RelationCertificate { r, g, n, m, class, status, trivial_by_dimension, verified: None, witnesses: vec![] };
    if verify && g == 0 && status == CertStatus::StrictVanishing {
        if trivial_by_dimension {
            cert.verified = Some(true);
        } else {
            let e = kappa_poly_to_expr(&cert.class, g, n);
            let pairs = pair_with_all(&e, m)?;
            cert.verified = Some(pairs.iter().all(|(_, v)| v.is_zero()));
            cert.witnesses = pairs.into_iter().map(|(mono, v)| (format!("{mono:?}"), v)).collect();
        }
    }
    Ok(cert)
}

/// All certificates with 1+n ≤ `max_points` and m ≤ dim M̄_{g,1+n} + 1.
pub fn certificates_up_to(r: u32, g: u32, max_points: u32, verify: bool) -> Result<Vec<RelationCertificate>, RspinError> {
    let mut out = Vec::new();
    for n in 0..max_points {
        if !is_stable(g, n) {
            continue;
        }
        for m in 1..=(moduli_dim(g, n).max(0) as u32 + 1) {
            out.push(vanishing_certificate(r, g, n, m, verify)?);
        }
    }
    Ok(out)
}

/// The t⁰ coefficient of the formal shift of c^{r,⋆}_{g,1+n}(∂_t^{⊗n}):
/// a^g A^{g+n−1}(−A)^{−m} P_m with m = (r−1)(2g+n−1)/r, or `None` when r
/// does not divide (r−1)(2g+n−1).
pub fn crstar_class(r: u32, g: u32, n: u32) -> Result<Option<(u32, Poly)>, RspinError> {
    let p = RspinParams::new(r)?;
    if !is_stable(g, n) {
        return Err(TreeError::Unstable { g, n }.into());
    }
    let top = (r as i64 - 1) * (2 * g as i64 + n as i64 - 1);
    if top % r as i64 != 0 {
        return Ok(None);
    }
    let m = (top / r as i64) as u32;
    let coeff = pow_i(&p.a, g as i64) * pow_i(&p.a_prod, g as i64 + n as i64 - 1) * pow_i(&-p.a_prod.clone(), -(m as i64));
    let class = if m == 0 {
        Poly::constant(Poly::kappa_ring(1), coeff)
    } else {
        p_polynomials(r as i64, m as usize).pop().expect("m ≥ 1").scale(&coeff)
    };
    Ok(Some((m, class)))
}

/// ∫_{M̄_{0,r+2}} c^{r,⋆}_{0,r+2}(∂_t^{⊗(r+1)}) = ∂_t^{r+1}F at 0 for
/// F(t) = (−t)^{r+1}/((r+1)r^r).
pub fn crstar_genus0_integral(r: u32) -> Result<Rat, RspinError> {
    if r < 2 {
        return Err(RspinError::BadR { r: r as i64, min: 2 });
    }
    // ∂^{r+1}(−t)^{r+1} = (−1)^{r+1}(r+1)!
    let sign = if (r + 1).is_multiple_of(2) { Rat::one() } else { -Rat::one() };
    let rr = int(r as i64);
    Ok(sign * Rat::from_integer(factorial(r + 1)) / (int(r as i64 + 1) * pow_i(&rr, r as i64)))
}

/// (r−1)!·A, the value from the self-gluing computation.
pub fn crstar_genus0_from_gluing(r: u32) -> Result<Rat, RspinError> {
    let p = RspinParams::new(r)?;
    Ok(Rat::from_integer(factorial(r - 1)) * p.a_prod)
}

/// The same integral by pairing the class of [`crstar_class`] on M̄_{0,1+(r+1)}.
pub fn crstar_genus0_from_class(r: u32) -> Result<Rat, RspinError> {
    let (_, class) = crstar_class(r, 0, r + 1)?.expect("r divides (r−1)r");
    let e = kappa_poly_to_expr(&class, 0, r + 1);
    Ok(crate::oracle0::integrate_tautexpr(&e)?)
}

/// Υ(z) = Σ_m Π_{j≤m}(jr − 1)(−A^{−1}t^{−r}z)^m 𝟙 at t = 1, as a coefficient
/// series in the ∂_t basis (𝟙 = A^{−1}∂_t).
pub fn upsilon_closed(r: u32, order: usize) -> Result<SeriesVec, RspinError> {
    let p = RspinParams::new(r)?;
    let unit = Rat::one() / &p.a_prod;
    let x = -Rat::one() / &p.a_prod;
    let coeffs = (0..=order)
        .map(|m| vec![Rat::from_integer(r_factorial(r as i64, m as u32)) * pow_i(&x, m as i64) * &unit])
        .collect();
    Ok(SeriesVec::new(1, coeffs)?)
}

/// The r-spin group element at t = 1: R = Id, T(z) = z(𝟙 − Υ(z)).
pub fn rspin_element(r: u32, order: usize) -> Result<GiventalElement, RspinError> {
    let p = RspinParams::new(r)?;
    let ups = upsilon_closed(r, order)?;
    let unit = Rat::one() / &p.a_prod;
    let mut t = SeriesVec::zero(1, order);
    for k in 0..order {
        let u = if k == 0 { unit.clone() } else { Rat::zero() };
        t.coeffs[k + 1] = vec![u - &ups.coeffs[k][0]];
    }
    Ok(GiventalElement::new(SeriesMat::identity(1, order), t)?)
}

/// c^{r,⋆}_{g,1+n}(∂_t^{⊗n}) through the group action at t = 1: the degree-m
/// part of (Id, T)·ω equals the t⁰ coefficient when (r−1)(2g−1+n) = rm.
pub fn crstar_via_action(r: u32, g: u32, n: u32, m: u32) -> Result<TautExpr, RspinError> {
    let p = RspinParams::new(r)?;
    let order = moduli_dim(g, n).max(0) as usize + 1;
    let elem = rspin_element(r, order)?;
    let s = act_on_tft(&elem, &p.shifted_spec(), g, n)?;
    let mu = vec![0usize; n as usize];
    Ok(s.get(0, &mu).map(|e| e.degree_part(m as i64)).unwrap_or_else(|| TautExpr::zero(g, n)))
}

#[derive(Clone, Debug)]
pub struct EqualityReport {
    pub r: u32,
    pub g: u32,
    pub n: u32,
    pub m: u32,
    /// P_m / ((−1)^g r^{g−m} c^{r,⋆}), read off a nonvanishing pairing.
    pub ratio: Option<Rat>,
}

/// Both sides of P_m = (−1)^g r^{g−m} c^{r,⋆}_{g,1+n} in an equality case,
/// each integrated against the first complementary monomial where they do
/// not vanish.
pub fn equality_report(r: u32, g: u32, n: u32, m: u32) -> Result<EqualityReport, RspinError> {
    let lhs = kappa_poly_to_expr(&p_polynomials(r as i64, m as usize).pop().expect("m ≥ 1"), g, n);
    let c = crstar_via_action(r, g, n, m)?;
    let sign = if g.is_multiple_of(2) { Rat::one() } else { -Rat::one() };
    let rhs = c.scale(&(sign * pow_i(&int(r as i64), g as i64 - m as i64)));
    let pl = pair_with_all(&lhs, m)?;
    let pr = pair_with_all(&rhs, m)?;
    let mut ratio = None;
    for ((_, a), (_, b)) in pl.iter().zip(&pr) {
        if !b.is_zero() {
            ratio = Some(a / b);
            break;
        }
    }
    Ok(EqualityReport { r, g, n, m, ratio })
}

/// Genus-0 equality cases with 1+n ≤ `max_points`.
pub fn equality_cases(r: u32, max_points: u32) -> Vec<(u32, u32, u32)> {
    let mut out = Vec::new();
    for n in 2..max_points {
        let top = (r as i64 - 1) * (n as i64 - 1);
        if top > 0 && top % r as i64 == 0 {
            let m = (top / r as i64) as u32;
            if m as i64 <= moduli_dim(0, n) {
                out.push((0, n, m));
            }
        }
    }
    out
}

pub fn is_positive(x: &Rat) -> bool {
    x.is_positive()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::rat;

    #[test]
    fn s_values() {
        for r in 2..6 {
            let s = s_coeffs(r, 3);
            assert_eq!(s[0], int(r - 1));
            assert_eq!(s[1], int((3 * r - 1) * (r - 1)) / int(2));
        }
        // r = 1: s_1 = 0 and then everything vanishes, so every P_m is 0.
        assert!(s_coeffs(1, 6).iter().all(|x| x.is_zero()));
        assert!(p_polynomials(1, 4).iter().all(|p| p.is_zero()));
    }

    #[test]
    fn factorial_series() {
        assert_eq!(r_factorial(3, 2), BigInt::from(10));
        for r in 2..=5 {
            assert!(factorial_series_check(r, 12));
        }
    }

    #[test]
    fn p_tilde_low_degrees() {
        let ring = Poly::kappa_ring(4);
        for r in [2i64, 3, 5, 7, 11] {
            let t = |s: String| Poly::parse(ring.clone(), &s).unwrap();
            let expect = [
                t("k1".into()),
                t(format!("{}*k2 - {}*k1^2", 3 * r - 1, r - 1)),
                t(format!(
                    "{}*k3 - {}*k2*k1 + {}*k1^3",
                    2 * (13 * r * r - 8 * r + 1),
                    3 * (3 * r * r - 4 * r + 1),
                    (r - 1) * (r - 1)
                )),
                t(format!(
                    "{}*k4 - {}*k3*k1 - {}*k2^2 + {}*k2*k1^2 - {}*k1^4",
                    6 * (71 * r * r * r - 61 * r * r + 15 * r - 1),
                    8 * (13 * r * r * r - 21 * r * r + 9 * r - 1),
                    3 * (3 * r - 1) * (3 * r - 1) * (r - 1),
                    6 * (3 * r - 1) * (r - 1) * (r - 1),
                    (r - 1) * (r - 1) * (r - 1)
                )),
            ];
            for (m, e) in expect.iter().enumerate() {
                let got = p_tilde(r, m + 1);
                let got = Poly { ring: ring.clone(), terms: got.terms.into_iter().map(|(mut k, c)| {
                    k.resize(4, 0);
                    (k, c)
                }).collect() };
                assert_eq!(&got, e, "r = {r}, m = {}", m + 1);
            }
        }
    }

    #[test]
    fn certificates() {
        let c = vanishing_certificate(2, 0, 4, 2, true).unwrap();
        assert_eq!(c.status, CertStatus::StrictVanishing);
        assert_eq!(c.verified, Some(true));
        let c = vanishing_certificate(2, 0, 4, 4, true).unwrap();
        assert!(c.trivial_by_dimension && c.verified == Some(true));
        let c = vanishing_certificate(2, 0, 6, 4, true).unwrap();
        assert_eq!(c.status, CertStatus::StrictVanishing);
        assert!(!c.trivial_by_dimension && c.verified == Some(true));
        assert_eq!(classify(2, 0, 5, 2), CertStatus::EqualityCase);
        assert_eq!(classify(3, 1, 2, 1), CertStatus::NotApplicable);
        assert!(vanishing_certificate(2, 0, 1, 1, true).is_err());
    }

    #[test]
    fn closed_instance_on_five_points() {
        // P_2^{(2)} = −½(5κ_2 − κ_1²) with ∫κ_2 = 1, ∫κ_1² = 5.
        let p = p_polynomials(2, 2).pop().unwrap();
        let e = kappa_poly_to_expr(&p, 0, 4);
        assert_eq!(crate::oracle0::integrate_tautexpr(&e).unwrap(), Rat::zero());
    }

    #[test]
    fn crstar_examples() {
        let (m, c) = crstar_class(2, 0, 3).unwrap().unwrap();
        assert_eq!(m, 1);
        let ring = Poly::kappa_ring(1);
        assert_eq!(c, Poly::parse(ring, "-1/2*k1").unwrap());
        assert!(crstar_class(3, 0, 3).unwrap().is_none());
        let p = RspinParams::new(3).unwrap();
        let (m, _) = crstar_class(3, 1, 2).unwrap().unwrap();
        assert_eq!(m, 2);
        let top = p.shifted_spec().evaluate(1, &[vec![Rat::one()]]).unwrap();
        assert_eq!(top[0], &p.a * &p.a_prod);
    }

    #[test]
    fn crstar_closed_form_matches_action() {
        for (r, n) in [(2u32, 3u32), (3, 4), (2, 5)] {
            let (m, class) = crstar_class(r, 0, n).unwrap().unwrap();
            let closed = kappa_poly_to_expr(&class, 0, n);
            let acted = crstar_via_action(r, 0, n, m).unwrap();
            let a = pair_with_all(&closed, m).unwrap();
            let b = pair_with_all(&acted, m).unwrap();
            assert_eq!(a, b, "r={r} n={n}");
        }
    }

    #[test]
    fn crstar_integrals() {
        assert_eq!(crstar_genus0_integral(2).unwrap(), rat(-1, 2));
        assert_eq!(crstar_genus0_integral(3).unwrap(), rat(2, 9));
        for r in 2..=6 {
            let v = crstar_genus0_integral(r).unwrap();
            assert_eq!(v, crstar_genus0_from_gluing(r).unwrap());
            assert_eq!(v, crstar_genus0_from_class(r).unwrap());
        }
    }

    #[test]
    fn params() {
        let p = RspinParams::new(3).unwrap();
        assert_eq!(p.a_prod, rat(1, 9));
        assert_eq!(p.a, rat(-1, 3));
        assert_eq!(p.a, -int(3) * &p.a_prod);
        assert_eq!(p.delta, rat(4, 3));
        assert!(RspinParams::new(1).is_err());
    }
}
