//! Genus-0 intersection numbers of ψ/κ monomials, integration of decorated
//! trees with genus-0 vertices, and the classes θ_{2k}.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use num_traits::{One, Zero};
use thiserror::Error;

use crate::algebra::{factorial, Rat};
use crate::tautology::{TautExpr, AmbientMonomial};
use crate::trees::{enumerate_nodes_bounded, Node, TreeError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("vertex of genus {0} cannot be integrated by the genus-0 oracle")]
    PositiveGenus(u32),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// ∫_{M̄_{0,n}} Π ψ_i^{a_i} with n = `a.len()`.
pub fn psi_integral(a: &[u32]) -> Rat {
    let n = a.len() as i64;
    if n < 3 || a.iter().map(|&x| x as i64).sum::<i64>() != n - 3 {
        return Rat::zero();
    }
    let mut r = Rat::from_integer(factorial((n - 3) as u32));
    for &x in a {
        r /= Rat::from_integer(factorial(x));
    }
    r
}

/// Memo key: ψ-exponents and κ-indices, both sorted descending.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IntegralKey {
    pub a: Vec<u32>,
    pub kappa: Vec<u32>,
}

impl IntegralKey {
    pub fn new(a: &[u32], kappa: &[u32]) -> Self {
        let mut a = a.to_vec();
        a.sort_unstable_by(|x, y| y.cmp(x));
        let mut kappa: Vec<u32> = kappa.to_vec();
        kappa.sort_unstable_by(|x, y| y.cmp(x));
        IntegralKey { a, kappa }
    }
}

fn memo() -> &'static Mutex<HashMap<IntegralKey, Rat>> {
    static M: OnceLock<Mutex<HashMap<IntegralKey, Rat>>> = OnceLock::new();
    M.get_or_init(|| Mutex::new(HashMap::new()))
}

/// ∫_{M̄_{0,n}} Π ψ_i^{a_i} · Π κ_{c_j}, with n = `a.len()` and κ_0 read as
/// the scalar n − 2.
pub fn kappa_psi_integral(a: &[u32], kappa: &[u32]) -> Rat {
    let n = a.len() as i64;
    let mut scalar = Rat::one();
    let mut ks: Vec<u32> = Vec::with_capacity(kappa.len());
    for &c in kappa {
        if c == 0 {
            scalar *= Rat::from_integer((n - 2).into());
        } else {
            ks.push(c);
        }
    }
    let deg: i64 = a.iter().map(|&x| x as i64).sum::<i64>() + ks.iter().map(|&x| x as i64).sum::<i64>();
    if n < 3 || deg != n - 3 || scalar.is_zero() {
        return Rat::zero();
    }
    scalar * integral_key(IntegralKey::new(a, &ks))
}

fn integral_key(key: IntegralKey) -> Rat {
    if key.kappa.is_empty() {
        return psi_integral(&key.a);
    }
    if let Some(v) = memo().lock().unwrap().get(&key) {
        return v.clone();
    }
    // Eliminate the largest κ index: κ_b = f_*(ψ_{n+1}^{b+1}) and
    // f^*κ_c = κ_c − ψ_{n+1}^c.
    let b = key.kappa[0];
    let rest = &key.kappa[1..];
    let mut total = Rat::zero();
    for mask in 0u32..(1 << rest.len()) {
        let moved: u32 = (0..rest.len()).filter(|i| mask >> i & 1 == 1).map(|i| rest[i]).sum();
        let kept: Vec<u32> = (0..rest.len()).filter(|i| mask >> i & 1 == 0).map(|i| rest[i]).collect();
        let mut a = key.a.clone();
        a.push(b + 1 + moved);
        let v = integral_key(IntegralKey::new(&a, &kept));
        if mask.count_ones() % 2 == 1 {
            total -= v;
        } else {
            total += v;
        }
    }
    memo().lock().unwrap().insert(key, total.clone());
    total
}

/// Integral of the vertex monomial of a single tree vertex.
fn vertex_integral(v: &Node) -> Rat {
    let mut a = vec![v.psi_out];
    a.extend(v.leaves.iter().map(|l| l.1));
    a.extend(v.children.iter().map(|c| c.0));
    let kappas: Vec<u32> = v.kappa.iter().flat_map(|&(m, e)| std::iter::repeat_n(m, e as usize)).collect();
    kappa_psi_integral(&a, &kappas)
}

fn node_integral(n: &Node) -> Rat {
    let mut r = vertex_integral(n);
    for (_, c) in &n.children {
        if r.is_zero() {
            break;
        }
        r *= node_integral(c);
    }
    r
}

/// Σ coeff · Π_v ∫ (vertex monomial); every vertex must have genus 0.
pub fn integrate_tautexpr(e: &TautExpr) -> Result<Rat, OracleError> {
    let mut total = Rat::zero();
    for (node, c) in &e.terms {
        if !node.all_genus_zero() {
            return Err(OracleError::PositiveGenus(max_genus(node)));
        }
        if node.degree() != e.dim() {
            continue;
        }
        total += c * node_integral(node);
    }
    Ok(total)
}

fn max_genus(n: &Node) -> u32 {
    n.children.iter().map(|c| max_genus(&c.1)).fold(n.g, u32::max)
}

/// θ_{2k} on M̄_{g,1+n}: κ_{2k} + ψ_1^{2k} − Σ_{i≥2} ψ_i^{2k} plus, on every
/// one-edge tree, Σ_{m+m′=2k−1} (−1)^{m′} ψ^m ψ′^{m′} with ψ on the side of
/// the vertex carrying point 1.
pub fn theta_class_typed(k: u32, g: u32, n: u32) -> Result<TautExpr, OracleError> {
    let trees = enumerate_nodes_bounded(g, n, 1)?;
    let two_k = 2 * k;
    let mut e = TautExpr::zero(g, n);
    let mut base = trees[0].clone();
    base.add_kappa(two_k, 1);
    e.add_term(base, Rat::one());
    let mut pts = vec![0u32; 1 + n as usize];
    pts[0] = two_k;
    e = e.add(&crate::tautology::mul_monomial(&TautExpr::one(g, n), &AmbientMonomial::new(pts, &[]))).unwrap();
    for i in 2..=1 + n {
        let mut pts = vec![0u32; 1 + n as usize];
        pts[i as usize - 1] = two_k;
        let t = crate::tautology::mul_monomial(&TautExpr::one(g, n), &AmbientMonomial::new(pts, &[]));
        e = e.sub(&t).unwrap();
    }
    for t in trees.iter().filter(|t| t.n_edges() == 1) {
        for m in 0..two_k {
            let mp = two_k - 1 - m;
            let mut d = t.clone();
            d.children[0].0 = m;
            d.children[0].1.psi_out = mp;
            let sign = if mp.is_multiple_of(2) { Rat::one() } else { -Rat::one() };
            e.add_term(d, sign);
        }
    }
    Ok(e)
}

/// θ_{2k} on M̄_{0,n} with `n_points` marked points in total.
pub fn theta_class(k: u32, n_points: u32) -> Result<TautExpr, OracleError> {
    if n_points < 3 {
        return Err(TreeError::Unstable { g: 0, n: n_points.saturating_sub(1) }.into());
    }
    theta_class_typed(k, 0, n_points - 1)
}

/// All ψκ-monomials of exact degree `d` on a space with `points` marked points.
pub fn monomials_of_degree(points: usize, d: u32) -> Vec<AmbientMonomial> {
    let mut out = Vec::new();
    for kd in 0..=d {
        for kap in integer_partitions(kd) {
            for psi in crate::tautology::compositions(d - kd, points) {
                out.push(AmbientMonomial::from_kappa_list(psi, &kap));
            }
        }
    }
    out
}

fn integer_partitions(n: u32) -> Vec<Vec<u32>> {
    fn rec(n: u32, max: u32) -> Vec<Vec<u32>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for f in (1..=max.min(n)).rev() {
            for mut r in rec(n - f, f) {
                r.insert(0, f);
                out.push(r);
            }
        }
        out
    }
    rec(n, n)
}

/// Pair `e` against every complementary-degree monomial; returns the
/// monomials together with their integrals.
pub fn pair_with_all(e: &TautExpr, class_degree: u32) -> Result<Vec<(AmbientMonomial, Rat)>, OracleError> {
    let dim = e.dim();
    if (class_degree as i64) > dim {
        return Ok(vec![]);
    }
    let comp = (dim - class_degree as i64) as u32;
    let mut out = Vec::new();
    for m in monomials_of_degree(1 + e.n as usize, comp) {
        let v = integrate_tautexpr(&crate::tautology::mul_monomial(e, &m))?;
        out.push((m, v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::int;
    use crate::trees::enumerate_nodes;

    #[test]
    fn psi_values() {
        assert_eq!(psi_integral(&[1, 0, 0, 0]), int(1));
        assert_eq!(psi_integral(&[1, 1, 0, 0, 0]), int(2));
        assert_eq!(psi_integral(&[2, 1, 0, 0, 0]), int(0));
    }

    #[test]
    fn kappa_values() {
        assert_eq!(kappa_psi_integral(&[0; 4], &[1]), int(1));
        assert_eq!(kappa_psi_integral(&[0; 5], &[2]), int(1));
        assert_eq!(kappa_psi_integral(&[0; 5], &[1, 1]), int(5));
    }

    #[test]
    fn theta_two_has_degree_two() {
        let t = theta_class(1, 6).unwrap();
        assert!(t.terms.keys().all(|k| k.degree() == 2));
    }

    #[test]
    fn simple_tree_integrals() {
        assert_eq!(integrate_tautexpr(&TautExpr::one(0, 2)).unwrap(), int(1));
        let t = enumerate_nodes(0, 3).unwrap().into_iter().find(|t| t.n_edges() == 1).unwrap();
        let mut e = TautExpr::zero(0, 3);
        e.add_term(t, Rat::one());
        assert_eq!(integrate_tautexpr(&e).unwrap(), int(1));
    }
}
