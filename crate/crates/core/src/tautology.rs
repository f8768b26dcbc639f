//! Tautological expressions supported on compact type: rational combinations
//! of decorated stable trees, each standing for gl_{Γ*} of a vertexwise
//! ψ/κ monomial (no automorphism division; 1/#Aut lives in the coefficient).

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use serde_json::{json, Value};
use thiserror::Error;

use crate::algebra::{int, parse_rat, Rat};
use crate::trees::{is_stable, moduli_dim, Node, StableTree, TreeError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TautError {
    #[error("term of type ({0}, 1+{1}) in expression of type ({2}, 1+{3})")]
    MixedType(u32, u32, u32, u32),
    #[error("malformed expression: {0}")]
    Malformed(String),
    #[error("can only forget the last marked point {expected}, got {got}")]
    ForgetLabel { expected: u32, got: u32 },
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// ψ/κ monomial on M̄_{g,1+n}. `psi[i]` is the exponent at point `i+1`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct AmbientMonomial {
    pub psi: Vec<u32>,
    /// `(m, exponent)`, `m ≥ 1`, sorted, positive exponents.
    pub kappa: Vec<(u32, u32)>,
}

impl AmbientMonomial {
    pub fn new(psi: Vec<u32>, kappa: &[(u32, u32)]) -> Self {
        let mut k: BTreeMap<u32, u32> = BTreeMap::new();
        for &(m, e) in kappa {
            if e > 0 {
                *k.entry(m).or_insert(0) += e;
            }
        }
        AmbientMonomial { psi, kappa: k.into_iter().collect() }
    }

    /// Build from a κ-index multiset, e.g. `[1, 1, 2]` = κ_1²κ_2.
    pub fn from_kappa_list(psi: Vec<u32>, kappas: &[u32]) -> Self {
        let pairs: Vec<(u32, u32)> = kappas.iter().map(|&m| (m, 1)).collect();
        AmbientMonomial::new(psi, &pairs)
    }

    pub fn one(points: usize) -> Self {
        AmbientMonomial { psi: vec![0; points], kappa: vec![] }
    }

    pub fn degree(&self) -> u32 {
        self.psi.iter().sum::<u32>() + self.kappa.iter().map(|(m, e)| m * e).sum::<u32>()
    }

    pub fn kappa_list(&self) -> Vec<u32> {
        self.kappa.iter().flat_map(|&(m, e)| std::iter::repeat_n(m, e as usize)).collect()
    }

    pub fn mul(&self, o: &AmbientMonomial) -> AmbientMonomial {
        assert_eq!(self.psi.len(), o.psi.len());
        let psi = self.psi.iter().zip(&o.psi).map(|(a, b)| a + b).collect();
        let mut k = self.kappa.clone();
        k.extend(o.kappa.iter().copied());
        AmbientMonomial::new(psi, &k)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TautExpr {
    pub g: u32,
    pub n: u32,
    pub terms: BTreeMap<Node, Rat>,
}

impl TautExpr {
    pub fn zero(g: u32, n: u32) -> Self {
        TautExpr { g, n, terms: BTreeMap::new() }
    }

    /// The fundamental class, as the undecorated one-vertex tree.
    pub fn one(g: u32, n: u32) -> Self {
        let mut e = TautExpr::zero(g, n);
        e.add_term(one_vertex(g, n), Rat::one());
        e
    }

    pub fn dim(&self) -> i64 {
        moduli_dim(self.g, self.n)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Add `c` times the decorated tree, canonicalizing it and discarding it
    /// when some vertex carries more degree than its own dimension.
    pub fn add_term(&mut self, node: Node, c: Rat) {
        if c.is_zero() || !node.within_vertex_dims() {
            return;
        }
        let node = node.canonical();
        let drop = {
            let e = self.terms.entry(node.clone()).or_insert_with(Rat::zero);
            *e += c;
            e.is_zero()
        };
        if drop {
            self.terms.remove(&node);
        }
    }

    pub fn add(&self, o: &TautExpr) -> Result<TautExpr, TautError> {
        self.check(o)?;
        let mut out = self.clone();
        for (k, c) in &o.terms {
            out.add_term(k.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn add_assign(&mut self, o: &TautExpr) {
        assert_eq!((self.g, self.n), (o.g, o.n), "type mismatch");
        for (k, c) in &o.terms {
            self.add_term(k.clone(), c.clone());
        }
    }

    pub fn add_scaled(&mut self, o: &TautExpr, s: &Rat) {
        assert_eq!((self.g, self.n), (o.g, o.n), "type mismatch");
        if s.is_zero() {
            return;
        }
        for (k, c) in &o.terms {
            self.add_term(k.clone(), c * s);
        }
    }

    pub fn sub(&self, o: &TautExpr) -> Result<TautExpr, TautError> {
        self.add(&o.scale(&-Rat::one()))
    }

    pub fn scale(&self, s: &Rat) -> TautExpr {
        let mut out = TautExpr::zero(self.g, self.n);
        if !s.is_zero() {
            out.terms = self.terms.iter().map(|(k, c)| (k.clone(), c * s)).collect();
        }
        out
    }

    /// Terms of a given total complex degree.
    pub fn degree_part(&self, d: i64) -> TautExpr {
        let mut out = TautExpr::zero(self.g, self.n);
        out.terms = self.terms.iter().filter(|(k, _)| k.degree() == d).map(|(k, c)| (k.clone(), c.clone())).collect();
        out
    }

    /// Only the one-vertex (smooth-locus) terms.
    pub fn smooth_part(&self) -> TautExpr {
        let mut out = TautExpr::zero(self.g, self.n);
        out.terms =
            self.terms.iter().filter(|(k, _)| k.children.is_empty()).map(|(k, c)| (k.clone(), c.clone())).collect();
        out
    }

    fn check(&self, o: &TautExpr) -> Result<(), TautError> {
        if (self.g, self.n) != (o.g, o.n) {
            Err(TautError::MixedType(o.g, o.n, self.g, self.n))
        } else {
            Ok(())
        }
    }
}

pub fn one_vertex(g: u32, n: u32) -> Node {
    let leaves: Vec<u32> = (2..2 + n).collect();
    Node::vertex(g, &leaves)
}

/// Re-canonicalize every key, merge orbits, apply the dimension cutoff and
/// drop zero coefficients. Fails when a term does not have type (g, 1+n).
pub fn normalize(e: &TautExpr) -> Result<TautExpr, TautError> {
    let labels: Vec<u32> = (2..2 + e.n).collect();
    let mut out = TautExpr::zero(e.g, e.n);
    for (k, c) in &e.terms {
        let got: Vec<u32> = k.leaf_labels().into_iter().collect();
        if k.genus() != e.g || got != labels {
            return Err(TautError::MixedType(k.genus(), got.len() as u32, e.g, e.n));
        }
        if k.degree() > e.dim() {
            continue;
        }
        out.add_term(k.clone(), c.clone());
    }
    Ok(out)
}

/// Address of a vertex: child indices from the root.
type Path = Vec<usize>;

pub(crate) fn vertex_paths(node: &Node) -> Vec<Path> {
    fn rec(n: &Node, p: &mut Path, out: &mut Vec<Path>) {
        out.push(p.clone());
        for (i, (_, c)) in n.children.iter().enumerate() {
            p.push(i);
            rec(c, p, out);
            p.pop();
        }
    }
    let mut out = Vec::new();
    rec(node, &mut Vec::new(), &mut out);
    out
}

pub(crate) fn vertex_mut<'a>(node: &'a mut Node, path: &[usize]) -> &'a mut Node {
    let mut cur = node;
    for &i in path {
        cur = &mut cur.children[i].1;
    }
    cur
}

fn multinomial(parts: &[u32]) -> Rat {
    use crate::algebra::factorial;
    let total: u32 = parts.iter().sum();
    let mut r = Rat::from_integer(factorial(total));
    for &p in parts {
        r /= Rat::from_integer(factorial(p));
    }
    r
}

/// Compositions of `total` into `k` non-negative parts.
pub(crate) fn compositions(total: u32, k: usize) -> Vec<Vec<u32>> {
    if k == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    if k == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Pull an ambient monomial back along the gluing map of `tree` and multiply
/// it into the tree's existing decoration. ψ_1 lands on the root leg, ψ_i on
/// leaf i, and each κ_m splits as a sum over vertices.
pub fn restrict_monomial_to_tree(m: &AmbientMonomial, tree: &Node) -> Vec<(Node, Rat)> {
    let mut base = tree.clone();
    if let Some(&p1) = m.psi.first() {
        base.psi_out += p1;
    }
    add_leaf_psi(&mut base, &m.psi);
    let paths = vertex_paths(&base);
    let mut acc: Vec<(Node, Rat)> = vec![(base, Rat::one())];
    for &(km, ke) in &m.kappa {
        let mut next = Vec::new();
        for (node, c) in &acc {
            for comp in compositions(ke, paths.len()) {
                let mut nn = node.clone();
                for (p, &e) in paths.iter().zip(&comp) {
                    vertex_mut(&mut nn, p).add_kappa(km, e);
                }
                next.push((nn, c * multinomial(&comp)));
            }
        }
        acc = next;
    }
    let mut merged: BTreeMap<Node, Rat> = BTreeMap::new();
    for (n, c) in acc {
        *merged.entry(n.canonical()).or_insert_with(Rat::zero) += c;
    }
    merged.into_iter().filter(|(_, c)| !c.is_zero()).collect()
}

fn add_leaf_psi(node: &mut Node, psi: &[u32]) {
    for (l, e) in node.leaves.iter_mut() {
        if let Some(&x) = psi.get(*l as usize - 1) {
            *e += x;
        }
    }
    for (_, c) in node.children.iter_mut() {
        add_leaf_psi(c, psi);
    }
}

/// Projection formula: multiply every term by `m` restricted to its tree.
pub fn mul_monomial(e: &TautExpr, m: &AmbientMonomial) -> TautExpr {
    let mut out = TautExpr::zero(e.g, e.n);
    let dim = e.dim();
    for (node, c) in &e.terms {
        if node.degree() + m.degree() as i64 > dim {
            continue;
        }
        for (nn, cc) in restrict_monomial_to_tree(m, node) {
            out.add_term(nn, c * cc);
        }
    }
    out
}

/// Pushforward along the map forgetting the last of `a.len() + 1` points.
///
/// `a` are ψ-exponents at the kept points, `b` at the forgotten one, `kappas`
/// a κ-index multiset. Output monomials are `(ψ-exponents, κ multiset)`.
/// `kappa0` is κ_0 on the target.
pub fn forget_point_raw(a: &[u32], b: u32, kappas: &[u32], kappa0: &Rat) -> Vec<(Vec<u32>, Vec<u32>, Rat)> {
    let mut out = Vec::new();
    let k = kappas.len();
    for mask in 0u32..(1 << k) {
        let moved: u32 = (0..k).filter(|i| mask >> i & 1 == 1).map(|i| kappas[i]).sum();
        let big_b = b + moved;
        if big_b == 0 {
            continue;
        }
        let mut kept: Vec<u32> = (0..k).filter(|i| mask >> i & 1 == 0).map(|i| kappas[i]).collect();
        let c = if big_b == 1 {
            kappa0.clone()
        } else {
            kept.push(big_b - 1);
            Rat::one()
        };
        if c.is_zero() {
            continue;
        }
        kept.sort();
        out.push((a.to_vec(), kept, c));
    }
    if b == 0 {
        for i in 0..a.len() {
            if a[i] >= 1 {
                let mut aa = a.to_vec();
                aa[i] -= 1;
                let mut kk = kappas.to_vec();
                kk.sort();
                out.push((aa, kk, Rat::one()));
            }
        }
    }
    out
}

/// f_* of a monomial on M̄_{g,1+n+1} forgetting the last point, as a list of
/// monomials on M̄_{g,1+n}.
pub fn forget_point(g: u32, m: &AmbientMonomial) -> Vec<(AmbientMonomial, Rat)> {
    let pts = m.psi.len();
    assert!(pts >= 2, "need a point to forget");
    let kappa0 = int(2 * g as i64 - 2 + (pts - 1) as i64);
    let mut merged: BTreeMap<AmbientMonomial, Rat> = BTreeMap::new();
    for (a, ks, c) in forget_point_raw(&m.psi[..pts - 1], m.psi[pts - 1], &m.kappa_list(), &kappa0) {
        *merged.entry(AmbientMonomial::from_kappa_list(a, &ks)).or_insert_with(Rat::zero) += c;
    }
    merged.into_iter().filter(|(_, c)| !c.is_zero()).collect()
}

/// Push an expression on M̄_{g,1+n} forward along the map forgetting the
/// last point `1+n`, vertex by vertex. A genus-0 vertex left with two legs
/// is contracted.
pub fn forget_leaf(e: &TautExpr, label: u32) -> Result<TautExpr, TautError> {
    if label != 1 + e.n || e.n == 0 {
        return Err(TautError::ForgetLabel { expected: 1 + e.n, got: label });
    }
    if !is_stable(e.g, e.n - 1) {
        return Err(TreeError::Unstable { g: e.g, n: e.n - 1 }.into());
    }
    let mut out = TautExpr::zero(e.g, e.n - 1);
    for (node, c) in &e.terms {
        for (r, cc) in forget_in_node_sub(node, label) {
            match r {
                Replaced::Node(nn) => out.add_term(nn, c * cc),
                Replaced::Leaf(_) => unreachable!("stable target"),
            }
        }
    }
    Ok(out)
}

/// Result of forgetting inside a subtree: either a new subtree or, when the
/// subtree root got contracted onto a single leaf, that leaf label.
enum Replaced {
    Node(Node),
    Leaf(u32),
}

fn forget_at_vertex_sub(node: &Node, leaf_pos: usize) -> Vec<(Replaced, Rat)> {
    let mut rest = node.clone();
    let (_, b) = rest.leaves.remove(leaf_pos);
    if !is_stable(node.g, node.n_in() - 1) {
        // Genus 0 with legs {out, forgotten, other}: the vertex is a point,
        // so any decoration there already vanished; contract it.
        if node.vertex_degree() > 0 {
            return vec![];
        }
        if let Some((l, _)) = rest.leaves.first() {
            return vec![(Replaced::Leaf(*l), Rat::one())];
        }
        // The child keeps its outgoing ψ; the caller re-attaches it with the
        // parent-side exponent that pointed at this vertex.
        let (_, child) = rest.children.remove(0);
        return vec![(Replaced::Node(child), Rat::one())];
    }
    // Local points: out, leaves (without the forgotten one), children.
    let mut a: Vec<u32> = vec![rest.psi_out];
    a.extend(rest.leaves.iter().map(|l| l.1));
    a.extend(rest.children.iter().map(|c| c.0));
    let kappas: Vec<u32> = rest.kappa.iter().flat_map(|&(m, e)| std::iter::repeat_n(m, e as usize)).collect();
    let kappa0 = int(2 * node.g as i64 - 2 + 1 + (node.n_in() - 1) as i64);
    let nl = rest.leaves.len();
    let mut out = Vec::new();
    for (aa, ks, c) in forget_point_raw(&a, b, &kappas, &kappa0) {
        let mut nn = rest.clone();
        nn.psi_out = aa[0];
        for (i, l) in nn.leaves.iter_mut().enumerate() {
            l.1 = aa[1 + i];
        }
        for (i, ch) in nn.children.iter_mut().enumerate() {
            ch.0 = aa[1 + nl + i];
        }
        nn.kappa.clear();
        for m in ks {
            nn.add_kappa(m, 1);
        }
        out.push((Replaced::Node(nn.canonical()), c));
    }
    out
}

fn forget_in_node_sub(node: &Node, label: u32) -> Vec<(Replaced, Rat)> {
    if let Some(pos) = node.leaves.iter().position(|l| l.0 == label) {
        return forget_at_vertex_sub(node, pos);
    }
    let i = node
        .children
        .iter()
        .position(|(_, c)| c.leaf_labels().contains(&label))
        .expect("leaf present in subtree");
    let psi_in = node.children[i].0;
    let mut out = Vec::new();
    for (sub, cc) in forget_in_node_sub(&node.children[i].1, label) {
        let mut nn = node.clone();
        match sub {
            Replaced::Node(s) => nn.children[i] = (psi_in, s),
            Replaced::Leaf(l) => {
                nn.children.remove(i);
                nn.leaves.push((l, psi_in));
            }
        }
        out.push((Replaced::Node(nn.canonical()), cc));
    }
    out
}

/// Preorder flattening that keeps the decorated node's child order, so vertex
/// ids line up with the decoration record.
fn flatten(node: &Node) -> (StableTree, Value) {
    fn walk(n: &Node, parent: Option<usize>, t: &mut StableTree, kappa: &mut Vec<Value>, psi: &mut BTreeMap<String, u32>) {
        let id = t.genera.len();
        t.genera.push(n.g);
        match parent {
            Some(p) => {
                t.edges.push((id, p));
                if n.psi_out > 0 {
                    psi.insert(format!("E{id}c"), n.psi_out);
                }
            }
            None => {
                if n.psi_out > 0 {
                    psi.insert("L1".into(), n.psi_out);
                }
            }
        }
        for &(m, e) in &n.kappa {
            kappa.push(json!([id, m, e]));
        }
        for &(l, e) in &n.leaves {
            t.leaves.insert(l, id);
            if e > 0 {
                psi.insert(format!("L{l}"), e);
            }
        }
        for (pin, c) in &n.children {
            let cid = t.genera.len();
            if *pin > 0 {
                psi.insert(format!("E{cid}p"), *pin);
            }
            walk(c, Some(id), t, kappa, psi);
        }
    }
    let mut t = StableTree { genera: vec![], root: 0, edges: vec![], leaves: BTreeMap::new() };
    let mut kappa = Vec::new();
    let mut psi = BTreeMap::new();
    walk(node, None, &mut t, &mut kappa, &mut psi);
    (t, json!({"kappa": kappa, "psi": psi}))
}

fn unflatten(t: &StableTree, dec: &Value) -> Result<Node, TautError> {
    let bad = |s: String| TautError::Malformed(s);
    let nv = t.genera.len();
    let mut kappa: Vec<Vec<(u32, u32)>> = vec![vec![]; nv];
    if let Some(ks) = dec.get("kappa") {
        for k in ks.as_array().ok_or_else(|| bad("kappa must be a list".into()))? {
            let f = |i: usize| k.get(i).and_then(Value::as_u64).ok_or_else(|| bad(format!("bad kappa entry {k}")));
            let (v, m, e) = (f(0)? as usize, f(1)? as u32, f(2)? as u32);
            if v >= nv || m == 0 {
                return Err(bad(format!("bad kappa entry {k}")));
            }
            kappa[v].push((m, e));
        }
    }
    let mut psi_out = vec![0u32; nv];
    let mut psi_in = vec![0u32; nv];
    let mut leaf_psi: BTreeMap<u32, u32> = BTreeMap::new();
    if let Some(ps) = dec.get("psi") {
        for (leg, e) in ps.as_object().ok_or_else(|| bad("psi must be an object".into()))? {
            let e = e.as_u64().ok_or_else(|| bad(format!("bad exponent for {leg}")))? as u32;
            if let Some(l) = leg.strip_prefix('L') {
                let l: u32 = l.parse().map_err(|_| bad(format!("bad leg {leg}")))?;
                if l == 1 {
                    psi_out[t.root] = e;
                } else if t.leaves.contains_key(&l) {
                    leaf_psi.insert(l, e);
                } else {
                    return Err(bad(format!("unknown leaf {leg}")));
                }
            } else if let Some(rest) = leg.strip_prefix('E') {
                let (id, side) = rest.split_at(rest.len().saturating_sub(1));
                let id: usize = id.parse().map_err(|_| bad(format!("bad leg {leg}")))?;
                if !t.edges.iter().any(|e| e.0 == id) {
                    return Err(bad(format!("unknown edge {leg}")));
                }
                match side {
                    "c" => psi_out[id] = e,
                    "p" => psi_in[id] = e,
                    _ => return Err(bad(format!("bad leg {leg}"))),
                }
            } else {
                return Err(bad(format!("bad leg {leg}")));
            }
        }
    }
    fn build(
        t: &StableTree,
        v: usize,
        kappa: &[Vec<(u32, u32)>],
        psi_out: &[u32],
        psi_in: &[u32],
        leaf_psi: &BTreeMap<u32, u32>,
    ) -> Node {
        let leaves = t
            .leaves
            .iter()
            .filter(|(_, &w)| w == v)
            .map(|(&l, _)| (l, leaf_psi.get(&l).copied().unwrap_or(0)))
            .collect();
        let children = t
            .edges
            .iter()
            .filter(|e| e.1 == v)
            .map(|e| (psi_in[e.0], build(t, e.0, kappa, psi_out, psi_in, leaf_psi)))
            .collect();
        let mut n = Node { g: t.genera[v], psi_out: psi_out[v], kappa: vec![], leaves, children };
        for &(m, e) in &kappa[v] {
            n.add_kappa(m, e);
        }
        n
    }
    Ok(build(t, t.root, &kappa, &psi_out, &psi_in, &leaf_psi).canonical())
}

impl TautExpr {
    /// One JSON object per line in canonical order; `"0"` for the empty expression.
    pub fn to_text(&self) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut s = String::new();
        for (node, c) in &self.terms {
            let (t, dec) = flatten(node);
            let line = json!({"g": self.g, "n": self.n, "tree": t.to_json(), "dec": dec, "coeff": c.to_string()});
            s.push_str(&line.to_string());
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str, g: u32, n: u32) -> Result<TautExpr, TautError> {
        let mut out = TautExpr::zero(g, n);
        let t = text.trim();
        if t == "0" || t.is_empty() {
            return Ok(out);
        }
        let mut raw = TautExpr::zero(g, n);
        for line in t.lines().filter(|l| !l.trim().is_empty()) {
            let v: Value = serde_json::from_str(line).map_err(|e| TautError::Malformed(e.to_string()))?;
            let lg = v.get("g").and_then(Value::as_u64).map(|x| x as u32);
            let ln = v.get("n").and_then(Value::as_u64).map(|x| x as u32);
            if lg != Some(g) || ln != Some(n) {
                return Err(TautError::Malformed(format!("line type {lg:?},{ln:?} differs from ({g},{n})")));
            }
            let tree = StableTree::from_json(v.get("tree").ok_or_else(|| TautError::Malformed("missing tree".into()))?)?;
            let node = unflatten(&tree, v.get("dec").unwrap_or(&Value::Null))?;
            let c = v
                .get("coeff")
                .and_then(Value::as_str)
                .ok_or_else(|| TautError::Malformed("missing coeff".into()))
                .and_then(|s| parse_rat(s).map_err(|e| TautError::Malformed(e.to_string())))?;
            raw.terms.insert(node, c);
        }
        out.add_assign(&normalize(&raw)?);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::rat;
    use crate::trees::enumerate_nodes;

    #[test]
    fn psi_squared_on_zero_three_is_cut() {
        let mut root = one_vertex(0, 3);
        root.psi_out = 2;
        let mut e = TautExpr::zero(0, 3);
        e.terms.insert(root, Rat::one());
        assert!(normalize(&e).unwrap().is_zero());
    }

    #[test]
    fn forget_examples() {
        // ψ̃_2 on M̄_{1,1+1} pushes to κ_0 = 1.
        let r = forget_point(1, &AmbientMonomial::new(vec![0, 1], &[]));
        assert_eq!(r, vec![(AmbientMonomial::one(1), Rat::one())]);
        // ψ̃_3 on M̄_{g,1+2} pushes to 2g.
        for g in 0..4 {
            let r = forget_point(g, &AmbientMonomial::new(vec![0, 0, 1], &[]));
            let expected: Vec<_> = if g == 0 { vec![] } else { vec![(AmbientMonomial::one(2), int(2 * g as i64))] };
            assert_eq!(r, expected);
        }
        // ψ̃_1 pushes to 1.
        let r = forget_point(2, &AmbientMonomial::new(vec![1, 0, 0], &[]));
        assert_eq!(r, vec![(AmbientMonomial::one(2), Rat::one())]);
    }

    #[test]
    fn kappa_restricts_to_vertex_sum() {
        let t = &enumerate_nodes(1, 1).unwrap()[1];
        let m = AmbientMonomial::new(vec![0, 0], &[(1, 1)]);
        let r = restrict_monomial_to_tree(&m, t);
        assert_eq!(r.len(), 2);
        assert!(r.iter().all(|(_, c)| c.is_one()));
        let sq = restrict_monomial_to_tree(&AmbientMonomial::new(vec![0, 0], &[(1, 2)]), t);
        let coeffs: Vec<Rat> = sq.iter().map(|x| x.1.clone()).collect();
        assert_eq!(coeffs.iter().filter(|c| **c == int(2)).count(), 1);
        assert_eq!(coeffs.len(), 3);
    }

    #[test]
    fn text_round_trip_and_zero() {
        assert_eq!(TautExpr::zero(0, 3).to_text(), "0");
        assert!(TautExpr::from_text("0", 0, 3).unwrap().is_zero());
        let mut e = TautExpr::zero(1, 2);
        for (i, t) in enumerate_nodes(1, 2).unwrap().into_iter().enumerate() {
            let m = AmbientMonomial::new(vec![1, 0, (i % 2) as u32], &[]);
            for (n, c) in restrict_monomial_to_tree(&m, &t) {
                e.add_term(n, c * rat(i as i64 + 1, 3));
            }
        }
        let text = e.to_text();
        let back = TautExpr::from_text(&text, 1, 2).unwrap();
        assert_eq!(back, e);
        assert_eq!(back.to_text(), text);
    }
}
