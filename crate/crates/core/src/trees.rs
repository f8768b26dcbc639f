//! Stable trees of type (g, 1+n): enumeration, canonical forms,
//! automorphisms and root types.
//!
//! A tree is stored recursively from the root vertex. Every vertex has one
//! outgoing leg (leaf 1 at the root, the parent edge elsewhere) and a set of
//! ingoing legs (labelled leaves and child edges). The same [`Node`] type
//! carries ψ/κ decorations for tautological classes; an undecorated tree is a
//! `Node` with all exponents zero.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("unstable type (g, 1+n) = ({g}, 1+{n})")]
    Unstable { g: u32, n: u32 },
    #[error("invalid tree: {0}")]
    Invalid(String),
}

pub fn is_stable(g: u32, n: u32) -> bool {
    2 * g + n > 1
}

/// Complex dimension of M̄_{g,1+n}.
pub fn moduli_dim(g: u32, n: u32) -> i64 {
    3 * g as i64 - 2 + n as i64
}

/// A vertex together with the subtree hanging below it.
///
/// `children` holds `(ψ exponent on this vertex's side of the edge, child)`.
/// The child's own `psi_out` is the exponent on the other side of that edge.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Node {
    pub g: u32,
    pub psi_out: u32,
    /// `(m, exponent)` sorted by `m`, all exponents positive, `m ≥ 1`.
    pub kappa: Vec<(u32, u32)>,
    /// `(leaf label, ψ exponent)` sorted by label.
    pub leaves: Vec<(u32, u32)>,
    pub children: Vec<(u32, Node)>,
}

impl Node {
    pub fn vertex(g: u32, leaves: &[u32]) -> Node {
        let mut l: Vec<(u32, u32)> = leaves.iter().map(|&x| (x, 0)).collect();
        l.sort();
        Node { g, psi_out: 0, kappa: vec![], leaves: l, children: vec![] }
    }

    /// Number of ingoing legs at this vertex.
    pub fn n_in(&self) -> u32 {
        (self.leaves.len() + self.children.len()) as u32
    }

    pub fn vertex_dim(&self) -> i64 {
        moduli_dim(self.g, self.n_in())
    }

    pub fn vertex_degree(&self) -> i64 {
        let psi: u32 = self.psi_out + self.leaves.iter().map(|l| l.1).sum::<u32>()
            + self.children.iter().map(|c| c.0).sum::<u32>();
        let kap: u32 = self.kappa.iter().map(|(m, e)| m * e).sum();
        (psi + kap) as i64
    }

    pub fn genus(&self) -> u32 {
        self.g + self.children.iter().map(|c| c.1.genus()).sum::<u32>()
    }

    pub fn n_vertices(&self) -> usize {
        1 + self.children.iter().map(|c| c.1.n_vertices()).sum::<usize>()
    }

    pub fn n_edges(&self) -> usize {
        self.n_vertices() - 1
    }

    pub fn leaf_labels(&self) -> BTreeSet<u32> {
        let mut s: BTreeSet<u32> = self.leaves.iter().map(|l| l.0).collect();
        for (_, c) in &self.children {
            s.extend(c.leaf_labels());
        }
        s
    }

    /// Total complex degree: ψ and κ exponents weighted by degree, plus one per edge.
    pub fn degree(&self) -> i64 {
        self.vertex_degree() + self.children.iter().map(|c| 1 + c.1.degree()).sum::<i64>()
    }

    pub fn is_decorated(&self) -> bool {
        self.vertex_degree() > 0 || self.children.iter().any(|c| c.1.is_decorated())
    }

    pub fn all_vertices_stable(&self) -> bool {
        is_stable(self.g, self.n_in()) && self.children.iter().all(|c| c.1.all_vertices_stable())
    }

    /// Every vertex carries a decoration of degree at most its own dimension.
    pub fn within_vertex_dims(&self) -> bool {
        self.vertex_degree() <= self.vertex_dim() && self.children.iter().all(|c| c.1.within_vertex_dims())
    }

    pub fn all_genus_zero(&self) -> bool {
        self.g == 0 && self.children.iter().all(|c| c.1.all_genus_zero())
    }

    /// Sort children recursively; the result is the canonical representative.
    pub fn canonical(mut self) -> Node {
        self.canonicalize();
        self
    }

    pub fn canonicalize(&mut self) {
        for (_, c) in self.children.iter_mut() {
            c.canonicalize();
        }
        self.children.sort();
        self.leaves.sort();
        self.kappa.retain(|k| k.1 > 0);
        self.kappa.sort();
    }

    /// Strip all decorations.
    pub fn shape(&self) -> Node {
        Node {
            g: self.g,
            psi_out: 0,
            kappa: vec![],
            leaves: self.leaves.iter().map(|l| (l.0, 0)).collect(),
            children: self.children.iter().map(|(_, c)| (0, c.shape())).collect(),
        }
        .canonical()
    }

    /// Order of the automorphism group fixing the root and all labelled
    /// leaves (decorations included). Assumes canonical form.
    pub fn aut_order(&self) -> u64 {
        let mut total: u64 = 1;
        let mut i = 0;
        while i < self.children.len() {
            let mut j = i;
            while j < self.children.len() && self.children[j] == self.children[i] {
                j += 1;
            }
            let k = (j - i) as u64;
            total *= (1..=k).product::<u64>();
            total *= self.children[i].1.aut_order().pow(k as u32);
            i = j;
        }
        total
    }

    pub fn root_type(&self) -> RootType {
        RootType { g1: self.g, ell1: self.leaves.len() as u32, k1: self.children.len() as u32 }
    }

    pub fn kappa_exp(&self, m: u32) -> u32 {
        self.kappa.iter().find(|k| k.0 == m).map_or(0, |k| k.1)
    }

    pub fn add_kappa(&mut self, m: u32, e: u32) {
        if e == 0 {
            return;
        }
        match self.kappa.iter_mut().find(|k| k.0 == m) {
            Some(k) => k.1 += e,
            None => {
                self.kappa.push((m, e));
                self.kappa.sort();
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RootType {
    pub g1: u32,
    pub ell1: u32,
    pub k1: u32,
}

/// Flat presentation of a stable tree with explicit vertex ids.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StableTree {
    pub genera: Vec<u32>,
    pub root: usize,
    /// Oriented `(child, parent)` pairs.
    pub edges: Vec<(usize, usize)>,
    pub leaves: BTreeMap<u32, usize>,
}

#[derive(Serialize, Deserialize)]
struct VertexJson {
    g: u32,
}

#[derive(Serialize, Deserialize)]
struct TreeJson {
    vertices: Vec<VertexJson>,
    root: usize,
    edges: Vec<[usize; 2]>,
    leaves: BTreeMap<String, usize>,
}

impl StableTree {
    pub fn n_points(&self) -> u32 {
        self.leaves.len() as u32
    }

    pub fn genus(&self) -> u32 {
        self.genera.iter().sum()
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        let nv = self.genera.len();
        let bad = |s: &str| Err(TreeError::Invalid(s.to_string()));
        if self.root >= nv {
            return bad("root out of range");
        }
        if self.edges.len() + 1 != nv {
            return bad("edge count must be vertices - 1");
        }
        let mut parent = vec![None; nv];
        for &(c, p) in &self.edges {
            if c >= nv || p >= nv || c == p {
                return bad("edge endpoint out of range");
            }
            if parent[c].is_some() || c == self.root {
                return bad("vertex with two parents, or root with a parent");
            }
            parent[c] = Some(p);
        }
        for v in 0..nv {
            let mut cur = v;
            let mut steps = 0;
            while cur != self.root {
                match parent[cur] {
                    Some(p) => cur = p,
                    None => return bad("disconnected vertex"),
                }
                steps += 1;
                if steps > nv {
                    return bad("cycle");
                }
            }
        }
        let n = self.leaves.len() as u32;
        let labels: Vec<u32> = self.leaves.keys().copied().collect();
        if labels != (2..2 + n).collect::<Vec<_>>() {
            return bad("leaves must be labelled 2..=1+n");
        }
        if self.leaves.values().any(|&v| v >= nv) {
            return bad("leaf on missing vertex");
        }
        if !self.to_node().all_vertices_stable() {
            return bad("unstable vertex");
        }
        Ok(())
    }

    pub fn to_node(&self) -> Node {
        fn build(t: &StableTree, v: usize) -> Node {
            let leaves: Vec<(u32, u32)> = t.leaves.iter().filter(|(_, &w)| w == v).map(|(&l, _)| (l, 0)).collect();
            let children = t.edges.iter().filter(|e| e.1 == v).map(|e| (0, build(t, e.0))).collect();
            Node { g: t.genera[v], psi_out: 0, kappa: vec![], leaves, children }
        }
        build(self, self.root).canonical()
    }

    /// Vertices numbered in preorder of the canonical node, root = 0.
    pub fn from_node(node: &Node) -> StableTree {
        fn walk(n: &Node, parent: Option<usize>, t: &mut StableTree) {
            let id = t.genera.len();
            t.genera.push(n.g);
            if let Some(p) = parent {
                t.edges.push((id, p));
            }
            for (l, _) in &n.leaves {
                t.leaves.insert(*l, id);
            }
            for (_, c) in &n.children {
                walk(c, Some(id), t);
            }
        }
        let mut t = StableTree { genera: vec![], root: 0, edges: vec![], leaves: BTreeMap::new() };
        walk(&node.shape(), None, &mut t);
        t
    }

    pub fn to_json(&self) -> serde_json::Value {
        let j = TreeJson {
            vertices: self.genera.iter().map(|&g| VertexJson { g }).collect(),
            root: self.root,
            edges: self.edges.iter().map(|&(c, p)| [c, p]).collect(),
            leaves: self.leaves.iter().map(|(l, v)| (l.to_string(), *v)).collect(),
        };
        serde_json::to_value(j).expect("tree json")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<StableTree, TreeError> {
        let j: TreeJson = serde_json::from_value(v.clone()).map_err(|e| TreeError::Invalid(e.to_string()))?;
        let mut leaves = BTreeMap::new();
        for (k, v) in j.leaves {
            let l: u32 = k.parse().map_err(|_| TreeError::Invalid(format!("leaf label {k:?}")))?;
            leaves.insert(l, v);
        }
        let t = StableTree {
            genera: j.vertices.iter().map(|v| v.g).collect(),
            root: j.root,
            edges: j.edges.iter().map(|e| (e[0], e[1])).collect(),
            leaves,
        };
        t.validate()?;
        Ok(t)
    }
}

pub fn canonical_form(t: &StableTree) -> StableTree {
    StableTree::from_node(&t.to_node())
}

pub fn aut_order(t: &StableTree) -> u64 {
    t.to_node().aut_order()
}

pub fn root_type(t: &StableTree) -> RootType {
    t.to_node().root_type()
}

type Cache = Mutex<HashMap<(u32, Vec<u32>, u32), Arc<Vec<Node>>>>;

fn cache() -> &'static Cache {
    static C: OnceLock<Cache> = OnceLock::new();
    C.get_or_init(|| Mutex::new(HashMap::new()))
}

/// All canonical undecorated trees with total genus `g` and leaf set `labels`.
pub fn subtrees(g: u32, labels: &[u32]) -> Arc<Vec<Node>> {
    subtrees_bounded(g, labels, u32::MAX)
}

/// As [`subtrees`], keeping only trees with at most `max_edges` edges.
pub fn subtrees_bounded(g: u32, labels: &[u32], max_edges: u32) -> Arc<Vec<Node>> {
    // A stable tree of this type never has more than 2g + n edges.
    let max_edges = max_edges.min(2 * g + labels.len() as u32);
    let key = (g, labels.to_vec(), max_edges);
    if let Some(v) = cache().lock().unwrap().get(&key) {
        return v.clone();
    }
    let out = Arc::new(build_subtrees(g, labels, max_edges));
    cache().lock().unwrap().insert(key, out.clone());
    out
}

fn build_subtrees(g: u32, labels: &[u32], max_edges: u32) -> Vec<Node> {
    if !is_stable(g, labels.len() as u32) {
        return vec![];
    }
    let mut found: BTreeSet<Node> = BTreeSet::new();
    let k = labels.len();
    for g0 in 0..=g {
        for mask in 0u32..(1 << k) {
            let at_root: Vec<u32> = (0..k).filter(|i| mask >> i & 1 == 1).map(|i| labels[i]).collect();
            let rest: Vec<u32> = (0..k).filter(|i| mask >> i & 1 == 0).map(|i| labels[i]).collect();
            for blocks in set_partitions(&rest) {
                for gens in genus_splits(g - g0, &blocks) {
                    // gens[..blocks.len()] are block genera; the tail lists leafless children.
                    let n_children = gens.len();
                    if !is_stable(g0, (at_root.len() + n_children) as u32) || n_children as u32 > max_edges {
                        continue;
                    }
                    let mut options: Vec<Arc<Vec<Node>>> = Vec::with_capacity(n_children);
                    for (i, &gc) in gens.iter().enumerate() {
                        let b: &[u32] = if i < blocks.len() { &blocks[i] } else { &[] };
                        options.push(subtrees_bounded(gc, b, max_edges - n_children as u32));
                    }
                    if options.iter().any(|o| o.is_empty()) {
                        continue;
                    }
                    let mut idx = vec![0usize; n_children];
                    loop {
                        let children = idx.iter().zip(&options).map(|(&i, o)| (0, o[i].clone())).collect();
                        let node = Node {
                            g: g0,
                            psi_out: 0,
                            kappa: vec![],
                            leaves: at_root.iter().map(|&l| (l, 0)).collect(),
                            children,
                        }
                        .canonical();
                        if node.n_edges() as u32 <= max_edges {
                            found.insert(node);
                        }
                        // Odometer over the product of options.
                        let mut p = 0;
                        while p < n_children {
                            idx[p] += 1;
                            if idx[p] < options[p].len() {
                                break;
                            }
                            idx[p] = 0;
                            p += 1;
                        }
                        if p == n_children {
                            break;
                        }
                    }
                }
            }
        }
    }
    found.into_iter().collect()
}

/// Set partitions of `items` into nonempty blocks, blocks ordered by first element.
fn set_partitions(items: &[u32]) -> Vec<Vec<Vec<u32>>> {
    if items.is_empty() {
        return vec![vec![]];
    }
    let first = items[0];
    let mut out = Vec::new();
    for p in set_partitions(&items[1..]) {
        for i in 0..p.len() {
            let mut q = p.clone();
            q[i].insert(0, first);
            out.push(q);
        }
        let mut q = p;
        q.insert(0, vec![first]);
        out.push(q);
    }
    out
}

/// Genus assignments: one genus per block (each block stable as a subtree),
/// followed by a non-increasing list of positive genera for leafless children.
fn genus_splits(total: u32, blocks: &[Vec<u32>]) -> Vec<Vec<u32>> {
    fn rec(total: u32, blocks: &[Vec<u32>], acc: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if blocks.is_empty() {
            for part in integer_partitions(total, total) {
                let mut v = acc.clone();
                v.extend(part);
                out.push(v);
            }
            return;
        }
        for gb in 0..=total {
            if is_stable(gb, blocks[0].len() as u32) {
                acc.push(gb);
                rec(total - gb, &blocks[1..], acc, out);
                acc.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(total, blocks, &mut Vec::new(), &mut out);
    out
}

fn integer_partitions(n: u32, max: u32) -> Vec<Vec<u32>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in (1..=max.min(n)).rev() {
        for mut rest in integer_partitions(n - first, first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Canonical undecorated trees of type (g, 1+n), ordered by edge count and
/// then by canonical form.
pub fn enumerate_nodes(g: u32, n: u32) -> Result<Vec<Node>, TreeError> {
    enumerate_nodes_bounded(g, n, u32::MAX)
}

/// Canonical undecorated trees of type (g, 1+n) with at most `max_edges` edges.
pub fn enumerate_nodes_bounded(g: u32, n: u32, max_edges: u32) -> Result<Vec<Node>, TreeError> {
    if !is_stable(g, n) {
        return Err(TreeError::Unstable { g, n });
    }
    let labels: Vec<u32> = (2..2 + n).collect();
    let mut v: Vec<Node> = subtrees_bounded(g, &labels, max_edges).as_ref().clone();
    v.sort_by(|a, b| a.n_edges().cmp(&b.n_edges()).then_with(|| a.cmp(b)));
    Ok(v)
}

pub fn enumerate(g: u32, n: u32) -> Result<Vec<StableTree>, TreeError> {
    Ok(enumerate_nodes(g, n)?.iter().map(StableTree::from_node).collect())
}
