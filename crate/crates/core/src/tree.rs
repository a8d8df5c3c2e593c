//! Rooted trees, the summation operators `I` and `I*`, and tree measures.
//!
//! Nodes are dense indices `0..len`. Children are kept in ascending id order
//! and every reduction walks them in that order, so sums are reproducible bit
//! for bit.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    parent: Vec<NodeId>,
    children: Vec<Vec<NodeId>>,
    depth: Vec<u32>,
    root: NodeId,
    /// Breadth-first order; parents precede children.
    order: Vec<NodeId>,
    tin: Vec<u32>,
    tout: Vec<u32>,
}

impl Tree {
    /// Builds a tree from a parent table; exactly one entry must be `None`.
    pub fn from_parents(parents: &[Option<NodeId>]) -> Result<Tree> {
        let n = parents.len();
        if n == 0 {
            return Err(Error::Structure("empty tree".into()));
        }
        let mut root = None;
        let mut children = vec![Vec::new(); n];
        let mut parent = vec![0; n];
        for (i, p) in parents.iter().enumerate() {
            match *p {
                None => {
                    if root.replace(i).is_some() {
                        return Err(Error::Structure("more than one root".into()));
                    }
                    parent[i] = i;
                }
                Some(p) => {
                    if p >= n || p == i {
                        return Err(Error::Structure(format!("bad parent {p} for node {i}")));
                    }
                    parent[i] = p;
                    children[p].push(i);
                }
            }
        }
        let root = root.ok_or_else(|| Error::Structure("no root".into()))?;
        for c in children.iter_mut() {
            c.sort_unstable();
        }
        let mut depth = vec![u32::MAX; n];
        let mut order = Vec::with_capacity(n);
        depth[root] = 0;
        order.push(root);
        let mut head = 0;
        while head < order.len() {
            let a = order[head];
            head += 1;
            for &c in &children[a] {
                depth[c] = depth[a] + 1;
                order.push(c);
            }
        }
        if order.len() != n {
            return Err(Error::Structure("graph is not connected or has a cycle".into()));
        }
        let (tin, tout) = euler_tour(root, &children);
        Ok(Tree {
            parent,
            children,
            depth,
            root,
            order,
            tin,
            tout,
        })
    }

    /// Path `0 → 1 → … → len-1`.
    pub fn linear(len: usize) -> Tree {
        let parents: Vec<_> = (0..len.max(1)).map(|i| i.checked_sub(1)).collect();
        Tree::from_parents(&parents).expect("path is a tree")
    }

    /// Complete `k`-ary tree of the given depth in breadth-first numbering.
    pub fn complete(k: usize, depth: u32) -> Tree {
        let k = k.max(1);
        let mut parents = vec![None];
        let mut level: Vec<NodeId> = vec![0];
        for _ in 0..depth {
            let mut next = Vec::with_capacity(level.len() * k);
            for &p in &level {
                for _ in 0..k {
                    next.push(parents.len());
                    parents.push(Some(p));
                }
            }
            level = next;
        }
        Tree::from_parents(&parents).expect("complete tree")
    }

    pub fn binary(depth: u32) -> Tree {
        Tree::complete(2, depth)
    }

    /// Random recursive tree: node `i` picks a uniform parent among `0..i`.
    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Tree {
        let parents: Vec<_> = (0..len.max(1))
            .map(|i| if i == 0 { None } else { Some(rng.random_range(0..i)) })
            .collect();
        Tree::from_parents(&parents).expect("random recursive tree")
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    /// Predecessor `Aα`; the root maps to itself.
    pub fn parent(&self, a: NodeId) -> NodeId {
        self.parent[a]
    }

    pub fn children(&self, a: NodeId) -> &[NodeId] {
        &self.children[a]
    }

    pub fn depth(&self, a: NodeId) -> u32 {
        self.depth[a]
    }

    pub fn max_depth(&self) -> u32 {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn is_leaf(&self, a: NodeId) -> bool {
        self.children[a].is_empty()
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        (0..self.len()).filter(|&a| self.is_leaf(a)).collect()
    }

    /// Nodes in breadth-first order (parents first).
    pub fn bfs(&self) -> &[NodeId] {
        &self.order
    }

    pub fn nodes_at_depth(&self, d: u32) -> Vec<NodeId> {
        (0..self.len()).filter(|&a| self.depth[a] == d).collect()
    }

    pub fn contains(&self, a: NodeId) -> bool {
        a < self.len()
    }

    fn check(&self, a: NodeId) -> Result<()> {
        if self.contains(a) {
            Ok(())
        } else {
            Err(Error::Structure(format!("node {a} is not in a tree of {} nodes", self.len())))
        }
    }

    /// `a ≤ b`: `a` lies on the geodesic from the root to `b`.
    pub fn is_ancestor(&self, a: NodeId, b: NodeId) -> bool {
        self.tin[a] <= self.tin[b] && self.tout[b] <= self.tout[a]
    }

    /// Ancestors of `a` from `a` up to the root, inclusive.
    pub fn ancestors(&self, a: NodeId) -> Ancestors<'_> {
        Ancestors { tree: self, next: Some(a) }
    }

    /// The `k`-th predecessor `A^k α`, stopping at the root.
    pub fn ancestor_at(&self, a: NodeId, k: u32) -> NodeId {
        let mut x = a;
        for _ in 0..k {
            x = self.parent[x];
        }
        x
    }

    /// Deepest common ancestor `α ∧ β`.
    pub fn wedge(&self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.wedge_unchecked(a, b))
    }

    pub(crate) fn wedge_unchecked(&self, mut a: NodeId, mut b: NodeId) -> NodeId {
        while self.depth[a] > self.depth[b] {
            a = self.parent[a];
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b];
        }
        while a != b {
            a = self.parent[a];
            b = self.parent[b];
        }
        a
    }

    /// Tree distance `d(α)+d(β)−2d(α∧β)`.
    pub fn distance(&self, a: NodeId, b: NodeId) -> Result<u32> {
        let w = self.wedge(a, b)?;
        Ok(self.depth[a] + self.depth[b] - 2 * self.depth[w])
    }

    /// Successor set `S(α)` in ascending id order.
    pub fn subtree(&self, a: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![a];
        while let Some(x) = stack.pop() {
            out.push(x);
            stack.extend(self.children[x].iter().rev());
        }
        out.sort_unstable();
        out
    }

    /// Leaves below `a` (the truncated `𝒮*(α)`).
    pub fn leaves_below(&self, a: NodeId) -> Vec<NodeId> {
        self.subtree(a).into_iter().filter(|&x| self.is_leaf(x)).collect()
    }

    /// `If(α) = Σ_{β ≤ α} f(β)` in one down-sweep.
    pub fn sum_i(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.len(), "function length must match the tree");
        let mut out = vec![0.0; self.len()];
        for &a in &self.order {
            out[a] = if a == self.root { f[a] } else { out[self.parent[a]] + f[a] };
        }
        out
    }

    /// `I*g(α) = Σ_{β ≥ α} g(β)` in one up-sweep, children added in ascending order.
    pub fn sum_istar(&self, g: &[f64]) -> Vec<f64> {
        assert_eq!(g.len(), self.len(), "function length must match the tree");
        let mut out = vec![0.0; self.len()];
        for &a in self.order.iter().rev() {
            let mut s = g[a];
            for &c in &self.children[a] {
                s += out[c];
            }
            out[a] = s;
        }
        out
    }

    pub fn to_file(&self) -> TreeFile {
        TreeFile {
            root: self.root,
            nodes: (0..self.len())
                .map(|id| TreeFileNode {
                    id,
                    parent: if id == self.root { None } else { Some(self.parent[id]) },
                    depth: self.depth[id],
                })
                .collect(),
        }
    }

    pub fn from_file(file: &TreeFile) -> Result<Tree> {
        let mut parents = vec![None; file.nodes.len()];
        let mut seen = vec![false; file.nodes.len()];
        for node in &file.nodes {
            if node.id >= parents.len() || seen[node.id] {
                return Err(Error::Structure(format!("bad node id {}", node.id)));
            }
            seen[node.id] = true;
            parents[node.id] = node.parent;
        }
        let tree = Tree::from_parents(&parents)?;
        if tree.root != file.root {
            return Err(Error::Structure("root field does not match the parent table".into()));
        }
        for node in &file.nodes {
            if tree.depth[node.id] != node.depth {
                return Err(Error::Structure(format!("depth mismatch at node {}", node.id)));
            }
        }
        Ok(tree)
    }
}

fn euler_tour(root: NodeId, children: &[Vec<NodeId>]) -> (Vec<u32>, Vec<u32>) {
    let n = children.len();
    let mut tin = vec![0; n];
    let mut tout = vec![0; n];
    let mut clock = 0u32;
    let mut stack = vec![(root, 0usize)];
    tin[root] = 0;
    while let Some(&mut (a, ref mut next)) = stack.last_mut() {
        if *next == 0 {
            tin[a] = clock;
            clock += 1;
        }
        if *next < children[a].len() {
            let c = children[a][*next];
            *next += 1;
            stack.push((c, 0));
        } else {
            tout[a] = clock;
            stack.pop();
        }
    }
    (tin, tout)
}

pub struct Ancestors<'a> {
    tree: &'a Tree,
    next: Option<NodeId>,
}

impl Iterator for Ancestors<'_> {
    type Item = NodeId;

    fn next(&mut self) -> Option<NodeId> {
        let a = self.next?;
        self.next = if a == self.tree.root { None } else { Some(self.tree.parent[a]) };
        Some(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeFileNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub depth: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeFile {
    pub nodes: Vec<TreeFileNode>,
    pub root: NodeId,
}

/// Nonnegative node weights with cached `I*μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeMeasure {
    weights: Vec<f64>,
    istar: Vec<f64>,
}

impl TreeMeasure {
    pub fn new(tree: &Tree, weights: Vec<f64>) -> Result<TreeMeasure> {
        if weights.len() != tree.len() {
            return Err(Error::Invalid(format!(
                "{} weights for a tree of {} nodes",
                weights.len(),
                tree.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Invalid(format!("weight at node {i} is {}", weights[i])));
        }
        let istar = tree.sum_istar(&weights);
        Ok(TreeMeasure { weights, istar })
    }

    pub fn zero(tree: &Tree) -> TreeMeasure {
        TreeMeasure {
            weights: vec![0.0; tree.len()],
            istar: vec![0.0; tree.len()],
        }
    }

    /// Builds from sparse `(node, mass)` pairs; repeated nodes accumulate.
    pub fn from_atoms(tree: &Tree, atoms: &[(NodeId, f64)]) -> Result<TreeMeasure> {
        let mut w = vec![0.0; tree.len()];
        for &(a, m) in atoms {
            tree.check(a)?;
            w[a] += m;
        }
        TreeMeasure::new(tree, w)
    }

    pub fn from_map(tree: &Tree, map: &BTreeMap<NodeId, f64>) -> Result<TreeMeasure> {
        let atoms: Vec<_> = map.iter().map(|(&a, &m)| (a, m)).collect();
        TreeMeasure::from_atoms(tree, &atoms)
    }

    pub fn to_map(&self) -> BTreeMap<NodeId, f64> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(a, w)| (a, *w))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, a: NodeId) -> f64 {
        self.weights[a]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn istar(&self, a: NodeId) -> f64 {
        self.istar[a]
    }

    pub fn istar_all(&self) -> &[f64] {
        &self.istar
    }

    pub fn total(&self, tree: &Tree) -> f64 {
        self.istar[tree.root()]
    }

    pub fn scaled(&self, c: f64) -> TreeMeasure {
        TreeMeasure {
            weights: self.weights.iter().map(|w| w * c).collect(),
            istar: self.istar.iter().map(|w| w * c).collect(),
        }
    }

    /// Nodes with `I*μ > 0`: the atoms and their ancestors, ascending.
    pub fn support_closure(&self) -> Vec<NodeId> {
        (0..self.istar.len()).filter(|&a| self.istar[a] > 0.0).collect()
    }

    pub fn support(&self) -> Vec<NodeId> {
        (0..self.weights.len()).filter(|&a| self.weights[a] > 0.0).collect()
    }

    /// Recomputes `I*` from scratch and compares bit for bit with the cache.
    pub fn cache_is_exact(&self, tree: &Tree) -> bool {
        tree.sum_istar(&self.weights) == self.istar
    }
}

/// A tree measure carried by the leaves of a depth-truncated tree.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMeasure(TreeMeasure);

impl BoundaryMeasure {
    pub fn new(tree: &Tree, weights: Vec<f64>) -> Result<BoundaryMeasure> {
        let m = TreeMeasure::new(tree, weights)?;
        if let Some(a) = m.support().into_iter().find(|&a| !tree.is_leaf(a)) {
            return Err(Error::Invalid(format!("boundary mass on interior node {a}")));
        }
        Ok(BoundaryMeasure(m))
    }

    pub fn uniform(tree: &Tree) -> BoundaryMeasure {
        let leaves = tree.leaves();
        let mass = 1.0 / leaves.len() as f64;
        let mut w = vec![0.0; tree.len()];
        for a in leaves {
            w[a] = mass;
        }
        BoundaryMeasure::new(tree, w).expect("uniform leaf measure")
    }

    pub fn measure(&self) -> &TreeMeasure {
        &self.0
    }
}

/// Extremal constant of a testing condition with its witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    #[serde(with = "crate::tree::extended_real")]
    pub constant: f64,
    pub witness: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<(NodeId, f64)>>,
    pub params: BTreeMap<String, f64>,
}

impl ConditionReport {
    /// Max over `(node, ratio)` pairs; ties go to the smallest node id.
    pub fn from_ratios<I>(condition: &str, ratios: I, keep_trace: bool) -> ConditionReport
    where
        I: IntoIterator<Item = (NodeId, f64)>,
    {
        let mut best = (None, 0.0f64);
        let mut trace = Vec::new();
        for (a, r) in ratios {
            let better = match best.0 {
                None => true,
                Some(b) => r > best.1 || (r == best.1 && a < b),
            };
            if better {
                best = (Some(a), r);
            }
            if keep_trace {
                trace.push((a, r));
            }
        }
        ConditionReport {
            condition: condition.to_string(),
            constant: best.1,
            witness: best.0,
            ratios: keep_trace.then(|| {
                trace.sort_by_key(|t| t.0);
                trace
            }),
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> ConditionReport {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn is_infinite(&self) -> bool {
        self.constant.is_infinite()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Serializes `+∞` as the string `"inf"` so JSON stays valid.
pub mod extended_real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_str("inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("bad number {s}"))),
        }
    }
}
