//! Bergman trees of the unit ball and their quotient ring trees.
//!
//! Level `N ≥ 1` is the Bergman shell `Nθ ≤ β(0,z) < (N+1)θ` with `θ = ln2/2`.
//! Each level carries a 1-separated net of complex circles ("rings"), chosen
//! greedily over quasi-random directions, and each ring is cut into arcs of
//! Bergman length about 1 ("kubes"). Ring membership is decided by descending
//! the ring tree, which makes the ring map compatible with the kube tree by
//! construction.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::{LN_2, PI};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ball::{self, UnitarySampler};
use crate::error::{Error, Result};
use crate::qmc::SpherePoints;
use crate::tree::{NodeId, Tree, TreeMeasure};

pub const THETA: f64 = LN_2 / 2.0;
pub const LAMBDA: f64 = 1.0;
pub const DEPTH_CAP: u32 = 30;
pub const DEFAULT_MAX_NODES: u64 = 2_000_000;

/// `log₂ lim 2^N(1 − |c|⁴)` over level-`N` centers, so a center's analytic wedge with itself is its depth.
pub const DSTAR_OFFSET: f64 = 2.5;

/// Irrational offset of the phase grid; keeps parent phase rounding away from ties.
const PHASE_OFFSET: f64 = 0.381_966_011_250_105_1;

/// Bergman shell index `⌊β(0,z)/θ⌋`.
pub fn shell_index(r: f64) -> u32 {
    (r.atanh() / THETA).floor() as u32
}

/// Radius of the level-`N` kube centers, `tanh((N+½)θ)`; the root center is 0.
pub fn center_radius(level: u32) -> f64 {
    if level == 0 {
        0.0
    } else {
        ((level as f64 + 0.5) * THETA).tanh()
    }
}

/// Inner radius `tanh(Nθ)` of shell `N`.
pub fn inner_radius(level: u32) -> f64 {
    (level as f64 * THETA).tanh()
}

/// Largest `|⟨u,v⟩|` for which the circles through `ru` and `rv` are 1-separated at `r = tanh(Nθ)`.
///
/// The projective distance is `tanh⁻¹ √(1 − (1−r²)²/(1−r²|⟨u,v⟩|)²)`.
pub fn ring_threshold(level: u32) -> f64 {
    let r2 = inner_radius(level).powi(2);
    if r2 == 0.0 {
        return -1.0;
    }
    (1.0 - (1.0 - r2) * LAMBDA.cosh()) / r2
}

/// Bergman distance between the circles through `ru` and `rv`.
pub fn projective_distance(r: f64, u: &[Complex64], v: &[Complex64]) -> f64 {
    let r2 = r * r;
    let t = ball::inner(u, v).norm().min(1.0);
    let q = (1.0 - r2) / (1.0 - r2 * t);
    (1.0 - q * q).max(0.0).sqrt().min(1.0 - f64::EPSILON).atanh()
}

/// Number of kubes per ring at level `N`: `max(1, ⌊2π/φ₁⌋)` where the arc `φ₁`
/// has Bergman length `λ` on the inner sphere.
pub fn phase_count(level: u32) -> usize {
    if level == 0 {
        return 1;
    }
    let r2 = inner_radius(level).powi(2);
    let target = (1.0 - r2) * LAMBDA.cosh();
    let cos_phi = (1.0 + r2 * r2 - target * target) / (2.0 * r2);
    if cos_phi <= -1.0 {
        return 1;
    }
    let phi = cos_phi.min(1.0).acos();
    ((2.0 * PI / phi).floor() as usize).max(1)
}

fn phase_angle(k: u32, m: usize) -> f64 {
    2.0 * PI * (k as f64 + PHASE_OFFSET) / m as f64
}

fn phase_index(psi: f64, m: usize) -> u32 {
    let x = psi * m as f64 / (2.0 * PI) - PHASE_OFFSET;
    (x.round() as i64).rem_euclid(m as i64) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetOptions {
    /// Candidate pool per level is `pool_factor · 2^{(n−1)N}`.
    pub pool_factor: u64,
    pub max_pool: u64,
    pub seed: u64,
}

impl Default for NetOptions {
    fn default() -> Self {
        NetOptions {
            pool_factor: 64,
            max_pool: 1 << 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KubeKey {
    pub level: u32,
    pub ring: u32,
    pub phase: u32,
}

impl KubeKey {
    pub const ROOT: KubeKey = KubeKey {
        level: 0,
        ring: 0,
        phase: 0,
    };
}

#[derive(Debug, Clone)]
struct Level {
    dirs: Vec<Vec<Complex64>>,
    parent: Vec<u32>,
    children: Vec<Vec<u32>>,
    phases: usize,
}

/// Ring nets for levels `0..=depth`; everything else is derived from these.
#[derive(Debug, Clone)]
pub struct BergmanGeometry {
    n: usize,
    depth: u32,
    opts: NetOptions,
    levels: Vec<Level>,
}

impl BergmanGeometry {
    pub fn build(n: usize, depth: u32, opts: NetOptions) -> Result<BergmanGeometry> {
        if n == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        if depth > DEPTH_CAP {
            return Err(Error::Resource {
                what: "Bergman tree depth".into(),
                estimate: depth as u64,
                cap: DEPTH_CAP as u64,
            });
        }
        let mut e1 = vec![Complex64::new(0.0, 0.0); n];
        e1[0] = Complex64::new(1.0, 0.0);
        let mut geom = BergmanGeometry {
            n,
            depth,
            opts,
            levels: vec![Level {
                dirs: vec![e1],
                parent: vec![0],
                children: vec![Vec::new()],
                phases: 1,
            }],
        };
        for level in 1..=depth {
            geom.add_level(level);
        }
        Ok(geom)
    }

    fn add_level(&mut self, level: u32) {
        let t = ring_threshold(level);
        let prev = &self.levels[level as usize - 1];
        let mut dirs: Vec<Vec<Complex64>> = Vec::new();
        let consider = |u: Vec<Complex64>, dirs: &mut Vec<Vec<Complex64>>| {
            if dirs.iter().all(|a| ball::inner(a, &u).norm() <= t) {
                dirs.push(u);
            }
        };
        for u in &prev.dirs {
            consider(u.clone(), &mut dirs);
        }
        if self.n > 1 {
            let pool = self
                .opts
                .pool_factor
                .saturating_mul(1u64 << ((self.n as u64 - 1) * level as u64).min(40))
                .min(self.opts.max_pool);
            let mut points = SpherePoints::new(self.n, self.opts.seed ^ (level as u64).wrapping_mul(0x9e37_79b9));
            for _ in 0..pool {
                consider(points.next_point(), &mut dirs);
            }
        }
        let parent: Vec<u32> = dirs
            .iter()
            .map(|u| *self.ring_path(u, level - 1).last().expect("path to root"))
            .collect();
        let prev = &mut self.levels[level as usize - 1];
        for (j, &p) in parent.iter().enumerate() {
            prev.children[p as usize].push(j as u32);
        }
        let count = dirs.len();
        self.levels.push(Level {
            dirs,
            parent,
            children: vec![Vec::new(); count],
            phases: phase_count(level),
        });
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn options(&self) -> NetOptions {
        self.opts
    }

    pub fn ring_count(&self, level: u32) -> usize {
        self.levels[level as usize].dirs.len()
    }

    pub fn phases(&self, level: u32) -> usize {
        self.levels[level as usize].phases
    }

    pub fn ring_direction(&self, level: u32, ring: u32) -> &[Complex64] {
        &self.levels[level as usize].dirs[ring as usize]
    }

    pub fn ring_parent(&self, level: u32, ring: u32) -> u32 {
        self.levels[level as usize].parent[ring as usize]
    }

    pub fn ring_children(&self, level: u32, ring: u32) -> &[u32] {
        &self.levels[level as usize].children[ring as usize]
    }

    /// Exact node count of the full tree.
    pub fn node_count(&self) -> u64 {
        (0..=self.depth)
            .map(|l| self.ring_count(l) as u64 * self.phases(l) as u64)
            .sum()
    }

    /// Ring indices met by the direction `u` at levels `0..=level`.
    pub fn ring_path(&self, u: &[Complex64], level: u32) -> Vec<u32> {
        let mut path = Vec::with_capacity(level as usize + 1);
        let mut cur = 0u32;
        path.push(cur);
        for l in 1..=level {
            let kids = &self.levels[l as usize - 1].children[cur as usize];
            let dirs = &self.levels[l as usize].dirs;
            let mut best = kids[0];
            let mut best_val = ball::inner(&dirs[best as usize], u).norm();
            for &c in &kids[1..] {
                let v = ball::inner(&dirs[c as usize], u).norm();
                if v > best_val {
                    best = c;
                    best_val = v;
                }
            }
            cur = best;
            path.push(cur);
        }
        path
    }

    pub fn locate_key(&self, z: &[Complex64]) -> Result<KubeKey> {
        let r = ball::norm(z);
        if z.len() != self.n {
            return Err(Error::Domain(format!("point of dimension {} in a tree of dimension {}", z.len(), self.n)));
        }
        if r >= 1.0 {
            return Err(Error::Domain(format!("|z| = {r} is not below 1")));
        }
        let level = shell_index(r);
        if level > self.depth {
            return Err(Error::OutOfRange(format!("shell {level} is beyond depth {}", self.depth)));
        }
        if level == 0 {
            return Ok(KubeKey::ROOT);
        }
        let u: Vec<Complex64> = z.iter().map(|x| x / r).collect();
        let ring = *self.ring_path(&u, level).last().unwrap();
        let psi = ball::inner(z, self.ring_direction(level, ring)).arg();
        Ok(KubeKey {
            level,
            ring,
            phase: phase_index(psi, self.phases(level)),
        })
    }

    pub fn center(&self, key: KubeKey) -> Vec<Complex64> {
        if key.level == 0 {
            return vec![Complex64::new(0.0, 0.0); self.n];
        }
        let m = self.phases(key.level);
        let c = Complex64::from_polar(center_radius(key.level), phase_angle(key.phase, m));
        ball::scale(self.ring_direction(key.level, key.ring), c)
    }

    /// Kube containing the radial projection of this kube's center onto the previous shell.
    pub fn parent_key(&self, key: KubeKey) -> KubeKey {
        if key.level <= 1 {
            return KubeKey::ROOT;
        }
        let p = self.ring_parent(key.level, key.ring);
        let c = self.center(key);
        let psi = ball::inner(&c, self.ring_direction(key.level - 1, p)).arg();
        KubeKey {
            level: key.level - 1,
            ring: p,
            phase: phase_index(psi, self.phases(key.level - 1)),
        }
    }
}

/// Quotient tree of rings with the map `α ↦ [α]`.
#[derive(Debug, Clone)]
pub struct RingTree {
    pub tree: Tree,
    /// `(level, ring index)` per ring node.
    pub keys: Vec<(u32, u32)>,
    /// Ring node of each kube node.
    pub ring_of: Vec<NodeId>,
}

/// A kube tree (full, or the support closure of a point set) with its ring tree.
#[derive(Debug, Clone)]
pub struct BergmanTree {
    geom: Arc<BergmanGeometry>,
    tree: Tree,
    keys: Vec<KubeKey>,
    centers: Vec<Complex64>,
    index: HashMap<KubeKey, NodeId>,
    rings: RingTree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DStarMode {
    Analytic,
    Sampled { rotations: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairPredicate {
    /// `|d* − 4| ≤ τ`.
    ExactBand,
    /// `d* ≥ 2`.
    AtLeast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairOptions {
    pub tau: f64,
    pub predicate: PairPredicate,
}

impl Default for PairOptions {
    fn default() -> Self {
        PairOptions {
            tau: 0.5,
            predicate: PairPredicate::ExactBand,
        }
    }
}

impl PairOptions {
    pub fn accepts(&self, pair_distance: f64) -> bool {
        match self.predicate {
            PairPredicate::ExactBand => (pair_distance - 4.0).abs() <= self.tau,
            PairPredicate::AtLeast => pair_distance >= 2.0,
        }
    }
}

/// `−log₂(1 − |z̄·w|²)`, the analytic ring-wedge depth before clamping.
pub fn dstar_raw(z: &[Complex64], w: &[Complex64]) -> f64 {
    let s = ball::inner(w, z).norm_sqr();
    -(1.0 - s).log2()
}

pub fn estimate_full_nodes(n: usize, depth: u32, opts: NetOptions) -> Result<u64> {
    Ok(BergmanGeometry::build(n, depth, opts)?.node_count())
}

impl BergmanTree {
    /// Every kube down to the geometry's depth; refuses above `max_nodes`.
    pub fn full(geom: Arc<BergmanGeometry>, max_nodes: u64) -> Result<BergmanTree> {
        let count = geom.node_count();
        if count > max_nodes {
            return Err(Error::Resource {
                what: "full Bergman tree".into(),
                estimate: count,
                cap: max_nodes,
            });
        }
        let mut keys = Vec::with_capacity(count as usize);
        for level in 0..=geom.depth() {
            for ring in 0..geom.ring_count(level) as u32 {
                for phase in 0..geom.phases(level) as u32 {
                    keys.push(KubeKey { level, ring, phase });
                }
            }
        }
        BergmanTree::from_keys(geom, keys)
    }

    /// Support closure of the kubes containing `points`.
    pub fn closure_of_points(geom: Arc<BergmanGeometry>, points: &[Vec<Complex64>]) -> Result<BergmanTree> {
        let mut set = BTreeSet::new();
        set.insert(KubeKey::ROOT);
        let mut bad = Vec::new();
        for (i, z) in points.iter().enumerate() {
            match geom.locate_key(z) {
                Ok(mut k) => {
                    while set.insert(k) {
                        k = geom.parent_key(k);
                    }
                }
                Err(_) => bad.push(i),
            }
        }
        if !bad.is_empty() {
            return Err(Error::OutOfRange(format!("points outside the covered shells: {bad:?}")));
        }
        BergmanTree::from_keys(geom, set.into_iter().collect())
    }

    fn from_keys(geom: Arc<BergmanGeometry>, mut keys: Vec<KubeKey>) -> Result<BergmanTree> {
        keys.sort_unstable();
        keys.dedup();
        let index: HashMap<KubeKey, NodeId> = keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        let parents: Vec<Option<NodeId>> = keys
            .iter()
            .map(|&k| {
                if k == KubeKey::ROOT {
                    Ok(None)
                } else {
                    index
                        .get(&geom.parent_key(k))
                        .map(|&p| Some(p))
                        .ok_or_else(|| Error::Structure(format!("parent of {k:?} missing")))
                }
            })
            .collect::<Result<_>>()?;
        let tree = Tree::from_parents(&parents)?;
        let mut centers = Vec::with_capacity(keys.len() * geom.dim());
        for &k in &keys {
            centers.extend(geom.center(k));
        }
        let rings = build_rings(&geom, &keys)?;
        Ok(BergmanTree {
            geom,
            tree,
            keys,
            centers,
            index,
            rings,
        })
    }

    pub fn geometry(&self) -> &Arc<BergmanGeometry> {
        &self.geom
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn rings(&self) -> &RingTree {
        &self.rings
    }

    pub fn dim(&self) -> usize {
        self.geom.dim()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn key(&self, a: NodeId) -> KubeKey {
        self.keys[a]
    }

    pub fn node_of(&self, key: KubeKey) -> Option<NodeId> {
        self.index.get(&key).copied()
    }

    pub fn center(&self, a: NodeId) -> &[Complex64] {
        let n = self.dim();
        &self.centers[a * n..(a + 1) * n]
    }

    pub fn ring_of(&self, a: NodeId) -> NodeId {
        self.rings.ring_of[a]
    }

    /// The node `⟨z⟩` whose kube contains `z`.
    pub fn locate(&self, z: &[Complex64]) -> Result<NodeId> {
        let key = self.geom.locate_key(z)?;
        self.node_of(key)
            .ok_or_else(|| Error::OutOfRange(format!("kube {key:?} is not part of this tree")))
    }

    /// Depth of `[α] ∧ [β]` in the ring tree.
    pub fn ring_wedge_depth(&self, a: NodeId, b: NodeId) -> u32 {
        let ra = self.rings.ring_of[a];
        let rb = self.rings.ring_of[b];
        self.rings.tree.depth(self.rings.tree.wedge_unchecked(ra, rb))
    }

    /// Analytic `d*([α]∧[β]) = dstar_raw + DSTAR_OFFSET`, clamped to `[d([α]∧[β]), min(d(α), d(β))]`.
    pub fn dstar_wedge_analytic(&self, a: NodeId, b: NodeId) -> f64 {
        let lo = self.ring_wedge_depth(a, b) as f64;
        let hi = self.tree.depth(a).min(self.tree.depth(b)) as f64;
        (dstar_raw(self.center(a), self.center(b)) + DSTAR_OFFSET).max(lo).min(hi)
    }

    /// Largest ring-wedge depth of `Uc_α, Uc_β` over `rotations` seeded Haar unitaries.
    pub fn dstar_wedge_sampled(&self, a: NodeId, b: NodeId, rotations: usize, seed: u64) -> f64 {
        let mut sampler = UnitarySampler::new(self.dim(), seed);
        let (da, db) = (self.tree.depth(a), self.tree.depth(b));
        let mut best = 0u32;
        for _ in 0..rotations.max(1) {
            let u = sampler.sample();
            let za = ball::apply_unitary(&u, self.center(a));
            let zb = ball::apply_unitary(&u, self.center(b));
            let pa = self.rotated_path(&za, da);
            let pb = self.rotated_path(&zb, db);
            let common = pa.iter().zip(&pb).take_while(|(x, y)| x == y).count() as u32;
            best = best.max(common.saturating_sub(1));
        }
        best as f64
    }

    fn rotated_path(&self, z: &[Complex64], level: u32) -> Vec<u32> {
        let r = ball::norm(z);
        if r == 0.0 {
            return vec![0];
        }
        let u: Vec<Complex64> = z.iter().map(|x| x / r).collect();
        self.geom.ring_path(&u, level)
    }

    pub fn dstar_wedge(&self, a: NodeId, b: NodeId, mode: DStarMode) -> f64 {
        match mode {
            DStarMode::Analytic => self.dstar_wedge_analytic(a, b),
            DStarMode::Sampled { rotations, seed } => self.dstar_wedge_sampled(a, b, rotations, seed),
        }
    }

    /// `d*([α],[β]) = d(α) + d(β) − 2 d*([α]∧[β])`.
    pub fn dstar_distance(&self, a: NodeId, b: NodeId, mode: DStarMode) -> f64 {
        self.tree.depth(a) as f64 + self.tree.depth(b) as f64 - 2.0 * self.dstar_wedge(a, b, mode)
    }

    /// Ordered pairs in `𝒢^{(k)}(γ)`, optionally restricted to a measure's support closure.
    pub fn grandk_pairs(
        &self,
        gamma: NodeId,
        k: u32,
        opts: PairOptions,
        mode: DStarMode,
        within: Option<&TreeMeasure>,
    ) -> Result<Vec<(NodeId, NodeId)>> {
        let target = self.tree.depth(gamma) + k + 2;
        if target > self.geom.depth() {
            return Ok(Vec::new());
        }
        let groups = self.grand_groups(gamma, target, within);
        let mut out = Vec::new();
        for members in groups.values() {
            for &(ca, a) in members {
                for &(cb, b) in members {
                    if ca != cb && opts.accepts(self.dstar_distance(a, b, mode)) {
                        out.push((a, b));
                    }
                }
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Descendants of `γ` at depth `target`, grouped by the ring of `A²δ` and tagged with
    /// the child of `γ` they descend from.
    pub(crate) fn grand_groups(
        &self,
        gamma: NodeId,
        target: u32,
        within: Option<&TreeMeasure>,
    ) -> std::collections::BTreeMap<NodeId, Vec<(NodeId, NodeId)>> {
        let mut groups: std::collections::BTreeMap<NodeId, Vec<(NodeId, NodeId)>> = Default::default();
        let keep = |x: NodeId| within.is_none_or(|m| m.istar(x) > 0.0);
        for &c in self.tree.children(gamma) {
            if !keep(c) {
                continue;
            }
            let mut stack = vec![c];
            while let Some(x) = stack.pop() {
                let d = self.tree.depth(x);
                if d == target {
                    let g2 = self.tree.ancestor_at(x, 2);
                    groups.entry(self.rings.ring_of[g2]).or_default().push((c, x));
                } else {
                    stack.extend(self.tree.children(x).iter().copied().filter(|&y| keep(y)));
                }
            }
        }
        for v in groups.values_mut() {
            v.sort_unstable();
        }
        groups
    }

    /// Nodes whose centers lie in the tent `T(w)`.
    pub fn tent_nodes(&self, w: &[Complex64]) -> Vec<NodeId> {
        (0..self.len()).filter(|&a| ball::tent_membership(self.center(a), w)).collect()
    }

    pub fn to_file(&self) -> BergmanTreeFile {
        BergmanTreeFile {
            n: self.dim(),
            theta: THETA,
            lambda: LAMBDA,
            depth: self.geom.depth(),
            net: self.geom.options(),
            nodes: (0..self.len())
                .map(|a| BergmanNodeFile {
                    id: a,
                    parent: if a == self.tree.root() { None } else { Some(self.tree.parent(a)) },
                    center: self.center(a).iter().flat_map(|z| [z.re, z.im]).collect(),
                    ring: self.ring_of(a),
                    key: [self.keys[a].level, self.keys[a].ring, self.keys[a].phase],
                })
                .collect(),
        }
    }

    /// Rebuilds the geometry from the recorded options and checks every node against it.
    pub fn from_file(file: &BergmanTreeFile) -> Result<BergmanTree> {
        let geom = Arc::new(BergmanGeometry::build(file.n, file.depth, file.net)?);
        let keys: Vec<KubeKey> = file
            .nodes
            .iter()
            .map(|nd| KubeKey {
                level: nd.key[0],
                ring: nd.key[1],
                phase: nd.key[2],
            })
            .collect();
        let t = BergmanTree::from_keys(geom, keys)?;
        for nd in &file.nodes {
            let a = t
                .node_of(KubeKey {
                    level: nd.key[0],
                    ring: nd.key[1],
                    phase: nd.key[2],
                })
                .ok_or_else(|| Error::Structure(format!("node {} missing after rebuild", nd.id)))?;
            if a != nd.id {
                return Err(Error::Structure(format!("node {} renumbered to {a}", nd.id)));
            }
            let c: Vec<f64> = t.center(a).iter().flat_map(|z| [z.re, z.im]).collect();
            if c.iter().zip(&nd.center).any(|(x, y)| (x - y).abs() > 1e-12) {
                return Err(Error::Structure(format!("center of node {a} differs")));
            }
        }
        Ok(t)
    }
}

fn build_rings(geom: &BergmanGeometry, keys: &[KubeKey]) -> Result<RingTree> {
    let ring_keys: BTreeSet<(u32, u32)> = keys.iter().map(|k| (k.level, k.ring)).collect();
    let ring_keys: Vec<(u32, u32)> = ring_keys.into_iter().collect();
    let index: HashMap<(u32, u32), NodeId> = ring_keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
    let parents: Vec<Option<NodeId>> = ring_keys
        .iter()
        .map(|&(l, r)| {
            if l == 0 {
                Ok(None)
            } else {
                index
                    .get(&(l - 1, geom.ring_parent(l, r)))
                    .map(|&p| Some(p))
                    .ok_or_else(|| Error::Structure(format!("ring parent of {:?} missing", (l, r))))
            }
        })
        .collect::<Result<_>>()?;
    let tree = Tree::from_parents(&parents)?;
    let ring_of = keys.iter().map(|k| index[&(k.level, k.ring)]).collect();
    Ok(RingTree {
        tree,
        keys: ring_keys,
        ring_of,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BergmanNodeFile {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub center: Vec<f64>,
    pub ring: NodeId,
    pub key: [u32; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BergmanTreeFile {
    pub n: usize,
    pub theta: f64,
    pub lambda: f64,
    pub depth: u32,
    pub net: NetOptions,
    pub nodes: Vec<BergmanNodeFile>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmc::BallPoints;

    fn geom(n: usize, depth: u32) -> Arc<BergmanGeometry> {
        Arc::new(BergmanGeometry::build(n, depth, NetOptions::default()).unwrap())
    }

    #[test]
    fn shells_and_radii() {
        for level in 1..20 {
            let r = center_radius(level);
            assert_eq!(shell_index(r), level);
            assert!((r.atanh() - (level as f64 + 0.5) * THETA).abs() < 1e-8);
            // 1 − r² = 4q/(1+q)² with q = 2^{−N−½}
            let q = 2f64.powf(-(level as f64) - 0.5);
            assert!((1.0 - r * r - 4.0 * q / (1.0 + q).powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_counts_grow_like_two_to_the_n() {
        assert_eq!(phase_count(0), 1);
        let mut prev = 1;
        for level in 1..=DEPTH_CAP {
            let m = phase_count(level);
            assert!(m >= prev);
            prev = m;
        }
        let fit = (phase_count(20) as f64 / phase_count(10) as f64).log2() / 10.0;
        assert!((fit - 1.0).abs() < 0.02);
    }

    #[test]
    fn phase_spacing_is_one_separated() {
        for level in 1..16 {
            let m = phase_count(level);
            if m < 2 {
                continue;
            }
            let r = inner_radius(level);
            let a = [Complex64::new(r, 0.0)];
            let b = [Complex64::from_polar(r, 2.0 * PI / m as f64)];
            assert!(ball::bergman_metric(&a, &b).unwrap() >= LAMBDA - 1e-9);
        }
    }

    #[test]
    fn depth_zero_is_root() {
        let t = BergmanTree::full(geom(2, 0), 10).unwrap();
        assert_eq!(t.len(), 1);
        assert!(ball::norm(t.center(0)) == 0.0);
        assert_eq!(t.locate(&[Complex64::new(0.0, 0.0); 2]).unwrap(), 0);
    }

    #[test]
    fn one_dimensional_rings_form_a_path() {
        let t = BergmanTree::full(geom(1, 10), DEFAULT_MAX_NODES).unwrap();
        let rings = &t.rings().tree;
        assert_eq!(rings.len(), 11);
        assert_eq!(rings.max_depth(), 10);
        let counts: Vec<f64> = (4..=10).map(|l| t.tree().nodes_at_depth(l).len() as f64).collect();
        let xs: Vec<f64> = (4..=10).map(|l| l as f64).collect();
        let slope = fit_slope(&xs, &counts.iter().map(|c| c.log2()).collect::<Vec<_>>());
        assert!((slope - 1.0).abs() < 0.1, "slope {slope}");
    }

    fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn centers_invariants_and_self_location() {
        let t = BergmanTree::full(geom(2, 6), DEFAULT_MAX_NODES).unwrap();
        for a in 0..t.len() {
            let d = t.tree().depth(a);
            let c = t.center(a);
            if d > 0 {
                assert!((ball::norm(c) - center_radius(d)).abs() < 1e-12);
            }
            assert_eq!(t.locate(c).unwrap(), a);
            assert_eq!(t.rings().tree.depth(t.ring_of(a)), d);
        }
    }

    #[test]
    fn child_projection_lies_in_parent() {
        let t = BergmanTree::full(geom(2, 6), DEFAULT_MAX_NODES).unwrap();
        for a in 1..t.len() {
            let d = t.tree().depth(a);
            let c = t.center(a);
            let s = if d == 1 { 0.0 } else { center_radius(d - 1) / center_radius(d) };
            let proj: Vec<Complex64> = c.iter().map(|z| z * s).collect();
            assert_eq!(t.locate(&proj).unwrap(), t.tree().parent(a));
        }
    }

    #[test]
    fn compatibility_of_rings() {
        let t = BergmanTree::full(geom(2, 6), DEFAULT_MAX_NODES).unwrap();
        let rt = &t.rings().tree;
        for a in 1..t.len() {
            let p = t.tree().parent(a);
            assert_eq!(rt.parent(t.ring_of(a)), t.ring_of(p));
        }
    }

    #[test]
    fn same_level_centers_are_separated() {
        let t = BergmanTree::full(geom(2, 5), DEFAULT_MAX_NODES).unwrap();
        for level in 1..=5 {
            let nodes = t.tree().nodes_at_depth(level);
            for (i, &a) in nodes.iter().enumerate() {
                for &b in &nodes[i + 1..] {
                    let dist = ball::bergman_metric(t.center(a), t.center(b)).unwrap();
                    assert!(dist >= LAMBDA - 1e-9, "level {level}: {dist}");
                }
            }
        }
    }

    #[test]
    fn locate_is_total_on_sampled_points() {
        let g = geom(2, 6);
        let t = BergmanTree::full(g.clone(), DEFAULT_MAX_NODES).unwrap();
        let mut pts = BallPoints::new(2, 3);
        let rmax = inner_radius(7);
        let mut seen = 0;
        while seen < 20_000 {
            let z = pts.next_point();
            if ball::norm(&z) >= rmax {
                continue;
            }
            let a = t.locate(&z).unwrap();
            assert_eq!(t.tree().depth(a), shell_index(ball::norm(&z)));
            assert_eq!(t.locate(&z).unwrap(), a);
            seen += 1;
        }
        let far = [Complex64::new(inner_radius(7) + 1e-3, 0.0), Complex64::new(0.0, 0.0)];
        assert!(matches!(t.locate(&far), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn closure_contains_located_points() {
        let g = geom(2, 8);
        let mut pts = BallPoints::new(2, 5);
        let rmax = inner_radius(9);
        let points: Vec<_> = std::iter::from_fn(|| Some(pts.next_point()))
            .filter(|z| ball::norm(z) < rmax)
            .take(50)
            .collect();
        let t = BergmanTree::closure_of_points(g.clone(), &points).unwrap();
        let full = BergmanTree::full(g, DEFAULT_MAX_NODES).unwrap();
        for z in &points {
            let a = t.locate(z).unwrap();
            assert_eq!(t.key(a), full.key(full.locate(z).unwrap()));
        }
    }

    #[test]
    fn refuses_over_cap() {
        let g = geom(2, 6);
        assert!(matches!(BergmanTree::full(g, 100), Err(Error::Resource { .. })));
        assert!(BergmanGeometry::build(2, DEPTH_CAP + 1, NetOptions::default()).is_err());
    }

    #[test]
    fn dstar_examples() {
        for d in [4u32, 8, 12] {
            let r = (1.0 - 2f64.powi(-(d as i32))).sqrt();
            let z = [Complex64::new(r, 0.0)];
            assert!((dstar_raw(&z, &z) - (d as f64 - 1.0)).abs() < 0.1);
        }
        let a = [Complex64::new(0.9, 0.0), Complex64::new(0.0, 0.0)];
        let b = [Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.9)];
        assert_eq!(dstar_raw(&a, &b), 0.0);
    }

    #[test]
    fn dstar_extremes() {
        let t = BergmanTree::full(geom(2, 6), DEFAULT_MAX_NODES).unwrap();
        let tr = t.tree();
        for a in (0..t.len()).step_by(7) {
            for b in (0..t.len()).step_by(11) {
                let lo = tr.depth(tr.wedge(a, b).unwrap()) as f64;
                let hi = tr.depth(a).min(tr.depth(b)) as f64;
                let v = t.dstar_wedge_analytic(a, b);
                assert!(lo <= v && v <= hi);
                let s = t.dstar_wedge_sampled(a, b, 4, 1);
                assert!(s <= hi);
            }
        }
    }

    #[test]
    fn grand_pairs_empty_in_one_dimension() {
        let t = BergmanTree::full(geom(1, 10), DEFAULT_MAX_NODES).unwrap();
        for g in t.tree().nodes_at_depth(3) {
            for k in 0..=5 {
                let p = t.grandk_pairs(g, k, PairOptions::default(), DStarMode::Analytic, None).unwrap();
                assert!(p.is_empty());
            }
        }
        let deep = t.tree().nodes_at_depth(9)[0];
        assert!(t.grandk_pairs(deep, 3, PairOptions::default(), DStarMode::Analytic, None).unwrap().is_empty());
    }

    #[test]
    fn file_round_trip() {
        let t = BergmanTree::full(geom(2, 4), DEFAULT_MAX_NODES).unwrap();
        let json = serde_json::to_string(&t.to_file()).unwrap();
        let back = BergmanTree::from_file(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.tree(), t.tree());
        assert_eq!(back.rings().ring_of, t.rings().ring_of);
    }
}
