//! Standard and fattened dyadic trees of the unit disk.
//!
//! Level `N` is the annulus `1 − 2^{−N} ≤ |z| < 1 − 2^{−N−1}` (level 0 is
//! `|z| < ½`). The standard tree `𝒯` cuts level `N` into `2^N` congruent
//! sectors; the fattened tree `𝔉` into `⌈2^{N/2}⌉`. A kube's parent is the
//! kube of the previous level cut by the radius through its center; a center
//! on a sector boundary goes to the sector starting there.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{NodeId, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiskKind {
    Standard,
    Fattened,
}

pub fn kubes_per_level(kind: DiskKind, level: u32) -> usize {
    match kind {
        DiskKind::Standard => 1usize << level,
        DiskKind::Fattened => 2f64.powf(level as f64 / 2.0).ceil() as usize,
    }
}

/// `r_N = 1 − 2^{−N}`, with `r_0 = 0`.
pub fn level_radius(level: u32) -> f64 {
    if level == 0 {
        0.0
    } else {
        1.0 - 2f64.powi(-(level as i32))
    }
}

/// Cap on explicitly materialized disk trees.
pub const DISK_NODE_CAP: usize = 1 << 22;

#[derive(Debug, Clone)]
pub struct DiskTree {
    kind: DiskKind,
    depth: u32,
    tree: Tree,
    offsets: Vec<usize>,
}

impl DiskTree {
    pub fn new(kind: DiskKind, depth: u32) -> Result<DiskTree> {
        let total: usize = (0..=depth).map(|l| kubes_per_level(kind, l)).sum();
        if depth > 40 || total > DISK_NODE_CAP {
            return Err(Error::Resource {
                what: format!("{kind:?} disk tree of depth {depth}"),
                estimate: total as u64,
                cap: DISK_NODE_CAP as u64,
            });
        }
        let mut offsets = Vec::with_capacity(depth as usize + 2);
        let mut parents = Vec::with_capacity(total);
        offsets.push(0);
        parents.push(None);
        for level in 1..=depth {
            let k = kubes_per_level(kind, level);
            let kp = kubes_per_level(kind, level - 1);
            let base = offsets[level as usize - 1];
            offsets.push(parents.len());
            for j in 0..k {
                let p = ((j as f64 + 0.5) * kp as f64 / k as f64).floor() as usize;
                parents.push(Some(base + p.min(kp - 1)));
            }
        }
        offsets.push(parents.len());
        let tree = Tree::from_parents(&parents)?;
        Ok(DiskTree {
            kind,
            depth,
            tree,
            offsets,
        })
    }

    pub fn kind(&self) -> DiskKind {
        self.kind
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn node(&self, level: u32, j: usize) -> NodeId {
        self.offsets[level as usize] + j
    }

    /// `(level, sector index)` of a node.
    pub fn position(&self, a: NodeId) -> (u32, usize) {
        let level = self.tree.depth(a);
        (level, a - self.offsets[level as usize])
    }

    pub fn level_nodes(&self, level: u32) -> std::ops::Range<NodeId> {
        self.offsets[level as usize]..self.offsets[level as usize + 1]
    }

    /// Angular interval `[θ₀, θ₁)` of a kube.
    pub fn sector(&self, a: NodeId) -> (f64, f64) {
        let (level, j) = self.position(a);
        let k = kubes_per_level(self.kind, level) as f64;
        (2.0 * PI * j as f64 / k, 2.0 * PI * (j + 1) as f64 / k)
    }

    pub fn center(&self, a: NodeId) -> Complex64 {
        let (level, _) = self.position(a);
        let (t0, t1) = self.sector(a);
        let r = if level == 0 {
            0.0
        } else {
            0.5 * (level_radius(level) + level_radius(level + 1))
        };
        Complex64::from_polar(r, 0.5 * (t0 + t1))
    }

    /// Kube containing `z`; points beyond the last level go to the deepest level.
    pub fn locate(&self, z: Complex64) -> Result<NodeId> {
        let r = z.norm();
        if r >= 1.0 || !r.is_finite() {
            return Err(Error::Domain(format!("|z| = {r} is not below 1")));
        }
        let level = if r < 0.5 {
            0
        } else {
            ((-(1.0 - r).log2()).floor() as u32).min(self.depth)
        };
        let k = kubes_per_level(self.kind, level);
        let t = z.arg().rem_euclid(2.0 * PI);
        let j = ((t / (2.0 * PI) * k as f64).floor() as usize).min(k - 1);
        Ok(self.node(level, j))
    }
}

/// The fattened tree together with the standard tree of the same depth.
pub fn fattened_disk_tree(depth: u32) -> Result<(DiskTree, DiskTree)> {
    Ok((
        DiskTree::new(DiskKind::Fattened, depth)?,
        DiskTree::new(DiskKind::Standard, depth)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_counts() {
        assert_eq!(kubes_per_level(DiskKind::Standard, 4), 16);
        assert_eq!(kubes_per_level(DiskKind::Fattened, 4), 4);
        assert_eq!(kubes_per_level(DiskKind::Standard, 0), 1);
        assert_eq!(kubes_per_level(DiskKind::Fattened, 0), 1);
        assert!(kubes_per_level(DiskKind::Fattened, 1) >= 1);
    }

    #[test]
    fn standard_tree_is_binary() {
        let t = DiskTree::new(DiskKind::Standard, 6).unwrap();
        assert_eq!(t.tree(), &Tree::binary(6));
    }

    #[test]
    fn child_centers_lie_in_parent_sector() {
        for kind in [DiskKind::Standard, DiskKind::Fattened] {
            let t = DiskTree::new(kind, 12).unwrap();
            for a in 1..t.len() {
                let p = t.tree().parent(a);
                let (t0, t1) = t.sector(p);
                let c = t.center(a).arg().rem_euclid(2.0 * PI);
                assert!(t0 - 1e-12 <= c && c <= t1 + 1e-12, "{kind:?} {a} {:?} {t0} {c} {t1}", t.position(a));
                assert_eq!(t.locate(t.center(a)).unwrap(), a, "{kind:?} {a} {:?}", t.position(a));
            }
        }
    }

    #[test]
    fn standard_kube_meets_at_most_two_fattened() {
        let (_, s) = fattened_disk_tree(12).unwrap();
        for level in 0..=12 {
            let kf = kubes_per_level(DiskKind::Fattened, level) as f64;
            for a in s.level_nodes(level) {
                let (t0, t1) = s.sector(a);
                let first = (t0 / (2.0 * PI) * kf).floor() as i64;
                let last = ((t1 / (2.0 * PI) * kf).ceil() as i64) - 1;
                assert!(last - first + 1 <= 2);
            }
        }
    }

    #[test]
    fn fattened_size_at_depth_24() {
        let f = DiskTree::new(DiskKind::Fattened, 24).unwrap();
        assert!(f.len() < 20_000);
        assert!(DiskTree::new(DiskKind::Standard, 30).is_err());
    }

    #[test]
    fn locate_tail_goes_to_last_level() {
        let t = DiskTree::new(DiskKind::Standard, 4).unwrap();
        let a = t.locate(Complex64::new(0.999, 0.0)).unwrap();
        assert_eq!(t.tree().depth(a), 4);
        assert_eq!(t.locate(Complex64::new(0.1, 0.0)).unwrap(), 0);
    }
}
