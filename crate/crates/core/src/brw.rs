//! Branching random walks: labels `X_root = 0`, `X_child = X_parent + eta_child`.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{dot, AtomicMeasure, Point};
use crate::offsets::{OffsetDistribution, PairedOffset};
use crate::trees::{GrowingTree, NodeStatus, Side};

/// Which nodes an empirical measure counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeSet {
    All,
    Internal,
    External,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelledTree {
    tree: GrowingTree,
    dim: usize,
    labels: Vec<f64>,
    offsets: Option<Vec<f64>>,
}

impl LabelledTree {
    pub fn tree(&self) -> &GrowingTree {
        &self.tree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn label(&self, v: usize) -> &[f64] {
        &self.labels[v * self.dim..(v + 1) * self.dim]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// The offset that moved `v` away from its parent, if offsets were kept.
    pub fn offset(&self, v: usize) -> Option<&[f64]> {
        self.offsets.as_ref().map(|o| &o[v * self.dim..(v + 1) * self.dim])
    }

    pub fn has_offsets(&self) -> bool {
        self.offsets.is_some()
    }

    pub fn drop_offsets(&mut self) {
        self.offsets = None;
    }

    fn selected(&self, which: NodeSet) -> Result<impl Iterator<Item = usize> + '_> {
        let want = match which {
            NodeSet::All => None,
            NodeSet::Internal | NodeSet::External if !self.tree.kind().is_binary() => {
                return Err(Error::param("internal/external node sets need a binary tree"))
            }
            NodeSet::Internal => Some(NodeStatus::Internal),
            NodeSet::External => Some(NodeStatus::External),
        };
        Ok((0..self.len()).filter(move |&v| want.is_none_or(|w| self.tree.status(v) == w)))
    }

    /// One atom per selected node at its label, weighted by node weight.
    pub fn empirical_measure(&self, which: NodeSet) -> Result<AtomicMeasure> {
        let mut m = AtomicMeasure::with_capacity(self.dim, self.len())?;
        for v in self.selected(which)? {
            m.push_unchecked(self.label(v), self.tree.node_weight(v));
        }
        Ok(m)
    }

    /// `sum_v w_v exp(i s . X_v)` over the selected nodes.
    pub fn char_sum(&self, which: NodeSet, s: &[f64]) -> Result<Complex64> {
        if s.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: s.len() });
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for v in self.selected(which)? {
            let (sin, cos) = dot(s, self.label(v)).sin_cos();
            acc += Complex64::new(cos, sin) * self.tree.node_weight(v);
        }
        Ok(acc)
    }

    /// Labels projected on `u`, one value per selected node.
    pub fn projected(&self, which: NodeSet, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: u.len() });
        }
        Ok(self.selected(which)?.map(|v| dot(u, self.label(v))).collect())
    }

    /// Recomputes every label from the stored offsets and compares bit for bit.
    pub fn check_recursion(&self) -> Result<()> {
        let offsets = self.offsets.as_ref().ok_or_else(|| Error::param("offsets were not retained"))?;
        if self.label(0).iter().any(|&x| x != 0.0) {
            return Err(Error::param("root label is not zero"));
        }
        for v in 1..self.len() {
            let p = self.tree.parent(v).expect("non-root");
            for j in 0..self.dim {
                let expect = self.labels[p * self.dim + j] + offsets[v * self.dim + j];
                if self.labels[v * self.dim + j].to_bits() != expect.to_bits() {
                    return Err(Error::param(format!("label recursion broken at node {v}")));
                }
            }
        }
        Ok(())
    }

    /// Tree JSON lines with an extra `"x"` label per node.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for (v, mut rec) in self.tree.records().enumerate() {
            rec.x = Some(Point::from(self.label(v)));
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Labels every node with an iid offset from `dist`, drawn from `rng`
/// independently of the tree. A root offset is drawn and discarded.
pub fn assign_labels<R: Rng>(tree: GrowingTree, dist: &OffsetDistribution, rng: &mut R) -> LabelledTree {
    assign_labels_with(tree, dist, rng, true)
}

pub fn assign_labels_with<R: Rng>(
    tree: GrowingTree,
    dist: &OffsetDistribution,
    rng: &mut R,
    keep_offsets: bool,
) -> LabelledTree {
    let d = dist.dim();
    let n = tree.len();
    let mut labels = vec![0.0; n * d];
    let mut offsets = vec![0.0; n * d];
    let mut eta = vec![0.0; d];
    dist.sample_into(rng, &mut eta);
    if keep_offsets {
        offsets[..d].copy_from_slice(&eta);
    }
    for v in 1..n {
        let p = tree.parents()[v] as usize;
        dist.sample_into(rng, &mut eta);
        for j in 0..d {
            labels[v * d + j] = labels[p * d + j] + eta[j];
        }
        if keep_offsets {
            offsets[v * d..(v + 1) * d].copy_from_slice(&eta);
        }
    }
    LabelledTree { tree, dim: d, labels, offsets: keep_offsets.then_some(offsets) }
}

/// Labels a binary tree with one `(eta_L, eta_R)` draw per internal node,
/// in the order the nodes split. Left children take `eta_L`, right `eta_R`.
pub fn assign_labels_binary<R: Rng>(tree: GrowingTree, pair: &PairedOffset, rng: &mut R) -> Result<LabelledTree> {
    if !tree.kind().is_binary() {
        return Err(Error::param("paired offsets need a binary tree"));
    }
    let d = pair.dim();
    let n = tree.len();
    let mut labels = vec![0.0; n * d];
    let mut offsets = vec![0.0; n * d];
    let (mut l, mut r) = (vec![0.0; d], vec![0.0; d]);
    // Children are stored as consecutive (left, right) pairs.
    for v in (1..n).step_by(2) {
        let p = tree.parent(v).expect("non-root");
        if tree.side(v) != Side::Left || tree.side(v + 1) != Side::Right || tree.parent(v + 1) != Some(p) {
            return Err(Error::param(format!("nodes {v}, {} are not a sibling pair", v + 1)));
        }
        pair.sample_into(rng, &mut l, &mut r);
        for j in 0..d {
            labels[v * d + j] = labels[p * d + j] + l[j];
            labels[(v + 1) * d + j] = labels[p * d + j] + r[j];
        }
        offsets[v * d..(v + 1) * d].copy_from_slice(&l);
        offsets[(v + 1) * d..(v + 2) * d].copy_from_slice(&r);
    }
    Ok(LabelledTree { tree, dim: d, labels, offsets: Some(offsets) })
}
