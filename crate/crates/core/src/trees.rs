//! Growing random trees: weighted random recursive trees, (weighted) Yule
//! trees, binary Yule trees and binary search trees.
//!
//! Nodes live in an arena in birth order, so a parent index is always
//! smaller than its child's. Children lists are not stored; per-subtree
//! quantities come from a reverse pass over the arena.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::Point;

pub const NO_PARENT: u32 = u32::MAX;
pub const DEFAULT_NODE_CAP: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeKind {
    /// Weighted random recursive tree (root weight rho, others 1).
    Wrrt,
    /// Yule tree; weighted when the root weight differs from 1.
    Yule,
    BinaryYule,
    Bst,
}

impl TreeKind {
    pub fn is_binary(self) -> bool {
        matches!(self, TreeKind::BinaryYule | TreeKind::Bst)
    }

    pub fn is_continuous(self) -> bool {
        matches!(self, TreeKind::Yule | TreeKind::BinaryYule)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Plain,
    Internal,
    External,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    None,
    Left,
    Right,
}

/// When a growth run stops.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Until {
    /// Continuous time horizon.
    Time(f64),
    /// Number of births (plain kinds) or deaths (binary kinds).
    Size(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowingTree {
    kind: TreeKind,
    root_weight: f64,
    parent: Vec<u32>,
    /// Birth time, or birth step for discrete kinds.
    birth: Vec<f64>,
    /// Death time/step for binary kinds (`INFINITY` while external); empty otherwise.
    death: Vec<f64>,
    /// Child side for binary kinds; empty otherwise.
    side: Vec<Side>,
}

impl GrowingTree {
    fn with_root(kind: TreeKind, root_weight: f64, capacity: usize) -> Self {
        let mut t = GrowingTree {
            kind,
            root_weight,
            parent: Vec::with_capacity(capacity),
            birth: Vec::with_capacity(capacity),
            death: Vec::new(),
            side: Vec::new(),
        };
        t.parent.push(NO_PARENT);
        t.birth.push(0.0);
        if kind.is_binary() {
            t.death.reserve(capacity);
            t.side.reserve(capacity);
            t.death.push(f64::INFINITY);
            t.side.push(Side::None);
        }
        t
    }

    pub fn kind(&self) -> TreeKind {
        self.kind
    }

    pub fn root_weight(&self) -> f64 {
        self.root_weight
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Number of non-root nodes.
    pub fn non_root(&self) -> usize {
        self.len() - 1
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        match self.parent[v] {
            NO_PARENT => None,
            p => Some(p as usize),
        }
    }

    pub fn parents(&self) -> &[u32] {
        &self.parent
    }

    pub fn birth(&self, v: usize) -> f64 {
        self.birth[v]
    }

    pub fn births(&self) -> &[f64] {
        &self.birth
    }

    pub fn death(&self, v: usize) -> Option<f64> {
        self.death.get(v).copied().filter(|d| d.is_finite())
    }

    pub fn side(&self, v: usize) -> Side {
        self.side.get(v).copied().unwrap_or(Side::None)
    }

    pub fn status(&self, v: usize) -> NodeStatus {
        match self.death.get(v) {
            None => NodeStatus::Plain,
            Some(d) if d.is_finite() => NodeStatus::Internal,
            Some(_) => NodeStatus::External,
        }
    }

    pub fn node_weight(&self, v: usize) -> f64 {
        if v == 0 {
            self.root_weight
        } else {
            1.0
        }
    }

    /// `rho + (N - 1)`.
    pub fn total_weight(&self) -> f64 {
        self.root_weight + self.non_root() as f64
    }

    pub fn internal_count(&self) -> usize {
        self.death.iter().filter(|d| d.is_finite()).count()
    }

    pub fn external_count(&self) -> usize {
        self.death.iter().filter(|d| d.is_infinite()).count()
    }

    /// Graph distance from the root, per node.
    pub fn depths(&self) -> Vec<u32> {
        let mut depth = vec![0u32; self.len()];
        for v in 1..self.len() {
            depth[v] = depth[self.parent[v] as usize] + 1;
        }
        depth
    }

    /// Node count of the subtree rooted at each node.
    pub fn subtree_sizes(&self) -> Vec<u32> {
        let mut size = vec![1u32; self.len()];
        for v in (1..self.len()).rev() {
            size[self.parent[v] as usize] += size[v];
        }
        size
    }

    pub fn root_degree(&self) -> usize {
        self.parent.iter().filter(|&&p| p == 0).count()
    }

    /// The tree as it was at `clock` (a time, or a step for discrete kinds):
    /// nodes born by then, with binary nodes dying later turned back into
    /// external ones.
    pub fn snapshot(&self, clock: f64) -> GrowingTree {
        let len = self.birth.partition_point(|&b| b <= clock).max(1);
        let mut t = GrowingTree {
            kind: self.kind,
            root_weight: self.root_weight,
            parent: self.parent[..len].to_vec(),
            birth: self.birth[..len].to_vec(),
            death: Vec::new(),
            side: Vec::new(),
        };
        if self.kind.is_binary() {
            t.death = self.death[..len].iter().map(|&d| if d <= clock { d } else { f64::INFINITY }).collect();
            t.side = self.side[..len].to_vec();
        }
        t
    }

    /// Checks the arena invariants: a unique root at index 0, parents before
    /// children, and for binary kinds one left and one right child per
    /// internal node with `#external = #internal + 1`.
    pub fn validate(&self) -> Result<()> {
        if self.parent.first() != Some(&NO_PARENT) {
            return Err(Error::param("node 0 must be the root"));
        }
        for v in 1..self.len() {
            if self.parent[v] as usize >= v {
                return Err(Error::param(format!("node {v} has parent {} not before it", self.parent[v])));
            }
            if self.birth[v] < self.birth[self.parent[v] as usize] {
                return Err(Error::param(format!("node {v} born before its parent")));
            }
        }
        if self.kind.is_binary() {
            let mut left = vec![0u8; self.len()];
            let mut right = vec![0u8; self.len()];
            for v in 1..self.len() {
                let p = self.parent[v] as usize;
                match self.side[v] {
                    Side::Left => left[p] += 1,
                    Side::Right => right[p] += 1,
                    Side::None => return Err(Error::param(format!("binary node {v} has no side"))),
                }
            }
            for v in 0..self.len() {
                let expect = u8::from(self.status(v) == NodeStatus::Internal);
                if left[v] != expect || right[v] != expect {
                    return Err(Error::param(format!("node {v} has wrong children")));
                }
            }
            if self.external_count() != self.internal_count() + 1 {
                return Err(Error::param("#external != #internal + 1"));
            }
        }
        Ok(())
    }

    /// Fractions `N_n(u_k) / n` of the non-root nodes lying in the subtree of
    /// each root daughter `u_k`, in order of appearance.
    pub fn branch_fractions(&self) -> Result<BranchFractions> {
        if self.kind.is_binary() {
            return Err(Error::param("branch fractions are defined for recursive and Yule trees"));
        }
        let n = self.non_root();
        if n == 0 {
            return Err(Error::param("branch fractions need at least one non-root node"));
        }
        let sizes = self.subtree_sizes();
        let fractions = (1..self.len())
            .filter(|&v| self.parent[v] == 0)
            .map(|v| sizes[v] as f64 / n as f64)
            .collect();
        Ok(BranchFractions { fractions })
    }

    fn push_plain(&mut self, parent: usize, birth: f64) {
        self.parent.push(parent as u32);
        self.birth.push(birth);
    }

    fn split(&mut self, v: usize, clock: f64) {
        self.death[v] = clock;
        for side in [Side::Left, Side::Right] {
            self.parent.push(v as u32);
            self.birth.push(clock);
            self.death.push(f64::INFINITY);
            self.side.push(side);
        }
    }

    /// One JSON object per node: `{idx, parent, birth, status, side}`.
    /// The root line also carries the tree kind and root weight.
    pub fn records(&self) -> impl Iterator<Item = NodeRecord> + '_ {
        (0..self.len()).map(move |v| NodeRecord {
            idx: v,
            parent: self.parent(v),
            birth: self.birth[v],
            status: self.status(v),
            side: self.side(v),
            death: self.death(v),
            kind: (v == 0).then_some(self.kind),
            w: (v == 0).then_some(self.root_weight),
            x: None,
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for rec in self.records() {
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<B: BufRead>(input: B) -> Result<GrowingTree> {
        let records = read_records(input)?;
        Self::from_records(&records)
    }

    pub fn from_records(records: &[NodeRecord]) -> Result<GrowingTree> {
        let root = records.first().ok_or_else(|| Error::param("empty tree file"))?;
        let kind = root.kind.unwrap_or(TreeKind::Wrrt);
        let mut t = GrowingTree::with_root(kind, root.w.unwrap_or(1.0), records.len());
        if !(t.root_weight > 0.0) {
            return Err(Error::InvalidWeight(t.root_weight));
        }
        t.birth[0] = root.birth;
        if kind.is_binary() {
            t.death[0] = root.death.unwrap_or(f64::INFINITY);
        }
        for (i, rec) in records.iter().enumerate().skip(1) {
            if rec.idx != i {
                return Err(Error::param(format!("record {i} has idx {}", rec.idx)));
            }
            let p = rec.parent.ok_or_else(|| Error::param(format!("node {i} has no parent")))?;
            t.parent.push(p as u32);
            t.birth.push(rec.birth);
            if kind.is_binary() {
                t.death.push(match rec.status {
                    NodeStatus::Internal => rec.death.unwrap_or(rec.birth),
                    _ => f64::INFINITY,
                });
                t.side.push(rec.side);
            }
        }
        t.validate()?;
        Ok(t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub idx: usize,
    pub parent: Option<usize>,
    pub birth: f64,
    pub status: NodeStatus,
    pub side: Side,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub death: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<TreeKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
    /// Branching-random-walk label, when exported from a labelled tree.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Point>,
}

pub fn read_records<B: BufRead>(input: B) -> Result<Vec<NodeRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// First passage times of the total weight: `tau[n]` is the first time the
/// tree has `n` non-root nodes (`tau[0] = 0`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StoppingRecord {
    pub tau: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchFractions {
    pub fractions: Vec<f64>,
}

impl BranchFractions {
    pub fn sum(&self) -> f64 {
        self.fractions.iter().sum()
    }
}

/// Parent of the next node when the root has weight `rho` and `k` non-root
/// nodes have weight 1; `target` is uniform on `[0, rho + k)`.
#[inline]
pub(crate) fn weighted_parent(target: f64, rho: f64, k: usize) -> usize {
    if target < rho || k == 0 {
        0
    } else {
        1 + ((target - rho) as usize).min(k - 1)
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("root weight must be > 0, got {rho}")))
    }
}

fn check_until(until: Until) -> Result<()> {
    match until {
        Until::Time(t) if !(t >= 0.0 && t.is_finite()) => Err(Error::param(format!("time horizon must be >= 0, got {t}"))),
        _ => Ok(()),
    }
}

/// Weighted random recursive tree with `n` non-root nodes: each new node
/// picks its parent with probability proportional to weight.
pub fn grow_wrrt<R: Rng + ?Sized>(n: usize, rho: f64, rng: &mut R) -> Result<GrowingTree> {
    check_rho(rho)?;
    let mut t = GrowingTree::with_root(TreeKind::Wrrt, rho, n + 1);
    for k in 0..n {
        let target = rng.random::<f64>() * (rho + k as f64);
        t.push_plain(weighted_parent(target, rho, k), (k + 1) as f64);
    }
    Ok(t)
}

pub fn grow_yule<R: Rng + ?Sized>(until: Until, rho: f64, rng: &mut R) -> Result<(GrowingTree, StoppingRecord)> {
    grow_yule_capped(until, rho, DEFAULT_NODE_CAP, rng)
}

/// Event-driven (weighted) Yule tree: the next birth comes after an
/// Exponential(total weight) wait and its parent is chosen proportionally to
/// weight.
pub fn grow_yule_capped<R: Rng + ?Sized>(
    until: Until,
    rho: f64,
    node_cap: usize,
    rng: &mut R,
) -> Result<(GrowingTree, StoppingRecord)> {
    check_rho(rho)?;
    check_until(until)?;
    let capacity = match until {
        Until::Size(n) => n + 1,
        Until::Time(_) => 16,
    };
    let mut t = GrowingTree::with_root(TreeKind::Yule, rho, capacity.min(node_cap));
    let mut tau = Vec::with_capacity(capacity);
    tau.push(0.0);
    let mut clock = 0.0;
    loop {
        let k = t.non_root();
        if let Until::Size(n) = until {
            if k >= n {
                break;
            }
        }
        let total = rho + k as f64;
        let wait: f64 = rng.sample::<f64, _>(Exp1) / total;
        if let Until::Time(horizon) = until {
            if clock + wait > horizon {
                break;
            }
        }
        if t.len() >= node_cap {
            return Err(Error::NodeCap { cap: node_cap });
        }
        clock += wait;
        let parent = weighted_parent(rng.random::<f64>() * total, rho, k);
        t.push_plain(parent, clock);
        tau.push(clock);
    }
    Ok((t, StoppingRecord { tau }))
}

/// Total weight `rho + N_t` of a weighted Yule tree at time `t`, simulated
/// event by event without keeping the tree.
pub fn yule_total_weight<R: Rng + ?Sized>(t: f64, rho: f64, node_cap: usize, rng: &mut R) -> Result<f64> {
    check_rho(rho)?;
    check_until(Until::Time(t))?;
    let mut clock = 0.0;
    let mut k = 0usize;
    loop {
        let total = rho + k as f64;
        clock += rng.sample::<f64, _>(Exp1) / total;
        if clock > t {
            return Ok(total);
        }
        k += 1;
        if k >= node_cap {
            return Err(Error::NodeCap { cap: node_cap });
        }
    }
}

/// Weighted Yule tree with integer root weight built by running `copies`
/// independent unit Yule trees up to time `t` and merging their roots.
pub fn grow_yule_merged<R: Rng + ?Sized>(t: f64, copies: usize, rng: &mut R) -> Result<GrowingTree> {
    if copies == 0 {
        return Err(Error::param("need at least one copy"));
    }
    // (birth, copy, local parent index)
    let mut births: Vec<(f64, usize, usize)> = Vec::new();
    let mut offsets = Vec::with_capacity(copies);
    for c in 0..copies {
        let (tree, _) = grow_yule(Until::Time(t), 1.0, rng)?;
        offsets.push(tree.len());
        for v in 1..tree.len() {
            births.push((tree.birth(v), c, tree.parent[v] as usize));
        }
    }
    // Sorting by birth keeps each copy's local order, so local index v of
    // copy c is the v-th entry of that copy in the merged order.
    births.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut local_to_global: Vec<Vec<usize>> = offsets.iter().map(|&n| vec![0; n]).collect();
    let mut seen = vec![0usize; copies];
    let mut merged = GrowingTree::with_root(TreeKind::Yule, copies as f64, births.len() + 1);
    for (birth, c, local_parent) in births {
        seen[c] += 1;
        let global = merged.len();
        local_to_global[c][seen[c]] = global;
        merged.push_plain(local_to_global[c][local_parent], birth);
    }
    Ok(merged)
}

/// Random binary search tree after `n` insertions: each step turns a
/// uniformly chosen external node into an internal one with two external
/// children.
pub fn grow_bst<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<GrowingTree> {
    let mut t = GrowingTree::with_root(TreeKind::Bst, 1.0, 2 * n + 1);
    let mut external: Vec<u32> = Vec::with_capacity(n + 1);
    external.push(0);
    for step in 1..=n {
        let i = rng.random_range(0..external.len());
        let v = external.swap_remove(i) as usize;
        let first = t.len() as u32;
        t.split(v, step as f64);
        external.push(first);
        external.push(first + 1);
    }
    Ok(t)
}

pub fn grow_binary_yule<R: Rng + ?Sized>(until: Until, rng: &mut R) -> Result<GrowingTree> {
    grow_binary_yule_capped(until, DEFAULT_NODE_CAP, rng)
}

/// Binary Yule tree: every living (external) node dies at rate 1 and leaves
/// a left and a right child.
pub fn grow_binary_yule_capped<R: Rng + ?Sized>(until: Until, node_cap: usize, rng: &mut R) -> Result<GrowingTree> {
    check_until(until)?;
    let capacity = match until {
        Until::Size(n) => 2 * n + 1,
        Until::Time(_) => 16,
    };
    let mut t = GrowingTree::with_root(TreeKind::BinaryYule, 1.0, capacity.min(node_cap));
    let mut external: Vec<u32> = vec![0];
    let mut clock = 0.0;
    let mut deaths = 0usize;
    loop {
        if let Until::Size(n) = until {
            if deaths >= n {
                break;
            }
        }
        let wait: f64 = rng.sample::<f64, _>(Exp1) / external.len() as f64;
        if let Until::Time(horizon) = until {
            if clock + wait > horizon {
                break;
            }
        }
        if t.len() + 2 > node_cap {
            return Err(Error::NodeCap { cap: node_cap });
        }
        clock += wait;
        let i = rng.random_range(0..external.len());
        let v = external.swap_remove(i) as usize;
        let first = t.len() as u32;
        t.split(v, clock);
        external.push(first);
        external.push(first + 1);
        deaths += 1;
    }
    Ok(t)
}

/// Stick-breaking sample `V_k = W_k prod_{j<k} (1 - W_j)`, `W_j` iid Beta(1, rho).
pub fn sample_gem<R: Rng + ?Sized>(rho: f64, k: usize, rng: &mut R) -> Result<Vec<f64>> {
    check_rho(rho)?;
    if k == 0 {
        return Err(Error::param("need k >= 1 sticks"));
    }
    let mut remaining = 1.0;
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        // Inverse CDF of Beta(1, rho): 1 - (1 - w)^rho = u.
        let u: f64 = rng.random();
        let w = 1.0 - (1.0 - u).powf(1.0 / rho);
        out.push(remaining * w);
        remaining *= 1.0 - w;
    }
    Ok(out)
}
