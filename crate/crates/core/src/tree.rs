//! The Eigen Memory Tree.
//!
//! Memories live in the leaves of a binary tree. Each internal node holds a
//! unit router (the approximate top principal component of the memories that
//! were in the node when it split) and a boundary: a key goes left when its
//! projection onto the router is `<=` the boundary, otherwise right. A query
//! routes to a single leaf and returns the memory the [`Scorer`] ranks best,
//! so the cost of a query is bounded by the leaf size rather than the number
//! of stored memories.
//!
//! Nodes are kept in an arena and memories in a slab; an ordered index from
//! access tick to memory supports least-recently-used eviction when a memory
//! budget is configured.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::scorer::{Scorer, ScorerConfig};

/// Projections closer than this are treated as equal when choosing a split.
pub const SPLIT_TIE_TOLERANCE: f64 = 1e-12;

const SCORER_STREAM: u64 = 0;
const ROUTER_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryKey(Box<[f64]>);

impl MemoryKey {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values, "memory key")?;
        Ok(MemoryKey(values.into_boxed_slice()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[f64]> for MemoryKey {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Memory {
    pub key: MemoryKey,
    pub value: f64,
    /// Tick of the insertion or of the last query that returned this memory.
    pub last_access: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MemoryId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Routing rule of an internal node.
#[derive(Clone, Debug, PartialEq)]
pub struct Router {
    direction: Vec<f64>,
    boundary: f64,
}

impl Router {
    /// `direction` must have unit L2 norm (within 1e-9).
    pub fn new(direction: Vec<f64>, boundary: f64) -> Result<Self> {
        check_finite(&direction, "router direction")?;
        if !boundary.is_finite() {
            return Err(Error::NonFinite("router boundary"));
        }
        let norm = dot(&direction, &direction).sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "router direction must be a unit vector, norm is {norm}"
            )));
        }
        Ok(Router { direction, boundary })
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn boundary(&self) -> f64 {
        self.boundary
    }

    pub fn project(&self, key: &[f64]) -> f64 {
        dot(&self.direction, key)
    }

    pub fn route(&self, key: &[f64]) -> Result<Side> {
        check_dim(self.direction.len(), key.len())?;
        Ok(self.route_unchecked(key))
    }

    #[inline]
    fn route_unchecked(&self, key: &[f64]) -> Side {
        if self.project(key) <= self.boundary {
            Side::Left
        } else {
            Side::Right
        }
    }
}

#[derive(Clone, Debug)]
enum Node {
    Internal {
        router: Router,
        left: NodeId,
        right: NodeId,
    },
    Leaf {
        /// In insertion order; splits and evictions preserve relative order.
        memories: Vec<MemoryId>,
        /// A split was attempted and every projection tied.
        deferred: bool,
    },
}

#[derive(Clone, Debug)]
struct Slot {
    memory: Memory,
    leaf: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// A leaf splits once it holds this many memories.
    pub leaf_capacity: usize,
    /// Maximum number of resident memories; least-recently-used are evicted.
    pub memory_budget: Option<usize>,
    pub seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            leaf_capacity: 100,
            memory_budget: None,
            seed: 0,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.leaf_capacity < 2 {
            return Err(Error::InvalidConfig(format!(
                "leaf capacity must be at least 2, got {}",
                self.leaf_capacity
            )));
        }
        if self.memory_budget == Some(0) {
            return Err(Error::InvalidConfig("memory budget must be at least 1".into()));
        }
        Ok(())
    }
}

/// A memory returned by [`Emt::query`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Recall<'a> {
    pub key: &'a [f64],
    pub value: f64,
}

/// Where a key lands, without touching any state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Probe {
    pub depth: usize,
    /// Number of memories a query for this key would score.
    pub candidates: usize,
    pub deferred: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TreeStats {
    pub memories: usize,
    pub internal_nodes: usize,
    pub leaves: usize,
    pub empty_leaves: usize,
    pub deferred_leaves: usize,
    pub max_depth: usize,
    pub max_leaf_size: usize,
}

/// Approximates the top principal component of `keys` with one pass of Oja's
/// rule over the mean-centred keys, in order, with step size `1/n`, starting
/// from a random unit vector drawn from `rng`.
///
/// If all keys are identical the starting vector is returned unchanged.
pub fn top_eigen<K, R>(keys: &[K], rng: &mut R) -> Result<Vec<f64>>
where
    K: AsRef<[f64]>,
    R: Rng + ?Sized,
{
    let dim = keys.first().map_or(0, |k| k.as_ref().len());
    let init = loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if dim == 0 || normalize(&mut v) > 0.0 {
            break v;
        }
    };
    oja_pass(keys, init)
}

/// One Oja pass from an explicit starting vector, which is normalized first.
pub fn oja_pass<K: AsRef<[f64]>>(keys: &[K], init: Vec<f64>) -> Result<Vec<f64>> {
    if keys.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            found: keys.len(),
        });
    }
    let dim = init.len();
    for k in keys {
        check_dim(dim, k.as_ref().len())?;
    }
    let mut v = init;
    check_finite(&v, "initial eigenvector")?;
    if normalize(&mut v) == 0.0 {
        return Err(Error::InvalidConfig("initial eigenvector must be non-zero".into()));
    }
    let n = keys.len() as f64;
    let mut mean = vec![0.0; dim];
    for k in keys {
        for (m, x) in mean.iter_mut().zip(k.as_ref()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut centred = vec![0.0; dim];
    for (i, k) in keys.iter().enumerate() {
        for ((c, x), m) in centred.iter_mut().zip(k.as_ref()).zip(&mean) {
            *c = x - m;
        }
        let step = dot(&centred, &v) / (i + 1) as f64;
        for (vi, c) in v.iter_mut().zip(&centred) {
            *vi += step * c;
        }
        normalize(&mut v);
    }
    Ok(v)
}

/// Picks the split boundary for a set of projections.
///
/// The boundary is the lower median, so the left child (`<=`) is never empty.
/// When ties at the top would leave the right child empty, the largest
/// projection that is distinct from the maximum is used instead. Returns
/// `None` when every projection is equal within [`SPLIT_TIE_TOLERANCE`].
pub fn split_boundary(projections: &[f64]) -> Option<f64> {
    if projections.len() < 2 {
        return None;
    }
    let mut sorted = projections.to_vec();
    sorted.sort_by(f64::total_cmp);
    let max = sorted[sorted.len() - 1];
    let median = sorted[(sorted.len() - 1) / 2];
    if max - median > SPLIT_TIE_TOLERANCE {
        return Some(median);
    }
    sorted.iter().rev().copied().find(|&p| max - p > SPLIT_TIE_TOLERANCE)
}

/// An Eigen Memory Tree over keys of a fixed dimension.
#[derive(Clone, Debug)]
pub struct Emt {
    dim: usize,
    config: TreeConfig,
    scorer: Scorer,
    nodes: Vec<Node>,
    slots: Vec<Option<Slot>>,
    free_slots: Vec<usize>,
    by_access: BTreeMap<u64, MemoryId>,
    clock: u64,
    count: usize,
    rng: ChaCha8Rng,
}

const ROOT: NodeId = NodeId(0);

impl Emt {
    pub fn new(dim: usize, config: TreeConfig, scorer: ScorerConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(SCORER_STREAM);
        let scorer = Scorer::new(dim, scorer, &mut rng)?;
        Self::with_scorer(config, scorer)
    }

    /// Builds a tree around an existing scorer; the key dimension is the
    /// scorer's.
    pub fn with_scorer(config: TreeConfig, scorer: Scorer) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(ROUTER_STREAM);
        Ok(Emt {
            dim: scorer.dim(),
            config,
            scorer,
            nodes: vec![Node::Leaf {
                memories: Vec::new(),
                deferred: false,
            }],
            slots: Vec::new(),
            free_slots: Vec::new(),
            by_access: BTreeMap::new(),
            clock: 0,
            count: 0,
            rng,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn scorer(&self) -> &Scorer {
        &self.scorer
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    fn slot(&self, id: MemoryId) -> &Slot {
        self.slots[id.0].as_ref().expect("live memory id")
    }

    fn slot_mut(&mut self, id: MemoryId) -> &mut Slot {
        self.slots[id.0].as_mut().expect("live memory id")
    }

    pub fn memory(&self, id: MemoryId) -> Option<&Memory> {
        self.slots.get(id.0)?.as_ref().map(|s| &s.memory)
    }

    /// Resident memories in slab order.
    pub fn iter(&self) -> impl Iterator<Item = (MemoryId, &Memory)> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|s| (MemoryId(i), &s.memory)))
    }

    fn descend(&self, key: &[f64]) -> (NodeId, usize) {
        let mut node = ROOT;
        let mut depth = 0;
        while let Node::Internal { router, left, right } = &self.nodes[node.0] {
            node = match router.route_unchecked(key) {
                Side::Left => *left,
                Side::Right => *right,
            };
            depth += 1;
        }
        (node, depth)
    }

    fn leaf_memories(&self, node: NodeId) -> &[MemoryId] {
        match &self.nodes[node.0] {
            Node::Leaf { memories, .. } => memories,
            Node::Internal { .. } => unreachable!("descend ends at a leaf"),
        }
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    fn touch(&mut self, id: MemoryId, tick: u64) {
        let old = self.slot(id).memory.last_access;
        self.by_access.remove(&old);
        self.by_access.insert(tick, id);
        self.slot_mut(id).memory.last_access = tick;
    }

    /// Routes `key` to a leaf and returns the memory the scorer ranks best.
    /// The returned memory counts as accessed.
    pub fn query(&mut self, key: &[f64]) -> Result<Option<Recall<'_>>> {
        check_dim(self.dim, key.len())?;
        check_finite(key, "query key")?;
        let tick = self.tick();
        let (leaf, _) = self.descend(key);
        let memories = self.leaf_memories(leaf);
        let best = self
            .scorer
            .best_match(key, memories.iter().map(|&id| self.slot(id).memory.key.as_slice()))
            .map(|i| memories[i]);
        Ok(best.map(|id| {
            self.touch(id, tick);
            let m = &self.slot(id).memory;
            Recall {
                key: m.key.as_slice(),
                value: m.value,
            }
        }))
    }

    /// Depth and leaf size reached by `key`. Does not count as an access.
    pub fn probe(&self, key: &[f64]) -> Result<Probe> {
        check_dim(self.dim, key.len())?;
        let (leaf, depth) = self.descend(key);
        let deferred = matches!(self.nodes[leaf.0], Node::Leaf { deferred: true, .. });
        Ok(Probe {
            depth,
            candidates: self.leaf_memories(leaf).len(),
            deferred,
        })
    }

    /// Stores `(key, value)`: updates the scorer against the destination
    /// leaf, inserts, splits the leaf if it is full, and evicts down to the
    /// memory budget.
    pub fn learn(&mut self, key: &[f64], value: f64) -> Result<()> {
        check_dim(self.dim, key.len())?;
        check_finite(key, "memory key")?;
        if !value.is_finite() {
            return Err(Error::NonFinite("memory value"));
        }
        let tick = self.tick();
        let (leaf, _) = self.descend(key);

        {
            let slots = &self.slots;
            let candidates: Vec<(&[f64], f64)> = self
                .leaf_memories(leaf)
                .iter()
                .map(|id| {
                    let m = &slots[id.0].as_ref().expect("live memory id").memory;
                    (m.key.as_slice(), m.value)
                })
                .collect();
            if candidates.len() >= 2 {
                let scorer = &mut self.scorer;
                scorer.update(&candidates, key, value)?;
            }
        }

        let slot = Slot {
            memory: Memory {
                key: MemoryKey(key.into()),
                value,
                last_access: tick,
            },
            leaf,
        };
        let id = match self.free_slots.pop() {
            Some(i) => {
                self.slots[i] = Some(slot);
                MemoryId(i)
            }
            None => {
                self.slots.push(Some(slot));
                MemoryId(self.slots.len() - 1)
            }
        };
        self.by_access.insert(tick, id);
        self.count += 1;
        let full = match &mut self.nodes[leaf.0] {
            Node::Leaf { memories, .. } => {
                memories.push(id);
                memories.len() >= self.config.leaf_capacity
            }
            Node::Internal { .. } => unreachable!(),
        };
        if full {
            self.split_leaf(leaf);
        }
        if let Some(budget) = self.config.memory_budget {
            while self.count > budget {
                self.evict_lru()?;
            }
        }
        Ok(())
    }

    /// Turns a full leaf into an internal node routed on its top eigenvector.
    /// If every projection ties the leaf is flagged and left as is; the split
    /// is retried on its next insertion.
    fn split_leaf(&mut self, node: NodeId) {
        let ids = self.leaf_memories(node).to_vec();
        if ids.len() < 2 {
            return;
        }
        let slots = &self.slots;
        let keys: Vec<&[f64]> = ids
            .iter()
            .map(|id| slots[id.0].as_ref().expect("live memory id").memory.key.as_slice())
            .collect();
        let direction = top_eigen(&keys, &mut self.rng).expect("at least two keys of tree dimension");
        let projections: Vec<f64> = keys.iter().map(|k| dot(&direction, k)).collect();
        let Some(boundary) = split_boundary(&projections) else {
            if let Node::Leaf { deferred, .. } = &mut self.nodes[node.0] {
                *deferred = true;
            }
            return;
        };

        let (mut left, mut right) = (Vec::new(), Vec::new());
        for (&id, &p) in ids.iter().zip(&projections) {
            if p <= boundary {
                left.push(id);
            } else {
                right.push(id);
            }
        }
        debug_assert!(!left.is_empty() && !right.is_empty());
        let left_id = self.push_leaf(left);
        let right_id = self.push_leaf(right);
        self.nodes[node.0] = Node::Internal {
            router: Router { direction, boundary },
            left: left_id,
            right: right_id,
        };
        // a child can still be full when an oversized deferred leaf splits
        for child in [left_id, right_id] {
            if self.leaf_memories(child).len() >= self.config.leaf_capacity {
                self.split_leaf(child);
            }
        }
    }

    fn push_leaf(&mut self, memories: Vec<MemoryId>) -> NodeId {
        let id = NodeId(self.nodes.len());
        for &m in &memories {
            self.slot_mut(m).leaf = id;
        }
        self.nodes.push(Node::Leaf {
            memories,
            deferred: false,
        });
        id
    }

    /// Removes and returns the memory with the oldest access tick. Empty
    /// leaves are left in place.
    pub fn evict_lru(&mut self) -> Result<Memory> {
        let (_, id) = self.by_access.pop_first().ok_or(Error::EmptyTree)?;
        let slot = self.slots[id.0].take().expect("live memory id");
        self.free_slots.push(id.0);
        self.count -= 1;
        if let Node::Leaf { memories, .. } = &mut self.nodes[slot.leaf.0] {
            let pos = memories.iter().position(|&m| m == id).expect("memory in its leaf");
            memories.remove(pos);
        }
        Ok(slot.memory)
    }

    pub fn stats(&self) -> TreeStats {
        let mut stats = TreeStats {
            memories: self.count,
            ..TreeStats::default()
        };
        let mut stack = vec![(ROOT, 0usize)];
        while let Some((node, depth)) = stack.pop() {
            match &self.nodes[node.0] {
                Node::Internal { left, right, .. } => {
                    stats.internal_nodes += 1;
                    stack.push((*right, depth + 1));
                    stack.push((*left, depth + 1));
                }
                Node::Leaf { memories, deferred } => {
                    stats.leaves += 1;
                    stats.max_depth = stats.max_depth.max(depth);
                    stats.max_leaf_size = stats.max_leaf_size.max(memories.len());
                    stats.empty_leaves += memories.is_empty() as usize;
                    stats.deferred_leaves += *deferred as usize;
                }
            }
        }
        stats
    }

    /// Routers of all internal nodes, pre-order.
    pub fn routers(&self) -> Vec<&Router> {
        let mut out = Vec::new();
        let mut stack = vec![ROOT];
        while let Some(node) = stack.pop() {
            if let Node::Internal { router, left, right } = &self.nodes[node.0] {
                out.push(router);
                stack.push(*right);
                stack.push(*left);
            }
        }
        out
    }

    /// Checks the structural invariants, returning a description of the
    /// first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let mut seen = 0;
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Internal { router, .. } => {
                    let norm = dot(&router.direction, &router.direction).sqrt();
                    if (norm - 1.0).abs() > 1e-9 {
                        return Err(format!("node {i}: router norm {norm}"));
                    }
                }
                Node::Leaf { memories, deferred } => {
                    if memories.len() >= self.config.leaf_capacity && !deferred {
                        return Err(format!("node {i}: {} memories in a full leaf", memories.len()));
                    }
                    for &id in memories {
                        let slot = self.slots.get(id.0).and_then(Option::as_ref);
                        let Some(slot) = slot else {
                            return Err(format!("node {i}: dangling memory {id:?}"));
                        };
                        if slot.leaf != NodeId(i) {
                            return Err(format!("memory {id:?}: leaf back-reference mismatch"));
                        }
                        let (reached, _) = self.descend(slot.memory.key.as_slice());
                        if reached != NodeId(i) {
                            return Err(format!("memory {id:?}: routes to {reached:?}, stored in node {i}"));
                        }
                        if self.by_access.get(&slot.memory.last_access) != Some(&id) {
                            return Err(format!("memory {id:?}: access index out of sync"));
                        }
                        seen += 1;
                    }
                }
            }
        }
        if seen != self.count || self.by_access.len() != self.count {
            return Err(format!(
                "count {} but {seen} memories in leaves and {} in the access index",
                self.count,
                self.by_access.len()
            ));
        }
        if let Some(budget) = self.config.memory_budget {
            if self.count > budget {
                return Err(format!("count {} exceeds budget {budget}", self.count));
            }
        }
        Ok(())
    }

    /// Line-oriented pre-order dump for debugging and golden tests.
    ///
    /// Internal nodes are written as `I <router...> <boundary>`, leaves as
    /// `L <n>` (with a trailing `deferred` when flagged) followed by one
    /// `<key...> <value> <tick>` line per memory.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        let mut stack = vec![ROOT];
        while let Some(node) = stack.pop() {
            match &self.nodes[node.0] {
                Node::Internal { router, left, right } => {
                    out.push('I');
                    for x in &router.direction {
                        let _ = write!(out, " {x}");
                    }
                    let _ = writeln!(out, " {}", router.boundary);
                    stack.push(*right);
                    stack.push(*left);
                }
                Node::Leaf { memories, deferred } => {
                    let _ = write!(out, "L {}", memories.len());
                    if *deferred {
                        out.push_str(" deferred");
                    }
                    out.push('\n');
                    for &id in memories {
                        let m = &self.slot(id).memory;
                        let mut first = true;
                        for x in m.key.as_slice() {
                            if !first {
                                out.push(' ');
                            }
                            first = false;
                            let _ = write!(out, "{x}");
                        }
                        let _ = writeln!(out, " {} {}", m.value, m.last_access);
                    }
                }
            }
        }
        out
    }
}
