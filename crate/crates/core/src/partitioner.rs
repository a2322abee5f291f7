//! CTU quadtree partitioning via a greedy rate-distortion heuristic, and
//! the split-flag syntax the decoder replays to rebuild the tree.
//!
//! Square splits only. A node is divided exactly when the summed cost of
//! its four children plus the split-flag bit beats coding it as one
//! leaf, with cost = distortion + lambda * bits.

use crate::entropy_coder::SyntaxElement;

/// Partitioning parameters. Sizes are powers of two with
/// `min_cu_size <= ctu_size`; `max_depth` counts splits from the CTU root.
/// Nodes larger than `max_leaf_size` are divided implicitly, without a
/// flag, so oversized CTUs still produce codable leaves.
#[derive(Clone, Copy, Debug)]
pub struct PartitionConfig {
    pub ctu_size: usize,
    pub min_cu_size: usize,
    pub max_depth: u8,
    pub max_leaf_size: usize,
    pub lambda: f64,
}

impl PartitionConfig {
    pub fn new(ctu_size: usize, min_cu_size: usize, max_depth: u8, lambda: f64) -> Self {
        assert!(ctu_size.is_power_of_two() && min_cu_size.is_power_of_two());
        assert!(min_cu_size <= ctu_size);
        PartitionConfig {
            ctu_size,
            min_cu_size,
            max_depth,
            max_leaf_size: ctu_size,
            lambda,
        }
    }

    pub fn with_max_leaf(mut self, max_leaf_size: usize) -> Self {
        assert!(max_leaf_size.is_power_of_two());
        assert!(self.min_cu_size <= max_leaf_size);
        self.max_leaf_size = max_leaf_size;
        self
    }

    /// True when a node of this size must divide regardless of any flag.
    pub fn must_split(&self, size: usize) -> bool {
        size > self.max_leaf_size
    }

    /// True when a node of this size/depth may still be divided.
    pub fn can_split(&self, size: usize, depth: u8) -> bool {
        depth < self.max_depth && size > self.min_cu_size
    }

    /// True when a node of this size/depth carries a split flag.
    pub fn emits_flag(&self, size: usize, depth: u8) -> bool {
        !self.must_split(size) && self.can_split(size, depth)
    }
}

/// HEVC-style lambda for a QP.
pub fn lambda_for_qp(qp: u8) -> f64 {
    0.85 * 2f64.powf((qp as f64 - 12.0) / 3.0)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PartitionNode {
    Leaf,
    /// Children in z-order: top-left, top-right, bottom-left, bottom-right.
    Split(Box<[PartitionNode; 4]>),
}

/// Quadtree over one CTU, origin in frame pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionTree {
    pub ctu_x: usize,
    pub ctu_y: usize,
    pub root: PartitionNode,
}

/// Prediction mode of a coding unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CuMode {
    Intra,
    Inter,
}

/// Quadtree leaf: the basic prediction/transform unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CodingUnit {
    pub x: usize,
    pub y: usize,
    pub size: usize,
    pub depth: u8,
}

impl PartitionTree {
    /// Leaves in depth-first pre-order (the coding order).
    pub fn leaves(&self, cfg: &PartitionConfig) -> Vec<CodingUnit> {
        let mut out = Vec::new();
        collect_leaves(
            &self.root,
            self.ctu_x,
            self.ctu_y,
            cfg.ctu_size,
            0,
            &mut out,
        );
        out
    }
}

fn collect_leaves(
    node: &PartitionNode,
    x: usize,
    y: usize,
    size: usize,
    depth: u8,
    out: &mut Vec<CodingUnit>,
) {
    match node {
        PartitionNode::Leaf => out.push(CodingUnit { x, y, size, depth }),
        PartitionNode::Split(children) => {
            let h = size / 2;
            let offsets = [(0, 0), (h, 0), (0, h), (h, h)];
            for (child, (dx, dy)) in children.iter().zip(offsets) {
                collect_leaves(child, x + dx, y + dy, h, depth + 1, out);
            }
        }
    }
}

/// Greedy top-down partition of one CTU. `cost_fn(x, y, size)` returns
/// (bits estimate, distortion) for coding that square as a single leaf;
/// coordinates are frame-absolute.
pub fn partition_ctu(
    ctu_x: usize,
    ctu_y: usize,
    cfg: &PartitionConfig,
    cost_fn: &impl Fn(usize, usize, usize) -> (f64, f64),
) -> PartitionTree {
    let (root, _) = partition_node(ctu_x, ctu_y, cfg.ctu_size, 0, cfg, cost_fn);
    PartitionTree {
        ctu_x,
        ctu_y,
        root,
    }
}

fn partition_node(
    x: usize,
    y: usize,
    size: usize,
    depth: u8,
    cfg: &PartitionConfig,
    cost_fn: &impl Fn(usize, usize, usize) -> (f64, f64),
) -> (PartitionNode, f64) {
    let forced = cfg.must_split(size);
    let leaf_cost = if forced {
        f64::INFINITY
    } else {
        let (bits, dist) = cost_fn(x, y, size);
        dist + cfg.lambda * bits
    };
    if !forced && !cfg.can_split(size, depth) {
        return (PartitionNode::Leaf, leaf_cost);
    }
    let h = size / 2;
    let offsets = [(0, 0), (h, 0), (0, h), (h, h)];
    let mut children: Vec<PartitionNode> = Vec::with_capacity(4);
    // Forced splits carry no flag, so no flag cost either.
    let mut split_cost = if forced { 0.0 } else { cfg.lambda };
    for (dx, dy) in offsets {
        let (child, cost) = partition_node(x + dx, y + dy, h, depth + 1, cfg, cost_fn);
        split_cost += cost;
        children.push(child);
    }
    if split_cost < leaf_cost {
        let boxed: Box<[PartitionNode; 4]> = children.try_into().map(Box::new).unwrap();
        (PartitionNode::Split(boxed), split_cost)
    } else {
        (PartitionNode::Leaf, leaf_cost)
    }
}

/// Depth-first pre-order split flags, one per node that could split.
pub fn split_flags(tree: &PartitionTree, cfg: &PartitionConfig) -> Vec<SyntaxElement> {
    let mut out = Vec::new();
    flags_rec(&tree.root, cfg.ctu_size, 0, cfg, &mut out);
    out
}

fn flags_rec(
    node: &PartitionNode,
    size: usize,
    depth: u8,
    cfg: &PartitionConfig,
    out: &mut Vec<SyntaxElement>,
) {
    let split = matches!(node, PartitionNode::Split(_));
    if cfg.emits_flag(size, depth) {
        out.push(SyntaxElement::SplitFlag(split));
    }
    debug_assert!(split || !cfg.must_split(size));
    if let PartitionNode::Split(children) = node {
        for child in children.iter() {
            flags_rec(child, size / 2, depth + 1, cfg, out);
        }
    }
}

/// Rebuilds a tree from flags in the same pre-order; the inverse of
/// `split_flags` on valid trees.
pub fn tree_parse(
    ctu_x: usize,
    ctu_y: usize,
    flags: &mut impl Iterator<Item = bool>,
    cfg: &PartitionConfig,
) -> PartitionTree {
    let root = parse_node(cfg.ctu_size, 0, flags, cfg);
    PartitionTree {
        ctu_x,
        ctu_y,
        root,
    }
}

fn parse_node(
    size: usize,
    depth: u8,
    flags: &mut impl Iterator<Item = bool>,
    cfg: &PartitionConfig,
) -> PartitionNode {
    let split =
        cfg.must_split(size) || (cfg.emits_flag(size, depth) && flags.next().unwrap_or(false));
    if !split {
        return PartitionNode::Leaf;
    }
    let children: Vec<PartitionNode> = (0..4)
        .map(|_| parse_node(size / 2, depth + 1, flags, cfg))
        .collect();
    PartitionNode::Split(children.try_into().map(Box::new).unwrap())
}
