//! Regression trees whose split rules carry a missing-value direction.
//!
//! A rule `(attribute, threshold, send_missing_left)` sends a row left when the
//! attribute is present and `<= threshold`, right when present and larger, and
//! in the rule's direction when missing. Splitting on missingness itself is a
//! threshold-0 rule on an indicator column (see [`crate::data::augment`]).
//!
//! Trees are stored as index arenas. Pruned slots are recycled by later grows,
//! so node ids stay stable across edits; equality is structural.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{BartError, Result};

pub type NodeId = usize;

/// Row indices reaching each node, indexed by node id. Vacant and unvisited
/// slots hold empty vectors.
pub type NodeRows = Vec<Vec<u32>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub attribute: usize,
    pub threshold: f64,
    pub send_missing_left: bool,
}

impl SplitRule {
    #[inline]
    pub fn goes_left(&self, value: Option<f64>) -> bool {
        match value {
            Some(v) => v <= self.threshold,
            None => self.send_missing_left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Leaf { value: f64 },
    Split { rule: SplitRule, left: NodeId, right: NodeId },
}

#[derive(Debug, Clone)]
pub struct Tree {
    n_features: usize,
    nodes: Vec<Option<Node>>,
    free: Vec<NodeId>,
}

pub const ROOT: NodeId = 0;

impl Tree {
    pub fn stump(n_features: usize, value: f64) -> Self {
        Self {
            n_features,
            nodes: vec![Some(Node::Leaf { value })],
            free: Vec::new(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Size of the arena, including vacant slots.
    pub fn capacity(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        self.nodes[id].as_ref().expect("node id refers to a vacant slot")
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        matches!(self.node(id), Node::Leaf { .. })
    }

    pub fn is_stump(&self) -> bool {
        self.is_leaf(ROOT)
    }

    /// Pre-order `(node, depth)` pairs reachable from the root.
    pub fn walk(&self) -> Vec<(NodeId, usize)> {
        let mut out = Vec::new();
        let mut stack = vec![(ROOT, 0usize)];
        while let Some((id, d)) = stack.pop() {
            out.push((id, d));
            if let Node::Split { left, right, .. } = self.node(id) {
                stack.push((*right, d + 1));
                stack.push((*left, d + 1));
            }
        }
        out
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        self.walk().into_iter().map(|(id, _)| id).filter(|&id| self.is_leaf(id)).collect()
    }

    pub fn internal_nodes(&self) -> Vec<NodeId> {
        self.walk().into_iter().map(|(id, _)| id).filter(|&id| !self.is_leaf(id)).collect()
    }

    /// Internal nodes whose two children are both leaves.
    pub fn prunable_nodes(&self) -> Vec<NodeId> {
        self.internal_nodes()
            .into_iter()
            .filter(|&id| match self.node(id) {
                Node::Split { left, right, .. } => self.is_leaf(*left) && self.is_leaf(*right),
                Node::Leaf { .. } => false,
            })
            .collect()
    }

    pub fn depth_of(&self, target: NodeId) -> Option<usize> {
        self.walk().into_iter().find(|&(id, _)| id == target).map(|(_, d)| d)
    }

    /// Depth of the deepest leaf; a stump has depth 0.
    pub fn max_depth(&self) -> usize {
        self.walk().into_iter().map(|(_, d)| d).max().unwrap_or(0)
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves().len()
    }

    pub fn leaf_value(&self, id: NodeId) -> Option<f64> {
        match self.node(id) {
            Node::Leaf { value } => Some(*value),
            Node::Split { .. } => None,
        }
    }

    pub fn set_leaf_value(&mut self, id: NodeId, value: f64) {
        if let Some(Node::Leaf { value: v }) = self.nodes[id].as_mut() {
            *v = value;
        }
    }

    /// Leaf reached by row `i` of `x`.
    #[inline]
    pub fn leaf_for(&self, x: &FeatureMatrix, i: usize) -> NodeId {
        let mut id = ROOT;
        loop {
            match self.nodes[id].as_ref().expect("reachable slots are occupied") {
                Node::Leaf { .. } => return id,
                Node::Split { rule, left, right } => {
                    id = if rule.goes_left(x.get(i, rule.attribute)) { *left } else { *right };
                }
            }
        }
    }

    #[inline]
    pub fn predict_row(&self, x: &FeatureMatrix, i: usize) -> f64 {
        match self.node(self.leaf_for(x, i)) {
            Node::Leaf { value } => *value,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Routes a single augmented row (`None` = missing) to its leaf value.
    pub fn route(&self, row: &[Option<f64>]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(BartError::Routing {
                expected: self.n_features,
                got: row.len(),
            });
        }
        let mut id = ROOT;
        loop {
            match self.node(id) {
                Node::Leaf { value } => return Ok(*value),
                Node::Split { rule, left, right } => {
                    id = if rule.goes_left(row[rule.attribute]) { *left } else { *right };
                }
            }
        }
    }

    /// Partitions `rows` over every node of the tree.
    pub fn partition(&self, x: &FeatureMatrix, rows: &[u32]) -> NodeRows {
        self.partition_from(ROOT, x, rows.to_vec())
    }

    /// Partitions `rows`, assumed to have reached `start`, over the subtree at `start`.
    pub fn partition_from(&self, start: NodeId, x: &FeatureMatrix, rows: Vec<u32>) -> NodeRows {
        let mut out: NodeRows = vec![Vec::new(); self.nodes.len()];
        let mut stack = vec![(start, rows)];
        while let Some((id, rows)) = stack.pop() {
            if let Node::Split { rule, left, right } = self.node(id) {
                let (l, r): (Vec<u32>, Vec<u32>) = rows
                    .iter()
                    .partition(|&&i| rule.goes_left(x.get(i as usize, rule.attribute)));
                stack.push((*left, l));
                stack.push((*right, r));
            }
            out[id] = rows;
        }
        out
    }

    fn alloc(&mut self, node: Node) -> NodeId {
        match self.free.pop() {
            Some(id) => {
                self.nodes[id] = Some(node);
                id
            }
            None => {
                self.nodes.push(Some(node));
                self.nodes.len() - 1
            }
        }
    }

    /// Turns leaf `id` into a split with two fresh leaves. Returns `(left, right)`.
    pub fn grow(&mut self, id: NodeId, rule: SplitRule, left_value: f64, right_value: f64) -> Result<(NodeId, NodeId)> {
        if !matches!(self.nodes.get(id), Some(Some(Node::Leaf { .. }))) {
            return Err(BartError::InvalidEdit(format!("grow target {id} is not a leaf")));
        }
        if rule.attribute >= self.n_features {
            return Err(BartError::InvalidEdit(format!("attribute {} out of range", rule.attribute)));
        }
        let left = self.alloc(Node::Leaf { value: left_value });
        let right = self.alloc(Node::Leaf { value: right_value });
        self.nodes[id] = Some(Node::Split { rule, left, right });
        Ok((left, right))
    }

    /// Collapses a split whose children are both leaves into a leaf.
    pub fn prune(&mut self, id: NodeId, value: f64) -> Result<()> {
        let (left, right) = match self.nodes.get(id) {
            Some(Some(Node::Split { left, right, .. })) => (*left, *right),
            _ => return Err(BartError::InvalidEdit(format!("prune target {id} is not a split"))),
        };
        if !self.is_leaf(left) || !self.is_leaf(right) {
            return Err(BartError::InvalidEdit(format!("children of {id} are not both leaves")));
        }
        self.nodes[left] = None;
        self.nodes[right] = None;
        // Reuse in allocation order: left first.
        self.free.push(right);
        self.free.push(left);
        self.nodes[id] = Some(Node::Leaf { value });
        Ok(())
    }

    /// Replaces the rule at internal node `id`.
    pub fn change(&mut self, id: NodeId, new_rule: SplitRule) -> Result<()> {
        if new_rule.attribute >= self.n_features {
            return Err(BartError::InvalidEdit(format!("attribute {} out of range", new_rule.attribute)));
        }
        match self.nodes.get_mut(id) {
            Some(Some(Node::Split { rule, .. })) => {
                *rule = new_rule;
                Ok(())
            }
            _ => Err(BartError::InvalidEdit(format!("change target {id} is not a split"))),
        }
    }

    fn structurally_equal(&self, a: NodeId, other: &Tree, b: NodeId) -> bool {
        match (self.node(a), other.node(b)) {
            (Node::Leaf { value: x }, Node::Leaf { value: y }) => x == y,
            (
                Node::Split { rule: r1, left: l1, right: q1 },
                Node::Split { rule: r2, left: l2, right: q2 },
            ) => r1 == r2 && self.structurally_equal(*l1, other, *l2) && self.structurally_equal(*q1, other, *q2),
            _ => false,
        }
    }
}

impl PartialEq for Tree {
    fn eq(&self, other: &Self) -> bool {
        self.n_features == other.n_features && self.structurally_equal(ROOT, other, ROOT)
    }
}

/// Serialized node: children indices refer to positions in the record list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeRecord {
    Leaf {
        value: f64,
    },
    Split {
        attribute: usize,
        threshold: f64,
        send_missing_left: bool,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeRecord {
    pub n_features: usize,
    pub nodes: Vec<NodeRecord>,
}

impl From<&Tree> for TreeRecord {
    fn from(tree: &Tree) -> Self {
        let order: Vec<NodeId> = tree.walk().into_iter().map(|(id, _)| id).collect();
        let mut position = vec![usize::MAX; tree.nodes.len()];
        for (k, &id) in order.iter().enumerate() {
            position[id] = k;
        }
        let nodes = order
            .iter()
            .map(|&id| match tree.node(id) {
                Node::Leaf { value } => NodeRecord::Leaf { value: *value },
                Node::Split { rule, left, right } => NodeRecord::Split {
                    attribute: rule.attribute,
                    threshold: rule.threshold,
                    send_missing_left: rule.send_missing_left,
                    left: position[*left],
                    right: position[*right],
                },
            })
            .collect();
        TreeRecord {
            n_features: tree.n_features,
            nodes,
        }
    }
}

impl TryFrom<TreeRecord> for Tree {
    type Error = BartError;

    fn try_from(rec: TreeRecord) -> Result<Self> {
        let n = rec.nodes.len();
        if n == 0 {
            return Err(BartError::InvalidEdit("empty tree record".into()));
        }
        let mut referenced = vec![0usize; n];
        let nodes = rec
            .nodes
            .iter()
            .map(|r| match *r {
                NodeRecord::Leaf { value } => Ok(Some(Node::Leaf { value })),
                NodeRecord::Split {
                    attribute,
                    threshold,
                    send_missing_left,
                    left,
                    right,
                } => {
                    if left >= n || right >= n || left == 0 || right == 0 || left == right {
                        return Err(BartError::InvalidEdit("bad child index in tree record".into()));
                    }
                    if attribute >= rec.n_features {
                        return Err(BartError::InvalidEdit("attribute out of range in tree record".into()));
                    }
                    referenced[left] += 1;
                    referenced[right] += 1;
                    Ok(Some(Node::Split {
                        rule: SplitRule {
                            attribute,
                            threshold,
                            send_missing_left,
                        },
                        left,
                        right,
                    }))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if referenced[1..].iter().any(|&c| c != 1) {
            return Err(BartError::InvalidEdit("tree record is not a tree".into()));
        }
        let tree = Tree {
            n_features: rec.n_features,
            nodes,
            free: Vec::new(),
        };
        if tree.walk().len() != n {
            return Err(BartError::InvalidEdit("tree record contains a cycle".into()));
        }
        Ok(tree)
    }
}

impl Serialize for Tree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TreeRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Tree {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = TreeRecord::deserialize(d)?;
        Tree::try_from(rec).map_err(serde::de::Error::custom)
    }
}

/// Sum-of-trees state: `m` trees plus the noise variance (scaled units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub trees: Vec<Tree>,
    pub sigma_sq: f64,
}

impl Ensemble {
    pub fn predict_row(&self, x: &FeatureMatrix, i: usize) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x, i)).sum()
    }
}

/// Whether `attr` has at least two distinct observed values among `rows`.
pub fn attribute_splittable(x: &FeatureMatrix, rows: &[u32], attr: usize) -> bool {
    let mut codes = rows.iter().filter_map(|&i| x.code(i as usize, attr));
    match codes.next() {
        Some(first) => codes.any(|c| c != first),
        None => false,
    }
}

pub fn splittable_attributes(x: &FeatureMatrix, rows: &[u32]) -> Vec<usize> {
    (0..x.n_cols()).filter(|&j| attribute_splittable(x, rows, j)).collect()
}

/// Whether any rule can split `rows` into two non-empty groups.
pub fn can_split(x: &FeatureMatrix, rows: &[u32]) -> bool {
    (0..x.n_cols()).any(|j| attribute_splittable(x, rows, j))
}

/// Distinct observed values of `attr` in ascending order, maximum excluded.
pub fn thresholds_for(x: &FeatureMatrix, rows: &[u32], attr: usize) -> Vec<f64> {
    let levels = x.levels(attr);
    let codes = rows.iter().filter_map(|&i| x.code(i as usize, attr));
    let mut present: Vec<u32> = if rows.len() * 8 < levels.len() {
        // Few rows: sorting their ranks beats scanning every level.
        let mut v: Vec<u32> = codes.collect();
        v.sort_unstable();
        v.dedup();
        v
    } else {
        let mut seen = vec![false; levels.len()];
        codes.for_each(|c| seen[c as usize] = true);
        (0..levels.len() as u32).filter(|&c| seen[c as usize]).collect()
    };
    present.pop();
    present.into_iter().map(|c| levels[c as usize]).collect()
}

/// Log probability of drawing `rule` uniformly at a node holding `rows`:
/// uniform attribute, uniform threshold, fair missing-direction coin.
/// `-inf` when the rule is not a candidate there.
pub fn rule_log_probability(x: &FeatureMatrix, rows: &[u32], rule: &SplitRule) -> f64 {
    if rule.attribute >= x.n_cols() || !attribute_splittable(x, rows, rule.attribute) {
        return f64::NEG_INFINITY;
    }
    let n_attrs = splittable_attributes(x, rows).len();
    let thresholds = thresholds_for(x, rows, rule.attribute);
    if !thresholds.contains(&rule.threshold) {
        return f64::NEG_INFINITY;
    }
    -(n_attrs as f64).ln() - (thresholds.len() as f64).ln() - std::f64::consts::LN_2
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateAttribute {
    pub attribute: usize,
    pub thresholds: Vec<f64>,
}

/// Every rule that splits a node's rows into two non-empty children.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuleSpace {
    pub attributes: Vec<CandidateAttribute>,
}

impl RuleSpace {
    pub fn collect(x: &FeatureMatrix, rows: &[u32]) -> Self {
        let attributes = (0..x.n_cols())
            .filter_map(|attribute| {
                let thresholds = thresholds_for(x, rows, attribute);
                (!thresholds.is_empty()).then_some(CandidateAttribute { attribute, thresholds })
            })
            .collect();
        Self { attributes }
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    /// Number of distinct rules including the direction bit.
    pub fn num_rules(&self) -> usize {
        2 * self.attributes.iter().map(|a| a.thresholds.len()).sum::<usize>()
    }

    pub fn log_probability(&self, rule: &SplitRule) -> f64 {
        match self.attributes.iter().find(|a| a.attribute == rule.attribute) {
            Some(a) if a.thresholds.contains(&rule.threshold) => {
                -(self.attributes.len() as f64).ln() - (a.thresholds.len() as f64).ln() - std::f64::consts::LN_2
            }
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<SplitRule> {
        if self.is_empty() {
            return None;
        }
        let a = &self.attributes[rng.random_range(0..self.attributes.len())];
        let threshold = a.thresholds[rng.random_range(0..a.thresholds.len())];
        Some(SplitRule {
            attribute: a.attribute,
            threshold,
            send_missing_left: rng.random_bool(0.5),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule(attribute: usize, threshold: f64, left: bool) -> SplitRule {
        SplitRule {
            attribute,
            threshold,
            send_missing_left: left,
        }
    }

    fn matrix(rows: &[Vec<Option<f64>>]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn stump_routes_everything_to_its_value() {
        let t = Tree::stump(2, 0.25);
        assert_eq!(t.route(&[Some(1.0), None]).unwrap(), 0.25);
        assert_eq!(t.route(&[None, None]).unwrap(), 0.25);
    }

    #[test]
    fn missing_goes_in_rule_direction() {
        for &dir in &[true, false] {
            let mut t = Tree::stump(1, 0.0);
            t.grow(ROOT, rule(0, 1.0, dir), -1.0, 1.0).unwrap();
            assert_eq!(t.route(&[None]).unwrap(), if dir { -1.0 } else { 1.0 });
            assert_eq!(t.route(&[Some(1.0)]).unwrap(), -1.0);
            assert_eq!(t.route(&[Some(1.5)]).unwrap(), 1.0);
        }
    }

    #[test]
    fn route_rejects_wrong_width() {
        let t = Tree::stump(3, 0.0);
        assert!(matches!(t.route(&[Some(1.0)]), Err(BartError::Routing { expected: 3, got: 1 })));
    }

    #[test]
    fn constant_column_has_no_rules() {
        let x = matrix(&[vec![Some(2.0)], vec![Some(2.0)], vec![Some(2.0)]]);
        let space = RuleSpace::collect(&x, &[0, 1, 2]);
        assert!(space.is_empty());
        assert!(!can_split(&x, &[0, 1, 2]));
    }

    #[test]
    fn thresholds_exclude_maximum() {
        let x = matrix(&[vec![Some(3.0)], vec![Some(1.0)], vec![Some(2.0)], vec![Some(2.0)]]);
        let space = RuleSpace::collect(&x, &[0, 1, 2, 3]);
        assert_eq!(space.attributes[0].thresholds, vec![1.0, 2.0]);
        // Brute-force: every observed value whose split leaves both sides non-empty.
        let rows = [0u32, 1, 2, 3];
        let mut valid: Vec<f64> = [3.0, 1.0, 2.0]
            .into_iter()
            .filter(|&c| {
                let left = rows.iter().filter(|&&i| x.get(i as usize, 0).unwrap() <= c).count();
                left > 0 && left < rows.len()
            })
            .collect();
        valid.sort_by(f64::total_cmp);
        assert_eq!(space.attributes[0].thresholds, valid);
    }

    #[test]
    fn indicator_column_separates_missing_rows() {
        // Column 0 has two observed values and three missing; column 1 is its indicator.
        let x = matrix(&[
            vec![Some(1.0), Some(0.0)],
            vec![Some(1.0), Some(0.0)],
            vec![None, Some(1.0)],
            vec![None, Some(1.0)],
            vec![None, Some(1.0)],
        ]);
        let rows = [0, 1, 2, 3, 4];
        let space = RuleSpace::collect(&x, &rows);
        assert_eq!(space.attributes.len(), 1);
        assert_eq!(space.attributes[0], CandidateAttribute { attribute: 1, thresholds: vec![0.0] });
        let mut t = Tree::stump(2, 0.0);
        t.grow(ROOT, rule(1, 0.0, true), 0.0, 0.0).unwrap();
        let parts = t.partition(&x, &rows);
        let (l, r) = match t.node(ROOT) {
            Node::Split { left, right, .. } => (*left, *right),
            _ => unreachable!(),
        };
        assert_eq!(parts[l], vec![0, 1]);
        assert_eq!(parts[r], vec![2, 3, 4]);
    }

    #[test]
    fn rule_probability_matches_rule_space() {
        let x = matrix(&[
            vec![Some(1.0), Some(5.0), None],
            vec![Some(2.0), Some(5.0), Some(1.0)],
            vec![Some(3.0), Some(5.0), Some(0.0)],
            vec![None, Some(5.0), Some(4.0)],
        ]);
        let rows = [0, 1, 2, 3];
        let space = RuleSpace::collect(&x, &rows);
        for a in &space.attributes {
            for &c in &a.thresholds {
                for dir in [true, false] {
                    let r = rule(a.attribute, c, dir);
                    assert_eq!(space.log_probability(&r), rule_log_probability(&x, &rows, &r));
                }
            }
        }
        let all_rules: Vec<SplitRule> = space
            .attributes
            .iter()
            .flat_map(|a| a.thresholds.iter().flat_map(move |&c| [rule(a.attribute, c, true), rule(a.attribute, c, false)]))
            .collect();
        assert_eq!(all_rules.len(), space.num_rules());
        let total: f64 = all_rules.iter().map(|r| space.log_probability(r).exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(rule_log_probability(&x, &rows, &rule(1, 5.0, true)), f64::NEG_INFINITY);
        assert_eq!(rule_log_probability(&x, &rows, &rule(0, 3.0, true)), f64::NEG_INFINITY);
    }

    #[test]
    fn grow_then_prune_restores_tree() {
        let mut t = Tree::stump(2, 0.5);
        let (l, _) = t.grow(ROOT, rule(0, 1.0, true), 0.1, 0.2).unwrap();
        let before = t.clone();
        t.grow(l, rule(1, 3.0, false), 0.3, 0.4).unwrap();
        assert_ne!(t, before);
        t.prune(l, 0.1).unwrap();
        assert_eq!(t, before);
        // Recycled slots keep the arena from growing.
        let cap = t.capacity();
        t.grow(l, rule(1, 3.0, false), 0.3, 0.4).unwrap();
        assert_eq!(t.capacity(), cap);
    }

    #[test]
    fn edits_check_preconditions() {
        let mut t = Tree::stump(1, 0.0);
        assert!(t.prune(ROOT, 0.0).is_err());
        assert!(t.change(ROOT, rule(0, 1.0, true)).is_err());
        assert!(t.grow(ROOT, rule(3, 1.0, true), 0.0, 0.0).is_err());
        let (l, _) = t.grow(ROOT, rule(0, 1.0, true), 0.0, 0.0).unwrap();
        assert!(t.grow(ROOT, rule(0, 1.0, true), 0.0, 0.0).is_err());
        t.grow(l, rule(0, 0.5, true), 0.0, 0.0).unwrap();
        assert!(t.prune(ROOT, 0.0).is_err());
    }

    #[test]
    fn change_to_same_rule_keeps_partition() {
        let x = matrix(&[vec![Some(1.0)], vec![Some(2.0)], vec![None], vec![Some(3.0)]]);
        let mut t = Tree::stump(1, 0.0);
        t.grow(ROOT, rule(0, 2.0, false), 0.0, 0.0).unwrap();
        let before = t.partition(&x, &[0, 1, 2, 3]);
        t.change(ROOT, rule(0, 2.0, false)).unwrap();
        assert_eq!(t.partition(&x, &[0, 1, 2, 3]), before);
    }

    #[test]
    fn json_round_trip() {
        let mut t = Tree::stump(3, 0.0);
        let (l, r) = t.grow(ROOT, rule(2, 0.0, true), 1.5, -2.0).unwrap();
        t.grow(r, rule(0, -0.25, false), 3.0, 4.0).unwrap();
        t.prune(r, 7.0).unwrap();
        t.grow(l, rule(1, 9.0, true), 5.0, 6.0).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        let back: Tree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert!(json.contains("\"kind\":\"split\""));
    }

    #[test]
    fn malformed_record_is_rejected() {
        let rec = TreeRecord {
            n_features: 1,
            nodes: vec![NodeRecord::Split {
                attribute: 0,
                threshold: 0.0,
                send_missing_left: true,
                left: 1,
                right: 1,
            }],
        };
        assert!(Tree::try_from(rec).is_err());
    }

    proptest::proptest! {
        #[test]
        fn rank_thresholds_match_sorting(
            cells in proptest::collection::vec(proptest::option::weighted(0.8, -5i32..5), 1..80),
            keep in proptest::collection::vec(proptest::bool::ANY, 80),
        ) {
            let rows: Vec<Vec<Option<f64>>> = cells.iter().map(|c| vec![c.map(|v| v as f64 / 2.0)]).collect();
            let x = matrix(&rows);
            let subset: Vec<u32> = (0..rows.len() as u32).filter(|&i| keep[i as usize]).collect();
            let mut naive: Vec<f64> = subset.iter().filter_map(|&i| rows[i as usize][0]).collect();
            naive.sort_by(f64::total_cmp);
            naive.dedup();
            naive.pop();
            proptest::prop_assert_eq!(thresholds_for(&x, &subset, 0), naive);
        }
    }
}
