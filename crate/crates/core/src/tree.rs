//! Event trees: the structural skeleton of the process.
//!
//! Nodes are named `s0`, `s1`, ... breadth-first with siblings visited in
//! lexicographic label order, so the naming depends only on the set of paths,
//! never on row order in the source data.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::Error;
use crate::table::PathCountTable;
use crate::Result;

/// Index of a node in an [`EventTree`], displayed as `s<index>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

impl NodeId {
    /// Parse `"s12"` back into an id.
    pub fn parse(s: &str) -> Result<NodeId> {
        s.strip_prefix('s')
            .and_then(|n| n.parse::<usize>().ok())
            .map(NodeId)
            .ok_or_else(|| Error::validation(format!("invalid node id {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct TreeNode {
    pub parent: Option<usize>,
    /// Label of the incoming edge; `None` only for the root.
    pub label: Option<String>,
    /// Count on the incoming edge; 0 for the root.
    pub count: u64,
    /// Children in lexicographic order of their incoming labels.
    pub children: Vec<usize>,
    pub depth: usize,
}

/// Directed labelled tree over situations and leaves, with per-edge counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventTree {
    nodes: Vec<TreeNode>,
}

impl EventTree {
    /// Build the tree from a prefix-closed, non-empty path-count table.
    ///
    /// One node per distinct path prefix plus the root; ids assigned
    /// breadth-first, siblings in lexicographic label order.
    pub fn from_path_table(table: &PathCountTable) -> Result<EventTree> {
        if table.is_empty() {
            return Err(Error::validation(
                "cannot build an event tree from an empty path table",
            ));
        }
        table.validate_prefix_closed()?;

        let mut nodes = vec![TreeNode {
            parent: None,
            label: None,
            count: 0,
            children: Vec::new(),
            depth: 0,
        }];
        // node id by path; lexicographic map iteration within a fixed length
        // visits siblings parent-by-parent in label order, which is exactly
        // the breadth-first numbering.
        let mut id_by_path: BTreeMap<&[String], usize> = BTreeMap::new();
        let max_len = table.iter().map(|(p, _)| p.len()).max().unwrap_or(0);
        for len in 1..=max_len {
            for (path, count) in table.iter().filter(|(p, _)| p.len() == len) {
                let parent = if len == 1 {
                    0
                } else {
                    id_by_path[&path[..len - 1]]
                };
                let id = nodes.len();
                nodes.push(TreeNode {
                    parent: Some(parent),
                    label: Some(path[len - 1].clone()),
                    count,
                    children: Vec::new(),
                    depth: len,
                });
                nodes[parent].children.push(id);
                id_by_path.insert(path, id);
            }
        }
        let tree = EventTree { nodes };
        tree.validate()?;
        Ok(tree)
    }

    pub(crate) fn from_nodes(nodes: Vec<TreeNode>) -> Result<EventTree> {
        let tree = EventTree { nodes };
        tree.validate()?;
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    /// Non-leaf node ids in ascending order.
    pub fn situations(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| !n.children.is_empty())
            .map(|(i, _)| NodeId(i))
    }

    /// Leaf node ids in ascending order.
    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.children.is_empty())
            .map(|(i, _)| NodeId(i))
    }

    pub fn is_situation(&self, id: NodeId) -> bool {
        !self.nodes[id.0].children.is_empty()
    }

    pub fn out_degree(&self, id: NodeId) -> usize {
        self.nodes[id.0].children.len()
    }

    pub fn max_out_degree(&self) -> usize {
        self.nodes.iter().map(|n| n.children.len()).max().unwrap_or(0)
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.0].parent.map(NodeId)
    }

    pub fn depth(&self, id: NodeId) -> usize {
        self.nodes[id.0].depth
    }

    /// Children of `id` in lexicographic order of their incoming labels.
    pub fn children(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes[id.0].children.iter().map(|&c| NodeId(c))
    }

    /// Outgoing edge labels of `id`, sorted.
    pub fn child_labels(&self, id: NodeId) -> Vec<&str> {
        self.nodes[id.0]
            .children
            .iter()
            .map(|&c| self.nodes[c].label.as_deref().unwrap())
            .collect()
    }

    /// Label on the incoming edge of `id` (`None` for the root).
    pub fn incoming_label(&self, id: NodeId) -> Option<&str> {
        self.nodes[id.0].label.as_deref()
    }

    /// Count on the incoming edge of `id` (0 for the root).
    pub fn incoming_count(&self, id: NodeId) -> u64 {
        self.nodes[id.0].count
    }

    /// Counts on the outgoing edges of `id`, in child order.
    pub fn child_counts(&self, id: NodeId) -> Vec<u64> {
        self.nodes[id.0]
            .children
            .iter()
            .map(|&c| self.nodes[c].count)
            .collect()
    }

    /// Root path of `id` as a label sequence.
    pub fn path_to(&self, id: NodeId) -> Vec<String> {
        let mut labels = Vec::new();
        let mut cur = id.0;
        while let Some(parent) = self.nodes[cur].parent {
            labels.push(self.nodes[cur].label.clone().unwrap());
            cur = parent;
        }
        labels.reverse();
        labels
    }

    /// Enumerate all edges as root paths with counts; inverse of
    /// [`EventTree::from_path_table`].
    pub fn flatten(&self) -> PathCountTable {
        (1..self.nodes.len())
            .map(|i| (self.path_to(NodeId(i)), self.nodes[i].count))
            .collect()
    }

    /// Check incoming count == sum of outgoing counts at every situation.
    /// Tables extended with sampling zeros below a maximal path may fail.
    pub fn validate_conservation(&self) -> Result<()> {
        for id in self.situations() {
            if id.0 == 0 {
                continue;
            }
            let outgoing: u64 = self.child_counts(id).iter().sum();
            let incoming = self.nodes[id.0].count;
            if outgoing != incoming {
                return Err(Error::validation(format!(
                    "count conservation violated at {id}: incoming {incoming}, outgoing {outgoing}"
                )));
            }
        }
        Ok(())
    }

    /// Structural validity: single root, tree property, distinct sibling
    /// labels, children sorted by label.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::validation("event tree has no nodes"));
        }
        if self.nodes[0].parent.is_some() || self.nodes[0].label.is_some() {
            return Err(Error::validation("node s0 must be the root"));
        }
        for (i, node) in self.nodes.iter().enumerate().skip(1) {
            let parent = node.parent.ok_or_else(|| {
                Error::validation(format!("node s{i} has no parent"))
            })?;
            if parent >= self.nodes.len() || !self.nodes[parent].children.contains(&i) {
                return Err(Error::validation(format!(
                    "node s{i} not linked from its parent s{parent}"
                )));
            }
            if node.label.is_none() {
                return Err(Error::validation(format!("node s{i} has no incoming label")));
            }
            if node.depth != self.nodes[parent].depth + 1 {
                return Err(Error::validation(format!("node s{i} has wrong depth")));
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let labels = self.child_labels(NodeId(i));
            for pair in labels.windows(2) {
                if pair[0] >= pair[1] {
                    return Err(Error::validation(format!(
                        "children of s{i} not in strict label order: {:?} before {:?}",
                        pair[0], pair[1]
                    )));
                }
            }
            for &c in &node.children {
                if self.nodes[c].parent != Some(i) {
                    return Err(Error::validation(format!(
                        "child link s{i} -> s{c} not mirrored"
                    )));
                }
            }
        }
        Ok(())
    }
}
