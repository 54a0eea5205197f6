//! Contraction of a staged tree into a chain event graph.
//!
//! Situations whose coloured rooted subtrees are isomorphic share a position
//! and collapse into one node; all leaves collapse into the sink `w_inf`.
//! Edge transition probabilities are the posterior means of the source
//! node's stage, so every root-to-leaf path in the tree keeps exactly the
//! same probability product in the graph.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num::Zero;

use crate::error::Error;
use crate::rational::{rat, Rat};
use crate::staging::{StagedTree, LEAF_COLOUR, SINGLETON_COLOUR};
use crate::tree::NodeId;
use crate::Result;

/// Identifier of a chain event graph node: `w0` (root), `w1`, ..., `w_inf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CegNodeId {
    Position(usize),
    Sink,
}

impl fmt::Display for CegNodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CegNodeId::Position(i) => write!(f, "w{i}"),
            CegNodeId::Sink => write!(f, "w_inf"),
        }
    }
}

impl CegNodeId {
    pub fn parse(s: &str) -> Result<CegNodeId> {
        if s == "w_inf" {
            return Ok(CegNodeId::Sink);
        }
        s.strip_prefix('w')
            .and_then(|n| n.parse::<usize>().ok())
            .map(CegNodeId::Position)
            .ok_or_else(|| Error::validation(format!("invalid position id {s:?}")))
    }
}

/// A node of the chain event graph.
#[derive(Debug, Clone, PartialEq)]
pub struct CegNode {
    pub id: CegNodeId,
    pub colour: String,
    /// Tree nodes contracted into this node (situations; leaves for the sink).
    pub members: Vec<usize>,
}

/// A labelled edge of the chain event graph.
///
/// `count` pools the observed transitions of the contracted tree edges;
/// `prior` and `posterior` are the source stage's hyperparameters for this
/// label; `probability` is the stage posterior mean `posterior / sum`.
#[derive(Debug, Clone, PartialEq)]
pub struct CegEdge {
    pub src: usize,
    pub dst: usize,
    pub label: String,
    pub count: u64,
    pub prior: Rat,
    pub posterior: Rat,
    pub probability: Rat,
}

/// Rooted DAG of positions with a single sink, edges carrying posterior-mean
/// transition probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainEventGraph {
    nodes: Vec<CegNode>,
    edges: Vec<CegEdge>,
    /// Outgoing edge indices per node, sorted by label.
    out: Vec<Vec<usize>>,
    /// Incoming edge indices per node.
    inn: Vec<Vec<usize>>,
}

impl ChainEventGraph {
    /// Find positions and contract; the usual way to obtain a CEG.
    pub fn from_staged(staged: &StagedTree) -> Result<ChainEventGraph> {
        let positions = find_positions(staged);
        contract(staged, &positions)
    }

    pub fn nodes(&self) -> &[CegNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[CegEdge] {
        &self.edges
    }

    pub fn root(&self) -> usize {
        0
    }

    /// Index of the sink node (always the last node).
    pub fn sink(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Outgoing edge indices of a node, sorted by label.
    pub fn out_edges(&self, node: usize) -> &[usize] {
        &self.out[node]
    }

    pub fn in_edges(&self, node: usize) -> &[usize] {
        &self.inn[node]
    }

    /// Node index by display id, e.g. `"w5"`.
    pub fn node_index(&self, id: &str) -> Option<usize> {
        let id = CegNodeId::parse(id).ok()?;
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Edge index by (src display id, dst display id, label).
    pub fn edge_index(&self, src: &str, dst: &str, label: &str) -> Option<usize> {
        let src = self.node_index(src)?;
        let dst = self.node_index(dst)?;
        self.edges
            .iter()
            .position(|e| e.src == src && e.dst == dst && e.label == label)
    }

    /// Number of distinct root-to-sink paths.
    pub fn count_paths(&self) -> u64 {
        let mut memo = vec![None; self.nodes.len()];
        self.count_paths_from(self.root(), &mut memo)
    }

    fn count_paths_from(&self, node: usize, memo: &mut Vec<Option<u64>>) -> u64 {
        if node == self.sink() {
            return 1;
        }
        if let Some(c) = memo[node] {
            return c;
        }
        let total = self.out[node]
            .iter()
            .map(|&e| self.count_paths_from(self.edges[e].dst, memo))
            .sum();
        memo[node] = Some(total);
        total
    }

    pub(crate) fn from_parts(nodes: Vec<CegNode>, edges: Vec<CegEdge>) -> Result<ChainEventGraph> {
        let mut out = vec![Vec::new(); nodes.len()];
        let mut inn = vec![Vec::new(); nodes.len()];
        for (idx, edge) in edges.iter().enumerate() {
            if edge.src >= nodes.len() || edge.dst >= nodes.len() {
                return Err(Error::validation("edge endpoint out of range"));
            }
            out[edge.src].push(idx);
            inn[edge.dst].push(idx);
        }
        for list in &mut out {
            list.sort_by(|&a, &b| {
                edges[a]
                    .label
                    .cmp(&edges[b].label)
                    .then(edges[a].dst.cmp(&edges[b].dst))
            });
        }
        let graph = ChainEventGraph {
            nodes,
            edges,
            out,
            inn,
        };
        graph.validate()?;
        Ok(graph)
    }

    /// Structural and probabilistic invariants: single root and sink, DAG,
    /// per-node distinct (label, target) pairs, probabilities positive and
    /// summing to one exactly at every non-sink node.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() < 2 {
            return Err(Error::validation("a CEG needs a root and a sink"));
        }
        if self.nodes[0].id != CegNodeId::Position(0) {
            return Err(Error::validation("first node must be w0"));
        }
        if self.nodes[self.sink()].id != CegNodeId::Sink {
            return Err(Error::validation("last node must be w_inf"));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let is_sink = node.id == CegNodeId::Sink;
            if is_sink && i != self.sink() {
                return Err(Error::validation("sink must be unique and last"));
            }
            if is_sink && !self.out[i].is_empty() {
                return Err(Error::validation("sink must have no outgoing edges"));
            }
            if !is_sink && self.out[i].is_empty() {
                return Err(Error::validation(format!(
                    "non-sink node {} has no outgoing edges",
                    node.id
                )));
            }
            if i != 0 && self.inn[i].is_empty() {
                return Err(Error::validation(format!(
                    "non-root node {} has no incoming edges",
                    node.id
                )));
            }
            if i == 0 && !self.inn[i].is_empty() {
                return Err(Error::validation("root must have no incoming edges"));
            }
        }
        for (i, _) in self.nodes.iter().enumerate() {
            let mut seen = BTreeMap::new();
            for &e in &self.out[i] {
                let edge = &self.edges[e];
                if seen.insert((edge.label.clone(), edge.dst), ()).is_some() {
                    return Err(Error::validation(format!(
                        "duplicate edge {} -> {} with label {:?}",
                        self.nodes[i].id, self.nodes[edge.dst].id, edge.label
                    )));
                }
                if !num::Signed::is_positive(&edge.probability) {
                    return Err(Error::validation(format!(
                        "edge {} -{}-> {} has non-positive probability",
                        self.nodes[i].id, edge.label, self.nodes[edge.dst].id
                    )));
                }
            }
            if !self.out[i].is_empty() {
                let total: Rat = self.out[i]
                    .iter()
                    .map(|&e| self.edges[e].probability.clone())
                    .sum();
                if total != rat(1) {
                    return Err(Error::validation(format!(
                        "outgoing probabilities at {} sum to {}, expected 1",
                        self.nodes[i].id,
                        crate::rational::format_rat(&total)
                    )));
                }
            }
        }
        self.check_acyclic()?;
        Ok(())
    }

    fn check_acyclic(&self) -> Result<()> {
        // Kahn's algorithm; everything must be consumed.
        let mut indegree: Vec<usize> = self.inn.iter().map(Vec::len).collect();
        let mut ready: Vec<usize> = (0..self.nodes.len()).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(node) = ready.pop() {
            seen += 1;
            for &e in &self.out[node] {
                let dst = self.edges[e].dst;
                indegree[dst] -= 1;
                if indegree[dst] == 0 {
                    ready.push(dst);
                }
            }
        }
        if seen != self.nodes.len() {
            return Err(Error::validation("graph contains a cycle"));
        }
        Ok(())
    }

    /// Topological order of node indices (root first, sink last).
    pub fn topological_order(&self) -> Vec<usize> {
        let mut indegree: Vec<usize> = self.inn.iter().map(Vec::len).collect();
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = (0..self
            .nodes
            .len())
            .filter(|&i| indegree[i] == 0)
            .map(std::cmp::Reverse)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(std::cmp::Reverse(node)) = ready.pop() {
            order.push(node);
            for &e in &self.out[node] {
                let dst = self.edges[e].dst;
                indegree[dst] -= 1;
                if indegree[dst] == 0 {
                    ready.push(std::cmp::Reverse(dst));
                }
            }
        }
        order
    }
}

/// Map every tree node to its position id.
///
/// Computed bottom-up: all leaves share the sink position; a situation's
/// signature pairs its stage with the (label, child position) list, and equal
/// signatures share a position. The hash-map key is the full structural
/// signature, so hash collisions cannot cause false merges.
pub fn find_positions(staged: &StagedTree) -> BTreeMap<usize, CegNodeId> {
    let tree = staged.tree();

    // Provisional class ids, assigned bottom-up. Class 0 is the sink.
    #[derive(Hash, PartialEq, Eq)]
    struct Signature {
        stage: usize,
        children: Vec<(String, usize)>,
    }
    let mut class_of: Vec<usize> = vec![0; tree.len()];
    let mut classes: HashMap<Signature, usize> = HashMap::new();
    let mut next_class = 1;

    let mut by_depth: Vec<usize> = (0..tree.len()).collect();
    by_depth.sort_by_key(|&i| std::cmp::Reverse(tree.depth(NodeId(i))));
    for node in by_depth {
        let id = NodeId(node);
        if !tree.is_situation(id) {
            class_of[node] = 0;
            continue;
        }
        let signature = Signature {
            stage: staged.stage_index_of(id).expect("situations are staged"),
            children: tree
                .children(id)
                .map(|c| {
                    (
                        tree.incoming_label(c).unwrap().to_string(),
                        class_of[c.0],
                    )
                })
                .collect(),
        };
        class_of[node] = *classes.entry(signature).or_insert_with(|| {
            let c = next_class;
            next_class += 1;
            c
        });
    }

    // Renumber classes breadth-first from the root over sorted edge labels,
    // mirroring the tree's naming scheme; the sink keeps `w_inf`.
    let mut position_of_class: HashMap<usize, usize> = HashMap::new();
    position_of_class.insert(class_of[0], 0);
    let mut representative: HashMap<usize, usize> = HashMap::new(); // class -> first tree node
    for (i, &class) in class_of.iter().enumerate() {
        representative.entry(class).or_insert(i);
    }
    let mut queue = std::collections::VecDeque::from([class_of[0]]);
    let mut next_position = 1;
    while let Some(class) = queue.pop_front() {
        let rep = NodeId(representative[&class]);
        for child in staged.tree().children(rep) {
            let child_class = class_of[child.0];
            if child_class == 0 || position_of_class.contains_key(&child_class) {
                continue;
            }
            position_of_class.insert(child_class, next_position);
            next_position += 1;
            queue.push_back(child_class);
        }
    }

    (0..tree.len())
        .map(|i| {
            let class = class_of[i];
            let id = if class == 0 {
                CegNodeId::Sink
            } else {
                CegNodeId::Position(position_of_class[&class])
            };
            (i, id)
        })
        .collect()
}

/// Contract the staged tree into a chain event graph.
///
/// One node per position; parallel edges between the same node pair merge
/// only when they share a label, pooling observed counts. Each edge carries
/// its source stage's prior and posterior mass for the label, and the stage
/// posterior-mean probability.
pub fn contract(
    staged: &StagedTree,
    positions: &BTreeMap<usize, CegNodeId>,
) -> Result<ChainEventGraph> {
    let tree = staged.tree();
    let interior_count = positions
        .values()
        .filter_map(|id| match id {
            CegNodeId::Position(i) => Some(i + 1),
            CegNodeId::Sink => None,
        })
        .max()
        .unwrap_or(0);
    let node_slot = |id: &CegNodeId| -> usize {
        match id {
            CegNodeId::Position(i) => *i,
            CegNodeId::Sink => interior_count,
        }
    };

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); interior_count + 1];
    for (&tree_node, id) in positions {
        members[node_slot(id)].push(tree_node);
    }

    let mut nodes = Vec::with_capacity(interior_count + 1);
    for (slot, member_list) in members.iter().enumerate() {
        let id = if slot == interior_count {
            CegNodeId::Sink
        } else {
            CegNodeId::Position(slot)
        };
        let colour = if id == CegNodeId::Sink {
            LEAF_COLOUR.to_string()
        } else {
            staged
                .stage_of(NodeId(member_list[0]))
                .and_then(|s| s.colour.clone())
                .unwrap_or_else(|| SINGLETON_COLOUR.to_string())
        };
        nodes.push(CegNode {
            id,
            colour,
            members: member_list.clone(),
        });
    }

    // Pool tree edges by (source position, label); targets agree by the
    // definition of positions.
    let mut pooled: BTreeMap<(usize, String), (usize, u64)> = BTreeMap::new();
    for (&tree_node, id) in positions {
        let node = NodeId(tree_node);
        if !tree.is_situation(node) {
            continue;
        }
        let src = node_slot(id);
        for child in tree.children(node) {
            let label = tree.incoming_label(child).unwrap().to_string();
            let dst = node_slot(&positions[&child.0]);
            let entry = pooled.entry((src, label)).or_insert((dst, 0));
            if entry.0 != dst {
                return Err(Error::validation(
                    "position map sends one (node, label) to two targets",
                ));
            }
            entry.1 += tree.incoming_count(child);
        }
    }

    let mut edges = Vec::with_capacity(pooled.len());
    for ((src, label), (dst, count)) in pooled {
        let rep = NodeId(nodes[src].members[0]);
        let stage = staged
            .stage_of(rep)
            .ok_or_else(|| Error::validation(format!("no stage for situation {rep}")))?;
        let slot = stage
            .labels
            .iter()
            .position(|l| *l == label)
            .ok_or_else(|| Error::validation(format!("label {label:?} missing from stage")))?;
        let posterior = stage.posterior();
        let total: Rat = posterior.iter().sum();
        if total.is_zero() {
            return Err(Error::validation("stage with zero posterior mass"));
        }
        edges.push(CegEdge {
            src,
            dst,
            label,
            count,
            prior: stage.alpha[slot].clone(),
            posterior: posterior[slot].clone(),
            probability: &posterior[slot] / &total,
        });
    }

    ChainEventGraph::from_parts(nodes, edges)
}

/// Recompute every edge's probability as its posterior share of the source
/// node's total posterior mass. Idempotent on graphs built by [`contract`].
pub fn edge_probabilities(ceg: &ChainEventGraph) -> Result<ChainEventGraph> {
    let mut edges = ceg.edges.clone();
    for node in 0..ceg.nodes.len() {
        let total: Rat = ceg.out[node]
            .iter()
            .map(|&e| ceg.edges[e].posterior.clone())
            .sum();
        for &e in &ceg.out[node] {
            if total.is_zero() {
                return Err(Error::validation("node with zero posterior mass"));
            }
            edges[e].probability = &ceg.edges[e].posterior / &total;
        }
    }
    ChainEventGraph::from_parts(ceg.nodes.clone(), edges)
}
