//! Evidence reduction and probability propagation.
//!
//! Evidence is a conjunction of items: certain nodes, certain edges,
//! uncertain node sets and uncertain edge sets (each set a disjunction over
//! its members). A root-to-sink path is consistent when it satisfies every
//! item. `lambda_edges` computes the set of edges lying on at least one
//! consistent path; `propagate` runs the two-pass backward-forward update
//! over that set, and `reduce` composes the two and drops everything whose
//! updated probability is zero.
//!
//! The edge set is computed exactly: a forward/backward sweep tracks, per
//! node, every achievable subset of satisfied items, so the result always
//! agrees with exhaustive path enumeration. The number of items per query is
//! capped at 24 to bound those subsets.

use std::collections::{BTreeSet, HashSet};

use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::ceg::{CegNodeId, ChainEventGraph};
use crate::error::Error;
use crate::rational::{rat_to_f64, Rat};
use crate::Result;

/// Most evidence items a single query may carry.
pub const MAX_EVIDENCE_ITEMS: usize = 24;

/// Evidence over a chain event graph, all items conjoined.
///
/// Negative evidence ("did not visit v") is expressed as the complementary
/// uncertain positive set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub certain_nodes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub certain_edges: Vec<(String, String, String)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub uncertain_node_sets: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub uncertain_edge_sets: Vec<Vec<(String, String, String)>>,
}

impl EvidenceSpec {
    pub fn is_empty(&self) -> bool {
        self.certain_nodes.is_empty()
            && self.certain_edges.is_empty()
            && self.uncertain_node_sets.is_empty()
            && self.uncertain_edge_sets.is_empty()
    }

    pub fn certain_node(id: impl Into<String>) -> EvidenceSpec {
        EvidenceSpec {
            certain_nodes: vec![id.into()],
            ..Default::default()
        }
    }

    /// Append all items of `other` to this spec.
    pub fn and(mut self, other: EvidenceSpec) -> EvidenceSpec {
        self.certain_nodes.extend(other.certain_nodes);
        self.certain_edges.extend(other.certain_edges);
        self.uncertain_node_sets.extend(other.uncertain_node_sets);
        self.uncertain_edge_sets.extend(other.uncertain_edge_sets);
        self
    }
}

/// Graph shape shared by [`ChainEventGraph`] and [`ReducedCeg`], so evidence
/// can be applied to either.
pub trait CegLike {
    fn n_nodes(&self) -> usize;
    fn n_edges(&self) -> usize;
    fn node_id(&self, node: usize) -> CegNodeId;
    fn node_colour(&self, node: usize) -> &str;
    fn node_members(&self, node: usize) -> &[usize];
    fn edge_ends(&self, edge: usize) -> (usize, usize);
    fn edge_label(&self, edge: usize) -> &str;
    fn out_edges(&self, node: usize) -> &[usize];
    fn in_edges(&self, node: usize) -> &[usize];
    fn prob_f64(&self, edge: usize) -> f64;
    fn prob_exact(&self, edge: usize) -> Option<Rat>;

    fn root(&self) -> usize {
        0
    }
    fn sink(&self) -> usize {
        self.n_nodes() - 1
    }

    fn find_node(&self, id: &str) -> Option<usize> {
        let parsed = CegNodeId::parse(id).ok()?;
        (0..self.n_nodes()).find(|&i| self.node_id(i) == parsed)
    }

    fn find_edge(&self, src: &str, dst: &str, label: &str) -> Option<usize> {
        let src = self.find_node(src)?;
        let dst = self.find_node(dst)?;
        (0..self.n_edges()).find(|&e| {
            self.edge_ends(e) == (src, dst) && self.edge_label(e) == label
        })
    }
}

impl CegLike for ChainEventGraph {
    fn n_nodes(&self) -> usize {
        self.nodes().len()
    }
    fn n_edges(&self) -> usize {
        self.edges().len()
    }
    fn node_id(&self, node: usize) -> CegNodeId {
        self.nodes()[node].id
    }
    fn node_colour(&self, node: usize) -> &str {
        &self.nodes()[node].colour
    }
    fn node_members(&self, node: usize) -> &[usize] {
        &self.nodes()[node].members
    }
    fn edge_ends(&self, edge: usize) -> (usize, usize) {
        (self.edges()[edge].src, self.edges()[edge].dst)
    }
    fn edge_label(&self, edge: usize) -> &str {
        &self.edges()[edge].label
    }
    fn out_edges(&self, node: usize) -> &[usize] {
        self.out_edges(node)
    }
    fn in_edges(&self, node: usize) -> &[usize] {
        self.in_edges(node)
    }
    fn prob_f64(&self, edge: usize) -> f64 {
        rat_to_f64(&self.edges()[edge].probability)
    }
    fn prob_exact(&self, edge: usize) -> Option<Rat> {
        Some(self.edges()[edge].probability.clone())
    }
}

/// One resolved evidence item: satisfied by visiting any listed node or
/// traversing any listed edge.
struct Item {
    description: String,
    nodes: Vec<usize>,
    edges: Vec<usize>,
}

fn resolve_items(graph: &impl CegLike, spec: &EvidenceSpec) -> Result<Vec<Item>> {
    let mut items = Vec::new();
    let node = |id: &str| -> Result<usize> {
        graph.find_node(id).ok_or_else(|| Error::UnknownReference {
            kind: "node",
            name: id.to_string(),
        })
    };
    let edge = |(src, dst, label): &(String, String, String)| -> Result<usize> {
        graph
            .find_edge(src, dst, label)
            .ok_or_else(|| Error::UnknownReference {
                kind: "edge",
                name: format!("({src}, {dst}, {label})"),
            })
    };
    for id in &spec.certain_nodes {
        items.push(Item {
            description: format!("certain node {id}"),
            nodes: vec![node(id)?],
            edges: Vec::new(),
        });
    }
    for triple in &spec.certain_edges {
        items.push(Item {
            description: format!("certain edge ({}, {}, {})", triple.0, triple.1, triple.2),
            nodes: Vec::new(),
            edges: vec![edge(triple)?],
        });
    }
    for set in &spec.uncertain_node_sets {
        if set.is_empty() {
            return Err(Error::validation("uncertain node set must be non-empty"));
        }
        items.push(Item {
            description: format!("uncertain node set {{{}}}", set.join(", ")),
            nodes: set.iter().map(|id| node(id)).collect::<Result<_>>()?,
            edges: Vec::new(),
        });
    }
    for set in &spec.uncertain_edge_sets {
        if set.is_empty() {
            return Err(Error::validation("uncertain edge set must be non-empty"));
        }
        items.push(Item {
            description: format!(
                "uncertain edge set {{{}}}",
                set.iter()
                    .map(|(s, d, l)| format!("({s}, {d}, {l})"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
            nodes: Vec::new(),
            edges: set.iter().map(edge).collect::<Result<_>>()?,
        });
    }
    if items.len() > MAX_EVIDENCE_ITEMS {
        return Err(Error::validation(format!(
            "at most {MAX_EVIDENCE_ITEMS} evidence items are supported, got {}",
            items.len()
        )));
    }
    Ok(items)
}

fn topological_order(graph: &impl CegLike) -> Vec<usize> {
    let mut indegree: Vec<usize> = (0..graph.n_nodes())
        .map(|i| graph.in_edges(i).len())
        .collect();
    let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = (0..graph.n_nodes())
        .filter(|&i| indegree[i] == 0)
        .map(std::cmp::Reverse)
        .collect();
    let mut order = Vec::with_capacity(graph.n_nodes());
    while let Some(std::cmp::Reverse(node)) = ready.pop() {
        order.push(node);
        for &e in graph.out_edges(node) {
            let (_, dst) = graph.edge_ends(e);
            indegree[dst] -= 1;
            if indegree[dst] == 0 {
                ready.push(std::cmp::Reverse(dst));
            }
        }
    }
    order
}

/// Edges lying on at least one root-to-sink path consistent with all items.
///
/// A path is consistent when it visits every certain node, traverses every
/// certain edge and hits at least one member of each uncertain set. Errors
/// with the first item (in specification order) that annihilates the path
/// set when no consistent path exists.
pub fn lambda_edges(graph: &impl CegLike, spec: &EvidenceSpec) -> Result<BTreeSet<usize>> {
    let items = resolve_items(graph, spec)?;
    let k = items.len();
    // k <= MAX_EVIDENCE_ITEMS, so the shift stays within u32.
    let full: u32 = (1u32 << k) - 1;

    let mut node_bits = vec![0u32; graph.n_nodes()];
    let mut edge_bits = vec![0u32; graph.n_edges()];
    for (bit, item) in items.iter().enumerate() {
        for &n in &item.nodes {
            node_bits[n] |= 1 << bit;
        }
        for &e in &item.edges {
            edge_bits[e] |= 1 << bit;
        }
    }

    let order = topological_order(graph);

    // Achievable satisfied-item masks on arrival at each node (the node's own
    // memberships included).
    let mut forward: Vec<HashSet<u32>> = vec![HashSet::new(); graph.n_nodes()];
    forward[graph.root()].insert(node_bits[graph.root()]);
    for &node in &order {
        for &e in graph.out_edges(node) {
            let (_, dst) = graph.edge_ends(e);
            let extra = edge_bits[e] | node_bits[dst];
            let next: Vec<u32> = forward[node].iter().map(|m| m | extra).collect();
            forward[dst].extend(next);
        }
    }

    // Masks collectable strictly after each node on the way to the sink.
    let mut collect: Vec<HashSet<u32>> = vec![HashSet::new(); graph.n_nodes()];
    collect[graph.sink()].insert(0);
    for &node in order.iter().rev() {
        for &e in graph.out_edges(node) {
            let (_, dst) = graph.edge_ends(e);
            let extra = edge_bits[e] | node_bits[dst];
            let next: Vec<u32> = collect[dst].iter().map(|m| m | extra).collect();
            collect[node].extend(next);
        }
    }

    if !forward[graph.sink()].iter().any(|&m| m == full) {
        // Find the shortest prefix of the item list with no satisfying path.
        for i in 1..=k {
            let prefix: u32 = (1u32 << i) - 1;
            if !forward[graph.sink()].iter().any(|&m| m & prefix == prefix) {
                return Err(Error::ContradictoryEvidence(format!(
                    "{} leaves no consistent root-to-sink path",
                    items[i - 1].description
                )));
            }
        }
        unreachable!("no full mask implies some annihilating prefix");
    }

    let mut lambda = BTreeSet::new();
    for (e, &bits) in edge_bits.iter().enumerate() {
        let (src, dst) = graph.edge_ends(e);
        let extra = bits | node_bits[dst];
        let found = forward[src].iter().any(|&m| {
            let need = full & !(m | extra);
            collect[dst].iter().any(|&c| c & need == need)
        });
        if found {
            lambda.insert(e);
        }
    }
    Ok(lambda)
}

/// Numeric domain for propagation: doubles by default, exact rationals on
/// request.
trait Scalar:
    Clone
    + PartialEq
    + PartialOrd
    + Zero
    + One
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
{
}

impl Scalar for f64 {}

impl Scalar for Rat {}

struct Propagated<T> {
    /// Per original edge: updated conditional transition probability.
    p_hat: Vec<T>,
    /// Per original node: probability of occupying the node.
    occupancy: Vec<T>,
}

/// Two-pass backward-forward update. Backward from the sink with
/// `phi(sink) = 1`: `tau(e) = p(e) * phi(dst)` inside the edge set, else 0,
/// and `phi(node) = sum tau` over its outgoing edges. Forward normalisation
/// `p_hat(e) = tau(e) / phi(src)` and occupancy accumulation from the root.
fn backward_forward<G: CegLike, T: Scalar>(
    graph: &G,
    lambda: &BTreeSet<usize>,
    prob: impl Fn(&G, usize) -> T,
) -> Result<Propagated<T>> {
    let order = topological_order(graph);
    let mut phi: Vec<T> = vec![T::zero(); graph.n_nodes()];
    phi[graph.sink()] = T::one();
    let mut tau: Vec<T> = vec![T::zero(); graph.n_edges()];
    for &node in order.iter().rev() {
        if node == graph.sink() {
            continue;
        }
        let mut total = T::zero();
        for &e in graph.out_edges(node) {
            if lambda.contains(&e) {
                let (_, dst) = graph.edge_ends(e);
                tau[e] = prob(graph, e) * phi[dst].clone();
            }
            total = total + tau[e].clone();
        }
        phi[node] = total;
    }
    if phi[graph.root()].is_zero() {
        return Err(Error::ContradictoryEvidence(
            "evidence assigns probability zero to every root-to-sink path".into(),
        ));
    }

    let mut p_hat: Vec<T> = vec![T::zero(); graph.n_edges()];
    for e in lambda {
        let (src, _) = graph.edge_ends(*e);
        if !phi[src].is_zero() {
            p_hat[*e] = tau[*e].clone() / phi[src].clone();
        }
    }

    let mut occupancy: Vec<T> = vec![T::zero(); graph.n_nodes()];
    occupancy[graph.root()] = T::one();
    for &node in &order {
        for &e in graph.out_edges(node) {
            if p_hat[e].is_zero() {
                continue;
            }
            let (_, dst) = graph.edge_ends(e);
            occupancy[dst] =
                occupancy[dst].clone() + occupancy[node].clone() * p_hat[e].clone();
        }
    }
    Ok(Propagated { p_hat, occupancy })
}

/// A node of the reduced graph, keeping its original id and colour.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedNode {
    pub id: CegNodeId,
    pub colour: String,
    pub members: Vec<usize>,
    pub occupancy: f64,
    pub occupancy_exact: Option<Rat>,
}

/// An edge of the reduced graph with its updated transition probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedEdge {
    pub src: usize,
    pub dst: usize,
    pub label: String,
    pub p_hat: f64,
    pub p_hat_exact: Option<Rat>,
}

/// The evidence-reduced graph: exactly the nodes and edges on consistent
/// paths, with renormalised transition probabilities and node occupancies.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedCeg {
    nodes: Vec<ReducedNode>,
    edges: Vec<ReducedEdge>,
    out: Vec<Vec<usize>>,
    inn: Vec<Vec<usize>>,
}

impl ReducedCeg {
    pub fn nodes(&self) -> &[ReducedNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[ReducedEdge] {
        &self.edges
    }

    pub fn node_by_id(&self, id: &str) -> Option<&ReducedNode> {
        let parsed = CegNodeId::parse(id).ok()?;
        self.nodes.iter().find(|n| n.id == parsed)
    }

    pub(crate) fn from_parts(nodes: Vec<ReducedNode>, edges: Vec<ReducedEdge>) -> ReducedCeg {
        let mut out = vec![Vec::new(); nodes.len()];
        let mut inn = vec![Vec::new(); nodes.len()];
        for (idx, edge) in edges.iter().enumerate() {
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
        ReducedCeg {
            nodes,
            edges,
            out,
            inn,
        }
    }
}

impl CegLike for ReducedCeg {
    fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
    fn n_edges(&self) -> usize {
        self.edges.len()
    }
    fn node_id(&self, node: usize) -> CegNodeId {
        self.nodes[node].id
    }
    fn node_colour(&self, node: usize) -> &str {
        &self.nodes[node].colour
    }
    fn node_members(&self, node: usize) -> &[usize] {
        &self.nodes[node].members
    }
    fn edge_ends(&self, edge: usize) -> (usize, usize) {
        (self.edges[edge].src, self.edges[edge].dst)
    }
    fn edge_label(&self, edge: usize) -> &str {
        &self.edges[edge].label
    }
    fn out_edges(&self, node: usize) -> &[usize] {
        &self.out[node]
    }
    fn in_edges(&self, node: usize) -> &[usize] {
        &self.inn[node]
    }
    fn prob_f64(&self, edge: usize) -> f64 {
        self.edges[edge].p_hat
    }
    fn prob_exact(&self, edge: usize) -> Option<Rat> {
        self.edges[edge].p_hat_exact.clone()
    }
}

fn build_reduced<G: CegLike>(
    graph: &G,
    lambda: &BTreeSet<usize>,
    values: Propagated<f64>,
    exact: Option<Propagated<Rat>>,
) -> ReducedCeg {
    let mut keep_node = vec![false; graph.n_nodes()];
    for &e in lambda {
        let (src, dst) = graph.edge_ends(e);
        keep_node[src] = true;
        keep_node[dst] = true;
    }
    let mut new_index = vec![usize::MAX; graph.n_nodes()];
    let mut nodes = Vec::new();
    for node in 0..graph.n_nodes() {
        if !keep_node[node] {
            continue;
        }
        new_index[node] = nodes.len();
        nodes.push(ReducedNode {
            id: graph.node_id(node),
            colour: graph.node_colour(node).to_string(),
            members: graph.node_members(node).to_vec(),
            occupancy: values.occupancy[node],
            occupancy_exact: exact.as_ref().map(|x| x.occupancy[node].clone()),
        });
    }
    let edges = lambda
        .iter()
        .map(|&e| {
            let (src, dst) = graph.edge_ends(e);
            ReducedEdge {
                src: new_index[src],
                dst: new_index[dst],
                label: graph.edge_label(e).to_string(),
                p_hat: values.p_hat[e],
                p_hat_exact: exact.as_ref().map(|x| x.p_hat[e].clone()),
            }
        })
        .collect();
    ReducedCeg::from_parts(nodes, edges)
}

/// Propagate over a given edge set in double precision.
pub fn propagate(graph: &impl CegLike, lambda: &BTreeSet<usize>) -> Result<ReducedCeg> {
    check_lambda(graph, lambda)?;
    let values = backward_forward(graph, lambda, |g, e| g.prob_f64(e))?;
    Ok(build_reduced(graph, lambda, values, None))
}

/// Propagate with exact rational arithmetic alongside the double values.
pub fn propagate_exact(graph: &impl CegLike, lambda: &BTreeSet<usize>) -> Result<ReducedCeg> {
    check_lambda(graph, lambda)?;
    for e in 0..graph.n_edges() {
        if graph.prob_exact(e).is_none() {
            return Err(Error::validation(
                "exact propagation requires exact edge probabilities",
            ));
        }
    }
    let exact = backward_forward(graph, lambda, |g, e| g.prob_exact(e).unwrap())?;
    let values = Propagated {
        p_hat: exact.p_hat.iter().map(rat_to_f64).collect(),
        occupancy: exact.occupancy.iter().map(rat_to_f64).collect(),
    };
    Ok(build_reduced(graph, lambda, values, Some(exact)))
}

fn check_lambda(graph: &impl CegLike, lambda: &BTreeSet<usize>) -> Result<()> {
    if lambda.is_empty() {
        return Err(Error::validation("edge set for propagation is empty"));
    }
    if let Some(&max) = lambda.iter().next_back() {
        if max >= graph.n_edges() {
            return Err(Error::validation("edge set references unknown edges"));
        }
    }
    Ok(())
}

/// Reduce a graph by evidence: compute the consistent edge set, propagate,
/// and drop everything with updated probability zero.
pub fn reduce(graph: &impl CegLike, spec: &EvidenceSpec) -> Result<ReducedCeg> {
    let lambda = lambda_edges(graph, spec)?;
    propagate(graph, &lambda)
}

/// [`reduce`] with exact rational propagation.
pub fn reduce_exact(graph: &impl CegLike, spec: &EvidenceSpec) -> Result<ReducedCeg> {
    let lambda = lambda_edges(graph, spec)?;
    propagate_exact(graph, &lambda)
}

/// Sanity checks on a reduced graph: occupancies positive on retained nodes
/// and outgoing probabilities summing to one. Used by tests and loaders.
pub fn validate_reduced(reduced: &ReducedCeg, tolerance: f64) -> Result<()> {
    for (i, node) in reduced.nodes.iter().enumerate() {
        if i != reduced.sink() && reduced.out[i].is_empty() {
            return Err(Error::validation(format!(
                "retained node {} has no outgoing edges",
                node.id
            )));
        }
        if !reduced.out[i].is_empty() {
            let total: f64 = reduced.out[i].iter().map(|&e| reduced.edges[e].p_hat).sum();
            if (total - 1.0).abs() > tolerance {
                return Err(Error::validation(format!(
                    "updated probabilities at {} sum to {total}, expected 1",
                    node.id
                )));
            }
            if let Some(exact_total) = reduced.out[i]
                .iter()
                .map(|&e| reduced.edges[e].p_hat_exact.clone())
                .sum::<Option<Rat>>()
            {
                if !exact_total.is_one() {
                    return Err(Error::validation(format!(
                        "exact updated probabilities at {} do not sum to 1",
                        node.id
                    )));
                }
            }
        }
        if node.occupancy <= 0.0 {
            return Err(Error::validation(format!(
                "retained node {} has non-positive occupancy",
                node.id
            )));
        }
        if let Some(occ) = &node.occupancy_exact {
            if !occ.is_positive() {
                return Err(Error::validation(format!(
                    "retained node {} has non-positive exact occupancy",
                    node.id
                )));
            }
        }
    }
    Ok(())
}
