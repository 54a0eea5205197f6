//! JSON persistence for all model kinds.
//!
//! Every file carries a `kind` discriminator (`event_tree`, `staged_tree`,
//! `ceg`, `reduced_ceg`). Serialization is canonical: fixed field order,
//! nodes in id order, edges in (source, label) order, rationals as exact
//! strings. Loading re-validates every structural invariant and reports
//! schema violations with a JSON pointer.

use std::collections::BTreeMap;
use std::path::Path;

use num::Signed;
use serde::{Deserialize, Serialize};

use crate::ceg::{CegEdge, CegNode, CegNodeId, ChainEventGraph};
use crate::error::Error;
use crate::evidence::{EvidenceSpec, ReducedCeg, ReducedEdge, ReducedNode};
use crate::prior::Hyperstage;
use crate::rational::{format_rat, parse_rat, rat, rat_to_f64, Rat};
use crate::staging::{log_marginal_score, Stage, StagedTree};
use crate::tree::{EventTree, NodeId};
use crate::Result;

/// Any serialisable model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    EventTree(EventTree),
    StagedTree(StagedTree),
    Ceg(ChainEventGraph),
    ReducedCeg(ReducedCeg),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::EventTree(_) => "event_tree",
            Model::StagedTree(_) => "staged_tree",
            Model::Ceg(_) => "ceg",
            Model::ReducedCeg(_) => "reduced_ceg",
        }
    }

    pub fn into_event_tree(self) -> Result<EventTree> {
        match self {
            Model::EventTree(t) => Ok(t),
            other => Err(Error::validation(format!(
                "expected an event_tree file, found {}",
                other.kind()
            ))),
        }
    }

    pub fn into_staged_tree(self) -> Result<StagedTree> {
        match self {
            Model::StagedTree(t) => Ok(t),
            other => Err(Error::validation(format!(
                "expected a staged_tree file, found {}",
                other.kind()
            ))),
        }
    }

    pub fn into_ceg(self) -> Result<ChainEventGraph> {
        match self {
            Model::Ceg(c) => Ok(c),
            other => Err(Error::validation(format!(
                "expected a ceg file, found {}",
                other.kind()
            ))),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind")]
enum FileModel {
    #[serde(rename = "event_tree")]
    Tree(TreeFile),
    #[serde(rename = "staged_tree")]
    Staged(StagedFile),
    #[serde(rename = "ceg")]
    Ceg(CegFile),
    #[serde(rename = "reduced_ceg")]
    Reduced(ReducedFile),
}

#[derive(Serialize, Deserialize)]
struct TreeFile {
    nodes: Vec<TreeNodeFile>,
    edges: Vec<TreeEdgeFile>,
}

#[derive(Serialize, Deserialize)]
struct TreeNodeFile {
    id: String,
}

#[derive(Serialize, Deserialize)]
struct TreeEdgeFile {
    src: String,
    dst: String,
    label: String,
    count: u64,
}

#[derive(Serialize, Deserialize)]
struct StagedFile {
    tree: TreeFile,
    hyperstage: Vec<Vec<String>>,
    stages: Vec<StageFile>,
    score: f64,
}

#[derive(Serialize, Deserialize)]
struct StageFile {
    members: Vec<String>,
    labels: Vec<String>,
    alpha: Vec<String>,
    data: Vec<u64>,
    posterior: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    colour: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct CegFile {
    nodes: Vec<CegNodeFile>,
    edges: Vec<CegEdgeFile>,
}

#[derive(Serialize, Deserialize)]
struct CegNodeFile {
    id: String,
    colour: String,
    members: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CegEdgeFile {
    src: String,
    dst: String,
    label: String,
    count: u64,
    prior: String,
    posterior: String,
    probability: String,
    probability_decimal: f64,
}

#[derive(Serialize, Deserialize)]
struct ReducedFile {
    nodes: Vec<ReducedNodeFile>,
    edges: Vec<ReducedEdgeFile>,
}

#[derive(Serialize, Deserialize)]
struct ReducedNodeFile {
    id: String,
    colour: String,
    members: Vec<String>,
    occupancy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    occupancy_exact: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ReducedEdgeFile {
    src: String,
    dst: String,
    label: String,
    p_hat: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_hat_exact: Option<String>,
}

// --- encoding ---------------------------------------------------------

fn tree_to_file(tree: &EventTree) -> TreeFile {
    let nodes = (0..tree.len())
        .map(|i| TreeNodeFile {
            id: NodeId(i).to_string(),
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..tree.len() {
        let id = NodeId(i);
        for child in tree.children(id) {
            edges.push(TreeEdgeFile {
                src: id.to_string(),
                dst: child.to_string(),
                label: tree.incoming_label(child).unwrap().to_string(),
                count: tree.incoming_count(child),
            });
        }
    }
    TreeFile { nodes, edges }
}

fn staged_to_file(staged: &StagedTree) -> StagedFile {
    StagedFile {
        tree: tree_to_file(staged.tree()),
        hyperstage: staged.hyperstage().display_sets(),
        stages: staged
            .stages()
            .iter()
            .map(|stage| StageFile {
                members: stage.members.iter().map(|&m| NodeId(m).to_string()).collect(),
                labels: stage.labels.clone(),
                alpha: stage.alpha.iter().map(format_rat).collect(),
                data: stage.counts.clone(),
                posterior: stage.posterior().iter().map(format_rat).collect(),
                colour: stage.colour.clone(),
            })
            .collect(),
        score: staged.score(),
    }
}

fn ceg_to_file(ceg: &ChainEventGraph) -> CegFile {
    CegFile {
        nodes: ceg
            .nodes()
            .iter()
            .map(|n| CegNodeFile {
                id: n.id.to_string(),
                colour: n.colour.clone(),
                members: n.members.iter().map(|&m| NodeId(m).to_string()).collect(),
            })
            .collect(),
        edges: ceg
            .edges()
            .iter()
            .map(|e| CegEdgeFile {
                src: ceg.nodes()[e.src].id.to_string(),
                dst: ceg.nodes()[e.dst].id.to_string(),
                label: e.label.clone(),
                count: e.count,
                prior: format_rat(&e.prior),
                posterior: format_rat(&e.posterior),
                probability: format_rat(&e.probability),
                probability_decimal: rat_to_f64(&e.probability),
            })
            .collect(),
    }
}

fn reduced_to_file(reduced: &ReducedCeg) -> ReducedFile {
    ReducedFile {
        nodes: reduced
            .nodes()
            .iter()
            .map(|n| ReducedNodeFile {
                id: n.id.to_string(),
                colour: n.colour.clone(),
                members: n.members.iter().map(|&m| NodeId(m).to_string()).collect(),
                occupancy: n.occupancy,
                occupancy_exact: n.occupancy_exact.as_ref().map(format_rat),
            })
            .collect(),
        edges: reduced
            .edges()
            .iter()
            .map(|e| ReducedEdgeFile {
                src: reduced.nodes()[e.src].id.to_string(),
                dst: reduced.nodes()[e.dst].id.to_string(),
                label: e.label.clone(),
                p_hat: e.p_hat,
                p_hat_exact: e.p_hat_exact.as_ref().map(format_rat),
            })
            .collect(),
    }
}

// --- decoding ---------------------------------------------------------

fn parse_node_id(s: &str, pointer: String) -> Result<usize> {
    NodeId::parse(s)
        .map(|id| id.0)
        .map_err(|_| Error::schema(pointer, format!("invalid node id {s:?}")))
}

fn tree_from_file(file: &TreeFile, base: &str) -> Result<EventTree> {
    use crate::tree::TreeNode;
    let n = file.nodes.len();
    for (i, node) in file.nodes.iter().enumerate() {
        let idx = parse_node_id(&node.id, format!("{base}/nodes/{i}/id"))?;
        if idx != i {
            return Err(Error::schema(
                format!("{base}/nodes/{i}/id"),
                format!("expected s{i}, found {:?}", node.id),
            ));
        }
    }
    let mut parents: Vec<Option<usize>> = vec![None; n];
    let mut labels: Vec<Option<String>> = vec![None; n];
    let mut counts: Vec<u64> = vec![0; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (j, edge) in file.edges.iter().enumerate() {
        let src = parse_node_id(&edge.src, format!("{base}/edges/{j}/src"))?;
        let dst = parse_node_id(&edge.dst, format!("{base}/edges/{j}/dst"))?;
        if src >= n || dst >= n {
            return Err(Error::schema(
                format!("{base}/edges/{j}"),
                "edge endpoint out of range",
            ));
        }
        if dst == 0 || parents[dst].is_some() {
            return Err(Error::schema(
                format!("{base}/edges/{j}/dst"),
                "node must have exactly one incoming edge",
            ));
        }
        parents[dst] = Some(src);
        labels[dst] = Some(edge.label.clone());
        counts[dst] = edge.count;
        children[src].push(dst);
    }
    // Depths via parent chains, guarding against cycles.
    let mut depths = vec![usize::MAX; n];
    depths[0] = 0;
    for start in 1..n {
        let mut chain = Vec::new();
        let mut cur = start;
        while depths[cur] == usize::MAX {
            chain.push(cur);
            cur = parents[cur].ok_or_else(|| {
                Error::schema(format!("{base}/nodes/{cur}"), "node unreachable from s0")
            })?;
            if chain.len() > n {
                return Err(Error::schema(
                    format!("{base}/edges"),
                    "edges contain a cycle",
                ));
            }
        }
        for (offset, &node) in chain.iter().rev().enumerate() {
            depths[node] = depths[cur] + offset + 1;
        }
    }
    for list in &mut children {
        list.sort_by(|&a, &b| labels[a].cmp(&labels[b]));
    }
    let nodes = (0..n)
        .map(|i| TreeNode {
            parent: parents[i],
            label: labels[i].take(),
            count: counts[i],
            children: std::mem::take(&mut children[i]),
            depth: depths[i],
        })
        .collect();
    EventTree::from_nodes(nodes)
}

fn staged_from_file(file: &StagedFile) -> Result<StagedTree> {
    let tree = tree_from_file(&file.tree, "/tree")?;
    let mut hyperstage_sets = Vec::new();
    for (i, set) in file.hyperstage.iter().enumerate() {
        let mut parsed = Vec::new();
        for (j, id) in set.iter().enumerate() {
            parsed.push(parse_node_id(id, format!("/hyperstage/{i}/{j}"))?);
        }
        hyperstage_sets.push(parsed);
    }
    let hyperstage = Hyperstage::from_user(&tree, hyperstage_sets)?;

    let mut stages = Vec::new();
    let mut staged_situations: BTreeMap<usize, ()> = BTreeMap::new();
    for (i, stage_file) in file.stages.iter().enumerate() {
        let base = format!("/stages/{i}");
        let mut members = Vec::new();
        for (j, id) in stage_file.members.iter().enumerate() {
            let m = parse_node_id(id, format!("{base}/members/{j}"))?;
            if !tree.is_situation(NodeId(m)) {
                return Err(Error::schema(
                    format!("{base}/members/{j}"),
                    format!("{id} is not a situation"),
                ));
            }
            if staged_situations.insert(m, ()).is_some() {
                return Err(Error::schema(
                    format!("{base}/members/{j}"),
                    format!("{id} belongs to more than one stage"),
                ));
            }
            members.push(m);
        }
        if members.is_empty() {
            return Err(Error::schema(format!("{base}/members"), "stage is empty"));
        }
        members.sort_unstable();
        let set_index = hyperstage.set_index(NodeId(members[0]));
        for &m in &members {
            if hyperstage.set_index(NodeId(m)) != set_index {
                return Err(Error::schema(
                    format!("{base}/members"),
                    "stage crosses hyperstage sets",
                ));
            }
            let expected: Vec<String> = tree
                .child_labels(NodeId(m))
                .into_iter()
                .map(str::to_string)
                .collect();
            if expected != stage_file.labels {
                return Err(Error::schema(
                    format!("{base}/labels"),
                    format!("labels do not match the outgoing edges of s{m}"),
                ));
            }
        }
        let k = stage_file.labels.len();
        if stage_file.alpha.len() != k || stage_file.data.len() != k
            || stage_file.posterior.len() != k
        {
            return Err(Error::schema(
                format!("{base}/alpha"),
                "alpha, data and posterior must align with labels",
            ));
        }
        let mut alpha = Vec::with_capacity(k);
        for (j, s) in stage_file.alpha.iter().enumerate() {
            let value = parse_rat(s)
                .map_err(|e| Error::schema(format!("{base}/alpha/{j}"), e.to_string()))?;
            if !value.is_positive() {
                return Err(Error::schema(
                    format!("{base}/alpha/{j}"),
                    format!("prior mass must be positive, got {s}"),
                ));
            }
            alpha.push(value);
        }
        // Pooled data must equal the tree's pooled edge counts.
        let mut expected_counts = vec![0u64; k];
        for &m in &members {
            for (slot, count) in tree.child_counts(NodeId(m)).into_iter().enumerate() {
                expected_counts[slot] += count;
            }
        }
        if expected_counts != stage_file.data {
            return Err(Error::schema(
                format!("{base}/data"),
                "data does not match the tree's edge counts",
            ));
        }
        for (j, s) in stage_file.posterior.iter().enumerate() {
            let value = parse_rat(s)
                .map_err(|e| Error::schema(format!("{base}/posterior/{j}"), e.to_string()))?;
            if value != &alpha[j] + rat(stage_file.data[j] as i64) {
                return Err(Error::schema(
                    format!("{base}/posterior/{j}"),
                    "posterior must equal alpha + data exactly",
                ));
            }
        }
        stages.push(Stage {
            members,
            labels: stage_file.labels.clone(),
            alpha,
            counts: stage_file.data.clone(),
            colour: stage_file.colour.clone(),
            first_merge_iter: None,
        });
    }
    for situation in tree.situations() {
        if !staged_situations.contains_key(&situation.0) {
            return Err(Error::schema(
                "/stages",
                format!("situation {situation} is not covered by any stage"),
            ));
        }
    }
    let recomputed = log_marginal_score(&stages);
    if (recomputed - file.score).abs() > 1e-9 * recomputed.abs().max(1.0) {
        return Err(Error::schema(
            "/score",
            format!(
                "score {} does not match the partition's log marginal likelihood {}",
                file.score, recomputed
            ),
        ));
    }
    Ok(StagedTree::assemble(
        tree,
        hyperstage,
        stages,
        file.score,
        Vec::new(),
    ))
}

fn parse_ceg_node_id(s: &str, pointer: String) -> Result<CegNodeId> {
    CegNodeId::parse(s).map_err(|_| Error::schema(pointer, format!("invalid position id {s:?}")))
}

fn ceg_from_file(file: &CegFile) -> Result<ChainEventGraph> {
    let n = file.nodes.len();
    let mut nodes = Vec::with_capacity(n);
    for (i, node) in file.nodes.iter().enumerate() {
        let id = parse_ceg_node_id(&node.id, format!("/nodes/{i}/id"))?;
        let expected = if i + 1 == n {
            CegNodeId::Sink
        } else {
            CegNodeId::Position(i)
        };
        if id != expected {
            return Err(Error::schema(
                format!("/nodes/{i}/id"),
                format!("expected {expected}, found {id}"),
            ));
        }
        let mut members = Vec::new();
        for (j, m) in node.members.iter().enumerate() {
            members.push(parse_node_id(m, format!("/nodes/{i}/members/{j}"))?);
        }
        nodes.push(CegNode {
            id,
            colour: node.colour.clone(),
            members,
        });
    }
    let index_of = |s: &str, pointer: String| -> Result<usize> {
        let id = parse_ceg_node_id(s, pointer.clone())?;
        nodes
            .iter()
            .position(|n| n.id == id)
            .ok_or_else(|| Error::schema(pointer, format!("unknown node {s}")))
    };
    let mut edges = Vec::with_capacity(file.edges.len());
    for (j, edge) in file.edges.iter().enumerate() {
        let base = format!("/edges/{j}");
        let src = index_of(&edge.src, format!("{base}/src"))?;
        let dst = index_of(&edge.dst, format!("{base}/dst"))?;
        let parse_positive = |s: &str, field: &str| -> Result<Rat> {
            let value = parse_rat(s)
                .map_err(|e| Error::schema(format!("{base}/{field}"), e.to_string()))?;
            if !value.is_positive() {
                return Err(Error::schema(
                    format!("{base}/{field}"),
                    format!("{field} must be positive, got {s}"),
                ));
            }
            Ok(value)
        };
        edges.push(CegEdge {
            src,
            dst,
            label: edge.label.clone(),
            count: edge.count,
            prior: parse_positive(&edge.prior, "prior")?,
            posterior: parse_positive(&edge.posterior, "posterior")?,
            probability: parse_positive(&edge.probability, "probability")?,
        });
    }
    ChainEventGraph::from_parts(nodes, edges)
}

fn reduced_from_file(file: &ReducedFile) -> Result<ReducedCeg> {
    let mut nodes = Vec::with_capacity(file.nodes.len());
    for (i, node) in file.nodes.iter().enumerate() {
        let id = parse_ceg_node_id(&node.id, format!("/nodes/{i}/id"))?;
        let mut members = Vec::new();
        for (j, m) in node.members.iter().enumerate() {
            members.push(parse_node_id(m, format!("/nodes/{i}/members/{j}"))?);
        }
        let occupancy_exact = match &node.occupancy_exact {
            Some(s) => Some(
                parse_rat(s)
                    .map_err(|e| Error::schema(format!("/nodes/{i}/occupancy_exact"), e.to_string()))?,
            ),
            None => None,
        };
        nodes.push(ReducedNode {
            id,
            colour: node.colour.clone(),
            members,
            occupancy: node.occupancy,
            occupancy_exact,
        });
    }
    if nodes.is_empty() || nodes[0].id != CegNodeId::Position(0) {
        return Err(Error::schema("/nodes/0/id", "first node must be w0"));
    }
    if nodes.last().unwrap().id != CegNodeId::Sink {
        return Err(Error::schema("/nodes", "last node must be w_inf"));
    }
    let index_of = |s: &str, pointer: String| -> Result<usize> {
        let id = parse_ceg_node_id(s, pointer.clone())?;
        nodes
            .iter()
            .position(|n| n.id == id)
            .ok_or_else(|| Error::schema(pointer, format!("unknown node {s}")))
    };
    let mut edges = Vec::with_capacity(file.edges.len());
    for (j, edge) in file.edges.iter().enumerate() {
        let base = format!("/edges/{j}");
        let p_hat_exact = match &edge.p_hat_exact {
            Some(s) => Some(
                parse_rat(s)
                    .map_err(|e| Error::schema(format!("{base}/p_hat_exact"), e.to_string()))?,
            ),
            None => None,
        };
        edges.push(ReducedEdge {
            src: index_of(&edge.src, format!("{base}/src"))?,
            dst: index_of(&edge.dst, format!("{base}/dst"))?,
            label: edge.label.clone(),
            p_hat: edge.p_hat,
            p_hat_exact,
        });
    }
    let reduced = ReducedCeg::from_parts(nodes, edges);
    crate::evidence::validate_reduced(&reduced, 1e-9)?;
    Ok(reduced)
}

// --- public API -------------------------------------------------------

/// Canonical JSON text for a model.
pub fn to_json(model: &Model) -> Result<String> {
    let file = match model {
        Model::EventTree(t) => FileModel::Tree(tree_to_file(t)),
        Model::StagedTree(s) => FileModel::Staged(staged_to_file(s)),
        Model::Ceg(c) => FileModel::Ceg(ceg_to_file(c)),
        Model::ReducedCeg(r) => FileModel::Reduced(reduced_to_file(r)),
    };
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

/// Parse and validate a model from JSON text.
pub fn from_json(text: &str) -> Result<Model> {
    let file: FileModel = serde_json::from_str(text)?;
    match file {
        FileModel::Tree(t) => Ok(Model::EventTree(tree_from_file(&t, "")?)),
        FileModel::Staged(s) => Ok(Model::StagedTree(staged_from_file(&s)?)),
        FileModel::Ceg(c) => Ok(Model::Ceg(ceg_from_file(&c)?)),
        FileModel::Reduced(r) => Ok(Model::ReducedCeg(reduced_from_file(&r)?)),
    }
}

/// Write a model to `path`.
pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_json(model)?).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read a model from `path`.
pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    from_json(&text)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Evidence file: the [`EvidenceSpec`] JSON schema.
pub fn load_evidence(path: impl AsRef<Path>) -> Result<EvidenceSpec> {
    read_json(path.as_ref())
}

/// Palette file: a JSON list of colour strings.
pub fn load_palette(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let palette: Vec<String> = read_json(path.as_ref())?;
    if palette.is_empty() {
        return Err(Error::validation("palette file must list at least one colour"));
    }
    Ok(palette)
}

/// Prior file: JSON map from situation id to a list of rational strings.
pub fn load_prior(path: impl AsRef<Path>) -> Result<BTreeMap<usize, Vec<Rat>>> {
    let raw: BTreeMap<String, Vec<String>> = read_json(path.as_ref())?;
    let mut prior = BTreeMap::new();
    for (id, values) in raw {
        let situation = NodeId::parse(&id)?;
        let vector = values
            .iter()
            .map(|s| parse_rat(s))
            .collect::<Result<Vec<Rat>>>()?;
        prior.insert(situation.0, vector);
    }
    Ok(prior)
}

/// Hyperstage file: JSON list of lists of situation ids.
pub fn load_hyperstage(path: impl AsRef<Path>) -> Result<Vec<Vec<usize>>> {
    let raw: Vec<Vec<String>> = read_json(path.as_ref())?;
    raw.iter()
        .map(|set| set.iter().map(|id| NodeId::parse(id).map(|n| n.0)).collect())
        .collect()
}

/// Sampling-zero file: JSON list of label paths.
pub fn load_sampling_zeros(path: impl AsRef<Path>) -> Result<Vec<Vec<String>>> {
    read_json(path.as_ref())
}
