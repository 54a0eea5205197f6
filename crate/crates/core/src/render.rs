//! Deterministic DOT rendering.
//!
//! Output is byte-stable for identical inputs: nodes are written in id order
//! and edges in (source, label) order. Layout is left to external tools.

use crate::ceg::ChainEventGraph;
use crate::error::Error;
use crate::evidence::{CegLike, ReducedCeg};
use crate::io::Model;
use crate::rational::rat_to_decimal;
use crate::staging::{default_palette, StagedTree, LEAF_COLOUR, SINGLETON_COLOUR};
use crate::tree::EventTree;
use crate::Result;

/// Styling options for DOT output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderStyle {
    /// Colours cycled over multi-member stages when a model carries none.
    pub palette: Vec<String>,
    pub singleton_colour: String,
    pub leaf_colour: String,
    /// Decimal places for probabilities on CEG edges.
    pub precision: usize,
    pub rankdir: String,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            palette: default_palette(),
            singleton_colour: SINGLETON_COLOUR.to_string(),
            leaf_colour: LEAF_COLOUR.to_string(),
            precision: 2,
            rankdir: "LR".to_string(),
        }
    }
}

impl RenderStyle {
    pub fn validate(&self) -> Result<()> {
        if self.palette.is_empty() {
            return Err(Error::validation("palette must be non-empty"));
        }
        if self.precision < 1 {
            return Err(Error::validation("precision must be at least 1"));
        }
        Ok(())
    }
}

fn escape(label: &str) -> String {
    label.replace('\\', "\\\\").replace('"', "\\\"")
}

fn header(out: &mut String, name: &str, style: &RenderStyle) {
    out.push_str(&format!("digraph {name} {{\n"));
    out.push_str(&format!("  rankdir={};\n", style.rankdir));
    out.push_str("  node [shape=ellipse, style=filled];\n");
}

/// Render any model.
pub fn to_dot(model: &Model, style: &RenderStyle) -> Result<String> {
    style.validate()?;
    match model {
        Model::EventTree(tree) => tree_to_dot(tree, style),
        Model::StagedTree(staged) => staged_to_dot(staged, style),
        Model::Ceg(ceg) => ceg_to_dot(ceg, style),
        Model::ReducedCeg(reduced) => reduced_to_dot(reduced, style),
    }
}

/// Event tree: situations white, leaves grey, edge labels carry counts.
pub fn tree_to_dot(tree: &EventTree, style: &RenderStyle) -> Result<String> {
    style.validate()?;
    let mut out = String::new();
    header(&mut out, "event_tree", style);
    for i in 0..tree.len() {
        let id = crate::tree::NodeId(i);
        let colour = if tree.is_situation(id) {
            &style.singleton_colour
        } else {
            &style.leaf_colour
        };
        out.push_str(&format!("  \"{id}\" [fillcolor=\"{}\"];\n", escape(colour)));
    }
    for i in 0..tree.len() {
        let id = crate::tree::NodeId(i);
        for child in tree.children(id) {
            out.push_str(&format!(
                "  \"{id}\" -> \"{child}\" [label=\"{}\\n{}\"];\n",
                escape(tree.incoming_label(child).unwrap()),
                tree.incoming_count(child)
            ));
        }
    }
    out.push_str("}\n");
    Ok(out)
}

/// Staged tree: stage colours on situations. Multi-member stages without an
/// assigned colour cycle through the style palette in partition order.
pub fn staged_to_dot(staged: &StagedTree, style: &RenderStyle) -> Result<String> {
    style.validate()?;
    let tree = staged.tree();
    // Fallback colours for stages that were never explicitly coloured.
    let mut fallback: Vec<Option<String>> = vec![None; staged.stages().len()];
    let mut next = 0usize;
    for (i, stage) in staged.stages().iter().enumerate() {
        if stage.colour.is_none() && stage.members.len() > 1 {
            fallback[i] = Some(style.palette[next % style.palette.len()].clone());
            next += 1;
        }
    }
    let mut out = String::new();
    header(&mut out, "staged_tree", style);
    for i in 0..tree.len() {
        let id = crate::tree::NodeId(i);
        let colour = if tree.is_situation(id) {
            let stage_idx = staged.stage_index_of(id).unwrap();
            let stage = &staged.stages()[stage_idx];
            stage
                .colour
                .clone()
                .or_else(|| fallback[stage_idx].clone())
                .unwrap_or_else(|| style.singleton_colour.clone())
        } else {
            style.leaf_colour.clone()
        };
        out.push_str(&format!("  \"{id}\" [fillcolor=\"{}\"];\n", escape(&colour)));
    }
    for i in 0..tree.len() {
        let id = crate::tree::NodeId(i);
        for child in tree.children(id) {
            out.push_str(&format!(
                "  \"{id}\" -> \"{child}\" [label=\"{}\\n{}\"];\n",
                escape(tree.incoming_label(child).unwrap()),
                tree.incoming_count(child)
            ));
        }
    }
    out.push_str("}\n");
    Ok(out)
}

/// Chain event graph: edge labels carry posterior-mean probabilities at the
/// configured precision.
pub fn ceg_to_dot(ceg: &ChainEventGraph, style: &RenderStyle) -> Result<String> {
    style.validate()?;
    let mut out = String::new();
    header(&mut out, "ceg", style);
    for node in ceg.nodes() {
        out.push_str(&format!(
            "  \"{}\" [fillcolor=\"{}\"];\n",
            node.id,
            escape(&node.colour)
        ));
    }
    for node in 0..ceg.nodes().len() {
        for &e in ceg.out_edges(node) {
            let edge = &ceg.edges()[e];
            out.push_str(&format!(
                "  \"{}\" -> \"{}\" [label=\"{}\\n{}\"];\n",
                ceg.nodes()[edge.src].id,
                ceg.nodes()[edge.dst].id,
                escape(&edge.label),
                rat_to_decimal(&edge.probability, style.precision)
            ));
        }
    }
    out.push_str("}\n");
    Ok(out)
}

/// Evidence-reduced graph: updated probabilities, original ids and colours.
pub fn reduced_to_dot(reduced: &ReducedCeg, style: &RenderStyle) -> Result<String> {
    style.validate()?;
    let mut out = String::new();
    header(&mut out, "reduced_ceg", style);
    for node in reduced.nodes() {
        out.push_str(&format!(
            "  \"{}\" [fillcolor=\"{}\"];\n",
            node.id,
            escape(&node.colour)
        ));
    }
    for node in 0..reduced.nodes().len() {
        for &e in reduced.out_edges(node) {
            let edge = &reduced.edges()[e];
            out.push_str(&format!(
                "  \"{}\" -> \"{}\" [label=\"{}\\n{:.*}\"];\n",
                reduced.nodes()[edge.src].id,
                reduced.nodes()[edge.dst].id,
                escape(&edge.label),
                style.precision,
                edge.p_hat
            ));
        }
    }
    out.push_str("}\n");
    Ok(out)
}
