//! Bayesian model selection over stage partitions.
//!
//! Agglomerative hierarchical clustering starts from singleton stages and
//! greedily merges the admissible pair (same hyperstage set) with the largest
//! positive log Bayes factor until no merge improves the log marginal
//! likelihood. Candidate pairs within an iteration are scored in parallel;
//! the merge decision is serial and uses a total order, so results are
//! identical for any thread count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::Error;
use crate::prior::{DirichletSpec, Hyperstage};
use crate::rational::{rat, rat_to_f64, Rat};
use crate::tree::{EventTree, NodeId};
use crate::Result;

/// Colourblind-friendly default palette for multi-member stages.
pub const DEFAULT_PALETTE: [&str; 6] = [
    "#BBCC33", "#77AADD", "#EE8866", "#EEDD88", "#FFAABB", "#44BB99",
];

/// Fill colour for singleton stages.
pub const SINGLETON_COLOUR: &str = "white";
/// Fill colour for leaves and the sink node.
pub const LEAF_COLOUR: &str = "lightgrey";

/// A set of situations sharing one transition parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    /// Member situation ids, ascending.
    pub members: Vec<usize>,
    /// Shared outgoing edge labels, lexicographic.
    pub labels: Vec<String>,
    /// Pooled prior vector, label-aligned.
    pub alpha: Vec<Rat>,
    /// Pooled observed counts, label-aligned.
    pub counts: Vec<u64>,
    /// Fill colour; `None` until colours are assigned.
    pub colour: Option<String>,
    /// Iteration at which this stage first became multi-member; `None` for
    /// stages never produced by a merge. Drives palette cycling.
    pub first_merge_iter: Option<usize>,
}

impl Stage {
    fn singleton(tree: &EventTree, spec: &DirichletSpec, situation: NodeId) -> Stage {
        Stage {
            members: vec![situation.0],
            labels: tree
                .child_labels(situation)
                .into_iter()
                .map(str::to_string)
                .collect(),
            alpha: spec.prior(situation).to_vec(),
            counts: spec.counts(situation).to_vec(),
            colour: None,
            first_merge_iter: None,
        }
    }

    /// Posterior vector: pooled prior + pooled counts.
    pub fn posterior(&self) -> Vec<Rat> {
        self.alpha
            .iter()
            .zip(&self.counts)
            .map(|(a, &y)| a + rat(y as i64))
            .collect()
    }

    pub fn min_member(&self) -> usize {
        self.members[0]
    }

    fn merged_with(&self, other: &Stage, iter: usize) -> Stage {
        let mut members = self.members.clone();
        members.extend_from_slice(&other.members);
        members.sort_unstable();
        Stage {
            members,
            labels: self.labels.clone(),
            alpha: self
                .alpha
                .iter()
                .zip(&other.alpha)
                .map(|(a, b)| a + b)
                .collect(),
            counts: self
                .counts
                .iter()
                .zip(&other.counts)
                .map(|(a, b)| a + b)
                .collect(),
            colour: None,
            first_merge_iter: match (self.first_merge_iter, other.first_merge_iter) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (Some(a), None) | (None, Some(a)) => Some(a),
                (None, None) => Some(iter),
            },
        }
    }
}

fn g(r: &Rat) -> f64 {
    ln_gamma(rat_to_f64(r))
}

/// Contribution of one stage to the log marginal likelihood:
/// `g(sum a) - g(sum a*) + sum_j (g(a*_j) - g(a_j))` with `a* = a + y`.
fn stage_term(alpha: &[Rat], counts: &[u64]) -> f64 {
    let alpha_bar: Rat = alpha.iter().sum();
    let mut post_bar = alpha_bar.clone();
    let mut term = 0.0;
    for (a, &y) in alpha.iter().zip(counts) {
        let post = a + rat(y as i64);
        term += g(&post) - g(a);
        post_bar += rat(y as i64);
    }
    g(&alpha_bar) - g(&post_bar) + term
}

/// Log marginal likelihood score of a stage partition.
pub fn log_marginal_score(stages: &[Stage]) -> f64 {
    stages.iter().map(|s| stage_term(&s.alpha, &s.counts)).sum()
}

/// Log Bayes factor comparing the model that merges `a` and `b` into one
/// stage against the model that keeps them apart, all other stages equal.
pub fn one_nested_log_bf(a: &Stage, b: &Stage) -> Result<f64> {
    if a.labels != b.labels {
        return Err(Error::validation(format!(
            "cannot compare stages with different labels: {:?} vs {:?}",
            a.labels, b.labels
        )));
    }
    let merged_alpha: Vec<Rat> = a.alpha.iter().zip(&b.alpha).map(|(x, y)| x + y).collect();
    let merged_counts: Vec<u64> = a.counts.iter().zip(&b.counts).map(|(x, y)| x + y).collect();

    let bar = |alpha: &[Rat]| -> Rat { alpha.iter().sum() };
    let post_bar = |alpha: &[Rat], counts: &[u64]| -> Rat {
        bar(alpha) + rat(counts.iter().map(|&c| c as i64).sum())
    };

    let mut log_bf = g(&bar(&merged_alpha)) - g(&bar(&a.alpha)) - g(&bar(&b.alpha))
        - g(&post_bar(&merged_alpha, &merged_counts))
        + g(&post_bar(&a.alpha, &a.counts))
        + g(&post_bar(&b.alpha, &b.counts));
    for l in 0..merged_alpha.len() {
        let post = |alpha: &[Rat], counts: &[u64]| alpha[l].clone() + rat(counts[l] as i64);
        log_bf += g(&post(&merged_alpha, &merged_counts))
            - g(&post(&a.alpha, &a.counts))
            - g(&post(&b.alpha, &b.counts))
            - g(&merged_alpha[l])
            + g(&a.alpha[l])
            + g(&b.alpha[l]);
    }
    Ok(log_bf)
}

/// One accepted merge during the AHC run.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeEvent {
    /// Smallest member ids of the two merged stages.
    pub pair: (usize, usize),
    pub log_bf: f64,
    pub score_after: f64,
}

/// An event tree with its MAP stage partition.
#[derive(Debug, Clone, PartialEq)]
pub struct StagedTree {
    tree: EventTree,
    hyperstage: Hyperstage,
    /// Partition of the situations, ordered by smallest member.
    stages: Vec<Stage>,
    stage_of: BTreeMap<usize, usize>,
    score: f64,
    merges: Vec<MergeEvent>,
}

impl StagedTree {
    pub(crate) fn assemble(
        tree: EventTree,
        hyperstage: Hyperstage,
        mut stages: Vec<Stage>,
        score: f64,
        merges: Vec<MergeEvent>,
    ) -> StagedTree {
        stages.sort_by_key(|s| s.min_member());
        let stage_of = stages
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.members.iter().map(move |&m| (m, i)))
            .collect();
        StagedTree {
            tree,
            hyperstage,
            stages,
            stage_of,
            score,
            merges,
        }
    }

    pub fn tree(&self) -> &EventTree {
        &self.tree
    }

    pub fn hyperstage(&self) -> &Hyperstage {
        &self.hyperstage
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Index into [`StagedTree::stages`] for a situation.
    pub fn stage_index_of(&self, situation: NodeId) -> Option<usize> {
        self.stage_of.get(&situation.0).copied()
    }

    pub fn stage_of(&self, situation: NodeId) -> Option<&Stage> {
        self.stage_index_of(situation).map(|i| &self.stages[i])
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn merges(&self) -> &[MergeEvent] {
        &self.merges
    }

    /// Posterior-mean transition probability vector of a situation's stage,
    /// label-aligned. Exact rationals.
    pub fn stage_means(&self, situation: NodeId) -> Option<Vec<Rat>> {
        let stage = self.stage_of(situation)?;
        let posterior = stage.posterior();
        let total: Rat = posterior.iter().sum();
        Some(posterior.into_iter().map(|p| p / total.clone()).collect())
    }
}

fn check_spec_matches_tree(tree: &EventTree, spec: &DirichletSpec) -> Result<()> {
    let tree_situations: Vec<NodeId> = tree.situations().collect();
    let spec_situations: Vec<NodeId> = spec.situations().collect();
    if tree_situations != spec_situations {
        return Err(Error::validation(
            "prior specification does not cover exactly the tree's situations",
        ));
    }
    for &s in &tree_situations {
        if spec.prior(s).len() != tree.out_degree(s) {
            return Err(Error::validation(format!(
                "prior vector length mismatch at {s}"
            )));
        }
        if spec.counts(s) != tree.child_counts(s).as_slice() {
            return Err(Error::validation(format!(
                "count vector mismatch at {s}; prior built for a different tree?"
            )));
        }
    }
    Ok(())
}

/// Run agglomerative hierarchical clustering, returning the MAP staged tree.
///
/// Ties on the log Bayes factor are broken towards the pair whose sorted
/// (smallest-member, smallest-member) key is lexicographically least, making
/// the search deterministic. Pairs with log BF exactly 0 are not merged.
pub fn run_ahc(
    tree: &EventTree,
    spec: &DirichletSpec,
    hyperstage: &Hyperstage,
) -> Result<StagedTree> {
    check_spec_matches_tree(tree, spec)?;
    for situation in tree.situations() {
        if hyperstage.set_index(situation).is_none() {
            return Err(Error::validation(format!(
                "hyperstage does not cover situation {situation}"
            )));
        }
    }

    let mut live: Vec<Option<Stage>> = tree
        .situations()
        .map(|s| Some(Stage::singleton(tree, spec, s)))
        .collect();
    let set_of: Vec<usize> = tree
        .situations()
        .map(|s| hyperstage.set_index(s).unwrap())
        .collect();

    let mut score: f64 = live
        .iter()
        .map(|s| {
            let s = s.as_ref().unwrap();
            stage_term(&s.alpha, &s.counts)
        })
        .sum();
    let mut merges = Vec::new();

    for iteration in 1.. {
        // Admissible pairs: both alive and in the same hyperstage set.
        let alive: Vec<usize> = (0..live.len()).filter(|&i| live[i].is_some()).collect();
        let mut pairs = Vec::new();
        for (pos, &i) in alive.iter().enumerate() {
            for &j in &alive[pos + 1..] {
                if set_of[i] == set_of[j] {
                    pairs.push((i, j));
                }
            }
        }
        if pairs.is_empty() {
            break;
        }

        let scored: Vec<(usize, usize, f64)> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let log_bf =
                    one_nested_log_bf(live[i].as_ref().unwrap(), live[j].as_ref().unwrap())
                        .expect("hyperstage guarantees matching labels");
                (i, j, log_bf)
            })
            .collect();

        // Serial selection with a total order keeps the result independent of
        // the scoring schedule.
        let best = scored
            .iter()
            .max_by(|a, b| {
                a.2.partial_cmp(&b.2)
                    .expect("log BF is finite")
                    .then_with(|| pair_key(&live, b.0, b.1).cmp(&pair_key(&live, a.0, a.1)))
            })
            .copied()
            .unwrap();

        let (i, j, log_bf) = best;
        if log_bf <= 0.0 {
            break;
        }
        let a = live[i].take().unwrap();
        let b = live[j].take().unwrap();
        score += log_bf;
        merges.push(MergeEvent {
            pair: (a.min_member().min(b.min_member()), a.min_member().max(b.min_member())),
            log_bf,
            score_after: score,
        });
        live[i] = Some(a.merged_with(&b, iteration));
    }

    let stages: Vec<Stage> = live.into_iter().flatten().collect();
    Ok(StagedTree::assemble(
        tree.clone(),
        hyperstage.clone(),
        stages,
        score,
        merges,
    ))
}

/// Build a staged tree from an explicit stage partition, pooling
/// hyperparameters per block and scoring the result. Every block must stay
/// within one hyperstage set.
pub fn with_partition(
    tree: &EventTree,
    spec: &DirichletSpec,
    hyperstage: &Hyperstage,
    blocks: Vec<Vec<usize>>,
) -> Result<StagedTree> {
    check_spec_matches_tree(tree, spec)?;
    let mut seen = std::collections::BTreeSet::new();
    let mut stages = Vec::new();
    for block in blocks {
        let mut members = block;
        members.sort_unstable();
        if members.is_empty() {
            return Err(Error::validation("stage block must be non-empty"));
        }
        let first = NodeId(members[0]);
        if hyperstage.set_index(first).is_none() {
            return Err(Error::validation(format!(
                "hyperstage does not cover situation {first}"
            )));
        }
        let mut alpha = vec![crate::rational::rat(0); tree.out_degree(first)];
        let mut counts = vec![0u64; tree.out_degree(first)];
        for &m in &members {
            let id = NodeId(m);
            if !tree.is_situation(id) {
                return Err(Error::validation(format!("{id} is not a situation")));
            }
            if !seen.insert(m) {
                return Err(Error::validation(format!("{id} appears in two blocks")));
            }
            if !hyperstage.same_set(first, id) {
                return Err(Error::validation(format!(
                    "block mixes hyperstage sets: {first} and {id}"
                )));
            }
            for (slot, a) in spec.prior(id).iter().enumerate() {
                alpha[slot] += a;
            }
            for (slot, &y) in spec.counts(id).iter().enumerate() {
                counts[slot] += y;
            }
        }
        stages.push(Stage {
            labels: tree
                .child_labels(first)
                .into_iter()
                .map(str::to_string)
                .collect(),
            members,
            alpha,
            counts,
            colour: None,
            first_merge_iter: None,
        });
    }
    for situation in tree.situations() {
        if !seen.contains(&situation.0) {
            return Err(Error::validation(format!(
                "situation {situation} is not covered by any block"
            )));
        }
    }
    let score = log_marginal_score(&stages);
    Ok(StagedTree::assemble(
        tree.clone(),
        hyperstage.clone(),
        stages,
        score,
        Vec::new(),
    ))
}

fn pair_key(live: &[Option<Stage>], i: usize, j: usize) -> (usize, usize) {
    let a = live[i].as_ref().unwrap().min_member();
    let b = live[j].as_ref().unwrap().min_member();
    (a.min(b), a.max(b))
}

/// Colour the stages: multi-member stages cycle through the palette in
/// creation order, singleton stages are white.
pub fn assign_colours(staged: &mut StagedTree, palette: &[String]) -> Result<()> {
    if palette.is_empty() {
        return Err(Error::validation("palette must be non-empty"));
    }
    let mut multi: Vec<usize> = (0..staged.stages.len())
        .filter(|&i| staged.stages[i].members.len() > 1)
        .collect();
    multi.sort_by_key(|&i| {
        (
            staged.stages[i].first_merge_iter.unwrap_or(usize::MAX),
            staged.stages[i].min_member(),
        )
    });
    for (order, &idx) in multi.iter().enumerate() {
        staged.stages[idx].colour = Some(palette[order % palette.len()].clone());
    }
    for stage in &mut staged.stages {
        if stage.members.len() == 1 {
            stage.colour = Some(SINGLETON_COLOUR.to_string());
        }
    }
    Ok(())
}

/// Default palette as owned strings.
pub fn default_palette() -> Vec<String> {
    DEFAULT_PALETTE.iter().map(|s| s.to_string()).collect()
}
