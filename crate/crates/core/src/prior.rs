//! Dirichlet priors by mass conservation and hyperstage constraints.
//!
//! The default prior places an imaginary sample of size alpha-bar at the root
//! and propagates it uniformly: each situation splits its incoming mass
//! equally over its outgoing edges. All mass is exact rational. The default
//! hyperstage groups situations with the same out-degree and the same set of
//! outgoing labels; only situations in a common hyperstage set may be merged
//! into one stage.

use std::collections::BTreeMap;

use num::Zero;

use crate::error::Error;
use crate::rational::{ensure_positive, format_rat, rat, Rat};
use crate::tree::{EventTree, NodeId};
use crate::Result;

/// Per-situation Dirichlet hyperparameters aligned with the tree.
///
/// For each situation the prior vector, the observed edge counts and the
/// posterior (prior + counts) are kept in lexicographic edge-label order,
/// matching the tree's child order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirichletSpec {
    /// situation id -> prior vector, in child order.
    priors: BTreeMap<usize, Vec<Rat>>,
    /// situation id -> observed edge counts, in child order.
    counts: BTreeMap<usize, Vec<u64>>,
}

impl DirichletSpec {
    pub fn prior(&self, situation: NodeId) -> &[Rat] {
        &self.priors[&situation.0]
    }

    pub fn counts(&self, situation: NodeId) -> &[u64] {
        &self.counts[&situation.0]
    }

    /// Posterior vector: prior + counts, exact.
    pub fn posterior(&self, situation: NodeId) -> Vec<Rat> {
        self.priors[&situation.0]
            .iter()
            .zip(&self.counts[&situation.0])
            .map(|(a, &y)| a + rat(y as i64))
            .collect()
    }

    pub fn situations(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.priors.keys().map(|&i| NodeId(i))
    }
}

/// Default imaginary sample size: the maximum out-degree over all situations.
pub fn default_alpha(tree: &EventTree) -> Rat {
    rat(tree.max_out_degree() as i64)
}

/// Prior by mass conservation from a root imaginary sample size.
///
/// The root mass is split uniformly over its outgoing edges; each child
/// situation inherits its incoming edge's mass and splits it uniformly in
/// turn. All arithmetic is exact.
pub fn mass_conservation_prior(tree: &EventTree, alpha_bar_0: &Rat) -> Result<DirichletSpec> {
    ensure_positive(alpha_bar_0, "imaginary sample size")?;
    let mut priors = BTreeMap::new();
    let mut counts = BTreeMap::new();
    // incoming mass per node; root carries the full imaginary sample.
    let mut mass: Vec<Rat> = vec![Rat::zero(); tree.len()];
    mass[0] = alpha_bar_0.clone();
    for situation in tree.situations() {
        let k = tree.out_degree(situation);
        let share = &mass[situation.0] / rat(k as i64);
        for child in tree.children(situation) {
            mass[child.0] = share.clone();
        }
        priors.insert(situation.0, vec![share; k]);
        counts.insert(situation.0, tree.child_counts(situation));
    }
    Ok(DirichletSpec { priors, counts })
}

/// Check a user-specified prior against the tree: one vector per situation,
/// lengths matching out-degrees, all entries positive.
pub fn validate_user_prior(
    tree: &EventTree,
    prior: BTreeMap<usize, Vec<Rat>>,
) -> Result<DirichletSpec> {
    let situations: Vec<NodeId> = tree.situations().collect();
    for situation in &situations {
        let vector = prior.get(&situation.0).ok_or_else(|| {
            Error::validation(format!("prior missing for situation {situation}"))
        })?;
        if vector.len() != tree.out_degree(*situation) {
            return Err(Error::validation(format!(
                "prior for situation {situation} has {} entries, expected {}",
                vector.len(),
                tree.out_degree(*situation)
            )));
        }
        for entry in vector {
            if !num::Signed::is_positive(entry) {
                return Err(Error::validation(format!(
                    "prior for situation {situation} has non-positive entry {}",
                    format_rat(entry)
                )));
            }
        }
    }
    for id in prior.keys() {
        if !tree.is_situation(NodeId(*id)) {
            return Err(Error::validation(format!(
                "prior given for s{id}, which is not a situation"
            )));
        }
    }
    let counts = situations
        .iter()
        .map(|&s| (s.0, tree.child_counts(s)))
        .collect();
    Ok(DirichletSpec {
        priors: prior,
        counts,
    })
}

/// A collection of disjoint situation sets; AHC may merge two situations only
/// if they share a set. Situations not named by the user are implicitly
/// singleton sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hyperstage {
    /// Sets in ascending order of their smallest member; members sorted.
    sets: Vec<Vec<usize>>,
    /// situation id -> set index.
    set_of: BTreeMap<usize, usize>,
}

impl Hyperstage {
    /// Sets as sorted member lists, ordered by smallest member.
    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    /// Index of the set containing `situation`.
    pub fn set_index(&self, situation: NodeId) -> Option<usize> {
        self.set_of.get(&situation.0).copied()
    }

    pub fn same_set(&self, a: NodeId, b: NodeId) -> bool {
        match (self.set_index(a), self.set_index(b)) {
            (Some(x), Some(y)) => x == y,
            _ => false,
        }
    }

    /// Sets rendered with display names, e.g. `[["s0"], ["s1", "s2"]]`.
    pub fn display_sets(&self) -> Vec<Vec<String>> {
        self.sets
            .iter()
            .map(|set| set.iter().map(|&i| NodeId(i).to_string()).collect())
            .collect()
    }

    fn from_groups(mut groups: Vec<Vec<usize>>) -> Hyperstage {
        for set in &mut groups {
            set.sort_unstable();
        }
        groups.sort_by_key(|set| set[0]);
        let mut set_of = BTreeMap::new();
        for (idx, set) in groups.iter().enumerate() {
            for &member in set {
                set_of.insert(member, idx);
            }
        }
        Hyperstage {
            sets: groups,
            set_of,
        }
    }

    /// Group situations by (out-degree, outgoing label set).
    pub fn default_for(tree: &EventTree) -> Hyperstage {
        let mut groups: BTreeMap<Vec<String>, Vec<usize>> = BTreeMap::new();
        for situation in tree.situations() {
            let key: Vec<String> = tree
                .child_labels(situation)
                .into_iter()
                .map(str::to_string)
                .collect();
            groups.entry(key).or_default().push(situation.0);
        }
        Hyperstage::from_groups(groups.into_values().collect())
    }

    /// Validate user-specified sets: members must exist, be situations and be
    /// named at most once; within a set all situations must share out-degree
    /// and label set. Unnamed situations become singletons.
    pub fn from_user(tree: &EventTree, user_sets: Vec<Vec<usize>>) -> Result<Hyperstage> {
        let mut seen: BTreeMap<usize, ()> = BTreeMap::new();
        for set in &user_sets {
            if set.is_empty() {
                return Err(Error::validation("hyperstage set must be non-empty"));
            }
            let first = NodeId(set[0]);
            for &member in set {
                let id = NodeId(member);
                if member >= tree.len() || !tree.is_situation(id) {
                    return Err(Error::validation(format!(
                        "hyperstage names {id}, which is not a situation"
                    )));
                }
                if seen.insert(member, ()).is_some() {
                    return Err(Error::validation(format!(
                        "situation {id} appears in more than one hyperstage set"
                    )));
                }
                if tree.child_labels(id) != tree.child_labels(first) {
                    return Err(Error::validation(format!(
                        "hyperstage set mixes incompatible situations {first} and {id}"
                    )));
                }
            }
        }
        let mut groups = user_sets;
        for situation in tree.situations() {
            if !seen.contains_key(&situation.0) {
                groups.push(vec![situation.0]);
            }
        }
        Ok(Hyperstage::from_groups(groups))
    }
}

/// Group situations with the same out-degree and label set.
pub fn default_hyperstage(tree: &EventTree) -> Hyperstage {
    Hyperstage::default_for(tree)
}
