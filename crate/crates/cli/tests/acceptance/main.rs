//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured runtime (visible under `--nocapture`). Tolerances are pinned
//! in the constants below.


use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use ceg_core::ceg::{find_positions, CegNodeId, ChainEventGraph};
use ceg_core::error::Error;
use ceg_core::evidence::{lambda_edges, reduce, reduce_exact, EvidenceSpec};
use ceg_core::prior::{default_alpha, default_hyperstage, mass_conservation_prior};
use ceg_core::rational::{rat, ratio, Rat};
use ceg_core::staging::{
    assign_colours, default_palette, log_marginal_score, one_nested_log_bf, run_ahc, Stage,
};
use ceg_core::table::{ingest, PathCountTable, RecordTable};
use ceg_core::tree::{EventTree, NodeId};

use support::*;

/// Relative tolerance for log marginal likelihood comparisons.
const SCORE_TOLERANCE: f64 = 1e-9;
/// Absolute tolerance for propagated probabilities.
const PROPAGATION_TOLERANCE: f64 = 1e-12;

fn close(a: f64, b: f64, relative: f64) -> bool {
    (a - b).abs() <= relative * a.abs().max(b.abs()).max(1.0)
}

fn finish(criterion: &str, start: Instant, budget: Duration, detail: &str) {
    let elapsed = start.elapsed();
    assert!(
        elapsed < budget,
        "criterion {criterion} exceeded its runtime budget: {elapsed:?} >= {budget:?}"
    );
    println!("PASS criterion {criterion} [{elapsed:?}] {detail}");
}

#[test]
fn criterion_1_falls_structural_reproduction() {
    let start = Instant::now();
    let tree = falls_tree();

    assert_eq!(tree.len(), 51, "falls event tree has 51 nodes");
    assert_eq!(tree.situations().count(), 23);
    assert_eq!(
        tree.child_labels(tree.root()),
        HOUSING.to_vec(),
        "root fans out over the four housing categories"
    );
    for mid in [1, 2, 3, 4] {
        assert_eq!(tree.child_labels(NodeId(mid)), RISK.to_vec());
    }
    // Asymmetry: not-assessed branches go straight to fall outcomes.
    for skipped in [7, 8, 11, 12] {
        assert_eq!(tree.child_labels(NodeId(skipped)), OUTCOME_SORTED.to_vec());
    }
    // Assessed branches see treatment options: three for high risk, two for low.
    assert_eq!(tree.child_labels(NodeId(5)), TREATMENT_HIGH.to_vec());
    assert_eq!(tree.child_labels(NodeId(6)), TREATMENT_LOW.to_vec());
    assert_eq!(tree.child_labels(NodeId(9)), TREATMENT_HIGH.to_vec());
    assert_eq!(tree.child_labels(NodeId(10)), TREATMENT_LOW.to_vec());

    assert_eq!(default_alpha(&tree), rat(4), "default alpha is 4 exactly");

    let expected_hyperstage: Vec<Vec<String>> = vec![
        vec!["s0".into()],
        vec!["s1".into(), "s2".into(), "s3".into(), "s4".into()],
        vec!["s5".into(), "s9".into()],
        vec!["s6".into(), "s10".into()],
        vec![
            "s7".into(),
            "s8".into(),
            "s11".into(),
            "s12".into(),
            "s13".into(),
            "s14".into(),
            "s15".into(),
            "s16".into(),
            "s17".into(),
            "s22".into(),
            "s23".into(),
            "s24".into(),
            "s25".into(),
            "s26".into(),
        ],
    ];
    assert_eq!(
        default_hyperstage(&tree).display_sets(),
        expected_hyperstage,
        "default hyperstage groups situations exactly as expected for this support"
    );

    let spec = mass_conservation_prior(&tree, &rat(4)).unwrap();
    let situations: Vec<usize> = tree.situations().map(|s| s.0).collect();
    let expected_ids: Vec<usize> = (0..=17).chain(22..=26).collect();
    assert_eq!(situations, expected_ids);

    let mut expected_prior: BTreeMap<usize, Vec<Rat>> = BTreeMap::new();
    expected_prior.insert(0, vec![rat(1); 4]);
    for s in 1..=4 {
        expected_prior.insert(s, vec![ratio(1, 2); 2]);
    }
    for s in [5, 9] {
        expected_prior.insert(s, vec![ratio(1, 6); 3]);
    }
    for s in [6, 7, 8, 10, 11, 12] {
        expected_prior.insert(s, vec![ratio(1, 4); 2]);
    }
    for s in [13, 14, 15, 22, 23, 24] {
        expected_prior.insert(s, vec![ratio(1, 12); 2]);
    }
    for s in [16, 17, 25, 26] {
        expected_prior.insert(s, vec![ratio(1, 8); 2]);
    }
    for (&sid, vector) in &expected_prior {
        assert_eq!(
            spec.prior(NodeId(sid)),
            vector.as_slice(),
            "prior vector of s{sid} (exact rational equality)"
        );
    }
    // The expected default prior round-trips through user-prior validation.
    ceg_core::prior::validate_user_prior(&tree, expected_prior).unwrap();

    finish(
        "1",
        start,
        Duration::from_secs(1),
        "falls tree, default alpha 4, expected hyperstage and exact fraction prior",
    );
}

#[test]
fn criterion_2_path_dictionary_reproduction() {
    let start = Instant::now();
    let records = RecordTable::new(
        vec![
            "Housing Assessment".into(),
            "Risk".into(),
            "Treatment".into(),
            "Fall".into(),
        ],
        vec![
            vec![
                "Community Not Assessed".into(),
                "Low Risk".into(),
                "Not Referred and Not Treated".into(),
                "Fall".into(),
            ],
            vec![
                "Community Not Assessed".into(),
                "High Risk".into(),
                "Not Referred and Not Treated".into(),
                "Fall".into(),
            ],
            vec![
                "Community Assessed".into(),
                "Low Risk".into(),
                "".into(),
                "Don't Fall".into(),
            ],
            vec![
                "Community Assessed".into(),
                "High Risk".into(),
                "Referred and Treated".into(),
                "Fall".into(),
            ],
        ],
    )
    .unwrap();
    let table = ingest(&records, "", "missing").unwrap();

    let expected: Vec<(Vec<&str>, u64)> = vec![
        (vec!["Community Assessed"], 2),
        (vec!["Community Not Assessed"], 2),
        (vec!["Community Assessed", "High Risk"], 1),
        (vec!["Community Assessed", "Low Risk"], 1),
        (vec!["Community Not Assessed", "High Risk"], 1),
        (vec!["Community Not Assessed", "Low Risk"], 1),
        (
            vec!["Community Assessed", "High Risk", "Referred and Treated"],
            1,
        ),
        (vec!["Community Assessed", "Low Risk", "Don't Fall"], 1),
        (
            vec![
                "Community Not Assessed",
                "High Risk",
                "Not Referred and Not Treated",
            ],
            1,
        ),
        (
            vec![
                "Community Not Assessed",
                "Low Risk",
                "Not Referred and Not Treated",
            ],
            1,
        ),
        (
            vec![
                "Community Assessed",
                "High Risk",
                "Referred and Treated",
                "Fall",
            ],
            1,
        ),
        (
            vec![
                "Community Not Assessed",
                "High Risk",
                "Not Referred and Not Treated",
                "Fall",
            ],
            1,
        ),
        (
            vec![
                "Community Not Assessed",
                "Low Risk",
                "Not Referred and Not Treated",
                "Fall",
            ],
            1,
        ),
    ];
    assert_eq!(table.len(), 13, "exactly the 13 expected entries");
    for (path, count) in &expected {
        let key: Vec<String> = path.iter().map(|s| s.to_string()).collect();
        assert_eq!(
            table.count(&key),
            Some(*count),
            "count of path {path:?} (zero tolerance)"
        );
    }

    finish(
        "2",
        start,
        Duration::from_secs(1),
        "13-entry path dictionary reproduced with exact keys and counts",
    );
}

fn random_single_stage(rng: &mut impl Rng) -> Stage {
    let k = rng.gen_range(2..=5);
    Stage {
        members: vec![0],
        labels: (0..k).map(|i| format!("l{i}")).collect(),
        alpha: (0..k)
            .map(|_| ratio(rng.gen_range(1..=9), rng.gen_range(1..=6)))
            .collect(),
        counts: (0..k).map(|_| rng.gen_range(0..=50)).collect(),
        colour: None,
        first_merge_iter: None,
    }
}

#[test]
fn criterion_3_score_oracle_suite() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    for instance in 0..200 {
        let stage = random_single_stage(&mut rng);
        let implementation = log_marginal_score(std::slice::from_ref(&stage));
        let oracle = urn_log_predictive(&stage.alpha, &stage.counts);
        assert!(
            close(implementation, oracle, SCORE_TOLERANCE),
            "instance {instance}: score {implementation} vs oracle {oracle}"
        );

        // A second stage over the same label set for the log Bayes factor.
        let mut partner = random_single_stage(&mut rng);
        partner.labels = stage.labels.clone();
        while partner.alpha.len() != stage.alpha.len() {
            partner = random_single_stage(&mut rng);
            partner.labels = stage.labels.clone();
        }
        let log_bf = one_nested_log_bf(&stage, &partner).unwrap();

        let merged = Stage {
            members: vec![0],
            labels: stage.labels.clone(),
            alpha: stage
                .alpha
                .iter()
                .zip(&partner.alpha)
                .map(|(a, b)| a + b)
                .collect(),
            counts: stage
                .counts
                .iter()
                .zip(&partner.counts)
                .map(|(a, b)| a + b)
                .collect(),
            colour: None,
            first_merge_iter: None,
        };
        // Q-difference route through the score function.
        let q_difference = log_marginal_score(std::slice::from_ref(&merged))
            - log_marginal_score(&[stage.clone(), partner.clone()]);
        assert!(
            close(log_bf, q_difference, SCORE_TOLERANCE),
            "instance {instance}: log BF {log_bf} vs Q-difference {q_difference}"
        );
        // Fully independent route through the urn oracle.
        let oracle_bf = urn_log_predictive(&merged.alpha, &merged.counts)
            - urn_log_predictive(&stage.alpha, &stage.counts)
            - urn_log_predictive(&partner.alpha, &partner.counts);
        assert!(
            close(log_bf, oracle_bf, SCORE_TOLERANCE),
            "instance {instance}: log BF {log_bf} vs urn oracle {oracle_bf}"
        );
    }

    finish(
        "3",
        start,
        Duration::from_secs(10),
        "200 instances: score and log BF match the sequential predictive oracle within 1e-9",
    );
}

/// Star tree: root over `k` situations sharing one hyperstage set.
fn star_tree(rng: &mut impl Rng, k: usize) -> EventTree {
    let entries: Vec<(Vec<String>, u64)> = (1..=k)
        .flat_map(|i| {
            let x = rng.gen_range(0..=30);
            let y = rng.gen_range(0..=30);
            vec![
                (vec![format!("m{i}")], x + y),
                (vec![format!("m{i}"), "x".into()], x),
                (vec![format!("m{i}"), "y".into()], y),
            ]
        })
        .collect();
    let table: PathCountTable = entries.into_iter().collect();
    EventTree::from_path_table(&table).unwrap()
}

#[test]
fn criterion_4_ahc_properties() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut optimal = 0usize;
    let total = 100usize;

    for instance in 0..total {
        let k = rng.gen_range(2..=5);
        let tree = star_tree(&mut rng, k);
        let alpha0 = ratio(rng.gen_range(1..=8), rng.gen_range(1..=3));
        let spec = mass_conservation_prior(&tree, &alpha0).unwrap();
        let hyperstage = default_hyperstage(&tree);
        let staged = run_ahc(&tree, &spec, &hyperstage).unwrap();

        // (a) strictly increasing running score, increment = accepted log BF.
        let singletons: Vec<Vec<usize>> = tree.situations().map(|s| vec![s.0]).collect();
        let mut running = urn_partition_score(&spec, &singletons, &tree);
        for merge in staged.merges() {
            assert!(merge.log_bf > 0.0, "instance {instance}: non-positive merge");
            assert!(
                merge.score_after > running,
                "instance {instance}: score did not increase"
            );
            running = merge.score_after;
        }

        // (b) never beats the exhaustive best over admissible partitions.
        let best = admissible_partitions(&hyperstage)
            .iter()
            .map(|blocks| urn_partition_score(&spec, blocks, &tree))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(
            staged.score() <= best + SCORE_TOLERANCE * best.abs().max(1.0),
            "instance {instance}: AHC score {} above exhaustive best {best}",
            staged.score()
        );
        if close(staged.score(), best, SCORE_TOLERANCE) {
            optimal += 1;
        }

        // Hyperstage safety: every final stage stays inside one set.
        for stage in staged.stages() {
            let set = hyperstage.set_index(NodeId(stage.members[0]));
            assert!(stage
                .members
                .iter()
                .all(|&m| hyperstage.set_index(NodeId(m)) == set));
        }

        // (c) thread count does not change the result.
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_ahc(&tree, &spec, &hyperstage))
            .unwrap();
        let parallel = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| run_ahc(&tree, &spec, &hyperstage))
            .unwrap();
        assert_eq!(single, parallel, "instance {instance}: thread-dependent result");
        assert_eq!(single, staged, "instance {instance}: pool-dependent result");
        let mut coloured_single = single;
        let mut coloured_parallel = parallel;
        assign_colours(&mut coloured_single, &default_palette()).unwrap();
        assign_colours(&mut coloured_parallel, &default_palette()).unwrap();
        assert_eq!(coloured_single, coloured_parallel);
    }

    finish(
        "4",
        start,
        Duration::from_secs(60),
        &format!(
            "100 instances: monotone merges, never above exhaustive best, \
             greedy matched the optimum on {optimal}/{total}, thread-invariant"
        ),
    );
}

#[test]
fn criterion_5_position_contraction_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    for instance in 0..100 {
        let staged = random_staged(&mut rng, 12);
        let tree = staged.tree();
        let positions = find_positions(&staged);

        // Leaves share the sink; situations match the pairwise oracle.
        for leaf in tree.leaves() {
            assert_eq!(positions[&leaf.0], CegNodeId::Sink);
        }
        let situations: Vec<NodeId> = tree.situations().collect();
        for &a in &situations {
            for &b in &situations {
                let same_position = positions[&a.0] == positions[&b.0];
                let oracle = subtrees_isomorphic(&staged, a, b);
                assert_eq!(
                    same_position, oracle,
                    "instance {instance}: positions disagree with isomorphism oracle on {a}, {b}"
                );
                if same_position {
                    assert_eq!(
                        staged.stage_index_of(a),
                        staged.stage_index_of(b),
                        "positions must refine stages"
                    );
                }
            }
        }

        let ceg = ChainEventGraph::from_staged(&staged).unwrap();
        assert_eq!(
            ceg.count_paths(),
            tree.leaves().count() as u64,
            "instance {instance}: path count not preserved"
        );

        // Exact path-probability preservation, leaf by leaf.
        for leaf in tree.leaves() {
            let mut steps = Vec::new();
            let mut cursor = leaf;
            while let Some(parent) = tree.parent(cursor) {
                steps.push(cursor);
                cursor = parent;
            }
            steps.reverse();
            let mut tree_product = rat(1);
            let mut source = tree.root();
            for step in &steps {
                let means = staged.stage_means(source).unwrap();
                let slot = tree.children(source).position(|c| c == *step).unwrap();
                tree_product *= means[slot].clone();
                source = *step;
            }
            let mut graph_product = rat(1);
            let mut node = ceg.root();
            for step in &steps {
                let label = tree.incoming_label(*step).unwrap();
                let target = positions[&step.0];
                let edge = ceg
                    .out_edges(node)
                    .iter()
                    .copied()
                    .find(|&e| {
                        ceg.edges()[e].label == label
                            && ceg.nodes()[ceg.edges()[e].dst].id == target
                    })
                    .expect("image edge exists");
                graph_product *= ceg.edges()[edge].probability.clone();
                node = ceg.edges()[edge].dst;
            }
            assert_eq!(
                tree_product, graph_product,
                "instance {instance}: path product changed for leaf {leaf}"
            );
        }

        // Contracting the contraction changes nothing.
        assert!(
            ceg_is_fully_contracted(&ceg, &staged),
            "instance {instance}: CEG still contains mergeable nodes"
        );
    }

    finish(
        "5",
        start,
        Duration::from_secs(30),
        "100 staged trees: positions match the brute-force oracle, \
         path counts and exact path products preserved, contraction idempotent",
    );
}

#[test]
fn criterion_6_propagation_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut conditioned = 0usize;
    let mut contradictory = 0usize;
    let mut skipped_non_intrinsic = 0usize;

    while conditioned + contradictory < 200 {
        let ceg = random_ceg(&mut rng, 10);
        let spec = random_evidence(&mut rng, &ceg);
        let oracle = enumeration_oracle(&ceg, &spec);

        if !oracle.consistent {
            match reduce(&ceg, &spec) {
                Err(Error::ContradictoryEvidence(_)) => contradictory += 1,
                other => panic!("expected contradictory-evidence error, got {other:?}"),
            }
            continue;
        }
        if !oracle.intrinsic {
            // The propagation algorithm requires intrinsic evidence; these
            // draws are outside its contract and are regenerated.
            skipped_non_intrinsic += 1;
            continue;
        }

        let lambda = lambda_edges(&ceg, &spec).unwrap();
        assert_eq!(
            lambda, oracle.lambda,
            "edge set differs from the union of consistent paths"
        );

        let reduced = reduce(&ceg, &spec).unwrap();
        let exact = reduce_exact(&ceg, &spec).unwrap();
        for ((&original_edge, edge), exact_edge) in
            lambda.iter().zip(reduced.edges()).zip(exact.edges())
        {
            let expected = &oracle.transition[&original_edge];
            assert!(
                (edge.p_hat - ceg_core::rational::rat_to_f64(expected)).abs()
                    <= PROPAGATION_TOLERANCE,
                "transition probability differs from enumeration: {} vs {}",
                edge.p_hat,
                ceg_core::rational::rat_to_f64(expected)
            );
            assert_eq!(
                exact_edge.p_hat_exact.as_ref().unwrap(),
                expected,
                "exact transition probability differs from enumeration"
            );
        }
        for (node, exact_node) in reduced.nodes().iter().zip(exact.nodes()) {
            let index = ceg.node_index(&node.id.to_string()).unwrap();
            let expected = &oracle.occupancy[&index];
            assert!(
                (node.occupancy - ceg_core::rational::rat_to_f64(expected)).abs()
                    <= PROPAGATION_TOLERANCE,
                "occupancy differs from enumeration at {}",
                node.id
            );
            assert_eq!(exact_node.occupancy_exact.as_ref().unwrap(), expected);
        }
        conditioned += 1;
    }

    finish(
        "6",
        start,
        Duration::from_secs(30),
        &format!(
            "200 instances ({conditioned} conditioned within 1e-12, {contradictory} \
             correctly rejected as contradictory; {skipped_non_intrinsic} non-intrinsic \
             draws regenerated, outside the propagation contract)"
        ),
    );
}

/// Companion check for criterion 6: evidence whose consistent paths do not
/// form a full subgraph (non-intrinsic) is flagged by the oracle, and the
/// two-pass update genuinely diverges from enumeration there, which is why
/// such draws sit outside the algorithm's contract.
#[test]
fn non_intrinsic_evidence_is_detected_and_diverges() {
    let edge = |src: &str, dst: &str, label: &str, prob: &str, dec: f64| {
        format!(
            "{{\"src\": \"{src}\", \"dst\": \"{dst}\", \"label\": \"{label}\", \
             \"count\": 1, \"prior\": \"1/2\", \"posterior\": \"{prob}\", \
             \"probability\": \"{prob}\", \"probability_decimal\": {dec}}}"
        )
    };
    // w0 -> w1 and w0 -> w2 -> w1; w1 -> w3 -> sink and w1 -> sink.
    // Paths through w3 or w2 are consistent; their edges cover the whole
    // graph, yet the direct path w0 -> w1 -> sink avoids both.
    let json = format!(
        "{{\"kind\": \"ceg\", \"nodes\": [\
         {{\"id\": \"w0\", \"colour\": \"white\", \"members\": []}},\
         {{\"id\": \"w1\", \"colour\": \"white\", \"members\": []}},\
         {{\"id\": \"w2\", \"colour\": \"white\", \"members\": []}},\
         {{\"id\": \"w3\", \"colour\": \"white\", \"members\": []}},\
         {{\"id\": \"w_inf\", \"colour\": \"lightgrey\", \"members\": []}}],\
         \"edges\": [{},{},{},{},{},{}]}}",
        edge("w0", "w1", "a", "1/2", 0.5),
        edge("w0", "w2", "b", "1/2", 0.5),
        edge("w1", "w3", "c", "1/2", 0.5),
        edge("w1", "w_inf", "d", "1/2", 0.5),
        edge("w2", "w1", "e", "1", 1.0),
        edge("w3", "w_inf", "f", "1", 1.0),
    );
    let ceg = ceg_core::io::from_json(&json).unwrap().into_ceg().unwrap();
    let spec = EvidenceSpec {
        uncertain_node_sets: vec![vec!["w2".into(), "w3".into()]],
        ..Default::default()
    };
    let oracle = enumeration_oracle(&ceg, &spec);
    assert!(oracle.consistent);
    assert!(!oracle.intrinsic, "crossover construction must be non-intrinsic");

    // The edge set still matches enumeration exactly (it covers everything).
    let lambda = lambda_edges(&ceg, &spec).unwrap();
    assert_eq!(lambda, oracle.lambda);
    assert_eq!(lambda.len(), ceg.edges().len());

    // But the local two-pass update cannot condition on a non-intrinsic
    // disjunction: it keeps p(d) = 1/2 where enumeration gives 1/3.
    let reduced = reduce(&ceg, &spec).unwrap();
    let d_index = ceg.edge_index("w1", "w_inf", "d").unwrap();
    let d_reduced = reduced
        .edges()
        .iter()
        .find(|e| e.label == "d")
        .expect("edge d retained");
    assert!((d_reduced.p_hat - 0.5).abs() < 1e-12);
    let enumerated = ceg_core::rational::rat_to_f64(&oracle.transition[&d_index]);
    assert!(
        (d_reduced.p_hat - enumerated).abs() > 0.1,
        "non-intrinsic evidence must actually separate the two semantics"
    );
}

#[test]
fn criterion_7_falls_propagation_fallback() {
    let start = Instant::now();
    // Reference occupancy updates for the falls intervention depend on the
    // original survey counts, which are not distributed here, so they cannot
    // be reproduced from structure alone; criterion 6 covers propagation
    // correctness exhaustively instead. A structural stand-in runs on the
    // synthetic falls data: conditioning on the assessed-high-risk position
    // must keep the reduced graph normalised.
    let tree = falls_tree();
    let spec = mass_conservation_prior(&tree, &rat(4)).unwrap();
    let staged = run_ahc(&tree, &spec, &default_hyperstage(&tree)).unwrap();
    let ceg = ChainEventGraph::from_staged(&staged).unwrap();
    let positions = find_positions(&staged);
    // s5: the Communal Assessed + High Risk situation.
    let target = positions[&5].to_string();
    let reduced = reduce_exact(&ceg, &EvidenceSpec::certain_node(&target)).unwrap();
    ceg_core::evidence::validate_reduced(&reduced, PROPAGATION_TOLERANCE).unwrap();
    let conditioned = reduced.node_by_id(&target).unwrap();
    assert!(conditioned.occupancy_exact.as_ref().unwrap() == &rat(1));

    finish(
        "7",
        start,
        Duration::from_secs(10),
        "replaced by criterion 6: reference occupancy updates need the original \
         survey counts (edge probabilities are data-dependent); structural \
         stand-in on synthetic falls data passed",
    );
}

#[test]
fn criterion_8_pipeline_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let records = falls_records();

    let mut shuffled_rows = records.rows.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    shuffled_rows.shuffle(&mut rng);
    assert_ne!(records.rows, shuffled_rows, "shuffle must change row order");

    let csv_a = dir.path().join("falls_a.csv");
    let csv_b = dir.path().join("falls_b.csv");
    write_csv(&csv_a, &records.columns, &records.rows);
    write_csv(&csv_b, &records.columns, &shuffled_rows);

    let evidence = dir.path().join("ev.json");
    std::fs::write(&evidence, "{\"certain_nodes\": [\"w1\"]}\n").unwrap();

    let out_a = dir.path().join("run_a");
    let out_b = dir.path().join("run_b");
    for (csv, out) in [(&csv_a, &out_a), (&csv_b, &out_b)] {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_ceg"))
            .args([
                "pipeline",
                "--data",
                csv.to_str().unwrap(),
                "--evidence",
                evidence.to_str().unwrap(),
                "--exact",
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
    }

    for name in [
        "tree.json",
        "staged.json",
        "ceg.json",
        "reduced.json",
        "tree.dot",
        "staged.dot",
        "ceg.dot",
        "reduced.dot",
    ] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between shuffled runs");
    }

    finish(
        "8",
        start,
        Duration::from_secs(60),
        "full pipeline over shuffled data produced byte-identical JSON and DOT artifacts",
    );
}
