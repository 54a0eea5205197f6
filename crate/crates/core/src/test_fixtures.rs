//! Shared fixtures for in-crate tests.

use std::collections::BTreeMap;

use crate::table::RecordTable;

/// Expand a leaf-path -> count map into fixed-width records, padding short
/// paths with structurally missing cells. Paths that are strict prefixes of
/// other paths are dropped, since ingestion rejects records ending at an
/// internal node. Returns `None` when nothing survives.
pub(crate) fn records_from_leaf_paths(
    paths: &BTreeMap<Vec<String>, u64>,
) -> Option<RecordTable> {
    let keys: Vec<&Vec<String>> = paths.keys().collect();
    let kept: Vec<(&Vec<String>, u64)> = paths
        .iter()
        .filter(|(path, _)| {
            !keys
                .iter()
                .any(|other| other.len() > path.len() && other[..path.len()] == path[..])
        })
        .map(|(path, &count)| (path, count))
        .collect();
    if kept.is_empty() {
        return None;
    }
    let width = kept.iter().map(|(path, _)| path.len()).max().unwrap();
    let mut rows = Vec::new();
    for (path, count) in kept {
        let mut row = path.clone();
        row.resize(width, String::new());
        for _ in 0..count.max(1) {
            rows.push(row.clone());
        }
    }
    let columns = (0..width).map(|i| format!("v{i}")).collect();
    Some(RecordTable::new(columns, rows).unwrap())
}
