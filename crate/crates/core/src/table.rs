//! Ingestion of tabular categorical data into a path-count table.
//!
//! Each record is read left to right as a sequence of events. Cells marked as
//! structurally missing are elided, so records naturally produce root-to-leaf
//! paths of different lengths; this is how structural asymmetry enters the
//! model. Cells marked as sampling-missing stay in the path as an ordinary
//! edge label. Paths that are logically possible but unobserved can be added
//! afterwards as sampling zeros.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use crate::error::Error;
use crate::Result;

/// Default marker for structurally missing cells: the empty cell.
pub const DEFAULT_STRUCT_MISSING_LABEL: &str = "";
/// Default edge label for sampling-missing cells.
pub const DEFAULT_MISSING_LABEL: &str = "missing";

/// Raw tabular data: a header row and one row of trimmed cells per record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RecordTable {
    /// Build from in-memory data, trimming cells and checking row widths.
    pub fn new(columns: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        let table = RecordTable {
            columns,
            rows: rows
                .into_iter()
                .map(|row| row.into_iter().map(|c| c.trim().to_string()).collect())
                .collect(),
        };
        table.check_widths()?;
        Ok(table)
    }

    /// Read a delimited file with a header row. Files ending in `.tsv` or
    /// `.tab` are tab-separated; everything else is comma-separated.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let delimiter = match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("tab") => b'\t',
            _ => b',',
        };
        let file = std::fs::File::open(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_reader(file, delimiter)
    }

    /// Read delimited text with a header row.
    pub fn from_reader(reader: impl Read, delimiter: u8) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .flexible(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let columns: Vec<String> = reader
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            rows.push(record.iter().map(|c| c.to_string()).collect());
        }
        RecordTable::new(columns, rows)
    }

    fn check_widths(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(Error::Ingest {
                    row: i,
                    message: format!(
                        "expected {} cells, found {}",
                        self.columns.len(),
                        row.len()
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Ordered map from root paths (sequences of edge labels) to observation
/// counts. Prefix-closed: every non-empty prefix of a stored path is stored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PathCountTable {
    entries: BTreeMap<Vec<String>, u64>,
}

impl PathCountTable {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn count(&self, path: &[String]) -> Option<u64> {
        self.entries.get(path).copied()
    }

    /// Entries in lexicographic order of label sequences.
    pub fn iter(&self) -> impl Iterator<Item = (&Vec<String>, u64)> {
        self.entries.iter().map(|(k, &v)| (k, v))
    }

    /// Insert a complete root-to-leaf path, bumping every prefix count.
    fn add_path(&mut self, path: &[String], count: u64) {
        for k in 1..=path.len() {
            *self.entries.entry(path[..k].to_vec()).or_insert(0) += count;
        }
    }

    /// Check that every stored path's immediate prefix is stored too.
    pub fn validate_prefix_closed(&self) -> Result<()> {
        for path in self.entries.keys() {
            if path.len() > 1 && !self.entries.contains_key(&path[..path.len() - 1]) {
                return Err(Error::validation(format!(
                    "path {path:?} present without its prefix"
                )));
            }
        }
        Ok(())
    }

    /// Check count conservation: every non-maximal path's count equals the
    /// sum of its one-step extensions. Holds for ingested data, where each
    /// record contributes a complete root-to-leaf path; tables extended with
    /// sampling zeros below a previously maximal path need not satisfy it.
    pub fn validate_conservation(&self) -> Result<()> {
        let mut child_sums: BTreeMap<&[String], u64> = BTreeMap::new();
        for (path, &count) in &self.entries {
            if path.len() > 1 {
                *child_sums.entry(&path[..path.len() - 1]).or_insert(0) += count;
            }
        }
        for (path, &count) in &self.entries {
            if let Some(&sum) = child_sums.get(path.as_slice()) {
                if sum != count {
                    return Err(Error::validation(format!(
                        "count conservation violated at {path:?}: {count} != {sum}"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl FromIterator<(Vec<String>, u64)> for PathCountTable {
    fn from_iter<T: IntoIterator<Item = (Vec<String>, u64)>>(iter: T) -> Self {
        PathCountTable {
            entries: iter.into_iter().collect(),
        }
    }
}

/// Convert records to a path-count table.
///
/// Cells equal to `struct_missing_label` (and empty cells, which can never be
/// labels) are elided from the path; cells equal to `missing_label` stay as an
/// edge carrying that label; every other cell is an ordinary edge label.
/// Counts accumulate over identical paths and all prefixes are materialised.
pub fn ingest(
    records: &RecordTable,
    struct_missing_label: &str,
    missing_label: &str,
) -> Result<PathCountTable> {
    records.check_widths()?;
    if missing_label == struct_missing_label || missing_label.is_empty() {
        return Err(Error::validation(
            "missing_label must be non-empty and differ from struct_missing_label",
        ));
    }
    let mut table = PathCountTable::default();
    let mut complete: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    for (i, row) in records.rows.iter().enumerate() {
        let mut path: Vec<String> = Vec::with_capacity(row.len());
        for cell in row {
            let cell = cell.trim();
            // Empty cells can never be labels, so they are structurally
            // missing regardless of the configured marker. Sampling-missing
            // cells stay in the path carrying missing_label itself.
            if cell.is_empty() || cell == struct_missing_label {
                continue;
            }
            path.push(cell.to_string());
        }
        if path.is_empty() {
            return Err(Error::Ingest {
                row: i,
                message: "every cell is structurally missing".into(),
            });
        }
        table.add_path(&path, 1);
        complete.entry(path).or_insert(i);
    }
    // Every record must define a complete root-to-leaf path: a record whose
    // path continues in another record points at mislabelled missing cells.
    for key in table.entries.keys() {
        if key.len() < 2 {
            continue;
        }
        if let Some(&row) = complete.get(&key[..key.len() - 1]) {
            return Err(Error::Ingest {
                row,
                message: format!(
                    "record ends at an internal node: its path is extended by {key:?}"
                ),
            });
        }
    }
    Ok(table)
}

/// Insert unobserved-but-possible paths with count zero.
///
/// Every zero path must connect to the tree: its immediate prefix has to
/// exist in the table or be created by another zero path. Prefixes created
/// this way also carry count zero; existing counts are never modified.
pub fn add_sampling_zeros(
    table: &PathCountTable,
    zero_paths: &[Vec<String>],
) -> Result<PathCountTable> {
    let mut out = table.clone();
    // Sort by length so prefixes among the zero paths land first.
    let mut pending: Vec<&Vec<String>> = zero_paths.iter().collect();
    pending.sort_by_key(|p| p.len());
    for path in pending {
        if path.is_empty() {
            return Err(Error::validation("sampling-zero path must be non-empty"));
        }
        if path.len() > 1 && !out.entries.contains_key(&path[..path.len() - 1]) {
            return Err(Error::OrphanZeroPath { path: path.clone() });
        }
        out.entries.entry(path.clone()).or_insert(0);
    }
    Ok(out)
}
