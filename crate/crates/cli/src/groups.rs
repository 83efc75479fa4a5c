//! Grouped CSV input for the hierarchical commands.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use pb_core::hierarchical::{AllocationData, Group};
use pb_core::Dataset;

use crate::exit::usage;

fn records(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    if !path.is_file() {
        return Err(usage(format!("data file {} not found", path.display())));
    }
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.first().map(String::as_str) != Some("group") {
        return Err(usage(format!(
            "{}: first column must be `group`",
            path.display()
        )));
    }
    let rows = r
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(usage(format!("{} has no rows", path.display())));
    }
    Ok((headers, rows))
}

fn group_id(field: &str, line: usize) -> Result<u64> {
    field.trim().parse().map_err(|_| {
        usage(format!(
            "row {line}: group `{field}` is not a non-negative integer"
        ))
    })
}

/// Long format `group,value`: one observation per row.
pub fn read_long_groups(path: &Path) -> Result<Vec<Group>> {
    let (headers, rows) = records(path)?;
    if headers.len() != 2 {
        return Err(usage(format!(
            "{}: expected columns `group,value`",
            path.display()
        )));
    }
    let mut by_id: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for (k, rec) in rows.iter().enumerate() {
        let id = group_id(&rec[0], k + 1)?;
        let v: f64 = rec[1]
            .trim()
            .parse()
            .map_err(|_| usage(format!("row {}: `{}` is not numeric", k + 1, &rec[1])))?;
        by_id.entry(id).or_default().push(v);
    }
    Ok(by_id
        .into_iter()
        .map(|(id, xs)| Group {
            id,
            data: Dataset::from_column(&xs),
        })
        .collect())
}

/// Wide format `group,count_1,…,count_L`: one row per group.
pub fn read_count_groups(path: &Path) -> Result<AllocationData> {
    let (headers, rows) = records(path)?;
    if headers.len() < 3 {
        return Err(usage(format!(
            "{}: expected `group,count_1,…` with at least two categories",
            path.display()
        )));
    }
    let mut ids = Vec::with_capacity(rows.len());
    let mut counts = Vec::with_capacity(rows.len());
    for (k, rec) in rows.iter().enumerate() {
        ids.push(group_id(&rec[0], k + 1)?);
        let row = rec
            .iter()
            .skip(1)
            .map(|f| {
                f.trim()
                    .parse::<u64>()
                    .map_err(|_| usage(format!("row {}: `{f}` is not a count", k + 1)))
            })
            .collect::<Result<Vec<u64>>>()?;
        counts.push(row);
    }
    Ok(AllocationData::with_ids(ids, counts, None)?)
}
