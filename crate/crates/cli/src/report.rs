//! Merging run reports into one comparison table.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;

use crate::config::invalid;
use crate::pipeline::RunReport;

const FIXED_COLUMNS: [&str; 7] = ["name", "stage", "model", "setting", "seeds", "config_hash", "dataset_hash"];

pub fn load_reports(paths: &[PathBuf]) -> Result<Vec<RunReport>> {
    paths
        .iter()
        .map(|p| {
            let p = if p.is_dir() { p.join("report.json") } else { p.clone() };
            let bytes = fs::read(&p).map_err(|e| invalid!("cannot read {}: {e}", p.display()))?;
            serde_json::from_slice(&bytes).map_err(|e| invalid!("{} is not a run report: {e}", p.display()))
        })
        .collect()
}

/// One CSV row per report: the identifying columns followed by the union
/// of metric names. Reports computed on different datasets are refused.
pub fn merge(reports: &[RunReport], out: impl Write) -> Result<()> {
    let Some(first) = reports.first() else {
        return Err(invalid!("no reports to merge"));
    };
    if let Some(other) = reports.iter().find(|r| r.dataset_hash != first.dataset_hash) {
        return Err(invalid!(
            "dataset hash of `{}` ({}) differs from `{}` ({})",
            other.name,
            &other.dataset_hash[..12.min(other.dataset_hash.len())],
            first.name,
            &first.dataset_hash[..12.min(first.dataset_hash.len())]
        ));
    }
    let names: BTreeSet<&str> = reports.iter().flat_map(|r| r.metrics.keys().map(String::as_str)).collect();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FIXED_COLUMNS.iter().copied().chain(names.iter().copied()))?;
    for r in reports {
        let seeds = r.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" ");
        let mut row = vec![
            r.name.clone(),
            r.stage.clone(),
            r.model.clone().unwrap_or_default(),
            r.setting.clone(),
            seeds,
            r.config_hash.clone(),
            r.dataset_hash.clone(),
        ];
        row.extend(names.iter().map(|n| r.metrics.get(*n).map_or(String::new(), |v| format!("{v:.6}"))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
