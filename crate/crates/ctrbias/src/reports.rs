//! CSV tables that accompany the JSON reports. Undefined values are empty
//! cells.

use std::path::Path;

use ctrbias_core::analysis::ScatterRow;
use ctrbias_core::debias::GridCell;
use ctrbias_core::metrics::EvalReport;

use crate::error::{CliError, CliResult};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> CliResult<()> {
    let wrap = |e: csv::Error| CliError::output(path, e.into());
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(wrap)?;
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

pub fn write_group_table(path: &Path, report: &EvalReport) -> CliResult<()> {
    let p_col = format!("p_at_{}", report.k);
    write_rows(
        path,
        &["group", "label", "positives", "negatives", "ratio", "ehr", &p_col],
        report.groups.iter().map(|g| {
            vec![
                g.group.to_string(),
                g.label.clone(),
                g.positives.to_string(),
                g.negatives.to_string(),
                opt(g.ratio),
                opt(g.ehr),
                opt(g.p_at_k),
            ]
        }),
    )
}

pub fn write_scatter(path: &Path, rows: &[ScatterRow]) -> CliResult<()> {
    write_rows(
        path,
        &["group", "label", "positives", "negatives", "ratio", "weight", "fitted"],
        rows.iter().map(|r| {
            vec![
                r.group.to_string(),
                r.label.clone(),
                r.positives.to_string(),
                r.negatives.to_string(),
                opt(r.ratio),
                r.weight.to_string(),
                opt(r.fitted),
            ]
        }),
    )
}

pub fn write_search_table(path: &Path, table: &[GridCell]) -> CliResult<()> {
    write_rows(
        path,
        &["beta", "gamma", "uauc", "ndcg_at_5"],
        table
            .iter()
            .map(|c| vec![c.beta.to_string(), c.gamma.to_string(), opt(c.uauc), opt(c.ndcg_at_5)]),
    )
}
