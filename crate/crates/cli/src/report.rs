//! Read-only aggregation of run directories into one comparison CSV.

use std::path::Path;

use serde_json::Value;

use crate::{CliError, ReportArgs};

#[derive(Debug, Default)]
struct Row {
    run: String,
    engine: String,
    mode: String,
    comm_cost: Option<u64>,
    reduction_pct: Option<f64>,
    mean_hops_edge: Option<f64>,
    mean_hops_bytes: Option<f64>,
    max_core_bytes: Option<u64>,
    makespan: Option<u64>,
    throughput_kcycles: Option<f64>,
    mean_utilization: Option<f64>,
}

fn read_json(path: &Path) -> Option<Value> {
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

fn fmt_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

pub fn report(args: ReportArgs) -> Result<(), CliError> {
    let entries = std::fs::read_dir(&args.runs)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", args.runs.display())))?;
    let mut dirs: Vec<_> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.join("manifest.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::validation(format!(
            "no run directories (with manifest.json) under {}",
            args.runs.display()
        )));
    }

    let mut rows = Vec::new();
    for dir in dirs {
        let mut row = Row {
            run: dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            ..Row::default()
        };
        if let Some(metrics) = read_json(&dir.join("metrics.json")) {
            row.engine = metrics["engine"].as_str().unwrap_or("").to_string();
            row.mode = metrics["mode"].as_str().unwrap_or("").to_string();
            row.comm_cost = metrics["communication_cost"].as_u64();
            row.reduction_pct = metrics["reduction_vs_zigzag_pct"].as_f64();
            row.mean_hops_edge = metrics["mean_hops_per_edge"].as_f64();
            row.mean_hops_bytes = metrics["mean_hops_per_byte"].as_f64();
            row.max_core_bytes = metrics["max_core_forwarded_bytes"].as_u64();
        }
        if let Some(sim) = read_json(&dir.join("sim_result.json")) {
            if row.mode.is_empty() {
                row.mode = sim["mode"].as_str().unwrap_or("").to_string();
            }
            row.makespan = sim["makespan"].as_u64();
            row.throughput_kcycles = sim["throughput_kcycles"].as_f64();
            row.mean_utilization = sim["mean_utilization"].as_f64();
            if row.max_core_bytes.is_none() {
                row.max_core_bytes = sim["max_core_forwarded_bytes"].as_u64();
            }
        }
        rows.push(row);
    }

    let mut csv = String::from(
        "run,engine,mode,comm_cost,reduction_vs_zigzag_pct,mean_hops_edge,mean_hops_bytes,max_core_bytes,makespan,throughput_kcycles,mean_utilization\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.run,
            r.engine,
            r.mode,
            fmt_opt(&r.comm_cost),
            fmt_opt(&r.reduction_pct),
            fmt_opt(&r.mean_hops_edge),
            fmt_opt(&r.mean_hops_bytes),
            fmt_opt(&r.max_core_bytes),
            fmt_opt(&r.makespan),
            fmt_opt(&r.throughput_kcycles),
            fmt_opt(&r.mean_utilization),
        ));
    }
    match &args.out {
        Some(path) => std::fs::write(path, csv)
            .map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{csv}"),
    }
    Ok(())
}
