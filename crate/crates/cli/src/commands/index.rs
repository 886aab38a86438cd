//! Estimate the regional index panel: pair repeat sales, tune the
//! penalty weights by cross-validation when a grid is given, solve each
//! parent batch (in parallel, bounded by the jobs setting), and write
//! the panel plus region metadata, rejects, and solver diagnostics.

use std::collections::BTreeSet;

use hpindex_core::graph::{adjacency_laplacian, kronecker_penalty, path_laplacian};
use hpindex_core::ingest::{pair_repeat_sales, RegionIndex};
use hpindex_core::solver::{
    assemble_panel, batch_pairs, build_design, grid_search, solve_penalized, BatchFit,
    CvRecord, PenaltyConfig,
};
use hpindex_core::time::TimeGrid;
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::formats::{self, RegionMeta};

struct BatchReport {
    parent: String,
    regions: usize,
    pairs: usize,
    gamma_st: f64,
    gamma_t: f64,
    cv: Vec<CvRecord>,
    iterations: usize,
    residual_norm: f64,
    gradient_norm: f64,
    objective: f64,
}

pub fn run(config: &PipelineConfig) -> Result<(), CliError> {
    let sales_path = config.require_input(&config.inputs.sales, "sales")?;
    let adjacency_path = config.require_input(&config.inputs.adjacency, "adjacency")?;
    let bounds = config.window_bounds()?;

    let (records, rejects) = formats::read_sales(&sales_path, bounds)?;
    if records.is_empty() {
        return Err(CliError::input(format!(
            "no usable sales rows in {}",
            sales_path.display()
        )));
    }

    let months = records.iter().map(|r| r.sale_date.month_key());
    let start = bounds.0.unwrap_or_else(|| months.clone().min().unwrap());
    let end = bounds.1.unwrap_or_else(|| months.clone().max().unwrap());
    let span = end.months_since(start) + 1;
    if span < 2 {
        return Err(CliError::input(format!(
            "window {start}..{end} spans {span} month(s); need at least 2"
        )));
    }
    let grid = TimeGrid::new(start, span as usize)?;

    let regions = RegionIndex::from_records(&records)?;
    let outcome = pair_repeat_sales(&records, &regions, &grid)?;
    if outcome.pairs.is_empty() {
        return Err(CliError::input(
            "no repeat-sale pairs: every property sold at most once per month",
        ));
    }

    let raw_edges = formats::read_adjacency(&adjacency_path)?;
    let known: BTreeSet<&str> = regions.codes().iter().map(String::as_str).collect();
    let (edges, skipped): (Vec<_>, Vec<_>) = raw_edges
        .into_iter()
        .partition(|(a, b)| known.contains(a.as_str()) && known.contains(b.as_str()));
    let spatial = adjacency_laplacian(regions.codes(), &edges)?;
    let temporal = path_laplacian(grid.len())?;

    let batches = regions.batches();
    let by_batch = batch_pairs(&outcome.pairs, &batches);
    let base = PenaltyConfig::default();
    let penalty_cfg = &config.penalty;
    let single_cell =
        penalty_cfg.gamma_st_grid.len() == 1 && penalty_cfg.gamma_t_grid.len() == 1;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.run.jobs)
        .build()
        .map_err(|e| CliError::compute(format!("cannot build thread pool: {e}")))?;
    let results: Result<Vec<(BatchFit, BatchReport)>, CliError> = pool.install(|| {
        batches
            .par_iter()
            .zip(by_batch.par_iter())
            .map(|(batch, pairs)| {
                let fail =
                    |e: &dyn std::fmt::Display, what: &str| {
                        CliError::compute(format!("batch {}: {what}: {e}", batch.parent))
                    };
                let spatial_local = spatial
                    .induced(&batch.region_indices)
                    .map_err(|e| fail(&e, "induced graph"))?;
                let penalty = kronecker_penalty(spatial_local, temporal.clone());
                let design = build_design(pairs, batch.region_indices.len(), grid.len())
                    .map_err(|e| fail(&e, "design"))?;
                // CV needs at least one held-out and one held-in pair.
                let (selected, cv) = if single_cell || pairs.len() < 2 {
                    let mut selected = base.clone();
                    selected.gamma_st = penalty_cfg.gamma_st_grid[0];
                    selected.gamma_t = penalty_cfg.gamma_t_grid[0];
                    (selected, Vec::new())
                } else {
                    let search = grid_search(
                        pairs,
                        &penalty,
                        &temporal,
                        &penalty_cfg.gamma_st_grid,
                        &penalty_cfg.gamma_t_grid,
                        penalty_cfg.folds.min(pairs.len()),
                        &base,
                        penalty_cfg.cv_seed,
                    )
                    .map_err(|e| fail(&e, "grid search"))?;
                    (search.selected, search.records)
                };
                let fit = solve_penalized(&design, &penalty, &temporal, &selected)
                    .map_err(|e| fail(&e, "solve"))?;
                if !fit.converged {
                    return Err(CliError::compute(format!(
                        "batch {}: solver stopped after {} iterations at relative \
                         residual {:.3e} without converging",
                        batch.parent, fit.iterations, fit.residual_norm
                    )));
                }
                let report = BatchReport {
                    parent: batch.parent.clone(),
                    regions: batch.region_indices.len(),
                    pairs: pairs.len(),
                    gamma_st: selected.gamma_st,
                    gamma_t: selected.gamma_t,
                    cv,
                    iterations: fit.iterations,
                    residual_norm: fit.residual_norm,
                    gradient_norm: fit.gradient_norm,
                    objective: fit.objective_value,
                };
                let fit = BatchFit { region_indices: batch.region_indices.clone(), fit };
                Ok((fit, report))
            })
            .collect()
    });
    let (fits, reports): (Vec<BatchFit>, Vec<BatchReport>) = results?.into_iter().unzip();

    let panel = assemble_panel(&fits, &regions, &grid)?;

    let mut sales_count = vec![0u64; regions.len()];
    for record in &records {
        if let Some(i) = regions.index_of(&record.region_code) {
            sales_count[i] += 1;
        }
    }
    let mut pair_count = vec![0u64; regions.len()];
    for pair in &outcome.pairs {
        pair_count[pair.region_index] += 1;
    }
    let meta: Vec<RegionMeta> = (0..regions.len())
        .map(|i| RegionMeta {
            sa2_code: regions.code(i).to_string(),
            sa4_code: regions.parent(i).to_string(),
            sales: sales_count[i],
            pairs: pair_count[i],
        })
        .collect();

    let hash = config.hash_with(&serde_json::json!({ "cmd": "index" }));
    let out = &config.run.out;

    let panel_path = formats::out_path(out, "panel.csv");
    formats::write_panel(&panel_path, &panel)?;
    formats::write_sidecar(
        &panel_path,
        &hash,
        serde_json::json!({
            "window": { "start": start.to_string(), "end": end.to_string() },
            "months": grid.len(),
            "regions": regions.len(),
        }),
    )?;

    let regions_path = formats::out_path(out, "regions.csv");
    formats::write_region_meta(&regions_path, &meta)?;
    formats::write_sidecar(
        &regions_path,
        &hash,
        serde_json::json!({ "volume": "sales count inside the window" }),
    )?;

    let rejects_path = formats::out_path(out, "rejects.csv");
    formats::write_rejects(&rejects_path, &rejects)?;
    formats::write_sidecar(
        &rejects_path,
        &hash,
        serde_json::json!({ "rejected_rows": rejects.len() }),
    )?;

    let batch_reports: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| {
            serde_json::json!({
                "parent": r.parent,
                "regions": r.regions,
                "pairs": r.pairs,
                "gamma_st": r.gamma_st,
                "gamma_t": r.gamma_t,
                "cv": r.cv.iter().map(|c| serde_json::json!({
                    "gamma_st": c.gamma_st,
                    "gamma_t": c.gamma_t,
                    "mean_squared_error": c.mean_squared_error,
                })).collect::<Vec<_>>(),
                "iterations": r.iterations,
                "residual_norm": r.residual_norm,
                "gradient_norm": r.gradient_norm,
                "objective": r.objective,
            })
        })
        .collect();
    let diagnostics = serde_json::json!({
        "config_hash": hash,
        "window": { "start": start.to_string(), "end": end.to_string() },
        "months": grid.len(),
        "regions": regions.len(),
        "sales_used": records.len(),
        "rows_rejected": rejects.len(),
        "pairs": outcome.pairs.len(),
        "same_month_pairs_dropped": outcome.same_month_pairs_dropped,
        "cross_region_properties_dropped": outcome.cross_region_properties_dropped,
        "adjacency_edges_used": edges.len(),
        "adjacency_edges_skipped": skipped.len(),
        "batches": batch_reports,
    });
    formats::write_json(&formats::out_path(out, "diagnostics.json"), &diagnostics)?;

    Ok(())
}
