//! Decompose the estimated panel: principal-component trends, per-region
//! correlation scores and weights, explained variance, and the smoothed
//! panel truncated to the retained components.

use std::path::PathBuf;

use hpindex_core::pca::{fit_pca, region_scores, truncate_smooth};

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::formats;

pub fn run(config: &PipelineConfig, panel_path: Option<PathBuf>) -> Result<(), CliError> {
    let out = &config.run.out;
    let panel_path = panel_path.unwrap_or_else(|| formats::out_path(out, "panel.csv"));
    if !panel_path.exists() {
        return Err(CliError::input(format!(
            "panel file not found: {}",
            panel_path.display()
        )));
    }
    let panel = formats::read_panel(&panel_path)?;

    if config.pca.components == 0 {
        return Err(CliError::input("components must be at least 1"));
    }
    // A request beyond the region count keeps every component.
    let k = config.pca.components.min(panel.region_count());

    let decomposition = fit_pca(&panel);
    let scores = region_scores(&panel, &decomposition, k)?;
    let smooth = truncate_smooth(&panel, &decomposition, k)?;

    let hash = config.hash_with(&serde_json::json!({
        "cmd": "pca",
        "panel": panel_path.display().to_string(),
    }));
    let meta = serde_json::json!({
        "components": k,
        "regions": panel.region_count(),
        "months": panel.month_count(),
    });

    let trends_path = formats::out_path(out, "trends.csv");
    formats::write_trends(&trends_path, panel.grid(), &decomposition.trends, k)?;
    formats::write_sidecar(&trends_path, &hash, meta.clone())?;

    let scores_path = formats::out_path(out, "scores.csv");
    formats::write_scores(&scores_path, &scores)?;
    let zero_variance: Vec<&str> = scores
        .zero_variance
        .iter()
        .enumerate()
        .filter(|(_, z)| **z)
        .map(|(r, _)| scores.region_codes[r].as_str())
        .collect();
    formats::write_sidecar(
        &scores_path,
        &hash,
        serde_json::json!({
            "components": k,
            "zero_variance_regions": zero_variance,
        }),
    )?;

    let variance = serde_json::json!({
        "config_hash": hash,
        "components": k,
        "eigenvalues": decomposition.eigenvalues,
        "explained": decomposition.explained,
        "cumulative_explained_k": decomposition.explained.iter().take(k).sum::<f64>(),
    });
    formats::write_json(&formats::out_path(out, "variance.json"), &variance)?;

    let smooth_path = formats::out_path(out, "sindex.csv");
    formats::write_panel(&smooth_path, &smooth)?;
    formats::write_sidecar(&smooth_path, &hash, meta.clone())?;

    Ok(())
}
