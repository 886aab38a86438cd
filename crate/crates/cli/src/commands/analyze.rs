//! Downstream analyses over the estimated panel and scores: city-level
//! weighted score means, covariate and word correlations, composite
//! indexes, CPI deflation, and boom overlays.

use std::path::PathBuf;

use hpindex_core::analysis::{
    boom_overlay, city_weighted_scores, composite_index, covariate_score_correlations,
    deflate_and_normalize, word_score_correlations, CpiSeries, ScoreRow, ScoreTable,
    WordFrequencyPanel, DEFAULT_LIFESTYLE_WORDS,
};
use hpindex_core::time::Month;

use crate::config::{parse_window_flag, PipelineConfig};
use crate::error::CliError;
use crate::formats;

#[derive(Debug, clap::Args)]
pub struct CityMeansArgs {
    /// Scores CSV; defaults to <out>/scores.csv.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Region metadata CSV; defaults to <out>/regions.csv.
    #[arg(long)]
    pub regions: Option<PathBuf>,
    /// Recount volume weights over this sub-window instead of using the
    /// whole-window counts from the region metadata.
    #[arg(long, value_name = "START:END")]
    pub volume_window: Option<String>,
    /// Sales CSV for the sub-window recount; defaults to the configured
    /// sales input.
    #[arg(long)]
    pub sales: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct CovariateCorrArgs {
    /// Scores CSV; defaults to <out>/scores.csv.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Region metadata CSV; defaults to <out>/regions.csv.
    #[arg(long)]
    pub regions: Option<PathBuf>,
    /// Covariates CSV; defaults to the configured covariates input.
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    /// Name of the covariate to correlate with each component score.
    #[arg(long)]
    pub covariate: String,
}

#[derive(Debug, clap::Args)]
pub struct WordCorrArgs {
    /// Scores CSV; defaults to <out>/scores.csv.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Region metadata CSV; defaults to <out>/regions.csv.
    #[arg(long)]
    pub regions: Option<PathBuf>,
    /// Word panel CSV; defaults to the configured words input.
    #[arg(long)]
    pub words: Option<PathBuf>,
    /// 1-based component whose score the words are correlated with.
    #[arg(long, default_value_t = 3)]
    pub component: usize,
    /// Comma-separated word group for the per-year series; defaults to
    /// the built-in lifestyle list.
    #[arg(long)]
    pub group: Option<String>,
}

#[derive(Debug, clap::Args)]
pub struct CompositeArgs {
    /// Panel CSV; defaults to <out>/panel.csv.
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Scores CSV; defaults to <out>/scores.csv.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Region metadata CSV; defaults to <out>/regions.csv.
    #[arg(long)]
    pub regions: Option<PathBuf>,
    /// 1-based component whose score ranks the regions.
    #[arg(long, default_value_t = 3)]
    pub component: usize,
    /// How many top-ranked regions enter the composite.
    #[arg(long, default_value_t = 20)]
    pub top: usize,
    /// Comma-separated city groups to restrict the candidates to.
    #[arg(long)]
    pub cities: Option<String>,
}

#[derive(Debug, clap::Args)]
pub struct OverlayArgs {
    /// First series CSV (month,index).
    #[arg(long)]
    pub series_a: PathBuf,
    /// Second series CSV; defaults to the first.
    #[arg(long)]
    pub series_b: Option<PathBuf>,
    /// Segment start in the first series (YYYY-MM).
    #[arg(long)]
    pub start_a: String,
    /// Segment start in the second series (YYYY-MM).
    #[arg(long)]
    pub start_b: String,
    /// Overlay span in years.
    #[arg(long, default_value_t = 10)]
    pub horizon_years: usize,
}

#[derive(Debug, clap::Args)]
pub struct DeflateArgs {
    /// Nominal series CSV (month,index).
    #[arg(long)]
    pub series: PathBuf,
    /// CPI CSV; defaults to the configured cpi input.
    #[arg(long)]
    pub cpi: Option<PathBuf>,
    /// Base month rescaled to 1 (YYYY-MM); defaults to the series start.
    #[arg(long)]
    pub base: Option<String>,
}

fn parse_month(raw: &str, what: &str) -> Result<Month, CliError> {
    raw.parse::<Month>()
        .map_err(|e| CliError::input(format!("invalid {what} month {raw}: {e}")))
}

fn existing(path: PathBuf, what: &str) -> Result<PathBuf, CliError> {
    if !path.exists() {
        return Err(CliError::input(format!(
            "{what} file not found: {}",
            path.display()
        )));
    }
    Ok(path)
}

/// Join the scores CSV with region metadata into analysis rows; volume
/// is the whole-window sales count.
fn load_rows(
    config: &PipelineConfig,
    scores: &Option<PathBuf>,
    regions: &Option<PathBuf>,
) -> Result<Vec<ScoreRow>, CliError> {
    let out = &config.run.out;
    let scores_path = existing(
        scores.clone().unwrap_or_else(|| formats::out_path(out, "scores.csv")),
        "scores",
    )?;
    let regions_path = existing(
        regions.clone().unwrap_or_else(|| formats::out_path(out, "regions.csv")),
        "region metadata",
    )?;
    formats::join_score_rows(
        &formats::read_scores(&scores_path)?,
        &formats::read_region_meta(&regions_path)?,
    )
}

fn build_table(rows: Vec<ScoreRow>) -> Result<ScoreTable, CliError> {
    ScoreTable::new(rows).map_err(|e| CliError::input(format!("invalid score table: {e}")))
}

/// 1-based component flag to a checked 0-based index.
fn component_index(component: usize, table: &ScoreTable) -> Result<usize, CliError> {
    if component == 0 || component > table.components() {
        return Err(CliError::input(format!(
            "component {component} outside 1..={}",
            table.components()
        )));
    }
    Ok(component - 1)
}

pub fn city_means(config: &PipelineConfig, args: &CityMeansArgs) -> Result<(), CliError> {
    let mut rows = load_rows(config, &args.scores, &args.regions)?;
    let mut weights_policy = String::from("sales volume over the whole index window");
    if let Some(raw) = &args.volume_window {
        let (start, end) = parse_window_flag(raw)?;
        let bounds = (
            Some(parse_month(&start, "volume window start")?),
            Some(parse_month(&end, "volume window end")?),
        );
        let sales_path = match &args.sales {
            Some(path) => existing(path.clone(), "sales")?,
            None => config.require_input(&config.inputs.sales, "sales")?,
        };
        let (records, _) = formats::read_sales(&sales_path, bounds)?;
        let mut counts = std::collections::BTreeMap::<&str, f64>::new();
        for record in &records {
            *counts.entry(record.region_code.as_str()).or_insert(0.0) += 1.0;
        }
        for row in &mut rows {
            row.sales_volume = counts.get(row.sa2_code.as_str()).copied().unwrap_or(0.0);
        }
        weights_policy = format!("sales volume recounted over {raw}");
    }
    let table = build_table(rows)?;
    let means = city_weighted_scores(&table);

    let k = table.components();
    let mut out = String::from("city_group");
    for i in 1..=k {
        out.push_str(&format!(",pc{i}_mean"));
    }
    out.push_str(",total_volume\n");
    for mean in &means.means {
        out.push_str(&mean.city_group);
        for s in &mean.scores {
            out.push_str(&format!(",{s}"));
        }
        out.push_str(&format!(",{}\n", mean.total_volume));
    }

    let hash = config.hash_with(&serde_json::json!({
        "cmd": "analyze", "task": "city-means",
        "volume_window": args.volume_window,
    }));
    let path = formats::out_path(&config.run.out, "city_means.csv");
    formats::atomic_write(&path, out.as_bytes())?;
    formats::write_sidecar(
        &path,
        &hash,
        serde_json::json!({
            "weights_policy": weights_policy,
            "order": "pc2 mean descending",
            "excluded_zero_volume": means.excluded,
        }),
    )
}

pub fn covariate_corr(
    config: &PipelineConfig,
    args: &CovariateCorrArgs,
) -> Result<(), CliError> {
    let mut rows = load_rows(config, &args.scores, &args.regions)?;
    let covariates_path = match &args.covariates {
        Some(path) => existing(path.clone(), "covariates")?,
        None => config.require_input(&config.inputs.covariates, "covariates")?,
    };
    let mut by_code = std::collections::BTreeMap::<String, Vec<(String, f64)>>::new();
    for (code, name, value) in formats::read_covariates(&covariates_path)? {
        by_code.entry(code).or_default().push((name, value));
    }
    for row in &mut rows {
        if let Some(pairs) = by_code.get(&row.sa2_code) {
            for (name, value) in pairs {
                row.covariates.insert(name.clone(), *value);
            }
        }
    }
    let table = build_table(rows)?;
    let results = covariate_score_correlations(&table, &args.covariate)?;

    let mut out = String::from("component,rho,used,dropped\n");
    for (i, r) in results.iter().enumerate() {
        out.push_str(&format!("pc{},{},{},{}\n", i + 1, r.rho, r.used, r.dropped));
    }
    let hash = config.hash_with(&serde_json::json!({
        "cmd": "analyze", "task": "covariate-corr", "covariate": args.covariate,
    }));
    let path = formats::out_path(&config.run.out, "covariate_corr.csv");
    formats::atomic_write(&path, out.as_bytes())?;
    formats::write_sidecar(
        &path,
        &hash,
        serde_json::json!({
            "covariate": args.covariate,
            "correlation": "spearman, average ranks for ties",
        }),
    )
}

pub fn word_corr(config: &PipelineConfig, args: &WordCorrArgs) -> Result<(), CliError> {
    let table = build_table(load_rows(config, &args.scores, &args.regions)?)?;
    let words_path = match &args.words {
        Some(path) => existing(path.clone(), "words")?,
        None => config.require_input(&config.inputs.words, "words")?,
    };
    let panel = WordFrequencyPanel::new(formats::read_words(&words_path)?)
        .map_err(|e| CliError::input(format!("invalid word panel: {e}")))?;
    let component = component_index(args.component, &table)?;
    let group: Vec<String> = match &args.group {
        Some(raw) => raw
            .split(',')
            .map(str::trim)
            .filter(|w| !w.is_empty())
            .map(String::from)
            .collect(),
        None => DEFAULT_LIFESTYLE_WORDS.iter().map(|w| w.to_string()).collect(),
    };
    let correlations = word_score_correlations(&panel, &table, component, &group)?;

    let mut ranked = String::from("word,rho,used\n");
    for w in &correlations.ranked {
        ranked.push_str(&format!("{},{},{}\n", w.word, w.rho, w.used));
    }
    let mut yearly = String::from("year,rho,used\n");
    for y in &correlations.group_by_year {
        yearly.push_str(&format!("{},{},{}\n", y.year, y.rho, y.used));
    }

    let hash = config.hash_with(&serde_json::json!({
        "cmd": "analyze", "task": "word-corr",
        "component": args.component, "group": group,
    }));
    let sidecar = serde_json::json!({
        "component": args.component,
        "word_group": group,
        "zero_variance_words": correlations.zero_variance,
        "insufficient_words": correlations.insufficient,
    });
    let ranked_path = formats::out_path(&config.run.out, "word_corr.csv");
    formats::atomic_write(&ranked_path, ranked.as_bytes())?;
    formats::write_sidecar(&ranked_path, &hash, sidecar.clone())?;
    let yearly_path = formats::out_path(&config.run.out, "word_group_by_year.csv");
    formats::atomic_write(&yearly_path, yearly.as_bytes())?;
    formats::write_sidecar(&yearly_path, &hash, sidecar)
}

pub fn composite(config: &PipelineConfig, args: &CompositeArgs) -> Result<(), CliError> {
    let out = &config.run.out;
    let panel_path = existing(
        args.panel.clone().unwrap_or_else(|| formats::out_path(out, "panel.csv")),
        "panel",
    )?;
    let panel = formats::read_panel(&panel_path)?;
    let table = build_table(load_rows(config, &args.scores, &args.regions)?)?;
    let component = component_index(args.component, &table)?;
    let cities: Option<Vec<String>> = args
        .cities
        .as_ref()
        .map(|raw| raw.split(',').map(|c| c.trim().to_string()).collect());
    let result =
        composite_index(&panel, &table, component, args.top, cities.as_deref())?;

    let hash = config.hash_with(&serde_json::json!({
        "cmd": "analyze", "task": "composite",
        "component": args.component, "top": args.top, "cities": cities,
    }));
    let path = formats::out_path(out, "composite.csv");
    formats::write_series(&path, &result.series)?;
    formats::write_sidecar(
        &path,
        &hash,
        serde_json::json!({
            "component": args.component,
            "top": args.top,
            "cities": cities,
            "regions": result.region_codes,
            "weights_policy": "sales volume, log-space mean",
        }),
    )
}

pub fn overlay(config: &PipelineConfig, args: &OverlayArgs) -> Result<(), CliError> {
    let series_a = formats::read_series(&existing(args.series_a.clone(), "series")?)?;
    let series_b = match &args.series_b {
        Some(path) => formats::read_series(&existing(path.clone(), "series")?)?,
        None => series_a.clone(),
    };
    let start_a = parse_month(&args.start_a, "overlay start")?;
    let start_b = parse_month(&args.start_b, "overlay start")?;
    let result = boom_overlay(&series_a, &series_b, start_a, start_b, args.horizon_years)?;

    let mut out = String::from("years_elapsed,first,second\n");
    for i in 0..result.years_elapsed.len() {
        out.push_str(&format!(
            "{},{},{}\n",
            result.years_elapsed[i], result.first[i], result.second[i]
        ));
    }
    let hash = config.hash_with(&serde_json::json!({
        "cmd": "analyze", "task": "overlay",
        "start_a": args.start_a, "start_b": args.start_b,
        "horizon_years": args.horizon_years,
    }));
    let path = formats::out_path(&config.run.out, "overlay.csv");
    formats::atomic_write(&path, out.as_bytes())?;
    formats::write_sidecar(
        &path,
        &hash,
        serde_json::json!({
            "start_a": args.start_a,
            "start_b": args.start_b,
            "horizon_years": args.horizon_years,
            "truncated": result.truncated,
        }),
    )
}

pub fn deflate(config: &PipelineConfig, args: &DeflateArgs) -> Result<(), CliError> {
    let series = formats::read_series(&existing(args.series.clone(), "series")?)?;
    let cpi_path = match &args.cpi {
        Some(path) => existing(path.clone(), "cpi")?,
        None => config.require_input(&config.inputs.cpi, "cpi")?,
    };
    let observations = formats::read_cpi(&cpi_path)?;
    let cpi = CpiSeries::from_observations(&observations, series.grid())?;
    let base = match &args.base {
        Some(raw) => parse_month(raw, "base")?,
        None => series.grid().start(),
    };
    let interpolated = cpi.interpolated;
    let real = deflate_and_normalize(&series, &cpi, base)?;

    let hash = config.hash_with(&serde_json::json!({
        "cmd": "analyze", "task": "deflate", "base": base.to_string(),
    }));
    let path = formats::out_path(&config.run.out, "real.csv");
    formats::write_series(&path, &real)?;
    formats::write_sidecar(
        &path,
        &hash,
        serde_json::json!({
            "base_month": base.to_string(),
            "cpi_interpolated": interpolated,
        }),
    )
}
