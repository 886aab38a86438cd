//! Generate a synthetic market with known ground truth: a sales tape,
//! adjacency, the true index panel and loadings, a planted mining
//! covariate, a lifestyle word panel, and a quarterly CPI tape.

use hpindex_core::synth::{
    generate, lifestyle_word_panel, mining_covariate, quarterly_cpi, SyntheticSpec,
};

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::formats;

#[derive(Debug, clap::Args)]
pub struct SynthParams {
    /// Number of regions.
    #[arg(long, default_value_t = 50)]
    pub regions: usize,
    /// Number of months.
    #[arg(long, default_value_t = 120)]
    pub months: usize,
    /// Idiosyncratic log-price noise standard deviation.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    /// Expected sales per region-month.
    #[arg(long, default_value_t = 3.0)]
    pub intensity: f64,
}

const WORD_PANEL_NOISE: f64 = 0.36;
const CPI_ANNUAL_RATE: f64 = 0.025;

pub fn run(config: &PipelineConfig, params: &SynthParams) -> Result<(), CliError> {
    let seed = config.run.seed;
    let spec = SyntheticSpec::three_factor(
        params.regions,
        params.months,
        params.noise,
        params.intensity,
        seed,
    )?;
    let market = generate(&spec)?;
    let covariates = mining_covariate(&spec, seed.wrapping_add(1));
    let words = lifestyle_word_panel(&spec, seed.wrapping_add(2), WORD_PANEL_NOISE)?;
    let cpi = quarterly_cpi(spec.start, spec.months, CPI_ANNUAL_RATE);

    let hash = config.hash_with(&serde_json::json!({
        "cmd": "synth",
        "regions": params.regions,
        "months": params.months,
        "noise": params.noise,
        "intensity": params.intensity,
    }));
    let meta = serde_json::json!({
        "regions": params.regions,
        "months": params.months,
        "noise": params.noise,
        "intensity": params.intensity,
        "seed": seed,
        "sales": market.records.len(),
    });

    let out = &config.run.out;
    let sales = formats::out_path(out, "sales.csv");
    formats::write_sales(&sales, &market.records)?;
    formats::write_sidecar(&sales, &hash, meta.clone())?;

    let adjacency = formats::out_path(out, "adjacency.csv");
    formats::write_adjacency(&adjacency, &spec.adjacency_edges())?;
    formats::write_sidecar(&adjacency, &hash, meta.clone())?;

    let truth = formats::out_path(out, "truth_panel.csv");
    formats::write_panel(&truth, &market.truth)?;
    formats::write_sidecar(&truth, &hash, meta.clone())?;

    let loadings = formats::out_path(out, "loadings.csv");
    let mut text = String::from("sa2_code,national,mining,lifestyle\n");
    for r in 0..params.regions {
        text.push_str(&format!(
            "{},{},{},{}\n",
            hpindex_core::synth::region_code(r),
            market.loadings.get(r, 0),
            market.loadings.get(r, 1),
            market.loadings.get(r, 2),
        ));
    }
    formats::atomic_write(&loadings, text.as_bytes())?;
    formats::write_sidecar(&loadings, &hash, meta.clone())?;

    let covariate_rows: Vec<(String, f64)> = covariates.into_iter().collect();
    let covariate_path = formats::out_path(out, "covariates.csv");
    formats::write_covariates(&covariate_path, "mining_employment", &covariate_rows)?;
    formats::write_sidecar(
        &covariate_path,
        &hash,
        serde_json::json!({ "covariate": "mining_employment" }),
    )?;

    let words_path = formats::out_path(out, "words.csv");
    formats::write_words(&words_path, words.observations())?;
    formats::write_sidecar(
        &words_path,
        &hash,
        serde_json::json!({ "word_noise": WORD_PANEL_NOISE }),
    )?;

    let cpi_path = formats::out_path(out, "cpi.csv");
    formats::write_cpi(&cpi_path, &cpi)?;
    formats::write_sidecar(
        &cpi_path,
        &hash,
        serde_json::json!({ "annual_rate": CPI_ANNUAL_RATE, "cadence": "quarterly" }),
    )?;

    Ok(())
}
