//! Downstream computations over fitted indexes and scores: volume-weighted
//! city aggregation, rank correlations against covariates and listing-word
//! frequencies, composite top-region indexes, CPI deflation, and aligned
//! boom overlays.
//!
//! All correlations in this module are Spearman rank correlations with
//! average-rank tie handling; missing values (NaN) are dropped pairwise
//! and counted, never silently imputed.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::linalg::pearson;
use crate::pca::IndexPanel;
use crate::time::{Month, TimeGrid};

#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Listing words whose frequency tracks the lifestyle component; used as
/// the default word group for the annual correlation series.
pub const DEFAULT_LIFESTYLE_WORDS: [&str; 20] = [
    "holiday",
    "little",
    "view",
    "acre",
    "coastal",
    "package",
    "sea",
    "value",
    "neat",
    "rural",
    "affordable",
    "ocean",
    "cottage",
    "country",
    "pin",
    "close",
    "beach",
    "gem",
    "life",
    "paradise",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 complete pairs, got {0}")]
    InsufficientData(usize),
    #[error("rank correlation undefined: one side is entirely tied")]
    ZeroVariance,
    #[error("covariate `{0}` is missing from every region")]
    MissingCovariate(String),
    #[error("score table has no component index {0}")]
    ComponentOutOfRange(usize),
    #[error("duplicate region `{0}` in score table")]
    DuplicateRegion(String),
    #[error("region `{code}`: {problem}")]
    InvalidRow { code: String, problem: &'static str },
    #[error("word panel entry `{word}`: relative frequency {value} outside [0, 1]")]
    FrequencyOutOfRange { word: String, value: f64 },
    #[error("word panel is empty")]
    EmptyVocabulary,
    #[error("only {available} regions available, {requested} requested")]
    InsufficientRegions { available: usize, requested: usize },
    #[error("selected regions have zero total sales volume")]
    ZeroVolume,
    #[error("series value at position {0} is not positive and finite")]
    NonPositiveValue(usize),
    #[error("CPI series does not cover {0}")]
    CpiCoverage(Month),
    #[error("CPI observations must be strictly increasing in month; `{0}` repeats or regresses")]
    CpiNotMonotone(Month),
    #[error("CPI level for {0} is not positive")]
    CpiNotPositive(Month),
    #[error("month {0} lies outside the series window")]
    OutsideSeries(Month),
    #[error("overlay window shorter than 2 months")]
    WindowTooShort,
}

/// One region's published scores plus the metadata the aggregations need.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub sa2_code: String,
    /// Greater-capital-city (or rest-of-state) grouping label.
    pub city_group: String,
    /// Sales count over the index window.
    pub sales_volume: f64,
    /// Correlation score per retained component, each in [-1, 1].
    pub scores: Vec<f64>,
    /// Named covariate values; absent keys mean missing.
    pub covariates: BTreeMap<String, f64>,
}

/// Validated score rows with unique region codes and a common component
/// count.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    rows: Vec<ScoreRow>,
    components: usize,
    index: BTreeMap<String, usize>,
}

impl ScoreTable {
    pub fn new(rows: Vec<ScoreRow>) -> Result<Self, AnalysisError> {
        let components = rows.first().map_or(0, |r| r.scores.len());
        let mut index = BTreeMap::new();
        for (i, row) in rows.iter().enumerate() {
            if row.scores.len() != components || components == 0 {
                return Err(AnalysisError::InvalidRow {
                    code: row.sa2_code.clone(),
                    problem: "inconsistent or empty score vector",
                });
            }
            if row.city_group.is_empty() {
                return Err(AnalysisError::InvalidRow {
                    code: row.sa2_code.clone(),
                    problem: "empty city group",
                });
            }
            if !(row.sales_volume >= 0.0) || !row.sales_volume.is_finite() {
                return Err(AnalysisError::InvalidRow {
                    code: row.sa2_code.clone(),
                    problem: "negative or non-finite sales volume",
                });
            }
            if row.scores.iter().any(|s| !(-1.0..=1.0).contains(s)) {
                return Err(AnalysisError::InvalidRow {
                    code: row.sa2_code.clone(),
                    problem: "score outside [-1, 1]",
                });
            }
            if index.insert(row.sa2_code.clone(), i).is_some() {
                return Err(AnalysisError::DuplicateRegion(row.sa2_code.clone()));
            }
        }
        Ok(ScoreTable { rows, components, index })
    }

    pub fn rows(&self) -> &[ScoreRow] {
        &self.rows
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn row(&self, sa2_code: &str) -> Option<&ScoreRow> {
        self.index.get(sa2_code).map(|&i| &self.rows[i])
    }
}

/// Volume-weighted mean score per city group.
#[derive(Debug, Clone, PartialEq)]
pub struct CityMean {
    pub city_group: String,
    /// One weighted mean per component.
    pub scores: Vec<f64>,
    pub total_volume: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CityMeans {
    /// Sorted by the component-2 mean, descending.
    pub means: Vec<CityMean>,
    /// City groups dropped because their total volume was zero.
    pub excluded: Vec<String>,
}

/// Aggregate scores to city groups, weighting each region by its sales
/// volume. Output is sorted by the second component's mean, descending
/// (by the first when only one component exists).
pub fn city_weighted_scores(table: &ScoreTable) -> CityMeans {
    let k = table.components();
    let mut totals: BTreeMap<&str, (Vec<f64>, f64)> = BTreeMap::new();
    for row in table.rows() {
        let entry = totals
            .entry(row.city_group.as_str())
            .or_insert_with(|| (alloc::vec![0.0; k], 0.0));
        for (acc, score) in entry.0.iter_mut().zip(&row.scores) {
            *acc += score * row.sales_volume;
        }
        entry.1 += row.sales_volume;
    }
    let mut means = Vec::new();
    let mut excluded = Vec::new();
    for (city, (sums, volume)) in totals {
        if volume <= 0.0 {
            excluded.push(String::from(city));
            continue;
        }
        means.push(CityMean {
            city_group: String::from(city),
            scores: sums.iter().map(|s| s / volume).collect(),
            total_volume: volume,
        });
    }
    let sort_component = if k >= 2 { 1 } else { 0 };
    means.sort_by(|a, b| {
        b.scores[sort_component]
            .partial_cmp(&a.scores[sort_component])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then_with(|| a.city_group.cmp(&b.city_group))
    });
    CityMeans { means, excluded }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpearmanResult {
    pub rho: f64,
    /// Complete pairs used.
    pub used: usize,
    /// Pairs dropped because either side was missing (NaN).
    pub dropped: usize,
}

/// Spearman rank correlation with average ranks for ties. Pairs with a
/// NaN on either side are dropped and counted.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<SpearmanResult, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    let mut xs = Vec::with_capacity(x.len());
    let mut ys = Vec::with_capacity(y.len());
    for (&a, &b) in x.iter().zip(y) {
        if a.is_nan() || b.is_nan() {
            continue;
        }
        xs.push(a);
        ys.push(b);
    }
    let used = xs.len();
    let dropped = x.len() - used;
    if used < 3 {
        return Err(AnalysisError::InsufficientData(used));
    }
    let rx = average_ranks(&xs);
    let ry = average_ranks(&ys);
    match pearson(&rx, &ry) {
        Some(rho) => Ok(SpearmanResult { rho, used, dropped }),
        None => Err(AnalysisError::ZeroVariance),
    }
}

/// Ranks 1..n with tied values receiving the mean of their rank range.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("NaN already removed"));
    let mut ranks = alloc::vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation between a named covariate and each component's
/// scores across all regions. Regions without the covariate are dropped
/// pairwise (and counted in each result).
pub fn covariate_score_correlations(
    table: &ScoreTable,
    covariate: &str,
) -> Result<Vec<SpearmanResult>, AnalysisError> {
    if table.rows().iter().all(|r| !r.covariates.contains_key(covariate)) {
        return Err(AnalysisError::MissingCovariate(String::from(covariate)));
    }
    let values: Vec<f64> = table
        .rows()
        .iter()
        .map(|r| r.covariates.get(covariate).copied().unwrap_or(f64::NAN))
        .collect();
    let mut results = Vec::with_capacity(table.components());
    for component in 0..table.components() {
        let scores: Vec<f64> = table.rows().iter().map(|r| r.scores[component]).collect();
        results.push(spearman(&values, &scores)?);
    }
    Ok(results)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordObservation {
    pub sa2_code: String,
    pub year: i32,
    pub word: String,
    /// Occurrences of the word over total tokens for the region-year.
    pub rel_freq: f64,
}

/// Relative word frequencies per region and year.
#[derive(Debug, Clone, PartialEq)]
pub struct WordFrequencyPanel {
    observations: Vec<WordObservation>,
    /// word -> region -> (year, freq) samples.
    by_word: BTreeMap<String, BTreeMap<String, Vec<(i32, f64)>>>,
    years: BTreeSet<i32>,
}

impl WordFrequencyPanel {
    pub fn new(observations: Vec<WordObservation>) -> Result<Self, AnalysisError> {
        if observations.is_empty() {
            return Err(AnalysisError::EmptyVocabulary);
        }
        let mut by_word: BTreeMap<String, BTreeMap<String, Vec<(i32, f64)>>> = BTreeMap::new();
        let mut years = BTreeSet::new();
        for obs in &observations {
            if !(0.0..=1.0).contains(&obs.rel_freq) || !obs.rel_freq.is_finite() {
                return Err(AnalysisError::FrequencyOutOfRange {
                    word: obs.word.clone(),
                    value: obs.rel_freq,
                });
            }
            years.insert(obs.year);
            by_word
                .entry(obs.word.clone())
                .or_default()
                .entry(obs.sa2_code.clone())
                .or_default()
                .push((obs.year, obs.rel_freq));
        }
        Ok(WordFrequencyPanel { observations, by_word, years })
    }

    pub fn observations(&self) -> &[WordObservation] {
        &self.observations
    }

    pub fn vocabulary(&self) -> Vec<String> {
        self.by_word.keys().cloned().collect()
    }

    pub fn years(&self) -> Vec<i32> {
        self.years.iter().copied().collect()
    }

    /// Mean frequency across all years with observations.
    fn mean_frequency(&self, word: &str, region: &str) -> Option<f64> {
        let samples = self.by_word.get(word)?.get(region)?;
        Some(samples.iter().map(|(_, f)| f).sum::<f64>() / samples.len() as f64)
    }

    /// Mean frequency over a word group for one region-year.
    fn group_frequency(&self, group: &BTreeSet<&str>, region: &str, year: i32) -> Option<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for word in group {
            if let Some(regions) = self.by_word.get(*word) {
                if let Some(samples) = regions.get(region) {
                    for &(sample_year, freq) in samples {
                        if sample_year == year {
                            total += freq;
                            count += 1;
                        }
                    }
                }
            }
        }
        if count == 0 {
            None
        } else {
            Some(total / count as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordScore {
    pub word: String,
    pub rho: f64,
    pub used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct YearGroupCorrelation {
    pub year: i32,
    pub rho: f64,
    pub used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordCorrelations {
    /// Per-word spatial correlation with the component score, descending.
    pub ranked: Vec<WordScore>,
    /// Words excluded for zero variance across regions.
    pub zero_variance: Vec<String>,
    /// Words excluded for having fewer than 3 scoreable regions.
    pub insufficient: Vec<String>,
    /// Per-year correlation of the word group's mean frequency with the
    /// component score; years that cannot be scored are omitted.
    pub group_by_year: Vec<YearGroupCorrelation>,
}

/// Correlate each word's per-region frequency with a component's score,
/// and the configured word group's frequency with that score year by
/// year. `component` is a zero-based index into the score vectors.
pub fn word_score_correlations(
    words: &WordFrequencyPanel,
    table: &ScoreTable,
    component: usize,
    group: &[String],
) -> Result<WordCorrelations, AnalysisError> {
    if component >= table.components() {
        return Err(AnalysisError::ComponentOutOfRange(component));
    }
    let scores: Vec<f64> = table.rows().iter().map(|r| r.scores[component]).collect();

    let mut ranked = Vec::new();
    let mut zero_variance = Vec::new();
    let mut insufficient = Vec::new();
    for word in words.vocabulary() {
        let freqs: Vec<f64> = table
            .rows()
            .iter()
            .map(|r| words.mean_frequency(&word, &r.sa2_code).unwrap_or(f64::NAN))
            .collect();
        match spearman(&freqs, &scores) {
            Ok(result) => ranked.push(WordScore { word, rho: result.rho, used: result.used }),
            Err(AnalysisError::ZeroVariance) => zero_variance.push(word),
            Err(AnalysisError::InsufficientData(_)) => insufficient.push(word),
            Err(other) => return Err(other),
        }
    }
    ranked.sort_by(|a, b| {
        b.rho
            .partial_cmp(&a.rho)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then_with(|| a.word.cmp(&b.word))
    });

    let group_set: BTreeSet<&str> = group.iter().map(String::as_str).collect();
    let mut group_by_year = Vec::new();
    if !group_set.is_empty() {
        for year in words.years() {
            let freqs: Vec<f64> = table
                .rows()
                .iter()
                .map(|r| {
                    words
                        .group_frequency(&group_set, &r.sa2_code, year)
                        .unwrap_or(f64::NAN)
                })
                .collect();
            match spearman(&freqs, &scores) {
                Ok(result) => group_by_year.push(YearGroupCorrelation {
                    year,
                    rho: result.rho,
                    used: result.used,
                }),
                Err(AnalysisError::ZeroVariance) | Err(AnalysisError::InsufficientData(_)) => {}
                Err(other) => return Err(other),
            }
        }
    }

    Ok(WordCorrelations { ranked, zero_variance, insufficient, group_by_year })
}

/// A level-scale (exponentiated) index series on a monthly grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSeries {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl IndexSeries {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self, AnalysisError> {
        if grid.len() != values.len() {
            return Err(AnalysisError::LengthMismatch(grid.len(), values.len()));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(AnalysisError::NonPositiveValue(i));
        }
        Ok(IndexSeries { grid, values })
    }

    /// Exponentiate one panel column into a level series.
    pub fn from_panel_column(panel: &IndexPanel, region: usize) -> Self {
        let values = panel.column(region).iter().map(|v| v.exp()).collect();
        IndexSeries { grid: panel.grid().clone(), values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, month: Month) -> Option<f64> {
        self.grid.index_of(month).map(|i| self.values[i])
    }
}

/// A composite index and the regions that entered it, in rank order.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeIndex {
    pub series: IndexSeries,
    pub region_codes: Vec<String>,
}

/// Volume-weighted mean (in log space) of the top `n` regions by one
/// component's score. `city_filter` restricts candidates to the named
/// city groups. Ties at the cutoff break by region code.
pub fn composite_index(
    panel: &IndexPanel,
    table: &ScoreTable,
    component: usize,
    n: usize,
    city_filter: Option<&[String]>,
) -> Result<CompositeIndex, AnalysisError> {
    if component >= table.components() {
        return Err(AnalysisError::ComponentOutOfRange(component));
    }
    let filter: Option<BTreeSet<&str>> =
        city_filter.map(|groups| groups.iter().map(String::as_str).collect());
    let mut candidates: Vec<(usize, &ScoreRow)> = Vec::new();
    for (column, code) in panel.region_codes().iter().enumerate() {
        if let Some(row) = table.row(code) {
            if let Some(allowed) = &filter {
                if !allowed.contains(row.city_group.as_str()) {
                    continue;
                }
            }
            candidates.push((column, row));
        }
    }
    if candidates.len() < n || n == 0 {
        return Err(AnalysisError::InsufficientRegions {
            available: candidates.len(),
            requested: n,
        });
    }
    candidates.sort_by(|(_, a), (_, b)| {
        b.scores[component]
            .partial_cmp(&a.scores[component])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then_with(|| a.sa2_code.cmp(&b.sa2_code))
    });
    let selected = &candidates[..n];
    let total_volume: f64 = selected.iter().map(|(_, r)| r.sales_volume).sum();
    if total_volume <= 0.0 {
        return Err(AnalysisError::ZeroVolume);
    }
    let t = panel.month_count();
    let mut log_series = alloc::vec![0.0; t];
    for (column, row) in selected {
        let weight = row.sales_volume / total_volume;
        for (k, v) in log_series.iter_mut().enumerate() {
            *v += weight * panel.values().get(k, *column);
        }
    }
    let values: Vec<f64> = log_series.iter().map(|v| v.exp()).collect();
    Ok(CompositeIndex {
        series: IndexSeries { grid: panel.grid().clone(), values },
        region_codes: selected.iter().map(|(_, r)| r.sa2_code.clone()).collect(),
    })
}

/// Monthly CPI levels covering some window.
#[derive(Debug, Clone, PartialEq)]
pub struct CpiSeries {
    grid: TimeGrid,
    values: Vec<f64>,
    /// True when any month was filled by linear interpolation.
    pub interpolated: bool,
}

impl CpiSeries {
    /// Build a monthly series from (month, level) observations, linearly
    /// interpolating interior gaps (e.g. quarterly input). The grid must
    /// lie within the observation hull; there is no extrapolation.
    pub fn from_observations(
        observations: &[(Month, f64)],
        grid: &TimeGrid,
    ) -> Result<Self, AnalysisError> {
        if observations.is_empty() {
            return Err(AnalysisError::CpiCoverage(grid.start()));
        }
        for window in observations.windows(2) {
            if window[1].0.months_since(window[0].0) <= 0 {
                return Err(AnalysisError::CpiNotMonotone(window[1].0));
            }
        }
        for &(month, level) in observations {
            if !(level > 0.0) || !level.is_finite() {
                return Err(AnalysisError::CpiNotPositive(month));
            }
        }
        let first = observations[0].0;
        let last = observations[observations.len() - 1].0;
        let mut values = Vec::with_capacity(grid.len());
        let mut interpolated = false;
        for month in grid.months() {
            if month.months_since(first) < 0 || last.months_since(month) < 0 {
                return Err(AnalysisError::CpiCoverage(month));
            }
            match observations.binary_search_by(|(m, _)| {
                m.months_since(month).cmp(&0)
            }) {
                Ok(i) => values.push(observations[i].1),
                Err(i) => {
                    // Strictly between observations i-1 and i.
                    let (m0, v0) = observations[i - 1];
                    let (m1, v1) = observations[i];
                    let span = m1.months_since(m0) as f64;
                    let offset = month.months_since(m0) as f64;
                    values.push(v0 + (v1 - v0) * offset / span);
                    interpolated = true;
                }
            }
        }
        Ok(CpiSeries { grid: grid.clone(), values, interpolated })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn value_at(&self, month: Month) -> Option<f64> {
        self.grid.index_of(month).map(|i| self.values[i])
    }
}

/// Divide a nominal series by CPI and rescale so `base` equals 1.
pub fn deflate_and_normalize(
    series: &IndexSeries,
    cpi: &CpiSeries,
    base: Month,
) -> Result<IndexSeries, AnalysisError> {
    let base_index = series
        .grid
        .index_of(base)
        .ok_or(AnalysisError::OutsideSeries(base))?;
    let mut real = Vec::with_capacity(series.values.len());
    for (i, month) in series.grid.months().enumerate() {
        let level = cpi.value_at(month).ok_or(AnalysisError::CpiCoverage(month))?;
        real.push(series.values[i] / level);
    }
    let scale = real[base_index];
    for v in &mut real {
        *v /= scale;
    }
    IndexSeries::new(series.grid.clone(), real)
}

/// Two segments of (possibly different) series, each rebased to 1 at its
/// own start month and aligned on a years-elapsed axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BoomOverlay {
    /// Elapsed years at each sample (k / 12).
    pub years_elapsed: Vec<f64>,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    /// True when the horizon exceeded the data and both segments were cut.
    pub truncated: bool,
}

/// Overlay two windows for comparison: segment `a` starts at `start_a` in
/// `series_a`, segment `b` at `start_b` in `series_b`, both spanning
/// `horizon_years`. Windows running past the data are truncated (flagged),
/// keeping the two segments equal length.
pub fn boom_overlay(
    series_a: &IndexSeries,
    series_b: &IndexSeries,
    start_a: Month,
    start_b: Month,
    horizon_years: usize,
) -> Result<BoomOverlay, AnalysisError> {
    let ia = series_a
        .grid
        .index_of(start_a)
        .ok_or(AnalysisError::OutsideSeries(start_a))?;
    let ib = series_b
        .grid
        .index_of(start_b)
        .ok_or(AnalysisError::OutsideSeries(start_b))?;
    let wanted = horizon_years * 12 + 1;
    let available = (series_a.values.len() - ia).min(series_b.values.len() - ib);
    let take = wanted.min(available);
    if take < 2 {
        return Err(AnalysisError::WindowTooShort);
    }
    let rebase = |values: &[f64], start: usize| -> Vec<f64> {
        let base = values[start];
        values[start..start + take].iter().map(|v| v / base).collect()
    };
    Ok(BoomOverlay {
        years_elapsed: (0..take).map(|k| k as f64 / 12.0).collect(),
        first: rebase(&series_a.values, ia),
        second: rebase(&series_b.values, ib),
        truncated: take < wanted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DMat;
    use alloc::format;
    use alloc::string::ToString;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    fn row(code: &str, city: &str, volume: f64, scores: &[f64]) -> ScoreRow {
        ScoreRow {
            sa2_code: code.to_string(),
            city_group: city.to_string(),
            sales_volume: volume,
            scores: scores.to_vec(),
            covariates: BTreeMap::new(),
        }
    }

    #[test]
    fn city_means_weight_by_volume() {
        // Two regions, volumes 1 and 3, scores 0 and 0.4 -> mean 0.3.
        let table = ScoreTable::new(vec![
            row("A", "City1", 1.0, &[0.5, 0.0]),
            row("B", "City1", 3.0, &[0.5, 0.4]),
            row("C", "City2", 2.0, &[0.1, 0.9]),
        ])
        .unwrap();
        let means = city_weighted_scores(&table);
        assert_eq!(means.means[0].city_group, "City2");
        let city1 = &means.means[1];
        assert_abs_diff_eq!(city1.scores[1], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(city1.scores[0], 0.5, epsilon = 1e-12);
        assert!(means.excluded.is_empty());
    }

    #[test]
    fn single_region_city_mean_is_its_score() {
        let table = ScoreTable::new(vec![
            row("A", "X", 5.0, &[0.2, -0.1]),
            row("B", "Y", 2.0, &[0.9, 0.8]),
        ])
        .unwrap();
        let means = city_weighted_scores(&table);
        assert_eq!(means.means[0].city_group, "Y");
        assert_eq!(means.means[0].scores, vec![0.9, 0.8]);
        assert_eq!(means.means[1].scores, vec![0.2, -0.1]);
    }

    #[test]
    fn zero_volume_city_excluded_and_scaling_invariant() {
        let make = |scale: f64| {
            ScoreTable::new(vec![
                row("A", "Live", 2.0 * scale, &[0.1, 0.3]),
                row("B", "Live", 6.0 * scale, &[0.5, 0.1]),
                row("C", "Ghost", 0.0, &[0.9, 0.9]),
            ])
            .unwrap()
        };
        let a = city_weighted_scores(&make(1.0));
        let b = city_weighted_scores(&make(7.5));
        assert_eq!(a.excluded, vec!["Ghost".to_string()]);
        assert_eq!(a.means.len(), 1);
        for (x, y) in a.means[0].scores.iter().zip(&b.means[0].scores) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn spearman_monotone_and_reverse() {
        let up = spearman(&[-1.0, 0.0, 1.0], &[-2.0, 0.0, 2.0]).unwrap();
        assert_abs_diff_eq!(up.rho, 1.0, epsilon = 1e-12);
        let down = spearman(&[-1.0, 0.0, 1.0], &[2.0, 0.0, -2.0]).unwrap();
        assert_abs_diff_eq!(down.rho, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn spearman_tied_fixture_matches_hand_ranks() {
        // x = (1,1,2,3) -> ranks (1.5, 1.5, 3, 4); y = (10,20,20,30) ->
        // ranks (1, 2.5, 2.5, 4); Pearson of those rank vectors is 5/6.
        let result = spearman(&[1.0, 1.0, 2.0, 3.0], &[10.0, 20.0, 20.0, 30.0]).unwrap();
        assert_abs_diff_eq!(result.rho, 5.0 / 6.0, epsilon = 1e-12);
        assert_eq!(result.used, 4);
    }

    #[test]
    fn spearman_drops_missing_and_errors_when_starved() {
        let x = [1.0, f64::NAN, 2.0, 3.0, 4.0];
        let y = [2.0, 5.0, f64::NAN, 6.0, 8.0];
        let result = spearman(&x, &y).unwrap();
        assert_eq!((result.used, result.dropped), (3, 2));
        assert_abs_diff_eq!(result.rho, 1.0, epsilon = 1e-12);
        assert_eq!(
            spearman(&[1.0, 2.0], &[1.0, 2.0]).unwrap_err(),
            AnalysisError::InsufficientData(2)
        );
        assert_eq!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err(),
            AnalysisError::ZeroVariance
        );
    }

    #[test]
    fn spearman_invariant_under_monotone_transforms() {
        let x = [0.3, -1.2, 2.0, 0.7, 0.7, -0.4];
        let y = [1.0, 0.2, 5.0, 2.0, 1.5, 0.1];
        let base = spearman(&x, &y).unwrap().rho;
        let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let cy: Vec<f64> = y.iter().map(|v| v * v * v).collect();
        assert_abs_diff_eq!(spearman(&ex, &y).unwrap().rho, base, epsilon = 1e-12);
        assert_abs_diff_eq!(spearman(&x, &cy).unwrap().rho, base, epsilon = 1e-12);
    }

    #[test]
    fn covariate_correlations_recover_planted_component() {
        let mut rows = Vec::new();
        for i in 0..10 {
            let pc2 = (i as f64) / 10.0 - 0.5;
            let mut r = row(&format!("R{i}"), "C", 1.0, &[0.5 - pc2 * 0.1, pc2]);
            r.covariates.insert("mining".to_string(), pc2 * 3.0 + 1.0);
            rows.push(r);
        }
        let table = ScoreTable::new(rows).unwrap();
        let result = covariate_score_correlations(&table, "mining").unwrap();
        assert_abs_diff_eq!(result[1].rho, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(result[0].rho, -1.0, epsilon = 1e-12);
        assert_eq!(
            covariate_score_correlations(&table, "absent").unwrap_err(),
            AnalysisError::MissingCovariate("absent".to_string())
        );
    }

    fn word_obs(code: &str, year: i32, word: &str, freq: f64) -> WordObservation {
        WordObservation {
            sa2_code: code.to_string(),
            year,
            word: word.to_string(),
            rel_freq: freq,
        }
    }

    #[test]
    fn word_matching_score_ranks_first() {
        let mut rows = Vec::new();
        let mut observations = Vec::new();
        for i in 0..6 {
            let score = i as f64 / 10.0;
            rows.push(row(&format!("R{i}"), "C", 1.0, &[0.5, 0.1, score]));
            observations.push(word_obs(&format!("R{i}"), 2015, "beach", score / 2.0));
            observations.push(word_obs(&format!("R{i}"), 2015, "brick", 0.02));
            observations.push(word_obs(
                &format!("R{i}"),
                2015,
                "garage",
                0.05 - score / 20.0,
            ));
        }
        let table = ScoreTable::new(rows).unwrap();
        let words = WordFrequencyPanel::new(observations).unwrap();
        let result =
            word_score_correlations(&words, &table, 2, &["beach".to_string()]).unwrap();
        assert_eq!(result.ranked[0].word, "beach");
        assert_abs_diff_eq!(result.ranked[0].rho, 1.0, epsilon = 1e-12);
        // Constant word excluded for zero variance.
        assert_eq!(result.zero_variance, vec!["brick".to_string()]);
        // Anti-correlated word ranks last.
        assert_eq!(result.ranked.last().unwrap().word, "garage");
        // Group series covers the one year and correlates perfectly.
        assert_eq!(result.group_by_year.len(), 1);
        assert_eq!(result.group_by_year[0].year, 2015);
        assert_abs_diff_eq!(result.group_by_year[0].rho, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn word_panel_validates_frequencies() {
        assert!(matches!(
            WordFrequencyPanel::new(vec![word_obs("A", 2000, "w", 1.5)]),
            Err(AnalysisError::FrequencyOutOfRange { .. })
        ));
        assert_eq!(
            WordFrequencyPanel::new(Vec::new()).unwrap_err(),
            AnalysisError::EmptyVocabulary
        );
    }

    fn panel(t: usize, columns: &[Vec<f64>]) -> IndexPanel {
        let p = columns.len();
        let values = DMat::from_fn(t, p, |row, column| columns[column][row]);
        IndexPanel::new(
            TimeGrid::new(Month::new(2000, 1).unwrap(), t).unwrap(),
            (0..p).map(|r| format!("R{r}")).collect(),
            values,
        )
        .unwrap()
    }

    #[test]
    fn composite_of_one_region_is_its_index() {
        let p = panel(3, &[vec![0.0, 0.1, 0.2], vec![0.0, 0.5, 0.6]]);
        let table = ScoreTable::new(vec![
            row("R0", "C", 4.0, &[0.1]),
            row("R1", "C", 2.0, &[0.9]),
        ])
        .unwrap();
        let composite = composite_index(&p, &table, 0, 1, None).unwrap();
        assert_eq!(composite.region_codes, vec!["R1".to_string()]);
        for (got, want) in composite.series.values().iter().zip([0.0f64, 0.5, 0.6]) {
            assert_abs_diff_eq!(*got, want.exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn composite_with_equal_volumes_averages_logs() {
        let a = vec![0.0, 0.2, 0.4];
        let b = vec![0.0, 0.6, 0.1];
        let p = panel(3, &[a.clone(), b.clone()]);
        let table = ScoreTable::new(vec![
            row("R0", "C", 3.0, &[0.5]),
            row("R1", "C", 3.0, &[0.6]),
        ])
        .unwrap();
        let composite = composite_index(&p, &table, 0, 2, None).unwrap();
        for k in 0..3 {
            let want = ((a[k] + b[k]) / 2.0).exp();
            assert_abs_diff_eq!(composite.series.values()[k], want, epsilon = 1e-12);
        }
    }

    #[test]
    fn composite_selection_is_affine_invariant_and_tie_stable() {
        let columns: Vec<Vec<f64>> =
            (0..5).map(|r| vec![0.0, 0.1 * r as f64, 0.2]).collect();
        let p = panel(3, &columns);
        let scores = [0.9, 0.3, 0.9, 0.1, 0.5];
        let build = |transform: &dyn Fn(f64) -> f64| {
            ScoreTable::new(
                (0..5)
                    .map(|i| row(&format!("R{i}"), "C", 1.0 + i as f64, &[transform(scores[i])]))
                    .collect(),
            )
            .unwrap()
        };
        let base = build(&|s| s);
        let shifted = build(&|s| 0.5 * s + 0.1);
        let top_base = composite_index(&p, &base, 0, 3, None).unwrap();
        let top_shifted = composite_index(&p, &shifted, 0, 3, None).unwrap();
        assert_eq!(top_base.region_codes, top_shifted.region_codes);
        // Tie between R0 and R2 at 0.9 resolves by code.
        assert_eq!(top_base.region_codes[0], "R0");
        assert_eq!(top_base.region_codes[1], "R2");

        assert!(matches!(
            composite_index(&p, &base, 0, 9, None),
            Err(AnalysisError::InsufficientRegions { available: 5, requested: 9 })
        ));
    }

    #[test]
    fn composite_city_filter_restricts_candidates() {
        let columns: Vec<Vec<f64>> = (0..4).map(|r| vec![0.0, 0.1 * r as f64]).collect();
        let p = panel(2, &columns);
        let table = ScoreTable::new(vec![
            row("R0", "North", 1.0, &[0.9]),
            row("R1", "South", 1.0, &[0.8]),
            row("R2", "North", 1.0, &[0.7]),
            row("R3", "South", 1.0, &[0.6]),
        ])
        .unwrap();
        let south = composite_index(&p, &table, 0, 2, Some(&["South".to_string()])).unwrap();
        assert_eq!(south.region_codes, vec!["R1".to_string(), "R3".to_string()]);
    }

    fn series(values: &[f64]) -> IndexSeries {
        IndexSeries::new(
            TimeGrid::new(Month::new(2000, 1).unwrap(), values.len()).unwrap(),
            values.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn constant_cpi_only_normalizes() {
        let s = series(&[1.0, 1.1, 1.21]);
        let grid = s.grid().clone();
        let cpi = CpiSeries::from_observations(
            &[(Month::new(2000, 1).unwrap(), 2.0), (Month::new(2000, 3).unwrap(), 2.0)],
            &grid,
        )
        .unwrap();
        let real = deflate_and_normalize(&s, &cpi, Month::new(2000, 1).unwrap()).unwrap();
        for (got, want) in real.values().iter().zip([1.0, 1.1, 1.21]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        // Idempotent: deflating the result by CPI = 1 changes nothing.
        let unit = CpiSeries::from_observations(
            &[(Month::new(2000, 1).unwrap(), 1.0), (Month::new(2000, 3).unwrap(), 1.0)],
            &grid,
        )
        .unwrap();
        let again = deflate_and_normalize(&real, &unit, Month::new(2000, 1).unwrap()).unwrap();
        for (a, b) in again.values().iter().zip(real.values()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
        }
    }

    #[test]
    fn matched_cpi_growth_gives_flat_real_series() {
        let s = series(&[1.0, 2.0, 4.0]);
        let cpi = CpiSeries::from_observations(
            &[
                (Month::new(2000, 1).unwrap(), 100.0),
                (Month::new(2000, 2).unwrap(), 200.0),
                (Month::new(2000, 3).unwrap(), 400.0),
            ],
            s.grid(),
        )
        .unwrap();
        let real = deflate_and_normalize(&s, &cpi, Month::new(2000, 1).unwrap()).unwrap();
        for v in real.values() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
        }
        assert!(!cpi.interpolated);
    }

    #[test]
    fn quarterly_cpi_interpolates_and_spot_checks() {
        let s = series(&[1.0, 1.05, 1.1, 1.2, 1.3]);
        // Quarterly observations: Jan 100, Apr 106.
        let cpi = CpiSeries::from_observations(
            &[(Month::new(2000, 1).unwrap(), 100.0), (Month::new(2000, 4).unwrap(), 106.0)],
            &TimeGrid::new(Month::new(2000, 1).unwrap(), 4).unwrap(),
        )
        .unwrap();
        assert!(cpi.interpolated);
        // Feb = 102, Mar = 104 by linear interpolation.
        assert_abs_diff_eq!(cpi.value_at(Month::new(2000, 2).unwrap()).unwrap(), 102.0);
        assert_abs_diff_eq!(cpi.value_at(Month::new(2000, 3).unwrap()).unwrap(), 104.0);
        // Coverage error past the hull.
        assert!(matches!(
            CpiSeries::from_observations(
                &[(Month::new(2000, 2).unwrap(), 100.0)],
                s.grid(),
            ),
            Err(AnalysisError::CpiCoverage(_))
        ));
        // Hand computation at three months: real = nominal / cpi, then
        // rescaled so the base month is 1.
        let grid4 = TimeGrid::new(Month::new(2000, 1).unwrap(), 4).unwrap();
        let s4 = IndexSeries::new(grid4, vec![1.0, 1.05, 1.1, 1.2]).unwrap();
        let real = deflate_and_normalize(&s4, &cpi, Month::new(2000, 1).unwrap()).unwrap();
        assert_abs_diff_eq!(real.values()[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(real.values()[1], (1.05 / 102.0) / (1.0 / 100.0), epsilon = 1e-12);
        assert_abs_diff_eq!(real.values()[3], (1.2 / 106.0) / (1.0 / 100.0), epsilon = 1e-12);
    }

    #[test]
    fn overlay_of_identical_windows_is_identical() {
        let values: Vec<f64> = (0..30).map(|k| 1.0 + 0.01 * k as f64).collect();
        let s = series(&values);
        let start = Month::new(2000, 3).unwrap();
        let overlay = boom_overlay(&s, &s, start, start, 2).unwrap();
        assert_eq!(overlay.first, overlay.second);
        assert_eq!(overlay.first[0], 1.0);
        assert_eq!(overlay.years_elapsed[12], 1.0);
        assert!(!overlay.truncated);
    }

    #[test]
    fn overlay_peak_ratio_matches_raw_series() {
        // Two humps of different heights.
        let values: Vec<f64> = (0..60)
            .map(|k| {
                let x = k as f64;
                1.0 + 0.5 * (-((x - 12.0) / 5.0) * ((x - 12.0) / 5.0)).exp()
                    + 0.9 * (-((x - 45.0) / 5.0) * ((x - 45.0) / 5.0)).exp()
            })
            .collect();
        let s = series(&values);
        let start_a = Month::new(2000, 7).unwrap();
        let start_b = Month::new(2003, 4).unwrap();
        let overlay = boom_overlay(&s, &s, start_a, start_b, 1).unwrap();
        let ia = s.grid().index_of(start_a).unwrap();
        let ib = s.grid().index_of(start_b).unwrap();
        let raw_peak = |start: usize| {
            values[start..start + 13].iter().fold(0.0f64, |m, v| m.max(*v)) / values[start]
        };
        let overlay_peak =
            |segment: &[f64]| segment.iter().fold(0.0f64, |m, v| m.max(*v));
        assert_abs_diff_eq!(overlay_peak(&overlay.first), raw_peak(ia), epsilon = 1e-10);
        assert_abs_diff_eq!(overlay_peak(&overlay.second), raw_peak(ib), epsilon = 1e-10);
    }

    #[test]
    fn overlay_truncates_with_flag() {
        let s = series(&[1.0, 1.1, 1.2, 1.3]);
        let overlay =
            boom_overlay(&s, &s, Month::new(2000, 2).unwrap(), Month::new(2000, 1).unwrap(), 1)
                .unwrap();
        // Segment a has only 3 months left; both segments cut to 3.
        assert!(overlay.truncated);
        assert_eq!(overlay.first.len(), 3);
        assert_eq!(overlay.second.len(), 3);
        assert!(matches!(
            boom_overlay(&s, &s, Month::new(1999, 1).unwrap(), Month::new(2000, 1).unwrap(), 1),
            Err(AnalysisError::OutsideSeries(_))
        ));
    }
}
