//! CSV and JSON readers and writers for every pipeline artifact. All
//! writes go through a temp-file-then-rename step so a crash never
//! leaves a half-written output, and each output gains a JSON metadata
//! sidecar carrying the config hash.

use std::fs;
use std::path::{Path, PathBuf};

use hpindex_core::analysis::{IndexSeries, ScoreRow, WordObservation};
use hpindex_core::ingest::SalesRecord;
use hpindex_core::linalg::DMat;
use hpindex_core::pca::ScoreMatrix;
use hpindex_core::time::{Date, Month, TimeGrid};
use hpindex_core::IndexPanel;

use crate::error::CliError;

/// One rejected input row of the sales file: 1-based physical line
/// number (the header is line 1) plus the reason.
#[derive(Debug, Clone)]
pub struct Reject {
    pub row_number: u64,
    pub reason: String,
}

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| {
                CliError::input(format!("cannot create {}: {e}", parent.display()))
            })?;
        }
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| CliError::input(format!("not a file path: {}", path.display())))?;
    let mut tmp = path.to_path_buf();
    tmp.set_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    fs::write(&tmp, bytes)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path)
        .map_err(|e| CliError::input(format!("cannot finalize {}: {e}", path.display())))
}

/// Write the `<name>.meta.json` sidecar next to an output file.
pub fn write_sidecar(
    path: &Path,
    config_hash: &str,
    extra: serde_json::Value,
) -> Result<(), CliError> {
    let mut object = serde_json::Map::new();
    object.insert("config_hash".into(), config_hash.into());
    if let serde_json::Value::Object(map) = extra {
        object.extend(map);
    }
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".meta.json");
    let text = serde_json::to_string_pretty(&serde_json::Value::Object(object))
        .expect("metadata serialization cannot fail");
    atomic_write(Path::new(&sidecar), format!("{text}\n").as_bytes())
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("json serialization cannot fail");
    atomic_write(path, format!("{text}\n").as_bytes())
}

fn read_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::input(format!("cannot read {}: {e}", path.display()))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| read_error(path, e))
}

/// Read the sales file, keeping structurally valid rows and collecting
/// rejects (with 1-based line numbers, header = line 1) for the rest.
/// Rows dated outside the configured window bounds are rejected too.
pub fn read_sales(
    path: &Path,
    window: (Option<Month>, Option<Month>),
) -> Result<(Vec<SalesRecord>, Vec<Reject>), CliError> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(|e| read_error(path, e))?.clone();
    let expected = ["property_id", "price", "sale_date", "sa2_code", "sa4_code"];
    for (i, want) in expected.iter().enumerate() {
        if headers.get(i) != Some(*want) {
            return Err(CliError::input(format!(
                "{}: expected column {} to be {want}, got {}",
                path.display(),
                i + 1,
                headers.get(i).unwrap_or("<missing>")
            )));
        }
    }
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_number = i as u64 + 2;
        let reject = |reason: String| Reject { row_number, reason };
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                rejects.push(reject(format!("unreadable row: {e}")));
                continue;
            }
        };
        match parse_sales_row(&row, window) {
            Ok(Some(record)) => records.push(record),
            Ok(None) => rejects.push(reject("sale date outside window".into())),
            Err(reason) => rejects.push(reject(reason)),
        }
    }
    Ok((records, rejects))
}

fn parse_sales_row(
    row: &csv::StringRecord,
    window: (Option<Month>, Option<Month>),
) -> Result<Option<SalesRecord>, String> {
    if row.len() < 5 {
        return Err(format!("expected at least 5 columns, got {}", row.len()));
    }
    let property_id = row[0].to_string();
    if property_id.is_empty() {
        return Err("empty property_id".into());
    }
    let price: f64 = row[1].parse().map_err(|e| format!("bad price {}: {e}", &row[1]))?;
    if !(price > 0.0) || !price.is_finite() {
        return Err(format!("price must be positive, got {}", &row[1]));
    }
    let sale_date = parse_date(&row[2])?;
    let region_code = row[3].to_string();
    if region_code.is_empty() {
        return Err("empty sa2_code".into());
    }
    let parent_region_code = row[4].to_string();
    if parent_region_code.is_empty() {
        return Err("empty sa4_code".into());
    }
    let parse_coord = |field: Option<&str>, name: &str| -> Result<Option<f64>, String> {
        match field {
            None | Some("") => Ok(None),
            Some(raw) => raw
                .parse::<f64>()
                .map(Some)
                .map_err(|e| format!("bad {name} {raw}: {e}")),
        }
    };
    let latitude = parse_coord(row.get(5), "lat")?;
    let longitude = parse_coord(row.get(6), "lon")?;
    let month = sale_date.month_key();
    if let Some(start) = window.0 {
        if month.months_since(start) < 0 {
            return Ok(None);
        }
    }
    if let Some(end) = window.1 {
        if end.months_since(month) < 0 {
            return Ok(None);
        }
    }
    Ok(Some(SalesRecord {
        property_id,
        price,
        sale_date,
        region_code,
        parent_region_code,
        latitude,
        longitude,
    }))
}

fn parse_date(raw: &str) -> Result<Date, String> {
    let mut parts = raw.split('-');
    let (y, m, d) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some(y), Some(m), Some(d), None) => (y, m, d),
        _ => return Err(format!("date must be YYYY-MM-DD, got {raw}")),
    };
    let year: i32 = y.parse().map_err(|_| format!("bad year in {raw}"))?;
    let month: u32 = m.parse().map_err(|_| format!("bad month in {raw}"))?;
    let day: u32 = d.parse().map_err(|_| format!("bad day in {raw}"))?;
    Date::new(year, month, day).map_err(|e| format!("invalid date {raw}: {e}"))
}

pub fn write_sales(path: &Path, records: &[SalesRecord]) -> Result<(), CliError> {
    let mut out = String::from("property_id,price,sale_date,sa2_code,sa4_code,lat,lon\n");
    for r in records {
        let coord = |c: Option<f64>| c.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.property_id,
            r.price,
            r.sale_date,
            r.region_code,
            r.parent_region_code,
            coord(r.latitude),
            coord(r.longitude),
        ));
    }
    atomic_write(path, out.as_bytes())
}

pub fn write_rejects(path: &Path, rejects: &[Reject]) -> Result<(), CliError> {
    let mut out = String::from("row_number,reason\n");
    for r in rejects {
        let reason = if r.reason.contains([',', '"', '\n']) {
            format!("\"{}\"", r.reason.replace('"', "\"\""))
        } else {
            r.reason.clone()
        };
        out.push_str(&format!("{},{}\n", r.row_number, reason));
    }
    atomic_write(path, out.as_bytes())
}

/// Adjacency rows `sa2_code_a,sa2_code_b`, one undirected edge each.
pub fn read_adjacency(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let mut reader = csv_reader(path)?;
    let mut edges = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| read_error(path, e))?;
        if row.len() < 2 || row[0].is_empty() || row[1].is_empty() {
            return Err(CliError::input(format!(
                "{} row {}: expected sa2_code_a,sa2_code_b",
                path.display(),
                i + 2
            )));
        }
        edges.push((row[0].to_string(), row[1].to_string()));
    }
    Ok(edges)
}

pub fn write_adjacency(path: &Path, edges: &[(String, String)]) -> Result<(), CliError> {
    let mut out = String::from("sa2_code_a,sa2_code_b\n");
    for (a, b) in edges {
        out.push_str(&format!("{a},{b}\n"));
    }
    atomic_write(path, out.as_bytes())
}

/// Covariate rows `sa2_code,covariate_name,value`.
pub fn read_covariates(path: &Path) -> Result<Vec<(String, String, f64)>, CliError> {
    let mut reader = csv_reader(path)?;
    let mut rows = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| read_error(path, e))?;
        let bad = |what: &str| {
            CliError::input(format!("{} row {}: {what}", path.display(), i + 2))
        };
        if row.len() < 3 {
            return Err(bad("expected sa2_code,covariate_name,value"));
        }
        let value: f64 = row[2].parse().map_err(|_| bad("bad value"))?;
        if !value.is_finite() {
            return Err(bad("value must be finite"));
        }
        rows.push((row[0].to_string(), row[1].to_string(), value));
    }
    Ok(rows)
}

pub fn write_covariates(
    path: &Path,
    name: &str,
    values: &[(String, f64)],
) -> Result<(), CliError> {
    let mut out = String::from("sa2_code,covariate_name,value\n");
    for (code, value) in values {
        out.push_str(&format!("{code},{name},{value}\n"));
    }
    atomic_write(path, out.as_bytes())
}

/// Word panel rows `sa2_code,year,word,rel_freq`.
pub fn read_words(path: &Path) -> Result<Vec<WordObservation>, CliError> {
    let mut reader = csv_reader(path)?;
    let mut rows = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| read_error(path, e))?;
        let bad = |what: &str| {
            CliError::input(format!("{} row {}: {what}", path.display(), i + 2))
        };
        if row.len() < 4 {
            return Err(bad("expected sa2_code,year,word,rel_freq"));
        }
        let year: i32 = row[1].parse().map_err(|_| bad("bad year"))?;
        let rel_freq: f64 = row[3].parse().map_err(|_| bad("bad rel_freq"))?;
        rows.push(WordObservation {
            sa2_code: row[0].to_string(),
            year,
            word: row[2].to_string(),
            rel_freq,
        });
    }
    Ok(rows)
}

pub fn write_words(path: &Path, observations: &[WordObservation]) -> Result<(), CliError> {
    let mut out = String::from("sa2_code,year,word,rel_freq\n");
    for o in observations {
        out.push_str(&format!("{},{},{},{}\n", o.sa2_code, o.year, o.word, o.rel_freq));
    }
    atomic_write(path, out.as_bytes())
}

/// CPI rows `month,cpi`, strictly increasing months.
pub fn read_cpi(path: &Path) -> Result<Vec<(Month, f64)>, CliError> {
    let mut reader = csv_reader(path)?;
    let mut rows = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| read_error(path, e))?;
        let bad = |what: String| {
            CliError::input(format!("{} row {}: {what}", path.display(), i + 2))
        };
        if row.len() < 2 {
            return Err(bad("expected month,cpi".into()));
        }
        let month: Month =
            row[0].parse().map_err(|e| bad(format!("bad month {}: {e}", &row[0])))?;
        let value: f64 = row[1].parse().map_err(|_| bad("bad cpi level".into()))?;
        rows.push((month, value));
    }
    Ok(rows)
}

pub fn write_cpi(path: &Path, observations: &[(Month, f64)]) -> Result<(), CliError> {
    let mut out = String::from("month,cpi\n");
    for (month, value) in observations {
        out.push_str(&format!("{month},{value}\n"));
    }
    atomic_write(path, out.as_bytes())
}

/// Panel CSV: `month` column then one column of index levels per SA2
/// code; the anchor month prints as exactly 1.
pub fn write_panel(path: &Path, panel: &IndexPanel) -> Result<(), CliError> {
    let mut out = String::from("month");
    for code in panel.region_codes() {
        out.push(',');
        out.push_str(code);
    }
    out.push('\n');
    for (t, month) in panel.grid().months().enumerate() {
        out.push_str(&month.to_string());
        for r in 0..panel.region_count() {
            out.push(',');
            out.push_str(&panel.values().get(t, r).exp().to_string());
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Read a panel CSV back into log space.
pub fn read_panel(path: &Path) -> Result<IndexPanel, CliError> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(|e| read_error(path, e))?.clone();
    if headers.get(0) != Some("month") || headers.len() < 2 {
        return Err(CliError::input(format!(
            "{}: expected header month,<sa2 codes...>",
            path.display()
        )));
    }
    let codes: Vec<String> = headers.iter().skip(1).map(String::from).collect();
    let mut months: Vec<Month> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| read_error(path, e))?;
        let bad = |what: String| {
            CliError::input(format!("{} row {}: {what}", path.display(), i + 2))
        };
        if row.len() != codes.len() + 1 {
            return Err(bad(format!(
                "expected {} columns, got {}",
                codes.len() + 1,
                row.len()
            )));
        }
        let month: Month =
            row[0].parse().map_err(|e| bad(format!("bad month {}: {e}", &row[0])))?;
        let mut values = Vec::with_capacity(codes.len());
        for j in 1..row.len() {
            let level: f64 = row[j].parse().map_err(|_| bad(format!("bad level {}", &row[j])))?;
            if !(level > 0.0) || !level.is_finite() {
                return Err(bad(format!("index level must be positive, got {level}")));
            }
            values.push(level.ln());
        }
        months.push(month);
        rows.push(values);
    }
    if months.len() < 2 {
        return Err(CliError::input(format!(
            "{}: a panel needs at least two months",
            path.display()
        )));
    }
    let grid = TimeGrid::new(months[0], months.len()).map_err(CliError::from)?;
    for (t, month) in months.iter().enumerate() {
        if *month != grid.month_at(t) {
            return Err(CliError::input(format!(
                "{}: months must be consecutive, got {month} at position {t}",
                path.display()
            )));
        }
    }
    let values = DMat::from_fn(months.len(), codes.len(), |t, r| rows[t][r]);
    IndexPanel::new(grid, codes, values).map_err(CliError::from)
}

/// Region metadata emitted by the index step and consumed by the PCA
/// step: `sa2_code,sa4_code,sales,pairs`.
#[derive(Debug, Clone)]
pub struct RegionMeta {
    pub sa2_code: String,
    pub sa4_code: String,
    pub sales: u64,
    pub pairs: u64,
}

pub fn write_region_meta(path: &Path, rows: &[RegionMeta]) -> Result<(), CliError> {
    let mut out = String::from("sa2_code,sa4_code,sales,pairs\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.sa2_code, r.sa4_code, r.sales, r.pairs));
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_region_meta(path: &Path) -> Result<Vec<RegionMeta>, CliError> {
    let mut reader = csv_reader(path)?;
    let mut rows = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| read_error(path, e))?;
        let bad = |what: &str| {
            CliError::input(format!("{} row {}: {what}", path.display(), i + 2))
        };
        if row.len() < 4 {
            return Err(bad("expected sa2_code,sa4_code,sales,pairs"));
        }
        rows.push(RegionMeta {
            sa2_code: row[0].to_string(),
            sa4_code: row[1].to_string(),
            sales: row[2].parse().map_err(|_| bad("bad sales count"))?,
            pairs: row[3].parse().map_err(|_| bad("bad pair count"))?,
        });
    }
    Ok(rows)
}

/// Scores CSV: `sa2_code`, then the correlation scores, then the
/// eigenvector weights, one pair of columns per retained component.
pub fn write_scores(path: &Path, scores: &ScoreMatrix) -> Result<(), CliError> {
    let k = scores.correlations.cols();
    let mut out = String::from("sa2_code");
    for i in 1..=k {
        out.push_str(&format!(",pc{i}_corr"));
    }
    for i in 1..=k {
        out.push_str(&format!(",pc{i}_weight"));
    }
    out.push('\n');
    for (r, code) in scores.region_codes.iter().enumerate() {
        out.push_str(code);
        for i in 0..k {
            out.push_str(&format!(",{}", scores.correlations.get(r, i)));
        }
        for i in 0..k {
            out.push_str(&format!(",{}", scores.weights.get(r, i)));
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// One row of a scores CSV: the correlation columns only, which are the
/// component scores used by the analysis layer.
#[derive(Debug, Clone)]
pub struct ScoreFileRow {
    pub sa2_code: String,
    pub scores: Vec<f64>,
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreFileRow>, CliError> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(|e| read_error(path, e))?.clone();
    if headers.get(0) != Some("sa2_code") {
        return Err(CliError::input(format!(
            "{}: expected first column sa2_code",
            path.display()
        )));
    }
    let corr_columns: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.ends_with("_corr"))
        .map(|(i, _)| i)
        .collect();
    if corr_columns.is_empty() {
        return Err(CliError::input(format!(
            "{}: no *_corr score columns found",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| read_error(path, e))?;
        let bad = |what: String| {
            CliError::input(format!("{} row {}: {what}", path.display(), i + 2))
        };
        let mut scores = Vec::with_capacity(corr_columns.len());
        for &c in &corr_columns {
            let raw = row
                .get(c)
                .ok_or_else(|| bad(format!("missing score column {c}")))?;
            scores.push(raw.parse().map_err(|_| bad(format!("bad score {raw}")))?);
        }
        rows.push(ScoreFileRow { sa2_code: row[0].to_string(), scores });
    }
    Ok(rows)
}

/// Join score rows with the region metadata emitted by the index step
/// into full analysis rows; volume is the sales count over the window.
pub fn join_score_rows(
    scores: &[ScoreFileRow],
    meta: &[RegionMeta],
) -> Result<Vec<ScoreRow>, CliError> {
    let by_code: std::collections::BTreeMap<&str, &RegionMeta> =
        meta.iter().map(|m| (m.sa2_code.as_str(), m)).collect();
    scores
        .iter()
        .map(|row| {
            let m = by_code.get(row.sa2_code.as_str()).ok_or_else(|| {
                CliError::input(format!("no region metadata for {}", row.sa2_code))
            })?;
            Ok(ScoreRow {
                sa2_code: row.sa2_code.clone(),
                city_group: m.sa4_code.clone(),
                sales_volume: m.sales as f64,
                scores: row.scores.clone(),
                covariates: Default::default(),
            })
        })
        .collect()
}

/// One-series CSV `month,index`.
pub fn write_series(path: &Path, series: &IndexSeries) -> Result<(), CliError> {
    let mut out = String::from("month,index\n");
    for (month, value) in series.grid().months().zip(series.values()) {
        out.push_str(&format!("{month},{value}\n"));
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_series(path: &Path) -> Result<IndexSeries, CliError> {
    let mut reader = csv_reader(path)?;
    let mut months = Vec::new();
    let mut values = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| read_error(path, e))?;
        let bad = |what: String| {
            CliError::input(format!("{} row {}: {what}", path.display(), i + 2))
        };
        if row.len() < 2 {
            return Err(bad("expected month,index".into()));
        }
        let month: Month =
            row[0].parse().map_err(|e| bad(format!("bad month {}: {e}", &row[0])))?;
        let value: f64 = row[1].parse().map_err(|_| bad(format!("bad index {}", &row[1])))?;
        months.push(month);
        values.push(value);
    }
    if months.len() < 2 {
        return Err(CliError::input(format!(
            "{}: a series needs at least two months",
            path.display()
        )));
    }
    let grid = TimeGrid::new(months[0], months.len()).map_err(CliError::from)?;
    for (t, month) in months.iter().enumerate() {
        if *month != grid.month_at(t) {
            return Err(CliError::input(format!(
                "{}: months must be consecutive, got {month} at position {t}",
                path.display()
            )));
        }
    }
    IndexSeries::new(grid, values).map_err(CliError::from)
}

/// PC trend CSV: `month,pc1,pc2,...`.
pub fn write_trends(path: &Path, grid: &TimeGrid, trends: &DMat, k: usize) -> Result<(), CliError> {
    let mut out = String::from("month");
    for i in 1..=k {
        out.push_str(&format!(",pc{i}"));
    }
    out.push('\n');
    for (t, month) in grid.months().enumerate() {
        out.push_str(&month.to_string());
        for i in 0..k {
            out.push_str(&format!(",{}", trends.get(t, i)));
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

pub fn out_path(out: &Path, name: &str) -> PathBuf {
    out.join(name)
}
