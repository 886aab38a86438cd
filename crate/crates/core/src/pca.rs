//! Principal-component decomposition of the index panel.
//!
//! The panel `F` (`T x p`, log indexes in columns) is decomposed through
//! the eigenvectors of `R = F'F` without mean-centering; anchoring at the
//! base month already fixes the level. Component trends are `z_k = F a_k`
//! with `lambda_k = ||z_k||^2`, and each region satisfies the expansion
//! `mu_r = sum_k W[k][r] z_k` exactly when all `p` components are kept.

use alloc::string::String;
use alloc::vec::Vec;

use crate::linalg::{complete_orthonormal_basis, dot, jacobi_eigh, DMat};
use crate::time::TimeGrid;

#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Columns must be exactly 0 at the anchor month up to this tolerance.
const ANCHOR_TOLERANCE: f64 = 1e-9;

/// Relative eigenvalue threshold below which a dual-path component counts
/// as null and its loading comes from deterministic basis completion.
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PcaError {
    #[error("panel dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error("panel contains a non-finite value at month {row}, region {column}")]
    NonFinite { row: usize, column: usize },
    #[error("region {region} is not anchored: first-month value {value} exceeds 1e-9")]
    NotAnchored { region: usize, value: f64 },
    #[error("component count {k} outside 1..={p}")]
    ComponentOutOfRange { k: usize, p: usize },
}

/// Balanced panel of log price indexes: rows months, columns regions.
/// Every column is 0 at the first month (index level 1).
#[derive(Debug, Clone, PartialEq)]
pub struct IndexPanel {
    grid: TimeGrid,
    region_codes: Vec<String>,
    values: DMat,
}

impl IndexPanel {
    pub fn new(
        grid: TimeGrid,
        region_codes: Vec<String>,
        values: DMat,
    ) -> Result<Self, PcaError> {
        if values.rows() != grid.len() {
            return Err(PcaError::DimensionMismatch("row count != month count"));
        }
        if values.cols() != region_codes.len() {
            return Err(PcaError::DimensionMismatch("column count != region count"));
        }
        if region_codes.is_empty() {
            return Err(PcaError::DimensionMismatch("panel needs at least one region"));
        }
        for row in 0..values.rows() {
            for column in 0..values.cols() {
                if !values.get(row, column).is_finite() {
                    return Err(PcaError::NonFinite { row, column });
                }
            }
        }
        for region in 0..values.cols() {
            let value = values.get(0, region);
            if value.abs() > ANCHOR_TOLERANCE {
                return Err(PcaError::NotAnchored { region, value });
            }
        }
        Ok(IndexPanel { grid, region_codes, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn region_codes(&self) -> &[String] {
        &self.region_codes
    }

    pub fn region_count(&self) -> usize {
        self.region_codes.len()
    }

    pub fn month_count(&self) -> usize {
        self.grid.len()
    }

    /// Log index values, `T x p`.
    pub fn values(&self) -> &DMat {
        &self.values
    }

    pub fn column(&self, region: usize) -> Vec<f64> {
        self.values.column(region)
    }
}

/// Full eigendecomposition of the panel with derived score material.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaDecomposition {
    /// Descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// `p x p` loadings; row `k` holds component `k`'s weight per region.
    pub weights: DMat,
    /// `T x p` component trends; column `k` is `z_k = F a_k`.
    pub trends: DMat,
    /// `lambda_k / sum(lambda)`; all zero for an identically zero panel.
    pub explained: Vec<f64>,
    /// `p x p` Pearson correlations; row = region, column = component.
    pub correlations: DMat,
    /// Regions whose index has zero variance (correlations forced to 0).
    pub zero_variance_regions: Vec<usize>,
}

/// Eigendecompose `R = F'F` (or its `T x T` dual when `p > T`) and attach
/// trends, explained shares, and correlation scores.
///
/// Sign convention: component 1 is flipped so its mean loading is
/// positive; every later component so its largest-magnitude loading is
/// positive. Repeated runs on the same panel are bitwise identical.
pub fn fit_pca(panel: &IndexPanel) -> PcaDecomposition {
    let f = panel.values();
    let (t, p) = (f.rows(), f.cols());

    let (mut eigenvalues, mut loadings) = if p <= t {
        let eig = jacobi_eigh(&f.gram());
        (eig.eigenvalues, eig.eigenvectors)
    } else {
        // Dual route: eigenvectors u of FF' map to loadings F'u / sqrt(l).
        let eig = jacobi_eigh(&f.outer_gram());
        let lead = eig.eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
        let threshold = lead * RANK_TOLERANCE;
        let mut kept_values = Vec::new();
        let mut kept_columns: Vec<Vec<f64>> = Vec::new();
        for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda <= threshold || lambda <= 0.0 {
                break;
            }
            let u = eig.eigenvectors.column(j);
            let mut a: Vec<f64> = (0..p).map(|r| dot(&f.column(r), &u)).collect();
            let scale = 1.0 / dot(&a, &a).sqrt();
            for v in &mut a {
                *v *= scale;
            }
            kept_values.push(lambda);
            kept_columns.push(a);
        }
        let kept = kept_columns.len();
        let partial = DMat::from_fn(p, kept, |r, j| kept_columns[j][r]);
        let full = complete_orthonormal_basis(&partial, p);
        kept_values.resize(p, 0.0);
        (kept_values, full)
    };

    for lambda in &mut eigenvalues {
        if *lambda < 0.0 {
            *lambda = 0.0;
        }
    }

    // Deterministic sign convention, applied to loadings before trends.
    for k in 0..p {
        let column: Vec<f64> = (0..p).map(|r| loadings.get(r, k)).collect();
        let flip = if k == 0 {
            let mean: f64 = column.iter().sum::<f64>() / p as f64;
            if mean != 0.0 {
                mean < 0.0
            } else {
                largest_abs_is_negative(&column)
            }
        } else {
            largest_abs_is_negative(&column)
        };
        if flip {
            for r in 0..p {
                loadings.set(r, k, -loadings.get(r, k));
            }
        }
    }

    let trends = f.matmul(&loadings);
    let weights = loadings.transpose();

    let total: f64 = eigenvalues.iter().sum();
    let explained: Vec<f64> = if total > 0.0 {
        eigenvalues.iter().map(|l| l / total).collect()
    } else {
        alloc::vec![0.0; p]
    };

    let mut correlations = DMat::zeros(p, p);
    let mut zero_variance_regions = Vec::new();
    for r in 0..p {
        let series = f.column(r);
        if variance(&series) == 0.0 {
            zero_variance_regions.push(r);
            continue;
        }
        for k in 0..p {
            let trend = trends.column(k);
            let value = crate::linalg::pearson(&series, &trend).unwrap_or(0.0);
            correlations.set(r, k, value);
        }
    }

    PcaDecomposition {
        eigenvalues,
        weights,
        trends,
        explained,
        correlations,
        zero_variance_regions,
    }
}

fn largest_abs_is_negative(column: &[f64]) -> bool {
    let mut best = 0usize;
    for (i, v) in column.iter().enumerate() {
        if v.abs() > column[best].abs() {
            best = i;
        }
    }
    column[best] < 0.0
}

fn variance(series: &[f64]) -> f64 {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Per-component share of total variance, descending, summing to 1
/// (all zeros if every eigenvalue is zero).
pub fn explained_variance(eigenvalues: &[f64]) -> Vec<f64> {
    let total: f64 = eigenvalues.iter().sum();
    if total > 0.0 {
        eigenvalues.iter().map(|l| l / total).collect()
    } else {
        alloc::vec![0.0; eigenvalues.len()]
    }
}

/// Both score variants for the first `k` components, rows = regions.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub region_codes: Vec<String>,
    /// Pearson correlation of each region's index with each trend.
    pub correlations: DMat,
    /// Eigenvector loading of each region on each component.
    pub weights: DMat,
    /// Flag per region: true when the index had zero variance.
    pub zero_variance: Vec<bool>,
}

/// Slice the first `k` components out of a decomposition.
pub fn region_scores(
    panel: &IndexPanel,
    decomposition: &PcaDecomposition,
    k: usize,
) -> Result<ScoreMatrix, PcaError> {
    let p = panel.region_count();
    if k == 0 || k > p {
        return Err(PcaError::ComponentOutOfRange { k, p });
    }
    let correlations = DMat::from_fn(p, k, |r, c| decomposition.correlations.get(r, c));
    let weights = DMat::from_fn(p, k, |r, c| decomposition.weights.get(c, r));
    let mut zero_variance = alloc::vec![false; p];
    for &r in &decomposition.zero_variance_regions {
        zero_variance[r] = true;
    }
    Ok(ScoreMatrix {
        region_codes: panel.region_codes().to_vec(),
        correlations,
        weights,
        zero_variance,
    })
}

/// Truncate the expansion to the first `k` components: a smoothed panel
/// with columns `sum_{j<=k} W[j][r] z_j`. `k = p` reproduces the input.
pub fn truncate_smooth(
    panel: &IndexPanel,
    decomposition: &PcaDecomposition,
    k: usize,
) -> Result<IndexPanel, PcaError> {
    let p = panel.region_count();
    let t = panel.month_count();
    if k == 0 || k > p {
        return Err(PcaError::ComponentOutOfRange { k, p });
    }
    let mut values = DMat::zeros(t, p);
    for r in 0..p {
        for j in 0..k {
            let weight = decomposition.weights.get(j, r);
            if weight == 0.0 {
                continue;
            }
            for row in 0..t {
                values.add_assign_at(row, r, weight * decomposition.trends.get(row, j));
            }
        }
    }
    // The anchor row is an exact linear combination of exact zeros.
    for r in 0..p {
        values.set(0, r, 0.0);
    }
    IndexPanel::new(panel.grid().clone(), panel.region_codes().to_vec(), values)
}
