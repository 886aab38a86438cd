//! The penalized repeat-sales regression.
//!
//! Observations are log-price differences `y`. The model is
//! `y = D_st a + D_t m + e`, where `m` is the main trend (length `T`) and
//! `a = vec(H)` stacks per-region deviation curves (`H` is `T x p`). The
//! objective adds `gamma_st a' (L_s (x) L_t) a`, `gamma_t m' L_t m`, and a
//! tiny ridge on `a`, and is minimized by preconditioned conjugate
//! gradients on the normal equations, matrix-free throughout.
//!
//! Identification: the data see only `m + H_r`, so the split is pinned by
//! two conventions. First, `m` and every column of `H` are anchored to 0
//! at the first month. Second, the cross-region mean of `H` is constrained
//! to 0 at every month, so the common trend lives in `m` (where `gamma_t`
//! smooths it) and `H` carries pure deviations. Both constraints are
//! enforced by projecting every vector onto the constraint subspace.

use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{RegionGraph, SpatioTemporalPenalty};
use crate::ingest::{RegionIndex, RepeatSalePair};
use crate::linalg::{axpy, dot, norm2, DMat};
use crate::pca::{IndexPanel, PcaError};
use crate::time::TimeGrid;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("pair {index} is out of bounds: region {region} of {p}, months {first}->{second} of {t}")]
    PairOutOfBounds { index: usize, region: usize, first: usize, second: usize, p: usize, t: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error("invalid penalty configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(
        "region block {region} is not identifiable: no sales pairs reach it \
         (no spatial coupling can impute it)"
    )]
    NonIdentifiableRegion { region: usize },
    #[error("month {month} is not identifiable: no sales pair touches it and the trend penalty is zero")]
    NonIdentifiableMonth { month: usize },
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("cross-validation needs at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("fold {fold} would hold out zero pairs ({pairs} pairs across {folds} folds)")]
    EmptyFold { fold: usize, pairs: usize, folds: usize },
    #[error("region {0} appears in more than one batch fit")]
    DuplicateRegion(usize),
    #[error("region {0} is missing from every batch fit")]
    MissingRegion(usize),
    #[error(transparent)]
    Panel(#[from] PcaError),
}

/// The sparse repeat-sales design. Each pair contributes one row with
/// `-1/+1` at its two months, in both the owning region's deviation block
/// and the main-trend block.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSystem {
    p: usize,
    t: usize,
    pairs: Vec<RepeatSalePair>,
}

/// Validate pair indexes against the region/month counts and freeze them
/// into a design. Row `i` of the implied `D_t` has `-1` at `first_time`
/// and `+1` at `second_time`; the `D_st` row repeats that pattern inside
/// the region's block.
pub fn build_design(
    pairs: &[RepeatSalePair],
    p: usize,
    t: usize,
) -> Result<DesignSystem, SolverError> {
    if p == 0 || t < 2 {
        return Err(SolverError::DimensionMismatch("need p >= 1 regions and T >= 2 months"));
    }
    for (index, pair) in pairs.iter().enumerate() {
        if pair.region_index >= p || pair.second_time >= t || pair.first_time >= pair.second_time {
            return Err(SolverError::PairOutOfBounds {
                index,
                region: pair.region_index,
                first: pair.first_time,
                second: pair.second_time,
                p,
                t,
            });
        }
    }
    Ok(DesignSystem { p, t, pairs: pairs.to_vec() })
}

impl DesignSystem {
    pub fn n(&self) -> usize {
        self.pairs.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn pairs(&self) -> &[RepeatSalePair] {
        &self.pairs
    }

    /// Coefficient vector length: `p*T` deviations then `T` trend entries.
    pub fn param_len(&self) -> usize {
        self.p * self.t + self.t
    }

    /// `out = D theta` (one prediction per pair).
    fn apply(&self, theta: &[f64], out: &mut [f64]) {
        let (alpha, mu) = theta.split_at(self.p * self.t);
        for (i, pair) in self.pairs.iter().enumerate() {
            let block = pair.region_index * self.t;
            out[i] = alpha[block + pair.second_time] - alpha[block + pair.first_time]
                + mu[pair.second_time]
                - mu[pair.first_time];
        }
    }

    /// `out += D' v`.
    fn apply_adjoint(&self, v: &[f64], out: &mut [f64]) {
        let (alpha, mu) = out.split_at_mut(self.p * self.t);
        for (i, pair) in self.pairs.iter().enumerate() {
            let block = pair.region_index * self.t;
            alpha[block + pair.second_time] += v[i];
            alpha[block + pair.first_time] -= v[i];
            mu[pair.second_time] += v[i];
            mu[pair.first_time] -= v[i];
        }
    }

    fn observations(&self) -> Vec<f64> {
        self.pairs.iter().map(|pr| pr.log_return).collect()
    }
}

/// Penalty weights and solver controls.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyConfig {
    /// Weight on the spatio-temporal deviation penalty.
    pub gamma_st: f64,
    /// Weight on the main-trend smoothness penalty.
    pub gamma_t: f64,
    /// Tiny ridge on the deviation coefficients; resolves any null-space
    /// directions the penalties and data leave open. Reported, never hidden.
    pub alpha_ridge: f64,
    /// Relative residual target for conjugate gradients.
    pub tolerance: f64,
    /// Iteration cap; defaults to `10 * (p*T + T)` when `None`.
    pub max_iterations: Option<usize>,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            gamma_st: 1.0,
            gamma_t: 1.0,
            alpha_ridge: 1e-8,
            tolerance: 1e-10,
            max_iterations: None,
        }
    }
}

impl PenaltyConfig {
    pub fn with_gammas(gamma_st: f64, gamma_t: f64) -> Self {
        PenaltyConfig { gamma_st, gamma_t, ..PenaltyConfig::default() }
    }

    fn validate(&self) -> Result<(), SolverError> {
        if !(self.gamma_st >= 0.0) || !self.gamma_st.is_finite() {
            return Err(SolverError::InvalidConfig("gamma_st must be finite and >= 0"));
        }
        if !(self.gamma_t >= 0.0) || !self.gamma_t.is_finite() {
            return Err(SolverError::InvalidConfig("gamma_t must be finite and >= 0"));
        }
        if !(self.alpha_ridge >= 0.0) || !self.alpha_ridge.is_finite() {
            return Err(SolverError::InvalidConfig("alpha_ridge must be finite and >= 0"));
        }
        if !(self.tolerance > 0.0) {
            return Err(SolverError::InvalidConfig("tolerance must be > 0"));
        }
        Ok(())
    }
}

/// Fitted split plus convergence diagnostics.
///
/// `deviations` column `r` is `H_{.r}`; the fitted log index for region
/// `r` is `main_trend + H_{.r}` (see [`FitResult::index_for`]). Both parts
/// are 0 at the first month, and the deviations have zero cross-region
/// mean at every month.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub main_trend: Vec<f64>,
    /// `T x p`; column per region.
    pub deviations: DMat,
    /// Penalized objective at the solution.
    pub objective_value: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Final relative residual of the normal equations.
    pub residual_norm: f64,
    /// Norm of the objective gradient projected onto the identification
    /// subspace, recomputed from scratch at the solution.
    pub gradient_norm: f64,
}

impl FitResult {
    /// Fitted log index for one region: `main_trend + H_{.r}`.
    pub fn index_for(&self, region: usize) -> Vec<f64> {
        (0..self.main_trend.len())
            .map(|k| self.main_trend[k] + self.deviations.get(k, region))
            .collect()
    }
}

/// The normal-equations operator `Pi (D'D + penalties) Pi`, applied
/// matrix-free; `Pi` projects onto the identification subspace.
struct NormalOperator<'a> {
    design: &'a DesignSystem,
    penalty: &'a SpatioTemporalPenalty,
    trend: &'a RegionGraph,
    gamma_st: f64,
    gamma_t: f64,
    alpha_ridge: f64,
}

impl NormalOperator<'_> {
    /// Project onto the subspace: anchored coordinates zeroed, then the
    /// cross-region mean of the deviation block removed month by month.
    fn project(&self, x: &mut [f64]) {
        let (p, t) = (self.design.p, self.design.t);
        for r in 0..p {
            x[r * t] = 0.0;
        }
        x[p * t] = 0.0;
        let inv_p = 1.0 / p as f64;
        for k in 1..t {
            let mut mean = 0.0;
            for r in 0..p {
                mean += x[r * t + k];
            }
            mean *= inv_p;
            for r in 0..p {
                x[r * t + k] -= mean;
            }
        }
    }

    /// `y = Pi (D'D x + gamma_st (L_s (x) L_t) x_a + ridge x_a (+) gamma_t L_t x_m)`.
    /// Callers must pass `x` already inside the subspace.
    fn apply(&self, x: &[f64], y: &mut [f64], scratch_n: &mut [f64], scratch_a: &mut [f64]) {
        let (p, t) = (self.design.p, self.design.t);
        let pt = p * t;
        y.fill(0.0);
        self.design.apply(x, scratch_n);
        self.design.apply_adjoint(scratch_n, y);

        let (x_alpha, x_mu) = x.split_at(pt);
        if self.gamma_st > 0.0 {
            self.penalty.apply(x_alpha, scratch_a);
            axpy(self.gamma_st, scratch_a, &mut y[..pt]);
        }
        if self.alpha_ridge > 0.0 {
            axpy(self.alpha_ridge, x_alpha, &mut y[..pt]);
        }
        if self.gamma_t > 0.0 {
            let mut lt_mu = vec![0.0; t];
            self.trend.apply_laplacian(x_mu, &mut lt_mu);
            axpy(self.gamma_t, &lt_mu, &mut y[pt..]);
        }
        self.project(y);
    }

    /// Jacobi preconditioner: the diagonal of the unprojected operator,
    /// with anchored or empty coordinates set to 1.
    fn diagonal(&self) -> Vec<f64> {
        let (p, t) = (self.design.p, self.design.t);
        let pt = p * t;
        let mut diag = vec![0.0; pt + t];
        for pair in &self.design.pairs {
            let block = pair.region_index * t;
            diag[block + pair.first_time] += 1.0;
            diag[block + pair.second_time] += 1.0;
            diag[pt + pair.first_time] += 1.0;
            diag[pt + pair.second_time] += 1.0;
        }
        for r in 0..p {
            let deg_s = self.penalty.spatial().degree(r);
            for k in 0..t {
                diag[r * t + k] +=
                    self.gamma_st * deg_s * self.penalty.temporal().degree(k) + self.alpha_ridge;
            }
        }
        for k in 0..t {
            diag[pt + k] += self.gamma_t * self.trend.degree(k);
        }
        for r in 0..p {
            diag[r * t] = 1.0;
        }
        diag[pt] = 1.0;
        for d in &mut diag {
            if *d <= 0.0 {
                *d = 1.0;
            }
        }
        diag
    }
}

/// The full penalized objective at an arbitrary coefficient vector.
fn objective_at(
    design: &DesignSystem,
    penalty: &SpatioTemporalPenalty,
    trend: &RegionGraph,
    config: &PenaltyConfig,
    theta: &[f64],
) -> f64 {
    let pt = design.p * design.t;
    let mut fitted = vec![0.0; design.n()];
    design.apply(theta, &mut fitted);
    let mut ssr = 0.0;
    for (i, pair) in design.pairs.iter().enumerate() {
        let e = pair.log_return - fitted[i];
        ssr += e * e;
    }
    let (alpha, mu) = theta.split_at(pt);
    ssr + config.gamma_st * penalty.quadform(alpha)
        + config.gamma_t * trend.laplacian_quadform(mu)
        + config.alpha_ridge * dot(alpha, alpha)
}

/// Objective gradient projected onto the identification subspace.
fn projected_gradient(op: &NormalOperator<'_>, b: &[f64], theta: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; theta.len()];
    let mut scratch_n = vec![0.0; op.design.n()];
    let mut scratch_a = vec![0.0; op.design.p * op.design.t];
    op.apply(theta, &mut g, &mut scratch_n, &mut scratch_a);
    for (gi, bi) in g.iter_mut().zip(b) {
        *gi = 2.0 * (*gi - bi);
    }
    g
}

fn check_identifiable(
    design: &DesignSystem,
    penalty: &SpatioTemporalPenalty,
    config: &PenaltyConfig,
) -> Result<(), SolverError> {
    let (p, t) = (design.p, design.t);
    let mut region_pairs = vec![0usize; p];
    let mut month_touched = vec![false; t];
    for pair in &design.pairs {
        region_pairs[pair.region_index] += 1;
        month_touched[pair.first_time] = true;
        month_touched[pair.second_time] = true;
    }
    if config.gamma_st == 0.0 {
        if let Some(region) = region_pairs.iter().position(|&c| c == 0) {
            return Err(SolverError::NonIdentifiableRegion { region });
        }
    } else {
        // Union the spatial graph; every connected component needs data.
        let mut component = vec![usize::MAX; p];
        let mut stack = Vec::new();
        for start in 0..p {
            if component[start] != usize::MAX {
                continue;
            }
            component[start] = start;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for &(a, b) in penalty.spatial().edges() {
                    let v = if a == u {
                        b
                    } else if b == u {
                        a
                    } else {
                        continue;
                    };
                    if component[v] == usize::MAX {
                        component[v] = start;
                        stack.push(v);
                    }
                }
            }
        }
        let mut component_pairs = vec![0usize; p];
        for r in 0..p {
            component_pairs[component[r]] += region_pairs[r];
        }
        for r in 0..p {
            if component[r] == r && component_pairs[r] == 0 {
                return Err(SolverError::NonIdentifiableRegion { region: r });
            }
        }
    }
    if config.gamma_t == 0.0 {
        // The anchored first month needs no data; every other month does.
        if let Some(month) = (1..t).find(|&k| !month_touched[k]) {
            return Err(SolverError::NonIdentifiableMonth { month });
        }
    }
    Ok(())
}

/// Minimize the penalized objective under the identification constraints.
///
/// `trend` is the Laplacian smoothing the main trend; it is usually the
/// same path graph as `penalty.temporal()` but is accepted separately.
///
/// Conditioning note: with `gamma_st = 0`, a deviation cell no sale ever
/// touches is determined only by the tiny ridge, and the system's
/// condition number scales like data / ridge. Such fits may exhaust the
/// iteration budget and report `converged = false`. Either keep
/// `gamma_st` positive (the default grids do) or supply data dense
/// enough to touch every region-month.
pub fn solve_penalized(
    design: &DesignSystem,
    penalty: &SpatioTemporalPenalty,
    trend: &RegionGraph,
    config: &PenaltyConfig,
) -> Result<FitResult, SolverError> {
    config.validate()?;
    let (p, t) = (design.p, design.t);
    if penalty.spatial().node_count() != p {
        return Err(SolverError::DimensionMismatch("spatial graph size != region count"));
    }
    if penalty.temporal().node_count() != t {
        return Err(SolverError::DimensionMismatch("temporal graph size != month count"));
    }
    if trend.node_count() != t {
        return Err(SolverError::DimensionMismatch("trend graph size != month count"));
    }
    check_identifiable(design, penalty, config)?;

    let op = NormalOperator {
        design,
        penalty,
        trend,
        gamma_st: config.gamma_st,
        gamma_t: config.gamma_t,
        alpha_ridge: config.alpha_ridge,
    };
    let pt = p * t;
    let len = pt + t;
    let y = design.observations();

    let mut b = vec![0.0; len];
    design.apply_adjoint(&y, &mut b);
    op.project(&mut b);
    let b_norm = norm2(&b);

    let mut x = vec![0.0; len];
    let mut iterations = 0;
    let mut residual_norm = 0.0;
    let mut converged = true;

    if b_norm > 0.0 {
        let diag = op.diagonal();
        let max_iterations = config.max_iterations.unwrap_or(10 * len);
        let mut scratch_n = vec![0.0; design.n()];
        let mut scratch_a = vec![0.0; pt];

        let mut r = b.clone();
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
        op.project(&mut z);
        let mut d = z.clone();
        let mut rz = dot(&r, &z);
        let mut ad = vec![0.0; len];
        converged = false;

        while iterations < max_iterations {
            iterations += 1;
            op.apply(&d, &mut ad, &mut scratch_n, &mut scratch_a);
            let dad = dot(&d, &ad);
            if dad <= 0.0 {
                break;
            }
            let step = rz / dad;
            axpy(step, &d, &mut x);
            axpy(-step, &ad, &mut r);
            residual_norm = norm2(&r) / b_norm;
            if residual_norm <= config.tolerance {
                converged = true;
                break;
            }
            for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&diag) {
                *zi = ri / di;
            }
            op.project(&mut z);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for (di, zi) in d.iter_mut().zip(&z) {
                *di = zi + beta * *di;
            }
        }
        op.project(&mut x);
    }

    let gradient_norm = norm2(&projected_gradient(&op, &b, &x));
    let objective_value = objective_at(design, penalty, trend, config, &x);

    let main_trend = x[pt..].to_vec();
    let deviations = DMat::from_fn(t, p, |k, r| x[r * t + k]);
    Ok(FitResult {
        main_trend,
        deviations,
        objective_value,
        converged,
        iterations,
        residual_norm,
        gradient_norm,
    })
}

/// One grid-search evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CvRecord {
    pub gamma_st: f64,
    pub gamma_t: f64,
    /// Pooled out-of-sample mean squared prediction error.
    pub mean_squared_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub selected: PenaltyConfig,
    pub records: Vec<CvRecord>,
}

/// K-fold cross-validated grid search over `(gamma_st, gamma_t)`.
///
/// Pairs are shuffled once with the given seed and dealt round-robin into
/// folds. A held-out pair is predicted by the fitted index difference
/// between its two months; the score is the pooled mean squared error.
/// Ties go to larger gammas (grids are scanned in ascending order and a
/// tie replaces the incumbent).
pub fn grid_search(
    pairs: &[RepeatSalePair],
    penalty: &SpatioTemporalPenalty,
    trend: &RegionGraph,
    gamma_st_grid: &[f64],
    gamma_t_grid: &[f64],
    folds: usize,
    base: &PenaltyConfig,
    seed: u64,
) -> Result<GridSearchResult, SolverError> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    if gamma_st_grid.is_empty() || gamma_t_grid.is_empty() {
        return Err(SolverError::EmptyGrid);
    }
    if folds < 2 {
        return Err(SolverError::TooFewFolds(folds));
    }
    let n = pairs.len();
    if n < folds {
        return Err(SolverError::EmptyFold { fold: n, pairs: n, folds });
    }
    let p = penalty.spatial().node_count();
    let t = penalty.temporal().node_count();

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut fold_of = vec![0usize; n];
    for (position, &pair_index) in order.iter().enumerate() {
        fold_of[pair_index] = position % folds;
    }

    let mut st_grid = gamma_st_grid.to_vec();
    let mut t_grid = gamma_t_grid.to_vec();
    st_grid.sort_by(|a, b| a.partial_cmp(b).expect("gamma grids must not contain NaN"));
    t_grid.sort_by(|a, b| a.partial_cmp(b).expect("gamma grids must not contain NaN"));

    let mut records = Vec::with_capacity(st_grid.len() * t_grid.len());
    let mut best: Option<(f64, f64, f64)> = None;
    for &gamma_st in &st_grid {
        for &gamma_t in &t_grid {
            let config = PenaltyConfig { gamma_st, gamma_t, ..base.clone() };
            let mut total_squared_error = 0.0;
            for fold in 0..folds {
                let train: Vec<RepeatSalePair> = pairs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| fold_of[*i] != fold)
                    .map(|(_, pr)| *pr)
                    .collect();
                let design = build_design(&train, p, t)?;
                let fit = solve_penalized(&design, penalty, trend, &config)?;
                for (i, pair) in pairs.iter().enumerate() {
                    if fold_of[i] != fold {
                        continue;
                    }
                    let index = fit.index_for(pair.region_index);
                    let predicted = index[pair.second_time] - index[pair.first_time];
                    let err = pair.log_return - predicted;
                    total_squared_error += err * err;
                }
            }
            let mse = total_squared_error / n as f64;
            records.push(CvRecord { gamma_st, gamma_t, mean_squared_error: mse });
            let better = match best {
                None => true,
                Some((_, _, incumbent)) => mse <= incumbent,
            };
            if better {
                best = Some((gamma_st, gamma_t, mse));
            }
        }
    }
    let (gamma_st, gamma_t, _) = best.expect("grids are non-empty");
    Ok(GridSearchResult {
        selected: PenaltyConfig { gamma_st, gamma_t, ..base.clone() },
        records,
    })
}

/// One batch's fit and the global region indices its columns map to.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchFit {
    /// Global region index of each local column, ascending.
    pub region_indices: Vec<usize>,
    pub fit: FitResult,
}

/// Split pairs by parent batch, remapping each pair's region index to
/// its position within the batch. Output order follows `batches`.
pub fn batch_pairs(
    pairs: &[RepeatSalePair],
    batches: &[crate::ingest::RegionBatch],
) -> Vec<Vec<RepeatSalePair>> {
    let mut position: alloc::collections::BTreeMap<usize, (usize, usize)> =
        alloc::collections::BTreeMap::new();
    for (b, batch) in batches.iter().enumerate() {
        for (local, &global) in batch.region_indices.iter().enumerate() {
            position.insert(global, (b, local));
        }
    }
    let mut out = vec![Vec::new(); batches.len()];
    for pair in pairs {
        if let Some(&(b, local)) = position.get(&pair.region_index) {
            out[b].push(RepeatSalePair { region_index: local, ..*pair });
        }
    }
    out
}

/// Stitch per-batch fits into one balanced panel, column order given by
/// the global region index. Every region must appear exactly once.
pub fn assemble_panel(
    fits: &[BatchFit],
    regions: &RegionIndex,
    grid: &TimeGrid,
) -> Result<IndexPanel, SolverError> {
    let p = regions.len();
    let t = grid.len();
    let mut seen = vec![false; p];
    let mut values = DMat::zeros(t, p);
    for batch in fits {
        if batch.fit.main_trend.len() != t || batch.fit.deviations.rows() != t {
            return Err(SolverError::DimensionMismatch("batch fit month count != grid length"));
        }
        if batch.fit.deviations.cols() != batch.region_indices.len() {
            return Err(SolverError::DimensionMismatch("batch fit columns != region indices"));
        }
        for (local, &global) in batch.region_indices.iter().enumerate() {
            if global >= p {
                return Err(SolverError::MissingRegion(global));
            }
            if seen[global] {
                return Err(SolverError::DuplicateRegion(global));
            }
            seen[global] = true;
            for k in 0..t {
                values.set(k, global, batch.fit.main_trend[k] + batch.fit.deviations.get(k, local));
            }
        }
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(SolverError::MissingRegion(missing));
    }
    Ok(IndexPanel::new(grid.clone(), regions.codes().to_vec(), values)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{kronecker_penalty, path_laplacian, RegionGraph};
    use crate::time::{Month, TimeGrid};
    use approx::assert_abs_diff_eq;

    fn pair(region: usize, first: usize, second: usize, log_return: f64) -> RepeatSalePair {
        RepeatSalePair { region_index: region, first_time: first, second_time: second, log_return }
    }

    fn setup(p: usize, t: usize, edges: &[(usize, usize)]) -> (SpatioTemporalPenalty, RegionGraph) {
        let spatial = RegionGraph::new(p, edges).unwrap();
        let temporal = path_laplacian(t).unwrap();
        (kronecker_penalty(spatial, temporal.clone()), temporal)
    }

    #[test]
    fn design_rows_encode_pairs() {
        let pairs = [pair(0, 1, 3, 0.5)];
        let design = build_design(&pairs, 2, 4).unwrap();
        // Decode the single row by applying the design to basis vectors.
        let mut row = alloc::vec![0.0; design.param_len()];
        let mut out = [0.0];
        let mut dense_row = Vec::new();
        for j in 0..design.param_len() {
            row.fill(0.0);
            row[j] = 1.0;
            design.apply(&row, &mut out);
            dense_row.push(out[0]);
        }
        // Deviation block of region 0 at T=4: (0,-1,0,1); region 1 block zero;
        // trend block repeats (0,-1,0,1).
        let want = [0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0];
        assert_eq!(dense_row.as_slice(), &want);
    }

    #[test]
    fn design_row_for_months_zero_one() {
        let pairs = [pair(0, 0, 1, 0.1)];
        let design = build_design(&pairs, 1, 3).unwrap();
        let mut theta = alloc::vec![0.0; design.param_len()];
        // Trend block occupies the last T entries; set mu = (0, 1, 0).
        theta[3 + 1] = 1.0;
        let mut out = [0.0];
        design.apply(&theta, &mut out);
        assert_eq!(out[0], 1.0);
    }

    #[test]
    fn design_decode_matches_pairs_on_fixture() {
        // 20 pairs; decode each row from the operator and compare.
        let mut pairs = Vec::new();
        for i in 0..20 {
            let r = i % 3;
            let first = i % 5;
            let second = first + 1 + (i % 4);
            pairs.push(pair(r, first, second.min(9), 0.01 * i as f64));
        }
        let (p, t) = (3, 10);
        let design = build_design(&pairs, p, t).unwrap();
        let mut theta = alloc::vec![0.0; design.param_len()];
        let mut out = alloc::vec![0.0; design.n()];
        for (i, pr) in pairs.iter().enumerate() {
            // Indicator of the pair's (region, month) block entries.
            theta.fill(0.0);
            theta[pr.region_index * t + pr.second_time] = 1.0;
            design.apply(&theta, &mut out);
            assert_eq!(out[i], 1.0);
            theta.fill(0.0);
            theta[pr.region_index * t + pr.first_time] = 1.0;
            design.apply(&theta, &mut out);
            assert_eq!(out[i], -1.0);
        }
    }

    #[test]
    fn out_of_bounds_pairs_rejected() {
        assert!(matches!(
            build_design(&[pair(2, 0, 1, 0.0)], 2, 4),
            Err(SolverError::PairOutOfBounds { region: 2, .. })
        ));
        assert!(matches!(
            build_design(&[pair(0, 3, 3, 0.0)], 2, 4),
            Err(SolverError::PairOutOfBounds { .. })
        ));
        assert!(matches!(
            build_design(&[pair(0, 1, 4, 0.0)], 2, 4),
            Err(SolverError::PairOutOfBounds { .. })
        ));
    }

    #[test]
    fn single_region_index_interpolates_monotonically() {
        // One pair spanning months 0 -> 2 with return g. With p = 1 the
        // deviations vanish and the trend penalty interpolates the gap:
        // mu_1 = mu_2 / 2 and mu_2 = g / (1 + gamma_t / 2).
        let g = 0.3;
        let (penalty, temporal) = setup(1, 3, &[]);
        let design = build_design(&[pair(0, 0, 2, g)], 1, 3).unwrap();
        let gamma_t = 0.1;
        let config = PenaltyConfig::with_gammas(0.0, gamma_t);
        let fit = solve_penalized(&design, &penalty, &temporal, &config).unwrap();
        assert!(fit.converged);
        let index = fit.index_for(0);
        let expected_end = g / (1.0 + gamma_t / 2.0);
        assert_abs_diff_eq!(index[2], expected_end, epsilon = 1e-8);
        assert_abs_diff_eq!(index[1], expected_end / 2.0, epsilon = 1e-8);
        assert!(index[0] == 0.0 && index[1] <= index[2] && index[0] <= index[1]);
        assert_eq!(fit.deviations.max_abs(), 0.0);

        // As gamma_t -> 0 the total rise approaches g.
        let config = PenaltyConfig::with_gammas(0.0, 1e-9);
        let fit = solve_penalized(&design, &penalty, &temporal, &config).unwrap();
        assert_abs_diff_eq!(fit.index_for(0)[2], g, epsilon = 1e-6);
    }

    /// Pairs tracing region-specific noisy trends on a small market.
    fn fixture_pairs(p: usize, t: usize) -> Vec<RepeatSalePair> {
        let mut pairs = Vec::new();
        let level = |r: usize, k: usize| -> f64 {
            0.02 * k as f64 + 0.015 * r as f64 * (k as f64 / t as f64).sin()
        };
        let mut counter = 0usize;
        for r in 0..p {
            for first in 0..t - 1 {
                for gap in [1usize, 3] {
                    let second = first + gap;
                    if second >= t {
                        continue;
                    }
                    counter += 1;
                    let jitter = ((counter * 2654435761) % 1000) as f64 / 1000.0 - 0.5;
                    pairs.push(pair(
                        r,
                        first,
                        second,
                        level(r, second) - level(r, first) + 0.002 * jitter,
                    ));
                }
            }
        }
        pairs
    }

    #[test]
    fn huge_gamma_st_collapses_deviations_onto_trend() {
        let (p, t) = (4, 10);
        let (penalty, temporal) = setup(p, t, &[(0, 1), (1, 2), (2, 3)]);
        let design = build_design(&fixture_pairs(p, t), p, t).unwrap();
        let config = PenaltyConfig::with_gammas(1e8, 1.0);
        let fit = solve_penalized(&design, &penalty, &temporal, &config).unwrap();
        assert!(fit.converged);
        let max_dev = fit.deviations.max_abs();
        let max_trend = fit.main_trend.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_trend > 0.01, "trend should carry the signal, got {max_trend}");
        assert!(
            max_dev <= 1e-3 * max_trend,
            "deviations {max_dev} not collapsed vs trend {max_trend}"
        );
    }

    #[test]
    fn deviation_norm_shrinks_as_gamma_st_grows() {
        let (p, t) = (4, 10);
        let (penalty, temporal) = setup(p, t, &[(0, 1), (1, 2), (2, 3)]);
        let design = build_design(&fixture_pairs(p, t), p, t).unwrap();
        let mut last = f64::INFINITY;
        for gamma_st in [1e-3, 1e-1, 1e1, 1e3, 1e5] {
            let config = PenaltyConfig::with_gammas(gamma_st, 0.5);
            let fit = solve_penalized(&design, &penalty, &temporal, &config).unwrap();
            let norm = fit.deviations.frobenius_norm();
            assert!(norm <= last + 1e-9, "gamma_st={gamma_st}: {norm} > {last}");
            last = norm;
        }
    }

    #[test]
    fn missing_month_is_imputed_between_neighbours() {
        let (p, t) = (3, 8);
        let (penalty, temporal) = setup(p, t, &[(0, 1), (1, 2)]);
        let missing = 4usize;
        let pairs: Vec<RepeatSalePair> = fixture_pairs(p, t)
            .into_iter()
            .filter(|pr| pr.first_time != missing && pr.second_time != missing)
            .collect();
        let design = build_design(&pairs, p, t).unwrap();
        let config = PenaltyConfig::with_gammas(0.5, 0.5);
        let fit = solve_penalized(&design, &penalty, &temporal, &config).unwrap();
        assert!(fit.converged);
        for r in 0..p {
            let index = fit.index_for(r);
            let lo = index[missing - 1].min(index[missing + 1]) - 1e-6;
            let hi = index[missing - 1].max(index[missing + 1]) + 1e-6;
            assert!(
                index[missing] >= lo && index[missing] <= hi,
                "region {r}: {} not within [{lo}, {hi}]",
                index[missing]
            );
        }
    }

    #[test]
    fn gradient_vanishes_at_solution_and_matches_finite_differences() {
        let (p, t) = (3, 6);
        let (penalty, temporal) = setup(p, t, &[(0, 1), (1, 2)]);
        let pairs = fixture_pairs(p, t);
        let design = build_design(&pairs, p, t).unwrap();
        let config = PenaltyConfig::with_gammas(0.7, 0.3);
        let fit = solve_penalized(&design, &penalty, &temporal, &config).unwrap();
        let y_norm: f64 = norm2(&design.observations());
        assert!(
            fit.gradient_norm <= 1e-6 * (1.0 + y_norm),
            "gradient norm {} too large",
            fit.gradient_norm
        );

        // Analytic projected gradient vs central differences at a generic
        // (non-optimal) point, along in-subspace directions.
        let op = NormalOperator {
            design: &design,
            penalty: &penalty,
            trend: &temporal,
            gamma_st: config.gamma_st,
            gamma_t: config.gamma_t,
            alpha_ridge: config.alpha_ridge,
        };
        let len = design.param_len();
        let mut b = alloc::vec![0.0; len];
        design.apply_adjoint(&design.observations(), &mut b);
        op.project(&mut b);
        let mut theta = alloc::vec![0.0; len];
        for (j, v) in theta.iter_mut().enumerate() {
            *v = 0.01 * ((j * 7919 % 13) as f64 - 6.0);
        }
        op.project(&mut theta);
        let grad = projected_gradient(&op, &b, &theta);
        let h = 1e-6;
        for probe in 0..5 {
            let mut direction = alloc::vec![0.0; len];
            for (j, v) in direction.iter_mut().enumerate() {
                *v = (((j + probe * 31) * 2654435761 % 17) as f64 - 8.0) / 8.0;
            }
            op.project(&mut direction);
            let mut plus = theta.clone();
            axpy(h, &direction, &mut plus);
            let mut minus = theta.clone();
            axpy(-h, &direction, &mut minus);
            let fd = (objective_at(&design, &penalty, &temporal, &config, &plus)
                - objective_at(&design, &penalty, &temporal, &config, &minus))
                / (2.0 * h);
            let analytic = dot(&grad, &direction);
            assert_abs_diff_eq!(fd, analytic, epsilon = 1e-4 * (1.0 + analytic.abs()));
        }
    }

    #[test]
    fn repeated_solves_are_bitwise_identical() {
        let (p, t) = (3, 6);
        let (penalty, temporal) = setup(p, t, &[(0, 1), (1, 2)]);
        let design = build_design(&fixture_pairs(p, t), p, t).unwrap();
        let config = PenaltyConfig::with_gammas(0.7, 0.3);
        let a = solve_penalized(&design, &penalty, &temporal, &config).unwrap();
        let b = solve_penalized(&design, &penalty, &temporal, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_identifiable_configurations_are_named() {
        let (penalty, temporal) = setup(3, 4, &[(0, 1)]);
        // Region 2 is isolated and has no pairs.
        let design = build_design(&[pair(0, 0, 1, 0.1), pair(1, 1, 3, 0.2)], 3, 4).unwrap();
        let err = solve_penalized(
            &design,
            &penalty,
            &temporal,
            &PenaltyConfig::with_gammas(1.0, 1.0),
        )
        .unwrap_err();
        assert_eq!(err, SolverError::NonIdentifiableRegion { region: 2 });

        // With gamma_st = 0 even a connected but empty region is stranded.
        let (penalty_full, _) = setup(3, 4, &[(0, 1), (1, 2)]);
        let err = solve_penalized(
            &design,
            &penalty_full,
            &temporal,
            &PenaltyConfig::with_gammas(0.0, 1.0),
        )
        .unwrap_err();
        assert_eq!(err, SolverError::NonIdentifiableRegion { region: 2 });

        // With gamma_t = 0 an untouched month is stranded.
        let design = build_design(&[pair(0, 0, 1, 0.1), pair(1, 1, 3, 0.2)], 2, 5).unwrap();
        let (penalty2, temporal5) = setup(2, 5, &[(0, 1)]);
        let err = solve_penalized(
            &design,
            &penalty2,
            &temporal5,
            &PenaltyConfig::with_gammas(1.0, 0.0),
        )
        .unwrap_err();
        assert_eq!(err, SolverError::NonIdentifiableMonth { month: 2 });
    }

    #[test]
    fn grid_search_returns_single_candidate() {
        let (p, t) = (3, 6);
        let (penalty, temporal) = setup(p, t, &[(0, 1), (1, 2)]);
        let pairs = fixture_pairs(p, t);
        let result = grid_search(
            &pairs,
            &penalty,
            &temporal,
            &[0.5],
            &[2.0],
            4,
            &PenaltyConfig::default(),
            7,
        )
        .unwrap();
        assert_eq!(result.selected.gamma_st, 0.5);
        assert_eq!(result.selected.gamma_t, 2.0);
        assert_eq!(result.records.len(), 1);
    }

    #[test]
    fn grid_search_validates_folds() {
        let (penalty, temporal) = setup(2, 4, &[(0, 1)]);
        let pairs = [pair(0, 0, 1, 0.1), pair(1, 1, 3, 0.2)];
        assert_eq!(
            grid_search(&pairs, &penalty, &temporal, &[1.0], &[1.0], 1, &PenaltyConfig::default(), 0)
                .unwrap_err(),
            SolverError::TooFewFolds(1)
        );
        assert!(matches!(
            grid_search(&pairs, &penalty, &temporal, &[1.0], &[1.0], 5, &PenaltyConfig::default(), 0)
                .unwrap_err(),
            SolverError::EmptyFold { .. }
        ));
        assert_eq!(
            grid_search(&pairs, &penalty, &temporal, &[], &[1.0], 2, &PenaltyConfig::default(), 0)
                .unwrap_err(),
            SolverError::EmptyGrid
        );
    }

    #[test]
    fn panel_assembly_orders_and_anchors_columns() {
        let grid = TimeGrid::new(Month::new(2010, 1).unwrap(), 4).unwrap();
        let regions =
            RegionIndex::new(&[("A", "P1"), ("B", "P1"), ("C", "P2"), ("D", "P2")]).unwrap();
        let fit = |offset: f64| FitResult {
            main_trend: alloc::vec![0.0, 0.1 + offset, 0.2, 0.3],
            deviations: DMat::from_fn(4, 2, |k, r| {
                if k == 0 {
                    0.0
                } else {
                    (r as f64 - 0.5) * 0.01 * k as f64
                }
            }),
            objective_value: 0.0,
            converged: true,
            iterations: 1,
            residual_norm: 0.0,
            gradient_norm: 0.0,
        };
        let fits = [
            BatchFit { region_indices: alloc::vec![2, 3], fit: fit(0.05) },
            BatchFit { region_indices: alloc::vec![0, 1], fit: fit(0.0) },
        ];
        let panel = assemble_panel(&fits, &regions, &grid).unwrap();
        assert_eq!(panel.region_codes()[2], "C");
        // Column C equals batch-2 trend plus its local column 0.
        assert_abs_diff_eq!(panel.values().get(1, 2), 0.15 - 0.005, epsilon = 1e-12);
        for r in 0..4 {
            assert_eq!(panel.values().get(0, r), 0.0);
        }

        let dup = [
            BatchFit { region_indices: alloc::vec![0, 1], fit: fit(0.0) },
            BatchFit { region_indices: alloc::vec![1, 2], fit: fit(0.0) },
        ];
        assert_eq!(
            assemble_panel(&dup, &regions, &grid).unwrap_err(),
            SolverError::DuplicateRegion(1)
        );
        let missing = [BatchFit { region_indices: alloc::vec![0, 1], fit: fit(0.0) }];
        assert_eq!(
            assemble_panel(&missing, &regions, &grid).unwrap_err(),
            SolverError::MissingRegion(2)
        );
    }

    #[test]
    fn single_region_batch_panel_is_trend_plus_deviation() {
        let grid = TimeGrid::new(Month::new(2010, 1).unwrap(), 3).unwrap();
        let regions = RegionIndex::new(&[("A", "P")]).unwrap();
        let fit = FitResult {
            main_trend: alloc::vec![0.0, 0.2, 0.4],
            deviations: DMat::zeros(3, 1),
            objective_value: 0.0,
            converged: true,
            iterations: 0,
            residual_norm: 0.0,
            gradient_norm: 0.0,
        };
        let fits = [BatchFit { region_indices: alloc::vec![0], fit }];
        let panel = assemble_panel(&fits, &regions, &grid).unwrap();
        assert_eq!(panel.values().column(0), alloc::vec![0.0, 0.2, 0.4]);
    }

    #[test]
    fn batch_pairs_remaps_region_indices() {
        let regions = RegionIndex::new(&[
            ("A", "P1"),
            ("B", "P2"),
            ("C", "P1"),
            ("D", "P2"),
        ])
        .unwrap();
        let batches = regions.batches();
        // Codes sort to A,B,C,D; P1 holds {0, 2}, P2 holds {1, 3}.
        let pairs = [
            pair(0, 0, 1, 0.1),
            pair(1, 1, 2, 0.2),
            pair(2, 0, 2, 0.3),
            pair(3, 1, 3, 0.4),
            pair(0, 2, 3, 0.5),
        ];
        let split = batch_pairs(&pairs, &batches);
        assert_eq!(split.len(), 2);
        let p1: Vec<(usize, f64)> =
            split[0].iter().map(|q| (q.region_index, q.log_return)).collect();
        assert_eq!(p1, alloc::vec![(0, 0.1), (1, 0.3), (0, 0.5)]);
        let p2: Vec<(usize, f64)> =
            split[1].iter().map(|q| (q.region_index, q.log_return)).collect();
        assert_eq!(p2, alloc::vec![(0, 0.2), (1, 0.4)]);
    }
}
