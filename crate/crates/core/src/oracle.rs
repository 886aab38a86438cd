//! Dense reference implementations used only by tests. Everything here
//! is built by direct definition (explicit matrices, explicit rank
//! counting) with none of the matrix-free machinery of the production
//! modules, so agreement between the two paths is meaningful evidence.

use nalgebra::DMatrix;

use crate::ingest::RepeatSalePair;
use crate::linalg::DMat;

pub fn to_na(m: &DMat) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |r, c| m.get(r, c))
}

pub fn from_na(m: &DMatrix<f64>) -> DMat {
    DMat::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

/// Dense design matrix: one row per pair over `p*t` deviation columns
/// followed by `t` trend columns.
pub fn dense_design(pairs: &[RepeatSalePair], p: usize, t: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(pairs.len(), p * t + t);
    for (i, pair) in pairs.iter().enumerate() {
        let block = pair.region_index * t;
        d[(i, block + pair.first_time)] -= 1.0;
        d[(i, block + pair.second_time)] += 1.0;
        d[(i, p * t + pair.first_time)] -= 1.0;
        d[(i, p * t + pair.second_time)] += 1.0;
    }
    d
}

/// Dense graph Laplacian from an undirected edge list.
pub fn dense_laplacian(n: usize, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for &(a, b) in edges {
        l[(a, a)] += 1.0;
        l[(b, b)] += 1.0;
        l[(a, b)] -= 1.0;
        l[(b, a)] -= 1.0;
    }
    l
}

pub fn dense_kronecker(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() * b.nrows(), a.ncols() * b.ncols());
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            for k in 0..b.nrows() {
                for l in 0..b.ncols() {
                    out[(i * b.nrows() + k, j * b.ncols() + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Basis for the identified parameter subspace: deviations are anchored
/// at the first month and sum to zero across regions at every month, the
/// trend is anchored at the first month. Free coordinates are the
/// deviations of all but the last region at months 1.. and the trend at
/// months 1..; the last region's deviation balances the rest.
pub fn reduction_basis(p: usize, t: usize) -> DMatrix<f64> {
    let free = (p - 1) * (t - 1) + (t - 1);
    let mut m = DMatrix::zeros(p * t + t, free);
    let mut column = 0;
    for r in 0..p.saturating_sub(1) {
        for time in 1..t {
            m[(r * t + time, column)] = 1.0;
            m[((p - 1) * t + time, column)] = -1.0;
            column += 1;
        }
    }
    for time in 1..t {
        m[(p * t + time, column)] = 1.0;
        column += 1;
    }
    m
}

pub struct DenseSolution {
    /// Full parameter vector: p*t deviations then t trend values.
    pub theta: Vec<f64>,
    pub objective: f64,
}

/// Minimize the penalized least-squares objective over the identified
/// subspace by explicitly assembling the normal equations in the reduced
/// basis and solving them densely.
#[allow(clippy::too_many_arguments)]
pub fn dense_solve(
    pairs: &[RepeatSalePair],
    p: usize,
    t: usize,
    spatial_edges: &[(usize, usize)],
    gamma_st: f64,
    gamma_t: f64,
    alpha_ridge: f64,
) -> DenseSolution {
    let n_params = p * t + t;
    let design = dense_design(pairs, p, t);
    let y = DMatrix::from_fn(pairs.len(), 1, |i, _| pairs[i].log_return);

    let l_s = dense_laplacian(p, spatial_edges);
    let temporal_edges: Vec<(usize, usize)> = (1..t).map(|i| (i - 1, i)).collect();
    let l_t = dense_laplacian(t, &temporal_edges);

    let mut a = DMatrix::zeros(n_params, n_params);
    a += design.transpose() * &design;
    let kron = dense_kronecker(&l_s, &l_t);
    for i in 0..p * t {
        for j in 0..p * t {
            a[(i, j)] += gamma_st * kron[(i, j)];
        }
        a[(i, i)] += alpha_ridge;
    }
    for i in 0..t {
        for j in 0..t {
            a[(p * t + i, p * t + j)] += gamma_t * l_t[(i, j)];
        }
    }
    let b = design.transpose() * &y;

    let m = reduction_basis(p, t);
    let reduced = m.transpose() * &a * &m;
    let rhs = m.transpose() * &b;
    let x = reduced
        .lu()
        .solve(&rhs)
        .expect("reduced normal equations are nonsingular for identifiable instances");
    let theta_mat = &m * x;
    let theta: Vec<f64> = theta_mat.iter().copied().collect();

    let residual = &y - &design * &theta_mat;
    let alpha = theta_mat.rows(0, p * t).into_owned();
    let mu = theta_mat.rows(p * t, t).into_owned();
    let objective = residual.norm_squared()
        + gamma_st * (alpha.transpose() * &kron * &alpha)[(0, 0)]
        + gamma_t * (mu.transpose() * &l_t * &mu)[(0, 0)]
        + alpha_ridge * alpha.norm_squared();
    DenseSolution { theta, objective }
}

/// Eigendecomposition via nalgebra, sorted descending.
pub fn na_symmetric_eigen(m: &DMat) -> (Vec<f64>, DMat) {
    let eigen = to_na(m).symmetric_eigen();
    let n = m.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eigen.eigenvalues[j]
            .partial_cmp(&eigen.eigenvalues[i])
            .unwrap()
            .then(i.cmp(&j))
    });
    let values: Vec<f64> = order.iter().map(|&i| eigen.eigenvalues[i]).collect();
    let vectors = DMat::from_fn(n, n, |r, c| eigen.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Spearman correlation by definition: O(n^2) average ranks, then the
/// textbook Pearson formula. Complete data only.
pub fn brute_force_spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&a| {
                let below = v.iter().filter(|&&b| b < a).count() as f64;
                let tied = v.iter().filter(|&&b| b == a).count() as f64;
                below + (tied + 1.0) / 2.0
            })
            .collect()
    };
    let rx = rank(x);
    let ry = rank(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Principal angles (degrees) between the column spans of two matrices
/// with the same row count, largest first.
pub fn principal_angles_degrees(a: &DMat, b: &DMat) -> Vec<f64> {
    let qa = thin_q(&to_na(a));
    let qb = thin_q(&to_na(b));
    let cross = qa.transpose() * qb;
    let svd = cross.svd(false, false);
    let mut angles: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|s| s.clamp(-1.0, 1.0).acos().to_degrees())
        .collect();
    angles.sort_by(|x, y| y.partial_cmp(x).unwrap());
    angles
}

fn thin_q(m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = m.ncols().min(m.nrows());
    let qr = m.clone().qr();
    let q = qr.q();
    q.columns(0, k).into_owned()
}
