//! Least squares on z-scored anthropometric designs.
//!
//! Columns are standardized with training statistics, so the Gram matrix
//! `ZᵀZ` is shared by every per-facet fit and each fit only needs the
//! projection `Zᵀ(Y − Ȳ)`. Because z-scored columns have zero mean, the
//! intercept of any subset fit is simply `Ȳ`.

use nalgebra::{DMatrix, DVector, SMatrix};

use crate::anthropometry::{ColumnStats, ParameterMatrix, PARAM_COUNT};
use crate::error::{Error, Result};

pub type Gram = SMatrix<f64, PARAM_COUNT, PARAM_COUNT>;

/// Smallest acceptable pivot of the subset Gram matrix relative to its
/// largest diagonal entry.
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Design {
    stats: ColumnStats,
    /// n×19, zero-variance columns are all zeros.
    z: DMatrix<f64>,
    gram: Gram,
}

impl Design {
    pub fn new(x: &ParameterMatrix) -> Self {
        Self::with_stats(x, x.stats())
    }

    pub fn with_stats(x: &ParameterMatrix, stats: ColumnStats) -> Self {
        let n = x.len();
        let z = DMatrix::from_fn(n, PARAM_COUNT, |i, j| stats.z(j, x.row(i)[j]));
        let zt = z.transpose();
        let g = &zt * &z;
        let gram = Gram::from_fn(|i, j| g[(i, j)]);
        Design { stats, z, gram }
    }

    pub fn stats(&self) -> &ColumnStats {
        &self.stats
    }

    pub fn rows(&self) -> usize {
        self.z.nrows()
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn gram(&self) -> &Gram {
        &self.gram
    }

    pub fn varying(&self, j: usize) -> bool {
        self.stats.std[j] > 0.0
    }

    pub fn z_row(&self, values: &[f64; PARAM_COUNT]) -> [f64; PARAM_COUNT] {
        std::array::from_fn(|j| self.stats.z(j, values[j]))
    }

    /// Column means of `y` (n×r) and the projection `Zᵀ(y − ȳ)` (19×r).
    pub fn project(&self, y: &DMatrix<f64>) -> Projection {
        let n = y.nrows() as f64;
        let means = DVector::from_fn(y.ncols(), |c, _| y.column(c).sum() / n);
        let mut centered = y.clone();
        for (c, mut col) in centered.column_iter_mut().enumerate() {
            col.add_scalar_mut(-means[c]);
        }
        Projection {
            means,
            zty: self.z.tr_mul(&centered),
        }
    }

    /// Weights (|cols|×r) of the least-squares fit on the listed columns.
    /// Zero-variance columns get weight 0; linearly dependent varying columns
    /// are an error naming them.
    pub fn fit(&self, projection: &Projection, cols: &[usize]) -> Result<DMatrix<f64>> {
        let active: Vec<usize> = cols.iter().copied().filter(|&j| self.varying(j)).collect();
        let solved = self.solve_strict(&active, &projection.zty)?;
        let mut out = DMatrix::zeros(cols.len(), projection.zty.ncols());
        let mut next = 0;
        for (slot, &j) in cols.iter().enumerate() {
            if self.varying(j) {
                out.set_row(slot, &solved.row(next));
                next += 1;
            }
        }
        Ok(out)
    }

    fn solve_strict(&self, active: &[usize], zty: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let s = active.len();
        if s == 0 {
            return Ok(DMatrix::zeros(0, zty.ncols()));
        }
        let g = DMatrix::from_fn(s, s, |a, b| self.gram[(active[a], active[b])]);
        let rhs = DMatrix::from_fn(s, zty.ncols(), |a, c| zty[(active[a], c)]);
        let max_diag = (0..s).map(|a| g[(a, a)]).fold(0.0, f64::max);
        match g.clone().cholesky() {
            Some(chol) => {
                let min_pivot = (0..s).map(|a| chol.l_dirty()[(a, a)].powi(2)).fold(f64::INFINITY, f64::min);
                if min_pivot < RANK_TOLERANCE * max_diag {
                    return Err(self.rank_error(active));
                }
                Ok(chol.solve(&rhs))
            }
            None => Err(self.rank_error(active)),
        }
    }

    fn rank_error(&self, active: &[usize]) -> Error {
        let mut columns = Vec::new();
        for (a, &i) in active.iter().enumerate() {
            for &j in &active[a + 1..] {
                let corr = self.gram[(i, j)] / (self.gram[(i, i)] * self.gram[(j, j)]).sqrt();
                if corr.abs() > 1.0 - 1e-9 {
                    columns.push(i as u8 + 1);
                    columns.push(j as u8 + 1);
                }
            }
        }
        if columns.is_empty() {
            columns = active.iter().map(|&j| j as u8 + 1).collect();
        }
        columns.sort_unstable();
        columns.dedup();
        Error::RankDeficient { columns }
    }
}

/// Target statistics needed by [`Design::fit`].
#[derive(Debug, Clone)]
pub struct Projection {
    pub means: DVector<f64>,
    pub zty: DMatrix<f64>,
}

/// Minimum-norm least-squares solution of `a·x = b` via SVD, for designs
/// that may legitimately contain dependent columns.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = (max_sv * 1e-10).max(f64::MIN_POSITIVE);
    svd.solve(b, eps).unwrap_or_else(|_| DVector::zeros(a.ncols()))
}
