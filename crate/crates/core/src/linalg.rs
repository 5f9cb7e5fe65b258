//! Small dense linear algebra: row-major matrices, products, a rank-revealing
//! least-squares solver and extreme singular values.
//!
//! Nothing here is tuned for large problems. Supports handled by the greedy
//! engine are a few dozen columns wide, and the singular value routine only
//! backs the restricted-eigenvalue diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative threshold on `|R_tt| / |R_00|` below which a pivoted QR column is
/// treated as numerically dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

pub type DenseVector = Vec<f64>;

/// Row-major dense matrix with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for DenseMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        DenseMatrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl From<DenseMatrix> for RawMatrix {
    fn from(m: DenseMatrix) -> Self {
        RawMatrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "{} entries supplied for a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Builds a matrix from nested rows. An empty slice gives a 0x0 matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
            return Err(Error::dims(format!(
                "row {} has {} entries, expected {}",
                i,
                r.len(),
                cols
            )));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    /// Squared Euclidean norm of every column.
    pub fn column_norms_sq(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (acc, v) in out.iter_mut().zip(self.row(r)) {
                *acc += v * v;
            }
        }
        out
    }

    pub fn select_columns(&self, cols: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        DenseMatrix {
            rows: self.rows,
            cols: cols.len(),
            data,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        DenseMatrix {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.get(r, c);
            }
        }
        DenseMatrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// `A x`
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::dims(format!(
                "vector of length {} times {}x{} matrix",
                x.len(),
                self.rows,
                self.cols
            )));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }

    /// `Aᵀ y`
    pub fn tr_mul_vec(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(Error::dims(format!(
                "transpose product with vector of length {} for {}x{} matrix",
                y.len(),
                self.rows,
                self.cols
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (acc, v) in out.iter_mut().zip(self.row(r)) {
                *acc += v * yr;
            }
        }
        Ok(out)
    }

    /// `A x` where `x` is given sparsely as (column, value) pairs.
    pub fn mul_sparse(&self, entries: &[(usize, f64)]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                let row = self.row(r);
                entries.iter().map(|&(c, v)| row[c] * v).sum()
            })
            .collect()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Householder reflector `I - 2 v vᵀ` acting on indices `start..`.
struct Reflector {
    start: usize,
    v: Vec<f64>,
}

impl Reflector {
    /// Reflector mapping `x` onto a multiple of the first unit vector, plus the
    /// resulting leading value. `None` means `x` is already in that form.
    fn annihilate(start: usize, x: &[f64]) -> (Option<Reflector>, f64) {
        let norm = norm_sq(x).sqrt();
        if norm == 0.0 {
            return (None, 0.0);
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vn = norm_sq(&v).sqrt();
        if vn == 0.0 {
            return (None, x[0]);
        }
        v.iter_mut().for_each(|e| *e /= vn);
        (Some(Reflector { start, v }), alpha)
    }

    fn apply(&self, y: &mut [f64]) {
        let tail = &mut y[self.start..self.start + self.v.len()];
        let d = 2.0 * dot(&self.v, tail);
        for (t, v) in tail.iter_mut().zip(&self.v) {
            *t -= d * v;
        }
    }
}

/// Householder QR of a column-major matrix, optionally with column pivoting.
/// On return `cols` holds R in its upper triangle.
fn householder_qr(cols: &mut [Vec<f64>], pivot: bool) -> (Vec<Reflector>, Vec<usize>) {
    let k = cols.len();
    let m = cols.first().map_or(0, Vec::len);
    let mut perm: Vec<usize> = (0..k).collect();
    let mut reflectors = Vec::with_capacity(m.min(k));
    for t in 0..m.min(k) {
        if pivot {
            let mut best = t;
            let mut best_norm = -1.0;
            for (c, col) in cols.iter().enumerate().skip(t) {
                let nrm = norm_sq(&col[t..]);
                if nrm > best_norm {
                    best_norm = nrm;
                    best = c;
                }
            }
            cols.swap(t, best);
            perm.swap(t, best);
        }
        let (refl, alpha) = Reflector::annihilate(t, &cols[t][t..]);
        if let Some(h) = &refl {
            for col in cols.iter_mut().skip(t + 1) {
                h.apply(col);
            }
        }
        cols[t][t] = alpha;
        for e in cols[t][t + 1..].iter_mut() {
            *e = 0.0;
        }
        if let Some(h) = refl {
            reflectors.push(h);
        }
    }
    (reflectors, perm)
}

/// Minimizer of `‖A x − b‖₂`; the minimum-norm one when `A` is rank deficient.
///
/// Uses a column-pivoted Householder QR to find the numerical rank, followed by
/// a second QR of the leading trapezoid (complete orthogonal decomposition)
/// when the rank is short.
pub fn solve_least_squares(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let (m, k) = (a.nrows(), a.ncols());
    if b.len() != m {
        return Err(Error::dims(format!(
            "right-hand side of length {} for a {}x{} system",
            b.len(),
            m,
            k
        )));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("right-hand side"));
    }
    if m == 0 || k == 0 {
        return Ok(vec![0.0; k]);
    }

    let mut cols: Vec<Vec<f64>> = (0..k).map(|c| a.column(c)).collect();
    let (reflectors, perm) = householder_qr(&mut cols, true);

    let lead = cols[0][0].abs();
    let rank = if lead == 0.0 {
        0
    } else {
        (0..m.min(k))
            .take_while(|&t| cols[t][t].abs() > RANK_TOLERANCE * lead)
            .count()
    };
    let mut x = vec![0.0; k];
    if rank == 0 {
        return Ok(x);
    }

    let mut qtb = b.to_vec();
    for h in &reflectors {
        h.apply(&mut qtb);
    }
    let rhs = &qtb[..rank];

    let z = if rank == k {
        back_substitute(&cols, rhs)
    } else {
        // Leading block is [R11 R12] (rank x k). Factor its transpose so the
        // system becomes S^T u = rhs with z = Q2 [u; 0].
        let mut trap_t: Vec<Vec<f64>> = (0..rank)
            .map(|row| {
                (0..k)
                    .map(|c| if row <= c { cols[c][row] } else { 0.0 })
                    .collect()
            })
            .collect();
        let (refl2, _) = householder_qr(&mut trap_t, false);
        let mut u = vec![0.0; k];
        for i in 0..rank {
            let mut s = rhs[i];
            for (j, uj) in u.iter().enumerate().take(i) {
                s -= trap_t[i][j] * uj;
            }
            u[i] = s / trap_t[i][i];
        }
        for h in refl2.iter().rev() {
            h.apply(&mut u);
        }
        u
    };
    for (pos, &col) in perm.iter().enumerate() {
        x[col] = z[pos];
    }
    Ok(x)
}

fn back_substitute(r_cols: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut z = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for (j, zj) in z.iter().enumerate().skip(i + 1) {
            s -= r_cols[j][i] * zj;
        }
        z[i] = s / r_cols[i][i];
    }
    z
}

/// Smallest and largest singular values, by one-sided Jacobi rotations on the
/// columns. Intended for narrow matrices.
pub fn singular_value_extremes(a: &DenseMatrix) -> Result<(f64, f64)> {
    let sv = singular_values(a)?;
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let max = sv.iter().copied().fold(0.0, f64::max);
    Ok((min, max))
}

/// All `ncols` singular values (zeros included when `nrows < ncols`), unordered.
pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Err(Error::invalid("singular values of an empty matrix"));
    }
    let k = a.ncols();
    let mut cols: Vec<Vec<f64>> = (0..k).map(|c| a.column(c)).collect();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let alpha = norm_sq(&cols[p]);
                let beta = norm_sq(&cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(q);
                for (xp, xq) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                    let (u, v) = (*xp, *xq);
                    *xp = c * u - s * v;
                    *xq = s * u + c * v;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    Ok(cols.iter().map(|c| norm_sq(c).sqrt()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, m: usize, k: usize) -> DenseMatrix {
        let data = (0..m * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        DenseMatrix::new(m, k, data).unwrap()
    }

    /// Square roots of the extreme eigenvalues of AᵀA from nalgebra.
    fn eigen_oracle(a: &DenseMatrix) -> (f64, f64) {
        let na = DMatrix::from_row_slice(a.nrows(), a.ncols(), a.as_slice());
        let gram = na.transpose() * &na;
        let eig = gram.symmetric_eigen().eigenvalues;
        let lo = eig.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
        let hi = eig.iter().copied().fold(0.0, f64::max);
        (lo.sqrt(), hi.sqrt())
    }

    #[test]
    fn identity_system() {
        let x = solve_least_squares(&DenseMatrix::identity(2), &[3.0, -1.0]).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-15 && (x[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_column_average() {
        // (AᵀA)⁻¹Aᵀb = (1 + 3) / 2
        let a = DenseMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let x = solve_least_squares(&a, &[1.0, 3.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_column_gives_zero() {
        let a = DenseMatrix::zeros(2, 1);
        assert_eq!(solve_least_squares(&a, &[1.0, 1.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn duplicate_columns_split_evenly() {
        // Minimum-norm solution of x1 + x2 = 2 is (1, 1).
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let x = solve_least_squares(&a, &[2.0, 2.0]).unwrap();
        assert!(
            (x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12,
            "{x:?}"
        );
    }

    #[test]
    fn rank_deficient_matches_pseudoinverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = random_matrix(&mut rng, 7, 3);
        // Fourth and fifth columns are combinations of the first three.
        let rows: Vec<Vec<f64>> = (0..7)
            .map(|r| {
                let v = base.row(r);
                vec![v[0], v[1], v[2], v[0] - 2.0 * v[1], 0.5 * v[2] + v[0]]
            })
            .collect();
        let a = DenseMatrix::from_rows(&rows).unwrap();
        let b: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = solve_least_squares(&a, &b).unwrap();

        let na = DMatrix::from_row_slice(7, 5, a.as_slice());
        let pinv = na.clone().pseudo_inverse(1e-10).unwrap();
        let expected = pinv * nalgebra::DVector::from_vec(b);
        for i in 0..5 {
            assert!((x[i] - expected[i]).abs() < 1e-9, "{x:?} vs {expected:?}");
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = DenseMatrix::identity(3);
        assert!(matches!(
            solve_least_squares(&a, &[1.0, 2.0]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn wide_system_is_minimum_norm() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0, 1.0]]).unwrap();
        let x = solve_least_squares(&a, &[3.0]).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constructor_checks() {
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::new(1, 1, vec![f64::NAN]).is_err());
        assert!(DenseMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn singular_values_of_simple_matrices() {
        assert_eq!(
            singular_value_extremes(&DenseMatrix::identity(3)).unwrap(),
            (1.0, 1.0)
        );
        let (lo, hi) = singular_value_extremes(&DenseMatrix::diag(&[1.0, 2.0])).unwrap();
        assert!((lo - 1.0).abs() < 1e-15 && (hi - 2.0).abs() < 1e-15);
        assert!(singular_value_extremes(&DenseMatrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn singular_values_match_eigen_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = random_matrix(&mut rng, 4, 2);
            let (lo, hi) = singular_value_extremes(&a).unwrap();
            let (olo, ohi) = eigen_oracle(&a);
            assert!((lo - olo).abs() < 1e-10, "{lo} vs {olo}");
            assert!((hi - ohi).abs() < 1e-10, "{hi} vs {ohi}");
        }
    }

    proptest! {
        #[test]
        fn residual_is_orthogonal_to_columns(
            seed in any::<u64>(), m in 3usize..12, k in 1usize..4,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, m.max(k), k);
            let b: Vec<f64> = (0..a.nrows()).map(|_| rng.random_range(-5.0..5.0)).collect();
            let x = solve_least_squares(&a, &b).unwrap();
            let ax = a.mul_vec(&x).unwrap();
            let resid: Vec<f64> = ax.iter().zip(&b).map(|(p, q)| p - q).collect();
            let g = a.tr_mul_vec(&resid).unwrap();
            let bnorm = norm_sq(&b).sqrt();
            let worst = g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            prop_assert!(worst <= 1e-8 * (1.0 + bnorm));
        }

        #[test]
        fn row_permutation_keeps_singular_values(seed in any::<u64>(), m in 2usize..8, k in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, m.max(k), k);
            let mut order: Vec<usize> = (0..a.nrows()).collect();
            order.reverse();
            order.rotate_left(seed as usize % a.nrows());
            let (lo1, hi1) = singular_value_extremes(&a).unwrap();
            let (lo2, hi2) = singular_value_extremes(&a.select_rows(&order)).unwrap();
            prop_assert!((lo1 - lo2).abs() <= 1e-10 && (hi1 - hi2).abs() <= 1e-10);
        }
    }
}
