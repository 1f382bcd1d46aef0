//! Dense real-matrix kernels.
//!
//! Everything here works on small row-major matrices (n up to about a dozen).
//! Nothing is tuned for size; the kernels favor being easy to check.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite matrix entry {bad}")));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; use
    /// [`Mat::try_from_rows`] for untrusted data.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        Self::try_from_rows(rows).expect("ragged or non-finite rows")
    }

    pub fn try_from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != c {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {c}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(r, c, data)
    }

    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Induced infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        self.data
            .chunks(self.cols.max(1))
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `(S + Sᵀ)/2`.
    pub fn symmetrize(&self) -> Self {
        let t = self.transpose();
        (self + &t).scale(0.5)
    }

    pub fn asymmetry(&self) -> f64 {
        (self - &self.transpose()).norm_inf()
    }

    /// Column-stacking vectorization.
    pub fn vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                v.push(self[(i, j)]);
            }
        }
        v
    }

    /// Inverse of [`Mat::vec`]: fills an `rows × cols` matrix column by column.
    pub fn unvec(v: &[f64], rows: usize, cols: usize) -> Result<Self> {
        if v.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "cannot unvec {} entries into {rows}x{cols}",
                v.len()
            )));
        }
        let mut m = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m[(i, j)] = v[j * rows + i];
            }
        }
        Ok(m)
    }

    pub fn matmul(&self, rhs: &Mat) -> Mat {
        assert_eq!(
            self.cols,
            rhs.rows,
            "matmul shape mismatch: {:?} * {:?}",
            self.shape(),
            rhs.shape()
        );
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        self.data
            .chunks(self.cols.max(1))
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `vᵀ S v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        self.mul_vec(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    fn zip_with(&self, rhs: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
        assert_eq!(self.shape(), rhs.shape(), "elementwise shape mismatch");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul for &Mat {
    type Output = Mat;
    fn mul(self, rhs: &Mat) -> Mat {
        self.matmul(rhs)
    }
}

impl Neg for &Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat{}x{}", self.rows, self.cols)?;
        f.debug_list().entries(self.to_rows()).finish()
    }
}

/// Coefficients `1, c₁, …, cₙ` of a monic polynomial, highest power first.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyCoeffs(Vec<f64>);

impl PolyCoeffs {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        match coeffs.first() {
            Some(&1.0) => Ok(Self(coeffs)),
            Some(&lead) => Err(Error::InvalidInput(format!(
                "polynomial must be monic, leading coefficient is {lead}"
            ))),
            None => Err(Error::InvalidInput("empty polynomial".into())),
        }
    }

    pub fn degree(&self) -> usize {
        self.0.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    /// Horner evaluation at a real point.
    pub fn eval(&self, s: f64) -> f64 {
        self.0.iter().fold(0.0, |acc, c| acc * s + c)
    }
}

/// LU factorization with partial pivoting, `PA = LU`.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn factor(a: &Mat) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "LU needs a square matrix, got {:?}",
                a.shape()
            )));
        }
        let n = a.rows;
        let col_scale: Vec<f64> = (0..n)
            .map(|j| (0..n).fold(0.0_f64, |m, i| m.max(a[(i, j)].abs())))
            .collect();
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let (p, pivot) =
                (k..n)
                    .map(|i| (i, lu[i * n + k].abs()))
                    .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            let threshold = 1e-12 * col_scale[k];
            if pivot <= threshold || pivot == 0.0 {
                return Err(Error::SingularMatrix { pivot });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let d = lu[k * n + k];
            for i in (k + 1)..n {
                let f = lu[i * n + k] / d;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for j in (k + 1)..n {
                        lu[i * n + j] -= f * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm, sign })
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }

    pub fn solve(&self, b: &Mat) -> Result<Mat> {
        if b.rows != self.n {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side has {} rows, system has {}",
                b.rows, self.n
            )));
        }
        let mut x = Mat::zeros(b.rows, b.cols);
        for j in 0..b.cols {
            let col: Vec<f64> = (0..b.rows).map(|i| b[(i, j)]).collect();
            for (i, v) in self.solve_vec(&col).into_iter().enumerate() {
                x[(i, j)] = v;
            }
        }
        Ok(x)
    }

    pub fn det(&self) -> f64 {
        (0..self.n).map(|i| self.lu[i * self.n + i]).product::<f64>() * self.sign
    }
}

/// Solves `A x = b` (any number of right-hand-side columns).
pub fn solve_linear(a: &Mat, b: &Mat) -> Result<Mat> {
    Lu::factor(a)?.solve(b)
}

pub fn inverse(a: &Mat) -> Result<Mat> {
    solve_linear(a, &Mat::identity(a.rows))
}

/// Determinant via LU; singular matrices give 0.
pub fn det(a: &Mat) -> Result<f64> {
    match Lu::factor(a) {
        Ok(lu) => Ok(lu.det()),
        Err(Error::SingularMatrix { .. }) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Characteristic polynomial `det(sI − A)` by the Faddeev–LeVerrier recursion.
pub fn char_poly(a: &Mat) -> Result<PolyCoeffs> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "characteristic polynomial needs a square matrix, got {:?}",
            a.shape()
        )));
    }
    let n = a.rows;
    let mut coeffs = Vec::with_capacity(n + 1);
    coeffs.push(1.0);
    // M_k = A M_{k-1} + c_{k-1} I,  c_k = -tr(A M_k) / k
    let mut m = Mat::zeros(n, n);
    for k in 1..=n {
        let mut next = a * &m;
        let c_prev = coeffs[k - 1];
        for i in 0..n {
            next[(i, i)] += c_prev;
        }
        m = next;
        let c = -(a * &m).trace() / k as f64;
        coeffs.push(c);
    }
    PolyCoeffs::new(coeffs)
}

fn check_symmetric(s: &Mat) -> Result<()> {
    if !s.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "symmetric eigenproblem needs a square matrix, got {:?}",
            s.shape()
        )));
    }
    let asym = s.asymmetry();
    if asym > 1e-9 * s.norm_inf() {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as the columns of the second matrix.
pub fn sym_eigen(s: &Mat) -> Result<(Vec<f64>, Mat)> {
    check_symmetric(s)?;
    let n = s.rows;
    let mut a = s.symmetrize();
    let mut v = Mat::identity(n);
    let scale = a.max_abs();
    if scale == 0.0 {
        return Ok((vec![0.0; n], v));
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[(p, q)] * a[(p, q)])
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok((values, vectors))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eig(s: &Mat) -> Result<Vec<f64>> {
    sym_eigen(s).map(|(values, _)| values)
}

pub fn lambda_min(s: &Mat) -> Result<f64> {
    Ok(sym_eig(s)?[0])
}

pub fn lambda_max(s: &Mat) -> Result<f64> {
    Ok(*sym_eig(s)?.last().expect("non-empty matrix"))
}

/// Symmetric PSD square root through the eigen-decomposition; negative
/// eigenvalues (round-off) are clamped to zero.
pub fn sym_sqrt(s: &Mat) -> Result<Mat> {
    let (values, vectors) = sym_eigen(s)?;
    let roots: Vec<f64> = values.iter().map(|v| v.max(0.0).sqrt()).collect();
    Ok(&(&vectors * &Mat::diag(&roots)) * &vectors.transpose())
}

/// Numerical rank from the eigenvalues of the Gram matrix `M Mᵀ`.
pub fn rank(m: &Mat) -> usize {
    let gram = (m * &m.transpose()).symmetrize();
    let values = sym_eig(&gram).expect("Gram matrix is symmetric");
    let top = values.last().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    values.iter().filter(|&&v| v > 1e-10 * top).count()
}

/// Kronecker product.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = Mat::zeros(ra * rb, ca * cb);
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[(i, j)];
            for k in 0..rb {
                for l in 0..cb {
                    out[(i * rb + k, j * cb + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}
