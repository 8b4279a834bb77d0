//! Linear-algebra support: a bordered banded direct solver for the coupled
//! tangent, and thin wrappers around faer's dense eigen-solvers.

use faer::Mat;
use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Anything a sparse assembly loop can scatter entries into.
pub trait MatrixSink {
    fn add(&mut self, i: usize, j: usize, v: f64);
}

impl MatrixSink for DMatrix<f64> {
    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        self[(i, j)] += v;
    }
}

/// Square matrix with a banded leading block and a dense border:
///
/// ```text
///   [ A  B ]    A: n×n banded (kl sub-, ku super-diagonals)
///   [ C  D ]    B, C, D: dense border of width m
/// ```
///
/// Solved by banded LU with partial pivoting on `A` and a Schur complement on
/// the border.
#[derive(Clone, Debug)]
pub struct BorderedBanded {
    n: usize,
    m: usize,
    kl: usize,
    ku: usize,
    w: usize,
    band: Vec<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl BorderedBanded {
    pub fn new(n: usize, m: usize, kl: usize, ku: usize) -> Self {
        let w = 2 * kl + ku + 1;
        Self {
            n,
            m,
            kl,
            ku,
            w,
            band: vec![0.0; n * w],
            b: DMatrix::zeros(n, m),
            c: DMatrix::zeros(m, n),
            d: DMatrix::zeros(m, m),
        }
    }

    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    pub fn clear(&mut self) {
        self.band.iter_mut().for_each(|x| *x = 0.0);
        self.b.fill(0.0);
        self.c.fill(0.0);
        self.d.fill(0.0);
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.w + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let n = self.n;
        match (i < n, j < n) {
            (true, true) => {
                if j + self.kl < i || j > i + self.ku {
                    0.0
                } else {
                    self.band[self.idx(i, j)]
                }
            }
            (true, false) => self.b[(i, j - n)],
            (false, true) => self.c[(i - n, j)],
            (false, false) => self.d[(i - n, j - n)],
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim(), self.dim(), |i, j| self.get(i, j))
    }

    /// Factorizes the matrix. The receiver is consumed because the band
    /// storage is overwritten by the LU factors.
    pub fn factor(mut self) -> Result<BorderedLu> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut piv = vec![0usize; n];
        let scale = self.band.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-300);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.band[self.idx(k, k)].abs();
            for i in k + 1..=last {
                let v = self.band[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-14 * scale {
                return Err(Error::Singular(format!("zero pivot in banded LU at row {k}")));
            }
            piv[k] = p;
            let jmax = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let (a, b) = (self.idx(k, j), self.idx(p, j));
                    self.band.swap(a, b);
                }
            }
            let pivot = self.band[self.idx(k, k)];
            for i in k + 1..=last {
                let ik = self.idx(i, k);
                let l = self.band[ik] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.band[ik] = l;
                let row_i = i * self.w + self.kl - i;
                let row_k = k * self.w + self.kl - k;
                for j in k + 1..=jmax {
                    self.band[row_i + j] -= l * self.band[row_k + j];
                }
            }
        }
        let mut lu = BorderedLu {
            n,
            m: self.m,
            kl,
            ku,
            w: self.w,
            band: self.band,
            piv,
            y: DMatrix::zeros(n, self.m),
            c: self.c,
            schur: None,
        };
        if lu.m > 0 {
            let mut y = self.b;
            for col in 0..lu.m {
                let mut v: Vec<f64> = y.column(col).iter().copied().collect();
                lu.band_solve(&mut v);
                y.column_mut(col).copy_from_slice(&v);
            }
            let s = self.d - &lu.c * &y;
            let s_lu = s.lu();
            if !s_lu.is_invertible() {
                return Err(Error::Singular("singular border Schur complement".into()));
            }
            lu.y = y;
            lu.schur = Some(s_lu);
        }
        Ok(lu)
    }
}

impl MatrixSink for BorderedBanded {
    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        let n = self.n;
        match (i < n, j < n) {
            (true, true) => {
                debug_assert!(
                    j + self.kl >= i && j <= i + self.ku,
                    "entry ({i},{j}) outside band kl={} ku={}",
                    self.kl,
                    self.ku
                );
                let k = self.idx(i, j);
                self.band[k] += v;
            }
            (true, false) => self.b[(i, j - n)] += v,
            (false, true) => self.c[(i - n, j)] += v,
            (false, false) => self.d[(i - n, j - n)] += v,
        }
    }
}

/// LU factors of a [`BorderedBanded`] matrix.
pub struct BorderedLu {
    n: usize,
    m: usize,
    kl: usize,
    ku: usize,
    w: usize,
    band: Vec<f64>,
    piv: Vec<usize>,
    y: DMatrix<f64>,
    c: DMatrix<f64>,
    schur: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl BorderedLu {
    fn band_solve(&self, b: &mut [f64]) {
        let (n, kl, ku, w) = (self.n, self.kl, self.ku, self.w);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + kl).min(n - 1) {
                    b[i] -= self.band[i * w + k + kl - i] * bk;
                }
            }
        }
        for i in (0..n).rev() {
            let row = i * w + kl - i;
            let mut s = b[i];
            for j in i + 1..=(i + kl + ku).min(n - 1) {
                s -= self.band[row + j] * b[j];
            }
            b[i] = s / self.band[row + i];
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = rhs[..n].to_vec();
        self.band_solve(&mut x);
        if let Some(s) = &self.schur {
            let r2 = DVector::from_column_slice(&rhs[n..]);
            let z = DVector::from_column_slice(&x);
            let x2 = s.solve(&(r2 - &self.c * &z)).expect("invertible Schur complement");
            let corr = &self.y * &x2;
            for i in 0..n {
                x[i] -= corr[i];
            }
            x.extend(x2.iter());
        }
        debug_assert_eq!(x.len(), n + self.m);
        x
    }
}

pub fn to_faer(a: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Generalized symmetric-definite eigenproblem `K φ = λ M φ`.
///
/// Returns ascending eigenvalues and M-orthonormal eigenvectors.
pub fn sym_generalized_eigen(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = k.nrows();
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    // A = L⁻¹ K L⁻ᵀ
    let linv_k = l
        .solve_lower_triangular(k)
        .ok_or_else(|| Error::Singular("mass factor".into()))?;
    let a = l
        .solve_lower_triangular(&linv_k.transpose())
        .ok_or_else(|| Error::Singular("mass factor".into()))?;
    let a = (&a + a.transpose()) * 0.5;
    let evd = to_faer(&a)
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let vals: Vec<f64> = (0..n).map(|i| s[i]).collect();
    let y = DMatrix::from_fn(n, n, |i, j| u[(i, j)]);
    let phi = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::Singular("mass factor".into()))?;
    Ok((vals, phi))
}

/// Eigen-decomposition of a general real matrix.
pub fn general_eigen(a: &DMatrix<f64>) -> Result<(Vec<Complex<f64>>, DMatrix<Complex<f64>>)> {
    let n = a.nrows();
    let evd = to_faer(a).eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let vals = (0..n).map(|i| Complex::new(s[i].re, s[i].im)).collect();
    let vecs = DMatrix::from_fn(n, n, |i, j| {
        let z = u[(i, j)];
        Complex::new(z.re, z.im)
    });
    Ok((vals, vecs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    }

    #[test]
    fn bordered_banded_matches_dense_lu() {
        let (n, m, kl, ku) = (40, 5, 3, 4);
        let mut s = 7u64;
        let mut a = BorderedBanded::new(n, m, kl, ku);
        for i in 0..n + m {
            for j in 0..n + m {
                let in_band = i >= n || j >= n || (j + kl >= i && j <= i + ku);
                if in_band {
                    // weak diagonal so that pivoting is exercised
                    let v = lcg(&mut s) + if i == j { 0.01 } else { 0.0 };
                    a.add(i, j, v);
                }
            }
        }
        let dense = a.to_dense();
        let rhs: Vec<f64> = (0..n + m).map(|_| lcg(&mut s)).collect();
        let x = a.factor().unwrap().solve(&rhs);
        let xd = dense.lu().solve(&DVector::from_vec(rhs)).unwrap();
        for i in 0..n + m {
            assert!((x[i] - xd[i]).abs() < 1e-9 * (1.0 + xd[i].abs()), "{i}: {} {}", x[i], xd[i]);
        }
    }

    #[test]
    fn generalized_eigen_of_diagonal_pencil() {
        let k = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0, 1.0]));
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 4.0]));
        let (vals, phi) = sym_generalized_eigen(&k, &m).unwrap();
        assert!((vals[0] - 0.25).abs() < 1e-12);
        assert!((vals[1] - 4.0).abs() < 1e-12);
        assert!((vals[2] - 9.0).abs() < 1e-12);
        let g = phi.transpose() * &m * &phi;
        assert!((g - DMatrix::identity(3, 3)).norm() < 1e-12);
    }
}
