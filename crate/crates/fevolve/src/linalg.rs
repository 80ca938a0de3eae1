//! Shared dense/banded linear algebra helpers.
//!
//! Everything here is deterministic: iterative routines start from a fixed
//! all-ones vector so repeated runs produce identical output.

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a banded SPD matrix.
///
/// The factor of a matrix with half-bandwidth `bw` has the same band, so the
/// factorization costs O(n * bw^2) instead of O(n^3). Grids ordered
/// lexicographically produce exactly this structure.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    /// Row-major band storage: entry (i, j) with i-bw <= j <= i lives at
    /// data[i * (bw + 1) + (j + bw - i)].
    data: Vec<f64>,
}

/// Half-bandwidth of a dense symmetric matrix (max |i-j| over nonzeros).
pub fn half_bandwidth(a: &DMatrix<f64>) -> usize {
    let n = a.nrows();
    let mut bw = 0;
    for i in 0..n {
        for j in 0..i {
            if a[(i, j)] != 0.0 {
                bw = bw.max(i - j);
                break;
            }
        }
    }
    bw
}

impl BandedCholesky {
    /// Factor a dense SPD matrix, exploiting its band structure.
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let bw = half_bandwidth(a);
        let stride = bw + 1;
        let mut data = vec![0.0; n * stride];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = a[(i, j)];
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    s -= data[i * stride + (k + bw - i)] * data[j * stride + (k + bw - j)];
                }
                if j < i {
                    data[i * stride + (j + bw - i)] = s / data[j * stride + bw];
                } else {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::FactorizationFailed { pivot: i, value: s });
                    }
                    data[i * stride + bw] = s.sqrt();
                }
            }
        }
        Ok(Self { n, bw, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn l(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.bw + 1) + (j + self.bw - i)]
    }

    /// y = L x.
    pub fn apply_l(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = 0.0;
            for j in lo..=i {
                s += self.l(i, j) * x[j];
            }
            y[i] = s;
        }
        y
    }

    /// y = L^T x.
    pub fn apply_lt(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                y[j] += self.l(i, j) * x[i];
            }
        }
        y
    }

    /// Solve L y = b in place.
    pub fn solve_l_in_place(&self, b: &mut DVector<f64>) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = b[i];
            for j in lo..i {
                s -= self.l(i, j) * b[j];
            }
            b[i] = s / self.l(i, i);
        }
    }

    /// Solve L^T x = b in place.
    pub fn solve_lt_in_place(&self, b: &mut DVector<f64>) {
        for i in (0..self.n).rev() {
            let hi = (i + self.bw).min(self.n - 1);
            let mut s = b[i];
            for j in (i + 1)..=hi {
                s -= self.l(j, i) * b[j];
            }
            b[i] = s / self.l(i, i);
        }
    }

    /// Solve (L L^T) x = b.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_l_in_place(&mut x);
        self.solve_lt_in_place(&mut x);
        x
    }
}

/// Largest eigenvalue (in magnitude) of a symmetric positive operator given
/// as a matvec closure. Deterministic all-ones start.
pub fn power_iteration<F>(n: usize, apply: F, tol: f64, max_iter: usize) -> (f64, bool)
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut v = DVector::from_element(n, 1.0);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let w = apply(&v);
        let nw = w.norm();
        if nw == 0.0 {
            return (0.0, true);
        }
        let new_lambda = v.dot(&w);
        v = w / nw;
        if (new_lambda - lambda).abs() <= tol * new_lambda.abs().max(1.0) {
            return (new_lambda, true);
        }
        lambda = new_lambda;
    }
    (lambda, false)
}

/// Extremal eigenvalues (min, max) of a symmetric operator via Lanczos with
/// full reorthogonalization. Deterministic all-ones start; stops early on
/// breakdown. Much faster than power iteration on clustered spectra.
pub fn lanczos_extremal<F>(n: usize, apply: F, steps: usize) -> (f64, f64)
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let steps = steps.min(n);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(steps);
    let mut alphas = Vec::with_capacity(steps);
    let mut betas = Vec::with_capacity(steps);
    let mut q = DVector::from_element(n, 1.0);
    q /= q.norm();
    basis.push(q.clone());
    for k in 0..steps {
        let mut w = apply(&basis[k]);
        let alpha = basis[k].dot(&w);
        alphas.push(alpha);
        w -= &basis[k] * alpha;
        if k > 0 {
            w -= &basis[k - 1] * betas[k - 1];
        }
        // full reorthogonalization keeps the small tridiagonal faithful
        for b in &basis {
            let c = b.dot(&w);
            w -= b * c;
        }
        let beta = w.norm();
        if beta < 1e-14 || k + 1 == steps {
            break;
        }
        betas.push(beta);
        basis.push(w / beta);
    }
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = t.symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// All eigenvalues of the generalized symmetric problem S x = lambda M x,
/// sorted ascending. Dense path: M = L L^T, then eig(L^-1 S L^-T).
pub fn generalized_symmetric_eigenvalues(
    s: &DMatrix<f64>,
    m: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let chol = BandedCholesky::factor(m)?;
    let n = s.nrows();
    // C = L^-1 S L^-T, built column by column.
    let mut c = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut col: DVector<f64> = s.column(j).into_owned();
        chol.solve_l_in_place(&mut col);
        c.set_column(j, &col);
    }
    let mut ct = c.transpose();
    for j in 0..n {
        let mut col: DVector<f64> = ct.column(j).into_owned();
        chol.solve_l_in_place(&mut col);
        ct.set_column(j, &col);
    }
    // symmetrize against rounding before the eigensolve
    let sym = (&ct + ct.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).expect("non-finite eigenvalue"));
    Ok(vals)
}

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_01(n: usize) -> Vec<(f64, f64)> {
    // nodes/weights on [-1, 1]
    let base: Vec<(f64, f64)> = match n {
        1 => vec![(0.0, 2.0)],
        2 => {
            let a = 1.0 / 3.0f64.sqrt();
            vec![(-a, 1.0), (a, 1.0)]
        }
        3 => {
            let a = (3.0f64 / 5.0).sqrt();
            vec![(-a, 5.0 / 9.0), (0.0, 8.0 / 9.0), (a, 5.0 / 9.0)]
        }
        4 => {
            let a = (3.0 / 7.0 - 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
            let b = (3.0 / 7.0 + 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
            let wa = (18.0 + 30.0f64.sqrt()) / 36.0;
            let wb = (18.0 - 30.0f64.sqrt()) / 36.0;
            vec![(-b, wb), (-a, wa), (a, wa), (b, wb)]
        }
        5 => {
            let a = (5.0 - 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
            let b = (5.0 + 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
            let wa = (322.0 + 13.0 * 70.0f64.sqrt()) / 900.0;
            let wb = (322.0 - 13.0 * 70.0f64.sqrt()) / 900.0;
            vec![
                (-b, wb),
                (-a, wa),
                (0.0, 128.0 / 225.0),
                (a, wa),
                (b, wb),
            ]
        }
        _ => panic!("gauss rule with {n} points not tabulated"),
    };
    base.into_iter()
        .map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect()
}

/// Least-squares slope of log(err) against log(h). Returns +inf when every
/// error vanishes (the field is reproduced exactly).
pub fn fit_log_slope(hs: &[f64], errs: &[f64]) -> f64 {
    assert_eq!(hs.len(), errs.len());
    if errs.iter().all(|&e| e == 0.0) {
        return f64::INFINITY;
    }
    let pairs: Vec<(f64, f64)> = hs
        .iter()
        .zip(errs)
        .filter(|&(_, &e)| e > 0.0)
        .map(|(&h, &e)| (h.ln(), e.ln()))
        .collect();
    let n = pairs.len() as f64;
    let sx: f64 = pairs.iter().map(|p| p.0).sum();
    let sy: f64 = pairs.iter().map(|p| p.1).sum();
    let sxx: f64 = pairs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pairs.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Cumulative integral of sampled vector values on a uniform time grid.
///
/// Quadratic (Simpson-type) panels: the sub-interval [t_{n-1}, t_n] is
/// integrated with the parabola through the three nearest samples, so partial
/// sums at even nodes reproduce composite Simpson exactly and all nodes keep
/// fourth-order accuracy. Needs at least three samples.
pub fn cumulative_quadrature<T>(values: &[DVector<T>], dt: f64) -> Vec<DVector<T>>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let n = values.len();
    assert!(n >= 3, "cumulative quadrature needs at least 3 samples");
    let dim = values[0].len();
    let c = T::from_real(dt / 12.0);
    let mut out = Vec::with_capacity(n);
    out.push(DVector::zeros(dim));
    // first panel from the leading parabola
    let i1 = (&values[0] * T::from_real(5.0) + &values[1] * T::from_real(8.0)
        - &values[2])
        * c;
    out.push(i1);
    for k in 2..n {
        let inc = (&values[k] * T::from_real(5.0) + &values[k - 1] * T::from_real(8.0)
            - &values[k - 2])
            * c;
        out.push(&out[k - 1] + inc);
    }
    out
}

/// Smallest singular value of a dense matrix; 0 when singular.
pub fn smallest_singular_value(a: &DMatrix<f64>) -> f64 {
    let svd = a.clone().svd(false, false);
    svd.singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
