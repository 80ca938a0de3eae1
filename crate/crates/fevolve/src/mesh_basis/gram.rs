//! Inner-product (Gram) matrices: SPD assembly, triangular factor, weighted
//! inner products and norms.

use nalgebra::{Complex, DMatrix, DVector};
use serde_json::json;

use super::projector::Projector;
use crate::error::{Error, Result};
use crate::linalg::{gauss_01, lanczos_extremal, power_iteration, BandedCholesky};

type C64 = Complex<f64>;

/// SPD matrix of basis inner products with its Cholesky factor L (L L^T = M).
/// The discrete norm is ||x|| = ||L^T x||_2, so <x,y> = (L^T y) . (L^T x).
#[derive(Debug, Clone)]
pub struct GramMatrix {
    id: String,
    matrix: DMatrix<f64>,
    chol: BandedCholesky,
    kappa: std::sync::OnceLock<f64>,
    mu_g: f64,
    summary: serde_json::Value,
}

/// Assemble the Gram matrix of a hat-basis projector by per-cell Gauss
/// quadrature (2 points per axis, exact for the bilinear-pair integrand).
pub fn assemble_gram(proj: &Projector) -> Result<GramMatrix> {
    let grid = proj.grid();
    let dim = grid.dim();
    let n = proj.dof_count();
    let rule = gauss_01(2);
    let vol = grid.cell_volume();
    let mut m = DMatrix::zeros(n, n);
    let corners = 1usize << dim;
    let npts = rule.len().pow(dim as u32);
    let mut phi = vec![0.0; corners];
    for c in 0..grid.cell_count() {
        let cell = grid.cell_multi_index(c);
        let nodes = grid.cell_corner_nodes(&cell);
        for q in 0..npts {
            let mut w = vol;
            let mut xi = [0.0f64; 3];
            let mut rem = q;
            for axis in 0..dim {
                let (x, wx) = rule[rem % rule.len()];
                rem /= rule.len();
                xi[axis] = x;
                w *= wx;
            }
            for (bits, p) in phi.iter_mut().enumerate() {
                let mut v = 1.0;
                for axis in 0..dim {
                    let t = xi[axis];
                    v *= if (bits >> axis) & 1 == 1 { t } else { 1.0 - t };
                }
                *p = v;
            }
            for (li, &ni) in nodes.iter().enumerate() {
                let Some(di) = proj.node_to_dof(ni) else {
                    continue;
                };
                for (lj, &nj) in nodes.iter().enumerate() {
                    let Some(dj) = proj.node_to_dof(nj) else {
                        continue;
                    };
                    m[(di, dj)] += w * phi[li] * phi[lj];
                }
            }
        }
    }
    let id = format!(
        "gram-{}d-{}-h{}",
        dim,
        proj.bc(),
        grid.h()
            .iter()
            .map(|h| format!("{h}"))
            .collect::<Vec<_>>()
            .join("x")
    );
    let mut summary = proj.summary();
    summary["id"] = json!(id);
    GramMatrix::from_parts(id, m, summary)
}

impl GramMatrix {
    /// Wrap an explicitly given SPD matrix (identity stubs, tests).
    pub fn from_dense(id: impl Into<String>, matrix: DMatrix<f64>) -> Result<Self> {
        let id = id.into();
        let summary = json!({ "id": id, "dof_count": matrix.nrows() });
        Self::from_parts(id, matrix, summary)
    }

    fn from_parts(id: String, matrix: DMatrix<f64>, summary: serde_json::Value) -> Result<Self> {
        let n = matrix.nrows();
        // symmetry invariant: 1e-12 relative to the largest entry
        let max_abs = matrix.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let mut asym = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                asym = asym.max((matrix[(i, j)] - matrix[(j, i)]).abs());
            }
        }
        if asym > 1e-12 * max_abs {
            return Err(Error::NotSymmetric { residual: asym });
        }
        let chol = BandedCholesky::factor(&matrix)?;
        let ones = DVector::from_element(n, 1.0);
        let mu_g = (ones.dot(&(&matrix * &ones))).sqrt();
        Ok(Self {
            id,
            matrix,
            chol,
            kappa: std::sync::OnceLock::new(),
            mu_g,
            summary,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Condition number in the 2-norm, computed lazily: Lanczos for
    /// lambda_max (dense matvecs are the expensive side), inverse power
    /// iteration through the banded factor for lambda_min.
    pub fn kappa(&self) -> f64 {
        *self.kappa.get_or_init(|| {
            let n = self.matrix.nrows();
            let (_, lambda_max) = lanczos_extremal(n, |v| &self.matrix * v, 200);
            let inv_lambda_min = power_iteration(n, |v| self.chol.solve(v), 1e-10, 10_000).0;
            lambda_max * inv_lambda_min
        })
    }

    /// mu(G) = ||1||, the discrete norm of the all-ones coefficient vector.
    pub fn space_volume(&self) -> f64 {
        self.mu_g
    }

    /// m x with m = L^T the norm factor.
    pub fn factor_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.chol.apply_lt(x)
    }

    /// Solve m v = z, i.e. L^T v = z.
    pub fn factor_solve(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut v = z.clone();
        self.chol.solve_lt_in_place(&mut v);
        v
    }

    /// m^T x = L x, the adjoint of the norm factor.
    pub fn factor_t_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.chol.apply_l(x)
    }

    /// Solve m^T v = z, i.e. L v = z.
    pub fn factor_t_solve(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut v = z.clone();
        self.chol.solve_l_in_place(&mut v);
        v
    }

    /// Solve M u = b through the factor.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// Solve M X = B column by column.
    pub fn solve_columns(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            x.set_column(j, &self.chol.solve(&b.column(j).into_owned()));
        }
        x
    }

    pub fn solve_complex(&self, b: &DVector<C64>) -> DVector<C64> {
        let re = self.chol.solve(&b.map(|z| z.re));
        let im = self.chol.solve(&b.map(|z| z.im));
        DVector::from_fn(b.len(), |i, _| C64::new(re[i], im[i]))
    }

    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        self.factor_apply(x).norm()
    }

    pub fn norm_complex(&self, x: &DVector<C64>) -> f64 {
        let re = self.factor_apply(&x.map(|z| z.re));
        let im = self.factor_apply(&x.map(|z| z.im));
        (re.norm_squared() + im.norm_squared()).sqrt()
    }

    pub fn summary(&self) -> serde_json::Value {
        let mut s = self.summary.clone();
        s["kappa"] = json!(self.kappa());
        s["mu_g"] = json!(self.mu_g);
        s
    }

    /// Coordinate-triplet dump (row, col, value), nonzeros only.
    pub fn write_triplets<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        for i in 0..self.matrix.nrows() {
            for j in 0..self.matrix.ncols() {
                let v = self.matrix[(i, j)];
                if v != 0.0 {
                    writeln!(w, "{i} {j} {v:.17e}")?;
                }
            }
        }
        Ok(())
    }
}

/// <x, y> in the Gram inner product: y^* M x computed through the factor.
pub fn discrete_inner(x: &DVector<f64>, y: &DVector<f64>, g: &GramMatrix) -> Result<f64> {
    if x.len() != g.dim() || y.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            got: x.len().max(y.len()),
        });
    }
    Ok(g.factor_apply(y).dot(&g.factor_apply(x)))
}

/// ||x|| = sqrt(<x, x>) in the Gram inner product.
pub fn discrete_norm(x: &DVector<f64>, g: &GramMatrix) -> Result<f64> {
    if x.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            got: x.len(),
        });
    }
    Ok(g.norm(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_basis::{build_projector, build_tensor_grid, BoundaryCondition};
    use approx::assert_relative_eq;

    fn gram_1d(h: f64, bc: BoundaryCondition) -> GramMatrix {
        let g = build_tensor_grid(&[(0.0, 1.0)], &[h]).unwrap();
        assemble_gram(&build_projector(g, bc)).unwrap()
    }

    #[test]
    fn hat_mass_matrix_is_tridiagonal() {
        // analytic hat-product integrals: diagonal 2h/3, off-diagonal h/6
        let h = 0.25;
        let g = gram_1d(h, BoundaryCondition::Dirichlet);
        let m = g.matrix();
        assert_eq!(m.nrows(), 3);
        for i in 0usize..3 {
            for j in 0..3 {
                let expect = if i == j {
                    2.0 * h / 3.0
                } else if i.abs_diff(j) == 1 {
                    h / 6.0
                } else {
                    0.0
                };
                assert_relative_eq!(m[(i, j)], expect, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn identity_stub() {
        let g = GramMatrix::from_dense("id", DMatrix::identity(4, 4)).unwrap();
        assert_relative_eq!(g.kappa(), 1.0, epsilon = 1e-9);
        let x = DVector::from_vec(vec![3.0, 4.0, 0.0, 0.0]);
        assert_relative_eq!(g.norm(&x), 5.0, epsilon = 1e-14);
    }

    #[test]
    fn norm_of_zero() {
        let g = gram_1d(0.25, BoundaryCondition::Dirichlet);
        let z = DVector::zeros(3);
        assert_eq!(discrete_norm(&z, &g).unwrap(), 0.0);
    }

    #[test]
    fn all_ones_norm_matches_dense_sum() {
        let g = gram_1d(0.25, BoundaryCondition::Dirichlet);
        let ones = DVector::from_element(3, 1.0);
        let direct: f64 = g.matrix().iter().sum();
        let n = discrete_norm(&ones, &g).unwrap();
        assert_relative_eq!(n * n, direct, epsilon = 1e-13);
        assert_relative_eq!(g.space_volume(), n, epsilon = 1e-13);
    }

    #[test]
    fn dimension_mismatch_detected() {
        let g = gram_1d(0.25, BoundaryCondition::Dirichlet);
        let x = DVector::zeros(5);
        assert!(matches!(
            discrete_norm(&x, &g),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn inner_positive_on_random_vectors() {
        let g = gram_1d(1.0 / 16.0, BoundaryCondition::None);
        let mut seed = 1234.5678f64;
        for _ in 0..20 {
            let x = DVector::from_fn(g.dim(), |i, _| {
                seed = (seed * 997.13 + i as f64).sin();
                seed
            });
            if x.norm() > 0.0 {
                assert!(discrete_inner(&x, &x, &g).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn asymmetric_input_rejected() {
        let mut m = DMatrix::identity(3, 3);
        m[(0, 1)] = 0.5;
        assert!(matches!(
            GramMatrix::from_dense("bad", m),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn kappa_of_1d_mass_matrix() {
        // 1D hat mass eigenvalues: (h/3)(2 + cos(k pi h)); kappa -> 3 as h -> 0
        let h = 1.0 / 32.0;
        let g = gram_1d(h, BoundaryCondition::Dirichlet);
        use std::f64::consts::PI;
        let n = g.dim();
        // exact extremal eigenvalues of the tridiagonal mass matrix
        let lam = |k: usize| (h / 3.0) * (2.0 + (k as f64 * PI * h).cos());
        let expect = lam(1) / lam(n);
        assert_relative_eq!(g.kappa(), expect, epsilon = 1e-6);
    }
}
