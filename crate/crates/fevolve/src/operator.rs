//! Exactly factorizable discrete operators A[v] = a^T W D(v) a, particular
//! representations, weighted operator norms and sesquilinear forms.
//!
//! The factor `a` maps dof coefficients to gradient components at per-cell
//! Gauss points; `W` holds quadrature weights. With D sampled at the same
//! points the assembled stiffness is exact for constant tensors.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use crate::error::{Error, Result};
use crate::linalg::{gauss_01, lanczos_extremal};
use crate::mesh_basis::{discrete_inner, GramMatrix, Projector};

/// Diffusion tensor model plugged into the middle of the factorization.
#[derive(Clone)]
pub enum DiffusionTensor {
    Identity,
    ConstantSpd(DMatrix<f64>),
    /// Per-sample tensor from the expanded state value, with its Lipschitz
    /// constant c_D and sup bound M_D on the ball of interest.
    StateDependent {
        tensor: Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>,
        lipschitz: f64,
        bound: f64,
    },
}

impl std::fmt::Debug for DiffusionTensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DiffusionTensor::Identity => write!(f, "Identity"),
            DiffusionTensor::ConstantSpd(k) => write!(f, "ConstantSpd({k:?})"),
            DiffusionTensor::StateDependent {
                lipschitz, bound, ..
            } => write!(f, "StateDependent {{ c_D: {lipschitz}, M_D: {bound} }}"),
        }
    }
}

impl DiffusionTensor {
    /// (M_D, c_D) for the Lipschitz bookkeeping; Identity counts as (1, 0),
    /// a constant tensor as (||K||_2, 0).
    pub fn bound_and_lipschitz(&self) -> (f64, f64) {
        match self {
            DiffusionTensor::Identity => (1.0, 0.0),
            DiffusionTensor::ConstantSpd(k) => {
                let sym = (k + k.transpose()) * 0.5;
                let eig = sym.symmetric_eigen();
                let norm = eig
                    .eigenvalues
                    .iter()
                    .fold(0.0f64, |a, &v| a.max(v.abs()));
                (norm, 0.0)
            }
            DiffusionTensor::StateDependent {
                lipschitz, bound, ..
            } => (*bound, *lipschitz),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct BasisTerm {
    dof: usize,
    value: f64,
    grad: [f64; 3],
}

#[derive(Debug, Clone)]
struct QuadSample {
    weight: f64,
    terms: Vec<BasisTerm>,
}

/// Measured norm data of the factor: mu(A[I]) = ||a|| ||a^T|| and the
/// h-scaled inverse estimate K_a with kappa(M) ||a||^2 <= K_a / h^2.
#[derive(Debug, Clone, Copy)]
pub struct OperatorConstants {
    pub mu_ai: f64,
    pub k_a: f64,
    pub norm_a_sq: f64,
}

/// Quadrature-point factorization of a diffusion operator over a hat basis.
#[derive(Debug, Clone)]
pub struct FactoredOperator {
    proj: Arc<Projector>,
    tensor: DiffusionTensor,
    quad: Vec<QuadSample>,
    constants: Option<OperatorConstants>,
}

/// Build the gradient factor with D = Identity: midpoint rule per cell in
/// 1D, tensor 2-point Gauss otherwise. a^T W a is the standard stiffness of
/// the (negative) Laplacian under the projector's boundary condition.
pub fn build_difference_factor(proj: Arc<Projector>) -> FactoredOperator {
    let grid = proj.grid().clone();
    let dim = grid.dim();
    let rule = if dim == 1 { gauss_01(1) } else { gauss_01(2) };
    let vol = grid.cell_volume();
    let npts = rule.len().pow(dim as u32);
    let corners = 1usize << dim;
    let mut quad = Vec::with_capacity(grid.cell_count() * npts);
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
            let mut terms = Vec::new();
            for (bits, &node) in nodes.iter().enumerate().take(corners) {
                let Some(dof) = proj.node_to_dof(node) else {
                    continue;
                };
                let mut value = 1.0;
                let mut grad = [0.0f64; 3];
                for axis in 0..dim {
                    let t = xi[axis];
                    let up = (bits >> axis) & 1 == 1;
                    value *= if up { t } else { 1.0 - t };
                }
                for gaxis in 0..dim {
                    let mut g = 1.0;
                    for axis in 0..dim {
                        let t = xi[axis];
                        let up = (bits >> axis) & 1 == 1;
                        if axis == gaxis {
                            g *= if up { 1.0 } else { -1.0 } / grid.h()[axis];
                        } else {
                            g *= if up { t } else { 1.0 - t };
                        }
                    }
                    grad[gaxis] = g;
                }
                terms.push(BasisTerm { dof, value, grad });
            }
            quad.push(QuadSample { weight: w, terms });
        }
    }
    FactoredOperator {
        proj,
        tensor: DiffusionTensor::Identity,
        quad,
        constants: None,
    }
}

impl FactoredOperator {
    pub fn projector(&self) -> &Arc<Projector> {
        &self.proj
    }

    pub fn tensor(&self) -> &DiffusionTensor {
        &self.tensor
    }

    pub fn with_tensor(mut self, tensor: DiffusionTensor) -> Self {
        self.tensor = tensor;
        self
    }

    pub fn dof_count(&self) -> usize {
        self.proj.dof_count()
    }

    pub fn sample_count(&self) -> usize {
        self.quad.len()
    }

    /// Gradient samples a x, flattened as sample-major, component-minor.
    pub fn apply_factor(&self, x: &DVector<f64>) -> DVector<f64> {
        let dim = self.proj.grid().dim();
        let mut out = DVector::zeros(self.quad.len() * dim);
        for (s, qs) in self.quad.iter().enumerate() {
            for t in &qs.terms {
                for axis in 0..dim {
                    out[s * dim + axis] += t.grad[axis] * x[t.dof];
                }
            }
        }
        out
    }

    /// Expanded state value at each quadrature point.
    pub fn state_samples(&self, v: &DVector<f64>) -> Vec<f64> {
        self.quad
            .iter()
            .map(|qs| qs.terms.iter().map(|t| t.value * v[t.dof]).sum())
            .collect()
    }

    /// Assemble S[v] = a^T W D(v) a as a raw matrix.
    pub fn assemble_matrix(&self, v: Option<&DVector<f64>>) -> Result<DMatrix<f64>> {
        let dim = self.proj.grid().dim();
        let n = self.dof_count();
        let samples = match (&self.tensor, v) {
            (DiffusionTensor::StateDependent { .. }, None) => {
                return Err(Error::MissingConstants(
                    "state-dependent tensor needs a state vector".into(),
                ))
            }
            (DiffusionTensor::StateDependent { .. }, Some(v)) => Some(self.state_samples(v)),
            _ => None,
        };
        let mut s = DMatrix::zeros(n, n);
        let mut dg = vec![[0.0f64; 3]; 0];
        for (si, qs) in self.quad.iter().enumerate() {
            let tensor_at = |val: f64| -> Result<Option<DMatrix<f64>>> {
                match &self.tensor {
                    DiffusionTensor::Identity => Ok(None),
                    DiffusionTensor::ConstantSpd(k) => Ok(Some(k.clone())),
                    DiffusionTensor::StateDependent { tensor, .. } => {
                        let d = tensor(val);
                        let eig = ((&d + d.transpose()) * 0.5).symmetric_eigen();
                        for &ev in eig.eigenvalues.iter() {
                            if ev <= 0.0 {
                                return Err(Error::NonSpdTensor {
                                    sample: si,
                                    eigenvalue: ev,
                                });
                            }
                        }
                        Ok(Some(d))
                    }
                }
            };
            let val = samples.as_ref().map(|s| s[si]).unwrap_or(0.0);
            let d = tensor_at(val)?;
            // D-weighted gradients per term
            dg.clear();
            for t in &qs.terms {
                let mut g = [0.0f64; 3];
                match &d {
                    None => g[..dim].copy_from_slice(&t.grad[..dim]),
                    Some(dm) => {
                        for i in 0..dim {
                            for j in 0..dim {
                                g[i] += dm[(i, j)] * t.grad[j];
                            }
                        }
                    }
                }
                dg.push(g);
            }
            for (li, ti) in qs.terms.iter().enumerate() {
                for (lj, tj) in qs.terms.iter().enumerate() {
                    let mut dot = 0.0;
                    for axis in 0..dim {
                        dot += ti.grad[axis] * dg[lj][axis];
                    }
                    let _ = li;
                    s[(ti.dof, tj.dof)] += qs.weight * dot;
                }
            }
        }
        Ok(s)
    }

    /// Measure mu(A[I]) and K_a against a Gram matrix; stores the constants.
    pub fn measure_constants(&mut self, gram: &GramMatrix) -> Result<OperatorConstants> {
        let plain = FactoredOperator {
            proj: self.proj.clone(),
            tensor: DiffusionTensor::Identity,
            quad: self.quad.clone(),
            constants: None,
        };
        let s = plain.assemble_matrix(None)?;
        let n = s.nrows();
        // ||a||^2 = lambda_max of S x = lambda M x (weighted operator norm)
        let (_, lam_max) = lanczos_extremal(n, |v| {
            let mut t = gram.factor_solve(v);
            t = &s * t;
            gram.factor_t_solve(&t)
        }, 200);
        let h = self
            .proj
            .grid()
            .h()
            .iter()
            .fold(0.0f64, |a, &b| a.max(b));
        let c = OperatorConstants {
            mu_ai: lam_max,
            k_a: gram.kappa() * lam_max * h * h,
            norm_a_sq: lam_max,
        };
        self.constants = Some(c);
        Ok(c)
    }

    pub fn constants(&self) -> Option<OperatorConstants> {
        self.constants
    }
}

/// A dof x dof matrix tied to the Gram matrices of its domain and codomain.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub matrix: DMatrix<f64>,
    pub label: String,
    pub domain_gram: Arc<GramMatrix>,
    pub codomain_gram: Arc<GramMatrix>,
}

impl DiscreteOperator {
    pub fn new(
        matrix: DMatrix<f64>,
        label: impl Into<String>,
        domain_gram: Arc<GramMatrix>,
        codomain_gram: Arc<GramMatrix>,
    ) -> Self {
        assert!(matrix.iter().all(|v| v.is_finite()), "non-finite entries");
        Self {
            matrix,
            label: label.into(),
            domain_gram,
            codomain_gram,
        }
    }

    pub fn square(
        matrix: DMatrix<f64>,
        label: impl Into<String>,
        gram: Arc<GramMatrix>,
    ) -> Self {
        Self::new(matrix, label, gram.clone(), gram)
    }

    pub fn header(&self) -> serde_json::Value {
        json!({
            "rows": self.matrix.nrows(),
            "cols": self.matrix.ncols(),
            "label": self.label,
            "gram_ids": [self.domain_gram.id(), self.codomain_gram.id()],
        })
    }

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

/// Assemble S[v] and wrap it with its Gram matrix.
pub fn assemble_operator(
    fo: &FactoredOperator,
    v: Option<&DVector<f64>>,
    gram: &Arc<GramMatrix>,
    label: impl Into<String>,
) -> Result<DiscreteOperator> {
    let m = fo.assemble_matrix(v)?;
    Ok(DiscreteOperator::square(m, label, gram.clone()))
}

/// Particular representation of an abstract operator action: column j is
/// projY.decompose(action(projX.expand(e_j))).
pub fn particular_representation<A>(
    action: A,
    proj_x: &Projector,
    proj_y: &Projector,
    domain_gram: Arc<GramMatrix>,
    codomain_gram: Arc<GramMatrix>,
    label: impl Into<String>,
) -> Result<DiscreteOperator>
where
    A: for<'a> Fn(
        &'a (dyn Fn(&[f64]) -> f64 + 'a),
    ) -> std::result::Result<Box<dyn Fn(&[f64]) -> f64 + 'a>, String>,
{
    let nx = proj_x.dof_count();
    let ny = proj_y.dof_count();
    let mut m = DMatrix::zeros(ny, nx);
    for j in 0..nx {
        let mut e = DVector::zeros(nx);
        e[j] = 1.0;
        let field = move |p: &[f64]| proj_x.interpolate(&e, p);
        let image = action(&field).map_err(|reason| Error::ActionFailure { column: j, reason })?;
        let col = proj_y.decompose(&*image);
        m.set_column(j, &col);
    }
    Ok(DiscreteOperator::new(m, label, domain_gram, codomain_gram))
}

/// Weighted operator norm estimate: largest singular value of
/// m_Y B m_X^{-1}, by power iteration with a deterministic start.
#[derive(Debug, Clone, Copy)]
pub struct NormEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub fn operator_norm(b: &DiscreteOperator) -> NormEstimate {
    let n = b.matrix.ncols();
    let gx = &b.domain_gram;
    let gy = &b.codomain_gram;
    let apply = |v: &DVector<f64>| -> DVector<f64> {
        // T v then T^T (T v), with T = m_Y B m_X^{-1}
        let t = gx.factor_solve(v);
        let t = &b.matrix * t;
        let t = gy.factor_apply(&t);
        let t = gy.factor_t_apply(&t);
        let t = b.matrix.transpose() * t;
        gx.factor_t_solve(&t)
    };
    let mut v = DVector::from_element(n, 1.0);
    v /= v.norm();
    let mut lambda = 0.0f64;
    let cap = 10_000;
    for it in 0..cap {
        let w = apply(&v);
        let nw = w.norm();
        if nw == 0.0 {
            return NormEstimate {
                value: 0.0,
                converged: true,
                iterations: it,
            };
        }
        let new_lambda = v.dot(&w);
        v = w / nw;
        if (new_lambda - lambda).abs() <= 1e-10 * new_lambda.abs().max(1e-300) {
            return NormEstimate {
                value: new_lambda.max(0.0).sqrt(),
                converged: true,
                iterations: it + 1,
            };
        }
        lambda = new_lambda;
    }
    NormEstimate {
        value: lambda.max(0.0).sqrt(),
        converged: false,
        iterations: cap,
    }
}

/// Row-sum infinity norm of m B m^{-1}; upper bound for the weighted 2-norm
/// by the Gershgorin circle theorem.
pub fn gershgorin_bound(b: &DiscreteOperator) -> Result<f64> {
    let n = b.matrix.nrows();
    if b.matrix.ncols() != n || b.domain_gram.dim() != b.codomain_gram.dim() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.matrix.ncols(),
        });
    }
    let g = &b.domain_gram;
    // X = m B (column-wise), then rows of T = X m^{-1} via L-solves
    let mut x = DMatrix::zeros(n, n);
    for j in 0..n {
        let col = g.factor_apply(&b.matrix.column(j).into_owned());
        x.set_column(j, &col);
    }
    let mut worst = 0.0f64;
    for i in 0..n {
        let row = x.row(i).transpose();
        let t_row = g.factor_t_solve(&row);
        worst = worst.max(t_row.iter().map(|v| v.abs()).sum());
    }
    Ok(worst)
}

/// Sesquilinear form of the operator: <B x, y> in the codomain Gram.
pub fn sesquilinear_eval(
    b: &DiscreteOperator,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<f64> {
    if x.len() != b.matrix.ncols() || y.len() != b.matrix.nrows() {
        return Err(Error::DimensionMismatch {
            expected: b.matrix.ncols(),
            got: x.len(),
        });
    }
    let bx = &b.matrix * x;
    discrete_inner(&bx, y, &b.codomain_gram)
}

/// Fitted approximation order: slope of log ||B p'u - p'(Bu)|| against
/// log h, errors in the codomain discrete norm.
pub fn approximation_order_estimate(
    family: &[(f64, DiscreteOperator, Arc<Projector>)],
    u: &dyn Fn(&[f64]) -> f64,
    reference_action: &dyn Fn(&[f64]) -> f64,
) -> Result<f64> {
    if family.len() < 3 {
        return Err(Error::InsufficientSamples {
            required: 3,
            got: family.len(),
        });
    }
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    for (h, op, proj) in family {
        let xu = proj.decompose(u);
        let reference = proj.decompose(reference_action);
        let diff = &op.matrix * xu - reference;
        errs.push(op.codomain_gram.norm(&diff));
        hs.push(*h);
    }
    if errs.iter().all(|&e| e < 1e-13) {
        return Ok(f64::INFINITY);
    }
    Ok(crate::linalg::fit_log_slope(&hs, &errs))
}
