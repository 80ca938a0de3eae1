//! Discrete Green operator (Lax-Milgram) and the semilinear elliptic solver
//! with its contraction certificate and a-priori bound.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use crate::contraction::{fixed_point_iterate, ContractionReport};
use crate::error::{Error, Result};
use crate::linalg::BandedCholesky;
use crate::mesh_basis::GramMatrix;
use crate::operator::FactoredOperator;

/// Semilinear problem S u = M f(u) on the ball of radius `r` (nodal inf
/// norm), with Lipschitz model c_f and sup model M_f of the nonlinearity and
/// coercivity constant m of the diffusion part.
#[derive(Clone)]
pub struct SemilinearProblem {
    pub fo: Arc<FactoredOperator>,
    pub mass: Arc<GramMatrix>,
    /// Nodal nonlinearity: dof values in, dof values out.
    pub f: Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>,
    /// Lipschitz constant of f on the ball of radius r.
    pub c_f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Sup bound of |f| on the ball of radius r.
    pub m_f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub r: f64,
    /// Coercivity constant; lambda_min from spectral bracketing or analytic.
    pub m: f64,
}

impl SemilinearProblem {
    fn validate(&self) -> Result<()> {
        let cf = (self.c_f)(self.r);
        let mf = (self.m_f)(self.r);
        if !(self.r > 0.0) || !(self.m > 0.0) || cf < 0.0 || mf < 0.0 {
            return Err(Error::InvalidConstants(format!(
                "need r > 0, m > 0, c_f(r) >= 0, M_f(r) >= 0; got r = {}, m = {}, c_f = {cf}, M_f = {mf}",
                self.r, self.m
            )));
        }
        Ok(())
    }
}

/// Factorized discrete Green operator u = S^-1 M f.
pub struct GreenOperator {
    chol: BandedCholesky,
    mass: Arc<GramMatrix>,
}

impl GreenOperator {
    pub fn new(s: &DMatrix<f64>, mass: Arc<GramMatrix>) -> Result<Self> {
        let chol = BandedCholesky::factor(s).map_err(|e| {
            Error::SingularOperator(format!("stiffness not SPD ({e})"))
        })?;
        Ok(Self { chol, mass })
    }

    pub fn apply(&self, f_coeffs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(&(self.mass.matrix() * f_coeffs))
    }
}

/// One-shot Green solve: S u = M f.
pub fn green_apply(
    s: &DMatrix<f64>,
    mass: &Arc<GramMatrix>,
    f_coeffs: &DVector<f64>,
) -> Result<DVector<f64>> {
    Ok(GreenOperator::new(s, mass.clone())?.apply(f_coeffs))
}

/// Ball-confinement and residual record for a semilinear solve.
#[derive(Debug, Clone)]
pub struct EllipticCertificate {
    pub ratio: f64,
    pub coercivity: f64,
    pub lipschitz: f64,
    pub radius: f64,
    pub iterate_inf_norms: Vec<f64>,
    pub ball_confined: bool,
    /// Weighted residual ||u - G f(u)|| at the final iterate.
    pub residual: f64,
}

impl EllipticCertificate {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "ratio": self.ratio,
            "coercivity": self.coercivity,
            "lipschitz": self.lipschitz,
            "radius": self.radius,
            "iterate_inf_norms": self.iterate_inf_norms,
            "ball_confined": self.ball_confined,
            "residual": self.residual,
        })
    }
}

/// Iterate u_{k+1} = G f(u_k) with K = c_f(r)/m, checking ball confinement
/// in the nodal inf norm at every step.
pub fn semilinear_solve(
    p: &SemilinearProblem,
    u0: DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, ContractionReport, EllipticCertificate)> {
    p.validate()?;
    let cf = (p.c_f)(p.r);
    if cf >= p.m {
        return Err(Error::ContractionConditionViolated { c_f: cf, m: p.m });
    }
    let s = p.fo.assemble_matrix(None)?;
    let green = GreenOperator::new(&s, p.mass.clone())?;
    let k = cf / p.m;
    let mass = p.mass.clone();
    let f = p.f.clone();
    let r = p.r;
    let mut inf_norms: Vec<f64> = Vec::new();
    let (u, report) = fixed_point_iterate(
        |u: &DVector<f64>| Ok(green.apply(&f(u))),
        u0,
        |a: &DVector<f64>, b: &DVector<f64>| mass.norm(&(a - b)),
        |u: &DVector<f64>| mass.norm(u),
        Some(k),
        tol,
        max_iter,
        |it, u: &DVector<f64>| {
            let ninf = u.amax();
            inf_norms.push(ninf);
            if ninf > r {
                return Err(Error::BallEscape {
                    iteration: it,
                    norm: ninf,
                    radius: r,
                });
            }
            Ok(())
        },
    )?;
    let residual = p.mass.norm(&(&u - green.apply(&(p.f)(&u))));
    let cert = EllipticCertificate {
        ratio: k,
        coercivity: p.m,
        lipschitz: cf,
        radius: p.r,
        ball_confined: inf_norms.iter().all(|&n| n <= p.r),
        iterate_inf_norms: inf_norms,
        residual,
    };
    Ok((u, report, cert))
}

/// T.tsem2 bound: c_u h^nu + ((c_f/m)^k / (m - c_f)) (r ||A_h|| + M_f) mu(G).
pub fn elliptic_apriori_bound(
    p: &SemilinearProblem,
    k: usize,
    h: f64,
    norm_ah: f64,
    c_u: f64,
) -> Result<f64> {
    p.validate()?;
    let cf = (p.c_f)(p.r);
    if cf >= p.m {
        return Err(Error::ContractionConditionViolated { c_f: cf, m: p.m });
    }
    if c_u < 0.0 || h <= 0.0 || norm_ah < 0.0 {
        return Err(Error::InvalidConstants(format!(
            "need c_u >= 0, h > 0, ||A_h|| >= 0; got c_u = {c_u}, h = {h}, norm_ah = {norm_ah}"
        )));
    }
    let nu = p.fo.projector().projection_order();
    let ratio = cf / p.m;
    let mf = (p.m_f)(p.r);
    Ok(c_u * h.powf(nu)
        + ratio.powi(k as i32) / (p.m - cf) * (p.r * norm_ah + mf) * p.mass.space_volume())
}
