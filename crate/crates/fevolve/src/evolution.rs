//! Local-in-time evolution solver: Lipschitz bookkeeping for
//! g(u) = scale * (-M^-1 S[u] u + f(u)), the existence half-interval delta,
//! Picard successive approximation with Simpson quadrature, the discrete
//! time-stepping semigroup, and the matrix-exponential reference semigroup.

use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use serde_json::json;

use crate::error::{Error, Result};
use crate::linalg::cumulative_quadrature;
use crate::mesh_basis::GramMatrix;
use crate::operator::{DiscreteOperator, FactoredOperator};

type C64 = Complex<f64>;

/// Default safety factor applied to delta for the integration window.
pub const DELTA_SAFETY: f64 = 0.9;

/// Semilinear evolution u' = scale * (-M^-1 S[u] u + f(u)) on the ball of
/// radius `r` (nodal inf norm of the modulus).
///
/// `fo = None` drops the operator part (A = 0); `f = None` drops the
/// nonlinearity. State-dependent diffusion tensors are sampled from the real
/// part of the state (the shipped diffusion problems are real-valued).
#[derive(Clone)]
pub struct EvolutionProblem {
    pub fo: Option<Arc<FactoredOperator>>,
    pub mass: Arc<GramMatrix>,
    pub f: Option<Arc<dyn Fn(&DVector<C64>) -> DVector<C64> + Send + Sync>>,
    /// Lipschitz model of the f-part on the ball of radius r.
    pub c_f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Sup model of the f-part on the ball of radius r.
    pub m_f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub r: f64,
    /// 1 for diffusion-type problems, i for Schroedinger-type.
    pub scale: C64,
    /// Upper bound for mu(A[I]) entering the constants; presets use
    /// K_a / h^2, measured instances use lambda_max(S, M). 0 when fo is None.
    pub mu_ai: f64,
}

/// The constants of T.theorem_2's delta formula.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct LipschitzConstants {
    pub c_g: f64,
    pub m_g: f64,
    pub m_d: f64,
    pub c_d: f64,
    pub mu_ai: f64,
    pub c_f: f64,
    pub m_f: f64,
}

/// c_g = (M_D + c_D r) mu(A[I]) + c_f(r), M_g = r M_D mu(A[I]) + M_f(r).
pub fn lipschitz_constants(p: &EvolutionProblem) -> Result<LipschitzConstants> {
    let (m_d, c_d, mu_ai) = match &p.fo {
        Some(fo) => {
            if !p.mu_ai.is_finite() || p.mu_ai < 0.0 {
                return Err(Error::MissingConstants(
                    "mu(A[I]) bound not set on the problem".into(),
                ));
            }
            let (m_d, c_d) = fo.tensor().bound_and_lipschitz();
            if !m_d.is_finite() || !c_d.is_finite() {
                return Err(Error::MissingConstants(
                    "diffusion tensor constants are not finite".into(),
                ));
            }
            (m_d, c_d, p.mu_ai)
        }
        None => (0.0, 0.0, 0.0),
    };
    let c_f = (p.c_f)(p.r);
    let m_f = (p.m_f)(p.r);
    Ok(LipschitzConstants {
        c_g: (m_d + c_d * p.r) * mu_ai + c_f,
        m_g: p.r * m_d * mu_ai + m_f,
        m_d,
        c_d,
        mu_ai,
        c_f,
        m_f,
    })
}

/// delta = min{ r / M_g, 1 / c_g }. Both constants vanishing means g = 0:
/// the solution is global and no finite delta exists.
pub fn delta_existence(p: &EvolutionProblem) -> Result<f64> {
    let lc = lipschitz_constants(p)?;
    if lc.m_g == 0.0 && lc.c_g == 0.0 {
        return Err(Error::DegenerateProblem(
            "g vanishes identically; the existence interval is unbounded".into(),
        ));
    }
    let by_sup = if lc.m_g > 0.0 {
        p.r / lc.m_g
    } else {
        f64::INFINITY
    };
    let by_lip = if lc.c_g > 0.0 {
        1.0 / lc.c_g
    } else {
        f64::INFINITY
    };
    Ok(by_sup.min(by_lip))
}

/// Picard iterate y_k on a stored uniform time grid, with the constants and
/// cumulative quadrature needed for semigroup stepping.
#[derive(Debug, Clone)]
pub struct LocalSolution {
    /// Certified existence half-interval.
    pub delta: f64,
    /// Safety-scaled window bound actually enforced.
    pub safe_delta: f64,
    pub dt: f64,
    pub time_grid: Vec<f64>,
    pub trajectory: Vec<DVector<C64>>,
    /// Cumulative integrals of g along the final sweep (same panels the
    /// trajectory was built from); S_n stepping reuses these.
    integrals: Vec<DVector<C64>>,
    pub picard_depth: usize,
    pub constants: LipschitzConstants,
    /// sup_n || y_k(t_n) - y_{k-1}(t_n) || in the weighted norm.
    pub sup_increment: f64,
    /// max_n | ||y(t_n)|| - ||y(t_0)|| | in the weighted norm.
    pub mass_drift: f64,
}

impl LocalSolution {
    pub fn state_at(&self, n: usize) -> Result<&DVector<C64>> {
        self.trajectory.get(n).ok_or(Error::IndexOutOfWindow {
            index: n,
            len: self.trajectory.len(),
        })
    }

    pub fn summary(&self) -> serde_json::Value {
        json!({
            "delta": self.delta,
            "safe_delta": self.safe_delta,
            "dt": self.dt,
            "k": self.picard_depth,
            "c_g": self.constants.c_g,
            "M_g": self.constants.m_g,
            "sup_increment": self.sup_increment,
            "mass_drift": self.mass_drift,
            "nodes": self.time_grid.len(),
        })
    }

    /// Trajectory CSV: t, then one column per dof (re/im pairs for complex
    /// scales).
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W, complex: bool) -> std::io::Result<()> {
        let dofs = self.trajectory[0].len();
        let mut header = String::from("t");
        for d in 0..dofs {
            if complex {
                header.push_str(&format!(",re_{d},im_{d}"));
            } else {
                header.push_str(&format!(",u_{d}"));
            }
        }
        writeln!(w, "{header}")?;
        for (t, v) in self.time_grid.iter().zip(&self.trajectory) {
            let mut row = format!("{t}");
            for z in v.iter() {
                if complex {
                    row.push_str(&format!(",{:.12e},{:.12e}", z.re, z.im));
                } else {
                    row.push_str(&format!(",{:.12e}", z.re));
                }
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

fn inf_norm(v: &DVector<C64>) -> f64 {
    v.iter().fold(0.0f64, |a, z| a.max(z.norm()))
}

struct RightHandSide<'a> {
    p: &'a EvolutionProblem,
    /// Stiffness for state-independent tensors, assembled once.
    fixed_s: Option<DMatrix<f64>>,
}

impl<'a> RightHandSide<'a> {
    fn new(p: &'a EvolutionProblem) -> Result<Self> {
        let fixed_s = match &p.fo {
            Some(fo) => match fo.tensor() {
                crate::operator::DiffusionTensor::StateDependent { .. } => None,
                _ => Some(fo.assemble_matrix(None)?),
            },
            None => None,
        };
        Ok(Self { p, fixed_s })
    }

    fn eval(&self, v: &DVector<C64>) -> Result<DVector<C64>> {
        let n = v.len();
        let mut out = DVector::<C64>::zeros(n);
        if let Some(fo) = &self.p.fo {
            let s = match &self.fixed_s {
                Some(s) => s.clone(),
                None => fo.assemble_matrix(Some(&v.map(|z| z.re)))?,
            };
            let sv_re = &s * v.map(|z| z.re);
            let sv_im = &s * v.map(|z| z.im);
            let sv = DVector::from_fn(n, |i, _| C64::new(sv_re[i], sv_im[i]));
            out -= self.p.mass.solve_complex(&sv);
        }
        if let Some(f) = &self.p.f {
            out += f(v);
        }
        Ok(out * self.p.scale)
    }
}

/// Picard successive approximation to depth k on the uniform grid
/// t_n = t0 + n dt over the window (t0, t1), which must sit inside the
/// safety-scaled existence interval.
pub fn picard_solve(
    p: &EvolutionProblem,
    u0: DVector<C64>,
    k: usize,
    dt: f64,
    window: (f64, f64),
) -> Result<LocalSolution> {
    let (t0, t1) = window;
    if !(dt > 0.0) || t1 <= t0 || k == 0 {
        return Err(Error::InvalidConstants(format!(
            "need dt > 0, t1 > t0, k >= 1; got dt = {dt}, window = ({t0}, {t1}), k = {k}"
        )));
    }
    let constants = lipschitz_constants(p)?;
    // g = 0 has a global (constant) solution; treat delta as unbounded
    let delta = match delta_existence(p) {
        Ok(d) => d,
        Err(Error::DegenerateProblem(_)) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let safe_delta = DELTA_SAFETY * delta;
    if t0.abs().max(t1.abs()) >= safe_delta {
        return Err(Error::WindowExceedsDelta { t0, t1, delta });
    }
    let raw_steps = (t1 - t0) / dt;
    if (raw_steps - raw_steps.round()).abs() > 1e-9 * raw_steps.max(1.0) {
        return Err(Error::InvalidConstants(format!(
            "window length {} is not a multiple of dt = {dt}",
            t1 - t0
        )));
    }
    let steps = raw_steps.round() as usize;
    if steps < 2 {
        return Err(Error::InsufficientSamples {
            required: 3,
            got: steps + 1,
        });
    }
    if inf_norm(&u0) > p.r {
        return Err(Error::TrajectoryBallEscape {
            t: t0,
            norm: inf_norm(&u0),
            radius: p.r,
        });
    }
    let time_grid: Vec<f64> = (0..=steps).map(|n| t0 + n as f64 * dt).collect();
    let rhs = RightHandSide::new(p)?;
    let mut current: Vec<DVector<C64>> = vec![u0.clone(); steps + 1];
    let mut sup_increment = 0.0f64;
    let mut integrals: Vec<DVector<C64>> = Vec::new();
    for sweep in 0..k {
        let gvals: Vec<DVector<C64>> = current
            .par_iter()
            .map(|v| rhs.eval(v))
            .collect::<Result<Vec<_>>>()?;
        integrals = cumulative_quadrature(&gvals, dt);
        let next: Vec<DVector<C64>> = integrals.iter().map(|i| &u0 + i).collect();
        for (t, v) in time_grid.iter().zip(&next) {
            let ninf = inf_norm(v);
            if ninf > p.r {
                return Err(Error::TrajectoryBallEscape {
                    t: *t,
                    norm: ninf,
                    radius: p.r,
                });
            }
        }
        if sweep + 1 == k {
            sup_increment = next
                .iter()
                .zip(&current)
                .map(|(a, b)| p.mass.norm_complex(&(a - b)))
                .fold(0.0f64, f64::max);
        }
        current = next;
    }
    let base = p.mass.norm_complex(&current[0]);
    let mass_drift = current
        .iter()
        .map(|v| (p.mass.norm_complex(v) - base).abs())
        .fold(0.0f64, f64::max);
    Ok(LocalSolution {
        delta,
        safe_delta,
        dt,
        time_grid,
        trajectory: current,
        integrals,
        picard_depth: k,
        constants,
        sup_increment,
        mass_drift,
    })
}

/// Discrete semigroup composition: step n nodes, then m more, reusing the
/// stored quadrature panels. Telescoping makes this agree with stepping
/// m + n directly to rounding error.
pub fn semigroup_step_compose(sol: &LocalSolution, m: usize, n: usize) -> Result<DVector<C64>> {
    let len = sol.trajectory.len();
    let total = m + n;
    if total >= len {
        return Err(Error::IndexOutOfWindow { index: total, len });
    }
    let step_n = &sol.trajectory[n];
    Ok(step_n + (&sol.integrals[total] - &sol.integrals[n]))
}

/// C.corollary2's estimate (c_g delta)^k / (1 - c_g delta) * M_g delta.
pub fn picard_error_bound(k: usize, c_g: f64, m_g: f64, delta: f64) -> Result<f64> {
    let q = c_g * delta;
    if q >= 1.0 {
        return Err(Error::NotContractive(q));
    }
    if q < 0.0 || m_g < 0.0 || delta < 0.0 {
        return Err(Error::InvalidConstants(format!(
            "need nonnegative c_g, M_g, delta; got c_g = {c_g}, M_g = {m_g}, delta = {delta}"
        )));
    }
    Ok(q.powi(k as i32) / (1.0 - q) * m_g * delta)
}

/// Full discrete form: the Picard estimate plus the c_u h^nu projection term.
pub fn picard_error_bound_with_discretization(
    k: usize,
    c_g: f64,
    m_g: f64,
    delta: f64,
    c_u: f64,
    h: f64,
    nu: f64,
) -> Result<f64> {
    if c_u < 0.0 || h <= 0.0 {
        return Err(Error::InvalidConstants(format!(
            "need c_u >= 0 and h > 0; got c_u = {c_u}, h = {h}"
        )));
    }
    Ok(picard_error_bound(k, c_g, m_g, delta)? + c_u * h.powf(nu))
}

/// Matrix exponential by scaling and squaring of the Taylor series.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let norm = a.abs().row_sum().max();
    if !norm.is_finite() || norm > 1e12 {
        return Err(Error::SeriesOverflow { norm });
    }
    let s = if norm > 0.5 {
        ((norm / 0.5).log2().ceil() as u32).min(50)
    } else {
        0
    };
    let scaled = a / 2f64.powi(s as i32);
    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for j in 1..=40 {
        term = &term * &scaled / (j as f64);
        result += &term;
        if term.amax() < 1e-18 * result.amax() {
            break;
        }
    }
    for _ in 0..s {
        result = &result * &result;
    }
    Ok(result)
}

/// e^{tA} v0, plus the Duhamel term int_0^t e^{(t-tau)A} f(tau) dtau when a
/// uniformly sampled forcing trajectory over [0, t] is supplied.
pub fn semigroup_reference(
    a: &DiscreteOperator,
    v0: &DVector<f64>,
    t: f64,
    forcing: Option<&[DVector<f64>]>,
) -> Result<DVector<f64>> {
    let et = expm(&(&a.matrix * t))?;
    let mut u = &et * v0;
    if let Some(f) = forcing {
        if f.len() < 3 {
            return Err(Error::InsufficientSamples {
                required: 3,
                got: f.len(),
            });
        }
        let steps = f.len() - 1;
        let dt = t / steps as f64;
        let e_dt = expm(&(&a.matrix * dt))?;
        // w_j = e^{(t - tau_j) A} f(tau_j), built backwards from tau = t
        let mut w = vec![DVector::zeros(v0.len()); f.len()];
        w[steps] = f[steps].clone();
        for j in (0..steps).rev() {
            w[j] = propagate(&e_dt, &f[j], steps - j);
        }
        let duhamel = cumulative_quadrature(&w, dt)
            .pop()
            .expect("nonempty quadrature");
        u += duhamel;
    }
    Ok(u)
}

fn propagate(e_dt: &DMatrix<f64>, v: &DVector<f64>, times: usize) -> DVector<f64> {
    let mut out = v.clone();
    for _ in 0..times {
        out = e_dt * out;
    }
    out
}

/// Contractive-semigroup certificate S1-S3 for a dissipative symmetric
/// generator: decay at rate m_h, composition law, continuity at t = 0.
#[derive(Debug, Clone, Copy)]
pub struct SemigroupCertificate {
    pub decay_ok: bool,
    pub composition_ok: bool,
    pub continuity_ok: bool,
    pub composition_residual: f64,
}

pub fn semigroup_certificate(
    a: &DiscreteOperator,
    v0: &DVector<f64>,
    t: f64,
    m_h: f64,
) -> Result<SemigroupCertificate> {
    let g = &a.domain_gram;
    let base = g.norm(v0);
    let full = semigroup_reference(a, v0, t, None)?;
    let decay_ok = g.norm(&full) <= (-m_h * t).exp() * base + 1e-8;
    let half = semigroup_reference(a, v0, t / 2.0, None)?;
    let two_halves = semigroup_reference(a, &half, t / 2.0, None)?;
    let composition_residual = g.norm(&(&two_halves - &full)) / base.max(1e-300);
    let composition_ok = composition_residual <= 1e-10;
    let eps = 1e-7;
    let near = semigroup_reference(a, v0, eps, None)?;
    let drift = g.norm(&(&near - v0));
    let speed = g.norm(&(&a.matrix * v0));
    let continuity_ok = drift <= 2.0 * speed * eps + 1e-10;
    Ok(SemigroupCertificate {
        decay_ok,
        composition_ok,
        continuity_ok,
        composition_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_basis::{
        assemble_gram, build_projector, build_tensor_grid, BoundaryCondition,
    };
    use crate::operator::{build_difference_factor, DiffusionTensor};
    use crate::spectral::extremal_pencil_eigenvalues;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn scalar_gram() -> Arc<GramMatrix> {
        Arc::new(GramMatrix::from_dense("scalar", DMatrix::identity(1, 1)).unwrap())
    }

    /// u' = u on scalars: A = 0, f = identity.
    fn surrogate(r: f64) -> EvolutionProblem {
        EvolutionProblem {
            fo: None,
            mass: scalar_gram(),
            f: Some(Arc::new(|v: &DVector<C64>| v.clone())),
            c_f: Arc::new(|_| 1.0),
            m_f: Arc::new(move |r| r),
            r,
            scale: C64::new(1.0, 0.0),
            mu_ai: 0.0,
        }
    }

    fn heat_problem(h: f64) -> (EvolutionProblem, DMatrix<f64>) {
        let g = build_tensor_grid(&[(0.0, 1.0)], &[h]).unwrap();
        let p = Arc::new(build_projector(g, BoundaryCondition::Dirichlet));
        let gram = Arc::new(assemble_gram(&p).unwrap());
        let mut fo = build_difference_factor(p);
        let c = fo.measure_constants(&gram).unwrap();
        let s = fo.assemble_matrix(None).unwrap();
        (
            EvolutionProblem {
                fo: Some(Arc::new(fo)),
                mass: gram,
                f: None,
                c_f: Arc::new(|_| 0.0),
                m_f: Arc::new(|_| 0.0),
                r: 2.0,
                scale: C64::new(1.0, 0.0),
                mu_ai: c.mu_ai,
            },
            s,
        )
    }

    #[test]
    fn identity_diffusion_constants() {
        let (p, _) = heat_problem(0.25);
        let lc = lipschitz_constants(&p).unwrap();
        assert_relative_eq!(lc.c_g, lc.mu_ai, epsilon = 1e-13);
        assert_relative_eq!(lc.m_g, p.r * lc.mu_ai, epsilon = 1e-13);
        let delta = delta_existence(&p).unwrap();
        assert_relative_eq!(delta, 1.0 / lc.mu_ai, epsilon = 1e-13);
    }

    #[test]
    fn unit_constants_give_unit_delta() {
        let p = EvolutionProblem {
            fo: None,
            mass: scalar_gram(),
            f: Some(Arc::new(|v: &DVector<C64>| v.clone())),
            c_f: Arc::new(|_| 1.0),
            m_f: Arc::new(|_| 1.0),
            r: 1.0,
            scale: C64::new(1.0, 0.0),
            mu_ai: 0.0,
        };
        assert_relative_eq!(delta_existence(&p).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_problem_flagged() {
        let p = EvolutionProblem {
            fo: None,
            mass: scalar_gram(),
            f: None,
            c_f: Arc::new(|_| 0.0),
            m_f: Arc::new(|_| 0.0),
            r: 1.0,
            scale: C64::new(1.0, 0.0),
            mu_ai: 0.0,
        };
        assert!(matches!(
            delta_existence(&p),
            Err(Error::DegenerateProblem(_))
        ));
    }

    #[test]
    fn picard_truncates_the_exponential_series() {
        let p = surrogate(4.0);
        let k = 5;
        let dt = 1e-3;
        let t1 = 0.5; // inside 0.9 * delta = 0.9 * min{4/4, 1} = 0.9
        let sol = picard_solve(&p, DVector::from_element(1, C64::new(1.0, 0.0)), k, dt, (0.0, t1))
            .unwrap();
        let truncated = |t: f64| {
            let mut acc = 0.0;
            let mut term = 1.0;
            for j in 0..=k {
                if j > 0 {
                    term *= t / j as f64;
                }
                acc += term;
            }
            acc
        };
        for (t, v) in sol.time_grid.iter().zip(&sol.trajectory) {
            assert!(
                (v[0].re - truncated(*t)).abs() < 1e-8,
                "t = {t}: {} vs {}",
                v[0].re,
                truncated(*t)
            );
        }
    }

    #[test]
    fn zero_rhs_keeps_trajectory_constant() {
        let p = EvolutionProblem {
            fo: None,
            mass: scalar_gram(),
            f: Some(Arc::new(|v: &DVector<C64>| DVector::zeros(v.len()))),
            c_f: Arc::new(|_| 0.0),
            m_f: Arc::new(|_| 1.0),
            r: 1.0,
            scale: C64::new(1.0, 0.0),
            mu_ai: 0.0,
        };
        let u0 = DVector::from_element(1, C64::new(0.5, 0.0));
        let sol = picard_solve(&p, u0.clone(), 3, 0.05, (0.0, 0.5)).unwrap();
        for v in &sol.trajectory {
            assert_eq!(v[0], u0[0]);
        }
    }

    #[test]
    fn window_outside_delta_rejected() {
        let p = surrogate(1.0); // delta = min{1/1, 1/1} = 1, safe 0.9
        let res = picard_solve(
            &p,
            DVector::from_element(1, C64::new(0.1, 0.0)),
            3,
            0.05,
            (0.0, 0.95),
        );
        assert!(matches!(res, Err(Error::WindowExceedsDelta { .. })));
    }

    #[test]
    fn heat_picard_matches_reference_within_bound() {
        let h = 1.0 / 16.0;
        let (p, s) = heat_problem(h);
        let gram = p.mass.clone();
        let proj = p.fo.as_ref().unwrap().projector().clone();
        let u0r = proj.decompose(&|x: &[f64]| 0.5 * (PI * x[0]).sin());
        let u0 = u0r.map(|v| C64::new(v, 0.0));
        let lc = lipschitz_constants(&p).unwrap();
        let delta = delta_existence(&p).unwrap();
        let t = delta / 2.0;
        let k = 8;
        let steps = 64;
        let sol = picard_solve(&p, u0.clone(), k, t / steps as f64, (0.0, t)).unwrap();
        let gen = DiscreteOperator::square(gram.solve_columns(&s) * -1.0, "heat", gram.clone());
        let reference = semigroup_reference(&gen, &u0r, t, None).unwrap();
        let got = sol.trajectory.last().unwrap().map(|z| z.re);
        let err = gram.norm(&(&got - &reference));
        let bound = picard_error_bound(k, lc.c_g, lc.m_g, delta).unwrap();
        // quadrature budget: generous C dt^4
        let quad = 100.0 * (t / steps as f64).powi(4);
        assert!(err <= bound + quad, "err {err} > bound {bound} + quad {quad}");
    }

    #[test]
    fn semigroup_compose_matches_direct_step() {
        let p = surrogate(4.0);
        let sol = picard_solve(
            &p,
            DVector::from_element(1, C64::new(1.0, 0.0)),
            6,
            0.01,
            (0.0, 0.6),
        )
        .unwrap();
        // S_0 identity
        let s0 = semigroup_step_compose(&sol, 0, 10).unwrap();
        assert_eq!(s0, sol.trajectory[10]);
        // composition vs direct, commutativity
        for (m, n) in [(5usize, 7usize), (1, 2), (20, 13)] {
            let ab = semigroup_step_compose(&sol, m, n).unwrap();
            let ba = semigroup_step_compose(&sol, n, m).unwrap();
            let direct = &sol.trajectory[m + n];
            assert!((&ab - direct).norm() <= 1e-12 * direct.norm());
            assert!((&ab - &ba).norm() <= 1e-12 * direct.norm());
        }
        assert!(matches!(
            semigroup_step_compose(&sol, 50, 50),
            Err(Error::IndexOutOfWindow { .. })
        ));
    }

    #[test]
    fn picard_bound_dominates_surrogate_error() {
        // u' = u, exact solution e^t; y_k truncates the series
        let delta = 0.5;
        let c_g = 1.0;
        let r = 2.0;
        let m_g = r;
        for k in 0..=10 {
            let bound = picard_error_bound(k, c_g, m_g, delta).unwrap();
            let mut term: f64 = 1.0;
            let mut trunc = 1.0;
            for j in 1..=k {
                term *= delta / j as f64;
                trunc += term;
            }
            let err = (delta.exp() - trunc).abs();
            assert!(err <= bound + 1e-12, "k={k}: {err} > {bound}");
        }
    }

    #[test]
    fn picard_bound_shape() {
        assert_relative_eq!(
            picard_error_bound(0, 2.0, 3.0, 0.25).unwrap(),
            3.0 * 0.25 / 0.5,
            epsilon = 1e-14
        );
        let mut prev = f64::INFINITY;
        for k in 0..10 {
            let b = picard_error_bound(k, 2.0, 1.0, 0.25).unwrap();
            assert!(b <= prev);
            prev = b;
        }
        assert!(matches!(
            picard_error_bound(1, 2.0, 1.0, 0.5),
            Err(Error::NotContractive(_))
        ));
        let with = picard_error_bound_with_discretization(3, 2.0, 1.0, 0.25, 0.5, 0.125, 2.0)
            .unwrap();
        let without = picard_error_bound(3, 2.0, 1.0, 0.25).unwrap();
        assert_relative_eq!(with - without, 0.5 * 0.125 * 0.125, epsilon = 1e-14);
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let gram = scalar_gram();
        let a = DiscreteOperator::square(DMatrix::zeros(1, 1), "zero", gram);
        let v = DVector::from_element(1, 3.0);
        let u = semigroup_reference(&a, &v, 1.7, None).unwrap();
        assert_relative_eq!(u[0], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn expm_matches_scalar_exponential() {
        let m = DMatrix::from_element(1, 1, -3.0);
        let e = expm(&m).unwrap();
        assert_relative_eq!(e[(0, 0)], (-3.0f64).exp(), max_relative = 1e-13);
    }

    #[test]
    fn heat_reference_decays_between_extremal_rates() {
        let h = 1.0 / 16.0;
        let (p, s) = heat_problem(h);
        let gram = p.mass.clone();
        let (lmin, lmax) = extremal_pencil_eigenvalues(&s, &gram).unwrap();
        let gen = DiscreteOperator::square(gram.solve_columns(&s) * -1.0, "heat", gram.clone());
        let proj = p.fo.as_ref().unwrap().projector().clone();
        let v0 = proj.decompose(&|x: &[f64]| (PI * x[0]).sin() + 0.3 * (3.0 * PI * x[0]).sin());
        let t = 0.01;
        let u = semigroup_reference(&gen, &v0, t, None).unwrap();
        let ratio = gram.norm(&u) / gram.norm(&v0);
        assert!(ratio <= (-lmin * t).exp() + 1e-10);
        assert!(ratio >= (-lmax * t).exp() - 1e-10);
    }

    #[test]
    fn duhamel_with_zero_generator_is_plain_quadrature() {
        let gram = scalar_gram();
        let a = DiscreteOperator::square(DMatrix::zeros(1, 1), "zero", gram);
        let t = 1.0;
        let steps = 10;
        // f(tau) = tau^2 -> integral t^3/3
        let f: Vec<DVector<f64>> = (0..=steps)
            .map(|j| DVector::from_element(1, (j as f64 * t / steps as f64).powi(2)))
            .collect();
        let u = semigroup_reference(&a, &DVector::zeros(1), t, Some(&f)).unwrap();
        assert_relative_eq!(u[0], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn heat_semigroup_certificate() {
        let h = 1.0 / 16.0;
        let (p, s) = heat_problem(h);
        let gram = p.mass.clone();
        let (lmin, _) = extremal_pencil_eigenvalues(&s, &gram).unwrap();
        let gen = DiscreteOperator::square(gram.solve_columns(&s) * -1.0, "heat", gram.clone());
        let proj = p.fo.as_ref().unwrap().projector().clone();
        let v0 = proj.decompose(&|x: &[f64]| (PI * x[0]).sin());
        let cert = semigroup_certificate(&gen, &v0, 0.02, lmin).unwrap();
        assert!(cert.decay_ok);
        assert!(cert.composition_ok, "residual {}", cert.composition_residual);
        assert!(cert.continuity_ok);
    }

    #[test]
    fn nls_conserves_discrete_mass() {
        let h = 1.0 / 16.0;
        let g = build_tensor_grid(&[(0.0, 1.0)], &[h]).unwrap();
        let proj = Arc::new(build_projector(g, BoundaryCondition::Dirichlet));
        let gram = Arc::new(assemble_gram(&proj).unwrap());
        let mut fo = build_difference_factor(proj.clone());
        let c = fo.measure_constants(&gram).unwrap();
        let r = 1.0;
        let mu_g = gram.space_volume();
        let p = EvolutionProblem {
            fo: Some(Arc::new(fo)),
            mass: gram.clone(),
            f: Some(Arc::new(|v: &DVector<C64>| {
                v.map(|z| -z * z.norm_sqr())
            })),
            c_f: Arc::new(move |r| 3.0 * r * r * mu_g),
            m_f: Arc::new(move |r| r * r * r),
            r,
            scale: C64::new(0.0, 1.0),
            mu_ai: c.mu_ai,
        };
        let delta = delta_existence(&p).unwrap();
        let u0 = proj
            .decompose(&|x: &[f64]| 0.5 * (PI * x[0]).sin())
            .map(|v| C64::new(v, 0.0));
        let t1 = 0.5 * delta;
        let sol = picard_solve(&p, u0, 6, t1 / 32.0, (0.0, t1)).unwrap();
        let base = p.mass.norm_complex(&sol.trajectory[0]);
        assert!(
            sol.mass_drift <= 1e-6 * base,
            "drift {} vs base {base}",
            sol.mass_drift
        );
    }

    #[test]
    fn state_dependent_diffusion_constants() {
        let h = 1.0 / 16.0;
        let g = build_tensor_grid(&[(0.0, 1.0)], &[h]).unwrap();
        let proj = Arc::new(build_projector(g, BoundaryCondition::Dirichlet));
        let gram = Arc::new(assemble_gram(&proj).unwrap());
        let r = 1.0;
        let mut fo = build_difference_factor(proj);
        let c = fo.measure_constants(&gram).unwrap();
        let fo = fo.with_tensor(DiffusionTensor::StateDependent {
            tensor: Arc::new(|v: f64| DMatrix::from_element(1, 1, v * v)),
            lipschitz: 2.0 * r,
            bound: r * r,
        });
        let p = EvolutionProblem {
            fo: Some(Arc::new(fo)),
            mass: gram,
            f: None,
            c_f: Arc::new(|_| 0.0),
            m_f: Arc::new(|_| 0.0),
            r,
            scale: C64::new(1.0, 0.0),
            mu_ai: c.mu_ai,
        };
        let lc = lipschitz_constants(&p).unwrap();
        // exe2 shape: c_g = 3 r^2 mu, M_g = r^3 mu -> delta = 1 / (3 r^2 mu)
        assert_relative_eq!(lc.c_g, 3.0 * r * r * c.mu_ai, epsilon = 1e-12);
        assert_relative_eq!(lc.m_g, r * r * r * c.mu_ai, epsilon = 1e-12);
        let delta = delta_existence(&p).unwrap();
        assert_relative_eq!(delta, 1.0 / (3.0 * r * r * c.mu_ai), epsilon = 1e-12);
    }
}
