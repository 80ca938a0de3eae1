//! Shipped problem presets with their analytic constants.

use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};
use serde_json::json;

use crate::elliptic::SemilinearProblem;
use crate::error::{Error, Result};
use crate::evolution::EvolutionProblem;
use crate::mesh_basis::{
    assemble_gram, build_projector, build_tensor_grid, BoundaryCondition, Projector,
};
use crate::operator::{build_difference_factor, DiffusionTensor};

type C64 = Complex<f64>;

pub const PRESET_NAMES: [&str; 4] = [
    "semilinear_poisson_2d",
    "nls_1d",
    "nonlinear_diffusion_1d",
    "heat_1d",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetKind {
    Elliptic,
    Evolution,
}

pub enum ProblemInstance {
    Semilinear(SemilinearProblem),
    Evolution(EvolutionProblem),
}

/// A wired preset together with the constants measured at instantiation.
pub struct PresetInstance {
    pub name: String,
    pub kind: PresetKind,
    pub h: f64,
    pub r: f64,
    /// Measured K_a with kappa(M) ||a||^2 = K_a / h^2 (0 for elliptic).
    pub k_a: f64,
    pub problem: ProblemInstance,
    pub projector: Arc<Projector>,
}

/// Optional overrides for analytic constants.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    /// Coercivity constant for elliptic presets (default: analytic 2 pi^2).
    pub coercivity: Option<f64>,
    /// mu(A[I]) bound for evolution presets (default: measured K_a / h^2).
    pub mu_ai: Option<f64>,
}

fn mesh_1d(h: f64) -> Result<(Arc<Projector>, Arc<crate::mesh_basis::GramMatrix>)> {
    let g = build_tensor_grid(&[(0.0, 1.0)], &[h])?;
    let p = Arc::new(build_projector(g, BoundaryCondition::Dirichlet));
    let gram = Arc::new(assemble_gram(&p)?);
    Ok((p, gram))
}

fn mesh_2d(h: f64) -> Result<(Arc<Projector>, Arc<crate::mesh_basis::GramMatrix>)> {
    let g = build_tensor_grid(&[(0.0, 1.0), (0.0, 1.0)], &[h, h])?;
    let p = Arc::new(build_projector(g, BoundaryCondition::Dirichlet));
    let gram = Arc::new(assemble_gram(&p)?);
    Ok((p, gram))
}

/// Build a named preset at spacing `h` and ball radius `r` (both optional,
/// falling back to the preset defaults).
pub fn instantiate(
    name: &str,
    h: Option<f64>,
    r: Option<f64>,
    overrides: Overrides,
) -> Result<PresetInstance> {
    match name {
        "semilinear_poisson_2d" => {
            let h = h.unwrap_or(1.0 / 32.0);
            let r = r.unwrap_or(1.0);
            let (proj, gram) = mesh_2d(h)?;
            let fo = Arc::new(build_difference_factor(proj.clone()));
            let m = overrides
                .coercivity
                .unwrap_or(2.0 * std::f64::consts::PI.powi(2));
            // Laplace u = 1 + u^2, homogeneous Dirichlet; weak form
            // S u = M f(u) with S ~ -Laplace, so f(u) = -(1 + u^2)
            let problem = SemilinearProblem {
                fo,
                mass: gram,
                f: Arc::new(|u: &DVector<f64>| u.map(|v| -(1.0 + v * v))),
                c_f: Arc::new(|r: f64| 2.0 * r),
                m_f: Arc::new(|r: f64| 1.0 + r * r),
                r,
                m,
            };
            Ok(PresetInstance {
                name: name.into(),
                kind: PresetKind::Elliptic,
                h,
                r,
                k_a: 0.0,
                problem: ProblemInstance::Semilinear(problem),
                projector: proj,
            })
        }
        "nls_1d" => {
            let h = h.unwrap_or(1.0 / 16.0);
            let r = r.unwrap_or(1.0);
            let (proj, gram) = mesh_1d(h)?;
            let mut fo = build_difference_factor(proj.clone());
            let k_a = fo.measure_constants(&gram)?.k_a;
            let mu_ai = overrides.mu_ai.unwrap_or(k_a / (h * h));
            let mu_g = gram.space_volume();
            let problem = EvolutionProblem {
                fo: Some(Arc::new(fo)),
                mass: gram,
                f: Some(Arc::new(|v: &DVector<C64>| v.map(|z| -z * z.norm_sqr()))),
                // aggregate Lipschitz of the cubic term in the weighted norm;
                // the pointwise per-node constant is 3 r^2
                c_f: Arc::new(move |r: f64| 3.0 * r * r * mu_g),
                m_f: Arc::new(|r: f64| r * r * r),
                r,
                scale: C64::new(0.0, 1.0),
                mu_ai,
            };
            Ok(PresetInstance {
                name: name.into(),
                kind: PresetKind::Evolution,
                h,
                r,
                k_a,
                problem: ProblemInstance::Evolution(problem),
                projector: proj,
            })
        }
        "nonlinear_diffusion_1d" => {
            let h = h.unwrap_or(1.0 / 16.0);
            let r = r.unwrap_or(1.0);
            let (proj, gram) = mesh_1d(h)?;
            let mut fo = build_difference_factor(proj.clone());
            let k_a = fo.measure_constants(&gram)?.k_a;
            let mu_ai = overrides.mu_ai.unwrap_or(k_a / (h * h));
            let fo = fo.with_tensor(DiffusionTensor::StateDependent {
                tensor: Arc::new(|v: f64| DMatrix::from_element(1, 1, v * v)),
                lipschitz: 2.0 * r,
                bound: r * r,
            });
            let problem = EvolutionProblem {
                fo: Some(Arc::new(fo)),
                mass: gram,
                f: None,
                c_f: Arc::new(|_| 0.0),
                m_f: Arc::new(|_| 0.0),
                r,
                scale: C64::new(1.0, 0.0),
                mu_ai,
            };
            Ok(PresetInstance {
                name: name.into(),
                kind: PresetKind::Evolution,
                h,
                r,
                k_a,
                problem: ProblemInstance::Evolution(problem),
                projector: proj,
            })
        }
        "heat_1d" => {
            let h = h.unwrap_or(1.0 / 16.0);
            let r = r.unwrap_or(1.0);
            let (proj, gram) = mesh_1d(h)?;
            let mut fo = build_difference_factor(proj.clone());
            let k_a = fo.measure_constants(&gram)?.k_a;
            let mu_ai = overrides.mu_ai.unwrap_or(k_a / (h * h));
            let problem = EvolutionProblem {
                fo: Some(Arc::new(fo)),
                mass: gram,
                f: None,
                c_f: Arc::new(|_| 0.0),
                m_f: Arc::new(|_| 0.0),
                r,
                scale: C64::new(1.0, 0.0),
                mu_ai,
            };
            Ok(PresetInstance {
                name: name.into(),
                kind: PresetKind::Evolution,
                h,
                r,
                k_a,
                problem: ProblemInstance::Evolution(problem),
                projector: proj,
            })
        }
        other => Err(Error::UnknownPreset(other.into())),
    }
}

/// Preset catalogue for the `list-presets` command.
pub fn list_presets() -> serde_json::Value {
    json!([
        {
            "name": "semilinear_poisson_2d",
            "kind": "elliptic",
            "equation": "Laplace u = 1 + u^2 on [0,1]^2, homogeneous Dirichlet",
            "default_h": 1.0 / 32.0,
            "default_r": 1.0,
            "constants": {
                "m": "2 pi^2 (analytic coercivity)",
                "c_f": "2 r",
                "M_f": "1 + r^2",
                "ratio": "r / pi^2"
            }
        },
        {
            "name": "nls_1d",
            "kind": "evolution",
            "equation": "u' = i (Laplace_h u - |u|^2 u) on [0,1], homogeneous Dirichlet",
            "default_h": 1.0 / 16.0,
            "default_r": 1.0,
            "constants": {
                "scale": "i",
                "c_f": "3 r^2 mu(G) (aggregate); 3 r^2 per node",
                "M_f": "r^3",
                "mu_AI": "K_a / h^2 (K_a measured)",
                "delta": "min{ 1/(K_a/h^2 + 3 r^2 mu(G)), 1/(K_a/h^2 + r^2) }"
            }
        },
        {
            "name": "nonlinear_diffusion_1d",
            "kind": "evolution",
            "equation": "u' = -M^-1 S[u^2] u on [0,1], homogeneous Dirichlet",
            "default_h": 1.0 / 16.0,
            "default_r": 1.0,
            "constants": {
                "M_D": "r^2",
                "c_D": "2 r",
                "mu_AI": "K_a / h^2 (K_a measured)",
                "delta": "h^2 / (3 r^2 K_a)"
            }
        },
        {
            "name": "heat_1d",
            "kind": "evolution",
            "equation": "u' = -M^-1 S u on [0,1], homogeneous Dirichlet",
            "default_h": 1.0 / 16.0,
            "default_r": 1.0,
            "constants": {
                "D": "identity",
                "f": "0",
                "generator": "dissipative; decay between e^{-lambda_max t} and e^{-lambda_min t}"
            }
        }
    ])
}
