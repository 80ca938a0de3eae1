//! Particular projectors over hat bases: decomposition is nodal sampling,
//! expansion is multilinear interpolation, so P = p p-dagger is idempotent
//! exactly.

use nalgebra::DVector;
use serde_json::json;

use super::grid::Grid;
use crate::error::{Error, Result};
use crate::linalg::{fit_log_slope, gauss_01};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Dirichlet,
    None,
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryCondition::Dirichlet => write!(f, "dirichlet"),
            BoundaryCondition::None => write!(f, "none"),
        }
    }
}

/// Piecewise-multilinear hat basis over a tensor grid with optional Dirichlet
/// elimination of boundary dofs. Projection order is 2.
#[derive(Debug, Clone)]
pub struct Projector {
    grid: Grid,
    bc: BoundaryCondition,
    dof_nodes: Vec<usize>,
    node_to_dof: Vec<Option<usize>>,
}

pub fn build_projector(grid: Grid, bc: BoundaryCondition) -> Projector {
    let n = grid.node_count();
    let mut dof_nodes = Vec::new();
    let mut node_to_dof = vec![None; n];
    for k in 0..n {
        let keep = match bc {
            BoundaryCondition::Dirichlet => !grid.is_boundary(k),
            BoundaryCondition::None => true,
        };
        if keep {
            node_to_dof[k] = Some(dof_nodes.len());
            dof_nodes.push(k);
        }
    }
    Projector {
        grid,
        bc,
        dof_nodes,
        node_to_dof,
    }
}

/// A coefficient vector expanded into a callable scalar field.
pub struct InterpolatedField<'a> {
    proj: &'a Projector,
    coeffs: &'a DVector<f64>,
}

impl InterpolatedField<'_> {
    pub fn eval(&self, point: &[f64]) -> f64 {
        self.proj.interpolate(self.coeffs, point)
    }
}

impl Projector {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn dof_count(&self) -> usize {
        self.dof_nodes.len()
    }

    /// Grid node index backing each dof.
    pub fn dof_nodes(&self) -> &[usize] {
        &self.dof_nodes
    }

    pub fn node_to_dof(&self, node: usize) -> Option<usize> {
        self.node_to_dof[node]
    }

    /// Multilinear hats reproduce themselves nodally: order 2.
    pub fn projection_order(&self) -> f64 {
        2.0
    }

    /// Decomposition factor: nodal sampling at dof nodes.
    pub fn decompose(&self, u: &dyn Fn(&[f64]) -> f64) -> DVector<f64> {
        DVector::from_iterator(
            self.dof_count(),
            self.dof_nodes
                .iter()
                .map(|&k| u(&self.grid.node_coords(k))),
        )
    }

    /// Expansion factor: multilinear interpolation of a coefficient vector.
    pub fn expand<'a>(&'a self, coeffs: &'a DVector<f64>) -> InterpolatedField<'a> {
        assert_eq!(coeffs.len(), self.dof_count(), "coefficient length");
        InterpolatedField { proj: self, coeffs }
    }

    /// Coefficient attached to a grid node: the dof value, or 0 for an
    /// eliminated Dirichlet node.
    pub fn node_coefficient(&self, coeffs: &DVector<f64>, node: usize) -> f64 {
        match self.node_to_dof[node] {
            Some(d) => coeffs[d],
            None => 0.0,
        }
    }

    pub fn interpolate(&self, coeffs: &DVector<f64>, point: &[f64]) -> f64 {
        let dim = self.grid.dim();
        assert_eq!(point.len(), dim);
        let mut cell = vec![0usize; dim];
        let mut xi = vec![0.0f64; dim];
        for axis in 0..dim {
            let (lo, _) = self.grid.bounds()[axis];
            let h = self.grid.h()[axis];
            let cells = self.grid.counts()[axis] - 1;
            let raw = ((point[axis] - lo) / h).floor();
            let c = (raw.max(0.0) as usize).min(cells - 1);
            cell[axis] = c;
            xi[axis] = (point[axis] - (lo + c as f64 * h)) / h;
        }
        let corners = self.grid.cell_corner_nodes(&cell);
        let mut value = 0.0;
        for (bits, &node) in corners.iter().enumerate() {
            let mut w = 1.0;
            for axis in 0..dim {
                let t = xi[axis];
                w *= if (bits >> axis) & 1 == 1 { t } else { 1.0 - t };
            }
            value += w * self.node_coefficient(coeffs, node);
        }
        value
    }

    pub fn summary(&self) -> serde_json::Value {
        json!({
            "dim": self.grid.dim(),
            "bounds": self.grid.bounds(),
            "h": self.grid.h(),
            "bc": self.bc.to_string(),
            "dof_count": self.dof_count(),
        })
    }
}

/// L2 norm of (P u - u) by per-cell Gauss quadrature (5 points per axis).
pub fn interpolation_error_l2(proj: &Projector, u: &dyn Fn(&[f64]) -> f64) -> f64 {
    let coeffs = proj.decompose(u);
    let grid = proj.grid();
    let dim = grid.dim();
    let rule = gauss_01(5);
    let vol = grid.cell_volume();
    let mut acc = 0.0;
    let mut point = vec![0.0; dim];
    for c in 0..grid.cell_count() {
        let cell = grid.cell_multi_index(c);
        let origin = grid.cell_origin(&cell);
        let npts = rule.len().pow(dim as u32);
        for q in 0..npts {
            let mut w = vol;
            let mut rem = q;
            for axis in 0..dim {
                let (x, wx) = rule[rem % rule.len()];
                rem /= rule.len();
                point[axis] = origin[axis] + x * grid.h()[axis];
                w *= wx;
            }
            let diff = proj.interpolate(&coeffs, &point) - u(&point);
            acc += w * diff * diff;
        }
    }
    acc.sqrt()
}

/// Fitted projection order over an h-family: least-squares slope of
/// log-error against log-h. Exactly reproduced fields give +inf.
pub fn projection_order_estimate(
    family: &[Projector],
    u: &dyn Fn(&[f64]) -> f64,
) -> Result<f64> {
    if family.len() < 3 {
        return Err(Error::InsufficientSamples {
            required: 3,
            got: family.len(),
        });
    }
    let hs: Vec<f64> = family.iter().map(|p| p.grid().h()[0]).collect();
    let errs: Vec<f64> = family
        .iter()
        .map(|p| interpolation_error_l2(p, u))
        .collect();
    // treat errors at rounding level as exact reproduction
    if errs.iter().all(|&e| e < 1e-13) {
        return Ok(f64::INFINITY);
    }
    Ok(fit_log_slope(&hs, &errs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_basis::build_tensor_grid;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn proj_1d(h: f64, bc: BoundaryCondition) -> Projector {
        build_projector(build_tensor_grid(&[(0.0, 1.0)], &[h]).unwrap(), bc)
    }

    #[test]
    fn decompose_expand_is_identity_on_units() {
        let p = proj_1d(0.25, BoundaryCondition::Dirichlet);
        for k in 0..p.dof_count() {
            let mut e = DVector::zeros(p.dof_count());
            e[k] = 1.0;
            let field = |x: &[f64]| p.interpolate(&e, x);
            let back = p.decompose(&field);
            assert_eq!(back, e);
        }
    }

    #[test]
    fn decompose_samples_nodally() {
        let p = proj_1d(0.25, BoundaryCondition::Dirichlet);
        let c = p.decompose(&|x: &[f64]| (PI * x[0]).sin());
        let expect = [
            (PI / 4.0).sin(),
            (PI / 2.0).sin(),
            (3.0 * PI / 4.0).sin(),
        ];
        for (a, b) in c.iter().zip(&expect) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn interpolation_error_second_order() {
        let hs = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0];
        let family: Vec<Projector> = hs
            .iter()
            .map(|&h| proj_1d(h, BoundaryCondition::Dirichlet))
            .collect();
        let errs: Vec<f64> = family
            .iter()
            .map(|p| interpolation_error_l2(p, &|x: &[f64]| (PI * x[0]).sin()))
            .collect();
        let slope = fit_log_slope(&hs, &errs);
        assert!((slope - 2.0).abs() < 0.2, "slope {slope}");
    }

    #[test]
    fn constants_reproduced_without_bc() {
        let p = proj_1d(0.25, BoundaryCondition::None);
        let err = interpolation_error_l2(&p, &|_: &[f64]| 3.5);
        assert!(err < 1e-14);
    }

    #[test]
    fn projection_order_sentinel_on_basis_function() {
        let family: Vec<Projector> = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]
            .iter()
            .map(|&h| proj_1d(h, BoundaryCondition::None))
            .collect();
        // piecewise-linear field in the span of every member (kink at 0.5)
        let u = |x: &[f64]| 1.0 - (2.0 * (x[0] - 0.5)).abs();
        let mu = projection_order_estimate(&family, &u).unwrap();
        assert!(mu.is_infinite());
    }

    #[test]
    fn projection_order_of_smooth_field() {
        let family: Vec<Projector> = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0]
            .iter()
            .map(|&h| proj_1d(h, BoundaryCondition::Dirichlet))
            .collect();
        let mu = projection_order_estimate(&family, &|x: &[f64]| (PI * x[0]).sin()).unwrap();
        assert!((mu - 2.0).abs() < 0.2, "mu = {mu}");
    }

    #[test]
    fn too_few_samples_rejected() {
        let family = vec![
            proj_1d(0.25, BoundaryCondition::None),
            proj_1d(0.125, BoundaryCondition::None),
        ];
        assert!(matches!(
            projection_order_estimate(&family, &|x: &[f64]| x[0]),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn expand_2d_matches_bilinear() {
        let g = build_tensor_grid(&[(0.0, 1.0), (0.0, 1.0)], &[0.5, 0.5]).unwrap();
        let p = build_projector(g, BoundaryCondition::None);
        // bilinear field is reproduced exactly
        let u = |x: &[f64]| 1.0 + 2.0 * x[0] + 3.0 * x[1] + 4.0 * x[0] * x[1];
        let c = p.decompose(&u);
        for &pt in &[[0.1, 0.9], [0.3, 0.3], [0.75, 0.25]] {
            assert_relative_eq!(p.interpolate(&c, &pt), u(&pt), epsilon = 1e-14);
        }
    }
}
