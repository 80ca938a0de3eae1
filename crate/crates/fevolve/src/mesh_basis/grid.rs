//! Tensor-product grids over boxes in up to three dimensions.

use serde_json::json;

use crate::error::{Error, Result};

/// Tensor-product node set over a box, lexicographically ordered with the
/// first axis slowest.
#[derive(Debug, Clone)]
pub struct Grid {
    dim: usize,
    bounds: Vec<(f64, f64)>,
    h: Vec<f64>,
    counts: Vec<usize>,
}

/// Build a conforming tensor grid. Each axis length must be an integer
/// multiple of its spacing (1e-12 relative).
pub fn build_tensor_grid(bounds: &[(f64, f64)], h: &[f64]) -> Result<Grid> {
    let dim = bounds.len();
    if dim == 0 || dim > 3 {
        return Err(Error::DimensionUnsupported(dim));
    }
    if h.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: h.len(),
        });
    }
    let mut counts = Vec::with_capacity(dim);
    for (axis, (&(lo, hi), &ha)) in bounds.iter().zip(h).enumerate() {
        let length = hi - lo;
        assert!(length > 0.0 && ha > 0.0, "degenerate axis {axis}");
        let cells = length / ha;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-12 * cells.abs().max(1.0) || rounded < 1.0 {
            return Err(Error::NonConformingSpacing {
                axis,
                length,
                h: ha,
            });
        }
        counts.push(rounded as usize + 1);
    }
    Ok(Grid {
        dim,
        bounds: bounds.to_vec(),
        h: h.to_vec(),
        counts,
    })
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Nodes per axis.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn node_count(&self) -> usize {
        self.counts.iter().product()
    }

    /// Cells per axis.
    pub fn cell_counts(&self) -> Vec<usize> {
        self.counts.iter().map(|&c| c - 1).collect()
    }

    pub fn cell_count(&self) -> usize {
        self.cell_counts().iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    /// Flat node index -> per-axis indices.
    pub fn multi_index(&self, k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        let mut rem = k;
        for axis in (0..self.dim).rev() {
            idx[axis] = rem % self.counts[axis];
            rem /= self.counts[axis];
        }
        idx
    }

    /// Per-axis indices -> flat node index.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut k = 0;
        for axis in 0..self.dim {
            debug_assert!(idx[axis] < self.counts[axis]);
            k = k * self.counts[axis] + idx[axis];
        }
        k
    }

    pub fn node_coords(&self, k: usize) -> Vec<f64> {
        self.multi_index(k)
            .iter()
            .enumerate()
            .map(|(axis, &i)| self.bounds[axis].0 + i as f64 * self.h[axis])
            .collect()
    }

    /// True when the node sits on a box face.
    pub fn is_boundary(&self, k: usize) -> bool {
        self.multi_index(k)
            .iter()
            .enumerate()
            .any(|(axis, &i)| i == 0 || i == self.counts[axis] - 1)
    }

    pub fn interior_mask(&self) -> Vec<bool> {
        (0..self.node_count()).map(|k| !self.is_boundary(k)).collect()
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.node_count()).map(|k| self.is_boundary(k)).collect()
    }

    /// Flat cell index -> per-axis cell indices.
    pub fn cell_multi_index(&self, c: usize) -> Vec<usize> {
        let cc = self.cell_counts();
        let mut idx = vec![0; self.dim];
        let mut rem = c;
        for axis in (0..self.dim).rev() {
            idx[axis] = rem % cc[axis];
            rem /= cc[axis];
        }
        idx
    }

    /// Node indices of the 2^dim corners of a cell, ordered by corner bits
    /// (bit b set = upper corner along axis b).
    pub fn cell_corner_nodes(&self, cell: &[usize]) -> Vec<usize> {
        let corners = 1usize << self.dim;
        (0..corners)
            .map(|c| {
                let idx: Vec<usize> = (0..self.dim)
                    .map(|axis| cell[axis] + ((c >> axis) & 1))
                    .collect();
                self.flat_index(&idx)
            })
            .collect()
    }

    /// Lower corner coordinates of a cell.
    pub fn cell_origin(&self, cell: &[usize]) -> Vec<f64> {
        (0..self.dim)
            .map(|axis| self.bounds[axis].0 + cell[axis] as f64 * self.h[axis])
            .collect()
    }

    pub fn summary(&self) -> serde_json::Value {
        json!({
            "dim": self.dim,
            "bounds": self.bounds,
            "h": self.h,
            "node_count": self.node_count(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_quarter_spacing() {
        let g = build_tensor_grid(&[(0.0, 1.0)], &[0.25]).unwrap();
        assert_eq!(g.node_count(), 5);
        let coords: Vec<f64> = (0..5).map(|k| g.node_coords(k)[0]).collect();
        assert_eq!(coords, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.interior_mask().iter().filter(|&&b| b).count(), 3);
    }

    #[test]
    fn unit_square_half_spacing() {
        let g = build_tensor_grid(&[(0.0, 1.0), (0.0, 1.0)], &[0.5, 0.5]).unwrap();
        assert_eq!(g.node_count(), 9);
        let interior: Vec<usize> = (0..9).filter(|&k| !g.is_boundary(k)).collect();
        assert_eq!(interior.len(), 1);
        assert_eq!(g.node_coords(interior[0]), vec![0.5, 0.5]);
    }

    #[test]
    fn nonconforming_spacing_rejected() {
        assert!(matches!(
            build_tensor_grid(&[(0.0, 1.0)], &[0.3]),
            Err(Error::NonConformingSpacing { .. })
        ));
    }

    #[test]
    fn masks_partition_nodes() {
        let g = build_tensor_grid(&[(0.0, 1.0), (-1.0, 1.0)], &[0.25, 0.5]).unwrap();
        let int = g.interior_mask();
        let bnd = g.boundary_mask();
        assert!(int.iter().zip(&bnd).all(|(a, b)| a ^ b));
    }

    #[test]
    fn four_dimensions_rejected() {
        let b = [(0.0, 1.0); 4];
        assert!(matches!(
            build_tensor_grid(&b, &[0.5; 4]),
            Err(Error::DimensionUnsupported(4))
        ));
    }

    #[test]
    fn index_map_round_trips() {
        let g = build_tensor_grid(&[(0.0, 1.0), (0.0, 2.0)], &[0.25, 0.5]).unwrap();
        for k in 0..g.node_count() {
            assert_eq!(g.flat_index(&g.multi_index(k)), k);
        }
    }
}
