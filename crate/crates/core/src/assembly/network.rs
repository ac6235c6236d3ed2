//! Branch network and stream-function loop basis.
//!
//! Every mesh edge of the cell grid is a branch. The current of a branch
//! flows *across* its edge, between the centres of the adjacent cells, so
//! the conducting filament of a branch is the dual segment perpendicular
//! to the edge. A loop basis function is the unit circulation around one
//! interior mesh node: it crosses the four edges incident to that node.
//! Boundary edges belong to no loop, which enforces zero normal current on
//! the plate boundary.

use nalgebra::DMatrix;

use crate::geometry::{GridSpec, Point3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeAxis {
    /// Edge between nodes `(i, j)` and `(i + 1, j)`; current flows along +y.
    Horizontal,
    /// Edge between nodes `(i, j)` and `(i, j + 1)`; current flows along +x.
    Vertical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub axis: EdgeAxis,
    /// Filament start, at the plate mid-plane (m).
    pub start: Point3,
    /// Filament end; `end - start` is the positive current direction (m).
    pub end: Point3,
    /// Filament length ℓ (m).
    pub length: f64,
    /// Conducting cross-section `d·h` (m²).
    pub cross_section: f64,
    /// One or two adjacent cells.
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchNetwork {
    pub grid: GridSpec,
    pub branches: Vec<Branch>,
}

impl BranchNetwork {
    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn horizontal_index(&self, i: usize, j: usize) -> usize {
        j * self.grid.nx + i
    }

    pub fn vertical_index(&self, i: usize, j: usize) -> usize {
        self.grid.nx * (self.grid.ny + 1) + j * (self.grid.nx + 1) + i
    }
}

/// Branch-by-loop incidence, stored by column.
///
/// Column `k` lists the `(branch, ±1)` pairs of the elementary loop around
/// interior node `k`, counter-clockwise seen from +z.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopBasis {
    pub branch_count: usize,
    pub columns: Vec<[(usize, f64); 4]>,
}

impl LoopBasis {
    pub fn loop_count(&self) -> usize {
        self.columns.len()
    }

    /// Dense `branches × loops` incidence matrix `W`.
    pub fn dense(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.branch_count, self.columns.len());
        for (k, col) in self.columns.iter().enumerate() {
            for &(b, s) in col {
                w[(b, k)] = s;
            }
        }
        w
    }

    /// Branch currents `W x` for loop currents `x`.
    pub fn branch_currents(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.branch_count];
        for (col, &xk) in self.columns.iter().zip(x) {
            for &(b, s) in col {
                out[b] += s * xk;
            }
        }
        out
    }

    /// Sorted list of branches that carry current for some loop.
    pub fn active_branches(&self) -> Vec<usize> {
        let mut active: Vec<usize> = self
            .columns
            .iter()
            .flat_map(|c| c.iter().map(|&(b, _)| b))
            .collect();
        active.sort_unstable();
        active.dedup();
        active
    }
}

/// Builds the branch network and the loop basis for `grid`.
pub fn assemble_loop_basis(grid: &GridSpec) -> (BranchNetwork, LoopBasis) {
    let (nx, ny, h) = (grid.nx, grid.ny, grid.h);
    let cross_section = grid.d * h;
    let mut branches = Vec::with_capacity(grid.branch_count());

    for j in 0..=ny {
        for i in 0..nx {
            let x = grid.origin[0] + (i as f64 + 0.5) * h;
            let y0 = grid.origin[1] + (j as f64 - 0.5) * h;
            let mut cells = Vec::with_capacity(2);
            if j > 0 {
                cells.push(grid.cell_index(i, j - 1));
            }
            if j < ny {
                cells.push(grid.cell_index(i, j));
            }
            branches.push(Branch {
                axis: EdgeAxis::Horizontal,
                start: [x, y0, 0.0],
                end: [x, y0 + h, 0.0],
                length: h,
                cross_section,
                cells,
            });
        }
    }
    for j in 0..ny {
        for i in 0..=nx {
            let x0 = grid.origin[0] + (i as f64 - 0.5) * h;
            let y = grid.origin[1] + (j as f64 + 0.5) * h;
            let mut cells = Vec::with_capacity(2);
            if i > 0 {
                cells.push(grid.cell_index(i - 1, j));
            }
            if i < nx {
                cells.push(grid.cell_index(i, j));
            }
            branches.push(Branch {
                axis: EdgeAxis::Vertical,
                start: [x0, y, 0.0],
                end: [x0 + h, y, 0.0],
                length: h,
                cross_section,
                cells,
            });
        }
    }

    let network = BranchNetwork {
        grid: *grid,
        branches,
    };

    let mut columns = Vec::with_capacity(grid.loop_count());
    for j in 1..ny {
        for i in 1..nx {
            columns.push([
                (network.vertical_index(i, j - 1), 1.0),
                (network.horizontal_index(i, j), 1.0),
                (network.vertical_index(i, j), -1.0),
                (network.horizontal_index(i - 1, j), -1.0),
            ]);
        }
    }
    let basis = LoopBasis {
        branch_count: network.len(),
        columns,
    };
    (network, basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grid;

    #[test]
    fn counts_small_grids() {
        let g = build_grid(2, 2, 0.01, 0.001, [0.0, 0.0]).unwrap();
        let (net, basis) = assemble_loop_basis(&g);
        assert_eq!(net.len(), 12);
        assert_eq!(basis.loop_count(), 1);
        let w = basis.dense();
        assert_eq!(w.column(0).iter().filter(|v| **v != 0.0).count(), 4);

        let g = build_grid(3, 3, 0.01, 0.001, [0.0, 0.0]).unwrap();
        let (net, basis) = assemble_loop_basis(&g);
        assert_eq!(net.len(), 24);
        assert_eq!(basis.loop_count(), 4);
    }

    #[test]
    fn branch_count_formula() {
        for (nx, ny) in [(2, 5), (7, 3), (8, 8)] {
            let g = build_grid(nx, ny, 0.01, 0.001, [0.0, 0.0]).unwrap();
            let (net, _) = assemble_loop_basis(&g);
            assert_eq!(net.len(), nx * (ny + 1) + ny * (nx + 1));
        }
    }

    #[test]
    fn loop_filaments_form_closed_squares() {
        let g = build_grid(4, 3, 0.01, 0.001, [0.1, -0.2]).unwrap();
        let (net, basis) = assemble_loop_basis(&g);
        for col in &basis.columns {
            // Signed sum of the filament vectors of a closed loop vanishes.
            let mut sum = [0.0; 3];
            for &(b, s) in col {
                let br = &net.branches[b];
                for k in 0..3 {
                    sum[k] += s * (br.end[k] - br.start[k]);
                }
            }
            assert!(sum.iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn incidence_has_full_column_rank() {
        let g = build_grid(5, 4, 0.01, 0.001, [0.0, 0.0]).unwrap();
        let (_, basis) = assemble_loop_basis(&g);
        let w = basis.dense();
        let sv = w.singular_values();
        assert!(sv.iter().all(|s| *s > 1e-8));
    }

    /// Kirchhoff current law by brute force: for every cell, the signed sum
    /// of currents leaving it through its four edges is zero, and no current
    /// crosses the plate boundary.
    #[test]
    fn loop_currents_are_divergence_free() {
        let g = build_grid(6, 5, 0.01, 0.001, [0.0, 0.0]).unwrap();
        let (net, basis) = assemble_loop_basis(&g);
        let x: Vec<f64> = (0..basis.loop_count())
            .map(|k| ((k * 7919) % 101) as f64 / 50.0 - 1.0)
            .collect();
        let ib = basis.branch_currents(&x);
        for j in 0..g.ny {
            for i in 0..g.nx {
                // Horizontal edges carry +y current, vertical edges +x current.
                let out = ib[net.horizontal_index(i, j + 1)] - ib[net.horizontal_index(i, j)]
                    + ib[net.vertical_index(i + 1, j)]
                    - ib[net.vertical_index(i, j)];
                assert!(out.abs() < 1e-14, "cell ({i},{j}): {out}");
            }
        }
        for i in 0..g.nx {
            assert_eq!(ib[net.horizontal_index(i, 0)], 0.0);
            assert_eq!(ib[net.horizontal_index(i, g.ny)], 0.0);
        }
        for j in 0..g.ny {
            assert_eq!(ib[net.vertical_index(0, j)], 0.0);
            assert_eq!(ib[net.vertical_index(g.nx, j)], 0.0);
        }
    }
}
