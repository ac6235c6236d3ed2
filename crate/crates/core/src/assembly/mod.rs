//! Discrete operators of the loop network.
//!
//! * `L = Wᵀ L_b W`: loop inductance from branch partial inductances
//! * `R(η) = Wᵀ diag(r_b) W`: loop resistance, linear and monotone in η
//! * `M = Wᵀ M_b`: conductor-loop to coil mutual inductance; the
//!   coil-to-conductor coupling is `Mᵀ`, the same matrix.
//!
//! Entries are independent, so assembly runs over rows in parallel and
//! produces bit-identical results for any thread count.

mod filament;
mod network;

pub use filament::{
    parallel_filaments, polyline_mutual, segment_distance, segment_mutual, segment_potential,
    self_partial_inductance,
};
pub use network::{assemble_loop_basis, Branch, BranchNetwork, EdgeAxis, LoopBasis};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{MitError, Result};
use crate::geometry::{CoilSet, GridSpec, ResistivityMap, Scenario};

/// The loop-space matrices of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrices {
    /// `n_c × n_c` loop inductance (H).
    pub l: DMatrix<f64>,
    /// `n_c × n_c` loop resistance (Ω).
    pub r: DMatrix<f64>,
    /// `n_c × n_s` loop-to-coil mutual inductance (H).
    pub m: DMatrix<f64>,
}

impl OperatorMatrices {
    pub fn loop_count(&self) -> usize {
        self.l.nrows()
    }

    pub fn coil_count(&self) -> usize {
        self.m.ncols()
    }

    /// Conductor-to-coil coupling, the adjoint of [`Self::m`].
    pub fn m_adjoint(&self) -> DMatrix<f64> {
        self.m.transpose()
    }
}

/// Default filament radius for a grid, a quarter cell.
pub fn default_wire_radius(grid: &GridSpec) -> f64 {
    0.25 * grid.h
}

/// Branch resistances `r_b = η_b ℓ / (d h)`, `η_b` the mean of adjacent cells.
pub fn branch_resistances(network: &BranchNetwork, eta: &ResistivityMap) -> Result<Vec<f64>> {
    if eta.len() != network.grid.cell_count() {
        return Err(MitError::MapLengthMismatch {
            expected: network.grid.cell_count(),
            got: eta.len(),
        });
    }
    let values = eta.values();
    network
        .branches
        .iter()
        .map(|br| {
            let mean = br.cells.iter().map(|&c| values[c]).sum::<f64>() / br.cells.len() as f64;
            if !(mean.is_finite() && mean > 0.0) {
                return Err(MitError::NonPositiveResistivity {
                    value: mean,
                    context: "branch average".into(),
                });
            }
            Ok(mean * br.length / br.cross_section)
        })
        .collect()
}

/// `R = Wᵀ diag(r_b) W`.
pub fn assemble_resistance(
    network: &BranchNetwork,
    basis: &LoopBasis,
    eta: &ResistivityMap,
) -> Result<DMatrix<f64>> {
    let rb = branch_resistances(network, eta)?;
    let mut touching: Vec<Vec<(usize, f64)>> = vec![Vec::new(); network.len()];
    for (k, col) in basis.columns.iter().enumerate() {
        for &(b, s) in col {
            touching[b].push((k, s));
        }
    }
    let n = basis.loop_count();
    let mut r = DMatrix::zeros(n, n);
    for (b, loops) in touching.iter().enumerate() {
        for &(i, si) in loops {
            for &(j, sj) in loops {
                r[(i, j)] += si * sj * rb[b];
            }
        }
    }
    Ok(r)
}

/// Partial inductance matrix over `branches` (indices into the network).
pub fn branch_partial_inductance(
    network: &BranchNetwork,
    branches: &[usize],
    wire_radius: f64,
) -> DMatrix<f64> {
    let n = branches.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|p| {
            let bp = &network.branches[branches[p]];
            (p..n)
                .map(|q| {
                    if p == q {
                        self_partial_inductance(bp.length, wire_radius)
                    } else {
                        let bq = &network.branches[branches[q]];
                        segment_mutual(bp.start, bp.end, bq.start, bq.end)
                    }
                })
                .collect()
        })
        .collect();
    let mut lb = DMatrix::zeros(n, n);
    for (p, row) in rows.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            lb[(p, p + k)] = v;
            lb[(p + k, p)] = v;
        }
    }
    lb
}

/// `L = Wᵀ L_b W` with PEEC filament partial inductances.
pub fn assemble_inductance(
    network: &BranchNetwork,
    basis: &LoopBasis,
    wire_radius: f64,
) -> Result<DMatrix<f64>> {
    let min_len = network
        .branches
        .iter()
        .map(|b| b.length)
        .fold(f64::INFINITY, f64::min);
    if !(wire_radius.is_finite() && wire_radius > 0.0 && wire_radius < 0.5 * min_len) {
        return Err(MitError::InvalidRadius {
            radius: wire_radius,
            limit: 0.5 * min_len,
        });
    }
    let active = basis.active_branches();
    let mut slot = vec![usize::MAX; network.len()];
    for (k, &b) in active.iter().enumerate() {
        slot[b] = k;
    }
    let lb = branch_partial_inductance(network, &active, wire_radius);

    let n = basis.loop_count();
    let mut l = DMatrix::zeros(n, n);
    for (a, col_a) in basis.columns.iter().enumerate() {
        for b in a..n {
            let col_b = &basis.columns[b];
            let mut acc = 0.0;
            for &(p, sp) in col_a {
                for &(q, sq) in col_b {
                    acc += sp * sq * lb[(slot[p], slot[q])];
                }
            }
            l[(a, b)] = acc;
            l[(b, a)] = acc;
        }
    }
    Ok(l)
}

/// `M = Wᵀ M_b`: mutual inductance between each conductor loop and each coil.
pub fn assemble_coupling(
    network: &BranchNetwork,
    basis: &LoopBasis,
    coils: &CoilSet,
) -> Result<DMatrix<f64>> {
    coils.check_clear_of(&network.grid)?;
    let active = basis.active_branches();
    let mut slot = vec![usize::MAX; network.len()];
    for (k, &b) in active.iter().enumerate() {
        slot[b] = k;
    }
    let mb: Vec<Vec<f64>> = active
        .par_iter()
        .map(|&b| {
            let br = &network.branches[b];
            coils
                .coils
                .iter()
                .map(|coil| {
                    let acc: f64 = coil
                        .segments()
                        .map(|(a, e)| segment_mutual(br.start, br.end, a, e))
                        .sum();
                    coil.orientation().sign() * acc
                })
                .collect()
        })
        .collect();

    let mut m = DMatrix::zeros(basis.loop_count(), coils.len());
    for (a, col) in basis.columns.iter().enumerate() {
        for s in 0..coils.len() {
            m[(a, s)] = col.iter().map(|&(p, sp)| sp * mb[slot[p]][s]).sum();
        }
    }
    Ok(m)
}

/// Geometry-dependent part of the forward model, shared by every
/// resistivity map on the same grid and coil set. Only `R` depends on η.
#[derive(Debug, Clone)]
pub struct ConductorModel {
    pub network: BranchNetwork,
    pub basis: LoopBasis,
    pub wire_radius: f64,
    pub l: DMatrix<f64>,
    pub m: DMatrix<f64>,
}

impl ConductorModel {
    pub fn new(grid: &GridSpec, coils: &CoilSet, wire_radius: f64) -> Result<Self> {
        let (network, basis) = assemble_loop_basis(grid);
        let l = assemble_inductance(&network, &basis, wire_radius)?;
        let m = assemble_coupling(&network, &basis, coils)?;
        Ok(Self {
            network,
            basis,
            wire_radius,
            l,
            m,
        })
    }

    pub fn for_scenario(scenario: &Scenario, wire_radius: Option<f64>) -> Result<Self> {
        let r = wire_radius.unwrap_or_else(|| default_wire_radius(&scenario.grid));
        Self::new(&scenario.grid, &scenario.coils, r)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.network.grid
    }

    pub fn resistance(&self, eta: &ResistivityMap) -> Result<DMatrix<f64>> {
        assemble_resistance(&self.network, &self.basis, eta)
    }

    pub fn matrices(&self, eta: &ResistivityMap) -> Result<OperatorMatrices> {
        Ok(OperatorMatrices {
            l: self.l.clone(),
            r: self.resistance(eta)?,
            m: self.m.clone(),
        })
    }
}

/// Assembles `L`, `R(η)` and `M` for a scenario.
pub fn assemble_scenario(scenario: &Scenario, wire_radius: Option<f64>) -> Result<OperatorMatrices> {
    ConductorModel::for_scenario(scenario, wire_radius)?.matrices(&scenario.eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Coil, CoilSet, ResistivityMap};
    use crate::linalg::sym_eigenvalues;

    fn grid(n: usize) -> GridSpec {
        build_grid(n, n, 0.01, 0.001, [0.0, 0.0]).unwrap()
    }

    /// Hand-assembled 2x2 network: one loop over four interior branches.
    #[test]
    fn single_loop_resistance() {
        let g = grid(2);
        let (net, basis) = assemble_loop_basis(&g);
        let eta = ResistivityMap::uniform(&g, 1e-6).unwrap();
        let rb = branch_resistances(&net, &eta).unwrap();
        assert!(rb.iter().all(|r| (r - 1e-3).abs() < 1e-18));
        let r = assemble_resistance(&net, &basis, &eta).unwrap();
        assert_eq!(r.shape(), (1, 1));
        assert!((r[(0, 0)] - 4e-3).abs() < 1e-17);
    }

    #[test]
    fn resistance_is_linear_in_eta() {
        let g = grid(4);
        let (net, basis) = assemble_loop_basis(&g);
        let eta = ResistivityMap::new((0..16).map(|k| 1e-6 * (1.0 + 0.1 * k as f64)).collect()).unwrap();
        let r1 = assemble_resistance(&net, &basis, &eta).unwrap();
        let r3 = assemble_resistance(&net, &basis, &eta.scaled(3.0).unwrap()).unwrap();
        assert!((&r3 - &r1 * 3.0).norm() <= 1e-15 * r1.norm());
    }

    #[test]
    fn resistance_is_loewner_monotone() {
        let g = grid(5);
        let (net, basis) = assemble_loop_basis(&g);
        for seed in 0..10u64 {
            let base: Vec<f64> = (0..25)
                .map(|k| 1e-6 * (1.0 + ((k as u64 * 31 + seed * 17) % 13) as f64 / 4.0))
                .collect();
            let bumped: Vec<f64> = base
                .iter()
                .enumerate()
                .map(|(k, v)| if (k as u64 + seed) % 3 == 0 { v * 2.5 } else { *v })
                .collect();
            let r1 = assemble_resistance(&net, &basis, &ResistivityMap::new(base).unwrap()).unwrap();
            let r2 = assemble_resistance(&net, &basis, &ResistivityMap::new(bumped).unwrap()).unwrap();
            let ev = sym_eigenvalues(&(r2 - &r1));
            assert!(ev.iter().all(|&e| e >= -1e-14 * r1.norm()));
        }
    }

    #[test]
    fn inductance_rejects_bad_radius() {
        let g = grid(3);
        let (net, basis) = assemble_loop_basis(&g);
        assert!(matches!(
            assemble_inductance(&net, &basis, 0.0),
            Err(MitError::InvalidRadius { .. })
        ));
        assert!(matches!(
            assemble_inductance(&net, &basis, 0.005),
            Err(MitError::InvalidRadius { .. })
        ));
    }

    #[test]
    fn inductance_is_spd() {
        for n in [2, 3, 5, 8] {
            let g = grid(n);
            let (net, basis) = assemble_loop_basis(&g);
            let l = assemble_inductance(&net, &basis, default_wire_radius(&g)).unwrap();
            assert_eq!(l, l.transpose());
            let ev = sym_eigenvalues(&l);
            assert!(ev[0] > 0.0, "n = {n}: min eig {}", ev[0]);
        }
    }

    /// The single loop of a 2x2 grid is a square filament of side h.
    #[test]
    fn single_loop_inductance_is_square_loop() {
        let g = grid(2);
        let (net, basis) = assemble_loop_basis(&g);
        let r = default_wire_radius(&g);
        let l = assemble_inductance(&net, &basis, r).unwrap();
        let h = g.h;
        let side_self = self_partial_inductance(h, r);
        let opposite = parallel_filaments(h, 0.0, h, h);
        let want = 4.0 * side_self - 4.0 * opposite;
        assert!(((l[(0, 0)] - want) / want).abs() < 1e-14);
    }

    fn square_coil(center: [f64; 2], side: f64, z: f64) -> Coil {
        Coil::rectangle(center, side, side, z).unwrap()
    }

    #[test]
    fn coupling_decays_with_distance() {
        let g = grid(2);
        let (net, basis) = assemble_loop_basis(&g);
        // Same footprint as the conductor loop: cell centres around node (1, 1).
        let mut prev = f64::INFINITY;
        for z in [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0] {
            let coils = CoilSet::new(vec![square_coil([0.01, 0.01], 0.01, z)]);
            let m = assemble_coupling(&net, &basis, &coils).unwrap()[(0, 0)];
            assert!(m > 0.0 && m < prev, "z = {z}: {m}");
            prev = m;
        }
        assert!(prev < 1e-6 * self_partial_inductance(0.01, 0.0025));
    }

    #[test]
    fn coupling_equals_loop_polyline_mutual() {
        let g = grid(2);
        let (net, basis) = assemble_loop_basis(&g);
        let coil = Coil::regular_polygon([0.012, 0.009], 0.007, 0.004, 9).unwrap();
        let m = assemble_coupling(&net, &basis, &CoilSet::new(vec![coil.clone()])).unwrap()[(0, 0)];
        let loop_poly = vec![
            [0.005, 0.005, 0.0],
            [0.015, 0.005, 0.0],
            [0.015, 0.015, 0.0],
            [0.005, 0.015, 0.0],
            [0.005, 0.005, 0.0],
        ];
        let a = polyline_mutual(&loop_poly, coil.vertices());
        let b = polyline_mutual(coil.vertices(), &loop_poly);
        assert!(((m - a) / a).abs() < 1e-12);
        assert!(((a - b) / a).abs() < 1e-12);
    }

    #[test]
    fn reversed_coil_flips_coupling() {
        let g = grid(3);
        let (net, basis) = assemble_loop_basis(&g);
        let coil = square_coil([0.015, 0.015], 0.012, 0.003);
        let mut rev_vertices = coil.vertices().to_vec();
        rev_vertices.reverse();
        let reversed = Coil::new(rev_vertices, crate::geometry::Orientation::Forward).unwrap();
        let flagged = Coil::new(coil.vertices().to_vec(), crate::geometry::Orientation::Reverse).unwrap();
        let m = assemble_coupling(&net, &basis, &CoilSet::new(vec![coil, reversed, flagged])).unwrap();
        for a in 0..m.nrows() {
            assert!((m[(a, 0)] + m[(a, 1)]).abs() <= 1e-12 * m[(a, 0)].abs());
            assert_eq!(m[(a, 0)], -m[(a, 2)]);
        }
    }

    #[test]
    fn coupling_rejects_intersecting_coil() {
        let g = grid(3);
        let (net, basis) = assemble_loop_basis(&g);
        let coils = CoilSet::new(vec![square_coil([0.015, 0.015], 0.01, 0.0)]);
        assert_eq!(
            assemble_coupling(&net, &basis, &coils),
            Err(MitError::CoilIntersectsConductor { index: 0 })
        );
    }
}
