//! Discrete conducting domain, resistivity maps, cell sets and source coils.
//!
//! The conductor is a thin rectangular plate of `nx × ny` square cells of
//! edge `h`, thickness `d`, whose mid-plane is `z = 0`. Cell `(i, j)` has
//! linear index `j * nx + i`; mesh node `(i, j)` sits at
//! `origin + (i h, j h)`.

use std::collections::BTreeSet;

use crate::error::{MitError, Result};

pub type Point3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    /// Cell edge length (m).
    pub h: f64,
    /// Plate thickness (m).
    pub d: f64,
    /// Position of mesh node `(0, 0)` (m).
    pub origin: [f64; 2],
}

impl GridSpec {
    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    /// Number of interior mesh nodes, one loop degree of freedom each.
    pub fn loop_count(&self) -> usize {
        (self.nx - 1) * (self.ny - 1)
    }

    pub fn branch_count(&self) -> usize {
        self.nx * (self.ny + 1) + self.ny * (self.nx + 1)
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    pub fn cell_coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    pub fn node(&self, i: usize, j: usize) -> Point3 {
        [
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + j as f64 * self.h,
            0.0,
        ]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point3 {
        [
            self.origin[0] + (i as f64 + 0.5) * self.h,
            self.origin[1] + (j as f64 + 0.5) * self.h,
            0.0,
        ]
    }

    /// Axis-aligned bounding box of the plate volume, `(min, max)`.
    pub fn plate_box(&self) -> (Point3, Point3) {
        (
            [self.origin[0], self.origin[1], -0.5 * self.d],
            [
                self.origin[0] + self.nx as f64 * self.h,
                self.origin[1] + self.ny as f64 * self.h,
                0.5 * self.d,
            ],
        )
    }

    /// True if the closed segment `a-b` touches the closed plate volume.
    pub fn segment_hits_plate(&self, a: Point3, b: Point3) -> bool {
        let (lo, hi) = self.plate_box();
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        for k in 0..3 {
            let dir = b[k] - a[k];
            if dir == 0.0 {
                if a[k] < lo[k] || a[k] > hi[k] {
                    return false;
                }
                continue;
            }
            let mut ta = (lo[k] - a[k]) / dir;
            let mut tb = (hi[k] - a[k]) / dir;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

/// Builds and validates a [`GridSpec`].
pub fn build_grid(nx: usize, ny: usize, h: f64, d: f64, origin: [f64; 2]) -> Result<GridSpec> {
    if nx < 2 || ny < 2 {
        return Err(MitError::DimensionTooSmall { nx, ny });
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(MitError::InvalidGrid(format!("cell size h = {h} must be positive")));
    }
    if !(d.is_finite() && d > 0.0) {
        return Err(MitError::InvalidGrid(format!("thickness d = {d} must be positive")));
    }
    if !(origin[0].is_finite() && origin[1].is_finite()) {
        return Err(MitError::InvalidGrid("origin must be finite".into()));
    }
    Ok(GridSpec { nx, ny, h, d, origin })
}

fn check_resistivity(value: f64, context: impl Into<String>) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(MitError::NonPositiveResistivity {
            value,
            context: context.into(),
        })
    }
}

/// Per-cell resistivity (Ω·m), strictly positive and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ResistivityMap {
    values: Vec<f64>,
}

impl ResistivityMap {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (k, &v) in values.iter().enumerate() {
            check_resistivity(v, format!("cell {k}"))?;
        }
        Ok(Self { values })
    }

    pub fn uniform(grid: &GridSpec, eta: f64) -> Result<Self> {
        check_resistivity(eta, "uniform value")?;
        Ok(Self {
            values: vec![eta; grid.cell_count()],
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::MAX, f64::min)
    }

    /// Entrywise `self ≤ other`.
    pub fn le(&self, other: &ResistivityMap) -> bool {
        self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a <= b)
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * k).collect())
    }

    /// Returns a copy with `cells` set to `value`.
    pub fn with_cells(&self, cells: &CellSet, value: f64) -> Result<Self> {
        check_resistivity(value, "cell override")?;
        let mut values = self.values.clone();
        for c in cells.iter() {
            let slot = values.get_mut(c).ok_or(MitError::CellOutOfRange {
                index: c,
                count: self.values.len(),
            })?;
            *slot = value;
        }
        Ok(Self { values })
    }
}

/// Sorted, duplicate-free set of cell indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct CellSet {
    cells: Vec<usize>,
}

impl CellSet {
    /// Validates indices against `cell_count`; duplicates are rejected.
    pub fn new(cells: impl IntoIterator<Item = usize>, cell_count: usize) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for c in cells {
            if c >= cell_count {
                return Err(MitError::CellOutOfRange {
                    index: c,
                    count: cell_count,
                });
            }
            if !seen.insert(c) {
                return Err(MitError::DuplicateCell(c));
            }
        }
        Ok(Self {
            cells: seen.into_iter().collect(),
        })
    }

    pub fn empty() -> Self {
        Self { cells: Vec::new() }
    }

    pub fn all(grid: &GridSpec) -> Self {
        Self {
            cells: (0..grid.cell_count()).collect(),
        }
    }

    /// Rectangle of cells starting at `(i0, j0)`, clipped to the grid.
    pub fn rect(grid: &GridSpec, i0: usize, j0: usize, w: usize, h: usize) -> Self {
        let mut cells = Vec::new();
        for j in j0..(j0 + h).min(grid.ny) {
            for i in i0..(i0 + w).min(grid.nx) {
                cells.push(grid.cell_index(i, j));
            }
        }
        Self { cells }
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.cells.binary_search(&cell).is_ok()
    }

    pub fn is_subset(&self, other: &CellSet) -> bool {
        self.cells.iter().all(|c| other.contains(*c))
    }

    pub fn union(&self, other: &CellSet) -> CellSet {
        let set: BTreeSet<usize> = self.iter().chain(other.iter()).collect();
        CellSet {
            cells: set.into_iter().collect(),
        }
    }

    pub fn intersection(&self, other: &CellSet) -> CellSet {
        CellSet {
            cells: self.iter().filter(|c| other.contains(*c)).collect(),
        }
    }
}

/// Piecewise map: `eta_i` on `inclusion`, `eta_bg` elsewhere.
pub fn make_inclusion_map(
    grid: &GridSpec,
    eta_bg: f64,
    inclusion: &CellSet,
    eta_i: f64,
) -> Result<ResistivityMap> {
    check_resistivity(eta_bg, "background")?;
    check_resistivity(eta_i, "inclusion")?;
    let count = grid.cell_count();
    if let Some(bad) = inclusion.iter().find(|&c| c >= count) {
        return Err(MitError::CellOutOfRange { index: bad, count });
    }
    let mut values = vec![eta_bg; count];
    for c in inclusion.iter() {
        values[c] = eta_i;
    }
    Ok(ResistivityMap { values })
}

/// Block start positions along one axis; the last block reaches the edge.
fn block_starts(n: usize, block: usize, stride: usize) -> Vec<usize> {
    let mut starts = vec![0];
    let mut pos = 0;
    while pos + block < n {
        pos += stride;
        starts.push(pos);
    }
    starts
}

/// Tiles the grid with `block_w × block_h` rectangles moved by `stride`.
///
/// Blocks are clipped at the far edges. A stride larger than the block is
/// reduced to the block size so that the union always covers the grid.
pub fn cover_with_test_elements(
    grid: &GridSpec,
    block_w: usize,
    block_h: usize,
    stride: usize,
) -> Vec<CellSet> {
    let block_w = block_w.max(1);
    let block_h = block_h.max(1);
    let stride = stride.max(1);
    let xs = block_starts(grid.nx, block_w, stride.min(block_w));
    let ys = block_starts(grid.ny, block_h, stride.min(block_h));
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &j0 in &ys {
        for &i0 in &xs {
            out.push(CellSet::rect(grid, i0, j0, block_w, block_h));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    #[default]
    Forward,
    Reverse,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Forward => 1.0,
            Orientation::Reverse => -1.0,
        }
    }
}

/// Closed filament polyline carrying unit current.
#[derive(Debug, Clone, PartialEq)]
pub struct Coil {
    vertices: Vec<Point3>,
    orientation: Orientation,
}

impl Coil {
    /// `vertices` must be closed (first == last) with at least three
    /// distinct points.
    pub fn new(vertices: Vec<Point3>, orientation: Orientation) -> Result<Self> {
        let bad = |reason: &str| MitError::InvalidCoil {
            index: 0,
            reason: reason.to_string(),
        };
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(bad("non-finite vertex"));
        }
        if vertices.len() < 4 || vertices.first() != vertices.last() {
            return Err(bad("polyline must be closed (first vertex = last vertex)"));
        }
        let mut distinct: Vec<Point3> = Vec::new();
        for v in &vertices[..vertices.len() - 1] {
            if !distinct.contains(v) {
                distinct.push(*v);
            }
        }
        if distinct.len() < 3 {
            return Err(bad("need at least 3 distinct vertices"));
        }
        if vertices.windows(2).any(|w| w[0] == w[1]) {
            return Err(bad("zero-length segment"));
        }
        Ok(Self {
            vertices,
            orientation,
        })
    }

    /// Axis-aligned rectangle in the plane `z`, counter-clockwise seen from +z.
    pub fn rectangle(center: [f64; 2], width: f64, height: f64, z: f64) -> Result<Self> {
        let (cx, cy) = (center[0], center[1]);
        let (hw, hh) = (0.5 * width, 0.5 * height);
        Self::new(
            vec![
                [cx - hw, cy - hh, z],
                [cx + hw, cy - hh, z],
                [cx + hw, cy + hh, z],
                [cx - hw, cy + hh, z],
                [cx - hw, cy - hh, z],
            ],
            Orientation::Forward,
        )
    }

    /// Regular polygon with `sides` vertices on a circle in the plane `z`.
    pub fn regular_polygon(center: [f64; 2], radius: f64, z: f64, sides: usize) -> Result<Self> {
        let mut vertices: Vec<Point3> = (0..sides)
            .map(|k| {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / sides as f64;
                [
                    center[0] + radius * phi.cos(),
                    center[1] + radius * phi.sin(),
                    z,
                ]
            })
            .collect();
        if let Some(first) = vertices.first().copied() {
            vertices.push(first);
        }
        Self::new(vertices, Orientation::Forward)
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point3, Point3)> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoilSet {
    pub coils: Vec<Coil>,
}

impl CoilSet {
    pub fn new(coils: Vec<Coil>) -> Self {
        Self { coils }
    }

    pub fn len(&self) -> usize {
        self.coils.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coils.is_empty()
    }

    /// Fails if any coil segment touches the plate volume of `grid`.
    pub fn check_clear_of(&self, grid: &GridSpec) -> Result<()> {
        for (index, coil) in self.coils.iter().enumerate() {
            if coil.segments().any(|(a, b)| grid.segment_hits_plate(a, b)) {
                return Err(MitError::CoilIntersectsConductor { index });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: GridSpec,
    pub eta: ResistivityMap,
    pub coils: CoilSet,
}

impl Scenario {
    pub fn new(grid: GridSpec, eta: ResistivityMap, coils: CoilSet) -> Result<Self> {
        if eta.len() != grid.cell_count() {
            return Err(MitError::MapLengthMismatch {
                expected: grid.cell_count(),
                got: eta.len(),
            });
        }
        if coils.is_empty() {
            return Err(MitError::InvalidInput("at least one coil is required".into()));
        }
        coils.check_clear_of(&grid)?;
        Ok(Self { grid, eta, coils })
    }

    pub fn with_eta(&self, eta: ResistivityMap) -> Result<Self> {
        Self::new(self.grid, eta, self.coils.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(nx: usize, ny: usize) -> GridSpec {
        build_grid(nx, ny, 0.01, 0.001, [0.0, 0.0]).unwrap()
    }

    #[test]
    fn grid_counts() {
        let g = grid(2, 2);
        assert_eq!((g.cell_count(), g.loop_count()), (4, 1));
        let g = grid(3, 3);
        assert_eq!((g.cell_count(), g.loop_count()), (9, 4));
    }

    #[test]
    fn grid_too_small() {
        assert_eq!(
            build_grid(1, 5, 0.01, 0.001, [0.0, 0.0]),
            Err(MitError::DimensionTooSmall { nx: 1, ny: 5 })
        );
        assert!(build_grid(3, 3, 0.0, 0.001, [0.0, 0.0]).is_err());
        assert!(build_grid(3, 3, 0.01, -1.0, [0.0, 0.0]).is_err());
    }

    #[test]
    fn inclusion_map_cases() {
        let g = grid(3, 3);
        let inc = CellSet::new([4], 9).unwrap();
        let map = make_inclusion_map(&g, 1e-6, &inc, 1e-5).unwrap();
        for (k, v) in map.values().iter().enumerate() {
            assert_eq!(*v, if k == 4 { 1e-5 } else { 1e-6 });
        }
        let map = make_inclusion_map(&g, 1e-6, &CellSet::empty(), 1e-5).unwrap();
        assert!(map.values().iter().all(|&v| v == 1e-6));

        // A cell set built for a larger grid.
        let inc = CellSet::new([9], 16).unwrap();
        assert_eq!(
            make_inclusion_map(&g, 1e-6, &inc, 1e-5),
            Err(MitError::CellOutOfRange { index: 9, count: 9 })
        );
        assert!(matches!(
            make_inclusion_map(&g, 0.0, &CellSet::empty(), 1e-5),
            Err(MitError::NonPositiveResistivity { .. })
        ));
        assert!(matches!(
            make_inclusion_map(&g, 1e-6, &CellSet::empty(), -1e-5),
            Err(MitError::NonPositiveResistivity { .. })
        ));
    }

    #[test]
    fn cellset_validation() {
        assert_eq!(CellSet::new([9], 9), Err(MitError::CellOutOfRange { index: 9, count: 9 }));
        assert_eq!(CellSet::new([1, 2, 1], 9), Err(MitError::DuplicateCell(1)));
        let s = CellSet::new([5, 1, 3], 9).unwrap();
        assert_eq!(s.as_slice(), &[1, 3, 5]);
    }

    #[test]
    fn cover_tilings() {
        let g4 = grid(4, 4);
        let blocks = cover_with_test_elements(&g4, 2, 2, 2);
        assert_eq!(blocks.len(), 4);
        assert!(blocks.iter().all(|b| b.len() == 4));
        let mut all: Vec<usize> = blocks.iter().flat_map(|b| b.iter()).collect();
        all.sort();
        assert_eq!(all, (0..16).collect::<Vec<_>>());

        let g3 = grid(3, 3);
        let singles = cover_with_test_elements(&g3, 1, 1, 1);
        assert_eq!(singles.len(), 9);
        assert!(singles.iter().all(|b| b.len() == 1));
    }

    /// Brute-force enumeration of the admissible 2x2 placements in a 4x4 grid.
    #[test]
    fn overlapping_cover_matches_enumeration() {
        let g4 = grid(4, 4);
        let blocks = cover_with_test_elements(&g4, 2, 2, 1);
        let mut expected = Vec::new();
        for j0 in 0..4 {
            for i0 in 0..4 {
                if i0 + 2 <= 4 && j0 + 2 <= 4 {
                    let mut cells = Vec::new();
                    for j in j0..j0 + 2 {
                        for i in i0..i0 + 2 {
                            cells.push(j * 4 + i);
                        }
                    }
                    expected.push(CellSet::new(cells, 16).unwrap());
                }
            }
        }
        assert_eq!(blocks.len(), 9);
        for e in &expected {
            assert!(blocks.contains(e));
        }
        let union = blocks.iter().fold(CellSet::empty(), |acc, b| acc.union(b));
        assert_eq!(union, CellSet::all(&g4));
    }

    #[test]
    fn coil_validation() {
        let open = vec![[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 1.0]];
        assert!(Coil::new(open, Orientation::Forward).is_err());
        let degenerate = vec![
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 1.0],
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 1.0],
            [0.0, 0.0, 1.0],
        ];
        assert!(Coil::new(degenerate, Orientation::Forward).is_err());
        assert!(Coil::rectangle([0.0, 0.0], 1.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn coil_plate_intersection() {
        let g = grid(4, 4);
        let eta = ResistivityMap::uniform(&g, 1e-6).unwrap();
        let above = Coil::rectangle([0.02, 0.02], 0.01, 0.01, 0.002).unwrap();
        let inside = Coil::rectangle([0.02, 0.02], 0.01, 0.01, 0.0).unwrap();
        // No vertex inside the plate, but one side passes through it.
        let piercing = Coil::new(
            vec![
                [0.02, 0.02, -0.01],
                [0.02, 0.02, 0.01],
                [0.02, 0.06, 0.01],
                [0.02, 0.06, -0.01],
                [0.02, 0.02, -0.01],
            ],
            Orientation::Forward,
        )
        .unwrap();
        assert!(Scenario::new(g, eta.clone(), CoilSet::new(vec![above])).is_ok());
        assert_eq!(
            Scenario::new(g, eta.clone(), CoilSet::new(vec![inside])),
            Err(MitError::CoilIntersectsConductor { index: 0 })
        );
        assert!(Scenario::new(g, eta, CoilSet::new(vec![piercing])).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cover_union_is_full(nx in 2usize..9, ny in 2usize..9,
                                   bw in 1usize..5, bh in 1usize..5, stride in 1usize..6) {
                let g = build_grid(nx, ny, 0.01, 0.001, [0.0, 0.0]).unwrap();
                let blocks = cover_with_test_elements(&g, bw, bh, stride);
                let union = blocks.iter().fold(CellSet::empty(), |acc, b| acc.union(b));
                prop_assert_eq!(union, CellSet::all(&g));
            }

            #[test]
            fn inclusion_map_is_monotone(e1 in 1e-7f64..1e-4, e2 in 1e-7f64..1e-4,
                                         cells in proptest::collection::btree_set(0usize..16, 0..8)) {
                let g = build_grid(4, 4, 0.01, 0.001, [0.0, 0.0]).unwrap();
                let inc = CellSet::new(cells, 16).unwrap();
                let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
                let m1 = make_inclusion_map(&g, 1e-6, &inc, lo).unwrap();
                let m2 = make_inclusion_map(&g, 1e-6, &inc, hi).unwrap();
                prop_assert!(m1.le(&m2));
            }
        }
    }
}
