//! Seeded random scenarios shared by the integration tests.
#![allow(dead_code)]

use mitmono::geometry::{build_grid, Coil, CoilSet, GridSpec, Orientation, ResistivityMap, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rectangle or polygon coil above the plate, inside a margin around it.
pub fn random_coil(grid: &GridSpec, rng: &mut ChaCha8Rng) -> Coil {
    let (lo, hi) = grid.plate_box();
    let (wx, wy) = (hi[0] - lo[0], hi[1] - lo[1]);
    let center = [
        lo[0] + wx * rng.random_range(0.2..0.8),
        lo[1] + wy * rng.random_range(0.2..0.8),
    ];
    let z = hi[2] + rng.random_range(0.001..0.006);
    let coil = if rng.random_bool(0.5) {
        Coil::rectangle(
            center,
            wx * rng.random_range(0.2..0.9),
            wy * rng.random_range(0.2..0.9),
            z,
        )
    } else {
        Coil::regular_polygon(center, 0.5 * wx.min(wy) * rng.random_range(0.2..0.9), z, rng.random_range(3..16))
    }
    .unwrap();
    if rng.random_bool(0.3) {
        Coil::new(coil.vertices().to_vec(), Orientation::Reverse).unwrap()
    } else {
        coil
    }
}

pub fn random_map(grid: &GridSpec, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> ResistivityMap {
    ResistivityMap::new((0..grid.cell_count()).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Grid between `min`×`min` and 8×8 cells, 1 to 4 coils, η in `[lo, hi)`.
pub fn random_scenario(seed: u64, min: usize, lo: f64, hi: f64) -> Scenario {
    let mut rng = rng(seed);
    let nx = rng.random_range(min..=8);
    let ny = rng.random_range(min..=8);
    let h = rng.random_range(0.005..0.02);
    let d = rng.random_range(0.0005..0.002);
    let grid = build_grid(nx, ny, h, d, [rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)]).unwrap();
    let coils = (0..rng.random_range(1..=4)).map(|_| random_coil(&grid, &mut rng)).collect();
    let eta = random_map(&grid, lo, hi, &mut rng);
    Scenario::new(grid, eta, CoilSet::new(coils)).unwrap()
}

pub fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}
