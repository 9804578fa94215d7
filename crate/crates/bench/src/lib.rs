//! Shared scenes for the criterion benchmarks.

use revox::{generate_synthetic, GridConfig, PointCloud, SynthSpec};

/// The reference sparse scene, tiled `copies` times along x at constant density.
pub fn scene(copies: usize, seed: u64) -> (PointCloud, GridConfig) {
    let base = generate_synthetic(&SynthSpec::standard_sparse(), seed).expect("valid preset");
    let cloud = base.tiled_x(copies, 100.0);
    let mut config = GridConfig::pillars();
    config.range_max[0] = config.range_min[0] + 100.0 * copies as f32;
    config.max_voxels = u32::MAX - 1;
    (cloud, config)
}
