#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use revox::{Connectivity, CountMode, GridConfig, Point, PointCloud};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 1 m pillars over `[0, k)^2`, no voxel cap.
pub fn unit_pillars(k: i32, n: u32, mode: CountMode) -> GridConfig {
    GridConfig {
        cell_size: [1.0, 1.0],
        cell_height: None,
        range_min: [0.0, 0.0, -4.0],
        range_max: [k as f32, k as f32, 4.0],
        max_points_per_voxel: n,
        max_voxels: u32::MAX - 1,
        connectivity: Connectivity::Planar4,
        count_mode: mode,
    }
}

/// `count` jittered points in each listed pillar cell, shuffled.
pub fn cloud_from_cells(cells: &[([i32; 2], u32)], r: &mut ChaCha8Rng) -> PointCloud {
    let mut pts = Vec::new();
    for &(c, count) in cells {
        for _ in 0..count {
            pts.push(Point::new(
                c[0] as f32 + r.gen_range(0.05..0.95),
                c[1] as f32 + r.gen_range(0.05..0.95),
                r.gen_range(-1.0..1.0),
                r.gen_range(0.0..1.0),
            ));
        }
    }
    pts.shuffle(r);
    PointCloud::new(pts, "cells").unwrap()
}

pub fn eff(count: u32, mode: CountMode) -> u32 {
    match mode {
        CountMode::Standard => count,
        CountMode::QuarterAdjusted => count.div_ceil(4),
    }
}
