//! Per-voxel point decoration, center+neighbor feature aggregation, and
//! scatter back to a dense bird's-eye-view map.
//!
//! Neighbor points are decorated relative to the *original* center voxel:
//! their `x_c, y_c, z_c` offsets use the center voxel's point mean and their
//! `x_p, y_p` offsets the center cell's geometric middle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Slot, VoxelGrid, VoxelId};
use crate::multires::{MultiResGrid, MultiResReconfiguration};
use crate::pointcloud::PointCloud;
use crate::walk::Reconfiguration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureMode {
    /// `d, z, r`
    Second,
    /// `d, z, t, x_c, y_c, z_c, x_p, y_p`
    Pillars,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub mode: FeatureMode,
}

impl FeatureSpec {
    pub fn new(mode: FeatureMode) -> Self {
        FeatureSpec { mode }
    }

    pub fn width(&self) -> usize {
        match self.mode {
            FeatureMode::Second => 3,
            FeatureMode::Pillars => 8,
        }
    }
}

/// Row-major `rows x width` point features with a per-row presence mask.
/// Masked rows are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub width: usize,
    pub data: Vec<f32>,
    pub mask: Vec<bool>,
}

impl FeatureMatrix {
    pub fn zeros(rows: usize, width: usize) -> Self {
        FeatureMatrix { rows, width, data: vec![0.0; rows * width], mask: vec![false; rows] }
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.width..(r + 1) * self.width]
    }

    pub fn set_row(&mut self, r: usize, values: &[f32]) {
        self.data[r * self.width..(r + 1) * self.width].copy_from_slice(values);
        self.mask[r] = true;
    }

    pub fn present_rows(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Rows whose mask bit is set, in order.
    pub fn unmasked(&self) -> impl Iterator<Item = &[f32]> + '_ {
        (0..self.rows).filter(|&r| self.mask[r]).map(|r| self.row(r))
    }

    /// Zeroes every masked row.
    pub fn clear_masked(&mut self) {
        for r in 0..self.rows {
            if !self.mask[r] {
                self.data[r * self.width..(r + 1) * self.width].fill(0.0);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointFeatureBlock {
    pub voxel: VoxelId,
    pub center: FeatureMatrix,
    /// Slot order left, right, back, front. Absent slots are fully masked.
    pub neighbors: [FeatureMatrix; 4],
    pub present: [bool; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelFeature {
    pub voxel: VoxelId,
    pub values: Vec<f32>,
}

/// Per-neighbor weights derived from the center's point features.
pub trait NeighborWeightFn {
    fn weights(&self, center: &FeatureMatrix) -> [f32; 4];
}

#[derive(Debug, Clone, Copy, Default)]
pub struct UniformWeights;

impl NeighborWeightFn for UniformWeights {
    fn weights(&self, _: &FeatureMatrix) -> [f32; 4] {
        [0.25; 4]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedWeights(pub [f32; 4]);

impl NeighborWeightFn for FixedWeights {
    fn weights(&self, _: &FeatureMatrix) -> [f32; 4] {
        self.0
    }
}

impl<F: Fn(&FeatureMatrix) -> [f32; 4]> NeighborWeightFn for F {
    fn weights(&self, center: &FeatureMatrix) -> [f32; 4] {
        self(center)
    }
}

/// Maps a point-feature matrix to a fixed-width vector.
pub trait FeatureTransform {
    fn output_width(&self, input_width: usize) -> usize;
    fn apply(&self, m: &FeatureMatrix) -> Vec<f32>;
}

/// Column-wise max over unmasked rows; all zeros when every row is masked.
#[derive(Debug, Clone, Copy, Default)]
pub struct ColumnMax;

impl FeatureTransform for ColumnMax {
    fn output_width(&self, input_width: usize) -> usize {
        input_width
    }

    fn apply(&self, m: &FeatureMatrix) -> Vec<f32> {
        let mut out = vec![f32::NEG_INFINITY; m.width];
        let mut any = false;
        for row in m.unmasked() {
            any = true;
            for (o, &v) in out.iter_mut().zip(row) {
                *o = o.max(v);
            }
        }
        if !any {
            out.fill(0.0);
        }
        out
    }
}

struct CenterFrame {
    mean: [f64; 3],
    middle: [f64; 3],
}

fn center_frame(grid: &VoxelGrid, cloud: &PointCloud, center: VoxelId) -> CenterFrame {
    let rec = grid.voxel(center);
    let mut mean = [0.0f64; 3];
    for &i in &rec.point_indices {
        let p = &cloud.points[i as usize];
        mean[0] += p.x as f64;
        mean[1] += p.y as f64;
        mean[2] += p.z as f64;
    }
    let n = rec.point_indices.len().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    CenterFrame { mean, middle: grid.config.cell_center(rec.cell) }
}

fn fill(m: &mut FeatureMatrix, indices: &[u32], cloud: &PointCloud, spec: FeatureSpec, frame: &CenterFrame) {
    let mut row = [0f32; 8];
    for (r, &i) in indices.iter().take(m.rows).enumerate() {
        let p = &cloud.points[i as usize];
        let (x, y, z) = (p.x as f64, p.y as f64, p.z as f64);
        let d = (x * x + y * y + z * z).sqrt() as f32;
        let w = match spec.mode {
            FeatureMode::Second => {
                row[..3].copy_from_slice(&[d, p.z, p.reflectance]);
                3
            }
            FeatureMode::Pillars => {
                row = [
                    d,
                    p.z,
                    p.timestamp,
                    (x - frame.mean[0]) as f32,
                    (y - frame.mean[1]) as f32,
                    (z - frame.mean[2]) as f32,
                    (x - frame.middle[0]) as f32,
                    (y - frame.middle[1]) as f32,
                ];
                8
            }
        };
        m.set_row(r, &row[..w]);
    }
}

/// Decorates one center voxel given the point lists of its four slots.
pub fn decorate_block(
    grid: &VoxelGrid,
    cloud: &PointCloud,
    spec: FeatureSpec,
    center: VoxelId,
    slots: [Option<&[u32]>; 4],
) -> PointFeatureBlock {
    let rows = grid.config.max_points_per_voxel as usize;
    let width = spec.width();
    let frame = center_frame(grid, cloud, center);
    let mut c = FeatureMatrix::zeros(rows, width);
    fill(&mut c, &grid.voxel(center).point_indices, cloud, spec, &frame);
    let mut neighbors = std::array::from_fn(|_| FeatureMatrix::zeros(rows, width));
    let mut present = [false; 4];
    for (s, idx) in slots.into_iter().enumerate() {
        if let Some(idx) = idx {
            present[s] = true;
            fill(&mut neighbors[s], idx, cloud, spec, &frame);
        }
    }
    PointFeatureBlock { voxel: center, center: c, neighbors, present }
}

fn single_res_slots<'a>(
    grid: &'a VoxelGrid,
    reconfig: &Reconfiguration,
    center: VoxelId,
) -> [Option<&'a [u32]>; 4] {
    Slot::PLANAR.map(|s| reconfig.slot(center, s).map(|v| grid.voxel(v.final_id).point_indices.as_slice()))
}

fn check_lengths(grid_len: usize, reconfig_len: usize) -> Result<()> {
    if grid_len != reconfig_len {
        return Err(Error::Contract(format!(
            "grid has {grid_len} voxels but reconfiguration has {reconfig_len}"
        )));
    }
    Ok(())
}

pub fn decorate(
    grid: &VoxelGrid,
    reconfig: &Reconfiguration,
    cloud: &PointCloud,
    spec: FeatureSpec,
) -> Result<Vec<PointFeatureBlock>> {
    check_lengths(grid.len(), reconfig.len())?;
    Ok((0..grid.len() as VoxelId)
        .map(|c| decorate_block(grid, cloud, spec, c, single_res_slots(grid, reconfig, c)))
        .collect())
}

pub fn decorate_multires(
    mgrid: &MultiResGrid,
    reconfig: &MultiResReconfiguration,
    cloud: &PointCloud,
    spec: FeatureSpec,
) -> Result<Vec<PointFeatureBlock>> {
    check_lengths(mgrid.fine.len(), reconfig.slots.len())?;
    Ok((0..mgrid.fine.len() as VoxelId)
        .map(|c| {
            let slots = reconfig.final_slots(c).map(|s| s.map(|s| mgrid.point_indices(s)));
            decorate_block(&mgrid.fine, cloud, spec, c, slots)
        })
        .collect())
}

/// Mean over every unmasked row of the center followed by the neighbors
/// in slot order. Accumulates in f64 in that order.
pub fn encode_avg(block: &PointFeatureBlock) -> Result<VoxelFeature> {
    if block.center.present_rows() == 0 {
        return Err(Error::Encode(format!("voxel {} has no center points", block.voxel)));
    }
    let width = block.center.width;
    let mut sum = vec![0f64; width];
    let mut n = 0usize;
    let mats = std::iter::once(&block.center).chain(block.neighbors.iter());
    for m in mats {
        for row in m.unmasked() {
            for (s, &v) in sum.iter_mut().zip(row) {
                *s += v as f64;
            }
            n += 1;
        }
    }
    Ok(VoxelFeature { voxel: block.voxel, values: sum.into_iter().map(|s| (s / n as f64) as f32).collect() })
}

/// Row-wise weighted sum of the neighbor matrices. A row is present when
/// any contributing neighbor has it.
pub fn weighted_neighbor_sum(block: &PointFeatureBlock, weights: [f32; 4]) -> FeatureMatrix {
    let (rows, width) = (block.center.rows, block.center.width);
    let mut acc = vec![0f64; rows * width];
    let mut mask = vec![false; rows];
    for (j, m) in block.neighbors.iter().enumerate() {
        if !block.present[j] {
            continue;
        }
        for r in 0..rows {
            if !m.mask[r] {
                continue;
            }
            mask[r] = true;
            for (a, &v) in acc[r * width..(r + 1) * width].iter_mut().zip(m.row(r)) {
                *a += weights[j] as f64 * v as f64;
            }
        }
    }
    FeatureMatrix { rows, width, data: acc.into_iter().map(|v| v as f32).collect(), mask }
}

/// `concat(t(center), t(sum_j w_j * neighbor_j))`.
pub fn encode_weighted(
    block: &PointFeatureBlock,
    w: &dyn NeighborWeightFn,
    t: &dyn FeatureTransform,
) -> Result<VoxelFeature> {
    if block.center.present_rows() == 0 {
        return Err(Error::Encode(format!("voxel {} has no center points", block.voxel)));
    }
    let weights = w.weights(&block.center);
    if let Some(bad) = weights.iter().find(|v| !v.is_finite()) {
        return Err(Error::Encode(format!("neighbor weights must be finite, got {bad}")));
    }
    let mut values = t.apply(&block.center);
    values.extend(t.apply(&weighted_neighbor_sum(block, weights)));
    Ok(VoxelFeature { voxel: block.voxel, values })
}

/// Dense `height x width x channels` map, row = y cell, column = x cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl DenseMap {
    pub fn at(&self, row: usize, col: usize) -> &[f32] {
        let o = (row * self.width + col) * self.channels;
        &self.data[o..o + self.channels]
    }
}

pub fn scatter(
    features: &[VoxelFeature],
    grid: &VoxelGrid,
    shape: (usize, usize),
    channels: usize,
) -> Result<DenseMap> {
    let (height, width) = shape;
    let mut map = DenseMap { height, width, channels, data: vec![0.0; height * width * channels] };
    for f in features {
        if f.values.len() != channels {
            return Err(Error::Encode(format!(
                "feature of voxel {} has width {}, map has {channels} channels",
                f.voxel,
                f.values.len()
            )));
        }
        if f.voxel as usize >= grid.len() {
            return Err(Error::Encode(format!("unknown voxel {}", f.voxel)));
        }
        let cell = grid.cell(f.voxel);
        let fits = cell[2] == 0
            && (0..width as i64).contains(&(cell[0] as i64))
            && (0..height as i64).contains(&(cell[1] as i64));
        if !fits {
            return Err(Error::Encode(format!("cell {cell:?} does not fit a {height}x{width} map")));
        }
        let o = (cell[1] as usize * width + cell[0] as usize) * channels;
        map.data[o..o + channels].copy_from_slice(&f.values);
    }
    Ok(map)
}

/// Which aggregation to run per voxel.
pub enum Encoder<'a> {
    Avg,
    Weighted { weights: &'a dyn NeighborWeightFn, transform: &'a dyn FeatureTransform },
}

impl Encoder<'_> {
    pub fn output_width(&self, spec: FeatureSpec) -> usize {
        match self {
            Encoder::Avg => spec.width(),
            Encoder::Weighted { transform, .. } => 2 * transform.output_width(spec.width()),
        }
    }

    pub fn encode(&self, block: &PointFeatureBlock) -> Result<VoxelFeature> {
        match self {
            Encoder::Avg => encode_avg(block),
            Encoder::Weighted { weights, transform } => encode_weighted(block, *weights, *transform),
        }
    }
}

/// Decorates and encodes voxel by voxel without materializing every block.
pub fn encode_grid(
    grid: &VoxelGrid,
    reconfig: &Reconfiguration,
    cloud: &PointCloud,
    spec: FeatureSpec,
    encoder: &Encoder<'_>,
) -> Result<Vec<VoxelFeature>> {
    check_lengths(grid.len(), reconfig.len())?;
    (0..grid.len() as VoxelId)
        .map(|c| encoder.encode(&decorate_block(grid, cloud, spec, c, single_res_slots(grid, reconfig, c))))
        .collect()
}

pub fn encode_grid_multires(
    mgrid: &MultiResGrid,
    reconfig: &MultiResReconfiguration,
    cloud: &PointCloud,
    spec: FeatureSpec,
    encoder: &Encoder<'_>,
) -> Result<Vec<VoxelFeature>> {
    check_lengths(mgrid.fine.len(), reconfig.slots.len())?;
    (0..mgrid.fine.len() as VoxelId)
        .map(|c| {
            let slots = reconfig.final_slots(c).map(|s| s.map(|s| mgrid.point_indices(s)));
            encoder.encode(&decorate_block(&mgrid.fine, cloud, spec, c, slots))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{partition, GridConfig};
    use crate::pointcloud::Point;
    use crate::walk::{initial_adjacency, reconfigure};

    fn cfg() -> GridConfig {
        GridConfig {
            cell_size: [1.0, 1.0],
            range_min: [0.0, 0.0, -4.0],
            range_max: [16.0, 16.0, 4.0],
            max_points_per_voxel: 4,
            ..GridConfig::pillars()
        }
    }

    fn block_from_rows(
        center: &[[f32; 2]],
        neighbors: [&[[f32; 2]]; 4],
        present: [bool; 4],
    ) -> PointFeatureBlock {
        let mk = |rows: &[[f32; 2]]| {
            let mut m = FeatureMatrix::zeros(4, 2);
            for (r, v) in rows.iter().enumerate() {
                m.set_row(r, v);
            }
            m
        };
        PointFeatureBlock { voxel: 0, center: mk(center), neighbors: neighbors.map(mk), present }
    }

    #[test]
    fn avg_examples() {
        let b = block_from_rows(
            &[[1.0, 2.0], [3.0, 4.0]],
            [&[[5.0, 6.0]], &[], &[], &[]],
            [true, false, false, false],
        );
        assert_eq!(encode_avg(&b).unwrap().values, vec![3.0, 4.0]);
        let b = block_from_rows(&[[1.0, 2.0], [3.0, 4.0]], [&[], &[], &[], &[]], [false; 4]);
        assert_eq!(encode_avg(&b).unwrap().values, vec![2.0, 3.0]);
        let b = block_from_rows(&[], [&[], &[], &[], &[]], [false; 4]);
        assert!(encode_avg(&b).is_err());
    }

    #[test]
    fn weighted_examples() {
        let b = block_from_rows(&[[1.0, 5.0], [3.0, 4.0]], [&[], &[], &[], &[]], [false; 4]);
        let f = encode_weighted(&b, &UniformWeights, &ColumnMax).unwrap();
        assert_eq!(f.values, vec![3.0, 5.0, 0.0, 0.0]);

        let nb: &[[f32; 2]] = &[[2.0, -1.0], [0.5, 7.0]];
        let b = block_from_rows(&[[1.0, 1.0]], [nb; 4], [true; 4]);
        let sum = weighted_neighbor_sum(&b, [0.25; 4]);
        assert_eq!(sum.row(0), &[2.0, -1.0]);
        assert_eq!(sum.row(1), &[0.5, 7.0]);
        let f = encode_weighted(&b, &UniformWeights, &ColumnMax).unwrap();
        assert_eq!(f.values, vec![1.0, 1.0, 2.0, 7.0]);

        assert!(encode_weighted(&b, &FixedWeights([f32::NAN, 0.0, 0.0, 0.0]), &ColumnMax).is_err());
        assert!(encode_weighted(&b, &FixedWeights([f32::INFINITY, 0.0, 0.0, 0.0]), &ColumnMax).is_err());
        assert!(encode_weighted(&b, &FixedWeights([-1.0, 0.0, 0.0, 0.0]), &ColumnMax).is_ok());
    }

    fn pts(v: &[(f32, f32, f32)]) -> PointCloud {
        PointCloud::new(v.iter().map(|&(x, y, z)| Point::new(x, y, z, 0.3)).collect(), "t").unwrap()
    }

    #[test]
    fn offsets_relative_to_original_center() {
        // center cell (2,2) middle (2.5, 2.5); neighbor cell (3,2)
        let cloud = pts(&[(2.5, 2.5, 0.0), (3.25, 2.75, 1.0)]);
        let (grid, graph) = partition(&cloud, &cfg()).unwrap();
        let r = initial_adjacency(&graph, 0);
        let blocks = decorate(&grid, &r, &cloud, FeatureSpec::new(FeatureMode::Pillars)).unwrap();
        let c = blocks[0].center.row(0);
        assert_eq!(&c[3..], &[0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(c[0], (2.5f64 * 2.5 * 2.0).sqrt() as f32);
        let n = blocks[0].neighbors[Slot::Right as usize].row(0);
        assert_eq!(&n[3..], &[0.75, 0.25, 1.0, 0.75, 0.25]);
        assert_eq!(blocks[0].neighbors[Slot::Right as usize].present_rows(), 1);
        assert!(!blocks[0].present[Slot::Left as usize]);
        assert_eq!(blocks[0].neighbors[0].data.iter().filter(|v| **v != 0.0).count(), 0);
    }

    #[test]
    fn second_mode_width() {
        let cloud = pts(&[(1.5, 1.5, 0.5)]);
        let (grid, graph) = partition(&cloud, &cfg()).unwrap();
        let r = reconfigure(&grid, &graph, 0).unwrap();
        let blocks = decorate(&grid, &r, &cloud, FeatureSpec::new(FeatureMode::Second)).unwrap();
        assert_eq!(blocks[0].center.width, 3);
        assert_eq!(blocks[0].center.row(0)[1..], [0.5, 0.3]);
    }

    #[test]
    fn scatter_places_features() {
        let cloud = pts(&[(0.5, 0.5, 0.0), (3.5, 1.5, 0.0)]);
        let (grid, _) = partition(&cloud, &cfg()).unwrap();
        let feats = vec![
            VoxelFeature { voxel: 0, values: vec![1.0, 2.0] },
            VoxelFeature { voxel: 1, values: vec![3.0, 4.0] },
        ];
        let map = scatter(&feats, &grid, (16, 16), 2).unwrap();
        assert_eq!(map.at(0, 0), &[1.0, 2.0]);
        assert_eq!(map.at(1, 3), &[3.0, 4.0]);
        assert_eq!(map.data.iter().filter(|v| **v != 0.0).count(), 4);
        assert!(scatter(&feats, &grid, (1, 2), 2).is_err());
        let empty = scatter(&[], &grid, (4, 4), 3).unwrap();
        assert!(empty.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn streaming_encode_matches_materialized() {
        let cloud = pts(&[(0.5, 0.5, 0.0), (1.5, 0.5, 0.1), (1.6, 0.4, 0.2), (2.5, 0.5, 0.0)]);
        let (grid, graph) = partition(&cloud, &cfg()).unwrap();
        let r = reconfigure(&grid, &graph, 1).unwrap();
        let spec = FeatureSpec::new(FeatureMode::Pillars);
        let blocks = decorate(&grid, &r, &cloud, spec).unwrap();
        let a: Vec<_> = blocks.iter().map(|b| encode_avg(b).unwrap()).collect();
        assert_eq!(a, encode_grid(&grid, &r, &cloud, spec, &Encoder::Avg).unwrap());
    }
}
