//! Sparse voxel/pillar partition with adjacency recorded at creation time.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::{Point, PointCloud};
use crate::walk::CountMode;

pub type VoxelId = u32;
pub type Cell = [i32; 3];

/// Sentinel for an empty adjacency slot.
pub(crate) const NONE: u32 = u32::MAX;

/// Neighbor slots. The first four live in the X-Y plane and are the slots a
/// reconfigurable voxel carries; `Down`/`Up` only exist under 6-connectivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Slot {
    Left = 0,
    Right = 1,
    Back = 2,
    Front = 3,
    Down = 4,
    Up = 5,
}

impl Slot {
    pub const PLANAR: [Slot; 4] = [Slot::Left, Slot::Right, Slot::Back, Slot::Front];
    pub const ALL: [Slot; 6] = [Slot::Left, Slot::Right, Slot::Back, Slot::Front, Slot::Down, Slot::Up];

    pub fn mirror(self) -> Slot {
        Slot::ALL[self as usize ^ 1]
    }

    pub fn offset(self) -> [i32; 3] {
        match self {
            Slot::Left => [-1, 0, 0],
            Slot::Right => [1, 0, 0],
            Slot::Back => [0, -1, 0],
            Slot::Front => [0, 1, 0],
            Slot::Down => [0, 0, -1],
            Slot::Up => [0, 0, 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    /// Left/right/back/front within one z slice.
    Planar4,
    /// Planar neighbors plus down/up.
    Spatial6,
}

impl Connectivity {
    pub fn slots(self) -> &'static [Slot] {
        match self {
            Connectivity::Planar4 => &Slot::PLANAR,
            Connectivity::Spatial6 => &Slot::ALL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Cell extent on x and y, meters.
    pub cell_size: [f32; 2],
    /// Cell extent on z; `None` means pillars (z unbounded within range).
    pub cell_height: Option<f32>,
    pub range_min: [f32; 3],
    pub range_max: [f32; 3],
    pub max_points_per_voxel: u32,
    pub max_voxels: u32,
    pub connectivity: Connectivity,
    pub count_mode: CountMode,
}

pub const DEFAULT_RANGE_MIN: [f32; 3] = [-50.0, -50.0, -5.0];
pub const DEFAULT_RANGE_MAX: [f32; 3] = [50.0, 50.0, 3.0];

impl GridConfig {
    /// 0.25 m pillars, 25 points per pillar, 25000 pillars.
    pub fn pillars() -> Self {
        GridConfig {
            cell_size: [0.25, 0.25],
            cell_height: None,
            range_min: DEFAULT_RANGE_MIN,
            range_max: DEFAULT_RANGE_MAX,
            max_points_per_voxel: 25,
            max_voxels: 25_000,
            connectivity: Connectivity::Planar4,
            count_mode: CountMode::QuarterAdjusted,
        }
    }

    /// 0.05 x 0.05 x 0.1 m voxels, 4 points per voxel, 30000 voxels.
    pub fn voxels() -> Self {
        GridConfig {
            cell_size: [0.05, 0.05],
            cell_height: Some(0.1),
            range_min: DEFAULT_RANGE_MIN,
            range_max: DEFAULT_RANGE_MAX,
            max_points_per_voxel: 4,
            max_voxels: 30_000,
            connectivity: Connectivity::Planar4,
            count_mode: CountMode::Standard,
        }
    }

    pub fn is_pillar(&self) -> bool {
        self.cell_height.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        let sizes_ok = self.cell_size.iter().all(|s| s.is_finite() && *s > 0.0)
            && self.cell_height.is_none_or(|h| h.is_finite() && h > 0.0);
        if !sizes_ok {
            return Err(Error::Config("cell sizes must be positive".into()));
        }
        for axis in 0..3 {
            let (lo, hi) = (self.range_min[axis], self.range_max[axis]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("range on axis {axis} must satisfy min < max")));
            }
        }
        if self.max_points_per_voxel == 0 || self.max_voxels == 0 {
            return Err(Error::Config("max points and max voxels must be at least 1".into()));
        }
        if self.max_points_per_voxel > u16::MAX as u32 {
            return Err(Error::Config(format!("max points per voxel must be at most {}", u16::MAX)));
        }
        if self.max_voxels == NONE {
            return Err(Error::Config("max voxels must be below u32::MAX".into()));
        }
        Ok(())
    }

    /// Cell size per axis; z is the full range height in pillar mode.
    pub fn size(&self, axis: usize) -> f64 {
        match axis {
            0 | 1 => self.cell_size[axis] as f64,
            _ => self.cell_height.map_or((self.range_max[2] - self.range_min[2]) as f64, |h| h as f64),
        }
    }

    /// Number of cells per axis.
    pub fn dims(&self) -> [i32; 3] {
        let mut d = [1; 3];
        for (axis, slot) in d.iter_mut().enumerate() {
            if axis == 2 && self.is_pillar() {
                continue;
            }
            let span = (self.range_max[axis] - self.range_min[axis]) as f64;
            *slot = ((span / self.size(axis)) - 1e-6).ceil().max(1.0) as i32;
        }
        d
    }

    /// The same config with x-y cells doubled.
    pub fn coarsened(&self) -> GridConfig {
        GridConfig { cell_size: [self.cell_size[0] * 2.0, self.cell_size[1] * 2.0], ..self.clone() }
    }

    /// Cell of a point, or `None` outside the half-open detection range.
    #[inline]
    pub fn locate(&self, p: &Point) -> Option<Cell> {
        self.locate_with_dims(p, self.dims())
    }

    #[inline]
    pub(crate) fn locate_with_dims(&self, p: &Point, dims: [i32; 3]) -> Option<Cell> {
        let mut cell = [0i32; 3];
        for axis in 0..3 {
            let c = p.coord(axis);
            if !(c >= self.range_min[axis] && c < self.range_max[axis]) {
                return None;
            }
            if axis == 2 && self.is_pillar() {
                continue;
            }
            let idx = ((c as f64 - self.range_min[axis] as f64) / self.size(axis)).floor() as i32;
            cell[axis] = idx.min(dims[axis] - 1);
        }
        Some(cell)
    }

    /// Lower corner of a cell, meters.
    pub fn cell_origin(&self, cell: Cell) -> [f64; 3] {
        let mut o = [0.0; 3];
        for axis in 0..3 {
            o[axis] = self.range_min[axis] as f64 + cell[axis] as f64 * self.size(axis);
        }
        o
    }

    /// Geometric center of a cell, meters.
    pub fn cell_center(&self, cell: Cell) -> [f64; 3] {
        let o = self.cell_origin(cell);
        [o[0] + self.size(0) / 2.0, o[1] + self.size(1) / 2.0, o[2] + self.size(2) / 2.0]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelRecord {
    pub cell: Cell,
    /// Indices into the source cloud in arrival order, at most `n`.
    pub point_indices: Vec<u32>,
}

impl VoxelRecord {
    /// Stored (capped) point count.
    #[inline]
    pub fn count(&self) -> u32 {
        self.point_indices.len() as u32
    }
}

/// Sparse grid. Voxel ids are dense and follow creation order.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    pub config: GridConfig,
    voxels: Vec<VoxelRecord>,
    index: FxHashMap<Cell, VoxelId>,
}

impl VoxelGrid {
    pub fn empty(config: GridConfig) -> Self {
        VoxelGrid { config, voxels: Vec::new(), index: FxHashMap::default() }
    }

    /// Assembles a grid from records, e.g. when reading a dump.
    pub fn from_records(config: GridConfig, voxels: Vec<VoxelRecord>) -> Result<Self> {
        let mut index = FxHashMap::default();
        index.reserve(voxels.len());
        for (id, v) in voxels.iter().enumerate() {
            if index.insert(v.cell, id as VoxelId).is_some() {
                return Err(Error::Malformed(format!("duplicate cell {:?}", v.cell)));
            }
        }
        Ok(VoxelGrid { config, voxels, index })
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn voxels(&self) -> &[VoxelRecord] {
        &self.voxels
    }

    pub fn voxel(&self, id: VoxelId) -> &VoxelRecord {
        &self.voxels[id as usize]
    }

    #[inline]
    pub fn count(&self, id: VoxelId) -> u32 {
        self.voxels[id as usize].count()
    }

    pub fn cell(&self, id: VoxelId) -> Cell {
        self.voxels[id as usize].cell
    }

    pub fn id_at(&self, cell: Cell) -> Option<VoxelId> {
        self.index.get(&cell).copied()
    }

    pub fn counts(&self) -> Vec<u32> {
        self.voxels.iter().map(VoxelRecord::count).collect()
    }

    pub(crate) fn records_mut(&mut self) -> &mut [VoxelRecord] {
        &mut self.voxels
    }
}

/// Adjacency among non-empty voxels, indexed by voxel id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    pub connectivity: Connectivity,
    slots: Vec<[u32; 6]>,
}

impl NeighborGraph {
    pub fn new(connectivity: Connectivity) -> Self {
        NeighborGraph { connectivity, slots: Vec::new() }
    }

    /// Rebuilds adjacency from a grid by cell lookup.
    pub fn from_grid(grid: &VoxelGrid) -> Self {
        let mut g =
            NeighborGraph { connectivity: grid.config.connectivity, slots: vec![[NONE; 6]; grid.len()] };
        for (id, v) in grid.voxels().iter().enumerate() {
            for &s in g.connectivity.slots() {
                if let Some(n) = grid.id_at(add(v.cell, s.offset())) {
                    g.slots[id][s as usize] = n;
                }
            }
        }
        g
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    #[inline]
    pub fn neighbor(&self, id: VoxelId, slot: Slot) -> Option<VoxelId> {
        let n = self.slots[id as usize][slot as usize];
        (n != NONE).then_some(n)
    }

    #[inline]
    pub(crate) fn raw(&self, id: VoxelId) -> &[u32; 6] {
        &self.slots[id as usize]
    }

    /// Present neighbors of `id` in slot order.
    pub fn neighbors(&self, id: VoxelId) -> impl Iterator<Item = (Slot, VoxelId)> + '_ {
        self.connectivity.slots().iter().filter_map(move |&s| self.neighbor(id, s).map(|n| (s, n)))
    }

    /// Checks mirrored-slot symmetry and id validity over every voxel.
    pub fn is_symmetric(&self) -> bool {
        self.slots.iter().enumerate().all(|(id, row)| {
            row.iter().enumerate().all(|(s, &n)| {
                n == NONE
                    || ((n as usize) < self.slots.len()
                        && self.slots[n as usize][Slot::ALL[s].mirror() as usize] == id as u32)
            })
        })
    }

    fn push_voxel(&mut self) {
        self.slots.push([NONE; 6]);
    }

    fn link(&mut self, a: VoxelId, slot: Slot, b: VoxelId) {
        self.slots[a as usize][slot as usize] = b;
        self.slots[b as usize][slot.mirror() as usize] = a;
    }
}

#[inline]
pub(crate) fn add(a: Cell, b: [i32; 3]) -> Cell {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Incremental sparse grid + adjacency, shared by the single- and
/// two-resolution partitions.
pub(crate) struct GridBuilder {
    pub grid: VoxelGrid,
    pub graph: NeighborGraph,
}

impl GridBuilder {
    pub fn new(config: GridConfig) -> Self {
        let graph = NeighborGraph::new(config.connectivity);
        GridBuilder { grid: VoxelGrid::empty(config), graph }
    }

    #[inline]
    pub fn lookup(&self, cell: &Cell) -> Option<VoxelId> {
        self.grid.index.get(cell).copied()
    }

    /// Creates a voxel at an unrecorded cell and links it to existing neighbors.
    pub fn create(&mut self, cell: Cell, capacity: usize) -> VoxelId {
        let id = self.grid.voxels.len() as VoxelId;
        self.grid.index.insert(cell, id);
        self.grid.voxels.push(VoxelRecord { cell, point_indices: Vec::with_capacity(capacity) });
        self.graph.push_voxel();
        for &s in self.graph.connectivity.slots() {
            if let Some(&n) = self.grid.index.get(&add(cell, s.offset())) {
                self.graph.link(id, s, n);
            }
        }
        id
    }

    #[inline]
    pub fn push_point(&mut self, id: VoxelId, point: u32) {
        self.grid.voxels[id as usize].point_indices.push(point);
    }

    #[inline]
    pub fn count(&self, id: VoxelId) -> usize {
        self.grid.voxels[id as usize].point_indices.len()
    }
}

/// One pass over the cloud: points outside the range are skipped, cells are
/// created in arrival order until `max_voxels` is reached (at which point the
/// pass stops), and each voxel keeps its first `max_points_per_voxel` points.
pub fn partition(cloud: &PointCloud, config: &GridConfig) -> Result<(VoxelGrid, NeighborGraph)> {
    config.validate()?;
    let dims = config.dims();
    let cap = config.max_points_per_voxel as usize;
    let max_voxels = config.max_voxels as usize;
    let mut b = GridBuilder::new(config.clone());
    for (pi, p) in cloud.points.iter().enumerate() {
        let Some(cell) = config.locate_with_dims(p, dims) else {
            continue;
        };
        let id = match b.lookup(&cell) {
            Some(id) => id,
            None => {
                if b.grid.len() >= max_voxels {
                    break;
                }
                b.create(cell, cap.min(8))
            }
        };
        if b.count(id) < cap {
            b.push_point(id, pi as u32);
        }
    }
    Ok((b.grid, b.graph))
}

/// Vanilla voxelization without adjacency bookkeeping. Same cells, ids and
/// point lists as [`partition`]; used as the timing baseline.
pub fn partition_plain(cloud: &PointCloud, config: &GridConfig) -> Result<VoxelGrid> {
    config.validate()?;
    let dims = config.dims();
    let cap = config.max_points_per_voxel as usize;
    let max_voxels = config.max_voxels as usize;
    let mut grid = VoxelGrid::empty(config.clone());
    for (pi, p) in cloud.points.iter().enumerate() {
        let Some(cell) = config.locate_with_dims(p, dims) else {
            continue;
        };
        let id = match grid.index.get(&cell) {
            Some(&id) => id,
            None => {
                if grid.voxels.len() >= max_voxels {
                    break;
                }
                let id = grid.voxels.len() as VoxelId;
                grid.index.insert(cell, id);
                grid.voxels.push(VoxelRecord { cell, point_indices: Vec::with_capacity(cap.min(8)) });
                id
            }
        };
        let v = &mut grid.voxels[id as usize].point_indices;
        if v.len() < cap {
            v.push(pi as u32);
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabels {
    pub labels: Vec<u32>,
    pub component_count: u32,
}

impl ComponentLabels {
    #[inline]
    pub fn label(&self, id: VoxelId) -> u32 {
        self.labels[id as usize]
    }
}

/// Breadth-first labeling; components are numbered in order of their
/// lowest voxel id.
pub fn connected_components(graph: &NeighborGraph) -> ComponentLabels {
    let mut labels = vec![NONE; graph.len()];
    let mut queue = std::collections::VecDeque::new();
    let mut next = 0u32;
    for root in 0..graph.len() {
        if labels[root] != NONE {
            continue;
        }
        labels[root] = next;
        queue.push_back(root as VoxelId);
        while let Some(v) = queue.pop_front() {
            for (_, n) in graph.neighbors(v) {
                if labels[n as usize] == NONE {
                    labels[n as usize] = next;
                    queue.push_back(n);
                }
            }
        }
        next += 1;
    }
    ComponentLabels { labels, component_count: next }
}
