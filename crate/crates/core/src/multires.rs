//! Two-resolution partition (fine `[l, w]` cells and coarse `[2l, 2w]`
//! cells) and the inter-resolution walk.
//!
//! Per step at a fine voxel the walker first jumps up to its parent with
//! probability `p_up = 0.25 * p_walk`; failing that, it takes an ordinary
//! count-biased step with probability `p_walk`. At a coarse voxel the first
//! draw jumps down with `p_down = 0.5 * p_walk` to a child chosen in
//! proportion to child counts, and the second draw gates a step in the
//! coarse graph. Coarse `p_walk` uses the count divided by four, rounded up.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridBuilder, GridConfig, NeighborGraph, Slot, VoxelGrid, VoxelId, NONE};
use crate::pointcloud::PointCloud;
use crate::rng::{walk_base, walk_key, CounterRng};
use crate::walk::{draw_x, effective_count, gate31, unit_to_x31, walk_plan, CountMode, Kernel};

const RESAMPLE_DOMAIN: u64 = 0x5253_4D50;
const MULTIRES_TAG: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Resolution {
    Fine = 0,
    Coarse = 1,
}

impl Resolution {
    pub fn from_tag(tag: u8) -> Option<Resolution> {
        match tag {
            0 => Some(Resolution::Fine),
            1 => Some(Resolution::Coarse),
            _ => None,
        }
    }
}

/// A voxel id together with the grid it indexes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResolutionTaggedSlot {
    pub id: VoxelId,
    pub resolution: Resolution,
}

impl ResolutionTaggedSlot {
    pub fn fine(id: VoxelId) -> Self {
        ResolutionTaggedSlot { id, resolution: Resolution::Fine }
    }

    pub fn coarse(id: VoxelId) -> Self {
        ResolutionTaggedSlot { id, resolution: Resolution::Coarse }
    }
}

#[derive(Debug, Clone)]
pub struct MultiResGrid {
    pub fine: VoxelGrid,
    pub fine_graph: NeighborGraph,
    /// Coarse voxels hold their resampled point indices (at most `n`).
    pub coarse: VoxelGrid,
    pub coarse_graph: NeighborGraph,
    pub parent_of: Vec<VoxelId>,
    /// Children by quadrant `(i & 1) | (j & 1) << 1`; `None` where absent.
    pub children_of: Vec<[Option<VoxelId>; 4]>,
    /// Coarse point counts before resampling.
    pub coarse_pre_counts: Vec<u32>,
    pub seed: u64,
}

impl MultiResGrid {
    pub fn children(&self, coarse: VoxelId) -> impl Iterator<Item = VoxelId> + '_ {
        self.children_of[coarse as usize].iter().flatten().copied()
    }

    pub fn count(&self, v: ResolutionTaggedSlot) -> u32 {
        match v.resolution {
            Resolution::Fine => self.fine.count(v.id),
            Resolution::Coarse => self.coarse.count(v.id),
        }
    }

    pub fn point_indices(&self, v: ResolutionTaggedSlot) -> &[u32] {
        match v.resolution {
            Resolution::Fine => &self.fine.voxel(v.id).point_indices,
            Resolution::Coarse => &self.coarse.voxel(v.id).point_indices,
        }
    }
}

/// Coarse cell of a fine cell: x and y halved (floor), z kept.
#[inline]
pub fn parent_cell(cell: [i32; 3]) -> [i32; 3] {
    [cell[0].div_euclid(2), cell[1].div_euclid(2), cell[2]]
}

#[inline]
fn quadrant(cell: [i32; 3]) -> usize {
    (cell[0].rem_euclid(2) | (cell[1].rem_euclid(2) << 1)) as usize
}

/// Uniform selection of `keep` of `len` positions in increasing order
/// (selection sampling), keyed by `(seed, coarse id)`.
pub fn resample_positions(seed: u64, coarse: VoxelId, len: usize, keep: usize) -> Vec<usize> {
    if len <= keep {
        return (0..len).collect();
    }
    let mut rng = CounterRng::new(seed, &[RESAMPLE_DOMAIN, coarse as u64]);
    let mut out = Vec::with_capacity(keep);
    let mut needed = keep;
    for i in 0..len {
        let remaining = (len - i) as u64;
        if rng.next_below(remaining) < needed as u64 {
            out.push(i);
            needed -= 1;
            if needed == 0 {
                break;
            }
        }
    }
    out
}

/// Builds both resolutions in a single pass over the cloud, then resamples
/// coarse voxels down to `n` points.
pub fn partition_multires(cloud: &PointCloud, config: &GridConfig, seed: u64) -> Result<MultiResGrid> {
    config.validate()?;
    let dims = config.dims();
    let cap = config.max_points_per_voxel as usize;
    let max_voxels = config.max_voxels as usize;
    let mut fine = GridBuilder::new(config.clone());
    let mut coarse = GridBuilder::new(config.coarsened());
    let mut parent_of: Vec<VoxelId> = Vec::new();
    let mut children_of: Vec<[Option<VoxelId>; 4]> = Vec::new();

    for (pi, p) in cloud.points.iter().enumerate() {
        let Some(cell) = config.locate_with_dims(p, dims) else {
            continue;
        };
        let id = match fine.lookup(&cell) {
            Some(id) => id,
            None => {
                if fine.grid.len() >= max_voxels {
                    break;
                }
                let pc = parent_cell(cell);
                let parent = match coarse.lookup(&pc) {
                    Some(c) => c,
                    None => {
                        children_of.push([None; 4]);
                        coarse.create(pc, cap.min(16))
                    }
                };
                let id = fine.create(cell, cap.min(8));
                parent_of.push(parent);
                children_of[parent as usize][quadrant(cell)] = Some(id);
                id
            }
        };
        if fine.count(id) < cap {
            fine.push_point(id, pi as u32);
            coarse.push_point(parent_of[id as usize], pi as u32);
        }
    }

    let mut coarse_grid = coarse.grid;
    let mut coarse_pre_counts = Vec::with_capacity(coarse_grid.len());
    for (cid, rec) in coarse_grid.records_mut().iter_mut().enumerate() {
        coarse_pre_counts.push(rec.count());
        if rec.point_indices.len() > cap {
            let keep = resample_positions(seed, cid as VoxelId, rec.point_indices.len(), cap);
            rec.point_indices = keep.into_iter().map(|k| rec.point_indices[k]).collect();
        }
    }

    Ok(MultiResGrid {
        fine: fine.grid,
        fine_graph: fine.graph,
        coarse: coarse_grid,
        coarse_graph: coarse.graph,
        parent_of,
        children_of,
        coarse_pre_counts,
        seed,
    })
}

/// Per-voxel move probabilities in the two-resolution walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterResPlan {
    pub p_walk: f64,
    pub p_up: f64,
    pub p_down: f64,
}

/// Plan with standard (unadjusted) fine counts.
pub fn inter_res_plan(count: u32, resolution: Resolution, n_max: u32) -> Result<InterResPlan> {
    inter_res_plan_with_mode(count, resolution, n_max, CountMode::Standard)
}

/// Fine voxels use the grid's count mode for `p_walk`; coarse voxels always
/// divide by four.
pub fn inter_res_plan_with_mode(
    count: u32,
    resolution: Resolution,
    n_max: u32,
    mode: CountMode,
) -> Result<InterResPlan> {
    if count == 0 || count > n_max {
        return Err(Error::Contract(format!(
            "inter-resolution plan needs 1 <= count <= n_max, got count {count}, n_max {n_max}"
        )));
    }
    Ok(match resolution {
        Resolution::Fine => {
            let p_walk = 1.0 / effective_count(count, mode) as f64;
            InterResPlan { p_walk, p_up: 0.25 * p_walk, p_down: 0.0 }
        }
        Resolution::Coarse => {
            let p_walk = 1.0 / effective_count(count, CountMode::QuarterAdjusted) as f64;
            InterResPlan { p_walk, p_up: 0.0, p_down: 0.5 * p_walk }
        }
    })
}

/// What a single step did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Up,
    Down,
    Intra,
    Stay,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedWalk {
    pub trace: Vec<ResolutionTaggedSlot>,
}

impl TaggedWalk {
    pub fn start(&self) -> ResolutionTaggedSlot {
        self.trace[0]
    }

    pub fn final_slot(&self) -> ResolutionTaggedSlot {
        *self.trace.last().expect("traces hold at least the start")
    }
}

/// Reconfigured slots of every fine voxel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiResReconfiguration {
    pub seed: u64,
    pub slots: Vec<[Option<TaggedWalk>; 4]>,
}

impl MultiResReconfiguration {
    pub fn final_slots(&self, center: VoxelId) -> [Option<ResolutionTaggedSlot>; 4] {
        let row = &self.slots[center as usize];
        [0, 1, 2, 3].map(|s| row[s].as_ref().map(TaggedWalk::final_slot))
    }
}

pub struct MultiResEngine<'a> {
    mgrid: &'a MultiResGrid,
    fine: Vec<Kernel>,
    fine_up: Vec<u32>,
    coarse: Vec<Kernel>,
    /// Child choice, gated at `p_down`.
    children: Vec<Kernel>,
}

impl<'a> MultiResEngine<'a> {
    pub fn new(mgrid: &'a MultiResGrid) -> Result<Self> {
        let cfg = &mgrid.fine.config;
        let n = cfg.max_points_per_voxel;
        let mode = cfg.count_mode;
        let mut fine = Vec::with_capacity(mgrid.fine.len());
        let mut fine_up = Vec::with_capacity(mgrid.fine.len());
        for id in 0..mgrid.fine.len() as VoxelId {
            let count = mgrid.fine.count(id);
            let plan = inter_res_plan_with_mode(count, Resolution::Fine, n, mode)?;
            let steps = walk_plan(count, n, mode)?.steps;
            fine.push(Kernel::build(&mgrid.fine, &mgrid.fine_graph, id, plan.p_walk, steps));
            fine_up.push(gate31(plan.p_up));
        }
        let mut coarse = Vec::with_capacity(mgrid.coarse.len());
        let mut children = Vec::with_capacity(mgrid.coarse.len());
        for id in 0..mgrid.coarse.len() as VoxelId {
            let plan = inter_res_plan(mgrid.coarse.count(id), Resolution::Coarse, n)?;
            coarse.push(Kernel::build(&mgrid.coarse, &mgrid.coarse_graph, id, plan.p_walk, 0));
            let (ids, weights): (Vec<u32>, Vec<u32>) =
                mgrid.children(id).map(|c| (c, mgrid.fine.count(c))).filter(|&(_, w)| w > 0).unzip();
            children.push(Kernel::from_parts(plan.p_down, 0, NONE, &ids, &weights));
        }
        Ok(MultiResEngine { mgrid, fine, fine_up, coarse, children })
    }

    pub fn plan(&self, at: ResolutionTaggedSlot) -> InterResPlan {
        let unit = crate::walk::UNIT31 as f64;
        match at.resolution {
            Resolution::Fine => InterResPlan {
                p_walk: self.fine[at.id as usize].p_walk(),
                p_up: self.fine_up[at.id as usize] as f64 / unit,
                p_down: 0.0,
            },
            Resolution::Coarse => InterResPlan {
                p_walk: self.coarse[at.id as usize].p_walk(),
                p_up: 0.0,
                p_down: self.children[at.id as usize].p_walk(),
            },
        }
    }

    /// One step driven by two uniforms in `[0, 1)`: `jump` decides the
    /// resolution jump (and the child), `gate` the intra-resolution move.
    pub fn step_with_uniforms(
        &self,
        at: ResolutionTaggedSlot,
        jump: f64,
        gate: f64,
    ) -> (StepKind, ResolutionTaggedSlot) {
        self.step_x31(at, unit_to_x31(jump), unit_to_x31(gate))
    }

    #[inline]
    fn step_x31(&self, at: ResolutionTaggedSlot, jump: u32, gate: u32) -> (StepKind, ResolutionTaggedSlot) {
        let i = at.id as usize;
        match at.resolution {
            Resolution::Fine => {
                if jump < self.fine_up[i] {
                    return (StepKind::Up, ResolutionTaggedSlot::coarse(self.mgrid.parent_of[i]));
                }
                if let Some(n) = self.fine[i].step(gate) {
                    return (StepKind::Intra, ResolutionTaggedSlot::fine(n));
                }
            }
            Resolution::Coarse => {
                if let Some(c) = self.children[i].step(jump) {
                    return (StepKind::Down, ResolutionTaggedSlot::fine(c));
                }
                if let Some(n) = self.coarse[i].step(gate) {
                    return (StepKind::Intra, ResolutionTaggedSlot::coarse(n));
                }
            }
        }
        (StepKind::Stay, at)
    }

    fn run(&self, key: u64, start: VoxelId, steps: u32) -> TaggedWalk {
        let mut cur = ResolutionTaggedSlot::fine(start);
        let mut trace = Vec::with_capacity(steps as usize + 1);
        trace.push(cur);
        for step in 0..steps as u64 {
            let jump = draw_x(key, 2 * step);
            let gate = draw_x(key, 2 * step + 1);
            cur = self.step_x31(cur, jump, gate).1;
            trace.push(cur);
        }
        TaggedWalk { trace }
    }

    /// One walk from fine voxel `start`, keyed like the slot walks of
    /// [`MultiResEngine::reconfigure`]. The budget comes from the start voxel.
    pub fn walk(&self, seed: u64, center: VoxelId, slot: Slot, start: VoxelId) -> TaggedWalk {
        let key = walk_key(walk_base(seed), center, slot as u8, MULTIRES_TAG);
        self.run(key, start, self.fine[start as usize].start_steps())
    }

    pub fn reconfigure(&self, seed: u64) -> MultiResReconfiguration {
        let base = walk_base(seed);
        let graph = &self.mgrid.fine_graph;
        let slots = (0..self.mgrid.fine.len() as VoxelId)
            .into_par_iter()
            .with_min_len(512)
            .map(|center| {
                Slot::PLANAR.map(|s| {
                    graph.neighbor(center, s).map(|start| {
                        let key = walk_key(base, center, s as u8, MULTIRES_TAG);
                        self.run(key, start, self.fine[start as usize].start_steps())
                    })
                })
            })
            .collect();
        MultiResReconfiguration { seed, slots }
    }
}

pub fn reconfigure_multires(mgrid: &MultiResGrid, seed: u64) -> Result<MultiResReconfiguration> {
    Ok(MultiResEngine::new(mgrid)?.reconfigure(seed))
}
