//! Biased random walk that reassigns each voxel's four planar neighbor
//! slots toward denser voxels.
//!
//! A walk starting at voxel `u` takes `S = m - c(u)` steps, where `c` is
//! the effective count and `m` the effective per-voxel maximum; the budget
//! is fixed at the start. At every step the walker at `c` moves with
//! probability `1 / c_eff(c)` to a non-empty adjacent voxel drawn in
//! proportion to point counts, and stays put otherwise. Stays consume a
//! step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{NeighborGraph, Slot, VoxelGrid, VoxelId, NONE};
use crate::rng::{walk_base, walk_draw, walk_key};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CountMode {
    Standard,
    /// Counts divided by four and rounded up before computing walk
    /// probability and step budget; keeps pillar walks short.
    QuarterAdjusted,
}

#[inline]
pub fn effective_count(count: u32, mode: CountMode) -> u32 {
    match mode {
        CountMode::Standard => count,
        CountMode::QuarterAdjusted => count.div_ceil(4),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkPlan {
    pub p_walk: f64,
    pub steps: u32,
}

pub fn walk_plan(count: u32, n_max: u32, mode: CountMode) -> Result<WalkPlan> {
    if count == 0 || count > n_max {
        return Err(Error::Contract(format!(
            "walk plan needs 1 <= count <= n_max, got count {count}, n_max {n_max}"
        )));
    }
    let c = effective_count(count, mode);
    let m = effective_count(n_max, mode);
    Ok(WalkPlan { p_walk: 1.0 / c as f64, steps: m - c })
}

/// Count-proportional distribution over the non-empty neighbors of a voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDistribution {
    pub candidates: Vec<(VoxelId, f64)>,
    weights: Vec<u32>,
}

impl TransitionDistribution {
    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn total_weight(&self) -> u64 {
        self.weights.iter().map(|&w| w as u64).sum()
    }

    /// Cumulative-sum inversion of a uniform `u` in `[0, 1)`, scanning the
    /// candidates in slot order.
    pub fn sample(&self, u: f64) -> Option<VoxelId> {
        let target = u * self.total_weight() as f64;
        let mut cum = 0u64;
        for (&(id, _), &w) in self.candidates.iter().zip(&self.weights) {
            cum += w as u64;
            if target < cum as f64 {
                return Some(id);
            }
        }
        self.candidates.last().map(|c| c.0)
    }
}

pub fn transition_distribution(
    v: VoxelId,
    graph: &NeighborGraph,
    grid: &VoxelGrid,
) -> TransitionDistribution {
    let weights: Vec<(VoxelId, u32)> =
        graph.neighbors(v).map(|(_, n)| (n, grid.count(n))).filter(|&(_, c)| c > 0).collect();
    let total: u64 = weights.iter().map(|&(_, c)| c as u64).sum();
    TransitionDistribution {
        candidates: weights.iter().map(|&(n, c)| (n, c as f64 / total as f64)).collect(),
        weights: weights.iter().map(|&(_, c)| c).collect(),
    }
}

/// Fixed-point gate `t` such that `x < t` has probability `p` for `x`
/// uniform on `[0, 2^31)`.
#[inline]
pub(crate) fn gate31(p: f64) -> u32 {
    // exact ceil without a libm call; the product is below 2^32
    let v = p.clamp(0.0, 1.0) * UNIT31 as f64;
    let t = v as u32;
    t + ((t as f64) < v) as u32
}

pub(crate) const UNIT31: u32 = 1 << 31;

/// The `index`-th step variate of a walk on the `[0, 2^31)` lattice.
#[inline(always)]
pub(crate) fn draw_x(key: u64, index: u64) -> u32 {
    (walk_draw(key, index) >> 33) as u32
}

/// Precomputed per-voxel step distribution on the `[0, 2^31)` lattice.
///
/// Outcomes are a "stay" id followed by the neighbors, with integer masses
/// out of `2^31`: stay gets `2^31 - gate` and the neighbors split `gate` in
/// proportion to their weights, so every probability is exactly
/// `mass / 2^31`. A draw `x` selects outcome `#{i : thr[i] <= x}`, where
/// `thr` holds the cumulative masses; unused thresholds are `u32::MAX`,
/// which no draw reaches. The record fits one cache line.
#[derive(Debug, Clone, Copy)]
#[repr(align(64))]
pub(crate) struct Kernel {
    thr: [u32; 6],
    ids: [u32; 8],
    gate: u32,
    start_steps: u32,
}

impl Kernel {
    pub fn build(
        grid: &VoxelGrid,
        graph: &NeighborGraph,
        id: VoxelId,
        p_walk: f64,
        start_steps: u32,
    ) -> Kernel {
        Kernel::with_counts(&grid.counts(), graph, id, p_walk, start_steps)
    }

    #[inline]
    pub fn with_counts(
        counts: &[u32],
        graph: &NeighborGraph,
        id: VoxelId,
        p_walk: f64,
        start_steps: u32,
    ) -> Kernel {
        let mut ids = [NONE; 6];
        let mut weights = [0u32; 6];
        let mut len = 0;
        let row = graph.raw(id);
        for &s in graph.connectivity.slots() {
            let n = row[s as usize];
            if n == NONE || counts[n as usize] == 0 {
                continue;
            }
            ids[len] = n;
            weights[len] = counts[n as usize];
            len += 1;
        }
        Kernel::from_parts(p_walk, start_steps, id, &ids[..len], &weights[..len])
    }

    /// `stay` is returned by [`Kernel::sample`] when the walker does not move.
    pub fn from_parts(p_walk: f64, start_steps: u32, stay: u32, ids: &[u32], weights: &[u32]) -> Kernel {
        debug_assert!(ids.len() <= 6 && ids.len() == weights.len());
        let total: u64 = weights.iter().map(|&w| w as u64).sum();
        let gate = if total == 0 { 0 } else { gate31(p_walk) };
        let mut k = Kernel { thr: [u32::MAX; 6], ids: [stay; 8], gate, start_steps };
        let base = UNIT31 - gate;
        let mut cum = 0u64;
        for (i, (&id, &w)) in ids.iter().zip(weights).enumerate() {
            // gate <= 2^31 and total < 2^32 keep the product below 2^63
            let edge = if total < 1 << 32 {
                gate as u64 * cum / total
            } else {
                ((gate as u128 * cum as u128) / total as u128) as u64
            };
            k.thr[i] = base + edge as u32;
            k.ids[i + 1] = id;
            cum += w as u64;
        }
        k
    }

    pub fn start_steps(&self) -> u32 {
        self.start_steps
    }

    pub fn gate(&self) -> u32 {
        self.gate
    }

    fn stay(&self) -> u32 {
        self.ids[0]
    }

    /// Move probability; zero when there is nowhere to go.
    pub fn p_walk(&self) -> f64 {
        self.gate() as f64 / UNIT31 as f64
    }

    /// Outcome of a step driven by `x` on `[0, 2^31)`: a neighbor, or the
    /// stay id.
    #[inline(always)]
    pub fn sample(&self, x: u32) -> u32 {
        let t = &self.thr;
        // pairwise sums keep the comparisons independent of each other
        let a = (t[0] <= x) as usize + (t[1] <= x) as usize;
        let b = (t[2] <= x) as usize + (t[3] <= x) as usize;
        let c = (t[4] <= x) as usize + (t[5] <= x) as usize;
        self.ids[(a + b + c) & 7]
    }

    /// Destination of a step, or `None` to stay.
    #[inline(always)]
    pub fn step(&self, x: u32) -> Option<u32> {
        let s = self.sample(x);
        (s != self.stay()).then_some(s)
    }

    /// Exact outcome masses out of `2^31`.
    #[cfg(test)]
    pub fn masses(&self) -> std::collections::BTreeMap<u32, f64> {
        let mut m = std::collections::BTreeMap::new();
        let mut lo = 0u32;
        for (i, &id) in self.ids[..7].iter().enumerate() {
            let hi = self.thr.get(i).copied().unwrap_or(u32::MAX).min(UNIT31);
            *m.entry(id).or_insert(0.0) += (hi - lo.min(hi)) as f64;
            lo = lo.max(hi);
        }
        m.retain(|_, v| *v > 0.0);
        m
    }
}

/// Maps a uniform on `[0, 1)` onto the lattice used by [`Kernel::step`].
#[inline(always)]
pub(crate) fn unit_to_x31(u: f64) -> u32 {
    ((u * UNIT31 as f64) as u64).min(UNIT31 as u64 - 1) as u32
}

/// Path of one slot walk. `visited[0]` is the start; consecutive entries are
/// equal (gated stay) or adjacent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkTrace {
    pub start: VoxelId,
    pub visited: Vec<VoxelId>,
    pub final_id: VoxelId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct SlotEntry {
    final_id: u32,
    trace_start: u32,
    trace_len: u32,
}

const ABSENT: SlotEntry = SlotEntry { final_id: NONE, trace_start: 0, trace_len: 0 };

/// Reconfigured neighbor slots for every voxel, with walk traces stored
/// contiguously.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reconfiguration {
    pub seed: u64,
    slots: Vec<[SlotEntry; 4]>,
    traces: Vec<u32>,
}

/// Borrowed view of one reconfigured slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotView<'a> {
    pub final_id: VoxelId,
    pub trace: &'a [VoxelId],
}

impl SlotView<'_> {
    pub fn start(&self) -> VoxelId {
        self.trace[0]
    }
}

impl Reconfiguration {
    /// Assembles a reconfiguration from per-slot traces (e.g. read from a dump).
    pub fn from_traces(seed: u64, slots: Vec<[Option<Vec<VoxelId>>; 4]>) -> Result<Self> {
        let mut out = Reconfiguration { seed, slots: Vec::with_capacity(slots.len()), traces: Vec::new() };
        for row in slots {
            let mut entries = [ABSENT; 4];
            for (s, t) in row.into_iter().enumerate() {
                if let Some(t) = t {
                    let Some(&last) = t.last() else {
                        return Err(Error::Malformed("present slot with empty trace".into()));
                    };
                    entries[s] = SlotEntry {
                        final_id: last,
                        trace_start: out.traces.len() as u32,
                        trace_len: t.len() as u32,
                    };
                    out.traces.extend(t);
                }
            }
            out.slots.push(entries);
        }
        Ok(out)
    }

    /// Number of center voxels.
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slot(&self, center: VoxelId, slot: Slot) -> Option<SlotView<'_>> {
        let e = self.slots[center as usize][slot as usize];
        (e.final_id != NONE).then(|| SlotView {
            final_id: e.final_id,
            trace: &self.traces[e.trace_start as usize..(e.trace_start + e.trace_len) as usize],
        })
    }

    pub fn slots(&self, center: VoxelId) -> [Option<SlotView<'_>>; 4] {
        Slot::PLANAR.map(|s| self.slot(center, s))
    }

    pub fn final_ids(&self, center: VoxelId) -> [Option<VoxelId>; 4] {
        Slot::PLANAR.map(|s| self.slot(center, s).map(|v| v.final_id))
    }

    pub fn trace(&self, center: VoxelId, slot: Slot) -> Option<WalkTrace> {
        self.slot(center, slot).map(|v| WalkTrace {
            start: v.start(),
            visited: v.trace.to_vec(),
            final_id: v.final_id,
        })
    }
}

/// Walks on one grid/graph pair with precomputed kernels.
pub struct WalkEngine<'a> {
    graph: &'a NeighborGraph,
    kernels: Vec<Kernel>,
}

impl<'a> WalkEngine<'a> {
    pub fn new(grid: &'a VoxelGrid, graph: &'a NeighborGraph) -> Result<Self> {
        if grid.len() != graph.len() {
            return Err(Error::Contract(format!(
                "grid has {} voxels but graph has {}",
                grid.len(),
                graph.len()
            )));
        }
        let n = grid.config.max_points_per_voxel;
        let mode = grid.config.count_mode;
        let counts = grid.counts();
        let mut kernels = Vec::with_capacity(counts.len());
        for (id, &count) in counts.iter().enumerate() {
            let plan = walk_plan(count, n, mode)?;
            kernels.push(Kernel::with_counts(&counts, graph, id as VoxelId, plan.p_walk, plan.steps));
        }
        Ok(WalkEngine { graph, kernels })
    }

    /// Step budget of a walk starting at `start`.
    pub fn steps_from(&self, start: VoxelId) -> u32 {
        self.kernels[start as usize].start_steps()
    }

    /// Walks from `start`, filling `trace` (start included) and returning the
    /// final voxel. The step count is `trace.len() - 1`.
    #[inline]
    fn run_into(&self, key: u64, start: VoxelId, trace: &mut [u32]) -> VoxelId {
        let kernels = &self.kernels[..];
        let mut cur = start;
        trace[0] = cur;
        for (step, t) in trace[1..].iter_mut().enumerate() {
            // the stay outcome of a walk kernel is its own voxel
            cur = kernels[cur as usize].sample(draw_x(key, step as u64));
            *t = cur;
        }
        cur
    }

    /// One walk of `steps` steps, keyed by `(seed, center, slot)`.
    pub fn walk(&self, seed: u64, center: VoxelId, slot: Slot, start: VoxelId, steps: u32) -> WalkTrace {
        let key = walk_key(walk_base(seed), center, slot as u8, 0);
        let mut visited = vec![0; steps as usize + 1];
        let final_id = self.run_into(key, start, &mut visited);
        WalkTrace { start, visited, final_id }
    }

    pub fn reconfigure(&self, seed: u64) -> Reconfiguration {
        const CHUNK: usize = 2048;
        let base = walk_base(seed);
        let n = self.kernels.len();

        // Budgets are fixed by the start voxels, so every trace can be laid
        // out before any walk runs.
        let mut slots = Vec::with_capacity(n);
        let mut total = 0u32;
        for center in 0..n as VoxelId {
            let row = self.graph.raw(center);
            slots.push(std::array::from_fn(|s| match row[s] {
                NONE => ABSENT,
                start => {
                    let len = self.kernels[start as usize].start_steps() + 1;
                    total += len;
                    SlotEntry { final_id: start, trace_start: total - len, trace_len: len }
                }
            }));
        }
        let mut traces = vec![0u32; total as usize];

        let mut jobs = Vec::with_capacity(n.div_ceil(CHUNK));
        let mut rest = &mut traces[..];
        for (c, entries) in slots.chunks_mut(CHUNK).enumerate() {
            let len = entries.iter().flatten().map(|e| e.trace_len as usize).sum();
            let (head, tail) = std::mem::take(&mut rest).split_at_mut(len);
            rest = tail;
            jobs.push((c * CHUNK, entries, head));
        }
        jobs.into_par_iter().for_each(|(lo, entries, out)| {
            let mut rest = out;
            for (i, row) in entries.iter_mut().enumerate() {
                let center = (lo + i) as VoxelId;
                for (s, e) in row.iter_mut().enumerate() {
                    if e.final_id == NONE {
                        continue;
                    }
                    let (head, tail) = std::mem::take(&mut rest).split_at_mut(e.trace_len as usize);
                    rest = tail;
                    let key = walk_key(base, center, s as u8, 0);
                    e.final_id = self.run_into(key, e.final_id, head);
                }
            }
        });
        Reconfiguration { seed, slots, traces }
    }
}

/// Reconfigures every voxel's planar neighbor slots. Deterministic in
/// `(grid, graph, seed)` regardless of thread count.
pub fn reconfigure(grid: &VoxelGrid, graph: &NeighborGraph, seed: u64) -> Result<Reconfiguration> {
    Ok(WalkEngine::new(grid, graph)?.reconfigure(seed))
}

/// The reconfiguration in which every slot keeps its initial neighbor.
pub fn initial_adjacency(graph: &NeighborGraph, seed: u64) -> Reconfiguration {
    let rows = (0..graph.len() as VoxelId)
        .map(|v| Slot::PLANAR.map(|s| graph.neighbor(v, s).map(|n| vec![n])))
        .collect();
    Reconfiguration::from_traces(seed, rows).expect("single-entry traces are never empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{partition, GridConfig};
    use crate::pointcloud::{Point, PointCloud};
    use std::collections::BTreeMap;

    fn cfg(n: u32, mode: CountMode) -> GridConfig {
        GridConfig {
            cell_size: [1.0, 1.0],
            range_min: [0.0, 0.0, -5.0],
            range_max: [64.0, 64.0, 5.0],
            max_points_per_voxel: n,
            max_voxels: 1 << 20,
            count_mode: mode,
            ..GridConfig::pillars()
        }
    }

    /// Cloud with `counts[k]` points in cell `cells[k]`.
    fn cloud(cells: &[((i32, i32), u32)]) -> PointCloud {
        let mut pts = Vec::new();
        for &((x, y), c) in cells {
            for i in 0..c {
                pts.push(Point::new(x as f32 + 0.5, y as f32 + 0.5, i as f32 * 0.01, 0.0));
            }
        }
        PointCloud::new(pts, "cells").unwrap()
    }

    #[test]
    fn effective_count_examples() {
        assert_eq!(effective_count(4, CountMode::Standard), 4);
        assert_eq!(effective_count(25, CountMode::QuarterAdjusted), 7);
        assert_eq!(effective_count(1, CountMode::QuarterAdjusted), 1);
    }

    #[test]
    fn walk_plan_examples() {
        let p = walk_plan(4, 4, CountMode::Standard).unwrap();
        assert_eq!((p.p_walk, p.steps), (0.25, 0));
        let p = walk_plan(1, 4, CountMode::Standard).unwrap();
        assert_eq!((p.p_walk, p.steps), (1.0, 3));
        let p = walk_plan(13, 25, CountMode::QuarterAdjusted).unwrap();
        assert_eq!((p.p_walk, p.steps), (0.25, 3));
        assert!(matches!(walk_plan(5, 4, CountMode::Standard), Err(Error::Contract(_))));
        assert!(walk_plan(0, 4, CountMode::Standard).is_err());
    }

    #[test]
    fn distribution_examples() {
        // center (5,5) with neighbors left..front holding 1..4 points
        let c = cloud(&[((5, 5), 1), ((4, 5), 1), ((6, 5), 2), ((5, 4), 3), ((5, 6), 4)]);
        let (grid, graph) = partition(&c, &cfg(4, CountMode::Standard)).unwrap();
        let d = transition_distribution(0, &graph, &grid);
        let probs: Vec<f64> = d.candidates.iter().map(|c| c.1).collect();
        assert_eq!(probs, vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(d.candidates.iter().map(|c| c.0).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        let c = cloud(&[((5, 5), 1), ((6, 5), 3), ((9, 9), 1)]);
        let (grid, graph) = partition(&c, &cfg(4, CountMode::Standard)).unwrap();
        assert_eq!(transition_distribution(0, &graph, &grid).candidates, vec![(1, 1.0)]);
        assert!(transition_distribution(2, &graph, &grid).is_empty());
    }

    #[test]
    fn sample_inverts_cumulative_weights() {
        let c = cloud(&[((5, 5), 1), ((4, 5), 1), ((6, 5), 2), ((5, 4), 3), ((5, 6), 4)]);
        let (grid, graph) = partition(&c, &cfg(4, CountMode::Standard)).unwrap();
        let d = transition_distribution(0, &graph, &grid);
        assert_eq!(d.sample(0.0), Some(1));
        assert_eq!(d.sample(0.099), Some(1));
        assert_eq!(d.sample(0.1), Some(2));
        assert_eq!(d.sample(0.65), Some(4));
        assert_eq!(d.sample(0.999_999), Some(4));
        // p_walk = 1 splits the whole lattice 1:2:3:4
        let k = Kernel::build(&grid, &graph, 0, 1.0, 0);
        let unit = UNIT31 as f64;
        let want = [(1, 0.1), (2, 0.2), (3, 0.3), (4, 0.4)];
        let got = k.masses();
        assert!((got.values().sum::<f64>() - unit).abs() < 1e-3);
        for (id, p) in want {
            assert!((got[&id] - p * unit).abs() <= 1.0, "{id}: {}", got[&id]);
        }
        // p_walk = 1/2: half the mass stays, the other half is split 1:2:3:4
        let k = Kernel::build(&grid, &graph, 0, 0.5, 0);
        let got = k.masses();
        assert!((got[&0] - unit / 2.0).abs() <= 1.0);
        for (id, p) in want {
            assert!((got[&id] - p * unit / 2.0).abs() <= 1.0);
        }
        assert_eq!(k.p_walk(), 0.5);
        let mut hits = BTreeMap::new();
        for x in (0..UNIT31).step_by(4099) {
            *hits.entry(k.step(x)).or_insert(0u32) += 1;
            assert_eq!(k.step(x).unwrap_or(0), k.sample(x));
        }
        assert_eq!(hits.len(), 5);
    }

    #[test]
    fn kernel_masses_are_exact() {
        let ids = [7, 8, 9, 10, 11, 12];
        for (p, weights) in [
            (1.0, vec![1, 1, 1]),
            (1.0 / 3.0, vec![5, 1, 25, 2, 2, 9]),
            (0.25, vec![3]),
            (1.0 / 7.0, vec![1, 2, 3, 4, 5, 6]),
            (0.5, vec![]),
        ] {
            let k = Kernel::from_parts(p, 0, NONE, &ids[..weights.len()], &weights);
            let got = k.masses();
            assert!((got.values().sum::<f64>() - UNIT31 as f64).abs() < 1e-3);
            let gate = if weights.is_empty() { 0 } else { gate31(p) } as f64;
            let total: u32 = weights.iter().sum();
            for (i, &w) in weights.iter().enumerate() {
                let want = gate * w as f64 / total as f64;
                assert!((got[&ids[i]] - want).abs() <= 1.0);
            }
            let stay = got.get(&NONE).copied().unwrap_or(0.0);
            assert!((stay - (UNIT31 as f64 - gate)).abs() <= 1.0);
            // brute-force the sampler over a sub-lattice
            let mut hits = BTreeMap::<u32, u64>::new();
            let stride = 1009;
            for x in (0..UNIT31).step_by(stride) {
                *hits.entry(k.sample(x)).or_insert(0) += 1;
            }
            let n = UNIT31.div_ceil(stride as u32) as f64;
            for (id, m) in &got {
                let f = hits.get(id).copied().unwrap_or(0) as f64 / n;
                assert!((f - m / UNIT31 as f64).abs() < 1e-4, "{id}: {f}");
            }
        }
    }

    #[test]
    fn saturated_grid_is_unchanged() {
        let cells: Vec<_> = (0..6).flat_map(|x| (0..6).map(move |y| ((x, y), 4))).collect();
        let (grid, graph) = partition(&cloud(&cells), &cfg(4, CountMode::Standard)).unwrap();
        let r = reconfigure(&grid, &graph, 99).unwrap();
        assert_eq!(r, initial_adjacency(&graph, 99));
    }

    #[test]
    fn isolated_neighbor_stays() {
        // center (3,3) count 1, its only neighbor (4,3) count 1 has no other neighbors
        let c = cloud(&[((3, 3), 1), ((4, 3), 1)]);
        let (grid, graph) = partition(&c, &cfg(4, CountMode::Standard)).unwrap();
        let r = reconfigure(&grid, &graph, 5).unwrap();
        // the neighbor walks from (4,3) whose only move is back onto the center
        let v = r.slot(0, Slot::Right).unwrap();
        assert_eq!(v.start(), 1);
        assert!(v.trace.iter().all(|&x| x == 0 || x == 1));

        let c = cloud(&[((3, 3), 4), ((4, 3), 1), ((9, 9), 1)]);
        let (grid, graph) = partition(&c, &cfg(4, CountMode::Standard)).unwrap();
        let r = reconfigure(&grid, &graph, 5).unwrap();
        assert!(r.slots(2).iter().all(Option::is_none));
    }

    #[test]
    fn traces_are_adjacent_steps() {
        let cells: Vec<_> = (0..10)
            .flat_map(|x| (0..10).map(move |y| ((x, y), 1 + ((x * 7 + y * 3) % 4) as u32)))
            .filter(|&((x, y), _)| (x + 2 * y) % 5 != 0)
            .collect();
        let (grid, graph) = partition(&cloud(&cells), &cfg(4, CountMode::Standard)).unwrap();
        let r = reconfigure(&grid, &graph, 1).unwrap();
        for c in 0..grid.len() as VoxelId {
            for (s, v) in r.slots(c).into_iter().enumerate() {
                let Some(v) = v else {
                    assert!(graph.neighbor(c, Slot::PLANAR[s]).is_none());
                    continue;
                };
                assert_eq!(Some(v.start()), graph.neighbor(c, Slot::PLANAR[s]));
                let plan = walk_plan(grid.count(v.start()), 4, CountMode::Standard).unwrap();
                assert_eq!(v.trace.len() as u32, plan.steps + 1);
                assert_eq!(*v.trace.last().unwrap(), v.final_id);
                for w in v.trace.windows(2) {
                    assert!(w[0] == w[1] || graph.neighbors(w[0]).any(|(_, n)| n == w[1]));
                }
            }
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let cells: Vec<_> = (0..12).flat_map(|x| (0..12).map(move |y| ((x, y), 1))).collect();
        let (grid, graph) = partition(&cloud(&cells), &cfg(8, CountMode::Standard)).unwrap();
        let a = reconfigure(&grid, &graph, 3).unwrap();
        let b = reconfigure(&grid, &graph, 3).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let c = pool.install(|| reconfigure(&grid, &graph, 3).unwrap());
        assert_eq!(a, c);
        assert_ne!(a, reconfigure(&grid, &graph, 4).unwrap());
    }

    #[test]
    fn engine_walk_matches_reconfigure() {
        let cells: Vec<_> = (0..8).flat_map(|x| (0..8).map(move |y| ((x, y), 1 + (x as u32 % 3)))).collect();
        let (grid, graph) = partition(&cloud(&cells), &cfg(4, CountMode::Standard)).unwrap();
        let engine = WalkEngine::new(&grid, &graph).unwrap();
        let r = engine.reconfigure(17);
        for c in 0..grid.len() as VoxelId {
            for s in Slot::PLANAR {
                if let Some(start) = graph.neighbor(c, s) {
                    let t = engine.walk(17, c, s, start, engine.steps_from(start));
                    assert_eq!(Some(t), r.trace(c, s));
                }
            }
        }
    }

    #[test]
    fn two_voxel_component_drifts_to_dense() {
        // counts (1, 4), n = 4: a walk from the sparse voxel takes 3 steps,
        // moves at step 1 for sure, then leaves the dense voxel with p = 1/4
        // per step. Enumerated end-at-dense probability: 1 - 1/4 + 1/16 = 0.8125.
        let c = cloud(&[((2, 2), 4), ((3, 2), 1)]);
        let (grid, graph) = partition(&c, &cfg(4, CountMode::Standard)).unwrap();
        let engine = WalkEngine::new(&grid, &graph).unwrap();
        let trials = 10_000;
        let hits = (0..trials).filter(|&seed| engine.walk(seed, 0, Slot::Right, 1, 3).final_id == 0).count();
        let frac = hits as f64 / trials as f64;
        let sigma = (0.8125f64 * 0.1875 / trials as f64).sqrt();
        assert!((frac - 0.8125).abs() < 4.0 * sigma, "fraction {frac}");
    }
}
