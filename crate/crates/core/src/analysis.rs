//! Distribution and throughput diagnostics.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::encoder::{encode_grid, Encoder, FeatureMode, FeatureSpec};
use crate::error::{Error, Result};
use crate::grid::{partition, partition_plain, GridConfig, Slot, VoxelGrid, VoxelId};
use crate::multires::{MultiResGrid, MultiResReconfiguration, Resolution};
use crate::pointcloud::PointCloud;
use crate::walk::{reconfigure, Reconfiguration};

/// Frequencies of per-voxel point counts.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct CountHistogram {
    pub bins: BTreeMap<u32, u64>,
    pub total: u64,
}

impl CountHistogram {
    pub fn from_counts(counts: &[u32]) -> Self {
        let mut h = CountHistogram::default();
        for &c in counts {
            *h.bins.entry(c).or_default() += 1;
            h.total += 1;
        }
        h
    }

    /// Bins fractional counts to the nearest integer (halves round up).
    pub fn from_values(values: &[f64]) -> Self {
        let counts: Vec<u32> = values.iter().map(|v| (v + 0.5).floor().max(0.0) as u32).collect();
        Self::from_counts(&counts)
    }

    pub fn fraction(&self, count: u32) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.bins.get(&count).copied().unwrap_or(0) as f64 / self.total as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("count,frequency\n");
        for (c, f) in &self.bins {
            s.push_str(&format!("{c},{f}\n"));
        }
        s
    }
}

/// Per center voxel, the mean count over the center and its present
/// reconfigured neighbors.
pub fn effective_counts(reconfig: &Reconfiguration, grid: &VoxelGrid) -> Vec<f64> {
    (0..grid.len() as VoxelId)
        .map(|c| {
            let mut sum = grid.count(c) as u64;
            let mut n = 1u64;
            for f in reconfig.final_ids(c).into_iter().flatten() {
                sum += grid.count(f) as u64;
                n += 1;
            }
            sum as f64 / n as f64
        })
        .collect()
}

/// Same as [`effective_counts`], reading coarse neighbors' resampled counts.
pub fn effective_counts_multires(reconfig: &MultiResReconfiguration, mgrid: &MultiResGrid) -> Vec<f64> {
    effective_counts_tagged(reconfig, &mgrid.fine.counts(), &mgrid.coarse.counts())
}

/// Two-resolution effective counts from per-resolution count tables, as read
/// back from dumps.
pub fn effective_counts_tagged(reconfig: &MultiResReconfiguration, fine: &[u32], coarse: &[u32]) -> Vec<f64> {
    (0..reconfig.slots.len() as VoxelId)
        .map(|c| {
            let mut sum = fine[c as usize] as u64;
            let mut n = 1u64;
            for s in reconfig.final_slots(c).into_iter().flatten() {
                sum += match s.resolution {
                    Resolution::Fine => fine[s.id as usize],
                    Resolution::Coarse => coarse[s.id as usize],
                } as u64;
                n += 1;
            }
            sum as f64 / n as f64
        })
        .collect()
}

/// Population standard deviation over mean.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Analysis("coefficient of variation of an empty sequence".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return Err(Error::Analysis(format!("coefficient of variation needs a positive mean, got {mean}")));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(var.sqrt() / mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DisplacementStats {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub samples: usize,
}

/// Nearest-rank percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn summarize_displacements(mut d: Vec<f64>) -> DisplacementStats {
    if d.is_empty() {
        return DisplacementStats::default();
    }
    d.sort_by(f64::total_cmp);
    DisplacementStats {
        mean: d.iter().sum::<f64>() / d.len() as f64,
        p50: percentile(&d, 0.5),
        p95: percentile(&d, 0.95),
        samples: d.len(),
    }
}

pub fn cell_distance(a: [i32; 3], b: [i32; 3]) -> f64 {
    let sq: i64 = (0..3).map(|k| ((a[k] - b[k]) as i64).pow(2)).sum();
    (sq as f64).sqrt()
}

/// Euclidean start-to-final displacement of every present slot, in cells.
pub fn displacement_stats(reconfig: &Reconfiguration, grid: &VoxelGrid) -> DisplacementStats {
    let mut d = Vec::new();
    for c in 0..reconfig.len() as VoxelId {
        for s in Slot::PLANAR {
            if let Some(v) = reconfig.slot(c, s) {
                d.push(cell_distance(grid.cell(v.start()), grid.cell(v.final_id)));
            }
        }
    }
    summarize_displacements(d)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub points: usize,
    pub voxels: usize,
    pub repetitions: usize,
    /// Median seconds per phase.
    pub plain_partition_s: f64,
    pub partition_s: f64,
    pub reconfigure_s: f64,
    pub encode_s: f64,
    pub clouds_per_second: f64,
}

impl BenchReport {
    /// Walk phase (engine build + all walks) relative to plain partition time.
    pub fn reconfigure_overhead(&self) -> f64 {
        self.reconfigure_s / self.plain_partition_s
    }

    /// Extra cost of building adjacency during partition, relative to plain partition.
    pub fn adjacency_overhead(&self) -> f64 {
        self.partition_s / self.plain_partition_s - 1.0
    }

    pub fn to_lines(&self) -> String {
        format!(
            "points {} count\nvoxels {} count\nrepetitions {} count\nplain_partition {:.6} s\npartition {:.6} s\nreconfigure {:.6} s\nencode {:.6} s\nreconfigure_overhead {:.4} ratio\nadjacency_overhead {:.4} ratio\nrate {:.3} clouds/s\n",
            self.points,
            self.voxels,
            self.repetitions,
            self.plain_partition_s,
            self.partition_s,
            self.reconfigure_s,
            self.encode_s,
            self.reconfigure_overhead(),
            self.adjacency_overhead(),
            self.clouds_per_second,
        )
    }
}

fn time_once<T>(f: impl FnOnce() -> T) -> Duration {
    let t = Instant::now();
    std::hint::black_box(f());
    t.elapsed()
}

/// Median wall time of `reps` runs of `f`.
pub fn median_time<T>(reps: usize, mut f: impl FnMut() -> T) -> Duration {
    let mut times: Vec<Duration> = (0..reps)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(f());
            t.elapsed()
        })
        .collect();
    times.sort();
    times[times.len() / 2]
}

/// Times each phase (median of `repetitions`, after one warm-up run).
pub fn bench(cloud: &PointCloud, config: &GridConfig, repetitions: usize, seed: u64) -> Result<BenchReport> {
    if repetitions < 3 {
        return Err(Error::Analysis("bench needs at least 3 repetitions".into()));
    }
    let (grid, graph) = partition(cloud, config)?;
    let reconfig = reconfigure(&grid, &graph, seed)?;
    let spec = FeatureSpec::new(if config.is_pillar() { FeatureMode::Pillars } else { FeatureMode::Second });
    encode_grid(&grid, &reconfig, cloud, spec, &Encoder::Avg)?;

    // Phases are interleaved per repetition so slow drift (frequency scaling,
    // noisy neighbours) hits every phase alike.
    let mut t = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for _ in 0..repetitions {
        t[0].push(time_once(|| partition_plain(cloud, config)));
        t[1].push(time_once(|| partition(cloud, config)));
        t[2].push(time_once(|| reconfigure(&grid, &graph, seed)));
        t[3].push(time_once(|| encode_grid(&grid, &reconfig, cloud, spec, &Encoder::Avg)));
    }
    let [plain, part, walk, enc] = t.map(|mut v| {
        v.sort();
        v[v.len() / 2]
    });
    let total = (part + walk + enc).as_secs_f64();
    Ok(BenchReport {
        points: cloud.len(),
        voxels: grid.len(),
        repetitions,
        plain_partition_s: plain.as_secs_f64(),
        partition_s: part.as_secs_f64(),
        reconfigure_s: walk.as_secs_f64(),
        encode_s: enc.as_secs_f64(),
        clouds_per_second: if total > 0.0 { 1.0 / total } else { f64::INFINITY },
    })
}
