//! Reconfigurable voxels for LiDAR point clouds.
//!
//! The pipeline quantizes a cloud into a sparse voxel (or pillar) grid in
//! one pass, recording 4-adjacency as voxels are created, then lets every
//! voxel's four neighbor slots perform a biased random walk toward denser
//! voxels on the same connected component. The reconfigured neighborhoods
//! feed a feature encoder whose output is scattered back to a dense map.
//!
//! ```
//! use revox::{generate_synthetic, partition, reconfigure, GridConfig, SynthSpec};
//!
//! let cloud = generate_synthetic(&SynthSpec::standard_sparse(), 0).unwrap();
//! let (grid, graph) = partition(&cloud, &GridConfig::pillars()).unwrap();
//! let reconfig = reconfigure(&grid, &graph, 0).unwrap();
//! assert_eq!(reconfig.len(), grid.len());
//! ```

pub mod analysis;
pub mod encoder;
pub mod error;
pub mod format;
pub mod grid;
pub mod multires;
pub mod pointcloud;
pub mod rng;
pub mod walk;

pub use analysis::{
    coefficient_of_variation, displacement_stats, effective_counts, effective_counts_multires,
    effective_counts_tagged, BenchReport, CountHistogram, DisplacementStats,
};
pub use encoder::{
    decorate, decorate_multires, encode_avg, encode_weighted, scatter, ColumnMax, DenseMap, FeatureMode,
    FeatureSpec, FeatureTransform, NeighborWeightFn, PointFeatureBlock, UniformWeights, VoxelFeature,
};
pub use error::{Error, Result};
pub use grid::{
    connected_components, partition, partition_plain, Cell, ComponentLabels, Connectivity, GridConfig,
    NeighborGraph, Slot, VoxelGrid, VoxelId, VoxelRecord,
};
pub use multires::{
    inter_res_plan, inter_res_plan_with_mode, partition_multires, reconfigure_multires, InterResPlan,
    MultiResEngine, MultiResGrid, MultiResReconfiguration, Resolution, ResolutionTaggedSlot, StepKind,
    TaggedWalk,
};
pub use pointcloud::{
    generate_synthetic, load_bin, load_csv, load_kitti_bin, BinLayout, Blob, Point, PointCloud, SynthSpec,
};
pub use walk::{
    effective_count, initial_adjacency, reconfigure, transition_distribution, walk_plan, CountMode,
    Reconfiguration, SlotView, TransitionDistribution, WalkEngine, WalkPlan, WalkTrace,
};
