mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{cloud_from_cells, rng, unit_pillars};
use proptest::prelude::*;
use revox::format::{read_rvox1, read_rwlk1, read_rwlk2, write_rvox1, write_rwlk1, write_rwlk2};
use revox::{
    coefficient_of_variation, connected_components, partition, partition_multires, reconfigure,
    reconfigure_multires, CountMode, Resolution, Slot,
};

fn layout() -> impl Strategy<Value = Vec<([i32; 2], u32)>> {
    prop::collection::btree_map((0i32..12, 0i32..12), 1u32..=9, 1..80)
        .prop_map(|m: BTreeMap<(i32, i32), u32>| m.into_iter().map(|((x, y), k)| ([x, y], k)).collect())
}

fn mode() -> impl Strategy<Value = CountMode> {
    prop_oneof![Just(CountMode::Standard), Just(CountMode::QuarterAdjusted)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_keeps_every_point_once_up_to_the_cap(cells in layout(), n in 1u32..8, seed: u64) {
        let cloud = cloud_from_cells(&cells, &mut rng(seed));
        let (grid, graph) = partition(&cloud, &unit_pillars(12, n, CountMode::Standard)).unwrap();
        prop_assert_eq!(grid.len(), cells.len());
        let mut seen = BTreeSet::new();
        for v in grid.voxels() {
            prop_assert!(v.count() >= 1 && v.count() <= n);
            for &i in &v.point_indices {
                prop_assert!(seen.insert(i));
                let p = &cloud.points[i as usize];
                prop_assert_eq!([p.x.floor() as i32, p.y.floor() as i32, 0], v.cell);
            }
        }
        let want: usize = cells.iter().map(|c| c.1.min(n) as usize).sum();
        prop_assert_eq!(seen.len(), want);
        prop_assert!(graph.is_symmetric());
    }

    #[test]
    fn walks_stay_on_their_component(cells in layout(), n in 1u32..10, m in mode(), seed: u64) {
        let cloud = cloud_from_cells(&cells, &mut rng(seed));
        let (grid, graph) = partition(&cloud, &unit_pillars(12, n, m)).unwrap();
        let rc = reconfigure(&grid, &graph, seed).unwrap();
        let labels = connected_components(&graph);
        for c in 0..grid.len() as u32 {
            for slot in Slot::PLANAR {
                let start = graph.neighbor(c, slot);
                let view = rc.slot(c, slot);
                prop_assert_eq!(start.is_some(), view.is_some());
                let (Some(start), Some(view)) = (start, view) else { continue };
                prop_assert_eq!(view.trace[0], start);
                prop_assert_eq!(*view.trace.last().unwrap(), view.final_id);
                for w in view.trace.windows(2) {
                    prop_assert!(w[0] == w[1] || graph.neighbors(w[0]).any(|(_, b)| b == w[1]));
                }
                prop_assert_eq!(labels.label(view.final_id), labels.label(c));
            }
        }
        // same seed, same result
        prop_assert_eq!(&rc, &reconfigure(&grid, &graph, seed).unwrap());
    }

    #[test]
    fn dumps_round_trip(cells in layout(), n in 1u32..10, seed: u64) {
        let cloud = cloud_from_cells(&cells, &mut rng(seed));
        let (grid, graph) = partition(&cloud, &unit_pillars(12, n, CountMode::Standard)).unwrap();
        prop_assert_eq!(read_rvox1(&write_rvox1(grid.voxels())).unwrap(), grid.voxels().to_vec());
        let rc = reconfigure(&grid, &graph, seed).unwrap();
        let back = read_rwlk1(&write_rwlk1(&rc).unwrap()).unwrap();
        for c in 0..grid.len() as u32 {
            prop_assert_eq!(back.slots(c), rc.slots(c));
        }

        let mgrid = partition_multires(&cloud, &unit_pillars(12, n, CountMode::Standard), seed).unwrap();
        let mrc = reconfigure_multires(&mgrid, seed).unwrap();
        let (mback, coarse) = read_rwlk2(&write_rwlk2(&mrc, &mgrid.coarse).unwrap()).unwrap();
        prop_assert_eq!(mback.slots, mrc.slots);
        prop_assert_eq!(coarse, mgrid.coarse.voxels().to_vec());
    }

    #[test]
    fn coarse_voxels_partition_their_children(cells in layout(), n in 1u32..10, seed: u64) {
        let cloud = cloud_from_cells(&cells, &mut rng(seed));
        let mgrid = partition_multires(&cloud, &unit_pillars(12, n, CountMode::Standard), seed).unwrap();
        let mut covered = vec![0u32; mgrid.fine.len()];
        for cid in 0..mgrid.coarse.len() as u32 {
            let cc = mgrid.coarse.cell(cid);
            let mut pooled = BTreeSet::new();
            let mut total = 0;
            for f in mgrid.children(cid) {
                covered[f as usize] += 1;
                prop_assert_eq!(mgrid.parent_of[f as usize], cid);
                let fc = mgrid.fine.cell(f);
                prop_assert_eq!([fc[0].div_euclid(2), fc[1].div_euclid(2), fc[2]], cc);
                total += mgrid.fine.count(f);
                pooled.extend(mgrid.fine.voxel(f).point_indices.iter().copied());
            }
            prop_assert_eq!(mgrid.coarse_pre_counts[cid as usize], total);
            let kept = &mgrid.coarse.voxel(cid).point_indices;
            prop_assert_eq!(kept.len() as u32, total.min(n));
            prop_assert!(kept.iter().all(|i| pooled.contains(i)));
        }
        prop_assert!(covered.iter().all(|&k| k == 1));

        let mrc = reconfigure_multires(&mgrid, seed).unwrap();
        for row in &mrc.slots {
            for w in row.iter().flatten() {
                prop_assert_eq!(w.start().resolution, Resolution::Fine);
                for v in &w.trace {
                    let len = match v.resolution {
                        Resolution::Fine => mgrid.fine.len(),
                        Resolution::Coarse => mgrid.coarse.len(),
                    };
                    prop_assert!((v.id as usize) < len);
                }
            }
        }
    }

    #[test]
    fn cov_is_non_negative_and_scale_free(values in prop::collection::vec(0.5f64..100.0, 1..200), k in 0.1f64..10.0) {
        let a = coefficient_of_variation(&values).unwrap();
        prop_assert!(a >= 0.0);
        let scaled: Vec<f64> = values.iter().map(|v| v * k).collect();
        prop_assert!((coefficient_of_variation(&scaled).unwrap() - a).abs() <= 1e-9 * (1.0 + a));
    }
}
