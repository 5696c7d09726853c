use proptest::prelude::*;
use traplab::coarsegrain::{default_params, CoarseGrainParams, DensityMap, DyadicIndex};
use traplab::geometry::{Aabb, Region};
use traplab::lattice::{sample_auto, DisplacementLaw, PointConfiguration};

fn config(theta: f64, r: f64, seed: u64) -> PointConfiguration {
    let law = DisplacementLaw::power(theta, 2).unwrap();
    sample_auto(&law, &Aabb::symmetric(2, 3.0 * r).unwrap(), seed, 0)
        .unwrap()
        .scaled(1.0 / r)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn adding_points_keeps_density_boxes(
        seed in any::<u64>(),
        extra in prop::collection::vec(-2.0f64..2.0, 0..40),
        theta in prop::sample::select(vec![0.5, 2.0, 8.0]),
    ) {
        let r = 16.0;
        let params = default_params(2, theta, r).unwrap();
        let base = config(theta, r, seed);
        let mut grown = base.clone();
        let extra: Vec<f64> = extra.chunks_exact(2).flatten().copied().collect();
        grown.add_points(&extra);
        let before = DensityMap::new(&base, &params).unwrap();
        let after = DensityMap::new(&grown, &params).unwrap();
        for qx in -2..2 {
            for qy in -2..2 {
                let q = [qx, qy];
                if before.is_density_box(&q).unwrap() {
                    prop_assert!(after.is_density_box(&q).unwrap());
                }
                let (counts, per) = before.occupancy(&q).unwrap();
                prop_assert_eq!(before.is_density_box(&q).unwrap(), counts.iter().all(|&c| 2 * c >= per));
            }
        }
    }

    #[test]
    fn truncations_contain_refinements(base in prop::collection::vec(-5i64..5, 2), bits in prop::collection::vec(0u8..4, 1..6), k in 0usize..6) {
        let mut idx = DyadicIndex::root(base);
        for b in bits {
            idx = idx.children().swap_remove(b as usize);
        }
        let k = k.min(idx.depth());
        let coarse = idx.truncate(k).cell();
        let fine = idx.cell();
        prop_assert!(coarse.intersect(&fine).map(|i| (i.volume() - fine.volume()).abs() < 1e-12).unwrap_or(false));
        prop_assert!(idx.truncate(k).is_prefix_of(&idx));
    }

    #[test]
    fn emitted_parameters_satisfy_the_constraints(d in 2usize..4, theta in 0.1f64..10.0, r in 2.0f64..1e4) {
        let p = default_params(d, theta, r).unwrap();
        let df = d as f64;
        // η² + ((d-2)/2 + θ/d)η ≤ min(θ/d, 1/2)
        prop_assert!(p.eta > 0.0 && p.eta * p.eta + ((df - 2.0) / 2.0 + theta / df) * p.eta <= (theta / df).min(0.5));
        prop_assert!((p.gamma - ((df - 2.0) / df + 2.0 * p.eta / df)).abs() < 1e-12);
        let lo = 2.0 * p.eta * p.eta + (df - 2.0 + 2.0 * theta / df) * p.eta;
        prop_assert!(p.chi > lo && p.chi < (2.0 * theta / df).min(1.0));
        prop_assert!(CoarseGrainParams::new(d, theta, r, p.eta, Some(p.chi)).is_ok());
    }
}

#[test]
fn hole_functional_density_grows_on_non_density_complements() {
    // W_r = union of the non-density boxes of one configuration; the mean
    // of F(rW_r)/|rW_r| over configurations with W_r nonempty grows with r.
    // Non-density boxes only occur for r <= 4 on these windows.
    let theta = 0.5;
    let mut per_volume = Vec::new();
    for r in [2.0, 4.0] {
        let params = default_params(2, theta, r).unwrap();
        let mut vals = Vec::new();
        for seed in 0..60 {
            let map = DensityMap::new(&config(theta, r, seed), &params).unwrap();
            let mut boxes = Vec::new();
            for qx in -2..2 {
                for qy in -2..2 {
                    if !map.is_density_box(&[qx, qy]).unwrap() {
                        let lo = [qx as f64 * r, qy as f64 * r];
                        boxes.push(Aabb::from_bounds(&lo, &[lo[0] + r, lo[1] + r]).unwrap());
                    }
                }
            }
            if !boxes.is_empty() {
                let w = Region::BoxUnion(boxes);
                vals.push(w.hole_functional(theta, w.default_resolution()).unwrap() / w.volume());
            }
        }
        assert!(!vals.is_empty(), "no non-density boxes at r={r}");
        per_volume.push(vals.iter().sum::<f64>() / vals.len() as f64);
    }
    assert!(per_volume[1] > per_volume[0], "{per_volume:?}");
}
