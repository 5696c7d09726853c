use proptest::prelude::*;
use traplab::geometry::{Aabb, Mask, PunchedDomainSpec};
use traplab::rng::CounterRng;
use traplab::spectral::{
    assemble, assemble_traps, critical_spacing, principal_eigenvalue, punched_domain,
    rayleigh_quotient, variational_functional, EigenOptions, SweepOptions, TrapDomain, TrapKind,
    Traps,
};

fn outer() -> Aabb {
    Aabb::symmetric(2, 1.0).unwrap()
}

fn mask_domain(bits: Vec<bool>) -> TrapDomain {
    let m = Mask::new(0.25, vec![-1.0, -1.0], vec![8, 8], bits).unwrap();
    TrapDomain {
        outer: outer(),
        traps: Traps::Mask(m),
    }
}

fn lambda(dom: &TrapDomain, kind: TrapKind, h: f64) -> f64 {
    let op = assemble_traps(dom, kind, 0.0, h).unwrap();
    principal_eigenvalue(&op, &EigenOptions::default())
        .unwrap()
        .lambda1
}

#[test]
fn nested_masks_raise_the_eigenvalue() {
    for trial in 0..10u64 {
        let mut rng = CounterRng::from_labels(17, &[trial]);
        // Interior cells only, so the free region stays connected enough to
        // have a principal eigenvalue.
        let base: Vec<bool> = (0..64).map(|_| rng.uniform() < 0.15).collect();
        let more: Vec<bool> = base.iter().map(|&b| b || rng.uniform() < 0.15).collect();
        let l0 = lambda(&mask_domain(base), TrapKind::Hard, 1.0 / 16.0);
        let l1 = lambda(&mask_domain(more), TrapKind::Hard, 1.0 / 16.0);
        assert!(l1 >= l0 - 1e-9, "trial {trial}: {l1} < {l0}");
    }
}

#[test]
fn second_order_grid_convergence() {
    let dom = TrapDomain::free(outer());
    let l: Vec<f64> = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]
        .iter()
        .map(|&h| lambda(&dom, TrapKind::Hard, h))
        .collect();
    let ratio = (l[0] - l[1]) / (l[1] - l[2]);
    assert!((ratio - 4.0).abs() < 0.2, "{l:?} ratio {ratio}");
}

#[test]
fn functional_has_a_positive_floor() {
    let opts = SweepOptions::default();
    let mut floor = f64::INFINITY;
    for r in [4.0, 8.0] {
        let dc = critical_spacing(2, r).unwrap();
        for m in [0.5, 1.0] {
            let spec = PunchedDomainSpec {
                d: 2,
                n: 1.0,
                spacing: m * dc,
                hole_side: 1.0 / r,
            };
            let h = 1.0 / (2.0 * r).max(32.0);
            let v =
                variational_functional(&punched_domain(&spec, h).unwrap(), r, 2.0, &opts).unwrap();
            floor = floor.min(v.value);
        }
    }
    assert!(floor > 1.0, "floor {floor}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rayleigh_quotient_matches(side in 0.1f64..0.6, cx in -0.3f64..0.3, v in 0.5f64..20.0) {
        let dom = TrapDomain {
            outer: outer(),
            traps: Traps::Boxes(vec![Aabb::new(vec![cx, 0.0], vec![side, side]).unwrap()]),
        };
        let op = assemble_traps(&dom, TrapKind::Soft(v), 0.0, 1.0 / 16.0).unwrap();
        let res = principal_eigenvalue(&op, &EigenOptions::default()).unwrap();
        let q = rayleigh_quotient(&op, &res.eigenvector);
        prop_assert!((q - res.lambda1).abs() <= 1e-6 * res.lambda1.max(1.0));
        prop_assert!(res.eigenvector.iter().all(|&x| x >= -1e-10));
        let norm: f64 = res.eigenvector.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn larger_potential_raises_the_eigenvalue(a in 0.0f64..5.0, extra in 0.0f64..5.0, k in 1.0f64..4.0) {
        let region = traplab::geometry::Region::single(outer());
        let v1 = move |x: &[f64]| a * (k * x[0]).sin().abs();
        let v2 = move |x: &[f64]| a * (k * x[0]).sin().abs() + extra * x[1].abs();
        let l1 = principal_eigenvalue(&assemble(&region, &v1, 1.0 / 16.0).unwrap(), &EigenOptions::default()).unwrap().lambda1;
        let l2 = principal_eigenvalue(&assemble(&region, &v2, 1.0 / 16.0).unwrap(), &EigenOptions::default()).unwrap().lambda1;
        prop_assert!(l2 >= l1 - 1e-9);
    }
}
