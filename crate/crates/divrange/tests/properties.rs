//! Property-based tests over random distributions, generator pairs, and
//! point sets.

use divrange::*;
use proptest::prelude::*;

fn normalize(raw: Vec<f64>) -> DiscreteDistribution {
    let sum: f64 = raw.iter().sum();
    DiscreteDistribution::new(raw.iter().map(|x| x / sum).collect()).unwrap()
}

/// Two distributions over the same alphabet.
fn arb_dist_pair(
    max_d: usize,
) -> impl Strategy<Value = (DiscreteDistribution, DiscreteDistribution)> {
    (2..=max_d).prop_flat_map(|d| {
        (
            prop::collection::vec(1e-6..1.0f64, d),
            prop::collection::vec(1e-6..1.0f64, d),
        )
            .prop_map(|(a, b)| (normalize(a), normalize(b)))
    })
}

fn arb_generator() -> impl Strategy<Value = Generator> {
    prop_oneof![
        (-2.0..3.0f64).prop_map(make_power),
        Just(make_total_variation()),
        Just(make_lecam()),
        Just(make_jensen_shannon()),
    ]
}

proptest! {
    #[test]
    fn divergence_is_nonnegative(
        f in arb_generator(),
        (p, q) in arb_dist_pair(16),
    ) {
        let v = divergence(&f, &p, &q).unwrap();
        prop_assert!(v >= -1e-12, "{} gave {v}", f.name());
    }

    #[test]
    fn conjugate_swaps_arguments(
        f in arb_generator(),
        (p, q) in arb_dist_pair(8),
    ) {
        let a = divergence(&f, &p, &q).unwrap();
        let b = divergence(&conjugate(&f), &q, &p).unwrap();
        if a.is_infinite() {
            prop_assert!(b.is_infinite());
        } else {
            prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
        }
    }

    #[test]
    fn power_skew_symmetry(
        alpha in -2.0..3.0f64,
        (p, q) in arb_dist_pair(6),
    ) {
        let x = divergence(&make_power(alpha), &p, &q).unwrap();
        let y = divergence(&make_power(1.0 - alpha), &q, &p).unwrap();
        prop_assert!((x - y).abs() <= 1e-10 * x.max(1.0));
    }

    #[test]
    fn block_mixture_is_linear(
        f in arb_generator(),
        (p0, q0) in arb_dist_pair(4),
        (p1, q1) in arb_dist_pair(4),
        alpha in 0.0..=1.0f64,
    ) {
        let (pm, qm) = block_mixture(&p0, &q0, &p1, &q1, alpha).unwrap();
        let mixed = divergence(&f, &pm, &qm).unwrap();
        let expect = (1.0 - alpha) * divergence(&f, &p0, &q0).unwrap()
            + alpha * divergence(&f, &p1, &q1).unwrap();
        prop_assert!((mixed - expect).abs() <= 1e-10 * expect.max(1.0));
    }

    #[test]
    fn reflection_leaves_two_point_pairs_fixed(
        f in arb_generator(),
        g in arb_generator(),
        p in 0.0..=1.0f64,
        q in 0.0..=1.0f64,
    ) {
        let (p, q) = if p <= q { (p, q) } else { (q, p) };
        let t = TrianglePoint::new(p, q).unwrap();
        let r = TrianglePoint::canonical(1.0 - p, 1.0 - q).unwrap();
        let a = two_point_pair(&f, &g, t).unwrap();
        let b = two_point_pair(&f, &g, r).unwrap();
        if a.is_finite() {
            prop_assert!(a.dist(b) <= 1e-10 * (1.0 + a.x.abs() + a.y.abs()));
        } else {
            prop_assert!(!b.is_finite());
        }
    }

    #[test]
    fn hull_is_convex_and_covers_its_input(
        pts in prop::collection::vec((0.0..10.0f64, 0.0..10.0f64), 1..200),
    ) {
        let points: Vec<DivergencePoint> = pts
            .iter()
            .map(|&(x, y)| DivergencePoint::new(x, y))
            .collect();
        let h = hull(&points).unwrap();
        // convexity: every ordered triple turns left (or is dropped)
        if h.len() >= 3 {
            for i in 0..h.len() {
                let a = h[i];
                let b = h[(i + 1) % h.len()];
                let c = h[(i + 2) % h.len()];
                let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
                prop_assert!(cross > 0.0, "not strictly convex at {i}");
            }
        }
        // coverage: all inputs lie inside up to a hair of tolerance
        for p in &points {
            let mut margin = f64::INFINITY;
            if h.len() >= 3 {
                for i in 0..h.len() {
                    let a = h[i];
                    let b = h[(i + 1) % h.len()];
                    let len = (b.x - a.x).hypot(b.y - a.y);
                    let cr = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
                    margin = margin.min(cr / len);
                }
            } else {
                margin = 0.0;
            }
            prop_assert!(margin >= -1e-9, "{p:?} outside by {margin}");
        }
    }

    #[test]
    fn sampled_simplex_pairs_stay_in_region(
        seed in 0u64..1000,
    ) {
        // every 2-atom pair is 2-achievable, so a coarse region must already
        // contain all sampled binary pairs up to its own discretization error
        // (the inscribed hull at grid 64 sits ~1e-4 below the curved boundary)
        let f = make_total_variation();
        let g = make_lecam();
        let region = joint_range(&f, &g, 64, (20.0, 20.0)).unwrap();
        let report = verify_membership(&f, &g, &region, 2, 200, seed, 1e-3).unwrap();
        prop_assert_eq!(report.outside, 0);
    }
}
