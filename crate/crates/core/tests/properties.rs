//! Randomized invariants of the measure, counting, metric and generator layers.

use dimlab::counting::{
    covering_sum_with, greedy_cover, greedy_packing_with, packing_sum_with, slope_bounds, CandidateOrder, Ladder,
    ScaleSeries,
};
use dimlab::format::{format_measure, parse_measure};
use dimlab::ifs::{IfsModel, Word};
use dimlab::measure::{enlarge, region_mass, to_grid, DiscreteMeasure, Frame, Point, Region};
use dimlab::metric::{fortet_mourier, LP_TOL};
use dimlab::typgen::mix;
use proptest::prelude::*;

fn measure_on(span: f64, max_atoms: usize) -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::vec((0.0..span, 0.05f64..1.0), 1..=max_atoms).prop_map(|raw| {
        let total: f64 = raw.iter().map(|a| a.1).sum();
        DiscreteMeasure::from_atoms(raw.into_iter().map(|(x, w)| (Point::on_line(x), w / total)).collect()).unwrap()
    })
}

fn plane_measure() -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, 0.05f64..1.0), 1..=12).prop_map(|raw| {
        let total: f64 = raw.iter().map(|a| a.2).sum();
        DiscreteMeasure::from_atoms(raw.into_iter().map(|(x, y, w)| (Point::new(vec![x, y]), w / total)).collect())
            .unwrap()
    })
}

fn shifted(mu: &DiscreteMeasure, by: f64) -> DiscreteMeasure {
    DiscreteMeasure::from_atoms(mu.atoms().zip(mu.weights()).map(|(a, &w)| (Point::on_line(a[0] + by), w)).collect())
        .unwrap()
}

fn whole_line() -> Region {
    Region::ball(Point::on_line(0.0), 100.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn ball_mass_grows_with_radius(pi in plane_measure(), x in 0.0..1.0f64, y in 0.0..1.0f64, r1 in 0.0..1.5f64, dr in 0.0..1.0f64) {
        let c = [x, y];
        prop_assert!(pi.ball_mass(&c, r1) <= pi.ball_mass(&c, r1 + dr));
    }

    #[test]
    fn enlarging_a_region_never_loses_mass(pi in measure_on(1.0, 12), c in 0.0..1.0f64, h in 0.001..0.5f64, alpha in 0.001..1.0f64) {
        let e = Region::ball(Point::on_line(c), h).unwrap();
        prop_assert!(region_mass(&pi, &enlarge(&e, alpha).unwrap()) >= region_mass(&pi, &e));
    }

    #[test]
    fn grid_keeps_total_mass(pi in plane_measure(), base in 2u32..5, level in 0u32..5) {
        let grid = to_grid(&pi, &Frame::new(vec![0.0, 0.0], 1.0).unwrap(), base, level).unwrap();
        prop_assert!((grid.total() - 1.0).abs() <= 1e-12);
        prop_assert!(grid.cell_masses.values().all(|m| *m > 0.0));
        prop_assert_eq!(grid.moment(0.0), grid.cell_masses.len() as f64);
    }

    #[test]
    fn mixtures_are_linear(a in measure_on(1.0, 8), b in measure_on(1.0, 8), p in 0.01..0.99f64, x in 0.0..1.0f64, r in 0.0..1.0f64) {
        let m = mix(&[(p, a.clone()), (1.0 - p, b.clone())]).unwrap();
        let want = p * a.ball_mass(&[x], r) + (1.0 - p) * b.ball_mass(&[x], r);
        prop_assert!((m.ball_mass(&[x], r) - want).abs() <= 1e-12);
    }

    #[test]
    fn sums_fall_as_q_rises(pi in measure_on(1.0, 12), r in 0.01..0.5f64, q1 in -3.0..3.0f64, dq in 0.0..3.0f64) {
        let order = CandidateOrder::Lexicographic;
        let region = whole_line();
        let (lo, hi) = (q1, q1 + dq);
        let cover = |q| covering_sum_with(&pi, &region, r, q, order).unwrap();
        let pack = |q| packing_sum_with(&pi, &region, r, q, 1.0, order).unwrap();
        prop_assert!(cover(hi) <= cover(lo) * (1.0 + 1e-12));
        prop_assert!(pack(hi) <= pack(lo) * (1.0 + 1e-12));
    }

    #[test]
    fn covers_need_a_ball_per_packing_center(pi in plane_measure(), r in 0.01..0.5f64, q in -2.0..2.0f64) {
        let region = Region::ball(Point::new(vec![0.5, 0.5]), 2.0).unwrap();
        for order in [CandidateOrder::MassAware, CandidateOrder::Lexicographic] {
            let cover = greedy_cover(&pi, &region, r, q, order).unwrap();
            let packing = greedy_packing_with(&pi, &region, 2.0 * r, q, order).unwrap();
            prop_assert!(cover.atoms.len() >= packing.centers.len());
            let count = covering_sum_with(&pi, &region, r, 0.0, order).unwrap();
            prop_assert!(count >= packing.centers.len() as f64);
            prop_assert_eq!(count, greedy_cover(&pi, &region, r, 0.0, order).unwrap().atoms.len() as f64);
        }
    }

    #[test]
    fn covers_cover_and_packings_separate(pi in plane_measure(), r in 0.01..0.5f64, q in -2.0..2.0f64) {
        let region = Region::ball(Point::new(vec![0.3, 0.3]), 0.6).unwrap();
        let inside = region.atoms_of(&pi);
        prop_assume!(!inside.is_empty());
        let cover = greedy_cover(&pi, &region, r, q, CandidateOrder::MassAware).unwrap();
        for &i in &inside {
            prop_assert!(cover.atoms.iter().any(|&c| pi.ball_indices(pi.atom(c), r).contains(&i)));
        }
        let packing = greedy_packing_with(&pi, &region, r, q, CandidateOrder::MassAware).unwrap();
        prop_assert!(packing.separation_ok);
        for (i, a) in packing.centers.iter().enumerate() {
            prop_assert!(region.contains(&a.0));
            for b in &packing.centers[i + 1..] {
                prop_assert!(a.dist(&b.0) > 2.0 * r);
            }
        }
    }

    #[test]
    fn repeated_sums_are_identical(pi in plane_measure(), r in 0.01..0.5f64, q in -2.0..2.0f64) {
        let region = Region::ball(Point::new(vec![0.5, 0.5]), 2.0).unwrap();
        let a = greedy_cover(&pi, &region, r, q, CandidateOrder::MassAware).unwrap();
        let b = greedy_cover(&pi, &region, r, q, CandidateOrder::MassAware).unwrap();
        prop_assert_eq!(a, b);
        let s = packing_sum_with(&pi, &region, r, q, 2.0, CandidateOrder::MassAware).unwrap();
        prop_assert_eq!(s.to_bits(), packing_sum_with(&pi, &region, r, q, 2.0, CandidateOrder::MassAware).unwrap().to_bits());
    }

    #[test]
    fn power_law_slopes_add(a in 0.1..5.0f64, s in -3.0..3.0f64, b in 0.1..5.0f64, t in -3.0..3.0f64, base in 2u32..5) {
        let ladder = Ladder::new(base, 1, 7).unwrap();
        let first = ScaleSeries::sample(ladder, |r| Ok(a * r.powf(-s))).unwrap();
        let second = ScaleSeries::sample(ladder, |r| Ok(b * r.powf(-t))).unwrap();
        let both = slope_bounds(&first.product(&second).unwrap(), 1).unwrap();
        for v in [both.lower, both.upper, both.ols] {
            prop_assert!((v - (s + t)).abs() <= 1e-9);
        }
    }

    #[test]
    fn slope_brackets_contain_the_fit(values in prop::collection::vec(0.001..1000.0f64, 6)) {
        let est = slope_bounds(&ScaleSeries::new(Ladder::new(3, 2, 7).unwrap(), values).unwrap(), 2).unwrap();
        prop_assert!(est.lower <= est.ols && est.ols <= est.upper);
    }

    #[test]
    fn distance_is_a_bounded_metric(a in measure_on(3.0, 10), b in measure_on(3.0, 10), c in measure_on(3.0, 10)) {
        let d = |x: &DiscreteMeasure, y: &DiscreteMeasure| fortet_mourier(x, y).unwrap();
        let (ab, witness) = d(&a, &b);
        prop_assert!(witness.violation() <= LP_TOL);
        prop_assert!((0.0..=2.0).contains(&ab));
        prop_assert!((ab - d(&b, &a).0).abs() <= 1e-8);
        prop_assert!(d(&a, &c).0 <= ab + d(&b, &c).0 + 1e-8);
        prop_assert!(d(&a, &a).0 <= 1e-8);
    }

    #[test]
    fn distance_ignores_common_shifts(a in measure_on(1.0, 8), b in measure_on(1.0, 8), by in -5.0..5.0f64) {
        let d = fortet_mourier(&a, &b).unwrap().0;
        let moved = fortet_mourier(&shifted(&a, by), &shifted(&b, by)).unwrap().0;
        prop_assert!((d - moved).abs() <= 1e-8);
    }

    #[test]
    fn measure_files_round_trip(pi in plane_measure()) {
        prop_assert_eq!(parse_measure(&format_measure(&pi, &[])).unwrap(), pi);
    }

    #[test]
    fn cylinder_weights_multiply(letters in prop::collection::vec(0usize..3, 0..12), p in 0.05..0.45f64) {
        let ifs = IfsModel::on_line(&[0.25, 0.25, 0.25], &[0.0, 0.375, 0.75], &[p, 1.0 - 2.0 * p, p]).unwrap();
        let (pw, rw) = ifs.cylinder_params(&Word(letters.clone())).unwrap();
        let by_hand = letters.iter().rev().fold((1.0, 1.0), |(p, r), &l| (p * ifs.probs()[l], r * ifs.ratios()[l]));
        prop_assert!((pw - by_hand.0).abs() <= 1e-12 && (rw - by_hand.1).abs() <= 1e-12);
        let x = Point::on_line(0.3);
        let (head, tail) = letters.split_at(letters.len() / 2);
        let whole = ifs.apply_word(&Word(letters.clone()), &x).unwrap();
        let nested = ifs.apply_word(&Word(head.to_vec()), &ifs.apply_word(&Word(tail.to_vec()), &x).unwrap()).unwrap();
        prop_assert!(whole.dist(&nested.0) <= 1e-12);
    }
}
