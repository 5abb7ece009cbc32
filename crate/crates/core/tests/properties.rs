mod common;

use otclust::adaptation::{adapt, classify, evaluate, generate_synthetic, LabeledMeasure, SyntheticConfig};
use otclust::clustering::{vwc, ClusterConfig, Init};
use otclust::io::{points_csv, read_points_from};
use otclust::measure::{blend_measures, total_cost, CentroidSet, Domain, EmpiricalMeasure};
use otclust::power_diagram::{assign, build_power_diagram_2d, cell_masses, cell_masses_continuous, TransportPlan};
use otclust::vot::{energy, solve_empirical, solve_vot, Mode, SolverConfig, Source};
use proptest::prelude::*;

fn coords(n: std::ops::Range<usize>, dim: usize) -> impl Strategy<Value = Vec<f64>> {
    n.prop_flat_map(move |n| prop::collection::vec(0.0f64..1.0, n * dim))
}

/// Sites in the unit square with a minimum separation, plus weights near the
/// Voronoi weights.
fn sites_and_weights(k: std::ops::Range<usize>) -> impl Strategy<Value = (CentroidSet, Vec<f64>)> {
    k.prop_flat_map(|k| (prop::collection::vec(0.02f64..0.98, 2 * k), prop::collection::vec(-0.05f64..0.05, k)))
        .prop_filter_map("sites too close", |(pos, dh)| {
            let k = pos.len() / 2;
            for i in 0..k {
                for j in 0..i {
                    if common::sq(&pos[2 * i..2 * i + 2], &pos[2 * j..2 * j + 2]) < 1e-4 {
                        return None;
                    }
                }
            }
            let y = CentroidSet::uniform(2, pos).ok()?;
            let h = y.voronoi_weights().iter().zip(&dh).map(|(a, b)| a + b).collect();
            Some((y, h))
        })
}

fn score(x: &[f64], y: &CentroidSet, h: &[f64], j: usize) -> f64 {
    x.iter().zip(y.position(j)).map(|(a, b)| a * b).sum::<f64>() + h[j]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn normalize_is_idempotent(w in prop::collection::vec(0.01f64..100.0, 1..20)) {
        let n = w.len();
        let m = EmpiricalMeasure::new(1, (0..n).map(|i| i as f64).collect(), w).unwrap();
        let once = m.normalize().unwrap();
        prop_assert_eq!(once.normalize().unwrap(), once);
    }

    #[test]
    fn blend_stays_a_probability_vector(raw in prop::collection::vec((0.01f64..1.0, 0.01f64..1.0), 1..10), lambda in 0.0f64..=1.0) {
        let (sa, sc): (f64, f64) = raw.iter().fold((0.0, 0.0), |(a, c), (x, y)| (a + x, c + y));
        let a: Vec<f64> = raw.iter().map(|p| p.0 / sa).collect();
        let c: Vec<f64> = raw.iter().map(|p| p.1 / sc).collect();
        let out = blend_measures(&a, &c, lambda).unwrap();
        prop_assert!(out.iter().all(|&v| v >= 0.0));
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn total_cost_ignores_rigid_translation(x in coords(1..30, 2), offset in prop::array::uniform2(-50.0f64..50.0)) {
        let m = EmpiricalMeasure::uniform(2, x).unwrap();
        let y = CentroidSet::uniform(2, vec![0.2, 0.3, 0.8, 0.6]).unwrap();
        let plan = assign(&m, &y, &y.voronoi_weights()).unwrap();
        let a = total_cost(&m, &y, &plan, 2.0).unwrap();
        let b = total_cost(&m.translated(&offset), &y.translated(&offset), &plan, 2.0).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0) * (1.0 + offset[0].abs() + offset[1].abs()));
    }

    #[test]
    fn diagram_partitions_the_square((y, h) in sites_and_weights(1..7), probes in coords(20..21, 2)) {
        let d = build_power_diagram_2d(&y, &h, &Domain::unit_square()).unwrap();
        let total: f64 = d.areas().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        for p in probes.chunks(2) {
            let mut scores: Vec<(f64, usize)> = (0..y.len()).map(|j| (score(p, &y, &h, j), j)).collect();
            scores.sort_by(|a, b| b.0.total_cmp(&a.0));
            if scores.len() > 1 && scores[0].0 - scores[1].0 < 1e-9 {
                continue;
            }
            prop_assert_eq!(d.locate([p[0], p[1]]), Some(scores[0].1));
        }
    }

    #[test]
    fn constant_shift_of_weights_changes_nothing((y, h) in sites_and_weights(2..7), x in coords(1..40, 2), c in -5.0f64..5.0) {
        let m = EmpiricalMeasure::uniform(2, x).unwrap();
        let shifted: Vec<f64> = h.iter().map(|v| v + c).collect();
        prop_assert_eq!(assign(&m, &y, &h).unwrap(), assign(&m, &y, &shifted).unwrap());
        let (a, b) = (
            build_power_diagram_2d(&y, &h, &Domain::unit_square()).unwrap(),
            build_power_diagram_2d(&y, &shifted, &Domain::unit_square()).unwrap(),
        );
        for (ca, cb) in a.cells.iter().zip(&b.cells) {
            prop_assert_eq!(ca.polygon.len(), cb.polygon.len());
            for (p, q) in ca.polygon.iter().zip(&cb.polygon) {
                prop_assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn facets_are_reciprocal((y, h) in sites_and_weights(2..8)) {
        let d = build_power_diagram_2d(&y, &h, &Domain::unit_square()).unwrap();
        for cell in &d.cells {
            for f in &cell.facets {
                let back = d.cells[f.neighbor].facets.iter().find(|g| g.neighbor == cell.index);
                match back {
                    Some(g) => prop_assert!((f.length - g.length).abs() < 1e-12),
                    None => prop_assert!(f.length < 1e-12),
                }
            }
        }
    }

    #[test]
    fn raising_a_weight_never_shrinks_its_cell((y, h) in sites_and_weights(2..6), x in coords(10..60, 2), j in 0usize..6, dh in 0.0f64..0.5) {
        let j = j % y.len();
        let mut up = h.clone();
        up[j] += dh;
        let m = EmpiricalMeasure::uniform(2, x).unwrap();
        let before = cell_masses(&assign(&m, &y, &h).unwrap(), &m)[j];
        let after = cell_masses(&assign(&m, &y, &up).unwrap(), &m)[j];
        prop_assert!(after >= before);
        let sq = Domain::unit_square();
        let a = cell_masses_continuous(&build_power_diagram_2d(&y, &h, &sq).unwrap()).unwrap()[j];
        let b = cell_masses_continuous(&build_power_diagram_2d(&y, &up, &sq).unwrap()).unwrap()[j];
        prop_assert!(b >= a - 1e-12);
    }

    #[test]
    fn energy_is_convex((y, ha) in sites_and_weights(2..6), hb in prop::collection::vec(-0.3f64..0.3, 6), x in coords(5..40, 2)) {
        let hb: Vec<f64> = ha.iter().zip(&hb).map(|(a, b)| a + b).collect();
        let mid: Vec<f64> = ha.iter().zip(&hb).map(|(a, b)| 0.5 * (a + b)).collect();
        let m = EmpiricalMeasure::uniform(2, x).unwrap();
        let sq = Domain::unit_square();
        for src in [Source::Empirical(&m), Source::Uniform(&sq)] {
            let e = |h: &[f64]| energy(h, src, &y).unwrap();
            prop_assert!(e(&mid) <= 0.5 * e(&ha) + 0.5 * e(&hb) + 1e-10);
        }
    }

    #[test]
    fn points_round_trip_through_csv(x in coords(1..30, 3), w in prop::collection::vec(1e-6f64..1e6, 30)) {
        let n = x.len() / 3;
        let m = EmpiricalMeasure::new(3, x, w[..n].to_vec()).unwrap().normalize().unwrap();
        let text = points_csv(&m, None).unwrap();
        let t = read_points_from(text.as_bytes(), None, "mem").unwrap();
        prop_assert_eq!(t.coords.as_slice(), m.coords());
        prop_assert_eq!(t.weights.as_deref(), Some(m.weights()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn solver_descends_and_is_deterministic(x in coords(20..80, 2), sites in coords(2..6, 2), newton in any::<bool>()) {
        let m = EmpiricalMeasure::uniform(2, x).unwrap();
        let Ok(y) = CentroidSet::uniform(2, sites) else { return Ok(()) };
        let mode = if newton { Mode::Newton } else { Mode::GradientDescent };
        let config = SolverConfig::default();
        let a = solve_empirical(&m, &y, mode, &config, None).unwrap();
        let b = solve_empirical(&m, &y, mode, &config, None).unwrap();
        prop_assert!(a.trace.windows(2).all(|p| p[1].energy <= p[0].energy + 1e-12));
        prop_assert!(a.max_deviation(&y) <= config.epsilon.max(1.01 * m.max_weight()));
        prop_assert_eq!(a.h, b.h);
        prop_assert_eq!(a.plan, b.plan);
    }

    #[test]
    fn continuous_newton_balances_cells((y, _) in sites_and_weights(2..7), raw in prop::collection::vec(0.2f64..1.0, 7)) {
        let k = y.len();
        let total: f64 = raw[..k].iter().sum();
        let y = CentroidSet::new(2, y.positions().to_vec(), raw[..k].iter().map(|v| v / total).collect()).unwrap();
        let sol = solve_vot(Source::Uniform(&Domain::unit_square()), &y, &SolverConfig::default()).unwrap();
        prop_assert!(sol.max_deviation(&y) < 1e-6);
        prop_assert!(sol.trace.windows(2).all(|p| p[1].energy <= p[0].energy + 1e-12));
    }

    #[test]
    fn clustering_is_monotone_and_repeatable(seed in 0u64..1000) {
        let mut g = common::rng(seed);
        let m = common::blobs(&mut g, 120, 2, 3, 0.1);
        let config = ClusterConfig::default();
        let a = vwc(&m, Init::Seeded { k: 4, seed }, &config).unwrap();
        let b = vwc(&m, Init::Seeded { k: 4, seed }, &config).unwrap();
        prop_assert!(common::nonincreasing(&a.objective_trace, 1e-12));
        prop_assert_eq!(&a.centroids, &b.centroids);
        prop_assert_eq!(&a.plan, &b.plan);
        prop_assert_eq!(&a.h, &b.h);
    }

    #[test]
    fn report_symmetries(pairs in prop::collection::vec((0usize..2, 0usize..2), 1..100), shuffle in any::<u64>()) {
        let (pred, truth): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let r = evaluate(&pred, &truth).unwrap();
        let swap = |v: &[usize]| v.iter().map(|l| 1 - l).collect::<Vec<_>>();
        let s = evaluate(&swap(&pred), &swap(&truth)).unwrap();
        prop_assert_eq!(r.accuracy, s.accuracy);
        prop_assert_eq!(r.sensitivity, s.specificity);
        prop_assert_eq!(r.specificity, s.sensitivity);
        let mut order: Vec<usize> = (0..pred.len()).collect();
        let mut state = shuffle | 1;
        for i in (1..order.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            order.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let p: Vec<usize> = order.iter().map(|&i| pred[i]).collect();
        let t: Vec<usize> = order.iter().map(|&i| truth[i]).collect();
        prop_assert_eq!(evaluate(&p, &t).unwrap(), r);
    }
}

fn small_experiment(seed: u64) -> (LabeledMeasure, LabeledMeasure) {
    let config = SyntheticConfig { seed, source_per_class: 8, target_per_class: 120, ..Default::default() };
    generate_synthetic(&config).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn adaptation_ignores_target_order_and_rigid_shifts(seed in 0u64..100, offset in prop::array::uniform2(-20.0f64..20.0)) {
        let (source, target) = small_experiment(seed);
        let config = ClusterConfig::default();
        let report = |s: &LabeledMeasure, t: &LabeledMeasure| {
            let model = adapt(s, &t.measure, &config).unwrap();
            evaluate(&classify(&model, &t.measure).unwrap(), &t.labels).unwrap()
        };
        let base = report(&source, &target);

        let n = target.measure.len();
        let order: Vec<usize> = (0..n).rev().collect();
        let coords: Vec<f64> = order.iter().flat_map(|&i| target.measure.point(i).to_vec()).collect();
        let reversed = LabeledMeasure::new(
            EmpiricalMeasure::uniform(2, coords).unwrap(),
            order.iter().map(|&i| target.labels[i]).collect(),
        ).unwrap();
        let r = report(&source, &reversed);
        prop_assert_eq!((r.accuracy, r.sensitivity, r.specificity), (base.accuracy, base.sensitivity, base.specificity));

        let moved = |l: &LabeledMeasure| LabeledMeasure::new(l.measure.translated(&offset), l.labels.clone()).unwrap();
        let r = report(&moved(&source), &moved(&target));
        prop_assert!((r.accuracy - base.accuracy).abs() <= 1e-9);
        prop_assert!((r.sensitivity - base.sensitivity).abs() <= 1e-9);
        prop_assert!((r.specificity - base.specificity).abs() <= 1e-9);
    }
}

#[test]
fn plan_validation_rejects_bad_indices() {
    assert!(TransportPlan::new(vec![0, 2], 2).is_err());
}
