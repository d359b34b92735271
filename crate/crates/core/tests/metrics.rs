use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seld::labels::{mirror_labels, EventLabel};
use seld::metrics::{compute_metrics, hungarian, write_report, MetricsReport};

fn ev(frame: usize, class_id: usize, az: f64, dist: f64) -> EventLabel {
    EventLabel {
        frame,
        class_id,
        source_id: 0,
        azimuth_deg: az,
        distance_m: dist,
    }
}

/// Every injective assignment of the smaller side into the larger side.
fn all_assignments(rows: usize, cols: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(r: usize, rows: usize, cols: usize, used: &mut Vec<bool>, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if r == rows {
            out.push(cur.clone());
            return;
        }
        for c in 0..cols {
            if !used[c] {
                used[c] = true;
                cur.push((r, c));
                rec(r + 1, rows, cols, used, cur, out);
                cur.pop();
                used[c] = false;
            }
        }
    }
    let mut out = Vec::new();
    if rows <= cols {
        rec(0, rows, cols, &mut vec![false; cols], &mut Vec::new(), &mut out);
    } else {
        let mut t = Vec::new();
        rec(0, cols, rows, &mut vec![false; rows], &mut Vec::new(), &mut t);
        out = t.into_iter().map(|a| a.into_iter().map(|(c, r)| (r, c)).collect()).collect();
    }
    out
}

fn brute_min_cost(costs: &[Vec<f64>]) -> f64 {
    let rows = costs.len();
    let cols = costs.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    all_assignments(rows, cols)
        .iter()
        .map(|a| a.iter().map(|&(r, c)| costs[r][c]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// Independent scorer: brute-force matching per (frame, class) cell.
fn oracle_counts(preds: &[EventLabel], refs: &[EventLabel]) -> (usize, usize, usize, f64, usize) {
    let (mut tp, mut fp, mut fn_, mut doa, mut matched) = (0, 0, 0, 0.0, 0);
    let mut keys: Vec<(usize, usize)> = preds.iter().chain(refs).map(|e| (e.frame, e.class_id)).collect();
    keys.sort_unstable();
    keys.dedup();
    for key in keys {
        let p: Vec<&EventLabel> = preds.iter().filter(|e| (e.frame, e.class_id) == key).collect();
        let r: Vec<&EventLabel> = refs.iter().filter(|e| (e.frame, e.class_id) == key).collect();
        let best = if p.is_empty() || r.is_empty() {
            Vec::new()
        } else {
            all_assignments(p.len(), r.len())
                .into_iter()
                .map(|a| {
                    let key = |f: &dyn Fn(usize, usize) -> f64| a.iter().map(|&(i, j)| f(i, j)).sum::<f64>();
                    let abs = key(&|i, j| (p[i].azimuth_deg - r[j].azimuth_deg).abs());
                    let sq = key(&|i, j| (p[i].azimuth_deg - r[j].azimuth_deg).powi(2));
                    let dist = key(&|i, j| (p[i].distance_m - r[j].distance_m).abs());
                    // quantise so rounding noise cannot reorder exact ties
                    let q = |x: f64| (x * 1e6).round() as i64;
                    ((q(abs), q(sq), q(dist)), a)
                })
                .min_by_key(|(k, _)| *k)
                .unwrap()
                .1
        };
        for &(i, j) in &best {
            let e = (p[i].azimuth_deg - r[j].azimuth_deg).abs();
            let rel = (p[i].distance_m - r[j].distance_m).abs() / r[j].distance_m;
            doa += e;
            matched += 1;
            if e <= 20.0 && rel <= 1.0 {
                tp += 1;
            } else {
                fp += 1;
                fn_ += 1;
            }
        }
        fp += p.len() - best.len();
        fn_ += r.len() - best.len();
    }
    (tp, fp, fn_, doa, matched)
}

fn random_events(rng: &mut ChaCha8Rng, frames: usize, classes: usize, max_per_cell: usize) -> Vec<EventLabel> {
    let mut out = Vec::new();
    for f in 0..frames {
        for c in 0..classes {
            for _ in 0..rng.gen_range(0..=max_per_cell) {
                out.push(ev(f, c, rng.gen_range(-90.0..=90.0), rng.gen_range(0.3..6.0)));
            }
        }
    }
    out
}

fn assert_reports_equal(a: &MetricsReport, b: &MetricsReport) {
    assert_eq!(a.counts.tp, b.counts.tp);
    assert_eq!(a.counts.fp, b.counts.fp);
    assert_eq!(a.counts.fn_, b.counts.fn_);
    assert_eq!(a.counts.matched, b.counts.matched);
    for (x, y) in [(a.f20, b.f20), (a.doae_deg, b.doae_deg), (a.rde, b.rde), (a.f20_macro, b.f20_macro)] {
        assert!((x.is_nan() && y.is_nan()) || (x - y).abs() < 1e-9, "{x} vs {y}");
    }
}

#[test]
fn hand_example_ten_and_fourteen_degrees() {
    let preds = vec![ev(0, 3, 10.0, 2.2), ev(0, 5, -14.0, 3.0)];
    let refs = vec![ev(0, 3, 0.0, 2.0), ev(0, 5, 0.0, 4.0)];
    let r = compute_metrics(&[(preds, refs)]);
    assert_eq!((r.counts.tp, r.counts.fp, r.counts.fn_), (2, 0, 0));
    assert!((r.doae_deg - 12.0).abs() < 1e-12);
    assert!((r.rde - 0.175).abs() < 1e-12);
    assert_eq!(r.f20, 1.0);
}

#[test]
fn twenty_five_degree_pair_is_miss() {
    let r = compute_metrics(&[(vec![ev(2, 0, 30.0, 1.0)], vec![ev(2, 0, 5.0, 1.0)])]);
    assert_eq!((r.counts.tp, r.counts.fp, r.counts.fn_), (0, 1, 1));
    assert_eq!(r.f20, 0.0);
}

#[test]
fn crossing_two_by_two_matches_enumeration() {
    let preds = vec![ev(0, 0, 40.0, 1.0), ev(0, 0, -40.0, 1.0)];
    let refs = vec![ev(0, 0, -35.0, 1.0), ev(0, 0, 45.0, 1.0)];
    let r = compute_metrics(&[(preds, refs)]);
    assert_eq!(r.counts.tp, 2);
    assert!((r.doae_deg - 5.0).abs() < 1e-12);
}

#[test]
fn hungarian_matches_brute_force_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..300 {
        let rows = rng.gen_range(1..=5);
        let cols = rng.gen_range(1..=5);
        let costs: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(0.0..180.0)).collect()).collect();
        let pairs = hungarian(&costs);
        assert_eq!(pairs.len(), rows.min(cols));
        let got: f64 = pairs.iter().map(|&(r, c)| costs[r][c]).sum();
        assert!((got - brute_min_cost(&costs)).abs() < 1e-9);
    }
}

#[test]
fn report_matches_brute_force_oracle_on_random_scenes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let refs = random_events(&mut rng, 6, 3, 3);
        let preds = random_events(&mut rng, 6, 3, 3);
        let (tp, fp, fn_, doa, matched) = oracle_counts(&preds, &refs);
        let r = compute_metrics(&[(preds, refs)]);
        assert_eq!((r.counts.tp, r.counts.fp, r.counts.fn_, r.counts.matched), (tp, fp, fn_, matched));
        if matched > 0 {
            assert!((r.doae_deg - doa / matched as f64).abs() < 1e-9);
        }
    }
}

#[test]
fn self_evaluation_is_perfect() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let clips: Vec<_> = (0..10)
        .map(|_| {
            let refs = random_events(&mut rng, 20, 13, 2);
            (refs.clone(), refs)
        })
        .collect();
    let r = compute_metrics(&clips);
    assert_eq!(r.f20, 1.0);
    assert_eq!(r.doae_deg, 0.0);
    assert_eq!(r.rde, 0.0);
}

#[test]
fn report_files_written() {
    let dir = tempfile::tempdir().unwrap();
    let r = compute_metrics(&[(vec![ev(0, 1, 10.0, 2.0)], vec![ev(0, 1, 0.0, 2.0), ev(0, 2, 0.0, 1.0)])]);
    let csv_path = write_report(&r, &dir.path().join("metrics.txt")).unwrap();
    let text = std::fs::read_to_string(dir.path().join("metrics.txt")).unwrap();
    assert!(text.contains("tp=1\n") && text.contains("fn=1\n"));
    let csv = std::fs::read_to_string(csv_path).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("class_id,f20,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prediction_order_does_not_matter(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let refs = random_events(&mut rng, 5, 3, 3);
        let preds = random_events(&mut rng, 5, 3, 3);
        let mut shuffled = preds.clone();
        for i in (1..shuffled.len()).rev() {
            let j = rng.gen_range(0..=i);
            shuffled.swap(i, j);
        }
        let a = compute_metrics(&[(preds, refs.clone())]);
        let b = compute_metrics(&[(shuffled, refs)]);
        assert_reports_equal(&a, &b);
    }

    #[test]
    fn mirroring_both_sides_preserves_report(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let refs = random_events(&mut rng, 5, 3, 3);
        let preds = random_events(&mut rng, 5, 3, 3);
        let a = compute_metrics(&[(preds.clone(), refs.clone())]);
        let b = compute_metrics(&[(mirror_labels(&preds), mirror_labels(&refs))]);
        assert_reports_equal(&a, &b);
    }

    #[test]
    fn f20_bounded_and_monotone(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50) {
        let c = seld::metrics::Counts { tp, fp, fn_, ..Default::default() };
        let more = seld::metrics::Counts { tp: tp + 1, fp, fn_, ..Default::default() };
        prop_assert!((0.0..=1.0).contains(&c.f20()));
        prop_assert!(more.f20() >= c.f20() || (tp + fp + fn_ == 0));
    }
}
