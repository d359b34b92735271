use proptest::prelude::*;
use rand::Rng;
use seld::gradcheck::check_gradients;
use seld::labels::*;
use seld::nn::seeded_rng;
use seld::tensor::Tensor;

/// Reflect the direction vector's front component, then recompute the angle.
fn fold_oracle(phi_deg: f64) -> f64 {
    let r = phi_deg.to_radians();
    r.sin().atan2(r.cos().abs()).to_degrees()
}

#[test]
fn fold_matches_reflection_oracle() {
    for phi in -180..=180 {
        let phi = phi as f64;
        assert!((fold_azimuth(phi) - fold_oracle(phi)).abs() < 1e-12, "{phi}");
    }
}

proptest! {
    #[test]
    fn fold_idempotent_and_odd(phi in -180.0f64..180.0) {
        let f = fold_azimuth(phi);
        prop_assert!((-90.0..=90.0).contains(&f));
        prop_assert_eq!(fold_azimuth(f), f);
        prop_assert_eq!(fold_azimuth(-phi), -f);
    }
}

/// Random scene where concurrent same-class sources are more than the merge
/// threshold apart, since closer ones decode as one event by design.
fn random_scene(seed: u64, frames: usize, classes: usize) -> Vec<EventLabel> {
    let mut rng = seeded_rng(seed);
    let mut out = Vec::new();
    for frame in 0..frames {
        for class in 0..classes {
            let n = rng.gen_range(0..=3usize);
            let mut azimuths: Vec<f64> = Vec::new();
            while azimuths.len() < n {
                let az = rng.gen_range(-90.0..=90.0);
                if azimuths.iter().all(|a: &f64| (a - az).abs() > 20.0) {
                    azimuths.push(az);
                }
            }
            for (s, az) in azimuths.into_iter().enumerate() {
                out.push(EventLabel {
                    frame,
                    class_id: class,
                    source_id: s as u32,
                    azimuth_deg: az,
                    distance_m: rng.gen_range(0.0..8.0),
                });
            }
        }
    }
    out
}

fn sort_key(l: &EventLabel) -> (usize, usize, i64) {
    (l.frame, l.class_id, (l.azimuth_deg * 1e6) as i64)
}

#[test]
fn encode_decode_round_trip() {
    let cfg = AccdoaConfig::default();
    for seed in 0..20 {
        let mut labels = random_scene(seed, 6, cfg.classes);
        let target = encode_multi_accdoa(&labels, 6, &cfg).unwrap();
        let mut decoded = decode_predictions(&target.values, &cfg, &DecodeConfig::default()).unwrap();
        assert_eq!(decoded.len(), labels.len());
        labels.sort_by_key(sort_key);
        decoded.sort_by_key(sort_key);
        for (a, b) in labels.iter().zip(&decoded) {
            assert_eq!((a.frame, a.class_id), (b.frame, b.class_id));
            assert!((a.azimuth_deg - b.azimuth_deg).abs() < 1e-9);
            assert!((a.distance_m - b.distance_m).abs() < 1e-9);
        }
    }
}

fn batch_target(seed: u64, batch: usize, frames: usize) -> Tensor {
    let cfg = AccdoaConfig::default();
    let mut data = Vec::new();
    for b in 0..batch {
        let labels = random_scene(seed * 100 + b as u64, frames, cfg.classes);
        data.extend(encode_multi_accdoa(&labels, frames, &cfg).unwrap().values.into_data());
    }
    Tensor::new([batch, frames, cfg.tracks, cfg.classes, SLOT_DIM], data).unwrap()
}

/// Permutes the track axis of a `[B, T, tracks, classes, 3]` tensor per cell.
fn permute_tracks(t: &Tensor, seed: u64) -> Tensor {
    let s = t.shape().to_vec();
    let (outer, nt, nc) = (s[0] * s[1], s[2], s[3]);
    let perms = permutations(nt);
    let mut rng = seeded_rng(seed);
    let mut out = t.data().to_vec();
    for o in 0..outer {
        for c in 0..nc {
            let p = &perms[rng.gen_range(0..perms.len())];
            for j in 0..nt {
                for k in 0..SLOT_DIM {
                    out[((o * nt + p[j]) * nc + c) * SLOT_DIM + k] = t.data()[((o * nt + j) * nc + c) * SLOT_DIM + k];
                }
            }
        }
    }
    Tensor::new(s, out).unwrap()
}

#[test]
fn loss_zero_at_target_and_permutation_invariant() {
    let target = batch_target(1, 2, 5);
    assert_eq!(pit_loss_value(&target, &target).unwrap(), 0.0);
    assert_eq!(pit_loss_value(&permute_tracks(&target, 2), &target).unwrap(), 0.0);

    let mut rng = seeded_rng(3);
    let pred = Tensor::from_fn(target.shape().to_vec(), |_| rng.gen_range(-1.0..1.0));
    let base = pit_loss_value(&pred, &target).unwrap();
    assert!(base > 0.0);
    for seed in 0..5 {
        assert_eq!(pit_loss_value(&permute_tracks(&pred, seed), &target).unwrap(), base);
    }
}

#[test]
fn loss_matches_brute_force_small_case() {
    let mut rng = seeded_rng(4);
    let shape = [1, 1, 3, 2, 3];
    let pred = Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0));
    let target = Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0));
    let mut total = 0.0;
    for c in 0..2 {
        let mut best = f64::INFINITY;
        for p in permutations(3) {
            let mut e = 0.0;
            for j in 0..3 {
                for k in 0..3 {
                    let d = pred.at(&[0, 0, p[j], c, k]) - target.at(&[0, 0, j, c, k]);
                    e += d * d;
                }
            }
            best = best.min(e / 9.0);
        }
        total += best;
    }
    assert!((pit_loss_value(&pred, &target).unwrap() - total / 2.0).abs() < 1e-15);
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let target = batch_target(5, 2, 3);
    let mut rng = seeded_rng(6);
    // predictions far from ties: a perturbed copy of the target
    let pred = Tensor::from_fn(target.shape().to_vec(), |i| target.data()[i] + rng.gen_range(-0.2..0.2));
    let report = check_gradients(&[pred], 1e-6, |tape, v| {
        let t = tape.constant(target.clone());
        permutation_invariant_loss(tape, v[0], t)
    })
    .unwrap();
    assert!(report.passes(1e-4), "{report:?}");
}

#[test]
fn acs_twice_is_identity() {
    use seld::features::StereoClip;
    let clip = StereoClip::new(vec![0.1, 0.2, 0.3], vec![-0.5, 0.0, 0.25], 24_000).unwrap();
    let labels = random_scene(7, 4, 13);
    let (c1, l1) = acs_swap(&clip, &labels);
    assert_eq!(c1.left, clip.right);
    for (a, b) in labels.iter().zip(&l1) {
        assert_eq!(b.azimuth_deg, -a.azimuth_deg);
        assert_eq!((a.frame, a.class_id, a.source_id, a.distance_m), (b.frame, b.class_id, b.source_id, b.distance_m));
    }
    let (c2, l2) = acs_swap(&c1, &l1);
    assert_eq!(c2, clip);
    assert_eq!(l2, labels);
}
