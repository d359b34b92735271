use proptest::prelude::*;
use rand::Rng;
use rustfft::num_complex::Complex64;
use seld::features::*;
use seld::nn::seeded_rng;

const SR: f64 = 24_000.0;

fn noise(len: usize, seed: u64, amp: f64) -> Vec<f64> {
    let mut rng = seeded_rng(seed);
    (0..len).map(|_| amp * rng.gen_range(-1.0..1.0)).collect()
}

fn five_seconds() -> usize {
    (5.02 * SR).round() as usize
}

#[test]
fn mid_side_round_trip_is_exact() {
    let clip = StereoClip::new(noise(1000, 1, 1.0), noise(1000, 2, 1.0), 24_000).unwrap();
    let foa = stereo_to_pseudo_foa(&clip);
    for i in 0..clip.len() {
        // exact in binary floating point: halving and re-adding
        assert_eq!(foa.w[i] + foa.y[i], clip.left[i]);
        assert_eq!(foa.w[i] - foa.y[i], clip.right[i]);
    }
    let swapped = stereo_to_pseudo_foa(&clip.swapped());
    assert_eq!(swapped.w, foa.w);
    assert!(swapped.y.iter().zip(&foa.y).all(|(a, b)| *a == -b));
}

#[test]
fn bin_centred_sinusoid_concentrates_energy() {
    let cfg = StftConfig::default();
    let k = 40;
    let f = cfg.bin_hz(k);
    let x: Vec<f64> = (0..4800).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / SR).cos()).collect();
    let spec = stft(&x, &cfg).unwrap();
    for t in 0..spec.frames {
        let row = spec.frame(t);
        let total: f64 = row.iter().map(|c| c.norm_sqr()).sum();
        // a periodic Hann spreads a centred tone over its main lobe, k-1..=k+1
        let peak: f64 = row[k - 1..=k + 1].iter().map(|c| c.norm_sqr()).sum();
        assert!(peak / total > 0.9, "frame {t}: {}", peak / total);
        let argmax = (0..row.len()).max_by(|&a, &b| row[a].norm().total_cmp(&row[b].norm())).unwrap();
        assert_eq!(argmax, k);
    }
}

#[test]
fn parseval_per_frame() {
    let cfg = StftConfig::default();
    let x = noise(5000, 3, 1.0);
    let spec = stft(&x, &cfg).unwrap();
    let w = hann_periodic(cfg.win_length);
    let n = cfg.fft_size;
    for t in 0..spec.frames {
        let time: f64 = (0..cfg.win_length).map(|i| (x[t * cfg.hop_length + i] * w[i]).powi(2)).sum();
        let row = spec.frame(t);
        // one-sided spectrum: interior bins stand for their mirror too
        let freq: f64 = row
            .iter()
            .enumerate()
            .map(|(k, c)| if k == 0 || k == n / 2 { c.norm_sqr() } else { 2.0 * c.norm_sqr() })
            .sum::<f64>()
            / n as f64;
        assert!((time - freq).abs() / time < 1e-10);
    }
}

fn random_spec(frames: usize, bins: usize, seed: u64, amp: f64) -> Spectrogram {
    let mut rng = seeded_rng(seed);
    let data = (0..frames * bins)
        .map(|_| Complex64::new(amp * rng.gen_range(-1.0..1.0), amp * rng.gen_range(-1.0..1.0)))
        .collect();
    Spectrogram { frames, bins, data }
}

#[test]
fn log_mel_floor_scaling_and_naive_oracle() {
    let fb = MelFilterbank::new(&MelConfig::default(), &StftConfig::default()).unwrap();
    let zero = Spectrogram {
        frames: 3,
        bins: 513,
        data: vec![Complex64::new(0.0, 0.0); 3 * 513],
    };
    assert!(log_mel(&zero, &fb).unwrap().iter().all(|&v| v == LOG_EPS.log10()));

    // with power far above the floor, doubling amplitude adds log10(4)
    let spec = random_spec(4, 513, 4, 1e3);
    let base = log_mel(&spec, &fb).unwrap();
    let doubled = Spectrogram {
        data: spec.data.iter().map(|c| c * 2.0).collect(),
        ..spec.clone()
    };
    let up = log_mel(&doubled, &fb).unwrap();
    for (a, b) in base.iter().zip(&up) {
        assert!((b - a - 4f64.log10()).abs() < 1e-12);
    }

    let spec = random_spec(5, 513, 5, 1.0);
    let fast = log_mel(&spec, &fb).unwrap();
    for t in 0..5 {
        for m in 0..64 {
            let mut acc = 0.0;
            for k in 0..513 {
                acc += fb.weights[m * 513 + k] * spec.data[t * 513 + k].norm_sqr();
            }
            assert!(((acc + LOG_EPS).log10() - fast[t * 64 + m]).abs() < 1e-12);
        }
    }
}

#[test]
fn intensity_structural_zeros() {
    let fb = MelFilterbank::new(&MelConfig::default(), &StftConfig::default()).unwrap();
    let w = random_spec(3, 513, 6, 1.0);
    let y = random_spec(3, 513, 7, 1.0);
    let zero = Spectrogram {
        data: vec![Complex64::new(0.0, 0.0); 3 * 513],
        ..w.clone()
    };
    let iv = intensity_vectors(&w, &zero, &y, &zero, &fb).unwrap();
    let plane = 3 * 64;
    assert!(iv[..plane].iter().all(|&v| v == 0.0));
    assert!(iv[2 * plane..].iter().all(|&v| v == 0.0));
    assert!(iv[plane..2 * plane].iter().any(|&v| v != 0.0));
    let mono = intensity_vectors(&w, &zero, &zero, &zero, &fb).unwrap();
    assert!(mono.iter().all(|&v| v == 0.0));
}

#[test]
fn louder_left_gives_positive_side_intensity() {
    let ex = Extractor::new(FeatureConfig::default()).unwrap();
    let r = noise(24_000, 8, 0.3);
    let l: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
    let feats = ex.clip_features(&StereoClip::new(l, r, 24_000).unwrap()).unwrap();
    let frames = feats.shape()[1];
    let y_int = &feats.data()[5 * frames * 64..6 * frames * 64];
    // W = 1.5 R and Y = 0.5 R, so per bin I_y = 0.75|R|^2 / (2.25|R|^2 + |R|^2/12) = 9/28
    for &v in y_int {
        assert!(v > 0.0);
        // only the 1e-10 denominator floor separates bins from the closed form
        assert!((v - 9.0 / 28.0).abs() < 1e-7, "{v}");
    }
}

#[test]
fn five_second_clip_gives_one_full_segment() {
    let ex = Extractor::new(FeatureConfig::default()).unwrap();
    let clip = StereoClip::new(noise(five_seconds(), 9, 0.5), noise(five_seconds(), 10, 0.5), 24_000).unwrap();
    let segs = ex.extract(&clip).unwrap();
    assert_eq!(segs.len(), 1);
    assert_eq!(segs[0].tensor.shape(), &[7, 250, 64]);
    assert_eq!(segs[0].valid_frames, 250);
    let floor = LOG_EPS.log10();
    assert!(segs[0].channel(2).iter().chain(segs[0].channel(3)).all(|&v| v == floor));
    assert!(segs[0].channel(4).iter().chain(segs[0].channel(6)).all(|&v| v == 0.0));
    assert!(segs[0].channel(5).iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn swapped_clip_keeps_w_and_negates_side_intensity() {
    let ex = Extractor::new(FeatureConfig::default()).unwrap();
    let clip = StereoClip::new(noise(12_000, 11, 0.4), noise(12_000, 12, 0.7), 24_000).unwrap();
    let a = &ex.extract(&clip).unwrap()[0];
    let b = &ex.extract(&clip.swapped()).unwrap()[0];
    for c in [0, 1, 2, 3] {
        for (x, y) in a.channel(c).iter().zip(b.channel(c)) {
            assert!((x - y).abs() < 1e-10);
        }
    }
    for (x, y) in a.channel(5).iter().zip(b.channel(5)) {
        assert!((x + y).abs() < 1e-10);
    }
}

#[test]
fn extraction_is_deterministic_and_file_round_trips() {
    let ex = Extractor::new(FeatureConfig::default()).unwrap();
    let clip = StereoClip::new(noise(9_000, 13, 0.4), noise(9_000, 14, 0.4), 24_000).unwrap();
    let a = ex.extract(&clip).unwrap();
    let b = ex.extract(&clip).unwrap();
    assert_eq!(a, b);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("seg.feat");
    write_features(&p, &a[0]).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    assert_eq!(read_features(&p).unwrap(), a[0]);
    write_features(&p, &b[0]).unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), bytes);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn intensity_stays_in_unit_range(seed in 0u64..10_000, ratio in -3.0f64..3.0) {
        let ex = Extractor::new(FeatureConfig::default()).unwrap();
        let l = noise(3_000, seed, 1.0);
        let r: Vec<f64> = l.iter().zip(noise(3_000, seed + 1, 1.0)).map(|(a, b)| ratio * a + b).collect();
        let f = ex.clip_features(&StereoClip::new(l, r, 24_000).unwrap()).unwrap();
        let plane = f.shape()[1] * 64;
        prop_assert!(f.data()[4 * plane..].iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
