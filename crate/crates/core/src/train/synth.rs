use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::LabeledClip;
use crate::error::{Result, SeldError};
use crate::features::{StereoClip, StftConfig};
use crate::labels::EventLabel;
use crate::nn::seeded_rng;

/// Label resolution in seconds.
pub const LABEL_HOP_SECS: f64 = 0.1;

/// Layout of generated scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSceneConfig {
    pub n_clips: usize,
    pub events_per_clip: usize,
    pub classes: usize,
    /// Clip length in label frames.
    pub label_frames: usize,
    pub min_event_frames: usize,
    pub max_event_frames: usize,
    /// Azimuth range in degrees, within [-90, 90].
    pub azimuth_range: [f64; 2],
    /// Distance range in metres.
    pub distance_range: [f64; 2],
    /// Peak amplitude of a source at 1 m before panning.
    pub source_amplitude: f64,
    /// Peak amplitude of independent uniform noise on each channel.
    pub noise_level: f64,
}

impl Default for SyntheticSceneConfig {
    fn default() -> Self {
        Self {
            n_clips: 8,
            events_per_clip: 2,
            classes: 13,
            label_frames: 50,
            min_event_frames: 10,
            max_event_frames: 30,
            azimuth_range: [-90.0, 90.0],
            distance_range: [0.5, 5.0],
            source_amplitude: 0.2,
            noise_level: 1e-3,
        }
    }
}

impl SyntheticSceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SeldError::Config(format!("synth: {m}")));
        let [a0, a1] = self.azimuth_range;
        let [d0, d1] = self.distance_range;
        if !(-90.0..=90.0).contains(&a0) || !(-90.0..=90.0).contains(&a1) || a0 > a1 {
            return bad("azimuth_range must be an ordered pair within [-90, 90]");
        }
        if !(d0 > 0.0 && d0 <= d1) {
            return bad("distance_range must be an ordered pair of positive distances");
        }
        if self.classes == 0 || self.label_frames == 0 {
            return bad("classes and label_frames must be positive");
        }
        if self.min_event_frames == 0 || self.min_event_frames > self.max_event_frames {
            return bad("event length range must be ordered and positive");
        }
        if self.max_event_frames > self.label_frames {
            return bad("events must fit in a clip");
        }
        if !(self.source_amplitude > 0.0) || !(self.noise_level >= 0.0) {
            return bad("amplitudes must be positive");
        }
        Ok(())
    }

    /// Audio samples per clip: the label span plus one analysis tail so the
    /// last label frame is fully covered by STFT frames.
    pub fn clip_samples(&self, stft: &StftConfig) -> usize {
        self.label_frames * label_hop_samples(stft.sample_rate) + stft.win_length - stft.hop_length
    }
}

pub fn label_hop_samples(sample_rate: u32) -> usize {
    (sample_rate as f64 * LABEL_HOP_SECS).round() as usize
}

/// Channel gains of a source at `azimuth_deg` and `distance_m`:
/// `L = (1 + sin az) / d`, `R = (1 - sin az) / d`.
pub fn pan_gains(azimuth_deg: f64, distance_m: f64) -> (f64, f64) {
    let s = azimuth_deg.to_radians().sin();
    ((1.0 + s) / distance_m, (1.0 - s) / distance_m)
}

/// Fundamental frequency of class `c`: quarter-octave steps from 220 Hz.
pub fn class_frequency(class: usize) -> f64 {
    220.0 * 2f64.powf(class as f64 / 4.0)
}

/// Unit-peak harmonic tone of class `class` with short raised-cosine edges.
pub fn class_waveform(class: usize, len: usize, sample_rate: u32) -> Vec<f64> {
    let f0 = class_frequency(class);
    let sr = sample_rate as f64;
    let fade = ((0.01 * sr) as usize).min(len / 2).max(1);
    let norm = 1.0 / 1.75;
    (0..len)
        .map(|i| {
            let t = i as f64 / sr;
            let w = 2.0 * PI * f0 * t;
            let tone = w.sin() + 0.5 * (2.0 * w).sin() + 0.25 * (3.0 * w).sin();
            let edge = i.min(len - 1 - i);
            let env = if edge < fade { 0.5 - 0.5 * (PI * edge as f64 / fade as f64).cos() } else { 1.0 };
            norm * tone * env
        })
        .collect()
}

/// One scene: events with static positions, distinct classes when the
/// class count allows, mixed onto a stereo pair.
pub fn synth_clip(cfg: &SyntheticSceneConfig, stft: &StftConfig, rng: &mut impl Rng, name: String) -> Result<LabeledClip> {
    let hop = label_hop_samples(stft.sample_rate);
    let n = cfg.clip_samples(stft);
    let mut left: Vec<f64> = (0..n).map(|_| cfg.noise_level * rng.gen_range(-1.0..=1.0)).collect();
    let mut right: Vec<f64> = (0..n).map(|_| cfg.noise_level * rng.gen_range(-1.0..=1.0)).collect();
    let mut classes: Vec<usize> = (0..cfg.classes).collect();
    classes.shuffle(rng);
    let mut labels = Vec::new();
    for e in 0..cfg.events_per_clip {
        let class = classes[e % cfg.classes];
        let dur = rng.gen_range(cfg.min_event_frames..=cfg.max_event_frames);
        let onset = rng.gen_range(0..=cfg.label_frames - dur);
        let az = rng.gen_range(cfg.azimuth_range[0]..=cfg.azimuth_range[1]);
        let dist = rng.gen_range(cfg.distance_range[0]..=cfg.distance_range[1]);
        let (gl, gr) = pan_gains(az, dist);
        let start = onset * hop;
        let s = class_waveform(class, dur * hop, stft.sample_rate);
        for (i, v) in s.iter().enumerate() {
            left[start + i] += cfg.source_amplitude * gl * v;
            right[start + i] += cfg.source_amplitude * gr * v;
        }
        labels.extend((onset..onset + dur).map(|frame| EventLabel {
            frame,
            class_id: class,
            source_id: e as u32,
            azimuth_deg: az,
            distance_m: dist,
        }));
    }
    labels.sort_by_key(|l| (l.frame, l.class_id, l.source_id));
    Ok(LabeledClip {
        name,
        audio: StereoClip::new(left, right, stft.sample_rate)?,
        labels,
    })
}

/// `cfg.n_clips` scenes named `clip_0000`, `clip_0001`, ...
pub fn synth_dataset(cfg: &SyntheticSceneConfig, stft: &StftConfig, seed: u64) -> Result<Vec<LabeledClip>> {
    cfg.validate()?;
    let mut rng = seeded_rng(seed);
    (0..cfg.n_clips)
        .map(|i| synth_clip(cfg, stft, &mut rng, format!("clip_{i:04}")))
        .collect()
}
