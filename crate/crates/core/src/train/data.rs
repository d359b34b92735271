use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Result, SeldError};
use crate::features::{read_stereo_wav, Extractor, StereoClip, INTENSITY_OFFSET};
use crate::fsio::list_with_extension;
use crate::labels::{encode_multi_accdoa, mirror_labels, read_labels, DistanceUnit, EventLabel};
use crate::model::SeldModelConfig;
use crate::nn::seeded_rng;
use crate::tensor::Tensor;

/// Stereo recording with its frame labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledClip {
    pub name: String,
    pub audio: StereoClip,
    pub labels: Vec<EventLabel>,
}

/// One network input segment and its targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `[7, frames, n_mels]`
    pub features: Tensor,
    /// `[label frames, tracks, classes, 3]`
    pub target: Tensor,
    /// Target of the left/right-swapped segment.
    pub target_swapped: Tensor,
}

impl Sample {
    pub fn features_swapped(&self) -> Tensor {
        swap_channel_features(&self.features)
    }
}

/// A clip cut into segments, ready for training and scoring.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedClip {
    pub name: String,
    pub labels: Vec<EventLabel>,
    /// Label frames covered by real audio.
    pub label_frames: usize,
    /// Label frames per segment.
    pub segment_label_frames: usize,
    pub segments: Vec<Sample>,
}

/// Features of the left/right-swapped signal. Swapping negates the side
/// channel, which leaves every log-mel plane unchanged and negates the
/// lateral intensity plane.
pub fn swap_channel_features(features: &Tensor) -> Tensor {
    let s = features.shape();
    let plane = s[1] * s[2];
    let lateral = INTENSITY_OFFSET + 1;
    let mut out = features.clone();
    out.data_mut()[lateral * plane..(lateral + 1) * plane]
        .iter_mut()
        .for_each(|v| *v = -*v);
    out
}

pub fn prepare_clip(clip: &LabeledClip, extractor: &Extractor, model: &SeldModelConfig) -> Result<PreparedClip> {
    let segments = extractor.extract(&clip.audio)?;
    let ds = model.time_downsample();
    let seg_frames = extractor.cfg.segment_frames;
    let seg_labels = model.out_frames(seg_frames)?;
    let valid: usize = segments.iter().map(|s| s.valid_frames).sum();
    let accdoa = model.accdoa();
    let mirrored = mirror_labels(&clip.labels);
    let mut out = Vec::with_capacity(segments.len());
    for (i, seg) in segments.into_iter().enumerate() {
        let window = |labels: &[EventLabel]| -> Vec<EventLabel> {
            labels
                .iter()
                .filter(|l| l.frame / seg_labels == i)
                .map(|l| EventLabel {
                    frame: l.frame - i * seg_labels,
                    ..*l
                })
                .collect()
        };
        out.push(Sample {
            features: seg.tensor,
            target: encode_multi_accdoa(&window(&clip.labels), seg_labels, &accdoa)?.values,
            target_swapped: encode_multi_accdoa(&window(&mirrored), seg_labels, &accdoa)?.values,
        });
    }
    Ok(PreparedClip {
        name: clip.name.clone(),
        labels: clip.labels.clone(),
        label_frames: valid.div_ceil(ds),
        segment_label_frames: seg_labels,
        segments: out,
    })
}

/// Prepares clips in parallel, preserving order.
pub fn prepare_clips(clips: &[LabeledClip], extractor: &Extractor, model: &SeldModelConfig) -> Result<Vec<PreparedClip>> {
    clips.par_iter().map(|c| prepare_clip(c, extractor, model)).collect()
}

/// Seeded shuffle of `0..n` split into (train, validation), each sorted.
/// At least one clip is held out when `val_fraction > 0` and `n >= 2`.
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded_rng(seed));
    let mut n_val = (n as f64 * val_fraction).round() as usize;
    if val_fraction > 0.0 && n >= 2 {
        n_val = n_val.clamp(1, n - 1);
    }
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// Clips read from `<root>/audio/*.wav` and `<root>/metadata/<stem>.csv`,
/// plus the files that were skipped and why.
#[derive(Debug, Default)]
pub struct DatasetLoad {
    pub clips: Vec<LabeledClip>,
    pub skipped: Vec<(PathBuf, String)>,
}

pub fn load_dataset(root: &Path, unit: DistanceUnit, sample_rate: u32) -> Result<DatasetLoad> {
    let audio_dir = root.join("audio");
    if !audio_dir.is_dir() {
        return Err(SeldError::InvalidArgument(format!("{} has no audio/ directory", root.display())));
    }
    let wavs = list_with_extension(&audio_dir, "wav")?;
    let results: Vec<(PathBuf, Result<LabeledClip>)> = wavs
        .par_iter()
        .map(|wav| {
            let stem = wav.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let meta = root.join("metadata").join(format!("{stem}.csv"));
            let clip = read_stereo_wav(wav, sample_rate).and_then(|audio| {
                Ok(LabeledClip {
                    name: stem,
                    audio,
                    labels: read_labels(&meta, unit)?,
                })
            });
            (wav.clone(), clip)
        })
        .collect();
    let mut out = DatasetLoad::default();
    for (path, r) in results {
        match r {
            Ok(c) => out.clips.push(c),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                out.skipped.push((path, e.to_string()));
            }
        }
    }
    Ok(out)
}

/// Clip names listed in `<root>/split/train.txt` and `<root>/split/val.txt`,
/// one per line, when both files exist.
pub fn read_split(root: &Path) -> Result<Option<(Vec<String>, Vec<String>)>> {
    let (t, v) = (root.join("split").join("train.txt"), root.join("split").join("val.txt"));
    if !t.is_file() || !v.is_file() {
        return Ok(None);
    }
    let read = |p: &Path| -> Result<Vec<String>> {
        Ok(std::fs::read_to_string(p)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect())
    };
    Ok(Some((read(&t)?, read(&v)?)))
}
