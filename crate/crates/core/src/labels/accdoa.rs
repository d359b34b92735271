use serde::{Deserialize, Serialize};

use super::event::{fold_azimuth, EventLabel};
use crate::error::{Result, SeldError};
use crate::tensor::Tensor;

/// Values per (track, class) slot: direction x, direction y, scaled distance.
pub const SLOT_DIM: usize = 3;

/// Output/target geometry shared by encoding, loss and decoding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccdoaConfig {
    pub tracks: usize,
    pub classes: usize,
    /// Distances are divided by this before entering the network space.
    pub distance_scale: f64,
}

impl Default for AccdoaConfig {
    fn default() -> Self {
        Self {
            tracks: 3,
            classes: 13,
            distance_scale: 10.0,
        }
    }
}

impl AccdoaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tracks == 0 || self.classes == 0 || !(self.distance_scale > 0.0) {
            return Err(SeldError::Config(format!("accdoa geometry must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Training target `[frames, tracks, classes, 3]` plus a flag marking
/// slots that hold a duplicate of another track's source.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetTensor {
    pub values: Tensor,
    pub padding: Vec<bool>,
}

impl TargetTensor {
    pub fn frames(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn is_padding(&self, frame: usize, track: usize, class: usize) -> bool {
        let s = self.values.shape();
        self.padding[(frame * s[1] + track) * s[2] + class]
    }
}

/// Encodes frame labels as multi-track ACCDOA targets.
///
/// Sources sharing a (frame, class) cell are ordered by source id and
/// placed on consecutive tracks; remaining tracks repeat them cyclically and
/// are flagged as padding. Cells with more sources than tracks keep the
/// nearest ones. Labels at frames `>= frames` are ignored.
pub fn encode_multi_accdoa(labels: &[EventLabel], frames: usize, cfg: &AccdoaConfig) -> Result<TargetTensor> {
    cfg.validate()?;
    let (nt, nc) = (cfg.tracks, cfg.classes);
    let mut cells: Vec<Vec<&EventLabel>> = vec![Vec::new(); frames * nc];
    for l in labels {
        if !(-90.0..=90.0).contains(&l.azimuth_deg) {
            return Err(SeldError::InvalidArgument(format!(
                "azimuth {} outside the folded range [-90, 90]",
                l.azimuth_deg
            )));
        }
        if l.class_id >= nc {
            return Err(SeldError::InvalidArgument(format!("class {} >= {nc}", l.class_id)));
        }
        if !(l.distance_m >= 0.0) {
            return Err(SeldError::InvalidArgument(format!("distance {} is negative", l.distance_m)));
        }
        if l.frame < frames {
            cells[l.frame * nc + l.class_id].push(l);
        }
    }
    let mut values = vec![0.0; frames * nt * nc * SLOT_DIM];
    let mut padding = vec![false; frames * nt * nc];
    for (cell, sources) in cells.iter_mut().enumerate() {
        if sources.is_empty() {
            continue;
        }
        let (frame, class) = (cell / nc, cell % nc);
        if sources.len() > nt {
            log::warn!(
                "frame {frame} class {class}: {} overlapping sources, keeping the {nt} nearest",
                sources.len()
            );
            sources.sort_by(|a, b| a.distance_m.total_cmp(&b.distance_m).then(a.source_id.cmp(&b.source_id)));
            sources.truncate(nt);
        }
        sources.sort_by_key(|l| l.source_id);
        for track in 0..nt {
            let src = sources[track % sources.len()];
            let phi = src.azimuth_deg.to_radians();
            let slot = (frame * nt + track) * nc + class;
            values[slot * SLOT_DIM..][..SLOT_DIM].copy_from_slice(&[
                phi.cos(),
                phi.sin(),
                src.distance_m / cfg.distance_scale,
            ]);
            padding[slot] = track >= sources.len();
        }
    }
    Ok(TargetTensor {
        values: Tensor::new([frames, nt, nc, SLOT_DIM], values)?,
        padding,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeConfig {
    /// A slot is active when the norm of its direction vector exceeds this.
    pub activity_threshold: f64,
    /// Active same-class tracks closer than this (degrees) are one event.
    pub merge_threshold_deg: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            activity_threshold: 0.5,
            merge_threshold_deg: 15.0,
        }
    }
}

/// Turns one clip's network output `[frames, tracks, classes, 3]` into
/// events. Tracks of the same class and frame whose folded azimuths lie
/// within the merge threshold of a group's first member are averaged.
pub fn decode_predictions(
    output: &Tensor,
    accdoa: &AccdoaConfig,
    cfg: &DecodeConfig,
) -> Result<Vec<EventLabel>> {
    let s = output.shape();
    if s.len() != 4 || s[1] != accdoa.tracks || s[2] != accdoa.classes || s[3] != SLOT_DIM {
        return Err(SeldError::Shape {
            op: "decode_predictions",
            detail: format!(
                "expected [T, {}, {}, {SLOT_DIM}], got {s:?}",
                accdoa.tracks, accdoa.classes
            ),
        });
    }
    let (frames, nt, nc) = (s[0], s[1], s[2]);
    let d = output.data();
    let mut events = Vec::new();
    for frame in 0..frames {
        for class in 0..nc {
            // (first azimuth, summed azimuth, summed distance, count, first track)
            let mut groups: Vec<(f64, f64, f64, usize, usize)> = Vec::new();
            for track in 0..nt {
                let o = ((frame * nt + track) * nc + class) * SLOT_DIM;
                let (x, y, dist) = (d[o], d[o + 1], d[o + 2]);
                if x.hypot(y) <= cfg.activity_threshold {
                    continue;
                }
                let az = fold_azimuth(y.atan2(x).to_degrees());
                let dist = dist.max(0.0) * accdoa.distance_scale;
                match groups.iter_mut().find(|g| (g.0 - az).abs() <= cfg.merge_threshold_deg) {
                    Some(g) => {
                        g.1 += az;
                        g.2 += dist;
                        g.3 += 1;
                    }
                    None => groups.push((az, az, dist, 1, track)),
                }
            }
            for (_, az_sum, dist_sum, n, track) in groups {
                events.push(EventLabel {
                    frame,
                    class_id: class,
                    source_id: track as u32,
                    azimuth_deg: az_sum / n as f64,
                    distance_m: dist_sum / n as f64,
                });
            }
        }
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(frame: usize, class_id: usize, source_id: u32, az: f64, dist: f64) -> EventLabel {
        EventLabel {
            frame,
            class_id,
            source_id,
            azimuth_deg: az,
            distance_m: dist,
        }
    }

    fn slot(t: &TargetTensor, frame: usize, track: usize, class: usize) -> [f64; 3] {
        let v = &t.values;
        [0, 1, 2].map(|k| v.at(&[frame, track, class, k]))
    }

    #[test]
    fn empty_labels_zero_target() {
        let t = encode_multi_accdoa(&[], 4, &AccdoaConfig::default()).unwrap();
        assert_eq!(t.values.shape(), &[4, 3, 13, 3]);
        assert!(t.values.data().iter().all(|&v| v == 0.0));
        assert!(t.padding.iter().all(|&p| !p));
    }

    #[test]
    fn single_source_fills_duplicates() {
        let t = encode_multi_accdoa(&[ev(0, 5, 7, 0.0, 2.0)], 1, &AccdoaConfig::default()).unwrap();
        for track in 0..3 {
            assert_eq!(slot(&t, 0, track, 5), [1.0, 0.0, 0.2]);
            assert_eq!(t.is_padding(0, track, 5), track > 0);
        }
    }

    #[test]
    fn two_sources_one_duplicate() {
        let labels = [ev(0, 1, 9, 30.0, 1.0), ev(0, 1, 2, -60.0, 3.0)];
        let t = encode_multi_accdoa(&labels, 1, &AccdoaConfig::default()).unwrap();
        // ordered by source id: 2 then 9, then 2 again
        assert!((slot(&t, 0, 0, 1)[1] - (-60f64).to_radians().sin()).abs() < 1e-15);
        assert!((slot(&t, 0, 1, 1)[1] - 30f64.to_radians().sin()).abs() < 1e-15);
        assert_eq!(slot(&t, 0, 2, 1), slot(&t, 0, 0, 1));
        assert_eq!([0, 1, 2].map(|k| t.is_padding(0, k, 1)), [false, false, true]);
    }

    #[test]
    fn overflow_keeps_nearest() {
        let labels: Vec<_> = (0..5).map(|i| ev(0, 0, i, 10.0 * i as f64, 5.0 - i as f64)).collect();
        let t = encode_multi_accdoa(&labels, 1, &AccdoaConfig::default()).unwrap();
        let dists: Vec<f64> = (0..3).map(|k| slot(&t, 0, k, 0)[2] * 10.0).collect();
        assert_eq!(dists, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn rejects_unfolded_azimuth() {
        assert!(encode_multi_accdoa(&[ev(0, 0, 0, 120.0, 1.0)], 1, &AccdoaConfig::default()).is_err());
        assert!(encode_multi_accdoa(&[ev(0, 13, 0, 0.0, 1.0)], 1, &AccdoaConfig::default()).is_err());
    }

    #[test]
    fn decode_threshold_and_merge() {
        let cfg = AccdoaConfig::default();
        let mut out = Tensor::zeros([1, 3, 13, 3]);
        let mut set = |track: usize, v: [f64; 3]| {
            let o = (track * 13 + 4) * 3;
            let mut d = out.clone().into_data();
            d[o..o + 3].copy_from_slice(&v);
            out = Tensor::new([1, 3, 13, 3], d).unwrap();
        };
        set(0, [0.9, 0.0, 0.1]);
        set(1, [0.0, 0.5, 0.4]); // norm exactly at threshold: inactive
        set(2, [0.9 * 10f64.to_radians().cos(), 0.9 * 10f64.to_radians().sin(), 0.3]);
        let ev = decode_predictions(&out, &cfg, &DecodeConfig::default()).unwrap();
        assert_eq!(ev.len(), 1);
        assert!((ev[0].azimuth_deg - 5.0).abs() < 1e-12);
        assert!((ev[0].distance_m - 2.0).abs() < 1e-12);
    }
}
