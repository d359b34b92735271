use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SeldError};
use crate::features::StereoClip;
use crate::fsio::write_atomic;

/// Header of the per-clip metadata CSV.
pub const LABEL_HEADER: [&str; 5] = ["frame_100ms", "class_id", "source_id", "azimuth_deg", "distance_m"];

/// One active source in one 100 ms label frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventLabel {
    pub frame: usize,
    pub class_id: usize,
    pub source_id: u32,
    /// Folded into `[-90, 90]`, positive to the left.
    pub azimuth_deg: f64,
    pub distance_m: f64,
}

/// Maps any azimuth in `[-180, 180]` onto the frontal half-plane by
/// mirroring rear directions across the interaural axis.
pub fn fold_azimuth(phi_deg: f64) -> f64 {
    if phi_deg > 90.0 {
        180.0 - phi_deg
    } else if phi_deg < -90.0 {
        -180.0 - phi_deg
    } else {
        phi_deg
    }
}

/// Left/right channel swap with the matching label mirror `phi -> -phi`.
pub fn acs_swap(clip: &StereoClip, labels: &[EventLabel]) -> (StereoClip, Vec<EventLabel>) {
    (clip.swapped(), mirror_labels(labels))
}

pub fn mirror_labels(labels: &[EventLabel]) -> Vec<EventLabel> {
    labels
        .iter()
        .map(|l| EventLabel {
            // 0 - x keeps +0 at +0
            azimuth_deg: 0.0 - l.azimuth_deg,
            ..*l
        })
        .collect()
}

/// Unit of the distance column in metadata files.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DistanceUnit {
    #[default]
    Meters,
    Centimeters,
}

impl DistanceUnit {
    fn to_meters(self, v: f64) -> f64 {
        match self {
            DistanceUnit::Meters => v,
            DistanceUnit::Centimeters => v / 100.0,
        }
    }
}

fn parse_err<T>(path: &Path, row: usize, detail: impl std::fmt::Display) -> Result<T> {
    Err(SeldError::Format {
        what: "label csv",
        detail: format!("{} row {row}: {detail}", path.display()),
    })
}

/// Reads a metadata CSV. A header row is optional, a trailing sixth
/// (elevation) column is dropped, and azimuths are folded.
pub fn read_labels(path: &Path, unit: DistanceUnit) -> Result<Vec<EventLabel>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if row == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if !(5..=6).contains(&rec.len()) {
            return parse_err(path, row, format!("expected 5 or 6 columns, found {}", rec.len()));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .or_else(|e| parse_err(path, row, format!("column {}: {e}", LABEL_HEADER[i])))
        };
        let int = |i: usize| -> Result<u64> {
            let v = num(i)?;
            if v < 0.0 || v.fract() != 0.0 {
                return parse_err(path, row, format!("column {} must be a non-negative integer", LABEL_HEADER[i]));
            }
            Ok(v as u64)
        };
        let azimuth = num(3)?;
        if !(-180.0..=180.0).contains(&azimuth) {
            return parse_err(path, row, format!("azimuth {azimuth} outside [-180, 180]"));
        }
        let distance = unit.to_meters(num(4)?);
        if !(distance >= 0.0) {
            return parse_err(path, row, format!("distance {distance} is negative"));
        }
        out.push(EventLabel {
            frame: int(0)? as usize,
            class_id: int(1)? as usize,
            source_id: int(2)? as u32,
            azimuth_deg: fold_azimuth(azimuth),
            distance_m: distance,
        });
    }
    Ok(out)
}

/// Serializes labels with a header, sorted by frame, class and source.
pub fn labels_to_csv(labels: &[EventLabel]) -> Result<Vec<u8>> {
    let mut sorted = labels.to_vec();
    sorted.sort_by(|a, b| (a.frame, a.class_id, a.source_id).cmp(&(b.frame, b.class_id, b.source_id)));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(LABEL_HEADER)?;
    for l in &sorted {
        w.write_record(&[
            l.frame.to_string(),
            l.class_id.to_string(),
            l.source_id.to_string(),
            l.azimuth_deg.to_string(),
            l.distance_m.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| SeldError::Io(e.into_error()))
}

pub fn write_labels(path: &Path, labels: &[EventLabel]) -> Result<()> {
    write_atomic(path, &labels_to_csv(labels)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(frame: usize, az: f64) -> EventLabel {
        EventLabel {
            frame,
            class_id: 3,
            source_id: 1,
            azimuth_deg: az,
            distance_m: 2.5,
        }
    }

    #[test]
    fn fold_examples() {
        assert_eq!(fold_azimuth(90.0), 90.0);
        assert_eq!(fold_azimuth(-90.0), -90.0);
        assert_eq!(fold_azimuth(120.0), 60.0);
        assert_eq!(fold_azimuth(-135.0), -45.0);
        assert_eq!(fold_azimuth(180.0), 0.0);
        assert_eq!(fold_azimuth(-180.0), 0.0);
    }

    #[test]
    fn mirror_is_involution() {
        let labels = vec![label(0, 30.0), label(1, 0.0), label(2, -90.0)];
        let m = mirror_labels(&labels);
        assert_eq!(m[0].azimuth_deg, -30.0);
        assert!(m[1].azimuth_deg.is_sign_positive());
        assert_eq!(mirror_labels(&m), labels);
    }

    #[test]
    fn csv_round_trip_and_tolerance() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let labels = vec![label(4, 12.5), label(0, -80.25)];
        write_labels(&p, &labels).unwrap();
        let back = read_labels(&p, DistanceUnit::Meters).unwrap();
        assert_eq!(back, vec![labels[1], labels[0]]);

        std::fs::write(&p, "3,2,0,150,250,10\n").unwrap();
        let back = read_labels(&p, DistanceUnit::Centimeters).unwrap();
        assert_eq!(back[0].azimuth_deg, 30.0);
        assert_eq!(back[0].distance_m, 2.5);

        std::fs::write(&p, "3,2,0,10\n").unwrap();
        assert!(read_labels(&p, DistanceUnit::Meters).is_err());
        std::fs::write(&p, "3,2,0,10,-1\n").unwrap();
        assert!(read_labels(&p, DistanceUnit::Meters).is_err());
        std::fs::write(&p, "3.5,2,0,10,1\n").unwrap();
        assert!(read_labels(&p, DistanceUnit::Meters).is_err());
    }
}
