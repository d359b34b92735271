use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::Serialize;

use super::assign::{enumerate_assignment, hungarian, ENUMERATION_LIMIT};
use crate::labels::EventLabel;

/// Largest azimuth error (degrees) of a true positive.
pub const DOA_THRESHOLD_DEG: f64 = 20.0;
/// Largest relative distance error of a true positive.
pub const DIST_THRESHOLD: f64 = 1.0;

static WARNED_ZERO_DISTANCE: AtomicBool = AtomicBool::new(false);

/// Absolute difference of folded azimuths.
pub fn azimuth_error(a: f64, b: f64) -> f64 {
    (a - b).abs()
}

/// Tallies for one class (or all classes pooled).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub matched: usize,
    pub doa_err_sum: f64,
    pub rde_pairs: usize,
    pub rde_sum: f64,
}

impl Counts {
    pub fn merge(&mut self, o: &Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.matched += o.matched;
        self.doa_err_sum += o.doa_err_sum;
        self.rde_pairs += o.rde_pairs;
        self.rde_sum += o.rde_sum;
    }

    /// `2TP / (2TP + FP + FN)`; 1 when there was nothing to detect and
    /// nothing was predicted.
    pub fn f20(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }

    /// Mean azimuth error over matched pairs; NaN without pairs.
    pub fn doae(&self) -> f64 {
        if self.matched == 0 {
            f64::NAN
        } else {
            self.doa_err_sum / self.matched as f64
        }
    }

    /// Mean relative distance error over matched pairs with a nonzero
    /// reference distance; NaN without such pairs.
    pub fn rde(&self) -> f64 {
        if self.rde_pairs == 0 {
            f64::NAN
        } else {
            self.rde_sum / self.rde_pairs as f64
        }
    }
}

/// Outcome of matching one (frame, class) cell.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CellMatch {
    /// `(pred index, ref index)` into the sorted inputs.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_refs: Vec<usize>,
}

fn by_position(a: &&EventLabel, b: &&EventLabel) -> std::cmp::Ordering {
    a.azimuth_deg
        .total_cmp(&b.azimuth_deg)
        .then(a.distance_m.total_cmp(&b.distance_m))
}

/// Minimum-total-azimuth-error matching of one cell. On a line many
/// assignments share that total, so ties go to the smaller summed squared
/// azimuth error, then the smaller summed distance error. Inputs are first
/// put in a canonical order so the result does not depend on list order.
/// Cells larger than [`ENUMERATION_LIMIT`] fall back to Hungarian on the
/// azimuth error alone.
pub fn match_events<'a>(preds: &mut Vec<&'a EventLabel>, refs: &mut Vec<&'a EventLabel>) -> CellMatch {
    preds.sort_by(by_position);
    refs.sort_by(by_position);
    let pairs = if preds.len() <= ENUMERATION_LIMIT && refs.len() <= ENUMERATION_LIMIT {
        enumerate_assignment(preds.len(), refs.len(), |i, j| {
            let e = azimuth_error(preds[i].azimuth_deg, refs[j].azimuth_deg);
            [e, e * e, (preds[i].distance_m - refs[j].distance_m).abs()]
        })
    } else {
        let costs: Vec<Vec<f64>> = preds
            .iter()
            .map(|p| refs.iter().map(|r| azimuth_error(p.azimuth_deg, r.azimuth_deg)).collect())
            .collect();
        hungarian(&costs)
    };
    let unmatched_preds = (0..preds.len()).filter(|i| !pairs.iter().any(|p| p.0 == *i)).collect();
    let unmatched_refs = (0..refs.len()).filter(|j| !pairs.iter().any(|p| p.1 == *j)).collect();
    CellMatch {
        pairs,
        unmatched_preds,
        unmatched_refs,
    }
}

/// Scores one matched pair into `c`.
fn score_pair(c: &mut Counts, pred: &EventLabel, reference: &EventLabel) {
    let doa = azimuth_error(pred.azimuth_deg, reference.azimuth_deg);
    c.matched += 1;
    c.doa_err_sum += doa;
    let dist_ok = if reference.distance_m > 0.0 {
        let rel = (pred.distance_m - reference.distance_m).abs() / reference.distance_m;
        c.rde_pairs += 1;
        c.rde_sum += rel;
        rel <= DIST_THRESHOLD
    } else {
        if !WARNED_ZERO_DISTANCE.swap(true, Ordering::Relaxed) {
            log::warn!("reference distance 0: pair excluded from RDE and distance threshold");
        }
        true
    };
    if doa <= DOA_THRESHOLD_DEG && dist_ok {
        c.tp += 1;
    } else {
        c.fp += 1;
        c.fn_ += 1;
    }
}

/// Per-class counts of one clip.
pub fn evaluate_clip(preds: &[EventLabel], refs: &[EventLabel]) -> BTreeMap<usize, Counts> {
    let mut cells: BTreeMap<(usize, usize), (Vec<&EventLabel>, Vec<&EventLabel>)> = BTreeMap::new();
    for p in preds {
        cells.entry((p.frame, p.class_id)).or_default().0.push(p);
    }
    for r in refs {
        cells.entry((r.frame, r.class_id)).or_default().1.push(r);
    }
    let mut out: BTreeMap<usize, Counts> = BTreeMap::new();
    for ((_, class), (mut p, mut r)) in cells {
        let m = match_events(&mut p, &mut r);
        let c = out.entry(class).or_default();
        for &(i, j) in &m.pairs {
            score_pair(c, p[i], r[j]);
        }
        c.fp += m.unmatched_preds.len();
        c.fn_ += m.unmatched_refs.len();
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricsReport {
    /// Micro-averaged (pooled over classes) location-aware F-score.
    pub f20: f64,
    pub doae_deg: f64,
    pub rde: f64,
    /// Mean of per-class F-scores over classes that occur in either list.
    pub f20_macro: f64,
    pub counts: Counts,
    pub per_class: BTreeMap<usize, Counts>,
    pub clips: usize,
}

impl MetricsReport {
    /// `F20=0.912 DOAE=4.3 RDE=0.118`
    pub fn summary_line(&self) -> String {
        format!("F20={:.3} DOAE={:.1} RDE={:.3}", self.f20, self.doae_deg, self.rde)
    }
}

/// Scores `(predictions, references)` per clip and pools the counts.
/// Clips are scored in parallel and reduced in input order.
pub fn compute_metrics(clips: &[(Vec<EventLabel>, Vec<EventLabel>)]) -> MetricsReport {
    let per_clip: Vec<BTreeMap<usize, Counts>> = clips.par_iter().map(|(p, r)| evaluate_clip(p, r)).collect();
    let mut per_class: BTreeMap<usize, Counts> = BTreeMap::new();
    for clip in &per_clip {
        for (class, c) in clip {
            per_class.entry(*class).or_default().merge(c);
        }
    }
    let mut counts = Counts::default();
    for c in per_class.values() {
        counts.merge(c);
    }
    let f20_macro = if per_class.is_empty() {
        1.0
    } else {
        per_class.values().map(Counts::f20).sum::<f64>() / per_class.len() as f64
    };
    MetricsReport {
        f20: counts.f20(),
        doae_deg: counts.doae(),
        rde: counts.rde(),
        f20_macro,
        counts,
        per_class,
        clips: clips.len(),
    }
}
