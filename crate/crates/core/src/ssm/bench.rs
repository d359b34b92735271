use std::time::Instant;

use rand::Rng;

use super::scan::{scan_prefix, SsmDiscrete};
use crate::error::{Result, SeldError};
use crate::nn::seeded_rng;

/// Channels and state size of the benchmark workload.
const BENCH_CHANNELS: usize = 64;
const BENCH_STATE: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct ScanTiming {
    pub length: usize,
    /// Wall-clock seconds of every repeat, in run order.
    pub runs: Vec<f64>,
}

impl ScanTiming {
    pub fn median(&self) -> f64 {
        median(&self.runs)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn workload(length: usize, seed: u64) -> Result<(Vec<Vec<f64>>, Vec<SsmDiscrete>)> {
    let mut rng = seeded_rng(seed);
    let mut inputs = Vec::with_capacity(BENCH_CHANNELS);
    let mut params = Vec::with_capacity(BENCH_CHANNELS);
    for _ in 0..BENCH_CHANNELS {
        let a: Vec<f64> = (0..BENCH_STATE).map(|n| -((n + 1) as f64)).collect();
        let b: Vec<f64> = (0..length * BENCH_STATE).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..length * BENCH_STATE).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let delta: Vec<f64> = (0..length).map(|_| rng.gen_range(1e-3..0.1)).collect();
        params.push(SsmDiscrete::from_selective(&a, &b, &c, &delta, 1.0)?);
        inputs.push((0..length).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    Ok((inputs, params))
}

/// Times the sequential scan over a fixed multi-channel workload for each
/// length. Every length scans a prefix of one shared workload so that all
/// lengths see the same memory layout, and lengths are interleaved within
/// each repeat so slow drifts in machine load hit them alike.
/// Discretization happens outside the timed region.
pub fn bench_scan(lengths: &[usize], repeat: usize) -> Result<Vec<ScanTiming>> {
    if repeat == 0 {
        return Err(SeldError::InvalidArgument("repeat must be at least 1".into()));
    }
    let Some(&longest) = lengths.iter().max() else {
        return Err(SeldError::InvalidArgument("lengths must be non-empty".into()));
    };
    if lengths.contains(&0) {
        return Err(SeldError::InvalidArgument(format!("lengths must be positive, got {lengths:?}")));
    }
    let (inputs, params) = workload(longest, 42)?;
    let mut h = vec![0.0; BENCH_STATE];
    let mut y = Vec::with_capacity(longest);
    let mut sink = 0.0;
    let mut pass = |length: usize| {
        for (x, p) in inputs.iter().zip(&params) {
            h.fill(0.0);
            y.clear();
            scan_prefix(&x[..length], p, &mut h, &mut y);
            sink += y[length - 1];
        }
    };
    // warm-up pass so page faults and cache fills stay out of the timings
    pass(longest);
    let mut runs = vec![Vec::with_capacity(repeat); lengths.len()];
    for _ in 0..repeat {
        for (i, &length) in lengths.iter().enumerate() {
            let start = Instant::now();
            pass(length);
            runs[i].push(start.elapsed().as_secs_f64());
        }
    }
    std::hint::black_box(sink);
    Ok(lengths
        .iter()
        .zip(runs)
        .map(|(&length, runs)| ScanTiming { length, runs })
        .collect())
}
