use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use seld::config::RunConfig;
use seld::features::{read_stereo_wav, write_features, write_stereo_wav, Extractor};
use seld::fsio::{list_with_extension, write_atomic};
use seld::labels::{read_labels, write_labels, DistanceUnit, EventLabel};
use seld::metrics::{compute_metrics, write_report};
use seld::model::{count_params, decoder_macs, estimate_macs, load_checkpoint, SeldModel};
use seld::ssm::bench_scan as run_bench;
use seld::train::{
    load_dataset, predict_clip, prepare_clip, prepare_clips, read_split, split_indices, synth_dataset, train_loop,
    LabeledClip, LoopOptions, SyntheticSceneConfig, Trainer,
};

use crate::ConfigArgs;

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    Ok(match &args.config {
        Some(p) => RunConfig::load(p, &args.set)?,
        None => RunConfig::from_toml(&RunConfig::default().to_toml()?, &args.set)?,
    })
}

/// `dir/audio` when present, else `dir`.
fn audio_dir(dir: &Path) -> PathBuf {
    let sub = dir.join("audio");
    if sub.is_dir() {
        sub
    } else {
        dir.to_path_buf()
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>> {
    let dir = audio_dir(dir);
    let wavs = list_with_extension(&dir, "wav").with_context(|| format!("listing {}", dir.display()))?;
    if wavs.is_empty() {
        bail!("no .wav files in {}", dir.display());
    }
    Ok(wavs)
}

pub fn synth(out: &Path, clips: usize, seed: u64, args: &ConfigArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let scene = SyntheticSceneConfig {
        n_clips: clips,
        ..cfg.data.synth
    };
    let (audio, meta) = (out.join("audio"), out.join("metadata"));
    std::fs::create_dir_all(&audio)?;
    std::fs::create_dir_all(&meta)?;
    if clips == 0 {
        log::warn!("--clips 0: writing an empty dataset");
    }
    let data = synth_dataset(&scene, &cfg.features.stft, seed)?;
    data.par_iter().try_for_each(|c| -> Result<()> {
        write_stereo_wav(&audio.join(format!("{}.wav", c.name)), &c.audio)?;
        write_labels(&meta.join(format!("{}.csv", c.name)), &c.labels)?;
        Ok(())
    })?;
    println!("wrote {} clips to {}", data.len(), out.display());
    Ok(())
}

pub fn features(input: &Path, out: &Path, args: &ConfigArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let ex = Extractor::new(cfg.features)?;
    let wavs = list_wavs(input)?;
    let results: Vec<_> = wavs
        .par_iter()
        .map(|p| read_stereo_wav(p, cfg.features.stft.sample_rate).and_then(|clip| ex.extract(&clip)))
        .collect();
    std::fs::create_dir_all(out)?;
    let mut errors = csv::Writer::from_writer(Vec::new());
    errors.write_record(["file", "error"])?;
    let (mut ok, mut failed, mut segments) = (0, 0, 0);
    for (path, r) in wavs.iter().zip(results) {
        match r {
            Ok(segs) => {
                for (i, seg) in segs.iter().enumerate() {
                    write_features(&out.join(format!("{}_{i:03}.feat", stem(path))), seg)?;
                }
                segments += segs.len();
                ok += 1;
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                errors.write_record([path.display().to_string(), e.to_string()])?;
                failed += 1;
            }
        }
    }
    let errors_path = out.join("errors.csv");
    if failed > 0 {
        write_atomic(&errors_path, &errors.into_inner()?)?;
    } else if errors_path.exists() {
        std::fs::remove_file(&errors_path)?;
    }
    if ok == 0 {
        bail!("all {failed} input files failed; see {}", errors_path.display());
    }
    println!("wrote {segments} feature files for {ok} clips ({failed} skipped) to {}", out.display());
    Ok(())
}

pub fn train(config: &Path, set: &[String], data: &Path, out: &Path, acs: bool, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfig::load(config, set)?;
    cfg.train.acs |= acs;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    let load = load_dataset(data, cfg.data.distance_unit, cfg.features.stft.sample_rate)?;
    if load.clips.is_empty() {
        bail!("no usable clips under {}", data.display());
    }
    let (train_idx, val_idx) = match read_split(data)? {
        Some((t, v)) => {
            let find = |name: &String| {
                load.clips
                    .iter()
                    .position(|c| &c.name == name)
                    .with_context(|| format!("split lists unknown clip `{name}`"))
            };
            (t.iter().map(find).collect::<Result<Vec<_>>>()?, v.iter().map(find).collect::<Result<Vec<_>>>()?)
        }
        None => split_indices(load.clips.len(), cfg.train.val_fraction, cfg.train.seed),
    };
    let ex = Extractor::new(cfg.features)?;
    let pick = |idx: &[usize]| -> Vec<LabeledClip> { idx.iter().map(|&i| load.clips[i].clone()).collect() };
    let train_set = prepare_clips(&pick(&train_idx), &ex, &cfg.model)?;
    let val_set = prepare_clips(&pick(&val_idx), &ex, &cfg.model)?;
    if train_set.is_empty() {
        bail!("the split leaves no training clips");
    }
    log::info!(
        "{} training clips, {} validation clips, acs {}",
        train_set.len(),
        val_set.len(),
        cfg.train.acs
    );
    let model = SeldModel::new(&cfg.model, cfg.train.seed)?;
    log::info!("{} trainable parameters", model.num_params());
    std::fs::create_dir_all(out)?;
    write_atomic(&out.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    let mut trainer = Trainer::new(model, cfg.train.clone())?;
    let opts = LoopOptions {
        out_dir: Some(out.to_path_buf()),
        decode: cfg.data.decode,
    };
    let outcome = train_loop(&mut trainer, &train_set, &val_set, &opts)?;
    let best = &outcome.log[outcome.best_epoch];
    println!(
        "best epoch {}: F20={:.3} DOAE={:.1} RDE={:.3} ({} steps)",
        best.epoch,
        best.val_f20,
        best.val_doae,
        best.val_rde,
        trainer.steps()
    );
    Ok(())
}

pub fn infer(ckpt: &Path, input: &Path, out: &Path, args: &ConfigArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let model = load_checkpoint(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    if model.cfg().n_mels != cfg.features.mel.n_mels {
        bail!(
            "checkpoint expects {} mel bands, features produce {}",
            model.cfg().n_mels,
            cfg.features.mel.n_mels
        );
    }
    let ex = Extractor::new(cfg.features)?;
    let wavs = list_wavs(input)?;
    std::fs::create_dir_all(out)?;
    let results: Vec<seld::Result<usize>> = wavs
        .par_iter()
        .map(|p| {
            let clip = LabeledClip {
                name: stem(p),
                audio: read_stereo_wav(p, cfg.features.stft.sample_rate)?,
                labels: Vec::new(),
            };
            let prepared = prepare_clip(&clip, &ex, model.cfg())?;
            let events = predict_clip(&model, &prepared, &cfg.data.decode)?;
            write_labels(&out.join(format!("{}.csv", clip.name)), &events)?;
            Ok(events.len())
        })
        .collect();
    let (mut ok, mut events) = (0, 0);
    for (p, r) in wavs.iter().zip(results) {
        match r {
            Ok(n) => {
                ok += 1;
                events += n;
            }
            Err(e) => log::warn!("skipping {}: {e}", p.display()),
        }
    }
    if ok == 0 {
        bail!("inference failed on every input");
    }
    println!("wrote predictions for {ok} of {} clips ({events} event rows) to {}", wavs.len(), out.display());
    Ok(())
}

fn csv_by_stem(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    Ok(list_with_extension(dir, "csv")
        .with_context(|| format!("listing {}", dir.display()))?
        .into_iter()
        .map(|p| (stem(&p), p))
        .collect())
}

pub fn eval(pred: &Path, reference: &Path, out: &Path, unit: DistanceUnit) -> Result<()> {
    let ref_dir = if reference.join("metadata").is_dir() {
        reference.join("metadata")
    } else {
        reference.to_path_buf()
    };
    let preds = csv_by_stem(pred)?;
    let refs = csv_by_stem(&ref_dir)?;
    let p_names: BTreeSet<&String> = preds.iter().map(|x| &x.0).collect();
    let r_names: BTreeSet<&String> = refs.iter().map(|x| &x.0).collect();
    if p_names != r_names {
        let only_p: Vec<&str> = p_names.difference(&r_names).map(|s| s.as_str()).collect();
        let only_r: Vec<&str> = r_names.difference(&p_names).map(|s| s.as_str()).collect();
        bail!(
            "clip sets differ; only in predictions: [{}]; only in references: [{}]",
            only_p.join(", "),
            only_r.join(", ")
        );
    }
    if refs.is_empty() {
        bail!("no reference CSVs in {}", ref_dir.display());
    }
    let pairs: Vec<(Vec<EventLabel>, Vec<EventLabel>)> = preds
        .iter()
        .zip(&refs)
        .map(|((_, p), (_, r))| Ok((read_labels(p, DistanceUnit::Meters)?, read_labels(r, unit)?)))
        .collect::<seld::Result<_>>()?;
    let report = compute_metrics(&pairs);
    let csv_path = write_report(&report, out)?;
    log::info!("report in {} and {}", out.display(), csv_path.display());
    println!("{}", report.summary_line());
    Ok(())
}

pub fn bench_scan(lengths: &[usize], repeat: usize, out: Option<&Path>) -> Result<()> {
    let timings = run_bench(lengths, repeat)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["length", "median_s", "min_s", "max_s"])?;
    for t in &timings {
        let min = t.runs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = t.runs.iter().copied().fold(0.0, f64::max);
        w.write_record([t.length.to_string(), format!("{:e}", t.median()), format!("{min:e}"), format!("{max:e}")])?;
    }
    let bytes = w.into_inner()?;
    if let Some(p) = out {
        write_atomic(p, &bytes)?;
    }
    print!("{}", String::from_utf8(bytes)?);
    Ok(())
}

pub fn count(args: &ConfigArgs, frames: Option<usize>) -> Result<()> {
    let cfg = load_config(args)?;
    let frames = frames.unwrap_or(cfg.features.segment_frames);
    let out = cfg.model.out_frames(frames)?;
    println!("params={}", count_params(&cfg.model));
    println!("macs={}", estimate_macs(&cfg.model, frames)?);
    println!("decoder_macs={}", decoder_macs(&cfg.model, out));
    println!("frames={frames}");
    Ok(())
}

pub fn print_config(toy: bool) -> Result<()> {
    let cfg = if toy { RunConfig::toy() } else { RunConfig::default() };
    print!("{}", cfg.to_toml()?);
    Ok(())
}
