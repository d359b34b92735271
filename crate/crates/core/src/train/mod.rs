//! Optimizer, schedule, synthetic scenes, dataset handling and the
//! training loop.

mod config;
mod data;
mod optim;
mod synth;
mod trainer;

pub use config::TrainConfig;
pub use data::{
    load_dataset, prepare_clip, prepare_clips, read_split, split_indices, swap_channel_features, DatasetLoad,
    LabeledClip, PreparedClip, Sample,
};
pub use optim::{clip_grad_norm, global_grad_norm, Adam, PlateauScheduler, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use synth::{
    class_frequency, class_waveform, label_hop_samples, pan_gains, synth_clip, synth_dataset, SyntheticSceneConfig,
    LABEL_HOP_SECS,
};
pub use trainer::{
    evaluate, log_csv, predict_clip, select_best, stack, train_loop, EpochRecord, LoopOptions, StepStats, TrainOutcome,
    Trainer,
};
