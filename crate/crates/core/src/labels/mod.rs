//! Ground-truth handling: azimuth folding, left/right swap augmentation,
//! multi-track ACCDOA targets and their permutation-invariant loss.

mod accdoa;
mod event;
mod pit;

pub use accdoa::{
    decode_predictions, encode_multi_accdoa, AccdoaConfig, DecodeConfig, TargetTensor, SLOT_DIM,
};
pub use event::{
    acs_swap, fold_azimuth, labels_to_csv, mirror_labels, read_labels, write_labels, DistanceUnit, EventLabel,
    LABEL_HEADER,
};
pub use pit::{permutation_invariant_loss, permutations, pit_loss_value};
