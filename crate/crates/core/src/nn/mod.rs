//! Parameter storage and the small set of layers the model is built from.

mod layers;
mod params;

pub use layers::{BatchNorm, Conv2d, Linear, BN_EPS, BN_MOMENTUM};
pub use params::{apply_bn_updates, BnUpdate, Forward, ForwardState, Mode, ParamEntry, ParamId, ParamStore};

pub(crate) use layers::uniform;

/// Deterministic generator used for every random draw in the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
