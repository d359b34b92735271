//! Selective state-space kernels: zero-order-hold discretization, the
//! discrete linear-time scan, its differentiable multi-channel form and the
//! Mamba block built on it.

mod bench;
mod mamba;
mod scan;
mod selective;
mod zoh;

pub use bench::{bench_scan, median, ScanTiming};
pub use mamba::{MambaBlock, MambaBlockConfig};
pub use scan::{ssm_scan, ssm_scan_with_state, SsmDiscrete};
pub use selective::{selective_scan, Projected, SelectiveProjections, DT_INIT_RANGE};
pub use zoh::{zoh_discretize, zoh_input_gain, SERIES_THRESHOLD};
