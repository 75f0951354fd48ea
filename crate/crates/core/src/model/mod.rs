//! Toy-scale ViT encoder, the three pretext heads, reverse-mode gradients,
//! AdamW training and a frozen-encoder linear probe.
//!
//! Everything is generic over [`Real`]: `f32` for training and `f64` for
//! finite-difference gradient checks.

mod config;
mod gradcheck;
mod net;
mod optim;
mod params;
mod probe;
mod real;
mod tape;
mod train;

pub use config::{HeadConfig, InputNorm, ModelConfig, ViTConfig};
pub use gradcheck::{grad_check, GradCheckReport, REL_ERR_FLOOR};
pub use net::{patchify, unpatchify, Model, Task};
pub use optim::{AdamW, LrSchedule};
pub use params::{load_checkpoint, save_checkpoint, Init, ParamStore, PARAMS_BIN, PARAMS_JSON};
pub use probe::{iou, linear_probe, ProbeChip, ProbeConfig, ProbeReport};
pub use real::Real;
pub use tape::{normalize_patches, normalized_mse, Gradients, NodeId, Tape};
pub use train::{epoch_seed, train, write_loss_trace, TrainConfig, TrainData, TrainReport, DIVERGENCE_FACTOR};
