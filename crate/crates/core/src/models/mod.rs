//! Toy selective-scan encoders and the synthetic tasks they are trained on.
//!
//! A reconstruction task asks the model to reproduce its input through a
//! narrower encoder; a frame-classification task asks for the codeword
//! identity of every frame, either straight from the encoder or through a
//! small decoder stage.

mod container;
mod data;
mod model;
mod train;

pub use container::{
    config_hash, load_dataset, load_model, read_container, save_dataset, save_model, write_container, ContainerHeader,
    ContainerKind, ModelMeta, TensorEntry, FORMAT_VERSION, MAGIC,
};
pub use data::{gen_synthetic_dataset, DataSpec, Sample, SyntheticDataset, Target, TaskKind};
pub use model::{encoder_forward, DecoderStage, EncoderStack, HeadKind, Model, ModelCache, ModelSpec, TaskHead};
pub use train::{cross_entropy_loss, evaluate, mse_loss, sample_loss, train_task, TrainConfig, TrainOutcome};
