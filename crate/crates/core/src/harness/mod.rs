//! Synthetic world, toy denoiser, training, sampling and the end-to-end
//! generation pipeline.

pub mod checkpoint;
pub mod model;
pub mod pipeline;
pub mod sampler;
pub mod stack;
pub mod train;
pub mod world;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use pipeline::{flexid_generate, flexid_generate_batch, PipelineOptions};
pub use sampler::{euler_sample, euler_sample_batch, Conditioning, GenerationTrace, SamplerConfig, StepRecord};
pub use stack::{config_hash, TrainedStack, TrainingMeta};
pub use train::{train, TrainConfig};
pub use world::{make_world, sample_dataset, DataSample, SyntheticWorld, WorldConfig};
