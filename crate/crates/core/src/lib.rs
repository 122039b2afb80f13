pub mod augment;
pub mod config;
pub mod corpus;
pub mod desk;
pub mod error;
pub mod eval_report;
pub mod experiment;
pub mod metrics;
pub mod modeling;
pub mod rng;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

/// QE model built on the toy encoder.
pub type ToyQeModel<F> = modeling::QeModel<F, modeling::ToyEncoder<F>>;
pub type ToyQeModelF64 = ToyQeModel<f64>;
pub type ToyQeModelF32 = ToyQeModel<f32>;
pub type ToyCheckpoint<F> = trainer::Checkpoint<F, modeling::ToyEncoder<F>>;
pub type ToyCheckpointF64 = ToyCheckpoint<f64>;
pub type ToySeq2SeqF64 = modeling::ToySeq2Seq<f64>;
pub type ToySeq2SeqF32 = modeling::ToySeq2Seq<f32>;
