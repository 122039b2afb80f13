//! Input rendering, vocabulary handling, the encoder-plus-regression-head QE
//! model and the desk-scale toy backends.

pub mod encoder;
pub mod params;
pub mod qe_model;
pub mod render;
pub mod seq2seq;
pub mod vocab;

pub use encoder::{toy_encoder, EncoderBackend, ToyEncoder, ToyEncoderConfig, MAX_RENDERED_TOKENS};
pub use params::{AdamW, OptimizerConfig, ParamTensor};
pub use qe_model::{mse, QeModel};
pub use render::{domain_tag, render_input, TagMode};
pub use seq2seq::{toy_seq2seq, MtTrainConfig, MtTrainReport, Seq2SeqConfig, ToySeq2Seq};
pub use vocab::{VocabSpec, Vocabulary, BOS, SEP, TAG_ID, TAG_OOD};

/// Backend names accepted in configuration files.
pub const BACKEND_TOY: &str = "toy";
pub const BACKEND_TOY_SEQ2SEQ: &str = "toy-seq2seq";
pub const KNOWN_BACKENDS: [&str; 2] = [BACKEND_TOY, BACKEND_TOY_SEQ2SEQ];

/// Tags added to the vocabulary for tag-mode training.
pub const DOMAIN_TAGS: [&str; 2] = [TAG_OOD, TAG_ID];
