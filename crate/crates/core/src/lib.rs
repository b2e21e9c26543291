//! Speaker-adaptive speech recognition at desk scale.
//!
//! A self-contained CTC transformer encoder whose blocks accept bottleneck
//! adapters fed by per-speaker features — frame-wise fMLLR transforms of
//! encoder features and per-utterance x-vector embeddings — together with
//! everything needed to run the experiment end to end: a synthetic
//! severity-tiered corpus generator, fMLLR estimation (LDA, EM-trained
//! Gaussian mixtures, row-update transforms), a toy x-vector extractor,
//! two-stage finetuning, and severity-stratified WER reports. Everything
//! is f64, seeded, and bit-reproducible.
//!
//! ## Examples
//!
//! The `examples/` directory is the best entry point; each one is
//! self-contained and runnable:
//!
//! ```bash
//! cargo run --release --example autograd_gradcheck   # gradients vs finite differences
//! cargo run --release --example encoder_forward      # subsampling and block states
//! cargo run --release --example adapter_zero_init    # adapters are invisible until trained
//! cargo run --release --example ctc_alignment        # CTC loss vs path enumeration
//! cargo run --release --example gmm_fmllr            # EM + per-speaker transform recovery
//! cargo run --release --example xvector_similarity   # speaker embedding clustering
//! cargo run --release --example generate_corpus      # severity-tiered synthetic speech
//! cargo run --release --example block_sweep          # where to mount the x-vector adapter
//! cargo run --release --example crosslingual         # merged 40+35-unit vocabulary training
//! cargo run --release --example full_pipeline        # the whole experiment, miniature scale
//! ```
//!
//! The same workflows are scriptable through the thin `sasr` binary
//! (`generate`, `pretrain`, `extract`, `finetune`, `score`,
//! `sweep-blocks`); see the README or `sasr help`.
//!
//! ## Layout
//!
//! - [`graph`], [`tensor`], [`nn`], [`params`]: reverse-mode autodiff and
//!   the layer primitives (linear, ReLU, layer norm, multi-head attention,
//!   strided conv subsampling, feature concat).
//! - [`encoder`]: the context encoder with adapter mount points and the
//!   feature-extraction path.
//! - [`adapter`]: the bottleneck adapter and its auxiliary net.
//! - [`gmm`], [`lda`], [`fmllr`], [`xvector`]: speaker-adaptive feature
//!   estimation.
//! - [`ctc`], [`optim`], [`trainer`]: loss, schedule, and the two-stage
//!   finetuning loop.
//! - [`corpus`], [`wer`]: synthetic data and scoring.
//! - [`archive`], [`checkpoint`], [`config`], [`pipeline`]: file formats
//!   and the end-to-end commands.

pub mod adapter;
pub mod archive;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod ctc;
pub mod error;
pub mod encoder;
pub mod fmllr;
pub mod gmm;
pub mod gradcheck;
pub mod graph;
pub mod lda;
pub mod linalg;
pub mod nn;
pub mod pipeline;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod trainer;
pub mod wer;
pub mod xvector;

pub use error::{Error, Result};
pub use tensor::Tensor;
