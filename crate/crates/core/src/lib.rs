//! Detection toolkit for machine-generated content (MGC).
//!
//! The crate ingests paired human/machine corpora and builds two detectors on
//! top of a small dense-tensor autograd core:
//!
//! - a discourse-aware hierarchical document classifier ([`dtransformer`])
//!   that encodes each sentence independently and attends over a sequence of
//!   discourse codes, and
//! - a style-mimic difference-score pipeline ([`stylemimic`]) that trains a
//!   sequence-to-sequence model to rewrite machine text in human style and
//!   classifies documents by how much the rewrite diverges from the input.
//!
//! Supporting modules cover corpus management ([`corpus`]), text processing
//! and corpus statistics ([`textproc`]), discourse-code tagging
//! ([`discourse`]), the neural core ([`neural`]), evaluation metrics and
//! harnesses ([`eval`]), and synthetic validation corpora ([`synth`]).
//!
//! Data-parallel inner loops (batch inference, statistics, cleaning, matrix
//! kernels) run on rayon when the `parallel` feature is enabled (the
//! default) and fall back to sequential loops without it. All parallel maps
//! preserve element order and all reductions are performed sequentially, so
//! results are byte-identical across thread counts.

pub mod corpus;
pub mod discourse;
pub mod dtransformer;
pub mod eval;
pub mod net;
pub mod neural;
pub mod parallel;
pub mod rng;
pub mod stylemimic;
pub mod synth;
pub mod textproc;
pub mod util;
