//! Cross-lingual alignment of monolingual word embeddings and cross-lingual
//! word analogy evaluation.
//!
//! - [`embedding_store`]: word2vec text spaces, lookup, centering and normalization.
//! - [`linear_maps`]: least-squares, orthogonal and CCA maps between spaces.
//! - [`analogy_bench`]: analogy corpus, question generation, 3CosAdd answering, accuracy reports.
//! - [`pipeline`]: bilingual and multilingual experiments, grids, dictionary sweeps, synthetic fixtures.

pub mod analogy_bench;
pub mod embedding_store;
pub mod error;
pub mod linear_maps;
pub mod pipeline;

pub use analogy_bench::{
    answer_analogy, evaluate, generate_questions, parse_corpus, parse_dictionary, AnalogyCorpus, AnalogyQuestion,
    BilingualDictionary, Category, EvalReport, EvalSettings,
};
pub use embedding_store::{load_space, LoadOptions, PostProcessing, SemanticSpace};
pub use error::{Error, Result};
pub use linear_maps::{
    apply_map, build_aligned, fit_cca, fit_least_squares, fit_least_squares_gd, fit_orthogonal, AlignedMatrices,
    CcaBases, LinearMap, Method,
};
pub use pipeline::{generate_synthetic, Experiment, ExperimentConfig, ExperimentTag, Mode, SynthParams};
