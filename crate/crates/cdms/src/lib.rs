//! Multi-level transfer subspace learning for temporal segmentation.
//!
//! The pipeline factorizes nonnegative source and target feature matrices
//! into a deep NMF layer stack, learns per-layer simplex-constrained
//! coefficient matrices by ADMM (with an HSIC diversity term across layers
//! and a temporal graph regularizer), fuses the target coefficients into an
//! affinity matrix, and clusters it with normalized spectral clustering.
//!
//! ```
//! use cdms::synth::SynthSpec;
//! use cdms::io::SolverConfig;
//!
//! let spec = SynthSpec { k: 2, d: 12, subspace_dim: 2, n_segments_source: 2,
//!     n_segments_target: 2, seg_len_range: (6, 8), domain_shift: 0.05,
//!     noise_sigma: 0.01, seed: 1 };
//! let inst = cdms::synth::generate_transfer_instance(&spec).unwrap();
//! assert_eq!(inst.source.rows(), 12);
//! assert_eq!(inst.source.cols(), inst.source_labels.len());
//! ```

pub mod affinity;
pub mod error;
pub mod graph;
pub mod hsic;
pub mod io;
pub mod metrics;
pub mod nmf;
pub mod prox;
pub mod solver;
pub mod synth;

/// The book chapters from `book/src`, included here so every snippet in
/// the guide is compiled and run by `cargo test`.
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/getting-started.md")]
    pub mod getting_started {}
    #[doc = include_str!("../../../book/src/model.md")]
    pub mod model {}
    #[doc = include_str!("../../../book/src/solver.md")]
    pub mod solver {}
    #[doc = include_str!("../../../book/src/graphs-and-kernels.md")]
    pub mod graphs_and_kernels {}
    #[doc = include_str!("../../../book/src/clustering-and-metrics.md")]
    pub mod clustering_and_metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
    #[doc = include_str!("../../../book/src/file-formats.md")]
    pub mod file_formats {}
}

pub use error::CdmsError;

/// Shared result alias.
pub type Result<T> = std::result::Result<T, CdmsError>;
