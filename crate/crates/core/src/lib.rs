//! Mixture-of-logits (MoL) retrieval.
//!
//! A MoL similarity scores a (query, item) pair as a gated convex
//! combination of `P = p_q * p_x` component dot products:
//!
//! ```text
//! phi(q, x) = sum_p pi_p(q, x) * <f_p(q), g_p(x)>
//! ```
//!
//! The crate answers top-k queries under that similarity with
//!
//! - [`oracle::brute_force_topk`], the full scan used as ground truth;
//! - [`exact::exact_topk`], a two-pass algorithm that prunes with per-component
//!   dot products and still returns the exact answer;
//! - [`approx::approx_topk`], candidate generation (per-embedding top-n,
//!   average-dot top-n, or both) followed by MoL re-ranking, with
//!   [`bounds`] certificates on how far the answer can be from exact.
//!
//! [`decomposition`] expresses an arbitrary matrix as a two-component MoL of
//! low-rank matrices and re-emits it as a runnable instance.

pub mod approx;
pub mod bounds;
pub mod config;
pub mod decomposition;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod format;
pub mod gating;
pub mod index;
pub mod kernel;
pub mod oracle;
pub mod query;
pub mod result;
pub mod score;
pub mod verify;
pub mod workload;

pub use approx::{approx_topk, approx_topk_batch, ApproxParams};
pub use bounds::{observed_gap, GapCertificate};
pub use config::ComponentConfig;
pub use decomposition::{decompose, to_mol_instance, DenseMatrix, MolDecomposition};
pub use error::{MolError, Result};
pub use exact::{exact_topk, ExactRunStats};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport};
pub use gating::{GateTable, GatingFunction};
pub use index::{IndexOptions, ItemIndex};
pub use oracle::brute_force_topk;
pub use query::QueryEmbeddings;
pub use result::{Method, RetrievalResult};
pub use score::{component_dots, mol_score, mol_score_batch, MolScorer};
pub use workload::{generate, Distribution, Workload, WorkloadSpec};
