//! Shared fixtures for the retrieval benchmarks.

use mol_core::{generate, ComponentConfig, Distribution, GatingFunction, Workload, WorkloadSpec};

/// A clustered, normalized workload with a softmax gate.
pub fn clustered(n_items: usize, n_queries: usize, p_q: usize, p_x: usize, dim: usize) -> Workload {
    generate(&WorkloadSpec {
        seed: 0xBE7C,
        n_items,
        n_queries,
        config: ComponentConfig::new(p_q, p_x, dim, true).expect("valid component config"),
        gate: GatingFunction::SoftmaxDots { temperature: 0.2 },
        distribution: Distribution::Clustered {
            n_clusters: 64,
            spread: 0.7,
        },
    })
    .expect("workload generation")
}
