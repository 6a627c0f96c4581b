//! Seeded synthetic workloads.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`, a portable stream cipher generator, and normal deviates
//! from `rand_distr::StandardNormal`. Every value is rounded through f32 so
//! generated indexes survive the on-disk f32 format bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::ComponentConfig;
use crate::error::{MolError, Result};
use crate::gating::GatingFunction;
use crate::index::ItemIndex;
use crate::query::QueryEmbeddings;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Distribution {
    /// Every coordinate i.i.d. `N(mean, std^2)`.
    Gaussian { mean: f64, std: f64 },
    /// Standard-normal cluster centers per component, each vector drawn
    /// around a random center with `N(0, spread^2)` noise.
    Clustered { n_clusters: usize, spread: f64 },
}

impl Default for Distribution {
    fn default() -> Self {
        Distribution::Gaussian { mean: 0.0, std: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub seed: u64,
    pub n_items: usize,
    pub n_queries: usize,
    pub config: ComponentConfig,
    #[serde(default = "default_gate")]
    pub gate: GatingFunction,
    #[serde(default)]
    pub distribution: Distribution,
}

fn default_gate() -> GatingFunction {
    GatingFunction::Uniform
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.n_items == 0 || self.n_queries == 0 {
            return Err(MolError::argument("n_items and n_queries must be >= 1"));
        }
        match self.distribution {
            Distribution::Gaussian { mean, std } => {
                if !(mean.is_finite() && std.is_finite() && std >= 0.0) {
                    return Err(MolError::argument("gaussian mean/std must be finite, std >= 0"));
                }
            }
            Distribution::Clustered { n_clusters, spread } => {
                if n_clusters == 0 || !(spread.is_finite() && spread >= 0.0) {
                    return Err(MolError::argument("clustered needs n_clusters >= 1 and finite spread >= 0"));
                }
            }
        }
        if matches!(self.gate, GatingFunction::Table(_)) {
            return Err(MolError::argument("workload gates must be rule-based, not tables"));
        }
        if let GatingFunction::SoftmaxDots { temperature } = self.gate {
            GatingFunction::softmax(temperature)?;
        }
        Ok(())
    }
}

/// Generated index and query set, plus the gate they are meant to be
/// scored with.
#[derive(Debug, Clone)]
pub struct Workload {
    pub index: ItemIndex,
    pub queries: Vec<QueryEmbeddings>,
    pub gate: GatingFunction,
}

struct Sampler {
    rng: ChaCha8Rng,
    distribution: Distribution,
    dim: usize,
    // [n_clusters][slots][dim]
    centers: Vec<f64>,
    slots: usize,
}

impl Sampler {
    fn normal(&mut self) -> f64 {
        self.rng.sample::<f64, _>(StandardNormal)
    }

    /// `count` component vectors for one entity.
    fn entity(&mut self, count: usize, out: &mut Vec<f64>) {
        match self.distribution {
            Distribution::Gaussian { mean, std } => {
                for _ in 0..count * self.dim {
                    let v = mean + std * self.normal();
                    out.push(v as f32 as f64);
                }
            }
            Distribution::Clustered { n_clusters, spread } => {
                let cluster = self.rng.random_range(0..n_clusters);
                for comp in 0..count {
                    let base = (cluster * self.slots + comp % self.slots) * self.dim;
                    for j in 0..self.dim {
                        let v = self.centers[base + j] + spread * self.normal();
                        out.push(v as f32 as f64);
                    }
                }
            }
        }
    }
}

pub fn generate(spec: &WorkloadSpec) -> Result<Workload> {
    spec.validate()?;
    let ComponentConfig { p_q, p_x, dim, normalized } = spec.config;
    let slots = p_q.max(p_x);
    let mut sampler = Sampler {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        distribution: spec.distribution,
        dim,
        centers: Vec::new(),
        slots,
    };
    if let Distribution::Clustered { n_clusters, .. } = spec.distribution {
        sampler.centers = (0..n_clusters * slots * dim).map(|_| sampler.normal()).collect();
    }

    let mut rows = Vec::with_capacity(spec.n_items * p_x * dim);
    for _ in 0..spec.n_items {
        sampler.entity(p_x, &mut rows);
    }
    let index = ItemIndex::from_rows(p_x, dim, normalized, (0..spec.n_items as u64).collect(), &rows)?;

    let mut queries = Vec::with_capacity(spec.n_queries);
    for id in 0..spec.n_queries {
        let mut values = Vec::with_capacity(p_q * dim);
        sampler.entity(p_q, &mut values);
        queries.push(QueryEmbeddings::new(id, p_q, dim, values)?);
    }
    Ok(Workload {
        index,
        queries,
        gate: spec.gate.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::{encode_index, encode_queries};

    fn spec(seed: u64) -> WorkloadSpec {
        WorkloadSpec {
            seed,
            n_items: 50,
            n_queries: 4,
            config: ComponentConfig::new(2, 3, 8, true).unwrap(),
            gate: GatingFunction::softmax(0.2).unwrap(),
            distribution: Distribution::Clustered { n_clusters: 4, spread: 0.3 },
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let (a, b) = (generate(&spec(7)).unwrap(), generate(&spec(7)).unwrap());
        assert_eq!(encode_index(&a.index).unwrap(), encode_index(&b.index).unwrap());
        assert_eq!(encode_queries(&a.queries).unwrap(), encode_queries(&b.queries).unwrap());
        let c = generate(&spec(8)).unwrap();
        assert_ne!(encode_index(&a.index).unwrap(), encode_index(&c.index).unwrap());
    }

    #[test]
    fn single_item_workload() {
        let mut s = spec(1);
        s.n_items = 1;
        s.distribution = Distribution::default();
        let w = generate(&s).unwrap();
        assert_eq!(w.index.n_items(), 1);
        assert_eq!(w.queries.len(), 4);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = spec(1);
        s.n_items = 0;
        assert!(generate(&s).is_err());
        let mut s = spec(1);
        s.distribution = Distribution::Gaussian { mean: f64::NAN, std: 1.0 };
        assert!(generate(&s).is_err());
        let mut s = spec(1);
        s.gate = GatingFunction::SoftmaxDots { temperature: 0.0 };
        assert!(generate(&s).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let json = r#"{"seed":3,"n_items":10,"n_queries":2,
            "config":{"p_q":8,"p_x":4,"dim":64,"normalized":true},
            "gate":{"type":"softmax_dots","temperature":0.2},
            "distribution":{"type":"gaussian","mean":0.0,"std":1.0}}"#;
        let s: WorkloadSpec = serde_json::from_str(json).unwrap();
        assert_eq!(s.config.components(), 32);
    }
}
