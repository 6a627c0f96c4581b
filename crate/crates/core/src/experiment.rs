//! Config-driven comparison of retrieval methods against the brute-force
//! answer: relative hit rate, batched latency, candidate counts and gap
//! certificates per (method, k).

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

use crate::approx::{approx_topk, approx_topk_batch, ApproxParams};
use crate::bounds::{gap_certificate_combined, gap_certificate_per_embedding};
use crate::error::{MolError, Result};
use crate::exact::exact_topk;
use crate::format::{read_index, read_queries};
use crate::gating::GatingFunction;
use crate::index::ItemIndex;
use crate::oracle::brute_force_topk;
use crate::query::QueryEmbeddings;
use crate::result::{Method, RetrievalResult};
use crate::workload::{generate, Workload, WorkloadSpec};

/// Either a generator spec or a pair of workload files. In JSON the two are
/// told apart by the presence of `index_path` / `queries_path`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum WorkloadSource {
    Generate(WorkloadSpec),
    Files { index_path: PathBuf, queries_path: PathBuf },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadFiles {
    index_path: PathBuf,
    queries_path: PathBuf,
}

impl<'de> Deserialize<'de> for WorkloadSource {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        let is_files = value.get("index_path").is_some() || value.get("queries_path").is_some();
        if is_files {
            let files: WorkloadFiles = serde_json::from_value(value).map_err(D::Error::custom)?;
            Ok(WorkloadSource::Files {
                index_path: files.index_path,
                queries_path: files.queries_path,
            })
        } else {
            serde_json::from_value(value).map(WorkloadSource::Generate).map_err(D::Error::custom)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub workload: WorkloadSource,
    /// Overrides the generated workload's gate; defaults to uniform for
    /// file workloads.
    #[serde(default)]
    pub gate: Option<GatingFunction>,
    pub k_values: Vec<usize>,
    pub methods: Vec<Method>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_runs")]
    pub warm_runs: usize,
    #[serde(default = "default_runs")]
    pub measured_runs: usize,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

fn default_batch_size() -> usize {
    32
}

fn default_runs() -> usize {
    20
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() {
            return Err(MolError::config("k_values must not be empty"));
        }
        if self.k_values[0] == 0 || self.k_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MolError::config("k_values must be >= 1 and strictly ascending"));
        }
        if self.methods.is_empty() {
            return Err(MolError::config("methods must not be empty"));
        }
        if self.batch_size == 0 {
            return Err(MolError::config("batch_size must be >= 1"));
        }
        if self.measured_runs == 0 {
            return Err(MolError::config("measured_runs must be >= 1"));
        }
        if let WorkloadSource::Generate(spec) = &self.workload {
            spec.validate()?;
        }
        Ok(())
    }

    /// Oversampling sweep mirroring the usual parameter grid.
    pub fn default_methods() -> Vec<Method> {
        let mut methods = vec![Method::BruteForce];
        methods.extend([5, 10, 50, 100].map(|n| Method::PerEmbedding { n }));
        methods.extend([200, 500, 1000, 2000, 4000].map(|n| Method::Average { n }));
        methods.extend([(5, 200), (50, 500), (100, 1000)].map(|(n1, n2)| Method::Combined { n1, n2 }));
        methods
    }
}

/// One (method, k) line of a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub method: String,
    pub params: String,
    pub k: usize,
    pub relative_hr: f64,
    pub latency_ms_mean: f64,
    pub latency_ms_std: f64,
    pub candidates_scored_mean: f64,
    /// Mean certificate bound; `None` for methods without one.
    pub gap_bound_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub n_items: usize,
    pub n_queries: usize,
    pub gate: String,
    pub rows: Vec<ReportRow>,
    /// (method, k) pairs whose budget cannot cover k.
    pub skipped: Vec<String>,
}

impl ExperimentReport {
    pub fn row(&self, method: Method, k: usize) -> Option<&ReportRow> {
        let (name, params) = (method.name(), method.params());
        self.rows.iter().find(|r| r.method == name && r.params == params && r.k == k)
    }
}

pub fn load_workload(config: &ExperimentConfig) -> Result<Workload> {
    let mut workload = match &config.workload {
        WorkloadSource::Generate(spec) => generate(spec)?,
        WorkloadSource::Files { index_path, queries_path } => Workload {
            index: read_index(index_path)
                .map_err(|e| MolError::config(format!("workload.index_path {}: {e}", index_path.display())))?,
            queries: read_queries(queries_path)
                .map_err(|e| MolError::config(format!("workload.queries_path {}: {e}", queries_path.display())))?,
            gate: GatingFunction::Uniform,
        },
    };
    if let Some(gate) = &config.gate {
        workload.gate = gate.clone();
    }
    Ok(workload)
}

/// Runs one method for one query.
pub fn run_method(
    method: Method,
    query: &QueryEmbeddings,
    index: &ItemIndex,
    gate: &GatingFunction,
    k: usize,
) -> Result<RetrievalResult> {
    match method {
        Method::BruteForce => brute_force_topk(query, index, gate, k),
        Method::Exact => exact_topk(query, index, gate, k).map(|(r, _)| r),
        _ => approx_topk(query, index, gate, ApproxParams::new(method, k)),
    }
}

/// Runs one method for a batch of queries. Approximate methods share the
/// average-dot scan across the batch; the others run per query in parallel.
pub fn run_method_batch(
    method: Method,
    queries: &[QueryEmbeddings],
    index: &ItemIndex,
    gate: &GatingFunction,
    k: usize,
) -> Result<Vec<RetrievalResult>> {
    match method {
        Method::BruteForce | Method::Exact => queries.par_iter().map(|q| run_method(method, q, index, gate, k)).collect(),
        _ => approx_topk_batch(queries, index, gate, ApproxParams::new(method, k)),
    }
}

/// Fraction of `truth` recovered by `result`.
pub fn relative_hit_rate(result: &RetrievalResult, truth: &[u64]) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    let hits = truth.iter().filter(|id| result.item_ids.contains(id)).count();
    hits as f64 / truth.len() as f64
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn budget_covers(method: Method, k: usize, components: usize) -> bool {
    match method {
        Method::BruteForce | Method::Exact => true,
        _ => ApproxParams::new(method, k).validate(components).is_ok(),
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let workload = load_workload(config)?;
    run_on_workload(config, &workload)
}

/// Runs `config`'s methods and k values on an already loaded workload.
pub fn run_on_workload(config: &ExperimentConfig, workload: &Workload) -> Result<ExperimentReport> {
    config.validate()?;
    let Workload { index, queries, gate } = workload;
    if queries.is_empty() {
        return Err(MolError::config("workload has no queries"));
    }
    let components = queries[0].config_with(index)?.components();
    let max_k = *config.k_values.last().expect("validated non-empty");

    let truth: Vec<Vec<u64>> = queries
        .par_iter()
        .map(|q| brute_force_topk(q, index, gate, max_k).map(|r| r.item_ids))
        .collect::<Result<_>>()?;

    let mut methods = config.methods.clone();
    methods.sort();
    methods.dedup();

    let batches: Vec<&[QueryEmbeddings]> = queries.chunks(config.batch_size).collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for &method in &methods {
        for &k in &config.k_values {
            if !budget_covers(method, k, components) {
                skipped.push(format!("{method} k={k}"));
                continue;
            }
            let mut results = Vec::with_capacity(queries.len());
            for batch in &batches {
                results.extend(run_method_batch(method, batch, index, gate, k)?);
            }
            let hr: f64 = results
                .iter()
                .zip(&truth)
                .map(|(r, t)| relative_hit_rate(r, &t[..k.min(t.len())]))
                .sum::<f64>()
                / results.len() as f64;
            let candidates = results.iter().map(|r| r.candidates_scored as f64).sum::<f64>() / results.len() as f64;

            let gap_bound_mean = match method {
                Method::BruteForce | Method::Exact => Some(0.0),
                Method::Average { .. } => None,
                Method::PerEmbedding { n } => Some(mean_bound(queries, |q| {
                    gap_certificate_per_embedding(q, index, gate, n, k).map(|c| c.bound)
                })?),
                Method::Combined { n1, n2 } => Some(mean_bound(queries, |q| {
                    gap_certificate_combined(q, index, gate, n1, n2, k).map(|c| c.bound)
                })?),
            };

            let mut latencies = Vec::with_capacity(config.measured_runs);
            for run in 0..config.warm_runs + config.measured_runs {
                let batch = batches[run % batches.len()];
                let start = Instant::now();
                let out = run_method_batch(method, batch, index, gate, k)?;
                let elapsed = start.elapsed().as_secs_f64() * 1e3;
                std::hint::black_box(out);
                if run >= config.warm_runs {
                    latencies.push(elapsed);
                }
            }
            let (latency_ms_mean, latency_ms_std) = mean_std(&latencies);

            rows.push(ReportRow {
                method: method.name().to_string(),
                params: method.params(),
                k,
                relative_hr: hr,
                latency_ms_mean,
                latency_ms_std,
                candidates_scored_mean: candidates,
                gap_bound_mean,
            });
        }
    }

    Ok(ExperimentReport {
        n_items: index.n_items(),
        n_queries: queries.len(),
        gate: gate.label(),
        rows,
        skipped,
    })
}

fn mean_bound(queries: &[QueryEmbeddings], f: impl Fn(&QueryEmbeddings) -> Result<f64> + Sync + Send) -> Result<f64> {
    let bounds: Vec<f64> = queries.par_iter().map(f).collect::<Result<_>>()?;
    Ok(bounds.iter().sum::<f64>() / bounds.len() as f64)
}
