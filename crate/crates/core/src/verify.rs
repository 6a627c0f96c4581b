//! Self-check suite over seeded random instances.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::approx::{approx_topk, average_dot, ApproxParams};
use crate::bounds::{gap_certificate_combined, gap_certificate_per_embedding, observed_gap};
use crate::config::ComponentConfig;
use crate::decomposition::{decompose, to_mol_instance, DenseMatrix};
use crate::error::Result;
use crate::exact::exact_topk;
use crate::format::{decode_index, decode_queries, encode_index, encode_queries};
use crate::gating::{check_simplex, GatingFunction};
use crate::oracle::brute_force_topk;
use crate::result::Method;
use crate::score::{mol_score_batch, MolScorer};
use crate::workload::{generate, Distribution, WorkloadSpec};

#[derive(Debug, Clone, Default, Serialize)]
pub struct VerifyReport {
    pub seeds: usize,
    pub checks: usize,
    pub failures: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(what());
        }
    }
}

pub fn run_verify(seeds: Range<u64>) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    for seed in seeds {
        report.seeds += 1;
        verify_seed(seed, &mut report)?;
    }
    Ok(report)
}

fn verify_seed(seed: u64, report: &mut VerifyReport) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d6f_6c5f_7665_7269);
    let config = ComponentConfig::new(
        rng.random_range(1..=3),
        rng.random_range(1..=4),
        rng.random_range(2..=16),
        rng.random_bool(0.5),
    )?;
    let distribution = if rng.random_bool(0.5) {
        Distribution::Gaussian { mean: 0.0, std: 1.0 }
    } else {
        Distribution::Clustered {
            n_clusters: rng.random_range(2..=6),
            spread: 0.4,
        }
    };
    let spec = WorkloadSpec {
        seed,
        n_items: rng.random_range(50..=600),
        n_queries: 3,
        config,
        gate: GatingFunction::Uniform,
        distribution,
    };
    let workload = generate(&spec)?;
    let index = &workload.index;
    let p = config.components();

    let again = generate(&spec)?;
    report.check(encode_index(index)? == encode_index(&again.index)?, || {
        format!("seed {seed}: generation is not deterministic")
    });
    report.check(decode_index(&encode_index(index)?)? == *index, || {
        format!("seed {seed}: index file round trip changed the index")
    });
    report.check(decode_queries(&encode_queries(&workload.queries)?)? == workload.queries, || {
        format!("seed {seed}: query file round trip changed the queries")
    });

    let gates = [
        GatingFunction::Uniform,
        GatingFunction::softmax(0.2)?,
        GatingFunction::ArgmaxOneHot,
    ];
    for q in &workload.queries {
        for gate in &gates {
            let mut scorer = MolScorer::new(q, index, gate)?;
            for row in (0..index.n_items()).step_by(7) {
                let dots = scorer.dots(row)?.to_vec();
                let (score, _) = scorer.score_and_max_dot(row)?;
                let lo = dots.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = dots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let slack = 1e-12 * (1.0 + hi.abs().max(lo.abs()));
                report.check(score >= lo - slack && score <= hi + slack, || {
                    format!("seed {seed}: score {score} outside [{lo}, {hi}] ({})", gate.label())
                });
                let mut w = vec![0.0; p];
                gate.weights(q.id(), row, &dots, &mut w)?;
                report.check(check_simplex(&w).is_ok(), || format!("seed {seed}: {} weights off simplex", gate.label()));
                if matches!(gate, GatingFunction::Uniform) {
                    let mean = dots.iter().sum::<f64>() / p as f64;
                    let avg = average_dot(q, index, row)?;
                    report.check((avg - mean).abs() <= 1e-5 * mean.abs().max(1e-12), || {
                        format!("seed {seed}: materialized average {avg} != explicit {mean}")
                    });
                }
            }

            for k in [1, 10] {
                let truth = brute_force_topk(q, index, gate, k)?;
                let (exact, _) = exact_topk(q, index, gate, k)?;
                report.check(exact.item_ids == truth.item_ids, || {
                    format!("seed {seed}: exact != brute force ({}, k={k})", gate.label())
                });

                let per = approx_topk(q, index, gate, ApproxParams::new(Method::PerEmbedding { n: k }, k))?;
                let cert = gap_certificate_per_embedding(q, index, gate, k, k)?;
                let gap = observed_gap(&per, &truth)?;
                report.check(gap <= cert.bound + 1e-12, || {
                    format!("seed {seed}: per-embedding gap {gap} > bound {} ({})", cert.bound, gate.label())
                });
                if matches!(gate, GatingFunction::ArgmaxOneHot) {
                    report.check(per.item_ids == truth.item_ids, || {
                        format!("seed {seed}: argmax per-embedding(n=k) not exact, k={k}")
                    });
                }

                let comb = approx_topk(q, index, gate, ApproxParams::new(Method::Combined { n1: k, n2: 2 * k }, k))?;
                let ccert = gap_certificate_combined(q, index, gate, k, 2 * k, k)?;
                let cgap = observed_gap(&comb, &truth)?;
                report.check(cgap <= ccert.bound + 1e-12, || {
                    format!("seed {seed}: combined gap {cgap} > bound {}", ccert.bound)
                });

                if matches!(gate, GatingFunction::Uniform) {
                    let avg = approx_topk(q, index, gate, ApproxParams::new(Method::Average { n: k }, k))?;
                    report.check(avg.item_ids == truth.item_ids, || {
                        format!("seed {seed}: uniform average(n=k) not exact, k={k}")
                    });
                }
            }
        }
    }

    let (n, m) = (rng.random_range(2..=8), rng.random_range(2..=10));
    let d = rng.random_range(1..=n.min(m));
    let a = DenseMatrix::new(n, m, (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let dec = decompose(&a, d, 1e-9)?;
    let inst = to_mol_instance(&dec)?;
    let cols: Vec<usize> = (0..m).collect();
    let mut scores = Vec::with_capacity(n * m);
    for q in &inst.queries {
        scores.extend(mol_score_batch(q, &inst.index, &cols, &inst.gate)?);
    }
    let rep = dec.error_report(&a, &scores);
    report.check(rep.max_rel_error <= 1e-6, || {
        format!("seed {seed}: decomposition {n}x{m} d={d} error {}", rep.max_rel_error)
    });
    report.check(dec.pi.iter().all(|p| (0.0..=1.0).contains(p)), || {
        format!("seed {seed}: decomposition weights outside [0, 1]")
    });
    Ok(())
}
