//! Two-stage approximate retrieval: dot-product candidate generation, then
//! MoL re-ranking of the candidates.
//!
//! Candidate generators:
//! - per embedding: union over the `P` component pairs of the top-`n` items
//!   by that pair's dot product;
//! - average: top-`n` items by the mean of all `P` component dots, computed
//!   as a single dot between the query's component mean and the item's
//!   materialized component mean;
//! - combined: union of the two.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MolError, Result};
use crate::gating::GatingFunction;
use crate::index::ItemIndex;
use crate::kernel::{dot, Ranked, TopK};
use crate::oracle::{check_k, rerank, topk_rows};
use crate::query::QueryEmbeddings;
use crate::result::{Method, RetrievalResult};
use crate::score::MolScorer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApproxParams {
    pub method: Method,
    pub k: usize,
}

impl ApproxParams {
    pub fn new(method: Method, k: usize) -> Self {
        Self { method, k }
    }

    /// Checks the candidate budget against `k` for `components` pairs.
    pub fn validate(&self, components: usize) -> Result<()> {
        check_k(self.k)?;
        let k = self.k;
        match self.method {
            Method::PerEmbedding { n } => {
                if n == 0 || n.saturating_mul(components) < k {
                    return Err(MolError::argument(format!(
                        "per-embedding budget n={n} with P={components} cannot cover k={k}"
                    )));
                }
            }
            Method::Average { n } => {
                if n < k {
                    return Err(MolError::argument(format!("average budget n={n} is below k={k}")));
                }
            }
            Method::Combined { n1, n2 } => {
                if n1 + n2 == 0 || n1.saturating_mul(components).saturating_add(n2) < k {
                    return Err(MolError::argument(format!(
                        "combined budget n1={n1}, n2={n2} with P={components} cannot cover k={k}"
                    )));
                }
            }
            Method::BruteForce | Method::Exact => {
                return Err(MolError::argument(format!("{} is not an approximate method", self.method)));
            }
        }
        Ok(())
    }
}

/// Top-`n` hits of every component pair, in `(p_q, p_x)` row-major order.
pub(crate) fn per_component_topk(scorer: &MolScorer<'_>, n: usize) -> Vec<Vec<Ranked>> {
    let config = scorer.config();
    let index = scorer.index();
    let mut lists = Vec::with_capacity(config.components());
    for a in 0..config.p_q {
        let qa = scorer.query_vector(a);
        for b in 0..config.p_x {
            lists.push(topk_rows(qa, index.component(b), n));
        }
    }
    lists
}

fn union_rows(lists: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let mut rows: Vec<usize> = lists.into_iter().collect();
    rows.sort_unstable();
    rows.dedup();
    rows
}

/// Counts of what the average-dot scan touched.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ScanStats {
    pub items_scanned: usize,
    /// Materialized scalars read while scoring items.
    pub scalars_read: usize,
}

/// Query-side factor of the average identity: the component mean of the
/// query's scoring vectors.
fn query_mean(query: &QueryEmbeddings, normalized: bool) -> Result<Vec<f64>> {
    let scale = 1.0 / query.p_q() as f64;
    Ok(query.sum_vector(normalized)?.iter().map(|v| v * scale).collect())
}

/// Average of all `P` component dots of `row`, through the materialized
/// means: `<mean_a f_a(q), mean_b g_b(x)>`.
pub fn average_dot(query: &QueryEmbeddings, index: &ItemIndex, row: usize) -> Result<f64> {
    let config = query.config_with(index)?;
    let means = index.mean_vectors()?;
    if row >= index.n_items() {
        return Err(MolError::argument(format!("item row {row} out of range")));
    }
    let q = query_mean(query, config.normalized)?;
    Ok(dot(&q, &means[row * config.dim..][..config.dim]))
}

const SCAN_BLOCK: usize = 512;

fn average_topk(query: &QueryEmbeddings, index: &ItemIndex, n: usize) -> Result<(Vec<Ranked>, ScanStats)> {
    let mut out = average_topk_batch(std::slice::from_ref(query), index, n)?;
    Ok(out.pop().expect("one query in, one list out"))
}

/// Pushes the dot of `q` with every `dim`-long item of `block` into `top`,
/// rows numbered from `base`. `D` is the dimension when known at compile
/// time (so the kernel unrolls), or 0 for any length.
#[inline(always)]
fn scan_block<const D: usize>(q: &[f64], block: &[f64], base: usize, top: &mut TopK) {
    let dim = if D == 0 { q.len() } else { D };
    let q = &q[..dim];
    let mut floor = top.floor();
    for (i, item) in block.chunks_exact(dim).enumerate() {
        let score = dot(q, item);
        if score >= floor {
            let row = base + i;
            top.push(Ranked { score, key: row as u64, row });
            floor = top.floor();
        }
    }
}

/// [`scan_block`] for two queries sharing each item load.
#[inline(always)]
fn scan_block_pair<const D: usize>(q: [&[f64]; 2], block: &[f64], base: usize, top: [&mut TopK; 2]) {
    let dim = if D == 0 { q[0].len() } else { D };
    let (qa, qb) = (&q[0][..dim], &q[1][..dim]);
    let [ta, tb] = top;
    let (mut fa, mut fb) = (ta.floor(), tb.floor());
    for (i, item) in block.chunks_exact(dim).enumerate() {
        let (sa, sb) = (dot(qa, item), dot(qb, item));
        if sa >= fa {
            let row = base + i;
            ta.push(Ranked { score: sa, key: row as u64, row });
            fa = ta.floor();
        }
        if sb >= fb {
            let row = base + i;
            tb.push(Ranked { score: sb, key: row as u64, row });
            fb = tb.floor();
        }
    }
}

fn scan_dispatch(q: &[f64], block: &[f64], base: usize, top: &mut TopK) {
    match q.len() {
        1 => scan_block::<1>(q, block, base, top),
        2 => scan_block::<2>(q, block, base, top),
        4 => scan_block::<4>(q, block, base, top),
        8 => scan_block::<8>(q, block, base, top),
        16 => scan_block::<16>(q, block, base, top),
        32 => scan_block::<32>(q, block, base, top),
        64 => scan_block::<64>(q, block, base, top),
        _ => scan_block::<0>(q, block, base, top),
    }
}

fn scan_dispatch_pair(q: [&[f64]; 2], block: &[f64], base: usize, top: [&mut TopK; 2]) {
    match q[0].len() {
        1 => scan_block_pair::<1>(q, block, base, top),
        2 => scan_block_pair::<2>(q, block, base, top),
        4 => scan_block_pair::<4>(q, block, base, top),
        8 => scan_block_pair::<8>(q, block, base, top),
        16 => scan_block_pair::<16>(q, block, base, top),
        32 => scan_block_pair::<32>(q, block, base, top),
        64 => scan_block_pair::<64>(q, block, base, top),
        _ => scan_block_pair::<0>(q, block, base, top),
    }
}

/// Average-dot top-`n` for several queries in one pass over the materialized
/// means, so each block of item means is loaded once for the whole batch.
fn average_topk_batch(queries: &[QueryEmbeddings], index: &ItemIndex, n: usize) -> Result<Vec<(Vec<Ranked>, ScanStats)>> {
    let means = index.mean_vectors()?;
    let dim = index.dim();
    let qs: Vec<Vec<f64>> = queries
        .iter()
        .map(|q| query_mean(q, q.config_with(index)?.normalized))
        .collect::<Result<_>>()?;
    let mut tops: Vec<TopK> = queries.iter().map(|_| TopK::new(n)).collect();
    for (b, block) in means.chunks(SCAN_BLOCK * dim).enumerate() {
        let base = b * SCAN_BLOCK;
        let mut pairs = tops.chunks_exact_mut(2);
        let mut i = 0;
        for pair in &mut pairs {
            let [ta, tb] = pair else { unreachable!() };
            scan_dispatch_pair([&qs[i], &qs[i + 1]], block, base, [ta, tb]);
            i += 2;
        }
        if let [last] = pairs.into_remainder() {
            scan_dispatch(&qs[i], block, base, last);
        }
    }
    let stats = ScanStats {
        items_scanned: index.n_items(),
        scalars_read: means.len(),
    };
    Ok(tops.into_iter().map(|top| (top.into_sorted(), stats)).collect())
}

pub fn candidates_per_embedding(query: &QueryEmbeddings, index: &ItemIndex, n: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(MolError::argument("n must be >= 1"));
    }
    let scorer = MolScorer::new(query, index, &GatingFunction::Uniform)?;
    let lists = per_component_topk(&scorer, n);
    Ok(union_rows(lists.into_iter().flatten().map(|r| r.row)))
}

pub fn candidates_average(query: &QueryEmbeddings, index: &ItemIndex, n: usize) -> Result<Vec<usize>> {
    Ok(candidates_average_with_stats(query, index, n)?.0)
}

/// [`candidates_average`] plus a count of the materialized values read.
pub fn candidates_average_with_stats(
    query: &QueryEmbeddings,
    index: &ItemIndex,
    n: usize,
) -> Result<(Vec<usize>, ScanStats)> {
    if n == 0 {
        return Err(MolError::argument("n must be >= 1"));
    }
    let (top, stats) = average_topk(query, index, n)?;
    Ok((union_rows(top.into_iter().map(|r| r.row)), stats))
}

pub fn candidates_combined(query: &QueryEmbeddings, index: &ItemIndex, n1: usize, n2: usize) -> Result<Vec<usize>> {
    if n1 + n2 == 0 {
        return Err(MolError::argument("n1 + n2 must be >= 1"));
    }
    let scorer = MolScorer::new(query, index, &GatingFunction::Uniform)?;
    combined_rows(&scorer, query, index, n1, n2)
}

fn combined_rows(
    scorer: &MolScorer<'_>,
    query: &QueryEmbeddings,
    index: &ItemIndex,
    n1: usize,
    n2: usize,
) -> Result<Vec<usize>> {
    let mut rows = Vec::new();
    if n1 > 0 {
        rows.extend(per_component_topk(scorer, n1).into_iter().flatten().map(|r| r.row));
    }
    if n2 > 0 {
        rows.extend(average_topk(query, index, n2)?.0.into_iter().map(|r| r.row));
    }
    Ok(union_rows(rows))
}

/// Candidate rows for an approximate method, deduplicated and ascending.
pub(crate) fn candidates(scorer: &MolScorer<'_>, query: &QueryEmbeddings, index: &ItemIndex, method: Method) -> Result<Vec<usize>> {
    match method {
        Method::PerEmbedding { n } => combined_rows(scorer, query, index, n, 0),
        Method::Average { n } => combined_rows(scorer, query, index, 0, n),
        Method::Combined { n1, n2 } => combined_rows(scorer, query, index, n1, n2),
        Method::BruteForce | Method::Exact => Err(MolError::argument(format!("{method} is not an approximate method"))),
    }
}

pub fn approx_topk(
    query: &QueryEmbeddings,
    index: &ItemIndex,
    gate: &GatingFunction,
    params: ApproxParams,
) -> Result<RetrievalResult> {
    let mut scorer = MolScorer::new(query, index, gate)?;
    params.validate(scorer.config().components())?;
    let rows = candidates(&scorer, query, index, params.method)?;
    rerank(&mut scorer, rows, params.k, params.method)
}

/// [`approx_topk`] for a batch of queries. The average-dot stage shares one
/// pass over the item means; results are identical to per-query calls.
pub fn approx_topk_batch(
    queries: &[QueryEmbeddings],
    index: &ItemIndex,
    gate: &GatingFunction,
    params: ApproxParams,
) -> Result<Vec<RetrievalResult>> {
    let (n1, n2) = match params.method {
        Method::PerEmbedding { n } => (n, 0),
        Method::Average { n } => (0, n),
        Method::Combined { n1, n2 } => (n1, n2),
        Method::BruteForce | Method::Exact => (0, 0),
    };
    let mut scorers = Vec::with_capacity(queries.len());
    for q in queries {
        let scorer = MolScorer::new(q, index, gate)?;
        params.validate(scorer.config().components())?;
        scorers.push(scorer);
    }
    let averages = if n2 > 0 { average_topk_batch(queries, index, n2)? } else { Vec::new() };
    scorers
        .into_par_iter()
        .enumerate()
        .map(|(i, mut scorer)| {
            let mut rows = Vec::new();
            if n1 > 0 {
                rows.extend(per_component_topk(&scorer, n1).into_iter().flatten().map(|r| r.row));
            }
            if let Some((avg, _)) = averages.get(i) {
                rows.extend(avg.iter().map(|r| r.row));
            }
            rerank(&mut scorer, union_rows(rows), params.k, params.method)
        })
        .collect()
}
