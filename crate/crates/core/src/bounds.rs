//! Computable upper bounds on the score gap of approximate results, and the
//! observed gap against the brute-force answer.
//!
//! The gap of an approximate top-k is `S' - S`, where `S` is the lowest
//! score it returned and `S'` the best score of a true top-k item it missed.
//! For candidate sets built from per-component top-`n` lists, every item
//! outside the lists has each component dot at most `D_p`, the `n`-th
//! highest dot of component `p`. A gated score never exceeds its largest
//! component dot, so `max_p D_p` dominates the score of anything that was
//! not retrieved.

use serde::Serialize;

use crate::approx::{candidates, per_component_topk};
use crate::error::{MolError, Result};
use crate::gating::{GateTable, GatingFunction};
use crate::index::ItemIndex;
use crate::kernel::{Ranked, TopK};
use crate::query::QueryEmbeddings;
use crate::result::{Method, RetrievalResult};
use crate::score::MolScorer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapCertificate {
    /// k-th highest MoL score among the retrieved candidates (the lowest
    /// one when fewer than k were retrieved).
    pub s_min: f64,
    /// Upper bound on the MoL score of any item that was not retrieved;
    /// `-inf` when nothing was left out.
    pub s_prime_upper: f64,
    /// `s_prime_upper - s_min` before clamping.
    pub raw_bound: f64,
    /// `max(0, raw_bound)`.
    pub bound: f64,
    pub candidates: usize,
}

impl GapCertificate {
    fn new(s_min: f64, s_prime_upper: f64, candidates: usize) -> Self {
        let raw_bound = s_prime_upper - s_min;
        Self {
            s_min,
            s_prime_upper,
            raw_bound,
            bound: raw_bound.max(0.0),
            candidates,
        }
    }
}

fn kth_score(scorer: &mut MolScorer<'_>, rows: &[usize], k: usize) -> Result<f64> {
    let mut top = TopK::new(k);
    for &row in rows {
        top.push(Ranked {
            score: scorer.score_unchecked(row)?,
            key: scorer.index().item_id(row),
            row,
        });
    }
    Ok(top.into_sorted().last().map_or(f64::INFINITY, |r| r.score))
}

/// `max_p D_p` for per-component lists of depth `n`.
fn nth_dot_bound(lists: &[Vec<Ranked>], n: usize, n_items: usize) -> f64 {
    if n >= n_items {
        return f64::NEG_INFINITY;
    }
    lists
        .iter()
        .map(|l| l[n - 1].score)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn gap_certificate_per_embedding(
    query: &QueryEmbeddings,
    index: &ItemIndex,
    gate: &GatingFunction,
    n: usize,
    k: usize,
) -> Result<GapCertificate> {
    let mut scorer = MolScorer::new(query, index, gate)?;
    let p = scorer.config().components();
    if k == 0 || n == 0 || n.saturating_mul(p) < k {
        return Err(MolError::argument(format!("per-embedding budget n={n} with P={p} cannot cover k={k}")));
    }
    let rows = candidates(&scorer, query, index, Method::PerEmbedding { n })?;
    let s_min = kth_score(&mut scorer, &rows, k)?;
    let lists = per_component_topk(&scorer, n);
    Ok(GapCertificate::new(s_min, nth_dot_bound(&lists, n, index.n_items()), rows.len()))
}

pub fn gap_certificate_combined(
    query: &QueryEmbeddings,
    index: &ItemIndex,
    gate: &GatingFunction,
    n1: usize,
    n2: usize,
    k: usize,
) -> Result<GapCertificate> {
    let mut scorer = MolScorer::new(query, index, gate)?;
    let p = scorer.config().components();
    if k == 0 || n1 + n2 == 0 || n1.saturating_mul(p).saturating_add(n2) < k {
        return Err(MolError::argument(format!(
            "combined budget n1={n1}, n2={n2} with P={p} cannot cover k={k}"
        )));
    }
    let rows = candidates(&scorer, query, index, Method::Combined { n1, n2 })?;
    let s_min = kth_score(&mut scorer, &rows, k)?;
    let s_prime_upper = if n1 > 0 {
        nth_dot_bound(&per_component_topk(&scorer, n1), n1, index.n_items())
    } else if rows.len() >= index.n_items() {
        f64::NEG_INFINITY
    } else {
        // no per-component pruning information: fall back to the largest
        // dot of any component
        nth_dot_bound(&per_component_topk(&scorer, 1), 1, usize::MAX)
    };
    Ok(GapCertificate::new(s_min, s_prime_upper, rows.len()))
}

/// `max(0, S' - S)`: `S` is the lowest score in `approx`, `S'` the best
/// score of an `oracle` item missing from `approx`.
pub fn observed_gap(approx: &RetrievalResult, oracle: &RetrievalResult) -> Result<f64> {
    if approx.k != oracle.k {
        return Err(MolError::argument(format!(
            "results were computed for different k ({} vs {})",
            approx.k, oracle.k
        )));
    }
    let missing_best = oracle
        .item_ids
        .iter()
        .zip(&oracle.scores)
        .filter(|(id, _)| !approx.item_ids.contains(id))
        .map(|(_, s)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    if missing_best == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let worst = approx.min_score().unwrap_or(f64::NEG_INFINITY);
    Ok((missing_best - worst).max(0.0))
}

/// Instance on which the per-embedding certificate is nearly tight.
pub struct TightnessFixture {
    pub query: QueryEmbeddings,
    pub index: ItemIndex,
    pub gate: GatingFunction,
    pub n: usize,
    pub k: usize,
}

/// Builds a two-component instance where per-embedding retrieval with
/// budget `n` and `k = 1` misses the true best item by `1 - margin`, while
/// the certificate bound is exactly 1.
///
/// Each component has `n` leader items with dot 1 on that component and 0
/// on the other; the gate puts all weight on the leader's zero component.
/// One hidden item has dot `1 - margin` on both components, just below every
/// leader, and its gate is one-hot.
pub fn tightness_fixture(n: usize, margin: f64) -> Result<TightnessFixture> {
    if n == 0 || !(margin > 0.0 && margin < 1.0) {
        return Err(MolError::argument("tightness fixture needs n >= 1 and margin in (0, 1)"));
    }
    let n_items = 2 * n + 1;
    let mut rows = Vec::with_capacity(n_items * 2);
    let mut weights = Vec::with_capacity(n_items * 2);
    for comp in 0..2 {
        for _ in 0..n {
            let (g, w) = if comp == 0 { ([1.0, 0.0], [0.0, 1.0]) } else { ([0.0, 1.0], [1.0, 0.0]) };
            rows.extend_from_slice(&g);
            weights.extend_from_slice(&w);
        }
    }
    rows.extend_from_slice(&[1.0 - margin, 1.0 - margin]);
    weights.extend_from_slice(&[1.0, 0.0]);
    let index = ItemIndex::from_rows(2, 1, false, (0..n_items as u64).collect(), &rows)?;
    let query = QueryEmbeddings::new(0, 1, 1, vec![1.0])?;
    let gate = GatingFunction::Table(GateTable::new(1, n_items, 2, weights)?);
    Ok(TightnessFixture { query, index, gate, n, k: 1 })
}
