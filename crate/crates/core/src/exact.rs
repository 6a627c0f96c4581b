//! Two-pass exact top-k retrieval.
//!
//! 1. For each of the `P` component pairs take the top-k items by component
//!    dot; their union is the first-pass candidate set `G`.
//! 2. `s_min` is the lowest MoL score within `G`.
//! 3. `G'` is the union over components of every item whose component dot
//!    is `>= s_min`.
//! 4. Brute-force MoL top-k within `G'`.
//!
//! Because a gated score is a convex combination of component dots, any item
//! scoring at least `s_min` has some component dot `>= s_min`, so `G'`
//! contains every true top-k item.

use serde::Serialize;

use crate::error::Result;
use crate::gating::GatingFunction;
use crate::index::ItemIndex;
use crate::kernel::dot;
use crate::oracle::{check_k, rerank, topk_rows};
use crate::query::QueryEmbeddings;
use crate::result::{Method, RetrievalResult};
use crate::score::MolScorer;

/// Per-query record of the two passes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactRunStats {
    pub s_min: f64,
    /// Range threshold actually applied (`s_min` minus rounding slack).
    pub threshold: f64,
    pub first_pass_candidates: usize,
    pub second_pass_candidates: usize,
}

/// Rounding slack subtracted from `s_min` before the range pass. A gated
/// sum can exceed its largest term by a few ulps; loosening the filter
/// keeps the containment argument valid in floating point.
pub fn filter_slack(s_min: f64) -> f64 {
    1e-9 * (1.0 + s_min.abs())
}

pub fn exact_topk(
    query: &QueryEmbeddings,
    index: &ItemIndex,
    gate: &GatingFunction,
    k: usize,
) -> Result<(RetrievalResult, ExactRunStats)> {
    check_k(k)?;
    let mut scorer = MolScorer::new(query, index, gate)?;
    let config = scorer.config();
    let n = index.n_items();
    let mut marks = vec![false; n];

    let mut first_pass = Vec::new();
    for a in 0..config.p_q {
        let qa = scorer.query_vector(a);
        for b in 0..config.p_x {
            for hit in topk_rows(qa, index.component(b), k) {
                if !marks[hit.row] {
                    marks[hit.row] = true;
                    first_pass.push(hit.row);
                }
            }
        }
    }

    let mut s_min = f64::INFINITY;
    for &row in &first_pass {
        s_min = s_min.min(scorer.score_unchecked(row)?);
    }
    // A tighter valid threshold is the k-th highest score in G rather than
    // the minimum; the minimum is kept as the documented rule.

    let threshold = if first_pass.is_empty() {
        f64::NEG_INFINITY
    } else {
        s_min - filter_slack(s_min)
    };

    marks.iter_mut().for_each(|m| *m = false);
    let mut second_pass = 0;
    for b in 0..config.p_x {
        let matrix = index.component(b);
        for (row, item) in matrix.chunks_exact(config.dim).enumerate() {
            if marks[row] {
                continue;
            }
            if (0..config.p_q).any(|a| dot(scorer.query_vector(a), item) >= threshold) {
                marks[row] = true;
                second_pass += 1;
            }
        }
    }

    let rows = marks.iter().enumerate().filter(|(_, m)| **m).map(|(row, _)| row);
    let mut result = rerank(&mut scorer, rows, k, Method::Exact)?;
    result.candidates_scored += first_pass.len();
    let stats = ExactRunStats {
        s_min,
        threshold,
        first_pass_candidates: first_pass.len(),
        second_pass_candidates: second_pass,
    };
    Ok((result, stats))
}
