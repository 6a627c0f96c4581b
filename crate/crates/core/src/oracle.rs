//! Linear-scan ground truth: full MoL evaluation plus the plain dot-product
//! sub-queries (top-k and range) used by the two-pass exact algorithm.

use crate::error::{MolError, Result};
use crate::gating::GatingFunction;
use crate::index::ItemIndex;
use crate::kernel::{dot, Ranked, TopK};
use crate::query::QueryEmbeddings;
use crate::result::{Method, RetrievalResult};
use crate::score::MolScorer;

fn check_matrix(query: &[f64], vectors: &[f64]) -> Result<usize> {
    let dim = query.len();
    if dim == 0 {
        return Err(MolError::config("query vector is empty"));
    }
    if !vectors.len().is_multiple_of(dim) {
        return Err(MolError::config(format!(
            "matrix of {} values is not a whole number of {dim}-dim rows",
            vectors.len()
        )));
    }
    Ok(vectors.len() / dim)
}

pub(crate) fn topk_rows(query: &[f64], vectors: &[f64], k: usize) -> Vec<Ranked> {
    let mut top = TopK::new(k);
    for (row, v) in vectors.chunks_exact(query.len()).enumerate() {
        top.push(Ranked {
            score: dot(query, v),
            key: row as u64,
            row,
        });
    }
    top.into_sorted()
}

/// Top-`k` rows of `vectors` (`[n][query.len()]`) by dot product with
/// `query`; ties go to the lower row index.
pub fn topk_dot_product(query: &[f64], vectors: &[f64], k: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    check_matrix(query, vectors)?;
    if k == 0 {
        return Err(MolError::argument("k must be >= 1"));
    }
    Ok(topk_rows(query, vectors, k).into_iter().map(|r| (r.row, r.score)).unzip())
}

/// All rows whose dot product with `query` is `>= threshold`, ascending.
pub fn range_dot_product(query: &[f64], vectors: &[f64], threshold: f64) -> Result<Vec<usize>> {
    check_matrix(query, vectors)?;
    Ok(vectors
        .chunks_exact(query.len())
        .enumerate()
        .filter(|(_, v)| dot(query, v) >= threshold)
        .map(|(row, _)| row)
        .collect())
}

/// MoL-scores every row in `rows` and keeps the best `k`.
pub(crate) fn rerank(
    scorer: &mut MolScorer<'_>,
    rows: impl IntoIterator<Item = usize>,
    k: usize,
    method: Method,
) -> Result<RetrievalResult> {
    let index = scorer.index();
    let mut top = TopK::new(k);
    let mut scored = 0;
    for row in rows {
        let score = scorer.score_unchecked(row)?;
        top.push(Ranked {
            score,
            key: index.item_id(row),
            row,
        });
        scored += 1;
    }
    Ok(RetrievalResult::from_ranked(k, method, top.into_sorted(), scored))
}

pub(crate) fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(MolError::argument("k must be >= 1"));
    }
    Ok(())
}

/// Evaluates the MoL score of every item and returns the best `k`.
pub fn brute_force_topk(
    query: &QueryEmbeddings,
    index: &ItemIndex,
    gate: &GatingFunction,
    k: usize,
) -> Result<RetrievalResult> {
    check_k(k)?;
    let mut scorer = MolScorer::new(query, index, gate)?;
    rerank(&mut scorer, 0..index.n_items(), k, Method::BruteForce)
}
