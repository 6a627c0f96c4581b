use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kernel::Ranked;

/// Retrieval strategy and its candidate budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Method {
    BruteForce,
    Exact,
    /// Union of the top-`n` items of every component.
    PerEmbedding { n: usize },
    /// Top-`n` items by average component dot.
    Average { n: usize },
    Combined { n1: usize, n2: usize },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::BruteForce => "brute_force",
            Method::Exact => "exact",
            Method::PerEmbedding { .. } => "per_embedding",
            Method::Average { .. } => "average",
            Method::Combined { .. } => "combined",
        }
    }

    pub fn params(&self) -> String {
        match self {
            Method::BruteForce | Method::Exact => String::new(),
            Method::PerEmbedding { n } | Method::Average { n } => format!("n={n}"),
            Method::Combined { n1, n2 } => format!("n1={n1};n2={n2}"),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params = self.params();
        if params.is_empty() {
            f.write_str(self.name())
        } else {
            write!(f, "{}({})", self.name(), params.replace(';', ","))
        }
    }
}

/// Ranked top-k answer of one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub k: usize,
    pub method: Method,
    pub item_ids: Vec<u64>,
    /// Index rows of `item_ids`.
    pub rows: Vec<usize>,
    /// MoL scores, non-increasing.
    pub scores: Vec<f64>,
    pub candidates_scored: usize,
}

impl RetrievalResult {
    pub(crate) fn from_ranked(k: usize, method: Method, ranked: Vec<Ranked>, candidates_scored: usize) -> Self {
        let mut item_ids = Vec::with_capacity(ranked.len());
        let mut rows = Vec::with_capacity(ranked.len());
        let mut scores = Vec::with_capacity(ranked.len());
        for r in ranked {
            item_ids.push(r.key);
            rows.push(r.row);
            scores.push(r.score);
        }
        Self {
            k,
            method,
            item_ids,
            rows,
            scores,
            candidates_scored,
        }
    }

    pub fn len(&self) -> usize {
        self.item_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_ids.is_empty()
    }

    /// Lowest retained score.
    pub fn min_score(&self) -> Option<f64> {
        self.scores.last().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_display_and_order() {
        assert_eq!(Method::Combined { n1: 5, n2: 200 }.to_string(), "combined(n1=5,n2=200)");
        assert_eq!(Method::Exact.to_string(), "exact");
        assert!(Method::BruteForce < Method::Average { n: 1 });
        assert!(Method::Average { n: 200 } < Method::Average { n: 500 });
        let json = serde_json::to_string(&Method::PerEmbedding { n: 5 }).unwrap();
        assert_eq!(json, r#"{"type":"per_embedding","n":5}"#);
    }
}
