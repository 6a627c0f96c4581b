use crate::config::ComponentConfig;
use crate::error::{MolError, Result};
use crate::index::ItemIndex;
use crate::kernel::l2_norm;

/// The `p_q` component embeddings of one query, with both raw and
/// unit-normalized forms and their component sums precomputed.
///
/// `id` is the query's position in its query set; table gates use it to
/// look up per-(query, item) weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbeddings {
    id: usize,
    p_q: usize,
    dim: usize,
    raw: Vec<f64>,
    raw_sum: Vec<f64>,
    // None when some component has zero norm
    unit: Option<(Vec<f64>, Vec<f64>)>,
}

impl QueryEmbeddings {
    /// `vectors` is laid out `[p_q][dim]`.
    pub fn new(id: usize, p_q: usize, dim: usize, vectors: Vec<f64>) -> Result<Self> {
        if p_q == 0 || dim == 0 {
            return Err(MolError::config(format!(
                "p_q and dim must be >= 1 (got p_q={p_q}, dim={dim})"
            )));
        }
        if vectors.len() != p_q * dim {
            return Err(MolError::config(format!(
                "expected {} query values ({p_q} x {dim}), got {}",
                p_q * dim,
                vectors.len()
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(MolError::argument(format!("query {id} has non-finite values")));
        }
        let raw_sum = component_sum(&vectors, dim);
        let mut unit = Some(vectors.clone());
        for comp in vectors.chunks_exact(dim).zip(unit.as_mut().unwrap().chunks_exact_mut(dim)) {
            let norm = l2_norm(comp.0);
            if norm <= 0.0 {
                unit = None;
                break;
            }
            comp.1.iter_mut().for_each(|v| *v /= norm);
        }
        let unit = unit.map(|u| {
            let sum = component_sum(&u, dim);
            (u, sum)
        });
        Ok(Self {
            id,
            p_q,
            dim,
            raw: vectors,
            raw_sum,
            unit,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }

    pub fn p_q(&self) -> usize {
        self.p_q
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Embeddings as supplied, `[p_q][dim]`.
    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    /// Scoring vectors for the requested mode.
    pub fn vectors(&self, normalized: bool) -> Result<&[f64]> {
        if !normalized {
            return Ok(&self.raw);
        }
        self.unit
            .as_ref()
            .map(|(u, _)| u.as_slice())
            .ok_or_else(|| self.zero_norm_error())
    }

    /// Componentwise sum of the scoring vectors.
    pub fn sum_vector(&self, normalized: bool) -> Result<&[f64]> {
        if !normalized {
            return Ok(&self.raw_sum);
        }
        self.unit
            .as_ref()
            .map(|(_, s)| s.as_slice())
            .ok_or_else(|| self.zero_norm_error())
    }

    fn zero_norm_error(&self) -> MolError {
        MolError::config(format!(
            "query {} has a zero-norm component and cannot be scored against a normalized index",
            self.id
        ))
    }

    /// Resolves the joint component layout against `index`.
    pub fn config_with(&self, index: &ItemIndex) -> Result<ComponentConfig> {
        if self.dim != index.dim() {
            return Err(MolError::config(format!(
                "query dim {} does not match index dim {}",
                self.dim,
                index.dim()
            )));
        }
        if index.normalized() && self.unit.is_none() {
            return Err(self.zero_norm_error());
        }
        ComponentConfig::new(self.p_q, index.p_x(), self.dim, index.normalized())
    }
}

fn component_sum(vectors: &[f64], dim: usize) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    for comp in vectors.chunks_exact(dim) {
        for (s, v) in sum.iter_mut().zip(comp) {
            *s += v;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_and_normalizes() {
        let q = QueryEmbeddings::new(0, 2, 2, vec![3.0, 4.0, 0.0, 2.0]).unwrap();
        assert_eq!(q.sum_vector(false).unwrap(), &[3.0, 6.0]);
        assert_eq!(q.vectors(true).unwrap(), &[0.6, 0.8, 0.0, 1.0]);
        assert_eq!(q.sum_vector(true).unwrap(), &[0.6, 1.8]);
    }

    #[test]
    fn zero_norm_query_only_fails_in_normalized_mode() {
        let q = QueryEmbeddings::new(3, 1, 2, vec![0.0, 0.0]).unwrap();
        assert!(q.vectors(false).is_ok());
        assert!(matches!(q.vectors(true), Err(MolError::Config(_))));
    }

    #[test]
    fn dim_mismatch_is_config_error() {
        let q = QueryEmbeddings::new(0, 1, 2, vec![1.0, 0.0]).unwrap();
        let index = ItemIndex::from_rows(1, 3, false, vec![0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(q.config_with(&index), Err(MolError::Config(_))));
        assert!(QueryEmbeddings::new(0, 2, 2, vec![1.0; 3]).is_err());
    }
}
