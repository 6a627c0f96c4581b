use std::collections::HashSet;

use crate::error::{MolError, Result};
use crate::kernel::l2_norm;

/// Build-time switches for [`ItemIndex`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexOptions {
    pub normalized: bool,
    /// Precompute the per-item mean vector used by average-dot retrieval.
    pub materialize_average: bool,
}

impl Default for IndexOptions {
    fn default() -> Self {
        Self {
            normalized: false,
            materialize_average: true,
        }
    }
}

/// Item-side component embeddings plus everything derived from them at
/// build time.
///
/// Embeddings are kept component-major (`[p_x][n_items][dim]`) so that a
/// scan over one component reads a contiguous matrix. When the index is
/// normalized a unit-length copy is kept next to the raw values, and every
/// scoring path reads that copy.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemIndex {
    p_x: usize,
    dim: usize,
    normalized: bool,
    n_items: usize,
    item_ids: Vec<u64>,
    raw: Vec<f64>,
    unit: Option<Vec<f64>>,
    norms: Vec<f64>,
    mean: Option<Vec<f64>>,
}

impl ItemIndex {
    /// Builds an index from item-major rows laid out as `[n_items][p_x][dim]`.
    pub fn from_rows(
        p_x: usize,
        dim: usize,
        normalized: bool,
        item_ids: Vec<u64>,
        rows: &[f64],
    ) -> Result<Self> {
        Self::with_options(
            p_x,
            dim,
            item_ids,
            rows,
            IndexOptions {
                normalized,
                ..IndexOptions::default()
            },
        )
    }

    pub fn with_options(
        p_x: usize,
        dim: usize,
        item_ids: Vec<u64>,
        rows: &[f64],
        options: IndexOptions,
    ) -> Result<Self> {
        if p_x == 0 || dim == 0 {
            return Err(MolError::config(format!(
                "p_x and dim must be >= 1 (got p_x={p_x}, dim={dim})"
            )));
        }
        let n_items = item_ids.len();
        let stride = p_x * dim;
        if rows.len() != n_items * stride {
            return Err(MolError::config(format!(
                "expected {} embedding values for {n_items} items x {p_x} components x {dim} dims, got {}",
                n_items * stride,
                rows.len()
            )));
        }
        let mut seen = HashSet::with_capacity(n_items);
        for id in &item_ids {
            if !seen.insert(*id) {
                return Err(MolError::Build(format!("duplicate item id {id}")));
            }
        }
        if let Some(pos) = rows.iter().position(|v| !v.is_finite()) {
            return Err(MolError::Build(format!(
                "non-finite embedding value for item row {}",
                pos / stride
            )));
        }

        let mut raw = vec![0.0; rows.len()];
        let mut norms = vec![0.0; n_items * p_x];
        for row in 0..n_items {
            for comp in 0..p_x {
                let src = &rows[row * stride + comp * dim..][..dim];
                raw[(comp * n_items + row) * dim..][..dim].copy_from_slice(src);
                norms[row * p_x + comp] = l2_norm(src);
            }
        }

        let unit = if options.normalized {
            let mut unit = raw.clone();
            for comp in 0..p_x {
                for row in 0..n_items {
                    let norm = norms[row * p_x + comp];
                    if norm <= 0.0 {
                        return Err(MolError::Build(format!(
                            "item {} component {comp} has zero norm and cannot be normalized",
                            item_ids[row]
                        )));
                    }
                    for v in &mut unit[(comp * n_items + row) * dim..][..dim] {
                        *v /= norm;
                    }
                }
            }
            Some(unit)
        } else {
            None
        };

        let mut index = Self {
            p_x,
            dim,
            normalized: options.normalized,
            n_items,
            item_ids,
            raw,
            unit,
            norms,
            mean: None,
        };
        if options.materialize_average {
            index.materialize();
        }
        Ok(index)
    }

    fn materialize(&mut self) {
        let (n, dim) = (self.n_items, self.dim);
        let mut mean = vec![0.0; n * dim];
        let scale = 1.0 / self.p_x as f64;
        for row in 0..n {
            let out = &mut mean[row * dim..][..dim];
            for comp in 0..self.p_x {
                for (o, v) in out.iter_mut().zip(self.vector(comp, row)) {
                    *o += v;
                }
            }
            for o in out.iter_mut() {
                *o *= scale;
            }
        }
        self.mean = Some(mean);
    }

    /// Drops the materialized mean vectors.
    pub fn dematerialized(mut self) -> Self {
        self.mean = None;
        self
    }

    pub fn p_x(&self) -> usize {
        self.p_x
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn is_empty(&self) -> bool {
        self.n_items == 0
    }

    pub fn item_ids(&self) -> &[u64] {
        &self.item_ids
    }

    pub fn item_id(&self, row: usize) -> u64 {
        self.item_ids[row]
    }

    fn scan(&self) -> &[f64] {
        self.unit.as_deref().unwrap_or(&self.raw)
    }

    /// Scoring matrix `[n_items][dim]` of item component `comp`
    /// (unit-normalized when the index is).
    pub fn component(&self, comp: usize) -> &[f64] {
        let size = self.n_items * self.dim;
        &self.scan()[comp * size..][..size]
    }

    /// Scoring vector of one (component, row) pair.
    #[inline]
    pub fn vector(&self, comp: usize, row: usize) -> &[f64] {
        &self.scan()[(comp * self.n_items + row) * self.dim..][..self.dim]
    }

    /// Embedding exactly as supplied at build time.
    pub fn raw_vector(&self, comp: usize, row: usize) -> &[f64] {
        &self.raw[(comp * self.n_items + row) * self.dim..][..self.dim]
    }

    pub fn norm(&self, row: usize, comp: usize) -> f64 {
        self.norms[row * self.p_x + comp]
    }

    /// Per-(item, component) l2 norms, item-major; only meaningful for
    /// normalized indexes.
    pub fn norms(&self) -> Option<&[f64]> {
        self.normalized.then_some(self.norms.as_slice())
    }

    pub fn is_materialized(&self) -> bool {
        self.mean.is_some()
    }

    /// Materialized `[n_items][dim]` matrix of per-item component means
    /// `(1/p_x) * sum_b g_b(x)`.
    pub fn mean_vectors(&self) -> Result<&[f64]> {
        self.mean.as_deref().ok_or(MolError::NotMaterialized)
    }

    /// Raw embeddings in item-major `[n_items][p_x][dim]` order.
    pub fn rows(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.raw.len());
        for row in 0..self.n_items {
            for comp in 0..self.p_x {
                out.extend_from_slice(self.raw_vector(comp, row));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_items() -> ItemIndex {
        ItemIndex::from_rows(2, 1, false, vec![1, 2, 3], &[0.5, 0.9, 0.8, 0.1, 0.2, 0.3]).unwrap()
    }

    #[test]
    fn component_major_layout() {
        let index = three_items();
        assert_eq!(index.component(0), &[0.5, 0.8, 0.2]);
        assert_eq!(index.component(1), &[0.9, 0.1, 0.3]);
        assert_eq!(index.rows(), vec![0.5, 0.9, 0.8, 0.1, 0.2, 0.3]);
    }

    #[test]
    fn mean_vectors_average_components() {
        let index = three_items();
        let mean = index.mean_vectors().unwrap();
        for (got, want) in mean.iter().zip([0.7, 0.45, 0.25]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_duplicate_ids() {
        let err = ItemIndex::from_rows(1, 1, false, vec![7, 7], &[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, MolError::Build(_)));
    }

    #[test]
    fn rejects_zero_norm_when_normalized() {
        let err = ItemIndex::from_rows(1, 2, true, vec![0, 1], &[1.0, 0.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, MolError::Build(_)));
        // the same data is fine unnormalized
        ItemIndex::from_rows(1, 2, false, vec![0, 1], &[1.0, 0.0, 0.0, 0.0]).unwrap();
    }

    #[test]
    fn rejects_shape_mismatch_and_non_finite() {
        assert!(matches!(
            ItemIndex::from_rows(2, 2, false, vec![0], &[1.0; 3]),
            Err(MolError::Config(_))
        ));
        assert!(matches!(
            ItemIndex::from_rows(1, 1, false, vec![0], &[f64::NAN]),
            Err(MolError::Build(_))
        ));
    }

    #[test]
    fn normalized_vectors_are_unit_length() {
        let index = ItemIndex::from_rows(1, 2, true, vec![0], &[3.0, 4.0]).unwrap();
        assert_eq!(index.vector(0, 0), &[0.6, 0.8]);
        assert_eq!(index.raw_vector(0, 0), &[3.0, 4.0]);
        assert_eq!(index.norm(0, 0), 5.0);
    }

    #[test]
    fn dematerialized_reports_missing_means() {
        let index = three_items().dematerialized();
        assert!(matches!(index.mean_vectors(), Err(MolError::NotMaterialized)));
    }
}
