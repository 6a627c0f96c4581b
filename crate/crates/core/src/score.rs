//! The MoL scoring kernel: `phi(q, x) = sum_p pi_p(q, x) * <f_p(q), g_p(x)>`.

use crate::config::ComponentConfig;
use crate::error::{MolError, Result};
use crate::gating::{check_simplex, GatingFunction};
use crate::index::ItemIndex;
use crate::kernel::dot;
use crate::query::QueryEmbeddings;

/// Reusable scorer for one (query, index, gate) triple. Holds scratch
/// buffers so per-item scoring does not allocate.
pub struct MolScorer<'a> {
    index: &'a ItemIndex,
    gate: &'a GatingFunction,
    query_id: usize,
    query: &'a [f64],
    config: ComponentConfig,
    dots: Vec<f64>,
    weights: Vec<f64>,
}

impl<'a> MolScorer<'a> {
    pub fn new(query: &'a QueryEmbeddings, index: &'a ItemIndex, gate: &'a GatingFunction) -> Result<Self> {
        let config = query.config_with(index)?;
        let p = config.components();
        Ok(Self {
            index,
            gate,
            query_id: query.id(),
            query: query.vectors(config.normalized)?,
            config,
            dots: vec![0.0; p],
            weights: vec![0.0; p],
        })
    }

    pub fn config(&self) -> ComponentConfig {
        self.config
    }

    pub fn index(&self) -> &'a ItemIndex {
        self.index
    }

    /// Scoring vector of query component `a`.
    pub fn query_vector(&self, a: usize) -> &'a [f64] {
        let dim = self.config.dim;
        &self.query[a * dim..][..dim]
    }

    fn check_row(&self, row: usize) -> Result<()> {
        if row >= self.index.n_items() {
            return Err(MolError::argument(format!(
                "item row {row} out of range for index of {} items",
                self.index.n_items()
            )));
        }
        Ok(())
    }

    /// Component dots of `row` in `(p_q, p_x)` row-major order.
    pub fn dots(&mut self, row: usize) -> Result<&[f64]> {
        self.check_row(row)?;
        self.fill_dots(row);
        Ok(&self.dots)
    }

    #[inline]
    fn fill_dots(&mut self, row: usize) {
        match self.config.dim {
            4 => self.fill_dots_fixed::<4>(row),
            8 => self.fill_dots_fixed::<8>(row),
            16 => self.fill_dots_fixed::<16>(row),
            32 => self.fill_dots_fixed::<32>(row),
            64 => self.fill_dots_fixed::<64>(row),
            _ => self.fill_dots_fixed::<0>(row),
        }
    }

    /// `D` is the dimension when known at compile time, or 0 for any.
    #[inline(always)]
    fn fill_dots_fixed<const D: usize>(&mut self, row: usize) {
        let ComponentConfig { p_q, p_x, dim, .. } = self.config;
        let dim = if D == 0 { dim } else { D };
        for b in 0..p_x {
            let item = &self.index.vector(b, row)[..dim];
            for a in 0..p_q {
                self.dots[a * p_x + b] = dot(&self.query[a * dim..][..dim], item);
            }
        }
    }

    pub fn score(&mut self, row: usize) -> Result<f64> {
        self.check_row(row)?;
        self.score_unchecked(row)
    }

    #[inline]
    pub(crate) fn score_unchecked(&mut self, row: usize) -> Result<f64> {
        self.fill_dots(row);
        self.gate.weights(self.query_id, row, &self.dots, &mut self.weights)?;
        check_simplex(&self.weights)?;
        Ok(self.weights.iter().zip(&self.dots).map(|(w, d)| w * d).sum())
    }

    /// Score and the largest component dot of `row`.
    pub fn score_and_max_dot(&mut self, row: usize) -> Result<(f64, f64)> {
        let score = self.score(row)?;
        let max = self.dots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok((score, max))
    }
}

pub fn component_dots(query: &QueryEmbeddings, index: &ItemIndex, row: usize) -> Result<Vec<f64>> {
    // the gate is irrelevant for dots
    let mut scorer = MolScorer::new(query, index, &GatingFunction::Uniform)?;
    Ok(scorer.dots(row)?.to_vec())
}

pub fn mol_score(query: &QueryEmbeddings, index: &ItemIndex, row: usize, gate: &GatingFunction) -> Result<f64> {
    MolScorer::new(query, index, gate)?.score(row)
}

/// Scores `rows` in order; each entry is bit-identical to [`mol_score`].
pub fn mol_score_batch(
    query: &QueryEmbeddings,
    index: &ItemIndex,
    rows: &[usize],
    gate: &GatingFunction,
) -> Result<Vec<f64>> {
    let mut scorer = MolScorer::new(query, index, gate)?;
    rows.iter().map(|&row| scorer.score(row)).collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// x1 = (0.5, 0.9), x2 = (0.8, 0.1), x3 = (0.2, 0.3) against f = [1].
    pub(crate) fn three_item_fixture() -> (QueryEmbeddings, ItemIndex) {
        let index = ItemIndex::from_rows(2, 1, false, vec![1, 2, 3], &[0.5, 0.9, 0.8, 0.1, 0.2, 0.3]).unwrap();
        (QueryEmbeddings::new(0, 1, 1, vec![1.0]).unwrap(), index)
    }

    #[test]
    fn scalar_component_dots() {
        let index = ItemIndex::from_rows(2, 1, false, vec![0], &[0.5, 0.9]).unwrap();
        let q = QueryEmbeddings::new(0, 1, 1, vec![1.0]).unwrap();
        assert_eq!(component_dots(&q, &index, 0).unwrap(), vec![0.5, 0.9]);
        let zero = QueryEmbeddings::new(0, 1, 1, vec![0.0]).unwrap();
        assert_eq!(component_dots(&zero, &index, 0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn normalized_dots_match_extended_precision_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (p_q, p_x, dim) = (2, 2, 3);
        for _ in 0..50 {
            let qv: Vec<f64> = (0..p_q * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let iv: Vec<f64> = (0..p_x * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let q = QueryEmbeddings::new(0, p_q, dim, qv.clone()).unwrap();
            let index = ItemIndex::from_rows(p_x, dim, true, vec![0], &iv).unwrap();
            let got = component_dots(&q, &index, 0).unwrap();
            // oracle: compensated (Kahan) sums of raw products over norms
            let kahan = |xs: &mut dyn Iterator<Item = f64>| {
                let (mut s, mut c) = (0.0f64, 0.0f64);
                for x in xs {
                    let y = x - c;
                    let t = s + y;
                    c = (t - s) - y;
                    s = t;
                }
                s
            };
            for a in 0..p_q {
                for b in 0..p_x {
                    let fa = &qv[a * dim..][..dim];
                    let gb = &iv[b * dim..][..dim];
                    let raw = kahan(&mut fa.iter().zip(gb).map(|(x, y)| x * y));
                    let nf = kahan(&mut fa.iter().map(|x| x * x)).sqrt();
                    let ng = kahan(&mut gb.iter().map(|x| x * x)).sqrt();
                    assert!((got[a * p_x + b] - raw / (nf * ng)).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn score_examples() {
        let index = ItemIndex::from_rows(2, 1, false, vec![0], &[0.5, 0.9]).unwrap();
        let q = QueryEmbeddings::new(0, 1, 1, vec![1.0]).unwrap();
        let uniform = mol_score(&q, &index, 0, &GatingFunction::Uniform).unwrap();
        assert!((uniform - 0.7).abs() < 1e-12);
        assert_eq!(mol_score(&q, &index, 0, &GatingFunction::ArgmaxOneHot).unwrap(), 0.9);
        let soft = mol_score(&q, &index, 0, &GatingFunction::softmax(1.0).unwrap()).unwrap();
        let (a, b) = (0.5f64.exp(), 0.9f64.exp());
        let direct = (0.5 * a + 0.9 * b) / (a + b);
        assert!((soft - direct).abs() < 1e-12);
        assert!(soft > 0.7 && soft < 0.9);
    }

    #[test]
    fn batch_examples() {
        let (q, index) = three_item_fixture();
        assert!(mol_score_batch(&q, &index, &[], &GatingFunction::Uniform).unwrap().is_empty());
        let got = mol_score_batch(&q, &index, &[2, 0, 1], &GatingFunction::Uniform).unwrap();
        for (g, w) in got.iter().zip([0.25, 0.7, 0.45]) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_is_bit_identical_to_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (p_x, dim, n) = (3, 8, 1000);
        let rows: Vec<f64> = (0..n * p_x * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let index = ItemIndex::from_rows(p_x, dim, true, (0..n as u64).collect(), &rows).unwrap();
        let q = QueryEmbeddings::new(0, 2, dim, (0..2 * dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let gate = GatingFunction::softmax(0.3).unwrap();
        let order: Vec<usize> = (0..n).rev().collect();
        let batch = mol_score_batch(&q, &index, &order, &gate).unwrap();
        for (row, s) in order.iter().zip(batch) {
            assert_eq!(s.to_bits(), mol_score(&q, &index, *row, &gate).unwrap().to_bits());
        }
    }

    #[test]
    fn bad_row_and_gate_errors() {
        let (q, index) = three_item_fixture();
        assert!(matches!(
            mol_score(&q, &index, 3, &GatingFunction::Uniform),
            Err(MolError::Argument(_))
        ));
        let bad = GatingFunction::SoftmaxDots { temperature: -1.0 };
        assert!(matches!(mol_score(&q, &index, 0, &bad), Err(MolError::Gating(_))));
    }
}
