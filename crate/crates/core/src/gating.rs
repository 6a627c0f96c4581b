//! Gating rules producing the per-(query, item) weight distribution over
//! the `P` component pairs.

use serde::{Deserialize, Serialize};

use crate::error::{MolError, Result};

/// Allowed deviation of a weight vector's sum from 1.
pub const SIMPLEX_SUM_TOL: f64 = 1e-6;
/// Allowed excursion of a single weight outside `[0, 1]`.
pub const SIMPLEX_ENTRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GatingFunction {
    /// `1/P` on every component.
    Uniform,
    /// `softmax(dots / temperature)`. Large temperatures approach
    /// `Uniform`, small ones approach `ArgmaxOneHot`.
    SoftmaxDots { temperature: f64 },
    /// All weight on the largest component dot (first one on ties).
    ArgmaxOneHot,
    /// Explicit weights per (query id, item row).
    Table(GateTable),
}

impl GatingFunction {
    pub fn softmax(temperature: f64) -> Result<Self> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(MolError::argument(format!(
                "softmax temperature must be positive and finite, got {temperature}"
            )));
        }
        Ok(GatingFunction::SoftmaxDots { temperature })
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        match self {
            GatingFunction::Uniform => "uniform".into(),
            GatingFunction::SoftmaxDots { temperature } => format!("softmax(t={temperature})"),
            GatingFunction::ArgmaxOneHot => "argmax".into(),
            GatingFunction::Table(t) => format!("table({}x{})", t.n_queries, t.n_items),
        }
    }

    /// Writes the weights for `(query_id, item_row)` into `out`, given that
    /// pair's component dots.
    pub fn weights(&self, query_id: usize, item_row: usize, dots: &[f64], out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(dots.len(), out.len());
        match self {
            GatingFunction::Uniform => {
                let w = 1.0 / dots.len() as f64;
                out.iter_mut().for_each(|o| *o = w);
            }
            GatingFunction::SoftmaxDots { temperature } => {
                if temperature.is_nan() || *temperature <= 0.0 {
                    return Err(MolError::Gating(format!(
                        "softmax temperature must be positive, got {temperature}"
                    )));
                }
                let max = dots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for (o, d) in out.iter_mut().zip(dots) {
                    *o = ((d - max) / temperature).exp();
                    total += *o;
                }
                out.iter_mut().for_each(|o| *o /= total);
            }
            GatingFunction::ArgmaxOneHot => {
                let mut best = 0;
                for (p, d) in dots.iter().enumerate() {
                    if *d > dots[best] {
                        best = p;
                    }
                }
                out.iter_mut().for_each(|o| *o = 0.0);
                out[best] = 1.0;
            }
            GatingFunction::Table(table) => {
                out.copy_from_slice(table.row(query_id, item_row, dots.len())?);
            }
        }
        Ok(())
    }
}

/// Checks that `weights` is a probability vector within the crate tolerances.
pub fn check_simplex(weights: &[f64]) -> Result<()> {
    let mut sum = 0.0;
    for (p, w) in weights.iter().enumerate() {
        if !(*w >= -SIMPLEX_ENTRY_TOL && *w <= 1.0 + SIMPLEX_ENTRY_TOL) {
            return Err(MolError::Gating(format!("weight {p} = {w} outside [0, 1]")));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
        return Err(MolError::Gating(format!("weights sum to {sum}, expected 1")));
    }
    Ok(())
}

/// Dense `[n_queries][n_items][components]` weight table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateTable {
    n_queries: usize,
    n_items: usize,
    components: usize,
    weights: Vec<f64>,
}

impl GateTable {
    /// Validates every weight vector against the simplex tolerances and
    /// rescales it to sum to exactly one (up to rounding).
    pub fn new(n_queries: usize, n_items: usize, components: usize, mut weights: Vec<f64>) -> Result<Self> {
        if components == 0 {
            return Err(MolError::config("gate table needs at least one component"));
        }
        if weights.len() != n_queries * n_items * components {
            return Err(MolError::config(format!(
                "gate table expects {} weights, got {}",
                n_queries * n_items * components,
                weights.len()
            )));
        }
        for (i, row) in weights.chunks_exact_mut(components).enumerate() {
            check_simplex(row).map_err(|e| {
                MolError::Gating(format!(
                    "query {} item row {}: {e}",
                    i / n_items.max(1),
                    i % n_items.max(1)
                ))
            })?;
            let sum: f64 = row.iter().map(|w| w.clamp(0.0, 1.0)).sum();
            row.iter_mut().for_each(|w| *w = w.clamp(0.0, 1.0) / sum);
        }
        Ok(Self {
            n_queries,
            n_items,
            components,
            weights,
        })
    }

    pub fn n_queries(&self) -> usize {
        self.n_queries
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn components(&self) -> usize {
        self.components
    }

    fn row(&self, query_id: usize, item_row: usize, components: usize) -> Result<&[f64]> {
        if components != self.components {
            return Err(MolError::Gating(format!(
                "gate table has {} components, scoring needs {components}",
                self.components
            )));
        }
        if query_id >= self.n_queries || item_row >= self.n_items {
            return Err(MolError::Gating(format!(
                "gate table ({} x {}) has no entry for query {query_id}, item row {item_row}",
                self.n_queries, self.n_items
            )));
        }
        let start = (query_id * self.n_items + item_row) * components;
        Ok(&self.weights[start..start + components])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(gate: &GatingFunction, dots: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; dots.len()];
        gate.weights(0, 0, dots, &mut out).unwrap();
        out
    }

    #[test]
    fn uniform_and_argmax() {
        assert_eq!(eval(&GatingFunction::Uniform, &[0.5, 0.9]), vec![0.5, 0.5]);
        assert_eq!(eval(&GatingFunction::ArgmaxOneHot, &[0.5, 0.9]), vec![0.0, 1.0]);
        // first maximum wins
        assert_eq!(eval(&GatingFunction::ArgmaxOneHot, &[0.3, 0.3]), vec![1.0, 0.0]);
    }

    #[test]
    fn softmax_matches_direct_evaluation() {
        let w = eval(&GatingFunction::softmax(1.0).unwrap(), &[0.5, 0.9]);
        let (a, b) = (0.5f64.exp(), 0.9f64.exp());
        assert!((w[0] - a / (a + b)).abs() < 1e-15);
        assert!((w[1] - b / (a + b)).abs() < 1e-15);
    }

    #[test]
    fn softmax_temperature_limits() {
        let dots = [0.1, 0.4, -0.2];
        let cold = eval(&GatingFunction::softmax(1e-4).unwrap(), &dots);
        assert!((cold[1] - 1.0).abs() < 1e-12);
        let hot = eval(&GatingFunction::softmax(1e6).unwrap(), &dots);
        assert!(hot.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-6));
        assert!(GatingFunction::softmax(0.0).is_err());
        assert!(GatingFunction::softmax(f64::NAN).is_err());
    }

    #[test]
    fn simplex_check() {
        assert!(check_simplex(&[0.25, 0.75]).is_ok());
        assert!(check_simplex(&[0.5, 0.6]).is_err());
        assert!(check_simplex(&[-0.1, 1.1]).is_err());
    }

    #[test]
    fn table_validates_and_looks_up() {
        let table = GateTable::new(1, 2, 2, vec![0.25, 0.75, 1.0, 0.0]).unwrap();
        let gate = GatingFunction::Table(table);
        let mut out = [0.0; 2];
        gate.weights(0, 1, &[0.0, 0.0], &mut out).unwrap();
        assert_eq!(out, [1.0, 0.0]);
        assert!(gate.weights(1, 0, &[0.0, 0.0], &mut out).is_err());
        assert!(gate.weights(0, 0, &[0.0; 3], &mut [0.0; 3]).is_err());
        assert!(GateTable::new(1, 1, 2, vec![0.7, 0.7]).is_err());
        assert!(GateTable::new(1, 1, 2, vec![0.7]).is_err());
    }

    #[test]
    fn serde_tags() {
        let json = serde_json::to_string(&GatingFunction::SoftmaxDots { temperature: 0.5 }).unwrap();
        assert_eq!(json, r#"{"type":"softmax_dots","temperature":0.5}"#);
        let back: GatingFunction = serde_json::from_str(r#"{"type":"argmax_one_hot"}"#).unwrap();
        assert_eq!(back, GatingFunction::ArgmaxOneHot);
    }
}
