use std::collections::HashSet;

use mol_core::approx::{average_dot, candidates_average};
use mol_core::gating::check_simplex;
use mol_core::{component_dots, mol_score, GatingFunction, ItemIndex, QueryEmbeddings};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Instance {
    p_q: usize,
    p_x: usize,
    dim: usize,
    query: Vec<f64>,
    items: Vec<f64>,
    n_items: usize,
}

impl Instance {
    fn build(&self, normalized: bool) -> (QueryEmbeddings, ItemIndex) {
        let q = QueryEmbeddings::new(0, self.p_q, self.dim, self.query.clone()).unwrap();
        let ids = (0..self.n_items as u64).collect();
        let index = ItemIndex::from_rows(self.p_x, self.dim, normalized, ids, &self.items).unwrap();
        (q, index)
    }
}

// Coordinates bounded away from an all-zero vector so normalization is defined.
fn coord() -> impl Strategy<Value = f64> {
    prop_oneof![-3.0..-0.05f64, 0.05..3.0f64]
}

fn instance() -> impl Strategy<Value = Instance> {
    (1..4usize, 1..5usize, 1..9usize, 1..40usize).prop_flat_map(|(p_q, p_x, dim, n_items)| {
        (
            prop::collection::vec(coord(), p_q * dim),
            prop::collection::vec(coord(), n_items * p_x * dim),
        )
            .prop_map(move |(query, items)| Instance { p_q, p_x, dim, query, items, n_items })
    })
}

fn gate() -> impl Strategy<Value = GatingFunction> {
    prop_oneof![
        Just(GatingFunction::Uniform),
        Just(GatingFunction::ArgmaxOneHot),
        (0.01..50.0f64).prop_map(|temperature| GatingFunction::SoftmaxDots { temperature }),
    ]
}

fn naive_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn score_lies_between_extreme_component_dots(inst in instance(), gate in gate(), normalized in any::<bool>()) {
        let (q, index) = inst.build(normalized);
        for row in 0..inst.n_items {
            let dots = component_dots(&q, &index, row).unwrap();
            let lo = dots.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = dots.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s = mol_score(&q, &index, row, &gate).unwrap();
            let tol = 1e-9 * (1.0 + hi.abs().max(lo.abs()));
            prop_assert!(s >= lo - tol && s <= hi + tol, "{s} outside [{lo}, {hi}]");
        }
    }

    #[test]
    fn uniform_score_is_the_average_dot(inst in instance(), normalized in any::<bool>()) {
        let (q, index) = inst.build(normalized);
        for row in 0..inst.n_items {
            let s = mol_score(&q, &index, row, &GatingFunction::Uniform).unwrap();
            let a = average_dot(&q, &index, row).unwrap();
            prop_assert!((s - a).abs() <= 1e-9 * (1.0 + s.abs()), "{s} vs {a}");
        }
    }

    #[test]
    fn normalized_scores_ignore_vector_scale(inst in instance(), gate in gate(), scale in 0.1..20.0f64) {
        let (q, index) = inst.build(true);
        let scaled = Instance { items: inst.items.iter().map(|v| v * scale).collect(), ..inst.clone() };
        let (_, scaled_index) = scaled.build(true);
        for row in 0..inst.n_items {
            let a = mol_score(&q, &index, row, &gate).unwrap();
            let b = mol_score(&q, &scaled_index, row, &gate).unwrap();
            prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
            prop_assert!(a.abs() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn gate_weights_form_a_simplex(dots in prop::collection::vec(-1e3..1e3f64, 1..64), gate in gate()) {
        let mut w = vec![0.0; dots.len()];
        gate.weights(0, 0, &dots, &mut w).unwrap();
        prop_assert!(check_simplex(&w).is_ok(), "{w:?}");
        let score = naive_dot(&w, &dots);
        let hi = dots.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(score <= hi + 1e-9 * (1.0 + hi.abs()));
    }

    #[test]
    fn average_candidates_grow_with_budget(inst in instance(), n in 1..20usize, extra in 0..20usize) {
        let (q, index) = inst.build(false);
        let small: HashSet<usize> = candidates_average(&q, &index, n).unwrap().into_iter().collect();
        let large: HashSet<usize> = candidates_average(&q, &index, n + extra).unwrap().into_iter().collect();
        prop_assert!(small.is_subset(&large));
        prop_assert_eq!(small.len(), n.min(inst.n_items));
    }
}
