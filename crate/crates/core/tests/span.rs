use dgm_core::span::{best_span, edit_distance, extract_span, gold_span_label, SpanObjective, SpanParams};
use proptest::prelude::*;

/// Plain recursive Levenshtein distance, memoized over suffixes.
fn reference_distance(a: &[&str], b: &[&str]) -> usize {
    fn go(a: &[&str], b: &[&str], memo: &mut std::collections::HashMap<(usize, usize), usize>) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        if let Some(&v) = memo.get(&(a.len(), b.len())) {
            return v;
        }
        let sub = go(&a[1..], &b[1..], memo) + usize::from(a[0] != b[0]);
        let v = sub.min(go(&a[1..], b, memo) + 1).min(go(a, &b[1..], memo) + 1);
        memo.insert((a.len(), b.len()), v);
        v
    }
    go(a, b, &mut Default::default())
}

fn edus_strategy() -> impl Strategy<Value = Vec<Vec<String>>> {
    let word = prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(String::from);
    prop::collection::vec(prop::collection::vec(word, 0..8), 1..5)
        .prop_filter("rule length at most 30", |e| e.iter().map(Vec::len).sum::<usize>() <= 30)
        .prop_filter("some token", |e| e.iter().any(|x| !x.is_empty()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn gold_label_matches_enumeration(
        edus in edus_strategy(),
        question in prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "e"]).prop_map(String::from), 1..6),
    ) {
        let mut best: Option<(usize, usize, usize, usize, usize)> = None;
        for (k, edu) in edus.iter().enumerate() {
            for i in 0..edu.len() {
                for j in i..edu.len() {
                    let span: Vec<&str> = edu[i..=j].iter().map(String::as_str).collect();
                    let q: Vec<&str> = question.iter().map(String::as_str).collect();
                    let key = (reference_distance(&span, &q), j - i, k, i, j);
                    if best.is_none_or(|b| key < b) {
                        best = Some(key);
                    }
                }
            }
        }
        let (dist, _, k, i, j) = best.unwrap();
        let got = gold_span_label(&edus, &question).unwrap();
        prop_assert_eq!((got.edu, got.start, got.end), (k, i, j));
        prop_assert_eq!(got.score, dist as f64);
        let span = &edus[k][i..=j];
        prop_assert_eq!(edit_distance(span, &question), dist);
    }

    #[test]
    fn best_span_matches_enumeration(
        scores in prop::collection::vec(prop::collection::vec((-3i32..4, -3i32..4), 0..8), 1..5),
        maximize in any::<bool>(),
    ) {
        prop_assume!(scores.iter().map(Vec::len).sum::<usize>() > 0);
        prop_assume!(scores.iter().map(Vec::len).sum::<usize>() <= 30);
        let objective = if maximize { SpanObjective::Max } else { SpanObjective::Min };
        let starts: Vec<Vec<f64>> = scores.iter().map(|e| e.iter().map(|p| p.0 as f64).collect()).collect();
        let ends: Vec<Vec<f64>> = scores.iter().map(|e| e.iter().map(|p| p.1 as f64).collect()).collect();
        let mut best: Option<(f64, usize, usize, usize)> = None;
        for k in 0..starts.len() {
            for i in 0..starts[k].len() {
                for j in i..starts[k].len() {
                    let s = starts[k][i] + ends[k][j];
                    let better = match best {
                        None => true,
                        Some((b, ..)) => if maximize { s > b } else { s < b },
                    };
                    if better {
                        best = Some((s, k, i, j));
                    }
                }
            }
        }
        let (score, k, i, j) = best.unwrap();
        let got = best_span(&starts, &ends, objective).unwrap();
        prop_assert_eq!((got.edu, got.start, got.end, got.score), (k, i, j, score));
    }

    #[test]
    fn extract_span_scores_by_dot_products(
        reps in prop::collection::vec(prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 1..6), 1..4),
        ws in prop::collection::vec(-1.0f64..1.0, 3),
        we in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let params = SpanParams { start: ws.clone(), end: we.clone() };
        let got = extract_span(&reps, &params, SpanObjective::Max).unwrap();
        let dot = |w: &[f64], t: &[f64]| w.iter().zip(t).map(|(a, b)| a * b).sum::<f64>();
        let mut best = f64::NEG_INFINITY;
        for edu in &reps {
            for i in 0..edu.len() {
                for j in i..edu.len() {
                    best = best.max(dot(&ws, &edu[i]) + dot(&we, &edu[j]));
                }
            }
        }
        prop_assert!((got.score - best).abs() < 1e-12);
        prop_assert!(got.start <= got.end && got.end < reps[got.edu].len());
    }
}
