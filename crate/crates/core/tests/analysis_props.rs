use std::collections::BTreeSet;

use mdocr_core::analysis::{
    apply_repetition_penalty, context_table, detect_repetition, token_grid, truncate_repetition, AnalysisError,
    EncoderGeometry, Repetition, RepetitionParams,
};
use mdocr_core::tokenizer::ContextSpec;
use proptest::prelude::*;

/// Tries every period in order and every suffix start, checking each copy
/// symbol by symbol.
fn brute_force(tokens: &[u8], params: &RepetitionParams) -> Option<Repetition> {
    let n = tokens.len();
    for period in params.min_ngram..=params.max_ngram {
        for start in 0..n {
            let len = n - start;
            if !len.is_multiple_of(period) || len / period < params.min_repeats {
                continue;
            }
            let unit = &tokens[start..start + period];
            if (start..n).all(|i| tokens[i] == unit[(i - start) % period]) {
                return Some(Repetition { period, start, repeats: len / period });
            }
        }
    }
    None
}

fn params() -> impl Strategy<Value = RepetitionParams> {
    (1usize..6, 0usize..10, 2usize..5).prop_map(|(lo, span, reps)| RepetitionParams::new(lo, lo + span, reps).unwrap())
}

fn looping_sequence() -> impl Strategy<Value = Vec<u8>> {
    prop_oneof![
        prop::collection::vec(0u8..4, 0..=40),
        (prop::collection::vec(0u8..4, 0..10), prop::collection::vec(0u8..4, 1..6), 1usize..8).prop_map(
            |(prefix, unit, reps)| {
                let mut v = prefix;
                for _ in 0..reps {
                    v.extend_from_slice(&unit);
                }
                v.truncate(40);
                v
            }
        ),
    ]
}

fn word_text() -> impl Strategy<Value = String> {
    prop::collection::vec((prop::sample::select(vec!["في", "من", "abc", "x", "\\", "**"]), prop::sample::select(vec![" ", "  ", "\n"])), 0..30)
        .prop_map(|parts| parts.into_iter().map(|(w, s)| format!("{w}{s}")).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn detector_matches_brute_force(tokens in looping_sequence(), p in params()) {
        prop_assert_eq!(detect_repetition(&tokens, &p), brute_force(&tokens, &p));
    }

    #[test]
    fn truncation_shrinks_and_is_idempotent(text in word_text(), p in params()) {
        let once = truncate_repetition(&text, &p);
        prop_assert!(once.len() <= text.len());
        prop_assert!(text.starts_with(&once));
        prop_assert_eq!(truncate_repetition(&once, &p), once.clone());
        let words: Vec<&str> = once.split_whitespace().collect();
        prop_assert!(detect_repetition(&words, &p).is_none());
    }

    #[test]
    fn penalty_one_is_identity(scores in prop::collection::vec(-10.0f64..10.0, 1..32), picks in prop::collection::vec(any::<prop::sample::Index>(), 0..8)) {
        let history: BTreeSet<usize> = picks.iter().map(|i| i.index(scores.len())).collect();
        prop_assert_eq!(apply_repetition_penalty(&scores, &history, 1.0).unwrap(), scores);
    }

    #[test]
    fn penalty_above_one_pushes_history_down(
        scores in prop::collection::vec(prop_oneof![-10.0f64..10.0, Just(0.0)], 8),
        mask in any::<u8>(),
        penalty in 1.0001f64..5.0,
    ) {
        let history: BTreeSet<usize> = (0..8).filter(|i| mask & (1 << i) != 0).collect();
        let out = apply_repetition_penalty(&scores, &history, penalty).unwrap();
        for i in 0..8 {
            if !history.contains(&i) || scores[i] == 0.0 {
                prop_assert_eq!(out[i], scores[i]);
            } else {
                prop_assert!(out[i] < scores[i]);
                prop_assert_eq!(out[i].signum(), scores[i].signum());
            }
        }
        // A history token that was below the max never overtakes it.
        let argmax = |v: &[f64]| (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
        let before = argmax(&scores);
        let after = argmax(&out);
        if after != before {
            prop_assert!(!history.contains(&after) || scores[after] == scores[before]);
        }
    }

    #[test]
    fn grid_matches_arithmetic(rows in 1usize..40, cols in 1usize..40, patch in 1usize..9, merges in 0u32..4) {
        let f = patch << merges;
        let (h, w) = (rows * f, cols * f);
        let grid = token_grid(&EncoderGeometry { input_height: h, input_width: w, patch_size: patch, merge_stages: merges, hidden_dim: 8 }).unwrap();
        prop_assert_eq!(grid.token_count, h * w / (patch * patch * 4usize.pow(merges)));
        prop_assert_eq!((grid.rows, grid.cols), (rows, cols));
        prop_assert_eq!(grid.stages.len(), merges as usize + 1);
        prop_assert_eq!(grid.stages[0], (h / patch, w / patch));
    }
}

#[test]
fn detector_examples() {
    let words = |s: &'static str| s.split_whitespace().collect::<Vec<_>>();
    let d = RepetitionParams::default();
    assert_eq!(detect_repetition(&words("a b c d"), &d), None);
    assert_eq!(
        detect_repetition(&words("x y a b c a b c a b c"), &d),
        Some(Repetition { period: 3, start: 2, repeats: 3 })
    );
    let p1 = RepetitionParams::new(1, 20, 3).unwrap();
    assert_eq!(detect_repetition(&words("a a a a a a"), &p1), Some(Repetition { period: 1, start: 0, repeats: 6 }));
    assert_eq!(truncate_repetition("intro abc abc abc", &p1), "intro abc");
    assert_eq!(truncate_repetition("نص عادي بلا تكرار", &p1), "نص عادي بلا تكرار");
}

#[test]
fn penalty_examples_and_errors() {
    let history = BTreeSet::from([0, 1]);
    assert_eq!(apply_repetition_penalty(&[2.0, -1.0, 0.5], &history, 2.0).unwrap(), vec![1.0, -2.0, 0.5]);
    assert!(matches!(apply_repetition_penalty(&[1.0], &history, 0.0), Err(AnalysisError::Penalty(_))));
    assert!(matches!(apply_repetition_penalty(&[1.0], &history, 2.0), Err(AnalysisError::HistoryOutOfRange { .. })));
    assert!(RepetitionParams::new(0, 3, 3).is_err());
    assert!(RepetitionParams::new(4, 3, 3).is_err());
    assert!(RepetitionParams::new(1, 3, 1).is_err());
}

#[test]
fn context_rows() {
    let specs = vec![
        ContextSpec::new("small", 3584, 1.0).unwrap(),
        ContextSpec::new("base", 4096, 1.0).unwrap(),
        ContextSpec::new("large", 8192, 4.0).unwrap(),
    ];
    let rows = context_table(&specs);
    let got: Vec<(&str, u64)> = rows.iter().map(|r| (r.model_name.as_str(), r.effective_tokens)).collect();
    assert_eq!(got, vec![("large", 32768), ("base", 4096), ("small", 3584)]);

    let tied = context_table(&[ContextSpec::new("b", 100, 2.0).unwrap(), ContextSpec::new("a", 200, 1.0).unwrap()]);
    assert_eq!(tied[0].model_name, "a");
    assert_eq!(context_table(&specs[..1]).len(), 1);
}
