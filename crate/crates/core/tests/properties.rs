use std::collections::BTreeMap;

use pacing_core::analysis::{
    count_emotion_words, distribution_from_counts, transition_matrix, EmotionCategory, Lexicon, FIXTURE_LEXICON,
};
use pacing_core::classifier::{ControlSignal, SignalSource};
use pacing_core::memory::{build_context, estimate_tokens, Budget, CharQuarterEstimator, ExtractiveSummarizer, Turn};
use pacing_core::scheduler::{segment_punctuation, EmissionEvent, PacingMode, Planner};
use pacing_core::strategy::{sample_silence, Strategy, StrategyTable};
use proptest::prelude::*;
use proptest::strategy::Strategy as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn strategy() -> impl proptest::strategy::Strategy<Value = Strategy> {
    (0usize..8).prop_map(|i| Strategy::ALL[i])
}

fn reply_text() -> impl proptest::strategy::Strategy<Value = String> {
    proptest::collection::vec(
        prop_oneof![
            "[a-zA-Z]{1,8}",
            Just(" ".to_string()),
            Just(", ".to_string()),
            Just(". ".to_string()),
            Just("?".to_string()),
            Just("!".to_string()),
            Just("...".to_string()),
            Just("\u{2026}".to_string()),
            Just("\n".to_string()),
            Just("\n\n".to_string()),
            Just("don't".to_string()),
            Just("(".to_string()),
            Just(";".to_string()),
            Just("\u{e9}t\u{e9}".to_string()),
        ],
        0..40,
    )
    .prop_map(|parts| parts.concat())
}

proptest! {
    #[test]
    fn sampled_silence_stays_in_range(s in strategy(), seed in any::<u64>()) {
        let table = StrategyTable::canonical();
        let p = table.profile(s);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ms = sample_silence(p, &mut rng);
        prop_assert!(p.silence_min_ms <= ms && ms <= p.silence_max_ms);
    }

    #[test]
    fn segments_partition_text(text in reply_text()) {
        let segs = segment_punctuation(&text);
        let joined: String = segs.iter().map(|s| s.text).collect();
        prop_assert_eq!(&joined, &text);
        if let Some(last) = segs.last() {
            prop_assert!(last.pause.is_none());
        }
    }

    #[test]
    fn plan_chunks_rebuild_text(text in reply_text(), s in strategy(), seed in any::<u64>(), static_mode in any::<bool>()) {
        let table = StrategyTable::canonical();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signal = ControlSignal::new(s, sample_silence(table.profile(s), &mut rng), SignalSource::Rule, &table);
        let mode = if static_mode { PacingMode::Static } else { PacingMode::ContextAware };
        let plan = Planner::default().plan(&text, Some(&signal), mode, &mut rng);
        let body = plan.text();
        let body = body.strip_prefix(if s == Strategy::Holding && !static_mode {
            pacing_core::scheduler::HOLDING_PREAMBLE
        } else {
            ""
        });
        prop_assert_eq!(body, Some(text.as_str()));
        let times: Vec<u64> = plan.events.iter().map(EmissionEvent::at_ms).collect();
        prop_assert!(times.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(plan.total_ms, plan.events.iter().map(EmissionEvent::end_ms).max().unwrap_or(0));
    }

    #[test]
    fn transition_counts_ignore_sequence_order(
        seqs in proptest::collection::vec(proptest::collection::vec(strategy(), 1..12), 1..10),
        seed in any::<u64>(),
    ) {
        let mut shuffled = seqs.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let a = transition_matrix(&seqs).unwrap();
        let b = transition_matrix(&shuffled).unwrap();
        prop_assert_eq!(a.counts, b.counts);
        for (i, row) in a.probabilities.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if a.empty_rows[i] {
                prop_assert_eq!(sum, 0.0);
            } else {
                prop_assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn distribution_is_scale_invariant(counts in proptest::collection::vec(0u64..500, 8), k in 1u64..50) {
        prop_assume!(counts.iter().any(|&c| c > 0));
        let base: BTreeMap<Strategy, u64> = Strategy::ALL.into_iter().zip(counts.iter().copied()).collect();
        let scaled: BTreeMap<Strategy, u64> = base.iter().map(|(s, c)| (*s, c * k)).collect();
        let a = distribution_from_counts(&base).unwrap();
        let b = distribution_from_counts(&scaled).unwrap();
        for s in Strategy::ALL {
            prop_assert!((a[&s] - b[&s]).abs() < 1e-12);
        }
        prop_assert!((a.values().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn emotion_counts_add_over_concatenation(a in "[a-z !.,]{0,60}", b in "[a-z !.,]{0,60}", pick in proptest::collection::vec(0usize..50, 0..6)) {
        let lex = Lexicon::parse(FIXTURE_LEXICON).unwrap();
        let words: Vec<&str> = FIXTURE_LEXICON.lines().step_by(10).map(|l| l.split('\t').next().unwrap()).collect();
        let extra: Vec<&str> = pick.iter().map(|&i| words[i]).collect();
        let a = format!("{a} {}", extra.join(" "));
        let joined = format!("{a} {b}");
        let ca = count_emotion_words(&a, &lex);
        let cb = count_emotion_words(&b, &lex);
        let cj = count_emotion_words(&joined, &lex);
        for c in EmotionCategory::ALL {
            prop_assert_eq!(cj[&c], ca[&c] + cb[&c]);
        }
    }

    #[test]
    fn token_estimate_is_subadditive(a in ".{0,80}", b in ".{0,80}") {
        let joined = format!("{a}{b}");
        prop_assert!(estimate_tokens(&joined) <= estimate_tokens(&a) + estimate_tokens(&b));
    }

    #[test]
    fn verbatim_tail_is_a_suffix(
        texts in proptest::collection::vec("[a-zA-Z ,.!?]{1,120}", 0..30),
        total in 40usize..2000,
        tail in 1usize..12,
    ) {
        let turns: Vec<Turn> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| if i % 2 == 0 { Turn::user(t.clone(), i as u64) } else { Turn::assistant(t.clone(), i as u64, None) })
            .collect();
        let budget = Budget { total, reply_reservation: 20, verbatim_tail: tail };
        let w = build_context(&turns, budget, &ExtractiveSummarizer, &CharQuarterEstimator).unwrap();
        let n = w.verbatim_turns.len();
        prop_assert_eq!(&w.verbatim_turns[..], &turns[turns.len() - n..]);
        if w.budget_too_small {
            prop_assert!(n >= 1 && n <= tail.min(turns.len()));
        } else {
            prop_assert!(n >= tail.min(turns.len()));
            prop_assert!(w.token_estimate <= total - 20);
        }
    }
}
