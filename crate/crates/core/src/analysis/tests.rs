use super::*;
use crate::rouge::rouge_l;
use alloc::format;
use proptest::prelude::*;

const GOLD: &str = include_str!("../../tests/fixtures/verb_noun_gold.tsv");

fn gold() -> Vec<(&'static str, Option<(&'static str, &'static str)>)> {
    GOLD.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let cols: Vec<&str> = l.split('\t').collect();
            let pair = if cols[1] == "-" { None } else { Some((cols[1], cols[2])) };
            (cols[0], pair)
        })
        .collect()
}

#[test]
fn simple_pair() {
    assert_eq!(
        HeuristicParser::default().extract("Write a poem about winter."),
        Some(("write".into(), "poem".into()))
    );
}

#[test]
fn empty_list_gives_empty_table() {
    let r = verb_noun_pairs::<&str>(&[], None, 20, 4);
    assert!(r.pairs.is_empty());
    assert_eq!(r.unique_pairs, 0);
    assert_eq!(r.without_pair, 0);
    assert!(!r.heuristic_used);
}

#[test]
fn fixture_matches_hand_tags() {
    let g = gold();
    assert_eq!(g.len(), 50);
    let texts: Vec<&str> = g.iter().map(|x| x.0).collect();
    let report = verb_noun_pairs(&texts, None, 20, 4);

    let mut expected: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut none = 0;
    for (_, p) in &g {
        match p {
            Some((v, n)) => *expected.entry((v.to_string(), n.to_string())).or_insert(0) += 1,
            None => none += 1,
        }
    }
    assert_eq!(report.unique_pairs, expected.len());
    assert_eq!(report.without_pair, none);
    for p in &report.pairs {
        assert_eq!(expected.get(&(p.verb.clone(), p.noun.clone())), Some(&p.count), "{p:?}");
    }
    assert!(report.heuristic_used);
}

#[test]
fn top_k_is_truncated_and_ordered() {
    let texts = [
        "Write a poem.", "Write a poem.", "Write a story.", "Write a song.", "Write an essay.", "Write a joke.",
        "Give a tip.", "Give an example.", "List three countries.",
    ];
    let r = verb_noun_pairs(&texts, None, 2, 2);
    assert_eq!(r.top_verbs.len(), 2);
    assert_eq!(r.top_verbs[0].verb, "write");
    assert_eq!(r.top_verbs[0].count, 6);
    assert_eq!(r.top_verbs[0].top_nouns, vec![("poem".to_string(), 2), ("essay".to_string(), 1)]);
    assert_eq!(r.top_verbs[1].verb, "give");
    assert_eq!(r.pairs[0], PairCount { verb: "write".into(), noun: "poem".into(), count: 2 });
}

struct Down;
impl VerbNounParser for Down {
    fn parse(&self, _: &str) -> Result<Option<(String, String)>, BackendError> {
        Err(BackendError::Transport("refused".into()))
    }
}

struct Fixed;
impl VerbNounParser for Fixed {
    fn parse(&self, _: &str) -> Result<Option<(String, String)>, BackendError> {
        Ok(Some(("do".into(), "thing".into())))
    }
}

#[test]
fn outage_falls_back_with_flag() {
    let texts = ["Write a poem about winter.", "Tell a joke."];
    let r = verb_noun_pairs(&texts, Some(&Down as &dyn VerbNounParser), 20, 4);
    assert!(r.heuristic_fallback);
    assert!(r.heuristic_used);
    assert_eq!(r.unique_pairs, 2);

    let r = verb_noun_pairs(&texts, Some(&Fixed as &dyn VerbNounParser), 20, 4);
    assert!(!r.heuristic_fallback);
    assert!(!r.heuristic_used);
    assert_eq!(r.pairs, vec![PairCount { verb: "do".into(), noun: "thing".into(), count: 2 }]);
}

#[test]
fn plural_nouns_reduce_to_lexicon_form() {
    let h = HeuristicParser::default();
    assert_eq!(h.extract("List five countries"), Some(("list".into(), "country".into())));
    assert_eq!(h.extract("Give me some tips"), Some(("give".into(), "tip".into())));
    assert_eq!(h.extract("What time is it?"), None);
}

#[test]
fn single_record_length() {
    let s = length_stats(&[IftRecord::new("one two three four five", "", "x")]);
    assert_eq!(s.avg_instruction_len, 5.0);
    assert_eq!(s.n_instructions, 1);
    assert_eq!(s.n_instances, 1);
}

#[test]
fn all_inputs_empty() {
    let recs: Vec<IftRecord> = (0..4).map(|i| IftRecord::new(format!("task {i}"), "  ", "out")).collect();
    let s = length_stats(&recs);
    assert_eq!(s.avg_nonempty_input_len, None);
    assert_eq!(s.n_empty_input, 4);
    assert!(s.input_hist.is_empty());
}

fn ten_records() -> Vec<IftRecord> {
    vec![
        IftRecord::new("Sort the list", "3 1 2", "1 2 3"),
        IftRecord::new("Sort the list", "b a", "a b"),
        IftRecord::new("Name a colour", "", "red"),
        IftRecord::new("Translate to French", "good morning", "bonjour"),
        IftRecord::new("Translate to French", "thank you very much", "merci beaucoup"),
        IftRecord::new("Write a short poem about rain", "", "rain falls on the roof tonight"),
        IftRecord::new("Add the numbers", "2 and 3", "5"),
        IftRecord::new("Add the numbers", "10 and 20", "30"),
        IftRecord::new("Name a colour", "", "blue"),
        IftRecord::new("Is it prime", "7", "yes it is prime"),
    ]
}

#[test]
fn ten_record_fixture() {
    // Recomputed column by column with whitespace counts.
    // distinct instructions: 3, 3, 3, 6, 3, 3 -> 21 / 6
    // non-empty inputs: 3 2 2 4 3 3 1 -> 18 / 7
    // outputs: 3 2 1 1 2 6 1 1 1 4 -> 22 / 10
    let s = length_stats(&ten_records());
    assert_eq!(s.n_instructions, 6);
    assert_eq!(s.n_instances, 10);
    assert_eq!(s.n_empty_input, 3);
    assert!((s.avg_instruction_len - 21.0 / 6.0).abs() < 1e-12);
    assert!((s.avg_nonempty_input_len.unwrap() - 18.0 / 7.0).abs() < 1e-12);
    assert!((s.avg_output_len - 2.2).abs() < 1e-12);
    assert_eq!(s.instruction_hist.get(&3), Some(&5));
    assert_eq!(s.instruction_hist.get(&6), Some(&1));
    assert_eq!(s.output_hist.values().sum::<usize>(), 10);
}

proptest! {
    #[test]
    fn lengths_permutation_invariant_and_additive(perm in Just((0..10usize).collect::<Vec<_>>()).prop_shuffle(), cut in 0usize..=10) {
        let base = ten_records();
        let shuffled: Vec<IftRecord> = perm.iter().map(|i| base[*i].clone()).collect();
        let whole = length_stats(&base);
        prop_assert_eq!(&length_stats(&shuffled), &whole);

        let mut a = LengthAccumulator::default();
        let mut b = LengthAccumulator::default();
        for r in &shuffled[..cut] { a.add(r); }
        for r in &shuffled[cut..] { b.add(r); }
        a.merge(b);
        prop_assert_eq!(a.finish(), whole);
    }

    #[test]
    fn seed_scores_bounded_and_order_free(
        seeds in prop::collection::vec("[abcd ]{0,12}", 1..6),
        generated in prop::collection::vec("[abcd ]{0,12}", 0..6),
    ) {
        let d = seed_similarity_distribution(&generated, &seeds, 10).unwrap();
        prop_assert!(d.scores.iter().all(|s| (0.0..=1.0).contains(s)));
        let mut rev = seeds.clone();
        rev.reverse();
        let d2 = seed_similarity_distribution(&generated, &rev, 10).unwrap();
        prop_assert_eq!(d.scores, d2.scores);
        prop_assert_eq!(d.histogram, d2.histogram);
    }
}

#[test]
fn generated_equal_to_seeds() {
    let seeds = ["write a poem", "sort these numbers", "name a city"];
    let d = seed_similarity_distribution(&seeds, &seeds, 10).unwrap();
    assert_eq!(d.scores, vec![1.0; 3]);
    assert_eq!(d.histogram[9], 3);
    assert_eq!(d.nearest, vec![Some(0), Some(1), Some(2)]);
}

#[test]
fn disjoint_vocabulary() {
    let d = seed_similarity_distribution(&["alpha beta", "gamma"], &["one two", "three"], 10).unwrap();
    assert_eq!(d.scores, vec![0.0, 0.0]);
    assert_eq!(d.histogram[0], 2);
}

#[test]
fn empty_seeds_rejected() {
    assert_eq!(seed_similarity_distribution(&["x"], &[] as &[&str], 10), Err(AnalysisError::EmptyReference));
    assert_eq!(cross_corpus_similarity(&["x"], &[] as &[&str], 10), Err(AnalysisError::EmptyReference));
}

#[test]
fn five_by_five_hand_table() {
    let seeds = ["a b c", "d e", "a d", "x y z", "b c d e"];
    let generated = ["a b c", "b c", "d e a", "q r", "z y x"];
    // Best entries from the pairwise table worked out by hand.
    let want = [(1.0, 0), (0.8, 0), (0.8, 1), (0.0, 0), (1.0 / 3.0, 3)];
    let d = seed_similarity_distribution(&generated, &seeds, 5).unwrap();
    for (i, (s, idx)) in want.iter().enumerate() {
        assert!((d.scores[i] - s).abs() < 1e-12, "row {i}");
        assert_eq!(d.nearest[i], Some(*idx));
    }
    assert_eq!(d.histogram, vec![1, 1, 0, 0, 3]);
}

#[test]
fn cross_subset_and_singleton() {
    let b = ["the cat sat", "a dog ran", "birds fly south"];
    let d = cross_corpus_similarity(&b[..2], &b, 10).unwrap();
    assert_eq!(d.mean, 1.0);
    let d = cross_corpus_similarity(&["the cat sat"], &["the cat ran on mats"], 10).unwrap();
    assert_eq!(d.scores[0], rouge_l("the cat sat", "the cat ran on mats").f1);
}

#[test]
fn cross_ten_by_ten_matches_scan() {
    let a: Vec<String> = (0..10).map(|i| format!("w{} w{} common w{}", i % 3, i % 5, i)).collect();
    let b: Vec<String> = (0..10).map(|i| format!("w{} common w{} w{}", i % 4, i, i % 2)).collect();
    let d = cross_corpus_similarity(&a, &b, 10).unwrap();
    let mut total = 0.0;
    for (i, x) in a.iter().enumerate() {
        let best = b.iter().map(|y| rouge_l(x, y).f1).fold(0.0, f64::max);
        assert_eq!(d.scores[i], best);
        total += best;
    }
    assert!((d.mean - total / 10.0).abs() < 1e-12);
}

fn rating(id: &str, r: Rating) -> RatingRecord {
    RatingRecord { item_id: id.into(), rating: r, annotator: "x".into() }
}

fn review(id: usize, valid: bool) -> QualityReview {
    QualityReview { item_id: format!("i{id}"), valid_task: valid, input_appropriate: true, output_correct: false }
}

#[test]
fn ninety_of_hundred_valid() {
    let reviews: Vec<QualityReview> = (0..100).map(|i| review(i, i < 90)).collect();
    let s = aggregate_annotations(&[], &reviews);
    assert_eq!(s.quality.valid_task_pct, 90.0);
    assert_eq!(s.quality.input_appropriate_pct, 100.0);
    assert_eq!(s.quality.output_correct_pct, 0.0);
    assert_eq!(s.quality.n_items, 100);
}

#[test]
fn empty_annotations() {
    let s = aggregate_annotations(&[], &[]);
    assert!(s.ratings.iter().all(|r| r.count == 0 && r.percent == 0.0));
    assert_eq!(s.quality.valid_task_pct, 0.0);
}

#[test]
fn seven_ratings_hand_tally() {
    use Rating::*;
    let rs: Vec<RatingRecord> =
        [A, A, B, C, D, D, D].iter().enumerate().map(|(i, r)| rating(&format!("i{i}"), *r)).collect();
    let s = aggregate_annotations(&rs, &[]);
    let counts: Vec<usize> = s.ratings.iter().map(|r| r.count).collect();
    let pct: Vec<f64> = s.ratings.iter().map(|r| r.percent).collect();
    assert_eq!(counts, vec![2, 1, 1, 3]);
    assert_eq!(pct, vec![28.57, 14.29, 14.28, 42.86]);
    assert!((pct.iter().sum::<f64>() - 100.0).abs() < 1e-9);
}

#[test]
fn ties_resolve_to_worse() {
    use Rating::*;
    let rs = [rating("x", A), rating("x", C), rating("y", B), rating("y", B), rating("y", A)];
    let s = aggregate_annotations(&rs, &[]);
    assert_eq!(s.n_rated_items, 2);
    assert_eq!(s.ratings[1].count, 1);
    assert_eq!(s.ratings[2].count, 1);

    let split = [review(0, true), review(0, false)];
    assert_eq!(aggregate_annotations(&[], &split).quality.valid_task_pct, 0.0);
}

#[test]
fn rating_symbols() {
    assert_eq!("RATING-A".parse::<Rating>(), Ok(Rating::A));
    assert_eq!(" c ".parse::<Rating>(), Ok(Rating::C));
    assert!(matches!("E".parse::<Rating>(), Err(AnalysisError::UnknownRating(_))));
    let r: Result<RatingRecord, _> = serde_json::from_str(r#"{"item_id":"1","rating":"RATING-E","annotator":"a"}"#);
    assert!(r.is_err());
    let ok: RatingRecord = serde_json::from_str(r#"{"item_id":"1","rating":"RATING-B","annotator":"a"}"#).unwrap();
    assert_eq!(ok.rating, Rating::B);
    assert_eq!(serde_json::to_string(&ok.rating).unwrap(), "\"B\"");
}

proptest! {
    #[test]
    fn remainder_percentages_sum_to_hundred(counts in prop::collection::vec(0usize..50, 1..6)) {
        let p = largest_remainder_percent(&counts);
        if counts.iter().sum::<usize>() > 0 {
            let units: i64 = p.iter().map(|x| libm::round(x * 100.0) as i64).sum();
            prop_assert_eq!(units, 10_000);
        }
    }
}
