mod common;

use std::collections::BTreeMap;

use igap_core::corpus::{corrupt_labels, corrupt_labels_joint, gen_random_labels, ParallelCorpus, SentencePair};
use igap_core::data::{Direction, EmbeddingPair, EmbeddingPairSet, Role};
use igap_core::metrics::{decompose_pool, igap, igap_curve, igap_from_reports, to_f64, transfer_gap, Fraction};
use igap_core::ranking::{
    gold_ranking, predict_ranking_from_similarity, rank_by_scores, similarity_score, tdr_accuracy, Ranking,
    ScoreDirection, ScoreTable, SimilarityMetric,
};
use igap_core::simulator::{expected_metrics, simulate_pool, ScheduleEntry, SimConfig, TargetSpec};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn zero() -> Fraction {
    Fraction::from_integer(0)
}

fn en_de() -> Direction {
    Direction::new("en", "de")
}

fn config(targets: &[(&str, f64)], schedule: &[(u64, f64)], g: f64, k: u32, n: usize, seeds: Vec<i64>) -> SimConfig {
    SimConfig {
        source_language: "en".into(),
        model_name: "sim".into(),
        num_labels: k,
        n_train: n,
        n_val: n,
        target_languages: targets
            .iter()
            .map(|(c, d)| TargetSpec { code: c.to_string(), transfer_loss: *d })
            .collect(),
        train_error_schedule: schedule
            .iter()
            .map(|(s, p)| ScheduleEntry { step: *s, train_error: *p })
            .collect(),
        generalization_gap: g,
        seeds,
        data_seed: 0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identity_is_exact(seed in any::<u64>(), n in 1usize..60, k in 2u32..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = random_pool(&mut rng, n, n + 3, k, 4);
        for r in decompose_pool(&pool, &en_de()).unwrap() {
            prop_assert_eq!(r.e - (r.g_inter + r.g_intra + r.e_train), zero());
            prop_assert!(r.g_inter >= Fraction::from_integer(-1) && r.g_inter <= Fraction::from_integer(1));
            prop_assert!(r.e >= zero() && r.e <= Fraction::from_integer(1));
        }
    }

    #[test]
    fn igap_ignores_order_and_duplicates(seed in any::<u64>(), e_prime in 0.0f64..0.3, eps in 0.001f64..0.2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = random_pool(&mut rng, 20, 10, 3, 9);
        let base = igap(&pool, &en_de(), e_prime, eps).unwrap();

        let mut shuffled = pool.clone();
        shuffled.checkpoints.shuffle(&mut rng);
        let with_order = decompose_pool(&shuffled, &en_de()).unwrap();
        prop_assert_eq!(&igap_from_reports(&with_order, e_prime, eps).unwrap().value, &base.value);
        prop_assert_eq!(&igap_from_reports(&with_order, e_prime, eps).unwrap().witness, &base.witness);

        let mut reports = decompose_pool(&pool, &en_de()).unwrap();
        let dup = reports[rng.random_range(0..reports.len())].clone();
        reports.push(dup);
        let r = igap_from_reports(&reports, e_prime, eps).unwrap();
        prop_assert_eq!(r.value, base.value);
        prop_assert_eq!(r.witness, base.witness);
    }

    #[test]
    fn igap_window_and_witness_agree(seed in any::<u64>(), e_prime in 0.0f64..0.3, eps in 0.001f64..0.2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = random_pool(&mut rng, 20, 10, 3, 9);
        let reports = decompose_pool(&pool, &en_de()).unwrap();
        let r = igap_from_reports(&reports, e_prime, eps).unwrap();
        prop_assert_eq!(r.value.is_some(), r.qualifying_count > 0);
        if let Some(w) = &r.witness {
            let w = reports.iter().find(|x| &x.checkpoint_id == w).unwrap();
            let d = to_f64(w.e_train) - e_prime;
            prop_assert!(d >= -1e-9 && d < eps + 1e-9);
            prop_assert_eq!(Some(w.g_inter), r.value);
        }
    }

    #[test]
    fn larger_epsilon_never_raises_igap(seed in any::<u64>(), e_prime in 0.0f64..0.3, eps in 0.001f64..0.1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = random_pool(&mut rng, 20, 10, 3, 9);
        let small = igap(&pool, &en_de(), e_prime, eps).unwrap();
        let large = igap(&pool, &en_de(), e_prime, 2.0 * eps).unwrap();
        if let Some(v) = small.value {
            prop_assert!(large.value.unwrap() <= v);
        }
        prop_assert!(large.qualifying_count >= small.qualifying_count);
    }

    #[test]
    fn gap_is_antisymmetric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = random_pool(&mut rng, 5, 30, 3, 2);
        let mut other = pool.eval_set("de-val").unwrap().clone();
        other.eval_set_id = "en-val".into();
        other.language = "en".into();
        other.role = Role::SourceVal;
        let mut ckpt = pool.checkpoints[0].clone();
        ckpt.predictions.insert("en-val".into(), predictions_with_errors(&other, 0.3, &mut rng));
        let tv = pool.eval_set("de-val").unwrap();
        let ab = transfer_gap(&ckpt, &other, tv).unwrap();
        let ba = transfer_gap(&ckpt, tv, &other).unwrap();
        prop_assert_eq!(ab, -ba);
    }

    #[test]
    fn tdr_symmetric_and_relabel_invariant(seed in any::<u64>(), n in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let langs: Vec<String> = (0..n).map(|i| format!("l{i}")).collect();
        let mut a = langs.clone();
        let mut b = langs.clone();
        a.shuffle(&mut rng);
        b.shuffle(&mut rng);
        let ra = Ranking::new("src", a.clone()).unwrap();
        let rb = Ranking::new("src", b.clone()).unwrap();
        let acc = tdr_accuracy(&ra, &rb).unwrap();
        prop_assert_eq!(acc, tdr_accuracy(&rb, &ra).unwrap());
        prop_assert_eq!(tdr_accuracy(&ra, &ra).unwrap(), 1.0);
        prop_assert_eq!(tdr_accuracy(&ra, &ra.reversed()).unwrap(), 0.0);

        let mut names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        names.shuffle(&mut rng);
        let rename: BTreeMap<&String, &String> = langs.iter().zip(&names).collect();
        let ra2 = Ranking::new("src", a.iter().map(|l| rename[l].clone()).collect()).unwrap();
        let rb2 = Ranking::new("src", b.iter().map(|l| rename[l].clone()).collect()).unwrap();
        prop_assert_eq!(tdr_accuracy(&ra2, &rb2).unwrap(), acc);
    }

    #[test]
    fn negating_scores_and_direction(values in prop::collection::vec(-5i32..5, 2..7)) {
        let scores: BTreeMap<String, f64> =
            values.iter().enumerate().map(|(i, v)| (format!("t{i}"), f64::from(*v) / 4.0)).collect();
        let neg: BTreeMap<String, f64> = scores.iter().map(|(k, v)| (k.clone(), -v)).collect();
        let a = rank_by_scores(&ScoreTable::new("s", scores, ScoreDirection::LowerIsBetter).unwrap()).unwrap();
        let b = rank_by_scores(&ScoreTable::new("s", neg, ScoreDirection::HigherIsBetter).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn similarity_bounds_and_swap(seed in any::<u64>(), n in 1usize..6, d in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vec = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            v[0] += 3.0; // keeps vectors away from zero
            v
        };
        let pairs: Vec<EmbeddingPair> = (0..n)
            .map(|i| EmbeddingPair { example_id: format!("p{i}"), vector_a: vec(&mut rng), vector_b: vec(&mut rng) })
            .collect();
        let swapped: Vec<EmbeddingPair> = pairs
            .iter()
            .map(|p| EmbeddingPair { example_id: p.example_id.clone(), vector_a: p.vector_b.clone(), vector_b: p.vector_a.clone() })
            .collect();
        let a = EmbeddingPairSet::new("x", "y", pairs).unwrap();
        let b = EmbeddingPairSet::new("y", "x", swapped).unwrap();
        let cos = similarity_score(&a, SimilarityMetric::Cos).unwrap();
        prop_assert!((-1.0..=1.0).contains(&cos));
        prop_assert!(similarity_score(&a, SimilarityMetric::L2).unwrap() >= 0.0);
        for m in [SimilarityMetric::L2, SimilarityMetric::Dot, SimilarityMetric::Cos] {
            let (x, y) = (similarity_score(&a, m).unwrap(), similarity_score(&b, m).unwrap());
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn corruption_sets_are_nested(seed in any::<i64>(), r1 in 0.0f64..1.0, r2 in 0.0f64..1.0) {
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
        let set = random_pool(&mut rng, 80, 1, 4, 0).eval_set("en-train").unwrap().clone();
        let a = corrupt_labels(&set, lo, seed).unwrap();
        let b = corrupt_labels(&set, hi, seed).unwrap();
        // Every position touched at `lo` carries the same draw at `hi`.
        for ((orig, x), y) in set.labels.iter().zip(&a.labels).zip(&b.labels) {
            if x.label != orig.label {
                prop_assert_eq!(x.label, y.label);
            }
        }
    }

    #[test]
    fn labels_survive_corpus_edits(seed in any::<i64>(), extra in 1usize..20) {
        let pairs = |n: usize| -> Vec<SentencePair> {
            (0..n).map(|i| SentencePair { example_id: format!("s{i}"), text_a: "a".into(), text_b: "b".into() }).collect()
        };
        let small = gen_random_labels(&ParallelCorpus::new("en", "de", pairs(30)).unwrap(), seed, 3).unwrap();
        let mut bigger = pairs(30 + extra);
        bigger.reverse();
        let big = gen_random_labels(&ParallelCorpus::new("en", "de", bigger).unwrap(), seed, 3).unwrap();
        for (id, l) in &small.labels {
            prop_assert_eq!(big.labels[id], *l);
        }
    }
}

#[test]
fn joint_corruption_keeps_pairs_equal() {
    let corpus = ParallelCorpus::new(
        "en",
        "de",
        (0..500).map(|i| SentencePair { example_id: format!("s{i}"), text_a: "a".into(), text_b: "b".into() }).collect(),
    )
    .unwrap();
    let labeled = gen_random_labels(&corpus, 5, 3).unwrap();
    let (a, b) = labeled.eval_sets();
    let out = corrupt_labels_joint(&[a, b], 0.6, 9).unwrap();
    assert_eq!(out[0].labels, out[1].labels);
    assert_eq!(out[1].translation_of.as_deref(), Some("en-random"));
}

#[test]
fn corruption_difference_rate() {
    // Expected fraction changed is ratio * (1 - 1/K).
    let n = 6000;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let set = random_pool(&mut rng, n, 1, 3, 0).eval_set("en-train").unwrap().clone();
    for ratio in [0.3, 0.7, 1.0] {
        let out = corrupt_labels(&set, ratio, 4).unwrap();
        let changed = set.labels.iter().zip(&out.labels).filter(|(a, b)| a.label != b.label).count() as f64 / n as f64;
        let expect = ratio * (2.0 / 3.0);
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((changed - expect).abs() < 3.0 * se, "ratio {ratio}: {changed} vs {expect}");
    }
}

#[test]
fn noiseless_simulator_is_exactly_zero() {
    let cfg = config(&[("de", 0.0), ("fr", 0.0)], &[(1, 0.0), (2, 0.0)], 0.0, 3, 300, vec![0, 1]);
    let pool = simulate_pool(&cfg).unwrap();
    for t in ["de", "fr"] {
        for r in decompose_pool(&pool, &Direction::new("en", t)).unwrap() {
            assert_eq!((r.e_train, r.g_inter, r.g_intra, r.e), (zero(), zero(), zero(), zero()));
        }
    }
}

#[test]
fn simulator_is_deterministic_and_extends() {
    let cfg = config(&[("de", 0.3)], &[(1, 0.2)], 0.1, 3, 200, vec![4]);
    assert_eq!(simulate_pool(&cfg).unwrap(), simulate_pool(&cfg).unwrap());
    let mut bigger = cfg.clone();
    bigger.n_train = 300;
    let (a, b) = (simulate_pool(&cfg).unwrap(), simulate_pool(&bigger).unwrap());
    let pa = &a.checkpoints[0].predictions["de-train"];
    let pb = &b.checkpoints[0].predictions["de-train"];
    assert_eq!(pa[..], pb[..200]);
}

#[test]
fn oracle_formula_reference_points() {
    let cfg = config(&[("de", 1.0)], &[(1, 0.0)], 0.0, 3, 10, vec![0]);
    let m = expected_metrics(&cfg, 1, "de").unwrap();
    assert!((m.g_inter - 2.0 / 3.0).abs() < 1e-12 && (m.e - 2.0 / 3.0).abs() < 1e-12);
    let cfg = config(&[("de", 0.3)], &[(1, 0.1)], 0.0, 3, 10, vec![0]);
    assert!((expected_metrics(&cfg, 1, "de").unwrap().g_inter - 0.17).abs() < 1e-12);
    let cfg = config(&[("de", 0.0)], &[(1, 0.0)], 0.0, 3, 10, vec![0]);
    let m = expected_metrics(&cfg, 1, "de").unwrap();
    assert_eq!((m.e_train, m.g_inter, m.g_intra, m.e), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn curve_tracks_oracle() {
    // Schedule lands one step on each curve point; a single seed keeps the
    // minimum over checkpoints a minimum over exactly one candidate.
    let n = 3000;
    let schedule: Vec<(u64, f64)> = (0..9).map(|i| (i as u64 + 1, 0.2 - 0.025 * i as f64 + 0.01)).collect();
    let cfg = config(&[("de", 0.3)], &schedule, 0.05, 3, n, vec![0]);
    let pool = simulate_pool(&cfg).unwrap();
    let grid: Vec<f64> = (0..9).map(|i| 0.2 - 0.025 * i as f64).collect();
    let curve = igap_curve(&pool, &Direction::new("en", "de"), &grid, 0.025).unwrap();
    assert_eq!(curve.points.len(), 9);
    let mut checked = 0;
    for (e_prime, r) in &curve.points {
        let Some(v) = r.value_f64() else { continue };
        let step = schedule.iter().find(|(_, p)| (p - e_prime - 0.01).abs() < 1e-9).unwrap().0;
        let m = expected_metrics(&cfg, step, "de").unwrap();
        let p = m.e_train;
        // Per-example difference d = 1{tr wrong} - 1{src wrong}.
        let second = m.err_translated + p - 2.0 * p * (1.0 - 0.3 / 3.0);
        let se = ((second - m.g_inter * m.g_inter) / n as f64).sqrt();
        assert!((v - m.g_inter).abs() < 3.0 * se, "e' {e_prime}: {v} vs {}", m.g_inter);
        checked += 1;
    }
    assert!(checked >= 7, "only {checked} curve points present");
}

#[test]
fn gold_from_planted_pool() {
    let cfg = config(&[("de", 0.05), ("fr", 0.2), ("zh", 0.5)], &[(1, 0.1), (2, 0.0)], 0.05, 3, 2000, vec![0, 1, 2]);
    let pool = simulate_pool(&cfg).unwrap();
    let acc: BTreeMap<String, f64> = ["de", "fr", "zh"]
        .iter()
        .map(|t| (t.to_string(), igap_core::metrics::final_target_accuracy(&pool, &Direction::new("en", *t)).unwrap()))
        .collect();
    assert_eq!(gold_ranking("en", &acc).unwrap().ordered_targets, ["de", "fr", "zh"]);
}

#[test]
fn cosine_and_l2_can_disagree() {
    // "de" points the same way with a much larger norm; "sw" is close in
    // Euclidean terms but at an angle.
    let set = |b: Vec<f64>| {
        EmbeddingPairSet::new("en", "x", vec![EmbeddingPair { example_id: "p".into(), vector_a: vec![1.0, 0.0], vector_b: b }])
            .unwrap()
    };
    let mut per_target = BTreeMap::new();
    per_target.insert("de".to_string(), set(vec![5.0, 0.0]));
    per_target.insert("sw".to_string(), set(vec![1.0, 1.0]));
    let cos = predict_ranking_from_similarity("en", &per_target, SimilarityMetric::Cos).unwrap();
    let l2 = predict_ranking_from_similarity("en", &per_target, SimilarityMetric::L2).unwrap();
    assert_eq!(cos.ordered_targets, ["de", "sw"]);
    assert_eq!(l2.ordered_targets, ["sw", "de"]);
}
