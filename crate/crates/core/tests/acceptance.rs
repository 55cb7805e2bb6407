//! End-to-end acceptance gate. Runs without the libtest harness so every
//! criterion prints one PASS/FAIL line even on success.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use igap_core::corpus::{corrupt_labels, gen_random_labels, ParallelCorpus, SentencePair};
use igap_core::data::{write_labels, CheckpointPool, Direction, PredictionRecord, Role};
use igap_core::metrics::{decompose, decompose_pool, final_target_accuracy, igap, Fraction};
use igap_core::ranking::{rank_by_scores, tdr_concordance, Ranking, ScoreDirection, ScoreTable};
use igap_core::simulator::{expected_metrics, simulate_pool, ScheduleEntry, SimConfig, TargetSpec};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Duration);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn frac(n: i64, d: i64) -> Fraction {
    Fraction::new(n, d)
}

fn sim(targets: &[(&str, f64)], schedule: &[(u64, f64)], g: f64, k: u32, n_train: usize, n_val: usize, seeds: Vec<i64>) -> SimConfig {
    SimConfig {
        source_language: "en".into(),
        model_name: "sim".into(),
        num_labels: k,
        n_train,
        n_val,
        target_languages: targets.iter().map(|(c, d)| TargetSpec { code: c.to_string(), transfer_loss: *d }).collect(),
        train_error_schedule: schedule.iter().map(|(s, p)| ScheduleEntry { step: *s, train_error: *p }).collect(),
        generalization_gap: g,
        seeds,
        data_seed: 0,
    }
}

fn mismatches(preds: &[PredictionRecord], labels: &[igap_core::data::ExampleLabel]) -> i64 {
    let gold: BTreeMap<&str, u32> = labels.iter().map(|l| (l.example_id.as_str(), l.label)).collect();
    preds.iter().filter(|p| gold[p.example_id.as_str()] != p.predicted_label).count() as i64
}

fn decomposition_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..1000 {
        let n = rng.random_range(1..=500);
        let n_val = rng.random_range(1..=500);
        let k = rng.random_range(2..=5);
        let pool = random_pool(&mut rng, n, n_val, k, 1);
        let c = &pool.checkpoints[0];
        let src = pool.eval_set("en-train").unwrap();
        let tr = pool.eval_set("de-train").unwrap();
        let tv = pool.eval_set("de-val").unwrap();
        let r = decompose(c, src, tr, tv).map_err(|e| e.to_string())?;
        let (n, n_val) = (n as i64, n_val as i64);
        // Oracle: raw mismatch counts straight from the records.
        let m_src = mismatches(&c.predictions["en-train"], &src.labels);
        let m_tr = mismatches(&c.predictions["de-train"], &src.labels);
        let m_tv = mismatches(&c.predictions["de-val"], &tv.labels);
        let expect = (frac(m_src, n), frac(m_tr - m_src, n), frac(m_tv, n_val) - frac(m_tr, n), frac(m_tv, n_val));
        ensure((r.e_train, r.g_inter, r.g_intra, r.e) == expect, format!("trial {trial}: counts disagree"))?;
        ensure(r.e - (r.g_inter + r.g_intra + r.e_train) == frac(0, 1), format!("trial {trial}: residual"))?;
    }
    Ok("1000 fixtures, residual exactly 0".into())
}

fn brute_concordant(gold: &[usize], pred: &[usize]) -> (i64, i64) {
    // Index of each element in both sequences, then the sign-product rule.
    let n = gold.len();
    let mut ig = vec![0i64; n];
    let mut ip = vec![0i64; n];
    for (i, &x) in gold.iter().enumerate() {
        ig[x] = i as i64;
    }
    for (i, &x) in pred.iter().enumerate() {
        ip[x] = i as i64;
    }
    let mut c = 0;
    let mut pairs = 0;
    for a in 0..n {
        for b in a + 1..n {
            pairs += 1;
            if (ig[a] - ig[b]) * (ip[a] - ip[b]) > 0 {
                c += 1;
            }
        }
    }
    (c, pairs)
}

/// Kendall tau from the inversion count of the predicted positions read in
/// gold order, counted by merge sort.
fn kendall_tau(gold: &[usize], pred: &[usize]) -> Fraction {
    fn inversions(v: &mut Vec<usize>) -> i64 {
        if v.len() < 2 {
            return 0;
        }
        let mut right = v.split_off(v.len() / 2);
        let mut inv = inversions(v) + inversions(&mut right);
        let mut merged = Vec::with_capacity(v.len() + right.len());
        let (mut i, mut j) = (0, 0);
        while i < v.len() && j < right.len() {
            if v[i] <= right[j] {
                merged.push(v[i]);
                i += 1;
            } else {
                inv += (v.len() - i) as i64;
                merged.push(right[j]);
                j += 1;
            }
        }
        merged.extend_from_slice(&v[i..]);
        merged.extend_from_slice(&right[j..]);
        *v = merged;
        inv
    }
    let n = gold.len() as i64;
    let mut pos = vec![0usize; gold.len()];
    for (i, &x) in pred.iter().enumerate() {
        pos[x] = i;
    }
    let mut seq: Vec<usize> = gold.iter().map(|&x| pos[x]).collect();
    let p = n * (n - 1) / 2;
    frac(p - 2 * inversions(&mut seq), p)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn tdr_case(names: &[String], gold: &[usize], pred: &[usize]) -> Result<(), String> {
    let to_ranking = |perm: &[usize]| Ranking::new("src", perm.iter().map(|&i| names[i].clone()).collect()).unwrap();
    let c = tdr_concordance(&to_ranking(gold), &to_ranking(pred)).map_err(|e| e.to_string())?;
    let engine = frac(c.concordant as i64, c.pairs as i64);
    let (bc, bp) = brute_concordant(gold, pred);
    let tau = (kendall_tau(gold, pred) + frac(1, 1)) / frac(2, 1);
    ensure(
        engine == frac(bc, bp) && engine == tau && c.accuracy() == bc as f64 / bp as f64,
        format!("{gold:?} vs {pred:?}: engine {engine}, brute {bc}/{bp}, tau {tau}"),
    )
}

fn tdr_oracles() -> Check {
    let mut checked = 0usize;
    for n in 2..=6 {
        let names: Vec<String> = (0..n).map(|i| format!("l{i}")).collect();
        let perms = permutations(n);
        if n <= 5 {
            for g in &perms {
                for p in &perms {
                    tdr_case(&names, g, p)?;
                    checked += 1;
                }
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            for _ in 0..50_000 {
                let g = perms.choose(&mut rng).unwrap();
                let p = perms.choose(&mut rng).unwrap();
                tdr_case(&names, g, p)?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} ranking pairs (all for n<=5, 50000 sampled at n=6)"))
}

fn memorizer() -> Check {
    let cfg = sim(&[("de", 1.0)], &[(1, 0.0)], 0.0, 3, 5000, 5000, vec![0, 1, 2]);
    let pool = simulate_pool(&cfg).map_err(|e| e.to_string())?;
    let dir = Direction::new("en", "de");
    let acc = final_target_accuracy(&pool, &dir).map_err(|e| e.to_string())?;
    let value = igap(&pool, &dir, 0.0, 0.001).map_err(|e| e.to_string())?.value_f64().ok_or("no IGap")?;
    ensure((acc - 1.0 / 3.0).abs() <= 0.02, format!("target accuracy {acc}"))?;
    ensure((value - 2.0 / 3.0).abs() <= 0.02, format!("IGap {value}"))?;
    Ok(format!("target accuracy {acc:.4}, IGap {value:.4}"))
}

fn random_config(rng: &mut ChaCha8Rng) -> SimConfig {
    let k = rng.random_range(2..=5);
    let n_targets = rng.random_range(1..=3);
    let targets: Vec<(String, f64)> = (0..n_targets).map(|i| (format!("t{i}"), rng.random_range(0.0..=1.0))).collect();
    let mut p: f64 = rng.random_range(0.0..0.5);
    let schedule: Vec<(u64, f64)> = (0..rng.random_range(1..=3))
        .map(|i| {
            let e = (i as u64 + 1) * 100;
            let entry = (e, p);
            p *= rng.random_range(0.0..=1.0);
            entry
        })
        .collect();
    let g = rng.random_range(0.0..0.3);
    let seeds: Vec<i64> = (0..rng.random_range(1..=2)).map(|s| s + rng.random_range(0..1000) * 2).collect();
    let t: Vec<(&str, f64)> = targets.iter().map(|(c, d)| (c.as_str(), *d)).collect();
    let mut cfg = sim(&t, &schedule, g, k, 2000, 2000, seeds);
    cfg.data_seed = rng.random_range(0..1_000_000);
    cfg
}

fn oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let (mut total, mut failures) = (0usize, 0usize);
    for _ in 0..50 {
        let cfg = random_config(&mut rng);
        let pool = simulate_pool(&cfg).map_err(|e| e.to_string())?;
        let (n_tr, n_val) = (cfg.n_train as f64, cfg.n_val as f64);
        let k = f64::from(cfg.num_labels);
        for t in &cfg.target_languages {
            let delta = t.transfer_loss;
            for r in decompose_pool(&pool, &Direction::new("en", t.code.clone())).map_err(|e| e.to_string())? {
                let m = expected_metrics(&cfg, r.step, &t.code).map_err(|e| e.to_string())?;
                let p = m.e_train;
                let bern = |q: f64, n: f64| (q * (1.0 - q) / n).sqrt();
                // d = 1{translated wrong} - 1{source wrong}
                let d2 = m.err_translated + p - 2.0 * p * (1.0 - delta / k);
                let se_inter = ((d2 - m.g_inter * m.g_inter).max(0.0) / n_tr).sqrt();
                let se_intra = (bern(m.e, n_val).powi(2) + bern(m.err_translated, n_tr).powi(2)).sqrt();
                let checks = [
                    (igap_core::metrics::to_f64(r.e_train), m.e_train, bern(p, n_tr)),
                    (igap_core::metrics::to_f64(r.g_inter), m.g_inter, se_inter),
                    (igap_core::metrics::to_f64(r.g_intra), m.g_intra, se_intra),
                    (igap_core::metrics::to_f64(r.e), m.e, bern(m.e, n_val)),
                ];
                for (got, want, se) in checks {
                    total += 1;
                    if (got - want).abs() > 4.0 * se + 1e-12 {
                        failures += 1;
                    }
                }
            }
        }
    }
    let rate = failures as f64 / total as f64;
    ensure(rate <= 0.02, format!("{failures}/{total} components outside 4 SE"))?;
    Ok(format!("{failures}/{total} components outside 4 SE"))
}

fn planted_ordering() -> Check {
    let deltas = [("a", 0.05), ("b", 0.10), ("c", 0.20), ("d", 0.30), ("e", 0.40)];
    let planted = Ranking::new("en", deltas.iter().map(|(c, _)| c.to_string()).collect()).unwrap();
    let mut perfect = 0;
    for trial in 0..100 {
        let mut cfg = sim(&deltas, &[(1, 0.05), (2, 0.0)], 0.05, 3, 2000, 200, vec![trial]);
        cfg.data_seed = trial;
        let pool = simulate_pool(&cfg).map_err(|e| e.to_string())?;
        let mut scores = BTreeMap::new();
        for (code, _) in deltas {
            let r = igap(&pool, &Direction::new("en", code), 0.0, 0.001).map_err(|e| e.to_string())?;
            scores.insert(code.to_string(), r.value_f64().ok_or("empty IGap window")?);
        }
        let table = ScoreTable::new("en", scores, ScoreDirection::LowerIsBetter).map_err(|e| e.to_string())?;
        let predicted = rank_by_scores(&table).map_err(|e| e.to_string())?;
        if tdr_concordance(&planted, &predicted).map_err(|e| e.to_string())?.accuracy() == 1.0 {
            perfect += 1;
        }
    }
    ensure(perfect >= 95, format!("{perfect}/100 trials with TDR accuracy 1"))?;
    Ok(format!("{perfect}/100 trials with TDR accuracy 1"))
}

fn epsilon_monotonicity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let grid: Vec<f64> = (0..9).map(|i| 0.2 - 0.025 * i as f64).collect();
    let epsilons: Vec<f64> = (0..7).map(|i| 0.001 * f64::from(1 << i)).collect();
    let mut comparisons = 0;
    for trial in 0..100 {
        let pool = random_pool(&mut rng, 200, 50, 3, 30);
        let reports = decompose_pool(&pool, &Direction::new("en", "de")).map_err(|e| e.to_string())?;
        for &e_prime in &grid {
            let mut prev: Option<Fraction> = None;
            for &eps in &epsilons {
                let v = igap_core::metrics::igap_from_reports(&reports, e_prime, eps).map_err(|e| e.to_string())?.value;
                if let Some(p) = prev {
                    comparisons += 1;
                    ensure(v.is_some_and(|v| v <= p), format!("pool {trial}, e' {e_prime}, eps {eps}: {v:?} after {p}"))?;
                }
                prev = v.or(prev);
            }
        }
    }
    Ok(format!("0 violations in {comparisons} comparisons"))
}

fn random_labels() -> Check {
    let pairs: Vec<SentencePair> = (0..10_000)
        .map(|i| SentencePair { example_id: format!("flores-{i:05}"), text_a: format!("sentence {i}"), text_b: format!("Satz {i}") })
        .collect();
    let corpus = ParallelCorpus::new("en", "de", pairs).map_err(|e| e.to_string())?;
    let labeled = gen_random_labels(&corpus, 2023, 2).map_err(|e| e.to_string())?;
    let (a, b) = labeled.eval_sets();
    ensure(a.role == Role::SourceTrain && b.translation_of.as_deref() == Some(a.eval_set_id.as_str()), "linkage")?;
    let consistent = a.labels.iter().zip(&b.labels).filter(|(x, y)| x.example_id == y.example_id && x.label == y.label).count();
    ensure(consistent == 10_000, format!("{consistent}/10000 consistent pairs"))?;
    let ones = a.labels.iter().filter(|l| l.label == 1).count() as f64 / 10_000.0;
    ensure((ones - 0.5).abs() <= 0.015, format!("fraction of label 1 = {ones}"))?;
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    labeled.write(d1.path()).map_err(|e| e.to_string())?;
    gen_random_labels(&corpus, 2023, 2).unwrap().write(d2.path()).map_err(|e| e.to_string())?;
    for f in ["en-random.jsonl", "de-random.jsonl", "eval_sets.json"] {
        ensure(std::fs::read(d1.path().join(f)).unwrap() == std::fs::read(d2.path().join(f)).unwrap(), format!("{f} differs"))?;
    }
    Ok(format!("10000/10000 consistent, label-1 fraction {ones:.4}, files identical"))
}

fn corruption() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9000);
    let set = random_pool(&mut rng, 9000, 1, 3, 0).eval_set("en-train").unwrap().clone();
    let all = corrupt_labels(&set, 1.0, 17).map_err(|e| e.to_string())?;
    let agree = set.labels.iter().zip(&all.labels).filter(|(a, b)| a.label == b.label).count() as f64 / 9000.0;
    ensure((agree - 1.0 / 3.0).abs() <= 0.015, format!("agreement {agree}"))?;
    let none = corrupt_labels(&set, 0.0, 17).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().unwrap();
    write_labels(&dir.path().join("a.jsonl"), &set.labels).unwrap();
    write_labels(&dir.path().join("b.jsonl"), &none.labels).unwrap();
    ensure(std::fs::read(dir.path().join("a.jsonl")).unwrap() == std::fs::read(dir.path().join("b.jsonl")).unwrap(), "ratio 0 changed bytes")?;
    Ok(format!("ratio 1 agreement {agree:.4}; ratio 0 byte-identical"))
}

fn golden_fixture() -> Check {
    let pool: CheckpointPool = igap_core::data::load_pool(&golden_manifest()).map_err(|e| e.to_string())?;
    ensure(pool.checkpoints.len() == 3 && pool.eval_sets.len() == 3, "fixture shape")?;
    let expect: BTreeMap<&str, (Fraction, Fraction, Fraction, Fraction)> = [
        ("seed0-step100", (frac(0, 1), frac(1, 4), frac(3, 20), frac(2, 5))),
        ("seed0-step200", (frac(0, 1), frac(0, 1), frac(1, 5), frac(1, 5))),
        ("seed1-step100", (frac(1, 4), frac(1, 4), frac(-1, 10), frac(2, 5))),
    ]
    .into_iter()
    .collect();
    let reports = decompose_pool(&pool, &Direction::new("en", "de")).map_err(|e| e.to_string())?;
    for r in &reports {
        let got = (r.e_train, r.g_inter, r.g_intra, r.e);
        ensure(expect[r.checkpoint_id.as_str()] == got, format!("{}: {got:?}", r.checkpoint_id))?;
        ensure(r.transfer_gap.is_none(), "unexpected transfer gap")?;
    }

    let manifest = golden_manifest().display().to_string();
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap().to_string();
        for format in ["csv", "plot-json"] {
            let code = igap_core::cli::run(["igap", "decompose", "--manifest", &manifest, "--out", &out, "--format", format]);
            ensure(code == 0, format!("decompose --format {format} exited {code}"))?;
        }
        let csv = std::fs::read(dir.path().join("decompose.csv")).unwrap();
        let json = std::fs::read(dir.path().join("decompose.json")).unwrap();
        runs.push((csv, json));
    }
    ensure(runs[0] == runs[1], "outputs differ between runs")?;
    ensure(runs[0].0 == std::fs::read(golden_expected("decompose.csv")).unwrap(), "csv differs from committed copy")?;
    ensure(runs[0].1 == std::fs::read(golden_expected("decompose.json")).unwrap(), "plot-json differs from committed copy")?;
    Ok("hand values exact; csv and plot-json byte-identical across runs".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("decomposition identity", decomposition_identity, Duration::from_secs(5)),
        ("tdr oracle equivalence", tdr_oracles, Duration::from_secs(30)),
        ("memorization reference point", memorizer, Duration::from_secs(10)),
        ("simulator oracle equivalence", oracle_equivalence, Duration::from_secs(60)),
        ("planted-ordering recovery", planted_ordering, Duration::from_secs(120)),
        ("epsilon monotonicity", epsilon_monotonicity, Duration::from_secs(30)),
        ("random-label protocol", random_labels, Duration::from_secs(5)),
        ("corruption arithmetic", corruption, Duration::from_secs(5)),
        ("ingestion determinism", golden_fixture, Duration::from_secs(10)),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > budget => Err(format!("{detail}; took {elapsed:.2?}, budget {budget:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} ({elapsed:.2?})"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} ({elapsed:.2?})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
