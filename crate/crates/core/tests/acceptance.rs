//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line and then
//! asserts. Tests hold a shared lock so timings are not disturbed by siblings.

mod common;

use std::sync::{Arc, Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scorefollow::corpus::{build_corpus, evaluate_corpus, CorpusParams, CorpusReport};
use scorefollow::eval_oracle::{evaluate, offline_dtw, DEFAULT_CELL_CAP};
use scorefollow::features::lr_frame_count;
use scorefollow::hr_tracker::{HrConfig, HrTracker, INF};
use scorefollow::lr_tracker::LrTracker;
use scorefollow::mismatch_sim::{EditOp, GroundTruth, TruthLabel};
use scorefollow::synth::{shaped_reference, synth_reference, PerfParams, ScoreParams};
use scorefollow::{run_tracking, Model, PositionReport, TrackerConfig};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: u32, name: &str, ok: bool, detail: String) {
    println!("{} criterion {n} ({name}): {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

fn full_models() -> Vec<Model> {
    Model::ALL.to_vec()
}

fn corpus_report() -> &'static CorpusReport {
    static REPORT: OnceLock<CorpusReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        let corpus = build_corpus(&CorpusParams::default()).unwrap();
        evaluate_corpus(&corpus, &full_models(), &TrackerConfig::default()).unwrap()
    })
}

#[test]
fn criterion_1_oracle_equivalence() {
    let _g = serial();
    let t0 = Instant::now();
    let perf_params = PerfParams {
        tempo: (0.5, 1.5),
        noise: 0.1,
        ..PerfParams::default()
    };
    let (mut close, mut total) = (0usize, 0usize);
    let mut worst = 100.0f64;
    for seed in 0..20u64 {
        let r = Arc::new(
            synth_reference(
                1_000 + seed,
                &ScoreParams {
                    parts: 1,
                    part_len: (1_500, 2_000),
                    ..ScoreParams::default()
                },
            )
            .unwrap(),
        );
        let perf = common::perform(&r, Vec::new(), 1_000 + seed, &perf_params);
        let offline = offline_dtw(&r.hr, &perf.features, None, 0, DEFAULT_CELL_CAP).unwrap();
        let reports = run_tracking(Arc::clone(&r), &perf.features, &TrackerConfig::for_model(Model::Baseline)).unwrap();
        let hits = reports
            .iter()
            .zip(&offline.forward)
            .filter(|(rep, &f)| rep.hr_pos.abs_diff(f) <= 5)
            .count();
        worst = worst.min(100.0 * hits as f64 / reports.len() as f64);
        close += hits;
        total += reports.len();
    }
    let share = 100.0 * close as f64 / total as f64;
    let elapsed = t0.elapsed();
    verdict(
        1,
        "oracle equivalence",
        share >= 95.0 && elapsed < Duration::from_secs(30),
        format!(
            "{share:.2}% of {total} frames within 5 of offline DTW (worst pair {worst:.2}%), {:.1} s",
            elapsed.as_secs_f64()
        ),
    );
}

/// Fraction of frames at or after `from` whose reported part matches the truth.
fn part_share(reports: &[PositionReport], truth: &GroundTruth, from: usize) -> f64 {
    let scored: Vec<bool> = (from..reports.len())
        .filter_map(|j| truth.labels[j].map(|l| reports[j].part_id == Some(l.part_id)))
        .collect();
    if scored.is_empty() {
        return 1.0;
    }
    scored.iter().filter(|b| **b).count() as f64 / scored.len() as f64
}

#[test]
fn criterion_2_jump_recovery() {
    let _g = serial();
    let mut ok_runs = 0;
    let mut worst = 1.0f64;
    let mut failures = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2_000 + seed);
        let skip = rng.random_range(1..=6u32);
        let after = rng.random_range(1..=9 - skip);
        let r = Arc::new(common::ten_part_reference(2_000 + seed));
        let ops = (after + 1..=after + skip).map(|part_id| EditOp::RemovePart { part_id }).collect();
        let perf = common::perform(&r, ops, 2_000 + seed, &PerfParams::default());
        let landed = after + skip + 1;
        let splice = common::first_frame_of(&perf, landed, 0).unwrap();
        let reports = run_tracking(Arc::clone(&r), &perf.features, &TrackerConfig::for_model(Model::Joltw)).unwrap();
        let found = (splice..(splice + 200).min(reports.len())).find(|&j| reports[j].part_id == Some(landed));
        let share = found.map_or(0.0, |f| part_share(&reports, &perf.truth, f));
        worst = worst.min(share);
        if found.is_some() && share >= 0.95 {
            ok_runs += 1;
        } else {
            failures.push(format!("seed {seed}: skip {skip} after part {after}, found {found:?}, share {share:.3}"));
        }
    }
    verdict(
        2,
        "JOLTW jump recovery",
        ok_runs == 20,
        format!(
            "{ok_runs}/20 skips recovered within 200 frames, worst later share {:.1}% {}",
            100.0 * worst,
            failures.join("; ")
        ),
    );
}

#[test]
fn criterion_3_repetition_recovery() {
    let _g = serial();
    let mut detected = 0;
    let mut missed = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3_000 + seed);
        let part = rng.random_range(1..=10u32);
        let r = Arc::new(common::ten_part_reference(3_000 + seed));
        let perf = common::perform(&r, vec![EditOp::RepeatPart { part_id: part }], 3_000 + seed, &PerfParams::default());
        let src = |j: usize| perf.source_frames[j].unwrap();
        let again = (1..perf.features.len()).find(|&j| src(j) + 100 < src(j - 1)).unwrap();
        let reports = run_tracking(Arc::clone(&r), &perf.features, &TrackerConfig::for_model(Model::Joltw)).unwrap();
        let hit = (again..(again + 200).min(reports.len()))
            .any(|j| reports[j].part_id == Some(part) && reports[j].final_pos.abs_diff(src(j)) <= 100);
        if hit {
            detected += 1;
        } else {
            missed.push(format!("seed {seed} part {part}"));
        }
    }
    verdict(
        3,
        "repetition recovery",
        detected >= 18,
        format!("{detected}/20 backward jumps detected within 200 frames {}", missed.join(", ")),
    );
}

#[test]
fn criterion_4_model_ordering() {
    let _g = serial();
    let report = corpus_report();
    println!("{}", report.to_table());
    let acc = |m: Model| report.model(m).unwrap().part_acc;
    let (b, j, bl, jl) = (acc(Model::Baseline), acc(Model::Joltw), acc(Model::BaselineLr), acc(Model::JoltwLr));
    let ok = b < j && j < jl && b < bl && bl < jl && jl - b >= 30.0;
    verdict(
        4,
        "model ordering",
        ok,
        format!("part-wise baseline {b:.2} < joltw {j:.2}, baseline+lr {bl:.2} < joltw+lr {jl:.2}, gap {:.2}", jl - b),
    );
}

#[test]
fn criterion_5_rf_precision() {
    let _g = serial();
    let lr = corpus_report().lr.as_ref().unwrap();
    let (all, rel, unrel) = (lr.all.part_acc, lr.reliable.part_acc, lr.unreliable.part_acc);
    verdict(
        5,
        "rf precision",
        rel >= all + 5.0 && rel > 90.0 && rel > unrel,
        format!(
            "LR part-wise {all:.2}, rf=1 {rel:.2} on {:.1}% of frames, rf=0 {unrel:.2}",
            lr.reliable_share
        ),
    );
}

fn percentile(sorted: &[Duration], p: f64) -> Duration {
    sorted[((sorted.len() - 1) as f64 * p).round() as usize]
}

#[test]
fn criterion_6_real_time_budget() {
    let _g = serial();
    let r = Arc::new(shaped_reference(6, 559_038, 55, 2_877, 20).unwrap());
    let steps = 10_000;

    // HR tracker crossing a part boundary, so hypothesis mode is exercised
    let first_end = r.parts.parts()[0].end;
    let start = first_end - steps / 2;
    let mut hr = HrTracker::new(Arc::clone(&r), HrConfig::default(), start).unwrap();
    let mut hr_times = Vec::with_capacity(steps);
    for j in 0..steps {
        let y = r.hr.frame(start + j);
        let t = Instant::now();
        hr.step(y).unwrap();
        hr_times.push(t.elapsed());
    }
    hr_times.sort_unstable();
    let hr_mean = hr_times.iter().sum::<Duration>() / steps as u32;
    let hr_p99 = percentile(&hr_times, 0.99);

    let mut lr = LrTracker::new(Arc::clone(&r));
    let mut lr_total = Duration::ZERO;
    for l in 0..steps {
        let y = r.lr.frame(l % r.lr_len());
        let t = Instant::now();
        lr.push(y).unwrap();
        lr_total += t.elapsed();
    }
    let lr_mean = lr_total / steps as u32;
    let ms = |d: Duration| d.as_secs_f64() * 1e3;
    verdict(
        6,
        "real-time budget",
        hr_mean < Duration::from_millis(10) && hr_p99 < Duration::from_millis(20) && lr_mean < Duration::from_millis(100),
        format!(
            "M = {}, N_LR = {}, c = 4000: HR mean {:.3} ms, p99 {:.3} ms; LR mean {:.2} ms over {steps} steps each",
            r.hr_len(),
            r.lr_len(),
            ms(hr_mean),
            ms(hr_p99),
            ms(lr_mean)
        ),
    );
}

fn d30_matches_brute_force() -> bool {
    let dims = 4;
    let n = 500;
    let score = common::wave_features(n * 30, dims, 0.6);
    let bounds = [(0, 160 * 30 - 1), (160 * 30, 330 * 30 - 1), (330 * 30, n * 30 - 1)];
    let r = common::annotated(score, &bounds, 300);
    let (starts, ends): (Vec<usize>, Vec<usize>) = r.parts.lr_bounds().iter().copied().unzip();
    let target: Vec<Vec<f32>> = common::wave_features(45, dims, 2.4).frames().map(<[f32]>::to_vec).collect();
    let rows = common::cost_rows(&r.lr, &target);
    let mut lr = LrTracker::new(Arc::clone(&r));
    let mut ok = true;
    for (j, y) in target.iter().enumerate() {
        lr.push(y).unwrap();
        let first = (j + 1).saturating_sub(30);
        let want = common::diagonal_memo(&rows[first..=j], &starts, &ends);
        ok &= lr.diagonal_costs().iter().zip(&want).all(|(&a, &b)| {
            if b.is_infinite() {
                a >= INF
            } else {
                (a - b).abs() < 1e-9 * (1.0 + b)
            }
        });
    }
    // the short window can also be enumerated exhaustively
    let short = &rows[..6];
    let brute = common::diagonal_exhaustive(short, &starts, &ends);
    let memo = common::diagonal_memo(short, &starts, &ends);
    ok && brute.iter().zip(&memo).all(|(a, b)| a == b || (a - b).abs() < 1e-9)
}

fn joltw_equals_baseline_away_from_boundaries() -> bool {
    let hr = common::wave_features(12_000, 6, 0.3);
    let r = common::annotated(hr, &[(0, 8_999), (9_000, 11_999)], 200);
    let y = common::wave_features(4_000, 6, 0.3);
    let run = |jumps: bool| {
        let mut t = HrTracker::new(Arc::clone(&r), HrConfig { c: 1_000, jumps, ..HrConfig::default() }, 0).unwrap();
        y.frames().map(|f| t.step(f).unwrap()).collect::<Vec<_>>()
    };
    run(true) == run(false)
}

fn evaluate_identities() -> bool {
    let r = common::annotated(common::wave_features(2_000, 2, 0.1), &[(0, 999), (1_000, 1_999)], 100);
    let src: Vec<usize> = (0..2_000).collect();
    let truth = GroundTruth {
        labels: src
            .iter()
            .map(|&s| r.locate(s).map(|l| TruthLabel { part_id: l.part_id, bar_id: l.bar_id }))
            .collect(),
    };
    let reports = |pos: &dyn Fn(usize) -> usize| -> Vec<PositionReport> {
        src.iter()
            .map(|&s| PositionReport {
                target_frame: s,
                hr_pos: pos(s),
                lr_pos: None,
                lr_interval: None,
                rf: false,
                final_pos: pos(s),
                part_id: None,
                bar_id: None,
                reset_flag: false,
            })
            .collect()
    };
    let exact = evaluate(&reports(&|s| s), &truth, &r).unwrap();
    // one bar off, inside the same part
    let shifted = evaluate(&reports(&|s| if s % 1_000 < 900 { s + 100 } else { s - 100 }), &truth, &r).unwrap();
    (exact.part_acc, exact.bar_acc, exact.at5_acc) == (100.0, 100.0, 100.0)
        && (shifted.part_acc, shifted.bar_acc, shifted.at5_acc) == (100.0, 0.0, 100.0)
}

fn lr_counts_match() -> bool {
    [(559_038usize, 18_652f64), (508_849, 16_979.0)]
        .iter()
        .all(|&(hr, want)| (lr_frame_count(hr) as f64 - want).abs() / want <= 0.002)
}

#[test]
fn criterion_7_invariant_suites() {
    let _g = serial();
    let checks = [
        ("D30 brute force on N_LR = 500", d30_matches_brute_force()),
        ("JOLTW = baseline away from boundaries", joltw_equals_baseline_away_from_boundaries()),
        ("evaluate identities", evaluate_identities()),
        ("LR frame counts within 0.2%", lr_counts_match()),
    ];
    let detail: Vec<String> = checks
        .iter()
        .map(|(name, ok)| format!("{name}: {}", if *ok { "ok" } else { "broken" }))
        .collect();
    verdict(7, "invariant suites", checks.iter().all(|c| c.1), detail.join(", "));
}

#[test]
fn criterion_8_determinism() {
    let _g = serial();
    let first = corpus_report().to_json();
    let corpus = build_corpus(&CorpusParams::default()).unwrap();
    let second = evaluate_corpus(&corpus, &full_models(), &TrackerConfig::default()).unwrap().to_json();
    verdict(
        8,
        "determinism",
        first == second,
        format!("two full runs produced {} and {} bytes of metrics JSON, identical: {}", first.len(), second.len(), first == second),
    );
}
