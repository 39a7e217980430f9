use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use scorefollow::io::{write_wav, Pcm};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scorefollow"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn sine_pcm(secs: f64, rate: u32) -> Vec<f32> {
    let n = (secs * f64::from(rate)) as usize;
    (0..n)
        .map(|k| {
            let t = k as f64 / f64::from(rate);
            (0.3 * (2.0 * std::f64::consts::PI * (220.0 + 60.0 * t) * t).sin()) as f32
        })
        .collect()
}

fn synth_ref(dir: &Path, parts: &str) {
    let o = run(&["synth", p(dir), "--seed", "3", "--parts", parts]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["track", "ref", "t.feat", "--model", "hmm"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path().join("ref");
    synth_ref(&r, "2");
    let o = run(&["track", p(&r)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "c = 10\nwindow = 3\n").unwrap();
    let o = run(&["track", p(&r), "x.feat", "--config", p(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn missing_input_is_a_data_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.wav");
    let o = run(&["extract", p(&missing), p(&dir.path().join("out.feat"))]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("nowhere.wav"), "{}", stderr(&o));
}

#[test]
fn extract_writes_hr_and_lr_features() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("a.wav");
    write_wav(&wav, &Pcm { samples: sine_pcm(3.0, 22_050), sample_rate_hz: 22_050 }).unwrap();
    let out = dir.path().join("a.feat");
    let o = run(&["extract", p(&wav), p(&out), "--lr"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let hr = scorefollow::io::read_features(&out).unwrap();
    let lr = scorefollow::io::read_features(&dir.path().join("a.lr.feat")).unwrap();
    assert_eq!((hr.len(), hr.dims()), (300, 20));
    assert_eq!(lr.len(), 10);
    let header = fs::read_to_string(dir.path().join("a.feat.hdr")).unwrap();
    assert!(header.contains("frame_count=300") && header.contains("resolution=hr"));
}

#[test]
fn live_pcm_gives_the_same_reports_as_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path().join("ref");
    synth_ref(&r, "2");
    let pcm = sine_pcm(2.0, 16_000);
    let wav = dir.path().join("t.wav");
    write_wav(&wav, &Pcm { samples: pcm.clone(), sample_rate_hz: 16_000 }).unwrap();
    let from_file = run(&["track", p(&r), p(&wav)]);
    assert_eq!(code(&from_file), 0, "{}", stderr(&from_file));

    let bytes: Vec<u8> = pcm
        .iter()
        .flat_map(|s| ((f64::from(*s) * 32_768.0).round().clamp(-32_768.0, 32_767.0) as i16).to_le_bytes())
        .collect();
    let mut child = bin()
        .args(["track", p(&r), "--live", "--sample-rate", "16000"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let mut stdin = child.stdin.take().unwrap();
        // odd-sized writes exercise samples split across reads
        for chunk in bytes.chunks(777) {
            stdin.write_all(chunk).unwrap();
        }
    }
    let live = child.wait_with_output().unwrap();
    assert_eq!(code(&live), 0, "{}", stderr(&live));
    assert_eq!(String::from_utf8_lossy(&live.stdout).lines().count(), 200);
    assert_eq!(live.stdout, from_file.stdout);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path().join("ref");
    synth_ref(&r, "2");
    let target = r.join("reference.feat");
    let cfg = dir.path().join("t.cfg");
    fs::write(&cfg, "# baseline only\nmodel = baseline\nc = 500\n").unwrap();
    let base = run(&["track", p(&r), p(&target), "--config", p(&cfg)]);
    assert_eq!(code(&base), 0, "{}", stderr(&base));
    let text = String::from_utf8(base.stdout).unwrap();
    assert!(text.lines().all(|l| l.contains("\"lr_pos\":null")));
    let joint = run(&["track", p(&r), p(&target), "--config", p(&cfg), "--model", "joltw+lr"]);
    let text = String::from_utf8(joint.stdout).unwrap();
    assert!(text.lines().any(|l| !l.contains("\"lr_pos\":null")));
}

fn pipeline(root: &Path) -> Vec<u8> {
    let r = root.join("ref");
    synth_ref(&r, "4");
    let versions = root.join("versions");
    let o = run(&["simulate", p(&r), p(&versions), "--versions", "2", "--seed", "9", "--applause-every", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for k in 0..2 {
        let v = versions.join(format!("version_{k:02}"));
        let script: serde_json::Value = serde_json::from_str(&fs::read_to_string(v.join("script.json")).unwrap()).unwrap();
        let ratio = script["removal_ratio"].as_f64().unwrap();
        assert!((1.0 / 3.0..=2.0 / 3.0).contains(&ratio));
        let o = run(&[
            "track",
            p(&r),
            p(&v.join("features.feat")),
            "--out",
            p(&v.join("reports.jsonl")),
            "--strict",
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let metrics = root.join("metrics.json");
    let o = run(&[
        "evaluate",
        "--aggregate",
        p(&versions),
        p(&r.join("annotations.csv")),
        "--label",
        "joltw+lr",
        "--json",
        p(&metrics),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("mean"));
    fs::read(metrics).unwrap()
}

#[test]
fn the_pipeline_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path());
    assert_eq!(first, pipeline(b.path()));
    let v: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(v["mean"]["model"], "joltw+lr");
    assert_eq!(v["versions"].as_array().unwrap().len(), 2);
}

#[test]
fn single_evaluation_and_length_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path().join("ref");
    synth_ref(&r, "3");
    let versions = dir.path().join("v");
    let o = run(&["simulate", p(&r), p(&versions), "--versions", "1", "--no-render"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = versions.join("version_00");
    let reports = v.join("reports.jsonl");
    let o = run(&["track", p(&r), p(&v.join("features.feat")), "-o", p(&reports)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ann = r.join("annotations.csv");
    let json = dir.path().join("m.json");
    let o = run(&["evaluate", p(&reports), p(&v.join("truth.csv")), p(&ann), "--json", p(&json)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    for key in ["model", "part_acc", "bar_acc", "at5_acc", "frames"] {
        assert!(m.get(key).is_some(), "{key} missing");
    }

    let text = fs::read_to_string(&reports).unwrap();
    let short: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    fs::write(&reports, short).unwrap();
    let o = run(&["evaluate", p(&reports), p(&v.join("truth.csv")), p(&ann)]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("length mismatch"), "{}", stderr(&o));
}

#[test]
fn zero_versions_make_an_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path().join("ref");
    synth_ref(&r, "3");
    let out = dir.path().join("none");
    let o = run(&["simulate", p(&r), p(&out), "--versions", "0"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_dir(&out).unwrap().count(), 0);
}

#[test]
fn oracle_dtw_emits_one_line_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path().join("ref");
    synth_ref(&r, "1");
    let target = dir.path().join("t.feat");
    let reference = scorefollow::io::read_features(&r.join("reference.feat")).unwrap();
    scorefollow::io::write_features(&target, &reference.slice(100..400)).unwrap();
    let o = run(&["oracle", "dtw", p(&r), p(&target), "--start", "100"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let lines: Vec<serde_json::Value> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 300);
    assert_eq!(lines[299]["score_frame"], 399);
    let o = run(&["oracle", "dtw", p(&r), p(&target), "--cap", "10"]);
    assert_eq!(code(&o), 3);
}
