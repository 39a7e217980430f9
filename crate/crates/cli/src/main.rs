//! `scorefollow` command-line front end.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 real-time budget
//! violated under `track --strict`.

use std::fs;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use scorefollow::config::{read_config, ConfigOverrides};
use scorefollow::corpus::{build_corpus, evaluate_corpus, simulate_versions, CorpusParams};
use scorefollow::eval_oracle::{evaluate_annotated, offline_dtw, Metrics, DEFAULT_CELL_CAP};
use scorefollow::features::{downsample_lr, extract_mfcc, MfccConfig, MfccStream};
use scorefollow::integrator::parse_reports;
use scorefollow::io::{read_features, read_wav, write_features};
use scorefollow::mismatch_sim::{apply_script, generate_script, GroundTruth, SimParams, MAX_REMOVAL_RATIO, MIN_REMOVAL_RATIO};
use scorefollow::score_model::{format_annotations, lr_sibling, read_annotations};
use scorefollow::synth::{recitative_parts, synth_reference, PerfParams, ScoreParams};
use scorefollow::{load_reference, Integrator, LrAnchor, Model, ScoreReference, TrackerConfig};

const REFERENCE_FEATURES: &str = "reference.feat";
const ANNOTATIONS: &str = "annotations.csv";
const VERSION_FEATURES: &str = "features.feat";
const VERSION_SCRIPT: &str = "script.json";
const VERSION_TRUTH: &str = "truth.csv";
const REPORTS: &str = "reports.jsonl";

const HR_BUDGET: Duration = Duration::from_millis(10);
const LR_BUDGET: Duration = Duration::from_millis(300);

#[derive(Parser)]
#[command(name = "scorefollow", version, about = "Real-time score following with structural-mismatch handling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract HR MFCC features from a WAV file.
    Extract {
        audio: PathBuf,
        out: PathBuf,
        /// Also write LR features next to the output (`name.lr.ext`).
        #[arg(long)]
        lr: bool,
    },
    /// Write a synthetic annotated reference directory.
    Synth {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        parts: usize,
        /// Every n-th part is a recitative (0 disables).
        #[arg(long, default_value_t = 3)]
        recitative_every: usize,
    },
    /// Generate structurally edited versions of a reference directory.
    Simulate {
        ref_dir: PathBuf,
        out_dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        versions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Parts followed by applause are every n-th; the repetition is drawn from them.
        #[arg(long, default_value_t = 5)]
        applause_every: usize,
        /// Unscored segments inserted per version.
        #[arg(long, default_value_t = 0)]
        insertions: usize,
        /// Write the edited features as is, without tempo changes and noise.
        #[arg(long)]
        no_render: bool,
    },
    /// Track a target against a reference directory, one JSON report per frame.
    Track(TrackArgs),
    /// Score reports against ground truth.
    Evaluate(EvaluateArgs),
    /// Offline alignments and full synthetic experiments.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Args)]
struct TrackArgs {
    ref_dir: PathBuf,
    /// Target feature file, or a `.wav` file.
    target: Option<PathBuf>,
    /// Read signed 16-bit little-endian mono PCM from standard input.
    #[arg(long)]
    live: bool,
    #[arg(long, default_value_t = 22_050)]
    sample_rate: u32,
    #[arg(long)]
    model: Option<Model>,
    #[arg(long)]
    c: Option<usize>,
    #[arg(long)]
    start: Option<usize>,
    #[arg(long)]
    refractory: Option<usize>,
    /// Report the LR position while the LR tracker is unreliable.
    #[arg(long)]
    lr_final_when_unreliable: bool,
    #[arg(long)]
    lr_anchor: Option<LrAnchor>,
    /// `key = value` file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (standard output by default).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Exit with status 4 when the mean step times exceed the real-time budget.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    reports: Option<PathBuf>,
    truth: Option<PathBuf>,
    annotations: Option<PathBuf>,
    /// Average over every version directory below this one; the only
    /// positional argument is then the annotation file.
    #[arg(long)]
    aggregate: Option<PathBuf>,
    /// Report file name inside each version directory.
    #[arg(long, default_value = REPORTS)]
    reports_name: String,
    /// Label stored in the `model` field of the JSON output.
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Offline DTW of a target against a reference; one line per target frame.
    Dtw {
        ref_dir: PathBuf,
        target: PathBuf,
        /// Allow jumps from part ends to part starts.
        #[arg(long)]
        jumps: bool,
        #[arg(long, default_value_t = 0)]
        start: usize,
        #[arg(long, default_value_t = DEFAULT_CELL_CAP)]
        cap: usize,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Build a synthetic corpus and evaluate every model on it.
    Corpus {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        versions: usize,
        /// Comma-separated models (default: all four).
        #[arg(long, value_delimiter = ',')]
        models: Vec<Model>,
        #[arg(long, default_value_t = 4000)]
        c: usize,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
    Budget(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<scorefollow::Error> for Failure {
    fn from(e: scorefollow::Error) -> Self {
        Failure::Data(e.into())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Extract { audio, out, lr } => extract(&audio, &out, lr),
        Command::Synth {
            out_dir,
            seed,
            parts,
            recitative_every,
        } => synth(&out_dir, seed, parts, recitative_every),
        Command::Simulate {
            ref_dir,
            out_dir,
            versions,
            seed,
            applause_every,
            insertions,
            no_render,
        } => simulate(&ref_dir, &out_dir, versions, seed, applause_every, insertions, no_render),
        Command::Track(args) => track(&args),
        Command::Evaluate(args) => evaluate_cmd(&args),
        Command::Oracle(cmd) => oracle(cmd),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
        Err(Failure::Budget(msg)) => {
            eprintln!("real-time budget exceeded: {msg}");
            ExitCode::from(4)
        }
    }
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_ref_dir(dir: &Path) -> Result<ScoreReference, Failure> {
    Ok(load_reference(&dir.join(REFERENCE_FEATURES), &dir.join(ANNOTATIONS))?)
}

fn extract(audio: &Path, out: &Path, lr: bool) -> CmdResult {
    let pcm = read_wav(audio).with_context(|| format!("reading {}", audio.display()))?;
    let hr = extract_mfcc(&pcm.samples, pcm.sample_rate_hz, &MfccConfig::default())?;
    write_features(out, &hr)?;
    eprintln!("{}: {} HR frames", out.display(), hr.len());
    if lr {
        let path = lr_sibling(out);
        let lr = downsample_lr(&hr)?;
        write_features(&path, &lr)?;
        eprintln!("{}: {} LR frames", path.display(), lr.len());
    }
    Ok(())
}

fn synth(out_dir: &Path, seed: u64, parts: usize, recitative_every: usize) -> CmdResult {
    if parts == 0 {
        return Err(Failure::Usage("--parts must be positive".into()));
    }
    let params = ScoreParams {
        parts,
        recitative_every,
        ..CorpusParams::default().score
    };
    let r = synth_reference(seed, &params)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let features = out_dir.join(REFERENCE_FEATURES);
    write_features(&features, &r.hr)?;
    write_features(&lr_sibling(&features), &r.lr)?;
    fs::write(out_dir.join(ANNOTATIONS), format_annotations(&r.parts, &r.bars))?;
    eprintln!("{}: {} frames, {} parts, {} bars", out_dir.display(), r.hr_len(), r.parts.len(), r.bars.len());
    Ok(())
}

fn simulate(
    ref_dir: &Path,
    out_dir: &Path,
    versions: usize,
    seed: u64,
    applause_every: usize,
    insertions: usize,
    no_render: bool,
) -> CmdResult {
    let r = load_ref_dir(ref_dir)?;
    let mut sim = SimParams::applause_every(applause_every, &r.parts);
    sim.insertions = insertions;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let rendered = if no_render {
        Vec::new()
    } else {
        let perf = PerfParams {
            recitative_parts: recitative_parts(&r.parts),
            ..PerfParams::default()
        };
        simulate_versions(&r, seed, versions, &sim, &perf)?
    };
    for k in 0..versions {
        let dir = out_dir.join(format!("version_{k:02}"));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let (script, features, truth) = match rendered.get(k) {
            Some(v) => (v.script.clone(), v.performance.features.clone(), v.performance.truth.clone()),
            None => {
                let script = generate_script(&r.parts, seed.wrapping_add(k as u64), &sim)?;
                let v = apply_script(&r.hr, &r.parts, &r.bars, &script)?;
                (script, v.features, v.truth)
            }
        };
        write_features(&dir.join(VERSION_FEATURES), &features)?;
        fs::write(dir.join(VERSION_SCRIPT), script.to_json())?;
        fs::write(dir.join(VERSION_TRUTH), truth.to_csv())?;
        debug_assert!((MIN_REMOVAL_RATIO..=MAX_REMOVAL_RATIO).contains(&script.removal_ratio));
        eprintln!("{}: removal ratio {:.3}, {} frames", dir.display(), script.removal_ratio, features.len());
    }
    Ok(())
}

fn tracker_config(args: &TrackArgs) -> Result<TrackerConfig, Failure> {
    let mut cfg = TrackerConfig::default();
    if let Some(path) = &args.config {
        let overrides = read_config(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        overrides.apply(&mut cfg);
    }
    let flags = ConfigOverrides {
        model: args.model,
        c: args.c,
        start: args.start,
        refractory: args.refractory,
        lr_final_when_unreliable: args.lr_final_when_unreliable.then_some(true),
        lr_anchor: args.lr_anchor,
    };
    flags.apply(&mut cfg);
    if cfg.c < 2 {
        return Err(Failure::Usage("--c must be at least 2".into()));
    }
    Ok(cfg)
}

#[derive(Default)]
struct StepTimes {
    hr: Duration,
    hr_steps: u32,
    lr: Duration,
    lr_steps: u32,
}

impl StepTimes {
    fn add(&mut self, integrator: &Integrator) {
        let t = integrator.timing();
        self.hr += t.hr;
        self.hr_steps += 1;
        if let Some(lr) = t.lr {
            self.lr += lr;
            self.lr_steps += 1;
        }
    }

    fn check(&self) -> Result<(), String> {
        let mean = |total: Duration, n: u32| if n == 0 { Duration::ZERO } else { total / n };
        let (hr, lr) = (mean(self.hr, self.hr_steps), mean(self.lr, self.lr_steps));
        log::info!("mean HR step {hr:?}, mean LR step {lr:?}");
        if hr >= HR_BUDGET || lr >= LR_BUDGET {
            return Err(format!("mean HR step {hr:?} (budget {HR_BUDGET:?}), mean LR step {lr:?} (budget {LR_BUDGET:?})"));
        }
        Ok(())
    }
}

fn track(args: &TrackArgs) -> CmdResult {
    if args.live == args.target.is_some() {
        return Err(Failure::Usage("give either a target file or --live".into()));
    }
    let cfg = tracker_config(args)?;
    let reference = Arc::new(load_ref_dir(&args.ref_dir)?);
    if cfg.start >= reference.hr_len() {
        return Err(Failure::Usage(format!("--start {} beyond {} reference frames", cfg.start, reference.hr_len())));
    }
    let mut integrator = Integrator::new(Arc::clone(&reference), cfg)?;
    let mut out = output(args.out.as_deref())?;
    let mut times = StepTimes::default();
    if args.live {
        track_live(&mut integrator, args.sample_rate, &mut out, &mut times)?;
    } else {
        let target = args.target.as_deref().expect("checked above");
        let features = if target.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            let pcm = read_wav(target)?;
            extract_mfcc(&pcm.samples, pcm.sample_rate_hz, &MfccConfig::default())?
        } else {
            read_features(target)?
        };
        if features.dims() != reference.hr.dims() {
            return Err(Failure::Data(anyhow::anyhow!(
                "{}: {} feature dimensions, reference has {}",
                target.display(),
                features.dims(),
                reference.hr.dims()
            )));
        }
        for y in features.frames() {
            let report = integrator.step(y)?;
            times.add(&integrator);
            writeln!(out, "{}", report.to_json_line())?;
        }
    }
    out.flush()?;
    if args.strict {
        times.check().map_err(Failure::Budget)?;
    }
    Ok(())
}

fn track_live(integrator: &mut Integrator, rate: u32, out: &mut dyn Write, times: &mut StepTimes) -> CmdResult {
    let mut stream = MfccStream::new(rate, MfccConfig::default()).map_err(|e| Failure::Usage(e.to_string()))?;
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let mut buf = vec![0u8; 8_192];
    let mut carry: Option<u8> = None;
    let mut samples = Vec::with_capacity(4_096);
    let mut emit = |frames: Vec<scorefollow::features::FrameResult>, out: &mut dyn Write| -> io::Result<()> {
        for f in frames {
            let report = match &f {
                Ok(v) => integrator.push(Ok(v)),
                Err(e) => integrator.push(Err(scorefollow::Error::Invalid(e.to_string()))),
            };
            if let Some(report) = report {
                times.add(integrator);
                writeln!(out, "{}", report.to_json_line())?;
            }
        }
        out.flush()
    };
    loop {
        let n = match input.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        };
        samples.clear();
        let mut bytes = &buf[..n];
        if let Some(lo) = carry.take() {
            samples.push(f32::from(i16::from_le_bytes([lo, bytes[0]])) / 32_768.0);
            bytes = &bytes[1..];
        }
        let mut pairs = bytes.chunks_exact(2);
        samples.extend(pairs.by_ref().map(|b| f32::from(i16::from_le_bytes([b[0], b[1]])) / 32_768.0));
        carry = pairs.remainder().first().copied();
        emit(stream.push(&samples), out)?;
    }
    if carry.is_some() {
        log::warn!("standard input ended inside a sample; last byte dropped");
    }
    emit(stream.finish(), out)?;
    Ok(())
}

fn metrics_json(label: Option<&str>, m: &Metrics) -> serde_json::Value {
    json!({
        "model": label,
        "part_acc": m.part_acc,
        "bar_acc": m.bar_acc,
        "at5_acc": m.at5_acc,
        "frames": m.frames,
    })
}

fn table_row(name: &str, m: &Metrics) -> String {
    format!("{name:<16} {:>8.2} {:>8.2} {:>8.2} {:>9}", m.part_acc, m.bar_acc, m.at5_acc, m.frames)
}

fn table_header() -> String {
    format!("{:<16} {:>8} {:>8} {:>8} {:>9}", "", "part%", "bar%", "@5bar%", "frames")
}

fn read_text(path: &Path) -> Result<String, Failure> {
    Ok(fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
}

fn evaluate_one(reports: &Path, truth: &Path, parts_bars: &(scorefollow::PartTable, scorefollow::score_model::BarAnnotations)) -> Result<Metrics, Failure> {
    let reports = parse_reports(&read_text(reports)?).with_context(|| reports.display().to_string())?;
    let truth_data = GroundTruth::from_csv(&read_text(truth)?).with_context(|| truth.display().to_string())?;
    Ok(evaluate_annotated(&reports, &truth_data, &parts_bars.0, &parts_bars.1)?)
}

fn evaluate_cmd(args: &EvaluateArgs) -> CmdResult {
    let label = args.label.as_deref();
    let value = if let Some(root) = &args.aggregate {
        let (Some(annotations), None, None) = (&args.reports, &args.truth, &args.annotations) else {
            return Err(Failure::Usage("--aggregate DIR takes exactly one positional argument, the annotation file".into()));
        };
        let ann = read_annotations(annotations)?;
        let mut dirs: Vec<PathBuf> = fs::read_dir(root)
            .with_context(|| format!("reading {}", root.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(&args.reports_name).is_file() && p.join(VERSION_TRUTH).is_file())
            .collect();
        dirs.sort();
        if dirs.is_empty() {
            return Err(Failure::Data(anyhow::anyhow!(
                "{}: no version directories with {} and {VERSION_TRUTH}",
                root.display(),
                args.reports_name
            )));
        }
        println!("{}", table_header());
        let mut per_version = Vec::new();
        let mut mean = Metrics { part_acc: 0.0, bar_acc: 0.0, at5_acc: 0.0, frames: 0 };
        for dir in &dirs {
            let m = evaluate_one(&dir.join(&args.reports_name), &dir.join(VERSION_TRUTH), &ann)?;
            let name = dir.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
            println!("{}", table_row(&name, &m));
            mean.part_acc += m.part_acc / dirs.len() as f64;
            mean.bar_acc += m.bar_acc / dirs.len() as f64;
            mean.at5_acc += m.at5_acc / dirs.len() as f64;
            mean.frames += m.frames;
            per_version.push(json!({ "version": name, "metrics": metrics_json(label, &m) }));
        }
        println!("{}", table_row("mean", &mean));
        json!({ "mean": metrics_json(label, &mean), "versions": per_version })
    } else {
        let (Some(reports), Some(truth), Some(annotations)) = (&args.reports, &args.truth, &args.annotations) else {
            return Err(Failure::Usage("evaluate needs REPORTS TRUTH ANNOTATIONS, or --aggregate DIR ANNOTATIONS".into()));
        };
        let m = evaluate_one(reports, truth, &read_annotations(annotations)?)?;
        println!("{}", table_header());
        println!("{}", table_row(label.unwrap_or("reports"), &m));
        metrics_json(label, &m)
    };
    if let Some(path) = &args.json {
        fs::write(path, serde_json::to_string_pretty(&value).expect("json") + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn oracle(cmd: OracleCommand) -> CmdResult {
    match cmd {
        OracleCommand::Dtw {
            ref_dir,
            target,
            jumps,
            start,
            cap,
            out,
        } => {
            let r = load_ref_dir(&ref_dir)?;
            let y = read_features(&target)?;
            if start >= r.hr_len() {
                return Err(Failure::Usage(format!("--start {start} beyond {} reference frames", r.hr_len())));
            }
            let a = offline_dtw(&r.hr, &y, jumps.then_some(&r.parts), start, cap)?;
            let mut w = output(out.as_deref())?;
            for (j, (&i, &cost)) in a.forward.iter().zip(&a.forward_cost).enumerate() {
                let loc = r.locate(i);
                let line = json!({
                    "target_frame": j,
                    "score_frame": i,
                    "cost": cost,
                    "part_id": loc.map(|l| l.part_id),
                    "bar_id": loc.and_then(|l| l.bar_id),
                });
                writeln!(w, "{line}")?;
            }
            w.flush()?;
            eprintln!("path cost {:.4} over {} target frames", a.cost, y.len());
            Ok(())
        }
        OracleCommand::Corpus {
            seed,
            versions,
            models,
            c,
            json,
        } => {
            let models = if models.is_empty() { Model::ALL.to_vec() } else { models };
            let corpus = build_corpus(&CorpusParams {
                seed,
                versions,
                ..CorpusParams::default()
            })?;
            let cfg = TrackerConfig { c, ..TrackerConfig::default() };
            let report = evaluate_corpus(&corpus, &models, &cfg)?;
            print!("{}", report.to_table());
            if let Some(path) = json {
                fs::write(&path, report.to_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(())
        }
    }
}
