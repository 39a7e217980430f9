//! Seeded synthetic mismatch corpora and their evaluation across models.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval_oracle::{tally_positions, Metrics, Tally};
use crate::integrator::{run_tracking, Model, PositionReport, TrackerConfig};
use crate::mismatch_sim::{apply_script, generate_script, EditScript, SimParams};
use crate::score_model::ScoreReference;
use crate::synth::{recitative_parts, render_performance, synth_reference, Performance, PerfParams, ScoreParams};

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusParams {
    pub seed: u64,
    pub versions: usize,
    pub score: ScoreParams,
    pub perf: PerfParams,
    /// Every n-th part is applause-followed.
    pub applause_every: usize,
    pub insertions: usize,
}

impl Default for CorpusParams {
    fn default() -> Self {
        Self {
            seed: 0,
            versions: 10,
            score: ScoreParams {
                parts: 16,
                part_len: (2_500, 5_000),
                recitative_every: 3,
                ..ScoreParams::default()
            },
            perf: PerfParams::default(),
            applause_every: 5,
            insertions: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusVersion {
    pub seed: u64,
    pub script: EditScript,
    pub performance: Performance,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub reference: Arc<ScoreReference>,
    pub versions: Vec<CorpusVersion>,
}

/// Builds the reference and `versions` edited performances of it.
pub fn build_corpus(p: &CorpusParams) -> Result<Corpus> {
    let reference = synth_reference(p.seed, &p.score)?;
    let mut perf = p.perf.clone();
    perf.recitative_parts = recitative_parts(&reference.parts);
    let mut sim = SimParams::applause_every(p.applause_every, &reference.parts);
    sim.insertions = p.insertions;
    let versions = simulate_versions(&reference, p.seed, p.versions, &sim, &perf)?;
    Ok(Corpus {
        reference: Arc::new(reference),
        versions,
    })
}

/// Draws `count` edit scripts from `seed` and renders each edited version of
/// `reference` as a performance.
pub fn simulate_versions(
    reference: &ScoreReference,
    seed: u64,
    count: usize,
    sim: &SimParams,
    perf: &PerfParams,
) -> Result<Vec<CorpusVersion>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
    let mut versions = Vec::with_capacity(count);
    for _ in 0..count {
        let seed: u64 = rng.random();
        let script = generate_script(&reference.parts, seed, sim)?;
        let version = apply_script(&reference.hr, &reference.parts, &reference.bars, &script)?;
        let performance = render_performance(&version, seed.wrapping_add(1), perf)?;
        versions.push(CorpusVersion {
            seed,
            script,
            performance,
        });
    }
    Ok(versions)
}

/// Accuracy of the LR tracker's own position estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrMetrics {
    /// Over every frame with an LR estimate.
    pub all: Metrics,
    /// Over frames flagged reliable.
    pub reliable: Metrics,
    /// Over LR-estimated frames flagged unreliable.
    pub unreliable: Metrics,
    /// Share of LR-estimated frames flagged reliable, in percent.
    pub reliable_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model: Model,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionMetrics {
    pub seed: u64,
    pub frames: usize,
    pub removal_ratio: f64,
    pub models: Vec<ModelMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub versions: Vec<VersionMetrics>,
    /// Pooled over all frames of all versions.
    pub models: Vec<ModelMetrics>,
    pub lr: Option<LrMetrics>,
}

impl CorpusReport {
    pub fn model(&self, m: Model) -> Option<&Metrics> {
        self.models.iter().find(|x| x.model == m).map(|x| &x.metrics)
    }

    /// Pretty JSON; byte-identical for identical inputs.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    pub fn to_table(&self) -> String {
        let row = |name: &str, x: &Metrics| {
            format!(
                "{:<12} {:>8.2} {:>8.2} {:>8.2} {:>9}\n",
                name, x.part_acc, x.bar_acc, x.at5_acc, x.frames
            )
        };
        let mut out = format!("{:<12} {:>8} {:>8} {:>8} {:>9}\n", "model", "part%", "bar%", "@5bar%", "frames");
        for m in &self.models {
            out.push_str(&row(m.model.as_str(), &m.metrics));
        }
        if let Some(lr) = &self.lr {
            out.push_str(&row("lr", &lr.all));
            out.push_str(&row("lr rf=1", &lr.reliable));
            out.push_str(&row("lr rf=0", &lr.unreliable));
            out.push_str(&format!("rf=1 on {:.1}% of LR frames\n", lr.reliable_share));
        }
        out
    }
}

/// LR estimate of each frame: middle of the reported interval.
pub fn lr_positions(reports: &[PositionReport]) -> (Vec<Option<usize>>, Vec<bool>) {
    reports
        .iter()
        .map(|r| (r.lr_interval.map(|(lo, hi)| (lo + hi) / 2), r.rf))
        .unzip()
}

/// Tracks every version with every model and scores the final positions.
pub fn evaluate_corpus(corpus: &Corpus, models: &[Model], base: &TrackerConfig) -> Result<CorpusReport> {
    let reference = &corpus.reference;
    let mut pooled = vec![Tally::default(); models.len()];
    let mut lr_all = Tally::default();
    let mut lr_rf = Tally::default();
    let mut lr_unrf = Tally::default();
    let mut have_lr = false;
    let mut versions = Vec::with_capacity(corpus.versions.len());
    for v in &corpus.versions {
        let perf = &v.performance;
        let mut per_model = Vec::with_capacity(models.len());
        let mut lr_done = false;
        for (k, &model) in models.iter().enumerate() {
            let cfg = TrackerConfig { model, ..base.clone() };
            let reports = run_tracking(Arc::clone(reference), &perf.features, &cfg)?;
            let finals: Vec<_> = reports.iter().map(|r| Some(r.final_pos)).collect();
            let t = tally_positions(&finals, &perf.truth, reference, None)?;
            pooled[k] = pooled[k].merge(t);
            per_model.push(ModelMetrics {
                model,
                metrics: t.metrics(),
            });
            if model.uses_lr() && !lr_done {
                lr_done = true;
                have_lr = true;
                let (pos, rf) = lr_positions(&reports);
                let has: Vec<bool> = pos.iter().map(Option::is_some).collect();
                lr_all = lr_all.merge(tally_positions(&pos, &perf.truth, reference, Some(&has))?);
                lr_rf = lr_rf.merge(tally_positions(&pos, &perf.truth, reference, Some(&rf))?);
                let unrf: Vec<bool> = has.iter().zip(&rf).map(|(h, r)| *h && !r).collect();
                lr_unrf = lr_unrf.merge(tally_positions(&pos, &perf.truth, reference, Some(&unrf))?);
            }
        }
        versions.push(VersionMetrics {
            seed: v.seed,
            frames: perf.features.len(),
            removal_ratio: v.script.removal_ratio,
            models: per_model,
        });
    }
    let lr = have_lr.then(|| LrMetrics {
        all: lr_all.metrics(),
        reliable: lr_rf.metrics(),
        unreliable: lr_unrf.metrics(),
        reliable_share: if lr_all.frames == 0 {
            0.0
        } else {
            100.0 * lr_rf.frames as f64 / lr_all.frames as f64
        },
    });
    Ok(CorpusReport {
        versions,
        models: models
            .iter()
            .zip(pooled)
            .map(|(&model, t)| ModelMetrics {
                model,
                metrics: t.metrics(),
            })
            .collect(),
        lr,
    })
}
