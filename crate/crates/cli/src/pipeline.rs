// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end experiment: normalize and split each dataset, fit (or reuse)
//! the CCS reference ensemble, run the lambda searches, train best-of-k
//! probers per loss, and write the report and plot tables.

use std::path::{Path, PathBuf};

use anyhow::Context;
use mdprobe::container;
use mdprobe::dataset::{prepare, PreparedSplits};
use mdprobe::digest::derive_seed;
use mdprobe::eval::{
    build_report, output_histogram, projection_table, write_histogram_csv, write_projection_csv, ReportRow,
    SelfSimilarityEntry, KNOWN_LOSSES,
};
use mdprobe::trainer::{fit_pca, random_baseline, select_min_loss, train_seeds, TrainedProber};
use mdprobe::{
    accuracy, gen_synthetic, grid_search, mean_abs_cosine, self_similarity, ContrastActivationSet, Direction,
    LossSpec, OrientationMode, ProbeError, Prober, ProberRecord, SearchObjective, SearchTrace, TrainConfig,
};
use serde::Serialize;

use crate::args::PipelineArgs;
use crate::commands::SPLIT_STREAM;
use crate::config::ExperimentConfig;
use crate::output::{digest_dir, report_line, write_json, SeedLoss, Stopwatch};
use crate::reference::{cached_reference, CacheEntry};

const REFERENCE_STREAM: u64 = 0x5eed_0002;
const TRAIN_STREAM: u64 = 0x5eed_0003;
const SEARCH_STREAM: u64 = 0x5eed_0004;
const RANDOM_STREAM: u64 = 0x5eed_0005;

/// Test accuracy (auto orientation), optional mean |cos| to the reference,
/// and the projection and histogram CSVs under `plot_dir`. Dataset and model
/// ids are left empty for the caller.
pub fn evaluate_prober(
    name: &str,
    prober: &Prober,
    test: &ContrastActivationSet,
    reference: Option<&[Direction]>,
    hist_bins: usize,
    plot_dir: &Path,
) -> mdprobe::Result<ReportRow> {
    let (test_accuracy, orientation) = accuracy(prober, test, OrientationMode::Auto)?;
    let cosine = reference
        .map(|r| mean_abs_cosine(&prober.direction()?, r))
        .transpose()?;
    crate::output::create_dir(plot_dir)?;
    write_projection_csv(plot_dir.join(format!("{name}_projection.csv")), &projection_table(test, prober)?)?;
    write_histogram_csv(plot_dir.join(format!("{name}_histogram.csv")), &output_histogram(prober, test, hist_bins)?)?;
    Ok(ReportRow {
        dataset_id: String::new(),
        model_id: String::new(),
        loss_name: name.to_string(),
        test_accuracy,
        mean_abs_cosine_to_ccs: cosine,
        lambda_star: None,
        orientation: Some(orientation),
        sign_mode: None,
    })
}

#[derive(Debug, Serialize)]
struct LossRun {
    loss_name: String,
    loss_spec: Option<LossSpec>,
    lambda_star: Option<f64>,
    per_seed_final_losses: Vec<SeedLoss>,
    selected_seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct DatasetRun {
    id: String,
    model_id: String,
    dataset_digest: String,
    split_seed: u64,
    reference_cache: CacheEntry,
    losses: Vec<LossRun>,
}

#[derive(Debug, Serialize)]
struct PipelineManifest {
    command: &'static str,
    config: ExperimentConfig,
    datasets: Vec<DatasetRun>,
    wall_time_secs: f64,
}

struct Materialized {
    set: ContrastActivationSet,
    digest: String,
}

fn materialize(cfg: &ExperimentConfig) -> anyhow::Result<Vec<Materialized>> {
    cfg.datasets
        .iter()
        .map(|ds| match (&ds.path, &ds.synthetic) {
            (Some(p), _) => Ok(Materialized {
                set: container::load(p).with_context(|| format!("loading dataset {} from {}", ds.id, p.display()))?,
                digest: container::container_digest(p)?,
            }),
            (None, Some(s)) => {
                let set = gen_synthetic(s)?.set;
                let digest = set.digest();
                Ok(Materialized { set, digest })
            }
            (None, None) => Err(ProbeError::validation(format!("dataset {} has no source", ds.id)).into()),
        })
        .collect()
}

fn best_of(spec: &LossSpec, set: &ContrastActivationSet, cfg: &TrainConfig, k: usize) -> mdprobe::Result<(TrainedProber, Vec<SeedLoss>)> {
    let runs = train_seeds(spec, set, cfg, k)?;
    let losses = SeedLoss::from_runs(&runs, cfg.seed);
    Ok((select_min_loss(runs, k)?, losses))
}

/// Settings shared by every loss on one dataset.
struct DatasetContext<'a> {
    cfg: &'a ExperimentConfig,
    index: u64,
    splits: &'a PreparedSplits,
    reference: &'a [Direction],
    dir: &'a Path,
}

impl DatasetContext<'_> {
    fn loss_code(name: &str) -> u64 {
        KNOWN_LOSSES.iter().position(|l| *l == name).expect("validated loss name") as u64
    }

    fn train_config(&self, name: &str) -> TrainConfig {
        let seed = derive_seed(self.cfg.seed, &[TRAIN_STREAM, self.index, Self::loss_code(name)]);
        self.cfg.train.with_seed(seed)
    }

    fn search(&self, name: &str, template: LossSpec, objective: SearchObjective) -> mdprobe::Result<(f64, SearchTrace)> {
        let base = derive_seed(self.cfg.seed, &[SEARCH_STREAM, self.index, Self::loss_code(name)]);
        let search_cfg = self.cfg.search.apply(objective, base);
        let reference = matches!(objective, SearchObjective::CosineToCcs).then_some(self.reference);
        let (lambda, trace) = grid_search(&template, &self.splits.train, reference, &search_cfg, &self.train_config(name))?;
        let search_dir = self.dir.join("search");
        crate::output::create_dir(&search_dir)?;
        let path = search_dir.join(format!("{name}_trace.json"));
        std::fs::write(&path, trace.to_json()?).map_err(|e| ProbeError::io(&path, e))?;
        trace.write_csv(search_dir.join(format!("{name}_trace.csv")))?;
        Ok((lambda, trace))
    }

    /// Trains, evaluates and saves one loss. Returns the report row (ids
    /// unset) and the manifest entry.
    fn run_loss(&self, name: &str) -> mdprobe::Result<(ReportRow, LossRun)> {
        let sign_mode = self.cfg.sign_mode;
        let searched = |template: LossSpec, objective| -> mdprobe::Result<(LossSpec, f64)> {
            let (lambda, _) = self.search(name, template, objective)?;
            Ok((template.with_lambda(lambda)?, lambda))
        };
        let spec = match name {
            "ccs" => Some((LossSpec::Ccs, None)),
            "supervised" => Some((LossSpec::Supervised, None)),
            "md_acc" => Some(searched(LossSpec::Md { lambda: 0.0 }, SearchObjective::TrainAccuracy).map(|(s, l)| (s, Some(l)))?),
            "md_ccs" => Some(searched(LossSpec::Md { lambda: 0.0 }, SearchObjective::CosineToCcs).map(|(s, l)| (s, Some(l)))?),
            "ma" => Some(
                searched(LossSpec::Ma { lambda: 0.0, sign_mode }, SearchObjective::TrainAccuracy).map(|(s, l)| (s, Some(l)))?,
            ),
            "smr" => Some(
                searched(LossSpec::Smr { lambda: 0.0, sign_mode }, SearchObjective::TrainAccuracy).map(|(s, l)| (s, Some(l)))?,
            ),
            "pca" | "random" => None,
            other => return Err(ProbeError::validation(format!("unknown loss {other}"))),
        };

        let plot_dir = self.dir.join("plots");
        let prober_path = self.dir.join("probers").join(format!("{name}.json"));
        crate::output::create_dir(prober_path.parent().expect("has parent"))?;

        if let Some((spec, lambda_star)) = spec {
            let (best, losses) = best_of(&spec, &self.splits.train, &self.train_config(name), self.cfg.best_of)?;
            best.record().save(&prober_path)?;
            let mut row = evaluate_prober(name, &best.prober, &self.splits.test, Some(self.reference), self.cfg.hist_bins, &plot_dir)?;
            row.lambda_star = lambda_star;
            row.sign_mode = spec.sign_mode().map(|m| m.name().to_string());
            let run = LossRun {
                loss_name: name.into(),
                loss_spec: Some(spec),
                lambda_star,
                per_seed_final_losses: losses,
                selected_seed: Some(best.seed),
            };
            return Ok((row, run));
        }

        let run = LossRun {
            loss_name: name.into(),
            loss_spec: None,
            lambda_star: None,
            per_seed_final_losses: Vec::new(),
            selected_seed: None,
        };
        if name == "pca" {
            let prober = fit_pca(&self.splits.train)?;
            ProberRecord::new(&prober, "pca").save(&prober_path)?;
            let row = evaluate_prober(name, &prober, &self.splits.test, Some(self.reference), self.cfg.hist_bins, &plot_dir)?;
            return Ok((row, run));
        }

        // Random baseline: averages over k untrained unit directions.
        let seed = derive_seed(self.cfg.seed, &[RANDOM_STREAM, self.index]);
        let probers = random_baseline(self.splits.train.d(), self.cfg.random_k, seed)?;
        let mut acc = 0.0;
        let mut cos = 0.0;
        let mut records = Vec::with_capacity(probers.len());
        for (i, p) in probers.iter().enumerate() {
            acc += accuracy(p, &self.splits.test, OrientationMode::Auto)?.0;
            cos += mean_abs_cosine(&p.direction()?, self.reference)?;
            let mut r = ProberRecord::new(p, "random");
            r.seed = Some(seed.wrapping_add(i as u64));
            records.push(r);
        }
        write_json(&prober_path, &records)?;
        let k = probers.len() as f64;
        let row = ReportRow {
            dataset_id: String::new(),
            model_id: String::new(),
            loss_name: name.into(),
            test_accuracy: acc / k,
            mean_abs_cosine_to_ccs: Some(cos / k),
            lambda_star: None,
            orientation: None,
            sign_mode: None,
        };
        Ok((row, run))
    }
}

/// Runs the experiment and returns its output directory.
pub fn run_pipeline(args: &PipelineArgs, seed: Option<u64>, out: &Path) -> anyhow::Result<PathBuf> {
    let clock = Stopwatch::start();
    let mut cfg = ExperimentConfig::load(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(k) = args.best_of {
        cfg.best_of = k;
    }
    if let Some(k) = args.ensemble {
        cfg.ensemble = k;
    }
    if let Some(b) = args.hist_bins {
        cfg.hist_bins = b;
    }
    if args.compare_paper {
        cfg.compare_published = true;
    }
    cfg.validate()?;
    let data = materialize(&cfg)?;

    // The directory name depends on content, not on where inputs live.
    let mut keyed = cfg.clone();
    for ds in &mut keyed.datasets {
        ds.path = None;
    }
    let digests: Vec<&str> = data.iter().map(|m| m.digest.as_str()).collect();
    let dir = digest_dir(out, "pipeline", &(&keyed, &digests))?;
    let cache_root = out.join("cache");
    write_json(&dir.join("config.json"), &cfg)?;

    let mut rows = Vec::new();
    let mut self_sims = Vec::new();
    let mut runs = Vec::new();
    for (i, (entry, m)) in cfg.datasets.iter().zip(&data).enumerate() {
        let index = i as u64;
        let ds_dir = dir.join("datasets").join(&entry.model_id).join(&entry.id);
        let split_seed = derive_seed(cfg.seed, &[SPLIT_STREAM, index]);
        let splits = prepare(&m.set, cfg.train_fraction, split_seed)?;
        write_json(&ds_dir.join("split.json"), &splits.split)?;
        if let Some(stats) = &splits.stats {
            write_json(&ds_dir.join("normalization.json"), stats)?;
        }

        let ref_cfg = cfg.train.with_seed(derive_seed(cfg.seed, &[REFERENCE_STREAM, index]));
        let (reference, cache) = cached_reference(&cache_root, &splits.train, &ref_cfg, cfg.ensemble)
            .with_context(|| format!("CCS reference for dataset {}", entry.id))?;
        let directions = reference.directions()?;
        self_sims.push(SelfSimilarityEntry {
            dataset_id: entry.id.clone(),
            model_id: entry.model_id.clone(),
            self_similarity: self_similarity(&directions)?,
            ensemble_size: directions.len(),
        });

        let ctx = DatasetContext {
            cfg: &cfg,
            index,
            splits: &splits,
            reference: &directions,
            dir: &ds_dir,
        };
        let mut loss_runs = Vec::new();
        for name in &cfg.losses {
            let (mut row, run) = ctx
                .run_loss(name)
                .with_context(|| format!("loss {name} on dataset {}", entry.id))?;
            row.dataset_id = entry.id.clone();
            row.model_id = entry.model_id.clone();
            rows.push(row);
            loss_runs.push(run);
        }
        runs.push(DatasetRun {
            id: entry.id.clone(),
            model_id: entry.model_id.clone(),
            dataset_digest: m.digest.clone(),
            split_seed,
            reference_cache: cache,
            losses: loss_runs,
        });
    }

    let report = build_report(&rows, &self_sims)?;
    report.write(dir.join("report"), cfg.compare_published)?;
    write_json(
        &dir.join("manifest.json"),
        &PipelineManifest {
            command: "pipeline",
            config: cfg,
            datasets: runs,
            wall_time_secs: clock.secs(),
        },
    )?;
    report_line("out", dir.display());
    Ok(dir)
}
