// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use anyhow::Context;
use mdprobe::container::{self, NUISANCE_DIRECTION_FILE, TRUTH_DIRECTION_FILE};
use mdprobe::dataset::{prepare, PreparedSplits};
use mdprobe::digest::{derive_seed, json_digest, sha256_hex};
use mdprobe::eval::{build_report, SelfSimilarityEntry};
use mdprobe::trainer::{fit_pca, random_baseline, select_min_loss, train_seeds};
use mdprobe::{
    gen_synthetic, grid_search, self_similarity, Constraint, Direction, GridSearchConfig, LossSpec, ProbeError, Prober, ProberRecord,
    SearchObjective, SyntheticConfig, TrainConfig,
};
use ndarray::Array1;
use serde_json::json;

use crate::args::{
    Cli, Command, DataArgs, EvalArgs, GenArgs, LoadProberArgs, PlantedDirection, SaveProberArgs, SearchArgs,
    SearchLoss, TrainArgs, TrainLoss, TrainingArgs,
};
use crate::output::{digest_dir, read_json, report_line, write_json, RunManifest, SeedLoss, Stopwatch};
use crate::pipeline::{evaluate_prober, run_pipeline};
use crate::reference::ReferenceEnsemble;

/// Seed stream for the train/test permutation, kept apart from training seeds.
pub const SPLIT_STREAM: u64 = 0x5eed_0001;

pub fn split_seed(seed: u64) -> u64 {
    derive_seed(seed, &[SPLIT_STREAM])
}

pub fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    let seed = cli.seed;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Gen(a) => cmd_gen(a, seed, out),
        Command::Train(a) => cmd_train(a, seed.unwrap_or(0), out),
        Command::Search(a) => cmd_search(a, seed.unwrap_or(0), out),
        Command::Eval(a) => cmd_eval(a, seed.unwrap_or(0), out),
        Command::Pipeline(a) => run_pipeline(a, seed, out).map(|_| ()),
        Command::SaveProber(a) => cmd_save_prober(a, out),
        Command::LoadProber(a) => cmd_load_prober(a),
    }
}

fn cmd_gen(args: &GenArgs, seed: Option<u64>, out: &Path) -> anyhow::Result<()> {
    let mut cfg: SyntheticConfig = match &args.config {
        Some(p) => read_json(p).with_context(|| format!("reading {}", p.display()))?,
        None => SyntheticConfig::default(),
    };
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.d {
        cfg.d = v;
    }
    if let Some(v) = args.signal_scale {
        cfg.signal_scale = v;
    }
    if let Some(v) = args.nuisance_scale {
        cfg.nuisance_scale = v;
    }
    if let Some(v) = args.noise_scale {
        cfg.noise_scale = v;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let syn = gen_synthetic(&cfg)?;
    let dir = digest_dir(out, "gen", &(&cfg, args.with_directions))?;
    container::save(&syn.set, &dir)?;
    if args.with_directions {
        container::save_direction(&dir, TRUTH_DIRECTION_FILE, syn.truth_direction.as_array())?;
        container::save_direction(&dir, NUISANCE_DIRECTION_FILE, syn.nuisance_direction.as_array())?;
    }
    write_json(&dir.join("synthetic_config.json"), &cfg)?;
    report_line("digest", container::container_digest(&dir)?);
    report_line("out", dir.display());
    Ok(())
}

/// Loaded container, its digest and the normalized splits.
pub struct Prepared {
    pub digest: String,
    pub splits: PreparedSplits,
}

pub fn load_prepared(data: &DataArgs, seed: u64) -> anyhow::Result<Prepared> {
    let set = container::load(&data.data).with_context(|| format!("loading container {}", data.data.display()))?;
    let digest = container::container_digest(&data.data)?;
    let splits = prepare(&set, data.train_fraction, split_seed(seed))?;
    Ok(Prepared { digest, splits })
}

fn write_split_products(dir: &Path, splits: &PreparedSplits) -> mdprobe::Result<()> {
    write_json(&dir.join("split.json"), &splits.split)?;
    if let Some(stats) = &splits.stats {
        write_json(&dir.join("normalization.json"), stats)?;
    }
    Ok(())
}

fn train_config(t: &TrainingArgs, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: t.epochs,
        learning_rate: t.learning_rate,
        seed,
        optimizer: t.optimizer.into(),
    }
}

fn train_loss_spec(args: &TrainArgs) -> anyhow::Result<Option<LossSpec>> {
    let lambda = || {
        args.lambda
            .ok_or_else(|| ProbeError::validation(format!("--loss {:?} needs --lambda", args.loss).to_lowercase()))
    };
    let spec = match args.loss {
        TrainLoss::Ccs => LossSpec::Ccs,
        TrainLoss::Supervised => LossSpec::Supervised,
        TrainLoss::Md => LossSpec::Md { lambda: lambda()? },
        TrainLoss::Ma => LossSpec::Ma {
            lambda: lambda()?,
            sign_mode: args.sign_mode.into(),
        },
        TrainLoss::Smr => LossSpec::Smr {
            lambda: lambda()?,
            sign_mode: args.sign_mode.into(),
        },
        TrainLoss::Pca | TrainLoss::Random => return Ok(None),
    };
    spec.validate()?;
    Ok(Some(spec))
}

fn cmd_train(args: &TrainArgs, seed: u64, out: &Path) -> anyhow::Result<()> {
    let clock = Stopwatch::start();
    let spec = train_loss_spec(args)?;
    if args.ensemble.is_some() && args.loss != TrainLoss::Ccs {
        return Err(ProbeError::validation("--ensemble applies to --loss ccs only").into());
    }
    if spec.is_none() && args.best_of > 1 {
        return Err(ProbeError::validation("--best-of needs a trained loss").into());
    }
    let cfg = train_config(&args.training, seed);
    cfg.validate()?;
    let prepared = load_prepared(&args.data, seed)?;
    let train = &prepared.splits.train;
    if matches!(spec, Some(LossSpec::Supervised)) {
        train.require_labels()?;
    }

    let invocation = json!({
        "loss": format!("{:?}", args.loss).to_lowercase(),
        "loss_spec": spec,
        "train_config": cfg,
        "best_of": args.best_of,
        "ensemble": args.ensemble,
        "train_fraction": args.data.train_fraction,
        "seed": seed,
        "dataset_digest": prepared.digest,
    });
    let dir = digest_dir(out, "train", &invocation)?;
    write_split_products(&dir, &prepared.splits)?;

    let mut per_seed = Vec::new();
    let mut selected = None;
    if let Some(k) = args.ensemble {
        let ensemble = ReferenceEnsemble::train(train, &cfg, k)?;
        ensemble.save(&dir)?;
        per_seed = ensemble
            .probers
            .iter()
            .map(|r| SeedLoss {
                seed: r.seed.unwrap_or_default(),
                final_loss: r.final_loss,
                error: None,
            })
            .collect();
        report_line("reference", dir.join(crate::reference::REFERENCE_FILE).display());
    } else {
        let record = match &spec {
            Some(spec) => {
                let runs = train_seeds(spec, train, &cfg, args.best_of)?;
                per_seed = SeedLoss::from_runs(&runs, cfg.seed);
                let best = select_min_loss(runs, args.best_of)?;
                selected = Some(best.seed);
                best.record()
            }
            None if args.loss == TrainLoss::Pca => ProberRecord::new(&fit_pca(train)?, "pca"),
            None => {
                let p = random_baseline(train.d(), 1, seed)?.remove(0);
                let mut r = ProberRecord::new(&p, "random");
                r.seed = Some(seed);
                r
            }
        };
        let path = dir.join("prober.json");
        record.save(&path)?;
        report_line("prober", path.display());
    }

    write_json(
        &dir.join("manifest.json"),
        &RunManifest {
            command: "train".into(),
            invocation,
            loss_spec: spec,
            dataset_digest: prepared.digest.clone(),
            per_seed_final_losses: per_seed,
            selected_seed: selected,
            wall_time_secs: clock.secs(),
        },
    )?;
    report_line("out", dir.display());
    Ok(())
}

/// Reads an ensemble written by `train --ensemble` or the pipeline cache and
/// checks it was fit on this train split.
pub fn load_reference(dir: &Path, splits: &PreparedSplits) -> anyhow::Result<ReferenceEnsemble> {
    let ensemble =
        ReferenceEnsemble::load(dir).with_context(|| format!("loading reference ensemble from {}", dir.display()))?;
    ensemble
        .check_matches(&splits.train)
        .context("the reference ensemble was trained on a different split; rerun with the same --seed and --train-fraction")?;
    Ok(ensemble)
}

fn cmd_search(args: &SearchArgs, seed: u64, out: &Path) -> anyhow::Result<()> {
    let clock = Stopwatch::start();
    let objective: SearchObjective = args.objective.into();
    let mut cfg = GridSearchConfig::for_objective(objective);
    if let Some(iv) = &args.interval {
        cfg.initial_interval = [iv[0], iv[1]];
    }
    cfg.points_per_round = args.points;
    cfg.seeds_per_point = args.seeds_per_point;
    cfg.rounds = args.rounds;
    cfg.base_seed = seed;
    cfg.validate()?;
    let train_cfg = train_config(&args.training, seed);
    train_cfg.validate()?;
    let template = match args.loss {
        SearchLoss::Md => LossSpec::Md { lambda: 0.0 },
        SearchLoss::Ma => LossSpec::Ma {
            lambda: 0.0,
            sign_mode: args.sign_mode.into(),
        },
        SearchLoss::Smr => LossSpec::Smr {
            lambda: 0.0,
            sign_mode: args.sign_mode.into(),
        },
    };

    let prepared = load_prepared(&args.data, seed)?;
    let reference = match (&args.ccs_ref, objective) {
        (Some(dir), _) => Some(load_reference(dir, &prepared.splits)?),
        (None, SearchObjective::CosineToCcs) => return Err(ProbeError::MissingReference.into()),
        (None, SearchObjective::TrainAccuracy) => None,
    };
    let directions = reference.as_ref().map(|r| r.directions()).transpose()?;

    let invocation = json!({
        "loss_template": template,
        "search_config": cfg,
        "train_config": train_cfg,
        "train_fraction": args.data.train_fraction,
        "seed": seed,
        "dataset_digest": prepared.digest,
        "reference_digest": reference.as_ref().map(json_digest).transpose()?,
    });
    let dir = digest_dir(out, "search", &invocation)?;
    write_split_products(&dir, &prepared.splits)?;

    let (lambda_star, trace) =
        grid_search(&template, &prepared.splits.train, directions.as_deref(), &cfg, &train_cfg)?;
    let trace_json = dir.join("trace.json");
    std::fs::write(&trace_json, trace.to_json()?).map_err(|e| ProbeError::io(&trace_json, e))?;
    trace.write_csv(dir.join("trace.csv"))?;
    let spec = template.with_lambda(lambda_star)?;
    write_json(&dir.join("result.json"), &json!({ "lambda_star": lambda_star, "loss_spec": spec }))?;
    let per_seed = trace
        .rounds
        .iter()
        .flat_map(|r| r.points.iter())
        .flat_map(|p| p.seeds.iter())
        .map(|s| SeedLoss {
            seed: s.seed,
            final_loss: s.final_loss,
            error: None,
        })
        .collect();
    write_json(
        &dir.join("manifest.json"),
        &RunManifest {
            command: "search".into(),
            invocation,
            loss_spec: Some(spec),
            dataset_digest: prepared.digest,
            per_seed_final_losses: per_seed,
            selected_seed: None,
            wall_time_secs: clock.secs(),
        },
    )?;
    report_line("lambda_star", lambda_star);
    report_line("out", dir.display());
    Ok(())
}

/// Report loss name for a prober record when the user gave none.
fn default_report_name(record: &ProberRecord) -> anyhow::Result<String> {
    match record.loss_variant.as_str() {
        v @ ("ccs" | "ma" | "smr" | "pca" | "random" | "supervised") => Ok(v.to_string()),
        "md" => Err(ProbeError::validation("md probers need an explicit name: md_acc=PATH or md_ccs=PATH").into()),
        v => Err(ProbeError::validation(format!("no report name for loss variant {v:?}; pass NAME=PATH")).into()),
    }
}

fn parse_prober_arg(arg: &str) -> anyhow::Result<(String, PathBuf, ProberRecord)> {
    let (name, path) = match arg.split_once('=') {
        Some((n, p)) => (Some(n.to_string()), PathBuf::from(p)),
        None => (None, PathBuf::from(arg)),
    };
    let record = ProberRecord::load(&path).with_context(|| format!("loading prober {}", path.display()))?;
    let name = match name {
        Some(n) => n,
        None => default_report_name(&record)?,
    };
    Ok((name, path, record))
}

fn cmd_eval(args: &EvalArgs, seed: u64, out: &Path) -> anyhow::Result<()> {
    let prepared = load_prepared(&args.data, seed)?;
    let meta = prepared.splits.train.meta().clone();
    let dataset_id = args
        .dataset_id
        .clone()
        .or_else(|| meta.get("dataset_id").cloned())
        .unwrap_or_else(|| "dataset".into());
    let model_id = args
        .model_id
        .clone()
        .or_else(|| meta.get("model_id").cloned())
        .unwrap_or_else(|| "model".into());
    let probers = args
        .probers
        .iter()
        .map(|a| parse_prober_arg(a))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let reference = args.ccs_ref.as_deref().map(|d| load_reference(d, &prepared.splits)).transpose()?;
    let directions = reference.as_ref().map(|r| r.directions()).transpose()?;

    let invocation = json!({
        "dataset_digest": prepared.digest,
        "train_fraction": args.data.train_fraction,
        "seed": seed,
        "probers": probers.iter().map(|(n, _, r)| Ok(json!({"name": n, "digest": json_digest(r)?}))).collect::<mdprobe::Result<Vec<_>>>()?,
        "reference_digest": reference.as_ref().map(json_digest).transpose()?,
        "hist_bins": args.hist_bins,
        "compare_published": args.compare_paper,
        "dataset_id": dataset_id,
        "model_id": model_id,
    });
    let dir = digest_dir(out, "eval", &invocation)?;
    let mut rows = Vec::new();
    for (name, _, record) in &probers {
        let prober = record.prober()?;
        let mut row = evaluate_prober(
            name,
            &prober,
            &prepared.splits.test,
            directions.as_deref(),
            args.hist_bins,
            &dir.join("plots"),
        )?;
        row.dataset_id = dataset_id.clone();
        row.model_id = model_id.clone();
        row.lambda_star = record.lambda;
        row.sign_mode = record.sign_mode.clone();
        rows.push(row);
    }
    let self_sims = match &directions {
        Some(d) => vec![SelfSimilarityEntry {
            dataset_id: dataset_id.clone(),
            model_id: model_id.clone(),
            self_similarity: self_similarity(d)?,
            ensemble_size: d.len(),
        }],
        None => Vec::new(),
    };
    let report = build_report(&rows, &self_sims)?;
    report.write(dir.join("report"), args.compare_paper)?;
    write_json(&dir.join("invocation.json"), &invocation)?;
    report_line("out", dir.display());
    Ok(())
}

fn cmd_save_prober(args: &SaveProberArgs, out: &Path) -> anyhow::Result<()> {
    let theta = match (&args.theta, &args.from_container) {
        (Some(t), None) => Array1::from(t.clone()),
        (None, Some(dir)) => {
            let file = match args.which {
                PlantedDirection::Truth => TRUTH_DIRECTION_FILE,
                PlantedDirection::Nuisance => NUISANCE_DIRECTION_FILE,
            };
            container::load_direction(dir, file)?
        }
        _ => return Err(ProbeError::validation("give exactly one of --theta and --from-container").into()),
    };
    let constraint: Constraint = args.constraint.into();
    let theta = match constraint {
        // Stored directions are f32, so their norm is only 1 to about 1e-8.
        Constraint::UnitNorm => Direction::new(theta)?.into_inner(),
        Constraint::Unconstrained => theta,
    };
    let prober = Prober::new(theta, args.bias, constraint)?;
    let record = ProberRecord::new(&prober, "manual");
    let path = match &args.output {
        Some(p) => p.clone(),
        None => {
            crate::output::create_dir(out)?;
            out.join(format!("prober-{}.json", &json_digest(&record)?[..crate::output::DIR_DIGEST_LEN]))
        }
    };
    record.save(&path)?;
    report_line("prober", path.display());
    Ok(())
}

fn cmd_load_prober(args: &LoadProberArgs) -> anyhow::Result<()> {
    let bytes = std::fs::read(&args.path).map_err(|e| ProbeError::io(&args.path, e))?;
    let record = ProberRecord::load(&args.path)?;
    let prober = record.prober()?;
    let norm = prober.theta().dot(prober.theta()).sqrt();
    let summary = json!({
        "d": record.d,
        "norm": norm,
        "bias": record.bias,
        "constraint": record.constraint,
        "loss_variant": record.loss_variant,
        "lambda": record.lambda,
        "seed": record.seed,
        "final_loss": record.final_loss,
        "file_sha256": sha256_hex(&bytes),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
