// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mdprobe::{Constraint, Optimizer, SearchObjective, SignMode};

#[derive(Debug, Parser)]
#[command(name = "mdprobe", version, about = "Train and evaluate linear truth probers on contrast-pair activations")]
pub struct Cli {
    /// Global seed. Overrides any seed in a config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Maximum worker threads. Results do not depend on it.
    #[arg(long, global = true, value_parser = positive)]
    pub jobs: Option<usize>,

    /// Output root.
    #[arg(long, global = true, env = crate::OUT_ENV, default_value = "mdprobe-out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic contrast-pair container.
    Gen(GenArgs),
    /// Train a prober (or a best-of-k selection, or a CCS reference ensemble).
    Train(TrainArgs),
    /// Two-round lambda grid search.
    Search(SearchArgs),
    /// Evaluate saved probers on the test split.
    Eval(EvalArgs),
    /// Run the full experiment described by a config file.
    Pipeline(PipelineArgs),
    /// Write a prober JSON from explicit weights.
    SaveProber(SaveProberArgs),
    /// Validate a prober JSON and print a summary.
    LoadProber(LoadProberArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// JSON synthetic config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub signal_scale: Option<f64>,
    #[arg(long)]
    pub nuisance_scale: Option<f64>,
    #[arg(long)]
    pub noise_scale: Option<f64>,
    /// Also write the planted truth and nuisance directions.
    #[arg(long)]
    pub with_directions: bool,
}

/// Options shared by every command that loads a container and splits it.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Activation container directory.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.6)]
    pub train_fraction: f64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainingArgs {
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    #[arg(long = "lr", default_value_t = 0.01)]
    pub learning_rate: f64,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Gd)]
    pub optimizer: OptimizerArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Gd,
    Adam,
}

impl From<OptimizerArg> for Optimizer {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::Gd => Optimizer::Gd,
            OptimizerArg::Adam => Optimizer::Adam,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignModeArg {
    Literal,
    MdConsistent,
}

impl From<SignModeArg> for SignMode {
    fn from(m: SignModeArg) -> Self {
        match m {
            SignModeArg::Literal => SignMode::Literal,
            SignModeArg::MdConsistent => SignMode::MdConsistent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainLoss {
    Ccs,
    Md,
    Ma,
    Smr,
    Supervised,
    Pca,
    Random,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long, value_enum)]
    pub loss: TrainLoss,
    /// Required for md, ma and smr.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum, default_value_t = SignModeArg::MdConsistent)]
    pub sign_mode: SignModeArg,
    /// Train k seeds and keep the lowest final loss.
    #[arg(long, default_value_t = 1, value_parser = positive, conflicts_with = "ensemble")]
    pub best_of: usize,
    /// Keep all k CCS probers as a reference ensemble.
    #[arg(long, value_parser = positive)]
    pub ensemble: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SearchLoss {
    Md,
    Ma,
    Smr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Accuracy,
    Cosine,
}

impl From<ObjectiveArg> for SearchObjective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Accuracy => SearchObjective::TrainAccuracy,
            ObjectiveArg::Cosine => SearchObjective::CosineToCcs,
        }
    }
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long, value_enum, default_value_t = SearchLoss::Md)]
    pub loss: SearchLoss,
    #[arg(long, value_enum, default_value_t = SignModeArg::MdConsistent)]
    pub sign_mode: SignModeArg,
    #[arg(long, value_enum)]
    pub objective: ObjectiveArg,
    /// Directory holding a CCS reference ensemble (from `train --ensemble`).
    #[arg(long)]
    pub ccs_ref: Option<PathBuf>,
    /// Initial interval; defaults depend on the objective.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub interval: Option<Vec<f64>>,
    #[arg(long, default_value_t = 11)]
    pub points: usize,
    #[arg(long, default_value_t = 3)]
    pub seeds_per_point: usize,
    #[arg(long, default_value_t = 2)]
    pub rounds: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `NAME=PATH` or `PATH`. NAME is the report loss name; without it the
    /// name comes from the prober's loss variant.
    #[arg(long = "prober", required = true)]
    pub probers: Vec<String>,
    #[arg(long)]
    pub ccs_ref: Option<PathBuf>,
    #[arg(long, default_value_t = 20, value_parser = positive)]
    pub hist_bins: usize,
    /// Add the published reference values to the wide tables.
    #[arg(long)]
    pub compare_paper: bool,
    /// Defaults to the container's `dataset_id` meta entry, else "dataset".
    #[arg(long)]
    pub dataset_id: Option<String>,
    /// Defaults to the container's `model_id` meta entry, else "model".
    #[arg(long)]
    pub model_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, value_parser = positive)]
    pub best_of: Option<usize>,
    #[arg(long, value_parser = positive)]
    pub ensemble: Option<usize>,
    #[arg(long, value_parser = positive)]
    pub hist_bins: Option<usize>,
    #[arg(long)]
    pub compare_paper: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConstraintArg {
    Unconstrained,
    UnitNorm,
}

impl From<ConstraintArg> for Constraint {
    fn from(c: ConstraintArg) -> Self {
        match c {
            ConstraintArg::Unconstrained => Constraint::Unconstrained,
            ConstraintArg::UnitNorm => Constraint::UnitNorm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlantedDirection {
    Truth,
    Nuisance,
}

#[derive(Debug, Args)]
pub struct SaveProberArgs {
    /// Comma-separated weights.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required_unless_present = "from_container")]
    pub theta: Option<Vec<f64>>,
    /// Take the weights from a planted direction in a container written by
    /// `gen --with-directions`.
    #[arg(long, conflicts_with = "theta")]
    pub from_container: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PlantedDirection::Truth, requires = "from_container")]
    pub which: PlantedDirection,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub bias: f64,
    #[arg(long, value_enum, default_value_t = ConstraintArg::Unconstrained)]
    pub constraint: ConstraintArg,
    /// Output file; defaults to a digest-named file under the output root.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LoadProberArgs {
    pub path: PathBuf,
}
