//! Command-line front end: `tune`, `evaluate`, `report` and `reduce-space`.
//!
//! Output layout under `--out`:
//! `<dataset>/<model>/{trials.ndjson, best.json, cost.csv, scores.csv}` and
//! `report/` for the rendered report.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::cost::{estimate_tuning_cost, read_cost_csv, write_cost_csv, Clock, CostRow, DeviceModel};
use crate::dataset::{load_csv, make_folds_with, Table};
use crate::error::{Error, Result};
use crate::generators::{self, SynthesizerHandle};
use crate::metrics::{evaluate, DcrOptions, EvalOptions};
use crate::report::{emit_report, ScoreTable, N_SAMPLES};
use crate::rng;
use crate::tuner::{self, read_trial_log, ReduceOptions, ReductionPool, SearchSpace, TrialLogWriter, TunerOptions};

pub const OUT_ENV: &str = "TABBENCH_OUT";
pub const DEVICE_ENV: &str = "TABBENCH_DEVICE";

#[derive(Debug, Parser)]
#[command(name = "tabbench", version, about = "Tune, evaluate and compare tabular data synthesizers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tune a model on every fold of a dataset.
    Tune(TuneArgs),
    /// Retrain the tuned configurations and score five samples per fold.
    Evaluate(EvaluateArgs),
    /// Aggregate every score and cost file under the output directory.
    Report(ReportArgs),
    /// Shrink a search space around the best configurations in trial logs.
    ReduceSpace(ReduceArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset CSV file.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Schema file; defaults to the dataset path with a `.schema.toml` extension.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Registry name: traincopy, marginals, smote, ucsmote, gmmtoy or bridge:<command>.
    #[arg(long)]
    pub model: String,
    /// Output directory.
    #[arg(long, env = OUT_ENV, default_value = "tabbench-out")]
    pub out: PathBuf,
    /// Master seed; every random choice derives from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report zero wall time everywhere so that outputs are reproducible byte for byte.
    #[arg(long)]
    pub frozen_clock: bool,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Search-space file or bundled space name; defaults to the model's bundled space.
    #[arg(long)]
    pub space: Option<String>,
    /// Trials per fold (overrides the space).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Per-trial time budget such as `20m` or `90s`; `0` means unbounded (overrides the space).
    #[arg(long)]
    pub budget: Option<String>,
    /// Training steps per trial, 0 = unbounded (overrides the space).
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Trials run concurrently.
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
    /// Stratify the folds by the target class.
    #[arg(long)]
    pub stratify: bool,
    /// Disable median-elimination pruning.
    #[arg(long)]
    pub no_pruning: bool,
    /// Device profile `watts,gCO2_per_kWh[,trials_per_device]`.
    #[arg(long, env = DEVICE_ENV, default_value = "300,50,1")]
    pub device: String,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Use a train reference of test size for DCR instead of the full train split.
    #[arg(long)]
    pub dcr_balance: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directory holding the score and cost files.
    #[arg(long, env = OUT_ENV, default_value = "tabbench-out")]
    pub out: PathBuf,
    /// Also draw one critical-difference diagram (SVG) per metric.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PoolArg {
    /// Best trial of every (dataset, model, fold).
    Best,
    /// Every trial with a final score.
    All,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    /// Trial logs to pool.
    #[arg(long, num_args = 1.., required = true)]
    pub logs: Vec<PathBuf>,
    /// Search-space file or bundled space name to reduce.
    #[arg(long)]
    pub space: String,
    /// Where to write the reduced space.
    #[arg(long)]
    pub output: PathBuf,
    /// Name of the reduced space; defaults to `<name>-reduced`.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, value_enum, default_value = "best")]
    pub pool: PoolArg,
    /// Share of selections kept for choice parameters.
    #[arg(long, default_value_t = 0.8)]
    pub keep_mass: f64,
    #[arg(long, default_value_t = 10.0)]
    pub p_lo: f64,
    #[arg(long, default_value_t = 90.0)]
    pub p_hi: f64,
}

/// What `tune` leaves for `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestConfigs {
    pub dataset: String,
    pub model: String,
    pub seed: u64,
    pub stratify: bool,
    pub folds: Vec<BestFold>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestFold {
    pub fold: usize,
    pub trial_id: usize,
    /// Training steps the trial ran; retraining repeats exactly that many.
    pub steps: usize,
    pub score: f64,
    pub config: Config,
}

/// Directory name for a model; bridge commands are flattened.
pub fn model_dir_name(model: &str) -> String {
    model
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn run_dir(out: &Path, dataset: &str, model: &str) -> PathBuf {
    out.join(model_dir_name(dataset)).join(model_dir_name(model))
}

fn clock(frozen: bool) -> Clock {
    if frozen {
        Clock::Frozen
    } else {
        Clock::Monotonic
    }
}

fn load_dataset(d: &DataArgs) -> Result<Table> {
    let schema = d.schema.clone().unwrap_or_else(|| d.dataset.with_extension("schema.toml"));
    load_csv(&d.dataset, &schema)
}

/// A file path if it exists, otherwise a bundled space name.
pub fn resolve_space(arg: &str) -> Result<SearchSpace> {
    let p = Path::new(arg);
    if p.is_file() {
        return SearchSpace::load(p);
    }
    tuner::bundled(arg).map_err(|e| Error::InvalidArgument(format!("`{arg}` is not a file, and {e}")))
}

fn default_space(model: &str) -> Result<SearchSpace> {
    let name = match model {
        "ucsmote" => "smote",
        "marginals" => "traincopy",
        m => m,
    };
    tuner::bundled(name)
        .map_err(|_| Error::InvalidArgument(format!("model `{model}` has no bundled space; pass --space")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_tune(a: &TuneArgs) -> Result<()> {
    let table = load_dataset(&a.data)?;
    let synth = generators::create(&a.data.model)?;
    let mut space = match &a.space {
        Some(s) => resolve_space(s)?,
        None => default_space(&a.data.model)?,
    };
    if let Some(t) = a.trials {
        if t == 0 {
            return Err(Error::InvalidArgument("--trials must be at least 1".into()));
        }
        space.max_trials = t;
    }
    if let Some(b) = &a.budget {
        space.per_trial_time_budget_s = tuner::parse_budget(b)?;
    }
    if let Some(m) = a.max_steps {
        space.max_steps = m;
    }
    let device = DeviceModel::parse(&a.device)?;
    let folds = make_folds_with(&table, a.data.seed, a.stratify)?;
    let dir = run_dir(&a.data.out, table.name(), &a.data.model);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let log_path = dir.join("trials.ndjson");
    // a re-run replaces the previous log instead of extending it
    let log_file = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut writer = TrialLogWriter::new(log_file);
    let mut sink = |r: &tuner::TrialRecord| writer.write(r);
    let opts = TunerOptions {
        parallelism: a.parallelism,
        seed: a.data.seed,
        pruning: !a.no_pruning,
        clock: clock(a.data.frozen_clock),
        ..TunerOptions::default()
    };
    let result = tuner::tune(synth.as_ref(), &space, &table, &folds, &opts, Some(&mut sink))?;

    let model = synth.name();
    let mut best = BestConfigs {
        dataset: table.name().into(),
        model: model.clone(),
        seed: a.data.seed,
        stratify: a.stratify,
        folds: Vec::new(),
    };
    for (fold, t) in &result.best {
        let in_fold: Vec<&tuner::Trial> =
            result.records.iter().filter(|r| r.fold == *fold).map(|r| &r.trial).collect();
        let pruned = in_fold.iter().filter(|t| t.stop_reason == tuner::StopReason::Pruned).count();
        let score = t.final_score.or_else(|| t.best_so_far()).unwrap_or(f64::NAN);
        println!(
            "{} {} fold {fold}: best trial {} c2st {score:.4} ({} trials, {pruned} pruned) {}",
            table.name(),
            model,
            t.trial_id,
            in_fold.len(),
            t.config.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
        );
        best.folds.push(BestFold {
            fold: *fold,
            trial_id: t.trial_id,
            steps: t.last_step().unwrap_or(0),
            score,
            config: t.config.clone(),
        });
    }
    write_json(&dir.join("best.json"), &best)?;
    let costs: Vec<_> = result.records.iter().map(|r| r.trial.cost).collect();
    let total = estimate_tuning_cost(&costs, &device)?;
    write_cost_csv(
        &[CostRow {
            model,
            dataset: table.name().into(),
            device_seconds: total.device_seconds,
            kwh: total.kwh,
            co2_kg: total.co2_kg,
        }],
        dir.join("cost.csv"),
    )
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let table = load_dataset(&a.data)?;
    let synth = generators::create(&a.data.model)?;
    let dir = run_dir(&a.data.out, table.name(), &a.data.model);
    let best_path = dir.join("best.json");
    let text = std::fs::read_to_string(&best_path).map_err(|e| Error::io(&best_path, e))?;
    let best: BestConfigs = serde_json::from_str(&text)?;
    let folds = make_folds_with(&table, best.seed, best.stratify)?;
    let opts = EvalOptions {
        dcr: DcrOptions { balance_reference: a.dcr_balance, seed: a.data.seed },
        ..EvalOptions::default()
    };
    let model = synth.name();
    let mut scores = ScoreTable::new();
    for bf in &best.folds {
        let fold = folds
            .get(bf.fold)
            .ok_or_else(|| Error::InvalidArgument(format!("{}: no fold {}", best_path.display(), bf.fold)))?;
        let (train, test) = (fold.train(&table), fold.test(&table));
        let fit_seed = rng::derive_seed(a.data.seed, &format!("evaluate/fold{}", bf.fold));
        let mut handle =
            SynthesizerHandle::prepare_fit(synth.as_ref(), &bf.config, &train, fit_seed, clock(a.data.frozen_clock))?;
        for _ in 0..bf.steps.max(1) {
            if handle.train_step()?.early_stop {
                break;
            }
        }
        for s in 0..N_SAMPLES {
            let seed = rng::derive_seed(fit_seed, &format!("sample{s}"));
            let synthetic = handle.sample(train.n_rows(), seed)?;
            let bundle = evaluate(&synthetic, &train, &test, &opts, seed)?;
            for (metric, value) in bundle.named() {
                scores.push(table.name(), &model, bf.fold, s, metric, value);
            }
        }
        let c2st: Vec<f64> =
            scores.rows.iter().filter(|r| r.fold == bf.fold && r.metric == "c2st").map(|r| r.value).collect();
        println!(
            "{} {} fold {}: mean c2st over {} samples {:.4}",
            table.name(),
            model,
            bf.fold,
            c2st.len(),
            c2st.iter().sum::<f64>() / c2st.len() as f64
        );
    }
    scores.write_csv(dir.join("scores.csv"))
}

/// Files named `name` exactly two levels below `out`, in path order.
fn collect_runs(out: &Path, name: &str) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let read = |p: &Path| std::fs::read_dir(p).map_err(|e| Error::io(p, e));
    for d in read(out)? {
        let d = d.map_err(|e| Error::io(out, e))?.path();
        if !d.is_dir() {
            continue;
        }
        for m in read(&d)? {
            let f = m.map_err(|e| Error::io(&d, e))?.path().join(name);
            if f.is_file() {
                found.push(f);
            }
        }
    }
    found.sort();
    Ok(found)
}

pub fn cmd_report(a: &ReportArgs) -> Result<()> {
    let mut scores = ScoreTable::new();
    for f in collect_runs(&a.out, "scores.csv")? {
        scores.rows.extend(ScoreTable::read_csv(&f)?.rows);
    }
    let mut costs = Vec::new();
    for f in collect_runs(&a.out, "cost.csv")? {
        costs.extend(read_cost_csv(&f)?);
    }
    if scores.is_empty() && costs.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no scores.csv or cost.csv under {}; run tune and evaluate first",
            a.out.display()
        )));
    }
    let files = emit_report(&scores, &costs, a.out.join("report"), a.svg)?;
    println!("wrote {} report files to {}", files.paths.len(), a.out.join("report").display());
    Ok(())
}

pub fn cmd_reduce_space(a: &ReduceArgs) -> Result<()> {
    let space = resolve_space(&a.space)?;
    let mut logs = Vec::new();
    for p in &a.logs {
        logs.extend(read_trial_log(p)?);
    }
    let opts = ReduceOptions {
        keep_mass: a.keep_mass,
        p_lo: a.p_lo,
        p_hi: a.p_hi,
        pool: match a.pool {
            PoolArg::Best => ReductionPool::BestPerFold,
            PoolArg::All => ReductionPool::AllFinished,
        },
    };
    let mut reduced = tuner::reduce_space(&logs, &space, &opts)?;
    reduced.name = a.name.clone().unwrap_or_else(|| format!("{}-reduced", space.name));
    reduced.save(&a.output)?;
    println!("wrote {} ({} trials pooled)", a.output.display(), logs.len());
    Ok(())
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Tune(a) => cmd_tune(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Report(a) => cmd_report(a),
        Command::ReduceSpace(a) => cmd_reduce_space(a),
    }
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code: 0 on success, 1 for usage and module errors, 2 when
/// the run panics.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match std::panic::catch_unwind(|| dispatch(&cli)) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            1
        }
        Err(_) => {
            eprintln!("internal error; this is a bug");
            2
        }
    }
}

