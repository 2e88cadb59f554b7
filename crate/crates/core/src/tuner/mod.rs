//! Trial optimization: seeded random search over a [`SearchSpace`],
//! per-step evaluation with median-elimination pruning, trial logs and
//! search-space reduction.

mod space;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::config::{Config, ParamValue};
use crate::cost::{Clock, CostRecord};
use crate::dataset::{stratified_subsample, FoldSplit, Table};
use crate::error::{Error, Result};
use crate::generators::{Synthesizer, SynthesizerHandle};
use crate::learner::GbdtConfig;
use crate::metrics::c2st;
use crate::rng;

pub use space::{bundled, parse_budget, q_multiple, q_range, ParamKind, ParamSpec, SearchSpace, BUNDLED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    EarlyStop,
    Pruned,
    TimeBudget,
    Error,
}

impl StopReason {
    /// Whether a trial that stopped this way carries a final score.
    pub fn is_finished(self) -> bool {
        matches!(self, StopReason::Completed | StopReason::EarlyStop)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: usize,
    pub config: Config,
    /// `(step_index, intermediate C2ST)` with strictly increasing indices.
    pub step_scores: Vec<(usize, f64)>,
    pub final_score: Option<f64>,
    pub stop_reason: StopReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub cost: CostRecord,
}

impl Trial {
    fn new(trial_id: usize, config: Config) -> Trial {
        Trial {
            trial_id,
            config,
            step_scores: Vec::new(),
            final_score: None,
            stop_reason: StopReason::Error,
            error: None,
            cost: CostRecord::default(),
        }
    }

    pub fn last_step(&self) -> Option<usize> {
        self.step_scores.last().map(|s| s.0)
    }

    /// Lowest intermediate score among steps up to `step`.
    pub fn best_until(&self, step: usize) -> Option<f64> {
        self.step_scores
            .iter()
            .take_while(|s| s.0 <= step)
            .map(|s| s.1)
            .min_by(f64::total_cmp)
    }

    pub fn best_so_far(&self) -> Option<f64> {
        self.step_scores.iter().map(|s| s.1).min_by(f64::total_cmp)
    }
}

/// Median elimination: prune once the trial is past `grace_steps` and its
/// best score so far is strictly worse (higher) than the median of the
/// peers' best scores at the same depth. Peers that have not reached that
/// depth are ignored, and fewer than two comparable peers never prune.
pub fn median_prune_decision(this: &Trial, peers: &[Trial], grace_steps: usize) -> bool {
    let (Some(s), Some(best)) = (this.last_step(), this.best_so_far()) else {
        return false;
    };
    if s < grace_steps {
        return false;
    }
    let mut at_depth: Vec<f64> = peers
        .iter()
        .filter(|p| p.last_step().is_some_and(|l| l >= s))
        .filter_map(|p| p.best_until(s))
        .collect();
    if at_depth.len() < 2 {
        return false;
    }
    at_depth.sort_by(f64::total_cmp);
    let m = at_depth.len();
    let median = if m % 2 == 1 {
        at_depth[m / 2]
    } else {
        0.5 * (at_depth[m / 2 - 1] + at_depth[m / 2])
    };
    best > median
}

#[derive(Debug, Clone, Copy)]
pub struct TunerOptions {
    pub parallelism: usize,
    pub seed: u64,
    pub pruning: bool,
    /// Row cap for the per-step evaluation sample.
    pub eval_cap: usize,
    pub discriminator: GbdtConfig,
    pub clock: Clock,
}

impl Default for TunerOptions {
    fn default() -> Self {
        TunerOptions {
            parallelism: 1,
            seed: 0,
            pruning: true,
            eval_cap: 2048,
            discriminator: GbdtConfig::discriminator(),
            clock: Clock::Monotonic,
        }
    }
}

/// What one fold's trials are run against.
pub struct FoldData {
    pub fold_index: usize,
    pub train: Table,
    pub val: Table,
    /// Stratified subsample of `val` used for per-step scores.
    pub eval_reference: Table,
    pub seed: u64,
}

impl FoldData {
    pub fn new(table: &Table, fold: &FoldSplit, opts: &TunerOptions) -> Result<FoldData> {
        let val = fold.val(table);
        let seed = rng::derive_seed(opts.seed, &format!("fold/{}", fold.fold_index));
        let n_eval = val.n_rows().min(opts.eval_cap);
        Ok(FoldData {
            fold_index: fold.fold_index,
            train: fold.train(table),
            eval_reference: stratified_subsample(&val, n_eval, seed)?,
            val,
            seed,
        })
    }
}

/// Runs one configuration. `prune` sees the trial after every step and
/// returns whether to stop it. Synthesizer failures end the trial with
/// [`StopReason::Error`] instead of failing the call.
pub fn run_trial(
    synth: &dyn Synthesizer,
    trial_id: usize,
    config: &Config,
    fold: &FoldData,
    space: &SearchSpace,
    opts: &TunerOptions,
    prune: &mut dyn FnMut(&Trial) -> bool,
) -> Trial {
    let mut trial = Trial::new(trial_id, config.clone());
    if let Err(e) = drive_trial(synth, &mut trial, fold, space, opts, prune) {
        trial.stop_reason = StopReason::Error;
        trial.final_score = None;
        trial.error = Some(e.to_string());
    }
    trial
}

fn drive_trial(
    synth: &dyn Synthesizer,
    trial: &mut Trial,
    fold: &FoldData,
    space: &SearchSpace,
    opts: &TunerOptions,
    prune: &mut dyn FnMut(&Trial) -> bool,
) -> Result<()> {
    let seed = rng::derive_seed(fold.seed, &format!("trial/{}", trial.trial_id));
    let started = opts.clock.start();
    let mut handle = SynthesizerHandle::prepare_fit(synth, &trial.config, &fold.train, seed, opts.clock)?;
    let mut step_seconds = Vec::new();
    let mut sample_seconds = 0.0;
    let n_eval = fold.eval_reference.n_rows();
    let over_budget =
        |t: f64| space.per_trial_time_budget_s > 0.0 && t >= space.per_trial_time_budget_s;
    let reason = loop {
        let report = handle.train_step()?;
        step_seconds.push(report.wall_seconds);
        let sw = opts.clock.start();
        let sample = handle.sample(n_eval, rng::derive_seed(seed, &format!("eval/{}", report.step_index)))?;
        sample_seconds += sw.elapsed();
        let score = c2st(&fold.eval_reference, &sample, &opts.discriminator, fold.seed)?;
        trial.step_scores.push((report.step_index, score));
        trial.cost = CostRecord::from_steps(handle.init_seconds(), &step_seconds, sample_seconds);
        if report.early_stop {
            break StopReason::EarlyStop;
        }
        if space.max_steps > 0 && report.step_index >= space.max_steps {
            break StopReason::Completed;
        }
        if over_budget(started.elapsed()) {
            break StopReason::TimeBudget;
        }
        if opts.pruning && prune(trial) {
            break StopReason::Pruned;
        }
    };
    trial.stop_reason = reason;
    if reason.is_finished() {
        let sw = opts.clock.start();
        let sample = handle.sample(fold.val.n_rows(), rng::derive_seed(seed, "final"))?;
        sample_seconds += sw.elapsed();
        trial.final_score = Some(c2st(&fold.val, &sample, &opts.discriminator, fold.seed)?);
    }
    trial.cost = CostRecord::from_steps(handle.init_seconds(), &step_seconds, sample_seconds);
    Ok(())
}

/// One line of a trial log: a trial with the run it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub format: String,
    pub version: u32,
    pub dataset: String,
    pub model: String,
    pub fold: usize,
    #[serde(flatten)]
    pub trial: Trial,
}

pub const LOG_FORMAT: &str = "tabbench-trial";

impl TrialRecord {
    pub fn new(dataset: &str, model: &str, fold: usize, trial: Trial) -> TrialRecord {
        TrialRecord {
            format: LOG_FORMAT.into(),
            version: 1,
            dataset: dataset.into(),
            model: model.into(),
            fold,
            trial,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("trial records serialize")
    }

    pub fn from_line(line: &str) -> Result<TrialRecord> {
        let r: TrialRecord = serde_json::from_str(line)?;
        if r.format != LOG_FORMAT || r.version != 1 {
            return Err(Error::Tuning(format!(
                "not a version 1 trial record: format `{}` version {}",
                r.format, r.version
            )));
        }
        Ok(r)
    }
}

/// Append-only trial log; every record is flushed as it is written.
pub struct TrialLogWriter<W: Write> {
    out: W,
}

impl TrialLogWriter<std::fs::File> {
    pub fn append(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(TrialLogWriter { out: f })
    }
}

impl<W: Write> TrialLogWriter<W> {
    pub fn new(out: W) -> Self {
        TrialLogWriter { out }
    }

    pub fn write(&mut self, record: &TrialRecord) -> Result<()> {
        writeln!(self.out, "{}", record.to_line())
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io("<trial log>", e))
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn read_trial_log_from<R: BufRead>(input: R) -> Result<Vec<TrialRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<trial log>", e))?;
        if !line.trim().is_empty() {
            out.push(TrialRecord::from_line(&line)?);
        }
    }
    Ok(out)
}

pub fn read_trial_log(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trial_log_from(BufReader::new(f))
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    /// Best trial of each fold, in fold order.
    pub best: Vec<(usize, Trial)>,
    pub records: Vec<TrialRecord>,
}

/// Sort key for picking a fold's best trial: finished trials by final
/// score, then (only if none finished) unfinished ones by their best
/// intermediate score; ties go to the lower trial id.
fn best_trial<'a>(trials: impl Iterator<Item = &'a Trial>) -> Option<&'a Trial> {
    let all: Vec<&Trial> = trials.filter(|t| t.stop_reason != StopReason::Error).collect();
    let finished: Vec<&Trial> = all.iter().copied().filter(|t| t.final_score.is_some()).collect();
    let (pool, key): (Vec<&Trial>, fn(&Trial) -> Option<f64>) = if finished.is_empty() {
        (all, Trial::best_so_far)
    } else {
        (finished, |t| t.final_score)
    };
    pool.into_iter()
        .filter_map(|t| key(t).map(|k| (k, t)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.trial_id.cmp(&b.1.trial_id)))
        .map(|(_, t)| t)
}

/// Tunes `synth` on every fold. Trial configurations depend only on the
/// seed; with `parallelism > 1` trials of a fold run concurrently and
/// pruning reads whatever the peers have recorded so far.
pub fn tune(
    synth: &dyn Synthesizer,
    space: &SearchSpace,
    table: &Table,
    folds: &[FoldSplit],
    opts: &TunerOptions,
    mut log: Option<&mut (dyn FnMut(&TrialRecord) -> Result<()> + Send)>,
) -> Result<TuneResult> {
    space.validate()?;
    if opts.parallelism == 0 {
        return Err(Error::InvalidArgument("parallelism must be at least 1".into()));
    }
    let model = synth.name();
    let fold_data: Vec<FoldData> = folds
        .iter()
        .map(|f| FoldData::new(table, f, opts))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize, Config)> = fold_data
        .iter()
        .enumerate()
        .flat_map(|(fi, fd)| {
            let mut r = rng::stream(fd.seed, "configs");
            space
                .trial_configs(&mut r)
                .into_iter()
                .enumerate()
                .map(move |(t, c)| (fi, t, c))
        })
        .collect();
    // live view of every trial, for pruning
    let boards: Vec<Mutex<BTreeMap<usize, Trial>>> = fold_data.iter().map(|_| Mutex::new(BTreeMap::new())).collect();
    let next = AtomicUsize::new(0);
    let sink: Mutex<(Vec<TrialRecord>, Option<Error>)> = Mutex::new((Vec::new(), None));
    let log_ref = Mutex::new(log.as_deref_mut());
    let worker = || loop {
        let j = next.fetch_add(1, Ordering::SeqCst);
        let Some((fi, trial_id, config)) = jobs.get(j) else { break };
        let fd = &fold_data[*fi];
        let board = &boards[*fi];
        let mut prune = |t: &Trial| {
            let mut b = board.lock().expect("board lock");
            b.insert(t.trial_id, t.clone());
            let peers: Vec<Trial> = b.values().filter(|p| p.trial_id != t.trial_id).cloned().collect();
            drop(b);
            median_prune_decision(t, &peers, space.grace_steps)
        };
        let trial = run_trial(synth, *trial_id, config, fd, space, opts, &mut prune);
        board.lock().expect("board lock").insert(trial.trial_id, trial.clone());
        log::info!(
            "{model} fold {} trial {}: {:?} final {:?}",
            fd.fold_index,
            trial.trial_id,
            trial.stop_reason,
            trial.final_score
        );
        let record = TrialRecord::new(table.name(), &model, fd.fold_index, trial);
        let written = match log_ref.lock().expect("log lock").as_mut() {
            Some(f) => f(&record),
            None => Ok(()),
        };
        let mut s = sink.lock().expect("sink lock");
        s.0.push(record);
        if let Err(e) = written {
            s.1.get_or_insert(e);
        }
    };
    if opts.parallelism == 1 {
        worker();
    } else {
        std::thread::scope(|sc| {
            for _ in 0..opts.parallelism {
                sc.spawn(worker);
            }
        });
    }
    let (mut records, err) = sink.into_inner().expect("sink lock");
    if let Some(e) = err {
        return Err(e);
    }
    records.sort_by_key(|r| (r.fold, r.trial.trial_id));
    let mut best = Vec::new();
    for fd in &fold_data {
        let trials = records.iter().filter(|r| r.fold == fd.fold_index).map(|r| &r.trial);
        match best_trial(trials) {
            Some(t) => best.push((fd.fold_index, t.clone())),
            None => {
                let first_error = records
                    .iter()
                    .find(|r| r.fold == fd.fold_index)
                    .and_then(|r| r.trial.error.clone())
                    .unwrap_or_default();
                return Err(Error::Tuning(format!(
                    "every trial of fold {} failed; first error: {first_error}",
                    fd.fold_index
                )));
            }
        }
    }
    Ok(TuneResult { best, records })
}

/// Which trials vote in [`reduce_space`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReductionPool {
    /// The best trial of every (dataset, model, fold).
    #[default]
    BestPerFold,
    /// Every trial with a final score.
    AllFinished,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReduceOptions {
    pub keep_mass: f64,
    pub p_lo: f64,
    pub p_hi: f64,
    pub pool: ReductionPool,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions { keep_mass: 0.8, p_lo: 10.0, p_hi: 90.0, pool: ReductionPool::BestPerFold }
    }
}

/// Nearest-rank percentile of sorted values: the `⌈p·n/100⌉`-th smallest.
pub fn nearest_rank<T: Copy>(sorted: &[T], p: f64) -> T {
    let n = sorted.len();
    let rank = ((p / 100.0 * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    sorted[rank - 1]
}

/// Shrinks `space` around the configurations selected in `logs`: choice
/// parameters keep their most frequent values up to `keep_mass` of the
/// selections (values tied with the last kept one stay too); numeric
/// ranges become the `[p_lo, p_hi]` percentile range of the selected
/// values. A range that collapses becomes a single choice.
pub fn reduce_space(logs: &[TrialRecord], space: &SearchSpace, opts: &ReduceOptions) -> Result<SearchSpace> {
    let pool: Vec<&Config> = match opts.pool {
        ReductionPool::AllFinished => logs
            .iter()
            .filter(|r| r.trial.final_score.is_some())
            .map(|r| &r.trial.config)
            .collect(),
        ReductionPool::BestPerFold => {
            let mut groups: BTreeMap<(&str, &str, usize), Vec<&Trial>> = BTreeMap::new();
            for r in logs {
                groups.entry((&r.dataset, &r.model, r.fold)).or_default().push(&r.trial);
            }
            groups
                .into_values()
                .filter_map(|ts| {
                    ts.into_iter()
                        .filter(|t| t.final_score.is_some())
                        .min_by(|a, b| {
                            a.final_score
                                .unwrap()
                                .total_cmp(&b.final_score.unwrap())
                                .then(a.trial_id.cmp(&b.trial_id))
                        })
                        .map(|t| &t.config)
                })
                .collect()
        }
    };
    if pool.is_empty() {
        return Err(Error::Tuning("no finished trial to reduce from".into()));
    }
    let mut out = space.clone();
    for p in &mut out.params {
        let selected: Vec<&ParamValue> = pool.iter().filter_map(|c| c.get(&p.name)).collect();
        if selected.is_empty() {
            continue;
        }
        p.kind = match &p.kind {
            ParamKind::Choice(values) => {
                let freq: Vec<usize> = values.iter().map(|v| selected.iter().filter(|s| **s == v).count()).collect();
                let mut order: Vec<usize> = (0..values.len()).collect();
                order.sort_by(|&a, &b| freq[b].cmp(&freq[a]).then(a.cmp(&b)));
                let total = selected.len() as f64;
                let mut kept = Vec::new();
                let mut mass = 0.0;
                let mut last = None;
                for &i in &order {
                    let reached = mass / total >= opts.keep_mass - 1e-12;
                    if freq[i] == 0 || (reached && Some(freq[i]) != last) {
                        break;
                    }
                    kept.push(values[i].clone());
                    mass += freq[i] as f64;
                    last = Some(freq[i]);
                }
                ParamKind::Choice(kept)
            }
            ParamKind::QLogUniform { lo, hi, q } => {
                let mut xs: Vec<f64> = selected.iter().filter_map(|v| v.as_f64()).collect();
                xs.sort_by(f64::total_cmp);
                let a = nearest_rank(&xs, opts.p_lo).max(*lo);
                let b = nearest_rank(&xs, opts.p_hi).min(*hi);
                if a < b && q_range(a, b, *q).is_some() {
                    ParamKind::QLogUniform { lo: a, hi: b, q: *q }
                } else {
                    ParamKind::Choice(vec![ParamValue::Float(a)])
                }
            }
            ParamKind::GridInt { lo, hi } => {
                let mut xs: Vec<i64> = selected.iter().filter_map(|v| v.as_i64()).collect();
                xs.sort_unstable();
                let a = nearest_rank(&xs, opts.p_lo).max(*lo);
                let b = nearest_rank(&xs, opts.p_hi).min(*hi);
                if a < b {
                    ParamKind::GridInt { lo: a, hi: b }
                } else {
                    ParamKind::Choice(vec![ParamValue::Int(a)])
                }
            }
        };
    }
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial_with(scores: &[f64]) -> Trial {
        let mut t = Trial::new(0, Config::new());
        t.step_scores = scores.iter().enumerate().map(|(i, s)| (i + 1, *s)).collect();
        t
    }

    #[test]
    fn pruning_rules() {
        let peers: Vec<Trial> = [0.60, 0.70, 0.80].iter().map(|s| trial_with(&[*s; 6])).collect();
        assert!(median_prune_decision(&trial_with(&[0.95; 6]), &peers, 5));
        assert!(!median_prune_decision(&trial_with(&[0.70; 6]), &peers, 5));
        assert!(!median_prune_decision(&trial_with(&[0.95; 4]), &peers, 5));
        assert!(!median_prune_decision(&trial_with(&[0.95; 6]), &[], 5));
        assert!(!median_prune_decision(&trial_with(&[0.95; 6]), &peers[..1], 5));
        // peers short of the trial's depth do not count
        let shallow: Vec<Trial> = [0.1, 0.2].iter().map(|s| trial_with(&[*s; 3])).collect();
        assert!(!median_prune_decision(&trial_with(&[0.95; 6]), &shallow, 5));
    }

    #[test]
    fn choice_reduction_keeps_prefix() {
        let mut logs = Vec::new();
        for (i, (v, n)) in [("A", 12), ("B", 5), ("C", 2), ("D", 1)].iter().enumerate() {
            for k in 0..*n {
                let mut t = Trial::new(k, [("x".to_string(), ParamValue::from(*v))].into());
                t.final_score = Some(0.5);
                t.stop_reason = StopReason::Completed;
                logs.push(TrialRecord::new("d", "m", i * 100 + k, t));
            }
        }
        let space = SearchSpace {
            params: vec![ParamSpec::choice("x", vec!["D".into(), "C".into(), "B".into(), "A".into()])],
            ..SearchSpace::default()
        };
        let r = reduce_space(&logs, &space, &ReduceOptions::default()).unwrap();
        assert_eq!(r.params[0].kind, ParamKind::Choice(vec!["A".into(), "B".into()]));
    }

    #[test]
    fn nearest_rank_examples() {
        let v: Vec<i64> = (1..=20).collect();
        assert_eq!(nearest_rank(&v, 10.0), 2);
        assert_eq!(nearest_rank(&v, 90.0), 18);
        assert_eq!(nearest_rank(&v, 0.0), 1);
        assert_eq!(nearest_rank(&v, 100.0), 20);
    }

    #[test]
    fn log_line_round_trip() {
        let mut t = trial_with(&[0.9, 0.1 + 0.2]);
        t.config.insert("lr".into(), ParamValue::Float(7.3e-3));
        t.config.insert("k".into(), ParamValue::Int(4));
        t.final_score = Some(1.0 / 3.0);
        t.stop_reason = StopReason::EarlyStop;
        let r = TrialRecord::new("moons", "gmmtoy", 2, t);
        assert_eq!(TrialRecord::from_line(&r.to_line()).unwrap(), r);
        assert!(TrialRecord::from_line(r#"{"format":"x"}"#).is_err());
    }
}
