//! The synthesizer contract and the built-in generators.
//!
//! A [`Synthesizer`] is a factory: `prepare_fit` builds a [`FitState`]
//! from a configuration and a training table. [`SynthesizerHandle`] wraps a
//! state, numbers its steps, times them and checks every sample against the
//! training schema.

mod gmm;
mod smote;

use rand::Rng as _;

use crate::config::Config;
use crate::cost::Clock;
use crate::dataset::{Column, Table};
use crate::error::{Error, Result};
use crate::rng;

pub use gmm::{GmmConfig, GmmState, GmmToy};
pub use smote::{smote_sample, Smote, SmoteConfig, SmoteModel};

/// Model-side result of one training step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepOutcome {
    pub early_stop: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step_index: usize,
    pub early_stop: bool,
    pub wall_seconds: f64,
}

/// A fitted, trainable generator.
pub trait FitState: Send {
    fn train_step(&mut self) -> Result<StepOutcome>;
    fn sample(&mut self, n: usize, seed: u64) -> Result<Table>;
}

pub trait Synthesizer: Send + Sync {
    fn name(&self) -> String;

    /// The configuration used when nothing is tuned.
    fn default_config(&self) -> Config {
        Config::new()
    }

    fn prepare_fit(&self, config: &Config, train: &Table, seed: u64) -> Result<Box<dyn FitState>>;
}

/// A live state together with its step counter and timings.
pub struct SynthesizerHandle {
    state: Box<dyn FitState>,
    template: Table,
    steps_taken: usize,
    clock: Clock,
    init_seconds: f64,
}

impl SynthesizerHandle {
    pub fn prepare_fit(
        synth: &dyn Synthesizer,
        config: &Config,
        train: &Table,
        seed: u64,
        clock: Clock,
    ) -> Result<SynthesizerHandle> {
        let sw = clock.start();
        let state = synth.prepare_fit(config, train, seed)?;
        Ok(SynthesizerHandle {
            state,
            template: train.take(&[0]),
            steps_taken: 0,
            clock,
            init_seconds: sw.elapsed(),
        })
    }

    /// Wall time spent in `prepare_fit`.
    pub fn init_seconds(&self) -> f64 {
        self.init_seconds
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    /// Step indices start at 1.
    pub fn train_step(&mut self) -> Result<StepReport> {
        let sw = self.clock.start();
        let outcome = self.state.train_step()?;
        self.steps_taken += 1;
        Ok(StepReport {
            step_index: self.steps_taken,
            early_stop: outcome.early_stop,
            wall_seconds: sw.elapsed(),
        })
    }

    pub fn sample(&mut self, n: usize, seed: u64) -> Result<Table> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be at least 1".into()));
        }
        let out = self.state.sample(n, seed)?;
        self.template.check_same_schema(&out)?;
        if out.task() != self.template.task() {
            return Err(Error::SchemaMismatch(format!(
                "sample task {} differs from training task {}",
                out.task(),
                self.template.task()
            )));
        }
        if out.n_rows() != n {
            return Err(Error::Synthesizer(format!(
                "asked for {n} rows, got {}",
                out.n_rows()
            )));
        }
        Ok(out)
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidArgument("sample size must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// `n` rows drawn uniformly with replacement from `train`.
pub fn traincopy_sample(train: &Table, n: usize, seed: u64) -> Result<Table> {
    check_n(n)?;
    let mut r = rng::stream(seed, "traincopy");
    let idx: Vec<usize> = (0..n).map(|_| r.gen_range(0..train.n_rows())).collect();
    Ok(train.take(&idx))
}

/// Every column resampled independently from its empirical marginal.
pub fn marginals_sample(train: &Table, n: usize, seed: u64) -> Result<Table> {
    check_n(n)?;
    let mut r = rng::stream(seed, "marginals");
    let columns: Vec<Column> = train
        .columns()
        .iter()
        .map(|c| {
            let idx: Vec<usize> = (0..n).map(|_| r.gen_range(0..train.n_rows())).collect();
            c.take(&idx)
        })
        .collect();
    train.with_columns(columns)
}

fn reject_params(name: &str, config: &Config) -> Result<()> {
    match config.keys().next() {
        Some(k) => Err(Error::InvalidArgument(format!("{name} takes no parameter `{k}`"))),
        None => Ok(()),
    }
}

/// State shared by the two resampling baselines: fitting is a no-op.
struct Resampler {
    train: Table,
    draw: fn(&Table, usize, u64) -> Result<Table>,
}

impl FitState for Resampler {
    fn train_step(&mut self) -> Result<StepOutcome> {
        Ok(StepOutcome { early_stop: true })
    }

    fn sample(&mut self, n: usize, seed: u64) -> Result<Table> {
        (self.draw)(&self.train, n, seed)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrainCopy;

impl Synthesizer for TrainCopy {
    fn name(&self) -> String {
        "traincopy".into()
    }

    fn prepare_fit(&self, config: &Config, train: &Table, _seed: u64) -> Result<Box<dyn FitState>> {
        reject_params("traincopy", config)?;
        Ok(Box::new(Resampler {
            train: train.clone(),
            draw: traincopy_sample,
        }))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Marginals;

impl Synthesizer for Marginals {
    fn name(&self) -> String {
        "marginals".into()
    }

    fn prepare_fit(&self, config: &Config, train: &Table, _seed: u64) -> Result<Box<dyn FitState>> {
        reject_params("marginals", config)?;
        Ok(Box::new(Resampler {
            train: train.clone(),
            draw: marginals_sample,
        }))
    }
}

/// Registry names accepted by [`create`].
pub const BUILTIN_NAMES: [&str; 5] = ["traincopy", "marginals", "smote", "ucsmote", "gmmtoy"];

/// Looks up a generator by registry name. `bridge:<command>` launches
/// `<command>` as an out-of-process model.
pub fn create(name: &str) -> Result<Box<dyn Synthesizer>> {
    if let Some(cmd) = name.strip_prefix("bridge:") {
        return Ok(Box::new(crate::bridge::BridgeSynthesizer::from_command_line(cmd)?));
    }
    Ok(match name {
        "traincopy" => Box::new(TrainCopy),
        "marginals" => Box::new(Marginals),
        "smote" => Box::new(Smote { conditioned: true }),
        "ucsmote" => Box::new(Smote { conditioned: false }),
        "gmmtoy" => Box::new(GmmToy),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown model `{other}`; expected one of {} or bridge:<command>",
                BUILTIN_NAMES.join(", ")
            )))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy;
    use std::collections::HashSet;

    #[test]
    fn traincopy_rows_are_train_rows() {
        let t = toy::mixed_census(300, 1);
        let s = traincopy_sample(&t, 300, 9).unwrap();
        let rows: HashSet<Vec<String>> = (0..t.n_rows()).map(|i| t.row_strings(i)).collect();
        assert!((0..s.n_rows()).all(|i| rows.contains(&s.row_strings(i))));
        assert_eq!(s, traincopy_sample(&t, 300, 9).unwrap());
        assert!(traincopy_sample(&t, 0, 9).is_err());
    }

    #[test]
    fn marginals_break_dependence() {
        let x: Vec<f64> = (0..10_000).map(|i| i as f64).collect();
        let t = toy::numeric_table("xy", &[("x", x.clone()), ("y", x)]);
        let s = marginals_sample(&t, 10_000, 0).unwrap();
        let rho = toy::pearson(s.column(0).as_numeric().unwrap(), s.column(1).as_numeric().unwrap());
        assert!(rho.abs() < 0.1, "rho = {rho}");
    }

    #[test]
    fn handle_numbers_steps_and_checks_schema() {
        let t = toy::two_moons(200, 0.1, 3);
        let mut h =
            SynthesizerHandle::prepare_fit(&TrainCopy, &Config::new(), &t, 0, Clock::Frozen).unwrap();
        let a = h.train_step().unwrap();
        let b = h.train_step().unwrap();
        assert_eq!((a.step_index, b.step_index), (1, 2));
        assert!(a.early_stop);
        assert_eq!(h.sample(17, 1).unwrap().n_rows(), 17);
    }

    #[test]
    fn registry() {
        for name in BUILTIN_NAMES {
            assert_eq!(create(name).unwrap().name(), name);
        }
        assert!(create("tvae").is_err());
        let mut c = Config::new();
        c.insert("k".into(), 3i64.into());
        assert!(TrainCopy.prepare_fit(&c, &toy::two_moons(50, 0.1, 0), 0).is_err());
    }
}
