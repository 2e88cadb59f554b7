//! Wall-time accounting and the energy/carbon model of tuning cost.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Source of wall time. `Frozen` reports zero for every interval so that
/// runs can be replayed byte for byte; it also disables time budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Clock {
    #[default]
    Monotonic,
    Frozen,
}

/// A started interval on a [`Clock`].
#[derive(Debug, Clone, Copy)]
pub struct Stopwatch(Option<Instant>);

impl Clock {
    pub fn start(self) -> Stopwatch {
        match self {
            Clock::Monotonic => Stopwatch(Some(Instant::now())),
            Clock::Frozen => Stopwatch(None),
        }
    }
}

impl Stopwatch {
    pub fn elapsed(&self) -> f64 {
        self.0.map_or(0.0, |t| t.elapsed().as_secs_f64())
    }
}

/// Runs `block` and returns its result with its monotonic wall time.
pub fn measure<T>(block: impl FnOnce() -> T) -> (T, f64) {
    measure_with(Clock::Monotonic, block)
}

pub fn measure_with<T>(clock: Clock, block: impl FnOnce() -> T) -> (T, f64) {
    let sw = clock.start();
    let out = block();
    (out, sw.elapsed())
}

/// Time spent by one trial.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostRecord {
    pub init_seconds: f64,
    pub seconds_per_step: f64,
    pub num_steps: usize,
    pub sample_seconds: f64,
}

impl CostRecord {
    /// Builds a record from the per-step wall times of a run.
    pub fn from_steps(init_seconds: f64, step_seconds: &[f64], sample_seconds: f64) -> Self {
        let num_steps = step_seconds.len();
        let seconds_per_step = if num_steps == 0 {
            0.0
        } else {
            step_seconds.iter().sum::<f64>() / num_steps as f64
        };
        CostRecord {
            init_seconds,
            seconds_per_step,
            num_steps,
            sample_seconds,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = [self.init_seconds, self.seconds_per_step, self.sample_seconds]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("negative or non-finite cost: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub power_watts: f64,
    pub carbon_g_per_kwh: f64,
    pub trials_per_device: usize,
}

impl Default for DeviceModel {
    fn default() -> Self {
        DeviceModel {
            power_watts: 300.0,
            carbon_g_per_kwh: 50.0,
            trials_per_device: 1,
        }
    }
}

impl DeviceModel {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.power_watts) || !pos(self.carbon_g_per_kwh) || self.trials_per_device == 0 {
            return Err(Error::InvalidArgument(format!("invalid device profile: {self:?}")));
        }
        Ok(())
    }

    /// Parses `watts,g_per_kwh[,trials_per_device]`.
    pub fn parse(text: &str) -> Result<DeviceModel> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        let bad = || Error::InvalidArgument(format!("device profile `{text}` is not `watts,g_per_kwh[,trials]`"));
        if !(2..=3).contains(&parts.len()) {
            return Err(bad());
        }
        let device = DeviceModel {
            power_watts: parts[0].parse().map_err(|_| bad())?,
            carbon_g_per_kwh: parts[1].parse().map_err(|_| bad())?,
            trials_per_device: match parts.get(2) {
                Some(p) => p.parse().map_err(|_| bad())?,
                None => 1,
            },
        };
        device.validate()?;
        Ok(device)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TuningCost {
    pub device_seconds: f64,
    pub kwh: f64,
    pub co2_kg: f64,
}

impl TuningCost {
    pub fn from_device_seconds(device_seconds: f64, device: &DeviceModel) -> TuningCost {
        let kwh = device_seconds * device.power_watts / 3.6e6;
        TuningCost {
            device_seconds,
            kwh,
            co2_kg: kwh * device.carbon_g_per_kwh / 1000.0,
        }
    }
}

/// Total device time of a tuning run: each trial costs its initialisation
/// plus its steps, and `trials_per_device` trials share one device.
pub fn estimate_tuning_cost(trials: &[CostRecord], device: &DeviceModel) -> Result<TuningCost> {
    if trials.is_empty() {
        return Err(Error::InvalidArgument("no trials to cost".into()));
    }
    device.validate()?;
    let mut total = 0.0;
    for t in trials {
        t.validate()?;
        total += t.init_seconds + t.seconds_per_step * t.num_steps as f64;
    }
    Ok(TuningCost::from_device_seconds(
        total / device.trials_per_device as f64,
        device,
    ))
}

/// One line of the cost report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub model: String,
    pub dataset: String,
    pub device_seconds: f64,
    pub kwh: f64,
    pub co2_kg: f64,
}

pub fn write_cost_csv_to<W: Write>(rows: &[CostRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["model", "dataset", "device_seconds", "kwh", "co2_kg"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<cost csv>", e))?;
    Ok(())
}

pub fn write_cost_csv(rows: &[CostRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_cost_csv_to(rows, std::io::BufWriter::new(f))
}

pub fn read_cost_csv(path: impl AsRef<Path>) -> Result<Vec<CostRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
