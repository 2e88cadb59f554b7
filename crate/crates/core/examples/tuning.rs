//! Random search with median-elimination pruning: tune the Gaussian-mixture
//! toy model on Two-Moons, log every trial as NDJSON and estimate what the
//! search cost in device time, energy and CO2.
//!
//!     cargo run --release --example tuning [trials]

use tabbench::cost::{estimate_tuning_cost, DeviceModel};
use tabbench::dataset::make_folds;
use tabbench::generators;
use tabbench::toy;
use tabbench::tuner::{self, TrialLogWriter, TunerOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trials: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20);
    let table = toy::two_moons(2000, 0.1, 0);
    let folds = make_folds(&table, 0)?;
    let model = generators::create("gmmtoy")?;
    let mut space = tuner::bundled("gmmtoy")?;
    space.max_trials = trials;

    let log_path = std::env::temp_dir().join("tabbench-tuning-example.ndjson");
    let mut writer = TrialLogWriter::new(std::fs::File::create(&log_path)?);
    let mut log = |rec: &tuner::TrialRecord| writer.write(rec);
    let opts = TunerOptions { seed: 0, ..TunerOptions::default() };
    let result = tuner::tune(model.as_ref(), &space, &table, &folds[..1], &opts, Some(&mut log))?;

    println!("{:>5} {:>8} {:>6} {:>10} {:>8}", "trial", "stop", "steps", "best step", "final");
    for rec in &result.records {
        let t = &rec.trial;
        println!(
            "{:>5} {:>8} {:>6} {:>10} {:>8}",
            t.trial_id,
            format!("{:?}", t.stop_reason),
            t.last_step().unwrap_or(0),
            t.best_so_far().map_or("-".into(), |v| format!("{v:.3}")),
            t.final_score.map_or("-".into(), |v| format!("{v:.3}")),
        );
    }
    let (fold, best) = &result.best[0];
    println!("fold {fold}: best trial {} with validation C2ST {:.3}", best.trial_id, best.final_score.unwrap_or(f64::NAN));
    println!("  config {:?}", best.config);

    let costs: Vec<_> = result.records.iter().map(|r| r.trial.cost).collect();
    let c = estimate_tuning_cost(&costs, &DeviceModel::default())?;
    println!("cost: {:.1} device-seconds, {:.2e} kWh, {:.2e} kg CO2", c.device_seconds, c.kwh, c.co2_kg);
    println!("trial log: {}", log_path.display());
    Ok(())
}
