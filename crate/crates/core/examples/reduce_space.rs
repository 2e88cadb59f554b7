//! Shrink a search space around what worked: tune on every fold, pool the
//! best trial of each, keep the most frequent choices and the 10th-90th
//! percentile range of the continuous parameters.
//!
//!     cargo run --release --example reduce_space

use tabbench::dataset::make_folds;
use tabbench::generators;
use tabbench::toy;
use tabbench::tuner::{self, reduce_space, ReduceOptions, ReductionPool, TunerOptions};

fn main() -> tabbench::Result<()> {
    let model = generators::create("gmmtoy")?;
    let mut space = tuner::bundled("gmmtoy")?;
    space.max_trials = 12;
    space.max_steps = 15;
    println!("original space:\n{}", space.to_text());

    // logs from several datasets feed one reduction
    let mut logs = Vec::new();
    for (i, noise) in [0.05, 0.1, 0.2].into_iter().enumerate() {
        let table = toy::two_moons(1200, noise, i as u64);
        let folds = make_folds(&table, i as u64)?;
        let opts = TunerOptions { seed: i as u64, ..TunerOptions::default() };
        logs.extend(tuner::tune(model.as_ref(), &space, &table, &folds, &opts, None)?.records);
    }

    for pool in [ReductionPool::BestPerFold, ReductionPool::AllFinished] {
        let reduced = reduce_space(&logs, &space, &ReduceOptions { pool, ..ReduceOptions::default() })?;
        println!("reduced from {pool:?}:\n{}", reduced.to_text());
    }
    Ok(())
}
