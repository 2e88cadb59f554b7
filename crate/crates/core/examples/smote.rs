//! SMOTE and its unconditioned variant: interpolating between nearby
//! training rows yields samples close to the training data, which shows up
//! as a DCR rate far above the 0.5 of an ideal generator.
//!
//!     cargo run --release --example smote

use tabbench::dataset::make_folds;
use tabbench::generators::{marginals_sample, smote_sample, SmoteConfig};
use tabbench::metrics::{dcr_rate, shape_score, DcrOptions};
use tabbench::toy;

fn main() -> tabbench::Result<()> {
    let table = toy::mixed_census(3000, 9);
    let fold = &make_folds(&table, 9)?[0];
    let (train, test) = (fold.train(&table), fold.test(&table));
    let n = test.n_rows();

    println!("{:<22} {:>6} {:>6}", "generator", "dcr", "shape");
    for conditioned in [true, false] {
        for k in [2, 5, 10, 20] {
            let cfg = SmoteConfig { k_neighbors: k, conditioned, seed: 4 };
            let s = smote_sample(&train, &cfg, n)?;
            let label = format!("{} k={k}", if conditioned { "smote" } else { "ucsmote" });
            println!(
                "{label:<22} {:>6.3} {:>6.3}",
                dcr_rate(&s, &train, &test, DcrOptions::default())?,
                shape_score(&train, &s)?
            );
        }
    }
    let m = marginals_sample(&train, n, 4)?;
    println!(
        "{:<22} {:>6.3} {:>6.3}",
        "marginals",
        dcr_rate(&m, &train, &test, DcrOptions::default())?,
        shape_score(&train, &m)?
    );
    Ok(())
}
