//! The five evaluation metrics for three reference generators on the first
//! fold of a mixed-type table: copying training rows, independent
//! marginals, and a Gaussian mixture.
//!
//!     cargo run --release --example metrics

use tabbench::config::ParamValue;
use tabbench::cost::Clock;
use tabbench::dataset::make_folds;
use tabbench::generators::{self, SynthesizerHandle};
use tabbench::metrics::{c2st, evaluate, EvalOptions};
use tabbench::toy;

fn main() -> tabbench::Result<()> {
    let table = toy::mixed_census(4000, 5);
    let fold = &make_folds(&table, 5)?[0];
    let (train, test) = (fold.train(&table), fold.test(&table));
    let opts = EvalOptions::default();

    println!("{:<10} {:>7} {:>11} {:>8} {:>7} {:>7}", "model", "c2st", "ml_efficacy", "dcr", "shape", "pair");
    for model in ["traincopy", "marginals", "gmmtoy"] {
        let synth = generators::create(model)?;
        let mut config = synth.default_config();
        if model == "gmmtoy" {
            config.insert("n_components".into(), ParamValue::Int(8));
        }
        let mut h = SynthesizerHandle::prepare_fit(synth.as_ref(), &config, &train, 1, Clock::Monotonic)?;
        for _ in 0..20 {
            if h.train_step()?.early_stop {
                break;
            }
        }
        let sample = h.sample(train.n_rows(), 2)?;
        let m = evaluate(&sample, &train, &test, &opts, 3)?;
        println!(
            "{model:<10} {:>7.3} {:>11.3} {:>8.3} {:>7.3} {:>7.3}",
            m.c2st, m.ml_efficacy, m.dcr_rate, m.shape, m.pair
        );
    }

    // C2ST is 0.5 when the discriminator cannot tell the tables apart and
    // approaches 1 when it can
    let half = train.n_rows() / 2;
    let a = train.take(&(0..half).collect::<Vec<_>>());
    let b = train.take(&(half..train.n_rows()).collect::<Vec<_>>());
    println!("c2st of two halves of the training split: {:.3}", c2st(&a, &b, &opts.discriminator, 0)?);
    Ok(())
}
