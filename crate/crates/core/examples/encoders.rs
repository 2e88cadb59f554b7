//! Every numeric encoder on one skewed column: what a few values encode to
//! and what the encodings decode back to.
//!
//!     cargo run --example encoders

use rand_distr::{Distribution, LogNormal};
use tabbench::encoders::{fit_encoder, Decoded, EncoderKind, Values};
use tabbench::rng;

fn main() -> tabbench::Result<()> {
    let mut r = rng::stream(1, "encoders example");
    let income = LogNormal::new(10.0, 0.6).unwrap();
    let column: Vec<f64> = (0..2000).map(|_| (income.sample(&mut r) / 100.0f64).round() * 100.0).collect();
    let probes = [column[0], column[1], column[2]];

    for name in ["minmax", "quantile", "cdf", "ple", "ple_cdf", "ptp"] {
        let kind = EncoderKind::from_name(name)?;
        let enc = fit_encoder(kind, Values::Numeric(&column))?;
        let m = enc.encode(Values::Numeric(&probes), &mut rng::stream(2, name))?;
        let Decoded::Numeric(back) = enc.decode(&m)? else { unreachable!() };
        println!("{name} ({} output columns)", enc.output_dim());
        for (i, x) in probes.iter().enumerate() {
            let shown: Vec<String> = m.row(i).iter().take(6).map(|v| format!("{v:.3}")).collect();
            let more = if m.n_cols() > 6 { ", ..." } else { "" };
            println!("  {x:>9.0} -> [{}{more}] -> {:.0}", shown.join(", "), back[i]);
        }
    }

    // categorical columns are one-hot encoded
    let vocab: Vec<String> = ["clerk", "engineer", "nurse"].iter().map(|s| s.to_string()).collect();
    let codes = [2u32, 0, 1, 2];
    let onehot = fit_encoder(EncoderKind::OneHot, Values::Categorical { codes: &codes, vocab: &vocab })?;
    let m = onehot.encode(Values::Categorical { codes: &codes, vocab: &vocab }, &mut rng::stream(0, ""))?;
    println!("onehot");
    for (c, row) in codes.iter().zip(m.rows()) {
        println!("  {:<9} -> {row:?}", vocab[*c as usize]);
    }

    // fitted encoders persist as text
    let ptp = fit_encoder(EncoderKind::from_name("ptp")?, Values::Numeric(&column))?;
    println!("persisted ptp encoder:\n{}", ptp.to_text());
    Ok(())
}
