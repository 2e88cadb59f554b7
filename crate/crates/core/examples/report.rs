//! Aggregate scores into the report tables: per-dataset means, quartile
//! summaries, average ranks with the Friedman statistic and the Nemenyi
//! critical difference, and an SVG critical-difference diagram.
//!
//!     cargo run --example report [output-dir]

use rand::Rng as _;
use tabbench::cost::CostRow;
use tabbench::report::{emit_report, quartile_summary, rank_models, Direction, ScoreTable, N_FOLDS, N_SAMPLES};
use tabbench::rng;

fn main() -> tabbench::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "tabbench-report-example".into());
    // five models of increasing quality on eight datasets
    let models: [(&str, f64); 5] = [("traincopy", 0.50), ("tabsyn", 0.62), ("ctgan", 0.75), ("tvae", 0.80), ("marginals", 0.95)];
    let mut r = rng::stream(3, "report example");
    let mut scores = ScoreTable::new();
    let mut costs = Vec::new();
    for d in 0..8 {
        let dataset = format!("dataset{d}");
        for (model, level) in models {
            for fold in 0..N_FOLDS {
                for s in 0..N_SAMPLES {
                    let c2st = (level + r.gen_range(-0.12f64..0.12)).clamp(0.5, 1.0);
                    scores.push(&dataset, model, fold, s, "c2st", c2st);
                    scores.push(&dataset, model, fold, s, "shape", 1.5 - c2st + r.gen_range(-0.05..0.0));
                }
            }
            let device_seconds = r.gen_range(10.0..5000.0);
            costs.push(CostRow {
                model: model.into(),
                dataset: dataset.clone(),
                device_seconds,
                kwh: device_seconds * 300.0 / 3.6e6,
                co2_kg: device_seconds * 300.0 / 3.6e6 * 0.05,
            });
        }
    }

    for q in quartile_summary(&scores, "c2st") {
        println!("{:<10} c2st P25 {:.3}  median {:.3}  P75 {:.3}", q.model, q.p25, q.p50, q.p75);
    }
    let ranking = rank_models(&scores, "c2st", Direction::LowerBetter)?;
    println!("Friedman chi2 {:.2} over {} blocks", ranking.friedman_chi2, ranking.n_blocks);
    if let Some(cd) = ranking.critical_difference {
        println!("critical difference {cd:.3}");
    }
    let mut ranks = ranking.average_ranks.clone();
    ranks.sort_by(|a, b| a.1.total_cmp(&b.1));
    for (model, rank) in &ranks {
        println!("  {model:<10} {rank:.2}");
    }
    for (a, b) in &ranking.bridged {
        println!("  no significant difference: {a} ~ {b}");
    }

    let files = emit_report(&scores, &costs, &out, true)?;
    println!("wrote {} files under {out}", files.paths.len());
    Ok(())
}
