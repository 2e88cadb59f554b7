//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs under `cargo test --test acceptance`.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use tabbench::config::ParamValue;
use tabbench::cost::Clock;
use tabbench::dataset::{make_folds, FoldSplit, Table};
use tabbench::generators::{self, marginals_sample, traincopy_sample, SynthesizerHandle};
use tabbench::metrics::{evaluate, EvalOptions};
use tabbench::report::N_SAMPLES;
use tabbench::rng::{self, derive_seed};
use tabbench::toy;
use tabbench::tuner::{self, reduce_space, ParamKind, ReduceOptions, TrialRecord, TunerOptions};

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

const MINUTE: Duration = Duration::from_secs(60);

fn main() {
    let criteria = [
        Criterion { name: "train-copy calibration", limit: 5 * MINUTE, run: train_copy_calibration },
        Criterion { name: "smote privacy signature", limit: 5 * MINUTE, run: smote_privacy },
        Criterion { name: "tuning helps", limit: 10 * MINUTE, run: tuning_helps },
        Criterion { name: "cost exactness", limit: Duration::from_secs(1), run: cost_exactness },
        Criterion { name: "oracle equivalence", limit: MINUTE, run: oracle_equivalence },
        Criterion { name: "reduction rule", limit: Duration::from_secs(1), run: reduction_rule },
        Criterion { name: "invariant suite", limit: 5 * MINUTE, run: invariant_suite },
        Criterion { name: "determinism", limit: 10 * MINUTE, run: determinism },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|detail| {
            if elapsed <= c.limit {
                Ok(detail)
            } else {
                Err(format!("{detail}; took {elapsed:.1?}, limit {:?}", c.limit))
            }
        });
        match outcome {
            Ok(detail) => println!("PASS {}: {detail} [{:.1}s]", c.name, elapsed.as_secs_f64()),
            Err(reason) => {
                failed += 1;
                println!("FAIL {}: {reason} [{:.1}s]", c.name, elapsed.as_secs_f64());
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn err(e: tabbench::Error) -> String {
    e.to_string()
}

fn split(table: &Table, fold: &FoldSplit) -> (Table, Table) {
    (fold.train(table), fold.test(table))
}

fn train_copy_calibration() -> Outcome {
    let table = common::dedup(&toy::mixed_census(20_000, 1));
    if table.n_rows() < 6000 {
        return Err(format!("only {} distinct rows", table.n_rows()));
    }
    let opts = EvalOptions::default();
    let (mut c2st, mut worst_shape, mut cells) = (0.0, f64::INFINITY, 0);
    for fold in make_folds(&table, 1).map_err(err)? {
        let (train, test) = split(&table, &fold);
        for s in 0..N_SAMPLES {
            let seed = derive_seed(fold.fold_index as u64, &format!("sample{s}"));
            let synth = traincopy_sample(&train, train.n_rows(), seed).map_err(err)?;
            let m = evaluate(&synth, &train, &test, &opts, seed).map_err(err)?;
            if m.dcr_rate != 1.0 {
                return Err(format!("fold {} sample {s}: dcr_rate {}", fold.fold_index, m.dcr_rate));
            }
            c2st += m.c2st;
            worst_shape = worst_shape.min(m.shape);
            cells += 1;
        }
    }
    let mean = c2st / cells as f64;
    let detail = format!("{} rows, {cells} cells, dcr 1.0 everywhere, mean c2st {mean:.4}, min shape {worst_shape:.4}", table.n_rows());
    if cells != 15 || !(0.45..=0.55).contains(&mean) || worst_shape < 0.98 {
        return Err(detail);
    }
    Ok(detail)
}

fn smote_privacy() -> Outcome {
    let table = toy::mixed_census(5000, 2);
    let folds = make_folds(&table, 2).map_err(err)?;
    let smote = generators::create("smote").map_err(err)?;
    let space = tuner::bundled("smote").map_err(err)?;
    let opts = TunerOptions { seed: 2, clock: Clock::Frozen, ..TunerOptions::default() };
    let tuned = tuner::tune(smote.as_ref(), &space, &table, &folds[..1], &opts, None).map_err(err)?;
    let best = &tuned.best[0].1;

    let (train, test) = split(&table, &folds[0]);
    let mut handle = SynthesizerHandle::prepare_fit(smote.as_ref(), &best.config, &train, 3, Clock::Frozen).map_err(err)?;
    handle.train_step().map_err(err)?;
    let synth = handle.sample(train.n_rows(), 4).map_err(err)?;
    let baseline = marginals_sample(&train, train.n_rows(), 4).map_err(err)?;
    let opts = EvalOptions::default();
    let s = evaluate(&synth, &train, &test, &opts, 5).map_err(err)?.dcr_rate;
    let m = evaluate(&baseline, &train, &test, &opts, 5).map_err(err)?.dcr_rate;
    let detail = format!("best k {}, smote dcr {s:.4}, marginals dcr {m:.4}", best.config["k_neighbors"]);
    if s >= 0.80 && s > m {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn tuning_helps() -> Outcome {
    let table = toy::two_moons(3000, 0.1, 3);
    let folds = make_folds(&table, 3).map_err(err)?;
    let gmm = generators::create("gmmtoy").map_err(err)?;
    let space = tuner::bundled("gmmtoy").map_err(err)?;
    if space.max_trials != 50 {
        return Err(format!("gmmtoy space runs {} trials", space.max_trials));
    }
    let opts = TunerOptions { seed: 3, ..TunerOptions::default() };
    let tuned = tuner::tune(gmm.as_ref(), &space, &table, &folds, &opts, None).map_err(err)?;
    let default = gmm.default_config();
    if default.get("n_components") != Some(&ParamValue::Int(1)) {
        return Err(format!("default config is not single-component: {default:?}"));
    }
    let mut parts = Vec::new();
    let mut ok = true;
    for (fold, (_, best)) in folds.iter().zip(&tuned.best) {
        let fd = tuner::FoldData::new(&table, fold, &opts).map_err(err)?;
        let base = tuner::run_trial(gmm.as_ref(), usize::MAX, &default, &fd, &space, &opts, &mut |_| false);
        let base = base.final_score.ok_or("default configuration did not finish")?;
        let best = best.final_score.ok_or("best trial did not finish")?;
        ok &= best <= base - 0.05;
        parts.push(format!("fold {}: default {base:.3} -> tuned {best:.3}", fold.fold_index));
    }
    let detail = parts.join(", ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cost_exactness() -> Outcome {
    for seed in 0..20 {
        common::cost_matches_hand(seed)?;
    }
    Ok("20 random record sets equal the hand computation".into())
}

fn oracle_equivalence() -> Outcome {
    for (name, check) in common::ORACLE_CHECKS {
        for seed in 0..200 {
            check(seed).map_err(|e| format!("{name}: {e}"))?;
        }
    }
    let names: Vec<&str> = common::ORACLE_CHECKS.iter().map(|c| c.0).collect();
    Ok(format!("{} exact over 200 seeds", names.join(", ")))
}

fn reduction_rule() -> Outcome {
    let space = tuner::bundled("ctgan-extensive").map_err(err)?;
    let mut r = rng::stream(6, "reduction");
    let encoders = [("CDF", 11), ("PLE_CDF", 6), ("PTP", 2), ("MinMaxScaler", 1)];
    let mut logs = Vec::new();
    let mut rates = Vec::new();
    for (encoder, count) in encoders {
        for _ in 0..count {
            let id = logs.len();
            let mut config = space.sample_config(&mut r);
            config.insert("numerical_encoder".into(), ParamValue::Text(encoder.into()));
            rates.push(config["discriminator_learning_rate"].as_f64().unwrap());
            let mut trial = common::trial_for(0, config);
            trial.final_score = Some(0.5);
            logs.push(TrialRecord::new("d", "ctgan", id, trial));
        }
    }
    let reduced = reduce_space(&logs, &space, &ReduceOptions::default()).map_err(err)?;
    let kept = &reduced.param("numerical_encoder").ok_or("encoder parameter dropped")?.kind;
    let want = ParamKind::Choice(vec![ParamValue::Text("CDF".into()), ParamValue::Text("PLE_CDF".into())]);
    if *kept != want {
        return Err(format!("encoders reduced to {kept:?}"));
    }
    rates.sort_by(f64::total_cmp);
    let (lo, hi) = (rates[1], rates[17]);
    match reduced.param("discriminator_learning_rate").map(|p| &p.kind) {
        Some(ParamKind::QLogUniform { lo: l, hi: h, .. }) if (*l, *h) == (lo, hi) => {
            Ok(format!("encoders {{CDF, PLE_CDF}}, learning rate [{lo}, {hi}] = 2nd and 18th of 20"))
        }
        other => Err(format!("learning rate reduced to {other:?}, want [{lo}, {hi}]")),
    }
}

fn invariant_suite() -> Outcome {
    for (name, check) in common::INVARIANT_CHECKS {
        for seed in 0..100 {
            check(seed).map_err(|e| format!("{name}: {e}"))?;
        }
    }
    let names: Vec<&str> = common::INVARIANT_CHECKS.iter().map(|c| c.0).collect();
    Ok(format!("{} hold over 100 seeds", names.join(", ")))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tabbench"))
        .args(args)
        .env_remove("TABBENCH_OUT")
        .env_remove("TABBENCH_DEVICE")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn end_to_end(data: &Path, out: &Path) -> Result<(), String> {
    let out = out.to_str().unwrap();
    let runs = [("moons", "gmmtoy"), ("moons", "traincopy"), ("census", "smote")];
    for (dataset, model) in runs {
        let csv = data.join(format!("{dataset}.csv"));
        let base = ["--dataset", csv.to_str().unwrap(), "--model", model, "--out", out, "--seed", "8"];
        let tune = [&["tune"][..], &base, &["--trials", "6", "--parallelism", "1", "--frozen-clock"]].concat();
        run_cli(&tune)?;
        run_cli(&[&["evaluate"][..], &base, &["--frozen-clock"]].concat())?;
    }
    run_cli(&["report", "--out", out, "--svg"])
}

fn files_under(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for (name, table) in [("moons", toy::two_moons(600, 0.1, 8)), ("census", toy::mixed_census(600, 8))] {
        table.write_csv(dir.path().join(format!("{name}.csv"))).map_err(err)?;
        table.write_schema(dir.path().join(format!("{name}.schema.toml"))).map_err(err)?;
    }
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    end_to_end(dir.path(), &a)?;
    end_to_end(dir.path(), &b)?;
    let (fa, fb) = (files_under(&a), files_under(&b));
    if fa.len() < 10 {
        return Err(format!("only {} output files", fa.len()));
    }
    let names: Vec<&String> = fa.iter().map(|f| &f.0).collect();
    if names != fb.iter().map(|f| &f.0).collect::<Vec<_>>() {
        return Err("the two runs wrote different file sets".into());
    }
    for ((name, x), (_, y)) in fa.iter().zip(&fb) {
        if x != y {
            return Err(format!("{name} differs between runs"));
        }
    }
    Ok(format!("{} files byte-identical across two runs", fa.len()))
}
