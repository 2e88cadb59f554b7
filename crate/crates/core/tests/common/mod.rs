//! Shared test support: random instances, brute-force oracles and the
//! invariant checks run by both the property suite and the acceptance
//! harness. Every check takes a seed and reports the first violation.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use tabbench::config::{Config, ParamValue};
use tabbench::cost::{estimate_tuning_cost, CostRecord, DeviceModel};
use tabbench::dataset::{make_folds, Column, TaskKind, Table};
use tabbench::encoders::{fit_encoder, Decoded, EncoderKind, Values};
use tabbench::generators;
use tabbench::learner::{roc_auc, train_gbdt, GbdtConfig, Loss, Targets};
use tabbench::matrix::Matrix;
use tabbench::metrics::{c2st, dcr_rate, pair_score, shape_score, DcrOptions};
use tabbench::report::{percentile, quartile_summary, rank_models, tie_averaged_ranks, Direction, ScoreTable};
use tabbench::rng::{self, Rng};
use tabbench::toy;
use tabbench::tuner::{
    self, read_trial_log_from, reduce_space, ReduceOptions, SearchSpace, StopReason, Trial, TrialLogWriter,
    TrialRecord, TunerOptions,
};

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

// ---------------------------------------------------------------- instances

/// Mixed-type binclass table: a continuous and a tied numeric column, a
/// categorical and a target that alternates by row, so every contiguous
/// block of two or more rows holds both classes.
pub fn random_table(seed: u64, n: usize) -> Table {
    let mut r = rng::stream(seed, "test/random_table");
    let normal = Normal::new(0.0, 3.0).unwrap();
    let a: Vec<f64> = (0..n).map(|_| normal.sample(&mut r)).collect();
    let b: Vec<f64> = (0..n).map(|_| r.gen_range(0..5) as f64).collect();
    let palette = ["red", "green", "blue", "grey"];
    let c: Vec<&str> = (0..n).map(|_| palette[r.gen_range(0..palette.len())]).collect();
    let y: Vec<&str> = (0..n).map(|i| if i % 2 == 0 { "no" } else { "yes" }).collect();
    toy::table(
        "random",
        TaskKind::Binclass,
        Some("y"),
        vec![
            ("a", Column::Numeric(a)),
            ("b", Column::Numeric(b)),
            ("c", toy::categorical(&c)),
            ("y", toy::categorical(&y)),
        ],
    )
}

pub fn rows(t: &Table, range: std::ops::Range<usize>) -> Table {
    t.take(&range.collect::<Vec<_>>())
}

pub fn permuted(t: &Table, seed: u64) -> Table {
    let mut idx: Vec<usize> = (0..t.n_rows()).collect();
    idx.shuffle(&mut rng::stream(seed, "test/permute"));
    t.take(&idx)
}

/// Rows of `t` without repeats, first occurrence kept, in original order.
pub fn dedup(t: &Table) -> Table {
    let order = t.canonical_order();
    let mut keep = vec![true; t.n_rows()];
    for w in order.windows(2) {
        if t.cmp_rows(w[0], w[1]).is_eq() {
            keep[w[1].max(w[0])] = false;
        }
    }
    t.take(&(0..t.n_rows()).filter(|&i| keep[i]).collect::<Vec<_>>())
}

// ------------------------------------------------------------------ oracles

/// `max_v |i·m − j·n|` with `i`, `j` counted by scanning for every value.
pub fn ks_oracle(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len() as u128, b.len() as u128);
    let mut worst = 0u128;
    for v in a.iter().chain(b) {
        let i = a.iter().filter(|x| *x <= v).count() as u128;
        let j = b.iter().filter(|x| *x <= v).count() as u128;
        worst = worst.max((i * m).abs_diff(j * n));
    }
    1.0 - worst as f64 / (n * m) as f64
}

pub fn tv_oracle(a: &[u32], b: &[u32], cardinality: usize) -> f64 {
    let (n, m) = (a.len() as u128, b.len() as u128);
    let mut sum = 0u128;
    for c in 0..cardinality as u32 {
        let i = a.iter().filter(|x| **x == c).count() as u128;
        let j = b.iter().filter(|x| **x == c).count() as u128;
        sum += (i * m).abs_diff(j * n);
    }
    1.0 - sum as f64 / (2 * n * m) as f64
}

pub fn shape_oracle(real: &Table, synth: &Table) -> f64 {
    let mut total = 0.0;
    for (r, s) in real.columns().iter().zip(synth.columns()) {
        total += match (r, s) {
            (Column::Numeric(a), Column::Numeric(b)) => ks_oracle(a, b),
            (Column::Categorical { codes: a, vocab }, Column::Categorical { codes: b, .. }) => {
                tv_oracle(a, b, vocab.len())
            }
            _ => panic!("schema mismatch"),
        };
    }
    total / real.n_cols() as f64
}

/// Every pairwise distance, no pruning: mismatch count plus scaled L1.
pub fn dcr_oracle(synth: &Table, train: &Table, test: &Table) -> f64 {
    let k = synth.n_cols();
    let scale: Vec<Option<(f64, f64)>> = (0..k)
        .map(|j| match (train.column(j), test.column(j)) {
            (Column::Numeric(x), Column::Numeric(y)) => {
                let all: Vec<f64> = x.iter().chain(y).copied().collect();
                let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Some((lo, hi - lo))
            }
            _ => None,
        })
        .collect();
    let norm = |x: f64, j: usize| {
        let (lo, span) = scale[j].unwrap();
        if span > 0.0 {
            (x - lo) / span
        } else {
            0.0
        }
    };
    let dist = |t: &Table, i: usize, u: &Table, r: usize| {
        let mut mismatches = 0.0;
        for j in 0..k {
            if let (Some(a), Some(b)) = (t.column(j).as_codes(), u.column(j).as_codes()) {
                if a[i] != b[r] {
                    mismatches += 1.0;
                }
            }
        }
        let mut d = mismatches;
        for j in 0..k {
            if let (Some(a), Some(b)) = (t.column(j).as_numeric(), u.column(j).as_numeric()) {
                d += (norm(a[i], j) - norm(b[r], j)).abs();
            }
        }
        d
    };
    let closest = |i: usize, u: &Table| (0..u.n_rows()).map(|r| dist(synth, i, u, r)).fold(f64::INFINITY, f64::min);
    let mut twice = 0u64;
    for i in 0..synth.n_rows() {
        let (da, db) = (closest(i, train), closest(i, test));
        twice += if da < db {
            2
        } else if da == db {
            1
        } else {
            0
        };
    }
    twice as f64 / (2 * synth.n_rows()) as f64
}

/// Pairwise AUC: correctly ordered (negative, positive) pairs, ties half.
pub fn auc_oracle(labels: &[u32], scores: &[f64]) -> f64 {
    let (mut twice, mut pairs) = (0u128, 0u128);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1;
                twice += if scores[i] > scores[j] {
                    2
                } else if scores[i] == scores[j] {
                    1
                } else {
                    0
                };
            }
        }
    }
    twice as f64 / (2 * pairs) as f64
}

/// Linear-interpolation percentile after an insertion sort.
pub fn percentile_oracle(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            j -= 1;
        }
    }
    let pos = (v.len() - 1) as f64 * p / 100.0;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        v[lo]
    } else {
        v[lo] + frac * (v[lo + 1] - v[lo])
    }
}

/// Boosted regression trees with an exhaustive threshold search over each
/// node's own distinct values; returns the training predictions.
pub fn exact_split_boosting(x: &[Vec<f64>], y: &[f64], cfg: &GbdtConfig) -> Vec<f64> {
    let n = y.len();
    let base = y.iter().sum::<f64>() / n as f64;
    let mut raw = vec![base; n];
    for _ in 0..cfg.n_rounds {
        let grad: Vec<f64> = (0..n).map(|i| raw[i] - y[i]).collect();
        let mut update = vec![0.0; n];
        grow_exact(x, &grad, (0..n).collect(), 0, cfg, &mut update);
        for i in 0..n {
            raw[i] += update[i];
        }
    }
    raw
}

fn grow_exact(x: &[Vec<f64>], grad: &[f64], rows: Vec<usize>, depth: usize, cfg: &GbdtConfig, out: &mut [f64]) {
    let lambda = cfg.reg_lambda;
    let g: f64 = rows.iter().map(|&i| grad[i]).sum();
    let h = rows.len() as f64;
    let leaf = -cfg.learning_rate * g / (h + lambda);
    let msl = cfg.min_samples_leaf.max(1);
    let mut best: Option<(f64, usize, f64)> = None;
    if depth < cfg.max_depth && rows.len() >= 2 * msl {
        let parent = g * g / (h + lambda);
        for f in 0..x[0].len() {
            let mut vals: Vec<f64> = rows.iter().map(|&i| x[i][f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for &v in &vals[..vals.len().saturating_sub(1)] {
                let left: Vec<usize> = rows.iter().copied().filter(|&i| x[i][f] <= v).collect();
                let nl = left.len();
                if nl < msl || rows.len() - nl < msl {
                    continue;
                }
                let gl: f64 = left.iter().map(|&i| grad[i]).sum();
                let (hl, gr, hr) = (nl as f64, g - gl, h - nl as f64);
                let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
                if gain > 0.0 && best.map_or(true, |b| gain > b.0) {
                    best = Some((gain, f, v));
                }
            }
        }
    }
    match best {
        None => rows.iter().for_each(|&i| out[i] = leaf),
        Some((_, f, v)) => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= v);
            grow_exact(x, grad, l, depth + 1, cfg, out);
            grow_exact(x, grad, r, depth + 1, cfg, out);
        }
    }
}

/// Instance size for oracle checks: at most 100 rows in total.
fn oracle_sizes(r: &mut Rng) -> (usize, usize, usize) {
    (r.gen_range(2..=34), r.gen_range(2..=33), r.gen_range(2..=33))
}

pub fn oracle_shape(seed: u64) -> Check {
    let mut r = rng::stream(seed, "test/oracle_shape");
    let (n, m, _) = oracle_sizes(&mut r);
    let t = random_table(seed, n + m);
    let (real, synth) = (rows(&t, 0..n), rows(&t, n..n + m));
    let got = shape_score(&real, &synth).map_err(|e| e.to_string())?;
    let want = shape_oracle(&real, &synth);
    ensure!(got == want, "seed {seed}: shape {got} vs oracle {want}");
    Ok(())
}

pub fn oracle_dcr(seed: u64) -> Check {
    let mut r = rng::stream(seed, "test/oracle_dcr");
    let (s, a, b) = oracle_sizes(&mut r);
    let t = random_table(seed, s + a + b);
    let synth = rows(&t, 0..s);
    let train = rows(&t, s..s + a);
    let test = rows(&t, s + a..s + a + b);
    let got = dcr_rate(&synth, &train, &test, DcrOptions::default()).map_err(|e| e.to_string())?;
    let want = dcr_oracle(&synth, &train, &test);
    ensure!(got == want, "seed {seed}: dcr {got} vs oracle {want}");
    // copies of train rows are always at distance zero from train
    let copies = rows(&train, 0..train.n_rows().min(10));
    let got = dcr_rate(&copies, &train, &test, DcrOptions::default()).map_err(|e| e.to_string())?;
    ensure!(got == dcr_oracle(&copies, &train, &test), "seed {seed}: dcr on copies");
    Ok(())
}

pub fn oracle_auc(seed: u64) -> Check {
    let mut r = rng::stream(seed, "test/oracle_auc");
    let n = r.gen_range(2..=100);
    let mut labels: Vec<u32> = (0..n).map(|_| r.gen_range(0..2)).collect();
    labels[0] = 0;
    labels[1] = 1;
    // few distinct scores so that ties are common
    let scores: Vec<f64> = (0..n).map(|_| r.gen_range(0..12) as f64 / 4.0).collect();
    let got = roc_auc(&labels, &scores).map_err(|e| e.to_string())?;
    let want = auc_oracle(&labels, &scores);
    ensure!(got == want, "seed {seed}: auc {got} vs oracle {want}");
    Ok(())
}

pub fn oracle_quartiles(seed: u64) -> Check {
    let mut r = rng::stream(seed, "test/oracle_quartiles");
    let mut scores = ScoreTable::new();
    let mut by_model: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for m in 0..r.gen_range(1..=3) {
        let model = format!("m{m}");
        for i in 0..r.gen_range(1..=100 / 3) {
            let v = (r.gen::<f64>() * 20.0).round() / 20.0;
            scores.push("d", &model, i % 3, i / 3, "c2st", v);
            by_model.entry(model.clone()).or_default().push(v);
        }
    }
    for q in quartile_summary(&scores, "c2st") {
        let v = &by_model[&q.model];
        for (got, p) in [(q.p25, 25.0), (q.p50, 50.0), (q.p75, 75.0)] {
            let want = percentile_oracle(v, p);
            ensure!(got == want, "seed {seed}: {} P{p} {got} vs oracle {want}", q.model);
        }
    }
    Ok(())
}

pub const ORACLE_CHECKS: [(&str, fn(u64) -> Check); 4] = [
    ("shape", oracle_shape),
    ("dcr_rate", oracle_dcr),
    ("roc_auc", oracle_auc),
    ("quartile_summary", oracle_quartiles),
];

// --------------------------------------------------------------- invariants

pub fn metrics_invariants(seed: u64) -> Check {
    let mut r = rng::stream(seed, "test/metrics_invariants");
    let n = r.gen_range(30..=60);
    let t = random_table(seed, 3 * n);
    let (real, synth, other) = (rows(&t, 0..n), rows(&t, n..2 * n), rows(&t, 2 * n..3 * n));
    let err = |e: tabbench::Error| e.to_string();
    let disc = GbdtConfig { n_rounds: 20, ..GbdtConfig::discriminator() };

    let c = c2st(&real, &synth, &disc, seed).map_err(err)?;
    let s = shape_score(&real, &synth).map_err(err)?;
    let p = pair_score(&real, &synth).map_err(err)?;
    let d = dcr_rate(&synth, &real, &other, DcrOptions::default()).map_err(err)?;
    for (name, v) in [("c2st", c), ("shape", s), ("pair", p), ("dcr_rate", d)] {
        ensure!((0.0..=1.0).contains(&v), "seed {seed}: {name} = {v} outside [0, 1]");
    }

    let shuffled = permuted(&real, seed);
    ensure!(shape_score(&real, &shuffled).map_err(err)? == 1.0, "seed {seed}: shape of a permutation");
    ensure!(pair_score(&real, &shuffled).map_err(err)? == 1.0, "seed {seed}: pair of a permutation");

    let back = dcr_rate(&synth, &other, &real, DcrOptions::default()).map_err(err)?;
    ensure!(d + back == 1.0, "seed {seed}: dcr role symmetry {d} + {back}");

    let c_perm = c2st(&permuted(&real, seed + 1), &permuted(&synth, seed + 2), &disc, seed).map_err(err)?;
    ensure!(c == c_perm, "seed {seed}: c2st changed under row order, {c} vs {c_perm}");
    Ok(())
}

fn random_numeric_column(r: &mut Rng, n: usize) -> Vec<f64> {
    let normal = Normal::new(1.0, 5.0).unwrap();
    (0..n)
        .map(|_| {
            let x: f64 = normal.sample(r);
            // a third of the values are rounded so that ties occur
            if r.gen_bool(1.0 / 3.0) {
                x.round()
            } else {
                x
            }
        })
        .collect()
}

pub fn encoder_invariants(seed: u64) -> Check {
    let mut r = rng::stream(seed, "test/encoder_invariants");
    let n = r.gen_range(20..=100);
    let xs = random_numeric_column(&mut r, n);
    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    let kinds = ["minmax", "quantile", "cdf", "ple", "ple_cdf", "ptp"];
    for name in kinds {
        let kind = EncoderKind::from_name(name).map_err(|e| e.to_string())?;
        let enc = fit_encoder(kind, Values::Numeric(&xs)).map_err(|e| e.to_string())?;
        let m = enc.encode(Values::Numeric(&xs), &mut rng::stream(seed, "enc")).map_err(|e| e.to_string())?;

        // determinism given the seed; seed independence for fixed kinds
        let again = enc.encode(Values::Numeric(&xs), &mut rng::stream(seed, "enc")).unwrap();
        ensure!(m == again, "seed {seed}: {name} not deterministic");
        let other = enc.encode(Values::Numeric(&xs), &mut rng::stream(seed + 1, "enc")).unwrap();
        ensure!(kind.is_randomized() || m == other, "seed {seed}: {name} depends on the rng");

        if name != "minmax" && name != "ptp" {
            ensure!(m.as_slice().iter().all(|v| (0.0..=1.0).contains(v)), "seed {seed}: {name} outside [0, 1]");
        }
        if name == "ptp" {
            for row in m.rows() {
                let sum: f64 = row.iter().sum();
                ensure!(row.iter().all(|w| *w >= 0.0), "seed {seed}: negative ptp weight");
                ensure!((sum - 1.0).abs() <= 1e-12, "seed {seed}: ptp weights sum to {sum}");
            }
        }
        if name == "ple" {
            for row in m.rows() {
                let active = row.iter().position(|v| *v < 1.0).unwrap_or(row.len());
                ensure!(
                    row.iter().skip(active + 1).all(|v| *v == 0.0),
                    "seed {seed}: ple row {row:?} is not ones, fraction, zeros"
                );
            }
        }
        if name == "quantile" || name == "cdf" {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
            for w in order.windows(2) {
                let (u0, u1) = (m.get(w[0], 0), m.get(w[1], 0));
                // tied inputs may be jittered within their shared interval
                ensure!(xs[w[0]] == xs[w[1]] || u0 <= u1, "seed {seed}: {name} decreases between {} and {}", xs[w[0]], xs[w[1]]);
            }
        }

        let Decoded::Numeric(back) = enc.decode(&m).map_err(|e| e.to_string())? else {
            return Err(format!("seed {seed}: {name} decoded to categories"));
        };
        for (i, (&x, &b)) in xs.iter().zip(&back).enumerate() {
            match name {
                "cdf" => {
                    // the decoded value is a training value whose CDF interval holds u
                    let below = sorted.partition_point(|v| *v < b) as f64 / n as f64;
                    let upto = sorted.partition_point(|v| *v <= b) as f64 / n as f64;
                    let u = m.get(i, 0);
                    ensure!(upto > below, "seed {seed}: cdf decoded {b}, not a training value");
                    ensure!(below <= u && u <= upto, "seed {seed}: cdf u {u} outside [{below}, {upto}] of {b}");
                }
                "ple_cdf" => {
                    let (lo, hi) = (sorted[0], sorted[n - 1]);
                    ensure!(lo <= b && b <= hi, "seed {seed}: ple_cdf decoded {b} outside [{lo}, {hi}]");
                }
                _ => ensure!((x - b).abs() <= 1e-9, "seed {seed}: {name} round trip {x} -> {b}"),
            }
        }
    }
    Ok(())
}

pub fn learner_invariants(seed: u64) -> Check {
    let mut r = rng::stream(seed, "test/learner_invariants");
    let err = |e: tabbench::Error| e.to_string();

    // AUC tie symmetry
    let n = r.gen_range(4..=80);
    let mut labels: Vec<u32> = (0..n).map(|_| r.gen_range(0..2)).collect();
    labels[0] = 0;
    labels[1] = 1;
    let scores: Vec<f64> = (0..n).map(|_| r.gen_range(0..8) as f64 * 0.1).collect();
    let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
    let (a, b) = (roc_auc(&labels, &scores).map_err(err)?, roc_auc(&labels, &neg).map_err(err)?);
    ensure!(a + b == 1.0, "seed {seed}: auc {a} + {b} != 1");

    // data for the boosting checks
    let n = r.gen_range(24..=64);
    let d = r.gen_range(1..=3);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| (r.gen::<f64>() * 40.0).round() / 4.0).collect()).collect();
    let y: Vec<f64> = x.iter().map(|row| row.iter().sum::<f64>() + r.gen::<f64>()).collect();
    let cls: Vec<u32> = y.iter().map(|v| u32::from(*v > 5.0 * d as f64)).collect();
    let xm = Matrix::from_rows(&x);

    // training loss never goes up
    let cfg = GbdtConfig { n_rounds: 15, min_samples_leaf: 2, max_depth: 3, ..GbdtConfig::discriminator() };
    if cls.iter().any(|&c| c == 0) && cls.iter().any(|&c| c == 1) {
        let m = train_gbdt(&xm, Targets::Classes { labels: &cls, n_classes: 2 }, &cfg).map_err(err)?;
        let l = m.train_loss();
        ensure!(l.windows(2).all(|w| w[1] <= w[0]), "seed {seed}: logistic loss rose: {l:?}");
    }
    let reg = GbdtConfig { loss: Loss::Squared, ..cfg };
    let m = train_gbdt(&xm, Targets::Values(&y), &reg).map_err(err)?;
    let l = m.train_loss();
    ensure!(l.windows(2).all(|w| w[1] <= w[0]), "seed {seed}: squared loss rose: {l:?}");

    // a duplicated column changes nothing
    let wide: Vec<Vec<f64>> = x.iter().map(|row| row.iter().chain(&row[..1]).copied().collect()).collect();
    let wm = Matrix::from_rows(&wide);
    let m2 = train_gbdt(&wm, Targets::Values(&y), &reg).map_err(err)?;
    ensure!(
        m.predict_values(&xm).map_err(err)? == m2.predict_values(&wm).map_err(err)?,
        "seed {seed}: duplicated feature changed predictions"
    );

    // histogram training equals exhaustive threshold search
    let exact = GbdtConfig { n_rounds: 4, learning_rate: 0.5, max_depth: 3, min_samples_leaf: r.gen_range(1..=3), ..reg };
    let got = train_gbdt(&xm, Targets::Values(&y), &exact).map_err(err)?.predict_values(&xm).map_err(err)?;
    let want = exact_split_boosting(&x, &y, &exact);
    for (i, (g, w)) in got.iter().zip(&want).enumerate() {
        ensure!((g - w).abs() <= 1e-9, "seed {seed}: row {i} histogram {g} vs exhaustive {w}");
    }
    Ok(())
}

/// The gmmtoy space shrunk to a size that runs in well under a second.
pub fn tiny_gmm_space() -> SearchSpace {
    let mut s = tuner::bundled("gmmtoy").unwrap();
    s.max_trials = 6;
    s.max_steps = 8;
    s.grace_steps = 3;
    s.per_trial_time_budget_s = 0.0;
    for p in &mut s.params {
        if p.name == "n_components" {
            p.kind = tuner::ParamKind::GridInt { lo: 1, hi: 4 };
        }
    }
    s
}

pub fn tuner_invariants(seed: u64) -> Check {
    let mut r = rng::stream(seed, "test/tuner_invariants");

    // sampled configs satisfy their specs; reduction yields a subspace
    for (name, _) in tuner::BUNDLED {
        let space = tuner::bundled(name).map_err(|e| e.to_string())?;
        let mut logs = Vec::new();
        for (i, c) in space.trial_configs(&mut r).into_iter().take(40).enumerate() {
            space.check_config(&c).map_err(|e| format!("seed {seed}: {name}: {e}"))?;
            let mut t = trial_for(i, c);
            t.final_score = Some(r.gen());
            logs.push(TrialRecord::new("d", name, i % 7, t));
        }
        let reduced = reduce_space(&logs, &space, &ReduceOptions::default()).map_err(|e| e.to_string())?;
        for _ in 0..200 {
            let c = reduced.sample_config(&mut r);
            space.check_config(&c).map_err(|e| format!("seed {seed}: reduced {name} left the space: {e}"))?;
        }
    }

    // a small real run: pruning respects grace, bookkeeping is consistent
    let table = toy::two_moons(240, 0.1, seed);
    let folds = make_folds(&table, seed).map_err(|e| e.to_string())?;
    let synth = generators::create("gmmtoy").unwrap();
    let space = tiny_gmm_space();
    let opts = TunerOptions {
        seed,
        discriminator: GbdtConfig { n_rounds: 10, ..GbdtConfig::discriminator() },
        ..TunerOptions::default()
    };
    let pruned = tuner::tune(synth.as_ref(), &space, &table, &folds[..1], &opts, None).map_err(|e| e.to_string())?;
    for rec in &pruned.records {
        let t = &rec.trial;
        space.check_config(&t.config).map_err(|e| e.to_string())?;
        ensure!(t.step_scores.windows(2).all(|w| w[0].0 < w[1].0), "seed {seed}: step indices not increasing");
        ensure!(t.final_score.is_some() == t.stop_reason.is_finished(), "seed {seed}: final score vs stop reason");
        if t.stop_reason == StopReason::Pruned {
            ensure!(t.last_step().unwrap() >= space.grace_steps, "seed {seed}: pruned before grace");
        }
    }

    let free = TunerOptions { pruning: false, ..opts };
    let full = tuner::tune(synth.as_ref(), &space, &table, &folds[..1], &free, None).map_err(|e| e.to_string())?;
    let best = full.best[0].1.final_score.unwrap();
    for rec in full.records.iter().filter(|r| r.trial.final_score.is_some()) {
        ensure!(best <= rec.trial.final_score.unwrap(), "seed {seed}: best {best} beaten by trial {}", rec.trial.trial_id);
    }
    let steps = |t: &tuner::TuneResult| t.records.iter().map(|r| r.trial.step_scores.len()).sum::<usize>();
    ensure!(steps(&full) >= steps(&pruned), "seed {seed}: pruning added work");

    // the log round-trips
    let mut w = TrialLogWriter::new(Vec::new());
    for rec in &pruned.records {
        w.write(rec).map_err(|e| e.to_string())?;
    }
    let back = read_trial_log_from(&w.into_inner()[..]).map_err(|e| e.to_string())?;
    ensure!(back == pruned.records, "seed {seed}: trial log did not round-trip");
    Ok(())
}

pub fn trial_for(id: usize, config: Config) -> Trial {
    Trial {
        trial_id: id,
        config,
        step_scores: vec![(1, 0.5)],
        final_score: None,
        stop_reason: StopReason::Completed,
        error: None,
        cost: CostRecord::default(),
    }
}

pub fn random_scores(r: &mut Rng, k: usize, datasets: usize, samples: usize) -> ScoreTable {
    let mut t = ScoreTable::new();
    for d in 0..datasets {
        for f in 0..3 {
            for m in 0..k {
                for s in 0..samples {
                    // coarse values so that ties happen
                    let v = (r.gen::<f64>() * 10.0).round() / 10.0 - 0.3;
                    t.push(&format!("d{d}"), &format!("model{m}"), f, s, "c2st", v);
                }
            }
        }
    }
    t
}

pub fn report_invariants(seed: u64) -> Check {
    let mut r = rng::stream(seed, "test/report_invariants");
    let k = r.gen_range(2..=8);

    // tie-averaged ranks of a block always sum to k(k+1)/2
    for _ in 0..20 {
        let keys: Vec<f64> = (0..k).map(|_| r.gen_range(0..4) as f64).collect();
        let sum: f64 = tie_averaged_ranks(&keys).iter().sum();
        ensure!(sum == (k * (k + 1)) as f64 / 2.0, "seed {seed}: ranks of {keys:?} sum to {sum}");
    }

    // Friedman is rank based: a strictly monotone transform changes nothing
    let datasets = r.gen_range(1..=4);
    let scores = random_scores(&mut r, k, datasets, 1);
    let mut cubed = scores.clone();
    cubed.rows.iter_mut().for_each(|row| row.value = row.value.powi(3));
    for dir in [Direction::LowerBetter, Direction::HigherBetter] {
        let a = rank_models(&scores, "c2st", dir).map_err(|e| e.to_string())?;
        let b = rank_models(&cubed, "c2st", dir).map_err(|e| e.to_string())?;
        ensure!(a == b, "seed {seed}: x^3 changed the ranking");
        let total: f64 = a.average_ranks.iter().map(|x| x.1).sum();
        ensure!((total - (k * (k + 1)) as f64 / 2.0).abs() < 1e-9, "seed {seed}: average ranks sum to {total}");
    }

    // percentiles are monotone in p and agree with the sort-based oracle
    let n = r.gen_range(1..=1000);
    let values: Vec<f64> = (0..n).map(|_| (r.gen::<f64>() * 50.0).round()).collect();
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let mut ps: Vec<f64> = (0..30).map(|_| r.gen::<f64>() * 100.0).chain([0.0, 25.0, 50.0, 75.0, 100.0]).collect();
    ps.sort_by(f64::total_cmp);
    let mut last = f64::NEG_INFINITY;
    for p in ps {
        let v = percentile(&sorted, p);
        ensure!(v >= last, "seed {seed}: percentile decreased at p = {p}");
        ensure!(v == percentile_oracle(&values, p), "seed {seed}: percentile at {p} disagrees with the oracle");
        last = v;
    }
    Ok(())
}

pub const INVARIANT_CHECKS: [(&str, fn(u64) -> Check); 5] = [
    ("metrics", metrics_invariants),
    ("encoders", encoder_invariants),
    ("learner", learner_invariants),
    ("tuner", tuner_invariants),
    ("report", report_invariants),
];

// --------------------------------------------------------------------- cost

pub fn random_cost_set(r: &mut Rng) -> (Vec<CostRecord>, DeviceModel) {
    let trials = (0..r.gen_range(1..=30))
        .map(|_| CostRecord {
            init_seconds: r.gen::<f64>() * 100.0,
            seconds_per_step: r.gen::<f64>() * 10.0,
            num_steps: r.gen_range(0..5000),
            sample_seconds: r.gen::<f64>(),
        })
        .collect();
    let device = DeviceModel {
        power_watts: r.gen_range(50.0..700.0),
        carbon_g_per_kwh: r.gen_range(10.0..900.0),
        trials_per_device: r.gen_range(1..=8),
    };
    (trials, device)
}

/// Device time, energy and emissions written out term by term.
pub fn cost_by_hand(trials: &[CostRecord], device: &DeviceModel) -> (f64, f64, f64) {
    let mut sum = 0.0;
    for t in trials {
        sum += t.init_seconds + t.seconds_per_step * t.num_steps as f64;
    }
    let device_seconds = sum / device.trials_per_device as f64;
    let kwh = device_seconds * device.power_watts / 3_600_000.0;
    let co2 = kwh * device.carbon_g_per_kwh / 1000.0;
    (device_seconds, kwh, co2)
}

pub fn cost_matches_hand(seed: u64) -> Check {
    let (trials, device) = random_cost_set(&mut rng::stream(seed, "test/cost"));
    let got = estimate_tuning_cost(&trials, &device).map_err(|e| e.to_string())?;
    let (ds, kwh, co2) = cost_by_hand(&trials, &device);
    ensure!(
        got.device_seconds == ds && got.kwh == kwh && got.co2_kg == co2,
        "seed {seed}: {got:?} vs ({ds}, {kwh}, {co2})"
    );
    Ok(())
}

pub fn param(name: &str, v: impl Into<ParamValue>) -> (String, ParamValue) {
    (name.to_string(), v.into())
}
