//! Realism, utility and privacy metrics comparing a synthetic table with
//! real data.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, TaskKind, Table};
use crate::encoders::quantile_sorted;
use crate::error::{Error, Result};
use crate::learner::scoring::{f1_score, r2_normalized, roc_auc};
use crate::learner::{train_gbdt, GbdtConfig, Loss, Targets};
use crate::matrix::Matrix;
use crate::rng;

/// Raw numerics side by side with one-hot blocks for categoricals, over
/// `columns` of `table`.
pub fn design_matrix(table: &Table, columns: &[usize]) -> Matrix {
    let width: usize = columns
        .iter()
        .map(|&j| match table.column(j) {
            Column::Numeric(_) => 1,
            Column::Categorical { vocab, .. } => vocab.len(),
        })
        .sum();
    let mut m = Matrix::zeros(table.n_rows(), width);
    let mut off = 0;
    for &j in columns {
        match table.column(j) {
            Column::Numeric(v) => {
                for (i, x) in v.iter().enumerate() {
                    m.set(i, off, *x);
                }
                off += 1;
            }
            Column::Categorical { codes, vocab } => {
                for (i, &c) in codes.iter().enumerate() {
                    m.set(i, off + c as usize, 1.0);
                }
                off += vocab.len();
            }
        }
    }
    m
}

fn canonical(t: &Table) -> Table {
    t.take(&t.canonical_order())
}

/// Mean validation ROC-AUC of a discriminator separating real rows (label
/// 0) from synthetic rows (label 1) over a stratified 3-fold split. Both
/// tables are put in content order first, so the result does not depend on
/// how their rows are ordered. A synthetic table larger than the real one
/// is subsampled to its size.
pub fn c2st(real: &Table, synthetic: &Table, cfg: &GbdtConfig, seed: u64) -> Result<f64> {
    real.check_same_schema(synthetic)?;
    let real = canonical(real);
    let mut fake = canonical(synthetic);
    if fake.n_rows() > real.n_rows() {
        let mut idx: Vec<usize> = (0..fake.n_rows()).collect();
        idx.shuffle(&mut rng::stream(seed, "c2st/subsample"));
        idx.truncate(real.n_rows());
        idx.sort_unstable();
        fake = fake.take(&idx);
    }
    let pooled = Table::concat(&[&real, &fake])?;
    let n = pooled.n_rows();
    if n < 6 {
        return Err(Error::TooFewRows { needed: 6, got: n });
    }
    let labels: Vec<u32> = (0..n).map(|i| u32::from(i >= real.n_rows())).collect();
    let x = design_matrix(&pooled, &(0..pooled.n_cols()).collect::<Vec<_>>());

    let fold_of = content_folds(&pooled, &labels, seed);
    let cfg = GbdtConfig { loss: Loss::Logistic, seed, ..*cfg };
    let aucs = (0..3)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
            let val: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
            let y: Vec<u32> = train.iter().map(|&i| labels[i]).collect();
            let model = train_gbdt(
                &x.select_rows(&train),
                Targets::Classes { labels: &y, n_classes: 2 },
                &cfg,
            )?;
            let scores = model.predict_positive(&x.select_rows(&val))?;
            let yv: Vec<u32> = val.iter().map(|&i| labels[i]).collect();
            roc_auc(&yv, &scores)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(aucs.iter().sum::<f64>() / 3.0)
}

/// Stratified 3-fold assignment in which identical rows of a class share a
/// fold. Groups of equal rows are visited in seeded order and each goes to
/// the fold holding the fewest rows of its class so far. `pooled` must be
/// in content order within each class.
fn content_folds(pooled: &Table, labels: &[u32], seed: u64) -> Vec<usize> {
    let n = pooled.n_rows();
    let mut fold_of = vec![0usize; n];
    let mut r = rng::stream(seed, "c2st/folds");
    for class in [0, 1] {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        let mut groups: Vec<&[usize]> = members
            .chunk_by(|&a, &b| pooled.cmp_rows(a, b).is_eq())
            .collect();
        groups.shuffle(&mut r);
        let mut sizes = [0usize; 3];
        for g in groups {
            let f = (0..3).min_by_key(|&f| sizes[f]).expect("three folds");
            sizes[f] += g.len();
            for &i in g {
                fold_of[i] = f;
            }
        }
    }
    fold_of
}

/// Trains the predictor on `synthetic` and scores it on `real_test`: F1 for
/// classification, clamped R² for regression.
pub fn ml_efficacy(synthetic: &Table, real_test: &Table, cfg: &GbdtConfig) -> Result<f64> {
    synthetic.check_same_schema(real_test)?;
    let task = real_test.task();
    let target = real_test
        .target_index()
        .ok_or_else(|| Error::Metric("ml_efficacy needs a target column".into()))?;
    let features = real_test.feature_indices();
    if features.is_empty() {
        return Err(Error::Metric("ml_efficacy needs at least one feature".into()));
    }
    let xs = design_matrix(synthetic, &features);
    let xt = design_matrix(real_test, &features);
    let loss = match task {
        TaskKind::Binclass => Loss::Logistic,
        TaskKind::Multiclass => Loss::MulticlassSoftmax,
        TaskKind::Regression => Loss::Squared,
    };
    let cfg = GbdtConfig { loss, ..*cfg };
    match (synthetic.column(target), real_test.column(target)) {
        (Column::Categorical { codes, vocab }, Column::Categorical { codes: truth, .. }) => {
            let distinct = codes.iter().collect::<std::collections::BTreeSet<_>>().len();
            if distinct < 2 {
                return Err(Error::Metric("synthetic target has a single class".into()));
            }
            let model = train_gbdt(
                &xs,
                Targets::Classes { labels: codes, n_classes: vocab.len() },
                &cfg,
            )?;
            f1_score(truth, &model.predict_class(&xt)?, task)
        }
        (Column::Numeric(y), Column::Numeric(truth)) => {
            let model = train_gbdt(&xs, Targets::Values(y), &cfg)?;
            r2_normalized(truth, &model.predict_values(&xt)?)
        }
        _ => Err(Error::Metric("target kinds differ".into())),
    }
}

/// DCR options. By default the whole train split is the train reference;
/// `balance_reference` subsamples it to the size of the test split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DcrOptions {
    pub balance_reference: bool,
    pub seed: u64,
}

/// Share of synthetic rows whose closest record lies in `train` rather than
/// in `test`, ties counting one half. Distances add absolute differences of
/// min-max scaled numerics (scaling fit on both references together) and
/// 0/1 categorical mismatches.
pub fn dcr_rate(synthetic: &Table, train: &Table, test: &Table, opts: DcrOptions) -> Result<f64> {
    synthetic.check_same_schema(train)?;
    synthetic.check_same_schema(test)?;
    let train = if opts.balance_reference && train.n_rows() > test.n_rows() {
        let mut idx: Vec<usize> = (0..train.n_rows()).collect();
        idx.shuffle(&mut rng::stream(opts.seed, "dcr/reference"));
        idx.truncate(test.n_rows());
        idx.sort_unstable();
        train.take(&idx)
    } else {
        train.clone()
    };
    let space = DcrSpace::new(&train, test);
    let s = space.embed(synthetic);
    let a = space.embed(&train);
    let b = space.embed(test);
    let twice: u64 = (0..synthetic.n_rows())
        .into_par_iter()
        .map(|i| {
            let da = nearest(&s, i, &a, f64::INFINITY);
            // a test row only matters if it is at least as close
            let db = nearest(&s, i, &b, da);
            match da.total_cmp(&db) {
                std::cmp::Ordering::Less => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Greater => 0,
            }
        })
        .sum();
    Ok(twice as f64 / (2 * synthetic.n_rows()) as f64)
}

struct DcrSpace {
    /// `(lo, span)` per column; `None` for categoricals.
    scales: Vec<Option<(f64, f64)>>,
}

/// Rows as scaled numerics and category codes.
struct Embedded {
    num: Vec<Vec<f64>>,
    cat: Vec<Vec<u32>>,
}

impl DcrSpace {
    fn new(a: &Table, b: &Table) -> DcrSpace {
        let scales = a
            .columns()
            .iter()
            .zip(b.columns())
            .map(|(ca, cb)| match (ca, cb) {
                (Column::Numeric(x), Column::Numeric(y)) => {
                    let lo = x.iter().chain(y).copied().fold(f64::INFINITY, f64::min);
                    let hi = x.iter().chain(y).copied().fold(f64::NEG_INFINITY, f64::max);
                    Some((lo, hi - lo))
                }
                _ => None,
            })
            .collect();
        DcrSpace { scales }
    }

    fn embed(&self, t: &Table) -> Embedded {
        let n = t.n_rows();
        let mut num = vec![Vec::new(); n];
        let mut cat = vec![Vec::new(); n];
        for (col, sc) in t.columns().iter().zip(&self.scales) {
            match (col, sc) {
                (Column::Numeric(v), Some((lo, span))) => {
                    for (row, x) in num.iter_mut().zip(v) {
                        row.push(if *span > 0.0 { (x - lo) / span } else { 0.0 });
                    }
                }
                (Column::Categorical { codes, .. }, _) => {
                    for (row, c) in cat.iter_mut().zip(codes) {
                        row.push(*c);
                    }
                }
                _ => unreachable!("schemas were checked"),
            }
        }
        Embedded { num, cat }
    }
}

/// Smallest distance from row `i` of `q` to any row of `refs`, or a value
/// above `bound` when none is at most `bound`. Partial sums only grow, so a
/// row is abandoned once it exceeds the best distance so far.
fn nearest(q: &Embedded, i: usize, refs: &Embedded, bound: f64) -> f64 {
    let (qn, qc) = (&q.num[i], &q.cat[i]);
    let mut best = f64::INFINITY;
    let limit = |best: f64| best.min(bound);
    'rows: for r in 0..refs.num.len() {
        let mut d = 0.0;
        let lim = limit(best);
        for (a, b) in qc.iter().zip(&refs.cat[r]) {
            if a != b {
                d += 1.0;
                if d > lim {
                    continue 'rows;
                }
            }
        }
        for (a, b) in qn.iter().zip(&refs.num[r]) {
            d += (a - b).abs();
            if d > lim {
                continue 'rows;
            }
        }
        if d < best {
            best = d;
            if best == 0.0 {
                break;
            }
        }
    }
    best
}

/// `1 − KS` between two samples, computed on integer counts.
pub fn ks_complement(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as u128, b.len() as u128);
    let (mut i, mut j) = (0usize, 0usize);
    let mut worst: u128 = 0;
    while i < a.len() || j < b.len() {
        let v = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => {
                if x.total_cmp(y).is_le() {
                    *x
                } else {
                    *y
                }
            }
            (Some(x), None) => *x,
            (None, Some(y)) => *y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i].total_cmp(&v).is_le() {
            i += 1;
        }
        while j < b.len() && b[j].total_cmp(&v).is_le() {
            j += 1;
        }
        worst = worst.max((i as u128 * m).abs_diff(j as u128 * n));
    }
    1.0 - worst as f64 / (n * m) as f64
}

/// `1 − TV` between the category frequencies of two code lists.
pub fn tv_complement(a: &[u32], b: &[u32], cardinality: usize) -> f64 {
    let mut ca = vec![0u128; cardinality];
    let mut cb = vec![0u128; cardinality];
    a.iter().for_each(|&c| ca[c as usize] += 1);
    b.iter().for_each(|&c| cb[c as usize] += 1);
    let (n, m) = (a.len() as u128, b.len() as u128);
    let sum: u128 = ca.iter().zip(&cb).map(|(x, y)| (x * m).abs_diff(y * n)).sum();
    1.0 - sum as f64 / (2 * n * m) as f64
}

/// Per-column marginal similarity of `synthetic` to `real`, in column order.
pub fn shape_columns(real: &Table, synthetic: &Table) -> Result<Vec<f64>> {
    real.check_same_schema(synthetic)?;
    Ok(real
        .columns()
        .iter()
        .zip(synthetic.columns())
        .map(|(r, s)| match (r, s) {
            (Column::Numeric(a), Column::Numeric(b)) => ks_complement(a, b),
            (Column::Categorical { codes: a, vocab }, Column::Categorical { codes: b, .. }) => {
                tv_complement(a, b, vocab.len())
            }
            _ => unreachable!("schemas were checked"),
        })
        .collect())
}

/// Mean of [`shape_columns`].
pub fn shape_score(real: &Table, synthetic: &Table) -> Result<f64> {
    let cols = shape_columns(real, synthetic)?;
    Ok(cols.iter().sum::<f64>() / cols.len() as f64)
}

/// Pearson correlation, or `None` for a constant input. Pairs are summed in
/// sorted order so the value does not depend on row order.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in &pairs {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Cell index of every row: categories as they are, numerics by the
/// deciles of the real column.
fn discretize(real: &Column, col: &Column) -> (Vec<usize>, usize) {
    match (real, col) {
        (Column::Numeric(r), Column::Numeric(v)) => {
            let mut sorted = r.clone();
            sorted.sort_by(f64::total_cmp);
            let edges: Vec<f64> = (1..10).map(|k| quantile_sorted(&sorted, k as f64 / 10.0)).collect();
            let cells = v.iter().map(|x| edges.partition_point(|e| e <= x)).collect();
            (cells, 10)
        }
        (_, Column::Categorical { codes, vocab }) => {
            (codes.iter().map(|&c| c as usize).collect(), vocab.len())
        }
        _ => unreachable!("schemas were checked"),
    }
}

fn joint_tv_complement(
    a: (&[usize], &[usize]),
    b: (&[usize], &[usize]),
    dims: (usize, usize),
) -> f64 {
    let mut ca = vec![0u128; dims.0 * dims.1];
    let mut cb = vec![0u128; dims.0 * dims.1];
    for (x, y) in a.0.iter().zip(a.1) {
        ca[x * dims.1 + y] += 1;
    }
    for (x, y) in b.0.iter().zip(b.1) {
        cb[x * dims.1 + y] += 1;
    }
    let (n, m) = (a.0.len() as u128, b.0.len() as u128);
    let sum: u128 = ca.iter().zip(&cb).map(|(x, y)| (x * m).abs_diff(y * n)).sum();
    1.0 - sum as f64 / (2 * n * m) as f64
}

/// Mean pairwise dependence similarity over unordered column pairs.
/// Numeric pairs compare Pearson correlations; pairs with a categorical
/// compare joint frequencies after decile binning of the numerics. Numeric
/// pairs with a constant column are skipped.
pub fn pair_score(real: &Table, synthetic: &Table) -> Result<f64> {
    real.check_same_schema(synthetic)?;
    let k = real.n_cols();
    if k < 2 {
        return Err(Error::Metric("pair score needs at least two columns".into()));
    }
    let cells: Vec<((Vec<usize>, usize), (Vec<usize>, usize))> = (0..k)
        .map(|j| {
            (
                discretize(real.column(j), real.column(j)),
                discretize(real.column(j), synthetic.column(j)),
            )
        })
        .collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..k {
        for j in i + 1..k {
            let score = match (real.column(i), real.column(j)) {
                (Column::Numeric(ri), Column::Numeric(rj)) => {
                    let si = synthetic.column(i).as_numeric().expect("schema checked");
                    let sj = synthetic.column(j).as_numeric().expect("schema checked");
                    match (pearson(ri, rj), pearson(si, sj)) {
                        (Some(a), Some(b)) => 1.0 - (a - b).abs() / 2.0,
                        _ => {
                            log::debug!(
                                "pair ({}, {}) skipped: constant column",
                                real.schema()[i].name,
                                real.schema()[j].name
                            );
                            continue;
                        }
                    }
                }
                _ => {
                    let ((ri, di), (si, _)) = &cells[i];
                    let ((rj, dj), (sj, _)) = &cells[j];
                    joint_tv_complement((ri, rj), (si, sj), (*di, *dj))
                }
            };
            total += score;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Metric("every column pair was skipped".into()));
    }
    Ok(total / count as f64)
}

pub const METRIC_NAMES: [&str; 5] = ["c2st", "ml_efficacy", "dcr_rate", "shape", "pair"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub c2st: f64,
    pub ml_efficacy: f64,
    pub dcr_rate: f64,
    pub shape: f64,
    pub pair: f64,
}

impl MetricBundle {
    /// `(metric name, value)` in [`METRIC_NAMES`] order.
    pub fn named(&self) -> [(&'static str, f64); 5] {
        [
            ("c2st", self.c2st),
            ("ml_efficacy", self.ml_efficacy),
            ("dcr_rate", self.dcr_rate),
            ("shape", self.shape),
            ("pair", self.pair),
        ]
    }
}

/// Settings for [`evaluate`].
#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub discriminator: GbdtConfig,
    pub predictor: GbdtConfig,
    pub dcr: DcrOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            discriminator: GbdtConfig::discriminator(),
            predictor: GbdtConfig::discriminator(),
            dcr: DcrOptions::default(),
        }
    }
}

/// All five metrics for one synthetic sample. The predictor trains on the
/// whole sample; the other metrics see a seeded subsample the size of
/// `test`.
pub fn evaluate(synthetic: &Table, train: &Table, test: &Table, opts: &EvalOptions, seed: u64) -> Result<MetricBundle> {
    let holdout_sized = if synthetic.n_rows() > test.n_rows() {
        let mut idx: Vec<usize> = (0..synthetic.n_rows()).collect();
        idx.shuffle(&mut rng::stream(seed, "evaluate/subsample"));
        idx.truncate(test.n_rows());
        idx.sort_unstable();
        synthetic.take(&idx)
    } else {
        synthetic.clone()
    };
    let ml = if test.target_index().is_some() {
        ml_efficacy(synthetic, test, &opts.predictor)?
    } else {
        0.0
    };
    Ok(MetricBundle {
        c2st: c2st(test, &holdout_sized, &opts.discriminator, seed)?,
        ml_efficacy: ml,
        dcr_rate: dcr_rate(&holdout_sized, train, test, DcrOptions { seed, ..opts.dcr })?,
        shape: shape_score(test, &holdout_sized)?,
        pair: pair_score(test, &holdout_sized)?,
    })
}
