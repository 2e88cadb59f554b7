//! Small generated datasets for examples, tests and calibration runs.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::dataset::{Column, ColumnSchema, TaskKind, Table};
use crate::rng;

/// A categorical column whose vocabulary is the sorted set of `values`.
pub fn categorical<S: AsRef<str>>(values: &[S]) -> Column {
    let vocab: Vec<String> = values
        .iter()
        .map(|s| s.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let codes = values
        .iter()
        .map(|s| vocab.binary_search_by(|v| v.as_str().cmp(s.as_ref())).unwrap() as u32)
        .collect();
    Column::Categorical {
        codes,
        vocab: Arc::new(vocab),
    }
}

/// Assembles a table from named columns. `target` names the target column,
/// if any.
pub fn table(name: &str, task: TaskKind, target: Option<&str>, columns: Vec<(&str, Column)>) -> Table {
    let schema = columns
        .iter()
        .map(|(n, c)| ColumnSchema {
            name: n.to_string(),
            kind: c.kind(),
            is_target: Some(*n) == target,
        })
        .collect();
    Table::new(
        name,
        Arc::new(schema),
        task,
        columns.into_iter().map(|(_, c)| c).collect(),
    )
    .expect("toy tables are well formed")
}

/// An all-numeric table without a target.
pub fn numeric_table(name: &str, columns: &[(&str, Vec<f64>)]) -> Table {
    table(
        name,
        TaskKind::Regression,
        None,
        columns
            .iter()
            .map(|(n, v)| (*n, Column::Numeric(v.clone())))
            .collect(),
    )
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Two interleaved half circles with Gaussian noise; the label says which.
pub fn two_moons(n: usize, noise: f64, seed: u64) -> Table {
    let mut r = rng::stream(seed, "two_moons");
    let (mut x1, mut x2, mut label) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        let upper = i % 2 == 0;
        let t: f64 = r.gen::<f64>() * std::f64::consts::PI;
        let (a, b) = if upper {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        let e1: f64 = r.sample(StandardNormal);
        let e2: f64 = r.sample(StandardNormal);
        x1.push(a + noise * e1);
        x2.push(b + noise * e2);
        label.push(if upper { "0" } else { "1" });
    }
    table(
        "moons",
        TaskKind::Binclass,
        Some("label"),
        vec![
            ("x1", Column::Numeric(x1)),
            ("x2", Column::Numeric(x2)),
            ("label", categorical(&label)),
        ],
    )
}

fn pick<'a>(r: &mut rng::Rng, items: &[&'a str], weights: &[f64]) -> &'a str {
    let total: f64 = weights.iter().sum();
    let mut u = r.gen::<f64>() * total;
    for (item, w) in items.iter().zip(weights) {
        if u < *w {
            return item;
        }
        u -= w;
    }
    items[items.len() - 1]
}

/// A census-like mixed table: 6 numeric and 9 categorical columns with a
/// binary `income` target that depends on several of them. Integer-valued
/// numerics have many ties; `fnlwgt` is continuous, so rows are distinct
/// with overwhelming probability.
pub fn mixed_census(n: usize, seed: u64) -> Table {
    let mut r = rng::stream(seed, "mixed_census");
    let mut cols: [Vec<f64>; 6] = Default::default();
    let mut cats: [Vec<&str>; 9] = Default::default();
    const EDUCATION: [&str; 6] = ["hs", "some_college", "bachelors", "masters", "doctorate", "dropout"];
    const EDU_YEARS: [f64; 6] = [9.0, 10.0, 13.0, 14.0, 16.0, 7.0];
    for _ in 0..n {
        let z: f64 = r.sample(StandardNormal);
        let age = (38.0 + 13.0 * z).round().clamp(17.0, 90.0);
        let e = pick(&mut r, &EDUCATION, &[0.32, 0.22, 0.17, 0.06, 0.02, 0.21]);
        let ei = EDUCATION.iter().position(|&x| x == e).unwrap();
        let edu_num = (EDU_YEARS[ei] + if r.gen::<f64>() < 0.2 { 1.0 } else { 0.0 }).min(16.0);
        let sex = pick(&mut r, &["male", "female"], &[0.67, 0.33]);
        let married_w = if age < 25.0 { [0.15, 0.8, 0.05] } else { [0.6, 0.25, 0.15] };
        let marital = pick(&mut r, &["married", "never_married", "divorced"], &married_w);
        let relationship = match (marital, sex) {
            ("married", "male") => "husband",
            ("married", _) => "wife",
            ("never_married", _) if age < 30.0 => "own_child",
            _ => pick(&mut r, &["not_in_family", "unmarried"], &[0.6, 0.4]),
        };
        let occupation = if edu_num >= 13.0 {
            pick(&mut r, &["professional", "managerial", "sales", "clerical", "craft", "service"], &[0.4, 0.3, 0.12, 0.08, 0.05, 0.05])
        } else {
            pick(&mut r, &["professional", "managerial", "sales", "clerical", "craft", "service"], &[0.05, 0.08, 0.15, 0.22, 0.28, 0.22])
        };
        let workclass = pick(&mut r, &["private", "self_employed", "government", "unemployed"], &[0.7, 0.12, 0.13, 0.05]);
        let race = pick(&mut r, &["group_a", "group_b", "group_c"], &[0.8, 0.12, 0.08]);
        let region = pick(&mut r, &["north", "south", "abroad"], &[0.55, 0.35, 0.10]);
        let hours = if workclass == "unemployed" {
            0.0
        } else {
            let h: f64 = r.sample(StandardNormal);
            (40.0 + 10.0 * h + if sex == "male" { 3.0 } else { 0.0 }).round().clamp(1.0, 99.0)
        };
        let gain = if r.gen::<f64>() < 0.08 + 0.05 * (edu_num >= 13.0) as u8 as f64 {
            (r.gen::<f64>() * 20.0).floor() * 1000.0 + 1000.0
        } else {
            0.0
        };
        let loss = if r.gen::<f64>() < 0.05 { (r.gen::<f64>() * 10.0).floor() * 200.0 + 1000.0 } else { 0.0 };
        let fnlwgt = 190_000.0 * (0.5 * r.sample::<f64, _>(StandardNormal)).exp();
        let score = -7.0
            + 0.04 * age.min(60.0)
            + 0.3 * edu_num
            + 1.2 * (marital == "married") as u8 as f64
            + 0.03 * hours
            + 0.8 * (gain > 5000.0) as u8 as f64
            + 0.5 * (occupation == "managerial" || occupation == "professional") as u8 as f64;
        let p = 1.0 / (1.0 + (-score).exp());
        let income = if r.gen::<f64>() < p { ">50k" } else { "<=50k" };
        for (dst, v) in cols.iter_mut().zip([age, fnlwgt, edu_num, gain, loss, hours]) {
            dst.push(v);
        }
        for (dst, v) in cats
            .iter_mut()
            .zip([workclass, e, marital, occupation, relationship, race, sex, region, income])
        {
            dst.push(v);
        }
    }
    let [age, fnlwgt, edu_num, gain, loss, hours] = cols;
    let [workclass, education, marital, occupation, relationship, race, sex, region, income] =
        cats.map(|c| categorical(&c));
    table(
        "census",
        TaskKind::Binclass,
        Some("income"),
        vec![
            ("age", Column::Numeric(age)),
            ("workclass", workclass),
            ("fnlwgt", Column::Numeric(fnlwgt)),
            ("education", education),
            ("education_num", Column::Numeric(edu_num)),
            ("marital_status", marital),
            ("occupation", occupation),
            ("relationship", relationship),
            ("race", race),
            ("sex", sex),
            ("capital_gain", Column::Numeric(gain)),
            ("capital_loss", Column::Numeric(loss)),
            ("hours_per_week", Column::Numeric(hours)),
            ("native_region", region),
            ("income", income),
        ],
    )
}

/// `y = Σ wᵢ xᵢ + noise` over `d` standard-normal features.
pub fn linear_regression(n: usize, d: usize, noise: f64, seed: u64) -> Table {
    let mut r = rng::stream(seed, "linear_regression");
    let w: Vec<f64> = (0..d).map(|i| 1.0 + i as f64 * 0.5).collect();
    let mut xs = vec![Vec::with_capacity(n); d];
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut acc = 0.0;
        for (col, wi) in xs.iter_mut().zip(&w) {
            let v: f64 = r.sample(StandardNormal);
            acc += wi * v;
            col.push(v);
        }
        let e: f64 = r.sample(StandardNormal);
        y.push(acc + noise * e);
    }
    let names: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    let mut columns: Vec<(&str, Column)> = names
        .iter()
        .zip(xs)
        .map(|(n, v)| (n.as_str(), Column::Numeric(v)))
        .collect();
    columns.push(("y", Column::Numeric(y)));
    table("linear", TaskKind::Regression, Some("y"), columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ColumnKind;

    #[test]
    fn shapes() {
        let m = two_moons(101, 0.1, 0);
        assert_eq!((m.n_rows(), m.n_cols()), (101, 3));
        assert_eq!(m.n_classes(), Some(2));
        let c = mixed_census(500, 0);
        let kinds: Vec<ColumnKind> = c.columns().iter().map(Column::kind).collect();
        assert_eq!(kinds.iter().filter(|k| **k == ColumnKind::Numeric).count(), 6);
        assert_eq!(c.n_classes(), Some(2));
        assert_eq!(c, mixed_census(500, 0));
        assert_eq!(linear_regression(10, 3, 0.1, 0).n_cols(), 4);
    }
}
