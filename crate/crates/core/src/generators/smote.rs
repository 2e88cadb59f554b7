//! SMOTE and its unconditioned variant.
//!
//! Neighbors are found by exact search in a space where numerics are
//! min-max scaled to [0, 1] and categoricals are one-hot. Two one-hot
//! vectors that differ are at squared distance 2, so the search works on
//! category codes directly.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use super::{FitState, StepOutcome, Synthesizer};
use crate::config::{self, Config};
use crate::dataset::{largest_remainder, median_sorted, Column, Table};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    /// `false` selects ucSMOTE: one group, every column in the distance.
    pub conditioned: bool,
    pub seed: u64,
}

impl SmoteConfig {
    pub const K_RANGE: std::ops::RangeInclusive<usize> = 2..=20;

    pub fn validate(&self) -> Result<()> {
        if Self::K_RANGE.contains(&self.k_neighbors) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "k_neighbors = {} outside [2, 20]",
                self.k_neighbors
            )))
        }
    }
}

/// A fitted neighbor structure ready to sample.
#[derive(Debug, Clone)]
pub struct SmoteModel {
    train: Table,
    /// Row indices of each conditioning group.
    groups: Vec<Vec<usize>>,
    /// For every train row, its k nearest rows within its group.
    neighbors: Vec<Vec<usize>>,
}

fn distance_space(train: &Table, cols: &[usize]) -> (Vec<Vec<f64>>, Vec<Vec<u32>>) {
    let mut num = Vec::new();
    let mut cat = Vec::new();
    for &j in cols {
        match train.column(j) {
            Column::Numeric(v) => {
                let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let span = hi - lo;
                num.push(
                    v.iter()
                        .map(|x| if span > 0.0 { (x - lo) / span } else { 0.0 })
                        .collect(),
                );
            }
            Column::Categorical { codes, .. } => cat.push(codes.clone()),
        }
    }
    (num, cat)
}

fn groups_of(train: &Table, conditioned: bool) -> Vec<Vec<usize>> {
    let n = train.n_rows();
    let label: Vec<usize> = match (conditioned, train.target_index()) {
        (true, Some(t)) => match train.column(t) {
            Column::Categorical { codes, .. } => codes.iter().map(|&c| c as usize).collect(),
            Column::Numeric(y) => {
                let mut sorted = y.clone();
                sorted.sort_by(f64::total_cmp);
                let med = median_sorted(&sorted);
                y.iter().map(|&v| usize::from(v > med)).collect()
            }
        },
        _ => vec![0; n],
    };
    let n_groups = label.iter().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); n_groups];
    for (i, &g) in label.iter().enumerate() {
        groups[g].push(i);
    }
    groups.retain(|g| !g.is_empty());
    groups
}

impl SmoteModel {
    pub fn fit(train: &Table, k_neighbors: usize, conditioned: bool) -> Result<SmoteModel> {
        if k_neighbors == 0 {
            return Err(Error::InvalidArgument("k_neighbors must be positive".into()));
        }
        let cols: Vec<usize> = match (conditioned, train.target_index()) {
            (true, Some(_)) => train.feature_indices(),
            _ => (0..train.n_cols()).collect(),
        };
        let (num, cat) = distance_space(train, &cols);
        let groups = groups_of(train, conditioned);
        if let Some(g) = groups.iter().find(|g| g.len() < k_neighbors + 1) {
            return Err(Error::Synthesizer(format!(
                "a conditioning group has {} rows; k = {k_neighbors} needs at least {}",
                g.len(),
                k_neighbors + 1
            )));
        }
        let dist2 = |a: usize, b: usize| -> f64 {
            let mut d = 0.0;
            for c in &num {
                let t = c[a] - c[b];
                d += t * t;
            }
            for c in &cat {
                if c[a] != c[b] {
                    d += 2.0;
                }
            }
            d
        };
        let mut neighbors = vec![Vec::new(); train.n_rows()];
        for g in &groups {
            let found: Vec<(usize, Vec<usize>)> = g
                .par_iter()
                .map(|&i| {
                    // (distance, row) kept sorted, at most k entries
                    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k_neighbors + 1);
                    for &j in g {
                        if j == i {
                            continue;
                        }
                        let d = dist2(i, j);
                        if best.len() == k_neighbors && d >= best[k_neighbors - 1].0 {
                            continue;
                        }
                        let pos = best.partition_point(|&(bd, bj)| (bd, bj) < (d, j));
                        best.insert(pos, (d, j));
                        best.truncate(k_neighbors);
                    }
                    (i, best.into_iter().map(|(_, j)| j).collect())
                })
                .collect();
            for (i, nb) in found {
                neighbors[i] = nb;
            }
        }
        Ok(SmoteModel {
            train: train.clone(),
            groups,
            neighbors,
        })
    }

    pub fn neighbors(&self, row: usize) -> &[usize] {
        &self.neighbors[row]
    }

    /// Draws `n` rows; each group contributes in proportion to its size.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Table> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be at least 1".into()));
        }
        let mut r = rng::stream(seed, "smote");
        let sizes: Vec<usize> = self.groups.iter().map(Vec::len).collect();
        let quotas = largest_remainder(&sizes, n);
        let mut picks: Vec<(usize, usize, f64)> = Vec::with_capacity(n);
        for (g, &q) in self.groups.iter().zip(&quotas) {
            for _ in 0..q {
                let x = g[r.gen_range(0..g.len())];
                let nb = &self.neighbors[x];
                let z = nb[r.gen_range(0..nb.len())];
                let lambda: f64 = r.gen();
                picks.push((x, z, lambda));
            }
        }
        picks.shuffle(&mut r);
        let columns = self
            .train
            .columns()
            .iter()
            .map(|col| match col {
                Column::Numeric(v) => Column::Numeric(
                    picks
                        .iter()
                        .map(|&(x, z, l)| v[x] + l * (v[z] - v[x]))
                        .collect(),
                ),
                Column::Categorical { codes, vocab } => Column::Categorical {
                    codes: picks
                        .iter()
                        .map(|&(x, z, l)| if l <= 0.5 { codes[x] } else { codes[z] })
                        .collect(),
                    vocab: vocab.clone(),
                },
            })
            .collect();
        self.train.with_columns(columns)
    }
}

/// One-shot SMOTE: fit the neighbor structure and draw `n` rows.
pub fn smote_sample(train: &Table, cfg: &SmoteConfig, n: usize) -> Result<Table> {
    cfg.validate()?;
    SmoteModel::fit(train, cfg.k_neighbors, cfg.conditioned)?.sample(n, cfg.seed)
}

/// Registry entry; `conditioned = false` is ucSMOTE.
#[derive(Debug, Clone, Copy)]
pub struct Smote {
    pub conditioned: bool,
}

impl FitState for SmoteModel {
    fn train_step(&mut self) -> Result<StepOutcome> {
        Ok(StepOutcome { early_stop: true })
    }

    fn sample(&mut self, n: usize, seed: u64) -> Result<Table> {
        SmoteModel::sample(self, n, seed)
    }
}

impl Synthesizer for Smote {
    fn name(&self) -> String {
        if self.conditioned { "smote" } else { "ucsmote" }.into()
    }

    fn default_config(&self) -> Config {
        let mut c = Config::new();
        c.insert("k_neighbors".into(), 5i64.into());
        c
    }

    fn prepare_fit(&self, config: &Config, train: &Table, seed: u64) -> Result<Box<dyn FitState>> {
        if let Some(k) = config.keys().find(|k| k.as_str() != "k_neighbors") {
            return Err(Error::InvalidArgument(format!("{} takes no parameter `{k}`", self.name())));
        }
        let cfg = SmoteConfig {
            k_neighbors: config::get_usize(config, "k_neighbors", 5)?,
            conditioned: self.conditioned,
            seed,
        };
        cfg.validate()?;
        Ok(Box::new(SmoteModel::fit(train, cfg.k_neighbors, cfg.conditioned)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy;

    #[test]
    fn interpolation_stays_in_segment() {
        let t = toy::numeric_table("seg", &[("x", vec![0.0, 10.0])]);
        let m = SmoteModel::fit(&t, 1, false).unwrap();
        let s = m.sample(500, 3).unwrap();
        assert!(s.column(0).as_numeric().unwrap().iter().all(|v| (0.0..=10.0).contains(v)));
    }

    #[test]
    fn neighbors_are_exact() {
        let t = toy::numeric_table("line", &[("x", vec![0.0, 1.0, 3.0, 7.0, 15.0])]);
        let m = SmoteModel::fit(&t, 2, false).unwrap();
        assert_eq!(m.neighbors(0), &[1, 2]);
        assert_eq!(m.neighbors(2), &[1, 0]);
        assert_eq!(m.neighbors(4), &[3, 2]);
    }

    #[test]
    fn class_proportions_follow_train() {
        let t = toy::mixed_census(3000, 4);
        let s = smote_sample(&t, &SmoteConfig { k_neighbors: 5, conditioned: true, seed: 1 }, 10_000)
            .unwrap();
        let share = |tab: &Table| {
            let c = tab.target_codes().unwrap();
            c.iter().filter(|&&v| v == 1).count() as f64 / c.len() as f64
        };
        assert!((share(&t) - share(&s)).abs() <= 0.02);
    }

    #[test]
    fn small_class_rejected() {
        let t = toy::mixed_census(40, 4);
        let cfg = SmoteConfig { k_neighbors: 20, conditioned: true, seed: 0 };
        assert!(smote_sample(&t, &cfg, 10).is_err());
        assert!(SmoteConfig { k_neighbors: 1, ..cfg }.validate().is_err());
    }
}
