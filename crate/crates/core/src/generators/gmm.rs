//! A diagonal-covariance Gaussian mixture over encoded numeric features,
//! with per-component categorical distributions for categorical columns.
//! Each training step is one EM sweep.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{FitState, StepOutcome, Synthesizer};
use crate::config::{self, Config};
use crate::dataset::{Column, Table};
use crate::encoders::{EncoderKind, TableEncoder};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

/// Stop once the mean per-row log-likelihood improves by less than this.
const TOLERANCE: f64 = 1e-6;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmConfig {
    pub n_components: usize,
    pub reg_covar: f64,
    pub encoder: EncoderKind,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            n_components: 1,
            reg_covar: 1e-6,
            encoder: EncoderKind::MinMax,
        }
    }
}

impl GmmConfig {
    pub fn from_config(config: &Config) -> Result<GmmConfig> {
        let known = ["n_components", "reg_covar", "encoder"];
        if let Some(k) = config.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::InvalidArgument(format!("gmmtoy takes no parameter `{k}`")));
        }
        let d = GmmConfig::default();
        let cfg = GmmConfig {
            n_components: config::get_usize(config, "n_components", d.n_components)?,
            reg_covar: config::get_f64(config, "reg_covar", d.reg_covar)?,
            encoder: EncoderKind::from_name(config::get_str(config, "encoder", d.encoder.name())?)?,
        };
        if !(1..=16).contains(&cfg.n_components) {
            return Err(Error::InvalidArgument(format!(
                "n_components = {} outside [1, 16]",
                cfg.n_components
            )));
        }
        if !(cfg.reg_covar.is_finite() && cfg.reg_covar > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "reg_covar = {} must be positive",
                cfg.reg_covar
            )));
        }
        if cfg.encoder.is_categorical() {
            return Err(Error::InvalidArgument(format!(
                "encoder `{}` does not apply to numeric columns",
                cfg.encoder.name()
            )));
        }
        Ok(cfg)
    }

    pub fn to_config(&self) -> Config {
        let mut c = Config::new();
        c.insert("n_components".into(), (self.n_components as i64).into());
        c.insert("reg_covar".into(), self.reg_covar.into());
        c.insert("encoder".into(), self.encoder.name().into());
        c
    }
}

/// Registry entry for the mixture model.
#[derive(Debug, Clone, Copy, Default)]
pub struct GmmToy;

impl Synthesizer for GmmToy {
    fn name(&self) -> String {
        "gmmtoy".into()
    }

    fn default_config(&self) -> Config {
        GmmConfig::default().to_config()
    }

    fn prepare_fit(&self, config: &Config, train: &Table, seed: u64) -> Result<Box<dyn FitState>> {
        Ok(Box::new(GmmState::fit(train, GmmConfig::from_config(config)?, seed)?))
    }
}

#[derive(Debug, Clone)]
pub struct GmmState {
    cfg: GmmConfig,
    template: Table,
    encoder: TableEncoder,
    z: Matrix,
    /// Codes of each categorical column, in table order.
    cats: Vec<(usize, Vec<u32>, usize)>,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    vars: Vec<Vec<f64>>,
    /// `probs[k][c][v]`: probability of value `v` of categorical `c` in component `k`.
    probs: Vec<Vec<Vec<f64>>>,
    resp: Matrix,
    history: Vec<f64>,
}

impl GmmState {
    pub fn fit(train: &Table, cfg: GmmConfig, seed: u64) -> Result<GmmState> {
        let n = train.n_rows();
        if cfg.n_components > n / 10 {
            return Err(Error::Synthesizer(format!(
                "{} components need at least {} rows, got {n}",
                cfg.n_components,
                10 * cfg.n_components
            )));
        }
        let num_cols: Vec<usize> = (0..train.n_cols())
            .filter(|&j| matches!(train.column(j), Column::Numeric(_)))
            .collect();
        let encoder = TableEncoder::fit(train, cfg.encoder, &num_cols)?;
        if encoder.output_dim() < 2 {
            return Err(Error::Synthesizer(format!(
                "gmmtoy needs at least 2 encoded numeric features, got {}",
                encoder.output_dim()
            )));
        }
        let mut r = rng::stream(seed, "gmmtoy/encode");
        let z = encoder.encode(train, &mut r)?;
        let cats: Vec<(usize, Vec<u32>, usize)> = train
            .columns()
            .iter()
            .enumerate()
            .filter_map(|(j, c)| match c {
                Column::Categorical { codes, vocab } => Some((j, codes.clone(), vocab.len())),
                Column::Numeric(_) => None,
            })
            .collect();

        let k = cfg.n_components;
        let d = z.n_cols();
        let mut global_mean = vec![0.0; d];
        for row in z.rows() {
            for (m, v) in global_mean.iter_mut().zip(row) {
                *m += v / n as f64;
            }
        }
        let mut global_var = vec![0.0; d];
        for row in z.rows() {
            for ((s, v), m) in global_var.iter_mut().zip(row).zip(&global_mean) {
                *s += (v - m).powi(2) / n as f64;
            }
        }
        let global_var: Vec<f64> = global_var.iter().map(|v| v + cfg.reg_covar).collect();
        let mut r = rng::stream(seed, "gmmtoy/init");
        let centers = kmeanspp(&z, k, &mut r);
        let means: Vec<Vec<f64>> = centers.iter().map(|&i| z.row(i).to_vec()).collect();
        let cat_freq: Vec<Vec<f64>> = cats
            .iter()
            .map(|(_, codes, card)| {
                let mut f = vec![0.0; *card];
                for &c in codes {
                    f[c as usize] += 1.0 / n as f64;
                }
                f
            })
            .collect();
        let mut state = GmmState {
            cfg,
            template: train.take(&[0]),
            encoder,
            z,
            cats,
            weights: vec![1.0 / k as f64; k],
            means,
            vars: vec![global_var; k],
            probs: vec![cat_freq; k],
            resp: Matrix::zeros(n, k),
            history: Vec::new(),
        };
        let ll = state.e_step();
        state.history.push(ll);
        Ok(state)
    }

    pub fn config(&self) -> &GmmConfig {
        &self.cfg
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.vars
    }

    pub fn encoder(&self) -> &TableEncoder {
        &self.encoder
    }

    /// Mean per-row log-likelihood after initialisation and after each sweep.
    pub fn log_likelihood_history(&self) -> &[f64] {
        &self.history
    }

    fn component_log_density(&self, k: usize, i: usize) -> f64 {
        let mut lp = self.weights[k].ln();
        for ((x, m), v) in self.z.row(i).iter().zip(&self.means[k]).zip(&self.vars[k]) {
            lp -= 0.5 * (LN_2PI + v.ln() + (x - m).powi(2) / v);
        }
        for (c, (_, codes, _)) in self.cats.iter().enumerate() {
            lp += self.probs[k][c][codes[i] as usize].ln();
        }
        lp
    }

    /// Fills the responsibilities and returns the mean log-likelihood.
    fn e_step(&mut self) -> f64 {
        let k = self.cfg.n_components;
        let mut total = 0.0;
        let mut lp = vec![0.0; k];
        for i in 0..self.z.n_rows() {
            for (c, slot) in lp.iter_mut().enumerate() {
                *slot = self.component_log_density(c, i);
            }
            let mx = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = lp.iter().map(|v| (v - mx).exp()).sum();
            let lse = mx + s.ln();
            total += lse;
            let row = self.resp.row_mut(i);
            for (dst, v) in row.iter_mut().zip(&lp) {
                *dst = (v - lse).exp();
            }
        }
        total / self.z.n_rows() as f64
    }

    fn m_step(&mut self) {
        let n = self.z.n_rows();
        let d = self.z.n_cols();
        for k in 0..self.cfg.n_components {
            let nk: f64 = (0..n).map(|i| self.resp.get(i, k)).sum();
            self.weights[k] = nk / n as f64;
            // an emptied component keeps its parameters and a vanishing weight
            if nk < 1e-10 {
                self.weights[k] = self.weights[k].max(f64::MIN_POSITIVE);
                continue;
            }
            let mut mean = vec![0.0; d];
            for i in 0..n {
                let r = self.resp.get(i, k);
                for (m, x) in mean.iter_mut().zip(self.z.row(i)) {
                    *m += r * x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= nk);
            let mut var = vec![0.0; d];
            for i in 0..n {
                let r = self.resp.get(i, k);
                for ((v, x), m) in var.iter_mut().zip(self.z.row(i)).zip(&mean) {
                    *v += r * (x - m).powi(2);
                }
            }
            var.iter_mut().for_each(|v| *v = *v / nk + self.cfg.reg_covar);
            self.means[k] = mean;
            self.vars[k] = var;
            for (c, (_, codes, card)) in self.cats.iter().enumerate() {
                let mut p = vec![0.0; *card];
                for (i, &code) in codes.iter().enumerate() {
                    p[code as usize] += self.resp.get(i, k);
                }
                p.iter_mut().for_each(|v| *v /= nk);
                self.probs[k][c] = p;
            }
        }
    }

    /// One EM sweep; reports early stop when the likelihood gain is below
    /// tolerance.
    pub fn step(&mut self) -> bool {
        self.m_step();
        let ll = self.e_step();
        let prev = *self.history.last().expect("history starts non-empty");
        self.history.push(ll);
        ll - prev < TOLERANCE
    }

    pub fn draw(&self, n: usize, seed: u64) -> Result<Table> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be at least 1".into()));
        }
        let mut r = rng::stream(seed, "gmmtoy/sample");
        let comp = WeightedIndex::new(&self.weights)
            .map_err(|e| Error::Synthesizer(format!("mixture weights: {e}")))?;
        let cat_dists: Vec<Vec<Option<WeightedIndex<f64>>>> = self
            .probs
            .iter()
            .map(|pk| pk.iter().map(|p| WeightedIndex::new(p).ok()).collect())
            .collect();
        let d = self.z.n_cols();
        let mut z = Matrix::zeros(n, d);
        let mut cat_codes: Vec<Vec<u32>> = vec![Vec::with_capacity(n); self.cats.len()];
        for i in 0..n {
            let k = comp.sample(&mut r);
            let row = z.row_mut(i);
            for ((x, m), v) in row.iter_mut().zip(&self.means[k]).zip(&self.vars[k]) {
                let e: f64 = r.sample(StandardNormal);
                *x = m + v.sqrt() * e;
            }
            for (c, out) in cat_codes.iter_mut().enumerate() {
                let code = match &cat_dists[k][c] {
                    Some(dist) => dist.sample(&mut r),
                    None => 0,
                };
                out.push(code as u32);
            }
        }
        let mut columns: Vec<Option<Column>> = vec![None; self.template.n_cols()];
        for (j, col) in self.encoder.decode_columns(&z, &self.template)? {
            columns[j] = Some(col);
        }
        for ((j, _, _), codes) in self.cats.iter().zip(cat_codes) {
            let vocab = self.template.column(*j).vocab().expect("categorical").clone();
            columns[*j] = Some(Column::Categorical { codes, vocab });
        }
        self.template
            .with_columns(columns.into_iter().map(|c| c.expect("every column decoded")).collect())
    }
}

/// k-means++ seeding: indices of `k` rows, each drawn with probability
/// proportional to its squared distance from the nearest chosen row.
fn kmeanspp(z: &Matrix, k: usize, r: &mut rng::Rng) -> Vec<usize> {
    let n = z.n_rows();
    let mut chosen = vec![r.gen_range(0..n)];
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let mut nearest: Vec<f64> = (0..n).map(|i| d2(z.row(i), z.row(chosen[0]))).collect();
    while chosen.len() < k {
        let next = match WeightedIndex::new(&nearest) {
            Ok(w) => w.sample(r),
            // every row coincides with a chosen one
            Err(_) => r.gen_range(0..n),
        };
        chosen.push(next);
        for (i, slot) in nearest.iter_mut().enumerate() {
            *slot = slot.min(d2(z.row(i), z.row(next)));
        }
    }
    chosen
}

impl FitState for GmmState {
    fn train_step(&mut self) -> Result<StepOutcome> {
        Ok(StepOutcome { early_stop: self.step() })
    }

    fn sample(&mut self, n: usize, seed: u64) -> Result<Table> {
        self.draw(n, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy;

    #[test]
    fn single_component_recovers_moments() {
        let mut r = rng::stream(0, "normal");
        let cols: Vec<(&str, Vec<f64>)> = ["a", "b"]
            .into_iter()
            .map(|name| (name, (0..5000).map(|_| r.sample(StandardNormal)).collect()))
            .collect();
        let t = toy::numeric_table("normal", &cols);
        let cfg = GmmConfig {
            encoder: EncoderKind::from_name("minmax").unwrap(),
            ..GmmConfig::default()
        };
        let mut g = GmmState::fit(&t, cfg, 1).unwrap();
        while !g.step() {}
        // back in the original units: minmax is affine
        for (j, col) in cols.iter().enumerate() {
            let (lo, hi) = g.encoder().encoders()[j].min_max().unwrap();
            let span = hi - lo;
            let mean = lo + span * g.means()[0][j];
            let var = g.variances()[0][j] * span * span;
            assert!(mean.abs() < 0.05, "{} mean {mean}", col.0);
            assert!((var - 1.0).abs() < 0.1, "{} var {var}", col.0);
        }
    }

    #[test]
    fn likelihood_is_monotone() {
        let t = toy::two_moons(1000, 0.08, 2);
        let cfg = GmmConfig { n_components: 6, ..GmmConfig::default() };
        let mut g = GmmState::fit(&t, cfg, 5).unwrap();
        for _ in 0..40 {
            g.step();
        }
        for w in g.log_likelihood_history().windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{} then {}", w[0], w[1]);
        }
    }

    #[test]
    fn sample_matches_schema_and_is_seeded() {
        let t = toy::mixed_census(500, 1);
        let cfg = GmmConfig { n_components: 3, ..GmmConfig::default() };
        let mut g = GmmState::fit(&t, cfg, 0).unwrap();
        g.step();
        let a = g.draw(50, 7).unwrap();
        a.check_same_schema(&t).unwrap();
        assert_eq!(a, g.draw(50, 7).unwrap());
    }

    #[test]
    fn config_validation() {
        let t = toy::two_moons(100, 0.1, 0);
        let mut c = GmmToy.default_config();
        c.insert("n_components".into(), 11i64.into());
        assert!(GmmToy.prepare_fit(&c, &t, 0).is_err());
        c.insert("n_components".into(), 0i64.into());
        assert!(GmmToy.prepare_fit(&c, &t, 0).is_err());
        c.insert("n_components".into(), 2i64.into());
        c.insert("encoder".into(), "onehot".into());
        assert!(GmmToy.prepare_fit(&c, &t, 0).is_err());
        c.insert("encoder".into(), "ple_cdf".into());
        assert!(GmmToy.prepare_fit(&c, &t, 0).is_ok());
    }
}
