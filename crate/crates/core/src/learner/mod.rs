//! Second-order gradient boosting over histogram-binned features.
//!
//! The same learner serves as the two-sample discriminator and as the
//! downstream predictor for utility scores. Trees grow depth-wise; a split is
//! chosen by the usual `G²/(H+λ)` gain, scanning features in index order and
//! keeping the first strictly-better candidate, so ties resolve to the lowest
//! feature and bin.

mod binning;
pub mod scoring;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use binning::FeatureBins;
pub use scoring::{f1_score, r2_normalized, roc_auc};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Logistic,
    MulticlassSoftmax,
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub n_histogram_bins: usize,
    pub min_samples_leaf: usize,
    pub loss: Loss,
    pub seed: u64,
    /// L2 penalty on leaf values.
    pub reg_lambda: f64,
    /// Row fraction drawn (without replacement) for each round.
    pub subsample: f64,
}

impl GbdtConfig {
    /// Defaults for the real-vs-synthetic discriminator.
    pub fn discriminator() -> Self {
        GbdtConfig {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: 6,
            n_histogram_bins: 256,
            min_samples_leaf: 20,
            loss: Loss::Logistic,
            seed: 0,
            reg_lambda: 1.0,
            subsample: 1.0,
        }
    }

    /// Defaults for the utility predictor, with the loss fitting `task`.
    pub fn predictor(task: crate::dataset::TaskKind) -> Self {
        use crate::dataset::TaskKind;
        GbdtConfig {
            loss: match task {
                TaskKind::Binclass => Loss::Logistic,
                TaskKind::Multiclass => Loss::MulticlassSoftmax,
                TaskKind::Regression => Loss::Squared,
            },
            ..GbdtConfig::discriminator()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Learner(m));
        if self.n_rounds < 1 {
            return bad("n_rounds must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate {} outside (0, 1]", self.learning_rate));
        }
        if self.max_depth < 1 {
            return bad("max_depth must be >= 1".into());
        }
        if !(2..=512).contains(&self.n_histogram_bins) {
            return bad(format!(
                "n_histogram_bins {} outside [2, 512]",
                self.n_histogram_bins
            ));
        }
        if !(self.reg_lambda >= 0.0) {
            return bad("reg_lambda must be >= 0".into());
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad(format!("subsample {} outside (0, 1]", self.subsample));
        }
        Ok(())
    }
}

/// Training targets.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Classes { labels: &'a [u32], n_classes: usize },
    Values(&'a [f64]),
}

impl Targets<'_> {
    fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Values(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split {
        feature: usize,
        bin: u16,
        /// `x < threshold` goes left.
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[*feature] < *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value } => Some(*value),
            Node::Split { .. } => None,
        })
    }

    /// `(feature, bin)` of every split, in node order.
    pub fn splits(&self) -> Vec<(usize, u16)> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, bin, .. } => Some((*feature, *bin)),
                Node::Leaf { .. } => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    loss: Loss,
    n_features: usize,
    n_classes: usize,
    base_score: Vec<f64>,
    /// `trees[round][output]`.
    trees: Vec<Vec<Tree>>,
    cuts: Vec<Vec<f64>>,
    train_loss: Vec<f64>,
}

impl GbdtModel {
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn base_score(&self) -> &[f64] {
        &self.base_score
    }

    pub fn trees(&self) -> impl Iterator<Item = &Tree> {
        self.trees.iter().flatten()
    }

    pub fn feature_cuts(&self) -> &[Vec<f64>] {
        &self.cuts
    }

    /// Mean training loss before boosting (index 0) and after every round.
    pub fn train_loss(&self) -> &[f64] {
        &self.train_loss
    }

    fn n_outputs(&self) -> usize {
        self.base_score.len()
    }

    /// Raw additive scores (logits for classification), `n × outputs`.
    pub fn predict_raw(&self, x: &Matrix) -> Result<Matrix> {
        if x.n_cols() != self.n_features {
            return Err(Error::Learner(format!(
                "model expects {} features, got {}",
                self.n_features,
                x.n_cols()
            )));
        }
        let k = self.n_outputs();
        let mut out = Matrix::zeros(x.n_rows(), k);
        for i in 0..x.n_rows() {
            let row = x.row(i);
            let o = out.row_mut(i);
            o.copy_from_slice(&self.base_score);
            for round in &self.trees {
                for (c, tree) in round.iter().enumerate() {
                    o[c] += tree.predict_row(row);
                }
            }
        }
        Ok(out)
    }

    /// Class probabilities (`n × n_classes`, rows summing to 1) for
    /// classification, predicted values (`n × 1`) for regression.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let raw = self.predict_raw(x)?;
        Ok(match self.loss {
            Loss::Squared => raw,
            Loss::Logistic => {
                let mut out = Matrix::zeros(raw.n_rows(), 2);
                for i in 0..raw.n_rows() {
                    let p = sigmoid(raw.get(i, 0)).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                    out.set(i, 0, 1.0 - p);
                    out.set(i, 1, p);
                }
                out
            }
            Loss::MulticlassSoftmax => {
                let mut out = raw;
                for i in 0..out.n_rows() {
                    softmax_in_place(out.row_mut(i));
                }
                out
            }
        })
    }

    /// Probability of class 1 for binary models.
    pub fn predict_positive(&self, x: &Matrix) -> Result<Vec<f64>> {
        if self.loss != Loss::Logistic {
            return Err(Error::Learner("predict_positive needs a binary model".into()));
        }
        Ok(self.predict(x)?.column(1))
    }

    pub fn predict_class(&self, x: &Matrix) -> Result<Vec<u32>> {
        if self.loss == Loss::Squared {
            return Err(Error::Learner("regression model has no classes".into()));
        }
        let p = self.predict(x)?;
        Ok(p.rows().map(|r| crate::encoders::argmax(r) as u32).collect())
    }

    pub fn predict_values(&self, x: &Matrix) -> Result<Vec<f64>> {
        if self.loss != Loss::Squared {
            return Err(Error::Learner("classification model has no values".into()));
        }
        Ok(self.predict_raw(x)?.column(0))
    }
}

const PROB_FLOOR: f64 = 1e-15;
const HESS_FLOOR: f64 = 1e-16;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

/// Trains a boosted ensemble. Deterministic given `cfg.seed`.
pub fn train_gbdt(x: &Matrix, y: Targets<'_>, cfg: &GbdtConfig) -> Result<GbdtModel> {
    cfg.validate()?;
    let n = x.n_rows();
    if n == 0 || x.n_cols() == 0 {
        return Err(Error::Learner("empty feature matrix".into()));
    }
    if y.len() != n {
        return Err(Error::Learner(format!("{} rows but {} targets", n, y.len())));
    }
    let (n_classes, n_outputs) = match (cfg.loss, y) {
        (Loss::Squared, Targets::Values(v)) => {
            if v.iter().any(|t| !t.is_finite()) {
                return Err(Error::Learner("non-finite regression target".into()));
            }
            (0, 1)
        }
        (Loss::Logistic, Targets::Classes { labels, .. }) => {
            if labels.iter().any(|&l| l > 1) {
                return Err(Error::Learner("logistic loss needs labels in {0, 1}".into()));
            }
            if labels.iter().all(|&l| l == labels[0]) {
                return Err(Error::Learner("logistic loss needs both classes".into()));
            }
            (2, 1)
        }
        (Loss::MulticlassSoftmax, Targets::Classes { labels, n_classes }) => {
            if n_classes < 2 || labels.iter().any(|&l| l as usize >= n_classes) {
                return Err(Error::Learner(format!(
                    "labels must lie in 0..{n_classes} with at least two classes"
                )));
            }
            (n_classes, n_classes)
        }
        _ => return Err(Error::Learner("loss does not match target type".into())),
    };

    let bins: Vec<FeatureBins> = (0..x.n_cols())
        .map(|j| FeatureBins::fit(&x.column(j), cfg.n_histogram_bins))
        .collect();
    let binned = binning::bin_matrix(x, &bins);
    let n_bins: Vec<usize> = bins.iter().map(FeatureBins::n_bins).collect();

    let base_score = match y {
        Targets::Values(v) => vec![v.iter().sum::<f64>() / n as f64],
        Targets::Classes { labels, .. } if cfg.loss == Loss::Logistic => {
            let p = labels.iter().filter(|&&l| l == 1).count() as f64 / n as f64;
            let p = p.clamp(1e-6, 1.0 - 1e-6);
            vec![(p / (1.0 - p)).ln()]
        }
        Targets::Classes { labels, .. } => {
            let mut counts = vec![0usize; n_classes];
            for &l in labels {
                counts[l as usize] += 1;
            }
            counts
                .iter()
                .map(|&c| ((c as f64 + 1.0) / (n + n_classes) as f64).ln())
                .collect()
        }
    };

    let mut raw: Vec<f64> = (0..n).flat_map(|_| base_score.iter().copied()).collect();
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut probs = vec![0.0; n * n_outputs];
    let mut rng = rng::stream(cfg.seed, "gbdt/subsample");
    let mut all_rows: Vec<u32> = (0..n as u32).collect();
    let builder = TreeBuilder {
        binned: &binned,
        n_bins: &n_bins,
        bins: &bins,
        cfg,
    };

    let mut train_loss = vec![mean_loss(cfg.loss, y, &raw, n_outputs)];
    let mut trees = Vec::with_capacity(cfg.n_rounds);
    for _ in 0..cfg.n_rounds {
        let rows: Vec<u32> = if cfg.subsample < 1.0 {
            let k = ((n as f64 * cfg.subsample).round() as usize).max(1);
            all_rows.shuffle(&mut rng);
            let mut r = all_rows[..k].to_vec();
            r.sort_unstable();
            r
        } else {
            all_rows.clone()
        };
        if cfg.loss == Loss::MulticlassSoftmax {
            probs.copy_from_slice(&raw);
            for row in probs.chunks_mut(n_outputs) {
                softmax_in_place(row);
            }
        }
        let mut round = Vec::with_capacity(n_outputs);
        for c in 0..n_outputs {
            for i in 0..n {
                let (g, h) = match (cfg.loss, y) {
                    (Loss::Squared, Targets::Values(v)) => (raw[i] - v[i], 1.0),
                    (Loss::Logistic, Targets::Classes { labels, .. }) => {
                        let p = sigmoid(raw[i]);
                        (p - labels[i] as f64, (p * (1.0 - p)).max(HESS_FLOOR))
                    }
                    (Loss::MulticlassSoftmax, Targets::Classes { labels, .. }) => {
                        let p = probs[i * n_outputs + c];
                        let target = if labels[i] as usize == c { 1.0 } else { 0.0 };
                        (p - target, (p * (1.0 - p)).max(HESS_FLOOR))
                    }
                    _ => unreachable!(),
                };
                grad[i] = g;
                hess[i] = h;
            }
            let tree = builder.build(&rows, &grad, &hess);
            for i in 0..n {
                raw[i * n_outputs + c] += tree.predict_binned(&binned, i);
            }
            round.push(tree.into_tree());
        }
        trees.push(round);
        train_loss.push(mean_loss(cfg.loss, y, &raw, n_outputs));
    }

    Ok(GbdtModel {
        loss: cfg.loss,
        n_features: x.n_cols(),
        n_classes,
        base_score,
        trees,
        cuts: bins.into_iter().map(|b| b.cuts).collect(),
        train_loss,
    })
}

fn mean_loss(loss: Loss, y: Targets<'_>, raw: &[f64], k: usize) -> f64 {
    let n = y.len();
    let total: f64 = match (loss, y) {
        (Loss::Squared, Targets::Values(v)) => {
            v.iter().zip(raw).map(|(t, f)| 0.5 * (t - f).powi(2)).sum()
        }
        (Loss::Logistic, Targets::Classes { labels, .. }) => labels
            .iter()
            .zip(raw)
            .map(|(&l, &z)| {
                // log(1 + e^z) - l·z, stable for large |z|
                let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
                softplus - l as f64 * z
            })
            .sum(),
        (Loss::MulticlassSoftmax, Targets::Classes { labels, .. }) => labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let row = &raw[i * k..(i + 1) * k];
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
                lse - row[l as usize]
            })
            .sum(),
        _ => unreachable!(),
    };
    total / n as f64
}

struct TreeBuilder<'a> {
    binned: &'a [Vec<u16>],
    n_bins: &'a [usize],
    bins: &'a [FeatureBins],
    cfg: &'a GbdtConfig,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    bin: u16,
}

struct BuiltTree {
    nodes: Vec<Node>,
}

impl BuiltTree {
    fn predict_binned(&self, binned: &[Vec<u16>], i: usize) -> f64 {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    bin,
                    left,
                    right,
                    ..
                } => k = if binned[*feature][i] <= *bin { *left } else { *right },
            }
        }
    }

    fn into_tree(self) -> Tree {
        Tree { nodes: self.nodes }
    }
}

/// Below this many (rows × features) cells the split search stays sequential.
const PARALLEL_CELLS: usize = 50_000;

impl TreeBuilder<'_> {
    fn build(&self, rows: &[u32], grad: &[f64], hess: &[f64]) -> BuiltTree {
        let mut nodes = Vec::new();
        self.grow(rows.to_vec(), 0, grad, hess, &mut nodes);
        BuiltTree { nodes }
    }

    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -self.cfg.learning_rate * g / (h + self.cfg.reg_lambda)
    }

    fn grow(
        &self,
        rows: Vec<u32>,
        depth: usize,
        grad: &[f64],
        hess: &[f64],
        nodes: &mut Vec<Node>,
    ) -> usize {
        let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &i| {
            (g + grad[i as usize], h + hess[i as usize])
        });
        let id = nodes.len();
        nodes.push(Node::Leaf {
            value: self.leaf_value(g, h),
        });
        if depth >= self.cfg.max_depth || rows.len() < 2 * self.cfg.min_samples_leaf.max(1) {
            return id;
        }
        let Some(best) = self.best_split(&rows, g, h, grad, hess) else {
            return id;
        };
        let column = &self.binned[best.feature];
        let (left, right): (Vec<u32>, Vec<u32>) =
            rows.iter().partition(|&&i| column[i as usize] <= best.bin);
        drop(rows);
        let l = self.grow(left, depth + 1, grad, hess, nodes);
        let r = self.grow(right, depth + 1, grad, hess, nodes);
        nodes[id] = Node::Split {
            feature: best.feature,
            bin: best.bin,
            threshold: self.bins[best.feature].threshold(best.bin),
            left: l,
            right: r,
        };
        id
    }

    fn best_split(&self, rows: &[u32], g: f64, h: f64, grad: &[f64], hess: &[f64]) -> Option<Candidate> {
        let n_features = self.binned.len();
        let search = |f: usize| self.best_for_feature(f, rows, g, h, grad, hess);
        let per_feature: Vec<Option<Candidate>> = if rows.len() * n_features >= PARALLEL_CELLS {
            (0..n_features).into_par_iter().map(search).collect()
        } else {
            (0..n_features).map(search).collect()
        };
        per_feature
            .into_iter()
            .flatten()
            .fold(None, |best: Option<Candidate>, c| match best {
                Some(b) if c.gain <= b.gain => Some(b),
                _ => Some(c),
            })
    }

    fn best_for_feature(
        &self,
        f: usize,
        rows: &[u32],
        g: f64,
        h: f64,
        grad: &[f64],
        hess: &[f64],
    ) -> Option<Candidate> {
        let nb = self.n_bins[f];
        if nb < 2 {
            return None;
        }
        let column = &self.binned[f];
        let mut hist = vec![(0.0f64, 0.0f64, 0usize); nb];
        for &i in rows {
            let slot = &mut hist[column[i as usize] as usize];
            slot.0 += grad[i as usize];
            slot.1 += hess[i as usize];
            slot.2 += 1;
        }
        let lambda = self.cfg.reg_lambda;
        let msl = self.cfg.min_samples_leaf.max(1);
        let parent = g * g / (h + lambda);
        let n = rows.len();
        let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0usize);
        let mut best: Option<Candidate> = None;
        for (b, &(bg, bh, bc)) in hist.iter().enumerate().take(nb - 1) {
            gl += bg;
            hl += bh;
            cl += bc;
            if bc == 0 || cl < msl {
                continue;
            }
            if n - cl < msl {
                break;
            }
            let (gr, hr) = (g - gl, h - hl);
            let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
            if gain > 0.0 && best.map_or(true, |c| gain > c.gain) {
                best = Some(Candidate {
                    gain,
                    feature: f,
                    bin: b as u16,
                });
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(loss: Loss, rounds: usize, depth: usize) -> GbdtConfig {
        GbdtConfig {
            n_rounds: rounds,
            max_depth: depth,
            min_samples_leaf: 1,
            loss,
            ..GbdtConfig::discriminator()
        }
    }

    #[test]
    fn separable_one_dimensional() {
        let xs: Vec<f64> = (-20..20).map(|i| i as f64 + 0.5).collect();
        let labels: Vec<u32> = xs.iter().map(|&x| u32::from(x >= 0.0)).collect();
        let x = Matrix::column_vector(&xs);
        let c = GbdtConfig {
            learning_rate: 0.5,
            ..cfg(Loss::Logistic, 10, 3)
        };
        let m = train_gbdt(&x, Targets::Classes { labels: &labels, n_classes: 2 }, &c).unwrap();
        assert_eq!(m.predict_class(&x).unwrap(), labels);
        let p = m.predict(&Matrix::column_vector(&[-5.0])).unwrap();
        assert!(p.get(0, 0) > 0.9);
    }

    #[test]
    fn constant_regression() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 1.0], vec![0.0, 5.0], vec![2.0, 2.0]]);
        let y = vec![3.7; 4];
        let m = train_gbdt(&x, Targets::Values(&y), &cfg(Loss::Squared, 20, 3)).unwrap();
        for v in m.predict_values(&Matrix::from_rows(&[vec![-9.0, 9.0], vec![1.0, 1.0]])).unwrap() {
            assert!((v - 3.7).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_logit_is_half() {
        let model = GbdtModel {
            loss: Loss::Logistic,
            n_features: 1,
            n_classes: 2,
            base_score: vec![0.0],
            trees: vec![vec![Tree {
                nodes: vec![Node::Leaf { value: 0.0 }],
            }]],
            cuts: vec![vec![]],
            train_loss: vec![],
        };
        let p = model.predict_positive(&Matrix::column_vector(&[3.0, -1.0])).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn errors() {
        let x = Matrix::column_vector(&[1.0, 2.0]);
        let one_class = [1u32, 1];
        assert!(train_gbdt(&x, Targets::Classes { labels: &one_class, n_classes: 2 }, &cfg(Loss::Logistic, 1, 1)).is_err());
        assert!(train_gbdt(&Matrix::zeros(0, 1), Targets::Values(&[]), &cfg(Loss::Squared, 1, 1)).is_err());
        let m = train_gbdt(&x, Targets::Values(&[1.0, 2.0]), &cfg(Loss::Squared, 1, 1)).unwrap();
        assert!(m.predict(&Matrix::zeros(1, 2)).is_err());
        let mut bad = cfg(Loss::Squared, 1, 1);
        bad.n_histogram_bins = 1;
        assert!(train_gbdt(&x, Targets::Values(&[1.0, 2.0]), &bad).is_err());
    }

    #[test]
    fn multiclass_rows_sum_to_one() {
        let xs: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let labels: Vec<u32> = (0..60).map(|i| (i / 20) as u32).collect();
        let x = Matrix::column_vector(&xs);
        let m = train_gbdt(
            &x,
            Targets::Classes { labels: &labels, n_classes: 3 },
            &cfg(Loss::MulticlassSoftmax, 30, 2),
        )
        .unwrap();
        let p = m.predict(&x).unwrap();
        for r in p.rows() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(m.predict_class(&x).unwrap(), labels);
    }
}
