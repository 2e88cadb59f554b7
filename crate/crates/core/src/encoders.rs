//! Fitted, invertible per-column feature encoders.
//!
//! Numeric kinds: min-max scaling, deterministic quantile (mid-rank) mapping,
//! the randomized probability-integral transform (`cdf`), piecewise-linear
//! encoding over quantile bins (`ple`), `ple` followed by a per-component
//! randomized transform (`ple_cdf`), and prototype encoding (`ptp`), a softmax
//! over negative distances to fixed quantile anchors. Categorical columns use
//! one-hot indicators.
//!
//! The cluster-based normalizer (a per-column Gaussian mixture) is not
//! implemented; [`EncoderKind::from_name`] rejects it explicitly.

use std::collections::HashMap;
use std::sync::Arc;

use rand::distributions::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, Table};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_PLE_BINS: usize = 16;
pub const DEFAULT_PROTOTYPES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderKind {
    MinMax,
    /// `n_quantiles: None` keeps every training value as a landmark.
    Quantile { n_quantiles: Option<usize> },
    Cdf,
    Ple { n_bins: usize },
    PleCdf { n_bins: usize },
    /// `temperature: None` uses the median gap between adjacent prototypes.
    Ptp {
        n_prototypes: usize,
        temperature: Option<f64>,
    },
    OneHot,
}

impl EncoderKind {
    /// Parses encoder names as they appear in search spaces, with defaults for
    /// the kind parameters.
    pub fn from_name(name: &str) -> Result<EncoderKind> {
        let norm = name.trim().to_ascii_lowercase().replace('-', "_");
        Ok(match norm.as_str() {
            "minmax" | "minmaxscaler" | "min_max" => EncoderKind::MinMax,
            "quantile" | "quantiletransformer" => EncoderKind::Quantile { n_quantiles: None },
            "cdf" => EncoderKind::Cdf,
            "ple" => EncoderKind::Ple {
                n_bins: DEFAULT_PLE_BINS,
            },
            "ple_cdf" => EncoderKind::PleCdf {
                n_bins: DEFAULT_PLE_BINS,
            },
            "ptp" => EncoderKind::Ptp {
                n_prototypes: DEFAULT_PROTOTYPES,
                temperature: None,
            },
            "onehot" | "one_hot" | "one_hot_encoder" => EncoderKind::OneHot,
            "cbn" | "clusterbasednormalizer" | "cluster_based" => {
                return Err(Error::Encoder(
                    "the cluster-based normalizer is not implemented".into(),
                ))
            }
            other => return Err(Error::Encoder(format!("unknown encoder `{other}`"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            EncoderKind::MinMax => "minmax",
            EncoderKind::Quantile { .. } => "quantile",
            EncoderKind::Cdf => "cdf",
            EncoderKind::Ple { .. } => "ple",
            EncoderKind::PleCdf { .. } => "ple_cdf",
            EncoderKind::Ptp { .. } => "ptp",
            EncoderKind::OneHot => "onehot",
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, EncoderKind::OneHot)
    }

    pub fn is_randomized(&self) -> bool {
        matches!(self, EncoderKind::Cdf | EncoderKind::PleCdf { .. })
    }

    fn validate(&self) -> Result<()> {
        match *self {
            EncoderKind::Ple { n_bins } | EncoderKind::PleCdf { n_bins } if n_bins < 2 => {
                Err(Error::Encoder(format!("n_bins must be >= 2, got {n_bins}")))
            }
            EncoderKind::Ptp { n_prototypes, .. } if n_prototypes < 2 => Err(Error::Encoder(
                format!("n_prototypes must be >= 2, got {n_prototypes}"),
            )),
            EncoderKind::Ptp {
                temperature: Some(t),
                ..
            } if !(t > 0.0 && t.is_finite()) => {
                Err(Error::Encoder(format!("temperature must be > 0, got {t}")))
            }
            EncoderKind::Quantile {
                n_quantiles: Some(q),
            } if q < 2 => Err(Error::Encoder(format!("n_quantiles must be >= 2, got {q}"))),
            _ => Ok(()),
        }
    }
}

/// Borrowed column values handed to an encoder.
#[derive(Debug, Clone, Copy)]
pub enum Values<'a> {
    Numeric(&'a [f64]),
    Categorical {
        codes: &'a [u32],
        vocab: &'a [String],
    },
}

impl<'a> From<&'a Column> for Values<'a> {
    fn from(c: &'a Column) -> Self {
        match c {
            Column::Numeric(v) => Values::Numeric(v),
            Column::Categorical { codes, vocab } => Values::Categorical {
                codes,
                vocab: vocab.as_slice(),
            },
        }
    }
}

impl Values<'_> {
    pub fn len(&self) -> usize {
        match self {
            Values::Numeric(v) => v.len(),
            Values::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Output of [`FittedEncoder::decode`].
#[derive(Debug, Clone, PartialEq)]
pub enum Decoded {
    Numeric(Vec<f64>),
    /// Indices into the encoder's category list.
    Categorical(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
enum State {
    MinMax { min: f64, max: f64 },
    Quantile { sorted: Vec<f64> },
    Cdf { sorted: Vec<f64> },
    Ple { edges: Vec<f64> },
    PleCdf { edges: Vec<f64>, components: Vec<Vec<f64>> },
    Ptp { prototypes: Vec<f64>, temperature: f64 },
    OneHot { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedEncoder {
    kind: EncoderKind,
    state: State,
}

const FORMAT_NAME: &str = "tabbench-encoder";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Persisted {
    format: String,
    version: u32,
    encoder: FittedEncoder,
}

/// Fits `kind` on a training column.
pub fn fit_encoder(kind: EncoderKind, column: Values<'_>) -> Result<FittedEncoder> {
    kind.validate()?;
    if column.is_empty() {
        return Err(Error::Encoder("cannot fit an encoder on an empty column".into()));
    }
    let state = match (kind, column) {
        (EncoderKind::OneHot, Values::Categorical { vocab, .. }) => State::OneHot {
            categories: vocab.to_vec(),
        },
        (EncoderKind::OneHot, Values::Numeric(_)) => {
            return Err(Error::Encoder("onehot requires a categorical column".into()))
        }
        (_, Values::Categorical { .. }) => {
            return Err(Error::Encoder(format!(
                "{} requires a numeric column",
                kind.name()
            )))
        }
        (kind, Values::Numeric(values)) => {
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            match kind {
                EncoderKind::MinMax => State::MinMax {
                    min: sorted[0],
                    max: sorted[sorted.len() - 1],
                },
                EncoderKind::Quantile { n_quantiles } => State::Quantile {
                    sorted: match n_quantiles {
                        Some(q) if q < sorted.len() => (0..q)
                            .map(|j| quantile_sorted(&sorted, j as f64 / (q - 1) as f64))
                            .collect(),
                        _ => sorted,
                    },
                },
                EncoderKind::Cdf => State::Cdf { sorted },
                EncoderKind::Ple { n_bins } => State::Ple {
                    edges: ple_edges(&sorted, n_bins),
                },
                EncoderKind::PleCdf { n_bins } => {
                    let edges = ple_edges(&sorted, n_bins);
                    let mut components = vec![Vec::with_capacity(values.len()); n_bins];
                    let mut buf = vec![0.0; n_bins];
                    for &x in values {
                        ple_vector(&edges, x, &mut buf);
                        for (c, &v) in components.iter_mut().zip(&buf) {
                            c.push(v);
                        }
                    }
                    for c in &mut components {
                        c.sort_by(f64::total_cmp);
                    }
                    State::PleCdf { edges, components }
                }
                EncoderKind::Ptp {
                    n_prototypes,
                    temperature,
                } => {
                    let prototypes: Vec<f64> = (0..n_prototypes)
                        .map(|j| quantile_sorted(&sorted, j as f64 / (n_prototypes - 1) as f64))
                        .collect();
                    let temperature = temperature.unwrap_or_else(|| default_temperature(&prototypes));
                    State::Ptp {
                        prototypes,
                        temperature,
                    }
                }
                EncoderKind::OneHot => unreachable!(),
            }
        }
    };
    Ok(FittedEncoder { kind, state })
}

impl FittedEncoder {
    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn output_dim(&self) -> usize {
        match &self.state {
            State::MinMax { .. } | State::Quantile { .. } | State::Cdf { .. } => 1,
            State::Ple { edges } | State::PleCdf { edges, .. } => edges.len() - 1,
            State::Ptp { prototypes, .. } => prototypes.len(),
            State::OneHot { categories } => categories.len(),
        }
    }

    /// Training range for min-max encoders.
    pub fn min_max(&self) -> Option<(f64, f64)> {
        match self.state {
            State::MinMax { min, max } => Some((min, max)),
            _ => None,
        }
    }

    /// PLE bin edges (`n_bins + 1` values).
    pub fn bin_edges(&self) -> Option<&[f64]> {
        match &self.state {
            State::Ple { edges } | State::PleCdf { edges, .. } => Some(edges),
            _ => None,
        }
    }

    pub fn prototypes(&self) -> Option<(&[f64], f64)> {
        match &self.state {
            State::Ptp {
                prototypes,
                temperature,
            } => Some((prototypes, *temperature)),
            _ => None,
        }
    }

    pub fn categories(&self) -> Option<&[String]> {
        match &self.state {
            State::OneHot { categories } => Some(categories),
            _ => None,
        }
    }

    /// Encodes values into an `n × output_dim` matrix. Only the randomized
    /// kinds draw from `rng`.
    pub fn encode<R: Rng + ?Sized>(&self, values: Values<'_>, rng: &mut R) -> Result<Matrix> {
        let n = values.len();
        let dim = self.output_dim();
        let mut out = Matrix::zeros(n, dim);
        match (&self.state, values) {
            (State::OneHot { categories }, Values::Categorical { codes, vocab }) => {
                let same = vocab == categories.as_slice();
                let lookup: HashMap<&str, usize> = if same {
                    HashMap::new()
                } else {
                    categories
                        .iter()
                        .enumerate()
                        .map(|(i, s)| (s.as_str(), i))
                        .collect()
                };
                for (i, &c) in codes.iter().enumerate() {
                    let slot = if same {
                        c as usize
                    } else {
                        let name = vocab
                            .get(c as usize)
                            .ok_or_else(|| Error::UnseenCategory(format!("#{c}")))?;
                        *lookup
                            .get(name.as_str())
                            .ok_or_else(|| Error::UnseenCategory(name.clone()))?
                    };
                    out.set(i, slot, 1.0);
                }
            }
            (State::OneHot { .. }, Values::Numeric(_)) | (_, Values::Categorical { .. }) => {
                return Err(Error::Encoder(format!(
                    "{} encoder got a column of the wrong kind",
                    self.kind.name()
                )))
            }
            (state, Values::Numeric(xs)) => {
                for (i, &x) in xs.iter().enumerate() {
                    let row = out.row_mut(i);
                    match state {
                        State::MinMax { min, max } => {
                            row[0] = if max > min {
                                ((x - min) / (max - min)).clamp(0.0, 1.0)
                            } else {
                                0.5
                            };
                        }
                        State::Quantile { sorted } => row[0] = midrank(sorted, x),
                        State::Cdf { sorted } => row[0] = randomized_pit(sorted, x, rng),
                        State::Ple { edges } => ple_vector(edges, x, row),
                        State::PleCdf { edges, components } => {
                            ple_vector(edges, x, row);
                            for (v, sorted) in row.iter_mut().zip(components) {
                                *v = randomized_pit(sorted, *v, rng);
                            }
                        }
                        State::Ptp {
                            prototypes,
                            temperature,
                        } => ptp_weights(prototypes, *temperature, x, row),
                        State::OneHot { .. } => unreachable!(),
                    }
                }
            }
        }
        Ok(out)
    }

    /// Maps encoded rows back to raw values. Inputs are clamped into each
    /// kind's valid range first, so arbitrary generator outputs decode.
    pub fn decode(&self, m: &Matrix) -> Result<Decoded> {
        if m.n_cols() != self.output_dim() {
            return Err(Error::Encoder(format!(
                "decode expects width {}, got {}",
                self.output_dim(),
                m.n_cols()
            )));
        }
        if let State::OneHot { .. } = self.state {
            return Ok(Decoded::Categorical(
                m.rows().map(|r| argmax(r) as u32).collect(),
            ));
        }
        let mut buf = vec![0.0; self.output_dim()];
        let out = m
            .rows()
            .map(|row| match &self.state {
                State::MinMax { min, max } => {
                    if max > min {
                        min + row[0].clamp(0.0, 1.0) * (max - min)
                    } else {
                        *min
                    }
                }
                State::Quantile { sorted } | State::Cdf { sorted } => {
                    empirical_quantile(sorted, row[0])
                }
                State::Ple { edges } => ple_invert(edges, row),
                State::PleCdf { edges, components } => {
                    for ((b, &u), sorted) in buf.iter_mut().zip(row).zip(components) {
                        *b = empirical_quantile(sorted, u);
                    }
                    ple_invert(edges, &buf)
                }
                State::Ptp {
                    prototypes,
                    temperature,
                } => ptp_invert(prototypes, *temperature, row),
                State::OneHot { .. } => unreachable!(),
            })
            .collect();
        Ok(Decoded::Numeric(out))
    }

    /// Versioned text form for persisting fitted pipelines.
    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(&Persisted {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            encoder: self.clone(),
        })
        .expect("encoder state is always serializable")
    }

    pub fn from_text(text: &str) -> Result<FittedEncoder> {
        let p: Persisted = serde_json::from_str(text)?;
        if p.format != FORMAT_NAME || p.version != FORMAT_VERSION {
            return Err(Error::Encoder(format!(
                "unsupported encoder format {} v{}",
                p.format, p.version
            )));
        }
        Ok(p.encoder)
    }
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn ple_edges(sorted: &[f64], n_bins: usize) -> Vec<f64> {
    (0..=n_bins)
        .map(|j| quantile_sorted(sorted, j as f64 / n_bins as f64))
        .collect()
}

/// Component `t` is 1 above bin `t`, 0 below it, and the linear fraction inside.
fn ple_vector(edges: &[f64], x: f64, out: &mut [f64]) {
    for (t, v) in out.iter_mut().enumerate() {
        let (lo, hi) = (edges[t], edges[t + 1]);
        *v = if x >= hi {
            1.0
        } else if x < lo {
            0.0
        } else {
            (x - lo) / (hi - lo)
        };
    }
}

fn ple_invert(edges: &[f64], row: &[f64]) -> f64 {
    let clamped = |v: f64| v.clamp(0.0, 1.0);
    if let Some(t) = row.iter().rposition(|&v| {
        let v = clamped(v);
        v > 0.0 && v < 1.0
    }) {
        let (lo, hi) = (edges[t], edges[t + 1]);
        return lo + clamped(row[t]) * (hi - lo);
    }
    let ones = row.iter().filter(|&&v| clamped(v) >= 1.0).count();
    edges[ones]
}

fn count_less(sorted: &[f64], x: f64) -> usize {
    sorted.partition_point(|&v| v < x)
}

fn count_le(sorted: &[f64], x: f64) -> usize {
    sorted.partition_point(|&v| v <= x)
}

fn midrank(sorted: &[f64], x: f64) -> f64 {
    let n = sorted.len() as f64;
    (count_less(sorted, x) + count_le(sorted, x)) as f64 / (2.0 * n)
}

/// `u = F(x-) + V·(F(x) − F(x-))` with `V ~ U(0,1)`; values outside the
/// training range land in the outer `1/(n+1)` slivers.
fn randomized_pit<R: Rng + ?Sized>(sorted: &[f64], x: f64, rng: &mut R) -> f64 {
    let n = sorted.len();
    let v: f64 = rng.sample(Open01);
    if x < sorted[0] {
        return v / (n + 1) as f64;
    }
    if x > sorted[n - 1] {
        return (n as f64 + v) / (n + 1) as f64;
    }
    let lt = count_less(sorted, x) as f64;
    let le = count_le(sorted, x) as f64;
    (lt + v * (le - lt)) / n as f64
}

/// Empirical quantile function `Q(u) = x_(⌈u·n⌉)`.
fn empirical_quantile(sorted: &[f64], u: f64) -> f64 {
    let n = sorted.len();
    let k = (u.clamp(0.0, 1.0) * n as f64).ceil() as usize;
    sorted[k.saturating_sub(1).min(n - 1)]
}

fn default_temperature(prototypes: &[f64]) -> f64 {
    let mut gaps: Vec<f64> = prototypes.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(f64::total_cmp);
    let median = crate::dataset::median_sorted(&gaps);
    if median > 0.0 {
        return median;
    }
    let positive: Vec<f64> = gaps.into_iter().filter(|&g| g > 0.0).collect();
    if positive.is_empty() {
        1.0
    } else {
        crate::dataset::median_sorted(&positive)
    }
}

fn ptp_weights(prototypes: &[f64], temperature: f64, x: f64, out: &mut [f64]) {
    let mut max_logit = f64::NEG_INFINITY;
    for (o, &p) in out.iter_mut().zip(prototypes) {
        *o = -(x - p).abs() / temperature;
        max_logit = max_logit.max(*o);
    }
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max_logit).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Inverts the prototype weights. Between adjacent distinct prototypes `a < b`
/// the log-ratio of their weights is linear in `x`, so one of the two pairs
/// bracketing the heaviest prototype recovers `x` exactly; the pair whose
/// solution re-encodes closest to `row` wins.
fn ptp_invert(prototypes: &[f64], temperature: f64, row: &[f64]) -> f64 {
    const TINY: f64 = 1e-300;
    // first index of every distinct prototype value
    let mut distinct: Vec<usize> = Vec::with_capacity(prototypes.len());
    for (i, &p) in prototypes.iter().enumerate() {
        if distinct.last().map_or(true, |&j| prototypes[j] < p) {
            distinct.push(i);
        }
    }
    let weight = |i: usize| row[i].max(TINY);
    let k = (0..distinct.len())
        .fold(0, |best, d| if weight(distinct[d]) > weight(distinct[best]) { d } else { best });
    let solve = |a: usize, b: usize| {
        let (pa, pb) = (prototypes[a], prototypes[b]);
        (0.5 * (pa + pb - temperature * (weight(a).ln() - weight(b).ln()))).clamp(pa, pb)
    };
    let mut candidates = vec![prototypes[distinct[k]]];
    if k > 0 {
        candidates.push(solve(distinct[k - 1], distinct[k]));
    }
    if k + 1 < distinct.len() {
        candidates.push(solve(distinct[k], distinct[k + 1]));
    }
    let mut scratch = vec![0.0; prototypes.len()];
    let mut misfit = |x: f64| {
        ptp_weights(prototypes, temperature, x, &mut scratch);
        scratch.iter().zip(row).map(|(w, r)| (w - r).abs()).fold(0.0, f64::max)
    };
    let mut best = (misfit(candidates[0]), candidates[0]);
    for &x in &candidates[1..] {
        let e = misfit(x);
        if e < best.0 {
            best = (e, x);
        }
    }
    best.1
}

/// Index of the largest value, ties to the lowest index.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetTransformKind {
    Standardize,
    MedianCut,
    Dummy,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetTransform {
    pub kind: TargetTransformKind,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

impl TargetTransform {
    pub fn fit(kind: TargetTransformKind, target: &[f64]) -> Result<TargetTransform> {
        let mut tt = TargetTransform {
            kind,
            mean: 0.0,
            std: 1.0,
            median: 0.0,
        };
        match kind {
            TargetTransformKind::Standardize => {
                if target.is_empty() {
                    return Err(Error::Encoder("empty target".into()));
                }
                let n = target.len() as f64;
                tt.mean = target.iter().sum::<f64>() / n;
                tt.std = (target.iter().map(|y| (y - tt.mean).powi(2)).sum::<f64>() / n).sqrt();
                if tt.std == 0.0 {
                    return Err(Error::Encoder(
                        "cannot standardize a constant target".into(),
                    ));
                }
            }
            TargetTransformKind::MedianCut => {
                if target.is_empty() {
                    return Err(Error::Encoder("empty target".into()));
                }
                let mut s = target.to_vec();
                s.sort_by(f64::total_cmp);
                tt.median = crate::dataset::median_sorted(&s);
            }
            TargetTransformKind::Dummy | TargetTransformKind::Identity => {}
        }
        Ok(tt)
    }

    pub fn apply(&self, target: &[f64]) -> Vec<f64> {
        match self.kind {
            TargetTransformKind::Standardize => {
                target.iter().map(|y| (y - self.mean) / self.std).collect()
            }
            TargetTransformKind::MedianCut => target
                .iter()
                .map(|&y| if y <= self.median { 0.0 } else { 1.0 })
                .collect(),
            TargetTransformKind::Dummy => vec![0.0; target.len()],
            TargetTransformKind::Identity => target.to_vec(),
        }
    }

    /// Inverse for the invertible kinds (standardize and identity).
    pub fn invert(&self, encoded: &[f64]) -> Option<Vec<f64>> {
        match self.kind {
            TargetTransformKind::Standardize => {
                Some(encoded.iter().map(|z| z * self.std + self.mean).collect())
            }
            TargetTransformKind::Identity => Some(encoded.to_vec()),
            _ => None,
        }
    }
}

/// Fits `kind` on `target` and applies it.
pub fn transform_target(kind: TargetTransformKind, target: &[f64]) -> Result<Vec<f64>> {
    Ok(TargetTransform::fit(kind, target)?.apply(target))
}

/// One encoder per column of a table: `numeric` for numeric columns and
/// one-hot for categoricals. Columns can be excluded.
#[derive(Debug, Clone)]
pub struct TableEncoder {
    columns: Vec<usize>,
    encoders: Vec<FittedEncoder>,
}

impl TableEncoder {
    pub fn fit(table: &Table, numeric: EncoderKind, columns: &[usize]) -> Result<TableEncoder> {
        let encoders = columns
            .iter()
            .map(|&j| {
                let col = table.column(j);
                let kind = match col {
                    Column::Numeric(_) => numeric,
                    Column::Categorical { .. } => EncoderKind::OneHot,
                };
                fit_encoder(kind, col.into())
            })
            .collect::<Result<_>>()?;
        Ok(TableEncoder {
            columns: columns.to_vec(),
            encoders,
        })
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn encoders(&self) -> &[FittedEncoder] {
        &self.encoders
    }

    pub fn output_dim(&self) -> usize {
        self.encoders.iter().map(FittedEncoder::output_dim).sum()
    }

    /// Column offsets of each encoder's block in the encoded matrix.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.encoders
            .iter()
            .map(|e| {
                let o = acc;
                acc += e.output_dim();
                o
            })
            .collect()
    }

    pub fn encode<R: Rng + ?Sized>(&self, table: &Table, rng: &mut R) -> Result<Matrix> {
        let blocks = self
            .columns
            .iter()
            .zip(&self.encoders)
            .map(|(&j, e)| e.encode(table.column(j).into(), rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Matrix::hstack(&blocks))
    }

    /// Decodes each block back into a column of `template`'s schema.
    pub fn decode_columns(&self, m: &Matrix, template: &Table) -> Result<Vec<(usize, Column)>> {
        let offsets = self.offsets();
        self.columns
            .iter()
            .zip(&self.encoders)
            .zip(offsets)
            .map(|((&j, e), off)| {
                let block = m.slice_cols(off, e.output_dim());
                let col = match (e.decode(&block)?, template.column(j)) {
                    (Decoded::Numeric(v), Column::Numeric(_)) => Column::Numeric(v),
                    (Decoded::Categorical(codes), Column::Categorical { vocab, .. }) => {
                        Column::Categorical {
                            codes,
                            vocab: Arc::clone(vocab),
                        }
                    }
                    _ => return Err(Error::Encoder("decoded kind mismatch".into())),
                };
                Ok((j, col))
            })
            .collect()
    }
}
