//! Aggregation of evaluation scores: mean ± std per cell, quartile
//! summaries, Friedman ranks with the Nemenyi critical difference, and the
//! files that present them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cost::{write_cost_csv, CostRow};
use crate::error::{Error, Result};

pub const N_FOLDS: usize = 3;
pub const N_SAMPLES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub dataset: String,
    pub model: String,
    pub fold: usize,
    #[serde(rename = "sample")]
    pub sample_index: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, dataset: &str, model: &str, fold: usize, sample_index: usize, metric: &str, value: f64) {
        self.rows.push(ScoreRow {
            dataset: dataset.into(),
            model: model.into(),
            fold,
            sample_index,
            metric: metric.into(),
            value,
        });
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn models(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.model.as_str()).collect()
    }

    pub fn datasets(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.dataset.as_str()).collect()
    }

    pub fn metrics(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.metric.as_str()).collect()
    }

    /// Rows in (dataset, model, fold, sample, metric) order.
    pub fn sorted(&self) -> ScoreTable {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| {
            (&a.dataset, &a.model, a.fold, a.sample_index, &a.metric)
                .cmp(&(&b.dataset, &b.model, b.fold, b.sample_index, &b.metric))
                .then(a.value.total_cmp(&b.value))
        });
        ScoreTable { rows }
    }

    pub fn write_csv_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(["dataset", "model", "fold", "sample", "metric", "value"])?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io("<scores>", e))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(f)
    }

    /// Appends rows, writing the header only when the file is new or empty.
    pub fn append_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(f);
        if fresh {
            w.write_record(["dataset", "model", "fold", "sample", "metric", "value"])?;
        }
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv_from<R: std::io::Read>(input: R) -> Result<ScoreTable> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r.deserialize().collect::<std::result::Result<Vec<ScoreRow>, _>>()?;
        Ok(ScoreTable { rows })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<ScoreTable> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub dataset: String,
    pub model: String,
    pub metric: String,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
    /// Every (fold, sample) cell of the 3 × 5 design is present.
    pub complete: bool,
}

/// Mean and population std per (dataset, model, metric), in key order.
pub fn aggregate(scores: &ScoreTable) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(&str, &str, &str), Vec<&ScoreRow>> = BTreeMap::new();
    for r in &scores.rows {
        groups.entry((&r.dataset, &r.model, &r.metric)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((dataset, model, metric), rows)| {
            let mut values: Vec<f64> = rows.iter().map(|r| r.value).collect();
            values.sort_by(f64::total_cmp);
            let n = values.len() as f64;
            // centred on a member so that equal values give that value exactly
            let pivot = values[0];
            let mean = pivot + values.iter().map(|v| v - pivot).sum::<f64>() / n;
            let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            let cells: BTreeSet<(usize, usize)> = rows.iter().map(|r| (r.fold, r.sample_index)).collect();
            let complete = rows.len() == N_FOLDS * N_SAMPLES
                && (0..N_FOLDS).all(|f| (0..N_SAMPLES).all(|s| cells.contains(&(f, s))));
            Aggregate {
                dataset: dataset.into(),
                model: model.into(),
                metric: metric.into(),
                mean,
                std,
                count: rows.len(),
                complete,
            }
        })
        .collect()
}

/// Percentile `p ∈ [0, 100]` of sorted values, interpolating linearly
/// between the closest order statistics.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of nothing");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 100.0) / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quartiles {
    pub model: String,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub count: usize,
}

/// P25/P50/P75 of `metric` per model over every (dataset, fold, sample).
pub fn quartile_summary(scores: &ScoreTable, metric: &str) -> Vec<Quartiles> {
    let mut by_model: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in scores.rows.iter().filter(|r| r.metric == metric) {
        by_model.entry(&r.model).or_default().push(r.value);
    }
    by_model
        .into_iter()
        .map(|(model, mut v)| {
            v.sort_by(f64::total_cmp);
            Quartiles {
                model: model.into(),
                p25: percentile(&v, 25.0),
                p50: percentile(&v, 50.0),
                p75: percentile(&v, 75.0),
                count: v.len(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Direction {
    LowerBetter,
    HigherBetter,
    /// Best when closest to the given value.
    Closest(f64),
}

impl Direction {
    /// Ranking key where smaller is better.
    fn key(self, x: f64) -> f64 {
        match self {
            Direction::LowerBetter => x,
            Direction::HigherBetter => -x,
            Direction::Closest(t) => (x - t).abs(),
        }
    }

    pub fn for_metric(metric: &str) -> Direction {
        match metric {
            "c2st" => Direction::LowerBetter,
            "dcr_rate" => Direction::Closest(0.5),
            _ => Direction::HigherBetter,
        }
    }
}

/// Nemenyi q at α = 0.05 for k = 2..=10 models: the studentized range
/// quantile divided by √2 (Demšar 2006).
pub const NEMENYI_Q05: [f64; 9] = [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164];

pub fn nemenyi_cd(k: usize, n_blocks: usize) -> Option<f64> {
    if !(2..=10).contains(&k) || n_blocks == 0 {
        return None;
    }
    Some(NEMENYI_Q05[k - 2] * ((k * (k + 1)) as f64 / (6 * n_blocks) as f64).sqrt())
}

/// Ranks 1..=n with ties sharing the average of the ranks they span.
pub fn tie_averaged_ranks(keys: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    let mut ranks = vec![0.0; keys.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && keys[order[j + 1]] == keys[order[i]] {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1
        let avg = (i + j + 2) as f64 / 2.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub metric: String,
    /// `(model, average rank)` in model-name order.
    pub average_ranks: Vec<(String, f64)>,
    pub n_blocks: usize,
    pub friedman_chi2: f64,
    /// `None` outside the tabulated range of k.
    pub critical_difference: Option<f64>,
    /// Model pairs whose average ranks differ by less than the CD.
    pub bridged: Vec<(String, String)>,
}

/// Friedman ranking over (dataset, fold) blocks; a model's value in a
/// block is the mean over its samples there. Every block must hold every
/// model.
pub fn rank_models(scores: &ScoreTable, metric: &str, direction: Direction) -> Result<Ranking> {
    let rows: Vec<&ScoreRow> = scores.rows.iter().filter(|r| r.metric == metric).collect();
    let models: Vec<&str> = rows.iter().map(|r| r.model.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    let k = models.len();
    if k < 2 {
        return Err(Error::Metric(format!("ranking `{metric}` needs at least two models, found {k}")));
    }
    let mut blocks: BTreeMap<(&str, usize), BTreeMap<&str, (f64, usize)>> = BTreeMap::new();
    for r in &rows {
        let cell = blocks.entry((&r.dataset, r.fold)).or_default().entry(&r.model).or_insert((0.0, 0));
        cell.0 += r.value;
        cell.1 += 1;
    }
    let mut rank_sums = vec![0.0; k];
    for ((dataset, fold), cells) in &blocks {
        if cells.len() != k {
            let missing: Vec<&str> = models.iter().copied().filter(|m| !cells.contains_key(m)).collect();
            return Err(Error::Metric(format!(
                "incomplete block ({dataset}, fold {fold}) for `{metric}`: missing {}",
                missing.join(", ")
            )));
        }
        let keys: Vec<f64> = models.iter().map(|m| {
            let (sum, n) = cells[m];
            direction.key(sum / n as f64)
        }).collect();
        for (s, r) in rank_sums.iter_mut().zip(tie_averaged_ranks(&keys)) {
            *s += r;
        }
    }
    let n = blocks.len();
    let avg: Vec<f64> = rank_sums.iter().map(|s| s / n as f64).collect();
    // rank sums are exact halves, so the algebraically equivalent
    // 12/(Nk(k+1))·ΣS² − 3N(k+1) loses nothing before the final division
    let (kf, nf) = (k as f64, n as f64);
    let sum_sq: f64 = rank_sums.iter().map(|s| s * s).sum();
    let friedman_chi2 = (12.0 * sum_sq - 3.0 * nf * nf * kf * (kf + 1.0).powi(2)) / (nf * kf * (kf + 1.0));
    let critical_difference = nemenyi_cd(k, n);
    let mut bridged = Vec::new();
    if let Some(cd) = critical_difference {
        for i in 0..k {
            for j in i + 1..k {
                if (avg[i] - avg[j]).abs() < cd {
                    bridged.push((models[i].to_string(), models[j].to_string()));
                }
            }
        }
    }
    Ok(Ranking {
        metric: metric.into(),
        average_ranks: models.iter().map(|m| m.to_string()).zip(avg).collect(),
        n_blocks: n,
        friedman_chi2,
        critical_difference,
        bridged,
    })
}

/// Which files [`emit_report`] wrote.
#[derive(Debug, Clone, Default)]
pub struct ReportFiles {
    pub paths: Vec<PathBuf>,
}

fn file_safe(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the report for `scores` and `costs` into `out_dir`:
/// `aggregate.csv` and one `dataset_<name>.csv` per dataset (mean ± std),
/// `quartiles.csv`, `cost.csv`, `ranks.csv`, `cd.csv` (Friedman/CD per
/// metric), `cd_pairs.csv`, `summary.md` and, with `svg`, one
/// `cd_<metric>.svg` per ranked metric. Outputs depend only on the inputs'
/// contents, not on row order.
pub fn emit_report(scores: &ScoreTable, costs: &[CostRow], out_dir: impl AsRef<Path>, svg: bool) -> Result<ReportFiles> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let scores = scores.sorted();
    let mut files = ReportFiles::default();
    let mut put = |name: String| {
        let p = out_dir.join(name);
        files.paths.push(p.clone());
        p
    };

    let aggs = aggregate(&scores);
    let agg_header = ["dataset", "model", "metric", "mean", "std", "count", "complete"];
    let agg_row = |a: &Aggregate| {
        vec![
            a.dataset.clone(),
            a.model.clone(),
            a.metric.clone(),
            a.mean.to_string(),
            a.std.to_string(),
            a.count.to_string(),
            a.complete.to_string(),
        ]
    };
    write_rows(&put("aggregate.csv".into()), &agg_header, &aggs.iter().map(agg_row).collect::<Vec<_>>())?;
    for d in scores.datasets() {
        let rows: Vec<Vec<String>> = aggs.iter().filter(|a| a.dataset == d).map(agg_row).collect();
        write_rows(&put(format!("dataset_{}.csv", file_safe(d))), &agg_header, &rows)?;
    }

    let metrics: Vec<&str> = scores.metrics().into_iter().collect();
    let mut quartile_rows = Vec::new();
    let mut per_metric_quartiles = Vec::new();
    for m in &metrics {
        per_metric_quartiles.push((*m, quartile_summary(&scores, m)));
    }
    for model in scores.models() {
        for (m, qs) in &per_metric_quartiles {
            if let Some(q) = qs.iter().find(|q| q.model == model) {
                quartile_rows.push(vec![
                    model.to_string(),
                    m.to_string(),
                    q.p25.to_string(),
                    q.p50.to_string(),
                    q.p75.to_string(),
                    q.count.to_string(),
                ]);
            }
        }
    }
    write_rows(&put("quartiles.csv".into()), &["model", "metric", "p25", "p50", "p75", "count"], &quartile_rows)?;

    let mut costs = costs.to_vec();
    costs.sort_by(|a, b| (&a.model, &a.dataset).cmp(&(&b.model, &b.dataset)));
    write_cost_csv(&costs, put("cost.csv".into()))?;

    let mut rankings = Vec::new();
    let mut unranked = Vec::new();
    for m in &metrics {
        match rank_models(&scores, m, Direction::for_metric(m)) {
            Ok(r) => rankings.push(r),
            Err(e) => unranked.push((m.to_string(), e.to_string())),
        }
    }
    let mut rank_rows = Vec::new();
    let mut cd_rows = Vec::new();
    let mut pair_rows = Vec::new();
    for r in &rankings {
        for (model, avg) in &r.average_ranks {
            rank_rows.push(vec![r.metric.clone(), model.clone(), avg.to_string()]);
        }
        cd_rows.push(vec![
            r.metric.clone(),
            r.average_ranks.len().to_string(),
            r.n_blocks.to_string(),
            r.friedman_chi2.to_string(),
            r.critical_difference.map(|c| c.to_string()).unwrap_or_default(),
        ]);
        for (a, b) in &r.bridged {
            pair_rows.push(vec![r.metric.clone(), a.clone(), b.clone()]);
        }
    }
    write_rows(&put("ranks.csv".into()), &["metric", "model", "average_rank"], &rank_rows)?;
    write_rows(
        &put("cd.csv".into()),
        &["metric", "n_models", "n_blocks", "friedman_chi2", "critical_difference"],
        &cd_rows,
    )?;
    write_rows(&put("cd_pairs.csv".into()), &["metric", "model_a", "model_b"], &pair_rows)?;

    let summary = render_summary(&aggs, &per_metric_quartiles, &costs, &rankings, &unranked);
    let p = put("summary.md".into());
    std::fs::write(&p, summary).map_err(|e| Error::io(&p, e))?;

    if svg {
        for r in rankings.iter().filter(|r| r.critical_difference.is_some()) {
            let p = put(format!("cd_{}.svg", file_safe(&r.metric)));
            std::fs::write(&p, cd_diagram_svg(r)).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(files)
}

fn render_summary(
    aggs: &[Aggregate],
    quartiles: &[(&str, Vec<Quartiles>)],
    costs: &[CostRow],
    rankings: &[Ranking],
    unranked: &[(String, String)],
) -> String {
    let mut s = String::from("# Benchmark summary\n");
    let datasets: BTreeSet<&str> = aggs.iter().map(|a| a.dataset.as_str()).collect();
    for d in datasets {
        let rows: Vec<&Aggregate> = aggs.iter().filter(|a| a.dataset == d).collect();
        let metrics: Vec<&str> = rows.iter().map(|a| a.metric.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
        let models: BTreeSet<&str> = rows.iter().map(|a| a.model.as_str()).collect();
        let _ = write!(s, "\n## Dataset `{d}` (mean ± std)\n\n| model | {} |\n|---|", metrics.join(" | "));
        s.push_str(&"---|".repeat(metrics.len()));
        s.push('\n');
        for model in models {
            let _ = write!(s, "| {model} |");
            for m in &metrics {
                match rows.iter().find(|a| a.model == model && a.metric == *m) {
                    Some(a) => {
                        let flag = if a.complete { "" } else { " (incomplete)" };
                        let _ = write!(s, " {:.3} ± {:.3}{flag} |", a.mean, a.std);
                    }
                    None => s.push_str(" – |"),
                }
            }
            s.push('\n');
        }
    }
    for (metric, qs) in quartiles {
        let _ = write!(s, "\n## Quartiles of `{metric}`\n\n| model | P25 | P50 | P75 | n |\n|---|---|---|---|---|\n");
        for q in qs {
            let _ = writeln!(s, "| {} | {:.3} | {:.3} | {:.3} | {} |", q.model, q.p25, q.p50, q.p75, q.count);
        }
    }
    for r in rankings {
        let cd = r.critical_difference.map_or("n/a".to_string(), |c| format!("{c:.3}"));
        let _ = write!(
            s,
            "\n## Ranks on `{}`\n\nFriedman χ² = {:.3} over {} blocks; Nemenyi CD (α = 0.05) = {cd}\n\n| model | average rank |\n|---|---|\n",
            r.metric, r.friedman_chi2, r.n_blocks
        );
        for (m, avg) in &r.average_ranks {
            let _ = writeln!(s, "| {m} | {avg:.3} |");
        }
    }
    for (metric, why) in unranked {
        let _ = writeln!(s, "\nNo ranking for `{metric}`: {why}");
    }
    if !costs.is_empty() {
        s.push_str("\n## Tuning cost\n\n| model | dataset | device seconds | energy (kWh) | emissions (kg CO2) |\n|---|---|---|---|---|\n");
        for c in costs {
            let _ = writeln!(
                s,
                "| {} | {} | {:.1} | {:.6} | {:.6} |",
                c.model, c.dataset, c.device_seconds, c.kwh, c.co2_kg
            );
        }
    }
    s
}

/// Critical-difference diagram: models placed on a 1..k rank axis, the CD
/// drawn as a bar, and each bridged pair joined by a thick line.
pub fn cd_diagram_svg(r: &Ranking) -> String {
    let k = r.average_ranks.len().max(2);
    let (left, right, width) = (120.0, 120.0, 640.0);
    let axis_y = 70.0;
    let scale = (width - left - right) / (k - 1) as f64;
    let x = |rank: f64| left + (rank - 1.0) * scale;
    let mut order: Vec<&(String, f64)> = r.average_ranks.iter().collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let height = axis_y + 40.0 + 22.0 * order.len() as f64 + 14.0 * r.bridged.len() as f64;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(s, "<text x=\"{left}\" y=\"16\">{}</text>", r.metric);
    let _ = writeln!(s, "<line x1=\"{}\" y1=\"{axis_y}\" x2=\"{}\" y2=\"{axis_y}\" stroke=\"black\"/>", x(1.0), x(k as f64));
    for t in 1..=k {
        let tx = x(t as f64);
        let _ = writeln!(s, "<line x1=\"{tx}\" y1=\"{axis_y}\" x2=\"{tx}\" y2=\"{}\" stroke=\"black\"/>", axis_y - 6.0);
        let _ = writeln!(s, "<text x=\"{tx}\" y=\"{}\" text-anchor=\"middle\">{t}</text>", axis_y - 10.0);
    }
    if let Some(cd) = r.critical_difference {
        let _ = writeln!(
            s,
            "<line x1=\"{}\" y1=\"30\" x2=\"{}\" y2=\"30\" stroke=\"black\" stroke-width=\"2\"/>\n<text x=\"{}\" y=\"26\" text-anchor=\"middle\">CD = {cd:.3}</text>",
            x(1.0),
            x(1.0) + cd * scale,
            x(1.0) + cd * scale / 2.0
        );
    }
    let half = order.len().div_ceil(2);
    for (i, (model, rank)) in order.iter().enumerate() {
        let y = axis_y + 24.0 + 22.0 * i as f64;
        let (lx, anchor) = if i < half { (left - 8.0, "end") } else { (width - right + 8.0, "start") };
        let _ = writeln!(
            s,
            "<polyline points=\"{rx},{axis_y} {rx},{y} {lx},{y}\" fill=\"none\" stroke=\"black\"/>\n<text x=\"{tx}\" y=\"{ty}\" text-anchor=\"{anchor}\">{model} ({rank:.2})</text>",
            rx = x(*rank),
            tx = if anchor == "end" { lx - 4.0 } else { lx + 4.0 },
            ty = y + 4.0
        );
    }
    let base = axis_y + 30.0 + 22.0 * order.len() as f64;
    let pos: BTreeMap<&str, f64> = r.average_ranks.iter().map(|(m, v)| (m.as_str(), *v)).collect();
    for (i, (a, b)) in r.bridged.iter().enumerate() {
        let (ra, rb) = (pos[a.as_str()], pos[b.as_str()]);
        let y = base + 14.0 * i as f64;
        let _ = writeln!(
            s,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"black\" stroke-width=\"4\"/>",
            x(ra.min(rb)) - 3.0,
            x(ra.max(rb)) + 3.0
        );
    }
    s.push_str("</svg>\n");
    s
}
