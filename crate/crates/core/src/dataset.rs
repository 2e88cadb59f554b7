//! Typed tabular datasets: CSV ingestion, canonical CSV output, 3-fold splits
//! and stratified subsampling.
//!
//! A [`Table`] is immutable and column-major. Categorical columns store `u32`
//! codes into a vocabulary that is frozen when the table is loaded, so every
//! fold, subsample and synthetic table derived from it shares one encoding
//! space.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    pub is_target: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Binclass,
    Multiclass,
    Regression,
}

impl TaskKind {
    pub fn is_classification(self) -> bool {
        !matches!(self, TaskKind::Regression)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Binclass => "binclass",
            TaskKind::Multiclass => "multiclass",
            TaskKind::Regression => "regression",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binclass" => Ok(TaskKind::Binclass),
            "multiclass" => Ok(TaskKind::Multiclass),
            "regression" => Ok(TaskKind::Regression),
            other => Err(Error::Schema(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical {
        codes: Vec<u32>,
        vocab: Arc<Vec<String>>,
    },
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            Column::Numeric(_) => ColumnKind::Numeric,
            Column::Categorical { .. } => ColumnKind::Categorical,
        }
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match self {
            Column::Numeric(v) => Some(v),
            Column::Categorical { .. } => None,
        }
    }

    pub fn as_codes(&self) -> Option<&[u32]> {
        match self {
            Column::Categorical { codes, .. } => Some(codes),
            Column::Numeric(_) => None,
        }
    }

    pub fn vocab(&self) -> Option<&Arc<Vec<String>>> {
        match self {
            Column::Categorical { vocab, .. } => Some(vocab),
            Column::Numeric(_) => None,
        }
    }

    pub fn take(&self, idx: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(idx.iter().map(|&i| v[i]).collect()),
            Column::Categorical { codes, vocab } => Column::Categorical {
                codes: idx.iter().map(|&i| codes[i]).collect(),
                vocab: Arc::clone(vocab),
            },
        }
    }

    /// Same kind and, for categoricals, the same vocabulary.
    pub fn compatible_with(&self, other: &Column) -> bool {
        match (self, other) {
            (Column::Numeric(_), Column::Numeric(_)) => true,
            (Column::Categorical { vocab: a, .. }, Column::Categorical { vocab: b, .. }) => {
                Arc::ptr_eq(a, b) || a == b
            }
            _ => false,
        }
    }

    fn cmp_cells(&self, i: usize, j: usize) -> Ordering {
        match self {
            Column::Numeric(v) => v[i].total_cmp(&v[j]),
            Column::Categorical { codes, .. } => codes[i].cmp(&codes[j]),
        }
    }

    fn format_cell(&self, i: usize) -> String {
        match self {
            Column::Numeric(v) => format!("{}", v[i]),
            Column::Categorical { codes, vocab } => vocab[codes[i] as usize].clone(),
        }
    }
}

/// Immutable typed table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    name: String,
    schema: Arc<Vec<ColumnSchema>>,
    task: TaskKind,
    columns: Vec<Column>,
    n_rows: usize,
}

impl Table {
    /// Builds a table, checking the structural invariants: matching column
    /// kinds and lengths, unique non-empty names, at most one target, finite
    /// numerics, in-vocabulary codes and at least one row.
    pub fn new(
        name: impl Into<String>,
        schema: Arc<Vec<ColumnSchema>>,
        task: TaskKind,
        columns: Vec<Column>,
    ) -> Result<Table> {
        validate_schema(&schema)?;
        if schema.len() != columns.len() {
            return Err(Error::Schema(format!(
                "{} schema entries for {} columns",
                schema.len(),
                columns.len()
            )));
        }
        let n_rows = columns.first().map_or(0, Column::len);
        if n_rows == 0 {
            return Err(Error::TooFewRows { needed: 1, got: 0 });
        }
        for (col, spec) in columns.iter().zip(schema.iter()) {
            if col.kind() != spec.kind {
                return Err(Error::Schema(format!(
                    "column `{}` declared {:?} but holds {:?} data",
                    spec.name,
                    spec.kind,
                    col.kind()
                )));
            }
            if col.len() != n_rows {
                return Err(Error::Schema(format!(
                    "column `{}` has {} rows, expected {n_rows}",
                    spec.name,
                    col.len()
                )));
            }
            match col {
                Column::Numeric(v) => {
                    if let Some(row) = v.iter().position(|x| !x.is_finite()) {
                        return Err(Error::Schema(format!(
                            "column `{}` row {row} is not finite",
                            spec.name
                        )));
                    }
                }
                Column::Categorical { codes, vocab } => {
                    if let Some(&c) = codes.iter().find(|&&c| c as usize >= vocab.len()) {
                        return Err(Error::Schema(format!(
                            "column `{}` code {c} outside a vocabulary of {}",
                            spec.name,
                            vocab.len()
                        )));
                    }
                }
            }
        }
        if let Some(t) = schema.iter().find(|c| c.is_target) {
            if task == TaskKind::Regression && t.kind != ColumnKind::Numeric {
                return Err(Error::Schema(format!(
                    "regression target `{}` must be numeric",
                    t.name
                )));
            }
            if task.is_classification() && t.kind != ColumnKind::Categorical {
                return Err(Error::Schema(format!(
                    "classification target `{}` must be categorical",
                    t.name
                )));
            }
        }
        Ok(Table {
            name: name.into(),
            schema,
            task,
            columns,
            n_rows,
        })
    }

    /// A new table with this table's name, schema and task.
    pub fn with_columns(&self, columns: Vec<Column>) -> Result<Table> {
        for (c, own) in columns.iter().zip(&self.columns) {
            if !c.compatible_with(own) {
                return Err(Error::SchemaMismatch(
                    "column kinds or vocabularies differ".into(),
                ));
            }
        }
        Table::new(self.name.clone(), Arc::clone(&self.schema), self.task, columns)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn schema(&self) -> &[ColumnSchema] {
        &self.schema
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> &Column {
        &self.columns[i]
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|c| c.name == name)
    }

    pub fn target_index(&self) -> Option<usize> {
        self.schema.iter().position(|c| c.is_target)
    }

    pub fn feature_indices(&self) -> Vec<usize> {
        (0..self.n_cols())
            .filter(|&i| !self.schema[i].is_target)
            .collect()
    }

    /// Target class codes for classification tables.
    pub fn target_codes(&self) -> Option<&[u32]> {
        self.target_index().and_then(|t| self.columns[t].as_codes())
    }

    pub fn n_classes(&self) -> Option<usize> {
        self.target_index()
            .and_then(|t| self.columns[t].vocab())
            .map(|v| v.len())
    }

    pub fn take(&self, idx: &[usize]) -> Table {
        Table {
            name: self.name.clone(),
            schema: Arc::clone(&self.schema),
            task: self.task,
            columns: self.columns.iter().map(|c| c.take(idx)).collect(),
            n_rows: idx.len(),
        }
    }

    /// Stacks rows of tables sharing this schema.
    pub fn concat(tables: &[&Table]) -> Result<Table> {
        let first = tables
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
        for t in &tables[1..] {
            first.check_same_schema(t)?;
        }
        let columns = (0..first.n_cols())
            .map(|j| match &first.columns[j] {
                Column::Numeric(_) => Column::Numeric(
                    tables
                        .iter()
                        .flat_map(|t| t.columns[j].as_numeric().unwrap().iter().copied())
                        .collect(),
                ),
                Column::Categorical { vocab, .. } => Column::Categorical {
                    codes: tables
                        .iter()
                        .flat_map(|t| t.columns[j].as_codes().unwrap().iter().copied())
                        .collect(),
                    vocab: Arc::clone(vocab),
                },
            })
            .collect();
        first.with_columns(columns)
    }

    /// Same column names, kinds, target flag and vocabularies.
    pub fn check_same_schema(&self, other: &Table) -> Result<()> {
        if self.schema.len() != other.schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} columns vs {}",
                self.schema.len(),
                other.schema.len()
            )));
        }
        for (j, (a, b)) in self.schema.iter().zip(other.schema.iter()).enumerate() {
            if a != b {
                return Err(Error::SchemaMismatch(format!(
                    "column {j}: `{}` vs `{}`",
                    a.name, b.name
                )));
            }
            if !self.columns[j].compatible_with(&other.columns[j]) {
                return Err(Error::SchemaMismatch(format!(
                    "column `{}` has different categories",
                    a.name
                )));
            }
        }
        if self.task != other.task {
            return Err(Error::SchemaMismatch(format!(
                "task {} vs {}",
                self.task, other.task
            )));
        }
        Ok(())
    }

    /// Lexicographic comparison of two rows, cell by cell.
    pub fn cmp_rows(&self, i: usize, j: usize) -> Ordering {
        for col in &self.columns {
            let o = col.cmp_cells(i, j);
            if o != Ordering::Equal {
                return o;
            }
        }
        Ordering::Equal
    }

    /// Row indices sorted by content; equal rows keep their relative order.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.n_rows).collect();
        idx.sort_by(|&a, &b| self.cmp_rows(a, b));
        idx
    }

    pub fn row_strings(&self, i: usize) -> Vec<String> {
        self.columns.iter().map(|c| c.format_cell(i)).collect()
    }

    /// Writes the canonical CSV form (header plus shortest round-trip floats).
    pub fn write_csv_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.schema.iter().map(|c| c.name.as_str()))?;
        for i in 0..self.n_rows {
            w.write_record(self.row_strings(i))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(std::io::BufWriter::new(file))
    }

    /// Schema file text accepted by [`load_csv`].
    pub fn schema_text(&self) -> String {
        let mut s = format!("task = \"{}\"\n", self.task);
        if let Some(t) = self.target_index() {
            s.push_str(&format!("target = {}\n", toml_quote(&self.schema[t].name)));
        }
        s.push_str("\n[columns]\n");
        for c in self.schema.iter() {
            let kind = match c.kind {
                ColumnKind::Numeric => "numeric",
                ColumnKind::Categorical => "categorical",
            };
            s.push_str(&format!("{} = \"{kind}\"\n", toml_quote(&c.name)));
        }
        s
    }

    pub fn write_schema(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.schema_text()).map_err(|e| Error::io(path, e))
    }
}

fn toml_quote(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn validate_schema(schema: &[ColumnSchema]) -> Result<()> {
    let mut seen = HashSet::new();
    for c in schema {
        if c.name.is_empty() {
            return Err(Error::Schema("empty column name".into()));
        }
        if !seen.insert(c.name.as_str()) {
            return Err(Error::DuplicateHeader {
                column: c.name.clone(),
            });
        }
    }
    if schema.iter().filter(|c| c.is_target).count() > 1 {
        return Err(Error::Schema("more than one target column".into()));
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    task: TaskKind,
    #[serde(default)]
    target: Option<String>,
    columns: BTreeMap<String, ColumnKind>,
}

/// Ingestion switches.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Fill missing numeric cells with the column median instead of failing.
    pub impute_median: bool,
}

const MISSING_TOKENS: [&str; 6] = ["", "na", "nan", "null", "none", "?"];

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    MISSING_TOKENS.iter().any(|m| t.eq_ignore_ascii_case(m))
}

pub fn load_csv(path: impl AsRef<Path>, schema_path: impl AsRef<Path>) -> Result<Table> {
    load_csv_with(path, schema_path, LoadOptions::default())
}

pub fn load_csv_with(
    path: impl AsRef<Path>,
    schema_path: impl AsRef<Path>,
    opts: LoadOptions,
) -> Result<Table> {
    let path = path.as_ref();
    let schema_path = schema_path.as_ref();
    let schema_src = fs::read_to_string(schema_path).map_err(|e| Error::io(schema_path, e))?;
    let decl: SchemaFile = toml::from_str(&schema_src)
        .map_err(|e| Error::Schema(format!("{}: {e}", schema_path.display())))?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(&text, &decl, &name, opts).map_err(|e| match e {
        Error::EmptyFile { .. } => Error::EmptyFile {
            path: path.to_path_buf(),
        },
        other => other,
    })
}

fn parse_csv(text: &str, decl: &SchemaFile, name: &str, opts: LoadOptions) -> Result<Table> {
    if text.trim().is_empty() {
        return Err(Error::EmptyFile {
            path: name.into(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(Error::DuplicateHeader { column: h.clone() });
        }
    }
    for h in &headers {
        if !decl.columns.contains_key(h) {
            return Err(Error::UndeclaredColumn { column: h.clone() });
        }
    }
    for c in decl.columns.keys() {
        if !seen.contains(c.as_str()) {
            return Err(Error::MissingColumn { column: c.clone() });
        }
    }
    if let Some(t) = &decl.target {
        if !decl.columns.contains_key(t) {
            return Err(Error::MissingColumn { column: t.clone() });
        }
    }

    let kinds: Vec<ColumnKind> = headers.iter().map(|h| decl.columns[h]).collect();
    let mut numeric: Vec<Vec<Option<f64>>> = vec![Vec::new(); headers.len()];
    let mut raw_cats: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        for (j, cell) in record.iter().enumerate() {
            match kinds[j] {
                ColumnKind::Numeric => {
                    if is_missing(cell) {
                        if !opts.impute_median {
                            return Err(Error::MissingValue {
                                row,
                                column: headers[j].clone(),
                            });
                        }
                        numeric[j].push(None);
                    } else {
                        let v: f64 = cell.trim().parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(
                            || Error::UnparseableNumeric {
                                row,
                                column: headers[j].clone(),
                                value: cell.to_string(),
                            },
                        )?;
                        numeric[j].push(Some(v));
                    }
                }
                ColumnKind::Categorical => raw_cats[j].push(cell.trim().to_string()),
            }
        }
    }

    let mut columns = Vec::with_capacity(headers.len());
    for (j, kind) in kinds.iter().enumerate() {
        match kind {
            ColumnKind::Numeric => {
                let cells = std::mem::take(&mut numeric[j]);
                let fill = if cells.iter().any(Option::is_none) {
                    let mut present: Vec<f64> = cells.iter().flatten().copied().collect();
                    if present.is_empty() {
                        return Err(Error::Schema(format!(
                            "column `{}` has no values to impute from",
                            headers[j]
                        )));
                    }
                    present.sort_by(f64::total_cmp);
                    median_sorted(&present)
                } else {
                    0.0
                };
                columns.push(Column::Numeric(
                    cells.into_iter().map(|c| c.unwrap_or(fill)).collect(),
                ));
            }
            ColumnKind::Categorical => {
                let cells = std::mem::take(&mut raw_cats[j]);
                let vocab: Vec<String> = cells
                    .iter()
                    .cloned()
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let lookup: HashMap<&str, u32> = vocab
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (s.as_str(), i as u32))
                    .collect();
                let codes = cells.iter().map(|s| lookup[s.as_str()]).collect();
                columns.push(Column::Categorical {
                    codes,
                    vocab: Arc::new(vocab),
                });
            }
        }
    }
    let schema: Vec<ColumnSchema> = headers
        .iter()
        .zip(&kinds)
        .map(|(h, &kind)| ColumnSchema {
            name: h.clone(),
            kind,
            is_target: decl.target.as_deref() == Some(h.as_str()),
        })
        .collect();
    let table = Table::new(name, Arc::new(schema), decl.task, columns)?;
    check_task(&table)?;
    Ok(table)
}

fn check_task(table: &Table) -> Result<()> {
    if table.task() == TaskKind::Binclass {
        if let Some(codes) = table.target_codes() {
            let distinct: BTreeSet<u32> = codes.iter().copied().collect();
            if distinct.len() != 2 {
                return Err(Error::Schema(format!(
                    "binclass target has {} distinct values",
                    distinct.len()
                )));
            }
        }
    }
    Ok(())
}

/// Reads a CSV produced for `template`'s schema (for example a synthetic sample
/// written by an external generator), mapping categories onto the template's
/// frozen vocabularies.
pub fn load_csv_like(path: impl AsRef<Path>, template: &Table) -> Result<Table> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut positions = Vec::with_capacity(template.n_cols());
    for spec in template.schema() {
        let p = headers
            .iter()
            .position(|h| *h == spec.name)
            .ok_or_else(|| Error::MissingColumn {
                column: spec.name.clone(),
            })?;
        positions.push(p);
    }
    let lookups: Vec<Option<HashMap<&str, u32>>> = template
        .columns()
        .iter()
        .map(|c| {
            c.vocab().map(|v| {
                v.iter()
                    .enumerate()
                    .map(|(i, s)| (s.as_str(), i as u32))
                    .collect()
            })
        })
        .collect();
    let mut nums: Vec<Vec<f64>> = vec![Vec::new(); template.n_cols()];
    let mut codes: Vec<Vec<u32>> = vec![Vec::new(); template.n_cols()];
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        for (j, &p) in positions.iter().enumerate() {
            let cell = record.get(p).unwrap_or("").trim();
            let column = &template.schema()[j].name;
            match &lookups[j] {
                None => nums[j].push(cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(
                    || Error::UnparseableNumeric {
                        row: r + 1,
                        column: column.clone(),
                        value: cell.to_string(),
                    },
                )?),
                Some(map) => codes[j].push(*map.get(cell).ok_or_else(|| Error::UnknownCategory {
                    row: r + 1,
                    column: column.clone(),
                    value: cell.to_string(),
                })?),
            }
        }
    }
    let columns = template
        .columns()
        .iter()
        .enumerate()
        .map(|(j, c)| match c {
            Column::Numeric(_) => Column::Numeric(std::mem::take(&mut nums[j])),
            Column::Categorical { vocab, .. } => Column::Categorical {
                codes: std::mem::take(&mut codes[j]),
                vocab: Arc::clone(vocab),
            },
        })
        .collect();
    template.with_columns(columns)
}

pub(crate) fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// One of the three cross-validation splits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

impl FoldSplit {
    pub fn train(&self, table: &Table) -> Table {
        table.take(&self.train_idx)
    }

    pub fn val(&self, table: &Table) -> Table {
        table.take(&self.val_idx)
    }

    pub fn test(&self, table: &Table) -> Table {
        table.take(&self.test_idx)
    }
}

pub const N_FOLDS: usize = 3;

/// Three folds with rotating test thirds; the remaining two thirds are split
/// 75/25 into train and validation.
pub fn make_folds(table: &Table, seed: u64) -> Result<Vec<FoldSplit>> {
    make_folds_with(table, seed, false)
}

/// Like [`make_folds`]; with `stratify`, classification rows are dealt
/// round-robin by class so every split keeps the class balance.
pub fn make_folds_with(table: &Table, seed: u64, stratify: bool) -> Result<Vec<FoldSplit>> {
    let n = table.n_rows();
    if n < 6 {
        return Err(Error::TooFewRows { needed: 6, got: n });
    }
    let mut rng = rng::stream(seed, &format!("folds/{}", table.name()));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let classes = if stratify { table.target_codes() } else { None };
    let parts: Vec<Vec<usize>> = match classes {
        Some(codes) => {
            order.sort_by_key(|&i| codes[i]);
            (0..N_FOLDS)
                .map(|k| order.iter().skip(k).step_by(N_FOLDS).copied().collect())
                .collect()
        }
        None => {
            let base = n / N_FOLDS;
            let extra = n % N_FOLDS;
            let mut start = 0;
            (0..N_FOLDS)
                .map(|k| {
                    let len = base + usize::from(k < extra);
                    let part = order[start..start + len].to_vec();
                    start += len;
                    part
                })
                .collect()
        }
    };

    let folds = (0..N_FOLDS)
        .map(|k| {
            let rest: Vec<usize> = (0..N_FOLDS)
                .filter(|&j| j != k)
                .flat_map(|j| parts[j].iter().copied())
                .collect();
            let (train_idx, val_idx) = if classes.is_some() {
                let codes = classes.unwrap();
                let mut rest = rest;
                rest.sort_by_key(|&i| codes[i]);
                let mut train = Vec::new();
                let mut val = Vec::new();
                for (p, &i) in rest.iter().enumerate() {
                    if p % 4 == 3 {
                        val.push(i);
                    } else {
                        train.push(i);
                    }
                }
                (train, val)
            } else {
                let n_train = (3 * rest.len() + 2) / 4;
                (rest[..n_train].to_vec(), rest[n_train..].to_vec())
            };
            FoldSplit {
                fold_index: k,
                train_idx,
                val_idx,
                test_idx: parts[k].clone(),
            }
        })
        .collect();
    Ok(folds)
}

/// Row indices of a seeded subsample of size `n`. Classification tables keep
/// class proportions (largest-remainder quotas, so each class is within one
/// row of its exact share); regression tables are sampled uniformly.
pub fn stratified_subsample_indices(table: &Table, n: usize, seed: u64) -> Result<Vec<usize>> {
    let total = table.n_rows();
    if n == 0 || n > total {
        return Err(Error::InvalidArgument(format!(
            "subsample size {n} outside 1..={total}"
        )));
    }
    let mut rng = rng::stream(seed, "subsample");
    let mut picked = match (table.task().is_classification(), table.target_codes()) {
        (true, Some(codes)) => {
            let k = table.n_classes().unwrap_or(0);
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
            for (i, &c) in codes.iter().enumerate() {
                members[c as usize].push(i);
            }
            let quotas = largest_remainder(
                &members.iter().map(Vec::len).collect::<Vec<_>>(),
                n,
            );
            let mut picked = Vec::with_capacity(n);
            for (m, q) in members.iter_mut().zip(quotas) {
                m.shuffle(&mut rng);
                picked.extend_from_slice(&m[..q]);
            }
            picked
        }
        _ => {
            let mut all: Vec<usize> = (0..total).collect();
            all.shuffle(&mut rng);
            all.truncate(n);
            all
        }
    };
    picked.shuffle(&mut rng);
    Ok(picked)
}

pub fn stratified_subsample(table: &Table, n: usize, seed: u64) -> Result<Table> {
    Ok(table.take(&stratified_subsample_indices(table, n, seed)?))
}

/// Splits `n` proportionally to `counts` by the largest-remainder method; ties
/// in the remainder go to the lower index.
pub(crate) fn largest_remainder(counts: &[usize], n: usize) -> Vec<usize> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0; counts.len()];
    }
    let mut quotas: Vec<usize> = counts.iter().map(|&c| c * n / total).collect();
    let mut assigned: usize = quotas.iter().sum();
    let mut by_remainder: Vec<usize> = (0..counts.len()).collect();
    // remainder numerators are exact integers: (c * n) mod total
    by_remainder.sort_by_key(|&i| std::cmp::Reverse((counts[i] * n) % total));
    for &i in by_remainder.iter().cycle().take(counts.len() * 2) {
        if assigned >= n {
            break;
        }
        if quotas[i] < counts[i] {
            quotas[i] += 1;
            assigned += 1;
        }
    }
    quotas
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decl(src: &str) -> SchemaFile {
        toml::from_str(src).unwrap()
    }

    const SCHEMA: &str = r#"
task = "binclass"
target = "y"
[columns]
age = "numeric"
job = "categorical"
y = "categorical"
"#;

    #[test]
    fn parses_small_table() {
        let csv = "age,job,y\n30,clerk,no\n41,chef,yes\n25,clerk,no\n";
        let t = parse_csv(csv, &decl(SCHEMA), "tiny", LoadOptions::default()).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.feature_indices().len(), 2);
        assert_eq!(t.target_index(), Some(2));
        assert_eq!(t.column(0).as_numeric().unwrap(), &[30.0, 41.0, 25.0]);
        assert_eq!(t.column(1).vocab().unwrap().as_slice(), &["chef", "clerk"]);
    }

    #[test]
    fn distinct_error_kinds() {
        let d = decl(SCHEMA);
        let opts = LoadOptions::default();
        let bad = parse_csv("age,job,y\nabc,clerk,no\n1,a,yes\n", &d, "t", opts).unwrap_err();
        match bad {
            Error::UnparseableNumeric { row, column, value } => {
                assert_eq!((row, column.as_str(), value.as_str()), (1, "age", "abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_csv("age,age,y\n1,2,no\n", &d, "t", opts),
            Err(Error::DuplicateHeader { .. })
        ));
        assert!(matches!(
            parse_csv("age,y\n1,no\n", &d, "t", opts),
            Err(Error::MissingColumn { .. })
        ));
        assert!(matches!(
            parse_csv("  \n", &d, "t", opts),
            Err(Error::EmptyFile { .. })
        ));
        assert!(matches!(
            parse_csv("age,job,y\n,a,no\n2,b,yes\n", &d, "t", opts),
            Err(Error::MissingValue { row: 1, .. })
        ));
    }

    #[test]
    fn median_imputation() {
        let csv = "age,job,y\n,a,no\n2,b,yes\n4,b,no\n";
        let t = parse_csv(csv, &decl(SCHEMA), "t", LoadOptions { impute_median: true }).unwrap();
        assert_eq!(t.column(0).as_numeric().unwrap(), &[3.0, 2.0, 4.0]);
    }

    #[test]
    fn binclass_needs_two_classes() {
        let csv = "age,job,y\n1,a,no\n2,b,no\n";
        assert!(parse_csv(csv, &decl(SCHEMA), "t", LoadOptions::default()).is_err());
    }

    fn numeric_table(n: usize) -> Table {
        let schema = vec![ColumnSchema {
            name: "x".into(),
            kind: ColumnKind::Numeric,
            is_target: false,
        }];
        Table::new(
            "nums",
            Arc::new(schema),
            TaskKind::Regression,
            vec![Column::Numeric((0..n).map(|i| i as f64).collect())],
        )
        .unwrap()
    }

    #[test]
    fn twelve_row_fold_sizes() {
        let folds = make_folds(&numeric_table(12), 0).unwrap();
        for f in &folds {
            assert_eq!((f.train_idx.len(), f.val_idx.len(), f.test_idx.len()), (6, 2, 4));
        }
        assert_eq!(folds, make_folds(&numeric_table(12), 0).unwrap());
        assert!(make_folds(&numeric_table(5), 0).is_err());
    }

    #[test]
    fn adult_scale_fold_sizes() {
        let folds = make_folds(&numeric_table(48842), 0).unwrap();
        for f in &folds {
            assert!(f.train_idx.len().abs_diff(24421) <= 1, "{}", f.train_idx.len());
            assert!(f.val_idx.len().abs_diff(8140) <= 1);
            assert!(f.test_idx.len().abs_diff(16281) <= 1);
        }
    }

    #[test]
    fn largest_remainder_sums() {
        assert_eq!(largest_remainder(&[90, 10], 100), vec![90, 10]);
        assert_eq!(largest_remainder(&[1, 1, 1], 2), vec![1, 1, 0]);
        assert_eq!(largest_remainder(&[5, 3], 8).iter().sum::<usize>(), 8);
    }
}
