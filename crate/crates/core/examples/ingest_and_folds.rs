//! Load a CSV with its schema file and split it into the three
//! train/validation/test folds used everywhere else.
//!
//!     cargo run --example ingest_and_folds [data.csv [data.schema.toml]]
//!
//! Without arguments a mixed-type toy table is written to a temporary
//! directory first.

use std::path::PathBuf;

use tabbench::dataset::{load_csv, make_folds, make_folds_with};
use tabbench::toy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let tmp = tempfile::tempdir()?;
    let (csv, schema) = match args.as_slice() {
        [csv] => (PathBuf::from(csv), PathBuf::from(csv).with_extension("schema.toml")),
        [csv, schema, ..] => (PathBuf::from(csv), PathBuf::from(schema)),
        [] => {
            let t = toy::mixed_census(1200, 0);
            let csv = tmp.path().join("census.csv");
            let schema = tmp.path().join("census.schema.toml");
            t.write_csv(&csv)?;
            t.write_schema(&schema)?;
            println!("schema written for the toy table:\n{}", t.schema_text());
            (csv, schema)
        }
    };

    let table = load_csv(&csv, &schema)?;
    println!("{}: {} rows x {} columns, task {}", table.name(), table.n_rows(), table.n_cols(), table.task());
    for (s, c) in table.schema().iter().zip(table.columns()) {
        let detail = match c.vocab() {
            Some(v) => format!("{} categories", v.len()),
            None => "numeric".to_string(),
        };
        println!("  {:<16} {detail}", s.name);
    }

    for f in make_folds(&table, 42)? {
        println!(
            "fold {}: train {:>5}  val {:>5}  test {:>5}",
            f.fold_index,
            f.train_idx.len(),
            f.val_idx.len(),
            f.test_idx.len()
        );
    }
    if table.task().is_classification() {
        let f = &make_folds_with(&table, 42, true)?[0];
        let share = |idx: &[usize]| {
            let codes = table.target_codes().unwrap();
            idx.iter().filter(|&&i| codes[i] == 1).count() as f64 / idx.len() as f64
        };
        println!(
            "stratified fold 0, class-1 share: train {:.3}  val {:.3}  test {:.3}",
            share(&f.train_idx),
            share(&f.val_idx),
            share(&f.test_idx)
        );
    }
    Ok(())
}
