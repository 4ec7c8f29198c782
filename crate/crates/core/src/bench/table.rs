use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One trained model. Accuracies are percentages. `seconds_per_epoch*`
/// are wall-clock and so not reproducible; every other column is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub architecture: String,
    pub activation: String,
    pub eval_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub seconds_per_epoch: Option<f64>,
    pub seconds_per_epoch_std: Option<f64>,
    pub seed: u64,
    /// Empty unless the experiment failed.
    pub error: String,
}

pub const CSV_HEADER: [&str; 9] = [
    "experiment",
    "architecture",
    "activation",
    "eval_accuracy",
    "test_accuracy",
    "seconds_per_epoch",
    "seconds_per_epoch_std",
    "seed",
    "error",
];

/// Columns excluded from reproducibility comparisons.
pub const TIMING_COLUMNS: [&str; 2] = ["seconds_per_epoch", "seconds_per_epoch_std"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(TableFormat::Markdown),
            "csv" => Ok(TableFormat::Csv),
            other => Err(Error::Parameter(format!("unknown table format '{other}'"))),
        }
    }
}

pub fn render_table(rows: &[ResultRow], format: TableFormat) -> Result<String> {
    match format {
        TableFormat::Csv => render_csv(rows),
        TableFormat::Markdown => Ok(render_markdown(rows)),
    }
}

fn render_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Format {
            what: "results csv",
            reason: format!("unexpected header {header:?}"),
        });
    }
    Ok(r.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?)
}

fn best(rows: &[ResultRow], f: impl Fn(&ResultRow) -> Option<f64>) -> Option<f64> {
    rows.iter().filter_map(f).fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
}

fn render_markdown(rows: &[ResultRow]) -> String {
    let mut out = String::from(
        "| experiment | architecture | activation | eval acc (%) | test acc (%) | s/epoch | seed | error |\n\
         |---|---|---|---:|---:|---:|---:|---|\n",
    );
    let best_eval = best(rows, |r| r.eval_accuracy);
    let best_test = best(rows, |r| r.test_accuracy);
    let acc = |v: Option<f64>, best: Option<f64>| match v {
        Some(v) if Some(v) == best => format!("**{v:.2}**"),
        Some(v) => format!("{v:.2}"),
        None => "-".into(),
    };
    for r in rows {
        let time = match (r.seconds_per_epoch, r.seconds_per_epoch_std) {
            (Some(m), Some(s)) => format!("{m:.2} ± {s:.2}"),
            (Some(m), None) => format!("{m:.2}"),
            _ => "-".into(),
        };
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {} |\n",
            r.experiment,
            r.architecture,
            r.activation,
            acc(r.eval_accuracy, best_eval),
            acc(r.test_accuracy, best_test),
            time,
            r.seed,
            r.error.replace('|', "\\|"),
        ));
    }
    out
}

/// Appends rows to a CSV file, flushing after each one.
pub struct CsvSink {
    writer: csv::Writer<File>,
}

impl CsvSink {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)?;
        writer.write_record(CSV_HEADER)?;
        writer.flush()?;
        Ok(CsvSink { writer })
    }

    pub fn append(&mut self, row: &ResultRow) -> Result<()> {
        self.writer.serialize(row)?;
        self.writer.flush()?;
        Ok(())
    }
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
