//! CSV and JSON reading/writing shared by the subcommands.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use bliss_core::scoring::ScoreRecord;
use serde::Serialize;

use crate::error::{invalid, CliResult};

pub const SCORE_HEADER: [&str; 6] = ["sample_id", "score", "argmin_class", "ic_min", "et_at_argmin", "topk_dict_ids"];

/// A file when `path` is given, stdout otherwise.
pub fn sink(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_scores(out: Box<dyn Write>, records: &[ScoreRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCORE_HEADER)?;
    for r in records {
        w.write_record([
            r.sample_id.clone(),
            r.score.to_string(),
            r.argmin_class.clone(),
            opt(r.ic_min()),
            opt(r.et_at_argmin()),
            r.topk_dict_ids.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `(sample_id, score)` pairs of a scores CSV, in file order.
pub fn read_scores(path: &Path) -> CliResult<Vec<(String, f64)>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| invalid(format!("{}: missing column {name:?}", path.display())))
    };
    let (id, score) = (col("sample_id")?, col("score")?);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let value: f64 = rec[score]
            .parse()
            .map_err(|_| invalid(format!("{}: bad score {:?}", path.display(), &rec[score])))?;
        rows.push((rec[id].to_owned(), value));
    }
    Ok(rows)
}

/// `sample_id,label` rows; label is 1 (anomaly) or 0 (normal).
pub fn read_labels(path: &Path) -> CliResult<HashMap<String, bool>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut labels = HashMap::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(invalid(format!("{}: expected sample_id,label rows", path.display())));
        }
        let flag = match rec[1].trim() {
            "1" => true,
            "0" => false,
            other => return Err(invalid(format!("{}: label must be 0 or 1, got {other:?}", path.display()))),
        };
        if labels.insert(rec[0].to_owned(), flag).is_some() {
            return Err(invalid(format!("{}: sample {:?} labelled twice", path.display(), &rec[0])));
        }
    }
    Ok(labels)
}

/// Looks up the label of every id, failing on the first unlabelled one.
pub fn align_labels(ids: impl IntoIterator<Item = impl AsRef<str>>, labels: &HashMap<String, bool>) -> CliResult<Vec<bool>> {
    ids.into_iter()
        .map(|id| {
            let id = id.as_ref();
            labels.get(id).copied().ok_or_else(|| invalid(format!("no label for sample {id:?}")))
        })
        .collect()
}

pub fn write_labels(path: &Path, ids: &[String], anomaly: &[bool]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sample_id", "label"])?;
    for (id, &a) in ids.iter().zip(anomaly) {
        w.write_record([id.as_str(), if a { "1" } else { "0" }])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(mut out: Box<dyn Write>, value: &impl Serialize) -> CliResult<()> {
    serde_json::to_writer_pretty(&mut out, value).map_err(bliss_core::Error::from)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}
