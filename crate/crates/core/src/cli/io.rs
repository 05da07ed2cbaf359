//! Bag files, model documents and CSV tables.
//!
//! A bag file holds one JSON record per line:
//! `{"id": "...", "y": 0.5 | null, "params": {"theta": [...], "s": 0.1}, "points": [[...], ...]}`
//! where `params` is optional. All points in a file share one dimension.
//!
//! A model document is a single JSON object with the scheme, λ, both kernel specs,
//! the coefficients and the full training bags (prediction needs their points, so
//! model files grow with the training data).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{Bag, BagRecord};
use crate::error::{Error, Result};
use crate::solver::CoefficientModel;

pub const MODEL_FORMAT: &str = "distreg-model/1";

pub fn parse_bags(reader: impl BufRead) -> Result<Vec<Bag>> {
    let mut bags: Vec<Bag> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: BagRecord = serde_json::from_str(&line)
            .map_err(|e| Error::input(format!("bag file line {}: {e}", lineno + 1)))?;
        let bag = Bag::try_from(record)
            .map_err(|e| Error::input(format!("bag file line {}: {e}", lineno + 1)))?;
        if let Some(first) = bags.first() {
            if first.dim() != bag.dim() {
                return Err(Error::input(format!(
                    "bag file line {}: dimension {} differs from the file's dimension {}",
                    lineno + 1,
                    bag.dim(),
                    first.dim()
                )));
            }
        }
        bags.push(bag);
    }
    Ok(bags)
}

pub fn read_bags(path: &Path) -> Result<Vec<Bag>> {
    parse_bags(BufReader::new(File::open(path)?))
}

pub fn write_bags_to(mut w: impl Write, bags: &[Bag]) -> Result<()> {
    for bag in bags {
        let line = serde_json::to_string(&BagRecord::from(bag.clone()))
            .map_err(|e| Error::input(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bags(path: &Path, bags: &[Bag]) -> Result<()> {
    write_bags_to(BufWriter::new(File::create(path)?), bags)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub kernel_fingerprint: String,
    #[serde(flatten)]
    pub model: CoefficientModel,
}

pub fn write_model(path: &Path, model: &CoefficientModel) -> Result<()> {
    let doc = ModelDocument {
        format: MODEL_FORMAT.into(),
        kernel_fingerprint: model.kernel.fingerprint(),
        model: model.clone(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| Error::input(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<CoefficientModel> {
    let doc: ModelDocument = serde_json::from_reader(BufReader::new(File::open(path)?))
        .map_err(|e| Error::input(format!("model file {}: {e}", path.display())))?;
    if doc.format != MODEL_FORMAT {
        return Err(Error::input(format!(
            "unsupported model format '{}'",
            doc.format
        )));
    }
    if doc.kernel_fingerprint != doc.model.kernel.fingerprint() {
        return Err(Error::input(
            "model file kernel fingerprint does not match its kernel specs",
        ));
    }
    doc.model.validate()?;
    Ok(doc.model)
}

/// Writes a CSV table; floats are formatted with `Display`, which round-trips exactly.
pub fn write_csv(
    mut w: impl Write,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(&mut w);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    csv.write_record(header).map_err(io)?;
    for row in rows {
        csv.write_record(&row).map_err(io)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_csv_file(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    write_csv(BufWriter::new(File::create(path)?), header, rows)
}
