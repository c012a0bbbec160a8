//! The response CSV: strict reading and an append-only writer.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use sapgan_core::survey::{validate_responses, SurveyResponse};

use crate::error::{Error, Result};

pub const HEADER: [&str; 11] = [
    "participant_id",
    "native_lang",
    "image_id",
    "source",
    "q1",
    "q2_certainty",
    "q3_aesthetic",
    "q3_composition",
    "q3_clarity",
    "q3_creative",
    "timestamp",
];

/// Parses and validates responses. Errors name the 1-based data row.
pub fn read_responses(reader: impl Read, origin: &Path) -> Result<Vec<SurveyResponse>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::format(origin, e.to_string()))?;
    if header.iter().ne(HEADER) {
        return Err(Error::format(origin, format!("header must be exactly {}", HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<SurveyResponse>().enumerate() {
        out.push(row.map_err(|e| Error::format(origin, format!("row {}: {e}", i + 1)))?);
    }
    validate_responses(&out).map_err(|e| Error::format(origin, e.to_string()))?;
    Ok(out)
}

pub fn load_responses(path: &Path) -> Result<Vec<SurveyResponse>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_responses(file, path)
}

/// Serializes rows, header first.
pub fn to_csv(rows: &[SurveyResponse]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Appends rows to a CSV file, writing the header only when the file is new
/// or empty. Each row is flushed before `append` returns.
#[derive(Debug)]
pub struct ResponseWriter {
    path: PathBuf,
    file: File,
}

impl ResponseWriter {
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
        let empty = file.metadata().map_err(|e| Error::io(path, e))?.len() == 0;
        if empty {
            let mut line = HEADER.join(",");
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        Ok(ResponseWriter { path: path.to_owned(), file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, row: &SurveyResponse) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.serialize(row).map_err(|e| Error::format(&self.path, e.to_string()))?;
        let bytes = w.into_inner().map_err(|e| Error::format(&self.path, e.to_string()))?;
        self.file.write_all(&bytes).and_then(|_| self.file.flush()).map_err(|e| Error::io(&self.path, e))
    }
}
