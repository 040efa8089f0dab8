//! CSV ingestion that keeps every input row's original bytes, so transformed
//! output can append columns without re-quoting or reformatting anything.

use std::collections::BTreeSet;

use otfair_core::{FairScores, ScoreRecord};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub struct InputTable {
    terminator: &'static [u8],
    header: Vec<u8>,
    rows: Vec<Vec<u8>>,
    pub records: Vec<ScoreRecord>,
}

/// Trims line terminators from both ends. Record positions reported by the
/// reader can land on the `\n` of a preceding `\r\n`.
fn strip_terminator(mut line: &[u8]) -> &[u8] {
    while let Some((&first, rest)) = line.split_first() {
        if first == b'\n' || first == b'\r' {
            line = rest;
        } else {
            break;
        }
    }
    while let Some((&last, rest)) = line.split_last() {
        if last == b'\n' || last == b'\r' {
            line = rest;
        } else {
            break;
        }
    }
    line
}

fn column_index(headers: &[String], name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::validation(format!("column {name:?} not found in header")))
}

/// `row` is the 1-based data row; the file line is one more for the header.
fn row_label(row: usize) -> String {
    format!("row {row} (line {})", row + 1)
}

impl InputTable {
    pub fn parse(bytes: &[u8], cfg: &RunConfig) -> Result<Self> {
        std::str::from_utf8(bytes).map_err(|e| CliError::validation(format!("input is not valid UTF-8: {e}")))?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| CliError::validation(format!("cannot read header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.iter().any(|h| h.starts_with("fair_score")) {
            return Err(CliError::validation("input already has a fair_score column"));
        }
        let distinct: BTreeSet<&String> = headers.iter().collect();
        if distinct.len() != headers.len() {
            return Err(CliError::validation("header has duplicate column names"));
        }
        let id_col = cfg.id_column.as_deref().map(|c| column_index(&headers, c)).transpose()?;
        let score_cols = cfg
            .score_columns
            .iter()
            .map(|c| column_index(&headers, c))
            .collect::<Result<Vec<_>>>()?;
        let group_cols = cfg
            .group_columns
            .iter()
            .map(|c| column_index(&headers, c))
            .collect::<Result<Vec<_>>>()?;

        let mut starts = Vec::new();
        let mut records = Vec::new();
        let mut rec = csv::StringRecord::new();
        loop {
            let row = records.len() + 1;
            match rdr.read_record(&mut rec) {
                Ok(true) => {}
                Ok(false) => break,
                Err(e) => return Err(CliError::validation(format!("{}: {e}", row_label(row)))),
            }
            let pos = rec.position().expect("records read from a reader carry positions");
            starts.push(pos.byte() as usize);

            let field = |col: usize, what: &str| -> Result<&str> {
                let v = rec.get(col).unwrap_or("").trim();
                if v.is_empty() {
                    Err(CliError::validation(format!(
                        "{}: missing value in {what} column {:?}",
                        row_label(row),
                        headers[col]
                    )))
                } else {
                    Ok(v)
                }
            };
            let id = match id_col {
                Some(c) => field(c, "id")?.to_string(),
                None => row.to_string(),
            };
            let group_values = group_cols
                .iter()
                .map(|&c| field(c, "group").map(str::to_string))
                .collect::<Result<Vec<_>>>()?;
            let score = score_cols
                .iter()
                .map(|&c| {
                    let text = field(c, "score")?;
                    match text.parse::<f64>() {
                        Ok(v) if v.is_finite() => Ok(v),
                        _ => Err(CliError::validation(format!(
                            "{}: {text:?} in column {:?} is not a finite decimal number",
                            row_label(row),
                            headers[c]
                        ))),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            records.push(ScoreRecord::new(id, group_values, score));
        }

        let header_end = starts.first().copied().unwrap_or(bytes.len());
        let header_span = &bytes[..header_end];
        let header_text = strip_terminator(header_span);
        let terminator: &'static [u8] = if bytes.get(header_text.len()) == Some(&b'\r') {
            b"\r\n"
        } else {
            b"\n"
        };
        let mut rows = Vec::with_capacity(starts.len());
        for (k, &s) in starts.iter().enumerate() {
            let e = starts.get(k + 1).copied().unwrap_or(bytes.len());
            rows.push(strip_terminator(&bytes[s..e]).to_vec());
        }
        Ok(InputTable {
            terminator,
            header: header_text.to_vec(),
            rows,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// The input with `fair_score` (or `fair_score_1..d`) appended to every
    /// row; everything else is copied byte for byte.
    pub fn render_with(&self, fair: &FairScores) -> Result<Vec<u8>> {
        if fair.len() != self.rows.len() {
            return Err(CliError::Runtime(format!(
                "{} fair scores for {} input rows",
                fair.len(),
                self.rows.len()
            )));
        }
        let d = fair.dimension();
        let mut out = Vec::with_capacity(self.header.len() + self.rows.iter().map(|r| r.len() + 24 * d).sum::<usize>());
        out.extend_from_slice(&self.header);
        if d == 1 {
            out.extend_from_slice(b",fair_score");
        } else {
            for k in 1..=d {
                out.extend_from_slice(format!(",fair_score_{k}").as_bytes());
            }
        }
        out.extend_from_slice(self.terminator);
        for (row, values) in self.rows.iter().zip(fair.iter()) {
            out.extend_from_slice(row);
            for v in values {
                out.push(b',');
                out.extend_from_slice(format_number(*v).as_bytes());
            }
            out.extend_from_slice(self.terminator);
        }
        Ok(out)
    }
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn format_number(v: f64) -> String {
    format!("{v}")
}
