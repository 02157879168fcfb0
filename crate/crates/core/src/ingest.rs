//! Reading synchronized multivariate streams from CSV.
//!
//! The table layout is a header `t,<name1>,...,<namen>` followed by one row
//! per period. The first column is carried as opaque metadata; the logical
//! step index is always the 0-based data row position.

use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::symbol::Vocabulary;

/// One synchronized row of readings.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVector {
    pub t: u64,
    pub values: Vec<f64>,
    /// Raw text of the time column, if present.
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    /// Replace blank cells with the previous row's value in that column.
    pub fill_forward: bool,
}

/// Raw rows of a `t,...` table. Shared by the numeric and event readers.
pub(crate) struct RawTable<R: Read> {
    names: Vec<String>,
    records: csv::StringRecordsIntoIter<R>,
    row: usize,
}

impl<R: Read> RawTable<R> {
    pub(crate) fn new(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 2 {
            return Err(Error::Header(
                "expected a time column followed by at least one stream column".into(),
            ));
        }
        let names = header.iter().skip(1).map(str::to_string).collect();
        Ok(RawTable {
            names,
            records: rdr.into_records(),
            row: 0,
        })
    }

    pub(crate) fn names(&self) -> &[String] {
        &self.names
    }
}

pub(crate) struct RawRow {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub time: String,
    pub cells: Vec<String>,
}

impl<R: Read> Iterator for RawTable<R> {
    type Item = Result<RawRow>;

    fn next(&mut self) -> Option<Self::Item> {
        let rec = self.records.next()?;
        self.row += 1;
        let row = self.row;
        Some(match rec {
            Err(e) => Err(Error::Row {
                row,
                message: e.to_string(),
            }),
            Ok(rec) => {
                if rec.len() != self.names.len() + 1 {
                    Err(Error::Row {
                        row,
                        message: format!(
                            "expected {} columns, found {}",
                            self.names.len() + 1,
                            rec.len()
                        ),
                    })
                } else {
                    let mut it = rec.iter();
                    let time = it.next().unwrap_or_default().to_string();
                    Ok(RawRow {
                        row,
                        time,
                        cells: it.map(str::to_string).collect(),
                    })
                }
            }
        })
    }
}

/// Sequential iterator of context vectors over one table.
pub struct StreamTable<R: Read> {
    vocab: Vocabulary,
    raw: RawTable<R>,
    options: IngestOptions,
    last: Option<Vec<f64>>,
    next_t: u64,
    failed: bool,
}

impl<R: Read> StreamTable<R> {
    pub fn from_reader(reader: R, expected_n: usize, options: IngestOptions) -> Result<Self> {
        if expected_n == 0 {
            return Err(Error::InvalidParameter("expected_n must be positive".into()));
        }
        let raw = RawTable::new(reader)?;
        if raw.names().len() != expected_n {
            return Err(Error::Dimension {
                expected: expected_n,
                got: raw.names().len(),
            });
        }
        let vocab = Vocabulary::new(raw.names().to_vec())?;
        Ok(StreamTable {
            vocab,
            raw,
            options,
            last: None,
            next_t: 0,
            failed: false,
        })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn convert(&mut self, raw: RawRow) -> Result<ContextVector> {
        let mut values = Vec::with_capacity(raw.cells.len());
        for (col, cell) in raw.cells.iter().enumerate() {
            if cell.is_empty() {
                match (&self.last, self.options.fill_forward) {
                    (Some(prev), true) => values.push(prev[col]),
                    (None, true) => {
                        return Err(Error::Row {
                            row: raw.row,
                            message: format!(
                                "missing value in column `{}` with no earlier value to carry forward",
                                self.vocab.names()[col]
                            ),
                        })
                    }
                    (_, false) => {
                        return Err(Error::Row {
                            row: raw.row,
                            message: format!("missing value in column `{}`", self.vocab.names()[col]),
                        })
                    }
                }
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Row {
                row: raw.row,
                message: format!("malformed number `{cell}` in column `{}`", self.vocab.names()[col]),
            })?;
            values.push(v);
        }
        self.last = Some(values.clone());
        let t = self.next_t;
        self.next_t += 1;
        Ok(ContextVector {
            t,
            values,
            timestamp: (!raw.time.is_empty()).then_some(raw.time),
        })
    }
}

impl StreamTable<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>, expected_n: usize, options: IngestOptions) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file), expected_n, options)
    }
}

impl<R: Read> Iterator for StreamTable<R> {
    type Item = Result<ContextVector>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let raw = match self.raw.next()? {
            Ok(raw) => raw,
            Err(e) => {
                self.failed = true;
                return Some(Err(e));
            }
        };
        let out = self.convert(raw);
        if out.is_err() {
            self.failed = true;
        }
        Some(out)
    }
}

/// Opens a numeric stream table, checking it has `expected_n` value columns.
pub fn open_stream_table(
    path: impl AsRef<Path>,
    expected_n: usize,
    options: IngestOptions,
) -> Result<StreamTable<BufReader<File>>> {
    StreamTable::open(path, expected_n, options)
}

/// Number of value columns declared by a table's header.
pub fn peek_width(path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(RawTable::new(BufReader::new(file))?.names().len())
}

/// Reads a whole numeric table into memory.
pub fn read_stream_table(
    path: impl AsRef<Path>,
    options: IngestOptions,
) -> Result<(Vocabulary, Vec<ContextVector>)> {
    let n = peek_width(path.as_ref())?;
    let table = StreamTable::open(path, n, options)?;
    let vocab = table.vocabulary().clone();
    let rows = table.collect::<Result<Vec<_>>>()?;
    Ok((vocab, rows))
}

/// Writes context vectors in the table format. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_stream_table<W: Write>(
    mut out: W,
    vocab: &Vocabulary,
    rows: &[ContextVector],
) -> io::Result<()> {
    write!(out, "t")?;
    for name in vocab.names() {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for cv in rows {
        write!(out, "{}", cv.t)?;
        for v in &cv.values {
            write!(out, ",{v:?}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
