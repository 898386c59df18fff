use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::value::{Value, ValueKind};

/// Rows prior to encoding, in source column order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl RawTable {
    pub fn append(&mut self, other: &RawTable) -> Result<()> {
        if other.columns != self.columns {
            let mut a = self.columns.clone();
            let mut b = other.columns.clone();
            a.sort();
            b.sort();
            if a != b {
                return Err(Error::Schema(format!(
                    "column set changed for {}: {:?} -> {:?}",
                    self.name, self.columns, other.columns
                )));
            }
            let idx: Vec<usize> =
                self.columns.iter().map(|c| other.columns.iter().position(|o| o == c).unwrap()).collect();
            self.rows.extend(other.rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()));
            return Ok(());
        }
        self.rows.extend(other.rows.iter().cloned());
        Ok(())
    }
}

/// Reads a CSV file with a header row; the table is named after the file stem.
pub fn read_csv(path: &Path, delimiter: u8) -> Result<RawTable> {
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Ingest(format!("cannot derive table name from {}", path.display())))?
        .to_string();
    let file = std::fs::File::open(path)?;
    read_csv_from(file, &name, delimiter)
}

pub fn read_csv_from<R: Read>(reader: R, name: &str, delimiter: u8) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().delimiter(delimiter).has_headers(true).from_reader(reader);
    let columns: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if columns.is_empty() || columns.iter().any(String::is_empty) {
        return Err(Error::Ingest(format!("{name}: missing or blank header")));
    }
    let mut cells: Vec<Vec<String>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        cells.push(rec.iter().map(str::to_string).collect());
    }
    let kinds: Vec<ValueKind> = (0..columns.len()).map(|c| infer_kind(&cells, c)).collect();
    let rows = cells
        .iter()
        .map(|r| {
            r.iter()
                .zip(&kinds)
                .map(|(cell, &k)| Value::parse_cell(cell, k).expect("kind inferred from these cells"))
                .collect()
        })
        .collect();
    Ok(RawTable { name: name.to_string(), columns, rows })
}

fn infer_kind(cells: &[Vec<String>], col: usize) -> ValueKind {
    let present = || cells.iter().map(|r| r[col].as_str()).filter(|s| !s.is_empty());
    if present().all(|s| s.parse::<i64>().is_ok()) {
        ValueKind::Int
    } else if present().all(|s| s.parse::<f64>().is_ok()) {
        ValueKind::Float
    } else {
        ValueKind::Str
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_and_nulls() {
        let data = "id;x;s\n1;0.5;a\n2;;b\n;3;\n";
        let t = read_csv_from(data.as_bytes(), "t", b';').unwrap();
        assert_eq!(t.columns, ["id", "x", "s"]);
        assert_eq!(t.rows[0], vec![Value::Int(1), Value::Float(0.5), Value::Str("a".into())]);
        assert_eq!(t.rows[1][1], Value::Null);
        assert_eq!(t.rows[2][0], Value::Null);
        assert_eq!(t.rows[2][2], Value::Null);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(read_csv_from("a,b\n1,2\n3\n".as_bytes(), "t", b',').is_err());
    }

    #[test]
    fn append_reorders_columns() {
        let mut a = read_csv_from("a,b\n1,2\n".as_bytes(), "t", b',').unwrap();
        let b = read_csv_from("b,a\n4,3\n".as_bytes(), "t", b',').unwrap();
        a.append(&b).unwrap();
        assert_eq!(a.rows[1], vec![Value::Int(3), Value::Int(4)]);
        let c = read_csv_from("a,c\n1,2\n".as_bytes(), "t", b',').unwrap();
        assert!(matches!(a.append(&c), Err(Error::Schema(_))));
    }
}
