//! Minimal RFC 4180 CSV tables.

use std::fmt::Display;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::Format(format!(
                "row has {} fields, header has {}",
                row.len(),
                self.header.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Column values of `name`, in row order.
    pub fn column(&self, name: &str) -> Result<Vec<&str>> {
        let k = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("no column '{name}'")))?;
        Ok(self.rows.iter().map(|r| r[k].as_str()).collect())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for row in std::iter::once(&self.header).chain(&self.rows) {
            let line: Vec<String> = row.iter().map(|f| escape(f)).collect();
            out.push_str(&line.join(","));
            out.push_str("\r\n");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut records = parse_records(text)?.into_iter();
        let header = records.next().ok_or_else(|| Error::Format("empty CSV".into()))?;
        let mut table = Self { header, rows: Vec::new() };
        for r in records {
            table.push(r)?;
        }
        Ok(table)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Formats any displayable value as a field.
pub fn field(v: impl Display) -> String {
    v.to_string()
}

fn escape(f: &str) -> String {
    if f.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", f.replace('"', "\"\""))
    } else {
        f.to_string()
    }
}

fn parse_records(text: &str) -> Result<Vec<Vec<String>>> {
    let mut records = Vec::new();
    let mut record = Vec::new();
    let mut cur = String::new();
    let mut chars = text.chars().peekable();
    let mut quoted = false;
    let mut dirty = false;
    while let Some(c) = chars.next() {
        if quoted {
            match c {
                '"' if chars.peek() == Some(&'"') => {
                    chars.next();
                    cur.push('"');
                }
                '"' => quoted = false,
                _ => cur.push(c),
            }
            continue;
        }
        match c {
            '"' if cur.is_empty() => {
                quoted = true;
                dirty = true;
            }
            ',' => {
                record.push(std::mem::take(&mut cur));
                dirty = true;
            }
            '\r' if chars.peek() == Some(&'\n') => {}
            '\n' => {
                record.push(std::mem::take(&mut cur));
                records.push(std::mem::take(&mut record));
                dirty = false;
            }
            _ => {
                cur.push(c);
                dirty = true;
            }
        }
    }
    if quoted {
        return Err(Error::Format("unterminated quoted field".into()));
    }
    if dirty {
        record.push(cur);
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_quoting() {
        let mut t = CsvTable::new(["a", "b"]);
        t.push(vec!["1".into(), "x,y".into()]).unwrap();
        t.push(vec!["say \"hi\"".into(), "line\nbreak".into()]).unwrap();
        let text = t.render();
        assert!(text.starts_with("a,b\r\n1,\"x,y\"\r\n"));
        assert_eq!(CsvTable::parse(&text).unwrap(), t);
        assert!(t.push(vec!["only one".into()]).is_err());
    }

    #[test]
    fn columns_and_errors() {
        let t = CsvTable::parse("n,v\n1,2.5\n2,3.5\n").unwrap();
        assert_eq!(t.column("v").unwrap(), vec!["2.5", "3.5"]);
        assert!(t.column("w").is_err());
        assert!(CsvTable::parse("a\n\"open").is_err());
        assert!(CsvTable::parse("a,b\n1\n").is_err());
    }

    #[test]
    fn floats_round_trip_exactly() {
        for x in [0.1, 1e-300, -2.5e17, std::f64::consts::PI] {
            assert_eq!(field(x).parse::<f64>().unwrap(), x);
        }
    }
}
