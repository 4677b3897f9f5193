//! Comma-separated numeric tables with a header line. Values are written in
//! shortest round-trip form, so parsing a written table gives back the same
//! bits.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{EitError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self { header: header.iter().map(|s| s.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(EitError::DimensionMismatch(format!(
                "row has {} entries, header has {}",
                row.len(),
                self.header.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    s.push(',');
                }
                write!(s, "{v:?}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| EitError::Parse("empty table".into()))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| EitError::Parse(format!("row {}: {e}: {s:?}", k + 1))))
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != header.len() {
                return Err(EitError::Parse(format!("row {} has {} fields, expected {}", k + 1, row.len(), header.len())));
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_csv())?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip_keeps_special_values() {
        let mut t = Table::new(&["a", "b", "c"]);
        t.push(vec![0.1, -1e-300, f64::NAN]).unwrap();
        t.push(vec![1.0 / 3.0, f64::INFINITY, 0.0]).unwrap();
        let back = Table::parse(&t.to_csv()).unwrap();
        assert_eq!(back.header, t.header);
        assert_eq!(back.rows[1], t.rows[1]);
        assert!(back.rows[0][2].is_nan());
        assert!(t.push(vec![1.0]).is_err());
        assert!(Table::parse("a,b\n1,x\n").is_err());
    }

    proptest! {
        #[test]
        fn bits_survive(values in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL, 1..20)) {
            let mut t = Table::new(&["v"]);
            for v in &values {
                t.push(vec![*v]).unwrap();
            }
            let back = Table::parse(&t.to_csv()).unwrap();
            prop_assert_eq!(back.column("v").unwrap(), values);
        }
    }
}
