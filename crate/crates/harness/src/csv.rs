//! CSV tables with one leading `#` metadata line and a header row.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            meta: Vec::new(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// Values use 10 significant digits in scientific notation.
    pub fn render(&self) -> String {
        let mut s = String::from("#");
        for (k, v) in &self.meta {
            let _ = write!(s, " {k}={v}");
        }
        s.push('\n');
        s.push_str(&self.header.join(","));
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.9e}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}
