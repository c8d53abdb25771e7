//! Tiny CSV writer with deterministic float formatting.
//!
//! Floats are written with Rust's shortest-roundtrip formatting, so a file
//! produced from identical numbers is identical byte-for-byte.

use std::fmt::Write as _;

pub struct CsvWriter {
    out: String,
    columns: usize,
}

impl CsvWriter {
    pub fn new(header: &[&str]) -> Self {
        let mut out = String::new();
        out.push_str(&header.join(","));
        out.push('\n');
        CsvWriter { out, columns: header.len() }
    }

    pub fn row(&mut self, cells: &[CsvCell]) {
        assert_eq!(cells.len(), self.columns, "row width mismatch");
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                self.out.push(',');
            }
            match cell {
                CsvCell::Int(v) => {
                    let _ = write!(self.out, "{v}");
                }
                CsvCell::Float(v) => {
                    let _ = write!(self.out, "{v}");
                }
                CsvCell::Str(s) => {
                    debug_assert!(!s.contains(',') && !s.contains('\n'));
                    self.out.push_str(s);
                }
                CsvCell::Empty => {}
            }
        }
        self.out.push('\n');
    }

    pub fn finish(self) -> String {
        self.out
    }
}

pub enum CsvCell<'a> {
    Int(i64),
    Float(f64),
    Str(&'a str),
    Empty,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_stable_rows() {
        let mut w = CsvWriter::new(&["a", "b", "c"]);
        w.row(&[CsvCell::Int(1), CsvCell::Float(0.5), CsvCell::Str("x")]);
        w.row(&[CsvCell::Int(-2), CsvCell::Empty, CsvCell::Str("y")]);
        assert_eq!(w.finish(), "a,b,c\n1,0.5,x\n-2,,y\n");
    }
}
