//! CSV and plain-table rendering with a provenance header.

use std::fmt::Write as _;
use std::io::Write;

use anyhow::Result;
use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Table,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(usize),
    Float(f64),
    Text(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format!("{x:.16e}"),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn table(&self) -> String {
        match self {
            Cell::Float(x) => format!("{x:.8e}"),
            other => other.csv(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Text(if b { "true" } else { "false" }.to_string())
    }
}

/// A rectangular result with `#` comment lines before and after the rows.
#[derive(Debug, Clone, Default)]
pub struct Document {
    pub header: Vec<String>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub footer: Vec<String>,
}

impl Document {
    pub fn new(header: Vec<String>, columns: Vec<&'static str>) -> Self {
        Self {
            header,
            columns,
            ..Self::default()
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write(&self, format: Format, out: &mut dyn Write) -> Result<()> {
        for line in &self.header {
            writeln!(out, "# {line}")?;
        }
        match format {
            Format::Csv => {
                let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut *out);
                w.write_record(&self.columns)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(Cell::csv))?;
                }
                w.flush()?;
            }
            Format::Table => out.write_all(self.render_table().as_bytes())?,
        }
        for line in &self.footer {
            writeln!(out, "# {line}")?;
        }
        out.flush()?;
        Ok(())
    }

    fn render_table(&self) -> String {
        let cells: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(Cell::table).collect()).collect();
        let widths: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| cells.iter().map(|r| r[i].len()).fold(c.len(), usize::max))
            .collect();
        let mut s = String::new();
        let line = |s: &mut String, items: &mut dyn Iterator<Item = &str>| {
            let parts: Vec<String> = items.zip(&widths).map(|(x, w)| format!("{x:>w$}")).collect();
            let _ = writeln!(s, "{}", parts.join("  ").trim_end());
        };
        line(&mut s, &mut self.columns.iter().copied());
        for row in &cells {
            line(&mut s, &mut row.iter().map(String::as_str));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Document {
        let mut d = Document::new(vec!["mlz test".into()], vec!["j", "x", "note"]);
        d.push(vec![1usize.into(), 0.1f64.into(), "a,b".into()]);
        d.push(vec![2usize.into(), (-2.5f64).into(), Cell::Empty]);
        d.footer.push("done".into());
        d
    }

    #[test]
    fn csv_uses_seventeen_digits_and_quotes() {
        let mut buf = Vec::new();
        sample().write(Format::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "# mlz test\nj,x,note\n1,1.0000000000000001e-1,\"a,b\"\n2,-2.5000000000000000e0,\n# done\n"
        );
    }

    #[test]
    fn table_aligns_columns() {
        let mut buf = Vec::new();
        sample().write(Format::Table, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "j              x  note");
        assert_eq!(lines[3], "2  -2.50000000e0");
    }
}
