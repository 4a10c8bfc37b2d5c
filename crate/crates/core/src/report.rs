//! Tabular reports rendered as aligned text or CSV.

use crate::error::Result;
use crate::scenario::ReportFormat;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(title: impl Into<String>, headers: &[&str]) -> Self {
        Self {
            title: title.into(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    /// Right-aligned columns, first column left-aligned.
    pub fn render_text(&self) -> String {
        let widths: Vec<usize> = (0..self.headers.len())
            .map(|i| {
                self.rows
                    .iter()
                    .map(|r| r[i].chars().count())
                    .chain(std::iter::once(self.headers[i].chars().count()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            parts.join("  ").trim_end().to_string()
        };
        let rule = "-".repeat(widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1));
        let mut out = String::new();
        if !self.title.is_empty() {
            out.push_str(&self.title);
            out.push('\n');
        }
        out.push_str(&line(&self.headers));
        out.push('\n');
        out.push_str(&rule);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }

    pub fn render_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub title: String,
    pub tables: Vec<Table>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            ..Self::default()
        }
    }

    pub fn note(&mut self, n: impl Into<String>) {
        self.notes.push(n.into());
    }

    /// Text: title, tables, then notes. CSV: one block per table, each led by
    /// a `# title` line; notes become `# ` lines at the end.
    pub fn render(&self, format: ReportFormat) -> Result<String> {
        let mut out = String::new();
        match format {
            ReportFormat::Table => {
                out.push_str(&self.title);
                out.push_str("\n\n");
                for t in &self.tables {
                    out.push_str(&t.render_text());
                    out.push('\n');
                }
                for n in &self.notes {
                    out.push_str(n);
                    out.push('\n');
                }
            }
            ReportFormat::Csv => {
                for (i, t) in self.tables.iter().enumerate() {
                    if i > 0 {
                        out.push('\n');
                    }
                    out.push_str(&format!("# {}\n", if t.title.is_empty() { &self.title } else { &t.title }));
                    out.push_str(&t.render_csv()?);
                }
                for n in &self.notes {
                    out.push_str(&format!("# {n}\n"));
                }
            }
        }
        Ok(out)
    }
}

/// Seconds as milliseconds with one decimal; `inf` when unbounded.
pub fn ms(seconds: f64) -> String {
    if seconds.is_finite() {
        format!("{:.1}", seconds * 1000.0)
    } else {
        "inf".into()
    }
}

/// Dollars as thousands with two decimals.
pub fn kusd(dollars: f64) -> String {
    format!("{:.2}", dollars / 1000.0)
}

pub fn pct(fraction: f64) -> String {
    format!("{:.1}", fraction * 100.0)
}

pub fn mark(pass: bool) -> String {
    if pass { "pass" } else { "FAIL" }.into()
}
