use std::fmt::Write as _;

use super::sweep::mean_sd;

/// A dataset name and its `(mean, sd)` cells, `None` where a model was not run.
pub type TableRow = (String, Vec<Option<(f64, f64)>>);

/// Plain-text results table: one row per dataset, one `mean±sd` cell per model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub models: Vec<String>,
    pub rows: Vec<TableRow>,
}

impl ResultTable {
    pub fn new(models: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            models: models.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Adds a row from replicate scores per model (`None` leaves a blank cell).
    pub fn push_replicates(&mut self, dataset: impl Into<String>, scores: &[Option<&[f64]>]) {
        let cells = scores.iter().map(|s| s.filter(|v| !v.is_empty()).map(mean_sd)).collect();
        self.rows.push((dataset.into(), cells));
    }

    pub fn render(&self) -> String {
        let cell = |c: &Option<(f64, f64)>| match c {
            Some((m, s)) => format!("{m:.3}±{s:.3}"),
            None => "-".to_string(),
        };
        let mut grid: Vec<Vec<String>> = vec![std::iter::once("Dataset".to_string()).chain(self.models.iter().cloned()).collect()];
        for (name, cells) in &self.rows {
            grid.push(std::iter::once(name.clone()).chain(cells.iter().map(cell)).collect());
        }
        let cols = grid[0].len();
        let widths: Vec<usize> = (0..cols)
            .map(|j| grid.iter().map(|r| r.get(j).map_or(0, |c| c.chars().count())).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in grid.iter().enumerate() {
            let line: Vec<String> = (0..cols)
                .map(|j| {
                    let c = row.get(j).map_or("", String::as_str);
                    format!("{c:<w$}", w = widths[j])
                })
                .collect();
            writeln!(out, "{}", line.join("  ").trim_end()).unwrap();
            if i == 0 {
                writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1))).unwrap();
            }
        }
        out
    }
}
