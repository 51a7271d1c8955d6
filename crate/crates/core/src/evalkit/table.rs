//! Plain-text table rendering and the two result layouts.

use serde::Serialize;

/// First column left-aligned, the rest right-aligned, two spaces apart.
pub fn render(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (i, cell) in r.iter().enumerate().take(cols) {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, w) in widths.iter().enumerate() {
            let cell = cells.get(i).map_or("", String::as_str);
            if i == 0 {
                s.push_str(&format!("{cell:<w$}"));
            } else {
                s.push_str(&format!("  {cell:>w$}"));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (cols.saturating_sub(1))));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

pub fn fmt_score(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}"))
}

/// Method × corpus F1 table with a row average over available cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Table {
    pub corpora: Vec<String>,
    pub rows: Vec<F1Row>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Row {
    pub method: String,
    pub f1: Vec<Option<f64>>,
    pub avg: Option<f64>,
}

impl F1Row {
    pub fn new(method: impl Into<String>, f1: Vec<Option<f64>>) -> Self {
        let present: Vec<f64> = f1.iter().flatten().copied().collect();
        let avg = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        F1Row {
            method: method.into(),
            f1,
            avg,
        }
    }
}

impl F1Table {
    pub fn render(&self) -> String {
        let mut header = vec!["Method".to_string()];
        header.extend(self.corpora.iter().cloned());
        header.push("Avg".into());
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut cells = vec![r.method.clone()];
                cells.extend(r.f1.iter().map(|v| fmt_score(*v)));
                cells.push(fmt_score(r.avg));
                cells
            })
            .collect();
        render(&header, &rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_columns() {
        let t = render(
            &["Method".into(), "A".into()],
            &[vec!["lexicon".into(), "1.00".into()], vec!["x".into(), "0.5".into()]],
        );
        assert_eq!(t, "Method      A\n-------------\nlexicon  1.00\nx         0.5\n");
    }

    #[test]
    fn average_skips_missing_cells() {
        let t = F1Table {
            corpora: vec!["a".into(), "b".into()],
            rows: vec![
                F1Row::new("m", vec![Some(0.5), None]),
                F1Row::new("n", vec![None, None]),
            ],
        };
        assert_eq!(t.rows[0].avg, Some(0.5));
        assert_eq!(t.rows[1].avg, None);
        let text = t.render();
        assert!(text.contains("n/a"));
        assert!(text.lines().next().unwrap().ends_with("Avg"));
    }
}
