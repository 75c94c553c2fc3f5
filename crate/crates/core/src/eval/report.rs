use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::aggregate::{ComparisonTable, HorizonMetrics};
use crate::error::Result;
use crate::models::ModelKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Rmse,
    Mae,
}

impl Metric {
    pub const BOTH: [Metric; 2] = [Metric::Rmse, Metric::Mae];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::Mae => "mae",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::Rmse => "RMSE",
            Metric::Mae => "MAE",
        }
    }

    fn of(self, m: &HorizonMetrics) -> (f64, f64) {
        match self {
            Metric::Rmse => (m.rmse_mean, m.rmse_std),
            Metric::Mae => (m.mae_mean, m.mae_std),
        }
    }
}

/// `x` rounded to `digits` significant digits, switching to exponent notation
/// for very large or small magnitudes.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..].parse().expect("exponent digits");
    if exp < -4 || exp >= digits as i32 {
        sci
    } else {
        format!("{:.*}", (digits as i32 - 1 - exp) as usize, x)
    }
}

fn cell_text(mean: f64, std: f64) -> String {
    format!("{mean:.3}±{std:.3}")
}

fn models_by_name(table: &ComparisonTable) -> Vec<ModelKind> {
    let mut models = table.models.clone();
    models.sort_by_key(|k| k.name());
    models
}

/// Percentage MAE reduction of `model` relative to `baseline`, per horizon.
pub fn mae_reductions(table: &ComparisonTable, model: ModelKind, baseline: ModelKind) -> Vec<(usize, f64)> {
    if !table.models.contains(&model) || !table.models.contains(&baseline) {
        return Vec::new();
    }
    table
        .horizons
        .iter()
        .map(|&h| {
            let (a, b) = (table.cell(h, model).mae_mean, table.cell(h, baseline).mae_mean);
            (h, 100.0 * (1.0 - a / b))
        })
        .collect()
}

/// Plain-text comparison table: horizon rows, model columns, mean±std cells
/// and a Total Win footer.
pub fn render_report_text(table: &ComparisonTable) -> String {
    let mut header = vec!["Time Horizon".to_string(), "Performance Measure".to_string()];
    header.extend(table.models.iter().map(|k| k.label().to_string()));
    let mut rows = vec![header];
    for &h in &table.horizons {
        for metric in Metric::BOTH {
            let mut row = vec![
                if metric == Metric::Rmse { format!("{h}-h") } else { String::new() },
                metric.label().to_string(),
            ];
            for &k in &table.models {
                let (mean, std) = metric.of(table.cell(h, k));
                row.push(cell_text(mean, std));
            }
            rows.push(row);
        }
    }
    let mut footer = vec![String::new(), "Total Win".to_string()];
    footer.extend(table.models.iter().map(|&k| table.wins(k).to_string()));
    rows.push(footer);

    let columns = rows[0].len();
    let widths: Vec<usize> = (0..columns)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    let low: Vec<String> = table
        .horizons
        .iter()
        .flat_map(|&h| table.models.iter().map(move |&k| (h, k)))
        .filter(|&(h, k)| table.cell(h, k).low_confidence)
        .map(|(h, k)| format!("{k}@{h}h"))
        .collect();
    if !low.is_empty() {
        let _ = writeln!(out, "\nsingle run, deviation not estimated: {}", low.join(", "));
    }
    let reductions = mae_reductions(table, ModelKind::Bdt, ModelKind::Transformer);
    if !reductions.is_empty() {
        let parts: Vec<String> = reductions.iter().map(|(h, r)| format!("{h}-h {r:.1}%")).collect();
        let _ = writeln!(out, "\nMAE reduction of BDT vs Transformer: {}", parts.join(", "));
    }
    out
}

/// Machine-readable table: `horizon,metric,model,mean,std`.
pub fn render_report_csv(table: &ComparisonTable) -> String {
    let mut out = String::from("horizon,metric,model,mean,std\n");
    for &h in &table.horizons {
        for metric in Metric::BOTH {
            for k in models_by_name(table) {
                let (mean, std) = metric.of(table.cell(h, k));
                let _ = writeln!(
                    out,
                    "{h},{},{},{},{}",
                    metric.name(),
                    k.name(),
                    format_significant(mean, 6),
                    format_significant(std, 6)
                );
            }
        }
    }
    out
}

/// Per-metric plot data: `horizon,model,mean,std`.
pub fn render_plot_csv(table: &ComparisonTable, metric: Metric) -> String {
    let mut out = String::from("horizon,model,mean,std\n");
    for &h in &table.horizons {
        for k in models_by_name(table) {
            let (mean, std) = metric.of(table.cell(h, k));
            let _ = writeln!(
                out,
                "{h},{},{},{}",
                k.name(),
                format_significant(mean, 6),
                format_significant(std, 6)
            );
        }
    }
    out
}

/// Write `report.txt`, `report.csv`, `plot_rmse.csv` and `plot_mae.csv` into `dir`.
pub fn write_reports(table: &ComparisonTable, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let files = [
        ("report.txt", render_report_text(table)),
        ("report.csv", render_report_csv(table)),
        ("plot_rmse.csv", render_plot_csv(table, Metric::Rmse)),
        ("plot_mae.csv", render_plot_csv(table, Metric::Mae)),
    ];
    files
        .into_iter()
        .map(|(name, text)| {
            let path = dir.join(name);
            fs::write(&path, text)?;
            Ok(path)
        })
        .collect()
}
