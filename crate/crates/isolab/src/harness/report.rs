//! Catalog rendering: CSV, JSON, or an aligned text table, one row per
//! orbit representative, ordered by loss.

use serde::{Deserialize, Serialize};

use super::{HarnessError, OrbitRow, ResultSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
    Table,
}

impl std::str::FromStr for ReportFormat {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "table" => Ok(Self::Table),
            other => Err(HarnessError::UnsupportedFormat(other.to_string())),
        }
    }
}

pub const CSV_HEADER: &str = "loss,iv_order,iv_name,ie_order,ie_name,minimum,positions";

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn positions_field(row: &OrbitRow) -> String {
    row.values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn render_report(results: &ResultSet, format: ReportFormat) -> Result<String, HarnessError> {
    match format {
        ReportFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for row in &results.catalog {
                let ie_order = row.ie.as_ref().map_or(String::new(), |ie| ie.order.to_string());
                let ie_name = row.ie.as_ref().map_or(String::new(), |ie| ie.name.clone());
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    row.loss,
                    row.iv.order,
                    csv_escape(&row.iv.name),
                    ie_order,
                    csv_escape(&ie_name),
                    row.minimum,
                    csv_escape(&positions_field(row)),
                ));
            }
            Ok(out)
        }
        ReportFormat::Json => {
            Ok(serde_json::to_string_pretty(&results.catalog).expect("catalog serializes"))
        }
        ReportFormat::Table => {
            let mut rows: Vec<[String; 7]> = vec![[
                "loss".into(),
                "I_V order".into(),
                "I_V name".into(),
                "I_E order".into(),
                "I_E name".into(),
                "minimum".into(),
                "basin".into(),
            ]];
            for row in &results.catalog {
                rows.push([
                    format!("{:.6}", row.loss),
                    row.iv.order.to_string(),
                    row.iv.name.clone(),
                    row.ie.as_ref().map_or(String::from("-"), |ie| ie.order.to_string()),
                    row.ie.as_ref().map_or(String::from("-"), |ie| ie.name.clone()),
                    if row.minimum { "yes" } else { "no" }.to_string(),
                    row.basin_count.to_string(),
                ]);
            }
            let mut widths = [0usize; 7];
            for row in &rows {
                for (w, cell) in widths.iter_mut().zip(row) {
                    *w = (*w).max(cell.len());
                }
            }
            let mut out = String::new();
            for (i, row) in rows.iter().enumerate() {
                let line: Vec<String> = row
                    .iter()
                    .zip(widths)
                    .map(|(cell, w)| format!("{cell:<w$}"))
                    .collect();
                out.push_str(line.join("  ").trim_end());
                out.push('\n');
                if i == 0 {
                    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 12));
                    out.push('\n');
                }
            }
            Ok(out)
        }
    }
}
