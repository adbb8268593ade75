use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::SweepResult;

pub const CSV_HEADER: &str =
    "model,rank,alpha,lambda,recall_at_20,recall_at_50,ndcg_at_100,se_recall_20,se_recall_50,se_ndcg_100";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Jsonl,
    Table,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Jsonl => "jsonl",
            ReportFormat::Table => "txt",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "jsonl" | "json-lines" => Ok(ReportFormat::Jsonl),
            "table" => Ok(ReportFormat::Table),
            other => Err(Error::InvalidParameter(format!(
                "unknown report format {other:?} (csv|jsonl|table)"
            ))),
        }
    }
}

/// One line of the results table: the selected cell's test metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub rank: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub recall_at_20: f64,
    pub recall_at_50: f64,
    pub ndcg_at_100: f64,
    pub se_recall_20: f64,
    pub se_recall_50: f64,
    pub se_ndcg_100: f64,
}

/// Rows for the sweeps' selected cells; sweeps without a selection (every
/// cell failed) yield no row.
pub fn report_rows<'a>(results: impl IntoIterator<Item = &'a SweepResult>) -> Vec<ReportRow> {
    results
        .into_iter()
        .filter_map(|r| {
            let cell = r.selected()?;
            let t = cell.test?;
            Some(ReportRow {
                model: r.kind.to_string(),
                rank: r.rank,
                alpha: cell.alpha,
                lambda: cell.lambda,
                recall_at_20: t.recall_at_20,
                recall_at_50: t.recall_at_50,
                ndcg_at_100: t.ndcg_at_100,
                se_recall_20: t.se_recall_20,
                se_recall_50: t.se_recall_50,
                se_ndcg_100: t.se_ndcg_100,
            })
        })
        .collect()
}

/// Writes `rows`. `settings` are `(key, value)` pairs describing the run;
/// they open the json-lines and table outputs (csv carries only the header
/// and rows).
pub fn emit_report<W: Write>(
    mut w: W,
    rows: &[ReportRow],
    settings: &[(String, String)],
    format: ReportFormat,
) -> Result<()> {
    match format {
        ReportFormat::Csv => {
            writeln!(w, "{CSV_HEADER}")?;
            for r in rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.model,
                    r.rank,
                    r.alpha,
                    r.lambda,
                    r.recall_at_20,
                    r.recall_at_50,
                    r.ndcg_at_100,
                    r.se_recall_20,
                    r.se_recall_50,
                    r.se_ndcg_100
                )?;
            }
        }
        ReportFormat::Jsonl => {
            let settings: serde_json::Map<String, serde_json::Value> = settings
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
                .collect();
            serde_json::to_writer(&mut w, &serde_json::json!({ "settings": settings }))?;
            writeln!(w)?;
            for r in rows {
                serde_json::to_writer(&mut w, r)?;
                writeln!(w)?;
            }
        }
        ReportFormat::Table => {
            for (k, v) in settings {
                writeln!(w, "# {k} = {v}")?;
            }
            writeln!(
                w,
                "{:<14} {:>6} {:>8} {:>10} {:>10} {:>10} {:>11}",
                "model", "rank", "alpha", "lambda", "Recall@20", "Recall@50", "nDCG@100"
            )?;
            for r in rows {
                writeln!(
                    w,
                    "{:<14} {:>6} {:>8} {:>10} {:>10.3} {:>10.3} {:>11.3}",
                    r.model,
                    r.rank,
                    r.alpha,
                    r.lambda,
                    r.recall_at_20,
                    r.recall_at_50,
                    r.ndcg_at_100
                )?;
            }
            if let Some(max_se) = rows
                .iter()
                .flat_map(|r| [r.se_recall_20, r.se_recall_50, r.se_ndcg_100])
                .filter(|v| v.is_finite())
                .reduce(f64::max)
            {
                writeln!(w, "# largest standard error: {max_se:.3}")?;
            }
        }
    }
    Ok(())
}

/// Parses the csv written by [`emit_report`].
pub fn parse_csv_report(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Format("missing report header".into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let err = |m: String| Error::Parse {
                line: n + 2,
                message: m,
            };
            if f.len() != 10 {
                return Err(err(format!("expected 10 fields, got {}", f.len())));
            }
            let num = |k: usize| -> Result<f64> {
                f[k].parse().map_err(|e| err(format!("field {k}: {e}")))
            };
            Ok(ReportRow {
                model: f[0].to_string(),
                rank: f[1].parse().map_err(|e| err(format!("rank: {e}")))?,
                alpha: num(2)?,
                lambda: num(3)?,
                recall_at_20: num(4)?,
                recall_at_50: num(5)?,
                ndcg_at_100: num(6)?,
                se_recall_20: num(7)?,
                se_recall_50: num(8)?,
                se_ndcg_100: num(9)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> ReportRow {
        ReportRow {
            model: "full-rank".into(),
            rank: 300,
            alpha: 1.0,
            lambda: 100.0,
            recall_at_20: 0.1 + 0.2,
            recall_at_50: 1.0 / 3.0,
            ndcg_at_100: 0.407,
            se_recall_20: 0.002,
            se_recall_50: 1e-17,
            se_ndcg_100: 0.0,
        }
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            row(),
            ReportRow {
                alpha: 21.0,
                ..row()
            },
        ];
        let mut buf = Vec::new();
        emit_report(&mut buf, &rows, &[], ReportFormat::Csv).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(parse_csv_report(&text).unwrap(), rows);
    }

    #[test]
    fn other_formats_carry_settings() {
        let settings = vec![("seed".to_string(), "7".to_string())];
        let mut buf = Vec::new();
        emit_report(&mut buf, &[row()], &settings, ReportFormat::Jsonl).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["settings"]["seed"], "7");
        let back: ReportRow = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
        assert_eq!(back, row());
        let mut buf = Vec::new();
        emit_report(&mut buf, &[row()], &settings, ReportFormat::Table).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# seed = 7\n"));
        assert!(text.contains("0.407"));
    }
}
