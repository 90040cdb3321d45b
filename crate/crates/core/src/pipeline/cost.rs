//! Compute-time and cost accounting.
//!
//! Money is held as integer cents. A row's cost is `hours × rate` computed exactly on inputs
//! with up to six decimal places, then rounded half up to the cent. Totals add rounded rows.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Stage;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CostError {
    #[error("{field} must be a finite non-negative number, got {value}")]
    InvalidNumber { field: &'static str, value: f64 },
    #[error("extrapolation needs a non-zero source count")]
    ZeroSourceCount,
    #[error("a cost report needs at least one row")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub duration_hours: f64,
    pub instance_rate_per_hour: f64,
}

/// One priced line of a report. Stage rows and aggregate rows share this shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLine {
    pub label: String,
    pub duration_hours: f64,
    pub rate_per_hour: f64,
}

impl From<&StageRecord> for CostLine {
    fn from(r: &StageRecord) -> Self {
        Self {
            label: r.stage.name().to_string(),
            duration_hours: r.duration_hours,
            rate_per_hour: r.instance_rate_per_hour,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cents(pub i64);

impl std::fmt::Display for Cents {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        f.pad(&format!("{sign}{}.{:02}", self.0.abs() / 100, self.0.abs() % 100))
    }
}

impl Cents {
    pub fn dollars(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub label: String,
    pub duration_hours: f64,
    pub rate_per_hour: f64,
    pub cost: Cents,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
    pub total_hours: f64,
    pub total_cost: Cents,
    pub page_total: u64,
    pub pages_per_dollar: Option<f64>,
}

const MICRO: i128 = 1_000_000;

fn to_micro(field: &'static str, value: f64) -> Result<i128, CostError> {
    if !value.is_finite() || value < 0.0 {
        return Err(CostError::InvalidNumber { field, value });
    }
    Ok((value * MICRO as f64).round() as i128)
}

/// `hours × rate`, rounded half up to the cent.
pub fn line_cost(duration_hours: f64, rate_per_hour: f64) -> Result<Cents, CostError> {
    let h = to_micro("duration_hours", duration_hours)?;
    let r = to_micro("rate_per_hour", rate_per_hour)?;
    // h·r is in units of 1e-12 dollars; one cent is 1e10 of those.
    let unit: i128 = 10_000_000_000;
    let cents = (h * r + unit / 2) / unit;
    Ok(Cents(cents as i64))
}

pub fn pages_per_dollar(page_total: u64, total: Cents) -> Option<f64> {
    (total.0 > 0).then(|| page_total as f64 / total.dollars())
}

/// Rounds to a whole number of thousands, the precision a headline figure is quoted at.
pub fn round_to_thousands(x: f64) -> u64 {
    ((x / 1000.0).round() * 1000.0) as u64
}

pub fn cost_report(lines: &[CostLine], page_total: u64) -> Result<CostReport, CostError> {
    if lines.is_empty() {
        return Err(CostError::Empty);
    }
    let mut rows = Vec::with_capacity(lines.len());
    for l in lines {
        rows.push(CostRow {
            label: l.label.clone(),
            duration_hours: l.duration_hours,
            rate_per_hour: l.rate_per_hour,
            cost: line_cost(l.duration_hours, l.rate_per_hour)?,
        });
    }
    let total_cost = Cents(rows.iter().map(|r| r.cost.0).sum());
    let total_hours = rows.iter().map(|r| r.duration_hours).sum();
    Ok(CostReport {
        rows,
        total_hours,
        total_cost,
        page_total,
        pages_per_dollar: pages_per_dollar(page_total, total_cost),
    })
}

/// Scales a record's duration linearly from `from_count` items to `to_count` items.
pub fn extrapolate(record: &StageRecord, from_count: u64, to_count: u64) -> Result<StageRecord, CostError> {
    if from_count == 0 {
        return Err(CostError::ZeroSourceCount);
    }
    Ok(StageRecord {
        duration_hours: record.duration_hours * to_count as f64 / from_count as f64,
        ..record.clone()
    })
}

impl CostReport {
    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(5).max(5);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>10}  {:>8}  {:>10}", "stage", "hours", "rate/h", "cost");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>10.2}  {:>8.3}  {:>10}",
                r.label, r.duration_hours, r.rate_per_hour, r.cost
            );
        }
        let _ = writeln!(out, "{:<width$}  {:>10.2}  {:>8}  {:>10}", "total", self.total_hours, "", self.total_cost);
        match self.pages_per_dollar {
            Some(ppd) => {
                let _ = writeln!(
                    out,
                    "pages: {}  pages per dollar: {:.2} (~{})",
                    self.page_total,
                    ppd,
                    round_to_thousands(ppd)
                );
            }
            None => {
                let _ = writeln!(out, "pages: {}", self.page_total);
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,hours,rate_per_hour,cost\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", csv_field(&r.label), r.duration_hours, r.rate_per_hour, r.cost);
        }
        let _ = writeln!(out, "total,{},,{}", self.total_hours, self.total_cost);
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Reads `label,hours,rate` lines. A header line and `#` comments are skipped.
pub fn parse_cost_lines(text: &str) -> Result<Vec<CostLine>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.rsplitn(3, ',').collect();
        if fields.len() != 3 {
            return Err(format!("line {}: expected label,hours,rate", i + 1));
        }
        let (rate, hours, label) = (fields[0].trim(), fields[1].trim(), fields[2].trim());
        match (hours.parse::<f64>(), rate.parse::<f64>()) {
            (Ok(h), Ok(r)) => out.push(CostLine {
                label: label.trim_matches('"').to_string(),
                duration_hours: h,
                rate_per_hour: r,
            }),
            _ if out.is_empty() && i == 0 => continue,
            _ => return Err(format!("line {}: hours and rate must be numbers", i + 1)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn half_up_at_the_cent() {
        assert_eq!(line_cost(1.0, 0.125).unwrap(), Cents(13));
        assert_eq!(line_cost(1.0, 0.124999).unwrap(), Cents(12));
        assert_eq!(line_cost(0.0, 5.0).unwrap(), Cents(0));
        assert!(line_cost(-1.0, 1.0).is_err());
        assert!(line_cost(1.0, f64::NAN).is_err());
    }

    #[test]
    fn totals_are_sums_of_rounded_rows() {
        let lines = vec![
            CostLine { label: "a".into(), duration_hours: 1.0, rate_per_hour: 0.005 },
            CostLine { label: "b".into(), duration_hours: 1.0, rate_per_hour: 0.005 },
        ];
        // Each row rounds 0.5 cents up to 1; the unrounded sum would be exactly 1 cent.
        assert_eq!(cost_report(&lines, 0).unwrap().total_cost, Cents(2));
    }

    #[test]
    fn extrapolation_identity_and_zero() {
        let r = StageRecord { stage: Stage::Parse, duration_hours: 3.5, instance_rate_per_hour: 1.0 };
        assert_eq!(extrapolate(&r, 10, 10).unwrap(), r);
        assert_eq!(extrapolate(&r, 10, 0).unwrap().duration_hours, 0.0);
        assert_eq!(extrapolate(&r, 0, 10), Err(CostError::ZeroSourceCount));
    }

    #[test]
    fn renders() {
        let r = cost_report(
            &[CostLine { label: "parse".into(), duration_hours: 2.0, rate_per_hour: 1.5 }],
            300,
        )
        .unwrap();
        assert!(r.to_table().contains("3.00"));
        assert_eq!(r.to_csv(), "stage,hours,rate_per_hour,cost\nparse,2,1.5,3.00\ntotal,2,,3.00\n");
        assert_eq!(r.pages_per_dollar, Some(100.0));
        assert_eq!(Cents(-5).to_string(), "-0.05");
    }

    #[test]
    fn cost_lines_file() {
        let lines = parse_cost_lines("label,hours,rate\n# c\n\"gpu, embed\",2.5,0.768\ncpu,1,1.204\n").unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].label, "gpu, embed");
        assert!(parse_cost_lines("a,b,c\nx,1,notnum\n").is_err());
    }

    proptest! {
        #[test]
        fn matches_exact_rational_rounding(h in 0u64..100_000_000, r in 0u64..10_000_000) {
            // Hours and rate in hundredths and thousandths: the exact cost in 1e-5 dollars is h·r.
            let cost = line_cost(h as f64 / 100.0, r as f64 / 1000.0).unwrap();
            let exact = u128::from(h) * u128::from(r);
            let want = (exact + 500) / 1000;
            prop_assert_eq!(cost.0 as u128, want);
        }
    }
}
