//! Stable JSON report and its text rendering.

use std::fmt::Write as _;

use compositionality::classify::{AnalysisConfig, Classification};
use compositionality::ingest::table_to_json;
use compositionality::jdc::{Feasibility, MsProjection};
use compositionality::selectivity::{MsMode, VARIABLES};
use compositionality::{CombinationTable, Condition};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub config: AnalysisConfig,
    pub combinations: Vec<CombinationReport>,
    pub errors: Vec<ReportError>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportError {
    pub name: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CombinationReport {
    pub max_abs_chsh: Option<f64>,
    pub table: serde_json::Value,
    #[serde(flatten)]
    pub classification: Classification,
    pub projected_table: Option<serde_json::Value>,
}

impl CombinationReport {
    pub fn name(&self) -> &str {
        &self.classification.name
    }

    pub fn new(table: &CombinationTable, classification: Classification) -> Self {
        CombinationReport {
            max_abs_chsh: classification.max_abs_chsh(),
            table: table_to_json(table),
            projected_table: classification
                .projection
                .as_ref()
                .map(|p: &MsProjection| table_to_json(&p.table)),
            classification,
        }
    }
}

/// `x` rounded to 6 significant digits.
pub fn sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

/// Display form of `sig6(x)`.
pub fn fmt6(x: f64) -> String {
    let r = sig6(x);
    if r != 0.0 && (r.abs() < 1e-4 || r.abs() >= 1e9) {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

fn row(values: &[f64]) -> String {
    values.iter().map(|v| fmt6(*v)).collect::<Vec<_>>().join(" ")
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn render_table(out: &mut String, label: &str, table: &serde_json::Value) {
    let _ = writeln!(out, "{label} (cells ++ +- -+ --):");
    for c in Condition::ALL {
        let block = &table[c.key()];
        let (cells, n) = match block {
            serde_json::Value::Array(_) => (block, None),
            _ => (&block["p"], block["n"].as_u64()),
        };
        let cells: Vec<f64> = cells
            .as_array()
            .map(|a| a.iter().filter_map(|v| v.as_f64()).collect())
            .unwrap_or_default();
        let n = n.map(|n| format!("  n = {n}")).unwrap_or_default();
        let _ = writeln!(out, "  {c:<6} {}{n}", row(&cells));
    }
}

pub fn render_text(report: &Report) -> String {
    let mut out = String::new();
    for (i, r) in report.combinations.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        render_combination(&mut out, r);
    }
    for e in &report.errors {
        let _ = writeln!(out, "error in {}: {}", e.name, e.message);
    }
    out
}

fn render_combination(out: &mut String, r: &CombinationReport) {
    let c = &r.classification;
    let _ = writeln!(out, "== {} ==", r.name());
    if let Some(p) = r.table.get("primes").and_then(|p| p.as_array()) {
        let words: Vec<String> = VARIABLES
            .iter()
            .zip(p)
            .map(|(v, w)| format!("{v} {}", w.as_str().unwrap_or("?")))
            .collect();
        let _ = writeln!(out, "primes: {}", words.join(", "));
    }
    render_table(out, "table", &r.table);

    let ms = &c.ms_report;
    let mode = match ms.mode {
        MsMode::Strict => format!("strict, tolerance {}", fmt6(ms.strict_tolerance)),
        _ => format!("statistical, alpha {}, critical value {}", fmt6(ms.alpha), fmt6(ms.critical_value)),
    };
    let override_note = if c.ms_overridden { ", overridden" } else { "" };
    let _ = writeln!(
        out,
        "marginal selectivity: {} ({mode}{override_note})",
        if ms.holds { "holds" } else { "fails" }
    );
    let _ = writeln!(out, "  variables    {}", VARIABLES.join(" "));
    let _ = writeln!(out, "  diffs        {}", row(&ms.diffs));
    if let Some(chi) = &ms.chi_squares {
        let _ = writeln!(out, "  chi-square   {}", row(chi));
    }
    let fails: Vec<&str> = VARIABLES
        .iter()
        .zip(ms.per_variable_fail)
        .filter(|(_, f)| *f)
        .map(|(v, _)| *v)
        .collect();
    if !fails.is_empty() {
        let _ = writeln!(out, "  failing      {}", fails.join(" "));
    }

    if let Some(table) = &r.projected_table {
        render_table(out, "projected table", table);
    }
    if let Some(p) = &c.projection {
        let _ = writeln!(out, "  common marginals {}", row(&p.marginals));
    }
    if let Some(ch) = &c.chsh_report {
        let _ = writeln!(
            out,
            "CHSH: max |S| {}, violated: {}",
            fmt6(ch.max_abs),
            yes_no(ch.violated)
        );
        let _ = writeln!(out, "  E            {}", row(&ch.e_values));
        let _ = writeln!(out, "  S1..S4       {}", row(&ch.variant_values));
    }
    if let Some(b) = &c.bellch_report {
        let _ = writeln!(
            out,
            "Bell/CH: satisfied: {} (marginal policy {})",
            yes_no(b.satisfied),
            b.policy
        );
        let _ = writeln!(out, "  expressions  {}", row(&b.expressions));
        let _ = writeln!(out, "  marginals    {}", row(&b.marginals_used));
    }
    let j = &c.jdc_result;
    let status = match j.status {
        Feasibility::Feasible => "feasible",
        Feasibility::Infeasible => "infeasible",
    };
    let _ = writeln!(
        out,
        "JDC: {status}, residual {}, max violation {}, tolerance {}, pivots {}",
        fmt6(j.residual),
        fmt6(j.max_violation),
        fmt6(j.tolerance),
        j.pivots
    );
    if let Some(w) = &j.witness {
        let _ = writeln!(out, "  witness      {}", row(w.probabilities()));
    }
    let _ = writeln!(out, "verdict: {}", c.verdict);
    if let Some(a) = c.agreement {
        let _ = writeln!(out, "agreement: {}", yes_no(a));
    }
    if c.borderline {
        let _ = writeln!(out, "borderline: yes");
    }
    for note in &c.notes {
        let _ = writeln!(out, "note: {note}");
    }
}

/// One line per combination: `name<TAB>verdict<TAB>max|CHSH|`.
pub fn classify_line(r: &CombinationReport) -> String {
    let chsh = r
        .max_abs_chsh
        .map(|x| format!("{x:.2}"))
        .unwrap_or_else(|| "NA".to_owned());
    format!("{}\t{}\t{}", r.name(), r.classification.verdict, chsh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt6(1.25), "1.25");
        assert_eq!(fmt6(2.0600000000000005), "2.06");
        assert_eq!(fmt6(0.1234567), "0.123457");
        assert_eq!(fmt6(1234567.0), "1234570");
        assert_eq!(fmt6(3.2e-12), "3.2e-12");
        assert_eq!(fmt6(0.0), "0");
        assert_eq!(sig6(-0.57142857), -0.571429);
    }
}
