//! Text renderings of evaluation reports, sweep tables and noise curves.
//! All numbers are fixed to three decimals.

use std::fmt::Write;

use crate::corpus::{Aspect, PerAspect};
use crate::error::{Error, Result};
use crate::metrics::{AspectMetrics, EvalReport};
use crate::trainer::{CurvePoint, SweepRow};

pub const CSV_HEADER: &str = "aspect,macro_p,macro_r,macro_f1,micro_p,micro_r,micro_f1";

fn num(x: f64) -> String {
    format!("{x:.3}")
}

/// Three aspect rows then an `average` row holding the two averaged F1s.
pub fn render_csv(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (a, m) in report.aspects.iter() {
        let cells: Vec<String> = m.values().iter().map(|&v| num(v)).collect();
        writeln!(out, "{a},{}", cells.join(",")).expect("string write");
    }
    writeln!(out, "average,,,{},,,{}", num(report.avg_macro_f1), num(report.avg_micro_f1)).expect("string write");
    out
}

/// Reads a report written by [`render_csv`]. Values carry the rendered
/// precision; averages are taken from the `average` row as printed.
pub fn parse_csv(text: &str) -> Result<EvalReport> {
    let bad = |m: String| Error::Validation(format!("report csv: {m}"));
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != 5 || lines[0].trim() != CSV_HEADER {
        return Err(bad(format!("expected header and 4 rows, got {} lines", lines.len())));
    }
    let parse = |s: &str| -> Result<f64> { s.trim().parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}"))) };
    let mut aspects = PerAspect::<AspectMetrics>::default();
    for (line, a) in lines[1..4].iter().zip(Aspect::ALL) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 7 || Aspect::parse(cells[0]) != Some(a) {
            return Err(bad(format!("expected a {a} row, got {line:?}")));
        }
        let v: Vec<f64> = cells[1..].iter().map(|c| parse(c)).collect::<Result<_>>()?;
        aspects[a] = AspectMetrics {
            macro_p: v[0],
            macro_r: v[1],
            macro_f1: v[2],
            micro_p: v[3],
            micro_r: v[4],
            micro_f1: v[5],
        };
    }
    let cells: Vec<&str> = lines[4].split(',').collect();
    if cells.len() != 7 || cells[0] != "average" || cells.iter().enumerate().any(|(i, c)| ![0, 3, 6].contains(&i) && !c.is_empty()) {
        return Err(bad(format!("malformed average row {:?}", lines[4])));
    }
    Ok(EvalReport {
        aspects,
        avg_macro_f1: parse(cells[3])?,
        avg_micro_f1: parse(cells[6])?,
    })
}

/// The 20 numeric cells of a report in CSV order.
pub fn numeric_cells(report: &EvalReport) -> Vec<f64> {
    let mut v: Vec<f64> = report.aspects.iter().flat_map(|(_, m)| m.values()).collect();
    v.push(report.avg_macro_f1);
    v.push(report.avg_micro_f1);
    v
}

/// Human-readable table of one report: one column group per aspect with
/// macro and micro P/R/F1, then the averages.
pub fn render_table(report: &EvalReport) -> String {
    render_grid(&[("model".to_string(), report.clone())], false)
}

/// Comparison grid with one row per named report. With `mark_best`, the
/// maximum of every column carries a `*`.
pub fn render_grid(rows: &[(String, EvalReport)], mark_best: bool) -> String {
    let name_w = rows.iter().map(|(n, _)| n.chars().count()).max().unwrap_or(0).max(5);
    let cells: Vec<Vec<f64>> = rows
        .iter()
        .map(|(_, r)| {
            let mut v: Vec<f64> = r.aspects.iter().flat_map(|(_, m)| m.values()).collect();
            v.push(r.avg_micro_f1);
            v.push(r.avg_macro_f1);
            v
        })
        .collect();
    let n_cols = 20;
    let best: Vec<f64> = (0..n_cols)
        .map(|c| cells.iter().map(|r| (r[c] * 1000.0).round()).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    const CELL: usize = 7;
    let group = 6 * CELL;

    let mut out = String::new();
    let mut line = format!("{:name_w$}", "");
    for a in Aspect::ALL {
        write!(line, " | {:<group$}", a.to_string()).expect("string write");
    }
    write!(line, " | {:<w$}", "Average", w = 2 * CELL).expect("string write");
    out.push_str(line.trim_end());
    out.push('\n');

    let mut line = format!("{:name_w$}", "");
    for _ in Aspect::ALL {
        write!(line, " | {:<w$}{:<w$}", "Macro", "Micro", w = 3 * CELL).expect("string write");
    }
    write!(line, " | {:<CELL$}{:<CELL$}", "Micro", "Macro").expect("string write");
    out.push_str(line.trim_end());
    out.push('\n');

    let mut line = format!("{:name_w$}", "");
    for _ in Aspect::ALL {
        line.push_str(" | ");
        for h in ["P", "R", "F1", "P", "R", "F1"] {
            write!(line, "{h:<CELL$}").expect("string write");
        }
    }
    write!(line, " | {:<CELL$}{:<CELL$}", "F1", "F1").expect("string write");
    out.push_str(line.trim_end());
    out.push('\n');

    for ((name, _), row) in rows.iter().zip(&cells) {
        let mut line = format!("{name:name_w$}");
        for (c, &v) in row.iter().enumerate() {
            if c % 6 == 0 && c <= 18 {
                line.push_str(" | ");
            }
            let marked = mark_best && (v * 1000.0).round() == best[c];
            let cell = format!("{}{}", num(v), if marked { "*" } else { "" });
            write!(line, "{cell:<CELL$}").expect("string write");
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

pub fn render_sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("dropout,threshold,val_avg_micro_f1,val_avg_macro_f1,best_epoch,epochs_run\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            num(r.dropout),
            num(r.threshold),
            num(r.val_avg_micro_f1),
            num(r.val_avg_macro_f1),
            r.best_epoch,
            r.epochs_run
        )
        .expect("string write");
    }
    out
}

pub fn render_curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("fraction,threshold,avg_micro_f1,avg_macro_f1\n");
    for p in points {
        writeln!(
            out,
            "{},{},{},{}",
            num(p.fraction),
            num(p.threshold),
            num(p.avg_micro_f1),
            num(p.avg_macro_f1)
        )
        .expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(seed: f64) -> EvalReport {
        let m = |k: f64| AspectMetrics {
            macro_p: 0.041 + k,
            macro_r: 0.052 + k,
            macro_f1: 0.046 + k,
            micro_p: 0.737 + k,
            micro_r: 0.613 + k,
            micro_f1: 0.670 + k,
        };
        EvalReport::new(PerAspect {
            population: m(seed),
            intervention: m(seed + 0.01),
            outcome: m(seed - 0.02),
        })
    }

    #[test]
    fn average_row_prints_three_decimals() {
        let mut r = report(0.0);
        r.avg_micro_f1 = (0.670 + 0.631 + 0.525) / 3.0;
        let csv = render_csv(&r);
        assert!(csv.lines().last().unwrap().ends_with(",0.609"));
        assert_eq!(csv, render_csv(&r));
    }

    #[test]
    fn csv_round_trips_twenty_cells() {
        let r = report(0.0);
        let back = parse_csv(&render_csv(&r)).unwrap();
        let (a, b) = (numeric_cells(&r), numeric_cells(&back));
        assert_eq!(a.len(), 20);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(num(*x), num(*y));
        }
        assert_eq!(render_csv(&back), render_csv(&r));
    }

    #[test]
    fn malformed_csv_is_rejected() {
        let good = render_csv(&report(0.0));
        assert!(parse_csv(&good.replace("Outcome", "Other")).is_err());
        assert!(parse_csv(&good.replace("average,,,", "average,1,,")).is_err());
        assert!(parse_csv(good.lines().take(4).collect::<Vec<_>>().join("\n").as_str()).is_err());
    }

    #[test]
    fn grid_marks_column_maxima() {
        let rows = vec![("LI".to_string(), report(0.0)), ("LISAAS".to_string(), report(0.001))];
        let grid = render_grid(&rows, true);
        let lines: Vec<&str> = grid.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(!lines[3].contains('*'));
        assert_eq!(lines[4].matches('*').count(), 20);
        assert!(lines[0].contains("InterventionComparator"));
        assert!(!render_table(&report(0.0)).contains('*'));
    }
}
