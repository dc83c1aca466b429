use std::fmt::Write as _;
use std::str::FromStr;

use super::train::TrialRecord;
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
    Svg,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
            ReportFormat::Svg => "svg",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(HarnessError::UnknownFormat(other.to_string())),
        }
    }
}

/// Sweep records by coefficient, everything else by trial index.
fn sorted(records: &[TrialRecord]) -> Vec<&TrialRecord> {
    let mut out: Vec<&TrialRecord> = records.iter().collect();
    out.sort_by(|a, b| (a.k, a.trial, &a.ordering).cmp(&(b.k, b.trial, &b.ordering)));
    out
}

pub fn render(records: &[TrialRecord], format: ReportFormat) -> Result<String, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::TooFewRecords { needed: 1, got: 0 });
    }
    Ok(match format {
        ReportFormat::Csv => render_csv(records),
        ReportFormat::Markdown => render_markdown(records),
        ReportFormat::Svg => render_svg(records),
    })
}

fn render_csv(records: &[TrialRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trial", "ordering", "k", "seed", "params", "valid_nats", "valid_bpc", "valid_ppl"])
        .expect("in-memory write");
    for r in sorted(records) {
        w.write_record([
            r.trial.to_string(),
            r.ordering.clone(),
            r.k.to_string(),
            r.seed.to_string(),
            r.params.to_string(),
            r.valid_nats.to_string(),
            r.valid_bpc.to_string(),
            r.valid_ppl.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

fn render_markdown(records: &[TrialRecord]) -> String {
    let mut out = String::from("| ordering | k | params | valid BPC | ppl |\n|---|---:|---:|---:|---:|\n");
    for r in sorted(records) {
        let k = if r.k < 0 { "-".to_string() } else { r.k.to_string() };
        let _ = writeln!(out, "| `{}` | {k} | {} | {:.4} | {:.3} |", r.ordering, r.params, r.valid_bpc, r.valid_ppl);
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Scatter of validation BPC against the sandwich coefficient when every
/// record has one, otherwise against the trial index.
fn render_svg(records: &[TrialRecord]) -> String {
    let rows = sorted(records);
    let by_k = rows.iter().all(|r| r.k >= 0);
    let x_of = |r: &TrialRecord| if by_k { r.k as f64 } else { r.trial as f64 };
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let span = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let (x0, x1) = span(&mut rows.iter().map(|r| x_of(r)));
    let (y0, y1) = span(&mut rows.iter().map(|r| r.valid_bpc));
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<line x1="{pad}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{b}" stroke="black"/>"#,
        b = h - pad,
        r = w - pad
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
        w / 2.0,
        h - 12.0,
        if by_k { "sandwich coefficient k" } else { "trial" }
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" font-size="12" transform="rotate(-90 14 {})" text-anchor="middle">valid BPC</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (v, y) in [(y0, sy(y0)), (y1, sy(y1))] {
        let _ = writeln!(out, r#"<text x="{}" y="{y:.1}" font-size="10" text-anchor="end">{v:.3}</text>"#, pad - 4.0);
    }
    for r in &rows {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="steelblue"><title>{} {:.4}</title></circle>"#,
            sx(x_of(r)),
            sy(r.valid_bpc),
            escape(&r.ordering),
            r.valid_bpc
        );
    }
    out.push_str("</svg>\n");
    out
}
