//! Report rows and their CSV and JSON renderings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 6] = ["experiment", "quantity", "value", "error", "meta", "verdict"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    /// No tolerance is declared for the row.
    Info,
}

impl Verdict {
    pub fn from_check(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Info => "INFO",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub quantity: String,
    pub value: String,
    /// Standard error; empty when there is none.
    pub error: String,
    /// `key=value` pairs joined by `;`.
    pub meta: String,
    pub verdict: Verdict,
}

/// Shortest round-trip decimal; the same bits always print the same text.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:?}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
}

#[derive(Serialize)]
struct Summary<'a> {
    experiment: &'a str,
    seed: u64,
    rows: usize,
    passed: usize,
    failed: usize,
    info: usize,
    all_pass: bool,
    failures: Vec<&'a str>,
    quantities: &'a [ReportRow],
}

impl Report {
    pub fn new(experiment: &str, seed: u64, mut rows: Vec<ReportRow>) -> Self {
        rows.sort_by(|a, b| a.quantity.cmp(&b.quantity));
        Report {
            experiment: experiment.to_string(),
            seed,
            rows,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.verdict != Verdict::Fail)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(CSV_HEADER).map_err(|e| Error::Io(e.to_string()))?;
        for r in &self.rows {
            w.write_record([
                r.experiment.as_str(),
                r.quantity.as_str(),
                r.value.as_str(),
                r.error.as_str(),
                r.meta.as_str(),
                r.verdict.as_str(),
            ])
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.into_inner().map_err(|e| Error::Io(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let count = |v: Verdict| self.rows.iter().filter(|r| r.verdict == v).count();
        let s = Summary {
            experiment: &self.experiment,
            seed: self.seed,
            rows: self.rows.len(),
            passed: count(Verdict::Pass),
            failed: count(Verdict::Fail),
            info: count(Verdict::Info),
            all_pass: self.all_pass(),
            failures: self
                .rows
                .iter()
                .filter(|r| r.verdict == Verdict::Fail)
                .map(|r| r.quantity.as_str())
                .collect(),
            quantities: &self.rows,
        };
        let mut out = serde_json::to_string_pretty(&s).expect("summary serializes");
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(q: &str, v: Verdict) -> ReportRow {
        ReportRow {
            experiment: "e".into(),
            quantity: q.into(),
            value: fmt_f64(0.1),
            error: String::new(),
            meta: "seed=1;horizon=10".into(),
            verdict: v,
        }
    }

    #[test]
    fn csv_is_sorted_and_lf() {
        let r = Report::new("e", 1, vec![row("b", Verdict::Pass), row("a, quoted", Verdict::Info)]);
        let text = String::from_utf8(r.to_csv().unwrap()).unwrap();
        assert!(!text.contains('\r'));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "experiment,quantity,value,error,meta,verdict");
        assert!(lines[1].starts_with("e,\"a, quoted\",0.1,"));
        assert!(lines[2].ends_with(",PASS"));
        assert!(r.all_pass());
        let bad = Report::new("e", 1, vec![row("x", Verdict::Fail)]);
        assert!(!bad.all_pass());
        assert!(bad.to_json().contains("\"failed\": 1"));
    }

    #[test]
    fn float_text_round_trips() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 12345.678] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
