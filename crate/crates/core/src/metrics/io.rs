//! CSV renderings of sweeps, curves and scalar metrics. Numbers use the
//! shortest decimal form that reads back to the same f64; undefined ratios
//! are left empty.

use std::fmt::Write as _;

use super::{PrCurve, ScalarMetrics};
use crate::model::SweepResult;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn sweep_csv(sweep: &SweepResult) -> String {
    let mut out = String::from("threshold,tp,fp,fn,precision,recall\n");
    for p in &sweep.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.threshold,
            p.tp,
            p.fp,
            p.fn_,
            opt(p.precision()),
            opt(p.recall())
        );
    }
    out
}

pub fn curve_csv(curve: &PrCurve) -> String {
    let mut out = String::from("recall,precision,threshold\n");
    for p in &curve.points {
        let _ = writeln!(out, "{},{},{}", p.recall, p.precision, p.threshold);
    }
    out
}

/// `metric,value` rows for the scalar metrics followed by any `extra` rows.
pub fn metrics_csv(m: &ScalarMetrics, extra: &[(String, f64)]) -> String {
    let mut out = String::from("metric,value\n");
    let _ = writeln!(out, "auc,{}", m.auc);
    let _ = writeln!(out, "max_f1,{}", m.max_f1);
    let _ = writeln!(out, "recall_at_100_precision,{}", m.recall_at_100_precision);
    let _ = writeln!(out, "extended_precision,{}", m.extended_precision);
    let _ = writeln!(out, "degenerate,{}", u8::from(m.degenerate));
    for (k, v) in extra {
        let _ = writeln!(out, "{k},{v}");
    }
    out
}
