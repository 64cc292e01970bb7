//! CSV export of schedules, generation traces and evaluation reports.
//!
//! Every float is written with 17 significant digits in C `%.17g` style, so
//! files are byte-stable and round-trip exactly. Each file has one header row
//! and ends with a newline.

use std::path::Path;

use crate::cag::ScheduleSample;
use crate::error::{Error, Result};
use crate::experiment::EvalReport;
use crate::harness::sampler::GenerationTrace;

/// `%.17g`.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    const P: i32 = 17;
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (P - 1 - exp) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 fields")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_g17).unwrap_or_default()
}

pub const SCHEDULE_COLUMNS: [&str; 9] =
    ["step", "t_hat", "indicator", "gamma_sem", "gamma_vis", "T_sem", "T_vis", "alpha_final", "w_final"];

pub fn schedule_csv(schedule: &[ScheduleSample]) -> String {
    let mut w = writer();
    w.write_record(SCHEDULE_COLUMNS).expect("in-memory write");
    for s in schedule {
        w.write_record([
            s.step.to_string(),
            fmt_g17(s.t_hat),
            s.indicator.to_string(),
            fmt_g17(s.gamma_sem),
            fmt_g17(s.gamma_vis),
            fmt_g17(s.t_sem),
            fmt_g17(s.t_vis),
            fmt_g17(s.alpha_final),
            fmt_g17(s.w_final),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// One row per step: the schedule entry, the velocity norms and the latent
/// after the update (`x0..x{dim-1}`). The last row's latent is the final
/// sample.
pub fn trace_csv(trace: &GenerationTrace) -> String {
    let dim = trace.final_sample.len();
    let mut w = writer();
    let mut header: Vec<String> =
        ["seed", "step", "t_hat", "indicator", "alpha_final", "w_final", "cond_norm", "uncond_norm", "guided_norm"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    header.extend((0..dim).map(|i| format!("x{i}")));
    w.write_record(&header).expect("in-memory write");
    for r in &trace.records {
        let mut row = vec![
            trace.seed.to_string(),
            r.sample.step.to_string(),
            fmt_g17(r.sample.t_hat),
            r.sample.indicator.to_string(),
            fmt_g17(r.sample.alpha_final),
            fmt_g17(r.sample.w_final),
            fmt_g17(r.cond_norm),
            opt(r.uncond_norm),
            fmt_g17(r.guided_norm),
        ];
        row.extend(r.latent.iter().map(|&v| fmt_g17(v)));
        w.write_record(&row).expect("in-memory write");
    }
    finish(w)
}

pub const REPORT_COLUMNS: [&str; 8] =
    ["config_id", "name", "prompt", "seed", "id_sim", "attr_adherence", "error", "message"];

/// Per-run records in report order.
pub fn report_csv(report: &EvalReport) -> String {
    let mut w = writer();
    w.write_record(REPORT_COLUMNS).expect("in-memory write");
    for r in &report.records {
        w.write_record([
            r.config_id.to_string(),
            r.name.clone(),
            r.prompt.clone(),
            r.seed.to_string(),
            opt(r.id_sim),
            opt(r.attr_adherence),
            r.error.clone().unwrap_or_default(),
            r.message.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

pub const SUMMARY_COLUMNS: [&str; 8] =
    ["config_id", "name", "runs", "failed", "id_sim_mean", "id_sim_std", "attr_adherence_mean", "attr_adherence_std"];

/// Per-config aggregates.
pub fn summary_csv(report: &EvalReport) -> String {
    let mut w = writer();
    w.write_record(SUMMARY_COLUMNS).expect("in-memory write");
    for a in &report.aggregates {
        w.write_record([
            a.config_id.to_string(),
            a.name.clone(),
            a.runs.to_string(),
            a.failed.to_string(),
            opt(a.id_sim.map(|s| s.mean)),
            opt(a.id_sim.map(|s| s.std)),
            opt(a.attr_adherence.map(|s| s.mean)),
            opt(a.attr_adherence.map(|s| s.std)),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cag::{schedule_for_intent, GatingConfig};
    use crate::intent::IntentResult;

    #[test]
    fn g17_matches_printf() {
        let cases = [
            (0.1, "0.10000000000000001"),
            (1.0, "1"),
            (0.04, "0.040000000000000001"),
            (-2.5, "-2.5"),
            (1e-5, "1.0000000000000001e-05"),
            (1e20, "1e+20"),
            (123456789.0, "123456789"),
            (0.0001, "0.0001"),
            (1e16, "10000000000000000"),
            (1e17, "1e+17"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_g17(x), want, "{x}");
        }
    }

    #[test]
    fn g17_round_trips() {
        for x in [0.1 + 0.2, std::f64::consts::PI, -1e-300, 6.02214076e23, 0.04] {
            assert_eq!(fmt_g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn schedule_has_header_plus_one_line_per_step() {
        let s = schedule_for_intent(&GatingConfig::default(), &IntentResult::low(), 25).unwrap();
        let text = schedule_csv(&s);
        assert!(text.ends_with('\n'));
        assert_eq!(text.lines().count(), 26);
        assert_eq!(text.lines().next().unwrap(), SCHEDULE_COLUMNS.join(","));
        assert_eq!(text.lines().nth(1).unwrap(), "0,1,0,1,1,1,0,0.10000000000000001,0");
        assert_eq!(text, schedule_csv(&s));
    }

    #[test]
    fn empty_report_is_header_only() {
        let text = report_csv(&EvalReport::default());
        assert_eq!(text, format!("{}\n", REPORT_COLUMNS.join(",")));
    }
}
