use std::io::Write;
use std::path::Path;

use super::EvalReport;
use crate::error::{Error, Result};

pub const REPORT_CSV_HEADER: [&str; 15] = [
    "class",
    "n",
    "pn_gain",
    "engagements",
    "feasible",
    "excluded_infeasible",
    "all_intercepted",
    "matched",
    "bottleneck_match_fraction",
    "mean_bottleneck_ratio",
    "true_build_ms",
    "approx_build_ms",
    "build_speedup",
    "true_bap_ms",
    "approx_bap_ms",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One summary row per report; outcomes go to the JSON form only.
pub fn write_report_csv<W: Write>(reports: &[EvalReport], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_CSV_HEADER)?;
    for r in reports {
        w.write_record([
            r.class.to_string(),
            r.n.to_string(),
            r.pn_gain.to_string(),
            r.engagements.to_string(),
            r.feasible_count.to_string(),
            r.excluded_infeasible.to_string(),
            r.all_intercepted_count.to_string(),
            r.matched_count.to_string(),
            opt(r.bottleneck_match_fraction),
            opt(r.mean_bottleneck_ratio),
            r.timing.true_build_ms.to_string(),
            r.timing.approx_build_ms.to_string(),
            r.timing.build_speedup().to_string(),
            r.timing.true_bap_ms.to_string(),
            r.timing.approx_bap_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `<stem>.csv` and `<stem>.json`.
pub fn emit_report(reports: &[EvalReport], stem: &Path) -> Result<()> {
    let csv_path = stem.with_extension("csv");
    let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    write_report_csv(reports, file).map_err(|e| Error::csv(&csv_path, e))?;
    let json_path = stem.with_extension("json");
    let text = serde_json::to_string_pretty(reports).map_err(|e| Error::json(&json_path, e))?;
    std::fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))
}

pub fn load_reports(path: &Path) -> Result<Vec<EvalReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

#[cfg(test)]
mod tests {
    use super::super::{compare, EvalReport};
    use super::*;
    use crate::assignment::{CostMatrix, T_INF};
    use crate::datagen::EngagementClass;

    fn sample() -> EvalReport {
        let truth = CostMatrix::new(vec![vec![9.0, 2.0], vec![3.0, 8.0]], T_INF).unwrap();
        let approx = CostMatrix::new(vec![vec![1.0, 5.0], vec![5.0, 1.0]], T_INF).unwrap();
        let o = compare(&truth, &approx, 120.5, 0.03).unwrap();
        EvalReport::from_outcomes(EngagementClass::Maneuvering, 2, 4.0, vec![o])
    }

    #[test]
    fn empty_report_is_header_only() {
        let mut buf = Vec::new();
        write_report_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", REPORT_CSV_HEADER.join(",")));
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("eval");
        let reports = vec![sample()];
        emit_report(&reports, &stem).unwrap();
        assert_eq!(load_reports(&stem.with_extension("json")).unwrap(), reports);
        let csv = std::fs::read_to_string(stem.with_extension("csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("maneuvering,2,4,1,1,0,1,0,0,3,"));
    }

    #[test]
    fn unwritable_path_names_the_file() {
        let err = emit_report(&[], Path::new("/nonexistent-dir/eval")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/eval.csv"));
    }
}
