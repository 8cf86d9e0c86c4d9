//! Cross-run reporting: merges the evaluation summaries of several run
//! directories into one CSV table and a grouped bar chart of precision,
//! recall and hallucination rate.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stages::{EvalSummary, EVAL_SUMMARY_FILE};
use super::PipelineError;

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_CHART: &str = "prh_chart.svg";

/// One merged row: a run name plus its corpus-level metrics. The trailing
/// metric columns are reserved for external scorers and left empty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub run: String,
    pub n_samples: usize,
    pub precision: f64,
    pub recall: f64,
    pub hallucination_rate: f64,
    pub salient_precision: f64,
    pub salient_recall: f64,
    pub bleu4: Option<f64>,
    pub rouge_l_f1: Option<f64>,
    pub fluency: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn load_row(run_dir: &Path) -> Result<ReportRow, PipelineError> {
    let path = run_dir.join(EVAL_SUMMARY_FILE);
    if !path.exists() {
        return Err(PipelineError::MissingArtifact {
            stage: "evaluate".to_string(),
            path: path.display().to_string(),
        });
    }
    let raw = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
    let summary: EvalSummary = serde_json::from_str(&raw).map_err(|e| {
        PipelineError::Config(format!("{} is not an evaluation summary: {e}", path.display()))
    })?;
    let run = run_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| run_dir.display().to_string());
    Ok(ReportRow {
        run,
        n_samples: summary.n_samples,
        precision: summary.precision,
        recall: summary.recall,
        hallucination_rate: summary.hallucination_rate,
        salient_precision: summary.salient_precision,
        salient_recall: summary.salient_recall,
        bleu4: summary.bleu4,
        rouge_l_f1: summary.rouge_l_f1,
        fluency: summary.fluency,
    })
}

fn to_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(
        "run,n_samples,precision,recall,hallucination_rate,salient_precision,salient_recall,\
         bleu4,rouge_l_f1,fluency,meteor,factcc,bartscore\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},,,\n",
            r.run,
            r.n_samples,
            r.precision,
            r.recall,
            r.hallucination_rate,
            r.salient_precision,
            r.salient_recall,
            opt(r.bleu4),
            opt(r.rouge_l_f1),
            opt(r.fluency),
        ));
    }
    out
}

/// A grouped bar chart (one group per run; P, R and H bars) as a standalone
/// SVG document. All metrics live in [0, 1] so the y axis is fixed.
fn to_svg(rows: &[ReportRow]) -> String {
    const BAR_W: f64 = 28.0;
    const GAP: f64 = 10.0;
    const GROUP_GAP: f64 = 40.0;
    const PLOT_H: f64 = 240.0;
    const MARGIN_L: f64 = 50.0;
    const MARGIN_T: f64 = 30.0;
    const MARGIN_B: f64 = 60.0;
    let group_w = 3.0 * BAR_W + 2.0 * GAP;
    let width = MARGIN_L + rows.len() as f64 * (group_w + GROUP_GAP) + 20.0;
    let height = MARGIN_T + PLOT_H + MARGIN_B;

    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="12">"#
    );
    svg.push('\n');
    // Axis and horizontal grid lines at 0.25 intervals.
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let y = MARGIN_T + PLOT_H * (1.0 - frac);
        svg.push_str(&format!(
            r##"<line x1="{MARGIN_L}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ccc"/>"##,
            width - 10.0
        ));
        svg.push_str(&format!(
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{frac:.2}</text>"#,
            MARGIN_L - 6.0,
            y + 4.0
        ));
        svg.push('\n');
    }
    let series = [
        ("precision", "#4878a8"),
        ("recall", "#6aa84f"),
        ("hallucination", "#cc4125"),
    ];
    for (g, row) in rows.iter().enumerate() {
        let x0 = MARGIN_L + GROUP_GAP / 2.0 + g as f64 * (group_w + GROUP_GAP);
        let values = [row.precision, row.recall, row.hallucination_rate];
        for (s, (&value, (_, color))) in values.iter().zip(series).enumerate() {
            let v = value.clamp(0.0, 1.0);
            let h = PLOT_H * v;
            let x = x0 + s as f64 * (BAR_W + GAP);
            let y = MARGIN_T + PLOT_H - h;
            svg.push_str(&format!(
                r#"<rect x="{x:.1}" y="{y:.1}" width="{BAR_W}" height="{h:.1}" fill="{color}"/>"#
            ));
            svg.push_str(&format!(
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{value:.2}</text>"#,
                x + BAR_W / 2.0,
                y - 4.0
            ));
            svg.push('\n');
        }
        svg.push_str(&format!(
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x0 + group_w / 2.0,
            MARGIN_T + PLOT_H + 18.0,
            row.run
        ));
        svg.push('\n');
    }
    // Legend along the bottom.
    for (s, (label, color)) in series.iter().enumerate() {
        let x = MARGIN_L + s as f64 * 130.0;
        let y = height - 16.0;
        svg.push_str(&format!(
            r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{color}"/>"#,
            y - 10.0
        ));
        svg.push_str(&format!(r#"<text x="{:.1}" y="{y:.1}">{label}</text>"#, x + 16.0));
        svg.push('\n');
    }
    svg.push_str("</svg>\n");
    svg
}

/// Merges the evaluation summaries of `run_dirs` into `out_dir/report.csv`
/// and `out_dir/prh_chart.svg`.
pub fn cmd_report(run_dirs: &[std::path::PathBuf], out_dir: &Path) -> Result<Vec<ReportRow>, PipelineError> {
    if run_dirs.is_empty() {
        return Err(PipelineError::Config("report needs at least one run directory".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;
    let rows: Vec<ReportRow> = run_dirs.iter().map(|d| load_row(d)).collect::<Result<_, _>>()?;
    let csv_path = out_dir.join(REPORT_CSV);
    std::fs::write(&csv_path, to_csv(&rows)).map_err(|e| PipelineError::io(&csv_path, e))?;
    let svg_path = out_dir.join(REPORT_CHART);
    std::fs::write(&svg_path, to_svg(&rows)).map_err(|e| PipelineError::io(&svg_path, e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake_run(dir: &Path, name: &str, precision: f64) -> std::path::PathBuf {
        let run = dir.join(name);
        std::fs::create_dir_all(&run).unwrap();
        let summary = EvalSummary {
            n_samples: 10,
            n_degenerate: 0,
            precision,
            recall: 0.5,
            hallucination_rate: 1.0 - precision,
            salient_precision: 0.4,
            salient_recall: 0.6,
            salient_features: vec!["a".into()],
            bleu4: Some(0.2),
            rouge_l_f1: Some(0.3),
            fluency: None,
        };
        std::fs::write(
            run.join(EVAL_SUMMARY_FILE),
            serde_json::to_string_pretty(&summary).unwrap(),
        )
        .unwrap();
        run
    }

    #[test]
    fn report_merges_runs_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let a = fake_run(dir.path(), "full", 0.8);
        let b = fake_run(dir.path(), "baseline", 0.6);
        let out = dir.path().join("report");
        let rows = cmd_report(&[a, b], &out).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].run, "full");
        let csv = std::fs::read_to_string(out.join(REPORT_CSV)).unwrap();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("run,n_samples,precision"));
        assert!(lines.next().unwrap().starts_with("full,10,0.800000"));
        assert!(lines.next().unwrap().starts_with("baseline,10,0.600000"));
        let svg = std::fs::read_to_string(out.join(REPORT_CHART)).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("hallucination"));
    }

    #[test]
    fn missing_summary_names_evaluate_stage() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty");
        std::fs::create_dir_all(&empty).unwrap();
        match cmd_report(&[empty], dir.path()) {
            Err(PipelineError::MissingArtifact { stage, .. }) => assert_eq!(stage, "evaluate"),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn malformed_summary_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad");
        std::fs::create_dir_all(&bad).unwrap();
        std::fs::write(bad.join(EVAL_SUMMARY_FILE), "{\"not\": \"a summary\"}").unwrap();
        assert!(matches!(
            cmd_report(&[bad], dir.path()),
            Err(PipelineError::Config(_))
        ));
    }
}
