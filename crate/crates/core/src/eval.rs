//! Localization metrics: per-query pose errors, threshold recalls, and the
//! summary tables (CSV and aligned text) used by the benchmark runner.

use crate::camera::{rotation_angle_deg, Pose4};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::solver::LocalizationResult;

/// Error of one estimate against ground truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseError<S> {
    /// Euclidean 3D distance in meters.
    pub translation_m: S,
    /// Relative-rotation angle in degrees, in [0, 180].
    pub rotation_deg: S,
}

/// Rotation error uses the full extrinsic rotations, so it stays meaningful
/// even if est and gt carry different pitch/roll. With matching attitude it
/// reduces to |wrap(yaw_est - yaw_gt)|.
pub fn pose_error<S: Scalar>(est: &Pose4<S>, gt: &Pose4<S>) -> PoseError<S> {
    PoseError {
        translation_m: est.translation_distance(gt),
        rotation_deg: rotation_angle_deg(est, gt),
    }
}

/// The three reporting thresholds: (meters, degrees).
pub const RECALL_THRESHOLDS: [(f64, f64); 3] = [(2.0, 2.0), (3.0, 3.0), (5.0, 5.0)];

/// Percentage of errors within each (m, deg) threshold; both components
/// must pass (inclusive).
pub fn recall_at<S: Scalar>(errors: &[PoseError<S>], thresholds: &[(f64, f64)]) -> Vec<f64> {
    thresholds
        .iter()
        .map(|&(m, d)| {
            if errors.is_empty() {
                return 0.0;
            }
            let hits = errors
                .iter()
                .filter(|e| e.translation_m.to_f64_lossy() <= m && e.rotation_deg.to_f64_lossy() <= d)
                .count();
            100.0 * hits as f64 / errors.len() as f64
        })
        .collect()
}

/// Median with the even-count convention: mean of the two central values.
fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    values.sort_by(|a, b| a.partial_cmp(b).expect("metric values are finite"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) * 0.5
    }
}

/// One summary row: a (method, variant, cost) combination over a bundle.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub method: String,
    pub variant: String,
    pub cost_kind: String,
    /// Recalls at [`RECALL_THRESHOLDS`], as percentages.
    pub recalls: [f64; 3],
    pub median_te_m: f64,
    pub median_re_deg: f64,
    pub n_queries: usize,
    pub degenerate_n: usize,
    pub mean_ms: f64,
}

/// Aggregates per-query results against their ground truths. Degenerate
/// results stay in the statistics; they are additionally counted.
pub fn summarize<S: Scalar>(
    method: &str,
    variant: &str,
    cost_kind: &str,
    results: &[(LocalizationResult<S>, Pose4<S>)],
) -> Result<Summary> {
    if results.is_empty() {
        return Err(Error::Config("cannot summarize zero results".into()));
    }
    let errors: Vec<PoseError<S>> = results.iter().map(|(r, gt)| pose_error(&r.pose, gt)).collect();
    let recalls = recall_at(&errors, &RECALL_THRESHOLDS);
    let mut te: Vec<f64> = errors.iter().map(|e| e.translation_m.to_f64_lossy()).collect();
    let mut re: Vec<f64> = errors.iter().map(|e| e.rotation_deg.to_f64_lossy()).collect();
    let mean_ms = results.iter().map(|(r, _)| r.wall_time_ms).sum::<f64>() / results.len() as f64;
    Ok(Summary {
        method: method.to_string(),
        variant: variant.to_string(),
        cost_kind: cost_kind.to_string(),
        recalls: [recalls[0], recalls[1], recalls[2]],
        median_te_m: median(&mut te),
        median_re_deg: median(&mut re),
        n_queries: results.len(),
        degenerate_n: results.iter().filter(|(r, _)| r.degenerate).count(),
        mean_ms,
    })
}

pub const CSV_HEADER: &str =
    "method,variant,cost_kind,recall_2m_2deg,recall_3m_3deg,recall_5m_5deg,median_te_m,median_re_deg,n_queries,degenerate_n,mean_ms";

impl Summary {
    /// One CSV row. Float fields use Rust's shortest-roundtrip formatting,
    /// so identical runs produce byte-identical rows.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.variant,
            self.cost_kind,
            self.recalls[0],
            self.recalls[1],
            self.recalls[2],
            self.median_te_m,
            self.median_re_deg,
            self.n_queries,
            self.degenerate_n,
            self.mean_ms
        )
    }
}

/// Full CSV report: header plus one row per summary.
pub fn csv_report(rows: &[Summary]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Human-readable aligned table over the same fields as the CSV.
pub fn text_report(rows: &[Summary]) -> String {
    let headers = [
        "method", "variant", "cost", "2m-2deg", "3m-3deg", "5m-5deg", "med T.e. m", "med R.e. deg", "n", "degen",
        "mean ms",
    ];
    let cells: Vec<[String; 11]> = rows
        .iter()
        .map(|r| {
            [
                r.method.clone(),
                r.variant.clone(),
                r.cost_kind.clone(),
                format!("{:.2}", r.recalls[0]),
                format!("{:.2}", r.recalls[1]),
                format!("{:.2}", r.recalls[2]),
                format!("{:.3}", r.median_te_m),
                format!("{:.3}", r.median_re_deg),
                r.n_queries.to_string(),
                r.degenerate_n.to_string(),
                format!("{:.1}", r.mean_ms),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut push_row = |row: &[String]| {
        let line: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        out.push_str(&line.join("  "));
        out.push('\n');
    };
    push_row(&headers.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    for row in &cells {
        push_row(row);
    }
    out
}
